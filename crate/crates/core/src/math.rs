//! Scalar trait and the handful of dense vector kernels the models need.

use core::fmt::Debug;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Floating-point type a model can be instantiated with (`f32` or `f64`).
pub trait Real:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Logistic function, split by sign so `exp` never overflows.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// GELU, tanh approximation.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

/// Derivative of [`gelu`].
#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    let u = T::of(GELU_C) * (x + T::of(GELU_A) * x * x * x);
    let t = u.tanh();
    let du = T::of(GELU_C) * (T::one() + T::of(3.0 * GELU_A) * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y = M x` for a row-major `rows x cols` matrix.
pub fn matvec<T: Real>(m: &[T], rows: usize, cols: usize, x: &[T], y: &mut [T]) {
    debug_assert_eq!(m.len(), rows * cols);
    for (r, out) in y.iter_mut().enumerate().take(rows) {
        *out = dot(&m[r * cols..(r + 1) * cols], x);
    }
}

/// `y += M^T g` for a row-major `rows x cols` matrix.
pub fn matvec_t_acc<T: Real>(m: &[T], rows: usize, cols: usize, g: &[T], y: &mut [T]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == T::zero() {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (yc, &mc) in y.iter_mut().zip(row) {
            *yc += gr * mc;
        }
    }
}

/// `M += g x^T`.
pub fn outer_acc<T: Real>(m: &mut [T], rows: usize, cols: usize, g: &[T], x: &[T]) {
    for r in 0..rows {
        let gr = g[r];
        if gr == T::zero() {
            continue;
        }
        let row = &mut m[r * cols..(r + 1) * cols];
        for (mc, &xc) in row.iter_mut().zip(x) {
            *mc += gr * xc;
        }
    }
}

#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if !(*v > values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Numerically stable softmax in place.
pub fn softmax_in_place<T: Real>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(800.0f64).is_finite());
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!((sigmoid(2.0f64) - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax_first(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax_first(&[0.2, 0.9, 0.1]), Some(1));
        assert_eq!(argmax_first::<f64>(&[]), None);
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let m = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut y = [0.0; 2];
        matvec(&m, 2, 3, &[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, [-2.0, -2.0]);
        let mut z = [0.0; 3];
        matvec_t_acc(&m, 2, 3, &[1.0, 1.0], &mut z);
        assert_eq!(z, [5.0, 7.0, 9.0]);
    }
}

/// Named dense parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: alloc::string::String,
    pub shape: alloc::vec::Vec<usize>,
    pub data: alloc::vec::Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape: shape.into(),
            data: alloc::vec![T::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Fills with independent draws from `uniform(-bound, bound)`.
    pub fn fill_uniform(&mut self, rng: &mut crate::rng::Rng, bound: f64) {
        for v in self.data.iter_mut() {
            *v = T::of(crate::rng::uniform(rng, -bound, bound));
        }
    }
}

/// Zeroed gradient buffers shaped like `params`.
pub fn zero_grads<T: Real>(params: &[&Tensor<T>]) -> alloc::vec::Vec<alloc::vec::Vec<T>> {
    params
        .iter()
        .map(|p| alloc::vec![T::zero(); p.len()])
        .collect()
}
