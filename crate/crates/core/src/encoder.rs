//! Backbones that map utterances, or utterance pairs, to fixed-size vectors.
//!
//! Two architectures share one backbone:
//!
//! - bi-encoder: each utterance is encoded alone as `[CLS] text` and the
//!   `[CLS]` vector is its representation;
//! - cross-encoder: a pair is encoded jointly as `[CLS] q [SEP] c` and the
//!   `[CLS]` vector represents the pair.
//!
//! [`ToyBackbone`] is a two-block attention encoder small enough to train on
//! a laptop CPU. Any other encoder (for example a pretrained language model
//! behind an FFI or service boundary) plugs in by implementing [`Backbone`].

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datamodel::Utterance;
use crate::math::{self, Real, Tensor};
use crate::rng;
use crate::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
const RESERVED_IDS: u32 = 3;

/// Lowercasing word tokenizer that hashes words into a fixed id space.
///
/// Words are maximal runs of alphanumeric characters. Each lowercased word is
/// hashed with 64-bit FNV-1a and mapped to `3 + hash % (vocab_size - 3)`;
/// ids 0, 1 and 2 are reserved for PAD, CLS and SEP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingTokenizer {
    vocab_size: usize,
}

impl HashingTokenizer {
    pub fn new(vocab_size: usize) -> Result<Self> {
        if vocab_size <= RESERVED_IDS as usize {
            return Err(Error::InvalidConfig(alloc::format!(
                "vocab_size must exceed {RESERVED_IDS}, got {vocab_size}"
            )));
        }
        Ok(HashingTokenizer { vocab_size })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let buckets = (self.vocab_size as u64) - RESERVED_IDS as u64;
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| {
                let mut h = FNV_OFFSET;
                let mut buf = [0u8; 4];
                for c in w.chars().flat_map(char::to_lowercase) {
                    for b in c.encode_utf8(&mut buf).bytes() {
                        h ^= b as u64;
                        h = h.wrapping_mul(FNV_PRIME);
                    }
                }
                RESERVED_IDS + (h % buckets) as u32
            })
            .collect()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Token ids with their segment (0 for `[CLS] q [SEP]`, 1 for `c`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
    segments: Vec<u8>,
}

impl TokenSequence {
    /// `[CLS] tokens`, truncated to `max_len`.
    pub fn single(tokens: &[u32], max_len: usize) -> Self {
        let keep = tokens.len().min(max_len.saturating_sub(1));
        let mut ids = Vec::with_capacity(keep + 1);
        ids.push(CLS_ID);
        ids.extend_from_slice(&tokens[..keep]);
        TokenSequence {
            segments: vec![0; ids.len()],
            ids,
        }
    }

    /// `[CLS] first [SEP] second`. While the pair is too long the longer side
    /// loses its last token; on equal length the second side is cut.
    pub fn pair(first: &[u32], second: &[u32], max_len: usize) -> Self {
        let budget = max_len.saturating_sub(2);
        let (mut a, mut b) = (first.len(), second.len());
        while a + b > budget {
            if a > b {
                a -= 1;
            } else {
                b -= 1;
            }
        }
        let mut ids = Vec::with_capacity(a + b + 2);
        ids.push(CLS_ID);
        ids.extend_from_slice(&first[..a]);
        ids.push(SEP_ID);
        let split = ids.len();
        ids.extend_from_slice(&second[..b]);
        let mut segments = vec![0u8; ids.len()];
        segments[split..].iter_mut().for_each(|s| *s = 1);
        TokenSequence { ids, segments }
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn segments(&self) -> &[u8] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Text encoder contract: text, or a text pair, to a `dim()`-long vector.
///
/// Implementations must be deterministic for fixed parameters and must
/// return finite values.
pub trait Backbone {
    type Scalar: Real;

    fn dim(&self) -> usize;
    fn max_sequence_length(&self) -> usize;
    fn encode_text(&self, text: &str) -> Result<Vec<Self::Scalar>>;
    fn encode_text_pair(&self, first: &str, second: &str) -> Result<Vec<Self::Scalar>>;
}

/// A backbone that can be fine-tuned with reverse-mode gradients.
pub trait TrainableBackbone: Backbone {
    /// Intermediate activations kept for the backward pass.
    type Tape;

    fn forward_text(&self, text: &str) -> Result<(Vec<Self::Scalar>, Self::Tape)>;
    fn forward_text_pair(
        &self,
        first: &str,
        second: &str,
    ) -> Result<(Vec<Self::Scalar>, Self::Tape)>;
    /// Accumulates `d loss / d params` into `grads` (aligned with
    /// [`parameters`](Self::parameters)) given `d loss / d output`.
    fn backward(
        &self,
        tape: &Self::Tape,
        grad_output: &[Self::Scalar],
        grads: &mut [Vec<Self::Scalar>],
    );
    fn parameters(&self) -> Vec<&Tensor<Self::Scalar>>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor<Self::Scalar>>;
}

impl<B: Backbone + ?Sized> Backbone for &B {
    type Scalar = B::Scalar;

    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn max_sequence_length(&self) -> usize {
        (**self).max_sequence_length()
    }
    fn encode_text(&self, text: &str) -> Result<Vec<Self::Scalar>> {
        (**self).encode_text(text)
    }
    fn encode_text_pair(&self, first: &str, second: &str) -> Result<Vec<Self::Scalar>> {
        (**self).encode_text_pair(first, second)
    }
}

/// `[CLS]` vector of a single utterance (bi-encoder side).
pub fn encode_single<B: Backbone + ?Sized>(
    backbone: &B,
    utterance: &Utterance,
) -> Result<Vec<B::Scalar>> {
    backbone.encode_text(&utterance.text)
}

/// `[CLS]` vector of `[CLS] query [SEP] neighbour`.
pub fn encode_pair_cross<B: Backbone + ?Sized>(
    backbone: &B,
    query: &Utterance,
    neighbour: &Utterance,
) -> Result<Vec<B::Scalar>> {
    backbone.encode_text_pair(&query.text, &neighbour.text)
}

/// Independent encodings of query and neighbour with shared parameters.
pub fn encode_pair_bi<B: Backbone + ?Sized>(
    backbone: &B,
    query: &Utterance,
    neighbour: &Utterance,
) -> Result<(Vec<B::Scalar>, Vec<B::Scalar>)> {
    Ok((
        encode_single(backbone, query)?,
        encode_single(backbone, neighbour)?,
    ))
}

/// Bi-encoder representations of a neighbour list, computed once and reused
/// for every query scored against it.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighbourCache<T> {
    vectors: Vec<Vec<T>>,
}

impl<T: Real> NeighbourCache<T> {
    pub fn build<B: Backbone<Scalar = T> + ?Sized>(
        backbone: &B,
        neighbours: &[&Utterance],
    ) -> Result<Self> {
        let vectors = neighbours
            .iter()
            .map(|n| encode_single(backbone, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(NeighbourCache { vectors })
    }

    pub fn vectors(&self) -> &[Vec<T>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Hyperparameters of [`ToyBackbone`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub ffn_dim: usize,
    pub max_sequence_length: usize,
    /// Half-width of the uniform token-embedding initialisation.
    pub token_init: f64,
    /// Half-width of the uniform position/segment-embedding initialisation.
    pub position_init: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            vocab_size: 4096,
            dim: 16,
            ffn_dim: 32,
            max_sequence_length: 64,
            token_init: 1.0,
            position_init: 1.0,
            seed: 0,
        }
    }
}

// Parameter slots, in `parameters()` order.
const TOK: usize = 0;
const POS: usize = 1;
const SEG: usize = 2;
const BLOCK1: usize = 3;
const BLOCK2: usize = BLOCK1 + BLOCK_PARAMS;
const POOL_W: usize = BLOCK2 + BLOCK_PARAMS;
const POOL_B: usize = POOL_W + 1;
const PARAM_COUNT: usize = POOL_B + 1;

const BLOCK_PARAMS: usize = 7;
const WQ: usize = 0;
const WK: usize = 1;
const WV: usize = 2;
const W1: usize = 3;
const B1: usize = 4;
const W2: usize = 5;
const B2: usize = 6;

/// Small trainable encoder used as a stand-in for a pretrained language model.
///
/// Token, position and segment embeddings feed a full self-attention block
/// (single head, residual, GELU feed-forward), then a second block in which
/// only `[CLS]` attends, then a tanh pooler. The output is the pooled `[CLS]`
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBackbone<T> {
    config: ToyConfig,
    tokenizer: HashingTokenizer,
    params: Vec<Tensor<T>>,
}

/// Activations of one attention block.
#[derive(Debug, Clone)]
pub struct BlockTape<T> {
    queries: usize,
    len: usize,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    attn: Vec<T>,
    h: Vec<T>,
    pre: Vec<T>,
    g: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ToyTape<T> {
    ids: Vec<u32>,
    segments: Vec<u8>,
    x: Vec<T>,
    block1: BlockTape<T>,
    z1: Vec<T>,
    block2: BlockTape<T>,
    z2: Vec<T>,
    out: Vec<T>,
}

impl<T: Real> ToyBackbone<T> {
    /// Initialises every parameter from `config.seed`.
    pub fn new(config: ToyConfig) -> Result<Self> {
        if config.dim == 0 || config.ffn_dim == 0 {
            return Err(Error::InvalidConfig(
                "dim and ffn_dim must be positive".into(),
            ));
        }
        if config.max_sequence_length < 3 {
            return Err(Error::InvalidConfig(
                "max_sequence_length must be at least 3".into(),
            ));
        }
        let tokenizer = HashingTokenizer::new(config.vocab_size)?;
        let (d, m) = (config.dim, config.ffn_dim);
        let mut params = vec![
            Tensor::zeros("embeddings.token", &[config.vocab_size, d]),
            Tensor::zeros("embeddings.position", &[config.max_sequence_length, d]),
            Tensor::zeros("embeddings.segment", &[2, d]),
        ];
        for block in ["block1", "block2"] {
            for (name, shape) in [
                ("query", [d, d]),
                ("key", [d, d]),
                ("value", [d, d]),
                ("ffn.in", [m, d]),
            ] {
                params.push(Tensor::zeros(&alloc::format!("{block}.{name}"), &shape));
            }
            params.push(Tensor::zeros(&alloc::format!("{block}.ffn.in_bias"), &[m]));
            params.push(Tensor::zeros(&alloc::format!("{block}.ffn.out"), &[d, m]));
            params.push(Tensor::zeros(&alloc::format!("{block}.ffn.out_bias"), &[d]));
        }
        params.push(Tensor::zeros("pooler.weight", &[d, d]));
        params.push(Tensor::zeros("pooler.bias", &[d]));
        debug_assert_eq!(params.len(), PARAM_COUNT);

        let mut stream = rng::from_seed(config.seed);
        params[TOK].fill_uniform(&mut stream, config.token_init);
        params[POS].fill_uniform(&mut stream, config.position_init);
        params[SEG].fill_uniform(&mut stream, config.position_init);
        let (inv_d, inv_m) = (1.0 / libm::sqrt(d as f64), 1.0 / libm::sqrt(m as f64));
        for base in [BLOCK1, BLOCK2] {
            for slot in [WQ, WK, WV, W1] {
                params[base + slot].fill_uniform(&mut stream, inv_d);
            }
            params[base + W2].fill_uniform(&mut stream, inv_m);
        }
        params[POOL_W].fill_uniform(&mut stream, inv_d);
        Ok(ToyBackbone {
            config,
            tokenizer,
            params,
        })
    }

    /// Rebuilds a backbone from saved tensors; names and shapes must match.
    pub fn from_tensors(config: ToyConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut model = Self::new(config)?;
        if tensors.len() != model.params.len() {
            return Err(Error::DimensionMismatch {
                expected: model.params.len(),
                actual: tensors.len(),
            });
        }
        for (slot, t) in model.params.iter_mut().zip(tensors) {
            if slot.name != t.name || slot.shape != t.shape {
                return Err(Error::InvalidConfig(alloc::format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    t.name,
                    t.shape,
                    slot.name,
                    slot.shape
                )));
            }
            *slot = t;
        }
        Ok(model)
    }

    pub fn config(&self) -> &ToyConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &HashingTokenizer {
        &self.tokenizer
    }

    pub fn single_sequence(&self, text: &str) -> Result<TokenSequence> {
        let tokens = self.tokenizer.tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyTokens(text.to_string()));
        }
        Ok(TokenSequence::single(
            &tokens,
            self.config.max_sequence_length,
        ))
    }

    pub fn pair_sequence(&self, first: &str, second: &str) -> Result<TokenSequence> {
        let a = self.tokenizer.tokenize(first);
        if a.is_empty() {
            return Err(Error::EmptyTokens(first.to_string()));
        }
        let b = self.tokenizer.tokenize(second);
        if b.is_empty() {
            return Err(Error::EmptyTokens(second.to_string()));
        }
        Ok(TokenSequence::pair(&a, &b, self.config.max_sequence_length))
    }

    /// Forward pass over an already-built sequence.
    pub fn forward_sequence(&self, seq: &TokenSequence) -> (Vec<T>, ToyTape<T>) {
        let d = self.config.dim;
        let len = seq.len();
        let mut x = vec![T::zero(); len * d];
        for (j, (&id, &seg)) in seq.ids().iter().zip(seq.segments()).enumerate() {
            let row = &mut x[j * d..(j + 1) * d];
            let tok = &self.params[TOK].data[id as usize * d..(id as usize + 1) * d];
            let pos = &self.params[POS].data[j * d..(j + 1) * d];
            let sg = &self.params[SEG].data[seg as usize * d..(seg as usize + 1) * d];
            for c in 0..d {
                row[c] = tok[c] + pos[c] + sg[c];
            }
        }
        let (z1, block1) = self.block_forward(BLOCK1, &x, len, len);
        let (z2, block2) = self.block_forward(BLOCK2, &z1, len, 1);
        let mut out = vec![T::zero(); d];
        math::matvec(&self.params[POOL_W].data, d, d, &z2, &mut out);
        for (o, &b) in out.iter_mut().zip(&self.params[POOL_B].data) {
            *o = (*o + b).tanh();
        }
        let tape = ToyTape {
            ids: seq.ids().to_vec(),
            segments: seq.segments().to_vec(),
            x,
            block1,
            z1,
            block2,
            z2,
            out: out.clone(),
        };
        (out, tape)
    }

    /// Attention block where the first `queries` positions attend over all
    /// `len` positions of `input`. Returns the `queries x d` outputs.
    fn block_forward(
        &self,
        base: usize,
        input: &[T],
        len: usize,
        queries: usize,
    ) -> (Vec<T>, BlockTape<T>) {
        let (d, m) = (self.config.dim, self.config.ffn_dim);
        let p = &self.params[base..base + BLOCK_PARAMS];
        let scale = T::one() / T::of(d as f64).sqrt();
        let mut q = vec![T::zero(); queries * d];
        let mut k = vec![T::zero(); len * d];
        let mut v = vec![T::zero(); len * d];
        for j in 0..len {
            let xj = &input[j * d..(j + 1) * d];
            math::matvec(&p[WK].data, d, d, xj, &mut k[j * d..(j + 1) * d]);
            math::matvec(&p[WV].data, d, d, xj, &mut v[j * d..(j + 1) * d]);
            if j < queries {
                math::matvec(&p[WQ].data, d, d, xj, &mut q[j * d..(j + 1) * d]);
            }
        }
        let mut attn = vec![T::zero(); queries * len];
        let mut h = vec![T::zero(); queries * d];
        let mut pre = vec![T::zero(); queries * m];
        let mut g = vec![T::zero(); queries * m];
        let mut out = vec![T::zero(); queries * d];
        for i in 0..queries {
            let qi = &q[i * d..(i + 1) * d];
            let row = &mut attn[i * len..(i + 1) * len];
            for (j, e) in row.iter_mut().enumerate() {
                *e = math::dot(qi, &k[j * d..(j + 1) * d]) * scale;
            }
            math::softmax_in_place(row);
            let hi = &mut h[i * d..(i + 1) * d];
            hi.copy_from_slice(&input[i * d..(i + 1) * d]);
            for (j, &a) in row.iter().enumerate() {
                math::axpy(a, &v[j * d..(j + 1) * d], hi);
            }
            let pi = &mut pre[i * m..(i + 1) * m];
            math::matvec(&p[W1].data, m, d, hi, pi);
            for (pv, &b) in pi.iter_mut().zip(&p[B1].data) {
                *pv += b;
            }
            let gi = &mut g[i * m..(i + 1) * m];
            for (gv, &pv) in gi.iter_mut().zip(pi.iter()) {
                *gv = math::gelu(pv);
            }
            let oi = &mut out[i * d..(i + 1) * d];
            math::matvec(&p[W2].data, d, m, gi, oi);
            for c in 0..d {
                oi[c] += hi[c] + p[B2].data[c];
            }
        }
        let tape = BlockTape {
            queries,
            len,
            q,
            k,
            v,
            attn,
            h,
            pre,
            g,
        };
        (out, tape)
    }

    /// Backward through one block. `dout` is `queries x d`; returns
    /// `d loss / d input` (`len x d`).
    fn block_backward(
        &self,
        base: usize,
        input: &[T],
        tape: &BlockTape<T>,
        dout: &[T],
        grads: &mut [Vec<T>],
    ) -> Vec<T> {
        let (d, m) = (self.config.dim, self.config.ffn_dim);
        let (len, queries) = (tape.len, tape.queries);
        let p = &self.params[base..base + BLOCK_PARAMS];
        let g_block = &mut grads[base..base + BLOCK_PARAMS];
        let scale = T::one() / T::of(d as f64).sqrt();
        let mut din = vec![T::zero(); len * d];
        let mut dk = vec![T::zero(); len * d];
        let mut dv = vec![T::zero(); len * d];
        let mut dh = vec![T::zero(); d];
        let mut dpre = vec![T::zero(); m];
        let mut da = vec![T::zero(); len];
        let mut dq = vec![T::zero(); d];
        for i in 0..queries {
            let doi = &dout[i * d..(i + 1) * d];
            let hi = &tape.h[i * d..(i + 1) * d];
            let gi = &tape.g[i * m..(i + 1) * m];
            // out = h + W2 g + b2
            dh.copy_from_slice(doi);
            math::outer_acc(&mut g_block[W2], d, m, doi, gi);
            for (b, &gv) in g_block[B2].iter_mut().zip(doi) {
                *b += gv;
            }
            dpre.iter_mut().for_each(|v| *v = T::zero());
            math::matvec_t_acc(&p[W2].data, d, m, doi, &mut dpre);
            for (dp, &pv) in dpre.iter_mut().zip(&tape.pre[i * m..(i + 1) * m]) {
                *dp *= math::gelu_grad(pv);
            }
            math::outer_acc(&mut g_block[W1], m, d, &dpre, hi);
            for (b, &gv) in g_block[B1].iter_mut().zip(&dpre) {
                *b += gv;
            }
            math::matvec_t_acc(&p[W1].data, m, d, &dpre, &mut dh);
            // h = x + sum_j a_ij v_j
            for c in 0..d {
                din[i * d + c] += dh[c];
            }
            let row = &tape.attn[i * len..(i + 1) * len];
            for j in 0..len {
                da[j] = math::dot(&dh, &tape.v[j * d..(j + 1) * d]);
                math::axpy(row[j], &dh, &mut dv[j * d..(j + 1) * d]);
            }
            let mix: T = row.iter().zip(&da).map(|(&a, &g)| a * g).sum();
            dq.iter_mut().for_each(|v| *v = T::zero());
            let qi = &tape.q[i * d..(i + 1) * d];
            for j in 0..len {
                let de = row[j] * (da[j] - mix) * scale;
                if de == T::zero() {
                    continue;
                }
                math::axpy(de, &tape.k[j * d..(j + 1) * d], &mut dq);
                math::axpy(de, qi, &mut dk[j * d..(j + 1) * d]);
            }
            let xi = &input[i * d..(i + 1) * d];
            math::outer_acc(&mut g_block[WQ], d, d, &dq, xi);
            math::matvec_t_acc(&p[WQ].data, d, d, &dq, &mut din[i * d..(i + 1) * d]);
        }
        for j in 0..len {
            let xj = &input[j * d..(j + 1) * d];
            let dkj = &dk[j * d..(j + 1) * d];
            let dvj = &dv[j * d..(j + 1) * d];
            math::outer_acc(&mut g_block[WK], d, d, dkj, xj);
            math::outer_acc(&mut g_block[WV], d, d, dvj, xj);
            let dinj = &mut din[j * d..(j + 1) * d];
            math::matvec_t_acc(&p[WK].data, d, d, dkj, dinj);
            math::matvec_t_acc(&p[WV].data, d, d, dvj, dinj);
        }
        din
    }
}

impl<T: Real> Backbone for ToyBackbone<T> {
    type Scalar = T;

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn max_sequence_length(&self) -> usize {
        self.config.max_sequence_length
    }

    fn encode_text(&self, text: &str) -> Result<Vec<T>> {
        Ok(self.forward_sequence(&self.single_sequence(text)?).0)
    }

    fn encode_text_pair(&self, first: &str, second: &str) -> Result<Vec<T>> {
        Ok(self.forward_sequence(&self.pair_sequence(first, second)?).0)
    }
}

impl<T: Real> TrainableBackbone for ToyBackbone<T> {
    type Tape = ToyTape<T>;

    fn forward_text(&self, text: &str) -> Result<(Vec<T>, ToyTape<T>)> {
        Ok(self.forward_sequence(&self.single_sequence(text)?))
    }

    fn forward_text_pair(&self, first: &str, second: &str) -> Result<(Vec<T>, ToyTape<T>)> {
        Ok(self.forward_sequence(&self.pair_sequence(first, second)?))
    }

    fn backward(&self, tape: &ToyTape<T>, grad_output: &[T], grads: &mut [Vec<T>]) {
        let d = self.config.dim;
        let len = tape.ids.len();
        // out = tanh(Wp z2 + bp)
        let mut dpre = vec![T::zero(); d];
        for c in 0..d {
            dpre[c] = grad_output[c] * (T::one() - tape.out[c] * tape.out[c]);
            grads[POOL_B][c] += dpre[c];
        }
        math::outer_acc(&mut grads[POOL_W], d, d, &dpre, &tape.z2);
        let mut dz2 = vec![T::zero(); d];
        math::matvec_t_acc(&self.params[POOL_W].data, d, d, &dpre, &mut dz2);
        let dz1 = self.block_backward(BLOCK2, &tape.z1, &tape.block2, &dz2, grads);
        let dx = self.block_backward(BLOCK1, &tape.x, &tape.block1, &dz1, grads);
        for j in 0..len {
            let dxj = &dx[j * d..(j + 1) * d];
            let id = tape.ids[j] as usize;
            let seg = tape.segments[j] as usize;
            math::axpy(T::one(), dxj, &mut grads[TOK][id * d..(id + 1) * d]);
            math::axpy(T::one(), dxj, &mut grads[POS][j * d..(j + 1) * d]);
            math::axpy(T::one(), dxj, &mut grads[SEG][seg * d..(seg + 1) * d]);
        }
    }

    fn parameters(&self) -> Vec<&Tensor<T>> {
        self.params.iter().collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.params.iter_mut().collect()
    }
}
