//! Similarity scoring heads and the three encoder/scorer configurations.
//!
//! | configuration | pair representation                       | score                     |
//! |---------------|-------------------------------------------|---------------------------|
//! | CE+PA         | joint `[CLS]` vector `h` (d)              | `sigmoid(W h + b)`        |
//! | BE+PA         | `h_q ⊕ h_c ⊕ abs(h_q - h_c) ⊕ h_q ⊙ h_c` (4d) | `sigmoid(W f + b)`    |
//! | BE+NP         | `(h_q, h_c)`                              | train: `sigmoid(h_q · h_c)`, infer: cosine |
//!
//! A cross-encoder produces one vector per pair and so has nothing for a
//! parameter-free scorer to compare; CE+NP is rejected at construction.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::datamodel::Utterance;
use crate::encoder::{
    encode_pair_cross, encode_single, Backbone, NeighbourCache, TrainableBackbone,
};
use crate::math::{self, sigmoid, Real, Tensor};
use crate::rng;
use crate::{Error, Result};

/// Norms below this make cosine similarity undefined.
pub const COSINE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "CE")]
    Cross,
    #[serde(rename = "BE")]
    Bi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scoring {
    #[serde(rename = "PA")]
    Parameterized,
    #[serde(rename = "NP")]
    NonParameterized,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Cross => "CE",
            Architecture::Bi => "BE",
        })
    }
}

impl fmt::Display for Scoring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scoring::Parameterized => "PA",
            Scoring::NonParameterized => "NP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub scoring: Scoring,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, scoring: Scoring) -> Result<Self> {
        if architecture == Architecture::Cross && scoring == Scoring::NonParameterized {
            return Err(Error::InvalidConfig(
                "a cross-encoder yields one vector per pair and cannot use non-parameterized scoring".into(),
            ));
        }
        Ok(ModelConfig {
            architecture,
            scoring,
        })
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.architecture, self.scoring)
    }
}

/// Scoring head. PA heads hold a `1 x fan_in` weight and a scalar bias.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoringHead<T> {
    PaCross { weight: Tensor<T>, bias: Tensor<T> },
    PaBi { weight: Tensor<T>, bias: Tensor<T> },
    NonParametric,
}

impl<T: Real> ScoringHead<T> {
    /// Head for `config` over `dim`-long backbone vectors. PA weights are drawn
    /// from `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases start at zero.
    pub fn new(config: ModelConfig, dim: usize, seed: u64) -> Self {
        let pa = |fan_in: usize| {
            let mut weight = Tensor::zeros("head.weight", &[1, fan_in]);
            let mut stream = rng::from_seed(seed);
            weight.fill_uniform(&mut stream, 1.0 / libm::sqrt(fan_in as f64));
            (weight, Tensor::zeros("head.bias", &[1]))
        };
        match (config.architecture, config.scoring) {
            (Architecture::Cross, _) => {
                let (weight, bias) = pa(dim);
                ScoringHead::PaCross { weight, bias }
            }
            (Architecture::Bi, Scoring::Parameterized) => {
                let (weight, bias) = pa(4 * dim);
                ScoringHead::PaBi { weight, bias }
            }
            (Architecture::Bi, Scoring::NonParameterized) => ScoringHead::NonParametric,
        }
    }

    /// Number of feature columns the head consumes (`0` for NP).
    pub fn fan_in(&self) -> usize {
        match self {
            ScoringHead::PaCross { weight, .. } | ScoringHead::PaBi { weight, .. } => weight.len(),
            ScoringHead::NonParametric => 0,
        }
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        match self {
            ScoringHead::PaCross { weight, bias } | ScoringHead::PaBi { weight, bias } => {
                alloc::vec![weight, bias]
            }
            ScoringHead::NonParametric => Vec::new(),
        }
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            ScoringHead::PaCross { weight, bias } | ScoringHead::PaBi { weight, bias } => {
                alloc::vec![weight, bias]
            }
            ScoringHead::NonParametric => Vec::new(),
        }
    }

    /// `W features + b` (the pre-sigmoid logit).
    pub fn logit(&self, features: &[T]) -> Result<T> {
        match self {
            ScoringHead::PaCross { weight, bias } | ScoringHead::PaBi { weight, bias } => {
                if features.len() != weight.len() {
                    return Err(Error::DimensionMismatch {
                        expected: weight.len(),
                        actual: features.len(),
                    });
                }
                Ok(math::dot(&weight.data, features) + bias.data[0])
            }
            ScoringHead::NonParametric => Err(Error::InvalidConfig(
                "a non-parameterized head has no logit".into(),
            )),
        }
    }
}

/// `sigmoid(W features + b)`.
pub fn pa_score<T: Real>(head: &ScoringHead<T>, features: &[T]) -> Result<T> {
    head.logit(features).map(sigmoid)
}

/// `h_q ⊕ h_c ⊕ abs(h_q - h_c) ⊕ (h_q ⊙ h_c)`.
pub fn bi_pair_features<T: Real>(hq: &[T], hc: &[T]) -> Result<Vec<T>> {
    check_len(hq, hc)?;
    let mut out = Vec::with_capacity(4 * hq.len());
    out.extend_from_slice(hq);
    out.extend_from_slice(hc);
    out.extend(hq.iter().zip(hc).map(|(&a, &b)| (a - b).abs()));
    out.extend(hq.iter().zip(hc).map(|(&a, &b)| a * b));
    Ok(out)
}

/// Training-time BE+NP score `sigmoid(h_q · h_c)`.
pub fn np_train_score<T: Real>(hq: &[T], hc: &[T]) -> Result<T> {
    check_len(hq, hc)?;
    Ok(sigmoid(math::dot(hq, hc)))
}

/// Inference-time BE+NP score: cosine similarity.
pub fn np_infer_score<T: Real>(hq: &[T], hc: &[T]) -> Result<T> {
    check_len(hq, hc)?;
    let (nq, nc) = (math::norm(hq), math::norm(hc));
    let eps = T::of(COSINE_EPSILON);
    if nq < eps || nc < eps {
        return Err(Error::ZeroNorm);
    }
    Ok(math::dot(hq, hc) / (nq * nc))
}

fn check_len<T>(a: &[T], b: &[T]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreMode {
    /// Scores in (0, 1) that feed the pairwise loss.
    Train,
    /// Scores used for nearest-neighbour ranking (cosine for BE+NP).
    Infer,
}

/// Per-neighbour scores, aligned with the neighbour list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector<T> {
    pub scores: Vec<T>,
    pub mode: ScoreMode,
}

impl<T> ScoreVector<T> {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// A backbone plus a scoring head in one of the three valid configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityModel<B: Backbone> {
    pub backbone: B,
    pub head: ScoringHead<B::Scalar>,
    config: ModelConfig,
}

impl<B: Backbone> SimilarityModel<B> {
    pub fn new(
        backbone: B,
        architecture: Architecture,
        scoring: Scoring,
        head_seed: u64,
    ) -> Result<Self> {
        let config = ModelConfig::new(architecture, scoring)?;
        let head = ScoringHead::new(config, backbone.dim(), head_seed);
        Ok(SimilarityModel {
            backbone,
            head,
            config,
        })
    }

    /// Wraps an existing head; its kind and width must match `config`.
    pub fn with_head(
        backbone: B,
        config: ModelConfig,
        head: ScoringHead<B::Scalar>,
    ) -> Result<Self> {
        let config = ModelConfig::new(config.architecture, config.scoring)?;
        let expected = ScoringHead::<B::Scalar>::new(config, backbone.dim(), 0);
        if core::mem::discriminant(&expected) != core::mem::discriminant(&head)
            || expected.fan_in() != head.fan_in()
        {
            return Err(Error::DimensionMismatch {
                expected: expected.fan_in(),
                actual: head.fan_in(),
            });
        }
        Ok(SimilarityModel {
            backbone,
            head,
            config,
        })
    }

    pub fn config(&self) -> ModelConfig {
        self.config
    }

    /// Score of one bi-encoded pair.
    pub fn score_vectors(
        &self,
        hq: &[B::Scalar],
        hc: &[B::Scalar],
        mode: ScoreMode,
    ) -> Result<B::Scalar> {
        match (&self.head, mode) {
            (ScoringHead::PaBi { .. }, _) => pa_score(&self.head, &bi_pair_features(hq, hc)?),
            (ScoringHead::NonParametric, ScoreMode::Train) => np_train_score(hq, hc),
            (ScoringHead::NonParametric, ScoreMode::Infer) => np_infer_score(hq, hc),
            (ScoringHead::PaCross { .. }, _) => Err(Error::InvalidConfig(
                "cross-encoder scores come from joint encodings, not vector pairs".into(),
            )),
        }
    }

    /// Scores `query` against every neighbour, preserving neighbour order.
    /// Bi-encoder neighbours are encoded once.
    pub fn score_all(
        &self,
        query: &Utterance,
        neighbours: &[&Utterance],
        mode: ScoreMode,
    ) -> Result<ScoreVector<B::Scalar>> {
        if neighbours.is_empty() {
            return Err(Error::EmptyInput("neighbour list"));
        }
        match self.config.architecture {
            Architecture::Cross => {
                let scores = neighbours
                    .iter()
                    .map(|c| pa_score(&self.head, &encode_pair_cross(&self.backbone, query, c)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ScoreVector { scores, mode })
            }
            Architecture::Bi => {
                let cache = NeighbourCache::build(&self.backbone, neighbours)?;
                self.score_cached(query, &cache, mode)
            }
        }
    }

    /// Bi-encoder scoring against pre-encoded neighbours.
    pub fn score_cached(
        &self,
        query: &Utterance,
        cache: &NeighbourCache<B::Scalar>,
        mode: ScoreMode,
    ) -> Result<ScoreVector<B::Scalar>> {
        if cache.is_empty() {
            return Err(Error::EmptyInput("neighbour list"));
        }
        let hq = encode_single(&self.backbone, query)?;
        let scores = cache
            .vectors()
            .iter()
            .map(|hc| self.score_vectors(&hq, hc, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScoreVector { scores, mode })
    }
}

impl<B: TrainableBackbone> SimilarityModel<B> {
    /// Backbone tensors followed by head tensors.
    pub fn parameters(&self) -> Vec<&Tensor<B::Scalar>> {
        let mut out = self.backbone.parameters();
        out.extend(self.head.parameters());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<B::Scalar>> {
        let mut out = self.backbone.parameters_mut();
        out.extend(self.head.parameters_mut());
        out
    }

    /// Copies every parameter value out, in [`parameters`](Self::parameters) order.
    pub fn snapshot(&self) -> Vec<Vec<B::Scalar>> {
        self.parameters().iter().map(|t| t.data.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<B::Scalar>]) {
        for (t, s) in self.parameters_mut().into_iter().zip(snapshot) {
            t.data.copy_from_slice(s);
        }
    }
}
