//! Pairwise binary cross-entropy and the three training regimes.
//!
//! Every regime reduces to the same computation: a pool of utterances and a
//! plan listing, for each query, which pool members act as its neighbours.
//!
//! - NE: a mini-batch; every member is a query against the other `B - 1`.
//! - EP: an episode treated as one pool; every utterance is a query against
//!   all others, support/query labels ignored.
//! - EPSQ: queries come from the episode's query set and neighbours from its
//!   support set only.
//!
//! The objective is the mean over queries of the per-query loss
//! `-(1/n) Σ_t [y_t ln s_t + (1 - y_t) ln(1 - s_t)]`, with `s_t` clamped to
//! `[1e-7, 1 - 1e-7]`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{Float, One, Zero};
use serde::{Deserialize, Serialize};

use crate::datamodel::{IntentLabel, LabeledCorpus, Utterance};
use crate::encoder::TrainableBackbone;
use crate::episodes::{sample_balanced_episode, Episode, EpisodeSpec};
use crate::inference::{self, ProtoNet};
use crate::math::{self, sigmoid, Real, Tensor};
use crate::rng::{self, Rng, RngState};
use crate::scoring::{bi_pair_features, Architecture, ScoringHead, SimilarityModel};
use crate::{Error, Result};

/// Scores are clamped into `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before logs.
pub const SCORE_CLAMP: f64 = 1e-7;

/// `y_t = 1` iff neighbour `t` shares the query's intent.
pub fn label_vector(query: &IntentLabel, neighbours: &[&Utterance]) -> Vec<bool> {
    neighbours.iter().map(|c| &c.label == query).collect()
}

/// Binary cross-entropy of one query against its neighbours.
pub fn query_loss<T: Real>(labels: &[bool], scores: &[T]) -> Result<T> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput("neighbour list"));
    }
    let (lo, hi) = (T::of(SCORE_CLAMP), T::one() - T::of(SCORE_CLAMP));
    let mut total = T::zero();
    for (&y, &s) in labels.iter().zip(scores) {
        if !(s >= T::zero() && s <= T::one()) {
            return Err(Error::ScoreOutOfRange(s.to_f64()));
        }
        let s = s.max(lo).min(hi);
        total -= if y { s.ln() } else { (T::one() - s).ln() };
    }
    Ok(total / T::of(labels.len() as f64))
}

/// `d query_loss / d logit` for a sigmoid score; zero inside the clamp.
#[inline]
fn logit_grad<T: Real>(score: T, label: bool, n: usize) -> T {
    let (lo, hi) = (T::of(SCORE_CLAMP), T::one() - T::of(SCORE_CLAMP));
    if score < lo || score > hi {
        return T::zero();
    }
    let y = if label { T::one() } else { T::zero() };
    (score - y) / T::of(n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "NE")]
    NonEpisodic,
    #[serde(rename = "EP")]
    Episodic,
    #[serde(rename = "EPSQ")]
    EpisodicSupportQuery,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::NonEpisodic => "NE",
            Regime::Episodic => "EP",
            Regime::EpisodicSupportQuery => "EPSQ",
        })
    }
}

/// Queries and their neighbours, as indices into a pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPlan {
    pub queries: Vec<(usize, Vec<usize>)>,
}

impl PairPlan {
    /// Every pool member against every other member.
    pub fn all_pairs(pool_len: usize) -> Self {
        PairPlan {
            queries: (0..pool_len)
                .map(|q| (q, (0..pool_len).filter(|&c| c != q).collect()))
                .collect(),
        }
    }

    /// Query-set members against the support set (support first in the pool).
    pub fn support_query(support_len: usize, query_len: usize) -> Self {
        let support: Vec<usize> = (0..support_len).collect();
        PairPlan {
            queries: (support_len..support_len + query_len)
                .map(|q| (q, support.clone()))
                .collect(),
        }
    }

    pub fn pair_count(&self) -> usize {
        self.queries.iter().map(|(_, n)| n.len()).sum()
    }
}

/// Mean per-query loss of `plan` over `pool`. When `grads` is given, the
/// gradient of that mean is accumulated into it.
pub fn pairwise_objective<B: TrainableBackbone>(
    model: &SimilarityModel<B>,
    pool: &[&Utterance],
    plan: &PairPlan,
    grads: Option<&mut [Vec<B::Scalar>]>,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<B::Scalar> {
    if plan.queries.is_empty() {
        return Err(Error::EmptyInput("query list"));
    }
    match model.config().architecture {
        Architecture::Cross => cross_objective(model, pool, plan, grads, dropout),
        Architecture::Bi => bi_objective(model, pool, plan, grads, dropout),
    }
}

/// Inverted dropout mask (`None` when disabled).
fn dropout_mask<T: Real>(len: usize, dropout: &mut Option<(f64, &mut Rng)>) -> Option<Vec<T>> {
    let (p, rng) = dropout.as_mut()?;
    if *p <= 0.0 {
        return None;
    }
    let keep = T::of(1.0 / (1.0 - *p));
    Some(
        (0..len)
            .map(|_| if rng::unit(rng) < *p { T::zero() } else { keep })
            .collect(),
    )
}

fn apply_mask<T: Real>(v: &mut [T], mask: &Option<Vec<T>>) {
    if let Some(m) = mask {
        v.iter_mut().zip(m).for_each(|(x, &k)| *x *= k);
    }
}

fn head_weights<T: Real>(head: &ScoringHead<T>) -> (&Tensor<T>, &Tensor<T>) {
    match head {
        ScoringHead::PaCross { weight, bias } | ScoringHead::PaBi { weight, bias } => {
            (weight, bias)
        }
        ScoringHead::NonParametric => unreachable!("non-parametric heads have no weights"),
    }
}

fn cross_objective<B: TrainableBackbone>(
    model: &SimilarityModel<B>,
    pool: &[&Utterance],
    plan: &PairPlan,
    mut grads: Option<&mut [Vec<B::Scalar>]>,
    mut dropout: Option<(f64, &mut Rng)>,
) -> Result<B::Scalar> {
    let (weight, bias) = head_weights(&model.head);
    let head_slot = model.backbone.parameters().len();
    let per_query = B::Scalar::one() / B::Scalar::of(plan.queries.len() as f64);
    let mut total = B::Scalar::zero();
    let mut scores = Vec::new();
    for (q, neighbours) in &plan.queries {
        let query = pool[*q];
        let labels: Vec<bool> = neighbours
            .iter()
            .map(|&c| pool[c].label == query.label)
            .collect();
        scores.clear();
        for (t, &c) in neighbours.iter().enumerate() {
            let (mut h, tape) = model
                .backbone
                .forward_text_pair(&query.text, &pool[c].text)?;
            let mask = dropout_mask(h.len(), &mut dropout);
            apply_mask(&mut h, &mask);
            let s = sigmoid(math::dot(&weight.data, &h) + bias.data[0]);
            scores.push(s);
            if let Some(g) = grads.as_deref_mut() {
                let dz = logit_grad(s, labels[t], neighbours.len()) * per_query;
                if dz == B::Scalar::zero() {
                    continue;
                }
                math::axpy(dz, &h, &mut g[head_slot]);
                g[head_slot + 1][0] += dz;
                let mut dh: Vec<B::Scalar> = weight.data.iter().map(|&w| w * dz).collect();
                apply_mask(&mut dh, &mask);
                model.backbone.backward(&tape, &dh, g);
            }
        }
        total += query_loss(&labels, &scores)?;
    }
    Ok(total * per_query)
}

fn bi_objective<B: TrainableBackbone>(
    model: &SimilarityModel<B>,
    pool: &[&Utterance],
    plan: &PairPlan,
    grads: Option<&mut [Vec<B::Scalar>]>,
    mut dropout: Option<(f64, &mut Rng)>,
) -> Result<B::Scalar> {
    let mut used = vec![false; pool.len()];
    for (q, n) in &plan.queries {
        used[*q] = true;
        n.iter().for_each(|&c| used[c] = true);
    }
    let mut encoded: Vec<Option<(Vec<B::Scalar>, B::Tape)>> = Vec::with_capacity(pool.len());
    for (u, &needed) in pool.iter().zip(&used) {
        encoded.push(if needed {
            Some(model.backbone.forward_text(&u.text)?)
        } else {
            None
        });
    }
    let d = model.backbone.dim();
    let head_slot = model.backbone.parameters().len();
    let mut dh = vec![vec![B::Scalar::zero(); d]; pool.len()];
    let per_query = B::Scalar::one() / B::Scalar::of(plan.queries.len() as f64);
    let mut total = B::Scalar::zero();
    let mut scores = Vec::new();
    let want_grads = grads.is_some();
    let mut head_grad = vec![B::Scalar::zero(); model.head.fan_in() + 1];
    for (q, neighbours) in &plan.queries {
        let query = pool[*q];
        let hq = &encoded[*q].as_ref().expect("query encoded").0;
        let labels: Vec<bool> = neighbours
            .iter()
            .map(|&c| pool[c].label == query.label)
            .collect();
        scores.clear();
        for (t, &c) in neighbours.iter().enumerate() {
            let hc = &encoded[c].as_ref().expect("neighbour encoded").0;
            match &model.head {
                ScoringHead::NonParametric => {
                    let s = sigmoid(math::dot(hq, hc));
                    scores.push(s);
                    if want_grads {
                        let dz = logit_grad(s, labels[t], neighbours.len()) * per_query;
                        for k in 0..d {
                            dh[*q][k] += dz * hc[k];
                            dh[c][k] += dz * hq[k];
                        }
                    }
                }
                head => {
                    let (weight, bias) = head_weights(head);
                    let mut f = bi_pair_features(hq, hc)?;
                    let mask = dropout_mask(f.len(), &mut dropout);
                    apply_mask(&mut f, &mask);
                    let s = sigmoid(math::dot(&weight.data, &f) + bias.data[0]);
                    scores.push(s);
                    if want_grads {
                        let dz = logit_grad(s, labels[t], neighbours.len()) * per_query;
                        if dz == B::Scalar::zero() {
                            continue;
                        }
                        math::axpy(dz, &f, &mut head_grad[..4 * d]);
                        head_grad[4 * d] += dz;
                        let mut df: Vec<B::Scalar> = weight.data.iter().map(|&w| w * dz).collect();
                        apply_mask(&mut df, &mask);
                        for k in 0..d {
                            let diff = hq[k] - hc[k];
                            let sign = if diff > B::Scalar::zero() {
                                B::Scalar::one()
                            } else if diff < B::Scalar::zero() {
                                -B::Scalar::one()
                            } else {
                                B::Scalar::zero()
                            };
                            dh[*q][k] += df[k] + sign * df[2 * d + k] + hc[k] * df[3 * d + k];
                            dh[c][k] += df[d + k] - sign * df[2 * d + k] + hq[k] * df[3 * d + k];
                        }
                    }
                }
            }
        }
        total += query_loss(&labels, &scores)?;
    }
    if let Some(g) = grads {
        if model.head.fan_in() > 0 {
            math::axpy(B::Scalar::one(), &head_grad[..4 * d], &mut g[head_slot]);
            g[head_slot + 1][0] += head_grad[4 * d];
        }
        for (slot, grad) in encoded.iter().zip(&dh) {
            if let Some((_, tape)) = slot {
                if grad.iter().any(|v| *v != B::Scalar::zero()) {
                    model.backbone.backward(tape, grad, g);
                }
            }
        }
    }
    Ok(total * per_query)
}

/// Loss of one NE mini-batch.
pub fn ne_loss<B: TrainableBackbone>(
    model: &SimilarityModel<B>,
    batch: &[&Utterance],
) -> Result<B::Scalar> {
    check_batch(batch)?;
    pairwise_objective(model, batch, &PairPlan::all_pairs(batch.len()), None, None)
}

/// Loss of one episode under EP (support and query pooled).
pub fn ep_loss<B: TrainableBackbone>(
    model: &SimilarityModel<B>,
    episode: &Episode,
) -> Result<B::Scalar> {
    let pool = episode_pool(episode)?;
    pairwise_objective(model, &pool, &PairPlan::all_pairs(pool.len()), None, None)
}

/// Loss of one episode under EPSQ (queries against support only).
pub fn epsq_loss<B: TrainableBackbone>(
    model: &SimilarityModel<B>,
    episode: &Episode,
) -> Result<B::Scalar> {
    check_split(episode)?;
    let pool = episode.pool();
    pairwise_objective(
        model,
        &pool,
        &PairPlan::support_query(episode.support.len(), episode.query.len()),
        None,
        None,
    )
}

fn check_batch(batch: &[&Utterance]) -> Result<()> {
    if batch.len() < 2 {
        return Err(Error::InvalidSpec(
            "a training batch needs at least two utterances".into(),
        ));
    }
    Ok(())
}

fn episode_pool(episode: &Episode) -> Result<Vec<&Utterance>> {
    if episode.len() < 2 {
        return Err(Error::EpisodeInvariant {
            episode_id: episode.episode_id,
            reason: "EP training needs at least two utterances".into(),
        });
    }
    Ok(episode.pool())
}

fn check_split(episode: &Episode) -> Result<()> {
    if episode.query.is_empty() || episode.support.is_empty() {
        return Err(Error::EpisodeInvariant {
            episode_id: episode.episode_id,
            reason: "EPSQ training needs non-empty support and query sets".into(),
        });
    }
    Ok(())
}

/// AdamW: Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: &TrainConfig) -> Self {
        AdamW {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Vec<T>]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = T::of(self.learning_rate);
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let bc1 = T::one() - T::of(libm::pow(self.beta1, t as f64));
        let bc2 = T::one() - T::of(libm::pow(self.beta2, t as f64));
        let decay = T::one() - T::of(self.learning_rate * self.weight_decay);
        let eps = T::of(self.epsilon);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.data.len() {
                let gi = g[i];
                p.data[i] *= decay;
                if gi == T::zero() && m[i] == T::zero() && v[i] == T::zero() {
                    continue;
                }
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

fn apply_update<B: TrainableBackbone>(
    model: &mut SimilarityModel<B>,
    optimizer: &mut AdamW<B::Scalar>,
    pool: &[&Utterance],
    plan: &PairPlan,
    dropout: Option<(f64, &mut Rng)>,
) -> Result<B::Scalar> {
    let mut grads = math::zero_grads(&model.parameters());
    let loss = pairwise_objective(model, pool, plan, Some(&mut grads), dropout)?;
    optimizer.step(model.parameters_mut(), &grads);
    Ok(loss)
}

/// One NE update: each batch member is a query against the other members.
pub fn ne_step<B: TrainableBackbone>(
    model: &mut SimilarityModel<B>,
    optimizer: &mut AdamW<B::Scalar>,
    batch: &[&Utterance],
) -> Result<B::Scalar> {
    check_batch(batch)?;
    apply_update(
        model,
        optimizer,
        batch,
        &PairPlan::all_pairs(batch.len()),
        None,
    )
}

/// One EP update over the pooled episode.
pub fn ep_step<B: TrainableBackbone>(
    model: &mut SimilarityModel<B>,
    optimizer: &mut AdamW<B::Scalar>,
    episode: &Episode,
) -> Result<B::Scalar> {
    let pool = episode_pool(episode)?;
    apply_update(
        model,
        optimizer,
        &pool,
        &PairPlan::all_pairs(pool.len()),
        None,
    )
}

/// One EPSQ update: queries scored against support only.
pub fn epsq_step<B: TrainableBackbone>(
    model: &mut SimilarityModel<B>,
    optimizer: &mut AdamW<B::Scalar>,
    episode: &Episode,
) -> Result<B::Scalar> {
    check_split(episode)?;
    let pool = episode.pool();
    let plan = PairPlan::support_query(episode.support.len(), episode.query.len());
    apply_update(model, optimizer, &pool, &plan, None)
}

/// Negative log-probability of the true class under prototype distances,
/// averaged over the query set, with its gradient.
pub fn protonet_objective<B: TrainableBackbone>(
    model: &ProtoNet<B>,
    episode: &Episode,
    grads: Option<&mut [Vec<B::Scalar>]>,
) -> Result<B::Scalar> {
    check_split(episode)?;
    let backbone = &model.backbone;
    let d = backbone.dim();
    let classes = &episode.intents;
    let mut support = Vec::with_capacity(episode.support.len());
    for u in &episode.support {
        let class = classes
            .iter()
            .position(|c| c == &u.label)
            .ok_or(Error::EpisodeInvariant {
                episode_id: episode.episode_id,
                reason: "support label outside the intent list".into(),
            })?;
        support.push((class, backbone.forward_text(&u.text)?));
    }
    let mut counts = vec![0usize; classes.len()];
    let mut protos = vec![vec![B::Scalar::zero(); d]; classes.len()];
    for (c, (h, _)) in &support {
        counts[*c] += 1;
        math::axpy(B::Scalar::one(), h, &mut protos[*c]);
    }
    for (p, &n) in protos.iter_mut().zip(&counts) {
        if n == 0 {
            return Err(Error::EmptyInput("intent support group"));
        }
        let inv = B::Scalar::one() / B::Scalar::of(n as f64);
        p.iter_mut().for_each(|v| *v *= inv);
    }
    let per_query = B::Scalar::one() / B::Scalar::of(episode.query.len() as f64);
    let mut dprotos = vec![vec![B::Scalar::zero(); d]; classes.len()];
    let mut total = B::Scalar::zero();
    let mut query_tapes = Vec::new();
    for u in &episode.query {
        let truth = classes
            .iter()
            .position(|c| c == &u.label)
            .ok_or(Error::EpisodeInvariant {
                episode_id: episode.episode_id,
                reason: "query label outside the intent list".into(),
            })?;
        let (hq, tape) = backbone.forward_text(&u.text)?;
        let mut logits: Vec<B::Scalar> = protos.iter().map(|p| -sq_dist(&hq, p)).collect();
        let max = logits
            .iter()
            .copied()
            .fold(B::Scalar::neg_infinity(), B::Scalar::max);
        let lse = max
            + logits
                .iter()
                .map(|&l| (l - max).exp())
                .sum::<B::Scalar>()
                .ln();
        total += lse - logits[truth];
        if grads.is_some() {
            // d/dlogit_c = p_c - [c == truth]; logit_c = -|hq - p_c|^2
            let mut dhq = vec![B::Scalar::zero(); d];
            for (c, l) in logits.iter_mut().enumerate() {
                let mut coeff = (*l - lse).exp();
                if c == truth {
                    coeff -= B::Scalar::one();
                }
                coeff *= per_query;
                for k in 0..d {
                    let diff = hq[k] - protos[c][k];
                    let two = B::Scalar::of(2.0);
                    dhq[k] -= coeff * two * diff;
                    dprotos[c][k] += coeff * two * diff;
                }
            }
            query_tapes.push((tape, dhq));
        }
    }
    if let Some(g) = grads {
        for (tape, dhq) in &query_tapes {
            backbone.backward(tape, dhq, g);
        }
        for (c, (_, tape)) in &support {
            let inv = B::Scalar::one() / B::Scalar::of(counts[*c] as f64);
            let ds: Vec<B::Scalar> = dprotos[*c].iter().map(|&v| v * inv).collect();
            backbone.backward(tape, &ds, g);
        }
    }
    Ok(total * per_query)
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Optimisation settings; defaults follow the standard fine-tuning protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_sequence_length: usize,
    pub max_episodes: usize,
    pub eval_every_updates: usize,
    pub patience_evals: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Dropout probability on scoring-head inputs during training.
    pub head_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: Regime::Episodic,
            learning_rate: 2e-5,
            batch_size: 64,
            max_sequence_length: 64,
            max_episodes: 10_000,
            eval_every_updates: 100,
            patience_evals: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            head_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("max_sequence_length", self.max_sequence_length),
            ("max_episodes", self.max_episodes),
            ("eval_every_updates", self.eval_every_updates),
            ("patience_evals", self.patience_evals),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidConfig(alloc::format!(
                    "train.{name} must be positive"
                )));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(
                "train.learning_rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return Err(Error::InvalidConfig(
                "train.head_dropout must lie in [0, 1)".into(),
            ));
        }
        if self.regime == Regime::NonEpisodic && self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "NE training needs batch_size >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Patience-based early stopping on a maximised metric.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    since_best: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records one evaluation. Only a strict improvement resets the counter.
    pub fn observe(&mut self, metric: f64) -> StopDecision {
        match self.best {
            Some(b) if metric <= b => {
                self.since_best += 1;
                if self.since_best >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some(metric);
                self.since_best = 0;
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn since_best(&self) -> usize {
        self.since_best
    }
}

/// Progress of a training run. `best_*` describe the restored checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub update_count: u64,
    pub best_update: u64,
    pub best_validation_accuracy: f64,
    pub evals_since_improvement: usize,
    pub rng_state: RngState,
    /// `(update, validation accuracy)` for every evaluation, starting at 0.
    pub history: Vec<(u64, f64)>,
    pub stopped_early: bool,
}

/// Yields training episodes on demand.
pub trait EpisodeSource {
    fn next_episode(&mut self) -> Result<Episode>;
}

/// Fresh balanced episodes sampled from a set of training intents.
pub struct SampledEpisodes<'a> {
    corpus: &'a LabeledCorpus,
    intents: Vec<IntentLabel>,
    spec: EpisodeSpec,
    rng: Rng,
    next_id: u64,
}

impl<'a> SampledEpisodes<'a> {
    pub fn new(corpus: &'a LabeledCorpus, intents: Vec<IntentLabel>, spec: EpisodeSpec) -> Self {
        SampledEpisodes {
            corpus,
            intents,
            rng: rng::from_seed(spec.seed),
            spec,
            next_id: 0,
        }
    }
}

impl EpisodeSource for SampledEpisodes<'_> {
    fn next_episode(&mut self) -> Result<Episode> {
        let id = self.next_id;
        self.next_id += 1;
        sample_balanced_episode(self.corpus, &self.intents, &self.spec, &mut self.rng, id)
    }
}

/// Cycles through a fixed list of episodes (for example, loaded from disk).
pub struct CycledEpisodes {
    episodes: Vec<Episode>,
    position: usize,
}

impl CycledEpisodes {
    pub fn new(episodes: Vec<Episode>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::EmptyInput("training episode list"));
        }
        Ok(CycledEpisodes {
            episodes,
            position: 0,
        })
    }
}

impl EpisodeSource for CycledEpisodes {
    fn next_episode(&mut self) -> Result<Episode> {
        let e = self.episodes[self.position].clone();
        self.position = (self.position + 1) % self.episodes.len();
        Ok(e)
    }
}

/// Training data matching the regime.
pub enum TrainData<'a> {
    /// NE: utterances of the training intents, batched after a seeded
    /// shuffle each epoch.
    Utterances(Vec<&'a Utterance>),
    /// EP/EPSQ: one episode per update.
    Episodes(&'a mut dyn EpisodeSource),
}

/// Result of a training run; the model has been restored to the best
/// validation checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub losses: Vec<f64>,
}

trait Learner {
    type Scalar: Real;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor<Self::Scalar>>;
    fn snapshot(&self) -> Vec<Vec<Self::Scalar>>;
    fn restore(&mut self, snapshot: &[Vec<Self::Scalar>]);
    fn zero_grads(&self) -> Vec<Vec<Self::Scalar>>;
    fn batch_objective(
        &self,
        batch: &[&Utterance],
        grads: &mut [Vec<Self::Scalar>],
        rng: &mut Rng,
    ) -> Result<Self::Scalar>;
    fn episode_objective(
        &self,
        episode: &Episode,
        regime: Regime,
        grads: &mut [Vec<Self::Scalar>],
        rng: &mut Rng,
    ) -> Result<Self::Scalar>;
    fn validation_accuracy(&self, episodes: &[Episode]) -> Result<f64>;
}

struct PairLearner<'m, B: TrainableBackbone> {
    model: &'m mut SimilarityModel<B>,
    dropout: f64,
}

impl<B: TrainableBackbone> Learner for PairLearner<'_, B> {
    type Scalar = B::Scalar;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<B::Scalar>> {
        self.model.parameters_mut()
    }
    fn snapshot(&self) -> Vec<Vec<B::Scalar>> {
        self.model.snapshot()
    }
    fn restore(&mut self, snapshot: &[Vec<B::Scalar>]) {
        self.model.restore(snapshot)
    }
    fn zero_grads(&self) -> Vec<Vec<B::Scalar>> {
        math::zero_grads(&self.model.parameters())
    }
    fn batch_objective(
        &self,
        batch: &[&Utterance],
        grads: &mut [Vec<B::Scalar>],
        rng: &mut Rng,
    ) -> Result<B::Scalar> {
        check_batch(batch)?;
        pairwise_objective(
            self.model,
            batch,
            &PairPlan::all_pairs(batch.len()),
            Some(grads),
            Some((self.dropout, rng)),
        )
    }
    fn episode_objective(
        &self,
        episode: &Episode,
        regime: Regime,
        grads: &mut [Vec<B::Scalar>],
        rng: &mut Rng,
    ) -> Result<B::Scalar> {
        let (pool, plan) = match regime {
            Regime::EpisodicSupportQuery => {
                check_split(episode)?;
                (
                    episode.pool(),
                    PairPlan::support_query(episode.support.len(), episode.query.len()),
                )
            }
            _ => {
                let pool = episode_pool(episode)?;
                let plan = PairPlan::all_pairs(pool.len());
                (pool, plan)
            }
        };
        pairwise_objective(
            self.model,
            &pool,
            &plan,
            Some(grads),
            Some((self.dropout, rng)),
        )
    }
    fn validation_accuracy(&self, episodes: &[Episode]) -> Result<f64> {
        inference::nn_mean_accuracy(self.model, episodes)
    }
}

struct ProtoLearner<'m, B: TrainableBackbone> {
    model: &'m mut ProtoNet<B>,
}

impl<B: TrainableBackbone> Learner for ProtoLearner<'_, B> {
    type Scalar = B::Scalar;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<B::Scalar>> {
        self.model.backbone.parameters_mut()
    }
    fn snapshot(&self) -> Vec<Vec<B::Scalar>> {
        self.model
            .backbone
            .parameters()
            .iter()
            .map(|t| t.data.clone())
            .collect()
    }
    fn restore(&mut self, snapshot: &[Vec<B::Scalar>]) {
        for (t, s) in self
            .model
            .backbone
            .parameters_mut()
            .into_iter()
            .zip(snapshot)
        {
            t.data.copy_from_slice(s);
        }
    }
    fn zero_grads(&self) -> Vec<Vec<B::Scalar>> {
        math::zero_grads(&self.model.backbone.parameters())
    }
    fn batch_objective(
        &self,
        _: &[&Utterance],
        _: &mut [Vec<B::Scalar>],
        _: &mut Rng,
    ) -> Result<B::Scalar> {
        Err(Error::InvalidConfig(
            "ProtoNet is trained on episodes only".into(),
        ))
    }
    fn episode_objective(
        &self,
        episode: &Episode,
        _: Regime,
        grads: &mut [Vec<B::Scalar>],
        _: &mut Rng,
    ) -> Result<B::Scalar> {
        protonet_objective(self.model, episode, Some(grads))
    }
    fn validation_accuracy(&self, episodes: &[Episode]) -> Result<f64> {
        inference::protonet_mean_accuracy(self.model, episodes)
    }
}

/// Trains a similarity model under `config.regime`, evaluating nearest-neighbour
/// accuracy on `validation` every `eval_every_updates` updates and stopping
/// after `patience_evals` evaluations without improvement. The best
/// checkpoint is restored before returning.
pub fn train<B: TrainableBackbone>(
    model: &mut SimilarityModel<B>,
    data: TrainData<'_>,
    config: &TrainConfig,
    validation: &[Episode],
) -> Result<TrainOutcome> {
    match (&data, config.regime) {
        (TrainData::Utterances(_), Regime::NonEpisodic) => {}
        (TrainData::Episodes(_), Regime::Episodic | Regime::EpisodicSupportQuery) => {}
        _ => {
            return Err(Error::InvalidConfig(alloc::format!(
                "{} training needs {} data",
                config.regime,
                if config.regime == Regime::NonEpisodic {
                    "utterance"
                } else {
                    "episode"
                }
            )))
        }
    }
    let mut learner = PairLearner {
        model,
        dropout: config.head_dropout,
    };
    fit(&mut learner, data, config, validation)
}

/// Trains a ProtoNet backbone with the prototypical loss on episodes.
pub fn train_protonet<B: TrainableBackbone>(
    model: &mut ProtoNet<B>,
    episodes: &mut dyn EpisodeSource,
    config: &TrainConfig,
    validation: &[Episode],
) -> Result<TrainOutcome> {
    let mut learner = ProtoLearner { model };
    let config = TrainConfig {
        regime: Regime::EpisodicSupportQuery,
        ..*config
    };
    fit(
        &mut learner,
        TrainData::Episodes(episodes),
        &config,
        validation,
    )
}

fn fit<L: Learner>(
    learner: &mut L,
    mut data: TrainData<'_>,
    config: &TrainConfig,
    validation: &[Episode],
) -> Result<TrainOutcome> {
    config.validate()?;
    if validation.is_empty() {
        return Err(Error::EmptyInput("validation episode list"));
    }
    let mut rng = rng::derive(config.seed, 0x7261_696e);
    let mut optimizer = AdamW::new(config);
    let mut stopper = EarlyStopping::new(config.patience_evals);
    let mut history = Vec::new();
    let mut losses = Vec::new();

    let initial = learner.validation_accuracy(validation)?;
    history.push((0, initial));
    stopper.observe(initial);
    let mut best = (0u64, initial, learner.snapshot());

    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0usize;
    let budget = config.max_episodes as u64;
    let mut update = 0u64;
    let mut stopped_early = false;
    while update < budget {
        let mut grads = learner.zero_grads();
        let loss = match &mut data {
            TrainData::Utterances(pool) => {
                if pool.len() < 2 {
                    return Err(Error::InvalidSpec(
                        "NE training needs at least two utterances".into(),
                    ));
                }
                let size = config.batch_size.min(pool.len());
                if cursor + size > order.len() {
                    order = (0..pool.len()).collect();
                    rng::shuffle(&mut rng, &mut order);
                    cursor = 0;
                }
                let batch: Vec<&Utterance> = order[cursor..cursor + size]
                    .iter()
                    .map(|&i| pool[i])
                    .collect();
                cursor += size;
                learner.batch_objective(&batch, &mut grads, &mut rng)?
            }
            TrainData::Episodes(source) => {
                let episode = source.next_episode()?;
                learner.episode_objective(&episode, config.regime, &mut grads, &mut rng)?
            }
        };
        update += 1;
        let loss = loss.to_f64();
        if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { update });
        }
        losses.push(loss);
        optimizer.step(learner.parameters_mut(), &grads);

        if update % config.eval_every_updates as u64 == 0 || update == budget {
            let acc = learner.validation_accuracy(validation)?;
            history.push((update, acc));
            match stopper.observe(acc) {
                StopDecision::Improved => best = (update, acc, learner.snapshot()),
                StopDecision::Continue => {}
                StopDecision::Stop => {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    learner.restore(&best.2);
    Ok(TrainOutcome {
        state: TrainState {
            update_count: update,
            best_update: best.0,
            best_validation_accuracy: best.1,
            evals_since_improvement: stopper.since_best(),
            rng_state: RngState::capture(&rng),
            history,
            stopped_early,
        },
        losses,
    })
}
