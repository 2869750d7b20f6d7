//! Episode construction, validation and batch statistics.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::datamodel::{IntentLabel, LabeledCorpus, Utterance};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Retries before a sampler gives up on a skewed corpus.
pub const DEFAULT_MAX_RETRIES: usize = 100;

/// A self-contained few-shot task: intents, support set and query set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: u64,
    pub intents: Vec<IntentLabel>,
    pub support: Vec<Utterance>,
    pub query: Vec<Utterance>,
}

impl Episode {
    /// Checks label membership, support coverage and support/query disjointness.
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| Error::EpisodeInvariant {
            episode_id: self.episode_id,
            reason: reason.to_string(),
        };
        if self.support.is_empty() {
            return Err(fail("support set is empty"));
        }
        let intents: BTreeSet<&IntentLabel> = self.intents.iter().collect();
        if intents.len() != self.intents.len() {
            return Err(fail("intent list contains duplicates"));
        }
        let mut ids = BTreeSet::new();
        for u in &self.support {
            if !intents.contains(&u.label) {
                return Err(fail(&format!(
                    "support utterance `{}` has foreign label `{}`",
                    u.id, u.label
                )));
            }
            if !ids.insert(u.id.as_str()) {
                return Err(fail(&format!("utterance `{}` repeated in support", u.id)));
            }
        }
        for intent in &self.intents {
            if !self.support.iter().any(|u| &u.label == intent) {
                return Err(fail(&format!("intent `{intent}` has no support utterance")));
            }
        }
        let support_ids = ids.clone();
        for u in &self.query {
            if !intents.contains(&u.label) {
                return Err(fail(&format!(
                    "query utterance `{}` has foreign label `{}`",
                    u.id, u.label
                )));
            }
            if support_ids.contains(u.id.as_str()) {
                return Err(fail(&format!(
                    "utterance `{}` is in both support and query",
                    u.id
                )));
            }
            if !ids.insert(u.id.as_str()) {
                return Err(fail(&format!("utterance `{}` repeated in query", u.id)));
            }
        }
        Ok(())
    }

    /// Support followed by query: the undivided utterance pool.
    pub fn pool(&self) -> Vec<&Utterance> {
        self.support.iter().chain(self.query.iter()).collect()
    }

    pub fn len(&self) -> usize {
        self.support.len() + self.query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeMode {
    Balanced,
    Imbalanced,
}

/// Shape of balanced N-way k-shot episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_way: usize,
    pub k_shot: usize,
    pub query_per_intent: usize,
    pub mode: EpisodeMode,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn balanced(n_way: usize, k_shot: usize, query_per_intent: usize, seed: u64) -> Self {
        EpisodeSpec {
            n_way,
            k_shot,
            query_per_intent,
            mode: EpisodeMode::Balanced,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == EpisodeMode::Balanced {
            if self.n_way < 2 {
                return Err(Error::InvalidSpec(format!(
                    "n_way must be at least 2, got {}",
                    self.n_way
                )));
            }
            if self.k_shot == 0 {
                return Err(Error::InvalidSpec("k_shot must be positive".into()));
            }
        }
        if self.query_per_intent == 0 {
            return Err(Error::InvalidSpec(
                "query_per_intent must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Samples one balanced episode from `allowed_intents`.
///
/// Intents are drawn without replacement. When a drawn intent has fewer than
/// `k_shot + query_per_intent` utterances the whole draw is repeated, up to
/// [`DEFAULT_MAX_RETRIES`] times.
pub fn sample_balanced_episode(
    corpus: &LabeledCorpus,
    allowed_intents: &[IntentLabel],
    spec: &EpisodeSpec,
    rng: &mut Rng,
    episode_id: u64,
) -> Result<Episode> {
    spec.validate()?;
    if allowed_intents.len() < spec.n_way {
        return Err(Error::InsufficientIntents {
            requested: spec.n_way,
            available: allowed_intents.len(),
        });
    }
    let needed = spec.k_shot + spec.query_per_intent;
    let mut last_short: Option<&IntentLabel> = None;
    for _ in 0..DEFAULT_MAX_RETRIES {
        let picked: Vec<&IntentLabel> = rng::sample_indices(rng, allowed_intents.len(), spec.n_way)
            .into_iter()
            .map(|i| &allowed_intents[i])
            .collect();
        if let Some(short) = picked.iter().find(|i| corpus.indices_of(i).len() < needed) {
            last_short = Some(short);
            continue;
        }
        let mut support = Vec::with_capacity(spec.n_way * spec.k_shot);
        let mut query = Vec::with_capacity(spec.n_way * spec.query_per_intent);
        for intent in &picked {
            let pool = corpus.indices_of(intent);
            let draw = rng::sample_indices(rng, pool.len(), needed);
            for (slot, &j) in draw.iter().enumerate() {
                let u = corpus.utterances()[pool[j]].clone();
                if slot < spec.k_shot {
                    support.push(u);
                } else {
                    query.push(u);
                }
            }
        }
        return Ok(Episode {
            episode_id,
            intents: picked.into_iter().cloned().collect(),
            support,
            query,
        });
    }
    let intent = last_short.expect("retry loop only exhausts on short intents");
    Err(Error::InsufficientUtterances {
        intent: intent.to_string(),
        needed,
        available: corpus.indices_of(intent).len(),
    })
}

/// Samples `count` balanced episodes with ids `0..count` from a seeded stream.
pub fn sample_balanced_episodes(
    corpus: &LabeledCorpus,
    allowed_intents: &[IntentLabel],
    spec: &EpisodeSpec,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<Episode>> {
    (0..count)
        .map(|i| sample_balanced_episode(corpus, allowed_intents, spec, rng, i as u64))
        .collect()
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub min: usize,
    pub max: usize,
}

impl Range {
    pub const fn new(min: usize, max: usize) -> Self {
        Range { min, max }
    }

    pub fn contains(&self, v: usize) -> bool {
        self.min <= v && v <= self.max
    }
}

/// Target averages an imbalanced batch must land near.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsTarget {
    pub avg_support_size: f64,
    pub avg_query_size: Option<f64>,
    pub tolerance: f64,
}

/// Configuration of the imbalanced episode sampler.
///
/// Per episode the sampler draws the intent count uniformly from
/// `intents_per_episode`, one shot count per intent uniformly from
/// `shots_per_intent`, and a single per-intent query count so that the query
/// total falls in `query_size`. Draws whose support total falls outside
/// `support_size` are rejected and redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImbalancedSpec {
    pub intents_per_episode: Range,
    pub shots_per_intent: Range,
    pub support_size: Range,
    pub query_size: Range,
    pub target: Option<StatsTarget>,
    pub max_retries: usize,
}

impl ImbalancedSpec {
    fn check(&self, available_intents: usize) -> Result<()> {
        let ranges = [
            ("intents_per_episode", self.intents_per_episode),
            ("shots_per_intent", self.shots_per_intent),
            ("support_size", self.support_size),
            ("query_size", self.query_size),
        ];
        for (name, r) in ranges {
            if r.min == 0 || r.min > r.max {
                return Err(Error::Unsatisfiable(format!(
                    "{name} range ({}, {}) is empty or zero",
                    r.min, r.max
                )));
            }
        }
        if self.intents_per_episode.min > available_intents {
            return Err(Error::Unsatisfiable(format!(
                "intents_per_episode.min = {} exceeds the {available_intents} available intents",
                self.intents_per_episode.min
            )));
        }
        let lo = self.intents_per_episode.min * self.shots_per_intent.min;
        let hi = self.intents_per_episode.max.min(available_intents) * self.shots_per_intent.max;
        if lo > self.support_size.max || hi < self.support_size.min {
            return Err(Error::Unsatisfiable(format!(
                "support totals span ({lo}, {hi}) which misses support_size ({}, {})",
                self.support_size.min, self.support_size.max
            )));
        }
        let any_query = (self.intents_per_episode.min
            ..=self.intents_per_episode.max.min(available_intents))
            .any(|n| self.query_size.max / n >= self.query_size.min.div_ceil(n).max(1));
        if !any_query {
            return Err(Error::Unsatisfiable(format!(
                "no intent count divides a query total in ({}, {})",
                self.query_size.min, self.query_size.max
            )));
        }
        Ok(())
    }
}

/// Builds imbalanced episodes whose sizes respect `spec`, drawn from `intents`.
pub fn build_imbalanced_episodes(
    corpus: &LabeledCorpus,
    intents: &BTreeSet<IntentLabel>,
    spec: &ImbalancedSpec,
    episode_count: usize,
    rng: &mut Rng,
) -> Result<Vec<Episode>> {
    if episode_count == 0 {
        return Ok(Vec::new());
    }
    let pool: Vec<&IntentLabel> = intents
        .iter()
        .filter(|i| corpus.contains_intent(i))
        .collect();
    if pool.len() != intents.len() {
        return Err(Error::Unsatisfiable(
            "split references intents absent from the corpus".into(),
        ));
    }
    spec.check(pool.len())?;
    let mut episodes = Vec::with_capacity(episode_count);
    for episode_id in 0..episode_count as u64 {
        episodes.push(sample_imbalanced_episode(
            corpus, &pool, spec, rng, episode_id,
        )?);
    }
    if let Some(target) = spec.target {
        verify_stats(&compute_stats(&episodes)?, &target)?;
    }
    Ok(episodes)
}

fn sample_imbalanced_episode(
    corpus: &LabeledCorpus,
    pool: &[&IntentLabel],
    spec: &ImbalancedSpec,
    rng: &mut Rng,
    episode_id: u64,
) -> Result<Episode> {
    let max_intents = spec.intents_per_episode.max.min(pool.len());
    let mut reason = alloc::string::String::new();
    for _ in 0..spec.max_retries.max(1) {
        let n = rng::inclusive(rng, spec.intents_per_episode.min, max_intents);
        let q_lo = spec.query_size.min.div_ceil(n).max(1);
        let q_hi = spec.query_size.max / n;
        if q_lo > q_hi {
            reason = format!("query_size cannot be split evenly over {n} intents");
            continue;
        }
        let per_query = rng::inclusive(rng, q_lo, q_hi);
        let shots: Vec<usize> = (0..n)
            .map(|_| rng::inclusive(rng, spec.shots_per_intent.min, spec.shots_per_intent.max))
            .collect();
        let total: usize = shots.iter().sum();
        if !spec.support_size.contains(total) {
            reason = format!(
                "support total {total} outside ({}, {})",
                spec.support_size.min, spec.support_size.max
            );
            continue;
        }
        let picked: Vec<&IntentLabel> = rng::sample_indices(rng, pool.len(), n)
            .into_iter()
            .map(|i| pool[i])
            .collect();
        if let Some((intent, need)) = picked
            .iter()
            .zip(&shots)
            .map(|(i, s)| (*i, s + per_query))
            .find(|(i, need)| corpus.indices_of(i).len() < *need)
        {
            reason = format!("intent `{intent}` has fewer than {need} utterances");
            continue;
        }
        let mut support = Vec::with_capacity(total);
        let mut query = Vec::with_capacity(n * per_query);
        for (intent, &k) in picked.iter().zip(&shots) {
            let idx = corpus.indices_of(intent);
            let draw = rng::sample_indices(rng, idx.len(), k + per_query);
            for (slot, &j) in draw.iter().enumerate() {
                let u = corpus.utterances()[idx[j]].clone();
                if slot < k {
                    support.push(u);
                } else {
                    query.push(u);
                }
            }
        }
        return Ok(Episode {
            episode_id,
            intents: picked.into_iter().cloned().collect(),
            support,
            query,
        });
    }
    Err(Error::Unsatisfiable(format!(
        "episode {episode_id}: no valid draw after {} retries, last violation: {reason}",
        spec.max_retries
    )))
}

/// Aggregate size statistics over a batch of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episodes: usize,
    pub avg_intents_per_episode: f64,
    pub avg_support_size: f64,
    pub min_support_size: usize,
    pub max_support_size: usize,
    pub avg_query_size: f64,
    pub min_query_size: usize,
    pub max_query_size: usize,
}

pub fn compute_stats(episodes: &[Episode]) -> Result<EpisodeStats> {
    if episodes.is_empty() {
        return Err(Error::EmptyInput("episode list"));
    }
    let n = episodes.len() as f64;
    let sum = |f: fn(&Episode) -> usize| episodes.iter().map(f).sum::<usize>() as f64 / n;
    Ok(EpisodeStats {
        episodes: episodes.len(),
        avg_intents_per_episode: sum(|e| e.intents.len()),
        avg_support_size: sum(|e| e.support.len()),
        min_support_size: episodes.iter().map(|e| e.support.len()).min().unwrap_or(0),
        max_support_size: episodes.iter().map(|e| e.support.len()).max().unwrap_or(0),
        avg_query_size: sum(|e| e.query.len()),
        min_query_size: episodes.iter().map(|e| e.query.len()).min().unwrap_or(0),
        max_query_size: episodes.iter().map(|e| e.query.len()).max().unwrap_or(0),
    })
}

/// Checks batch averages against `target`.
pub fn verify_stats(stats: &EpisodeStats, target: &StatsTarget) -> Result<()> {
    let off = (stats.avg_support_size - target.avg_support_size).abs();
    if off > target.tolerance {
        return Err(Error::StatsOutOfTolerance(format!(
            "avg support size {:.3} is {off:.3} away from {:.3} (tolerance {})",
            stats.avg_support_size, target.avg_support_size, target.tolerance
        )));
    }
    if let Some(q) = target.avg_query_size {
        let off = (stats.avg_query_size - q).abs();
        if off > target.tolerance {
            return Err(Error::StatsOutOfTolerance(format!(
                "avg query size {:.3} is {off:.3} away from {q:.3} (tolerance {})",
                stats.avg_query_size, target.tolerance
            )));
        }
    }
    Ok(())
}

/// Confirms that every episode only uses intents from `allowed`.
pub fn check_no_leakage(episodes: &[Episode], allowed: &BTreeSet<IntentLabel>) -> Result<()> {
    for e in episodes {
        if let Some(bad) = e.intents.iter().find(|i| !allowed.contains(*i)) {
            return Err(Error::Leakage(bad.to_string()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{validate_corpus, RawRecord};

    fn corpus(n_intents: usize, per_intent: usize) -> LabeledCorpus {
        let mut recs = Vec::new();
        for i in 0..n_intents {
            for j in 0..per_intent {
                recs.push(RawRecord::new(
                    format!("{i}-{j}"),
                    format!("utt {j}"),
                    format!("i{i}"),
                ));
            }
        }
        validate_corpus(&recs).unwrap()
    }

    fn episode(id: u64, support: usize, query: usize) -> Episode {
        let label = IntentLabel::from("a");
        let mk = |p: &str, k: usize| Utterance::new(format!("{p}{k}"), "x", label.clone()).unwrap();
        Episode {
            episode_id: id,
            intents: alloc::vec![label.clone()],
            support: (0..support).map(|k| mk("s", k)).collect(),
            query: (0..query).map(|k| mk("q", k)).collect(),
        }
    }

    #[test]
    fn five_way_one_shot_counts() {
        let c = corpus(8, 6);
        let allowed = c.intents().to_vec();
        let mut rng = rng::from_seed(1);
        let e = sample_balanced_episode(
            &c,
            &allowed,
            &EpisodeSpec::balanced(5, 1, 4, 0),
            &mut rng,
            0,
        )
        .unwrap();
        assert_eq!((e.support.len(), e.query.len()), (5, 20));
        e.validate().unwrap();
    }

    #[test]
    fn five_way_five_shot_support() {
        let c = corpus(6, 10);
        let allowed = c.intents().to_vec();
        let mut rng = rng::from_seed(2);
        let e = sample_balanced_episode(
            &c,
            &allowed,
            &EpisodeSpec::balanced(5, 5, 1, 0),
            &mut rng,
            0,
        )
        .unwrap();
        assert_eq!(e.support.len(), 25);
    }

    #[test]
    fn more_ways_than_intents() {
        let c = corpus(2, 5);
        let allowed = c.intents().to_vec();
        let mut rng = rng::from_seed(3);
        let err = sample_balanced_episode(
            &c,
            &allowed,
            &EpisodeSpec::balanced(3, 1, 1, 0),
            &mut rng,
            0,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::InsufficientIntents {
                requested: 3,
                available: 2
            }
        );
    }

    #[test]
    fn short_intent_is_named_after_retries() {
        let mut recs = Vec::new();
        for j in 0..5 {
            recs.push(RawRecord::new(format!("a{j}"), "x", "big"));
        }
        recs.push(RawRecord::new("b0", "y", "tiny"));
        let c = validate_corpus(&recs).unwrap();
        let mut rng = rng::from_seed(4);
        let err = sample_balanced_episode(
            &c,
            c.intents(),
            &EpisodeSpec::balanced(2, 1, 1, 0),
            &mut rng,
            0,
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::InsufficientUtterances {
                intent: "tiny".into(),
                needed: 2,
                available: 1
            }
        );
    }

    #[test]
    fn stats_arithmetic() {
        let s = compute_stats(&[episode(0, 10, 3), episode(1, 20, 5)]).unwrap();
        assert_eq!(s.avg_support_size, 15.0);
        assert_eq!((s.min_support_size, s.max_support_size), (10, 20));
        assert_eq!(s.avg_query_size, 4.0);
        let single = compute_stats(&[episode(0, 7, 2)]).unwrap();
        assert_eq!(single.avg_support_size, 7.0);
        assert_eq!(single.min_support_size, single.max_support_size);
        assert_eq!(
            compute_stats(&[]).unwrap_err(),
            Error::EmptyInput("episode list")
        );
    }

    #[test]
    fn overlap_is_an_invariant_violation() {
        let mut e = episode(3, 2, 1);
        e.query[0].id = e.support[0].id.clone();
        assert!(matches!(
            e.validate(),
            Err(Error::EpisodeInvariant { episode_id: 3, .. })
        ));
    }

    #[test]
    fn zero_imbalanced_episodes() {
        let c = corpus(5, 30);
        let intents = c.intents().iter().cloned().collect();
        let spec = ImbalancedSpec {
            intents_per_episode: Range::new(3, 5),
            shots_per_intent: Range::new(1, 5),
            support_size: Range::new(8, 19),
            query_size: Range::new(9, 30),
            target: None,
            max_retries: DEFAULT_MAX_RETRIES,
        };
        let mut rng = rng::from_seed(0);
        assert!(build_imbalanced_episodes(&c, &intents, &spec, 0, &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn unsatisfiable_support_range() {
        let c = corpus(5, 30);
        let intents = c.intents().iter().cloned().collect();
        let spec = ImbalancedSpec {
            intents_per_episode: Range::new(2, 3),
            shots_per_intent: Range::new(1, 2),
            support_size: Range::new(10, 12),
            query_size: Range::new(3, 9),
            target: None,
            max_retries: DEFAULT_MAX_RETRIES,
        };
        let mut rng = rng::from_seed(0);
        assert!(matches!(
            build_imbalanced_episodes(&c, &intents, &spec, 4, &mut rng),
            Err(Error::Unsatisfiable(_))
        ));
    }
}
