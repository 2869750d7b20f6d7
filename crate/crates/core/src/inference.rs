//! Labelling queries from a support set.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::datamodel::{IntentLabel, Utterance};
use crate::encoder::{encode_single, Backbone, NeighbourCache};
use crate::episodes::Episode;
use crate::math::{self, Real};
use crate::rng::{self, Rng};
use crate::scoring::{np_infer_score, Architecture, ScoreMode, SimilarityModel};
use crate::{Error, Result};

/// Label assigned to one query, with the scores it was chosen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query_id: String,
    pub gold: IntentLabel,
    pub predicted: IntentLabel,
    /// Score of the winning neighbour or class.
    pub score: f64,
    /// Per-neighbour (NN) or per-class (ProtoNet) scores.
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn is_correct(&self) -> bool {
        self.gold == self.predicted
    }
}

/// Label of the highest-scoring neighbour, lowest index on ties.
pub fn nearest_neighbour<T: Real>(
    query: &Utterance,
    support: &[&Utterance],
    scores: &[T],
) -> Result<Prediction> {
    if support.is_empty() {
        return Err(Error::EmptyInput("support set"));
    }
    if scores.len() != support.len() {
        return Err(Error::DimensionMismatch {
            expected: support.len(),
            actual: scores.len(),
        });
    }
    let best = math::argmax_first(scores).expect("non-empty");
    Ok(Prediction {
        query_id: query.id.clone(),
        gold: query.label.clone(),
        predicted: support[best].label.clone(),
        score: Real::to_f64(scores[best]),
        scores: scores.iter().map(|s| Real::to_f64(*s)).collect(),
    })
}

/// 1-nearest-neighbour prediction with the model's inference-mode scores.
pub fn nn_predict<B: Backbone>(
    model: &SimilarityModel<B>,
    query: &Utterance,
    support: &[&Utterance],
) -> Result<Prediction> {
    if support.is_empty() {
        return Err(Error::EmptyInput("support set"));
    }
    let scores = model.score_all(query, support, ScoreMode::Infer)?;
    nearest_neighbour(query, support, &scores.scores)
}

/// Predicts every query of `episode`; bi-encoder support vectors are
/// computed once per episode.
pub fn nn_predict_episode<B: Backbone>(
    model: &SimilarityModel<B>,
    episode: &Episode,
) -> Result<Vec<Prediction>> {
    let support: Vec<&Utterance> = episode.support.iter().collect();
    match model.config().architecture {
        Architecture::Cross => episode
            .query
            .iter()
            .map(|q| nn_predict(model, q, &support))
            .collect(),
        Architecture::Bi => {
            if support.is_empty() {
                return Err(Error::EmptyInput("support set"));
            }
            let cache = NeighbourCache::build(&model.backbone, &support)?;
            episode
                .query
                .iter()
                .map(|q| {
                    let s = model.score_cached(q, &cache, ScoreMode::Infer)?;
                    nearest_neighbour(q, &support, &s.scores)
                })
                .collect()
        }
    }
}

/// Fraction of correct predictions.
pub fn accuracy(predictions: &[Prediction]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    predictions.iter().filter(|p| p.is_correct()).count() as f64 / predictions.len() as f64
}

/// Mean per-episode nearest-neighbour accuracy.
pub fn nn_mean_accuracy<B: Backbone>(
    model: &SimilarityModel<B>,
    episodes: &[Episode],
) -> Result<f64> {
    mean_over(episodes, |e| nn_predict_episode(model, e))
}

fn mean_over(
    episodes: &[Episode],
    mut f: impl FnMut(&Episode) -> Result<Vec<Prediction>>,
) -> Result<f64> {
    if episodes.is_empty() {
        return Err(Error::EmptyInput("episode list"));
    }
    let mut total = 0.0;
    for e in episodes {
        total += accuracy(&f(e)?);
    }
    Ok(total / episodes.len() as f64)
}

/// Frozen bi-encoder with cosine scoring: the generic pretrained-encoder
/// baseline. Identical to [`nn_predict`] on a BE+NP model.
pub fn frozen_be_np_predict<B: Backbone + ?Sized>(
    backbone: &B,
    query: &Utterance,
    support: &[&Utterance],
) -> Result<Prediction> {
    if support.is_empty() {
        return Err(Error::EmptyInput("support set"));
    }
    let cache = NeighbourCache::build(backbone, support)?;
    cosine_against(backbone, query, support, &cache)
}

fn cosine_against<B: Backbone + ?Sized>(
    backbone: &B,
    query: &Utterance,
    support: &[&Utterance],
    cache: &NeighbourCache<B::Scalar>,
) -> Result<Prediction> {
    let hq = encode_single(backbone, query)?;
    let scores = cache
        .vectors()
        .iter()
        .map(|hc| np_infer_score(&hq, hc))
        .collect::<Result<Vec<_>>>()?;
    nearest_neighbour(query, support, &scores)
}

/// Draws a uniformly random intent for `query`.
pub fn random_predict(
    query: &Utterance,
    intents: &[IntentLabel],
    rng: &mut Rng,
) -> Result<Prediction> {
    if intents.is_empty() {
        return Err(Error::EmptyInput("intent set"));
    }
    let i = rng::index(rng, intents.len());
    Ok(Prediction {
        query_id: query.id.clone(),
        gold: query.label.clone(),
        predicted: intents[i].clone(),
        score: 1.0 / intents.len() as f64,
        scores: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    SquaredEuclidean,
}

/// Prototypical-network classifier over a bi-encoder backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtoNet<B> {
    pub backbone: B,
    pub distance: Distance,
}

impl<B: Backbone> ProtoNet<B> {
    pub fn new(backbone: B) -> Self {
        ProtoNet {
            backbone,
            distance: Distance::SquaredEuclidean,
        }
    }

    pub fn predict_episode(&self, episode: &Episode) -> Result<Vec<Prediction>> {
        let groups = group_support(episode);
        let protos = prototypes(&self.backbone, &groups)?;
        episode
            .query
            .iter()
            .map(|q| classify_by_prototype(&self.backbone, q, &groups, &protos))
            .collect()
    }
}

/// Support utterances grouped by intent, in episode intent order.
pub fn group_support(episode: &Episode) -> Vec<(IntentLabel, Vec<&Utterance>)> {
    episode
        .intents
        .iter()
        .map(|i| {
            (
                i.clone(),
                episode.support.iter().filter(|u| &u.label == i).collect(),
            )
        })
        .collect()
}

fn prototypes<B: Backbone + ?Sized>(
    backbone: &B,
    groups: &[(IntentLabel, Vec<&Utterance>)],
) -> Result<Vec<Vec<B::Scalar>>> {
    groups
        .iter()
        .map(|(_, members)| {
            if members.is_empty() {
                return Err(Error::EmptyInput("intent support group"));
            }
            let mut proto = alloc::vec![B::Scalar::zero(); backbone.dim()];
            for u in members {
                math::axpy(B::Scalar::one(), &encode_single(backbone, u)?, &mut proto);
            }
            let inv = B::Scalar::one() / B::Scalar::of(members.len() as f64);
            proto.iter_mut().for_each(|v| *v *= inv);
            Ok(proto)
        })
        .collect()
}

fn classify_by_prototype<B: Backbone + ?Sized>(
    backbone: &B,
    query: &Utterance,
    groups: &[(IntentLabel, Vec<&Utterance>)],
    protos: &[Vec<B::Scalar>],
) -> Result<Prediction> {
    let hq = encode_single(backbone, query)?;
    let mut logits: Vec<f64> = protos
        .iter()
        .map(|p| {
            -hq.iter()
                .zip(p)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<B::Scalar>()
                .to_f64()
        })
        .collect();
    let best = math::argmax_first(&logits).expect("at least one class");
    math::softmax_in_place(&mut logits);
    Ok(Prediction {
        query_id: query.id.clone(),
        gold: query.label.clone(),
        predicted: groups[best].0.clone(),
        score: logits[best],
        scores: logits,
    })
}

/// Nearest-prototype prediction. Class probabilities are the softmax of
/// negative squared distances; ties go to the earliest class.
pub fn protonet_predict<B: Backbone + ?Sized>(
    backbone: &B,
    query: &Utterance,
    groups: &[(IntentLabel, Vec<&Utterance>)],
) -> Result<Prediction> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("intent set"));
    }
    let protos = prototypes(backbone, groups)?;
    classify_by_prototype(backbone, query, groups, &protos)
}

pub fn protonet_mean_accuracy<B: Backbone>(
    model: &ProtoNet<B>,
    episodes: &[Episode],
) -> Result<f64> {
    mean_over(episodes, |e| model.predict_episode(e))
}

/// Anything that labels every query of an episode.
pub trait EpisodePredictor {
    fn predict_episode(&mut self, episode: &Episode) -> Result<Vec<Prediction>>;
}

/// Nearest-neighbour inference with a similarity model.
pub struct NnPredictor<'a, B: Backbone>(pub &'a SimilarityModel<B>);

impl<B: Backbone> EpisodePredictor for NnPredictor<'_, B> {
    fn predict_episode(&mut self, episode: &Episode) -> Result<Vec<Prediction>> {
        nn_predict_episode(self.0, episode)
    }
}

/// Frozen bi-encoder with cosine nearest-neighbour inference.
pub struct FrozenBeNpPredictor<'a, B: Backbone + ?Sized>(pub &'a B);

impl<B: Backbone + ?Sized> EpisodePredictor for FrozenBeNpPredictor<'_, B> {
    fn predict_episode(&mut self, episode: &Episode) -> Result<Vec<Prediction>> {
        let support: Vec<&Utterance> = episode.support.iter().collect();
        if support.is_empty() {
            return Err(Error::EmptyInput("support set"));
        }
        let cache = NeighbourCache::build(self.0, &support)?;
        episode
            .query
            .iter()
            .map(|q| cosine_against(self.0, q, &support, &cache))
            .collect()
    }
}

impl<B: Backbone> EpisodePredictor for &ProtoNet<B> {
    fn predict_episode(&mut self, episode: &Episode) -> Result<Vec<Prediction>> {
        ProtoNet::predict_episode(self, episode)
    }
}

/// Uniformly random intent from the episode.
pub struct RandomPredictor {
    rng: Rng,
}

impl RandomPredictor {
    pub fn new(seed: u64) -> Self {
        RandomPredictor {
            rng: rng::from_seed(seed),
        }
    }
}

impl EpisodePredictor for RandomPredictor {
    fn predict_episode(&mut self, episode: &Episode) -> Result<Vec<Prediction>> {
        episode
            .query
            .iter()
            .map(|q| random_predict(q, &episode.intents, &mut self.rng))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{ToyBackbone, ToyConfig};
    use crate::scoring::Scoring;
    use alloc::vec;

    fn u(id: &str, label: &str) -> Utterance {
        Utterance::new(
            id,
            &alloc::format!("text of {id}"),
            IntentLabel::from(label),
        )
        .unwrap()
    }

    #[test]
    fn argmax_rule() {
        let q = u("q", "B");
        let s = [u("a", "A"), u("b", "B"), u("c", "C")];
        let refs: Vec<&Utterance> = s.iter().collect();
        assert_eq!(
            nearest_neighbour(&q, &refs, &[0.2, 0.9, 0.1])
                .unwrap()
                .predicted,
            IntentLabel::from("B")
        );
        assert_eq!(
            nearest_neighbour(&q, &refs[..2], &[0.5, 0.5])
                .unwrap()
                .predicted,
            IntentLabel::from("A")
        );
        assert_eq!(
            nearest_neighbour(&q, &refs[2..], &[0.0]).unwrap().predicted,
            IntentLabel::from("C")
        );
        assert!(nearest_neighbour::<f64>(&q, &[], &[]).is_err());
    }

    #[test]
    fn random_singleton_and_replay() {
        let q = u("q", "A");
        let mut rng = rng::from_seed(5);
        let only = [IntentLabel::from("A")];
        for _ in 0..10 {
            assert!(random_predict(&q, &only, &mut rng).unwrap().is_correct());
        }
        let intents: Vec<IntentLabel> = ["A", "B", "C", "D", "E"]
            .iter()
            .map(|&s| s.into())
            .collect();
        let run = |seed| {
            let mut r = rng::from_seed(seed);
            (0..20)
                .map(|_| random_predict(&q, &intents, &mut r).unwrap().predicted)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert!(random_predict(&q, &[], &mut rng).is_err());
    }

    #[test]
    fn protonet_zero_distance_wins_and_ties_pick_first() {
        // A backbone whose output is a fixed vector per text.
        struct Table;
        impl Backbone for Table {
            type Scalar = f64;
            fn dim(&self) -> usize {
                2
            }
            fn max_sequence_length(&self) -> usize {
                8
            }
            fn encode_text(&self, text: &str) -> Result<Vec<f64>> {
                Ok(match text {
                    "q" | "a" => vec![1.0, 0.0],
                    "b" => vec![0.0, 1.0],
                    _ => vec![-1.0, 0.0],
                })
            }
            fn encode_text_pair(&self, _: &str, _: &str) -> Result<Vec<f64>> {
                unreachable!()
            }
        }
        let mk = |t: &str, l: &str| Utterance::new(t, t, IntentLabel::from(l)).unwrap();
        let (a, b, c) = (mk("a", "A"), mk("b", "B"), mk("c", "C"));
        let q = mk("q", "A");
        let groups = vec![
            (IntentLabel::from("B"), vec![&b]),
            (IntentLabel::from("A"), vec![&a]),
            (IntentLabel::from("C"), vec![&c]),
        ];
        let p = protonet_predict(&Table, &q, &groups).unwrap();
        assert_eq!(p.predicted, IntentLabel::from("A"));
        assert!(p.scores[1] > p.scores[0] && p.scores[1] > p.scores[2]);
        assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let b2 = mk("b", "B2");
        let tie = vec![
            (IntentLabel::from("B"), vec![&b]),
            (IntentLabel::from("B2"), vec![&b2]),
        ];
        assert_eq!(
            protonet_predict(&Table, &q, &tie).unwrap().predicted,
            IntentLabel::from("B")
        );
        let empty = vec![(IntentLabel::from("B"), vec![])];
        assert!(protonet_predict(&Table, &q, &empty).is_err());
    }

    #[test]
    fn frozen_baseline_matches_be_np() {
        let cfg = ToyConfig {
            dim: 8,
            ffn_dim: 8,
            ..ToyConfig::default()
        };
        let toy = ToyBackbone::<f64>::new(cfg).unwrap();
        let model =
            SimilarityModel::new(toy.clone(), Architecture::Bi, Scoring::NonParameterized, 0)
                .unwrap();
        let s = [u("a", "A"), u("b", "B"), u("c", "C")];
        let refs: Vec<&Utterance> = s.iter().collect();
        for q in [u("x", "A"), u("y", "B"), u("z", "C")] {
            assert_eq!(
                frozen_be_np_predict(&toy, &q, &refs).unwrap(),
                nn_predict(&model, &q, &refs).unwrap()
            );
        }
    }
}
