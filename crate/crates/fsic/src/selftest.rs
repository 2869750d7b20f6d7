//! Quick built-in checks, run by `fsic selftest`.

use fsic_core::datamodel::Utterance;
use fsic_core::encoder::{ToyBackbone, ToyConfig};
use fsic_core::episodes::{sample_balanced_episodes, EpisodeSpec};
use fsic_core::harness::{make_synthetic_corpus, ExperimentConfig, Method, SyntheticSpec};
use fsic_core::inference::{nn_predict_episode, ProtoNet};
use fsic_core::rng;
use fsic_core::scoring::{Architecture, Scoring, SimilarityModel};
use fsic_core::training::{pairwise_objective, query_loss, PairPlan};

use crate::checkpoint::Checkpoint;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

fn loss_oracle() -> Result<String, String> {
    let mut r = rng::from_seed(1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng::inclusive(&mut r, 1, 12);
        let labels: Vec<bool> = (0..n).map(|_| rng::unit(&mut r) < 0.5).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng::unit(&mut r)).collect();
        let expected = labels
            .iter()
            .zip(&scores)
            .map(|(&y, &s)| {
                let s = s.clamp(1e-7, 1.0 - 1e-7);
                if y {
                    -s.ln()
                } else {
                    -(1.0 - s).ln()
                }
            })
            .sum::<f64>()
            / n as f64;
        let got = query_loss(&labels, &scores).map_err(|e| e.to_string())?;
        worst = worst.max((got - expected).abs());
    }
    if worst < 1e-9 {
        Ok(format!("max abs error {worst:.1e} over 200 cases"))
    } else {
        Err(format!("max abs error {worst:.1e}"))
    }
}

fn gradient_check() -> Result<String, String> {
    let cfg = ToyConfig {
        vocab_size: 257,
        dim: 6,
        ffn_dim: 8,
        max_sequence_length: 16,
        seed: 3,
        ..ToyConfig::default()
    };
    let backbone = ToyBackbone::<f64>::new(cfg).map_err(|e| e.to_string())?;
    let mut model = SimilarityModel::new(backbone, Architecture::Bi, Scoring::Parameterized, 4)
        .map_err(|e| e.to_string())?;
    let corpus = make_synthetic_corpus(&SyntheticSpec::new(3, 2), 5).map_err(|e| e.to_string())?;
    let pool: Vec<&Utterance> = corpus.utterances().iter().collect();
    let plan = PairPlan::all_pairs(pool.len());
    let mut grads: Vec<Vec<f64>> = model
        .parameters()
        .iter()
        .map(|t| vec![0.0; t.len()])
        .collect();
    pairwise_objective(&model, &pool, &plan, Some(&mut grads), None).map_err(|e| e.to_string())?;
    let mut r = rng::from_seed(9);
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let tensors = model.parameters().len();
    for _ in 0..40 {
        let t = rng::index(&mut r, tensors);
        let i = rng::index(&mut r, model.parameters()[t].len());
        let original = model.parameters()[t].data[i];
        model.parameters_mut()[t].data[i] = original + step;
        let up = pairwise_objective(&model, &pool, &plan, None, None).map_err(|e| e.to_string())?;
        model.parameters_mut()[t].data[i] = original - step;
        let down =
            pairwise_objective(&model, &pool, &plan, None, None).map_err(|e| e.to_string())?;
        model.parameters_mut()[t].data[i] = original;
        let numeric = (up - down) / (2.0 * step);
        let scale = grads[t][i].abs().max(numeric.abs());
        let err = if scale < 1e-7 {
            (grads[t][i] - numeric).abs()
        } else {
            (grads[t][i] - numeric).abs() / scale
        };
        worst = worst.max(err);
    }
    if worst < 1e-4 {
        Ok(format!(
            "max relative error {worst:.1e} over 40 coordinates"
        ))
    } else {
        Err(format!("max relative error {worst:.1e}"))
    }
}

fn episode_invariants() -> Result<String, String> {
    let corpus =
        make_synthetic_corpus(&SyntheticSpec::new(10, 12), 2).map_err(|e| e.to_string())?;
    let mut r = rng::from_seed(4);
    let eps = sample_balanced_episodes(
        &corpus,
        corpus.intents(),
        &EpisodeSpec::balanced(5, 2, 3, 0),
        300,
        &mut r,
    )
    .map_err(|e| e.to_string())?;
    for e in &eps {
        e.validate().map_err(|err| err.to_string())?;
        if e.support.len() != 10 || e.query.len() != 15 {
            return Err(format!("episode {} has the wrong size", e.episode_id));
        }
    }
    Ok(format!("{} episodes valid", eps.len()))
}

fn protonet_agreement() -> Result<String, String> {
    let cfg = ToyConfig {
        dim: 8,
        ffn_dim: 12,
        vocab_size: 1024,
        seed: 6,
        ..ToyConfig::default()
    };
    let backbone = ToyBackbone::<f32>::new(cfg).map_err(|e| e.to_string())?;
    let corpus = make_synthetic_corpus(&SyntheticSpec::new(8, 6), 3).map_err(|e| e.to_string())?;
    let mut r = rng::from_seed(8);
    let eps = sample_balanced_episodes(
        &corpus,
        corpus.intents(),
        &EpisodeSpec::balanced(5, 1, 2, 0),
        50,
        &mut r,
    )
    .map_err(|e| e.to_string())?;
    let proto = ProtoNet::new(backbone.clone());
    let mut compared = 0;
    for e in &eps {
        let p = proto.predict_episode(e).map_err(|err| err.to_string())?;
        let n = nearest_by_distance(&backbone, e)?;
        for (a, b) in p.iter().zip(&n) {
            if a.predicted != *b {
                return Err(format!(
                    "episode {} query {} disagrees",
                    e.episode_id, a.query_id
                ));
            }
            compared += 1;
        }
    }
    Ok(format!("{compared} one-shot queries agree"))
}

fn nearest_by_distance(
    backbone: &ToyBackbone<f32>,
    e: &fsic_core::episodes::Episode,
) -> Result<Vec<fsic_core::datamodel::IntentLabel>, String> {
    use fsic_core::encoder::encode_single;
    let support: Vec<Vec<f32>> = e
        .support
        .iter()
        .map(|u| encode_single(backbone, u))
        .collect::<Result<_, _>>()
        .map_err(|err| err.to_string())?;
    e.query
        .iter()
        .map(|q| {
            let h = encode_single(backbone, q).map_err(|err| err.to_string())?;
            let mut best = (f32::INFINITY, 0);
            for (i, s) in support.iter().enumerate() {
                let d: f32 = h.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best.0 {
                    best = (d, i);
                }
            }
            Ok(e.support[best.1].label.clone())
        })
        .collect()
}

fn checkpoint_round_trip() -> Result<String, String> {
    let mut config = ExperimentConfig {
        method: Method::Similarity,
        architecture: Architecture::Cross,
        scoring: Scoring::Parameterized,
        ..ExperimentConfig::default()
    };
    config.backbone.dim = 8;
    config.backbone.ffn_dim = 12;
    let model = fsic_core::harness::init_model(&config, 0).map_err(|e| e.to_string())?;
    let ckpt = Checkpoint::capture(&config, 0, &model, None);
    let json = serde_json::to_string(&ckpt).map_err(|e| e.to_string())?;
    let back: Checkpoint = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let restored = back.restore().map_err(|e| e.to_string())?;
    if restored != model {
        return Err("restored parameters differ".into());
    }
    if let fsic_core::harness::TrainedModel::Similarity(m) = &restored {
        let corpus =
            make_synthetic_corpus(&SyntheticSpec::new(5, 4), 1).map_err(|e| e.to_string())?;
        let mut r = rng::from_seed(2);
        let eps = sample_balanced_episodes(
            &corpus,
            corpus.intents(),
            &EpisodeSpec::balanced(5, 1, 2, 0),
            3,
            &mut r,
        )
        .map_err(|e| e.to_string())?;
        if let fsic_core::harness::TrainedModel::Similarity(orig) = &model {
            for e in &eps {
                if nn_predict_episode(m, e).map_err(|x| x.to_string())?
                    != nn_predict_episode(orig, e).map_err(|x| x.to_string())?
                {
                    return Err("restored predictions differ".into());
                }
            }
        }
    }
    Ok(format!("{} tensors bit-exact", ckpt.tensors.len()))
}

/// Runs every check; the caller decides the exit status.
pub fn run() -> Vec<Check> {
    vec![
        check("loss oracle", loss_oracle()),
        check("gradient check", gradient_check()),
        check("episode invariants", episode_invariants()),
        check("protonet/nn agreement", protonet_agreement()),
        check("checkpoint round trip", checkpoint_round_trip()),
    ]
}
