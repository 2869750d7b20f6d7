//! Losses checked against independent brute-force computations.

use std::time::Instant;

use fsic_core::datamodel::{IntentLabel, Utterance};
use fsic_core::encoder::{encode_pair_cross, encode_single, ToyBackbone, ToyConfig};
use fsic_core::episodes::Episode;
use fsic_core::math::{gelu, gelu_grad, sigmoid};
use fsic_core::rng;
use fsic_core::scoring::{bi_pair_features, Architecture, Scoring, ScoringHead, SimilarityModel};
use fsic_core::training::{ep_loss, epsq_loss, ne_loss, query_loss};

/// Textbook binary cross-entropy with the same clamp window.
fn bce_oracle(labels: &[bool], scores: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..labels.len() {
        let s = scores[i].clamp(1e-7, 1.0 - 1e-7);
        sum += if labels[i] { -s.ln() } else { -(1.0 - s).ln() };
    }
    sum / labels.len() as f64
}

#[test]
fn query_loss_matches_brute_force_bce() {
    let start = Instant::now();
    let mut r = rng::from_seed(2024);
    for case in 0..2000 {
        let n = 1 + rng::index(&mut r, 40);
        let labels: Vec<bool> = (0..n).map(|_| rng::unit(&mut r) < 0.3).collect();
        let scores: Vec<f64> = (0..n)
            .map(|_| match case % 4 {
                0 => rng::uniform(&mut r, 1e-9, 1e-6),
                1 => 1.0 - rng::uniform(&mut r, 1e-9, 1e-6),
                _ => rng::uniform(&mut r, 1e-6, 1.0 - 1e-6),
            })
            .collect();
        let got = query_loss(&labels, &scores).unwrap();
        let want = bce_oracle(&labels, &scores);
        assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

fn utt(id: &str, text: &str, label: &str) -> Utterance {
    Utterance::new(id, text, IntentLabel::new(label).unwrap()).unwrap()
}

fn episode() -> Episode {
    Episode {
        episode_id: 0,
        intents: vec!["alarm".into(), "music".into(), "weather".into()],
        support: vec![
            utt("s0", "set an alarm for seven", "alarm"),
            utt("s1", "play the new album", "music"),
            utt("s2", "is it sunny outside", "weather"),
        ],
        query: vec![
            utt("q0", "wake me up at six", "alarm"),
            utt("q1", "put on some rock music", "music"),
            utt("q2", "forecast for the weekend", "weather"),
            utt("q3", "cancel my morning alarm", "alarm"),
        ],
    }
}

fn backbone(seed: u64) -> ToyBackbone<f64> {
    ToyBackbone::new(ToyConfig {
        dim: 8,
        ffn_dim: 12,
        seed,
        ..ToyConfig::default()
    })
    .unwrap()
}

/// Score of one ordered pair computed straight from the definitions.
fn oracle_score(model: &SimilarityModel<ToyBackbone<f64>>, q: &Utterance, c: &Utterance) -> f64 {
    match (&model.head, model.config().architecture) {
        (ScoringHead::PaCross { weight, bias }, _) => {
            let h = encode_pair_cross(&model.backbone, q, c).unwrap();
            sigmoid(h.iter().zip(&weight.data).map(|(a, b)| a * b).sum::<f64>() + bias.data[0])
        }
        (ScoringHead::PaBi { weight, bias }, _) => {
            let hq = encode_single(&model.backbone, q).unwrap();
            let hc = encode_single(&model.backbone, c).unwrap();
            let f = bi_pair_features(&hq, &hc).unwrap();
            sigmoid(f.iter().zip(&weight.data).map(|(a, b)| a * b).sum::<f64>() + bias.data[0])
        }
        (ScoringHead::NonParametric, _) => {
            let hq = encode_single(&model.backbone, q).unwrap();
            let hc = encode_single(&model.backbone, c).unwrap();
            sigmoid(hq.iter().zip(&hc).map(|(a, b)| a * b).sum::<f64>())
        }
    }
}

/// Mean over queries of the BCE against the given neighbours.
fn double_loop(
    model: &SimilarityModel<ToyBackbone<f64>>,
    queries: &[&Utterance],
    neighbours_of: impl Fn(usize) -> Vec<usize>,
    pool: &[&Utterance],
) -> f64 {
    let mut total = 0.0;
    for (qi, q) in queries.iter().enumerate() {
        let ns = neighbours_of(qi);
        let labels: Vec<bool> = ns.iter().map(|&c| pool[c].label == q.label).collect();
        let scores: Vec<f64> = ns
            .iter()
            .map(|&c| oracle_score(model, q, pool[c]))
            .collect();
        total += bce_oracle(&labels, &scores);
    }
    total / queries.len() as f64
}

fn models() -> Vec<SimilarityModel<ToyBackbone<f64>>> {
    [
        (Architecture::Cross, Scoring::Parameterized),
        (Architecture::Bi, Scoring::Parameterized),
        (Architecture::Bi, Scoring::NonParameterized),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, (a, s))| SimilarityModel::new(backbone(i as u64), a, s, 40 + i as u64).unwrap())
    .collect()
}

#[test]
fn ep_loss_equals_all_ordered_pairs_double_loop() {
    let e = episode();
    let pool: Vec<&Utterance> = e.support.iter().chain(&e.query).collect();
    for model in models() {
        let want = double_loop(
            &model,
            &pool,
            |q| (0..pool.len()).filter(|&c| c != q).collect(),
            &pool,
        );
        let got = ep_loss(&model, &e).unwrap();
        assert!(
            (got - want).abs() < 1e-7,
            "{:?}: {got} vs {want}",
            model.config()
        );
    }
}

#[test]
fn ep_loss_ignores_the_support_query_split() {
    let e = episode();
    let mut relabelled = e.clone();
    let moved = relabelled.query.remove(0);
    relabelled.support.push(moved);
    for model in models() {
        let a = ep_loss(&model, &e).unwrap();
        let b = ep_loss(&model, &relabelled).unwrap();
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn epsq_loss_equals_queries_against_support_double_loop() {
    let e = episode();
    let pool: Vec<&Utterance> = e.support.iter().collect();
    let queries: Vec<&Utterance> = e.query.iter().collect();
    for model in models() {
        let want = double_loop(&model, &queries, |_| (0..pool.len()).collect(), &pool);
        let got = epsq_loss(&model, &e).unwrap();
        assert!(
            (got - want).abs() < 1e-7,
            "{:?}: {got} vs {want}",
            model.config()
        );
    }
}

#[test]
fn epsq_with_one_held_out_query_is_that_query_term_of_ep() {
    let e = episode();
    let all: Vec<Utterance> = e.support.iter().chain(&e.query).cloned().collect();
    for model in models() {
        for held in 0..all.len() {
            let degenerate = Episode {
                episode_id: 1,
                intents: e.intents.clone(),
                support: all
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != held)
                    .map(|(_, u)| u.clone())
                    .collect(),
                query: vec![all[held].clone()],
            };
            let pool: Vec<&Utterance> = all.iter().collect();
            let term = double_loop(
                &model,
                &[&all[held]],
                |_| (0..all.len()).filter(|&c| c != held).collect(),
                &pool,
            );
            let got = epsq_loss(&model, &degenerate).unwrap();
            assert!((got - term).abs() < 1e-9);
        }
    }
}

#[test]
fn ne_batch_with_one_label_uses_only_positive_terms() {
    let batch = [
        utt("a", "set an alarm", "alarm"),
        utt("b", "wake me at six", "alarm"),
        utt("c", "alarm for noon please", "alarm"),
    ];
    let refs: Vec<&Utterance> = batch.iter().collect();
    for model in models() {
        let mut want = 0.0;
        for q in 0..3 {
            let terms: Vec<f64> = (0..3)
                .filter(|&c| c != q)
                .map(|c| {
                    -oracle_score(&model, refs[q], refs[c])
                        .clamp(1e-7, 1.0 - 1e-7)
                        .ln()
                })
                .collect();
            want += terms.iter().sum::<f64>() / terms.len() as f64;
        }
        want /= 3.0;
        assert!((ne_loss(&model, &refs).unwrap() - want).abs() < 1e-9);
    }
    assert!(ne_loss(&models()[0], &refs[..1]).is_err());
}

#[test]
fn no_positive_pairs_gives_all_zero_labels() {
    let e = Episode {
        episode_id: 2,
        intents: vec!["alarm".into(), "music".into()],
        support: vec![utt("s0", "set an alarm", "alarm")],
        query: vec![utt("q0", "play a song", "music")],
    };
    let pool: Vec<&Utterance> = e.support.iter().chain(&e.query).collect();
    for model in models() {
        let s01 = oracle_score(&model, pool[0], pool[1]);
        let s10 = oracle_score(&model, pool[1], pool[0]);
        let want = (-(1.0 - s01).ln() - (1.0 - s10).ln()) / 2.0;
        assert!((ep_loss(&model, &e).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn gelu_matches_reference_values_and_central_differences() {
    for (x, want) in [
        (0.0, 0.0),
        (1.0, 0.8411919906082768),
        (-1.0, -0.15880800939172324),
        (2.5, 2.484915733910001),
    ] {
        assert!((gelu::<f64>(x) - want).abs() < 1e-12, "gelu({x})");
    }
    let h = 1e-6;
    for x in [-3.0, -0.7, 0.0, 0.4, 1.9] {
        let fd: f64 = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
        assert!((gelu_grad::<f64>(x) - fd).abs() < 1e-7, "gelu_grad({x})");
    }
}
