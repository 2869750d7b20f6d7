//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits non-zero on a failed criterion only when `FSIC_ACCEPTANCE_STRICT=1`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use fsic::checkpoint::Checkpoint;
use fsic_core::datamodel::{
    split_intents, validate_corpus, FoldSplit, IntentLabel, LabeledCorpus, RawRecord, SplitCounts,
    Utterance,
};
use fsic_core::encoder::{
    encode_pair_cross, encode_single, ToyBackbone, ToyConfig, TrainableBackbone,
};
use fsic_core::episodes::{
    build_imbalanced_episodes, check_no_leakage, compute_stats, sample_balanced_episodes, Episode,
    EpisodeSpec, ImbalancedSpec, Range, StatsTarget,
};
use fsic_core::harness::{
    evaluate, make_synthetic_corpus, ExperimentConfig, SyntheticSpec, TrainedModel,
};
use fsic_core::inference::{
    group_support, nearest_neighbour, protonet_predict, FrozenBeNpPredictor, NnPredictor,
    RandomPredictor,
};
use fsic_core::math::sigmoid;
use fsic_core::rng;
use fsic_core::scoring::{bi_pair_features, Architecture, Scoring, ScoringHead, SimilarityModel};
use fsic_core::training::{
    ep_loss, epsq_loss, pairwise_objective, query_loss, train, CycledEpisodes, PairPlan, Regime,
    TrainConfig, TrainData,
};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn bce(labels: &[bool], scores: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (&y, &s) in labels.iter().zip(scores) {
        let s = s.clamp(1e-7, 1.0 - 1e-7);
        sum -= if y { s.ln() } else { (1.0 - s).ln() };
    }
    sum / labels.len() as f64
}

fn loss_oracle() -> Check {
    let start = Instant::now();
    let mut r = rng::from_seed(1);
    let mut worst: f64 = 0.0;
    let cases = 2000;
    for case in 0..cases {
        let n = 1 + rng::index(&mut r, 50);
        let labels: Vec<bool> = (0..n).map(|_| rng::unit(&mut r) < 0.25).collect();
        let scores: Vec<f64> = (0..n)
            .map(|_| match case % 3 {
                0 => rng::uniform(&mut r, 0.0, 1e-6),
                1 => 1.0 - rng::uniform(&mut r, 0.0, 1e-6),
                _ => rng::unit(&mut r),
            })
            .collect();
        let got = query_loss(&labels, &scores).map_err(|e| e.to_string())?;
        worst = worst.max((got - bce(&labels, &scores)).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-9 && secs < 5.0,
        format!("{cases} cases, max |err| {worst:.1e}, {secs:.2}s"),
    )
}

fn utt(id: &str, text: &str, label: &str) -> Utterance {
    Utterance::new(id, text, IntentLabel::new(label).unwrap()).unwrap()
}

fn oracle_score(model: &SimilarityModel<ToyBackbone<f64>>, q: &Utterance, c: &Utterance) -> f64 {
    let linear = |f: &[f64], w: &[f64], b: f64| {
        sigmoid(f.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b)
    };
    match &model.head {
        ScoringHead::PaCross { weight, bias } => linear(
            &encode_pair_cross(&model.backbone, q, c).unwrap(),
            &weight.data,
            bias.data[0],
        ),
        ScoringHead::PaBi { weight, bias } => {
            let hq = encode_single(&model.backbone, q).unwrap();
            let hc = encode_single(&model.backbone, c).unwrap();
            linear(
                &bi_pair_features(&hq, &hc).unwrap(),
                &weight.data,
                bias.data[0],
            )
        }
        ScoringHead::NonParametric => {
            let hq = encode_single(&model.backbone, q).unwrap();
            let hc = encode_single(&model.backbone, c).unwrap();
            sigmoid(hq.iter().zip(&hc).map(|(a, b)| a * b).sum::<f64>())
        }
    }
}

fn regime_oracles() -> Check {
    let corpus = make_synthetic_corpus(&SyntheticSpec::new(6, 8), 3).map_err(|e| e.to_string())?;
    let mut r = rng::from_seed(4);
    let episodes = sample_balanced_episodes(
        &corpus,
        corpus.intents(),
        &EpisodeSpec::balanced(3, 2, 2, 0),
        4,
        &mut r,
    )
    .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let configs = [
        (Architecture::Cross, Scoring::Parameterized),
        (Architecture::Bi, Scoring::Parameterized),
        (Architecture::Bi, Scoring::NonParameterized),
    ];
    for (i, (a, s)) in configs.into_iter().enumerate() {
        let backbone = ToyBackbone::new(ToyConfig {
            dim: 8,
            ffn_dim: 12,
            seed: i as u64,
            ..ToyConfig::default()
        })
        .unwrap();
        let model = SimilarityModel::new(backbone, a, s, 10 + i as u64).unwrap();
        for e in &episodes {
            let pool: Vec<&Utterance> = e.support.iter().chain(&e.query).collect();
            let mut ep = 0.0;
            for (qi, q) in pool.iter().enumerate() {
                let others: Vec<&Utterance> = pool
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| *c != qi)
                    .map(|(_, u)| *u)
                    .collect();
                let labels: Vec<bool> = others.iter().map(|c| c.label == q.label).collect();
                let scores: Vec<f64> = others.iter().map(|c| oracle_score(&model, q, c)).collect();
                ep += bce(&labels, &scores);
            }
            ep /= pool.len() as f64;
            let mut sq = 0.0;
            for q in &e.query {
                let labels: Vec<bool> = e.support.iter().map(|c| c.label == q.label).collect();
                let scores: Vec<f64> = e
                    .support
                    .iter()
                    .map(|c| oracle_score(&model, q, c))
                    .collect();
                sq += bce(&labels, &scores);
            }
            sq /= e.query.len() as f64;
            worst = worst.max((ep_loss(&model, e).unwrap() - ep).abs());
            worst = worst.max((epsq_loss(&model, e).unwrap() - sq).abs());
        }
    }
    ensure(
        worst < 1e-7,
        format!("3 configs x 4 episodes, max |err| {worst:.1e}"),
    )
}

fn gradient_checks() -> Check {
    let start = Instant::now();
    let pool = [
        utt("a0", "book a table for two tonight", "restaurant"),
        utt("a1", "reserve dinner seats at eight", "restaurant"),
        utt("b0", "what is the weather in paris", "weather"),
        utt("b1", "will it rain tomorrow morning", "weather"),
        utt("c0", "play some jazz music", "music"),
        utt("c1", "put on my workout playlist", "music"),
    ];
    let refs: Vec<&Utterance> = pool.iter().collect();
    let plan = PairPlan::all_pairs(refs.len());
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let mut total = 0;
    let configs = [
        (Architecture::Cross, Scoring::Parameterized, true),
        (Architecture::Bi, Scoring::Parameterized, true),
        (Architecture::Bi, Scoring::NonParameterized, false),
    ];
    for (i, (a, s, head)) in configs.into_iter().enumerate() {
        let cfg = ToyConfig {
            vocab_size: 257,
            dim: 6,
            ffn_dim: 8,
            max_sequence_length: 16,
            seed: i as u64,
            ..ToyConfig::default()
        };
        let mut model =
            SimilarityModel::new(ToyBackbone::<f64>::new(cfg).unwrap(), a, s, 7 + i as u64)
                .unwrap();
        let mut grads: Vec<Vec<f64>> = model
            .parameters()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        pairwise_objective(&model, &refs, &plan, Some(&mut grads), None)
            .map_err(|e| e.to_string())?;
        let n = model.parameters().len();
        let backbone = model.backbone.parameters().len();
        let mut targets: Vec<(usize, usize)> = Vec::new();
        let mut r = rng::from_seed(100 + i as u64);
        if head {
            let fan_in = model.parameters()[n - 2].len();
            for _ in 0..100 {
                let t = n - 2 + rng::index(&mut r, 2);
                let len = if t == n - 2 { fan_in } else { 1 };
                targets.push((t, rng::index(&mut r, len)));
            }
        }
        for t in 0..backbone {
            for _ in 0..8 {
                targets.push((t, rng::index(&mut r, model.parameters()[t].len())));
            }
        }
        for (t, c) in targets {
            let original = model.parameters()[t].data[c];
            model.parameters_mut()[t].data[c] = original + step;
            let up = pairwise_objective(&model, &refs, &plan, None, None).unwrap();
            model.parameters_mut()[t].data[c] = original - step;
            let down = pairwise_objective(&model, &refs, &plan, None, None).unwrap();
            model.parameters_mut()[t].data[c] = original;
            let numeric = (up - down) / (2.0 * step);
            let scale = grads[t][c].abs().max(numeric.abs());
            let err = if scale < 1e-7 {
                (grads[t][c] - numeric).abs()
            } else {
                (grads[t][c] - numeric).abs() / scale
            };
            worst = worst.max(err);
            total += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(
        worst < 1e-4 && secs < 60.0,
        format!("{total} coordinates (heads 1x6 and 1x24, every backbone tensor), max rel err {worst:.1e}, {secs:.1}s"),
    )
}

fn random_baseline() -> Check {
    let corpus =
        make_synthetic_corpus(&SyntheticSpec::new(15, 40), 5).map_err(|e| e.to_string())?;
    let mut r = rng::from_seed(6);
    let eps = sample_balanced_episodes(
        &corpus,
        corpus.intents(),
        &EpisodeSpec::balanced(5, 1, 5, 0),
        600,
        &mut r,
    )
    .map_err(|e| e.to_string())?;
    let (report, _) = evaluate(&mut RandomPredictor::new(7), &eps).map_err(|e| e.to_string())?;
    let acc = report.mean_accuracy;
    ensure(
        (0.17..=0.23).contains(&acc),
        format!("600 5-way episodes, accuracy {acc:.4}"),
    )
}

/// Desk-scale learnability setup: 15 synthetic intents split 9/3/3.
struct Desk {
    corpus: LabeledCorpus,
    split: FoldSplit,
    train: Vec<Episode>,
    valid: Vec<Episode>,
    test: Vec<Episode>,
    backbone: ToyConfig,
    train_config: TrainConfig,
}

const TRAIN_EPISODES: usize = 2000;

fn desk() -> Desk {
    let mut spec = SyntheticSpec::new(15, 40);
    spec.keywords_per_intent = 2;
    spec.keywords_per_utterance = 2;
    spec.min_fillers = 6;
    spec.max_fillers = 10;
    let corpus = make_synthetic_corpus(&spec, 1).unwrap();
    let split = split_intents(&corpus, SplitCounts::new(9, 3, 3), 1, 0).unwrap();
    let sorted = |s: &BTreeSet<IntentLabel>| s.iter().cloned().collect::<Vec<_>>();
    let held_out: Vec<IntentLabel> = split
        .valid_intents
        .union(&split.test_intents)
        .cloned()
        .collect();
    let mut r = rng::from_seed(5);
    let test = sample_balanced_episodes(
        &corpus,
        &held_out,
        &EpisodeSpec::balanced(5, 1, 5, 0),
        600,
        &mut r,
    )
    .unwrap();
    let valid = sample_balanced_episodes(
        &corpus,
        &sorted(&split.valid_intents),
        &EpisodeSpec::balanced(3, 1, 5, 0),
        50,
        &mut r,
    )
    .unwrap();
    let train = sample_balanced_episodes(
        &corpus,
        &sorted(&split.train_intents),
        &EpisodeSpec::balanced(5, 1, 3, 0),
        TRAIN_EPISODES,
        &mut r,
    )
    .unwrap();
    Desk {
        corpus,
        split,
        train,
        valid,
        test,
        backbone: ToyConfig::default(),
        train_config: TrainConfig {
            learning_rate: 3e-3,
            batch_size: 20,
            max_episodes: TRAIN_EPISODES,
            patience_evals: 10,
            ..TrainConfig::default()
        },
    }
}

struct DeskRun {
    accuracy: f64,
    updates: u64,
    seconds: f64,
}

fn train_on_desk(desk: &Desk, regime: Regime) -> Result<DeskRun, String> {
    let start = Instant::now();
    let backbone = ToyBackbone::<f32>::new(desk.backbone).map_err(|e| e.to_string())?;
    let mut model = SimilarityModel::new(backbone, Architecture::Cross, Scoring::Parameterized, 9)
        .map_err(|e| e.to_string())?;
    let config = TrainConfig {
        regime,
        ..desk.train_config
    };
    let mut source = CycledEpisodes::new(desk.train.clone()).map_err(|e| e.to_string())?;
    let pool: Vec<&Utterance> = desk
        .corpus
        .restricted_to(&desk.split.train_intents)
        .collect();
    let data = match regime {
        Regime::NonEpisodic => TrainData::Utterances(pool),
        _ => TrainData::Episodes(&mut source),
    };
    let outcome = train(&mut model, data, &config, &desk.valid).map_err(|e| e.to_string())?;
    let (report, _) = evaluate(&mut NnPredictor(&model), &desk.test).map_err(|e| e.to_string())?;
    Ok(DeskRun {
        accuracy: report.mean_accuracy,
        updates: outcome.state.update_count,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn learnability(desk: &Desk, ep: &DeskRun) -> Check {
    let frozen = ToyBackbone::<f32>::new(desk.backbone).map_err(|e| e.to_string())?;
    let (report, _) =
        evaluate(&mut FrozenBeNpPredictor(&frozen), &desk.test).map_err(|e| e.to_string())?;
    let leak = check_no_leakage(&desk.test, &desk.split.train_intents).is_ok();
    let detail = format!(
        "CE+PA EP {:.3} after {} updates ({:.0}s), frozen BE+NP {:.3}, 600 5-way 1-shot episodes over 6 unseen intents",
        ep.accuracy, ep.updates, ep.seconds, report.mean_accuracy
    );
    ensure(
        ep.accuracy >= 0.90
            && report.mean_accuracy <= 0.30
            && ep.updates as usize <= TRAIN_EPISODES
            && ep.seconds < 900.0
            && !leak,
        detail,
    )
}

fn regime_ordering(desk: &Desk, ep: &DeskRun) -> Check {
    let epsq = train_on_desk(desk, Regime::EpisodicSupportQuery)?;
    let ne = train_on_desk(desk, Regime::NonEpisodic)?;
    let gap = (ep.accuracy - epsq.accuracy).abs();
    ensure(
        gap < 0.05 && ep.accuracy > ne.accuracy && epsq.accuracy > ne.accuracy,
        format!(
            "EP {:.3} ({} updates), EPSQ {:.3} ({} updates), NE {:.3} ({} updates), |EP-EPSQ| {:.1} points",
            ep.accuracy,
            ep.updates,
            epsq.accuracy,
            epsq.updates,
            ne.accuracy,
            ne.updates,
            100.0 * gap
        ),
    )
}

fn atis_like_corpus() -> LabeledCorpus {
    let base = make_synthetic_corpus(&SyntheticSpec::new(5, 1800), 9).unwrap();
    let sizes = [1800, 1000, 700, 500, 373];
    let mut records = Vec::new();
    for (intent, &n) in base.intents().iter().zip(&sizes) {
        for &i in &base.indices_of(intent)[..n] {
            let u = &base.utterances()[i];
            records.push(RawRecord::new(
                u.id.clone(),
                u.text.clone(),
                u.label.as_str(),
            ));
        }
    }
    validate_corpus(&records).unwrap()
}

fn episode_invariants() -> Check {
    let corpus =
        make_synthetic_corpus(&SyntheticSpec::new(15, 40), 2).map_err(|e| e.to_string())?;
    let split =
        split_intents(&corpus, SplitCounts::new(9, 3, 3), 3, 0).map_err(|e| e.to_string())?;
    let train_intents: Vec<IntentLabel> = split.train_intents.iter().cloned().collect();
    let mut r = rng::from_seed(8);
    let mut checked = 0;
    for (n, k, q) in [(5, 1, 5), (5, 5, 3), (3, 2, 4), (9, 1, 1)] {
        let eps = sample_balanced_episodes(
            &corpus,
            &train_intents,
            &EpisodeSpec::balanced(n, k, q, 0),
            2500,
            &mut r,
        )
        .map_err(|e| e.to_string())?;
        for e in &eps {
            e.validate().map_err(|x| x.to_string())?;
            let distinct: BTreeSet<&IntentLabel> = e.intents.iter().collect();
            let ids: BTreeSet<&str> = e
                .support
                .iter()
                .chain(&e.query)
                .map(|u| u.id.as_str())
                .collect();
            let exact = e.intents.len() == n
                && distinct.len() == n
                && e.intents
                    .iter()
                    .all(|i| e.support.iter().filter(|u| &u.label == i).count() == k)
                && e.intents
                    .iter()
                    .all(|i| e.query.iter().filter(|u| &u.label == i).count() == q)
                && ids.len() == e.support.len() + e.query.len();
            if !exact {
                return Err(format!(
                    "episode {} breaks the exact-count or disjointness invariant",
                    e.episode_id
                ));
            }
        }
        check_no_leakage(&eps, &split.train_intents).map_err(|x| x.to_string())?;
        checked += eps.len();
    }
    let atis = atis_like_corpus();
    let spec = ImbalancedSpec {
        intents_per_episode: Range::new(4, 4),
        shots_per_intent: Range::new(2, 6),
        support_size: Range::new(8, 19),
        query_size: Range::new(9, 30),
        target: Some(StatsTarget {
            avg_support_size: 15.54,
            avg_query_size: None,
            tolerance: 1.0,
        }),
        max_retries: 100,
    };
    let intents: BTreeSet<IntentLabel> = atis.intents().iter().cloned().collect();
    let eps = build_imbalanced_episodes(&atis, &intents, &spec, 1377, &mut r)
        .map_err(|e| e.to_string())?;
    let stats = compute_stats(&eps).map_err(|e| e.to_string())?;
    for e in &eps {
        e.validate().map_err(|x| x.to_string())?;
    }
    let ok = eps.len() == 1377
        && (stats.avg_support_size - 15.54).abs() <= 1.0
        && stats.min_support_size >= 8
        && stats.max_support_size <= 19
        && (stats.avg_intents_per_episode - 4.0).abs() < 0.5;
    ensure(
        ok,
        format!(
            "{checked} balanced episodes valid; ATIS-style: {} episodes, avg support {:.2} in ({}, {}), avg intents {:.2}",
            eps.len(),
            stats.avg_support_size,
            stats.min_support_size,
            stats.max_support_size,
            stats.avg_intents_per_episode
        ),
    )
}

fn protonet_equivalence() -> Check {
    let corpus =
        make_synthetic_corpus(&SyntheticSpec::new(12, 20), 3).map_err(|e| e.to_string())?;
    let mut r = rng::from_seed(17);
    let eps = sample_balanced_episodes(
        &corpus,
        corpus.intents(),
        &EpisodeSpec::balanced(5, 1, 2, 0),
        500,
        &mut r,
    )
    .map_err(|e| e.to_string())?;
    let mut agree = 0;
    let mut total = 0;
    for (i, e) in eps.iter().enumerate() {
        let backbone: ToyBackbone<f32> = ToyBackbone::new(ToyConfig {
            seed: i as u64,
            ..ToyConfig::default()
        })
        .unwrap();
        let groups = group_support(e);
        let support: Vec<&Utterance> = e.support.iter().collect();
        let vectors: Vec<Vec<f32>> = support
            .iter()
            .map(|u| encode_single(&backbone, u).unwrap())
            .collect();
        for q in &e.query {
            let hq = encode_single(&backbone, q).unwrap();
            let scores: Vec<f64> = vectors
                .iter()
                .map(|hc| {
                    -(hq.iter()
                        .zip(hc)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f32>() as f64)
                })
                .collect();
            let nn = nearest_neighbour(q, &support, &scores).map_err(|x| x.to_string())?;
            let proto = protonet_predict(&backbone, q, &groups).map_err(|x| x.to_string())?;
            agree += usize::from(nn.predicted == proto.predicted);
            total += 1;
        }
    }
    ensure(
        agree == total,
        format!("{} episodes, {agree}/{total} labels agree", eps.len()),
    )
}

fn determinism_and_checkpoints() -> Check {
    let corpus =
        make_synthetic_corpus(&SyntheticSpec::new(15, 12), 4).map_err(|e| e.to_string())?;
    let mut config = ExperimentConfig {
        folds: 1,
        test_episode_count: 30,
        valid_episode_count: 10,
        ..ExperimentConfig::default()
    };
    config.backbone.dim = 8;
    config.backbone.ffn_dim = 12;
    config.train.learning_rate = 3e-3;
    config.train.max_episodes = 60;
    config.train.eval_every_updates = 20;
    config.eval_episodes = EpisodeSpec::balanced(3, 1, 2, 0);
    let run = |c: &ExperimentConfig| {
        fsic_core::harness::run_fold(c, &corpus, 0).map_err(|e| e.to_string())
    };
    let a = run(&config)?;
    let b = run(&config)?;
    let mut ra = a.report.clone();
    let mut rb = b.report.clone();
    ra.wall_clock_seconds = None;
    rb.wall_clock_seconds = None;
    let deterministic =
        ra == rb && a.model == b.model && a.data == b.data && a.outcome == b.outcome;

    let state = a
        .outcome
        .as_ref()
        .map(|o| &o.state)
        .ok_or("similarity run returned no outcome")?;
    let ckpt = Checkpoint::capture(&config, 0, &a.model, Some(state));
    let json = serde_json::to_string(&ckpt).map_err(|e| e.to_string())?;
    let back: Checkpoint = serde_json::from_str(&json).map_err(|e| e.to_string())?;
    let restored = back.restore().map_err(|e| e.to_string())?;
    let bit_exact = back == ckpt && bits(&restored) == bits(&a.model);
    let (valid, _) = evaluate(restored.predictor().as_mut(), &a.data.valid_episodes)
        .map_err(|e| e.to_string())?;
    let reproduces = valid.mean_accuracy == state.best_validation_accuracy
        && back.train_state.as_ref().map(|s| s.rng_state) == Some(state.rng_state)
        && back.train_state.as_ref().map(|s| s.update_count) == Some(state.update_count);
    ensure(
        deterministic && bit_exact && reproduces,
        format!(
            "repeat run identical: {deterministic}; checkpoint bit-exact: {bit_exact}; restored validation {:.4} vs best {:.4}",
            valid.mean_accuracy, state.best_validation_accuracy
        ),
    )
}

fn bits(model: &TrainedModel) -> Vec<u32> {
    match model {
        TrainedModel::Similarity(m) => m
            .parameters()
            .iter()
            .flat_map(|t| t.data.iter().map(|v| v.to_bits()))
            .collect(),
        _ => Vec::new(),
    }
}

fn main() {
    let mut results: Vec<(u8, &str, Check)> = Vec::new();
    let mut run = |id: u8, name: &'static str, f: &dyn Fn() -> Check| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {id} ({name}): {detail}");
        results.push((id, name, outcome));
    };
    run(1, "loss oracle", &loss_oracle);
    run(2, "EP/EPSQ oracles", &regime_oracles);
    run(3, "gradient checks", &gradient_checks);
    run(4, "random baseline", &random_baseline);
    let desk = desk();
    let ep = train_on_desk(&desk, Regime::Episodic);
    run(5, "end-to-end learnability", &|| {
        learnability(&desk, ep.as_ref().map_err(Clone::clone)?)
    });
    run(6, "regime ordering", &|| {
        regime_ordering(&desk, ep.as_ref().map_err(Clone::clone)?)
    });
    run(7, "episode invariants", &episode_invariants);
    run(8, "protonet/nn equivalence", &protonet_equivalence);
    run(
        9,
        "determinism and checkpoints",
        &determinism_and_checkpoints,
    );
    let failed = results.iter().filter(|(_, _, r)| r.is_err()).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 && std::env::var_os("FSIC_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
