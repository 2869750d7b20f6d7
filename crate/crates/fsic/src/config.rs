//! Flat `key = value` experiment configs.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error. Every key has a default; see [`render`] for the full list.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fsic_core::episodes::{EpisodeMode, ImbalancedSpec, Range, StatsTarget, DEFAULT_MAX_RETRIES};
use fsic_core::harness::{method_name, ExperimentConfig, Method};
use fsic_core::scoring::{Architecture, Scoring};
use fsic_core::training::Regime;

use crate::error::{Error, Result};

/// Environment variable that replaces the configured base seed.
pub const SEED_ENV: &str = "FSIC_SEED";

/// An experiment config plus the file-level settings around it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    /// Corpus file, resolved relative to the config file.
    pub corpus: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: ExperimentConfig::default(),
            corpus: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_method(v: &str) -> Result<Method> {
    Ok(match v {
        "similarity" => Method::Similarity,
        "frozen_be_np" => Method::FrozenBeNp,
        "protonet" => Method::ProtoNet,
        "random" => Method::Random,
        _ => return Err(Error::Config(format!("unknown method `{v}`"))),
    })
}

fn parse_architecture(v: &str) -> Result<Architecture> {
    match v {
        "CE" => Ok(Architecture::Cross),
        "BE" => Ok(Architecture::Bi),
        _ => Err(Error::Config(format!(
            "unknown architecture `{v}` (CE or BE)"
        ))),
    }
}

fn parse_scoring(v: &str) -> Result<Scoring> {
    match v {
        "PA" => Ok(Scoring::Parameterized),
        "NP" => Ok(Scoring::NonParameterized),
        _ => Err(Error::Config(format!("unknown scoring `{v}` (PA or NP)"))),
    }
}

fn parse_regime(v: &str) -> Result<Regime> {
    match v {
        "NE" => Ok(Regime::NonEpisodic),
        "EP" => Ok(Regime::Episodic),
        "EPSQ" => Ok(Regime::EpisodicSupportQuery),
        _ => Err(Error::Config(format!(
            "unknown regime `{v}` (NE, EP or EPSQ)"
        ))),
    }
}

fn default_imbalanced() -> ImbalancedSpec {
    ImbalancedSpec {
        intents_per_episode: Range::new(3, 5),
        shots_per_intent: Range::new(1, 5),
        support_size: Range::new(8, 19),
        query_size: Range::new(9, 30),
        target: None,
        max_retries: DEFAULT_MAX_RETRIES,
    }
}

fn set_range(r: &mut Range, bound: &str, key: &str, value: &str) -> Result<()> {
    match bound {
        "min" => r.min = parse_num(key, value)?,
        "max" => r.max = parse_num(key, value)?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Parses config text; `base` resolves relative corpus paths.
pub fn parse(text: &str, base: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = BTreeSet::new();
    let mut target_support: Option<f64> = None;
    let mut target_query: Option<f64> = None;
    let mut tolerance = 1.0;
    let mut imbalanced = default_imbalanced();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                n + 1
            )));
        }
        set(
            &mut cfg,
            &mut imbalanced,
            key,
            value,
            base,
            &mut target_support,
            &mut target_query,
            &mut tolerance,
        )
        .map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
            other => other,
        })?;
    }
    if let Some(avg) = target_support {
        imbalanced.target = Some(StatsTarget {
            avg_support_size: avg,
            avg_query_size: target_query,
            tolerance,
        });
    } else if target_query.is_some() {
        return Err(Error::Config(
            "imbalanced.target_avg_query needs imbalanced.target_avg_support".into(),
        ));
    }
    let e = &mut cfg.experiment;
    if e.eval_episodes.mode == EpisodeMode::Imbalanced {
        e.train_episodes.mode = EpisodeMode::Imbalanced;
        e.imbalanced = Some(imbalanced);
        if !seen.contains("folds") {
            e.folds = 1;
        }
    }
    Ok(cfg)
}

#[allow(clippy::too_many_arguments)]
fn set(
    cfg: &mut RunConfig,
    imb: &mut ImbalancedSpec,
    key: &str,
    value: &str,
    base: Option<&Path>,
    target_support: &mut Option<f64>,
    target_query: &mut Option<f64>,
    tolerance: &mut f64,
) -> Result<()> {
    let e = &mut cfg.experiment;
    match key {
        "dataset" => e.dataset = value.to_string(),
        "corpus" => {
            let p = PathBuf::from(value);
            cfg.corpus = Some(match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            });
        }
        "seed" => e.seed = parse_num(key, value)?,
        "folds" => e.folds = parse_num(key, value)?,
        "split.train" => e.split.train = parse_num(key, value)?,
        "split.valid" => e.split.valid = parse_num(key, value)?,
        "split.test" => e.split.test = parse_num(key, value)?,
        "method" => e.method = parse_method(value)?,
        "model.architecture" => e.architecture = parse_architecture(value)?,
        "model.scoring" => e.scoring = parse_scoring(value)?,
        "backbone" => {
            if value != "toy" {
                return Err(Error::Config(format!(
                    "backbone `{value}` is not available from the CLI; external encoders plug in through the Backbone trait"
                )));
            }
        }
        "backbone.vocab_size" => e.backbone.vocab_size = parse_num(key, value)?,
        "backbone.dim" => e.backbone.dim = parse_num(key, value)?,
        "backbone.ffn_dim" => e.backbone.ffn_dim = parse_num(key, value)?,
        "backbone.token_init" => e.backbone.token_init = parse_num(key, value)?,
        "backbone.position_init" => e.backbone.position_init = parse_num(key, value)?,
        "train.max_sequence_length" | "backbone.max_sequence_length" => {
            let v = parse_num(key, value)?;
            e.train.max_sequence_length = v;
            e.backbone.max_sequence_length = v;
        }
        "train.regime" => e.train.regime = parse_regime(value)?,
        "train.learning_rate" => e.train.learning_rate = parse_num(key, value)?,
        "train.batch_size" => e.train.batch_size = parse_num(key, value)?,
        "train.max_episodes" => e.train.max_episodes = parse_num(key, value)?,
        "train.eval_every_updates" => e.train.eval_every_updates = parse_num(key, value)?,
        "train.patience_evals" => e.train.patience_evals = parse_num(key, value)?,
        "train.beta1" => e.train.beta1 = parse_num(key, value)?,
        "train.beta2" => e.train.beta2 = parse_num(key, value)?,
        "train.epsilon" => e.train.epsilon = parse_num(key, value)?,
        "train.weight_decay" => e.train.weight_decay = parse_num(key, value)?,
        "train.head_dropout" => e.train.head_dropout = parse_num(key, value)?,
        "episodes.mode" => {
            let mode = match value {
                "balanced" => EpisodeMode::Balanced,
                "imbalanced" => EpisodeMode::Imbalanced,
                _ => return Err(Error::Config(format!("unknown episode mode `{value}`"))),
            };
            e.train_episodes.mode = mode;
            e.eval_episodes.mode = mode;
        }
        "episodes.train.n_way" => e.train_episodes.n_way = parse_num(key, value)?,
        "episodes.train.k_shot" => e.train_episodes.k_shot = parse_num(key, value)?,
        "episodes.train.query_per_intent" => {
            e.train_episodes.query_per_intent = parse_num(key, value)?
        }
        "episodes.eval.n_way" => e.eval_episodes.n_way = parse_num(key, value)?,
        "episodes.eval.k_shot" => e.eval_episodes.k_shot = parse_num(key, value)?,
        "episodes.eval.query_per_intent" => {
            e.eval_episodes.query_per_intent = parse_num(key, value)?
        }
        "episodes.valid_count" => e.valid_episode_count = parse_num(key, value)?,
        "episodes.test_count" => e.test_episode_count = parse_num(key, value)?,
        "imbalanced.target_avg_support" => *target_support = Some(parse_num(key, value)?),
        "imbalanced.target_avg_query" => *target_query = Some(parse_num(key, value)?),
        "imbalanced.tolerance" => *tolerance = parse_num(key, value)?,
        "imbalanced.max_retries" => imb.max_retries = parse_num(key, value)?,
        _ => {
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["imbalanced", range, bound] => {
                    let r = match *range {
                        "intents" => &mut imb.intents_per_episode,
                        "shots" => &mut imb.shots_per_intent,
                        "support" => &mut imb.support_size,
                        "query" => &mut imb.query_size,
                        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                    };
                    set_range(r, bound, key, value)?;
                }
                _ => return Err(Error::Config(format!("unknown key `{key}`"))),
            }
        }
    }
    Ok(())
}

/// Reads a config file and applies the `FSIC_SEED` override.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse(&text, path.parent())?;
    apply_seed_override(&mut cfg)?;
    Ok(cfg)
}

pub fn apply_seed_override(cfg: &mut RunConfig) -> Result<()> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.experiment.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))?;
    }
    Ok(())
}

/// Writes every key; `parse(render(c))` reproduces `c`.
pub fn render(cfg: &RunConfig) -> String {
    let e = &cfg.experiment;
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("dataset", e.dataset.clone());
    if let Some(p) = &cfg.corpus {
        put("corpus", p.display().to_string());
    }
    put("seed", e.seed.to_string());
    put("folds", e.folds.to_string());
    put("split.train", e.split.train.to_string());
    put("split.valid", e.split.valid.to_string());
    put("split.test", e.split.test.to_string());
    put("method", method_name(e.method).into());
    put("model.architecture", e.architecture.to_string());
    put("model.scoring", e.scoring.to_string());
    put("backbone", "toy".into());
    put("backbone.vocab_size", e.backbone.vocab_size.to_string());
    put("backbone.dim", e.backbone.dim.to_string());
    put("backbone.ffn_dim", e.backbone.ffn_dim.to_string());
    put("backbone.token_init", e.backbone.token_init.to_string());
    put(
        "backbone.position_init",
        e.backbone.position_init.to_string(),
    );
    put(
        "train.max_sequence_length",
        e.train.max_sequence_length.to_string(),
    );
    put("train.regime", e.train.regime.to_string());
    put("train.learning_rate", e.train.learning_rate.to_string());
    put("train.batch_size", e.train.batch_size.to_string());
    put("train.max_episodes", e.train.max_episodes.to_string());
    put(
        "train.eval_every_updates",
        e.train.eval_every_updates.to_string(),
    );
    put("train.patience_evals", e.train.patience_evals.to_string());
    put("train.beta1", e.train.beta1.to_string());
    put("train.beta2", e.train.beta2.to_string());
    put("train.epsilon", e.train.epsilon.to_string());
    put("train.weight_decay", e.train.weight_decay.to_string());
    put("train.head_dropout", e.train.head_dropout.to_string());
    let imbalanced = e.eval_episodes.mode == EpisodeMode::Imbalanced;
    put(
        "episodes.mode",
        if imbalanced { "imbalanced" } else { "balanced" }.into(),
    );
    put("episodes.train.n_way", e.train_episodes.n_way.to_string());
    put("episodes.train.k_shot", e.train_episodes.k_shot.to_string());
    put(
        "episodes.train.query_per_intent",
        e.train_episodes.query_per_intent.to_string(),
    );
    put("episodes.eval.n_way", e.eval_episodes.n_way.to_string());
    put("episodes.eval.k_shot", e.eval_episodes.k_shot.to_string());
    put(
        "episodes.eval.query_per_intent",
        e.eval_episodes.query_per_intent.to_string(),
    );
    put("episodes.valid_count", e.valid_episode_count.to_string());
    put("episodes.test_count", e.test_episode_count.to_string());
    if let (true, Some(spec)) = (imbalanced, &e.imbalanced) {
        for (name, r) in [
            ("intents", spec.intents_per_episode),
            ("shots", spec.shots_per_intent),
            ("support", spec.support_size),
            ("query", spec.query_size),
        ] {
            put(&format!("imbalanced.{name}.min"), r.min.to_string());
            put(&format!("imbalanced.{name}.max"), r.max.to_string());
        }
        put("imbalanced.max_retries", spec.max_retries.to_string());
        if let Some(t) = spec.target {
            put(
                "imbalanced.target_avg_support",
                t.avg_support_size.to_string(),
            );
            if let Some(q) = t.avg_query_size {
                put("imbalanced.target_avg_query", q.to_string());
            }
            put("imbalanced.tolerance", t.tolerance.to_string());
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(parse(&render(&cfg), None).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# desk run\ntrain.learning_rate = 1e-3\nmodel.architecture = BE\nmodel.scoring = NP\n\ntrain.regime = EPSQ\n";
        let cfg = parse(text, None).unwrap();
        assert_eq!(cfg.experiment.train.learning_rate, 1e-3);
        assert_eq!(cfg.experiment.architecture, Architecture::Bi);
        assert_eq!(cfg.experiment.train.regime, Regime::EpisodicSupportQuery);
        assert_eq!(parse(&render(&cfg), None).unwrap(), cfg);
    }

    #[test]
    fn imbalanced_round_trip_defaults_to_one_fold() {
        let text = "episodes.mode = imbalanced\nimbalanced.support.min = 8\nimbalanced.support.max = 19\nimbalanced.target_avg_support = 15.54\n";
        let cfg = parse(text, None).unwrap();
        assert_eq!(cfg.experiment.folds, 1);
        let spec = cfg.experiment.imbalanced.unwrap();
        assert_eq!(spec.support_size, Range::new(8, 19));
        assert_eq!(spec.target.unwrap().avg_support_size, 15.54);
        assert_eq!(parse(&render(&cfg), None).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse("seed = 1\nbogus.key = 3\n", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse("seed = x", None).is_err());
        assert!(parse("seed 1", None).is_err());
        assert!(parse("seed = 1\nseed = 2", None).is_err());
        assert!(parse("backbone = bert", None).is_err());
    }

    #[test]
    fn relative_corpus_paths_follow_the_config() {
        let cfg = parse("corpus = data/c.jsonl", Some(Path::new("/tmp/exp"))).unwrap();
        assert_eq!(cfg.corpus.unwrap(), PathBuf::from("/tmp/exp/data/c.jsonl"));
    }
}
