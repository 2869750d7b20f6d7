//! File-backed experiment pipeline and run directories.
//!
//! A run directory holds `config.txt`, one `fold{k}/` per fold with its
//! episode files, `checkpoint.json`, `predictions.jsonl` and `report.json`,
//! plus the merged `report.json` and rendered `table.md` at the top level.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fsic_core::datamodel::{FoldSplit, LabeledCorpus, Utterance};
use fsic_core::harness::{
    evaluate, init_model, make_table, prepare_fold, train_fold, EvaluationReport, ExperimentConfig,
    FoldData, SeedPurpose, TableEntry,
};
use fsic_core::training::TrainOutcome;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{render, RunConfig};
use crate::episode_io::{load_episodes, save_episodes};
use crate::error::{Error, Result};
use crate::predictions::save_predictions;

pub const CONFIG_FILE: &str = "config.txt";
pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.md";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const TRAIN_LOG_FILE: &str = "train_log.json";

pub fn fold_dir(root: &Path, fold: usize) -> PathBuf {
    root.join(format!("fold{fold}"))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_utterances(path: &Path, utterances: &[Utterance]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for u in utterances {
        let line = serde_json::to_string(u).expect("utterances serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_utterances(path: &Path) -> Result<Vec<Utterance>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn fold_error(config: &ExperimentConfig, fold: usize) -> impl Fn(Error) -> Error {
    let seed = config.fold_seed(fold, SeedPurpose::Split);
    move |e| e.in_fold(fold, seed)
}

fn core<T>(r: fsic_core::Result<T>) -> Result<T> {
    r.map_err(Error::from)
}

/// Writes a fold's split and episode sets under `dir`.
pub fn save_fold_data(dir: &Path, data: &FoldData) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("split.json"), &data.split)?;
    save_episodes(&dir.join("train.jsonl"), &data.train_episodes)?;
    save_episodes(&dir.join("valid.jsonl"), &data.valid_episodes)?;
    save_episodes(&dir.join("test.jsonl"), &data.test_episodes)?;
    write_utterances(&dir.join("train_utterances.jsonl"), &data.train_utterances)
}

pub fn load_fold_data(dir: &Path) -> Result<FoldData> {
    let split: FoldSplit = read_json(&dir.join("split.json"))?;
    Ok(FoldData {
        split,
        train_episodes: load_episodes(&dir.join("train.jsonl"))?,
        valid_episodes: load_episodes(&dir.join("valid.jsonl"))?,
        test_episodes: load_episodes(&dir.join("test.jsonl"))?,
        train_utterances: read_utterances(&dir.join("train_utterances.jsonl"))?,
    })
}

/// Splits and samples every fold, writing the episode files under `out`.
pub fn prepare_episodes(cfg: &RunConfig, corpus: &LabeledCorpus, out: &Path) -> Result<()> {
    core(cfg.experiment.validate())?;
    create_dir(out)?;
    fs::write(out.join(CONFIG_FILE), render(cfg)).map_err(|e| Error::io(out, e))?;
    for fold in 0..cfg.experiment.folds {
        let data = core(prepare_fold(&cfg.experiment, corpus, fold))
            .map_err(fold_error(&cfg.experiment, fold))?;
        save_fold_data(&fold_dir(out, fold), &data)?;
    }
    Ok(())
}

/// Loss curve and validation history of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub update_count: u64,
    pub best_update: u64,
    pub best_validation_accuracy: f64,
    pub stopped_early: bool,
    pub history: Vec<(u64, f64)>,
    pub losses: Vec<f64>,
    pub wall_clock_seconds: f64,
}

fn train_log(outcome: &TrainOutcome, seconds: f64) -> TrainLog {
    TrainLog {
        update_count: outcome.state.update_count,
        best_update: outcome.state.best_update,
        best_validation_accuracy: outcome.state.best_validation_accuracy,
        stopped_early: outcome.state.stopped_early,
        history: outcome.state.history.clone(),
        losses: outcome.losses.clone(),
        wall_clock_seconds: seconds,
    }
}

fn fold_count(episodes: &Path) -> Result<usize> {
    let mut n = 0;
    while fold_dir(episodes, n).join("split.json").is_file() {
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config(format!(
            "{} holds no fold directories",
            episodes.display()
        )));
    }
    Ok(n)
}

/// Trains one model per fold found under `episodes` and saves checkpoints.
pub fn train_from_episodes(cfg: &RunConfig, episodes: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    core(cfg.experiment.validate())?;
    create_dir(out)?;
    fs::write(out.join(CONFIG_FILE), render(cfg)).map_err(|e| Error::io(out, e))?;
    let mut saved = Vec::new();
    for fold in 0..fold_count(episodes)? {
        let wrap = fold_error(&cfg.experiment, fold);
        let data = load_fold_data(&fold_dir(episodes, fold)).map_err(&wrap)?;
        let dir = fold_dir(out, fold);
        create_dir(&dir)?;
        let start = Instant::now();
        let mut model = core(init_model(&cfg.experiment, fold)).map_err(&wrap)?;
        let outcome = core(train_fold(&cfg.experiment, fold, &data, &mut model)).map_err(&wrap)?;
        let seconds = start.elapsed().as_secs_f64();
        if let Some(o) = &outcome {
            write_json(&dir.join(TRAIN_LOG_FILE), &train_log(o, seconds))?;
        }
        let path = dir.join(CHECKPOINT_FILE);
        Checkpoint::capture(
            &cfg.experiment,
            fold,
            &model,
            outcome.as_ref().map(|o| &o.state),
        )
        .save(&path)?;
        saved.push(path);
    }
    Ok(saved)
}

fn labelled(mut report: EvaluationReport, config: &ExperimentConfig) -> EvaluationReport {
    report.config = config.echo();
    report.config.insert("row".into(), config.row_label());
    report
}

/// Scores a checkpoint on an episode file; writes predictions and a report.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    episodes: &Path,
    out: &Path,
) -> Result<EvaluationReport> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = ckpt.restore()?;
    let eps = load_episodes(episodes)?;
    let start = Instant::now();
    let (report, predictions) = core(evaluate(model.predictor().as_mut(), &eps))
        .map_err(fold_error(&ckpt.config, ckpt.fold))?;
    let mut report = labelled(report, &ckpt.config);
    report.fold_means = vec![report.mean_accuracy];
    report.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    create_dir(out)?;
    save_predictions(&out.join(PREDICTIONS_FILE), &predictions)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// Runs every fold end to end and fills the run directory `out`.
pub fn run_experiment(
    cfg: &RunConfig,
    corpus: &LabeledCorpus,
    out: &Path,
) -> Result<EvaluationReport> {
    let config = &cfg.experiment;
    core(config.validate())?;
    let start = Instant::now();
    create_dir(out)?;
    fs::write(out.join(CONFIG_FILE), render(cfg)).map_err(|e| Error::io(out, e))?;
    let mut reports = Vec::new();
    for fold in 0..config.folds {
        let wrap = fold_error(config, fold);
        let dir = fold_dir(out, fold);
        let fold_start = Instant::now();
        let data = core(prepare_fold(config, corpus, fold)).map_err(&wrap)?;
        save_fold_data(&dir, &data)?;
        let mut model = core(init_model(config, fold)).map_err(&wrap)?;
        let outcome = core(train_fold(config, fold, &data, &mut model)).map_err(&wrap)?;
        if let Some(o) = &outcome {
            write_json(
                &dir.join(TRAIN_LOG_FILE),
                &train_log(o, fold_start.elapsed().as_secs_f64()),
            )?;
        }
        Checkpoint::capture(config, fold, &model, outcome.as_ref().map(|o| &o.state))
            .save(&dir.join(CHECKPOINT_FILE))?;
        let (report, predictions) =
            core(evaluate(model.predictor().as_mut(), &data.test_episodes)).map_err(&wrap)?;
        let mut report = labelled(report, config);
        report.fold_means = vec![report.mean_accuracy];
        report.wall_clock_seconds = Some(fold_start.elapsed().as_secs_f64());
        save_predictions(&dir.join(PREDICTIONS_FILE), &predictions)?;
        write_json(&dir.join(REPORT_FILE), &report)?;
        reports.push(report);
    }
    let mut merged = labelled(core(EvaluationReport::merge_folds(&reports))?, config);
    merged.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    write_json(&out.join(REPORT_FILE), &merged)?;
    let table = render_table(&[&merged])?;
    fs::write(out.join(TABLE_FILE), table).map_err(|e| Error::io(out, e))?;
    Ok(merged)
}

fn render_table(reports: &[&EvaluationReport]) -> Result<String> {
    let entries = reports
        .iter()
        .map(|r| {
            let get = |k: &str| {
                r.config
                    .get(k)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("report has no `{k}` entry")))
            };
            Ok(TableEntry {
                row: get("row")?,
                dataset: get("dataset")?,
                report: r,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(core(make_table(&entries))?.render())
}

/// Loads `report.json` from each run directory and renders one table.
pub fn report(runs: &[PathBuf], out: &Path) -> Result<String> {
    let reports = runs
        .iter()
        .map(|r| read_json::<EvaluationReport>(&r.join(REPORT_FILE)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&EvaluationReport> = reports.iter().collect();
    let table = render_table(&refs)?;
    fs::write(out, &table).map_err(|e| Error::io(out, e))?;
    Ok(table)
}
