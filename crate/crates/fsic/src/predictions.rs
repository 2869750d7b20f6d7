//! Prediction files: one JSON object per query.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fsic_core::datamodel::IntentLabel;
use fsic_core::harness::EpisodePrediction;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub episode_id: u64,
    pub query_id: String,
    pub gold: IntentLabel,
    pub predicted: IntentLabel,
    pub score: f64,
}

impl From<&EpisodePrediction> for PredictionRecord {
    fn from(p: &EpisodePrediction) -> Self {
        PredictionRecord {
            episode_id: p.episode_id,
            query_id: p.prediction.query_id.clone(),
            gold: p.prediction.gold.clone(),
            predicted: p.prediction.predicted.clone(),
            score: p.prediction.score,
        }
    }
}

pub fn save_predictions(path: &Path, predictions: &[EpisodePrediction]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in predictions {
        let line =
            serde_json::to_string(&PredictionRecord::from(p)).expect("predictions serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
