//! Episode files: one JSON object per line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fsic_core::episodes::Episode;

use crate::error::{Error, Result};

pub fn save_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in episodes {
        let line = serde_json::to_string(e).expect("episodes serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads and validates every episode; errors carry the offending line.
pub fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let episode: Episode = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        episode.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(episode);
    }
    Ok(out)
}
