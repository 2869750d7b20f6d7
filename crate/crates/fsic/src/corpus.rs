//! Corpus ingestion: JSON lines (`id`, `text`, `label`) or `text<TAB>label`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fsic_core::datamodel::{validate_corpus, LabeledCorpus, RawRecord};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    JsonLines,
    Tsv,
}

impl CorpusFormat {
    /// Picks the format from the extension, falling back to the first
    /// non-blank line (`{` means JSON lines).
    pub fn detect(path: &Path, first_line: Option<&str>) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "json" | "ndjson") => CorpusFormat::JsonLines,
            Some("tsv") => CorpusFormat::Tsv,
            _ if first_line.is_some_and(|l| l.trim_start().starts_with('{')) => {
                CorpusFormat::JsonLines
            }
            _ => CorpusFormat::Tsv,
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

/// Parses raw records without validating the corpus as a whole.
pub fn read_records(path: &Path) -> Result<Vec<RawRecord>> {
    let lines = read_lines(path)?;
    let first = lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .map(String::as_str);
    let format = CorpusFormat::detect(path, first);
    let data_rows = lines.iter().filter(|l| !l.trim().is_empty()).count();
    let width = data_rows.to_string().len().max(6);
    let mut records = Vec::with_capacity(data_rows);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let record = match format {
            CorpusFormat::JsonLines => {
                serde_json::from_str::<RawRecord>(line).map_err(|e| parse_err(e.to_string()))?
            }
            CorpusFormat::Tsv => {
                let (text, label) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err("expected `text<TAB>label`".into()))?;
                if label.contains('\t') {
                    return Err(parse_err(
                        "expected exactly two tab-separated columns".into(),
                    ));
                }
                RawRecord::new(
                    format!("{:0width$}", records.len()),
                    text,
                    label.trim_end_matches('\r'),
                )
            }
        };
        records.push(record);
    }
    Ok(records)
}

/// Reads and validates a corpus file.
pub fn load_corpus(path: &Path) -> Result<LabeledCorpus> {
    Ok(validate_corpus(&read_records(path)?)?)
}

/// Writes a corpus as JSON lines.
pub fn save_corpus(path: &Path, corpus: &LabeledCorpus) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for u in corpus.utterances() {
        let record = RawRecord::new(u.id.clone(), u.text.clone(), u.label.as_str());
        let line = serde_json::to_string(&record).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
