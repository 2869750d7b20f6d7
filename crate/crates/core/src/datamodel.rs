//! Utterances, labelled corpora and intent folds.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

/// Name of an intent class. Compared by exact string equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntentLabel(String);

impl IntentLabel {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::EmptyLabel(String::new()));
        }
        Ok(IntentLabel(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for IntentLabel {
    /// Panics on an empty name; use [`IntentLabel::new`] for untrusted input.
    fn from(name: &str) -> Self {
        IntentLabel::new(name).expect("intent label must be non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub label: IntentLabel,
}

impl Utterance {
    /// Builds an utterance, trimming surrounding whitespace from `text`.
    pub fn new(id: impl Into<String>, text: &str, label: IntentLabel) -> Result<Self> {
        let id = id.into();
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::EmptyText(id));
        }
        Ok(Utterance {
            id,
            text: text.to_string(),
            label,
        })
    }
}

/// One unvalidated record as read from an ingestion file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub label: String,
}

impl RawRecord {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        RawRecord {
            id: id.into(),
            text: text.into(),
            label: label.into(),
        }
    }
}

/// Validated, immutable set of labelled utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    utterances: Vec<Utterance>,
    intents: Vec<IntentLabel>,
    by_intent: BTreeMap<IntentLabel, Vec<usize>>,
}

impl LabeledCorpus {
    /// Utterances in ingestion order.
    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    /// Intents in order of first appearance.
    pub fn intents(&self) -> &[IntentLabel] {
        &self.intents
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn contains_intent(&self, intent: &IntentLabel) -> bool {
        self.by_intent.contains_key(intent)
    }

    /// Indices into [`utterances`](Self::utterances) carrying `intent`.
    pub fn indices_of(&self, intent: &IntentLabel) -> &[usize] {
        self.by_intent.get(intent).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Utterances whose label belongs to `intents`, in corpus order.
    pub fn restricted_to<'a>(
        &'a self,
        intents: &'a BTreeSet<IntentLabel>,
    ) -> impl Iterator<Item = &'a Utterance> + 'a {
        self.utterances
            .iter()
            .filter(move |u| intents.contains(&u.label))
    }

    /// Builds a corpus from already-constructed utterances.
    pub fn from_utterances(utterances: Vec<Utterance>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut seen = BTreeSet::new();
        let mut intents = Vec::new();
        let mut by_intent: BTreeMap<IntentLabel, Vec<usize>> = BTreeMap::new();
        for (i, u) in utterances.iter().enumerate() {
            if u.text.trim().is_empty() {
                return Err(Error::EmptyText(u.id.clone()));
            }
            if !seen.insert(u.id.as_str()) {
                return Err(Error::DuplicateId(u.id.clone()));
            }
            let slot = by_intent.entry(u.label.clone()).or_default();
            if slot.is_empty() {
                intents.push(u.label.clone());
            }
            slot.push(i);
        }
        drop(seen);
        Ok(LabeledCorpus {
            utterances,
            intents,
            by_intent,
        })
    }
}

/// Validates raw records into a [`LabeledCorpus`], preserving record order.
pub fn validate_corpus(records: &[RawRecord]) -> Result<LabeledCorpus> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let utterances = records
        .iter()
        .map(|r| {
            let label =
                IntentLabel::new(r.label.trim()).map_err(|_| Error::EmptyLabel(r.id.clone()))?;
            Utterance::new(r.id.clone(), &r.text, label)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledCorpus::from_utterances(utterances)
}

/// Number of intents assigned to each split of a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, valid: usize, test: usize) -> Self {
        SplitCounts { train, valid, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

/// Disjoint train/valid/test intent sets for one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train_intents: BTreeSet<IntentLabel>,
    pub valid_intents: BTreeSet<IntentLabel>,
    pub test_intents: BTreeSet<IntentLabel>,
    pub fold_index: usize,
    pub seed: u64,
}

impl FoldSplit {
    pub fn is_disjoint(&self) -> bool {
        self.train_intents.is_disjoint(&self.valid_intents)
            && self.train_intents.is_disjoint(&self.test_intents)
            && self.valid_intents.is_disjoint(&self.test_intents)
    }
}

/// Randomly partitions the corpus intents into train/valid/test sets.
///
/// Intents are sorted by name, shuffled with the seeded stream for
/// `(seed, fold_index)` and then cut into consecutive blocks of the
/// requested sizes. Intents beyond `counts.total()` are left unused.
pub fn split_intents(
    corpus: &LabeledCorpus,
    counts: SplitCounts,
    seed: u64,
    fold_index: usize,
) -> Result<FoldSplit> {
    let available = corpus.intents().len();
    if counts.total() > available {
        return Err(Error::InsufficientIntents {
            requested: counts.total(),
            available,
        });
    }
    let mut names: Vec<IntentLabel> = corpus.intents().to_vec();
    names.sort();
    let mut stream = rng::derive(seed, fold_index as u64);
    rng::shuffle(&mut stream, &mut names);
    let mut it = names.into_iter();
    let train_intents = it.by_ref().take(counts.train).collect();
    let valid_intents = it.by_ref().take(counts.valid).collect();
    let test_intents = it.by_ref().take(counts.test).collect();
    Ok(FoldSplit {
        train_intents,
        valid_intents,
        test_intents,
        fold_index,
        seed,
    })
}
