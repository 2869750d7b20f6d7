//! Evaluation, comparison tables, synthetic corpora and the per-fold
//! experiment pipeline (everything except file IO).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand_chacha::rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::datamodel::{
    split_intents, FoldSplit, IntentLabel, LabeledCorpus, RawRecord, SplitCounts, Utterance,
};
use crate::encoder::{ToyBackbone, ToyConfig};
use crate::episodes::{
    build_imbalanced_episodes, check_no_leakage, sample_balanced_episodes, Episode, EpisodeMode,
    EpisodeSpec, ImbalancedSpec,
};
use crate::inference::{
    EpisodePredictor, FrozenBeNpPredictor, NnPredictor, Prediction, ProtoNet, RandomPredictor,
};
use crate::math;
use crate::rng;
use crate::scoring::{Architecture, ModelConfig, Scoring, SimilarityModel};
use crate::training::{
    self, CycledEpisodes, Regime, SampledEpisodes, TrainConfig, TrainData, TrainOutcome,
};
use crate::{Error, Result};

/// Predictions for one query, tagged with its episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePrediction {
    pub episode_id: u64,
    #[serde(flatten)]
    pub prediction: Prediction,
}

/// Accuracy summary over a set of evaluation episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub episode_ids: Vec<u64>,
    pub episode_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub fold_means: Vec<f64>,
    /// Hash of the evaluation episodes; reports are only comparable when
    /// their fingerprints match.
    pub episode_fingerprint: String,
    pub config: BTreeMap<String, String>,
    pub wall_clock_seconds: Option<f64>,
}

impl EvaluationReport {
    fn from_accuracies(
        ids: Vec<u64>,
        accs: Vec<f64>,
        fold_means: Vec<f64>,
        fingerprint: String,
    ) -> Self {
        let (mean, std) = math::mean_std(&accs);
        EvaluationReport {
            episode_ids: ids,
            episode_accuracies: accs,
            mean_accuracy: mean,
            std_accuracy: std,
            fold_means,
            episode_fingerprint: fingerprint,
            config: BTreeMap::new(),
            wall_clock_seconds: None,
        }
    }

    /// Concatenates per-fold reports; `fold_means` holds each fold's mean.
    pub fn merge_folds(folds: &[EvaluationReport]) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::EmptyInput("fold report list"));
        }
        let mut ids = Vec::new();
        let mut accs = Vec::new();
        let mut prints = String::new();
        for f in folds {
            ids.extend_from_slice(&f.episode_ids);
            accs.extend_from_slice(&f.episode_accuracies);
            prints.push_str(&f.episode_fingerprint);
        }
        let fold_means = folds.iter().map(|f| f.mean_accuracy).collect();
        let mut merged =
            Self::from_accuracies(ids, accs, fold_means, hex64(fnv1a(prints.as_bytes())));
        merged.config = folds[0].config.clone();
        Ok(merged)
    }

    /// Checks that the stored summary matches the per-episode list.
    pub fn is_consistent(&self) -> bool {
        let (mean, std) = math::mean_std(&self.episode_accuracies);
        self.episode_accuracies
            .iter()
            .all(|a| (0.0..=1.0).contains(a))
            && (mean - self.mean_accuracy).abs() < 1e-12
            && (std - self.std_accuracy).abs() < 1e-12
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hex64(v: u64) -> String {
    format!("{v:016x}")
}

/// Order-sensitive hash of episode ids, intents and utterance ids.
pub fn episode_fingerprint(episodes: &[Episode]) -> String {
    let mut buf = String::new();
    for e in episodes {
        let _ = write!(buf, "{}|", e.episode_id);
        for i in &e.intents {
            let _ = write!(buf, "{i},");
        }
        buf.push('|');
        for u in e.support.iter().chain(&e.query) {
            buf.push_str(&u.id);
            buf.push(',');
        }
        buf.push('\n');
    }
    hex64(fnv1a(buf.as_bytes()))
}

/// Runs `predictor` over every episode; accuracy is correct / |query|.
pub fn evaluate<P: EpisodePredictor + ?Sized>(
    predictor: &mut P,
    episodes: &[Episode],
) -> Result<(EvaluationReport, Vec<EpisodePrediction>)> {
    if episodes.is_empty() {
        return Err(Error::EmptyInput("evaluation episode list"));
    }
    let mut accs = Vec::with_capacity(episodes.len());
    let mut all = Vec::new();
    for e in episodes {
        if e.query.is_empty() {
            return Err(Error::EpisodeInvariant {
                episode_id: e.episode_id,
                reason: "evaluation episodes need a non-empty query set".into(),
            });
        }
        let preds = predictor.predict_episode(e)?;
        accs.push(crate::inference::accuracy(&preds));
        all.extend(preds.into_iter().map(|prediction| EpisodePrediction {
            episode_id: e.episode_id,
            prediction,
        }));
    }
    let ids = episodes.iter().map(|e| e.episode_id).collect();
    let report =
        EvaluationReport::from_accuracies(ids, accs, Vec::new(), episode_fingerprint(episodes));
    Ok((report, all))
}

/// One cell of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableEntry<'a> {
    pub row: String,
    pub dataset: String,
    pub report: &'a EvaluationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub mean: f64,
    pub std: f64,
    pub best: bool,
}

/// Rows are configurations, columns are datasets plus an unweighted `Avg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub datasets: Vec<String>,
    pub rows: Vec<String>,
    /// `cells[row][column]`; the last column is `Avg`.
    pub cells: Vec<Vec<Option<TableCell>>>,
}

pub fn make_table(entries: &[TableEntry<'_>]) -> Result<Table> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("report list"));
    }
    let mut datasets: Vec<String> = Vec::new();
    let mut rows: Vec<String> = Vec::new();
    let mut prints: BTreeMap<&str, &str> = BTreeMap::new();
    for e in entries {
        if !datasets.contains(&e.dataset) {
            datasets.push(e.dataset.clone());
        }
        if !rows.contains(&e.row) {
            rows.push(e.row.clone());
        }
        match prints.get(e.dataset.as_str()) {
            Some(p) if *p != e.report.episode_fingerprint => {
                return Err(Error::MismatchedEpisodes(format!(
                    "dataset `{}`: row `{}` used episodes {} but another row used {}",
                    e.dataset, e.row, e.report.episode_fingerprint, p
                )))
            }
            _ => {
                prints.insert(&e.dataset, &e.report.episode_fingerprint);
            }
        }
    }
    let cols = datasets.len() + 1;
    let mut cells = vec![vec![None; cols]; rows.len()];
    for e in entries {
        let r = rows
            .iter()
            .position(|x| x == &e.row)
            .expect("row registered");
        let c = datasets
            .iter()
            .position(|x| x == &e.dataset)
            .expect("dataset registered");
        cells[r][c] = Some(TableCell {
            mean: e.report.mean_accuracy,
            std: e.report.std_accuracy,
            best: false,
        });
    }
    for row in cells.iter_mut() {
        let present: Vec<&TableCell> = row[..cols - 1].iter().flatten().collect();
        if present.len() == cols - 1 {
            let n = present.len() as f64;
            row[cols - 1] = Some(TableCell {
                mean: present.iter().map(|c| c.mean).sum::<f64>() / n,
                std: present.iter().map(|c| c.std).sum::<f64>() / n,
                best: false,
            });
        }
    }
    for c in 0..cols {
        let column: Vec<f64> = cells
            .iter()
            .map(|r| r[c].as_ref().map_or(f64::NEG_INFINITY, |x| x.mean))
            .collect();
        if let Some(best) = math::argmax_first(&column) {
            if let Some(cell) = cells[best][c].as_mut() {
                cell.best = true;
            }
        }
    }
    Ok(Table {
        datasets,
        rows,
        cells,
    })
}

impl Table {
    /// Markdown rendering with accuracies in percent; the best cell of each
    /// column is bold. The `± std` part is an addition of this tool.
    pub fn render(&self) -> String {
        let mut out = String::from("| Method |");
        for d in &self.datasets {
            let _ = write!(out, " {d} |");
        }
        out.push_str(" Avg |\n|---|");
        for _ in 0..=self.datasets.len() {
            out.push_str("---|");
        }
        out.push('\n');
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let _ = write!(out, "| {name} |");
            for cell in row {
                match cell {
                    Some(c) if c.best => {
                        let _ = write!(out, " **{:.2}** ± {:.2} |", 100.0 * c.mean, 100.0 * c.std);
                    }
                    Some(c) => {
                        let _ = write!(out, " {:.2} ± {:.2} |", 100.0 * c.mean, 100.0 * c.std);
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Shape of a generated corpus. Every intent owns a disjoint family of
/// keywords; every utterance mixes a few of its intent's keywords with
/// filler words shared by all intents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_intents: usize,
    pub utterances_per_intent: usize,
    pub keywords_per_intent: usize,
    pub keywords_per_utterance: usize,
    pub filler_pool: usize,
    pub min_fillers: usize,
    pub max_fillers: usize,
}

impl SyntheticSpec {
    pub fn new(n_intents: usize, utterances_per_intent: usize) -> Self {
        SyntheticSpec {
            n_intents,
            utterances_per_intent,
            keywords_per_intent: 3,
            keywords_per_utterance: 2,
            filler_pool: 40,
            min_fillers: 4,
            max_fillers: 8,
        }
    }
}

const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

fn pseudo_words(
    rng: &mut rng::Rng,
    count: usize,
    syllables: usize,
    taken: &mut BTreeSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng::index(rng, ONSETS.len())]);
            w.push_str(VOWELS[rng::index(rng, VOWELS.len())]);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Generates a corpus of lexically separable intents.
pub fn make_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<LabeledCorpus> {
    let counts = [
        ("n_intents", spec.n_intents),
        ("utterances_per_intent", spec.utterances_per_intent),
        ("keywords_per_intent", spec.keywords_per_intent),
        ("keywords_per_utterance", spec.keywords_per_utterance),
    ];
    for (name, v) in counts {
        if v == 0 {
            return Err(Error::InvalidConfig(format!(
                "synthetic.{name} must be positive"
            )));
        }
    }
    if spec.keywords_per_utterance > spec.keywords_per_intent {
        return Err(Error::InvalidConfig(
            "keywords_per_utterance exceeds keywords_per_intent".into(),
        ));
    }
    if spec.min_fillers > spec.max_fillers
        || (spec.max_fillers > 0 && spec.filler_pool < spec.max_fillers)
    {
        return Err(Error::InvalidConfig(
            "filler range does not fit the filler pool".into(),
        ));
    }
    let mut stream = rng::from_seed(seed);
    let mut taken = BTreeSet::new();
    let fillers = pseudo_words(&mut stream, spec.filler_pool, 2, &mut taken);
    let mut records = Vec::with_capacity(spec.n_intents * spec.utterances_per_intent);
    for i in 0..spec.n_intents {
        let family = pseudo_words(&mut stream, spec.keywords_per_intent, 3, &mut taken);
        let label = format!("intent_{i:03}");
        for j in 0..spec.utterances_per_intent {
            let mut words: Vec<&str> =
                rng::sample_indices(&mut stream, family.len(), spec.keywords_per_utterance)
                    .into_iter()
                    .map(|k| family[k].as_str())
                    .collect();
            let n_fill = rng::inclusive(&mut stream, spec.min_fillers, spec.max_fillers);
            words.extend(
                rng::sample_indices(&mut stream, fillers.len(), n_fill)
                    .into_iter()
                    .map(|k| fillers[k].as_str()),
            );
            rng::shuffle(&mut stream, &mut words);
            records.push(RawRecord::new(
                format!("{label}_{j:04}"),
                words.join(" "),
                label.clone(),
            ));
        }
    }
    crate::datamodel::validate_corpus(&records)
}

/// What an experiment trains and evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// A similarity model trained under a regime.
    Similarity,
    /// Frozen bi-encoder with cosine scoring, no training.
    FrozenBeNp,
    /// Prototypical network trained on episodes.
    ProtoNet,
    /// Uniformly random intent.
    Random,
}

/// Everything needed to reproduce one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub folds: usize,
    pub split: SplitCounts,
    pub method: Method,
    pub architecture: Architecture,
    pub scoring: Scoring,
    pub backbone: ToyConfig,
    pub train: TrainConfig,
    /// Shape of balanced training episodes (EP/EPSQ/ProtoNet).
    pub train_episodes: EpisodeSpec,
    /// Shape of balanced validation and test episodes.
    pub eval_episodes: EpisodeSpec,
    pub valid_episode_count: usize,
    pub test_episode_count: usize,
    /// Used instead of the balanced specs when `eval_episodes.mode` is
    /// imbalanced.
    pub imbalanced: Option<ImbalancedSpec>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "synthetic".into(),
            folds: 5,
            split: SplitCounts::new(9, 3, 3),
            method: Method::Similarity,
            architecture: Architecture::Cross,
            scoring: Scoring::Parameterized,
            backbone: ToyConfig::default(),
            train: TrainConfig::default(),
            train_episodes: EpisodeSpec::balanced(5, 1, 3, 0),
            eval_episodes: EpisodeSpec::balanced(5, 1, 5, 0),
            valid_episode_count: 100,
            test_episode_count: 600,
            imbalanced: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.method == Method::Similarity {
            ModelConfig::new(self.architecture, self.scoring)?;
        }
        if self.folds == 0 {
            return Err(Error::InvalidConfig("folds must be positive".into()));
        }
        if self.test_episode_count == 0 || self.valid_episode_count == 0 {
            return Err(Error::InvalidConfig(
                "episode counts must be positive".into(),
            ));
        }
        if self.eval_episodes.mode == EpisodeMode::Imbalanced {
            if self.imbalanced.is_none() {
                return Err(Error::InvalidConfig(
                    "imbalanced mode needs an imbalanced episode spec".into(),
                ));
            }
        } else {
            self.train_episodes.validate()?;
            self.eval_episodes.validate()?;
        }
        self.train.validate()?;
        if self.train.max_sequence_length != self.backbone.max_sequence_length {
            return Err(Error::InvalidConfig(format!(
                "train.max_sequence_length ({}) differs from backbone.max_sequence_length ({})",
                self.train.max_sequence_length, self.backbone.max_sequence_length
            )));
        }
        Ok(())
    }

    /// Short row label, e.g. `CE+PA EP`.
    pub fn row_label(&self) -> String {
        match self.method {
            Method::Similarity => format!(
                "{}+{} {}",
                self.architecture, self.scoring, self.train.regime
            ),
            Method::FrozenBeNp => "BE (fixed)+NP".into(),
            Method::ProtoNet => "ProtoNet".into(),
            Method::Random => "Random".into(),
        }
    }

    /// Seed for one purpose within one fold.
    pub fn fold_seed(&self, fold: usize, purpose: SeedPurpose) -> u64 {
        rng::derive(self.seed, (fold as u64) << 8 | purpose as u64).next_u64()
    }

    /// Flat `key = value` view used for config echoes.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("dataset", self.dataset.clone());
        put("folds", self.folds.to_string());
        put("split.train", self.split.train.to_string());
        put("split.valid", self.split.valid.to_string());
        put("split.test", self.split.test.to_string());
        put("method", method_name(self.method).into());
        put("model.architecture", self.architecture.to_string());
        put("model.scoring", self.scoring.to_string());
        put("train.regime", self.train.regime.to_string());
        put(
            "train.learning_rate",
            format!("{:e}", self.train.learning_rate),
        );
        put("train.batch_size", self.train.batch_size.to_string());
        put("train.max_episodes", self.train.max_episodes.to_string());
        put(
            "train.eval_every_updates",
            self.train.eval_every_updates.to_string(),
        );
        put(
            "train.patience_evals",
            self.train.patience_evals.to_string(),
        );
        put(
            "train.weight_decay",
            format!("{:e}", self.train.weight_decay),
        );
        put("train.head_dropout", format!("{}", self.train.head_dropout));
        put("backbone.dim", self.backbone.dim.to_string());
        put("backbone.ffn_dim", self.backbone.ffn_dim.to_string());
        put("backbone.vocab_size", self.backbone.vocab_size.to_string());
        put(
            "backbone.max_sequence_length",
            self.backbone.max_sequence_length.to_string(),
        );
        put(
            "episodes.train",
            format!(
                "{}-way {}-shot {}q",
                self.train_episodes.n_way,
                self.train_episodes.k_shot,
                self.train_episodes.query_per_intent
            ),
        );
        put(
            "episodes.eval",
            format!(
                "{}-way {}-shot {}q",
                self.eval_episodes.n_way,
                self.eval_episodes.k_shot,
                self.eval_episodes.query_per_intent
            ),
        );
        put("episodes.valid_count", self.valid_episode_count.to_string());
        put("episodes.test_count", self.test_episode_count.to_string());
        put("seed", self.seed.to_string());
        m
    }
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Similarity => "similarity",
        Method::FrozenBeNp => "frozen_be_np",
        Method::ProtoNet => "protonet",
        Method::Random => "random",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedPurpose {
    Split = 1,
    TrainEpisodes = 2,
    ValidEpisodes = 3,
    TestEpisodes = 4,
    Backbone = 5,
    Head = 6,
    Training = 7,
    Random = 8,
}

/// Episodes and intent split for one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldData {
    pub split: FoldSplit,
    /// Pre-sampled training episodes (empty for NE-only use).
    pub train_episodes: Vec<Episode>,
    pub valid_episodes: Vec<Episode>,
    pub test_episodes: Vec<Episode>,
    pub train_utterances: Vec<Utterance>,
}

fn sorted(set: &BTreeSet<IntentLabel>) -> Vec<IntentLabel> {
    set.iter().cloned().collect()
}

/// Splits intents and samples every episode set for `fold`.
pub fn prepare_fold(
    config: &ExperimentConfig,
    corpus: &LabeledCorpus,
    fold: usize,
) -> Result<FoldData> {
    config.validate()?;
    let split = split_intents(
        corpus,
        config.split,
        config.fold_seed(fold, SeedPurpose::Split),
        fold,
    )?;
    let (train_episodes, valid_episodes, test_episodes) =
        match (config.eval_episodes.mode, &config.imbalanced) {
            (EpisodeMode::Imbalanced, Some(spec)) => {
                let draw = |set: &BTreeSet<IntentLabel>, purpose, count| {
                    let mut r = rng::from_seed(config.fold_seed(fold, purpose));
                    build_imbalanced_episodes(corpus, set, spec, count, &mut r)
                };
                (
                    draw(
                        &split.train_intents,
                        SeedPurpose::TrainEpisodes,
                        config.train.max_episodes,
                    )?,
                    draw(
                        &split.valid_intents,
                        SeedPurpose::ValidEpisodes,
                        config.valid_episode_count,
                    )?,
                    draw(
                        &split.test_intents,
                        SeedPurpose::TestEpisodes,
                        config.test_episode_count,
                    )?,
                )
            }
            _ => {
                let draw = |set: &BTreeSet<IntentLabel>, spec: &EpisodeSpec, purpose, count| {
                    let mut r = rng::from_seed(config.fold_seed(fold, purpose));
                    sample_balanced_episodes(corpus, &sorted(set), spec, count, &mut r)
                };
                let train = if needs_train_episodes(config) {
                    draw(
                        &split.train_intents,
                        &config.train_episodes,
                        SeedPurpose::TrainEpisodes,
                        config.train.max_episodes,
                    )?
                } else {
                    Vec::new()
                };
                (
                    train,
                    draw(
                        &split.valid_intents,
                        &config.eval_episodes,
                        SeedPurpose::ValidEpisodes,
                        config.valid_episode_count,
                    )?,
                    draw(
                        &split.test_intents,
                        &config.eval_episodes,
                        SeedPurpose::TestEpisodes,
                        config.test_episode_count,
                    )?,
                )
            }
        };
    check_no_leakage(&train_episodes, &split.train_intents)?;
    check_no_leakage(&valid_episodes, &split.valid_intents)?;
    check_no_leakage(&test_episodes, &split.test_intents)?;
    let train_utterances = corpus
        .restricted_to(&split.train_intents)
        .cloned()
        .collect();
    Ok(FoldData {
        split,
        train_episodes,
        valid_episodes,
        test_episodes,
        train_utterances,
    })
}

fn needs_train_episodes(config: &ExperimentConfig) -> bool {
    match config.method {
        Method::Similarity => config.train.regime != Regime::NonEpisodic,
        Method::ProtoNet => true,
        Method::FrozenBeNp | Method::Random => false,
    }
}

/// Scalar type used for experiment models and checkpoints.
pub type ModelScalar = f32;
pub type ExperimentBackbone = ToyBackbone<ModelScalar>;

/// Model produced by one fold.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Similarity(SimilarityModel<ExperimentBackbone>),
    ProtoNet(ProtoNet<ExperimentBackbone>),
    Frozen(ExperimentBackbone),
    Random { seed: u64 },
}

impl TrainedModel {
    pub fn predictor(&self) -> alloc::boxed::Box<dyn EpisodePredictor + '_> {
        match self {
            TrainedModel::Similarity(m) => alloc::boxed::Box::new(NnPredictor(m)),
            TrainedModel::ProtoNet(p) => alloc::boxed::Box::new(p),
            TrainedModel::Frozen(b) => alloc::boxed::Box::new(FrozenBeNpPredictor(b)),
            TrainedModel::Random { seed } => alloc::boxed::Box::new(RandomPredictor::new(*seed)),
        }
    }
}

/// Builds the untrained model for `fold`.
pub fn init_model(config: &ExperimentConfig, fold: usize) -> Result<TrainedModel> {
    config.validate()?;
    let backbone_cfg = ToyConfig {
        seed: config.fold_seed(fold, SeedPurpose::Backbone),
        ..config.backbone
    };
    Ok(match config.method {
        Method::Similarity => TrainedModel::Similarity(SimilarityModel::new(
            ToyBackbone::new(backbone_cfg)?,
            config.architecture,
            config.scoring,
            config.fold_seed(fold, SeedPurpose::Head),
        )?),
        Method::ProtoNet => TrainedModel::ProtoNet(ProtoNet::new(ToyBackbone::new(backbone_cfg)?)),
        Method::FrozenBeNp => TrainedModel::Frozen(ToyBackbone::new(backbone_cfg)?),
        Method::Random => TrainedModel::Random {
            seed: config.fold_seed(fold, SeedPurpose::Random),
        },
    })
}

/// Trains `model` on the fold's training data. Baselines without training
/// return `None`.
pub fn train_fold(
    config: &ExperimentConfig,
    fold: usize,
    data: &FoldData,
    model: &mut TrainedModel,
) -> Result<Option<TrainOutcome>> {
    let train_cfg = TrainConfig {
        seed: config.fold_seed(fold, SeedPurpose::Training),
        ..config.train
    };
    match model {
        TrainedModel::Similarity(m) => {
            let outcome = if train_cfg.regime == Regime::NonEpisodic {
                let pool: Vec<&Utterance> = data.train_utterances.iter().collect();
                training::train(
                    m,
                    TrainData::Utterances(pool),
                    &train_cfg,
                    &data.valid_episodes,
                )?
            } else {
                let mut source = CycledEpisodes::new(data.train_episodes.clone())?;
                training::train(
                    m,
                    TrainData::Episodes(&mut source),
                    &train_cfg,
                    &data.valid_episodes,
                )?
            };
            Ok(Some(outcome))
        }
        TrainedModel::ProtoNet(p) => {
            let mut source = CycledEpisodes::new(data.train_episodes.clone())?;
            Ok(Some(training::train_protonet(
                p,
                &mut source,
                &train_cfg,
                &data.valid_episodes,
            )?))
        }
        TrainedModel::Frozen(_) | TrainedModel::Random { .. } => Ok(None),
    }
}

/// Training episodes sampled on the fly rather than pre-materialised.
pub fn sampled_source<'a>(
    config: &ExperimentConfig,
    fold: usize,
    corpus: &'a LabeledCorpus,
    split: &FoldSplit,
) -> SampledEpisodes<'a> {
    let spec = EpisodeSpec {
        seed: config.fold_seed(fold, SeedPurpose::TrainEpisodes),
        ..config.train_episodes
    };
    SampledEpisodes::new(corpus, sorted(&split.train_intents), spec)
}

/// Everything one fold produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRun {
    pub fold: usize,
    pub data: FoldData,
    pub model: TrainedModel,
    pub outcome: Option<TrainOutcome>,
    pub report: EvaluationReport,
    pub predictions: Vec<EpisodePrediction>,
}

/// Split, sample, train and evaluate one fold.
pub fn run_fold(config: &ExperimentConfig, corpus: &LabeledCorpus, fold: usize) -> Result<FoldRun> {
    let data = prepare_fold(config, corpus, fold)?;
    let mut model = init_model(config, fold)?;
    let outcome = train_fold(config, fold, &data, &mut model)?;
    check_no_leakage(&data.test_episodes, &data.split.test_intents)?;
    if let Some(bad) = data
        .split
        .test_intents
        .intersection(&data.split.train_intents)
        .next()
    {
        return Err(Error::Leakage(bad.to_string()));
    }
    let (mut report, predictions) = evaluate(model.predictor().as_mut(), &data.test_episodes)?;
    report.fold_means = vec![report.mean_accuracy];
    report.config = config.echo();
    Ok(FoldRun {
        fold,
        data,
        model,
        outcome,
        report,
        predictions,
    })
}

/// Runs every fold and merges their reports.
pub fn run_folds(
    config: &ExperimentConfig,
    corpus: &LabeledCorpus,
) -> Result<(EvaluationReport, Vec<FoldRun>)> {
    let runs = (0..config.folds)
        .map(|f| run_fold(config, corpus, f))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvaluationReport> = runs.iter().map(|r| r.report.clone()).collect();
    let mut merged = EvaluationReport::merge_folds(&reports)?;
    merged.config = config.echo();
    Ok((merged, runs))
}
