//! Command-line entry point: `normalize`, `train-md`, `detect`,
//! `train-coref`, `predict`, `evaluate`, and `score`, plus configuration
//! handling with precedence defaults < config file < command-line flags.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::arabic::NormalizationRules;
use crate::conll::{parse_conll, write_conll, Document};
use crate::detector::{
    export_mentions, train_detector, DetectorConfig, DetectorTrainOptions, MentionDetector,
    MentionFile,
};
use crate::embed::{ContextualSource, ContextualTable, EmbeddingStack, HashedSynthetic, StaticTable};
use crate::error::{Error, Result};
use crate::metrics::score_files;
use crate::model::{CorefConfig, CorefModel};
use crate::nn::params::ParamStore;
use crate::train::{evaluate_split, predict_split, train_coref, TrainOptions, TrainingMode};

/// Every tunable of the toolkit with its published default.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lstm_layers: usize,
    pub lstm_size: usize,
    pub lstm_dropout: f64,
    pub ffnn_layers: usize,
    pub ffnn_size: usize,
    pub ffnn_dropout: f64,
    pub cnn_filter_widths: Vec<usize>,
    pub cnn_filter_size: usize,
    pub char_embedding_size: usize,
    pub fasttext_embedding_size: usize,
    pub feature_embedding_size: usize,
    pub bert_embedding_size: usize,
    pub embedding_dropout: f64,
    pub max_span_width: usize,
    pub max_antecedents: usize,
    pub mention_ratio: f64,
    pub learning_rate: f64,
    pub training_steps: usize,
    pub detector_steps: usize,
    pub eval_interval: usize,
    pub seed: u64,
    pub second_order: bool,
    pub char_vocab_size: usize,
    pub distance_in_tokens: bool,
    pub detector_proj_dim: usize,
    /// Contextual vectors file; absent means hashed synthetic vectors of
    /// `bert_embedding_size`.
    pub contextual_embeddings: Option<PathBuf>,
    /// Static word vectors file; absent means deterministic fallback
    /// vectors of `fasttext_embedding_size` (when the source is enabled).
    pub static_embeddings: Option<PathBuf>,
    pub use_static_embeddings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lstm_layers: 3,
            lstm_size: 200,
            lstm_dropout: 0.4,
            ffnn_layers: 2,
            ffnn_size: 150,
            ffnn_dropout: 0.2,
            cnn_filter_widths: vec![3, 4, 5],
            cnn_filter_size: 50,
            char_embedding_size: 8,
            fasttext_embedding_size: 300,
            feature_embedding_size: 20,
            bert_embedding_size: 768,
            embedding_dropout: 0.5,
            max_span_width: 30,
            max_antecedents: 50,
            mention_ratio: 0.4,
            learning_rate: 1e-3,
            training_steps: 400_000,
            detector_steps: 400_000,
            eval_interval: 1_000,
            seed: 1,
            second_order: true,
            char_vocab_size: 4099,
            distance_in_tokens: false,
            detector_proj_dim: 150,
            contextual_embeddings: None,
            static_embeddings: None,
            use_static_embeddings: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Rejects out-of-range values before any work starts.
    pub fn validate(&self) -> Result<()> {
        if !(self.mention_ratio > 0.0 && self.mention_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "mention_ratio {} must be in (0, 1]",
                self.mention_ratio
            )));
        }
        for (name, v) in [
            ("lstm_dropout", self.lstm_dropout),
            ("ffnn_dropout", self.ffnn_dropout),
            ("embedding_dropout", self.embedding_dropout),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} {v} must be in [0, 1)")));
            }
        }
        for (name, v) in [
            ("lstm_layers", self.lstm_layers),
            ("lstm_size", self.lstm_size),
            ("ffnn_size", self.ffnn_size),
            ("cnn_filter_size", self.cnn_filter_size),
            ("char_embedding_size", self.char_embedding_size),
            ("feature_embedding_size", self.feature_embedding_size),
            ("bert_embedding_size", self.bert_embedding_size),
            ("max_span_width", self.max_span_width),
            ("max_antecedents", self.max_antecedents),
            ("training_steps", self.training_steps),
            ("detector_steps", self.detector_steps),
            ("eval_interval", self.eval_interval),
            ("detector_proj_dim", self.detector_proj_dim),
        ] {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.cnn_filter_widths.is_empty() {
            return Err(Error::Config("cnn_filter_widths must not be empty".into()));
        }
        if self.char_vocab_size < 2 {
            return Err(Error::Config("char_vocab_size must be at least 2".into()));
        }
        for path in [&self.contextual_embeddings, &self.static_embeddings]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "embedding file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn coref_config(&self) -> CorefConfig {
        CorefConfig {
            max_span_width: self.max_span_width,
            mention_ratio: self.mention_ratio,
            max_antecedents: self.max_antecedents,
            lstm_layers: self.lstm_layers,
            lstm_hidden: self.lstm_size,
            lstm_dropout: self.lstm_dropout,
            ffnn_layers: self.ffnn_layers,
            ffnn_size: self.ffnn_size,
            ffnn_dropout: self.ffnn_dropout,
            char_vocab_size: self.char_vocab_size,
            char_dim: self.char_embedding_size,
            char_filter_widths: self.cnn_filter_widths.clone(),
            char_filters: self.cnn_filter_size,
            feature_dim: self.feature_embedding_size,
            embedding_dropout: self.embedding_dropout,
            second_order: self.second_order,
            distance_in_tokens: self.distance_in_tokens,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            max_span_width: self.max_span_width,
            ratio: self.mention_ratio,
            lstm_layers: self.lstm_layers,
            lstm_hidden: self.lstm_size,
            lstm_dropout: self.lstm_dropout,
            proj_dim: self.detector_proj_dim,
            proj_hidden: self.ffnn_size,
            ffnn_dropout: self.ffnn_dropout,
        }
    }

    pub fn embedding_stack(&self) -> Result<EmbeddingStack> {
        let contextual = Some(match &self.contextual_embeddings {
            Some(path) => ContextualSource::File(ContextualTable::load(path)?),
            None => ContextualSource::Hashed(HashedSynthetic::new(self.bert_embedding_size)),
        });
        let static_words = if self.use_static_embeddings {
            Some(match &self.static_embeddings {
                Some(path) => StaticTable::load(path)?,
                None => StaticTable::synthetic(self.fasttext_embedding_size),
            })
        } else {
            None
        };
        Ok(EmbeddingStack {
            contextual,
            static_words,
        })
    }

    pub fn train_options(&self, mode: TrainingMode) -> TrainOptions {
        TrainOptions {
            mode,
            total_steps: self.training_steps,
            eval_interval: self.eval_interval,
            learning_rate: self.learning_rate,
            seed: self.seed,
        }
    }
}

fn parse_widths(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect()
}

/// Command-line overrides; unset flags fall back to the config file and
/// then to the published defaults.
#[derive(Debug, Clone, Args, Default)]
pub struct Overrides {
    /// Bidirectional LSTM layers [default: 3]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub lstm_layers: Option<usize>,
    /// Bidirectional LSTM hidden size per direction [default: 200]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub lstm_size: Option<usize>,
    /// Bidirectional LSTM dropout [default: 0.4]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub lstm_dropout: Option<f64>,
    /// FFNN hidden layers [default: 2]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub ffnn_layers: Option<usize>,
    /// FFNN hidden size [default: 150]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub ffnn_size: Option<usize>,
    /// FFNN dropout [default: 0.2]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub ffnn_dropout: Option<f64>,
    /// CNN filter widths, comma separated [default: 3,4,5]
    #[arg(long, global = true, value_parser = parse_widths, help_heading = "Model configuration")]
    pub cnn_filter_widths: Option<Vec<usize>>,
    /// CNN filters per width [default: 50]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub cnn_filter_size: Option<usize>,
    /// Character embedding size [default: 8]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub char_embedding_size: Option<usize>,
    /// Static word embedding size [default: 300]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub fasttext_embedding_size: Option<usize>,
    /// Width/distance feature embedding size [default: 20]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub feature_embedding_size: Option<usize>,
    /// Contextual embedding size [default: 768]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub bert_embedding_size: Option<usize>,
    /// Embedding dropout [default: 0.5]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub embedding_dropout: Option<f64>,
    /// Maximum mention width in tokens [default: 30]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub max_span_width: Option<usize>,
    /// Maximum candidate antecedents per mention [default: 50]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub max_antecedents: Option<usize>,
    /// Kept mentions per token [default: 0.4]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub mention_ratio: Option<f64>,
    /// Adam learning rate [default: 0.001]
    #[arg(long, global = true, help_heading = "Training")]
    pub learning_rate: Option<f64>,
    /// Coreference training steps [default: 400000]
    #[arg(long, global = true, help_heading = "Training")]
    pub training_steps: Option<usize>,
    /// Mention detector training steps [default: 400000]
    #[arg(long, global = true, help_heading = "Training")]
    pub detector_steps: Option<usize>,
    /// Dev evaluation interval in steps [default: 1000]
    #[arg(long, global = true, help_heading = "Training")]
    pub eval_interval: Option<usize>,
    /// Seed for every random choice of the run [default: 1]
    #[arg(long, global = true, help_heading = "Training")]
    pub seed: Option<u64>,
    /// Second-order inference [default: true]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub second_order: Option<bool>,
    /// Character hash vocabulary size [default: 4099]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub char_vocab_size: Option<usize>,
    /// Measure antecedent distance in tokens instead of mentions [default: false]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub distance_in_tokens: Option<bool>,
    /// Detector start/end projection size [default: 150]
    #[arg(long, global = true, help_heading = "Model configuration")]
    pub detector_proj_dim: Option<usize>,
    /// Contextual embeddings file [default: hashed synthetic vectors]
    #[arg(long, global = true, help_heading = "Embeddings")]
    pub contextual_embeddings: Option<PathBuf>,
    /// Static word embeddings file [default: deterministic fallback vectors]
    #[arg(long, global = true, help_heading = "Embeddings")]
    pub static_embeddings: Option<PathBuf>,
    /// Enable the static word-vector source [default: true]
    #[arg(long, global = true, help_heading = "Embeddings")]
    pub use_static_embeddings: Option<bool>,
}

macro_rules! apply_field {
    ($cfg:expr, $o:expr, $($field:ident),+ $(,)?) => {
        $(if let Some(v) = &$o.$field { $cfg.$field = v.clone(); })+
    };
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        apply_field!(
            cfg, self,
            lstm_layers, lstm_size, lstm_dropout, ffnn_layers, ffnn_size, ffnn_dropout,
            cnn_filter_widths, cnn_filter_size, char_embedding_size, fasttext_embedding_size,
            feature_embedding_size, bert_embedding_size, embedding_dropout, max_span_width,
            max_antecedents, mention_ratio, learning_rate, training_steps, detector_steps,
            eval_interval, seed, second_order, char_vocab_size, distance_in_tokens,
            detector_proj_dim, use_static_embeddings,
        );
        if let Some(p) = &self.contextual_embeddings {
            cfg.contextual_embeddings = Some(p.clone());
        }
        if let Some(p) = &self.static_embeddings {
            cfg.static_embeddings = Some(p.clone());
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "arcoref",
    about = "Arabic coreference toolkit: normalization, mention detection, span-ranking coreference, and CoNLL scoring",
    version
)]
struct Cli {
    /// TOML configuration file (flags override its values)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize alif variants and strip diacritics in a CoNLL file
    Normalize {
        /// Input CoNLL file
        #[arg(long)]
        input: PathBuf,
        /// Output CoNLL file
        #[arg(long)]
        output: PathBuf,
        /// Override the alif-variant set (a string of code points)
        #[arg(long)]
        alif_variants: Option<String>,
        /// Override the diacritic set (a string of code points)
        #[arg(long)]
        diacritics: Option<String>,
    },
    /// Train the biaffine mention detector
    TrainMd {
        /// Training CoNLL file
        #[arg(long)]
        train: PathBuf,
        /// Output checkpoint path
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the trained detector in high-recall mode and export mentions
    Detect {
        /// Detector checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// CoNLL file to detect over
        #[arg(long)]
        input: PathBuf,
        /// Output mention file
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the coreference model
    TrainCoref {
        /// Candidate supply: e2e, pipeline, or anneal
        #[arg(long, default_value = "e2e")]
        mode: String,
        /// Training CoNLL file
        #[arg(long)]
        train: PathBuf,
        /// Development CoNLL file for checkpoint selection
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Mention file from `detect` (required for pipeline/anneal)
        #[arg(long)]
        mentions: Option<PathBuf>,
        /// Output checkpoint path
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict coreference clusters and write them as a CoNLL file
    Predict {
        /// Coreference checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// Input CoNLL file
        #[arg(long)]
        input: PathBuf,
        /// Output CoNLL file with predicted clusters
        #[arg(long)]
        out: PathBuf,
        /// Mention file (required for pipeline-trained checkpoints)
        #[arg(long)]
        mentions: Option<PathBuf>,
    },
    /// Evaluate a checkpoint against the gold clusters of a split
    Evaluate {
        /// Coreference checkpoint
        #[arg(long)]
        checkpoint: PathBuf,
        /// CoNLL file with gold clusters
        #[arg(long)]
        input: PathBuf,
        /// Mention file (required for pipeline-trained checkpoints)
        #[arg(long)]
        mentions: Option<PathBuf>,
    },
    /// Score a response file against a key file
    Score {
        /// Gold (key) CoNLL file
        #[arg(long)]
        key: PathBuf,
        /// Predicted (response) CoNLL file
        #[arg(long)]
        response: PathBuf,
    },
}

fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_conll(BufReader::new(file))
}

fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_conll(docs, BufWriter::new(file))
}

fn save_params(path: &Path, params: &ParamStore, meta: &BTreeMap<String, String>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    params.save(BufWriter::new(file), meta)
}

fn load_params(path: &Path) -> Result<(ParamStore, BTreeMap<String, String>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ParamStore::load(BufReader::new(file))
}

fn load_coref_checkpoint(
    path: &Path,
    cfg: &RunConfig,
) -> Result<(ParamStore, TrainingMode, CorefModel, EmbeddingStack)> {
    let (params, meta) = load_params(path)?;
    if meta.get("kind").map(String::as_str) != Some("coref") {
        return Err(Error::Checkpoint(format!(
            "{} is not a coreference checkpoint",
            path.display()
        )));
    }
    let mode = meta
        .get("trained_mode")
        .map(String::as_str)
        .map(TrainingMode::parse)
        .transpose()?
        .unwrap_or(TrainingMode::EndToEnd);
    let stack = cfg.embedding_stack()?;
    let model = CorefModel::new(cfg.coref_config(), stack.fixed_dim());
    model.validate_params(&params)?;
    Ok((params, mode, model, stack))
}

fn mentions_for_fashion(
    mode: TrainingMode,
    mentions: &Option<PathBuf>,
    checkpoint: &Path,
) -> Result<Option<MentionFile>> {
    if !mode.inference_uses_pipeline() {
        return Ok(None);
    }
    match mentions {
        Some(path) => Ok(Some(MentionFile::load(path)?)),
        None => Err(Error::Config(format!(
            "checkpoint {} was trained in {} mode and is applied in pipeline fashion; pass --mentions",
            checkpoint.display(),
            mode.as_str()
        ))),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    log::info!("seed: {}", cfg.seed);
    log::info!(
        "resolved configuration:\n{}",
        toml::to_string(&cfg).unwrap_or_else(|_| "<unprintable>".into())
    );

    match cli.command {
        Command::Normalize {
            input,
            output,
            alif_variants,
            diacritics,
        } => {
            let rules = match (&alif_variants, &diacritics) {
                (None, None) => NormalizationRules::default(),
                (a, d) => {
                    let alif: Vec<char> = a
                        .as_deref()
                        .map(|s| s.chars().collect())
                        .unwrap_or_else(|| crate::arabic::DEFAULT_ALIF_VARIANTS.to_vec());
                    let marks: Vec<char> = match d.as_deref() {
                        Some(s) => s.chars().collect(),
                        None => {
                            let mut v: Vec<char> = ('\u{064B}'..='\u{065F}').collect();
                            v.push('\u{0670}');
                            v
                        }
                    };
                    NormalizationRules::new(alif, marks)?
                }
            };
            let docs = read_documents(&input)?;
            let normalized: Vec<Document> =
                docs.iter().map(|d| rules.normalize_document(d)).collect();
            write_documents(&output, &normalized)?;
            log::info!("normalized {} documents into {}", normalized.len(), output.display());
        }
        Command::TrainMd { train, out } => {
            let docs = read_documents(&train)?;
            let stack = cfg.embedding_stack()?;
            let detector = MentionDetector::new(cfg.detector_config(), stack.contextual_dim());
            let opts = DetectorTrainOptions {
                steps: cfg.detector_steps,
                learning_rate: cfg.learning_rate,
                seed: cfg.seed,
            };
            let outcome = train_detector(&detector, &docs, &stack, &opts)?;
            let mut meta = BTreeMap::new();
            meta.insert("kind".to_string(), "detector".to_string());
            save_params(&out, &outcome.params, &meta)?;
            log::info!(
                "detector trained for {} steps (final loss {:.4}), checkpoint at {}",
                opts.steps,
                outcome.losses.last().copied().unwrap_or(f64::NAN),
                out.display()
            );
        }
        Command::Detect {
            checkpoint,
            input,
            out,
        } => {
            let (params, meta) = load_params(&checkpoint)?;
            if meta.get("kind").map(String::as_str) != Some("detector") {
                return Err(Error::Checkpoint(format!(
                    "{} is not a detector checkpoint",
                    checkpoint.display()
                )));
            }
            let docs = read_documents(&input)?;
            let stack = cfg.embedding_stack()?;
            let detector = MentionDetector::new(cfg.detector_config(), stack.contextual_dim());
            detector.validate_params(&params)?;
            let mentions = export_mentions(&detector, &params, &stack, &docs)?;
            mentions.save(&out)?;
            log::info!(
                "wrote high-recall mentions for {} documents to {}",
                mentions.document_count(),
                out.display()
            );
        }
        Command::TrainCoref {
            mode,
            train,
            dev,
            mentions,
            out,
        } => {
            let mode = TrainingMode::parse(&mode)?;
            let train_set = read_documents(&train)?;
            let dev_set = dev.as_deref().map(read_documents).transpose()?;
            let mention_file = mentions.as_deref().map(MentionFile::load).transpose()?;
            let stack = cfg.embedding_stack()?;
            let model = CorefModel::new(cfg.coref_config(), stack.fixed_dim());
            let opts = cfg.train_options(mode);
            let outcome = train_coref(
                &model,
                &train_set,
                dev_set.as_deref(),
                &stack,
                mention_file.as_ref(),
                &opts,
            )?;
            let mut meta = outcome.meta(mode);
            meta.insert("kind".to_string(), "coref".to_string());
            save_params(&out, &outcome.params, &meta)?;
            if let Some(report) = &outcome.best_dev {
                log::info!(
                    "selected checkpoint from step {} (dev Avg F1 {:.1})",
                    outcome.best_step,
                    report.conll_avg
                );
            }
            log::info!("coreference checkpoint at {}", out.display());
        }
        Command::Predict {
            checkpoint,
            input,
            out,
            mentions,
        } => {
            let (params, mode, model, stack) = load_coref_checkpoint(&checkpoint, &cfg)?;
            let mention_file = mentions_for_fashion(mode, &mentions, &checkpoint)?;
            let docs = read_documents(&input)?;
            let predicted = predict_split(
                &model,
                &params,
                &stack,
                &docs,
                mention_file.as_ref(),
                mode.inference_uses_pipeline(),
            )?;
            write_documents(&out, &predicted)?;
            log::info!("predictions written to {}", out.display());
        }
        Command::Evaluate {
            checkpoint,
            input,
            mentions,
        } => {
            let (params, mode, model, stack) = load_coref_checkpoint(&checkpoint, &cfg)?;
            let mention_file = mentions_for_fashion(mode, &mentions, &checkpoint)?;
            let docs = read_documents(&input)?;
            let report = evaluate_split(
                &model,
                &params,
                &stack,
                &docs,
                mention_file.as_ref(),
                mode.inference_uses_pipeline(),
            )?;
            println!("{report}");
        }
        Command::Score { key, response } => {
            let report = score_files(&key, &response)?;
            println!("{report}");
        }
    }
    Ok(())
}

/// Parses arguments and runs one subcommand.
///
/// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
/// 3 numeric error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successful exits.
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_table() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.lstm_layers, 3);
        assert_eq!(cfg.lstm_size, 200);
        assert_eq!(cfg.lstm_dropout, 0.4);
        assert_eq!(cfg.ffnn_layers, 2);
        assert_eq!(cfg.ffnn_size, 150);
        assert_eq!(cfg.ffnn_dropout, 0.2);
        assert_eq!(cfg.cnn_filter_widths, vec![3, 4, 5]);
        assert_eq!(cfg.cnn_filter_size, 50);
        assert_eq!(cfg.char_embedding_size, 8);
        assert_eq!(cfg.fasttext_embedding_size, 300);
        assert_eq!(cfg.feature_embedding_size, 20);
        assert_eq!(cfg.bert_embedding_size, 768);
        assert_eq!(cfg.embedding_dropout, 0.5);
        assert_eq!(cfg.max_span_width, 30);
        assert_eq!(cfg.max_antecedents, 50);
        assert_eq!(cfg.mention_ratio, 0.4);
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.training_steps, 400_000);
    }

    #[test]
    fn help_lists_every_config_field() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let help = cmd.render_long_help().to_string();
        for flag in [
            "--lstm-layers",
            "--lstm-size",
            "--lstm-dropout",
            "--ffnn-layers",
            "--ffnn-size",
            "--ffnn-dropout",
            "--cnn-filter-widths",
            "--cnn-filter-size",
            "--char-embedding-size",
            "--fasttext-embedding-size",
            "--feature-embedding-size",
            "--bert-embedding-size",
            "--embedding-dropout",
            "--max-span-width",
            "--max-antecedents",
            "--mention-ratio",
            "--learning-rate",
            "--training-steps",
            "--detector-steps",
            "--eval-interval",
            "--seed",
            "--second-order",
            "--char-vocab-size",
            "--distance-in-tokens",
            "--detector-proj-dim",
            "--contextual-embeddings",
            "--static-embeddings",
            "--use-static-embeddings",
        ] {
            assert!(help.contains(flag), "help must document {flag}\n{help}");
        }
    }

    #[test]
    fn overrides_beat_config_file() {
        let mut cfg = RunConfig::default();
        cfg.seed = 5;
        let overrides = Overrides {
            seed: Some(9),
            lstm_size: Some(32),
            ..Overrides::default()
        };
        overrides.apply(&mut cfg);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.lstm_size, 32);
        assert_eq!(cfg.lstm_layers, 3);
    }

    #[test]
    fn validate_rejects_bad_ratio() {
        let mut cfg = RunConfig::default();
        cfg.mention_ratio = 0.0;
        assert!(cfg.validate().is_err());
        cfg.mention_ratio = 1.5;
        assert!(cfg.validate().is_err());
        cfg.mention_ratio = 1.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_flag_exits_with_usage_code() {
        assert_eq!(run(["arcoref", "--no-such-flag"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["arcoref", "--help"]), 0);
    }
}
