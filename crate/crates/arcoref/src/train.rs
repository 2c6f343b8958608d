//! Coreference training orchestration: plain end-to-end, plain pipeline,
//! and the annealed schedule that linearly shifts candidate-mention supply
//! from the model's own pruner to an external detector as training
//! progresses. Models trained with external candidates are also evaluated
//! in that pipeline fashion.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conll::Document;
use crate::detector::MentionFile;
use crate::embed::EmbeddingStack;
use crate::error::{Error, Result};
use crate::metrics::{MetricAccumulator, MetricReport};
use crate::model::{CandidateSource, CorefModel};
use crate::nn::adam::AdamState;
use crate::nn::params::ParamStore;
use crate::nn::session::Session;

/// Candidate-supply strategy over the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMode {
    EndToEnd,
    Pipeline,
    Annealing,
}

impl TrainingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainingMode::EndToEnd => "e2e",
            TrainingMode::Pipeline => "pipeline",
            TrainingMode::Annealing => "anneal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "e2e" => Ok(TrainingMode::EndToEnd),
            "pipeline" => Ok(TrainingMode::Pipeline),
            "anneal" => Ok(TrainingMode::Annealing),
            other => Err(Error::Config(format!(
                "unknown training mode {other:?} (expected e2e, pipeline, or anneal)"
            ))),
        }
    }

    /// Whether inference for a model trained this way uses external
    /// candidates.
    pub fn inference_uses_pipeline(&self) -> bool {
        !matches!(self, TrainingMode::EndToEnd)
    }
}

/// The fraction of steps drawing external candidates at step `n` of `total`.
pub fn pipeline_ratio(mode: TrainingMode, step: usize, total_steps: usize) -> f64 {
    match mode {
        TrainingMode::EndToEnd => 0.0,
        TrainingMode::Pipeline => 1.0,
        TrainingMode::Annealing => step as f64 / total_steps as f64,
    }
}

/// Where this step's candidate mentions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateChoice {
    EndToEnd,
    External,
}

/// One draw of the annealing schedule: external candidates when the draw
/// falls at or below the pipeline ratio. A ratio of exactly 0 never goes
/// external and a ratio of 1 always does.
pub fn choose_candidate_source(
    step: usize,
    total_steps: usize,
    draw: f64,
) -> Result<CandidateChoice> {
    if total_steps == 0 {
        return Err(Error::Config("total training steps must be positive".into()));
    }
    let ratio = step as f64 / total_steps as f64;
    if ratio > 0.0 && draw <= ratio {
        Ok(CandidateChoice::External)
    } else {
        Ok(CandidateChoice::EndToEnd)
    }
}

/// Options for one training run.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub mode: TrainingMode,
    pub total_steps: usize,
    /// Evaluate on the dev split every this many steps (checkpoint selection).
    pub eval_interval: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            mode: TrainingMode::EndToEnd,
            total_steps: 2_000,
            eval_interval: 1_000,
            learning_rate: 1e-3,
            seed: 1,
        }
    }
}

/// Result of a training run: the selected parameters and the loss history.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    /// Step at which the selected parameters were snapshotted.
    pub best_step: usize,
    /// Dev report of the selected parameters, when a dev split was given.
    pub best_dev: Option<MetricReport>,
    pub losses: Vec<f64>,
    /// Fraction of steps that drew external candidates.
    pub external_fraction: f64,
}

impl TrainOutcome {
    /// Checkpoint metadata recording how the model was trained.
    pub fn meta(&self, mode: TrainingMode) -> BTreeMap<String, String> {
        let mut meta = BTreeMap::new();
        meta.insert("trained_mode".to_string(), mode.as_str().to_string());
        meta
    }
}

fn external_spans_for<'a>(
    external: Option<&'a MentionFile>,
    doc: &Document,
) -> Result<Vec<crate::conll::Span>> {
    external
        .and_then(|f| f.spans_for(&doc.doc_id, doc.part_id))
        .ok_or_else(|| Error::MissingCandidates {
            doc_id: doc.doc_id.clone(),
            part_id: doc.part_id,
        })
}

fn require_candidates(external: Option<&MentionFile>, docs: &[Document]) -> Result<()> {
    for doc in docs {
        external_spans_for(external, doc)?;
    }
    Ok(())
}

/// Trains the coreference model.
///
/// In pipeline and annealing modes every training document (and, when a dev
/// split is given, every dev document) must have external candidates.
pub fn train_coref(
    model: &CorefModel,
    train_docs: &[Document],
    dev_docs: Option<&[Document]>,
    stack: &EmbeddingStack,
    external: Option<&MentionFile>,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if train_docs.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    if opts.total_steps == 0 {
        return Err(Error::Config("total training steps must be positive".into()));
    }
    if opts.mode != TrainingMode::EndToEnd {
        require_candidates(external, train_docs)?;
        if let Some(dev) = dev_docs {
            require_candidates(external, dev)?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut store = ParamStore::new();
    model.init_params(&mut store, &mut rng);
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    order.shuffle(&mut rng);

    let mut adam = AdamState::new(opts.learning_rate);
    let mut losses = Vec::with_capacity(opts.total_steps);
    let mut external_steps = 0usize;
    let mut best: Option<(f64, usize, ParamStore, MetricReport)> = None;

    for step in 0..opts.total_steps {
        // Every mode consumes the same randomness per step, so runs that
        // differ only in candidate supply stay comparable under one seed.
        let step_seed = rng.random::<u64>();
        let draw = rng.random::<f64>();
        let ratio = pipeline_ratio(opts.mode, step, opts.total_steps);
        let choice = if ratio > 0.0 && draw <= ratio {
            CandidateChoice::External
        } else {
            CandidateChoice::EndToEnd
        };

        let doc = &train_docs[order[step % order.len()]];
        let external_spans;
        let source = match choice {
            CandidateChoice::EndToEnd => CandidateSource::EndToEnd,
            CandidateChoice::External => {
                external_steps += 1;
                external_spans = external_spans_for(external, doc)?;
                CandidateSource::External(&external_spans)
            }
        };

        let mut sess = Session::train(&store, step_seed);
        let pass = model.forward(&mut sess, stack, doc, source, true)?;
        let loss = pass.loss.expect("training pass computes the loss");
        losses.push(sess.graph.value(loss).item());
        let grads = sess.graph.backward(loss);
        let param_grads = sess.param_grads(&grads);
        adam.apply(&mut store, &param_grads)?;

        if let Some(dev) = dev_docs {
            let due = (step + 1) % opts.eval_interval == 0 || step + 1 == opts.total_steps;
            if due {
                let report = evaluate_split(
                    model,
                    &store,
                    stack,
                    dev,
                    external,
                    opts.mode.inference_uses_pipeline(),
                )?;
                let better = best
                    .as_ref()
                    .map_or(true, |(avg, ..)| report.conll_avg > *avg);
                if better {
                    best = Some((report.conll_avg, step + 1, store.clone(), report));
                }
            }
        }
    }

    let external_fraction = external_steps as f64 / opts.total_steps as f64;
    match best {
        Some((_, best_step, params, report)) => Ok(TrainOutcome {
            params,
            best_step,
            best_dev: Some(report),
            losses,
            external_fraction,
        }),
        None => Ok(TrainOutcome {
            params: store,
            best_step: opts.total_steps,
            best_dev: None,
            losses,
            external_fraction,
        }),
    }
}

/// Runs inference over a split and scores predictions against the gold
/// clusters. With `pipeline_fashion`, candidates come from the mention file
/// (an error names any document that has none).
pub fn evaluate_split(
    model: &CorefModel,
    store: &ParamStore,
    stack: &EmbeddingStack,
    docs: &[Document],
    external: Option<&MentionFile>,
    pipeline_fashion: bool,
) -> Result<MetricReport> {
    model.validate_params(store)?;
    let mut acc = MetricAccumulator::new();
    for doc in docs {
        let predicted = if pipeline_fashion {
            let spans = external_spans_for(external, doc)?;
            model.predict(store, stack, doc, Some(&spans))?
        } else {
            model.predict(store, stack, doc, None)?
        };
        acc.add_document(&doc.gold_clusters, &predicted);
    }
    Ok(acc.report())
}

/// Predicts cluster sets for a split, returning documents whose gold
/// clusters are replaced by the predictions (ready for [`crate::conll::write_conll`]).
pub fn predict_split(
    model: &CorefModel,
    store: &ParamStore,
    stack: &EmbeddingStack,
    docs: &[Document],
    external: Option<&MentionFile>,
    pipeline_fashion: bool,
) -> Result<Vec<Document>> {
    model.validate_params(store)?;
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        let predicted = if pipeline_fashion {
            let spans = external_spans_for(external, doc)?;
            model.predict(store, stack, doc, Some(&spans))?
        } else {
            model.predict(store, stack, doc, None)?
        };
        let mut copy = doc.clone();
        copy.gold_clusters = predicted;
        out.push(copy);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CorefConfig;
    use crate::synth::synthetic_corpus;

    #[test]
    fn ratio_endpoints() {
        assert_eq!(pipeline_ratio(TrainingMode::Annealing, 0, 100), 0.0);
        assert_eq!(pipeline_ratio(TrainingMode::Annealing, 100, 100), 1.0);
        assert_eq!(pipeline_ratio(TrainingMode::EndToEnd, 50, 100), 0.0);
        assert_eq!(pipeline_ratio(TrainingMode::Pipeline, 0, 100), 1.0);
    }

    #[test]
    fn ratio_monotone() {
        let mut prev = -1.0;
        for n in 0..=50 {
            let r = pipeline_ratio(TrainingMode::Annealing, n, 50);
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn schedule_step_zero_never_external() {
        for draw in [0.0, 0.1, 0.999] {
            assert_eq!(
                choose_candidate_source(0, 100, draw).unwrap(),
                CandidateChoice::EndToEnd
            );
        }
    }

    #[test]
    fn schedule_final_step_always_external() {
        for draw in [0.0, 0.5, 0.999_999] {
            assert_eq!(
                choose_candidate_source(100, 100, draw).unwrap(),
                CandidateChoice::External
            );
        }
    }

    #[test]
    fn schedule_zero_total_is_config_error() {
        assert!(choose_candidate_source(0, 0, 0.5).is_err());
    }

    #[test]
    fn mode_strings_round_trip() {
        for mode in [
            TrainingMode::EndToEnd,
            TrainingMode::Pipeline,
            TrainingMode::Annealing,
        ] {
            assert_eq!(TrainingMode::parse(mode.as_str()).unwrap(), mode);
        }
        assert!(TrainingMode::parse("other").is_err());
    }

    #[test]
    fn pipeline_mode_requires_candidates() {
        let docs = synthetic_corpus(2, 2);
        let stack = EmbeddingStack::hashed(8);
        let model = CorefModel::new(CorefConfig::small(), stack.fixed_dim());
        let opts = TrainOptions {
            mode: TrainingMode::Pipeline,
            total_steps: 2,
            ..TrainOptions::default()
        };
        let err = train_coref(&model, &docs, None, &stack, None, &opts).unwrap_err();
        assert!(
            err.to_string().contains("synth/doc0"),
            "error should name the document: {err}"
        );
    }

    #[test]
    fn short_e2e_run_is_reproducible() {
        let docs = synthetic_corpus(4, 2);
        let stack = EmbeddingStack::hashed(8);
        let mut cfg = CorefConfig::small();
        cfg.lstm_hidden = 8;
        cfg.ffnn_size = 8;
        let model = CorefModel::new(cfg, stack.fixed_dim());
        let opts = TrainOptions {
            total_steps: 5,
            seed: 17,
            ..TrainOptions::default()
        };
        let a = train_coref(&model, &docs, None, &stack, None, &opts).unwrap();
        let b = train_coref(&model, &docs, None, &stack, None, &opts).unwrap();
        assert_eq!(a.losses, b.losses);
        for (name, t) in a.params.iter() {
            let other = b.params.get(name).unwrap();
            assert_eq!(t.data(), other.data(), "parameter {name} differs");
        }
    }
}
