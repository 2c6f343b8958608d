//! Separately trained biaffine mention detector.
//!
//! Tokens are encoded by the detector's own bidirectional LSTM over
//! contextual embeddings only; start-role and end-role projections feed a
//! biaffine scorer over every in-sentence span up to the width limit.
//! Training is per-span sigmoid cross-entropy against the gold mention set.
//! The high-recall output mode keeps top spans in proportion to the token
//! count, mirroring the coreference model's own pruning.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conll::{Document, Span};
use crate::embed::EmbeddingStack;
use crate::error::{Error, Result};
use crate::model::{enumerate_spans, pruned_count};
use crate::nn::adam::AdamState;
use crate::nn::graph::VarId;
use crate::nn::layers::{
    bilstm, bilstm_shapes, ffnn, ffnn_shapes, init_shapes, validate_shapes, BiLstmSpec, FfnnSpec,
};
use crate::nn::params::ParamStore;
use crate::nn::session::{site_tag, Session};
use crate::nn::tensor::Tensor;

/// Hyperparameters of the detector.
#[derive(Debug, Clone)]
pub struct DetectorConfig {
    pub max_span_width: usize,
    /// High-recall output keeps `max(1, floor(ratio * tokens))` spans.
    pub ratio: f64,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub lstm_dropout: f64,
    /// Start/end role projections: one hidden layer to this dimension.
    pub proj_dim: usize,
    pub proj_hidden: usize,
    pub ffnn_dropout: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_span_width: 30,
            ratio: 0.4,
            lstm_layers: 3,
            lstm_hidden: 200,
            lstm_dropout: 0.4,
            proj_dim: 150,
            proj_hidden: 150,
            ffnn_dropout: 0.2,
        }
    }
}

impl DetectorConfig {
    /// Desk-scale configuration for synthetic corpora.
    pub fn small() -> Self {
        DetectorConfig {
            max_span_width: 4,
            ratio: 0.4,
            lstm_layers: 1,
            lstm_hidden: 20,
            lstm_dropout: 0.05,
            proj_dim: 20,
            proj_hidden: 20,
            ffnn_dropout: 0.05,
        }
    }
}

/// Spans with detector scores, sorted by score descending (ties toward the
/// earlier span); spans are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMentionList {
    entries: Vec<(Span, f64)>,
}

impl ScoredMentionList {
    fn new(mut entries: Vec<(Span, f64)>) -> Self {
        entries.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("detector scores are finite")
                .then(a.0.cmp(&b.0))
        });
        ScoredMentionList { entries }
    }

    pub fn entries(&self) -> &[(Span, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The spans alone, re-sorted into document order.
    pub fn spans_in_document_order(&self) -> Vec<Span> {
        let mut spans: Vec<Span> = self.entries.iter().map(|(s, _)| *s).collect();
        spans.sort();
        spans
    }
}

/// The biaffine detector: configuration plus the contextual dimension its
/// parameters were built for.
#[derive(Debug, Clone)]
pub struct MentionDetector {
    pub cfg: DetectorConfig,
    contextual_dim: usize,
}

impl MentionDetector {
    pub fn new(cfg: DetectorConfig, contextual_dim: usize) -> Self {
        MentionDetector {
            cfg,
            contextual_dim,
        }
    }

    fn encoder_spec(&self) -> BiLstmSpec {
        BiLstmSpec {
            input_dim: self.contextual_dim,
            hidden_size: self.cfg.lstm_hidden,
            layers: self.cfg.lstm_layers,
            dropout: self.cfg.lstm_dropout,
        }
    }

    fn proj_spec(&self) -> FfnnSpec {
        FfnnSpec {
            input_dim: 2 * self.cfg.lstm_hidden,
            hidden_layers: 1,
            hidden_size: self.cfg.proj_hidden,
            output_dim: self.cfg.proj_dim,
            dropout: self.cfg.ffnn_dropout,
        }
    }

    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.cfg.proj_dim;
        let mut shapes = Vec::new();
        shapes.extend(bilstm_shapes("md.encoder", &self.encoder_spec()));
        shapes.extend(ffnn_shapes("md.start", &self.proj_spec()));
        shapes.extend(ffnn_shapes("md.end", &self.proj_spec()));
        shapes.push(("md.biaffine.u".into(), vec![d, d]));
        shapes.push(("md.biaffine.w".into(), vec![2 * d]));
        shapes.push(("md.biaffine.b".into(), vec![1]));
        shapes
    }

    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        init_shapes(store, rng, &self.param_shapes());
    }

    pub fn validate_params(&self, store: &ParamStore) -> Result<()> {
        validate_shapes(store, &self.param_shapes())
    }

    fn check_stack(&self, stack: &EmbeddingStack) -> Result<()> {
        if stack.contextual_dim() != self.contextual_dim {
            return Err(Error::Dimension {
                expected: format!("{}", self.contextual_dim),
                got: format!("{}", stack.contextual_dim()),
                context: "contextual embedding dimension vs detector configuration".into(),
            });
        }
        Ok(())
    }

    /// Scores every in-sentence span up to the width limit:
    /// `proj_s(x_b)^T U proj_e(x_e) + w^T [proj_s(x_b); proj_e(x_e)] + b`.
    pub fn score_spans(
        &self,
        sess: &mut Session,
        stack: &EmbeddingStack,
        doc: &Document,
    ) -> Result<Vec<(Span, VarId)>> {
        self.check_stack(stack)?;
        if doc.is_empty() {
            return Err(Error::Config(format!(
                "document {} part {} has no tokens",
                doc.doc_id, doc.part_id
            )));
        }
        let encoder_spec = self.encoder_spec();
        let mut inputs = Vec::with_capacity(doc.len());
        for t in 0..doc.len() {
            inputs.push(sess.input(Tensor::vector(stack.contextual_vector(doc, t)?)));
        }
        let mut token_reprs = Vec::with_capacity(doc.len());
        for sentence in doc.sentences() {
            token_reprs.extend(bilstm(
                sess,
                "md.encoder",
                &encoder_spec,
                &inputs[sentence.clone()],
                sentence.start,
            )?);
        }

        let proj_spec = self.proj_spec();
        let starts: Vec<VarId> = token_reprs
            .iter()
            .enumerate()
            .map(|(t, &x)| ffnn(sess, "md.start", &proj_spec, x, site_tag("md.start", &[t])))
            .collect();
        let ends: Vec<VarId> = token_reprs
            .iter()
            .enumerate()
            .map(|(t, &x)| ffnn(sess, "md.end", &proj_spec, x, site_tag("md.end", &[t])))
            .collect();

        let u = sess.param("md.biaffine.u");
        let w = sess.param("md.biaffine.w");
        let b = sess.param("md.biaffine.b");
        // U . proj_e is shared by every span ending at the same token.
        let u_ends: Vec<VarId> = ends.iter().map(|&e| sess.graph.matvec(u, e)).collect();

        let spans = enumerate_spans(&doc.sentences(), self.cfg.max_span_width);
        let scored = spans
            .into_iter()
            .map(|span| {
                let bilinear = sess.graph.dot(starts[span.start], u_ends[span.end]);
                let both = sess.graph.concat(&[starts[span.start], ends[span.end]]);
                let linear = sess.graph.dot(w, both);
                let partial = sess.graph.add(bilinear, linear);
                (span, sess.graph.add(partial, b))
            })
            .collect();
        Ok(scored)
    }

    /// Sigmoid cross-entropy against the gold mention set, summed over all
    /// candidate spans of one document.
    fn document_loss(
        &self,
        sess: &mut Session,
        stack: &EmbeddingStack,
        doc: &Document,
    ) -> Result<VarId> {
        let scored = self.score_spans(sess, stack, doc)?;
        let gold: std::collections::HashSet<Span> =
            doc.gold_clusters.mentions().into_iter().collect();
        let per_span: Vec<VarId> = scored
            .into_iter()
            .map(|(span, score)| {
                // softplus(s) - y * s
                let softplus = sess.graph.softplus(score);
                if gold.contains(&span) {
                    let neg = sess.graph.affine(score, -1.0, 0.0);
                    sess.graph.add(softplus, neg)
                } else {
                    softplus
                }
            })
            .collect();
        let stacked = sess.graph.concat(&per_span);
        Ok(sess.graph.sum(stacked))
    }

    /// Top spans in proportion to the token count.
    pub fn detect_high_recall(
        &self,
        store: &ParamStore,
        stack: &EmbeddingStack,
        doc: &Document,
    ) -> Result<ScoredMentionList> {
        let mut sess = Session::eval(store);
        let scored = self.score_spans(&mut sess, stack, doc)?;
        let spans: Vec<Span> = scored.iter().map(|(s, _)| *s).collect();
        let values: Vec<f64> = scored
            .iter()
            .map(|(_, id)| sess.graph.value(*id).item())
            .collect();
        let k = pruned_count(doc.len(), self.cfg.ratio, spans.len());
        let mut order: Vec<usize> = (0..spans.len()).collect();
        order.sort_by(|&a, &b| {
            values[b]
                .partial_cmp(&values[a])
                .expect("detector scores are finite")
                .then(spans[a].cmp(&spans[b]))
        });
        Ok(ScoredMentionList::new(
            order
                .into_iter()
                .take(k)
                .map(|i| (spans[i], values[i]))
                .collect(),
        ))
    }

    /// Spans whose score clears a threshold (0 is the sigmoid midpoint);
    /// the high-F1 style output.
    pub fn detect_threshold(
        &self,
        store: &ParamStore,
        stack: &EmbeddingStack,
        doc: &Document,
        threshold: f64,
    ) -> Result<ScoredMentionList> {
        let mut sess = Session::eval(store);
        let scored = self.score_spans(&mut sess, stack, doc)?;
        Ok(ScoredMentionList::new(
            scored
                .into_iter()
                .filter_map(|(span, id)| {
                    let v = sess.graph.value(id).item();
                    (v > threshold).then_some((span, v))
                })
                .collect(),
        ))
    }
}

/// Training options for the detector.
#[derive(Debug, Clone)]
pub struct DetectorTrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for DetectorTrainOptions {
    fn default() -> Self {
        DetectorTrainOptions {
            steps: 500,
            learning_rate: 1e-3,
            seed: 1,
        }
    }
}

/// Outcome of detector training.
#[derive(Debug)]
pub struct DetectorTrainOutcome {
    pub params: ParamStore,
    pub losses: Vec<f64>,
}

/// Trains the detector on a corpus, one document per step, cycling over a
/// shuffled order.
pub fn train_detector(
    detector: &MentionDetector,
    corpus: &[Document],
    stack: &EmbeddingStack,
    opts: &DetectorTrainOptions,
) -> Result<DetectorTrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::Config("detector training corpus is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut store = ParamStore::new();
    detector.init_params(&mut store, &mut rng);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);

    let mut adam = AdamState::new(opts.learning_rate);
    let mut losses = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let step_seed = rng.random::<u64>();
        let doc = &corpus[order[step % order.len()]];
        let mut sess = Session::train(&store, step_seed);
        let loss = detector.document_loss(&mut sess, stack, doc)?;
        losses.push(sess.graph.value(loss).item());
        let grads = sess.graph.backward(loss);
        let param_grads = sess.param_grads(&grads);
        adam.apply(&mut store, &param_grads)?;
    }
    Ok(DetectorTrainOutcome {
        params: store,
        losses,
    })
}

// ---------------------------------------------------------------------------
// Mention file
// ---------------------------------------------------------------------------

/// Detector output on disk: one line per mention,
/// `doc_id<TAB>part<TAB>start<TAB>end<TAB>score`, documents contiguous.
#[derive(Debug, Clone, Default)]
pub struct MentionFile {
    records: Vec<((String, usize), Vec<(Span, f64)>)>,
    index: HashMap<(String, usize), usize>,
}

impl MentionFile {
    pub fn new() -> Self {
        MentionFile::default()
    }

    pub fn insert(&mut self, doc_id: &str, part_id: usize, mentions: Vec<(Span, f64)>) {
        let key = (doc_id.to_string(), part_id);
        match self.index.get(&key) {
            Some(&i) => self.records[i].1 = mentions,
            None => {
                self.index.insert(key.clone(), self.records.len());
                self.records.push((key, mentions));
            }
        }
    }

    pub fn get(&self, doc_id: &str, part_id: usize) -> Option<&[(Span, f64)]> {
        self.index
            .get(&(doc_id.to_string(), part_id))
            .map(|&i| self.records[i].1.as_slice())
    }

    /// Candidate spans for one document, in document order.
    pub fn spans_for(&self, doc_id: &str, part_id: usize) -> Option<Vec<Span>> {
        self.get(doc_id, part_id).map(|ms| {
            let mut spans: Vec<Span> = ms.iter().map(|(s, _)| *s).collect();
            spans.sort();
            spans
        })
    }

    pub fn document_count(&self) -> usize {
        self.records.len()
    }

    pub fn write(&self, mut writer: impl Write) -> Result<()> {
        let err = |e: std::io::Error| Error::Serialize(format!("mention file write failed: {e}"));
        for ((doc_id, part), mentions) in &self.records {
            for (span, score) in mentions {
                writeln!(writer, "{doc_id}\t{part}\t{}\t{}\t{score}", span.start, span.end)
                    .map_err(err)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(file)
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut out = MentionFile::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("I/O error: {e}"),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("mention line has {} fields, expected 5", cols.len()),
                });
            }
            let parse_num = |s: &str, what: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad {what} {s:?}"),
                })
            };
            let part = parse_num(cols[1], "part")?;
            let start = parse_num(cols[2], "start")?;
            let end = parse_num(cols[3], "end")?;
            if start > end {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("span start {start} after end {end}"),
                });
            }
            let score: f64 = cols[4].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad score {:?}", cols[4]),
            })?;
            let key = (cols[0].to_string(), part);
            match out.index.get(&key) {
                Some(&idx) => out.records[idx].1.push((Span::new(start, end), score)),
                None => {
                    out.index.insert(key.clone(), out.records.len());
                    out.records.push((key, vec![(Span::new(start, end), score)]));
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }

    /// Checks that every span fits inside its document.
    pub fn validate_against(&self, docs: &[Document]) -> Result<()> {
        let lengths: HashMap<(String, usize), usize> = docs
            .iter()
            .map(|d| ((d.doc_id.clone(), d.part_id), d.len()))
            .collect();
        for ((doc_id, part), mentions) in &self.records {
            let Some(&len) = lengths.get(&(doc_id.clone(), *part)) else {
                continue;
            };
            for (span, _) in mentions {
                if span.end >= len {
                    return Err(Error::Config(format!(
                        "mention [{}, {}] out of range for document {doc_id} part {part} of length {len}",
                        span.start, span.end
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Runs high-recall detection over a corpus and collects the mention file.
pub fn export_mentions(
    detector: &MentionDetector,
    store: &ParamStore,
    stack: &EmbeddingStack,
    corpus: &[Document],
) -> Result<MentionFile> {
    let mut out = MentionFile::new();
    for doc in corpus {
        let detected = detector.detect_high_recall(store, stack, doc)?;
        out.insert(&doc.doc_id, doc.part_id, detected.entries().to_vec());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conll::{ClusterSet, Token};

    fn doc_of(words: &[&str]) -> Document {
        Document {
            doc_id: "toy".into(),
            part_id: 0,
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token::new(*w, 0, i))
                .collect(),
            gold_clusters: ClusterSet::empty(),
        }
    }

    fn small_detector() -> (MentionDetector, EmbeddingStack, ParamStore) {
        let stack = EmbeddingStack::hashed(12);
        let det = MentionDetector::new(DetectorConfig::small(), stack.contextual_dim());
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        det.init_params(&mut store, &mut rng);
        (det, stack, store)
    }

    #[test]
    fn zero_parameters_zero_scores() {
        let stack = EmbeddingStack::hashed(12);
        let det = MentionDetector::new(DetectorConfig::small(), 12);
        let mut store = ParamStore::new();
        for (name, shape) in det.param_shapes() {
            store.insert(name, Tensor::zeros(&shape));
        }
        let mut sess = Session::eval(&store);
        let scored = det.score_spans(&mut sess, &stack, &doc_of(&["a", "b", "c"])).unwrap();
        for (_, id) in scored {
            assert_eq!(sess.graph.value(id).item(), 0.0);
        }
    }

    #[test]
    fn biaffine_identity_dot_product() {
        // U = I, w = 0, b = 0, and both projections reduced to a copy of a
        // shared orthonormal-ish vector: the score is the dot product.
        let cfg = DetectorConfig {
            max_span_width: 2,
            ratio: 0.4,
            lstm_layers: 1,
            lstm_hidden: 2,
            lstm_dropout: 0.0,
            proj_dim: 4,
            proj_hidden: 4,
            ffnn_dropout: 0.0,
        };
        let det = MentionDetector::new(cfg, 3);
        let mut store = ParamStore::new();
        for (name, shape) in det.param_shapes() {
            store.insert(name, Tensor::zeros(&shape));
        }
        store.insert("md.biaffine.u", Tensor::identity(4));
        // Both role projections: bias-only output = unit basis vector.
        let mut out_bias = Tensor::zeros(&[4]);
        out_bias.data_mut()[0] = 1.0;
        store.insert("md.start.out.bias", out_bias.clone());
        store.insert("md.end.out.bias", out_bias);
        let stack = EmbeddingStack::hashed(3);
        let mut sess = Session::eval(&store);
        let scored = det.score_spans(&mut sess, &stack, &doc_of(&["a", "b"])).unwrap();
        for (_, id) in scored {
            let v = sess.graph.value(id).item();
            assert!((v - 1.0).abs() < 1e-12, "score {v}");
        }
    }

    #[test]
    fn high_recall_counts() {
        let (det, stack, store) = small_detector();
        let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let doc = doc_of(&refs);
        let list = det.detect_high_recall(&store, &stack, &doc).unwrap();
        assert_eq!(list.len(), 4); // floor(0.4 * 10)
        // sorted descending
        for pair in list.entries().windows(2) {
            assert!(pair[0].1 >= pair[1].1);
        }
        // and a subset of the enumerated spans
        let all = enumerate_spans(&doc.sentences(), det.cfg.max_span_width);
        for (span, _) in list.entries() {
            assert!(all.contains(span));
        }
    }

    #[test]
    fn tiny_doc_keeps_one() {
        let (det, stack, store) = small_detector();
        let doc = doc_of(&["a", "b"]);
        let list = det.detect_high_recall(&store, &stack, &doc).unwrap();
        assert_eq!(list.len(), 1);
    }

    #[test]
    fn detection_deterministic() {
        let (det, stack, store) = small_detector();
        let doc = doc_of(&["a", "b", "c", "d"]);
        let a = det.detect_high_recall(&store, &stack, &doc).unwrap();
        let b = det.detect_high_recall(&store, &stack, &doc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_corpus_rejected() {
        let (det, stack, _) = small_detector();
        let err = train_detector(&det, &[], &stack, &DetectorTrainOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn mention_file_round_trip() {
        let mut file = MentionFile::new();
        file.insert(
            "doc/a",
            0,
            vec![(Span::new(0, 0), 1.5), (Span::new(2, 4), -0.25)],
        );
        file.insert("doc/b", 3, vec![(Span::new(1, 1), 0.125)]);
        let mut buf = Vec::new();
        file.write(&mut buf).unwrap();
        let loaded = MentionFile::read(buf.as_slice()).unwrap();
        assert_eq!(loaded.get("doc/a", 0), file.get("doc/a", 0));
        assert_eq!(loaded.get("doc/b", 3), file.get("doc/b", 3));
        assert_eq!(loaded.document_count(), 2);
    }

    #[test]
    fn empty_corpus_empty_file() {
        let (det, stack, store) = small_detector();
        let file = export_mentions(&det, &store, &stack, &[]).unwrap();
        assert_eq!(file.document_count(), 0);
        let mut buf = Vec::new();
        file.write(&mut buf).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn validate_catches_out_of_range() {
        let mut file = MentionFile::new();
        file.insert("toy", 0, vec![(Span::new(0, 9), 1.0)]);
        let doc = doc_of(&["a", "b"]);
        assert!(file.validate_against(&[doc]).is_err());
    }

    #[test]
    fn recall_monotone_in_ratio() {
        let (mut det, stack, store) = small_detector();
        let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        let doc = doc_of(&refs);
        det.cfg.ratio = 0.2;
        let small: std::collections::HashSet<Span> = det
            .detect_high_recall(&store, &stack, &doc)
            .unwrap()
            .spans_in_document_order()
            .into_iter()
            .collect();
        det.cfg.ratio = 0.6;
        let large: std::collections::HashSet<Span> = det
            .detect_high_recall(&store, &stack, &doc)
            .unwrap()
            .spans_in_document_order()
            .into_iter()
            .collect();
        assert!(small.is_subset(&large));
    }
}
