//! Span-ranking coreference: span enumeration, head attention, mention
//! scoring and pruning, coarse-to-fine antecedent scoring against an
//! artificial no-link antecedent ε, optional second-order refinement of the
//! mention vectors, the marginalized antecedent loss, and cluster decoding.

use std::collections::HashMap;
use std::ops::Range;

use rand_chacha::ChaCha8Rng;

use crate::conll::{ClusterSet, Document, Span};
use crate::embed::EmbeddingStack;
use crate::error::{Error, Result};
use crate::nn::graph::VarId;
use crate::nn::layers::{
    bilstm, bilstm_shapes, char_cnn, char_cnn_shapes, ffnn, ffnn_shapes, init_shapes, BiLstmSpec,
    CharCnnSpec, FfnnSpec,
};
use crate::nn::params::ParamStore;
use crate::nn::session::{site_tag, Session};
use crate::nn::tensor::Tensor;

/// Hyperparameters of the coreference model.
#[derive(Debug, Clone)]
pub struct CorefConfig {
    pub max_span_width: usize,
    pub mention_ratio: f64,
    pub max_antecedents: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub lstm_dropout: f64,
    pub ffnn_layers: usize,
    pub ffnn_size: usize,
    pub ffnn_dropout: f64,
    pub char_vocab_size: usize,
    pub char_dim: usize,
    pub char_filter_widths: Vec<usize>,
    pub char_filters: usize,
    pub feature_dim: usize,
    pub embedding_dropout: f64,
    pub second_order: bool,
    /// Measure the antecedent distance feature in tokens instead of
    /// intervening mentions.
    pub distance_in_tokens: bool,
}

impl Default for CorefConfig {
    fn default() -> Self {
        CorefConfig {
            max_span_width: 30,
            mention_ratio: 0.4,
            max_antecedents: 50,
            lstm_layers: 3,
            lstm_hidden: 200,
            lstm_dropout: 0.4,
            ffnn_layers: 2,
            ffnn_size: 150,
            ffnn_dropout: 0.2,
            char_vocab_size: 4099,
            char_dim: 8,
            char_filter_widths: vec![3, 4, 5],
            char_filters: 50,
            feature_dim: 20,
            embedding_dropout: 0.5,
            second_order: true,
            distance_in_tokens: false,
        }
    }
}

impl CorefConfig {
    /// A configuration small enough to train in seconds on synthetic corpora.
    pub fn small() -> Self {
        CorefConfig {
            max_span_width: 4,
            mention_ratio: 0.4,
            max_antecedents: 50,
            lstm_layers: 1,
            lstm_hidden: 24,
            lstm_dropout: 0.05,
            ffnn_layers: 1,
            ffnn_size: 32,
            ffnn_dropout: 0.05,
            char_vocab_size: 257,
            char_dim: 4,
            char_filter_widths: vec![2, 3],
            char_filters: 8,
            feature_dim: 8,
            embedding_dropout: 0.05,
            second_order: true,
            distance_in_tokens: false,
        }
    }

    pub fn char_output_dim(&self) -> usize {
        self.char_filter_widths.len() * self.char_filters
    }

    pub fn token_repr_dim(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Dimension of M_i = [x_start; x_end; head; width feature].
    pub fn mention_repr_dim(&self) -> usize {
        3 * self.token_repr_dim() + self.feature_dim
    }

    /// Dimension of a pair representation [M_i; M_j; M_i ∘ M_j; distance feature].
    pub fn pair_repr_dim(&self) -> usize {
        3 * self.mention_repr_dim() + self.feature_dim
    }
}

/// Number of distance buckets: 1, 2, 3, 4, 5–7, 8–15, 16–31, 32–63, 64+.
pub const DISTANCE_BUCKETS: usize = 9;

/// Bucket index for an antecedent distance (at least 1).
pub fn distance_bucket(distance: usize) -> usize {
    match distance {
        0 | 1 => 0,
        2 => 1,
        3 => 2,
        4 => 3,
        5..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        32..=63 => 7,
        _ => 8,
    }
}

/// All spans of width up to `max_width` that stay inside one sentence, in
/// (start, end) lexicographic order.
pub fn enumerate_spans(sentences: &[Range<usize>], max_width: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    for sentence in sentences {
        for start in sentence.clone() {
            let last = (start + max_width - 1).min(sentence.end - 1);
            for end in start..=last {
                spans.push(Span::new(start, end));
            }
        }
    }
    spans
}

/// Number of spans [`enumerate_spans`] yields, from the per-sentence
/// closed form `Σ_{w=1..min(maxw,L)} (L - w + 1)`.
pub fn span_count(sentence_lengths: &[usize], max_width: usize) -> usize {
    sentence_lengths
        .iter()
        .map(|&len| {
            (1..=max_width.min(len)).map(|w| len - w + 1).sum::<usize>()
        })
        .sum()
}

/// How many spans pruning keeps for a document of `doc_len` tokens.
pub fn pruned_count(doc_len: usize, ratio: f64, available: usize) -> usize {
    ((ratio * doc_len as f64).floor() as usize).max(1).min(available)
}

/// Keeps the top spans by score, ties broken toward the earlier
/// (start, end); the survivors are returned in document order as indices
/// into `spans`.
pub fn prune_top_spans(spans: &[Span], scores: &[f64], doc_len: usize, ratio: f64) -> Vec<usize> {
    assert_eq!(spans.len(), scores.len());
    let k = pruned_count(doc_len, ratio, spans.len());
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("mention scores are finite")
            .then_with(|| spans[a].cmp(&spans[b]))
    });
    let mut kept: Vec<usize> = order.into_iter().take(k).collect();
    kept.sort_by_key(|&i| spans[i]);
    kept
}

/// Where candidate mentions come from during one pass.
#[derive(Debug, Clone, Copy)]
pub enum CandidateSource<'a> {
    /// Enumerate, score, and prune spans inside the model.
    EndToEnd,
    /// Fixed span list from an external mention detector; pruning is
    /// bypassed but mention scores are still computed.
    External(&'a [Span]),
}

/// Everything one forward pass produces that outlives the tape.
pub struct ForwardPass {
    pub kept_spans: Vec<Span>,
    /// Per anaphor `j`: indices into `kept_spans` of its candidate
    /// antecedents, in document order (all strictly preceding `j`).
    pub candidates: Vec<Vec<usize>>,
    /// Final scores `s(i, j)` aligned with `candidates`; ε scores 0.
    pub final_scores: Vec<Vec<f64>>,
    /// Marginalized antecedent loss, when requested.
    pub loss: Option<VarId>,
}

struct EncodedDoc {
    token_reprs: Vec<VarId>,
    head_scores: Vec<VarId>,
}

/// The span-ranking model: configuration plus the fixed-embedding dimension
/// the parameters were built for.
#[derive(Debug, Clone)]
pub struct CorefModel {
    pub cfg: CorefConfig,
    fixed_dim: usize,
}

impl CorefModel {
    pub fn new(cfg: CorefConfig, fixed_embedding_dim: usize) -> Self {
        CorefModel {
            cfg,
            fixed_dim: fixed_embedding_dim,
        }
    }

    pub fn fixed_embedding_dim(&self) -> usize {
        self.fixed_dim
    }

    fn encoder_spec(&self) -> BiLstmSpec {
        BiLstmSpec {
            input_dim: self.fixed_dim + self.cfg.char_output_dim(),
            hidden_size: self.cfg.lstm_hidden,
            layers: self.cfg.lstm_layers,
            dropout: self.cfg.lstm_dropout,
        }
    }

    fn char_spec(&self) -> CharCnnSpec {
        CharCnnSpec {
            vocab_size: self.cfg.char_vocab_size,
            char_dim: self.cfg.char_dim,
            filter_widths: self.cfg.char_filter_widths.clone(),
            filters: self.cfg.char_filters,
        }
    }

    fn head_spec(&self) -> FfnnSpec {
        FfnnSpec {
            input_dim: self.cfg.token_repr_dim(),
            hidden_layers: self.cfg.ffnn_layers,
            hidden_size: self.cfg.ffnn_size,
            output_dim: 1,
            dropout: self.cfg.ffnn_dropout,
        }
    }

    fn mention_spec(&self) -> FfnnSpec {
        FfnnSpec {
            input_dim: self.cfg.mention_repr_dim(),
            hidden_layers: self.cfg.ffnn_layers,
            hidden_size: self.cfg.ffnn_size,
            output_dim: 1,
            dropout: self.cfg.ffnn_dropout,
        }
    }

    fn pair_spec(&self) -> FfnnSpec {
        FfnnSpec {
            input_dim: self.cfg.pair_repr_dim(),
            hidden_layers: self.cfg.ffnn_layers,
            hidden_size: self.cfg.ffnn_size,
            output_dim: 1,
            dropout: self.cfg.ffnn_dropout,
        }
    }

    fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let m = self.cfg.mention_repr_dim();
        let mut shapes = Vec::new();
        shapes.extend(char_cnn_shapes("coref.chars", &self.char_spec()));
        shapes.extend(bilstm_shapes("coref.encoder", &self.encoder_spec()));
        shapes.extend(ffnn_shapes("coref.head", &self.head_spec()));
        shapes.extend(ffnn_shapes("coref.mention", &self.mention_spec()));
        shapes.extend(ffnn_shapes("coref.pair", &self.pair_spec()));
        shapes.push(("coref.coarse.weight".into(), vec![m, m]));
        shapes.push(("coref.width_embed".into(), vec![self.cfg.max_span_width, self.cfg.feature_dim]));
        shapes.push(("coref.distance_embed".into(), vec![DISTANCE_BUCKETS, self.cfg.feature_dim]));
        if self.cfg.second_order {
            shapes.push(("coref.gate.weight".into(), vec![m, 2 * m]));
            shapes.push(("coref.gate.bias".into(), vec![m]));
        }
        shapes
    }

    /// Registers all parameters that are not yet in the store. Feature
    /// lookup tables start at zero so no span width or distance bucket is
    /// arbitrarily favored before training; a width bucket that starts out
    /// penalized can keep its spans pruned forever.
    pub fn init_params(&self, store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        for table in ["coref.width_embed", "coref.distance_embed"] {
            if !store.contains(table) {
                let shape = self
                    .param_shapes()
                    .into_iter()
                    .find(|(n, _)| n == table)
                    .map(|(_, s)| s)
                    .expect("feature tables are model parameters");
                store.insert(table, Tensor::zeros(&shape));
            }
        }
        init_shapes(store, rng, &self.param_shapes());
    }

    /// Checks that the store holds every parameter at the expected shape.
    pub fn validate_params(&self, store: &ParamStore) -> Result<()> {
        crate::nn::layers::validate_shapes(store, &self.param_shapes())
    }

    fn check_stack(&self, stack: &EmbeddingStack) -> Result<()> {
        if stack.fixed_dim() != self.fixed_dim {
            return Err(Error::Dimension {
                expected: format!("{}", self.fixed_dim),
                got: format!("{}", stack.fixed_dim()),
                context: "embedding stack dimension vs model configuration".into(),
            });
        }
        Ok(())
    }

    /// Embeds tokens, runs the encoder per sentence, and scores every token
    /// for head attention.
    fn encode(
        &self,
        sess: &mut Session,
        stack: &EmbeddingStack,
        doc: &Document,
    ) -> Result<EncodedDoc> {
        let char_spec = self.char_spec();
        let encoder_spec = self.encoder_spec();
        let mut embeddings = Vec::with_capacity(doc.len());
        for t in 0..doc.len() {
            let fixed = sess.input(Tensor::vector(stack.fixed_vector(doc, t)?));
            let chars = char_cnn(sess, "coref.chars", &char_spec, &doc.tokens[t].surface);
            let composed = sess.graph.concat(&[fixed, chars]);
            let emb = sess.dropout(
                composed,
                self.cfg.embedding_dropout,
                site_tag("coref.emb", &[t]),
            );
            embeddings.push(emb);
        }

        let mut token_reprs = Vec::with_capacity(doc.len());
        for sentence in doc.sentences() {
            let outputs = bilstm(
                sess,
                "coref.encoder",
                &encoder_spec,
                &embeddings[sentence.clone()],
                sentence.start,
            )?;
            token_reprs.extend(outputs);
        }

        let head_spec = self.head_spec();
        let head_scores = token_reprs
            .iter()
            .enumerate()
            .map(|(t, &x)| ffnn(sess, "coref.head", &head_spec, x, site_tag("coref.alpha", &[t])))
            .collect();
        Ok(EncodedDoc {
            token_reprs,
            head_scores,
        })
    }

    /// Head-attention vector over a span: softmax of the per-token head
    /// scores, then the weighted average of the token representations.
    fn head_vector(&self, sess: &mut Session, enc: &EncodedDoc, span: Span) -> VarId {
        let alphas = sess.graph.concat(&enc.head_scores[span.start..=span.end]);
        let attention = sess.graph.softmax(alphas);
        sess.graph
            .weighted_sum(attention, &enc.token_reprs[span.start..=span.end])
    }

    /// M_i = [x_start; x_end; head; width embedding].
    fn span_representation(&self, sess: &mut Session, enc: &EncodedDoc, span: Span) -> VarId {
        let head = self.head_vector(sess, enc, span);
        let width_table = sess.param("coref.width_embed");
        let width_idx = (span.width() - 1).min(self.cfg.max_span_width - 1);
        let width_feature = sess.graph.lookup(width_table, width_idx);
        sess.graph.concat(&[
            enc.token_reprs[span.start],
            enc.token_reprs[span.end],
            head,
            width_feature,
        ])
    }

    fn mention_score(&self, sess: &mut Session, repr: VarId, span: Span) -> VarId {
        let spec = self.mention_spec();
        ffnn(
            sess,
            "coref.mention",
            &spec,
            repr,
            site_tag("coref.sm", &[span.start, span.end]),
        )
    }

    /// Candidate mentions with representations and scores, in document order.
    fn candidate_mentions(
        &self,
        sess: &mut Session,
        enc: &EncodedDoc,
        doc: &Document,
        source: CandidateSource,
    ) -> Result<(Vec<Span>, Vec<VarId>, Vec<VarId>)> {
        let spans: Vec<Span> = match source {
            CandidateSource::EndToEnd => {
                enumerate_spans(&doc.sentences(), self.cfg.max_span_width)
            }
            CandidateSource::External(list) => {
                let mut spans: Vec<Span> = list.to_vec();
                for span in &spans {
                    if span.end >= doc.len() {
                        return Err(Error::Config(format!(
                            "external candidate span [{}, {}] out of range for document {} part {} of length {}",
                            span.start, span.end, doc.doc_id, doc.part_id, doc.len()
                        )));
                    }
                }
                spans.sort();
                spans.dedup();
                spans
            }
        };

        let reprs: Vec<VarId> = spans
            .iter()
            .map(|&s| self.span_representation(sess, enc, s))
            .collect();
        let scores: Vec<VarId> = spans
            .iter()
            .zip(&reprs)
            .map(|(&s, &m)| self.mention_score(sess, m, s))
            .collect();

        match source {
            CandidateSource::External(_) => Ok((spans, reprs, scores)),
            CandidateSource::EndToEnd => {
                let values: Vec<f64> = scores.iter().map(|&s| sess.graph.value(s).item()).collect();
                let kept = prune_top_spans(&spans, &values, doc.len(), self.cfg.mention_ratio);
                Ok((
                    kept.iter().map(|&i| spans[i]).collect(),
                    kept.iter().map(|&i| reprs[i]).collect(),
                    kept.iter().map(|&i| scores[i]).collect(),
                ))
            }
        }
    }

    /// Coarse bilinear scores `s_c(i, j) = M_i^T W_c M_j` for all ordered
    /// pairs, then the per-anaphor top candidates by
    /// `s_m(i) + s_m(j) + s_c(i, j)`.
    fn coarse_candidates(
        &self,
        sess: &mut Session,
        reprs: &[VarId],
        mention_scores: &[VarId],
    ) -> (Vec<Vec<usize>>, Vec<HashMap<usize, VarId>>) {
        let coarse_weight = sess.param("coref.coarse.weight");
        let n = reprs.len();
        let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut coarse: Vec<HashMap<usize, VarId>> = Vec::with_capacity(n);
        for j in 0..n {
            let projected = sess.graph.matvec(coarse_weight, reprs[j]);
            let mut scored: Vec<(usize, VarId, f64)> = Vec::with_capacity(j);
            for (i, &repr_i) in reprs.iter().enumerate().take(j) {
                let s_c = sess.graph.dot(repr_i, projected);
                let total = sess.graph.value(s_c).item()
                    + sess.graph.value(mention_scores[i]).item()
                    + sess.graph.value(mention_scores[j]).item();
                scored.push((i, s_c, total));
            }
            // Highest combined score first; ties prefer the nearer antecedent.
            scored.sort_by(|a, b| {
                b.2.partial_cmp(&a.2)
                    .expect("coarse scores are finite")
                    .then(b.0.cmp(&a.0))
            });
            scored.truncate(self.cfg.max_antecedents);
            scored.sort_by_key(|&(i, _, _)| i);
            candidates.push(scored.iter().map(|&(i, _, _)| i).collect());
            coarse.push(scored.into_iter().map(|(i, s_c, _)| (i, s_c)).collect());
        }
        (candidates, coarse)
    }

    fn antecedent_distance(&self, spans: &[Span], i: usize, j: usize) -> usize {
        if self.cfg.distance_in_tokens {
            spans[j].start - spans[i].start
        } else {
            j - i
        }
    }

    /// Fine score `s_a(i, j)` from the pair representation
    /// `[M_i; M_j; M_i ∘ M_j; distance feature]`.
    #[allow(clippy::too_many_arguments)]
    fn fine_score(
        &self,
        sess: &mut Session,
        spans: &[Span],
        reprs: &[VarId],
        i: usize,
        j: usize,
        refine_pass: usize,
    ) -> VarId {
        let distance_table = sess.param("coref.distance_embed");
        let bucket = distance_bucket(self.antecedent_distance(spans, i, j));
        let distance_feature = sess.graph.lookup(distance_table, bucket);
        let product = sess.graph.mul(reprs[i], reprs[j]);
        let pair = sess
            .graph
            .concat(&[reprs[i], reprs[j], product, distance_feature]);
        let spec = self.pair_spec();
        ffnn(
            sess,
            "coref.pair",
            &spec,
            pair,
            site_tag(
                "coref.sa",
                &[
                    refine_pass,
                    spans[i].start,
                    spans[i].end,
                    spans[j].start,
                    spans[j].end,
                ],
            ),
        )
    }

    /// `s(i, j) = s_m(i) + s_m(j) + s_c(i, j) + s_a(i, j)`.
    fn final_pair_scores(
        &self,
        sess: &mut Session,
        spans: &[Span],
        reprs: &[VarId],
        mention_scores: &[VarId],
        candidates: &[Vec<usize>],
        coarse: &[HashMap<usize, VarId>],
        refine_pass: usize,
    ) -> Vec<Vec<VarId>> {
        candidates
            .iter()
            .enumerate()
            .map(|(j, cands)| {
                cands
                    .iter()
                    .map(|&i| {
                        let s_a = self.fine_score(sess, spans, reprs, i, j, refine_pass);
                        let mentions = sess.graph.add(mention_scores[i], mention_scores[j]);
                        let pairwise = sess.graph.add(coarse[j][&i], s_a);
                        sess.graph.add(mentions, pairwise)
                    })
                    .collect()
            })
            .collect()
    }

    /// One second-order pass: each mention vector becomes a gated mix of
    /// itself and its expected antecedent vector under the current scores
    /// (ε attends to the mention itself).
    fn refine_representations(
        &self,
        sess: &mut Session,
        reprs: &[VarId],
        candidates: &[Vec<usize>],
        scores: &[Vec<VarId>],
    ) -> Vec<VarId> {
        let gate_weight = sess.param("coref.gate.weight");
        let gate_bias = sess.param("coref.gate.bias");
        let epsilon = sess.graph.scalar(0.0);
        (0..reprs.len())
            .map(|j| {
                let mut score_vars = vec![epsilon];
                score_vars.extend(&scores[j]);
                let all = sess.graph.concat(&score_vars);
                let distribution = sess.graph.softmax(all);
                let mut vectors = vec![reprs[j]];
                vectors.extend(candidates[j].iter().map(|&i| reprs[i]));
                let attended = sess.graph.weighted_sum(distribution, &vectors);
                let gate_in = sess.graph.concat(&[reprs[j], attended]);
                let z = sess.graph.matvec(gate_weight, gate_in);
                let z = sess.graph.add(z, gate_bias);
                let gate = sess.graph.sigmoid(z);
                let keep = sess.graph.mul(gate, reprs[j]);
                let inv_gate = sess.graph.affine(gate, -1.0, 1.0);
                let update = sess.graph.mul(inv_gate, attended);
                sess.graph.add(keep, update)
            })
            .collect()
    }

    /// Per anaphor: candidate indices in its gold cluster. Empty means the
    /// gold antecedent is ε. Gold mentions wider than the span-width limit
    /// are unreachable and ignored with a warning.
    fn gold_antecedent_indices(
        &self,
        doc: &Document,
        spans: &[Span],
        candidates: &[Vec<usize>],
    ) -> Vec<Vec<usize>> {
        let mut cluster_of: HashMap<Span, usize> = HashMap::new();
        for (c, cluster) in doc.gold_clusters.clusters().iter().enumerate() {
            for span in cluster {
                if span.width() > self.cfg.max_span_width {
                    log::warn!(
                        "document {} part {}: gold mention [{}, {}] wider than {} tokens is unreachable and dropped from training targets",
                        doc.doc_id, doc.part_id, span.start, span.end, self.cfg.max_span_width
                    );
                    continue;
                }
                cluster_of.insert(*span, c);
            }
        }
        spans
            .iter()
            .enumerate()
            .map(|(j, span)| {
                let Some(cluster) = cluster_of.get(span) else {
                    return Vec::new();
                };
                candidates[j]
                    .iter()
                    .enumerate()
                    .filter(|(_, &i)| cluster_of.get(&spans[i]) == Some(cluster))
                    .map(|(pos, _)| pos)
                    .collect()
            })
            .collect()
    }

    /// Marginalized antecedent loss:
    /// `Σ_j [ logsumexp(all scores of j) - logsumexp(gold scores of j) ]`
    /// where ε (score 0) stands in when j has no reachable gold antecedent.
    fn marginal_loss(
        &self,
        sess: &mut Session,
        scores: &[Vec<VarId>],
        gold_positions: &[Vec<usize>],
    ) -> VarId {
        let epsilon = sess.graph.scalar(0.0);
        let per_anaphor: Vec<VarId> = scores
            .iter()
            .zip(gold_positions)
            .map(|(pair_scores, gold)| {
                let mut all = vec![epsilon];
                all.extend(pair_scores);
                let all_vec = sess.graph.concat(&all);
                let log_z = sess.graph.log_sum_exp(all_vec);
                let gold_vars: Vec<VarId> = if gold.is_empty() {
                    vec![epsilon]
                } else {
                    gold.iter().map(|&pos| pair_scores[pos]).collect()
                };
                let gold_vec = sess.graph.concat(&gold_vars);
                let log_gold = sess.graph.log_sum_exp(gold_vec);
                sess.graph.sub(log_z, log_gold)
            })
            .collect();
        let stacked = sess.graph.concat(&per_anaphor);
        sess.graph.sum(stacked)
    }

    /// Runs the model over one document.
    pub fn forward(
        &self,
        sess: &mut Session,
        stack: &EmbeddingStack,
        doc: &Document,
        source: CandidateSource,
        with_loss: bool,
    ) -> Result<ForwardPass> {
        self.check_stack(stack)?;
        if doc.is_empty() {
            return Err(Error::Config(format!(
                "document {} part {} has no tokens",
                doc.doc_id, doc.part_id
            )));
        }
        let enc = self.encode(sess, stack, doc)?;
        let (spans, mut reprs, mention_scores) =
            self.candidate_mentions(sess, &enc, doc, source)?;
        let (candidates, coarse) = self.coarse_candidates(sess, &reprs, &mention_scores);
        let mut scores =
            self.final_pair_scores(sess, &spans, &reprs, &mention_scores, &candidates, &coarse, 0);

        if self.cfg.second_order {
            reprs = self.refine_representations(sess, &reprs, &candidates, &scores);
            scores = self.final_pair_scores(
                sess,
                &spans,
                &reprs,
                &mention_scores,
                &candidates,
                &coarse,
                1,
            );
        }

        let loss = if with_loss {
            let gold = self.gold_antecedent_indices(doc, &spans, &candidates);
            Some(self.marginal_loss(sess, &scores, &gold))
        } else {
            None
        };

        let final_scores: Vec<Vec<f64>> = scores
            .iter()
            .map(|row| row.iter().map(|&s| sess.graph.value(s).item()).collect())
            .collect();

        Ok(ForwardPass {
            kept_spans: spans,
            candidates,
            final_scores,
            loss,
        })
    }

    /// Inference: decode the predicted cluster set for one document.
    pub fn predict(
        &self,
        store: &ParamStore,
        stack: &EmbeddingStack,
        doc: &Document,
        external: Option<&[Span]>,
    ) -> Result<ClusterSet> {
        let mut sess = Session::eval(store);
        let source = match external {
            Some(spans) => CandidateSource::External(spans),
            None => CandidateSource::EndToEnd,
        };
        let pass = self.forward(&mut sess, stack, doc, source, false)?;
        Ok(decode_clusters(
            &pass.kept_spans,
            &pass.candidates,
            &pass.final_scores,
        ))
    }

    /// The model's own pruned candidate spans (no antecedent scoring).
    pub fn pruned_candidate_spans(
        &self,
        store: &ParamStore,
        stack: &EmbeddingStack,
        doc: &Document,
    ) -> Result<Vec<Span>> {
        self.check_stack(stack)?;
        let mut sess = Session::eval(store);
        let enc = self.encode(&mut sess, stack, doc)?;
        let (spans, _, _) =
            self.candidate_mentions(&mut sess, &enc, doc, CandidateSource::EndToEnd)?;
        Ok(spans)
    }
}

/// Links each anaphor to its best-scoring candidate when that score beats
/// ε (strictly positive), then takes connected components. Components of
/// size one are dropped: no singletons are emitted.
pub fn decode_clusters(
    kept: &[Span],
    candidates: &[Vec<usize>],
    scores: &[Vec<f64>],
) -> ClusterSet {
    let n = kept.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for j in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for (pos, &i) in candidates[j].iter().enumerate() {
            let s = scores[j][pos];
            if best.map_or(true, |(bs, _)| s > bs) {
                best = Some((s, i));
            }
        }
        if let Some((score, i)) = best {
            if score > 0.0 {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<Span>> = HashMap::new();
    for j in 0..n {
        let root = find(&mut parent, j);
        groups.entry(root).or_default().push(kept[j]);
    }
    let clusters: Vec<Vec<Span>> = groups.into_values().filter(|g| g.len() >= 2).collect();
    ClusterSet::try_new(clusters).expect("decoded clusters are disjoint per component")
}
