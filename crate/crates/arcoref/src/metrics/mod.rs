//! Coreference evaluation: MUC, B³, CEAF_φ4, their CoNLL average, and
//! mention-level precision/recall/F1.
//!
//! Counts are accumulated per document and aggregated before any ratio is
//! taken (micro averaging), matching the official scorer's behavior on
//! multi-document files.

pub mod hungarian;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::conll::{parse_conll, ClusterSet, Document, Span};
use crate::error::{Error, Result};

/// Recall, precision, and F1 as percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PrfScores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl PrfScores {
    fn from_counts(rec_num: f64, rec_den: f64, prec_num: f64, prec_den: f64) -> Self {
        let recall = if rec_den > 0.0 { rec_num / rec_den } else { 0.0 };
        let precision = if prec_den > 0.0 { prec_num / prec_den } else { 0.0 };
        let f1 = if recall + precision > 0.0 {
            2.0 * recall * precision / (recall + precision)
        } else {
            0.0
        };
        PrfScores {
            recall: 100.0 * recall,
            precision: 100.0 * precision,
            f1: 100.0 * f1,
        }
    }
}

/// The full evaluation report.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricReport {
    pub muc: PrfScores,
    pub b_cubed: PrfScores,
    pub ceaf_phi4: PrfScores,
    /// Unweighted mean of the three F1 scores.
    pub conll_avg: f64,
    pub mentions: PrfScores,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>7} {:>7} {:>7}", "Metric", "R", "P", "F1")?;
        for (name, s) in [
            ("MUC", self.muc),
            ("B3", self.b_cubed),
            ("CEAF_phi4", self.ceaf_phi4),
        ] {
            writeln!(
                f,
                "{:<10} {:>7.1} {:>7.1} {:>7.1}",
                name, s.recall, s.precision, s.f1
            )?;
        }
        writeln!(f, "{:<10} {:>23.1}", "Avg F1", self.conll_avg)?;
        write!(
            f,
            "{:<10} {:>7.1} {:>7.1} {:>7.1}",
            "Mentions", self.mentions.recall, self.mentions.precision, self.mentions.f1
        )
    }
}

/// Unweighted arithmetic mean of three F1 percentages.
pub fn conll_average(muc_f1: f64, b_cubed_f1: f64, ceaf_f1: f64) -> f64 {
    (muc_f1 + b_cubed_f1 + ceaf_f1) / 3.0
}

/// φ4 cluster similarity: `2|K ∩ R| / (|K| + |R|)`.
fn phi4(a: &[Span], b: &[Span]) -> f64 {
    let set: std::collections::HashSet<&Span> = a.iter().collect();
    let common = b.iter().filter(|s| set.contains(s)).count();
    2.0 * common as f64 / (a.len() + b.len()) as f64
}

/// MUC link counts for one direction: `Σ (|S| - p(S))` over `base` clusters,
/// where `p` counts the partitions induced by `other`.
fn muc_counts(base: &ClusterSet, other: &ClusterSet) -> (f64, f64) {
    let mut span_to_cluster: HashMap<Span, usize> = HashMap::new();
    for (idx, cluster) in other.clusters().iter().enumerate() {
        for span in cluster {
            span_to_cluster.insert(*span, idx);
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in base.clusters() {
        let mut seen = std::collections::HashSet::new();
        let mut partitions = 0usize;
        for span in cluster {
            match span_to_cluster.get(span) {
                Some(idx) => {
                    if seen.insert(*idx) {
                        partitions += 1;
                    }
                }
                None => partitions += 1, // unaligned mention is its own part
            }
        }
        num += (cluster.len() - partitions) as f64;
        den += (cluster.len() - 1) as f64;
    }
    (num, den)
}

/// B³ counts for one direction: per mention of `base`, the overlap of its
/// `base` cluster with its `other` cluster divided by the `base` cluster
/// size. Mentions absent from `other` contribute 0.
fn b_cubed_counts(base: &ClusterSet, other: &ClusterSet) -> (f64, f64) {
    let mut span_to_cluster: HashMap<Span, usize> = HashMap::new();
    for (idx, cluster) in other.clusters().iter().enumerate() {
        for span in cluster {
            span_to_cluster.insert(*span, idx);
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in base.clusters() {
        for span in cluster {
            den += 1.0;
            if let Some(&idx) = span_to_cluster.get(span) {
                let overlap = phi_overlap(cluster, &other.clusters()[idx]);
                num += overlap as f64 / cluster.len() as f64;
            }
        }
    }
    (num, den)
}

fn phi_overlap(a: &[Span], b: &[Span]) -> usize {
    let set: std::collections::HashSet<&Span> = a.iter().collect();
    b.iter().filter(|s| set.contains(s)).count()
}

/// Per-document raw counts, summed across documents before scoring.
#[derive(Debug, Clone, Copy, Default)]
struct Counts {
    muc_rec_num: f64,
    muc_rec_den: f64,
    muc_prec_num: f64,
    muc_prec_den: f64,
    b3_rec_num: f64,
    b3_rec_den: f64,
    b3_prec_num: f64,
    b3_prec_den: f64,
    ceaf_phi_sum: f64,
    ceaf_gold_clusters: f64,
    ceaf_pred_clusters: f64,
    mention_tp: f64,
    mention_gold: f64,
    mention_pred: f64,
}

impl Counts {
    fn add(&mut self, other: &Counts) {
        self.muc_rec_num += other.muc_rec_num;
        self.muc_rec_den += other.muc_rec_den;
        self.muc_prec_num += other.muc_prec_num;
        self.muc_prec_den += other.muc_prec_den;
        self.b3_rec_num += other.b3_rec_num;
        self.b3_rec_den += other.b3_rec_den;
        self.b3_prec_num += other.b3_prec_num;
        self.b3_prec_den += other.b3_prec_den;
        self.ceaf_phi_sum += other.ceaf_phi_sum;
        self.ceaf_gold_clusters += other.ceaf_gold_clusters;
        self.ceaf_pred_clusters += other.ceaf_pred_clusters;
        self.mention_tp += other.mention_tp;
        self.mention_gold += other.mention_gold;
        self.mention_pred += other.mention_pred;
    }
}

fn document_counts(gold: &ClusterSet, pred: &ClusterSet) -> Counts {
    let mut c = Counts::default();

    let (rn, rd) = muc_counts(gold, pred);
    let (pn, pd) = muc_counts(pred, gold);
    c.muc_rec_num = rn;
    c.muc_rec_den = rd;
    c.muc_prec_num = pn;
    c.muc_prec_den = pd;

    let (rn, rd) = b_cubed_counts(gold, pred);
    let (pn, pd) = b_cubed_counts(pred, gold);
    c.b3_rec_num = rn;
    c.b3_rec_den = rd;
    c.b3_prec_num = pn;
    c.b3_prec_den = pd;

    if !gold.is_empty() && !pred.is_empty() {
        let sim: Vec<Vec<f64>> = gold
            .clusters()
            .iter()
            .map(|g| pred.clusters().iter().map(|p| phi4(g, p)).collect())
            .collect();
        c.ceaf_phi_sum = hungarian::max_assignment(&sim).0;
    }
    c.ceaf_gold_clusters = gold.len() as f64;
    c.ceaf_pred_clusters = pred.len() as f64;

    let gold_mentions = gold.mentions();
    let pred_mentions = pred.mentions();
    let gold_set: std::collections::HashSet<&Span> = gold_mentions.iter().collect();
    c.mention_tp = pred_mentions.iter().filter(|s| gold_set.contains(s)).count() as f64;
    c.mention_gold = gold_mentions.len() as f64;
    c.mention_pred = pred_mentions.len() as f64;

    c
}

/// Incremental scorer over (gold, predicted) cluster-set pairs.
#[derive(Debug, Default)]
pub struct MetricAccumulator {
    counts: Counts,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        MetricAccumulator::default()
    }

    pub fn add_document(&mut self, gold: &ClusterSet, pred: &ClusterSet) {
        self.counts.add(&document_counts(gold, pred));
    }

    pub fn report(&self) -> MetricReport {
        let c = &self.counts;
        let muc = PrfScores::from_counts(c.muc_rec_num, c.muc_rec_den, c.muc_prec_num, c.muc_prec_den);
        let b_cubed =
            PrfScores::from_counts(c.b3_rec_num, c.b3_rec_den, c.b3_prec_num, c.b3_prec_den);
        let ceaf_phi4 = PrfScores::from_counts(
            c.ceaf_phi_sum,
            c.ceaf_gold_clusters,
            c.ceaf_phi_sum,
            c.ceaf_pred_clusters,
        );
        MetricReport {
            muc,
            b_cubed,
            ceaf_phi4,
            conll_avg: conll_average(muc.f1, b_cubed.f1, ceaf_phi4.f1),
            mentions: PrfScores::from_counts(
                c.mention_tp,
                c.mention_gold,
                c.mention_tp,
                c.mention_pred,
            ),
        }
    }
}

/// MUC on a single document pair.
pub fn muc(gold: &ClusterSet, pred: &ClusterSet) -> PrfScores {
    let (rn, rd) = muc_counts(gold, pred);
    let (pn, pd) = muc_counts(pred, gold);
    PrfScores::from_counts(rn, rd, pn, pd)
}

/// B³ on a single document pair.
pub fn b_cubed(gold: &ClusterSet, pred: &ClusterSet) -> PrfScores {
    let (rn, rd) = b_cubed_counts(gold, pred);
    let (pn, pd) = b_cubed_counts(pred, gold);
    PrfScores::from_counts(rn, rd, pn, pd)
}

/// CEAF_φ4 on a single document pair: optimal one-to-one cluster alignment
/// under φ4, normalized by gold (recall) and predicted (precision) cluster
/// counts.
pub fn ceaf_phi4(gold: &ClusterSet, pred: &ClusterSet) -> PrfScores {
    let c = document_counts(gold, pred);
    PrfScores::from_counts(
        c.ceaf_phi_sum,
        c.ceaf_gold_clusters,
        c.ceaf_phi_sum,
        c.ceaf_pred_clusters,
    )
}

/// Exact-span mention recall/precision/F1.
pub fn mention_prf(gold: &[Span], pred: &[Span]) -> PrfScores {
    let gold_set: std::collections::HashSet<&Span> = gold.iter().collect();
    let tp = pred.iter().filter(|s| gold_set.contains(s)).count() as f64;
    PrfScores::from_counts(tp, gold.len() as f64, tp, pred.len() as f64)
}

/// Scores paired documents, requiring both sides to cover the same
/// (doc_id, part) set.
pub fn score_documents(key: &[Document], response: &[Document]) -> Result<MetricReport> {
    let key_map: HashMap<(String, usize), &Document> = key
        .iter()
        .map(|d| ((d.doc_id.clone(), d.part_id), d))
        .collect();
    let resp_map: HashMap<(String, usize), &Document> = response
        .iter()
        .map(|d| ((d.doc_id.clone(), d.part_id), d))
        .collect();

    let mut missing: Vec<String> = Vec::new();
    for k in key_map.keys() {
        if !resp_map.contains_key(k) {
            missing.push(format!("{} part {} missing from response", k.0, k.1));
        }
    }
    for k in resp_map.keys() {
        if !key_map.contains_key(k) {
            missing.push(format!("{} part {} missing from key", k.0, k.1));
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::DocumentMismatch(missing.join("; ")));
    }

    let mut acc = MetricAccumulator::new();
    let mut keys: Vec<_> = key_map.keys().cloned().collect();
    keys.sort();
    for k in keys {
        acc.add_document(&key_map[&k].gold_clusters, &resp_map[&k].gold_clusters);
    }
    Ok(acc.report())
}

/// Scores a response file against a key file (both in CoNLL format).
pub fn score_files(key_path: &Path, response_path: &Path) -> Result<MetricReport> {
    let key = parse_conll(BufReader::new(
        File::open(key_path).map_err(|e| Error::io(key_path, e))?,
    ))?;
    let response = parse_conll(BufReader::new(
        File::open(response_path).map_err(|e| Error::io(response_path, e))?,
    ))?;
    score_documents(&key, &response)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(clusters: &[&[(usize, usize)]]) -> ClusterSet {
        ClusterSet::try_new(
            clusters
                .iter()
                .map(|c| c.iter().map(|&(s, e)| Span::new(s, e)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_prediction_is_all_hundred() {
        let gold = cs(&[&[(0, 0), (2, 2)], &[(4, 5), (7, 7)]]);
        for s in [muc(&gold, &gold), b_cubed(&gold, &gold), ceaf_phi4(&gold, &gold)] {
            assert_eq!((s.recall, s.precision, s.f1), (100.0, 100.0, 100.0));
        }
    }

    #[test]
    fn muc_hand_case() {
        // gold {{a,b,c}}, pred {{a,b},{c}} -> R=1/2, P=1, F1=2/3
        let gold = cs(&[&[(0, 0), (1, 1), (2, 2)]]);
        let pred = cs(&[&[(0, 0), (1, 1)], &[(2, 2)]]);
        let s = muc(&gold, &pred);
        assert!((s.recall - 50.0).abs() < 1e-9);
        assert!((s.precision - 100.0).abs() < 1e-9);
        assert!((s.f1 - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn muc_empty_prediction() {
        let gold = cs(&[&[(0, 0), (1, 1)]]);
        let pred = ClusterSet::empty();
        let s = muc(&gold, &pred);
        assert_eq!((s.recall, s.precision, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn b_cubed_hand_case() {
        // gold {{a,b,c}}, pred {{a,b},{c}} -> R = 5/9, P = 1
        let gold = cs(&[&[(0, 0), (1, 1), (2, 2)]]);
        let pred = cs(&[&[(0, 0), (1, 1)], &[(2, 2)]]);
        let s = b_cubed(&gold, &pred);
        assert!((s.recall - 100.0 * 5.0 / 9.0).abs() < 1e-9);
        assert!((s.precision - 100.0).abs() < 1e-9);
    }

    #[test]
    fn b_cubed_giant_cluster() {
        // gold two clusters of 2, pred one cluster of all four -> R=1, P=1/2
        let gold = cs(&[&[(0, 0), (1, 1)], &[(2, 2), (3, 3)]]);
        let pred = cs(&[&[(0, 0), (1, 1), (2, 2), (3, 3)]]);
        let s = b_cubed(&gold, &pred);
        assert!((s.recall - 100.0).abs() < 1e-9);
        assert!((s.precision - 50.0).abs() < 1e-9);
    }

    #[test]
    fn ceaf_formula_case() {
        // gold {{a,b,c}}, pred {{a,b,d}} -> phi4 = 2*2/(3+3) = 2/3
        let gold = cs(&[&[(0, 0), (1, 1), (2, 2)]]);
        let pred = cs(&[&[(0, 0), (1, 1), (3, 3)]]);
        let s = ceaf_phi4(&gold, &pred);
        let expected = 100.0 * 2.0 / 3.0;
        assert!((s.recall - expected).abs() < 1e-9);
        assert!((s.precision - expected).abs() < 1e-9);
        assert!((s.f1 - expected).abs() < 1e-9);
    }

    #[test]
    fn conll_average_matches_reported_row() {
        let avg = conll_average(66.8, 61.3, 63.5);
        assert!((avg - 63.9).abs() < 0.05, "avg {avg}");
    }

    #[test]
    fn conll_average_extremes() {
        assert_eq!(conll_average(0.0, 0.0, 0.0), 0.0);
        assert_eq!(conll_average(100.0, 100.0, 100.0), 100.0);
    }

    #[test]
    fn mention_prf_cases() {
        let g = [Span::new(0, 0), Span::new(2, 3)];
        assert_eq!(mention_prf(&g, &g).f1, 100.0);

        let p: Vec<Span> = vec![
            Span::new(0, 0),
            Span::new(2, 3),
            Span::new(5, 5),
            Span::new(7, 8),
        ];
        let s = mention_prf(&g, &p);
        assert_eq!(s.recall, 100.0);
        assert_eq!(s.precision, 50.0);

        let disjoint = [Span::new(9, 9)];
        let s = mention_prf(&g, &disjoint);
        assert_eq!((s.recall, s.precision, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn symmetry_swapping_sides_swaps_recall_and_precision() {
        let a = cs(&[&[(0, 0), (1, 1), (4, 4)], &[(2, 2), (3, 3)]]);
        let b = cs(&[&[(0, 0), (2, 2)], &[(1, 1), (3, 3), (5, 5)]]);
        for f in [muc, b_cubed, ceaf_phi4] {
            let fwd = f(&a, &b);
            let rev = f(&b, &a);
            assert!((fwd.recall - rev.precision).abs() < 1e-9);
            assert!((fwd.precision - rev.recall).abs() < 1e-9);
        }
    }

    #[test]
    fn micro_aggregation_sums_counts() {
        let gold1 = cs(&[&[(0, 0), (1, 1), (2, 2)]]);
        let pred1 = cs(&[&[(0, 0), (1, 1)], &[(2, 2)]]);
        let gold2 = cs(&[&[(0, 0), (1, 1)]]);
        let pred2 = cs(&[&[(0, 0), (1, 1)]]);
        let mut acc = MetricAccumulator::new();
        acc.add_document(&gold1, &pred1);
        acc.add_document(&gold2, &pred2);
        let r = acc.report();
        // MUC recall = (1 + 1) / (2 + 1) = 2/3, not mean(1/2, 1).
        assert!((r.muc.recall - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn score_documents_rejects_mismatched_sets() {
        let make = |id: &str| Document {
            doc_id: id.into(),
            part_id: 0,
            tokens: vec![crate::conll::Token::new("w", 0, 0)],
            gold_clusters: ClusterSet::empty(),
        };
        let err = score_documents(&[make("a"), make("b")], &[make("a")]).unwrap_err();
        assert!(err.to_string().contains("b part 0"), "{err}");
    }
}
