//! Bundled synthetic mini-corpus: pseudo-text with planted coreference
//! chains. Chains are mostly repeated name tokens (a strong surface signal)
//! plus one pronoun-like token per document, so a small model can overfit
//! the corpus quickly and every test runs without external data.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conll::{ClusterSet, Document, Span, Token};

/// Per-document entity plan: surface tokens of one mention and how many
/// mentions to plant.
struct EntityPlan {
    surfaces: Vec<String>,
    mentions: usize,
    /// Replace the surface of the final mention with this token.
    last_mention_surface: Option<String>,
}

fn try_layout(
    rng: &mut ChaCha8Rng,
    sentence_lengths: &[usize],
    plans: &[EntityPlan],
) -> Option<Vec<Vec<(usize, Span)>>> {
    let total: usize = sentence_lengths.iter().sum();
    let mut sentence_of = Vec::with_capacity(total);
    for (s, &len) in sentence_lengths.iter().enumerate() {
        sentence_of.extend(std::iter::repeat(s).take(len));
    }
    let mut used = vec![false; total];
    let mut placements: Vec<Vec<(usize, Span)>> = Vec::with_capacity(plans.len());
    for plan in plans {
        let width = plan.surfaces.len();
        let mut starts: Vec<usize> = (0..total.saturating_sub(width - 1))
            .filter(|&p| sentence_of[p] == sentence_of[p + width - 1])
            .collect();
        starts.shuffle(rng);
        let mut chosen = Vec::with_capacity(plan.mentions);
        for &start in &starts {
            if chosen.len() == plan.mentions {
                break;
            }
            if (start..start + width).all(|i| !used[i]) {
                for i in start..start + width {
                    used[i] = true;
                }
                chosen.push((start, Span::new(start, start + width - 1)));
            }
        }
        if chosen.len() < plan.mentions {
            return None;
        }
        chosen.sort();
        placements.push(chosen);
    }
    Some(placements)
}

fn build_document(doc_index: usize, rng: &mut ChaCha8Rng) -> Document {
    let filler_vocab: Vec<String> = (0..20).map(|i| format!("f{i:02}")).collect();
    let plans = vec![
        EntityPlan {
            surfaces: vec![format!("n{doc_index}a")],
            mentions: 4,
            last_mention_surface: Some("prn".to_string()),
        },
        EntityPlan {
            surfaces: vec!["al".to_string(), format!("n{doc_index}b")],
            mentions: 2,
            last_mention_surface: None,
        },
        EntityPlan {
            surfaces: vec![format!("n{doc_index}c")],
            mentions: 2,
            last_mention_surface: None,
        },
    ];

    loop {
        let sentence_lengths: Vec<usize> = (0..3).map(|_| rng.random_range(9..=12)).collect();
        let Some(placements) = try_layout(rng, &sentence_lengths, &plans) else {
            continue;
        };

        let total: usize = sentence_lengths.iter().sum();
        let mut surfaces: Vec<String> = (0..total)
            .map(|_| filler_vocab[rng.random_range(0..filler_vocab.len())].clone())
            .collect();
        let mut clusters: Vec<Vec<Span>> = Vec::with_capacity(plans.len());
        for (plan, spots) in plans.iter().zip(&placements) {
            let mut cluster = Vec::with_capacity(spots.len());
            for (k, (start, span)) in spots.iter().enumerate() {
                let is_last = k + 1 == spots.len();
                for (offset, word) in plan.surfaces.iter().enumerate() {
                    surfaces[start + offset] = word.clone();
                }
                if is_last && plan.surfaces.len() == 1 {
                    if let Some(p) = &plan.last_mention_surface {
                        surfaces[*start] = p.clone();
                    }
                }
                cluster.push(*span);
            }
            clusters.push(cluster);
        }

        let mut tokens = Vec::with_capacity(total);
        let mut idx = 0;
        for (s, &len) in sentence_lengths.iter().enumerate() {
            for _ in 0..len {
                tokens.push(Token::new(surfaces[idx].clone(), s, idx));
                idx += 1;
            }
        }
        return Document {
            doc_id: format!("synth/doc{doc_index}"),
            part_id: 0,
            tokens,
            gold_clusters: ClusterSet::try_new(clusters).expect("planted clusters are valid"),
        };
    }
}

/// Deterministic synthetic corpus with planted coreference chains.
pub fn synthetic_corpus(seed: u64, n_docs: usize) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_docs).map(|d| build_document(d, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let a = synthetic_corpus(9, 5);
        let b = synthetic_corpus(9, 5);
        assert_eq!(a, b);
        let c = synthetic_corpus(10, 5);
        assert_ne!(a, c);
    }

    #[test]
    fn planted_structure_is_valid() {
        for doc in synthetic_corpus(3, 5) {
            assert!(doc.len() >= 27 && doc.len() <= 36);
            assert_eq!(doc.sentences().len(), 3);
            assert_eq!(doc.gold_clusters.len(), 3);
            doc.validate_spans().unwrap();
            for cluster in doc.gold_clusters.clusters() {
                assert!(cluster.len() >= 2, "no singletons in gold data");
                for span in cluster {
                    assert!(span.width() <= 2);
                    // mentions never cross sentence boundaries
                    assert_eq!(
                        doc.tokens[span.start].sentence_index,
                        doc.tokens[span.end].sentence_index
                    );
                }
            }
            // mention token slots are disjoint across clusters
            let mut seen = std::collections::HashSet::new();
            for cluster in doc.gold_clusters.clusters() {
                for span in cluster {
                    for t in span.start..=span.end {
                        assert!(seen.insert(t), "overlapping mentions at token {t}");
                    }
                }
            }
        }
    }

    #[test]
    fn round_trips_through_conll() {
        let docs = synthetic_corpus(7, 5);
        let text = crate::conll::write_conll_string(&docs).unwrap();
        let back = crate::conll::parse_conll_str(&text).unwrap();
        assert_eq!(docs, back);
    }

    #[test]
    fn one_pronoun_per_document_inside_a_chain() {
        for doc in synthetic_corpus(1, 3) {
            let pronouns = doc.tokens.iter().filter(|t| t.surface == "prn").count();
            assert_eq!(pronouns, 1);
            let position = doc.tokens.iter().position(|t| t.surface == "prn").unwrap();
            let holder = doc
                .gold_clusters
                .clusters()
                .iter()
                .find(|c| c.iter().any(|s| s.start == position));
            let cluster = holder.expect("pronoun belongs to a cluster");
            // It is never the chain-opening mention.
            assert!(cluster.iter().any(|s| s.start < position));
        }
    }
}
