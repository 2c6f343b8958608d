use arcoref::embed::EmbeddingStack;
use arcoref::metrics::mention_prf;
use arcoref::model::{CorefConfig, CorefModel};
use arcoref::synth::synthetic_corpus;
use arcoref::train::{evaluate_split, train_coref, TrainOptions, TrainingMode};

#[test]
fn scratch_diagnose_e2e() {
    let docs = synthetic_corpus(1234, 5);
    let stack = EmbeddingStack::hashed(32);
    let model = CorefModel::new(CorefConfig::small(), stack.fixed_dim());
    for seed in [8u64] {
        let opts = TrainOptions {
            mode: TrainingMode::EndToEnd,
            total_steps: 2000,
            eval_interval: 10_000,
            learning_rate: 1e-3,
            seed,
        };
        let outcome = train_coref(&model, &docs, None, &stack, None, &opts).unwrap();
        let report = evaluate_split(&model, &outcome.params, &stack, &docs, None, false).unwrap();
        eprintln!(
            "seed {seed}: e2e f1 {:.2}, last loss {:.5}",
            report.conll_avg,
            outcome.losses.last().unwrap()
        );
        for doc in &docs {
            let kept = model
                .pruned_candidate_spans(&outcome.params, &stack, doc)
                .unwrap();
            let gold = doc.gold_clusters.mentions();
            let prf = mention_prf(&gold, &kept);
            let pred = model.predict(&outcome.params, &stack, doc, None).unwrap();
            eprintln!(
                "{}: prune recall {:.1} ({} kept), predicted {} clusters vs {} gold",
                doc.doc_id,
                prf.recall,
                kept.len(),
                pred.len(),
                doc.gold_clusters.len()
            );
            if prf.recall < 100.0 {
                let kept_set: std::collections::HashSet<_> = kept.iter().collect();
                for g in &gold {
                    if !kept_set.contains(g) {
                        eprintln!(
                            "  missing gold [{},{}] surface {:?}",
                            g.start,
                            g.end,
                            doc.tokens[g.start..=g.end]
                                .iter()
                                .map(|t| t.surface.clone())
                                .collect::<Vec<_>>()
                        );
                    }
                }
            }
            if pred != doc.gold_clusters {
                eprintln!("  pred clusters: {:?}", pred.clusters());
                eprintln!("  gold clusters: {:?}", doc.gold_clusters.clusters());
            }
        }
    }
}
