//! Cross-module invariants checked on random inputs.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dre::autodiff::{softmax, Tape, Tensor};
use dre::codebook::{CodeUsage, Codebook, Metric};
use dre::graph::{EdgeBatch, Graph, Splits};
use dre::heads::adjacency_loss_with;

fn small_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, len)
}

proptest! {
    #[test]
    fn perplexity_lies_between_one_and_used_codes(counts in prop::collection::vec(0u64..50, 1..40)) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let used = counts.iter().filter(|&&c| c > 0).count() as f64;
        let p = CodeUsage::from_counts(vec![counts]).perplexity(0).unwrap();
        prop_assert!(p >= 1.0 - 1e-12);
        prop_assert!(p <= used + 1e-9);
    }

    #[test]
    fn batch_search_agrees_with_single_search(
        seed in 0u64..1000,
        count in 1usize..64,
        dim in 1usize..12,
        cosine in any::<bool>(),
        queries in prop::collection::vec(-2.0f64..2.0, 48),
    ) {
        let metric = if cosine { Metric::Cosine } else { Metric::Euclidean };
        let cb = Codebook::synthetic(count, dim, seed).with_metric(metric);
        let n = queries.len() / dim;
        let q = &queries[..n * dim];
        let batched = cb.nearest_batch(q).unwrap();
        for (row, got) in q.chunks(dim).zip(batched) {
            match cb.nearest_index(row) {
                Ok(c) => prop_assert_eq!(got, Some(c)),
                Err(_) => prop_assert_eq!(got, None),
            }
        }
    }

    #[test]
    fn softmax_ignores_logit_shift(logits in small_vec(5), shift in -50.0f64..50.0) {
        let a = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn concat_gradient_splits_into_parts(a in small_vec(6), b in small_vec(4)) {
        let ta = Tensor::new(2, 3, a.clone()).unwrap();
        let tb = Tensor::new(2, 2, b.clone()).unwrap();
        let mut tape = Tape::new();
        let (va, vb) = (tape.param(ta), tape.param(tb));
        let cat = tape.concat_cols(va, vb).unwrap();
        let act = tape.tanh(cat);
        let loss = tape.sum_squares(act);
        tape.backward(loss).unwrap();

        // Same loss on the whole 2x5 matrix.
        let whole: Vec<f64> = (0..2).flat_map(|r| a[r * 3..r * 3 + 3].iter().chain(&b[r * 2..r * 2 + 2]).copied().collect::<Vec<_>>()).collect();
        let mut t2 = Tape::new();
        let w = t2.param(Tensor::new(2, 5, whole).unwrap());
        let act2 = t2.tanh(w);
        let loss2 = t2.sum_squares(act2);
        t2.backward(loss2).unwrap();
        let gw = t2.grad(w).unwrap();
        let (ga, gb) = (tape.grad(va).unwrap(), tape.grad(vb).unwrap());
        for r in 0..2 {
            prop_assert_eq!(&gw.row(r)[..3], ga.row(r));
            prop_assert_eq!(&gw.row(r)[3..], gb.row(r));
        }
    }

    #[test]
    fn zero_dropout_is_identity(x in small_vec(8), seed in any::<u64>()) {
        let mut tape = Tape::new();
        let v = tape.param(Tensor::new(2, 4, x.clone()).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = tape.dropout(v, 0.0, &mut rng).unwrap();
        prop_assert_eq!(tape.value(d).data(), &x[..]);
        let loss = tape.sum_squares(d);
        tape.backward(loss).unwrap();
        let expect: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        prop_assert_eq!(tape.grad(v).unwrap().data(), &expect[..]);
    }

    #[test]
    fn graph_edges_are_symmetric_and_deduplicated(raw in prop::collection::vec((0usize..12, 0usize..12), 0..60)) {
        let n = 12;
        let (g, report) = Graph::new(n, raw.clone(), 1, vec![0.0; n], vec![0; n], vec!["x".into()], Splits::default()).unwrap();
        let unique: BTreeSet<(usize, usize)> = raw.iter().filter(|(u, v)| u != v).map(|&(u, v)| (u.min(v), u.max(v))).collect();
        prop_assert_eq!(g.num_edges(), unique.len());
        prop_assert_eq!(report.self_loops, raw.iter().filter(|(u, v)| u == v).count());
        for &(u, v) in &unique {
            prop_assert!(g.has_edge(u, v) && g.has_edge(v, u));
        }
        let degree_sum: usize = (0..n).map(|v| g.degree(v)).sum();
        prop_assert_eq!(degree_sum, 2 * unique.len());
    }

    #[test]
    fn unit_weights_reduce_to_plain_bce(labels in prop::collection::vec(any::<bool>(), 1..20), probs in prop::collection::vec(0.01f64..0.99, 20)) {
        let n = labels.len();
        let mut batch = EdgeBatch::new((0..n).map(|i| (i, i + 1)).collect(), labels.clone());
        batch.weights = vec![1.0; n];
        let got = adjacency_loss_with(&probs[..n], &batch, true).unwrap();
        let want = labels
            .iter()
            .zip(&probs)
            .map(|(&y, &p)| if y { -p.ln() } else { -(1.0 - p).ln() })
            .sum::<f64>()
            / n as f64;
        prop_assert!((got - want).abs() <= 1e-12);
    }
}
