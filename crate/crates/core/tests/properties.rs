use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use netobj::baselines::{bh_adjusted, bh_fdr, storey_qvalues};
use netobj::detect::objective_value;
use netobj::edgestats::{wilcoxon_rank_sum, WeightMatrix};
use netobj::graphcore::{induced_edges, EdgeIndex, Partition};
use netobj::infer::edge_permute;

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #[test]
    fn pack_unpack_round_trip(n in 2usize..200, a in 0usize..1000, b in 0usize..1000) {
        let idx = EdgeIndex::new(n).unwrap();
        let (i, j) = (1 + a % n, 1 + b % n);
        prop_assume!(i != j);
        let (i, j) = (i.min(j), i.max(j));
        let e = idx.pack(i, j).unwrap();
        prop_assert!(e < n * (n - 1) / 2);
        prop_assert_eq!(idx.unpack(e).unwrap(), (i, j));
        prop_assert!(idx.pack(j, i).is_err());
    }

    #[test]
    fn induced_edges_count_is_a_clique(n in 3usize..40, picks in prop::collection::vec(0usize..40, 0..20)) {
        let nodes: BTreeSet<usize> = picks.into_iter().map(|p| 1 + p % n).collect();
        let m = nodes.len();
        prop_assert_eq!(induced_edges(&nodes, n).unwrap().len(), m * m.saturating_sub(1) / 2);
    }

    #[test]
    fn objective_ignores_cluster_naming(
        w in prop::collection::vec(0.0f64..5.0, 28),
        labels in prop::collection::vec(0usize..4, 8),
        shift in 1usize..4,
    ) {
        let wm = WeightMatrix::new(8, w).unwrap();
        let a = Partition::from_labels(&labels).unwrap();
        let renamed: Vec<usize> = labels.iter().map(|l| (l + shift) % 4).collect();
        let b = Partition::from_labels(&renamed).unwrap();
        prop_assert_eq!(a.assignment(), b.assignment());
        let (x, y) = (objective_value(&wm, &a, 0.5).unwrap(), objective_value(&wm, &b, 0.5).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }

    #[test]
    fn bh_rejections_grow_with_q(p in prop::collection::vec(1e-12f64..=1.0, 1..60), q1 in 0.01f64..0.5, dq in 0.0f64..0.4) {
        let small = bh_fdr(&p, q1).unwrap().rejected;
        let large = bh_fdr(&p, q1 + dq).unwrap().rejected;
        prop_assert!(small.is_subset(&large));
    }

    #[test]
    fn adjusted_values_are_monotone_in_p(p in prop::collection::vec(1e-12f64..=1.0, 1..60)) {
        let bh = bh_adjusted(&p).unwrap();
        let q = storey_qvalues(&p).unwrap();
        for i in 0..p.len() {
            // Storey's q-values carry a pi0 <= 1 factor and may sit below p.
            prop_assert!(bh[i] >= p[i] * (1.0 - 1e-12) && q[i] <= bh[i] * (1.0 + 1e-12));
        }
        for adjusted in [bh, q] {
            for i in 0..p.len() {
                prop_assert!(adjusted[i] <= 1.0);
                for j in 0..p.len() {
                    if p[i] < p[j] {
                        prop_assert!(adjusted[i] <= adjusted[j] + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn rank_sum_is_symmetric_and_bounded(
        x in prop::collection::vec(-3.0f64..3.0, 1..15),
        y in prop::collection::vec(-3.0f64..3.0, 1..15),
    ) {
        let a = wilcoxon_rank_sum(&x, &y).unwrap();
        let b = wilcoxon_rank_sum(&y, &x).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-12);
        let shifted: Vec<f64> = x.iter().map(|v| v * 2.0 + 7.0).collect();
        let y2: Vec<f64> = y.iter().map(|v| v * 2.0 + 7.0).collect();
        prop_assert!((wilcoxon_rank_sum(&shifted, &y2).unwrap() - a).abs() < 1e-12);
    }

    #[test]
    fn edge_permutation_keeps_the_weight_multiset(w in prop::collection::vec(0.0f64..10.0, 45), seed in any::<u64>()) {
        let wm = WeightMatrix::new(10, w.clone()).unwrap();
        let shuffled = edge_permute(&wm, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(sorted(shuffled.weights().to_vec()), sorted(w));
    }
}
