//! Latent subnetwork extraction.
//!
//! For each candidate cluster count `K` the weight matrix is partitioned by
//! RatioCut spectral clustering (unnormalized Laplacian, k-means on the
//! `K` smallest eigenvectors), the partition is refined by local node moves,
//! and the `K` maximizing
//!
//! ```text
//! sum_k (S_k / |E_k|)^lambda0 * S_k^(1 - lambda0),   S_k = sum of w over E_k
//! ```
//!
//! wins. Clusters with at least `min_cluster_nodes` nodes and positive weight
//! become clique-induced [`Subnetwork`]s.

mod refine;
mod spectral;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use spectral::{SpectralEmbedding, ZERO_EIGENVALUE_TOL};

use crate::edgestats::{EdgeTestResult, EdgeTester, TestMethod, WeightMatrix};
use crate::error::{invalid, Result};
use crate::graphcore::{ConnectomeDataset, Partition, Subnetwork};
use crate::rng;

/// k-means runs per embedding dimension that go on to refinement.
const REFINED_RUNS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub lambda0: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub min_cluster_nodes: usize,
    pub kmeans_restarts: usize,
    /// Refine spectral partitions by criterion-improving node moves.
    pub refine: bool,
    /// Cutoff used for the descriptive suprathreshold metrics.
    pub describe_p0: f64,
    pub seed: u64,
}

impl DetectConfig {
    /// Defaults for an `n`-node graph: `K` from 1 to `min(n - 1, 30)`.
    pub fn for_nodes(n: usize) -> Self {
        Self {
            lambda0: 0.5,
            k_min: 1,
            k_max: n.saturating_sub(1).clamp(1, 30),
            min_cluster_nodes: 3,
            kmeans_restarts: 20,
            refine: true,
            describe_p0: 0.05,
            seed: 0,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.lambda0 > 0.0 && self.lambda0 < 1.0) {
            return invalid(format!("lambda0 must lie in (0, 1), got {}", self.lambda0));
        }
        if self.k_min > self.k_max {
            return invalid(format!("empty K range {}..={}", self.k_min, self.k_max));
        }
        if self.k_min < 1 || self.k_max > n {
            return invalid(format!("K range {}..={} must lie within 1..={n}", self.k_min, self.k_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub partition: Partition,
    pub k_selected: usize,
    pub subnetworks: Vec<Subnetwork>,
    /// Cluster id (1-based) of each entry of `subnetworks`.
    pub subnetwork_clusters: Vec<usize>,
    /// `rho_kk = S_k / |E_k|` per cluster of `partition` (0 for singletons).
    pub per_cluster_quality: Vec<f64>,
    pub objective: f64,
}

/// Per-cluster weight sums and node counts for 0-based labels.
fn cluster_sums(w: &WeightMatrix, labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    for (e, (i, j)) in w.edge_index().pairs().enumerate() {
        let (a, b) = (labels[i - 1], labels[j - 1]);
        if a == b {
            sums[a] += w.weights()[e];
        }
    }
    (sums, sizes)
}

fn criterion_of_labels(w: &WeightMatrix, labels: &[usize], k: usize, lambda0: f64) -> f64 {
    let (sums, sizes) = cluster_sums(w, labels, k);
    sums.iter()
        .zip(&sizes)
        .map(|(&s, &m)| refine::cluster_term(s, m, lambda0))
        .sum()
}

/// Penalized subgraph objective `sum_k exp(log S_k - lambda0 log |E_k|)`.
/// Clusters with no edges or zero weight contribute 0.
pub fn objective_value(w: &WeightMatrix, partition: &Partition, lambda0: f64) -> Result<f64> {
    if partition.nodes() != w.nodes() {
        return invalid(format!(
            "partition covers {} nodes, weight matrix has {}",
            partition.nodes(),
            w.nodes()
        ));
    }
    let labels: Vec<usize> = partition.assignment().iter().map(|c| c - 1).collect();
    Ok(criterion_of_labels(w, &labels, partition.k(), lambda0))
}

fn spectral_labels(emb: &SpectralEmbedding, n: usize, k: usize, cfg: &DetectConfig) -> Vec<usize> {
    if k <= 1 {
        return vec![0; n];
    }
    let rows = emb.rows(k);
    let mut stream = rng::stream(cfg.seed, rng::DOMAIN_KMEANS, k as u64);
    spectral::kmeans(&rows, n, k, k, cfg.kmeans_restarts, &mut stream)
}

/// RatioCut spectral partition into at most `k` clusters.
pub fn ratio_cut_partition(w: &WeightMatrix, k: usize, cfg: &DetectConfig) -> Result<Partition> {
    let n = w.nodes();
    if k < 1 || k > n {
        return invalid(format!("K = {k} outside 1..={n}"));
    }
    if k == 1 {
        return Ok(Partition::trivial(n));
    }
    let emb = SpectralEmbedding::new(&w.dense(), n)?;
    Partition::from_labels(&spectral_labels(&emb, n, k, cfg))
}

/// Grid search over `K`; ties go to the smaller `K`.
pub fn select_k(w: &WeightMatrix, cfg: &DetectConfig) -> Result<DetectionResult> {
    let n = w.nodes();
    cfg.validate(n)?;
    let dense = w.dense();
    let emb = SpectralEmbedding::new(&dense, n)?;
    let candidates: Vec<(usize, f64, Vec<usize>)> = (cfg.k_min..=cfg.k_max)
        .into_par_iter()
        .map(|k| {
            if !cfg.refine || k == 1 {
                let labels = spectral_labels(&emb, n, k, cfg);
                return (k, criterion_of_labels(w, &labels, k, cfg.lambda0), labels);
            }
            // Refine the lowest-inertia k-means runs plus a few runs on
            // embeddings with one or two extra eigenvectors; the best-inertia
            // run is often not the one that climbs highest.
            let mut stream = rng::stream(cfg.seed, rng::DOMAIN_KMEANS, k as u64);
            let mut runs = spectral::kmeans_runs(&emb.rows(k), n, k, k, cfg.kmeans_restarts, &mut stream);
            runs.sort_by(|a, b| a.1.total_cmp(&b.1));
            runs.truncate(REFINED_RUNS);
            for d in k + 1..=(k + 2).min(n) {
                runs.extend(spectral::kmeans_runs(&emb.rows(d), n, d, k, REFINED_RUNS, &mut stream));
            }
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut seen = BTreeSet::new();
            for (mut labels, _) in runs {
                // Restarts often land on the same partition; refine each once.
                let canonical = Partition::from_labels(&labels).map(|p| p.assignment().to_vec()).unwrap_or_default();
                if !seen.insert(canonical) {
                    continue;
                }
                refine::refine(&dense, n, &mut labels, k, cfg.lambda0);
                let crit = criterion_of_labels(w, &labels, k, cfg.lambda0);
                if best.as_ref().is_none_or(|(b, _)| crit > *b + 1e-12 * b.abs()) {
                    best = Some((crit, labels));
                }
            }
            let (_, mut labels) = best.unwrap();
            refine::refine_pairs(&dense, n, &mut labels, k, cfg.lambda0);
            (k, criterion_of_labels(w, &labels, k, cfg.lambda0), labels)
        })
        .collect();
    let mut best = &candidates[0];
    for cand in &candidates[1..] {
        if cand.1 > best.1 + 1e-12 * best.1.abs() {
            best = cand;
        }
    }
    let (k_selected, objective, labels) = best;
    let partition = Partition::from_labels(labels)?;
    build_result(w, partition, *k_selected, *objective, cfg)
}

fn build_result(
    w: &WeightMatrix,
    partition: Partition,
    k_selected: usize,
    objective: f64,
    cfg: &DetectConfig,
) -> Result<DetectionResult> {
    let n = w.nodes();
    let labels: Vec<usize> = partition.assignment().iter().map(|c| c - 1).collect();
    let (sums, sizes) = cluster_sums(w, &labels, partition.k());
    let per_cluster_quality: Vec<f64> = sums
        .iter()
        .zip(&sizes)
        .map(|(&s, &m)| {
            let e = m * m.saturating_sub(1) / 2;
            if e == 0 {
                0.0
            } else {
                s / e as f64
            }
        })
        .collect();
    let mut subnetworks = Vec::new();
    let mut subnetwork_clusters = Vec::new();
    for (c, nodes) in partition.clusters().into_iter().enumerate() {
        if nodes.len() >= cfg.min_cluster_nodes.max(2) && sums[c] > 0.0 {
            subnetworks.push(Subnetwork::clique(nodes, n)?);
            subnetwork_clusters.push(c + 1);
        }
    }
    Ok(DetectionResult {
        partition,
        k_selected,
        subnetworks,
        subnetwork_clusters,
        per_cluster_quality,
        objective,
    })
}

/// Everything produced by one pass of extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub tests: EdgeTestResult,
    pub weights: WeightMatrix,
    pub detection: DetectionResult,
}

/// Edge tests, weights and subnetwork detection with descriptive metrics.
pub fn extract(dataset: &ConnectomeDataset, method: TestMethod, cfg: &DetectConfig) -> Result<Extraction> {
    let tests = EdgeTester::new(dataset, method).run(&dataset.labels())?;
    let weights = WeightMatrix::from_p_values(dataset.nodes(), &tests.p_values)?;
    let mut detection = select_k(&weights, cfg)?;
    for s in &mut detection.subnetworks {
        s.describe(&tests.p_values, cfg.describe_p0, dataset.nodes())?;
    }
    Ok(Extraction { tests, weights, detection })
}

pub fn extract_subnetworks(
    dataset: &ConnectomeDataset,
    method: TestMethod,
    cfg: &DetectConfig,
) -> Result<DetectionResult> {
    Ok(extract(dataset, method, cfg)?.detection)
}

/// Average `rho_kk` over the reported subnetworks, or `None` if there are none.
pub fn mean_subnetwork_quality(result: &DetectionResult) -> Option<f64> {
    if result.subnetworks.is_empty() {
        return None;
    }
    let total: f64 = result
        .subnetwork_clusters
        .iter()
        .map(|&c| result.per_cluster_quality[c - 1])
        .sum();
    Some(total / result.subnetworks.len() as f64)
}

/// Node set of the subnetwork containing the most nodes of `target`.
pub fn best_matching_nodes(result: &DetectionResult, target: &BTreeSet<usize>) -> Option<BTreeSet<usize>> {
    result
        .subnetworks
        .iter()
        .max_by_key(|s| s.nodes.iter().filter(|v| target.contains(v)).count())
        .map(|s| s.nodes.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block_weights(n: usize, blocks: &[&[usize]], inside: f64, outside: f64) -> WeightMatrix {
        let idx = crate::graphcore::EdgeIndex::new(n).unwrap();
        let block_of = |v: usize| blocks.iter().position(|b| b.contains(&v));
        let w = idx
            .pairs()
            .map(|(i, j)| match (block_of(i), block_of(j)) {
                (Some(a), Some(b)) if a == b => inside,
                _ => outside,
            })
            .collect();
        WeightMatrix::new(n, w).unwrap()
    }

    /// Every set partition of `0..n` into at most `kmax` blocks, as labels.
    pub(crate) fn all_partitions(n: usize, kmax: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut labels = vec![0usize; n];
        fn rec(i: usize, used: usize, n: usize, kmax: usize, labels: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if i == n {
                out.push(labels.clone());
                return;
            }
            for c in 0..(used + 1).min(kmax) {
                labels[i] = c;
                rec(i + 1, used.max(c + 1), n, kmax, labels, out);
            }
        }
        rec(0, 0, n, kmax, &mut labels, &mut out);
        out
    }

    fn ratio_cut_cost(w: &WeightMatrix, labels: &[usize]) -> f64 {
        let k = labels.iter().max().unwrap() + 1;
        let mut cut = vec![0.0; k];
        let mut size = vec![0.0; k];
        for &l in labels {
            size[l] += 1.0;
        }
        for (e, (i, j)) in w.edge_index().pairs().enumerate() {
            let (a, b) = (labels[i - 1], labels[j - 1]);
            if a != b {
                cut[a] += w.weights()[e];
                cut[b] += w.weights()[e];
            }
        }
        cut.iter().zip(&size).map(|(c, s)| c / s).sum()
    }

    #[test]
    fn objective_closed_forms() {
        let n = 6;
        let w = WeightMatrix::new(n, vec![2.0; 15]).unwrap();
        let singletons = Partition::new((1..=n).collect()).unwrap();
        assert_eq!(objective_value(&w, &singletons, 0.5).unwrap(), 0.0);
        let one = Partition::trivial(n);
        // All weights equal w over e edges: w * sqrt(e).
        let got = objective_value(&w, &one, 0.5).unwrap();
        assert!((got - 2.0 * 15f64.sqrt()).abs() < 1e-12);
        let got = objective_value(&w, &one, 0.3).unwrap();
        assert!((got - 30.0 * 15f64.powf(-0.3)).abs() < 1e-12);
        let mismatched = Partition::trivial(5);
        assert!(objective_value(&w, &mismatched, 0.5).is_err());
    }

    #[test]
    fn objective_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 7;
        let idx = crate::graphcore::EdgeIndex::new(n).unwrap();
        let w: Vec<f64> = (0..idx.len()).map(|_| rng.random::<f64>() * 3.0).collect();
        let w = WeightMatrix::new(n, w).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(1..4)).collect();
        let part = Partition::from_labels(&labels).unwrap();
        let perm = [4usize, 7, 1, 3, 2, 6, 5];
        let mut pw = vec![0.0; idx.len()];
        for (e, (i, j)) in idx.pairs().enumerate() {
            let (a, b) = (perm[i - 1], perm[j - 1]);
            pw[idx.pack(a.min(b), a.max(b)).unwrap()] = w.weights()[e];
        }
        let mut plabels = vec![0; n];
        for v in 0..n {
            plabels[perm[v] - 1] = labels[v];
        }
        let pw = WeightMatrix::new(n, pw).unwrap();
        let pp = Partition::from_labels(&plabels).unwrap();
        let a = objective_value(&w, &part, 0.5).unwrap();
        let b = objective_value(&pw, &pp, 0.5).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ratio_cut_recovers_two_blocks() {
        let n = 8;
        let w = block_weights(n, &[&[1, 3, 5, 7], &[2, 4, 6, 8]], 1.0, 0.0);
        let cfg = DetectConfig::for_nodes(n);
        let p = ratio_cut_partition(&w, 2, &cfg).unwrap();
        let expected = Partition::from_labels(&[0, 1, 0, 1, 0, 1, 0, 1]).unwrap();
        assert_eq!(p, expected);
        // Brute force: the block split is the unique RatioCut minimizer.
        let best = all_partitions(n, 2)
            .into_iter()
            .filter(|l| l.contains(&1))
            .min_by(|a, b| ratio_cut_cost(&w, a).total_cmp(&ratio_cut_cost(&w, b)))
            .unwrap();
        assert_eq!(Partition::from_labels(&best).unwrap(), expected);
    }

    #[test]
    fn ratio_cut_on_zero_weights_is_valid() {
        let w = WeightMatrix::new(6, vec![0.0; 15]).unwrap();
        let cfg = DetectConfig::for_nodes(6);
        for k in 1..=6 {
            let p = ratio_cut_partition(&w, k, &cfg).unwrap();
            assert!(p.k() >= 1 && p.k() <= k);
            assert_eq!(p.nodes(), 6);
        }
        assert!(ratio_cut_partition(&w, 7, &cfg).is_err());
        assert!(ratio_cut_partition(&w, 0, &cfg).is_err());
    }

    #[test]
    fn select_k_rejects_empty_range() {
        let w = WeightMatrix::new(4, vec![1.0; 6]).unwrap();
        let mut cfg = DetectConfig::for_nodes(4);
        cfg.k_min = 3;
        cfg.k_max = 2;
        assert!(select_k(&w, &cfg).is_err());
        cfg.k_min = 1;
        cfg.k_max = 5;
        assert!(select_k(&w, &cfg).is_err());
        cfg.k_max = 3;
        cfg.lambda0 = 1.0;
        assert!(select_k(&w, &cfg).is_err());
    }

    #[test]
    fn select_k_prefers_smaller_k_on_ties() {
        // Zero weights: every K scores 0, so K = k_min must be chosen.
        let w = WeightMatrix::new(6, vec![0.0; 15]).unwrap();
        let mut cfg = DetectConfig::for_nodes(6);
        cfg.k_min = 2;
        let r = select_k(&w, &cfg).unwrap();
        assert_eq!(r.k_selected, 2);
        assert!(r.subnetworks.is_empty());
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn select_k_finds_hot_clique_in_uniform_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 40;
        let hot: Vec<usize> = vec![3, 7, 8, 15, 21, 22, 30, 33, 38, 40];
        let idx = crate::graphcore::EdgeIndex::new(n).unwrap();
        let w: Vec<f64> = idx
            .pairs()
            .map(|(i, j)| {
                let base: f64 = -(1.0 - rng.random::<f64>()).ln();
                if hot.contains(&i) && hot.contains(&j) { base + 8.0 } else { base }
            })
            .collect();
        let w = WeightMatrix::new(n, w).unwrap();
        let r = select_k(&w, &DetectConfig::for_nodes(n)).unwrap();
        assert!(r.k_selected >= 2);
        let target: BTreeSet<usize> = hot.iter().copied().collect();
        assert_eq!(best_matching_nodes(&r, &target).unwrap(), target);
        // Reported subnetworks are node-disjoint.
        let mut seen = BTreeSet::new();
        for s in &r.subnetworks {
            for v in &s.nodes {
                assert!(seen.insert(*v));
            }
        }
        assert!(r.per_cluster_quality.iter().all(|&q| q >= 0.0));
    }

    #[test]
    fn selection_is_deterministic_and_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 12;
        let w: Vec<f64> = (0..n * (n - 1) / 2).map(|_| rng.random::<f64>() * 4.0).collect();
        let w = WeightMatrix::new(n, w).unwrap();
        let cfg = DetectConfig::for_nodes(n);
        let a = select_k(&w, &cfg).unwrap();
        assert_eq!(a, select_k(&w, &cfg).unwrap());
        for c in [0.5, 2.0, 4.0] {
            let b = select_k(&w.scaled(c).unwrap(), &cfg).unwrap();
            assert_eq!(a.partition, b.partition, "c = {c}");
            assert_eq!(a.k_selected, b.k_selected);
            assert!((b.objective - c * a.objective).abs() < 1e-9 * b.objective);
        }
    }
}
