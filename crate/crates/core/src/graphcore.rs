//! Complete-graph edge indexing, subnetwork objects, descriptive metrics and
//! small exact combinatorics helpers.
//!
//! Nodes are 1-based (`1..=n`). Edges are 0-based linear ids over the upper
//! triangle in lexicographic `(i, j)` order, so for `n = 4` the pairs
//! `(1,2), (1,3), (1,4), (2,3), (2,4), (3,4)` map to `0..6`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Bijection between unordered node pairs and linear edge ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeIndex {
    n: usize,
}

impl EdgeIndex {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return invalid(format!("node count must be at least 2, got {n}"));
        }
        Ok(Self { n })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    /// Number of edges, `n(n-1)/2`.
    pub fn len(&self) -> usize {
        self.n * (self.n - 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn row_start(&self, i: usize) -> usize {
        (i - 1) * (2 * self.n - i) / 2
    }

    pub fn pack(&self, i: usize, j: usize) -> Result<usize> {
        if i == 0 || j > self.n || i >= j {
            return invalid(format!(
                "edge ({i}, {j}) needs 1 <= i < j <= {}",
                self.n
            ));
        }
        Ok(self.pack_unchecked(i, j))
    }

    #[inline]
    pub(crate) fn pack_unchecked(&self, i: usize, j: usize) -> usize {
        self.row_start(i) + (j - i - 1)
    }

    /// Inverse of [`EdgeIndex::pack`].
    pub fn unpack(&self, e: usize) -> Result<(usize, usize)> {
        if e >= self.len() {
            return invalid(format!("edge id {e} out of range 0..{}", self.len()));
        }
        // Estimate the row from the closed form, then correct for rounding.
        let n = self.n as f64;
        let disc = (2.0 * n - 1.0).powi(2) - 8.0 * e as f64;
        let mut i = (((2.0 * n - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor() as usize + 1;
        i = i.clamp(1, self.n - 1);
        while i > 1 && self.row_start(i) > e {
            i -= 1;
        }
        while i < self.n - 1 && self.row_start(i + 1) <= e {
            i += 1;
        }
        let j = e - self.row_start(i) + i + 1;
        Ok((i, j))
    }

    /// All `(i, j)` pairs in edge-id order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.n).flat_map(move |i| (i + 1..=self.n).map(move |j| (i, j)))
    }
}

/// Linear id of edge `(i, j)` in a complete graph on `n` nodes.
pub fn pack_edge(i: usize, j: usize, n: usize) -> Result<usize> {
    EdgeIndex::new(n)?.pack(i, j)
}

/// Edge ids of the clique induced by `nodes`. Fewer than two nodes yields
/// an empty set.
pub fn induced_edges(nodes: &BTreeSet<usize>, n: usize) -> Result<BTreeSet<usize>> {
    let index = EdgeIndex::new(n)?;
    if let Some(&bad) = nodes.iter().find(|&&v| v == 0 || v > n) {
        return invalid(format!("node {bad} outside 1..={n}"));
    }
    let list: Vec<usize> = nodes.iter().copied().collect();
    let mut out = BTreeSet::new();
    for (a, &i) in list.iter().enumerate() {
        for &j in &list[a + 1..] {
            out.insert(index.pack_unchecked(i, j));
        }
    }
    Ok(out)
}

/// Group membership of a subject. Signs and "case" wording follow `Case`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Group {
    Control,
    Case,
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        match g {
            Group::Control => 0,
            Group::Case => 1,
        }
    }
}

impl TryFrom<u8> for Group {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Group::Control),
            1 => Ok(Group::Case),
            other => Err(format!("group label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub group: Group,
    /// Upper-triangle connectivity vector of length `n(n-1)/2`.
    pub edges: Vec<f64>,
}

/// Edge-vectorized connectivity for every subject of a two-group study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectomeDataset {
    n: usize,
    subjects: Vec<Subject>,
}

impl ConnectomeDataset {
    pub fn new(n: usize, subjects: Vec<Subject>) -> Result<Self> {
        let index = EdgeIndex::new(n)?;
        for s in &subjects {
            if s.edges.len() != index.len() {
                return invalid(format!(
                    "subject {} has {} edge values, expected {}",
                    s.id,
                    s.edges.len(),
                    index.len()
                ));
            }
            if let Some(pos) = s.edges.iter().position(|v| !v.is_finite()) {
                return invalid(format!("subject {} has a non-finite value at edge {pos}", s.id));
            }
        }
        let cases = subjects.iter().filter(|s| s.group == Group::Case).count();
        if cases == 0 || cases == subjects.len() {
            return invalid("both groups must contain at least one subject");
        }
        Ok(Self { n, subjects })
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn edge_index(&self) -> EdgeIndex {
        EdgeIndex { n: self.n }
    }

    pub fn edge_count(&self) -> usize {
        self.edge_index().len()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn labels(&self) -> Vec<Group> {
        self.subjects.iter().map(|s| s.group).collect()
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        let cases = self.subjects.iter().filter(|s| s.group == Group::Case).count();
        (self.subjects.len() - cases, cases)
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v - 1]`.
    pub fn relabel_nodes(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let index = self.edge_index();
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let mut edges = vec![0.0; s.edges.len()];
                for (e, (i, j)) in index.pairs().enumerate() {
                    let (a, b) = (perm[i - 1], perm[j - 1]);
                    edges[index.pack_unchecked(a.min(b), a.max(b))] = s.edges[e];
                }
                Subject { id: s.id.clone(), group: s.group, edges }
            })
            .collect();
        Ok(Self { n: self.n, subjects })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return invalid(format!("permutation has length {}, expected {n}", perm.len()));
    }
    for &v in perm {
        if v == 0 || v > n || std::mem::replace(&mut seen[v - 1], true) {
            return invalid("node relabeling is not a permutation of 1..=n");
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    CliqueInduced,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    /// Fraction of the subnetwork's edges whose p-value is below the
    /// suprathreshold cutoff.
    pub suprathreshold_density: Option<f64>,
    /// Rich-club coefficient of the suprathreshold subgraph for `k = 0, 1, ...`.
    pub rich_club: Vec<f64>,
}

/// A detected network object: node set, edge set, topology and test result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subnetwork {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub topology: Topology,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

impl Subnetwork {
    pub fn clique(nodes: BTreeSet<usize>, n: usize) -> Result<Self> {
        let edges = induced_edges(&nodes, n)?;
        Ok(Self {
            nodes: nodes.into_iter().collect(),
            edges: edges.into_iter().collect(),
            topology: Topology {
                kind: TopologyKind::CliqueInduced,
                suprathreshold_density: None,
                rich_club: Vec::new(),
            },
            statistic: None,
            p_value: None,
        })
    }

    pub fn custom(nodes: BTreeSet<usize>, edges: BTreeSet<usize>, n: usize) -> Result<Self> {
        let index = EdgeIndex::new(n)?;
        for &e in &edges {
            let (i, j) = index.unpack(e)?;
            if !nodes.contains(&i) || !nodes.contains(&j) {
                return invalid(format!("edge ({i}, {j}) has an endpoint outside the node set"));
            }
        }
        Ok(Self {
            nodes: nodes.into_iter().collect(),
            edges: edges.into_iter().collect(),
            topology: Topology {
                kind: TopologyKind::Custom,
                suprathreshold_density: None,
                rich_club: Vec::new(),
            },
            statistic: None,
            p_value: None,
        })
    }

    /// Fills the descriptive topology metrics from per-edge p-values.
    pub fn describe(&mut self, p_values: &[f64], p0: f64, n: usize) -> Result<()> {
        let index = EdgeIndex::new(n)?;
        let supra: Vec<usize> = self.edges.iter().copied().filter(|&e| p_values[e] < p0).collect();
        self.topology.suprathreshold_density = if self.edges.is_empty() {
            None
        } else {
            Some(supra.len() as f64 / self.edges.len() as f64)
        };
        let local: std::collections::HashMap<usize, usize> =
            self.nodes.iter().enumerate().map(|(a, &v)| (v, a)).collect();
        let m = self.nodes.len();
        let mut adj = vec![vec![false; m]; m];
        for e in supra {
            let (i, j) = index.unpack(e)?;
            let (a, b) = (local[&i], local[&j]);
            adj[a][b] = true;
            adj[b][a] = true;
        }
        let max_degree = adj.iter().map(|r| r.iter().filter(|&&x| x).count()).max().unwrap_or(0);
        self.topology.rich_club = (0..max_degree.max(1))
            .map(|k| rich_club_coefficient(&adj, k))
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Node-to-cluster assignment. Cluster ids run over `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    /// `assignment[v - 1]` is the cluster of node `v`. Every id in `1..=k`
    /// must be used.
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let n = assignment.len();
        if n == 0 {
            return invalid("partition of an empty node set");
        }
        let k = *assignment.iter().max().unwrap();
        if assignment.contains(&0) {
            return invalid("cluster ids start at 1");
        }
        let mut used = vec![false; k];
        for &c in &assignment {
            used[c - 1] = true;
        }
        if used.iter().any(|u| !u) {
            return invalid("cluster ids must be contiguous 1..=k");
        }
        Ok(Self { assignment, k })
    }

    /// Builds a partition from arbitrary labels, numbering clusters by their
    /// smallest node.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len() + 1;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self::new(assignment)
    }

    pub fn trivial(n: usize) -> Self {
        Self { assignment: vec![1; n], k: 1 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node - 1]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Node sets per cluster, indexed by `cluster id - 1`.
    pub fn clusters(&self) -> Vec<BTreeSet<usize>> {
        let mut out = vec![BTreeSet::new(); self.k];
        for (v, &c) in self.assignment.iter().enumerate() {
            out[c - 1].insert(v + 1);
        }
        out
    }
}

/// Edge density among nodes whose degree exceeds `k`:
/// `2 E_{>k} / (N_{>k} (N_{>k} - 1))`, or 1 when at most one node survives.
pub fn rich_club_coefficient(adjacency: &[Vec<bool>], k: usize) -> Result<f64> {
    let n = adjacency.len();
    for (i, row) in adjacency.iter().enumerate() {
        if row.len() != n {
            return invalid("adjacency matrix is not square");
        }
        if row[i] {
            return invalid(format!("adjacency has a self loop at node {}", i + 1));
        }
        for j in 0..i {
            if row[j] != adjacency[j][i] {
                return invalid(format!("adjacency is not symmetric at ({}, {})", j + 1, i + 1));
            }
        }
    }
    let rich: Vec<usize> = (0..n)
        .filter(|&i| adjacency[i].iter().filter(|&&x| x).count() > k)
        .collect();
    let m = rich.len();
    if m <= 1 {
        return Ok(1.0);
    }
    let mut edges = 0usize;
    for (a, &i) in rich.iter().enumerate() {
        for &j in &rich[a + 1..] {
            if adjacency[i][j] {
                edges += 1;
            }
        }
    }
    Ok(2.0 * edges as f64 / (m * (m - 1)) as f64)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `P(X >= m)` for `X ~ Binomial(trials, p)`, summed in log space.
pub fn binomial_tail(trials: u64, p: f64, m: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("probability {p} outside [0, 1]"));
    }
    if m > trials {
        return invalid(format!("threshold {m} exceeds {trials} trials"));
    }
    if m == 0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    let terms: Vec<f64> = (m..=trials)
        .map(|x| ln_choose(trials, x) + x as f64 * lp + (trials - x) as f64 * lq)
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
    Ok((top + sum.ln()).exp().min(1.0))
}

/// Dice-style overlap `2|A ∩ B| / (|A| + |B|)`; 0 when both are empty.
pub fn positive_agreement(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 0.0;
    }
    2.0 * a.intersection(b).count() as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn pack_matches_lexicographic_table() {
        let idx = EdgeIndex::new(4).unwrap();
        let expected = [((1, 2), 0), ((1, 3), 1), ((1, 4), 2), ((2, 3), 3), ((2, 4), 4), ((3, 4), 5)];
        for ((i, j), e) in expected {
            assert_eq!(idx.pack(i, j).unwrap(), e);
            assert_eq!(idx.unpack(e).unwrap(), (i, j));
        }
        assert_eq!(EdgeIndex::new(90).unwrap().len(), 4005);
    }

    #[test]
    fn pack_rejects_bad_pairs() {
        assert!(pack_edge(3, 2, 4).is_err());
        assert!(pack_edge(2, 2, 4).is_err());
        assert!(pack_edge(0, 2, 4).is_err());
        assert!(pack_edge(1, 5, 4).is_err());
        assert!(EdgeIndex::new(1).is_err());
        assert!(EdgeIndex::new(4).unwrap().unpack(6).is_err());
    }

    #[test]
    fn pack_unpack_exhaustive_up_to_200() {
        for n in 2..=200 {
            let idx = EdgeIndex::new(n).unwrap();
            let mut expect = 0;
            for (i, j) in idx.pairs() {
                assert_eq!(idx.pack(i, j).unwrap(), expect);
                assert_eq!(idx.unpack(expect).unwrap(), (i, j), "n={n} e={expect}");
                expect += 1;
            }
            assert_eq!(expect, n * (n - 1) / 2);
        }
    }

    #[test]
    fn induced_edges_examples() {
        assert_eq!(induced_edges(&set(&[1, 2, 3]), 4).unwrap(), set(&[0, 1, 3]));
        assert!(induced_edges(&set(&[5]), 10).unwrap().is_empty());
        let twenty: BTreeSet<usize> = (1..=20).collect();
        assert_eq!(induced_edges(&twenty, 100).unwrap().len(), 190);
        assert!(induced_edges(&set(&[1, 11]), 10).is_err());
    }

    fn complete(n: usize) -> Vec<Vec<bool>> {
        (0..n).map(|i| (0..n).map(|j| i != j).collect()).collect()
    }

    #[test]
    fn rich_club_examples() {
        assert_eq!(rich_club_coefficient(&complete(5), 3).unwrap(), 1.0);
        let empty = vec![vec![false; 6]; 6];
        for k in 0..4 {
            assert_eq!(rich_club_coefficient(&empty, k).unwrap(), 1.0);
        }
        let mut star = vec![vec![false; 5]; 5];
        for leaf in 1..5 {
            star[0][leaf] = true;
            star[leaf][0] = true;
        }
        assert_eq!(rich_club_coefficient(&star, 1).unwrap(), 1.0);
        // At k = 0 every node survives: 4 edges over 10 pairs.
        assert!((rich_club_coefficient(&star, 0).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rich_club_rejects_asymmetric() {
        let mut a = vec![vec![false; 3]; 3];
        a[0][1] = true;
        assert!(rich_club_coefficient(&a, 0).is_err());
        let mut b = complete(3);
        b[1][1] = true;
        assert!(rich_club_coefficient(&b, 0).is_err());
    }

    #[test]
    fn binomial_tail_examples() {
        let t = binomial_tail(10, 0.1, 5).unwrap();
        assert!((t - 1.635e-3).abs() < 1e-6, "{t}");
        // Exact rational summation gives 4.509040409551903e-12.
        let big = binomial_tail(45, 0.1, 23).unwrap();
        assert!((big / 4.509040409551903e-12 - 1.0).abs() < 1e-10, "{big}");
        assert_eq!(binomial_tail(10, 0.1, 0).unwrap(), 1.0);
        assert_eq!(binomial_tail(10, 0.0, 1).unwrap(), 0.0);
        assert!(binomial_tail(10, 1.5, 1).is_err());
        assert!(binomial_tail(10, 0.5, 11).is_err());
    }

    #[test]
    fn positive_agreement_examples() {
        assert_eq!(positive_agreement(&set(&[1, 2]), &set(&[1, 2])), 1.0);
        assert_eq!(positive_agreement(&set(&[1, 2]), &set(&[3])), 0.0);
        assert_eq!(positive_agreement(&set(&[]), &set(&[])), 0.0);
        let a: BTreeSet<usize> = (0..40).collect();
        let b: BTreeSet<usize> = (34..86).collect();
        assert_eq!(a.intersection(&b).count(), 6);
        assert!((positive_agreement(&a, &b) - 12.0 / 92.0).abs() < 1e-15);
    }

    #[test]
    fn subnetwork_invariants() {
        let s = Subnetwork::clique(set(&[2, 4, 5]), 6).unwrap();
        assert_eq!(s.edges.len(), 3);
        let idx = EdgeIndex::new(6).unwrap();
        let outside = idx.pack(1, 2).unwrap();
        assert!(Subnetwork::custom(set(&[2, 4, 5]), set(&[outside]), 6).is_err());
        let inside = idx.pack(2, 5).unwrap();
        assert!(Subnetwork::custom(set(&[2, 4, 5]), set(&[inside]), 6).is_ok());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![1, 2, 2, 1]).is_ok());
        assert!(Partition::new(vec![1, 3, 3]).is_err());
        assert!(Partition::new(vec![0, 1]).is_err());
        let p = Partition::from_labels(&[7, 3, 7, 9]).unwrap();
        assert_eq!(p.assignment(), &[1, 2, 1, 3]);
        assert_eq!(p.k(), 3);
        assert_eq!(p.clusters()[0], set(&[1, 3]));
    }

    #[test]
    fn dataset_validation() {
        let s = |id: &str, g, v: Vec<f64>| Subject { id: id.into(), group: g, edges: v };
        assert!(ConnectomeDataset::new(3, vec![s("a", Group::Case, vec![0.0; 3])]).is_err());
        assert!(ConnectomeDataset::new(
            3,
            vec![s("a", Group::Case, vec![0.0; 3]), s("b", Group::Control, vec![0.0; 2])]
        )
        .is_err());
        assert!(ConnectomeDataset::new(
            3,
            vec![s("a", Group::Case, vec![f64::NAN; 3]), s("b", Group::Control, vec![0.0; 3])]
        )
        .is_err());
        let d = ConnectomeDataset::new(
            3,
            vec![s("a", Group::Case, vec![1.0, 2.0, 3.0]), s("b", Group::Control, vec![0.0; 3])],
        )
        .unwrap();
        assert_eq!(d.group_sizes(), (1, 1));
        // Swap nodes 1 and 3: edge (1,2) becomes (2,3).
        let r = d.relabel_nodes(&[3, 2, 1]).unwrap();
        assert_eq!(r.subjects()[0].edges, vec![3.0, 2.0, 1.0]);
    }
}
