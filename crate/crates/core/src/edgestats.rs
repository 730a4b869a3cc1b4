//! Per-edge two-sample tests and the `-log p` weight matrix.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};
use crate::graphcore::{ConnectomeDataset, EdgeIndex, Group};

/// Smallest p-value used when converting to weights.
pub const P_FLOOR: f64 = 1e-300;

/// Magnitude assigned to a standardized difference with zero variance.
pub const SCORE_CAP: f64 = 1e8;

/// Total sample size at or below which the rank-sum test is exact.
pub const EXACT_RANK_SUM_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    Wilcoxon,
    WelchT,
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMethod::Wilcoxon => "wilcoxon",
            TestMethod::WelchT => "welch-t",
        })
    }
}

impl FromStr for TestMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wilcoxon" => Ok(TestMethod::Wilcoxon),
            "welch-t" | "welch" | "t" => Ok(TestMethod::WelchT),
            other => invalid(format!("unknown test method '{other}' (wilcoxon | welch-t)")),
        }
    }
}

/// Fisher's variance-stabilizing transform of a correlation coefficient.
pub fn fisher_z(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return invalid(format!("correlation {r} must satisfy |r| < 1"));
    }
    let a = r.abs();
    Ok((0.5 * (2.0 * a / (1.0 - a)).ln_1p()).copysign(r))
}

fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(f64::MIN_POSITIVE, 1.0)
    }
}

/// Mid-ranks (1-based) of `values`, plus the tie term `sum(t^3 - t)`.
fn mid_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &o in &order[start..end] {
            ranks[o] = rank;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

/// Number of ways to pick `k` of the doubled ranks with each possible sum.
/// `counts[s]` is the number of size-`k` subsets whose doubled rank sum is `s`.
fn rank_sum_distribution(doubled: &[usize], k: usize) -> Vec<f64> {
    let max_sum: usize = doubled.iter().sum();
    // table[j][s]: subsets of size j with sum s among items seen so far.
    let mut table = vec![vec![0.0f64; max_sum + 1]; k + 1];
    table[0][0] = 1.0;
    for &r in doubled {
        for j in (1..=k).rev() {
            let (lo, hi) = table.split_at_mut(j);
            let prev = &lo[j - 1];
            let cur = &mut hi[0];
            for s in (r..=max_sum).rev() {
                cur[s] += prev[s - r];
            }
        }
    }
    table.swap_remove(k)
}

/// Exact two-sided p-value by enumerating all placements of x's ranks.
fn rank_sum_exact(ranks: &[f64], nx: usize, rx: f64) -> f64 {
    let total = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let counts = rank_sum_distribution(&doubled, nx);
    let centre = (nx * (total + 1)) as i64;
    let observed = ((2.0 * rx).round() as i64 - centre).abs();
    let (mut extreme, mut all) = (0.0, 0.0);
    for (s, &c) in counts.iter().enumerate() {
        if c > 0.0 {
            all += c;
            if (s as i64 - centre).abs() >= observed {
                extreme += c;
            }
        }
    }
    clamp_p(extreme / all)
}

/// Tie-corrected normal approximation with continuity correction.
fn rank_sum_normal(total: usize, ties: f64, nx: usize, rx: f64) -> f64 {
    let (fx, fy, n) = (nx as f64, (total - nx) as f64, total as f64);
    let u = rx - fx * (fx + 1.0) / 2.0;
    let mean = fx * fy / 2.0;
    let var = fx * fy / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    clamp_p(erfc(z / std::f64::consts::SQRT_2))
}

/// Two-sided p-value from pooled mid-ranks where `in_x[i]` marks sample x.
fn rank_sum_from_ranks(ranks: &[f64], ties: f64, in_x: impl Iterator<Item = bool>) -> f64 {
    let mut nx = 0usize;
    let mut rx = 0.0;
    for (r, x) in ranks.iter().zip(in_x) {
        if x {
            nx += 1;
            rx += r;
        }
    }
    if ranks.len() <= EXACT_RANK_SUM_MAX {
        rank_sum_exact(ranks, nx, rx)
    } else {
        rank_sum_normal(ranks.len(), ties, nx, rx)
    }
}

fn pooled_ranks(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    if x.is_empty() || y.is_empty() {
        return invalid("rank-sum test needs both samples nonempty");
    }
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = mid_ranks(&pooled);
    let rx = ranks[..x.len()].iter().sum();
    Ok((ranks, ties, rx))
}

/// The normal-approximation branch of [`wilcoxon_rank_sum`] at any size.
pub fn wilcoxon_rank_sum_normal(x: &[f64], y: &[f64]) -> Result<f64> {
    let (ranks, ties, rx) = pooled_ranks(x, y)?;
    Ok(rank_sum_normal(ranks.len(), ties, x.len(), rx))
}

/// The exact branch of [`wilcoxon_rank_sum`] at any size. The cost grows
/// like `|x| * sum of ranks`, so keep totals moderate.
pub fn wilcoxon_rank_sum_exact(x: &[f64], y: &[f64]) -> Result<f64> {
    let (ranks, _, rx) = pooled_ranks(x, y)?;
    Ok(rank_sum_exact(&ranks, x.len(), rx))
}

/// Two-sided Wilcoxon rank-sum test. Exact below [`EXACT_RANK_SUM_MAX`]
/// total observations, tie-corrected normal approximation with continuity
/// correction above.
pub fn wilcoxon_rank_sum(x: &[f64], y: &[f64]) -> Result<f64> {
    let (ranks, ties, rx) = pooled_ranks(x, y)?;
    if ranks.len() <= EXACT_RANK_SUM_MAX {
        Ok(rank_sum_exact(&ranks, x.len(), rx))
    } else {
        Ok(rank_sum_normal(ranks.len(), ties, x.len(), rx))
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

fn welch_from_moments(mx: f64, vx: f64, nx: f64, my: f64, vy: f64, ny: f64) -> (f64, f64) {
    let (ax, ay) = (vx / nx, vy / ny);
    let se2 = ax + ay;
    if !(se2 > 0.0) {
        let p = if mx == my { 1.0 } else { f64::MIN_POSITIVE };
        let t = if mx == my { 0.0 } else { f64::INFINITY.copysign(mx - my) };
        return (t, p);
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (ax * ax / (nx - 1.0) + ay * ay / (ny - 1.0));
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t));
    (t, clamp_p(p))
}

/// Two-sided Welch t-test with Satterthwaite degrees of freedom. When both
/// variances vanish the p-value is 1 for equal means and the smallest
/// positive double otherwise.
pub fn welch_t(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || y.len() < 2 {
        return invalid("Welch t-test needs at least two observations per sample");
    }
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    Ok(welch_from_moments(mx, vx, x.len() as f64, my, vy, y.len() as f64).1)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeTestResult {
    pub p_values: Vec<f64>,
    /// Sign of `median(case) - median(control)` per edge.
    pub signs: Vec<i8>,
    pub method: TestMethod,
}

/// A dataset prepared for repeated per-edge testing under relabeled groups.
///
/// Values are stored edge-major and, for the rank-sum test, pooled mid-ranks
/// are computed once since they do not depend on the labels.
pub struct EdgeTester {
    method: TestMethod,
    subjects: usize,
    values: Vec<f64>,
    ranks: Vec<f64>,
    ties: Vec<f64>,
}

impl EdgeTester {
    pub fn new(dataset: &ConnectomeDataset, method: TestMethod) -> Self {
        let subjects = dataset.subjects().len();
        let edges = dataset.edge_count();
        let mut values = vec![0.0; edges * subjects];
        for (s, subj) in dataset.subjects().iter().enumerate() {
            for (e, &v) in subj.edges.iter().enumerate() {
                values[e * subjects + s] = v;
            }
        }
        let (ranks, ties) = if method == TestMethod::Wilcoxon {
            let per_edge: Vec<(Vec<f64>, f64)> = values
                .par_chunks(subjects)
                .map(mid_ranks)
                .collect();
            let mut ranks = Vec::with_capacity(values.len());
            let mut ties = Vec::with_capacity(edges);
            for (r, t) in per_edge {
                ranks.extend(r);
                ties.push(t);
            }
            (ranks, ties)
        } else {
            (Vec::new(), Vec::new())
        };
        Self { method, subjects, values, ranks, ties }
    }

    pub fn method(&self) -> TestMethod {
        self.method
    }

    pub fn edge_count(&self) -> usize {
        self.values.len() / self.subjects
    }

    fn check_labels(&self, labels: &[Group]) -> Result<(usize, usize)> {
        if labels.len() != self.subjects {
            return invalid(format!(
                "{} labels given for {} subjects",
                labels.len(),
                self.subjects
            ));
        }
        let cases = labels.iter().filter(|&&g| g == Group::Case).count();
        let controls = self.subjects - cases;
        let min = if self.method == TestMethod::WelchT { 2 } else { 1 };
        if cases < min || controls < min {
            return invalid(format!(
                "{} needs at least {min} subject(s) per group, got {controls} controls and {cases} cases",
                self.method
            ));
        }
        Ok((controls, cases))
    }

    fn edge_p(&self, e: usize, labels: &[Group], controls: usize, cases: usize) -> f64 {
        let range = e * self.subjects..(e + 1) * self.subjects;
        match self.method {
            TestMethod::Wilcoxon => rank_sum_from_ranks(
                &self.ranks[range],
                self.ties[e],
                labels.iter().map(|&g| g == Group::Case),
            ),
            TestMethod::WelchT => self.welch_edge(e, labels, controls, cases).1,
        }
    }

    /// Welch `(t, p)` for edge `e`, case minus control.
    fn welch_edge(&self, e: usize, labels: &[Group], controls: usize, cases: usize) -> (f64, f64) {
        let vals = &self.values[e * self.subjects..(e + 1) * self.subjects];
        let (mut sc, mut sx) = (0.0, 0.0);
        for (&v, &g) in vals.iter().zip(labels) {
            if g == Group::Case {
                sc += v;
            } else {
                sx += v;
            }
        }
        let (mc, mx) = (sc / cases as f64, sx / controls as f64);
        let (mut qc, mut qx) = (0.0, 0.0);
        for (&v, &g) in vals.iter().zip(labels) {
            if g == Group::Case {
                qc += (v - mc) * (v - mc);
            } else {
                qx += (v - mx) * (v - mx);
            }
        }
        welch_from_moments(
            mc,
            qc / (cases as f64 - 1.0),
            cases as f64,
            mx,
            qx / (controls as f64 - 1.0),
            controls as f64,
        )
    }

    /// Per-edge p-values under `labels`.
    pub fn p_values(&self, labels: &[Group]) -> Result<Vec<f64>> {
        let (controls, cases) = self.check_labels(labels)?;
        Ok((0..self.edge_count())
            .into_par_iter()
            .map(|e| self.edge_p(e, labels, controls, cases))
            .collect())
    }

    /// Per-edge Welch t statistics (case minus control) under `labels`.
    pub fn t_statistics(&self, labels: &[Group]) -> Result<Vec<f64>> {
        let (controls, cases) = self.check_labels(labels)?;
        if controls < 2 || cases < 2 {
            return invalid("t statistics need at least two subjects per group");
        }
        Ok((0..self.edge_count())
            .into_par_iter()
            .map(|e| self.welch_edge(e, labels, controls, cases).0)
            .collect())
    }

    /// Pooled-variance standardized mean differences (case minus control).
    /// Edges with no within-group variance score 0 when the means agree and
    /// `±SCORE_CAP` otherwise.
    pub fn standardized_differences(&self, labels: &[Group]) -> Result<Vec<f64>> {
        let (controls, cases) = self.check_labels(labels)?;
        if controls + cases < 3 {
            return invalid("standardized differences need at least three subjects");
        }
        let (n1, n0) = (cases as f64, controls as f64);
        Ok((0..self.edge_count())
            .into_par_iter()
            .map(|e| {
                let vals = &self.values[e * self.subjects..(e + 1) * self.subjects];
                let (mut s1, mut s0) = (0.0, 0.0);
                for (&v, &g) in vals.iter().zip(labels) {
                    if g == Group::Case {
                        s1 += v;
                    } else {
                        s0 += v;
                    }
                }
                let (m1, m0) = (s1 / n1, s0 / n0);
                let ss: f64 = vals
                    .iter()
                    .zip(labels)
                    .map(|(&v, &g)| {
                        let m = if g == Group::Case { m1 } else { m0 };
                        (v - m) * (v - m)
                    })
                    .sum();
                let pooled = ss / (n1 + n0 - 2.0);
                let se = (pooled * (1.0 / n1 + 1.0 / n0)).sqrt();
                if se > 0.0 {
                    (m1 - m0) / se
                } else if m1 == m0 {
                    0.0
                } else {
                    SCORE_CAP.copysign(m1 - m0)
                }
            })
            .collect())
    }

    pub fn run(&self, labels: &[Group]) -> Result<EdgeTestResult> {
        let p_values = self.p_values(labels)?;
        let signs = (0..self.edge_count())
            .into_par_iter()
            .map(|e| {
                let vals = &self.values[e * self.subjects..(e + 1) * self.subjects];
                let mut case = Vec::new();
                let mut control = Vec::new();
                for (&v, &g) in vals.iter().zip(labels) {
                    if g == Group::Case {
                        case.push(v);
                    } else {
                        control.push(v);
                    }
                }
                let d = median(&mut case) - median(&mut control);
                if d > 0.0 {
                    1
                } else if d < 0.0 {
                    -1
                } else {
                    0
                }
            })
            .collect();
        Ok(EdgeTestResult { p_values, signs, method: self.method })
    }
}

/// One test per edge with the dataset's own labels.
pub fn edgewise_tests(dataset: &ConnectomeDataset, method: TestMethod) -> Result<EdgeTestResult> {
    EdgeTester::new(dataset, method).run(&dataset.labels())
}

/// Edge evidence `w = -log p` stored once per unordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    n: usize,
    w: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(n: usize, w: Vec<f64>) -> Result<Self> {
        let index = EdgeIndex::new(n)?;
        if w.len() != index.len() {
            return invalid(format!("{} weights for {} edges", w.len(), index.len()));
        }
        if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return invalid(format!("weights must be finite and nonnegative, found {bad}"));
        }
        Ok(Self { n, w })
    }

    pub fn from_p_values(n: usize, p_values: &[f64]) -> Result<Self> {
        Self::new(n, p_values.iter().map(|&p| weight_of(p)).collect())
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn edge_index(&self) -> EdgeIndex {
        EdgeIndex::new(self.n).expect("validated at construction")
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Recovers `p = exp(-w)` for edge `e`.
    pub fn p_value(&self, e: usize) -> f64 {
        (-self.w[e]).exp()
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.w.iter().map(|w| (-w).exp()).collect()
    }

    /// Symmetric dense matrix with zero diagonal, row-major.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for (e, (i, j)) in self.edge_index().pairs().enumerate() {
            out[(i - 1) * n + (j - 1)] = self.w[e];
            out[(j - 1) * n + (i - 1)] = self.w[e];
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.n, self.w.iter().map(|w| w * c).collect())
    }
}

fn weight_of(p: f64) -> f64 {
    let w = -p.max(P_FLOOR).ln();
    // p can round to exactly 1 from above; keep weights nonnegative.
    w.max(0.0)
}

pub fn weights_from_pvalues(result: &EdgeTestResult) -> Result<WeightMatrix> {
    let m = result.p_values.len();
    // Solve n(n-1)/2 = m for n.
    let n = ((1.0 + (1.0 + 8.0 * m as f64).sqrt()) / 2.0).round() as usize;
    if n * (n - 1) / 2 != m {
        return invalid(format!("{m} p-values do not fill an upper triangle"));
    }
    WeightMatrix::from_p_values(n, &result.p_values)
}
