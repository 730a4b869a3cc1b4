//! Edge-level and component-level competitors: Benjamini-Hochberg, Storey
//! q-values, Efron's local fdr and the network-based statistic (NBS).

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::edgestats::{EdgeTester, TestMethod};
use crate::error::{invalid, Error, Result};
use crate::graphcore::{ConnectomeDataset, EdgeIndex};
use crate::rng;

/// z-scores are clamped to this magnitude before the density fit.
pub const Z_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineMethod {
    BhFdr,
    StoreyQ,
    LocalFdr,
    Nbs,
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineMethod::BhFdr => "fdr",
            BaselineMethod::StoreyQ => "storey",
            BaselineMethod::LocalFdr => "lfdr",
            BaselineMethod::Nbs => "nbs",
        })
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fdr" | "bh" => Ok(BaselineMethod::BhFdr),
            "storey" | "qvalue" => Ok(BaselineMethod::StoreyQ),
            "lfdr" => Ok(BaselineMethod::LocalFdr),
            "nbs" => Ok(BaselineMethod::Nbs),
            other => invalid(format!("unknown baseline '{other}' (fdr | storey | lfdr | nbs)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionSet {
    pub method: BaselineMethod,
    pub rejected: BTreeSet<usize>,
    /// q level, fdr cutoff or NBS primary threshold.
    pub threshold: f64,
}

fn check_p(p_values: &[f64]) -> Result<()> {
    match p_values.iter().position(|p| !(*p > 0.0 && *p <= 1.0)) {
        Some(i) => invalid(format!("p-value {} at position {i} outside (0, 1]", p_values[i])),
        None => Ok(()),
    }
}

fn ascending_order(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    order
}

/// Benjamini-Hochberg step-up rule at level `q`.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Result<RejectionSet> {
    check_p(p_values)?;
    if !(q > 0.0 && q < 1.0) {
        return invalid(format!("q must lie in (0, 1), got {q}"));
    }
    let m = p_values.len();
    let order = ascending_order(p_values);
    let last = (1..=m)
        .rev()
        .find(|&i| p_values[order[i - 1]] <= i as f64 * q / m as f64)
        .unwrap_or(0);
    Ok(RejectionSet {
        method: BaselineMethod::BhFdr,
        rejected: order[..last].iter().copied().collect(),
        threshold: q,
    })
}

/// BH-adjusted p-values, `min_{j >= i} m p_(j) / j` capped at 1.
pub fn bh_adjusted(p_values: &[f64]) -> Result<Vec<f64>> {
    step_up_adjusted(p_values, 1.0)
}

fn step_up_adjusted(p_values: &[f64], pi0: f64) -> Result<Vec<f64>> {
    check_p(p_values)?;
    let m = p_values.len();
    let order = ascending_order(p_values);
    let mut out = vec![0.0; m];
    let mut running = f64::INFINITY;
    for rank in (1..=m).rev() {
        let e = order[rank - 1];
        running = running.min(pi0 * m as f64 * p_values[e] / rank as f64);
        out[e] = running.min(1.0);
    }
    Ok(out)
}

/// Storey's `lambda = 1/2` estimate of the null proportion, capped at 1.
pub fn storey_pi0(p_values: &[f64]) -> Result<f64> {
    check_p(p_values)?;
    if p_values.is_empty() {
        return invalid("null proportion of an empty p-value vector");
    }
    let above = p_values.iter().filter(|&&p| p > 0.5).count();
    Ok((above as f64 / (0.5 * p_values.len() as f64)).min(1.0))
}

/// Storey q-values.
pub fn storey_qvalues(p_values: &[f64]) -> Result<Vec<f64>> {
    if p_values.is_empty() {
        return Ok(Vec::new());
    }
    step_up_adjusted(p_values, storey_pi0(p_values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullModel {
    Theoretical,
    /// Normal null fitted to the centre of the fitted log density.
    CentralMatching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfdrConfig {
    pub bins: usize,
    pub poly_degree: usize,
    pub null: NullModel,
    pub cutoff: f64,
}

impl Default for LfdrConfig {
    fn default() -> Self {
        Self { bins: 120, poly_degree: 7, null: NullModel::Theoretical, cutoff: 0.2 }
    }
}

impl LfdrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 20 {
            return invalid(format!("local fdr needs at least 20 bins, got {}", self.bins));
        }
        if self.poly_degree < 2 {
            return invalid(format!("local fdr polynomial degree must be at least 2, got {}", self.poly_degree));
        }
        if !(self.cutoff > 0.0 && self.cutoff <= 1.0) {
            return invalid(format!("local fdr cutoff must lie in (0, 1], got {}", self.cutoff));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFdr {
    pub z: Vec<f64>,
    pub fdr: Vec<f64>,
    pub pi0: f64,
    /// Null mean and standard deviation actually used.
    pub null_mean: f64,
    pub null_sd: f64,
    pub rejection: RejectionSet,
}

/// Fitted marginal density of z on its histogram support.
struct LindseyFit {
    lo: f64,
    width: f64,
    centre: f64,
    half: f64,
    beta: DVector<f64>,
    total: f64,
}

impl LindseyFit {
    fn basis(&self, z: f64, degree: usize) -> DVector<f64> {
        let x = (z - self.centre) / self.half;
        DVector::from_iterator(degree + 1, (0..=degree).map(|d| x.powi(d as i32)))
    }

    /// Density at `z`, with `z` clamped into the fitted range.
    fn density(&self, z: f64) -> f64 {
        let hi = self.centre + self.half;
        let z = z.clamp(self.lo, hi);
        let eta = self.basis(z, self.beta.len() - 1).dot(&self.beta);
        eta.exp() / (self.total * self.width)
    }
}

/// Poisson regression of histogram counts on a polynomial in the bin
/// centres (Lindsey's method), by iteratively reweighted least squares.
fn lindsey(z: &[f64], bins: usize, degree: usize) -> Result<LindseyFit> {
    let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1e-9) {
        return Err(Error::Numerical("local fdr: all z-scores fall in one histogram bin".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0f64; bins];
    for &v in z {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    if counts.iter().filter(|&&c| c > 0.0).count() < 2 {
        return Err(Error::Numerical("local fdr: all z-scores fall in one histogram bin".into()));
    }
    let mut fit = LindseyFit {
        lo,
        width,
        centre: 0.5 * (lo + hi),
        half: 0.5 * (hi - lo),
        beta: DVector::zeros(degree + 1),
        total: z.len() as f64,
    };
    let x = DMatrix::from_fn(bins, degree + 1, |b, d| {
        let c = lo + (b as f64 + 0.5) * width;
        ((c - fit.centre) / fit.half).powi(d as i32)
    });
    let y: DVector<f64> = DVector::from_vec(counts);
    let deviance = |beta: &DVector<f64>| -> f64 {
        let eta = &x * beta;
        (0..bins)
            .map(|b| {
                let m = eta[b].exp();
                let t = if y[b] > 0.0 { y[b] * (y[b] / m).ln() } else { 0.0 };
                2.0 * (t - (y[b] - m))
            })
            .sum()
    };
    // Start from the least-squares fit of log(count + 1/2).
    let start: DVector<f64> = y.map(|c| (c + 0.5).ln());
    let xt = x.transpose();
    fit.beta = (&xt * &x)
        .cholesky()
        .map(|c| c.solve(&(&xt * &start)))
        .ok_or_else(|| Error::Numerical("local fdr: singular polynomial basis".into()))?;
    let mut dev = deviance(&fit.beta);
    for _ in 0..100 {
        let eta: DVector<f64> = &x * &fit.beta;
        let mu = eta.map(f64::exp);
        let work = DVector::from_fn(bins, |b, _| eta[b] + (y[b] - mu[b]) / mu[b]);
        let xtw = DMatrix::from_fn(degree + 1, bins, |d, b| x[(b, d)] * mu[b]);
        let rhs: DVector<f64> = &xtw * &work;
        let Some(target) = (&xtw * &x).cholesky().map(|c| c.solve(&rhs)) else {
            break;
        };
        // Step halving keeps the deviance from increasing.
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-6 {
            let trial = &fit.beta + (&target - &fit.beta) * step;
            let d = deviance(&trial);
            if d.is_finite() && d <= dev {
                accepted = Some((trial, d));
                break;
            }
            step *= 0.5;
        }
        let Some((beta, d)) = accepted else { break };
        fit.beta = beta;
        let done = (dev - d).abs() <= 1e-10 * (d.abs() + 1.0);
        dev = d;
        if done {
            break;
        }
    }
    if !dev.is_finite() {
        return Err(Error::Numerical("local fdr: Poisson regression diverged".into()));
    }
    Ok(fit)
}

/// Central matching: quadratic fit to the log density near its mode.
fn central_matching(fit: &LindseyFit, z: &[f64]) -> Result<(f64, f64, f64)> {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
    let (a, b) = (q(0.25), q(0.75));
    let pts = 50;
    let design = DMatrix::from_fn(pts, 3, |r, c| {
        let v = a + (b - a) * r as f64 / (pts - 1) as f64;
        v.powi(c as i32)
    });
    let target = DVector::from_fn(pts, |r, _| fit.density(design[(r, 1)]).ln());
    let coef = (design.transpose() * &design)
        .cholesky()
        .map(|c| c.solve(&(design.transpose() * target)))
        .ok_or_else(|| Error::Numerical("local fdr: central matching failed".into()))?;
    if !(coef[2] < 0.0) {
        return Err(Error::Numerical("local fdr: log density is not concave near its centre".into()));
    }
    let var = -1.0 / (2.0 * coef[2]);
    let mean = coef[1] * var;
    let pi0 = (coef[0] + mean * mean / (2.0 * var)).exp() * (2.0 * PI * var).sqrt();
    Ok((mean, var.sqrt(), pi0.min(1.0)))
}

/// Efron's local false discovery rate on the one-sided z-scores
/// `z = Phi^-1(1 - p)`. Only `z > 0` can be rejected.
pub fn local_fdr(p_values: &[f64], cfg: &LfdrConfig) -> Result<LocalFdr> {
    cfg.validate()?;
    check_p(p_values)?;
    if p_values.is_empty() {
        return invalid("local fdr of an empty p-value vector");
    }
    let std = Normal::standard();
    let z: Vec<f64> = p_values
        .iter()
        .map(|&p| (-std.inverse_cdf(p)).clamp(-Z_CLAMP, Z_CLAMP))
        .collect();
    let fit = lindsey(&z, cfg.bins, cfg.poly_degree)?;
    let (mean, sd, pi0) = match cfg.null {
        NullModel::Theoretical => (0.0, 1.0, storey_pi0(p_values)?),
        NullModel::CentralMatching => central_matching(&fit, &z)?,
    };
    let null = Normal::new(mean, sd).map_err(|e| Error::Numerical(format!("local fdr null: {e}")))?;
    let fdr: Vec<f64> = z
        .iter()
        .map(|&v| {
            let f = fit.density(v);
            let f0 = statrs::distribution::Continuous::pdf(&null, v);
            if f > 0.0 {
                (pi0 * f0 / f).min(1.0)
            } else {
                1.0
            }
        })
        .collect();
    let rejected = z
        .iter()
        .zip(&fdr)
        .enumerate()
        .filter(|(_, (&v, &r))| v > 0.0 && r <= cfg.cutoff)
        .map(|(e, _)| e)
        .collect();
    Ok(LocalFdr {
        z,
        fdr,
        pi0,
        null_mean: mean,
        null_sd: sd,
        rejection: RejectionSet { method: BaselineMethod::LocalFdr, rejected, threshold: cfg.cutoff },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbsComponent {
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    /// FWER-adjusted p-value of the component extent.
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NbsResult {
    pub tau: f64,
    /// Components of the suprathreshold graph, largest first.
    pub components: Vec<NbsComponent>,
    /// Largest component extent of each permutation.
    pub null_max_extent: Vec<usize>,
}

impl NbsResult {
    pub fn significant(&self, alpha: f64) -> impl Iterator<Item = &NbsComponent> {
        self.components.iter().filter(move |c| c.p_value <= alpha)
    }
}

fn find(parent: &mut [usize], mut v: usize) -> usize {
    while parent[v] != v {
        parent[v] = parent[parent[v]];
        v = parent[v];
    }
    v
}

/// Connected components (by edge ids) of the graph with the given edges.
fn edge_components(index: &EdgeIndex, edges: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let n = index.nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    let ends: Vec<(usize, usize)> = edges
        .iter()
        .map(|&e| {
            let (i, j) = index.unpack(e).expect("edge id from this index");
            (i - 1, j - 1)
        })
        .collect();
    for &(a, b) in &ends {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, (BTreeSet<usize>, Vec<usize>)> = Default::default();
    for (&e, &(a, b)) in edges.iter().zip(&ends) {
        let entry = by_root.entry(find(&mut parent, a)).or_default();
        entry.0.insert(a + 1);
        entry.0.insert(b + 1);
        entry.1.push(e);
    }
    let mut out: Vec<(Vec<usize>, Vec<usize>)> = by_root
        .into_values()
        .map(|(nodes, edges)| (nodes.into_iter().collect(), edges))
        .collect();
    out.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(&b.0)));
    out
}

fn suprathreshold(t: &[f64], tau: f64) -> Vec<usize> {
    t.iter().enumerate().filter(|(_, v)| v.abs() >= tau).map(|(e, _)| e).collect()
}

/// Network-based statistic with Welch t edge statistics and component
/// extent measured in edges.
pub fn nbs(dataset: &ConnectomeDataset, tau: f64, permutations: usize, seed: u64) -> Result<NbsResult> {
    if !(tau > 0.0) {
        return invalid(format!("NBS threshold must be positive, got {tau}"));
    }
    if permutations < 19 {
        return invalid(format!("NBS needs at least 19 permutations, got {permutations}"));
    }
    let (controls, cases) = dataset.group_sizes();
    if controls < 2 || cases < 2 {
        return invalid("NBS needs at least 2 subjects per group");
    }
    let index = dataset.edge_index();
    let tester = EdgeTester::new(dataset, TestMethod::WelchT);
    let labels = dataset.labels();
    let observed = edge_components(&index, &suprathreshold(&tester.t_statistics(&labels)?, tau));
    let null_max_extent = (1..=permutations)
        .into_par_iter()
        .map(|m| {
            let mut perm = labels.clone();
            perm.shuffle(&mut rng::stream(seed, rng::DOMAIN_NBS, m as u64));
            let t = tester.t_statistics(&perm)?;
            Ok(edge_components(&index, &suprathreshold(&t, tau))
                .first()
                .map_or(0, |c| c.1.len()))
        })
        .collect::<Result<Vec<usize>>>()?;
    let components = observed
        .into_iter()
        .map(|(nodes, edges)| {
            let exceed = null_max_extent.iter().filter(|&&x| x >= edges.len()).count();
            NbsComponent { p_value: (1 + exceed) as f64 / (permutations + 1) as f64, nodes, edges }
        })
        .collect();
    Ok(NbsResult { tau, components, null_max_extent })
}
