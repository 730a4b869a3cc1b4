//! Synthetic two-group connectomes with a latent planted clique, and the
//! harnesses that score every method on them.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bh_fdr, local_fdr, nbs, LfdrConfig};
use crate::detect::DetectConfig;
use crate::edgestats::EdgeTester;
use crate::error::{invalid, Error, Result};
use crate::graphcore::{induced_edges, ConnectomeDataset, EdgeIndex, Group, Subject};
use crate::infer::{gep_test, glp_test, InferConfig, InferenceReport};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub planted_nodes: usize,
    /// Mean shift: planted edges of controls have mean `mu1 + theta`.
    pub theta: f64,
    pub sigma: f64,
    pub rho_cs: f64,
    pub controls: usize,
    pub cases: usize,
    pub replicates: usize,
    pub mu1: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 100,
            planted_nodes: 20,
            theta: 1.0,
            sigma: 0.5,
            rho_cs: 0.3,
            controls: 30,
            cases: 30,
            replicates: 100,
            mu1: 0.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid(format!("need at least 2 nodes, got {}", self.n));
        }
        if self.planted_nodes > self.n {
            return invalid(format!("planted_nodes {} exceeds n = {}", self.planted_nodes, self.n));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return invalid(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(0.0..1.0).contains(&self.rho_cs) {
            return invalid(format!("rho_cs must lie in [0, 1), got {}", self.rho_cs));
        }
        if self.controls == 0 || self.cases == 0 {
            return invalid("both groups need at least one subject");
        }
        if !(self.theta.is_finite() && self.mu1.is_finite()) {
            return invalid("theta and mu1 must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDataset {
    pub dataset: ConnectomeDataset,
    pub planted_nodes: BTreeSet<usize>,
    pub truth: BTreeSet<usize>,
}

/// Draws one dataset from the stream of replicate `replicate`.
pub fn generate_replicate(cfg: &SimConfig, replicate: usize) -> Result<SimulatedDataset> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, rng::DOMAIN_SIM, replicate as u64);
    let index = EdgeIndex::new(cfg.n)?;
    // A uniform node subset is the same as planting on 1..=k and shuffling labels.
    let planted_nodes: BTreeSet<usize> = sample(&mut rng, cfg.n, cfg.planted_nodes)
        .into_iter()
        .map(|v| v + 1)
        .collect();
    let truth = induced_edges(&planted_nodes, cfg.n)?;
    let in_clique: Vec<bool> = (0..index.len()).map(|e| truth.contains(&e)).collect();
    let (a, b) = (cfg.rho_cs.sqrt(), (1.0 - cfg.rho_cs).sqrt());

    let mut subjects = Vec::with_capacity(cfg.controls + cfg.cases);
    for s in 0..cfg.controls + cfg.cases {
        let (group, id) = if s < cfg.controls {
            (Group::Control, format!("ctl{:03}", s + 1))
        } else {
            (Group::Case, format!("case{:03}", s - cfg.controls + 1))
        };
        let shift = if group == Group::Control { cfg.theta } else { 0.0 };
        let common: f64 = rng.sample(StandardNormal);
        let edges = in_clique
            .iter()
            .map(|&planted| {
                let z: f64 = rng.sample(StandardNormal);
                if planted {
                    cfg.mu1 + shift + cfg.sigma * (a * common + b * z)
                } else {
                    cfg.mu1 + cfg.sigma * z
                }
            })
            .collect();
        subjects.push(Subject { id, group, edges });
    }
    Ok(SimulatedDataset { dataset: ConnectomeDataset::new(cfg.n, subjects)?, planted_nodes, truth })
}

pub fn generate_dataset(cfg: &SimConfig) -> Result<SimulatedDataset> {
    generate_replicate(cfg, 0)
}

/// `(FP, FN) = (|discovered \ truth|, |truth \ discovered|)`.
pub fn score_discovery(discovered: &BTreeSet<usize>, truth: &BTreeSet<usize>) -> (usize, usize) {
    (discovered.difference(truth).count(), truth.difference(discovered).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Glp,
    Gep,
    Fdr,
    Lfdr,
    Nbs,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Glp, Method::Gep, Method::Fdr, Method::Lfdr, Method::Nbs];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Glp => "glp",
            Method::Gep => "gep",
            Method::Fdr => "fdr",
            Method::Lfdr => "lfdr",
            Method::Nbs => "nbs",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glp" => Ok(Method::Glp),
            "gep" => Ok(Method::Gep),
            "fdr" => Ok(Method::Fdr),
            "lfdr" => Ok(Method::Lfdr),
            "nbs" => Ok(Method::Nbs),
            other => invalid(format!("unknown method '{other}' (glp | gep | fdr | lfdr | nbs)")),
        }
    }
}

/// Analysis settings shared by every replicate of a harness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub detect: DetectConfig,
    pub infer: InferConfig,
    pub fdr_q: f64,
    pub lfdr: LfdrConfig,
    pub nbs_tau: f64,
    pub nbs_permutations: usize,
}

impl HarnessConfig {
    pub fn for_nodes(n: usize) -> Self {
        Self {
            detect: DetectConfig::for_nodes(n),
            infer: InferConfig::default(),
            fdr_q: 0.2,
            lfdr: LfdrConfig::default(),
            nbs_tau: 3.0,
            nbs_permutations: 1000,
        }
    }

    /// Copy with every seed replaced by one derived for replicate `r`.
    fn for_replicate(&self, r: usize) -> Self {
        let seed = rng::derive_seed(self.infer.seed, rng::DOMAIN_REPLICATE, r as u64);
        let mut out = self.clone();
        out.infer.seed = seed;
        out.detect.seed = seed;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateScore {
    pub edge_fp: usize,
    pub edge_fn: usize,
    /// Network-level counts; `None` for edge-level methods.
    pub network_fp: Option<usize>,
    pub network_fn: Option<usize>,
}

/// Scores a list of significant objects (edge sets). An object is a true
/// discovery when at least half of its edges are planted; network FN is 1
/// when no object is a true discovery.
pub fn score_objects(objects: &[BTreeSet<usize>], truth: &BTreeSet<usize>) -> ReplicateScore {
    let discovered: BTreeSet<usize> = objects.iter().flatten().copied().collect();
    let (edge_fp, edge_fn) = score_discovery(&discovered, truth);
    let hits = objects
        .iter()
        .filter(|o| !o.is_empty() && 2 * o.intersection(truth).count() >= o.len())
        .count();
    ReplicateScore {
        edge_fp,
        edge_fn,
        network_fp: Some(objects.len() - hits),
        network_fn: Some(usize::from(hits == 0 && !truth.is_empty())),
    }
}

fn report_objects(report: &InferenceReport) -> Vec<BTreeSet<usize>> {
    report
        .significant_subnetworks()
        .map(|s| s.edges.iter().copied().collect())
        .collect()
}

/// Runs one method on one simulated dataset.
pub fn analyze(sim: &SimulatedDataset, method: Method, harness: &HarnessConfig) -> Result<ReplicateScore> {
    let d = &sim.dataset;
    match method {
        Method::Glp => Ok(score_objects(&report_objects(&glp_test(d, &harness.detect, &harness.infer)?), &sim.truth)),
        Method::Gep => Ok(score_objects(&report_objects(&gep_test(d, &harness.detect, &harness.infer)?), &sim.truth)),
        Method::Fdr | Method::Lfdr => {
            let p = EdgeTester::new(d, harness.infer.test_method).p_values(&d.labels())?;
            let rejected = if method == Method::Fdr {
                bh_fdr(&p, harness.fdr_q)?.rejected
            } else {
                local_fdr(&p, &harness.lfdr)?.rejection.rejected
            };
            let (edge_fp, edge_fn) = score_discovery(&rejected, &sim.truth);
            Ok(ReplicateScore { edge_fp, edge_fn, network_fp: None, network_fn: None })
        }
        Method::Nbs => {
            let r = nbs(d, harness.nbs_tau, harness.nbs_permutations, harness.infer.seed)?;
            let objects: Vec<BTreeSet<usize>> = r
                .significant(harness.infer.alpha)
                .map(|c| c.edges.iter().copied().collect())
                .collect();
            Ok(score_objects(&objects, &sim.truth))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Mean and sample standard deviation (0 for fewer than two values).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}({:.2})", self.mean, self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub method: Method,
    pub config: SimConfig,
    pub edge_fp: MeanSd,
    pub edge_fn: MeanSd,
    pub network_fp: Option<MeanSd>,
    pub network_fn: Option<MeanSd>,
    pub replicates: Vec<ReplicateScore>,
}

impl ScoreRow {
    fn from_scores(method: Method, config: SimConfig, replicates: Vec<ReplicateScore>) -> Self {
        let col = |f: &dyn Fn(&ReplicateScore) -> Option<usize>| -> Option<MeanSd> {
            let v: Option<Vec<f64>> = replicates.iter().map(|r| f(r).map(|x| x as f64)).collect();
            v.map(|v| MeanSd::of(&v))
        };
        Self {
            method,
            edge_fp: col(&|r| Some(r.edge_fp)).expect("edge counts always present"),
            edge_fn: col(&|r| Some(r.edge_fn)).expect("edge counts always present"),
            network_fp: col(&|r| r.network_fp),
            network_fn: col(&|r| r.network_fn),
            config,
            replicates,
        }
    }
}

/// Every method on every replicate of every grid cell. Replicate `r` of a
/// cell uses simulation stream `r` and analysis seeds derived from `r`.
pub fn run_table1(grid: &[SimConfig], methods: &[Method], harness: &HarnessConfig) -> Result<Vec<ScoreRow>> {
    if methods.is_empty() {
        return invalid("no methods selected");
    }
    let mut rows = Vec::new();
    for cfg in grid {
        cfg.validate()?;
        let cell = format!("cell n={} {}v{} sigma={} theta={}", cfg.n, cfg.controls, cfg.cases, cfg.sigma, cfg.theta);
        let per_rep: Vec<Vec<ReplicateScore>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let sim = generate_replicate(cfg, r)?;
                let h = harness.for_replicate(r);
                methods
                    .iter()
                    .map(|&m| analyze(&sim, m, &h).map_err(|e| e.context(format!("{cell}, replicate {r}, {m}"))))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (i, &m) in methods.iter().enumerate() {
            let scores = per_rep.iter().map(|r| r[i]).collect();
            rows.push(ScoreRow::from_scores(m, cfg.clone(), scores));
        }
    }
    Ok(rows)
}

/// Table rows as CSV: one line per (cell, method).
pub fn table1_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("method,n,controls,cases,theta,sigma,replicates,edge_fp,edge_fn,network_fp,network_fn\n");
    let opt = |v: &Option<MeanSd>| v.map_or_else(|| "NA".to_string(), |m| m.to_string());
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            r.config.n,
            r.config.controls,
            r.config.cases,
            r.config.theta,
            r.config.sigma,
            r.replicates.len(),
            r.edge_fp,
            r.edge_fn,
            opt(&r.network_fp),
            opt(&r.network_fn)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Type1Result {
    pub method: Method,
    pub iterations: usize,
    pub false_positives: usize,
    pub rate: f64,
    /// Smallest subnetwork p-value of each iteration (1 when none).
    pub min_p_values: Vec<f64>,
}

/// Fraction of null iterations with at least one significant subnetwork.
pub fn type1_experiment(
    cfg: &SimConfig,
    iterations: usize,
    methods: &[Method],
    harness: &HarnessConfig,
) -> Result<Vec<Type1Result>> {
    if iterations == 0 {
        return invalid("type-I experiment needs at least one iteration");
    }
    if cfg.theta != 0.0 {
        return invalid(format!("type-I experiment needs theta = 0, got {}", cfg.theta));
    }
    if let Some(m) = methods.iter().find(|m| !matches!(m, Method::Glp | Method::Gep)) {
        return invalid(format!("type-I experiment covers glp and gep only, got {m}"));
    }
    cfg.validate()?;
    let per_iter: Vec<Vec<(bool, f64)>> = (0..iterations)
        .into_par_iter()
        .map(|r| {
            let sim = generate_replicate(cfg, r)?;
            let h = harness.for_replicate(r);
            methods
                .iter()
                .map(|&m| {
                    let report = match m {
                        Method::Glp => glp_test(&sim.dataset, &h.detect, &h.infer),
                        _ => gep_test(&sim.dataset, &h.detect, &h.infer),
                    };
                    report
                        .map(|rep| (!rep.significant.is_empty(), rep.min_p_value()))
                        .map_err(|e| e.context(format!("iteration {r}, {m}")))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(methods
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let min_p_values: Vec<f64> = per_iter.iter().map(|v| v[i].1).collect();
            let false_positives = per_iter.iter().filter(|v| v[i].0).count();
            Type1Result { method: m, iterations, false_positives, rate: false_positives as f64 / iterations as f64, min_p_values }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_has_190_planted_edges() {
        let s = generate_dataset(&SimConfig::default()).unwrap();
        assert_eq!(s.truth.len(), 190);
        assert_eq!(s.planted_nodes.len(), 20);
        assert_eq!(s.dataset.edge_count(), 4950);
        assert_eq!(s.dataset.group_sizes(), (30, 30));
        assert_eq!(generate_dataset(&SimConfig::default()).unwrap(), s);
        assert_ne!(generate_replicate(&SimConfig::default(), 1).unwrap().planted_nodes, s.planted_nodes);
    }

    #[test]
    fn compound_symmetry_moments() {
        let cfg = SimConfig { n: 6, planted_nodes: 4, sigma: 2.0, theta: 0.0, controls: 5000, cases: 5000, ..Default::default() };
        let s = generate_dataset(&cfg).unwrap();
        let truth: Vec<usize> = s.truth.iter().copied().collect();
        let subjects = s.dataset.subjects();
        let m = subjects.len() as f64;
        let var = cfg.sigma * cfg.sigma;
        let mean = |e: usize| subjects.iter().map(|x| x.edges[e]).sum::<f64>() / m;
        // Per-pair standard error of a sample covariance is about sigma^2 sqrt((1 + rho^2) / m).
        let se = var * ((1.0 + cfg.rho_cs * cfg.rho_cs) / m).sqrt();
        let mut off = Vec::new();
        for (a, &ea) in truth.iter().enumerate() {
            let ma = mean(ea);
            assert!(ma.abs() < 3.0 * cfg.sigma / m.sqrt(), "mean {ma}");
            for &eb in &truth[a..] {
                let mb = mean(eb);
                let cov = subjects.iter().map(|x| (x.edges[ea] - ma) * (x.edges[eb] - mb)).sum::<f64>() / (m - 1.0);
                let target = if ea == eb { var } else { cfg.rho_cs * var };
                assert!((cov - target).abs() < 4.0 * se * if ea == eb { 1.5 } else { 1.0 }, "{ea},{eb}: {cov} vs {target}");
                if ea != eb {
                    off.push(cov);
                }
            }
        }
        let mean_off = off.iter().sum::<f64>() / off.len() as f64;
        assert!((mean_off - cfg.rho_cs * var).abs() < 0.02 * var, "{mean_off}");
        let other = (0..15).find(|e| !s.truth.contains(e)).unwrap();
        let mo = mean(other);
        let sd = (subjects.iter().map(|x| (x.edges[other] - mo).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        assert!((sd - cfg.sigma).abs() < 3.0 * cfg.sigma / (2.0 * m).sqrt());
    }

    #[test]
    fn controls_are_shifted_up() {
        let cfg = SimConfig { n: 10, planted_nodes: 5, theta: 1.0, sigma: 0.5, controls: 400, cases: 400, ..Default::default() };
        let s = generate_dataset(&cfg).unwrap();
        let e = *s.truth.iter().next().unwrap();
        let avg = |g: Group| {
            let v: Vec<f64> = s.dataset.subjects().iter().filter(|x| x.group == g).map(|x| x.edges[e]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((avg(Group::Control) - avg(Group::Case) - 1.0).abs() < 0.15);
    }

    #[test]
    fn null_groups_share_a_distribution() {
        // Two-sample KS on pooled planted edges.
        let cfg = SimConfig { n: 12, planted_nodes: 6, theta: 0.0, controls: 40, cases: 40, ..Default::default() };
        let s = generate_dataset(&cfg).unwrap();
        let pool = |g: Group| {
            let mut v: Vec<f64> = s
                .dataset
                .subjects()
                .iter()
                .filter(|x| x.group == g)
                .flat_map(|x| s.truth.iter().map(|&e| x.edges[e]).collect::<Vec<_>>())
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let (a, b) = (pool(Group::Control), pool(Group::Case));
        let cdf = |v: &[f64], t: f64| v.partition_point(|&x| x <= t) as f64 / v.len() as f64;
        let d = a.iter().chain(&b).map(|&t| (cdf(&a, t) - cdf(&b, t)).abs()).fold(0.0, f64::max);
        // Pooled edges within a subject are correlated, so use subjects as the effective sample size.
        let crit = 1.36 * (2.0 / 40.0f64).sqrt();
        assert!(d < crit, "KS distance {d}");
    }

    #[test]
    fn scoring_examples() {
        let truth: BTreeSet<usize> = (0..190).collect();
        assert_eq!(score_discovery(&truth, &truth), (0, 0));
        assert_eq!(score_discovery(&BTreeSet::new(), &truth), (0, 190));
        let mut more = truth.clone();
        more.extend(1000..1005);
        assert_eq!(score_discovery(&more, &truth), (5, 0));

        let s = score_objects(&[more.clone(), (2000..2010).collect()], &truth);
        assert_eq!((s.edge_fp, s.edge_fn, s.network_fp, s.network_fn), (15, 0, Some(1), Some(0)));
        let s = score_objects(&[], &truth);
        assert_eq!((s.network_fp, s.network_fn), (Some(0), Some(1)));
    }

    #[test]
    fn harness_rejects_bad_input() {
        let h = HarnessConfig::for_nodes(10);
        let cfg = SimConfig { n: 10, planted_nodes: 4, theta: 0.0, ..Default::default() };
        assert!(type1_experiment(&cfg, 0, &[Method::Glp], &h).is_err());
        assert!(type1_experiment(&SimConfig { theta: 1.0, ..cfg.clone() }, 5, &[Method::Glp], &h).is_err());
        assert!(run_table1(&[cfg.clone()], &[], &h).is_err());
        assert!(SimConfig { planted_nodes: 11, ..cfg.clone() }.validate().is_err());
        assert!(SimConfig { rho_cs: 1.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn small_table_runs_and_is_deterministic() {
        let cfg = SimConfig { n: 20, planted_nodes: 6, sigma: 0.5, controls: 15, cases: 15, replicates: 3, ..Default::default() };
        let mut h = HarnessConfig::for_nodes(20);
        h.detect.k_max = 6;
        h.detect.kmeans_restarts = 5;
        h.infer.num_permutations = 19;
        h.infer.omnibus_b = 19;
        h.nbs_permutations = 19;
        let rows = run_table1(&[cfg.clone()], &Method::ALL, &h).unwrap();
        assert_eq!(rows.len(), 5);
        let glp = &rows[0];
        assert!(glp.replicates.iter().all(|r| r.network_fn == Some(0)));
        assert!(rows[2].network_fp.is_none());
        assert_eq!(run_table1(&[cfg], &Method::ALL, &h).unwrap(), rows);
        let csv = table1_csv(&rows);
        assert_eq!(csv.lines().count(), 6);
    }
}
