//! Network-level test statistics and permutation inference.
//!
//! Two null-generating procedures are provided:
//!
//! * group-label permutation (GLP): shuffle subject labels, redo the edge
//!   tests and the detection, keep the largest subnetwork statistic;
//! * graph-edge permutation (GEP): shuffle the observed weight vector over
//!   edge positions, redo the detection, keep the largest statistic. It is
//!   gated by an adaptive sum-of-powered-score (aSPU) omnibus test.
//!
//! Each observed subnetwork is compared against the shared distribution of
//! per-permutation maxima, which controls the family-wise error over all
//! detected objects and accounts for the data-driven selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{select_k, DetectConfig, DetectionResult};
use crate::edgestats::{EdgeTester, TestMethod, WeightMatrix};
use crate::error::{invalid, Error, Result};
use crate::graphcore::{ConnectomeDataset, Group, Subnetwork};
use crate::rng;

/// Log-scale scan statistic assigned when the inside/outside indicator fails
/// or no subnetwork is detected.
pub const SCAN_LOG_FLOOR: f64 = -1.0e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    FisherChernoff,
    /// Carried on the natural-log scale so large networks do not underflow.
    Scan,
}

impl Statistic {
    /// Value used when an iteration detects no subnetwork.
    pub fn empty_value(self) -> f64 {
        match self {
            Statistic::FisherChernoff => 0.0,
            Statistic::Scan => SCAN_LOG_FLOOR,
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::FisherChernoff => "fisher",
            Statistic::Scan => "scan",
        })
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fisher" | "fisher-chernoff" | "fisher_chernoff" => Ok(Statistic::FisherChernoff),
            "scan" => Ok(Statistic::Scan),
            other => invalid(format!("unknown statistic '{other}' (fisher | scan)")),
        }
    }
}

/// Power used by one SPU component; `Max` is the `gamma = infinity` case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Gamma {
    Power(u32),
    Max,
}

impl From<Gamma> for String {
    fn from(g: Gamma) -> String {
        match g {
            Gamma::Power(p) => p.to_string(),
            Gamma::Max => "inf".to_string(),
        }
    }
}

impl TryFrom<String> for Gamma {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s == "inf" {
            return Ok(Gamma::Max);
        }
        match s.parse::<u32>() {
            Ok(p) if p >= 1 => Ok(Gamma::Power(p)),
            _ => Err(format!("SPU power must be a positive integer or 'inf', got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub num_permutations: usize,
    pub alpha: f64,
    pub statistic: Statistic,
    pub p0: f64,
    pub test_method: TestMethod,
    pub omnibus_gammas: Vec<Gamma>,
    pub omnibus_b: usize,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        let mut gammas: Vec<Gamma> = (1..=8).map(Gamma::Power).collect();
        gammas.push(Gamma::Max);
        Self {
            num_permutations: 1000,
            alpha: 0.05,
            statistic: Statistic::FisherChernoff,
            p0: 0.05,
            test_method: TestMethod::Wilcoxon,
            omnibus_gammas: gammas,
            omnibus_b: 1000,
            seed: 0,
        }
    }
}

impl InferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_permutations < 19 {
            return invalid(format!("need at least 19 permutations, got {}", self.num_permutations));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return invalid(format!("p0 must lie in (0, 1), got {}", self.p0));
        }
        Ok(())
    }
}

/// Per-permutation maxima of the subnetwork statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub values: Vec<f64>,
    pub statistic: Statistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Procedure {
    Glp,
    Gep,
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::Glp => "glp",
            Procedure::Gep => "gep",
        })
    }
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glp" => Ok(Procedure::Glp),
            "gep" => Ok(Procedure::Gep),
            other => invalid(format!("unknown permutation scheme '{other}' (glp | gep)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub p_value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub procedure: Procedure,
    /// Omnibus gate (GEP only).
    pub gate: Option<GateOutcome>,
    pub k_selected: Option<usize>,
    /// Observed subnetworks with `statistic` and `p_value` filled in.
    pub subnetworks: Vec<Subnetwork>,
    /// `None` when the gate failed and no permutations were run.
    pub null: Option<NullDistribution>,
    /// Rejection threshold: the `(1 - alpha)` empirical quantile of the null.
    pub threshold: Option<f64>,
    /// Indices into `subnetworks` of the significant ones.
    pub significant: Vec<usize>,
}

impl InferenceReport {
    pub fn significant_subnetworks(&self) -> impl Iterator<Item = &Subnetwork> {
        self.significant.iter().map(|&i| &self.subnetworks[i])
    }

    /// Smallest subnetwork p-value, or 1 when nothing was tested.
    pub fn min_p_value(&self) -> f64 {
        self.subnetworks
            .iter()
            .filter_map(|s| s.p_value)
            .fold(1.0, f64::min)
    }

    fn gate_failed(procedure: Procedure, gate: GateOutcome) -> Self {
        Self {
            procedure,
            gate: Some(gate),
            k_selected: None,
            subnetworks: Vec::new(),
            null: None,
            threshold: None,
            significant: Vec::new(),
        }
    }
}

fn chernoff(mean_neg_log_p: f64, edges: usize) -> f64 {
    let x = mean_neg_log_p;
    if x >= 1.0 {
        edges as f64 * (x - 1.0 - x.ln())
    } else {
        0.0
    }
}

/// `|E| (x - 1 - log x)` with `x` the mean of `-log p`, clamped to 0 when
/// `x < 1`. This is the Chernoff lower bound on `-log` of the upper tail of
/// Fisher's combined statistic `-2 sum log p ~ chi^2(2|E|)`.
pub fn fisher_chernoff_stat(p_values: &[f64]) -> Result<f64> {
    if p_values.is_empty() {
        return invalid("Fisher statistic of an empty edge set");
    }
    if let Some(bad) = p_values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return invalid(format!("p-value {bad} outside (0, 1]"));
    }
    let mean = p_values.iter().map(|p| -p.ln()).sum::<f64>() / p_values.len() as f64;
    Ok(chernoff(mean, p_values.len()))
}

/// `ln` of the scan statistic, `None` when the inside proportion does not
/// exceed the outside one.
fn scan_log(n1_in: usize, n_in: usize, n1_out: usize, n_out: usize) -> Option<f64> {
    if n1_in * n_out <= n1_out * n_in {
        return None;
    }
    let term = |k: usize, n: usize| if k == 0 { 0.0 } else { k as f64 * (k as f64 / n as f64).ln() };
    Some(term(n1_in, n_in) + term(n1_out, n_out))
}

/// Scan-type contrast of suprathreshold proportions inside and outside a
/// subnetwork: `(N1in/Nin)^N1in (N1out/Nout)^N1out` when the inside
/// proportion is larger, else 0.
pub fn scan_stat(subnetwork_edges: &[usize], p_values: &[f64], p0: f64) -> Result<f64> {
    if subnetwork_edges.is_empty() {
        return invalid("scan statistic of an empty edge set");
    }
    let n_in = subnetwork_edges.len();
    if n_in >= p_values.len() {
        return invalid("scan statistic needs edges outside the subnetwork");
    }
    if let Some(&e) = subnetwork_edges.iter().find(|&&e| e >= p_values.len()) {
        return invalid(format!("edge id {e} out of range"));
    }
    let n1_in = subnetwork_edges.iter().filter(|&&e| p_values[e] < p0).count();
    let n1_total = p_values.iter().filter(|&&p| p < p0).count();
    Ok(scan_log(n1_in, n_in, n1_total - n1_in, p_values.len() - n_in).map_or(0.0, f64::exp))
}

/// Statistic of one subnetwork from the weights `w = -log p`.
fn subnetwork_statistic(kind: Statistic, edges: &[usize], w: &WeightMatrix, supra_total: usize, p0: f64) -> f64 {
    let weights = w.weights();
    match kind {
        Statistic::FisherChernoff => {
            if edges.is_empty() {
                return 0.0;
            }
            let mean = edges.iter().map(|&e| weights[e]).sum::<f64>() / edges.len() as f64;
            chernoff(mean, edges.len())
        }
        Statistic::Scan => {
            let n_out = weights.len() - edges.len();
            if edges.is_empty() || n_out == 0 {
                return SCAN_LOG_FLOOR;
            }
            let cut = -p0.ln();
            let n1_in = edges.iter().filter(|&&e| weights[e] > cut).count();
            scan_log(n1_in, edges.len(), supra_total - n1_in, n_out)
                .unwrap_or(SCAN_LOG_FLOOR)
                .max(SCAN_LOG_FLOOR)
        }
    }
}

fn score_detection(det: &DetectionResult, w: &WeightMatrix, cfg: &InferConfig) -> Vec<f64> {
    let cut = -cfg.p0.ln();
    let supra_total = w.weights().iter().filter(|&&x| x > cut).count();
    det.subnetworks
        .iter()
        .map(|s| subnetwork_statistic(cfg.statistic, &s.edges, w, supra_total, cfg.p0))
        .collect()
}

/// Largest subnetwork statistic after re-running detection on `w`.
fn max_statistic(w: &WeightMatrix, detect_cfg: &DetectConfig, cfg: &InferConfig) -> Result<f64> {
    let det = select_k(w, detect_cfg)?;
    Ok(score_detection(&det, w, cfg)
        .into_iter()
        .fold(cfg.statistic.empty_value(), f64::max))
}

/// Add-one permutation p-value `(1 + #{T_m >= T0}) / (M + 1)`.
pub fn permutation_pvalue(t0: f64, null: &NullDistribution) -> f64 {
    let exceed = null.values.iter().filter(|&&t| t >= t0).count();
    (1 + exceed) as f64 / (null.values.len() + 1) as f64
}

/// The `(1 - alpha)` empirical quantile used for rejection: the order
/// statistic of rank `ceil((1 - alpha)(M + 1))`. `T0` is significant when it
/// strictly exceeds this value, which is equivalent to an add-one p-value
/// of at most `alpha`.
pub fn null_quantile(null: &NullDistribution, alpha: f64) -> f64 {
    let m = null.values.len();
    let rank = ((1.0 - alpha) * (m + 1) as f64 - 1e-9).ceil() as usize;
    if rank > m {
        return f64::INFINITY;
    }
    if rank == 0 {
        return f64::NEG_INFINITY;
    }
    let mut sorted = null.values.clone();
    sorted.sort_by(f64::total_cmp);
    sorted[rank - 1]
}

fn assemble(
    procedure: Procedure,
    gate: Option<GateOutcome>,
    detection: DetectionResult,
    observed: Vec<f64>,
    null: NullDistribution,
    alpha: f64,
) -> InferenceReport {
    let threshold = null_quantile(&null, alpha);
    let mut subnetworks = detection.subnetworks;
    let mut significant = Vec::new();
    for (i, (s, &t0)) in subnetworks.iter_mut().zip(&observed).enumerate() {
        s.statistic = Some(t0);
        s.p_value = Some(permutation_pvalue(t0, &null));
        if t0 > threshold {
            significant.push(i);
        }
    }
    InferenceReport {
        procedure,
        gate,
        k_selected: Some(detection.k_selected),
        subnetworks,
        null: Some(null),
        threshold: Some(threshold).filter(|t| t.is_finite()),
        significant,
    }
}

fn shuffled_labels(labels: &[Group], seed: u64, m: usize) -> Vec<Group> {
    let mut out = labels.to_vec();
    out.shuffle(&mut rng::stream(seed, rng::DOMAIN_GLP, m as u64));
    out
}

/// Group-label permutation test.
pub fn glp_test(
    dataset: &ConnectomeDataset,
    detect_cfg: &DetectConfig,
    cfg: &InferConfig,
) -> Result<InferenceReport> {
    cfg.validate()?;
    detect_cfg.validate(dataset.nodes())?;
    let (controls, cases) = dataset.group_sizes();
    if controls < 2 || cases < 2 {
        return invalid(format!(
            "group-label permutation needs at least 2 subjects per group, got {controls} and {cases}"
        ));
    }
    let n = dataset.nodes();
    let tester = EdgeTester::new(dataset, cfg.test_method);
    let labels = dataset.labels();

    let observed_p = tester.p_values(&labels)?;
    let w = WeightMatrix::from_p_values(n, &observed_p)?;
    let mut detection = select_k(&w, detect_cfg)?;
    for s in &mut detection.subnetworks {
        s.describe(&observed_p, detect_cfg.describe_p0, n)?;
    }
    let observed = score_detection(&detection, &w, cfg);

    let values = (1..=cfg.num_permutations)
        .into_par_iter()
        .map(|m| {
            let perm = shuffled_labels(&labels, cfg.seed, m);
            let p = tester.p_values(&perm)?;
            max_statistic(&WeightMatrix::from_p_values(n, &p)?, detect_cfg, cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    let null = NullDistribution { values, statistic: cfg.statistic };
    Ok(assemble(Procedure::Glp, None, detection, observed, null, cfg.alpha))
}

/// Uniformly random rearrangement of the weights over edge positions.
pub fn edge_permute<R: Rng + ?Sized>(w: &WeightMatrix, rng: &mut R) -> WeightMatrix {
    let mut v = w.weights().to_vec();
    v.shuffle(rng);
    WeightMatrix::new(w.nodes(), v).expect("permuting valid weights keeps them valid")
}

/// Edge-permutation test of the subnetworks detected in `w`, without the
/// omnibus gate.
pub fn edge_permutation_test(
    w: &WeightMatrix,
    p_values: Option<&[f64]>,
    detect_cfg: &DetectConfig,
    cfg: &InferConfig,
) -> Result<InferenceReport> {
    cfg.validate()?;
    let mut detection = select_k(w, detect_cfg)?;
    let p_owned;
    let p = match p_values {
        Some(p) => p,
        None => {
            p_owned = w.p_values();
            &p_owned
        }
    };
    for s in &mut detection.subnetworks {
        s.describe(p, detect_cfg.describe_p0, w.nodes())?;
    }
    let observed = score_detection(&detection, w, cfg);
    let values = (1..=cfg.num_permutations)
        .into_par_iter()
        .map(|m| {
            let mut stream = rng::stream(cfg.seed, rng::DOMAIN_GEP, m as u64);
            max_statistic(&edge_permute(w, &mut stream), detect_cfg, cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    let null = NullDistribution { values, statistic: cfg.statistic };
    Ok(assemble(Procedure::Gep, None, detection, observed, null, cfg.alpha))
}

/// Graph-edge permutation test, run only when the aSPU omnibus rejects.
pub fn gep_test(
    dataset: &ConnectomeDataset,
    detect_cfg: &DetectConfig,
    cfg: &InferConfig,
) -> Result<InferenceReport> {
    cfg.validate()?;
    detect_cfg.validate(dataset.nodes())?;
    let p_gate = spu_omnibus(dataset, cfg)?;
    let gate = GateOutcome { p_value: p_gate, passed: p_gate <= cfg.alpha };
    if !gate.passed {
        return Ok(InferenceReport::gate_failed(Procedure::Gep, gate));
    }
    let tester = EdgeTester::new(dataset, cfg.test_method);
    let p = tester.p_values(&dataset.labels())?;
    let w = WeightMatrix::from_p_values(dataset.nodes(), &p)?;
    let mut report = edge_permutation_test(&w, Some(&p), detect_cfg, cfg)?;
    report.gate = Some(gate);
    Ok(report)
}

fn spu_values(scores: &[f64], gammas: &[Gamma]) -> Vec<f64> {
    gammas
        .iter()
        .map(|g| match *g {
            Gamma::Power(k) => scores.iter().map(|u| u.powi(k as i32)).sum::<f64>().abs(),
            Gamma::Max => scores.iter().fold(0.0f64, |m, u| m.max(u.abs())),
        })
        .collect()
}

/// Adaptive sum-of-powered-score omnibus test of "no edge differs".
///
/// Every SPU component and the adaptive minimum-p combination are calibrated
/// on one shared set of `omnibus_b` label permutations.
pub fn spu_omnibus(dataset: &ConnectomeDataset, cfg: &InferConfig) -> Result<f64> {
    if cfg.omnibus_b < 19 {
        return invalid(format!("omnibus needs at least 19 permutations, got {}", cfg.omnibus_b));
    }
    if cfg.omnibus_gammas.is_empty() {
        return invalid("omnibus needs at least one SPU power");
    }
    let tester = EdgeTester::new(dataset, TestMethod::WelchT);
    let labels = dataset.labels();
    let observed = spu_values(&tester.standardized_differences(&labels)?, &cfg.omnibus_gammas);
    let perms: Vec<Vec<f64>> = (1..=cfg.omnibus_b)
        .into_par_iter()
        .map(|b| {
            let mut perm = labels.clone();
            perm.shuffle(&mut rng::stream(cfg.seed, rng::DOMAIN_SPU, b as u64));
            Ok(spu_values(&tester.standardized_differences(&perm)?, &cfg.omnibus_gammas))
        })
        .collect::<Result<_>>()?;

    let b = cfg.omnibus_b;
    let g = cfg.omnibus_gammas.len();
    // Sorted permutation values per power, for rank lookups.
    let sorted: Vec<Vec<f64>> = (0..g)
        .map(|j| {
            let mut col: Vec<f64> = perms.iter().map(|row| row[j]).collect();
            col.sort_by(f64::total_cmp);
            col
        })
        .collect();
    let count_ge = |j: usize, t: f64| b - sorted[j].partition_point(|&x| x < t);

    let min_p_obs = (0..g)
        .map(|j| (1 + count_ge(j, observed[j])) as f64 / (b + 1) as f64)
        .fold(f64::INFINITY, f64::min);
    let min_p_perm: Vec<f64> = perms
        .iter()
        .map(|row| {
            (0..g)
                .map(|j| count_ge(j, row[j]) as f64 / b as f64)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let hits = min_p_perm.iter().filter(|&&p| p <= min_p_obs).count();
    Ok(((1 + hits) as f64 / (b + 1) as f64).min(1.0))
}
