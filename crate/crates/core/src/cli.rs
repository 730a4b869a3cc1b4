//! The `netobj` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::baselines::{bh_fdr, local_fdr, nbs, storey_qvalues, BaselineMethod, LfdrConfig, NullModel};
use crate::detect::{select_k, DetectConfig, DetectionResult};
use crate::edgestats::{edgewise_tests, weights_from_pvalues, EdgeTestResult, TestMethod};
use crate::error::Error;
use crate::graphcore::ConnectomeDataset;
use crate::infer::{gep_test, glp_test, InferConfig, InferenceReport, Procedure, Statistic};
use crate::io::{self, DatasetSummary, EdgeMembership, EdgeSummary, Manifest, ResultDocument, RunInfo};
use crate::sim::{generate_replicate, run_table1, table1_csv, type1_experiment, HarnessConfig, Method, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const THREADS_ENV: &str = "NETOBJ_THREADS";

#[derive(Parser, Debug)]
#[command(name = "netobj", version, about = "Detect and test differentially expressed connectome subnetworks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Two-sample test on every edge.
    EdgeTests {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Extract candidate subnetworks without inference.
    Detect {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        detect: DetectArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Detect subnetworks and test them by permutation.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        detect: DetectArgs,
        #[command(flatten)]
        infer: InferArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Edge- or component-level competitor methods.
    Baseline {
        #[command(flatten)]
        data: DataArgs,
        /// fdr | storey | lfdr | nbs
        #[arg(long, default_value = "fdr")]
        baseline: BaselineMethod,
        /// FDR level for fdr and storey.
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        /// Local fdr rejection cutoff.
        #[arg(long, default_value_t = 0.2)]
        cutoff: f64,
        /// Estimate the local fdr null by central matching.
        #[arg(long)]
        empirical_null: bool,
        /// NBS primary threshold on |t|.
        #[arg(long, default_value_t = 3.0)]
        tau: f64,
        #[arg(long = "M", default_value_t = 1000)]
        permutations: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a synthetic planted-clique dataset.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 30)]
        controls: usize,
        #[arg(long, default_value_t = 30)]
        cases: usize,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        /// Replicate stream to draw.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Score all methods over a grid of simulation settings.
    BenchTable1 {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        sigmas: Vec<f64>,
        /// Per-group sample sizes.
        #[arg(long, value_delimiter = ',', default_value = "30,60")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        #[arg(long, value_delimiter = ',', default_value = "glp,gep,fdr,lfdr,nbs")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long, default_value_t = 3.0)]
        tau: f64,
        #[command(flatten)]
        detect: DetectArgs,
        #[command(flatten)]
        infer: InferArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Network-level false positive rate under no group difference.
    Type1 {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 60)]
        controls: usize,
        #[arg(long, default_value_t = 60)]
        cases: usize,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, value_delimiter = ',', default_value = "glp,gep")]
        methods: Vec<Method>,
        #[command(flatten)]
        detect: DetectArgs,
        #[command(flatten)]
        infer: InferArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// JSON manifest listing subjects, groups and matrix files.
    #[arg(long)]
    manifest: PathBuf,
    /// wilcoxon | welch-t
    #[arg(long, default_value = "wilcoxon")]
    method: TestMethod,
    /// Fisher-z transform the matrix entries first.
    #[arg(long)]
    fisher_z: bool,
}

#[derive(Args, Debug, Serialize)]
struct DetectArgs {
    #[arg(long, default_value_t = 0.5)]
    lambda0: f64,
    #[arg(long, default_value_t = 1)]
    kmin: usize,
    /// Largest K searched; defaults to min(n - 1, 30).
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long, default_value_t = 3)]
    min_nodes: usize,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    /// Keep the raw spectral partitions.
    #[arg(long)]
    no_refine: bool,
}

impl DetectArgs {
    fn config(&self, n: usize, seed: u64) -> DetectConfig {
        let mut c = DetectConfig::for_nodes(n);
        c.lambda0 = self.lambda0;
        c.k_min = self.kmin;
        if let Some(k) = self.kmax {
            c.k_max = k;
        }
        c.min_cluster_nodes = self.min_nodes;
        c.kmeans_restarts = self.restarts;
        c.refine = !self.no_refine;
        c.seed = seed;
        c
    }
}

#[derive(Args, Debug, Serialize)]
struct InferArgs {
    /// glp | gep
    #[arg(long, default_value = "glp")]
    perm: Procedure,
    /// fisher | scan
    #[arg(long, default_value = "fisher")]
    statistic: Statistic,
    #[arg(long = "M", default_value_t = 1000)]
    permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    p0: f64,
    /// Permutations for the omnibus gate of gep.
    #[arg(long = "B", default_value_t = 1000)]
    omnibus_b: usize,
}

impl InferArgs {
    fn config(&self, method: TestMethod, seed: u64) -> InferConfig {
        InferConfig {
            num_permutations: self.permutations,
            alpha: self.alpha,
            statistic: self.statistic,
            p0: self.p0,
            test_method: method,
            omnibus_b: self.omnibus_b,
            seed,
            ..InferConfig::default()
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SimArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    planted: usize,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    mu1: f64,
}

impl SimArgs {
    fn config(&self, sigma: f64, controls: usize, cases: usize, replicates: usize, seed: u64) -> SimConfig {
        SimConfig {
            n: self.n,
            planted_nodes: self.planted,
            theta: self.theta,
            sigma,
            rho_cs: self.rho,
            controls,
            cases,
            replicates,
            mu1: self.mu1,
            seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct OutArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write heatmap.svg.
    #[arg(long)]
    emit_heatmap: bool,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configs serialize")
}

struct Loaded {
    dataset: ConnectomeDataset,
    manifest: Manifest,
}

fn load(data: &DataArgs) -> std::result::Result<Loaded, Failure> {
    let (dataset, manifest) = io::load_dataset(&data.manifest, data.fisher_z)?;
    Ok(Loaded { dataset, manifest })
}

fn summary(l: &Loaded) -> DatasetSummary {
    let (controls, cases) = l.dataset.group_sizes();
    DatasetSummary {
        nodes: l.dataset.nodes(),
        edges: l.dataset.edge_count(),
        controls,
        cases,
        node_names: l.manifest.node_names.clone(),
    }
}

fn run_info(command: &str, seed: u64, config: Vec<(&str, serde_json::Value)>) -> RunInfo {
    RunInfo {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: config.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>(),
    }
}

fn write_results(out: &OutArgs, doc: &ResultDocument) -> Outcome {
    io::write_json(&out.out_dir.join("results.json"), doc)?;
    Ok(())
}

fn write_edges(out: &OutArgs, n: usize, tests: &EdgeTestResult, membership: &EdgeMembership) -> Outcome {
    let w = weights_from_pvalues(tests)?;
    let csv = io::edges_csv(n, tests, w.weights(), membership);
    io::write_atomic(&out.out_dir.join("edges.csv"), csv.as_bytes())?;
    Ok(())
}

/// Writes the heatmap when requested and returns the node order.
fn heatmap(out: &OutArgs, n: usize, tests: &EdgeTestResult, blocks: &[&[usize]]) -> std::result::Result<Vec<usize>, Failure> {
    let order = io::node_order(n, blocks);
    if out.emit_heatmap {
        let sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        let svg = io::heatmap_svg(n, &tests.p_values, &order, &sizes);
        io::write_atomic(&out.out_dir.join("heatmap.svg"), svg.as_bytes())?;
    }
    Ok(order)
}

fn cmd_edge_tests(data: &DataArgs, out: &OutArgs) -> Outcome {
    let l = load(data)?;
    let tests = edgewise_tests(&l.dataset, data.method)?;
    let mut doc = ResultDocument::new(run_info("edge-tests", out.seed, vec![("data", to_value(data))]));
    doc.dataset = Some(summary(&l));
    doc.edge_tests = Some(EdgeSummary::of(&tests));
    write_edges(out, l.dataset.nodes(), &tests, &EdgeMembership::default())?;
    write_results(out, &doc)?;
    println!("{} edges tested, {} with p < 0.05", l.dataset.edge_count(), doc.edge_tests.as_ref().unwrap().below_0_05);
    Ok(())
}

fn describe(det: &mut DetectionResult, tests: &EdgeTestResult, p0: f64, n: usize) -> Outcome {
    for s in &mut det.subnetworks {
        s.describe(&tests.p_values, p0, n)?;
    }
    Ok(())
}

fn cmd_detect(data: &DataArgs, detect: &DetectArgs, out: &OutArgs) -> Outcome {
    let l = load(data)?;
    let n = l.dataset.nodes();
    let cfg = detect.config(n, out.seed);
    cfg.validate(n).map_err(usage)?;
    let tests = edgewise_tests(&l.dataset, data.method)?;
    let w = weights_from_pvalues(&tests)?;
    let mut det = select_k(&w, &cfg)?;
    describe(&mut det, &tests, cfg.describe_p0, n)?;
    let blocks: Vec<&[usize]> = det.subnetworks.iter().map(|s| s.nodes.as_slice()).collect();
    let groups: Vec<(&[usize], bool)> = det.subnetworks.iter().map(|s| (s.edges.as_slice(), false)).collect();
    write_edges(out, n, &tests, &EdgeMembership::new(tests.p_values.len(), &groups))?;
    let order = heatmap(out, n, &tests, &blocks)?;
    let mut doc = ResultDocument::new(run_info(
        "detect",
        out.seed,
        vec![("data", to_value(data)), ("detect", to_value(&cfg))],
    ));
    doc.dataset = Some(summary(&l));
    doc.edge_tests = Some(EdgeSummary::of(&tests));
    println!("K = {}, {} candidate subnetworks", det.k_selected, det.subnetworks.len());
    doc.detection = Some(det);
    doc.node_order = Some(order);
    write_results(out, &doc)
}

fn cmd_test(data: &DataArgs, detect: &DetectArgs, infer: &InferArgs, out: &OutArgs) -> Outcome {
    let l = load(data)?;
    let n = l.dataset.nodes();
    let dcfg = detect.config(n, out.seed);
    let icfg = infer.config(data.method, out.seed);
    dcfg.validate(n).map_err(usage)?;
    icfg.validate().map_err(usage)?;
    let report: InferenceReport = match infer.perm {
        Procedure::Glp => glp_test(&l.dataset, &dcfg, &icfg)?,
        Procedure::Gep => gep_test(&l.dataset, &dcfg, &icfg)?,
    };
    let tests = edgewise_tests(&l.dataset, data.method)?;
    let groups: Vec<(&[usize], bool)> = report
        .subnetworks
        .iter()
        .enumerate()
        .map(|(k, s)| (s.edges.as_slice(), report.significant.contains(&k)))
        .collect();
    write_edges(out, n, &tests, &EdgeMembership::new(tests.p_values.len(), &groups))?;
    let blocks: Vec<&[usize]> = report.significant_subnetworks().map(|s| s.nodes.as_slice()).collect();
    let order = heatmap(out, n, &tests, &blocks)?;
    let mut doc = ResultDocument::new(run_info(
        "test",
        out.seed,
        vec![
            ("data", to_value(data)),
            ("detect", to_value(&dcfg)),
            ("infer", to_value(&icfg)),
            ("procedure", to_value(&infer.perm)),
        ],
    ));
    doc.dataset = Some(summary(&l));
    doc.edge_tests = Some(EdgeSummary::of(&tests));
    if let Some(g) = report.gate {
        println!("omnibus gate p = {:.4} ({})", g.p_value, if g.passed { "passed" } else { "not passed" });
    }
    for s in report.significant_subnetworks() {
        println!(
            "significant subnetwork: {} nodes, T = {:.4}, p = {:.4}",
            s.nodes.len(),
            s.statistic.unwrap_or(f64::NAN),
            s.p_value.unwrap_or(f64::NAN)
        );
    }
    println!("{} of {} subnetworks significant", report.significant.len(), report.subnetworks.len());
    doc.inference = Some(report);
    doc.node_order = Some(order);
    write_results(out, &doc)
}

#[allow(clippy::too_many_arguments)]
fn cmd_baseline(
    data: &DataArgs,
    baseline: BaselineMethod,
    q: f64,
    cutoff: f64,
    empirical_null: bool,
    tau: f64,
    permutations: usize,
    alpha: f64,
    out: &OutArgs,
) -> Outcome {
    let l = load(data)?;
    let n = l.dataset.nodes();
    let tests = edgewise_tests(&l.dataset, data.method)?;
    let edges = tests.p_values.len();
    let mut config = vec![("data", to_value(data)), ("baseline", to_value(&baseline))];
    let (value, membership) = match baseline {
        BaselineMethod::BhFdr => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Failure::Usage(format!("--q must lie in (0, 1), got {q}")));
            }
            config.push(("q", json!(q)));
            let r = bh_fdr(&tests.p_values, q)?;
            let list: Vec<usize> = r.rejected.iter().copied().collect();
            (to_value(&r), EdgeMembership::new(edges, &[(&list, true)]))
        }
        BaselineMethod::StoreyQ => {
            config.push(("q", json!(q)));
            let qv = storey_qvalues(&tests.p_values)?;
            let list: Vec<usize> = (0..edges).filter(|&e| qv[e] <= q).collect();
            (json!({ "q_values": qv, "rejected": list }), EdgeMembership::new(edges, &[(&list, true)]))
        }
        BaselineMethod::LocalFdr => {
            let cfg = LfdrConfig {
                cutoff,
                null: if empirical_null { NullModel::CentralMatching } else { NullModel::Theoretical },
                ..LfdrConfig::default()
            };
            cfg.validate().map_err(usage)?;
            if edges < 200 {
                eprintln!("warning: local fdr with only {edges} edges is unreliable");
            }
            config.push(("lfdr", to_value(&cfg)));
            let r = local_fdr(&tests.p_values, &cfg)?;
            let list: Vec<usize> = r.rejection.rejected.iter().copied().collect();
            (to_value(&r), EdgeMembership::new(edges, &[(&list, true)]))
        }
        BaselineMethod::Nbs => {
            if !(tau > 0.0) || permutations < 19 || !(alpha > 0.0 && alpha < 1.0) {
                return Err(Failure::Usage(format!(
                    "nbs needs --tau > 0, --M >= 19 and --alpha in (0, 1); got {tau}, {permutations}, {alpha}"
                )));
            }
            config.push(("tau", json!(tau)));
            config.push(("permutations", json!(permutations)));
            config.push(("alpha", json!(alpha)));
            let r = nbs(&l.dataset, tau, permutations, out.seed)?;
            let groups: Vec<(&[usize], bool)> = r.components.iter().map(|c| (c.edges.as_slice(), c.p_value <= alpha)).collect();
            let m = EdgeMembership::new(edges, &groups);
            (to_value(&r), m)
        }
    };
    let rejected = membership.significant.iter().filter(|&&s| s).count();
    write_edges(out, n, &tests, &membership)?;
    let mut doc = ResultDocument::new(run_info("baseline", out.seed, config));
    doc.dataset = Some(summary(&l));
    doc.edge_tests = Some(EdgeSummary::of(&tests));
    doc.baseline = Some(value);
    write_results(out, &doc)?;
    println!("{baseline}: {rejected} edges flagged");
    Ok(())
}

fn cmd_simulate(sim: &SimArgs, controls: usize, cases: usize, sigma: f64, replicate: usize, out: &OutArgs) -> Outcome {
    let cfg = sim.config(sigma, controls, cases, 1, out.seed);
    cfg.validate().map_err(usage)?;
    let s = generate_replicate(&cfg, replicate)?;
    let manifest = io::write_dataset(&out.out_dir, &s.dataset)?;
    let mut doc = ResultDocument::new(run_info(
        "simulate",
        out.seed,
        vec![("simulation", to_value(&cfg)), ("replicate", json!(replicate))],
    ));
    doc.simulation = Some(json!({ "planted_nodes": s.planted_nodes, "truth_edges": s.truth }));
    write_results(out, &doc)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn harness(n: usize, detect: &DetectArgs, infer: &InferArgs, seed: u64) -> std::result::Result<HarnessConfig, Failure> {
    let mut h = HarnessConfig::for_nodes(n);
    h.detect = detect.config(n, seed);
    h.infer = infer.config(TestMethod::Wilcoxon, seed);
    h.nbs_permutations = infer.permutations;
    h.detect.validate(n).map_err(usage)?;
    h.infer.validate().map_err(usage)?;
    Ok(h)
}

#[allow(clippy::too_many_arguments)]
fn cmd_table1(
    sim: &SimArgs,
    sigmas: &[f64],
    sizes: &[usize],
    replicates: usize,
    methods: &[Method],
    q: f64,
    tau: f64,
    detect: &DetectArgs,
    infer: &InferArgs,
    out: &OutArgs,
) -> Outcome {
    let mut h = harness(sim.n, detect, infer, out.seed)?;
    h.fdr_q = q;
    h.nbs_tau = tau;
    let mut grid = Vec::new();
    for &size in sizes {
        for &sigma in sigmas {
            let cfg = sim.config(sigma, size, size, replicates, out.seed);
            cfg.validate().map_err(usage)?;
            grid.push(cfg);
        }
    }
    let rows = run_table1(&grid, methods, &h)?;
    let csv = table1_csv(&rows);
    io::write_atomic(&out.out_dir.join("table1.csv"), csv.as_bytes())?;
    let mut doc = ResultDocument::new(run_info("bench-table1", out.seed, vec![("harness", to_value(&h)), ("grid", to_value(&grid))]));
    doc.simulation = Some(to_value(&rows));
    write_results(out, &doc)?;
    print!("{csv}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_type1(
    sim: &SimArgs,
    controls: usize,
    cases: usize,
    sigma: f64,
    iterations: usize,
    methods: &[Method],
    detect: &DetectArgs,
    infer: &InferArgs,
    out: &OutArgs,
) -> Outcome {
    let h = harness(sim.n, detect, infer, out.seed)?;
    let cfg = SimConfig { theta: 0.0, ..sim.config(sigma, controls, cases, iterations, out.seed) };
    cfg.validate().map_err(usage)?;
    if iterations == 0 {
        return Err(Failure::Usage("--iterations must be positive".into()));
    }
    let results = type1_experiment(&cfg, iterations, methods, &h)?;
    for r in &results {
        println!("{}: {} of {} iterations with a significant subnetwork ({:.3})", r.method, r.false_positives, r.iterations, r.rate);
    }
    let mut doc = ResultDocument::new(run_info("type1", out.seed, vec![("harness", to_value(&h)), ("simulation", to_value(&cfg))]));
    doc.simulation = Some(to_value(&results));
    write_results(out, &doc)
}

fn dispatch(cli: Cli) -> Outcome {
    match &cli.command {
        Command::EdgeTests { data, out } => cmd_edge_tests(data, out),
        Command::Detect { data, detect, out } => cmd_detect(data, detect, out),
        Command::Test { data, detect, infer, out } => cmd_test(data, detect, infer, out),
        Command::Baseline { data, baseline, q, cutoff, empirical_null, tau, permutations, alpha, out } => {
            cmd_baseline(data, *baseline, *q, *cutoff, *empirical_null, *tau, *permutations, *alpha, out)
        }
        Command::Simulate { sim, controls, cases, sigma, replicate, out } => {
            cmd_simulate(sim, *controls, *cases, *sigma, *replicate, out)
        }
        Command::BenchTable1 { sim, sigmas, sizes, replicates, methods, q, tau, detect, infer, out } => {
            cmd_table1(sim, sigmas, sizes, *replicates, methods, *q, *tau, detect, infer, out)
        }
        Command::Type1 { sim, controls, cases, sigma, iterations, methods, detect, infer, out } => {
            cmd_type1(sim, *controls, *cases, *sigma, *iterations, methods, detect, infer, out)
        }
    }
}

/// Worker count from `NETOBJ_THREADS`; 0 or unset means automatic.
fn thread_count() -> std::result::Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got '{v}'")),
        Err(_) => Ok(0),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| dispatch(cli)) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}
