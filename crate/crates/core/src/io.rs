//! File formats: dataset manifests, CSV matrices, result documents, the
//! edge table and the heatmap figure.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::DetectionResult;
use crate::edgestats::{fisher_z, EdgeTestResult, TestMethod};
use crate::error::{Error, Result};
use crate::graphcore::{ConnectomeDataset, EdgeIndex, Group, Subject};

pub const SCHEMA_VERSION: u32 = 1;
pub const SYMMETRY_TOL: f64 = 1e-8;
/// `-log p` is clipped here for the heatmap colour ramp.
pub const HEATMAP_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub group: Group,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_names: Option<Vec<String>>,
    pub subjects: Vec<ManifestEntry>,
}

fn load_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Load { path: path.to_path_buf(), msg: msg.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| load_err(path, e.to_string()))?;
    if let Some(names) = &m.node_names {
        if names.len() != m.n {
            return Err(load_err(path, format!("{} node names for n = {}", names.len(), m.n)));
        }
    }
    if m.subjects.is_empty() {
        return Err(load_err(path, "manifest lists no subjects"));
    }
    Ok(m)
}

/// Reads a comma-separated `n x n` matrix and returns its upper triangle in
/// edge order. The diagonal is ignored.
pub fn read_matrix(path: &Path, n: usize) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| load_err(path, e.to_string()))?;
    let mut m = Vec::with_capacity(n * n);
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| load_err(path, e.to_string()))?;
        if record.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows += 1;
        if rows > n {
            return Err(load_err(path, format!("more than {n} rows")));
        }
        if record.len() != n {
            return Err(load_err(path, format!("row {rows} has {} columns, expected {n}", record.len())));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| load_err(path, format!("cell ({rows}, {}) is not a number: '{cell}'", col + 1)))?;
            if !v.is_finite() && rows != col + 1 {
                return Err(load_err(path, format!("cell ({rows}, {}) is not finite", col + 1)));
            }
            m.push(v);
        }
    }
    if rows != n {
        return Err(load_err(path, format!("{rows} rows, expected {n}")));
    }
    let index = EdgeIndex::new(n)?;
    let mut edges = Vec::with_capacity(index.len());
    for (i, j) in index.pairs() {
        let (a, b) = (m[(i - 1) * n + (j - 1)], m[(j - 1) * n + (i - 1)]);
        if (a - b).abs() > SYMMETRY_TOL {
            return Err(load_err(path, format!("not symmetric at ({i}, {j}): {a} vs {b}")));
        }
        edges.push(a);
    }
    Ok(edges)
}

/// Loads every subject listed in a manifest. With `fisher` the entries are
/// treated as correlations and Fisher-z transformed.
pub fn load_dataset(manifest_path: &Path, fisher: bool) -> Result<(ConnectomeDataset, Manifest)> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut subjects = Vec::with_capacity(manifest.subjects.len());
    for entry in &manifest.subjects {
        let path = base.join(&entry.path);
        let mut edges = read_matrix(&path, manifest.n)?;
        if fisher {
            for (e, v) in edges.iter_mut().enumerate() {
                *v = fisher_z(*v).map_err(|err| load_err(&path, format!("edge {e}: {err}")))?;
            }
        }
        subjects.push(Subject { id: entry.id.clone(), group: entry.group, edges });
    }
    let dataset = ConnectomeDataset::new(manifest.n, subjects).map_err(|e| load_err(manifest_path, e.to_string()))?;
    Ok((dataset, manifest))
}

fn matrix_csv(edges: &[f64], n: usize) -> String {
    let index = EdgeIndex::new(n).expect("n checked by the dataset");
    let mut m = vec![0.0; n * n];
    for (e, (i, j)) in index.pairs().enumerate() {
        m[(i - 1) * n + (j - 1)] = edges[e];
        m[(j - 1) * n + (i - 1)] = edges[e];
    }
    let mut out = String::new();
    for row in m.chunks(n) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Writes one CSV per subject under `dir/subjects` plus `dir/manifest.json`.
pub fn write_dataset(dir: &Path, dataset: &ConnectomeDataset) -> Result<PathBuf> {
    let sub = dir.join("subjects");
    fs::create_dir_all(&sub).map_err(io_err(&sub))?;
    let mut entries = Vec::new();
    for s in dataset.subjects() {
        let rel = PathBuf::from("subjects").join(format!("{}.csv", s.id));
        write_atomic(&dir.join(&rel), matrix_csv(&s.edges, dataset.nodes()).as_bytes())?;
        entries.push(ManifestEntry { id: s.id.clone(), group: s.group, path: rel });
    }
    let manifest = Manifest { n: dataset.nodes(), node_names: None, subjects: entries };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    pub edges: usize,
    pub controls: usize,
    pub cases: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub method: TestMethod,
    pub min_p: f64,
    pub below_0_05: usize,
    pub below_0_01: usize,
}

impl EdgeSummary {
    pub fn of(tests: &EdgeTestResult) -> Self {
        let p = &tests.p_values;
        Self {
            method: tests.method,
            min_p: p.iter().cloned().fold(1.0, f64::min),
            below_0_05: p.iter().filter(|&&x| x < 0.05).count(),
            below_0_01: p.iter().filter(|&&x| x < 0.01).count(),
        }
    }
}

/// Everything a command reports. Sections a command does not produce are
/// omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub schema: u32,
    pub run: RunInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_tests: Option<EdgeSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inference: Option<crate::infer::InferenceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<serde_json::Value>,
    /// Node order used by the heatmap: subnetwork nodes first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_order: Option<Vec<usize>>,
}

impl ResultDocument {
    pub fn new(run: RunInfo) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            run,
            dataset: None,
            edge_tests: None,
            detection: None,
            inference: None,
            baseline: None,
            simulation: None,
            node_order: None,
        }
    }
}

/// Per-edge membership used by the edge table: 1-based subnetwork index
/// (0 = none) and whether that subnetwork is significant.
#[derive(Debug, Clone, Default)]
pub struct EdgeMembership {
    pub subnetwork: Vec<usize>,
    pub significant: Vec<bool>,
}

impl EdgeMembership {
    pub fn new(edges: usize, groups: &[(&[usize], bool)]) -> Self {
        let mut m = Self { subnetwork: vec![0; edges], significant: vec![false; edges] };
        for (k, (list, sig)) in groups.iter().enumerate() {
            for &e in *list {
                m.subnetwork[e] = k + 1;
                m.significant[e] = *sig;
            }
        }
        m
    }
}

/// Edge table: `i,j,p,sign,w,subnetwork,significant`.
pub fn edges_csv(n: usize, tests: &EdgeTestResult, weights: &[f64], membership: &EdgeMembership) -> String {
    let index = EdgeIndex::new(n).expect("n checked by the dataset");
    let mut out = String::from("i,j,p,sign,w,subnetwork,significant\n");
    for (e, (i, j)) in index.pairs().enumerate() {
        let sub = membership.subnetwork.get(e).copied().unwrap_or(0);
        let sig = membership.significant.get(e).copied().unwrap_or(false);
        out.push_str(&format!(
            "{i},{j},{:?},{},{:?},{sub},{}\n",
            tests.p_values[e],
            tests.signs[e],
            weights[e],
            u8::from(sig)
        ));
    }
    out
}

/// Subnetwork nodes first (in subnetwork order), then the rest ascending.
pub fn node_order(n: usize, subnetworks: &[&[usize]]) -> Vec<usize> {
    let mut seen = vec![false; n + 1];
    let mut order = Vec::with_capacity(n);
    for nodes in subnetworks {
        for &v in *nodes {
            if !seen[v] {
                seen[v] = true;
                order.push(v);
            }
        }
    }
    order.extend((1..=n).filter(|&v| !seen[v]));
    order
}

fn ramp(x: f64) -> String {
    // White to dark red.
    let t = (x / HEATMAP_CLIP).clamp(0.0, 1.0);
    let r = (255.0 - 75.0 * t).round() as u8;
    let g = (255.0 * (1.0 - t)).round() as u8;
    let b = (255.0 * (1.0 - t)).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of `-log p` with rows and columns in `order`. Consecutive
/// subnetworks (given as sizes along `order`) are outlined.
pub fn heatmap_svg(n: usize, p_values: &[f64], order: &[usize], block_sizes: &[usize]) -> String {
    const CELL: usize = 6;
    let index = EdgeIndex::new(n).expect("n checked by the dataset");
    let side = CELL * n;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{side}\" height=\"{side}\" viewBox=\"0 0 {side} {side}\">\n"
    );
    let joined: Vec<String> = order.iter().map(|v| v.to_string()).collect();
    out.push_str(&format!("<desc>-log p clipped at {HEATMAP_CLIP}; node order {}</desc>\n", joined.join(" ")));
    out.push_str(&format!("<rect width=\"{side}\" height=\"{side}\" fill=\"#ffffff\"/>\n"));
    for (r, &a) in order.iter().enumerate() {
        for (c, &b) in order.iter().enumerate() {
            if a == b {
                continue;
            }
            let e = index.pack(a.min(b), a.max(b)).expect("order holds valid nodes");
            let x = -p_values[e].ln();
            if x <= 0.0 {
                continue;
            }
            out.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"/>\n",
                c * CELL,
                r * CELL,
                ramp(x)
            ));
        }
    }
    let mut start = 0;
    for &size in block_sizes {
        out.push_str(&format!(
            "<rect x=\"{0}\" y=\"{0}\" width=\"{1}\" height=\"{1}\" fill=\"none\" stroke=\"#000000\" stroke-width=\"1\"/>\n",
            start * CELL,
            size * CELL
        ));
        start += size;
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    #[test]
    fn loads_small_dataset() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "a.csv", "1,0.5,0.2\n0.5,1,0.1\n0.2,0.1,1\n");
        write(dir.path(), "b.csv", "0, 0.4, 0.3\n0.4, 0, 0.2\n0.3, 0.2, 0\n");
        write(
            dir.path(),
            "m.json",
            r#"{"n": 3, "subjects": [{"id": "a", "group": 0, "path": "a.csv"}, {"id": "b", "group": 1, "path": "b.csv"}]}"#,
        );
        let (d, _) = load_dataset(&dir.path().join("m.json"), false).unwrap();
        assert_eq!(d.edge_count(), 3);
        assert_eq!(d.subjects()[0].edges, vec![0.5, 0.2, 0.1]);
        assert_eq!(d.subjects()[1].group, Group::Case);
        let (z, _) = load_dataset(&dir.path().join("m.json"), true).unwrap();
        assert!((z.subjects()[0].edges[0] - 0.5f64.atanh()).abs() < 1e-12);
    }

    #[test]
    fn load_errors_name_the_file_and_cell() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "asym.csv", "0,0.5,0.2\n0.501,0,0.1\n0.2,0.1,0\n");
        let err = read_matrix(&dir.path().join("asym.csv"), 3).unwrap_err().to_string();
        assert!(err.contains("asym.csv") && err.contains("(1, 2)"), "{err}");
        write(dir.path(), "nan.csv", "0,x,0.2\n0.5,0,0.1\n0.2,0.1,0\n");
        let err = read_matrix(&dir.path().join("nan.csv"), 3).unwrap_err().to_string();
        assert!(err.contains("nan.csv") && err.contains("(1, 2)") && err.contains("'x'"), "{err}");
        write(dir.path(), "short.csv", "0,0.5\n0.5,0\n");
        assert!(read_matrix(&dir.path().join("short.csv"), 3).is_err());
        // Tiny asymmetry is tolerated.
        write(dir.path(), "ok.csv", "0,0.5,0.2\n0.500000000001,0,0.1\n0.2,0.1,0\n");
        assert!(read_matrix(&dir.path().join("ok.csv"), 3).is_ok());
    }

    #[test]
    fn ninety_nodes_give_4005_edges() {
        let dir = tempfile::tempdir().unwrap();
        let n = 90;
        let rows: Vec<String> = (0..n)
            .map(|i| (0..n).map(|j| format!("{}", (i + j) as f64 / 200.0)).collect::<Vec<_>>().join(","))
            .collect();
        write(dir.path(), "m.csv", &rows.join("\n"));
        assert_eq!(read_matrix(&dir.path().join("m.csv"), n).unwrap().len(), 4005);
    }

    #[test]
    fn dataset_round_trips_through_files() {
        let idx = EdgeIndex::new(4).unwrap();
        let s = |id: &str, g, k: f64| Subject { id: id.into(), group: g, edges: (0..idx.len()).map(|e| k * e as f64 + 0.1).collect() };
        let d = ConnectomeDataset::new(4, vec![s("x", Group::Control, 0.3), s("y", Group::Case, -1.7)]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = write_dataset(dir.path(), &d).unwrap();
        assert_eq!(load_dataset(&m, false).unwrap().0, d);
    }

    #[test]
    fn node_order_and_heatmap() {
        let order = node_order(6, &[&[4, 2], &[6]]);
        assert_eq!(order, vec![4, 2, 6, 1, 3, 5]);
        let p = vec![0.5; 15];
        let svg = heatmap_svg(6, &p, &order, &[2, 1]);
        assert!(svg.contains("node order 4 2 6 1 3 5"));
        assert_eq!(svg.matches("stroke=").count(), 2);
        assert_eq!(ramp(100.0), ramp(HEATMAP_CLIP));
    }
}
