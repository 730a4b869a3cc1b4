//! Unnormalized-Laplacian spectral embedding and seeded k-means.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative cutoff below which Laplacian eigenvalues count as zero.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-10;

const KMEANS_MAX_ITER: usize = 100;

/// Eigenvectors of `L = D - W` sorted by ascending eigenvalue.
pub struct SpectralEmbedding {
    n: usize,
    eigenvalues: Vec<f64>,
    /// Column-major: vector `c` occupies `vectors[c * n..(c + 1) * n]`.
    vectors: Vec<f64>,
}

impl SpectralEmbedding {
    /// `dense` is the symmetric weight matrix, row-major with zero diagonal.
    pub fn new(dense: &[f64], n: usize) -> Result<Self> {
        let mut lap = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut degree = 0.0;
            for j in 0..n {
                if i != j {
                    let w = dense[i * n + j];
                    lap[(i, j)] = -w;
                    degree += w;
                }
            }
            lap[(i, i)] = degree;
        }
        let eig = SymmetricEigen::try_new(lap, 1e-14, 10_000).ok_or_else(|| {
            let total: f64 = dense.iter().sum::<f64>() / 2.0;
            Error::Numerical(format!(
                "symmetric eigensolver did not converge (n = {n}, total weight = {total:e})"
            ))
        })?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let mut eigenvalues = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n * n);
        for &c in &order {
            eigenvalues.push(eig.eigenvalues[c]);
            let col = eig.eigenvectors.column(c);
            // Fix the sign: the largest-magnitude entry is positive.
            let mut pivot = 0;
            for i in 1..n {
                if col[i].abs() > col[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            vectors.extend(col.iter().map(|v| v * sign));
        }
        let mut emb = Self { n, eigenvalues, vectors };
        emb.canonical_null_space(dense);
        Ok(emb)
    }

    /// Replaces the solver's arbitrary null-space basis with normalized
    /// component indicators (largest component first), when the zero
    /// eigenvalue multiplicity equals the number of connected components.
    fn canonical_null_space(&mut self, dense: &[f64]) {
        let n = self.n;
        let top = self.eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        let zeros = self.eigenvalues.iter().take_while(|&&l| l <= ZERO_EIGENVALUE_TOL * top).count();
        let components = components(dense, n);
        if zeros != components.len() {
            return;
        }
        for (c, comp) in components.iter().enumerate() {
            let v = 1.0 / (comp.len() as f64).sqrt();
            let col = &mut self.vectors[c * n..(c + 1) * n];
            col.fill(0.0);
            for &i in comp {
                col[i] = v;
            }
            self.eigenvalues[c] = 0.0;
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Row-major `n x k` matrix of the first `k` eigenvectors.
    pub fn rows(&self, k: usize) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * k];
        for c in 0..k {
            for i in 0..n {
                out[i * k + c] = self.vectors[c * n + i];
            }
        }
        out
    }
}

/// Connected components over positive-weight edges, largest first, ties by
/// smallest node.
fn components(dense: &[f64], n: usize) -> Vec<Vec<usize>> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(v) = stack.pop() {
            comp.push(v);
            for u in 0..n {
                if !seen[u] && u != v && dense[v * n + u] > 0.0 {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    out
}

/// Squared distance with four independent accumulators so the loop
/// vectorizes.
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn seed_centres(points: &[f64], n: usize, dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut centres = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centres.extend_from_slice(&points[first * dim..(first + 1) * dim]);
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(&points[i * dim..(i + 1) * dim], &centres[..dim])).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = &points[pick * dim..(pick + 1) * dim];
        centres.extend_from_slice(c);
        for i in 0..n {
            d2[i] = d2[i].min(sq_dist(&points[i * dim..(i + 1) * dim], c));
        }
    }
    centres
}

/// Nearest and second-nearest centre of `p`: `(index, d1, d2)` with
/// Euclidean distances. Ties go to the lower index.
fn nearest_two(p: &[f64], centres: &[f64], dim: usize, k: usize) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
    for c in 0..k {
        let d = sq_dist(p, &centres[c * dim..(c + 1) * dim]);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = c;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1.sqrt(), d2.sqrt())
}

/// One k-means++ initialised Lloyd run, accelerated with Hamerly's distance
/// bounds (same fixed point as plain Lloyd). Returns labels and inertia.
fn lloyd(points: &[f64], n: usize, dim: usize, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let mut centres = seed_centres(points, n, dim, k, rng);
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut labels = vec![0usize; n];
    // upper[i] bounds the distance to the own centre, lower[i] to any other.
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    for i in 0..n {
        let (c, d1, d2) = nearest_two(point(i), &centres, dim, k);
        labels[i] = c;
        upper[i] = d1;
        lower[i] = d2;
    }
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    let mut moves = vec![0.0; k];
    let mut half_gap = vec![0.0; k];
    for _ in 1..KMEANS_MAX_ITER {
        sums.iter_mut().for_each(|v| *v = 0.0);
        counts.iter_mut().for_each(|v| *v = 0);
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i] * dim..(labels[i] + 1) * dim].iter_mut().zip(point(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                moves[c] = 0.0;
                continue;
            }
            let mut m = 0.0;
            for d in 0..dim {
                let v = sums[c * dim + d] / counts[c] as f64;
                m += (v - centres[c * dim + d]) * (v - centres[c * dim + d]);
                centres[c * dim + d] = v;
            }
            moves[c] = m.sqrt();
        }
        let (mut top, mut top_c, mut second) = (0.0, 0, 0.0);
        for (c, &m) in moves.iter().enumerate() {
            if m > top {
                second = top;
                top = m;
                top_c = c;
            } else if m > second {
                second = m;
            }
        }
        for c in 0..k {
            let mut g = f64::INFINITY;
            for o in 0..k {
                if o != c {
                    g = g.min(sq_dist(&centres[c * dim..(c + 1) * dim], &centres[o * dim..(o + 1) * dim]));
                }
            }
            half_gap[c] = 0.5 * g.sqrt();
        }
        let mut changed = false;
        for i in 0..n {
            let a = labels[i];
            upper[i] += moves[a];
            lower[i] -= if a == top_c { second } else { top };
            let bound = half_gap[a].max(lower[i]);
            if upper[i] <= bound {
                continue;
            }
            upper[i] = sq_dist(point(i), &centres[a * dim..(a + 1) * dim]).sqrt();
            if upper[i] <= bound {
                continue;
            }
            let (c, d1, d2) = nearest_two(point(i), &centres, dim, k);
            // Keep the current centre on an exact tie.
            let c = if d1 >= upper[i] { a } else { c };
            if c != a {
                labels[i] = c;
                changed = true;
            }
            upper[i] = d1;
            lower[i] = d2;
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(point(i), &centres[labels[i] * dim..(labels[i] + 1) * dim]))
        .sum();
    (labels, inertia)
}

/// Labels and inertia of each of `restarts` seeded k-means runs.
pub fn kmeans_runs(
    points: &[f64],
    n: usize,
    dim: usize,
    k: usize,
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(Vec<usize>, f64)> {
    if k <= 1 {
        return vec![(vec![0; n], 0.0)];
    }
    (0..restarts.max(1)).map(|_| lloyd(points, n, dim, k, rng)).collect()
}

/// Best-inertia labels over `restarts` seeded k-means runs.
pub fn kmeans(points: &[f64], n: usize, dim: usize, k: usize, restarts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut best: Option<(Vec<usize>, f64)> = None;
    for (labels, inertia) in kmeans_runs(points, n, dim, k, restarts, rng) {
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    best.unwrap().0
}
