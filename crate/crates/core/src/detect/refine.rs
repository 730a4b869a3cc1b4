//! Local node moves that climb the penalized subgraph criterion.
//!
//! The spectral relaxation keeps strongly weighted cliques together but
//! tends to absorb background nodes into them. Starting from its labels,
//! each node is moved to the cluster that most increases
//! `sum_k S_k * |E_k|^(-lambda0)` until no move helps.

const MAX_PASSES: usize = 100;

#[inline]
pub(crate) fn cluster_term(sum_w: f64, nodes: usize, lambda0: f64) -> f64 {
    let edges = nodes * nodes.saturating_sub(1) / 2;
    if edges == 0 || sum_w <= 0.0 {
        0.0
    } else {
        sum_w * (edges as f64).powf(-lambda0)
    }
}

/// Refines `labels` (values in `0..k`) in place. Clusters may empty out.
pub(crate) fn refine(dense: &[f64], n: usize, labels: &mut [usize], k: usize, lambda0: f64) {
    if k < 2 {
        return;
    }
    let mut size = vec![0usize; k];
    let mut within = vec![0.0; k];
    // conn[v * k + c]: total weight from node v to members of cluster c.
    let mut conn = vec![0.0; n * k];
    for v in 0..n {
        size[labels[v]] += 1;
        for u in 0..n {
            conn[v * k + labels[u]] += dense[v * n + u];
        }
    }
    for v in 0..n {
        within[labels[v]] += conn[v * k + labels[v]];
    }
    for w in within.iter_mut() {
        *w /= 2.0;
    }
    let total: f64 = within.iter().sum::<f64>()
        + (0..n).map(|v| conn[v * k..(v + 1) * k].iter().sum::<f64>()).sum::<f64>() / 2.0;
    let tol = 1e-12 * total.max(f64::MIN_POSITIVE);
    // penalty[m] = |E|^(-lambda0) for an m-node cluster.
    let penalty: Vec<f64> = (0..=n)
        .map(|m| {
            let e = m * m.saturating_sub(1) / 2;
            if e == 0 { 0.0 } else { (e as f64).powf(-lambda0) }
        })
        .collect();
    let term = |s: f64, m: usize| if s > 0.0 { s * penalty[m] } else { 0.0 };

    // base[c] is cluster c's current term, join[c] the penalty it would
    // carry with one more node. Weights are non-negative, so a joined
    // cluster's term is simply its sum times that penalty.
    let mut base: Vec<f64> = (0..k).map(|c| term(within[c], size[c])).collect();
    let mut join: Vec<f64> = (0..k).map(|c| penalty[(size[c] + 1).min(n)]).collect();
    for _ in 0..MAX_PASSES {
        let mut moved = false;
        for v in 0..n {
            let a = labels[v];
            let row = &conn[v * k..(v + 1) * k];
            let leave = term(within[a] - row[a], size[a] - 1) - base[a];
            let mut best_gain = tol - leave;
            let mut target = a;
            for c in 0..k {
                let gain = (within[c] + row[c]) * join[c] - base[c];
                if gain > best_gain && c != a {
                    best_gain = gain;
                    target = c;
                }
            }
            if target == a {
                continue;
            }
            within[a] -= row[a];
            within[target] += row[target];
            size[a] -= 1;
            size[target] += 1;
            for c in [a, target] {
                base[c] = term(within[c], size[c]);
                join[c] = penalty[(size[c] + 1).min(n)];
            }
            labels[v] = target;
            for u in 0..n {
                let w = dense[u * n + v];
                conn[u * k + a] -= w;
                conn[u * k + target] += w;
            }
            moved = true;
        }
        if !moved {
            break;
        }
    }
}

/// Alternates single-node refinement with the best of two larger moves,
/// until nothing helps: two nodes jumping together into a third cluster, or
/// two whole clusters merging.
pub(crate) fn refine_pairs(dense: &[f64], n: usize, labels: &mut [usize], k: usize, lambda0: f64) {
    if k < 2 {
        return;
    }
    let penalty: Vec<f64> = (0..=n)
        .map(|m| {
            let e = m * m.saturating_sub(1) / 2;
            if e == 0 { 0.0 } else { (e as f64).powf(-lambda0) }
        })
        .collect();
    let term = |s: f64, m: usize| if s > 0.0 { s * penalty[m] } else { 0.0 };
    for _ in 0..MAX_PASSES {
        refine(dense, n, labels, k, lambda0);
        let mut size = vec![0usize; k];
        let mut within = vec![0.0; k];
        let mut conn = vec![0.0; n * k];
        for v in 0..n {
            size[labels[v]] += 1;
            for u in 0..n {
                conn[v * k + labels[u]] += dense[v * n + u];
            }
        }
        for v in 0..n {
            within[labels[v]] += conn[v * k + labels[v]] / 2.0;
        }
        let total: f64 = dense.iter().sum::<f64>() / 2.0;
        let tol = 1e-12 * total.max(f64::MIN_POSITIVE);
        // Weights are non-negative, so a joined cluster's term is its sum
        // times the penalty of its new size.
        let base: Vec<f64> = (0..k).map(|c| term(within[c], size[c])).collect();
        let grown: Vec<f64> = (0..k).map(|c| penalty[(size[c] + 2).min(n)]).collect();
        let mut pair_row = vec![0.0; k];
        let mut best = (tol, None);
        for u in 0..n {
            let a = labels[u];
            let row_u = &conn[u * k..(u + 1) * k];
            for v in u + 1..n {
                let b = labels[v];
                let row_v = &conn[v * k..(v + 1) * k];
                let wuv = dense[u * n + v];
                let leave = if a == b {
                    term(within[a] - row_u[a] - row_v[a] + wuv, size[a] - 2) - base[a]
                } else {
                    // The u-v weight was cross-cluster.
                    term(within[a] - row_u[a], size[a] - 1) - base[a] + term(within[b] - row_v[b], size[b] - 1)
                        - base[b]
                };
                for c in 0..k {
                    pair_row[c] = (within[c] + row_u[c] + row_v[c] + wuv) * grown[c] - base[c];
                }
                pair_row[a] = f64::NEG_INFINITY;
                pair_row[b] = f64::NEG_INFINITY;
                let (c, join) = pair_row
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (c, &g)| if g > acc.1 { (c, g) } else { acc });
                if leave + join > best.0 {
                    best = (leave + join, Some((u, v, c)));
                }
            }
        }
        // Merging two clusters outright, which no sequence of improving
        // node moves may reach.
        let mut merge = (best.0, None);
        let mut cross = vec![0.0; k * k];
        for v in 0..n {
            for c in 0..k {
                cross[labels[v] * k + c] += conn[v * k + c];
            }
        }
        for a in 0..k {
            for b in a + 1..k {
                if size[a] == 0 || size[b] == 0 {
                    continue;
                }
                let gain = term(within[a] + within[b] + cross[a * k + b], size[a] + size[b])
                    - term(within[a], size[a])
                    - term(within[b], size[b]);
                if gain > merge.0 {
                    merge = (gain, Some((a, b)));
                }
            }
        }
        if let Some((a, b)) = merge.1 {
            for l in labels.iter_mut() {
                if *l == b {
                    *l = a;
                }
            }
            continue;
        }
        match best.1 {
            Some((u, v, c)) => {
                labels[u] = c;
                labels[v] = c;
            }
            None => break,
        }
    }
}
