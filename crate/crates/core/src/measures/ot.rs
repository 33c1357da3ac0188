//! Exact discrete optimal transport.
//!
//! The production path is a transportation simplex over integer supplies and
//! demands with float costs: integer flows make pivots exact, so the solver
//! terminates on a true vertex and the objective is a plain dot product. A
//! dense two-phase LP solves the same problem independently for small
//! supports and is used as a cross-check oracle.

use crate::error::{MaserError, Result};

/// Largest-remainder rounding of a weight vector to integers summing to
/// exactly `scale` (assumes `weights` sums to ~1; ties resolve to the
/// smaller index).
pub fn integer_weights(weights: &[f64], scale: u64) -> Vec<u64> {
    let total: f64 = weights.iter().sum();
    let mut out: Vec<u64> = Vec::with_capacity(weights.len());
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    let mut used: u64 = 0;
    for (i, &w) in weights.iter().enumerate() {
        let target = w / total * scale as f64;
        let floor = target.floor().min(scale as f64) as u64;
        out.push(floor);
        used += floor;
        fracs.push((i, target - floor as f64));
    }
    let mut short = (scale - used) as usize;
    fracs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in fracs {
        if short == 0 {
            break;
        }
        out[i] += 1;
        short -= 1;
    }
    out
}

#[derive(Clone, Copy, Debug)]
struct BasisCell {
    row: usize,
    col: usize,
    flow: u64,
}

/// Minimal-cost transport of `supply` onto `demand` (equal sums required)
/// under `cost(i, j)`; returns `sum flow_ij * cost_ij`.
///
/// Northwest-corner start, most-negative entering rule with a Bland fallback
/// after a long degenerate streak, leaving tie broken by position.
pub fn transportation_simplex(
    supply: &[u64],
    demand: &[u64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Result<f64> {
    let m = supply.len();
    let n = demand.len();
    let total_s: u64 = supply.iter().sum();
    let total_d: u64 = demand.iter().sum();
    if total_s != total_d {
        return Err(MaserError::WeightMismatch(total_s as f64, total_d as f64));
    }
    if m == 0 || n == 0 {
        return Err(MaserError::InvalidParams("empty transport problem".into()));
    }

    let costs: Vec<f64> = (0..m * n).map(|k| cost(k / n, k % n)).collect();
    let c = |i: usize, j: usize| costs[i * n + j];
    let cost_scale = costs.iter().fold(0.0_f64, |a, &b| a.max(b.abs())).max(1.0);
    let tol = 1e-13 * cost_scale;

    // northwest-corner initial basis: exactly m + n - 1 cells, zeros kept
    let mut basis: Vec<BasisCell> = Vec::with_capacity(m + n - 1);
    {
        let mut s: Vec<u64> = supply.to_vec();
        let mut d: Vec<u64> = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let f = s[i].min(d[j]);
            basis.push(BasisCell {
                row: i,
                col: j,
                flow: f,
            });
            s[i] -= f;
            d[j] -= f;
            if i + 1 == m && j + 1 == n {
                break;
            }
            // on ties advance the row only, keeping a degenerate cell so the
            // basis stays a spanning tree
            if s[i] == 0 && i + 1 < m {
                i += 1;
            } else {
                j += 1;
            }
        }
    }

    let mut in_basis = vec![false; m * n];
    for b in &basis {
        in_basis[b.row * n + b.col] = true;
    }

    let max_iter = 40 * (m + n) * (m + n) + 10_000;
    let mut degenerate_streak = 0usize;
    let mut optimal = false;
    for _ in 0..max_iter {
        // node potentials from the basis tree
        let (u, v) = potentials(&basis, m, n, &c);

        // entering cell: most negative reduced cost, or first negative
        // (Bland) when degeneracy persists
        let bland = degenerate_streak > 2 * (m + n);
        let mut enter: Option<(usize, usize, f64)> = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if in_basis[i * n + j] {
                    continue;
                }
                let r = c(i, j) - u[i] - v[j];
                if r < -tol {
                    match enter {
                        Some((_, _, best)) if r >= best && !bland => {}
                        _ => enter = Some((i, j, r)),
                    }
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let Some((ei, ej, _)) = enter else {
            optimal = true;
            break;
        };

        // unique cycle: tree path from source ei to sink ej, plus the
        // entering cell; even path positions give up flow
        let path = tree_path(&basis, m, n, ei, m + ej).expect("basis is a spanning tree");
        let mut theta = u64::MAX;
        let mut leave: Option<usize> = None;
        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 == 1 {
                continue; // gains flow
            }
            if basis[e].flow < theta || (basis[e].flow == theta && Some(e) < leave) {
                theta = basis[e].flow;
                leave = Some(e);
            }
        }
        let leave = leave.expect("cycle has at least one donor edge");
        degenerate_streak = if theta == 0 { degenerate_streak + 1 } else { 0 };

        for (pos, &e) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis[e].flow -= theta;
            } else {
                basis[e].flow += theta;
            }
        }
        in_basis[basis[leave].row * n + basis[leave].col] = false;
        in_basis[ei * n + ej] = true;
        basis[leave] = BasisCell {
            row: ei,
            col: ej,
            flow: theta,
        };
    }

    if !optimal {
        return Err(MaserError::InvalidParams(
            "transportation simplex exceeded its iteration cap".into(),
        ));
    }
    Ok(basis
        .iter()
        .map(|b| b.flow as f64 * c(b.row, b.col))
        .sum())
}

/// Basis adjacency over nodes `0..m` (sources) and `m..m+n` (sinks).
fn adjacency(basis: &[BasisCell], m: usize, n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + n];
    for (k, b) in basis.iter().enumerate() {
        adj[b.row].push((m + b.col, k));
        adj[m + b.col].push((b.row, k));
    }
    adj
}

/// Solve `u_i + v_j = c_ij` over the basis tree, rooted at source 0.
fn potentials(
    basis: &[BasisCell],
    m: usize,
    n: usize,
    c: &impl Fn(usize, usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let adj = adjacency(basis, m, n);
    let mut u = vec![0.0_f64; m];
    let mut v = vec![0.0_f64; n];
    let mut stack = vec![0usize];
    let mut seen = vec![false; m + n];
    seen[0] = true;
    while let Some(node) = stack.pop() {
        for &(next, k) in &adj[node] {
            if seen[next] {
                continue;
            }
            seen[next] = true;
            let b = &basis[k];
            if next >= m {
                v[next - m] = c(b.row, b.col) - u[b.row];
            } else {
                u[next] = c(b.row, b.col) - v[b.col];
            }
            stack.push(next);
        }
    }
    (u, v)
}

/// Edge indices along the unique tree path between two nodes.
fn tree_path(basis: &[BasisCell], m: usize, n: usize, from: usize, to: usize) -> Option<Vec<usize>> {
    let adj = adjacency(basis, m, n);
    // parent pointers from a BFS rooted at `from`
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + n];
    let mut seen = vec![false; m + n];
    seen[from] = true;
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(node) = queue.pop_front() {
        if node == to {
            break;
        }
        for &(next, k) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, k));
                queue.push_back(next);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let (prev, k) = parent[node]?;
        path.push(k);
        node = prev;
    }
    path.reverse();
    Some(path)
}

/// Dense two-phase primal simplex on the transportation polytope, for
/// supports up to 30 per side; reference implementation for cross-checks.
pub fn dense_lp_reference(
    supply: &[f64],
    demand: &[f64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Result<f64> {
    let m = supply.len();
    let n = demand.len();
    if m > 30 || n > 30 {
        return Err(MaserError::InvalidParams(
            "dense LP reference is limited to 30 support points per side".into(),
        ));
    }
    let s1: f64 = supply.iter().sum();
    let s2: f64 = demand.iter().sum();
    if (s1 - s2).abs() > 1e-9 {
        return Err(MaserError::WeightMismatch(s1, s2));
    }

    // variables x_ij; rows: m supply constraints + (n-1) demand constraints
    // (the last demand row is redundant)
    let nv = m * n;
    let rows = m + n - 1;
    let mut a = vec![vec![0.0_f64; nv]; rows];
    let mut rhs = vec![0.0_f64; rows];
    for i in 0..m {
        for j in 0..n {
            a[i][i * n + j] = 1.0;
        }
        rhs[i] = supply[i] / s1;
    }
    for j in 0..n - 1 {
        for i in 0..m {
            a[m + j][i * n + j] = 1.0;
        }
        rhs[m + j] = demand[j] / s2;
    }
    let obj: Vec<f64> = (0..nv).map(|k| cost(k / n, k % n)).collect();
    let x = two_phase_simplex(&a, &rhs, &obj)?;
    Ok(x.iter().zip(&obj).map(|(xi, ci)| xi * ci).sum())
}

/// Textbook two-phase tableau simplex with Bland's rule (min c'x, Ax = b,
/// x >= 0, b >= 0). Returns the primal solution.
fn two_phase_simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    let rows = a.len();
    let nv = c.len();
    let total = nv + rows; // artificials appended
    let mut t = vec![vec![0.0_f64; total + 1]; rows];
    for i in 0..rows {
        for j in 0..nv {
            t[i][j] = a[i][j];
        }
        t[i][nv + i] = 1.0;
        t[i][total] = b[i];
    }
    let mut basis: Vec<usize> = (nv..total).collect();

    // phase 1: minimize the sum of artificials
    let mut z = vec![0.0_f64; total + 1];
    for i in 0..rows {
        for j in 0..=total {
            z[j] += t[i][j];
        }
    }
    for j in nv..total {
        z[j] -= 1.0;
    }
    simplex_loop(&mut t, &mut z, &mut basis, total, Some(nv))?;
    let infeas: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &bj)| bj >= nv)
        .map(|(i, _)| t[i][total])
        .sum();
    if infeas.abs() > 1e-9 {
        return Err(MaserError::InvalidParams("transport LP infeasible".into()));
    }

    // phase 2: original objective (artificials pinned out)
    let mut z2 = vec![0.0_f64; total + 1];
    for j in 0..nv {
        z2[j] = -c[j];
    }
    for i in 0..rows {
        let bj = basis[i];
        if bj < nv && z2[bj].abs() > 0.0 {
            let factor = z2[bj];
            for j in 0..=total {
                z2[j] -= factor * t[i][j];
            }
        }
    }
    simplex_loop(&mut t, &mut z2, &mut basis, total, Some(nv))?;

    let mut x = vec![0.0_f64; nv];
    for (i, &bj) in basis.iter().enumerate() {
        if bj < nv {
            x[bj] = t[i][total];
        }
    }
    Ok(x)
}

fn simplex_loop(
    t: &mut [Vec<f64>],
    z: &mut [f64],
    basis: &mut [usize],
    total: usize,
    forbid_from: Option<usize>,
) -> Result<()> {
    let rows = t.len();
    let eps = 1e-11;
    for _ in 0..200_000 {
        // Bland: smallest improving column
        let mut pivot_col = None;
        for (j, &zj) in z.iter().enumerate().take(total) {
            if let Some(cut) = forbid_from {
                if j >= cut && !basis.contains(&j) {
                    continue; // artificials never re-enter
                }
            }
            if zj > eps {
                pivot_col = Some(j);
                break;
            }
        }
        let Some(col) = pivot_col else {
            return Ok(());
        };
        // ratio test, Bland tie-break on basis index
        let mut pivot_row: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            if t[i][col] > eps {
                let ratio = t[i][total] / t[i][col];
                if ratio < best - 1e-15
                    || (ratio < best + 1e-15
                        && pivot_row.is_some_and(|p| basis[i] < basis[p]))
                {
                    best = ratio;
                    pivot_row = Some(i);
                }
            }
        }
        let Some(row) = pivot_row else {
            return Err(MaserError::InvalidParams("unbounded transport LP".into()));
        };
        let pv = t[row][col];
        for j in 0..=total {
            t[row][j] /= pv;
        }
        for i in 0..rows {
            if i != row && t[i][col].abs() > 0.0 {
                let f = t[i][col];
                for j in 0..=total {
                    t[i][j] -= f * t[row][j];
                }
            }
        }
        let f = z[col];
        if f.abs() > 0.0 {
            for j in 0..=total {
                z[j] -= f * t[row][j];
            }
        }
        basis[row] = col;
    }
    Err(MaserError::InvalidParams(
        "simplex iteration limit exceeded".into(),
    ))
}
