//! Minimum-cost assignment (linear assignment problem).
//!
//! Shortest-augmenting-path solver with dual variables, plus a
//! deterministic lexicographic refinement: among all assignments whose
//! total cost ties the optimum (within a relative tolerance), the one
//! returned is the lexicographically smallest as a sequence
//! sigma(0), sigma(1), ... . That makes downstream label matching fully
//! reproducible even when costs tie exactly.

use crate::error::{Error, Result};
use ndarray::ArrayView2;

/// A square assignment: column k is matched to row `perm[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// perm[k] = row assigned to column k.
    pub perm: Vec<usize>,
    /// Total cost sum_k C[perm[k], k].
    pub cost: f64,
}

const INF: f64 = f64::INFINITY;

/// Row-to-column LAP on a square matrix stored as rows[r][c]: returns
/// (assignment row->col, total cost). Shortest augmenting path with duals;
/// costs are shifted to be nonnegative first (a uniform shift changes every
/// permutation's total identically, so the argmin is unchanged).
fn lap_rows(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut shift = INF;
    for row in cost {
        for &c in row {
            if !c.is_finite() {
                return Err(Error::Domain("assignment cost must be finite".into()));
            }
            shift = shift.min(c);
        }
    }
    let work: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| row.iter().map(|c| c - shift).collect())
        .collect();

    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col4row = vec![usize::MAX; n];
    let mut row4col = vec![usize::MAX; n];
    let mut shortest = vec![0.0f64; n];
    let mut path = vec![usize::MAX; n];
    let mut sr = vec![false; n];
    let mut sc = vec![false; n];

    for cur_row in 0..n {
        for j in 0..n {
            shortest[j] = INF;
            path[j] = usize::MAX;
            sc[j] = false;
            sr[j] = false;
        }
        // visit order matches the classic implementation (descending) so the
        // solver is bit-for-bit deterministic
        let mut remaining: Vec<usize> = (0..n).rev().collect();
        let mut min_val = 0.0f64;
        let mut i = cur_row;
        let mut sink = usize::MAX;
        while sink == usize::MAX {
            sr[i] = true;
            let mut index = usize::MAX;
            let mut lowest = INF;
            for (it, &j) in remaining.iter().enumerate() {
                let r = min_val + work[i][j] - u[i] - v[j];
                if r < shortest[j] {
                    path[j] = i;
                    shortest[j] = r;
                }
                if shortest[j] < lowest
                    || (shortest[j] == lowest && row4col[j] == usize::MAX)
                {
                    lowest = shortest[j];
                    index = it;
                }
            }
            min_val = lowest;
            if !min_val.is_finite() {
                return Err(Error::Numerical("assignment search exhausted".into()));
            }
            let j = remaining[index];
            if row4col[j] == usize::MAX {
                sink = j;
            } else {
                i = row4col[j];
            }
            sc[j] = true;
            remaining.swap_remove(index);
        }

        u[cur_row] += min_val;
        for i2 in 0..n {
            if sr[i2] && i2 != cur_row {
                u[i2] += min_val - shortest[col4row[i2]];
            }
        }
        for j in 0..n {
            if sc[j] {
                v[j] -= min_val - shortest[j];
            }
        }
        let mut j = sink;
        loop {
            let i2 = path[j];
            row4col[j] = i2;
            std::mem::swap(&mut col4row[i2], &mut j);
            if i2 == cur_row {
                break;
            }
        }
    }

    let total: f64 = (0..n).map(|r| cost[r][col4row[r]]).sum();
    Ok((col4row, total))
}

/// Optimal completion cost over the still-open columns, or None when no
/// columns remain. `used` marks rows already fixed to earlier columns.
fn completion_cost(cost: &ArrayView2<f64>, used: &[bool], first_open_col: usize) -> Result<f64> {
    let k = cost.nrows();
    let open_rows: Vec<usize> = (0..k).filter(|&r| !used[r]).collect();
    let m = k - first_open_col;
    if m == 0 {
        return Ok(0.0);
    }
    debug_assert_eq!(open_rows.len(), m);
    // sub-LAP rows = open columns, cols = open rows
    let sub: Vec<Vec<f64>> = (first_open_col..k)
        .map(|col| open_rows.iter().map(|&r| cost[[r, col]]).collect())
        .collect();
    Ok(lap_rows(&sub)?.1)
}

/// Finds a permutation sigma minimizing sum_k C[sigma(k), k] over a square
/// finite cost matrix. Ties within 1e-9 * (1 + |optimum|) are broken toward
/// the lexicographically smallest sigma.
pub fn solve_assignment(cost: &ArrayView2<f64>) -> Result<Assignment> {
    let (rows, cols) = cost.dim();
    if rows != cols {
        return Err(Error::Dimension(format!(
            "assignment cost matrix must be square, got {rows} x {cols}"
        )));
    }
    if rows == 0 {
        return Err(Error::Dimension("assignment on an empty matrix".into()));
    }
    for &c in cost.iter() {
        if !c.is_finite() {
            return Err(Error::Domain(
                "assignment cost matrix contains a non-finite entry".into(),
            ));
        }
    }
    let k = rows;

    // baseline optimum: solve over the transpose so the result maps columns
    // of C to rows of C
    let transposed: Vec<Vec<f64>> = (0..k)
        .map(|col| (0..k).map(|r| cost[[r, col]]).collect())
        .collect();
    let (_, c_star) = lap_rows(&transposed)?;
    let eps = 1e-9 * (1.0 + c_star.abs());

    // greedy lexicographic reconstruction: fix sigma(0), sigma(1), ... to the
    // smallest row that still admits an optimal completion
    let mut used = vec![false; k];
    let mut perm = Vec::with_capacity(k);
    let mut prefix = 0.0f64;
    for col in 0..k {
        let mut chosen = None;
        for a in 0..k {
            if used[a] {
                continue;
            }
            used[a] = true;
            let comp = completion_cost(cost, &used, col + 1)?;
            used[a] = false;
            if prefix + cost[[a, col]] + comp <= c_star + eps {
                chosen = Some(a);
                break;
            }
        }
        let a = chosen.ok_or_else(|| {
            Error::Numerical("lexicographic refinement lost the optimum".into())
        })?;
        used[a] = true;
        prefix += cost[[a, col]];
        perm.push(a);
    }

    let total: f64 = perm.iter().enumerate().map(|(c, &r)| cost[[r, c]]).sum();
    Ok(Assignment { perm, cost: total })
}
