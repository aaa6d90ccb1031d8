use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Optimal injective row → column assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Column of each row, `None` for rows left out when there are more rows
    /// than columns.
    pub row_to_col: Vec<Option<usize>>,
    pub cost: f64,
}

/// Minimum-cost assignment of `min(rows, cols)` pairs.
///
/// Rectangular inputs are padded to a square with the largest entry; padding
/// costs the same in every complete matching, so it cannot change which real
/// pairs are optimal. Among all optimal assignments the lexicographically
/// smallest row → column mapping is returned, with "unassigned" ordered after
/// every real column.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Matching> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if cost.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput("cost matrix rows differ in length".into()));
    }
    if cost.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("cost matrix has a non-finite entry".into()));
    }
    if rows == 0 || cols == 0 {
        return Ok(Matching {
            row_to_col: vec![None; rows],
            cost: 0.0,
        });
    }

    let n = rows.max(cols);
    let pad = cost.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    let a = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { pad };

    let (u, v, mut mate_row) = solve_square(n, &a);
    let scale = cost.iter().flatten().fold(1.0f64, |m, x| m.max(x.abs()));
    let eps = 1e-9 * scale;
    let tight = |i: usize, j: usize| a(i, j) - u[i] - v[j] <= eps;
    lexicographic_min(n, &tight, &mut mate_row);

    let row_to_col: Vec<Option<usize>> = mate_row[..rows]
        .iter()
        .map(|&j| (j < cols).then_some(j))
        .collect();
    let total = row_to_col
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| cost[i][j]))
        .sum();
    Ok(Matching {
        row_to_col,
        cost: total,
    })
}

/// Shortest augmenting path algorithm with potentials, O(n³). Returns the
/// row and column duals and the column matched to each row.
fn solve_square(n: usize, a: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mate_row = vec![0usize; n];
    for j in 1..=n {
        mate_row[p[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), mate_row)
}

/// Rewrites a perfect matching of the tight subgraph into the
/// lexicographically smallest one. Row by row, the row takes the smallest
/// tight column reachable through an alternating cycle over rows not yet
/// fixed.
fn lexicographic_min(n: usize, tight: &dyn Fn(usize, usize) -> bool, mate_row: &mut [usize]) {
    let mut mate_col = vec![0usize; n];
    for (i, &j) in mate_row.iter().enumerate() {
        mate_col[j] = i;
    }
    for i in 0..n {
        let c0 = mate_row[i];
        // rows that can move into c0, directly or by displacing another row
        let mut next: Vec<Option<usize>> = vec![None; n];
        let mut queue = VecDeque::from([c0]);
        while let Some(c) = queue.pop_front() {
            for r in i + 1..n {
                if next[r].is_none() && tight(r, c) {
                    next[r] = Some(c);
                    queue.push_back(mate_row[r]);
                }
            }
        }
        let Some(j) = (0..c0).find(|&j| {
            let r = mate_col[j];
            r > i && next[r].is_some() && tight(i, j)
        }) else {
            continue;
        };
        let mut r = mate_col[j];
        mate_row[i] = j;
        mate_col[j] = i;
        loop {
            let c = next[r].expect("reached row");
            let displaced = mate_col[c];
            mate_row[r] = c;
            mate_col[c] = r;
            if c == c0 {
                break;
            }
            r = displaced;
        }
    }
}
