//! Cost matrices and optimal one-to-one assignment.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Tracklet-by-detection cost table, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: Vec<u64>,
    pub cols: Vec<usize>,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: Vec<u64>, cols: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows.len() * cols.len() {
            return Err(Error::Shape(format!(
                "{} costs for a {}x{} matrix",
                data.len(),
                rows.len(),
                cols.len()
            )));
        }
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite assignment cost".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Build from a cost function evaluated on every (row, col) pair.
    pub fn from_fn(
        rows: Vec<u64>,
        cols: Vec<usize>,
        mut f: impl FnMut(u64, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in &rows {
            for &c in &cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols.len() + c]
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty() || self.cols.is_empty()
    }
}

/// A matching between tracklet ids and detection indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignmentResult {
    /// (tracklet id, detection index, cost)
    pub matches: Vec<(u64, usize, f64)>,
    pub unassigned_detections: Vec<usize>,
    pub unassigned_tracklets: Vec<u64>,
}

impl AssignmentResult {
    pub fn total_cost(&self) -> f64 {
        self.matches.iter().map(|m| m.2).sum()
    }

    pub fn detection_for(&self, tracklet: u64) -> Option<usize> {
        self.matches.iter().find(|m| m.0 == tracklet).map(|m| m.1)
    }
}

/// Minimum-cost assignment on a dense `n x m` row-major matrix.
///
/// Returns, for each row, the matched column. Exactly `min(n, m)` rows are
/// matched. Uses the shortest augmenting path method with dual potentials,
/// `O(n^2 m)` for `n <= m`.
pub fn solve(costs: &[f64], n: usize, m: usize) -> Vec<Option<usize>> {
    assert_eq!(costs.len(), n * m, "cost buffer does not match shape");
    if n == 0 || m == 0 {
        return vec![None; n];
    }
    if n > m {
        let mut t = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                t[j * n + i] = costs[i * m + j];
            }
        }
        let cols = solve(&t, m, n);
        let mut out = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                out[i] = Some(j);
            }
        }
        return out;
    }

    // 1-based arrays; column 0 is a virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = costs[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Optimal assignment over a cost matrix; surplus rows or columns stay
/// unassigned.
pub fn munkres(cost: &CostMatrix) -> AssignmentResult {
    let (n, m) = (cost.rows.len(), cost.cols.len());
    let rows = solve(&cost.data, n, m);
    let mut res = AssignmentResult::default();
    let mut taken = vec![false; m];
    for (i, c) in rows.iter().enumerate() {
        match c {
            Some(j) => {
                taken[*j] = true;
                res.matches
                    .push((cost.rows[i], cost.cols[*j], cost.get(i, *j)));
            }
            None => res.unassigned_tracklets.push(cost.rows[i]),
        }
    }
    res.unassigned_detections = cost
        .cols
        .iter()
        .zip(&taken)
        .filter(|(_, t)| !**t)
        .map(|(c, _)| *c)
        .collect();
    res
}

fn gated(mut res: AssignmentResult, gate: f64) -> AssignmentResult {
    let mut kept = Vec::with_capacity(res.matches.len());
    for m in res.matches {
        if m.2 > gate {
            res.unassigned_tracklets.push(m.0);
            res.unassigned_detections.push(m.1);
        } else {
            kept.push(m);
        }
    }
    res.matches = kept;
    res.unassigned_detections.sort_unstable();
    res
}

/// Two-stage association: tracklets scored against real observations first,
/// then inpainted tracklets against whatever detections remain. Matches with
/// cost above `gate` are dropped after each stage.
pub fn two_pass_assign(
    full: &CostMatrix,
    inpainted: &CostMatrix,
    gate: f64,
) -> Result<AssignmentResult> {
    let full_ids: BTreeSet<u64> = full.rows.iter().copied().collect();
    if let Some(id) = inpainted.rows.iter().find(|id| full_ids.contains(id)) {
        return Err(Error::Contract(format!(
            "tracklet {id} appears in both assignment passes"
        )));
    }
    let first = gated(munkres(full), gate);

    if inpainted.rows.is_empty() {
        return Ok(first);
    }
    let remaining = first.unassigned_detections.clone();
    let mut data = Vec::with_capacity(inpainted.rows.len() * remaining.len());
    let positions: Vec<usize> = remaining
        .iter()
        .map(|d| {
            inpainted.cols.iter().position(|c| c == d).ok_or_else(|| {
                Error::Contract(format!("detection {d} missing from the second cost matrix"))
            })
        })
        .collect::<Result<_>>()?;
    for i in 0..inpainted.rows.len() {
        data.extend(positions.iter().map(|&p| inpainted.get(i, p)));
    }
    let sub = CostMatrix::new(inpainted.rows.clone(), remaining, data)?;
    let second = gated(munkres(&sub), gate);

    let mut out = first;
    out.matches.extend(second.matches);
    out.unassigned_tracklets.extend(second.unassigned_tracklets);
    out.unassigned_detections = second.unassigned_detections;
    Ok(out)
}
