//! Exact minimum-cost assignment (Hungarian algorithm, O(n^3) shortest
//! augmenting path formulation with potentials).
//!
//! The returned dual potentials certify optimality: feasibility
//! `u[i] + v[j] <= cost[i][j]` plus complementary slackness on matched
//! edges is exactly the LP optimality condition, which the oracle tests
//! verify independently of how the matching was produced.

/// Solution of a square assignment problem.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// `row_to_col[i]` = column matched to row i.
    pub row_to_col: Vec<usize>,
    /// Row potentials (dual variables).
    pub u: Vec<f64>,
    /// Column potentials (dual variables).
    pub v: Vec<f64>,
    /// Total cost of the matching.
    pub cost: f64,
}

/// Solve an n x n assignment problem given a row-major cost matrix.
pub fn solve(cost: &[f64], n: usize) -> Assignment {
    assert_eq!(cost.len(), n * n, "cost matrix must be n*n");
    assert!(n > 0);
    // 1-based helpers; p[j] = row assigned to column j
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
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
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    let total: f64 = row_to_col.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Assignment {
        row_to_col,
        u: u[1..].to_vec(),
        v: v[1..].to_vec(),
        cost: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_hand_case() {
        // min assignment of [[1,2],[2,4]] is 1 + 4? no: rows->cols (0->0,1->1)=5, (0->1,1->0)=4
        let a = solve(&[1.0, 2.0, 2.0, 4.0], 2);
        assert_eq!(a.row_to_col, vec![1, 0]);
        assert_eq!(a.cost, 4.0);
    }

    #[test]
    fn duals_are_feasible_and_tight() {
        let cost = vec![
            4.0, 1.0, 3.0, //
            2.0, 0.0, 5.0, //
            3.0, 2.0, 2.0,
        ];
        let a = solve(&cost, 3);
        for i in 0..3 {
            for j in 0..3 {
                assert!(a.u[i] + a.v[j] <= cost[i * 3 + j] + 1e-9);
            }
        }
        let dual_value: f64 = a.u.iter().sum::<f64>() + a.v.iter().sum::<f64>();
        assert!((dual_value - a.cost).abs() < 1e-9);
    }
}
