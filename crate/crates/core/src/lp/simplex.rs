use crate::error::{Error, Result};

/// Pivot tolerance for entering/leaving decisions.
pub const PIVOT_TOL: f64 = 1e-9;

const MAX_PIVOTS: usize = 100_000;

/// `maximize c·x  s.t.  A x = b, 0 <= x (<= u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    /// Optional finite upper bounds per variable; `f64::INFINITY` leaves a
    /// variable unbounded above.
    pub upper_bounds: Option<Vec<f64>>,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>, a_eq: Vec<Vec<f64>>, b_eq: Vec<f64>) -> Self {
        Self {
            objective,
            a_eq,
            b_eq,
            upper_bounds: None,
        }
    }

    pub fn with_upper_bounds(mut self, upper: Vec<f64>) -> Self {
        self.upper_bounds = Some(upper);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal solution (empty unless optimal).
    pub x: Vec<f64>,
    pub value: f64,
    /// Dual values for the equality rows (bound rows appended after the
    /// user rows). Rows found redundant get a zero dual.
    pub duals: Vec<f64>,
}

impl LpSolution {
    fn status_only(status: LpStatus) -> Self {
        Self {
            status,
            x: Vec::new(),
            value: match status {
                LpStatus::Unbounded => f64::INFINITY,
                _ => f64::NEG_INFINITY,
            },
            duals: Vec::new(),
        }
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    /// Original row index for each live tableau row.
    origin: Vec<usize>,
    basis: Vec<usize>,
    rhs: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize, reduced: &mut [f64]) {
        let piv = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[col];
            if factor != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                row[col] = 0.0;
            }
        }
        let factor = reduced[col];
        if factor != 0.0 {
            for (v, p) in reduced.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            reduced[col] = 0.0;
        }
        self.basis[r] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut rc: Vec<f64> = cost.to_vec();
        rc.push(0.0);
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost[b];
            if cb != 0.0 {
                for (v, a) in rc.iter_mut().zip(row) {
                    *v -= cb * a;
                }
            }
        }
        rc
    }

    /// Bland's rule: lowest-index improving column enters, ties in the ratio
    /// test go to the lowest-index basic variable.
    fn run(&mut self, reduced: &mut [f64], allowed: usize) -> Result<bool> {
        for _ in 0..MAX_PIVOTS {
            let Some(enter) = (0..allowed).find(|&j| reduced[j] > PIVOT_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_TOL {
                    let ratio = row[self.rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || ((ratio - lr).abs() <= 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, enter, reduced),
            }
        }
        Err(Error::Numerical(format!(
            "simplex did not terminate within {MAX_PIVOTS} pivots"
        )))
    }
}

/// Solves a dense LP with the two-phase simplex method and Bland's
/// anti-cycling rule. Infeasibility and unboundedness are reported through
/// [`LpStatus`]; only malformed input is an error.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n0 = lp.objective.len();
    if lp.a_eq.len() != lp.b_eq.len() {
        return Err(Error::Dimension(format!(
            "{} constraint rows but {} right-hand sides",
            lp.a_eq.len(),
            lp.b_eq.len()
        )));
    }
    if let Some(row) = lp.a_eq.iter().find(|r| r.len() != n0) {
        return Err(Error::Dimension(format!(
            "constraint row has {} entries, expected {n0}",
            row.len()
        )));
    }
    let finite = lp.objective.iter().all(|v| v.is_finite())
        && lp.b_eq.iter().all(|v| v.is_finite())
        && lp.a_eq.iter().flatten().all(|v| v.is_finite());
    if !finite {
        return Err(Error::InvalidInput("LP data must be finite".into()));
    }

    // Standard form: append one slack per finite upper bound.
    let bounded: Vec<(usize, f64)> = match &lp.upper_bounds {
        Some(u) => {
            if u.len() != n0 {
                return Err(Error::Dimension(format!(
                    "{} upper bounds for {n0} variables",
                    u.len()
                )));
            }
            u.iter()
                .copied()
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .collect()
        }
        None => Vec::new(),
    };
    let n = n0 + bounded.len();
    let mut a: Vec<Vec<f64>> = lp
        .a_eq
        .iter()
        .map(|r| {
            let mut row = r.clone();
            row.resize(n, 0.0);
            row
        })
        .collect();
    let mut b = lp.b_eq.clone();
    for (s, &(i, u)) in bounded.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        row[n0 + s] = 1.0;
        a.push(row);
        b.push(u);
    }
    let mut cost = lp.objective.clone();
    cost.resize(n, 0.0);
    let m = a.len();

    if m == 0 {
        // Only x >= 0: optimal at zero unless some objective entry is positive.
        if cost.iter().any(|&c| c > PIVOT_TOL) {
            return Ok(LpSolution::status_only(LpStatus::Unbounded));
        }
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            x: vec![0.0; n0],
            value: 0.0,
            duals: Vec::new(),
        });
    }

    // Phase 1 tableau [A | I | b] with nonnegative right-hand sides.
    let width = n + m + 1;
    let rhs = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, (ar, &bi)) in a.iter().zip(&b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for (dst, v) in row.iter_mut().zip(ar) {
            *dst = sign * v;
        }
        row[n + i] = 1.0;
        row[rhs] = sign * bi;
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        origin: (0..m).collect(),
        basis: (n..n + m).collect(),
        rhs,
    };

    let mut phase1_cost = vec![0.0; n + m];
    for c in phase1_cost.iter_mut().skip(n) {
        *c = -1.0;
    }
    let mut reduced = tab.reduced_costs(&phase1_cost);
    tab.run(&mut reduced, n + m)?;

    let scale = b.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let infeasibility: f64 = tab
        .rows
        .iter()
        .zip(&tab.basis)
        .filter(|(_, &bv)| bv >= n)
        .map(|(row, _)| row[rhs])
        .sum();
    if infeasibility > PIVOT_TOL * scale {
        return Ok(LpSolution::status_only(LpStatus::Infeasible));
    }

    // Drive remaining (zero-level) artificials out of the basis; rows where
    // that is impossible are linearly dependent and get dropped.
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL) {
                Some(j) => {
                    let mut dummy = vec![0.0; width];
                    tab.pivot(i, j, &mut dummy);
                    i += 1;
                }
                None => {
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                    tab.origin.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut phase2_cost = cost.clone();
    phase2_cost.resize(n + m, 0.0);
    let mut reduced = tab.reduced_costs(&phase2_cost);
    if !tab.run(&mut reduced, n)? {
        return Ok(LpSolution::status_only(LpStatus::Unbounded));
    }

    let mut x_full = vec![0.0; n];
    for (row, &bv) in tab.rows.iter().zip(&tab.basis) {
        let v = row[rhs];
        x_full[bv] = if v.abs() < 1e-13 { 0.0 } else { v };
    }
    let value = cost.iter().zip(&x_full).map(|(c, x)| c * x).sum();
    let duals = recover_duals(&a, &cost, &tab.origin, &tab.basis, m);
    x_full.truncate(n0);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x: x_full,
        value,
        duals,
    })
}

/// Solves `B^T y = c_B` for the final basis using the original rows.
fn recover_duals(
    a: &[Vec<f64>],
    cost: &[f64],
    origin: &[usize],
    basis: &[usize],
    m: usize,
) -> Vec<f64> {
    let k = basis.len();
    // mat[s][r] = A[origin[r]][basis[s]]  (this is B^T)
    let mut mat: Vec<Vec<f64>> = basis
        .iter()
        .map(|&col| {
            let mut row: Vec<f64> = origin.iter().map(|&r| a[r][col]).collect();
            row.push(cost[col]);
            row
        })
        .collect();
    for c in 0..k {
        let piv = (c..k)
            .max_by(|&x, &y| mat[x][c].abs().total_cmp(&mat[y][c].abs()))
            .unwrap_or(c);
        if mat[piv][c].abs() < 1e-14 {
            continue;
        }
        mat.swap(c, piv);
        let pr = mat[c].clone();
        for (r, row) in mat.iter_mut().enumerate() {
            if r != c {
                let f = row[c] / pr[c];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&pr) {
                        *v -= f * p;
                    }
                }
            }
        }
    }
    let mut duals = vec![0.0; m];
    for (c, &r) in origin.iter().enumerate() {
        if mat[c][c].abs() >= 1e-14 {
            duals[r] = mat[c][k] / mat[c][c];
        }
    }
    duals
}
