//! Soft group assignments: constraints enforced against every conditional
//! `w(j | ŷ, y, k)` consistent with the noise model, via linear programs,
//! plus the practical and grid-oracle training algorithms.

use serde::{Deserialize, Serialize};

use crate::constraints::{
    h_values, weighted_h_surrogate, ConstraintSpec, Indicator, ViolationReport,
};
use crate::data::{NoiseModel, TrainView};
use crate::error::{Error, Result};
use crate::lp::{project_simplex, solve_lp, LinearProgram, LpStatus};
use crate::model::{hinge_from_margins, margins, predict, ModelParams};
use crate::trainers::{
    calibrate, constraint_names, project_lambda, run_gda, IterateLog, IterateRecord, Player, PlayerStep,
    TrainOutcome, TrainerConfig,
};

/// Number of `(ŷ, y)` cells.
pub const CELLS: usize = 4;

/// Cell index `2ŷ + y`.
#[inline]
pub fn cell_of(margin: f64, label: u8) -> usize {
    2 * usize::from(predict(margin)) + usize::from(label)
}

/// `w(j | cell, k)` stored block-wise by noisy group `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftAssignment {
    pub m: usize,
    pub m_hat: usize,
    /// Index `(k * CELLS + cell) * m + j`.
    pub values: Vec<f64>,
}

impl SoftAssignment {
    /// `w(j | cell, k) = P(G = j | Ĝ = k)` for every cell.
    pub fn from_noise(noise: &NoiseModel) -> Self {
        let (m, m_hat) = (noise.m(), noise.m_hat());
        let mut values = vec![0.0; m * m_hat * CELLS];
        for k in 0..m_hat {
            for cell in 0..CELLS {
                for j in 0..m {
                    values[(k * CELLS + cell) * m + j] = noise.cond[j][k];
                }
            }
        }
        Self { m, m_hat, values }
    }

    #[inline]
    pub fn index(&self, j: usize, cell: usize, k: usize) -> usize {
        (k * CELLS + cell) * self.m + j
    }

    #[inline]
    pub fn get(&self, j: usize, cell: usize, k: usize) -> f64 {
        self.values[self.index(j, cell, k)]
    }

    /// Projects every `(cell, k)` slice onto the simplex over groups.
    pub fn project_to_simplices(&mut self) {
        for chunk in self.values.chunks_mut(self.m) {
            let p = project_simplex(chunk);
            chunk.copy_from_slice(&p);
        }
    }
}

/// Cell probabilities per noisy group with the noise-model targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WPolytope {
    pub m: usize,
    pub m_hat: usize,
    /// `P(Ŷ = ŷ, Y = y | Ĝ = k)` indexed `[k][cell]`.
    pub cell_prob: Vec<[f64; CELLS]>,
    /// `P(G = j | Ĝ = k)` indexed `[k][j]`.
    pub target: Vec<Vec<f64>>,
}

impl WPolytope {
    /// Equality system for block `k`: `m` total-probability rows then one
    /// simplex row per cell. Variables are `(cell, j)` at `cell * m + j`.
    pub fn block_lp(&self, k: usize, objective: Vec<f64>) -> LinearProgram {
        let m = self.m;
        let nv = CELLS * m;
        let mut a = Vec::with_capacity(m + CELLS);
        let mut b = Vec::with_capacity(m + CELLS);
        for j in 0..m {
            let mut row = vec![0.0; nv];
            for cell in 0..CELLS {
                row[cell * m + j] = self.cell_prob[k][cell];
            }
            a.push(row);
            b.push(self.target[k][j]);
        }
        for cell in 0..CELLS {
            let mut row = vec![0.0; nv];
            for j in 0..m {
                row[cell * m + j] = 1.0;
            }
            a.push(row);
            b.push(1.0);
        }
        LinearProgram::new(objective, a, b)
    }

    /// Maximises a linear objective over block `k`.
    pub fn solve_block(&self, k: usize, objective: Vec<f64>) -> Result<(f64, Vec<f64>)> {
        let sol = solve_lp(&self.block_lp(k, objective))?;
        match sol.status {
            LpStatus::Optimal => Ok((sol.value, sol.x)),
            LpStatus::Infeasible => Err(Error::InfeasiblePolytope { noisy_group: k }),
            LpStatus::Unbounded => Err(Error::Numerical(format!(
                "bounded polytope reported unbounded for noisy group {k}"
            ))),
        }
    }

    /// Whether `w` satisfies every equality within `tol`.
    pub fn contains(&self, w: &SoftAssignment, tol: f64) -> bool {
        for k in 0..self.m_hat {
            for j in 0..self.m {
                let s: f64 = (0..CELLS).map(|c| w.get(j, c, k) * self.cell_prob[k][c]).sum();
                if (s - self.target[k][j]).abs() > tol {
                    return false;
                }
            }
            for c in 0..CELLS {
                let s: f64 = (0..self.m).map(|j| w.get(j, c, k)).sum();
                if (s - 1.0).abs() > tol || (0..self.m).any(|j| w.get(j, c, k) < -tol) {
                    return false;
                }
            }
        }
        true
    }
}

/// Cell index per example.
pub fn cells(margins: &[f64], labels: &[u8]) -> Vec<usize> {
    margins.iter().zip(labels).map(|(&m, &y)| cell_of(m, y)).collect()
}

pub fn build_w_polytope(
    margins: &[f64],
    labels: &[u8],
    noisy_groups: &[usize],
    noise: &NoiseModel,
) -> Result<WPolytope> {
    let m_hat = noise.m_hat();
    let mut counts = vec![[0usize; CELLS]; m_hat];
    let mut totals = vec![0usize; m_hat];
    for ((&mg, &y), &k) in margins.iter().zip(labels).zip(noisy_groups) {
        if k >= m_hat {
            return Err(Error::InvalidInput(format!("noisy group {k} >= {m_hat}")));
        }
        counts[k][cell_of(mg, y)] += 1;
        totals[k] += 1;
    }
    if let Some(k) = totals.iter().position(|&t| t == 0) {
        return Err(Error::EmptyGroup {
            group: k,
            what: "rows in its noisy group",
        });
    }
    let cell_prob = counts
        .iter()
        .zip(&totals)
        .map(|(c, &t)| {
            let mut p = [0.0; CELLS];
            for (dst, &v) in p.iter_mut().zip(c) {
                *dst = v as f64 / t as f64;
            }
            p
        })
        .collect();
    let target = (0..m_hat)
        .map(|k| (0..noise.m()).map(|j| noise.cond[j][k]).collect())
        .collect();
    Ok(WPolytope {
        m: noise.m(),
        m_hat,
        cell_prob,
        target,
    })
}

/// Sums of `h` per `[k][cell]`.
pub fn cell_sums(h: &[f64], cells: &[usize], noisy_groups: &[usize], m_hat: usize) -> Vec<[f64; CELLS]> {
    let mut out = vec![[0.0; CELLS]; m_hat];
    for ((&hi, &c), &k) in h.iter().zip(cells).zip(noisy_groups) {
        out[k][c] += hi;
    }
    out
}

/// `g_j(θ, w) = Σ_i h_i w(j | c_i, k_i) / (n P(G = j))`.
pub fn g_value(sums: &[[f64; CELLS]], w: &SoftAssignment, j: usize, n: usize, p_j: f64) -> f64 {
    let mut v = 0.0;
    for (k, s) in sums.iter().enumerate() {
        for (c, &hs) in s.iter().enumerate() {
            v += hs * w.get(j, c, k);
        }
    }
    v / (n as f64 * p_j)
}

/// Maximises a sum of `g_j` terms over the polytope. `coef[j]` scales the
/// term for group `j`; `sums` are the `h` cell sums of that term.
fn maximise(
    poly: &WPolytope,
    terms: &[(usize, f64, &[[f64; CELLS]])],
    n: usize,
    g_marginal: &[f64],
) -> Result<(f64, SoftAssignment)> {
    let m = poly.m;
    let mut w = SoftAssignment {
        m,
        m_hat: poly.m_hat,
        values: vec![0.0; m * poly.m_hat * CELLS],
    };
    let mut total = 0.0;
    for k in 0..poly.m_hat {
        let mut obj = vec![0.0; CELLS * m];
        for &(j, scale, sums) in terms {
            if scale == 0.0 {
                continue;
            }
            let denom = n as f64 * g_marginal[j];
            for cell in 0..CELLS {
                obj[cell * m + j] += scale * sums[k][cell] / denom;
            }
        }
        let (value, x) = poly.solve_block(k, obj)?;
        total += value;
        for cell in 0..CELLS {
            for j in 0..m {
                let idx = w.index(j, cell, k);
                w.values[idx] = x[cell * m + j];
            }
        }
    }
    Ok((total, w))
}

fn check_marginal(noise: &NoiseModel) -> Result<()> {
    if let Some(j) = noise.g_marginal.iter().position(|&p| p <= 0.0) {
        return Err(Error::EmptyGroup {
            group: j,
            what: "positive true-group probability",
        });
    }
    Ok(())
}

/// `max_{w ∈ W(θ)} g_j(θ, w)` with a maximiser.
pub fn max_violation_sa(
    margins: &[f64],
    labels: &[u8],
    noisy_groups: &[usize],
    noise: &NoiseModel,
    spec: &ConstraintSpec,
    j: usize,
    ind: Indicator,
) -> Result<(f64, SoftAssignment)> {
    check_marginal(noise)?;
    let poly = build_w_polytope(margins, labels, noisy_groups, noise)?;
    let h = h_values(margins, labels, spec, ind)?;
    let sums = cell_sums(&h, &cells(margins, labels), noisy_groups, noise.m_hat());
    maximise(&poly, &[(j, 1.0, &sums)], labels.len(), &noise.g_marginal)
}

/// [`max_violation_sa`] for every group.
pub fn sa_violations(
    margins: &[f64],
    labels: &[u8],
    noisy_groups: &[usize],
    noise: &NoiseModel,
    spec: &ConstraintSpec,
    ind: Indicator,
) -> Result<ViolationReport> {
    check_marginal(noise)?;
    let poly = build_w_polytope(margins, labels, noisy_groups, noise)?;
    let h = h_values(margins, labels, spec, ind)?;
    let sums = cell_sums(&h, &cells(margins, labels), noisy_groups, noise.m_hat());
    let per_group = (0..noise.m())
        .map(|j| maximise(&poly, &[(j, 1.0, &sums)], labels.len(), &noise.g_marginal).map(|r| r.0))
        .collect::<Result<_>>()?;
    Ok(ViolationReport::from_values(per_group))
}

struct PracticalPlayer<'a> {
    labels: &'a [u8],
    groups: &'a [usize],
    noise: &'a NoiseModel,
    specs: Vec<ConstraintSpec>,
    /// Assignment from the previous weighted LP.
    w: Option<SoftAssignment>,
}

impl PracticalPlayer<'_> {
    fn m(&self) -> usize {
        self.noise.m()
    }

    /// Relaxed `g_c(θ, w)` and, when `lambda` is given, the margin
    /// derivative of `Σ_c λ_c g_c` with `w` and the cells held fixed.
    fn relaxed_values(&self, margins: &[f64], w: &SoftAssignment, lambda: Option<&[f64]>) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.m();
        let n = self.labels.len() as f64;
        let cells = cells(margins, self.labels);
        let mut values = Vec::with_capacity(self.specs.len() * m);
        let mut dmargin = vec![0.0; margins.len()];
        for (s, spec) in self.specs.iter().enumerate() {
            for j in 0..m {
                let scale = 1.0 / (n * self.noise.g_marginal[j]);
                let weights: Vec<f64> = cells
                    .iter()
                    .zip(self.groups)
                    .map(|(&c, &k)| w.get(j, c, k) * scale)
                    .collect();
                let (v, d) = weighted_h_surrogate(margins, self.labels, spec, &weights)?;
                values.push(v);
                if let Some(l) = lambda {
                    let lc = l[s * m + j];
                    if lc != 0.0 {
                        for (a, b) in dmargin.iter_mut().zip(&d) {
                            *a += lc * b;
                        }
                    }
                }
            }
        }
        Ok((values, dmargin))
    }

    fn worst_case(&self, margins: &[f64], ind: Indicator) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.specs.len() * self.m());
        for spec in &self.specs {
            out.extend(sa_violations(margins, self.labels, self.groups, self.noise, spec, ind)?.per_group);
        }
        Ok(out)
    }
}

impl Player for PracticalPlayer<'_> {
    fn names(&self) -> Vec<String> {
        constraint_names(&self.specs, self.m())
    }

    fn defers_lambda(&self) -> bool {
        true
    }

    fn deferred_values(&mut self, margins: &[f64]) -> Result<Option<Vec<f64>>> {
        match &self.w {
            None => Ok(None),
            Some(w) => Ok(Some(self.relaxed_values(margins, w, None)?.0)),
        }
    }

    fn step(&mut self, margins: &[f64], lambda: &[f64]) -> Result<PlayerStep> {
        let m = self.m();
        let poly = build_w_polytope(margins, self.labels, self.groups, self.noise)?;
        let cell_idx = cells(margins, self.labels);
        let sums: Vec<Vec<[f64; CELLS]>> = self
            .specs
            .iter()
            .map(|spec| {
                let h = h_values(margins, self.labels, spec, Indicator::Surrogate)?;
                Ok(cell_sums(&h, &cell_idx, self.groups, self.noise.m_hat()))
            })
            .collect::<Result<_>>()?;
        let mut terms = Vec::new();
        for (s, sum) in sums.iter().enumerate() {
            for j in 0..m {
                terms.push((j, lambda[s * m + j], sum.as_slice()));
            }
        }
        let (_, w) = maximise(&poly, &terms, self.labels.len(), &self.noise.g_marginal)?;
        let (values, dmargin) = self.relaxed_values(margins, &w, Some(lambda))?;
        self.w = Some(w);
        Ok(PlayerStep {
            values,
            relaxed: self.worst_case(margins, Indicator::Surrogate)?,
            dmargin,
        })
    }

    fn evaluate(&mut self, margins: &[f64]) -> Result<Vec<f64>> {
        self.worst_case(margins, Indicator::Exact)
    }
}

/// Alternates an LP for the assignment, a descent step on `θ` with the
/// assignment fixed, and an ascent step on `λ`.
pub fn train_practical(
    view: &TrainView<'_>,
    noise: &NoiseModel,
    specs: &[ConstraintSpec],
    cfg: &TrainerConfig,
) -> Result<TrainOutcome> {
    for s in specs {
        s.validate()?;
    }
    check_marginal(noise)?;
    if noise.m() != view.num_groups || noise.m_hat() != view.num_groups {
        return Err(Error::Dimension("noise model and data disagree on group counts".into()));
    }
    calibrate(specs, cfg, |relaxed| {
        let mut player = PracticalPlayer {
            labels: view.labels,
            groups: view.groups,
            noise,
            specs: relaxed.to_vec(),
            w: None,
        };
        run_gda(view, &mut player, cfg)
    })
}

/// Uniform mixture of linear classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticClassifier {
    pub members: Vec<ModelParams>,
}

/// Mean of `metric` over the mixture.
pub fn evaluate_stochastic<F>(sc: &StochasticClassifier, mut metric: F) -> Result<f64>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    if sc.members.is_empty() {
        return Err(Error::InvalidInput("empty stochastic classifier".into()));
    }
    let mut total = 0.0;
    for p in &sc.members {
        total += metric(p)?;
    }
    Ok(total / sc.members.len() as f64)
}

/// Per-grid-point quantities needed by the oracle.
struct GridPoint {
    objective: f64,
    poly: WPolytope,
    /// `h` cell sums per spec.
    sums: Vec<Vec<[f64; CELLS]>>,
}

/// Diagnostics of the grid-oracle run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealOutcome {
    pub classifier: StochasticClassifier,
    /// Grid index of every mixture member.
    pub grid_indices: Vec<usize>,
    pub log: IterateLog,
    pub lambda: Vec<f64>,
}

/// Outer multiplier ascent around an inner best response that alternates a
/// grid-search oracle over `(θ, μ)` with projected ascent on the
/// assignments. Uses exact indicators throughout.
pub fn train_ideal(
    view: &TrainView<'_>,
    noise: &NoiseModel,
    specs: &[ConstraintSpec],
    cfg: &TrainerConfig,
    theta_grid: &[ModelParams],
) -> Result<IdealOutcome> {
    cfg.validate()?;
    check_marginal(noise)?;
    if theta_grid.is_empty() {
        return Err(Error::InvalidInput("empty parameter grid".into()));
    }
    let m = noise.m();
    let m_hat = noise.m_hat();
    let n = view.len();
    let num_c = specs.len() * m;

    let grid: Vec<GridPoint> = theta_grid
        .iter()
        .map(|theta| {
            let mg = margins(theta, view.features)?;
            let (objective, _) = hinge_from_margins(&mg, view.labels);
            let poly = build_w_polytope(&mg, view.labels, view.groups, noise)?;
            let cell_idx = cells(&mg, view.labels);
            let sums = specs
                .iter()
                .map(|spec| {
                    let h = h_values(&mg, view.labels, spec, Indicator::Exact)?;
                    Ok(cell_sums(&h, &cell_idx, view.groups, m_hat))
                })
                .collect::<Result<_>>()?;
            Ok(GridPoint {
                objective,
                poly,
                sums,
            })
        })
        .collect::<Result<_>>()?;

    // Exact robust values per grid point, filled lazily.
    let mut exact: Vec<Option<Vec<f64>>> = vec![None; grid.len()];
    let mut exact_at = |idx: usize| -> Result<Vec<f64>> {
        if let Some(v) = &exact[idx] {
            return Ok(v.clone());
        }
        let gp = &grid[idx];
        let mut out = Vec::with_capacity(num_c);
        for sums in &gp.sums {
            for j in 0..m {
                out.push(maximise(&gp.poly, &[(j, 1.0, sums)], n, &noise.g_marginal)?.0);
            }
        }
        exact[idx] = Some(out.clone());
        Ok(out)
    };

    let mut lambda = vec![0.0; num_c];
    let mut members = Vec::with_capacity(cfg.iterations * cfg.inner_steps);
    let mut log = IterateLog {
        constraint_names: constraint_names(specs, m),
        records: Vec::with_capacity(cfg.iterations),
    };
    let start = SoftAssignment::from_noise(noise);
    for _ in 0..cfg.iterations {
        let mut ws: Vec<SoftAssignment> = vec![start.clone(); num_c];
        let mut chosen = Vec::with_capacity(cfg.inner_steps);
        for _ in 0..cfg.inner_steps {
            let (best, mu_target) = oracle(&grid, &ws, &lambda, specs.len(), m, n, noise, cfg)?;
            chosen.push(best);
            // Ascent on each assignment against the chosen θ and μ.
            let gp = &grid[best];
            for (c, w) in ws.iter_mut().enumerate() {
                if lambda[c] == 0.0 {
                    continue;
                }
                let (s, j) = (c / m, c % m);
                let denom = n as f64 * noise.g_marginal[j];
                let mut grad = vec![0.0; w.values.len()];
                for k in 0..m_hat {
                    for cell in 0..CELLS {
                        grad[w.index(j, cell, k)] += gp.sums[s][k][cell] / denom;
                    }
                }
                if let Some((u_j, u_k, sign)) = mu_target[c] {
                    // μ puts mass R' on r_u; -μ r_u has gradient ∓R' P(cell | k).
                    for cell in 0..CELLS {
                        grad[w.index(u_j, cell, u_k)] += sign * cfg.mu_radius * gp.poly.cell_prob[u_k][cell];
                    }
                }
                for (v, g) in w.values.iter_mut().zip(&grad) {
                    *v += cfg.eta_w * lambda[c] * g;
                }
                w.project_to_simplices();
            }
        }
        let mut delta = vec![0.0; num_c];
        let mut objective = 0.0;
        for &idx in &chosen {
            let v = exact_at(idx)?;
            for (d, x) in delta.iter_mut().zip(&v) {
                *d += x / chosen.len() as f64;
            }
            objective += grid[idx].objective / chosen.len() as f64;
        }
        log.records.push(IterateRecord {
            theta: theta_grid[chosen[0]].clone(),
            objective,
            surrogate: delta.clone(),
            evaluation: delta.clone(),
        });
        for (l, d) in lambda.iter_mut().zip(&delta) {
            *l += cfg.eta_lambda * d;
        }
        project_lambda(&mut lambda, cfg.lambda_radius);
        members.extend(chosen);
    }
    Ok(IdealOutcome {
        classifier: StochasticClassifier {
            members: members.iter().map(|&i| theta_grid[i].clone()).collect(),
        },
        grid_indices: members,
        log,
        lambda,
    })
}

/// Relaxed total-probability constraint with the largest value for `w`,
/// as `(j, k, sign)` where the gradient of `-R' r_u` in `w` is
/// `sign * R' * P(cell | k)`, or `None` when all are satisfied.
fn most_violated(poly: &WPolytope, w: &SoftAssignment, tau: f64) -> (f64, Option<(usize, usize, f64)>) {
    let mut best = 0.0;
    let mut arg = None;
    for k in 0..poly.m_hat {
        for j in 0..poly.m {
            let s: f64 = (0..CELLS).map(|c| w.get(j, c, k) * poly.cell_prob[k][c]).sum();
            let lower = poly.target[k][j] - s - tau;
            let upper = s - poly.target[k][j] - tau;
            if lower > best {
                best = lower;
                arg = Some((j, k, 1.0));
            }
            if upper > best {
                best = upper;
                arg = Some((j, k, -1.0));
            }
        }
    }
    (best, arg)
}

/// Grid minimiser of `f + Σ_c λ_c [g_c(θ, w_c) - R' max(0, max_u r_u(θ, w_c))]`.
#[allow(clippy::too_many_arguments)]
fn oracle(
    grid: &[GridPoint],
    ws: &[SoftAssignment],
    lambda: &[f64],
    num_specs: usize,
    m: usize,
    n: usize,
    noise: &NoiseModel,
    cfg: &TrainerConfig,
) -> Result<(usize, Vec<Option<(usize, usize, f64)>>)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, gp) in grid.iter().enumerate() {
        let mut value = gp.objective;
        for s in 0..num_specs {
            for j in 0..m {
                let c = s * m + j;
                if lambda[c] == 0.0 {
                    continue;
                }
                let g = g_value(&gp.sums[s], &ws[c], j, n, noise.g_marginal[j]);
                let (viol, _) = most_violated(&gp.poly, &ws[c], cfg.tau);
                value += lambda[c] * (g - cfg.mu_radius * viol);
            }
        }
        if best.is_none_or(|(_, bv)| value < bv) {
            best = Some((idx, value));
        }
    }
    let (idx, _) = best.expect("grid is nonempty");
    let targets = (0..num_specs * m)
        .map(|c| most_violated(&grid[idx].poly, &ws[c], cfg.tau).1)
        .collect();
    Ok((idx, targets))
}
