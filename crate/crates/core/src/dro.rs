//! Constraints enforced against every reweighting of a group within a TV
//! ball around its empirical distribution.

use crate::constraints::{
    h_values, population_rate, weighted_h_surrogate, ConstraintSpec, Indicator, ViolationReport,
};
use crate::data::{FeatureMatrix, TrainView};
use crate::error::{Error, Result};
use crate::lp::project_tv_ball;
use crate::model::{backprop, hinge_from_margins, margins, ModelParams};
use crate::trainers::{calibrate, constraint_names, run_gda, Player, PlayerStep, TrainOutcome, TrainerConfig};

/// Empirical distribution of each group: `1/n_j` on its rows.
pub fn reference_weights(groups: &[usize], m: usize) -> Result<Vec<Vec<f64>>> {
    let mut counts = vec![0usize; m];
    for &g in groups {
        if g >= m {
            return Err(Error::InvalidInput(format!("group id {g} >= {m}")));
        }
        counts[g] += 1;
    }
    (0..m)
        .map(|j| {
            if counts[j] == 0 {
                return Err(Error::EmptyGroup {
                    group: j,
                    what: "rows for its reference distribution",
                });
            }
            let w = 1.0 / counts[j] as f64;
            Ok(groups.iter().map(|&g| if g == j { w } else { 0.0 }).collect())
        })
        .collect()
}

/// Adversarial distributions, one per constraint, with their references.
#[derive(Debug, Clone, PartialEq)]
pub struct PerGroupWeights {
    /// Indexed by group.
    pub p_hat: Vec<Vec<f64>>,
    /// Indexed by constraint `c = s * m + j`.
    pub p_tilde: Vec<Vec<f64>>,
    /// TV radius per group.
    pub gamma: Vec<f64>,
}

impl PerGroupWeights {
    /// Starts every adversary at its group's reference distribution.
    pub fn at_reference(groups: &[usize], m: usize, gamma: &[f64], num_specs: usize) -> Result<Self> {
        if gamma.len() != m {
            return Err(Error::Dimension(format!("{} radii for {m} groups", gamma.len())));
        }
        if gamma.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::InvalidInput("TV radii must lie in [0, 1]".into()));
        }
        let p_hat = reference_weights(groups, m)?;
        let p_tilde = (0..num_specs).flat_map(|_| p_hat.iter().cloned()).collect();
        Ok(Self {
            p_hat,
            p_tilde,
            gamma: gamma.to_vec(),
        })
    }

    pub fn m(&self) -> usize {
        self.p_hat.len()
    }
}

/// Lagrangian value and the gradients of all three players.
#[derive(Debug, Clone, PartialEq)]
pub struct DroLagrangian {
    pub value: f64,
    /// Weights then bias.
    pub grad_theta: Vec<f64>,
    /// Equal to the constraint values `Σ_i p̃_c,i h_i`.
    pub grad_lambda: Vec<f64>,
    /// `λ_c h` per constraint.
    pub grad_p: Vec<Vec<f64>>,
}

/// `f(θ) + Σ_c λ_c Σ_i p̃_c,i h_i(θ)` with relaxed `h`.
pub fn dro_lagrangian(
    theta: &ModelParams,
    lambda: &[f64],
    weights: &PerGroupWeights,
    features: &FeatureMatrix,
    labels: &[u8],
    specs: &[ConstraintSpec],
) -> Result<DroLagrangian> {
    let m = weights.m();
    if lambda.len() != specs.len() * m || weights.p_tilde.len() != lambda.len() {
        return Err(Error::Dimension("lambda, weights and specs disagree".into()));
    }
    let mg = margins(theta, features)?;
    let (f, mut dm) = hinge_from_margins(&mg, labels);
    let mut value = f;
    let mut grad_lambda = Vec::with_capacity(lambda.len());
    let mut grad_p = Vec::with_capacity(lambda.len());
    for (s, spec) in specs.iter().enumerate() {
        let h = h_values(&mg, labels, spec, Indicator::Surrogate)?;
        for j in 0..m {
            let c = s * m + j;
            let (v, d) = weighted_h_surrogate(&mg, labels, spec, &weights.p_tilde[c])?;
            value += lambda[c] * v;
            for (a, b) in dm.iter_mut().zip(&d) {
                *a += lambda[c] * b;
            }
            grad_lambda.push(v);
            grad_p.push(h.iter().map(|x| lambda[c] * x).collect());
        }
    }
    Ok(DroLagrangian {
        value,
        grad_theta: backprop(features, &dm),
        grad_lambda,
        grad_p,
    })
}

/// Largest `Σ p̃_i h_i` over distributions with `TV(p̃, p_hat) <= gamma`,
/// with a maximiser. Mass is taken from the lowest-`h` points of the
/// reference and placed on a highest-`h` point.
pub fn worst_case_value(h: &[f64], p_hat: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    let mut p = p_hat.to_vec();
    let Some(top) = argmax(h) else {
        return (0.0, p);
    };
    let budget = gamma.clamp(0.0, 1.0).min(1.0 - p_hat[top]);
    let mut order: Vec<usize> = (0..h.len()).filter(|&i| i != top && p_hat[i] > 0.0).collect();
    order.sort_by(|&a, &b| h[a].total_cmp(&h[b]).then(a.cmp(&b)));
    let mut left = budget.max(0.0);
    for i in order {
        if left <= 0.0 {
            break;
        }
        let take = p[i].min(left);
        p[i] -= take;
        left -= take;
    }
    p[top] += budget.max(0.0) - left;
    let value = p.iter().zip(h).map(|(a, b)| a * b).sum();
    (value, p)
}

fn argmax(h: &[f64]) -> Option<usize> {
    h.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|b| b.0)
}

/// Row indices per group, sorted ascending.
fn supports(groups: &[usize], m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); m];
    for (i, &g) in groups.iter().enumerate() {
        out[g].push(i);
    }
    out
}

/// [`worst_case_value`] for a reference uniform on `support`, in linear time.
fn worst_case_uniform(h: &[f64], support: &[usize], gamma: f64, top: usize, scratch: &mut Vec<f64>) -> f64 {
    let n_j = support.len();
    let w = 1.0 / n_j as f64;
    let base: f64 = support.iter().map(|&i| h[i]).sum::<f64>() * w;
    let top_inside = support.binary_search(&top).is_ok();
    let avail = if top_inside { 1.0 - w } else { 1.0 };
    let budget = gamma.clamp(0.0, 1.0).min(avail);
    if budget <= 0.0 {
        return base;
    }
    scratch.clear();
    let mut skipped = false;
    for &i in support {
        if i == top && !skipped {
            skipped = true;
            continue;
        }
        scratch.push(h[i]);
    }
    let units = budget / w;
    let k = (units.floor() as usize).min(scratch.len());
    let frac = (units - k as f64).max(0.0);
    let removed = if k >= scratch.len() {
        scratch.iter().sum::<f64>()
    } else {
        let (lo, kth, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
        lo.iter().sum::<f64>() + frac * *kth
    };
    base - removed * w + budget * h[top]
}

/// Exact worst-case constraint values per group under TV radii `gamma`.
pub fn worst_case_violation(
    margins: &[f64],
    labels: &[u8],
    groups: &[usize],
    gamma: &[f64],
    spec: &ConstraintSpec,
) -> Result<ViolationReport> {
    let m = gamma.len();
    let h = h_values(margins, labels, spec, Indicator::Exact)?;
    worst_case_report(&h, &supports(groups, m), gamma)
}

fn worst_case_report(h: &[f64], supports: &[Vec<usize>], gamma: &[f64]) -> Result<ViolationReport> {
    let top = argmax(h).ok_or_else(|| Error::InvalidInput("no examples".into()))?;
    let mut scratch = Vec::new();
    let mut per_group = Vec::with_capacity(supports.len());
    for (j, support) in supports.iter().enumerate() {
        if support.is_empty() {
            return Err(Error::EmptyGroup {
                group: j,
                what: "rows for its reference distribution",
            });
        }
        per_group.push(worst_case_uniform(h, support, gamma[j], top, &mut scratch));
    }
    Ok(ViolationReport::from_values(per_group))
}

struct DroPlayer<'a> {
    labels: &'a [u8],
    specs: Vec<ConstraintSpec>,
    supports: Vec<Vec<usize>>,
    weights: PerGroupWeights,
    eta_p: f64,
    /// Relaxed `h` per spec at the latest iterate.
    h: Vec<Vec<f64>>,
    /// Projections that hit the sweep cap.
    unconverged: usize,
}

impl Player for DroPlayer<'_> {
    fn names(&self) -> Vec<String> {
        constraint_names(&self.specs, self.weights.m())
    }

    fn step(&mut self, margins: &[f64], lambda: &[f64]) -> Result<PlayerStep> {
        let m = self.weights.m();
        let mut values = Vec::with_capacity(lambda.len());
        let mut relaxed = Vec::with_capacity(lambda.len());
        let mut dmargin = vec![0.0; margins.len()];
        self.h.clear();
        for (s, spec) in self.specs.iter().enumerate() {
            let overall = population_rate(margins, self.labels, spec.kind, Indicator::Surrogate)?;
            let h = crate::constraints::h_values_dro(margins, self.labels, spec, overall, Indicator::Surrogate);
            relaxed.extend(worst_case_report(&h, &self.supports, &self.weights.gamma)?.per_group);
            for j in 0..m {
                let c = s * m + j;
                let (v, d) = weighted_h_surrogate(margins, self.labels, spec, &self.weights.p_tilde[c])?;
                if lambda[c] != 0.0 {
                    for (a, b) in dmargin.iter_mut().zip(&d) {
                        *a += lambda[c] * b;
                    }
                }
                values.push(v);
            }
            self.h.push(h);
        }
        Ok(PlayerStep {
            values,
            relaxed,
            dmargin,
        })
    }

    fn evaluate(&mut self, margins: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for spec in &self.specs {
            let h = h_values(margins, self.labels, spec, Indicator::Exact)?;
            out.extend(worst_case_report(&h, &self.supports, &self.weights.gamma)?.per_group);
        }
        Ok(out)
    }

    fn ascend(&mut self, _margins: &[f64], lambda: &[f64]) -> Result<()> {
        let m = self.weights.m();
        for s in 0..self.specs.len() {
            for j in 0..m {
                let c = s * m + j;
                if lambda[c] == 0.0 {
                    continue;
                }
                let step = self.eta_p * lambda[c];
                let v: Vec<f64> = self.weights.p_tilde[c]
                    .iter()
                    .zip(&self.h[s])
                    .map(|(p, h)| p + step * h)
                    .collect();
                let proj = project_tv_ball(&v, &self.weights.p_hat[j], self.weights.gamma[j]);
                if !proj.converged {
                    self.unconverged += 1;
                }
                self.weights.p_tilde[c] = proj.point;
            }
        }
        Ok(())
    }
}

/// Projected gradient descent-ascent over `(θ, λ, p̃)`; the best iterate is
/// chosen with the exact worst-case constraints.
pub fn train_dro(
    view: &TrainView<'_>,
    gamma: &[f64],
    specs: &[ConstraintSpec],
    cfg: &TrainerConfig,
) -> Result<TrainOutcome> {
    for s in specs {
        s.validate()?;
    }
    let m = view.num_groups;
    calibrate(specs, cfg, |relaxed| {
        let mut player = DroPlayer {
            labels: view.labels,
            specs: relaxed.to_vec(),
            supports: supports(view.groups, m),
            weights: PerGroupWeights::at_reference(view.groups, m, gamma, relaxed.len())?,
            eta_p: cfg.eta_p,
            h: Vec::new(),
            unconverged: 0,
        };
        let out = run_gda(view, &mut player, cfg)?;
        if player.unconverged > 0 {
            log::warn!("{} TV projections did not converge", player.unconverged);
        }
        Ok(out)
    })
}
