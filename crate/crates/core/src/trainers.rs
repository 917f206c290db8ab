//! Gradient descent-ascent on the Lagrangian, shared by every approach, plus
//! the unconstrained and noisy-group trainers and best-iterate selection.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::constraints::{group_rate_violations, grouped_h_surrogate, ConstraintSpec, Indicator};
use crate::data::TrainView;
use crate::error::{Error, Result};
use crate::lp::project_l1_ball;
use crate::model::{backprop, hinge_from_margins, margins, ModelParams};

/// Candidate extra slacks for the relaxed constraints, tried in order.
pub const BETA_GRID: [f64; 11] = [
    0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04, 0.045, 0.05,
];

const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain (sub)gradient descent.
    Gd,
    /// Adam with the usual defaults (0.9, 0.999, 1e-8).
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub eta_theta: f64,
    pub eta_lambda: f64,
    pub eta_p: f64,
    pub eta_w: f64,
    pub iterations: usize,
    pub lambda_radius: f64,
    /// Relaxation of the total-probability equalities (ideal algorithm).
    pub tau: f64,
    /// Inner best-response steps (ideal algorithm).
    pub inner_steps: usize,
    /// Radius of the multiplier ball for the relaxed equalities.
    pub mu_radius: f64,
    pub optimizer: Optimizer,
    /// Whether the relaxed constraints get the calibrated extra slack.
    pub calibrate_beta: bool,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            eta_theta: 0.01,
            eta_lambda: 0.5,
            eta_p: 0.01,
            eta_w: 0.01,
            iterations: 750,
            lambda_radius: 10.0,
            tau: 1e-3,
            inner_steps: 10,
            mu_radius: 10.0,
            optimizer: Optimizer::Adam,
            calibrate_beta: true,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("eta_theta", self.eta_theta),
            ("eta_lambda", self.eta_lambda),
            ("eta_p", self.eta_p),
            ("eta_w", self.eta_w),
            ("lambda_radius", self.lambda_radius),
            ("mu_radius", self.mu_radius),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be nonnegative"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        if self.inner_steps == 0 {
            return Err(Error::config("inner_steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// One logged iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub theta: ModelParams,
    pub objective: f64,
    /// Relaxed constraint values used for calibration.
    pub surrogate: Vec<f64>,
    /// Exact constraint values used for selection.
    pub evaluation: Vec<f64>,
}

impl IterateRecord {
    pub fn max_evaluation(&self) -> f64 {
        self.evaluation.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Iterates `θ^1 .. θ^T` with their diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterateLog {
    pub constraint_names: Vec<String>,
    pub records: Vec<IterateRecord>,
}

impl IterateLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes `iteration, objective, surrogate:<c>..., eval:<c>...` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "objective".to_string()];
        header.extend(self.constraint_names.iter().map(|c| format!("surrogate:{c}")));
        header.extend(self.constraint_names.iter().map(|c| format!("eval:{c}")));
        w.write_record(&header)?;
        for (t, r) in self.records.iter().enumerate() {
            let mut row = vec![(t + 1).to_string(), r.objective.to_string()];
            row.extend(r.surrogate.iter().map(f64::to_string));
            row.extend(r.evaluation.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<iterate log>", e))?;
        Ok(())
    }

    /// Whether some iterate satisfies every relaxed constraint.
    pub fn any_surrogate_feasible(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.surrogate.iter().all(|&v| v <= 0.0))
    }
}

/// Lowest objective among iterates with every violation `<= 0`; otherwise
/// the smallest maximum violation, ties broken by objective then position.
pub fn select_best(objectives: &[f64], violations: &[Vec<f64>]) -> Option<usize> {
    let max_v = |v: &Vec<f64>| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let feasible = objectives
        .iter()
        .zip(violations)
        .enumerate()
        .filter(|(_, (_, v))| v.iter().all(|&x| x <= 0.0))
        .fold(None, |best: Option<(usize, f64)>, (i, (&o, _))| match best {
            Some((_, bo)) if bo <= o => best,
            _ => Some((i, o)),
        });
    if let Some((i, _)) = feasible {
        return Some(i);
    }
    objectives
        .iter()
        .zip(violations)
        .enumerate()
        .fold(None, |best: Option<(usize, f64, f64)>, (i, (&o, v))| {
            let mv = max_v(v);
            match best {
                Some((_, bv, bo)) if bv < mv || (bv == mv && bo <= o) => best,
                _ => Some((i, mv, o)),
            }
        })
        .map(|b| b.0)
}

pub fn select_best_iterate(log: &IterateLog) -> Result<usize> {
    let obj: Vec<f64> = log.records.iter().map(|r| r.objective).collect();
    let viol: Vec<Vec<f64>> = log.records.iter().map(|r| r.evaluation.clone()).collect();
    select_best(&obj, &viol).ok_or_else(|| Error::InvalidInput("empty iterate log".into()))
}

/// Clip to the nonnegative orthant, then project onto the L1 ball.
pub fn project_lambda(lambda: &mut [f64], radius: f64) {
    for l in lambda.iter_mut() {
        *l = l.max(0.0);
    }
    let zero = vec![0.0; lambda.len()];
    let p = project_l1_ball(lambda, &zero, radius);
    lambda.copy_from_slice(&p);
}

/// Output of one constraint-player evaluation at the current iterate.
pub(crate) struct PlayerStep {
    /// Values driving the multiplier ascent.
    pub values: Vec<f64>,
    /// Relaxed constraint values to log.
    pub relaxed: Vec<f64>,
    /// Derivative of `Σ_c λ_c values_c` with respect to each margin.
    pub dmargin: Vec<f64>,
}

/// The constraint side of a Lagrangian game.
pub(crate) trait Player {
    fn names(&self) -> Vec<String>;

    /// Whether the multipliers move at the start of the next iteration (using
    /// [`Player::deferred_values`]) instead of alongside `θ`.
    fn defers_lambda(&self) -> bool {
        false
    }

    /// Multiplier values at the new iterate under the previous auxiliary
    /// state; `None` skips the update.
    fn deferred_values(&mut self, _margins: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    fn step(&mut self, margins: &[f64], lambda: &[f64]) -> Result<PlayerStep>;

    fn evaluate(&mut self, margins: &[f64]) -> Result<Vec<f64>>;

    /// Update of any adversarial state after the `θ` step.
    fn ascend(&mut self, _margins: &[f64], _lambda: &[f64]) -> Result<()> {
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(i, &gi)| {
                self.m[i] = B1 * self.m[i] + (1.0 - B1) * gi;
                self.v[i] = B2 * self.v[i] + (1.0 - B2) * gi * gi;
                (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8)
            })
            .collect()
    }
}

/// Result of a constrained training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: IterateLog,
    pub best_iterate: usize,
    pub beta: f64,
    pub lambda: Vec<f64>,
}

/// Runs `iterations` rounds of descent on `θ` and projected ascent on `λ`.
pub(crate) fn run_gda<P: Player>(
    view: &TrainView<'_>,
    player: &mut P,
    cfg: &TrainerConfig,
) -> Result<(IterateLog, Vec<f64>)> {
    cfg.validate()?;
    let names = player.names();
    let mut lambda = vec![0.0; names.len()];
    let mut theta = ModelParams::zeros(view.dim());
    let mut adam = Adam::new(view.dim() + 1);
    let mut log = IterateLog {
        constraint_names: names,
        records: Vec::with_capacity(cfg.iterations),
    };
    for t in 0..=cfg.iterations {
        let m = margins(&theta, view.features)?;
        let (objective, mut dm) = hinge_from_margins(&m, view.labels);
        if !objective.is_finite() || objective > DIVERGENCE_LIMIT {
            return Err(Error::Numerical(format!(
                "objective diverged to {objective} at iteration {t}"
            )));
        }
        if let Some(vals) = player.deferred_values(&m)? {
            for (l, v) in lambda.iter_mut().zip(&vals) {
                *l += cfg.eta_lambda * v;
            }
            project_lambda(&mut lambda, cfg.lambda_radius);
        }
        let step = player.step(&m, &lambda)?;
        if t > 0 {
            log.records.push(IterateRecord {
                theta: theta.clone(),
                objective,
                surrogate: step.relaxed.clone(),
                evaluation: player.evaluate(&m)?,
            });
        }
        if t == cfg.iterations {
            break;
        }
        for (d, s) in dm.iter_mut().zip(&step.dmargin) {
            *d += s;
        }
        let grad = backprop(view.features, &dm);
        let dir = match cfg.optimizer {
            Optimizer::Gd => grad,
            Optimizer::Adam => adam.direction(&grad),
        };
        let d = view.dim();
        for (w, g) in theta.weights.iter_mut().zip(&dir[..d]) {
            *w -= cfg.eta_theta * g;
        }
        theta.bias -= cfg.eta_theta * dir[d];
        if !theta.is_finite() {
            return Err(Error::Numerical(format!("parameters non-finite at iteration {t}")));
        }
        player.ascend(&m, &lambda)?;
        if !player.defers_lambda() {
            for (l, v) in lambda.iter_mut().zip(&step.values) {
                *l += cfg.eta_lambda * v;
            }
            project_lambda(&mut lambda, cfg.lambda_radius);
        }
    }
    Ok((log, lambda))
}

/// Trains on the hinge objective alone and returns the final iterate.
pub fn train_unconstrained(view: &TrainView<'_>, cfg: &TrainerConfig) -> Result<(ModelParams, IterateLog)> {
    let mut player = GroupPlayer::new(view, &[])?;
    let (log, _) = run_gda(view, &mut player, cfg)?;
    let last = log
        .records
        .last()
        .map(|r| r.theta.clone())
        .expect("at least one iteration");
    Ok((last, log))
}

/// Constraint values `c = s * m + j` named `<KIND>[j]`.
pub(crate) fn constraint_names(specs: &[ConstraintSpec], m: usize) -> Vec<String> {
    specs
        .iter()
        .flat_map(|s| (0..m).map(move |j| format!("{}[{j}]", s.kind.name())))
        .collect()
}

/// Group-conditioned constraints on whichever group column the view exposes.
pub(crate) struct GroupPlayer<'a> {
    labels: &'a [u8],
    groups: &'a [usize],
    m: usize,
    specs: Vec<ConstraintSpec>,
}

impl<'a> GroupPlayer<'a> {
    pub(crate) fn new(view: &TrainView<'a>, specs: &[ConstraintSpec]) -> Result<Self> {
        let m = view.num_groups;
        let mut counts = vec![0usize; m];
        for &g in view.groups {
            counts[g] += 1;
        }
        if !specs.is_empty() {
            if let Some(j) = counts.iter().position(|&c| c == 0) {
                return Err(Error::EmptyGroup {
                    group: j,
                    what: "training rows",
                });
            }
        }
        Ok(Self {
            labels: view.labels,
            groups: view.groups,
            m,
            specs: specs.to_vec(),
        })
    }
}

impl Player for GroupPlayer<'_> {
    fn names(&self) -> Vec<String> {
        constraint_names(&self.specs, self.m)
    }

    fn step(&mut self, margins: &[f64], lambda: &[f64]) -> Result<PlayerStep> {
        let mut values = Vec::with_capacity(lambda.len());
        let mut dmargin = vec![0.0; margins.len()];
        for (s, spec) in self.specs.iter().enumerate() {
            let lam = &lambda[s * self.m..(s + 1) * self.m];
            let (v, dm) = grouped_h_surrogate(margins, self.labels, self.groups, self.m, spec, lam)?;
            for (a, b) in dmargin.iter_mut().zip(&dm) {
                *a += b;
            }
            values.extend(v);
        }
        Ok(PlayerStep {
            relaxed: values.clone(),
            values,
            dmargin,
        })
    }

    fn evaluate(&mut self, margins: &[f64]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.specs.len() * self.m);
        for spec in &self.specs {
            let r = group_rate_violations(margins, self.labels, self.groups, self.m, spec, Indicator::Exact)?;
            out.extend(r.per_group);
        }
        Ok(out)
    }
}

/// Retrains with increasing extra slack until some iterate satisfies the
/// relaxed constraints on the training data.
pub(crate) fn calibrate<F>(specs: &[ConstraintSpec], cfg: &TrainerConfig, mut train: F) -> Result<TrainOutcome>
where
    F: FnMut(&[ConstraintSpec]) -> Result<(IterateLog, Vec<f64>)>,
{
    let betas: &[f64] = if cfg.calibrate_beta && !specs.is_empty() {
        &BETA_GRID
    } else {
        &[0.0]
    };
    let mut last = None;
    for &beta in betas {
        let relaxed: Vec<ConstraintSpec> = specs.iter().map(|s| s.with_beta(beta)).collect();
        let (log, lambda) = train(&relaxed)?;
        let done = log.any_surrogate_feasible();
        last = Some((log, lambda, beta));
        if done {
            break;
        }
        log::debug!("relaxed constraints infeasible on train at beta={beta}");
    }
    let (log, lambda, beta) = last.expect("beta grid is nonempty");
    let best_iterate = select_best_iterate(&log)?;
    Ok(TrainOutcome {
        params: log.records[best_iterate].theta.clone(),
        log,
        best_iterate,
        beta,
        lambda,
    })
}

/// Lagrangian training with constraints conditioned on the view's groups
/// (noisy groups for the naive approach, true groups for the oracle).
pub fn train_lagrangian(view: &TrainView<'_>, specs: &[ConstraintSpec], cfg: &TrainerConfig) -> Result<TrainOutcome> {
    for s in specs {
        s.validate()?;
    }
    calibrate(specs, cfg, |relaxed| {
        let mut player = GroupPlayer::new(view, relaxed)?;
        run_gda(view, &mut player, cfg)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_feasible_is_chosen() {
        assert_eq!(select_best(&[0.3], &[vec![-1.0]]), Some(0));
    }

    #[test]
    fn feasibility_dominates_objective() {
        let obj = [1.0, 0.5];
        let viol = [vec![-0.1], vec![0.2]];
        assert_eq!(select_best(&obj, &viol), Some(0));
    }

    #[test]
    fn fallback_minimises_violation() {
        let obj = [0.2, 0.9];
        let viol = [vec![0.3], vec![0.1]];
        assert_eq!(select_best(&obj, &viol), Some(1));
    }

    #[test]
    fn fallback_ties_prefer_objective_then_earliest() {
        let obj = [0.5, 0.4, 0.4];
        let viol = [vec![0.1], vec![0.1], vec![0.1]];
        assert_eq!(select_best(&obj, &viol), Some(1));
    }

    #[test]
    fn lambda_projection_stays_in_ball() {
        let mut l = vec![8.0, -3.0, 6.0];
        project_lambda(&mut l, 10.0);
        assert!(l.iter().all(|&x| x >= 0.0));
        assert!((l.iter().sum::<f64>() - 10.0).abs() < 1e-12);
        assert_eq!(l[1], 0.0);
    }
}
