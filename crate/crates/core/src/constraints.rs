//! Rate constraints per group: exact and ramp-relaxed forms, the
//! per-example linear encoding `h`, and the noisy-to-true slack bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::predict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum RateKind {
    /// Group true positive rate at least the overall rate minus slack.
    Tpr,
    /// Group false positive rate at most the overall rate plus slack.
    Fpr,
}

impl RateKind {
    /// Label value the rate conditions on.
    pub fn conditioning_label(self) -> u8 {
        match self {
            RateKind::Tpr => 1,
            RateKind::Fpr => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RateKind::Tpr => "TPR",
            RateKind::Fpr => "FPR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: RateKind,
    pub alpha: f64,
    /// Extra slack granted to the relaxed form only.
    #[serde(default)]
    pub beta: f64,
}

impl ConstraintSpec {
    pub fn new(kind: RateKind, alpha: f64) -> Self {
        Self {
            kind,
            alpha,
            beta: 0.0,
        }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "slack alpha={} must lie in [0, 1] and beta={} must be >= 0",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Slack in force for the given indicator mode.
    pub fn slack(&self, ind: Indicator) -> f64 {
        match ind {
            Indicator::Exact => self.alpha,
            Indicator::Surrogate => self.alpha + self.beta,
        }
    }
}

/// How `I(margin > 0)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Exact,
    /// Piecewise-linear ramps chosen so that every constraint value is an
    /// upper bound on its exact counterpart.
    Surrogate,
}

/// `clamp(1 + m, 0, 1) >= I(m > 0)` and its derivative.
#[inline]
pub fn upper_ramp(m: f64) -> (f64, f64) {
    if m >= 0.0 {
        (1.0, 0.0)
    } else if m > -1.0 {
        (1.0 + m, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// `clamp(m, 0, 1) <= I(m > 0)` and its derivative.
#[inline]
pub fn lower_ramp(m: f64) -> (f64, f64) {
    if m >= 1.0 {
        (1.0, 0.0)
    } else if m > 0.0 {
        (m, 1.0)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Upper,
    Lower,
}

#[inline]
fn indicator(m: f64, ind: Indicator, bound: Bound) -> (f64, f64) {
    match (ind, bound) {
        (Indicator::Exact, _) => (f64::from(predict(m)), 0.0),
        (Indicator::Surrogate, Bound::Upper) => upper_ramp(m),
        (Indicator::Surrogate, Bound::Lower) => lower_ramp(m),
    }
}

/// Which bound the population rate uses: it enters with a positive sign for
/// TPR and a negative sign for FPR.
fn population_bound(kind: RateKind) -> Bound {
    match kind {
        RateKind::Tpr => Bound::Upper,
        RateKind::Fpr => Bound::Lower,
    }
}

fn group_bound(kind: RateKind) -> Bound {
    match kind {
        RateKind::Tpr => Bound::Lower,
        RateKind::Fpr => Bound::Upper,
    }
}

/// Per-group constraint values with their maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub per_group: Vec<f64>,
    pub max_violation: f64,
    pub group_of_max: usize,
}

impl ViolationReport {
    pub fn from_values(per_group: Vec<f64>) -> Self {
        let (group_of_max, max_violation) = per_group
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        Self {
            per_group,
            max_violation,
            group_of_max,
        }
    }

    /// Elementwise maximum of several reports over the same groups.
    pub fn combine(reports: &[ViolationReport]) -> Self {
        let m = reports.first().map_or(0, |r| r.per_group.len());
        let per_group = (0..m)
            .map(|j| {
                reports
                    .iter()
                    .map(|r| r.per_group[j])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        Self::from_values(per_group)
    }
}

fn check_lengths(margins: &[f64], labels: &[u8], groups: Option<&[usize]>) -> Result<()> {
    if margins.len() != labels.len() || groups.is_some_and(|g| g.len() != labels.len()) {
        return Err(Error::Dimension(format!(
            "{} margins, {} labels{}",
            margins.len(),
            labels.len(),
            groups.map_or(String::new(), |g| format!(", {} groups", g.len()))
        )));
    }
    Ok(())
}

/// Rate of positive predictions among examples with the conditioning label.
pub fn population_rate(margins: &[f64], labels: &[u8], kind: RateKind, ind: Indicator) -> Result<f64> {
    check_lengths(margins, labels, None)?;
    let target = kind.conditioning_label();
    let bound = population_bound(kind);
    let (mut hits, mut count) = (0.0, 0usize);
    for (&m, &y) in margins.iter().zip(labels) {
        if y == target {
            hits += indicator(m, ind, bound).0;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyGroup {
            group: usize::MAX,
            what: "the conditioning label in the population",
        });
    }
    Ok(hits / count as f64)
}

/// Rate differences per group: `TPR - TPR_j - slack` or `FPR_j - FPR - slack`.
pub fn group_rate_violations(
    margins: &[f64],
    labels: &[u8],
    groups: &[usize],
    m: usize,
    spec: &ConstraintSpec,
    ind: Indicator,
) -> Result<ViolationReport> {
    check_lengths(margins, labels, Some(groups))?;
    let overall = population_rate(margins, labels, spec.kind, ind)?;
    let target = spec.kind.conditioning_label();
    let bound = group_bound(spec.kind);
    let mut hits = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for ((&mg, &y), &g) in margins.iter().zip(labels).zip(groups) {
        if y == target {
            hits[g] += indicator(mg, ind, bound).0;
            counts[g] += 1;
        }
    }
    let slack = spec.slack(ind);
    let mut per_group = Vec::with_capacity(m);
    for j in 0..m {
        if counts[j] == 0 {
            return Err(Error::EmptyGroup {
                group: j,
                what: match spec.kind {
                    RateKind::Tpr => "positive labels",
                    RateKind::Fpr => "negative labels",
                },
            });
        }
        let rate = hits[j] / counts[j] as f64;
        per_group.push(match spec.kind {
            RateKind::Tpr => overall - rate - slack,
            RateKind::Fpr => rate - overall - slack,
        });
    }
    Ok(ViolationReport::from_values(per_group))
}

/// Per-example `h` whose conditional mean over a group is nonpositive
/// exactly when that group's rate constraint holds:
///
/// * TPR: `h = ½(-I(ŷ=1, y=1) - I(y=1)(slack - TPR))`
/// * FPR: `h = ½(I(ŷ=1, y=0) - I(y=0)(slack + FPR))`
///
/// `overall` is the population rate from [`population_rate`] with the same
/// indicator mode.
pub fn h_values_dro(
    margins: &[f64],
    labels: &[u8],
    spec: &ConstraintSpec,
    overall: f64,
    ind: Indicator,
) -> Vec<f64> {
    let slack = spec.slack(ind);
    let bound = group_bound(spec.kind);
    margins
        .iter()
        .zip(labels)
        .map(|(&m, &y)| match spec.kind {
            RateKind::Tpr if y == 1 => 0.5 * (-indicator(m, ind, bound).0 - (slack - overall)),
            RateKind::Fpr if y == 0 => 0.5 * (indicator(m, ind, bound).0 - (slack + overall)),
            _ => 0.0,
        })
        .collect()
}

/// The soft-assignment encoding uses the same per-example `h`.
pub fn h_values_sa(
    margins: &[f64],
    labels: &[u8],
    spec: &ConstraintSpec,
    overall: f64,
    ind: Indicator,
) -> Vec<f64> {
    h_values_dro(margins, labels, spec, overall, ind)
}

/// Convenience: population rate then `h`.
pub fn h_values(margins: &[f64], labels: &[u8], spec: &ConstraintSpec, ind: Indicator) -> Result<Vec<f64>> {
    let overall = population_rate(margins, labels, spec.kind, ind)?;
    Ok(h_values_dro(margins, labels, spec, overall, ind))
}

/// `Σ_i weights_i h_i` under the relaxed indicators, with its derivative
/// with respect to every margin. The population rate depends on all margins,
/// so every example with the conditioning label receives a gradient term.
pub fn weighted_h_surrogate(
    margins: &[f64],
    labels: &[u8],
    spec: &ConstraintSpec,
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_lengths(margins, labels, None)?;
    let kind = spec.kind;
    let target = kind.conditioning_label();
    let slack = spec.slack(Indicator::Surrogate);
    let pop_bound = population_bound(kind);
    let grp_bound = group_bound(kind);

    let mut count = 0usize;
    let mut pop_hits = 0.0;
    for (&m, &y) in margins.iter().zip(labels) {
        if y == target {
            count += 1;
            pop_hits += indicator(m, Indicator::Surrogate, pop_bound).0;
        }
    }
    if count == 0 {
        return Err(Error::EmptyGroup {
            group: usize::MAX,
            what: "the conditioning label in the population",
        });
    }
    let overall = pop_hits / count as f64;
    let sign = match kind {
        RateKind::Tpr => -1.0,
        RateKind::Fpr => 1.0,
    };

    let mut value = 0.0;
    let mut mass = 0.0;
    let mut dm = vec![0.0; margins.len()];
    for (i, ((&m, &y), &w)) in margins.iter().zip(labels).zip(weights).enumerate() {
        if y != target {
            continue;
        }
        let (v, d) = indicator(m, Indicator::Surrogate, grp_bound);
        mass += w;
        value += w * 0.5 * (sign * v - slack - sign * overall);
        dm[i] += 0.5 * sign * w * d;
    }
    // h carries -½ sign · overall for every conditioning example, so the
    // population rate's derivative enters with total weight `mass`.
    let coef = -0.5 * sign * mass / count as f64;
    if coef != 0.0 {
        for (i, (&m, &y)) in margins.iter().zip(labels).enumerate() {
            if y == target {
                dm[i] += coef * indicator(m, Indicator::Surrogate, pop_bound).1;
            }
        }
    }
    Ok((value, dm))
}

/// Relaxed group means of `h` for every group in one pass, with the margin
/// derivative of `Σ_j lambda_j · mean_j`.
pub fn grouped_h_surrogate(
    margins: &[f64],
    labels: &[u8],
    groups: &[usize],
    m: usize,
    spec: &ConstraintSpec,
    lambda: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_lengths(margins, labels, Some(groups))?;
    let kind = spec.kind;
    let target = kind.conditioning_label();
    let slack = spec.slack(Indicator::Surrogate);
    let pop_bound = population_bound(kind);
    let grp_bound = group_bound(kind);
    let sign = match kind {
        RateKind::Tpr => -1.0,
        RateKind::Fpr => 1.0,
    };

    let mut sizes = vec![0usize; m];
    let mut cond = vec![0usize; m];
    let mut ramp = vec![0.0; m];
    let mut count = 0usize;
    let mut pop_hits = 0.0;
    for ((&mg, &y), &g) in margins.iter().zip(labels).zip(groups) {
        sizes[g] += 1;
        if y == target {
            cond[g] += 1;
            count += 1;
            pop_hits += indicator(mg, Indicator::Surrogate, pop_bound).0;
            ramp[g] += indicator(mg, Indicator::Surrogate, grp_bound).0;
        }
    }
    if count == 0 {
        return Err(Error::EmptyGroup {
            group: usize::MAX,
            what: "the conditioning label in the population",
        });
    }
    if let Some(j) = sizes.iter().position(|&c| c == 0) {
        return Err(Error::EmptyGroup {
            group: j,
            what: "examples",
        });
    }
    let overall = pop_hits / count as f64;
    let values: Vec<f64> = (0..m)
        .map(|j| 0.5 * (sign * ramp[j] - cond[j] as f64 * (slack + sign * overall)) / sizes[j] as f64)
        .collect();

    let own: Vec<f64> = (0..m).map(|j| 0.5 * sign * lambda[j] / sizes[j] as f64).collect();
    let mass: f64 = (0..m).map(|j| lambda[j] * cond[j] as f64 / sizes[j] as f64).sum();
    let pop_coef = -0.5 * sign * mass / count as f64;
    let mut dm = vec![0.0; margins.len()];
    for (i, ((&mg, &y), &g)) in margins.iter().zip(labels).zip(groups).enumerate() {
        if y == target {
            let d_own = indicator(mg, Indicator::Surrogate, grp_bound).1;
            let d_pop = indicator(mg, Indicator::Surrogate, pop_bound).1;
            dm[i] = own[g] * d_own + pop_coef * d_pop;
        }
    }
    Ok((values, dm))
}

/// Upper bounds on true-group constraint values given noisy-group values and
/// the per-group TV radii. Groups whose noisy value is positive carry no
/// certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackBound {
    pub bound: Vec<f64>,
    pub certified: Vec<bool>,
}

pub fn certified_bound(noisy: &ViolationReport, gamma: &[f64]) -> Result<SlackBound> {
    if noisy.per_group.len() != gamma.len() {
        return Err(Error::Dimension(format!(
            "{} group values, {} radii",
            noisy.per_group.len(),
            gamma.len()
        )));
    }
    let bound = noisy.per_group.iter().zip(gamma).map(|(g, r)| g + r).collect();
    let certified = noisy.per_group.iter().map(|&g| g <= 0.0).collect();
    Ok(SlackBound { bound, certified })
}

/// Mean of `h` within each group (the linear form of the constraint).
pub fn group_h_means(
    margins: &[f64],
    labels: &[u8],
    groups: &[usize],
    m: usize,
    spec: &ConstraintSpec,
    ind: Indicator,
) -> Result<ViolationReport> {
    check_lengths(margins, labels, Some(groups))?;
    let h = h_values(margins, labels, spec, ind)?;
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for (&hi, &g) in h.iter().zip(groups) {
        sums[g] += hi;
        counts[g] += 1;
    }
    let mut per_group = Vec::with_capacity(m);
    for j in 0..m {
        if counts[j] == 0 {
            return Err(Error::EmptyGroup {
                group: j,
                what: "examples",
            });
        }
        per_group.push(sums[j] / counts[j] as f64);
    }
    Ok(ViolationReport::from_values(per_group))
}
