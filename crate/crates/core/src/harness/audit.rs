use std::path::Path;

use serde::Serialize;

use super::run::{member_mean, rate_violations, ModelFile};
use crate::constraints::{group_h_means, certified_bound, Indicator, RateKind, ViolationReport};
use crate::data::{estimate_noise_model, load_csv, load_group_pairs, RawTable};
use crate::dro::worst_case_violation;
use crate::error::{Error, Result};
use crate::softassign::sa_violations;

/// Per-group figures for one constraint kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditConstraint {
    pub kind: RateKind,
    pub alpha: f64,
    /// Rate-difference violations on the observed (noisy) groups.
    pub noisy_rate: Vec<f64>,
    /// Mean of `h` within each observed group.
    pub noisy_h: Vec<f64>,
    /// `noisy_h + gamma`, an upper bound on the true-group value.
    pub true_bound: Vec<f64>,
    /// Whether the bound applies (observed-group value nonpositive).
    pub certified: Vec<bool>,
    pub dro_worst_case: Vec<f64>,
    pub sa_worst_case: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub rows: usize,
    pub error: f64,
    pub gamma: Vec<f64>,
    pub constraints: Vec<AuditConstraint>,
}

/// Scores a saved model on a table whose group column holds the observed
/// groups, with the noise model estimated from `(true, observed)` pairs.
pub fn audit(model: &ModelFile, raw: &RawTable, pairs: &[(usize, usize)]) -> Result<AuditReport> {
    let ds = model.encoder.transform(raw)?;
    let m = ds.m();
    let noise = estimate_noise_model(pairs, m, m)?;
    let (y, g) = (ds.labels(), ds.true_groups());
    let mut constraints = Vec::with_capacity(model.specs.len());
    let mut error = 0.0;
    for spec in &model.specs {
        let specs = std::slice::from_ref(spec);
        let (err, noisy_rate) = member_mean(&model.model, &ds, |mg| rate_violations(mg, y, g, m, specs))?;
        error = err;
        let (_, noisy_h) = member_mean(&model.model, &ds, |mg| {
            Ok(group_h_means(mg, y, g, m, spec, Indicator::Exact)?.per_group)
        })?;
        let (_, dro) = member_mean(&model.model, &ds, |mg| {
            Ok(worst_case_violation(mg, y, g, &noise.gamma, spec)?.per_group)
        })?;
        let (_, sa) = member_mean(&model.model, &ds, |mg| {
            Ok(sa_violations(mg, y, g, &noise, spec, Indicator::Exact)?.per_group)
        })?;
        let bound = certified_bound(&ViolationReport::from_values(noisy_h.clone()), &noise.gamma)?;
        constraints.push(AuditConstraint {
            kind: spec.kind,
            alpha: spec.alpha,
            noisy_rate,
            noisy_h,
            true_bound: bound.bound,
            certified: bound.certified,
            dro_worst_case: dro,
            sa_worst_case: sa,
        });
    }
    if model.specs.is_empty() {
        error = member_mean(&model.model, &ds, |_| Ok(Vec::new()))?.0;
    }
    Ok(AuditReport {
        rows: ds.len(),
        error,
        gamma: noise.gamma.clone(),
        constraints,
    })
}

pub fn audit_files(model: &Path, data: &Path, noise_pairs: &Path) -> Result<AuditReport> {
    let model = ModelFile::load(model)?;
    let raw = load_csv(data, &model.encoder.schema)?;
    let pairs = load_group_pairs(noise_pairs)?;
    if pairs.is_empty() {
        return Err(Error::config(noise_pairs.display().to_string(), "no group pairs"));
    }
    audit(&model, &raw, &pairs)
}
