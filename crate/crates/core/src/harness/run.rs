use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Approach, ExperimentConfig, Hyper, IdealGrid};
use super::report::{RunRecord, Timing};
use crate::constraints::{group_rate_violations, ConstraintSpec, Indicator, ViolationReport};
use crate::data::{
    encode, estimate_noise_model, inject_noise, load_csv, split, EncodedDataset, Encoder, NoiseModel, SplitSpec,
};
use crate::dro::{train_dro, worst_case_violation};
use crate::error::{Error, Result};
use crate::model::{error_rate, margins, ModelParams};
use crate::softassign::{sa_violations, train_ideal, train_practical, StochasticClassifier};
use crate::trainers::{select_best, train_lagrangian, train_unconstrained, TrainerConfig};

/// A deterministic classifier or a uniform mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Linear { params: ModelParams },
    Mixture { classifier: StochasticClassifier },
}

impl TrainedModel {
    pub fn members(&self) -> &[ModelParams] {
        match self {
            TrainedModel::Linear { params } => std::slice::from_ref(params),
            TrainedModel::Mixture { classifier } => &classifier.members,
        }
    }
}

/// Everything needed to score a saved model on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub approach: Approach,
    pub noise: f64,
    pub seed: u64,
    pub specs: Vec<ConstraintSpec>,
    pub encoder: Encoder,
    pub model: TrainedModel,
}

impl ModelFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    pub fn file_name(&self) -> String {
        format!("{}_noise{}_seed{}.json", self.approach, self.noise, self.seed)
    }
}

/// Mean over mixture members of a per-member error and per-group vector.
pub(crate) fn member_mean<F>(model: &TrainedModel, ds: &EncodedDataset, mut f: F) -> Result<(f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let members = model.members();
    let mut err = 0.0;
    let mut acc: Vec<f64> = Vec::new();
    for p in members {
        let mg = margins(p, ds.features())?;
        err += error_rate(&mg, ds.labels());
        let v = f(&mg)?;
        if acc.is_empty() {
            acc = vec![0.0; v.len()];
        }
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += x;
        }
    }
    let k = members.len() as f64;
    Ok((err / k, acc.into_iter().map(|a| a / k).collect()))
}

fn combine(reports: Vec<ViolationReport>) -> Vec<f64> {
    if reports.is_empty() {
        Vec::new()
    } else {
        ViolationReport::combine(&reports).per_group
    }
}

pub(crate) fn rate_violations(
    mg: &[f64],
    labels: &[u8],
    groups: &[usize],
    m: usize,
    specs: &[ConstraintSpec],
) -> Result<Vec<f64>> {
    Ok(combine(
        specs
            .iter()
            .map(|s| group_rate_violations(mg, labels, groups, m, s, Indicator::Exact))
            .collect::<Result<_>>()?,
    ))
}

/// The constraint an approach trains against, evaluated exactly.
fn own_violation(
    approach: Approach,
    mg: &[f64],
    ds: &EncodedDataset,
    noise: &NoiseModel,
    specs: &[ConstraintSpec],
) -> Result<Vec<f64>> {
    let (y, g) = (ds.labels(), ds.noisy_groups());
    match approach {
        Approach::Unconstrained => Ok(Vec::new()),
        Approach::TrueGroups => rate_violations(mg, y, ds.true_groups(), ds.m(), specs),
        Approach::Naive => rate_violations(mg, y, g, ds.m(), specs),
        Approach::Dro => Ok(combine(
            specs
                .iter()
                .map(|s| worst_case_violation(mg, y, g, &noise.gamma, s))
                .collect::<Result<_>>()?,
        )),
        Approach::SaPractical | Approach::SaIdeal => Ok(combine(
            specs
                .iter()
                .map(|s| sa_violations(mg, y, g, noise, s, Indicator::Exact))
                .collect::<Result<_>>()?,
        )),
    }
}

/// Full parameter grid for the grid-oracle algorithm.
pub fn ideal_theta_grid(grid: &IdealGrid, dim: usize) -> Result<Vec<ModelParams>> {
    if let Some(&c) = grid.coords.iter().find(|&&c| c > dim) {
        return Err(Error::config(
            "ideal_grid.coords",
            format!("coordinate {c} outside the {} model parameters", dim + 1),
        ));
    }
    let axis: Vec<f64> = (0..grid.points)
        .map(|i| grid.lo + (grid.hi - grid.lo) * i as f64 / (grid.points - 1) as f64)
        .collect();
    let mut out = Vec::new();
    let mut flat = vec![0.0; dim + 1];
    match grid.coords.as_slice() {
        [a] => {
            for &x in &axis {
                flat[*a] = x;
                out.push(ModelParams::from_flat(&flat)?);
            }
        }
        [a, b] => {
            for &x in &axis {
                for &y in &axis {
                    flat[*a] = x;
                    flat[*b] = y;
                    out.push(ModelParams::from_flat(&flat)?);
                }
            }
        }
        _ => return Err(Error::config("ideal_grid.coords", "list one or two coordinates")),
    }
    Ok(out)
}

struct Splits {
    train: EncodedDataset,
    val: EncodedDataset,
    test: EncodedDataset,
    noise: NoiseModel,
}

struct Candidate {
    hyper: Hyper,
    model: TrainedModel,
    beta: f64,
    best_iterate: Option<usize>,
    val_error: f64,
    val_violation: Vec<f64>,
}

/// Seed for the noise draw of one split at one level, independent of which
/// other levels are run.
fn noise_seed(seed: u64, gamma: f64, split: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(gamma.to_bits() ^ split);
    rng.next_u64()
}

fn prepare(base: [&EncodedDataset; 3], gamma: f64, seed: u64) -> Result<Splits> {
    let mut out = Vec::with_capacity(3);
    for (s, ds) in base.into_iter().enumerate() {
        let noisy = if gamma > 0.0 {
            inject_noise(ds.true_groups(), ds.m(), gamma, noise_seed(seed, gamma, s as u64))?
        } else {
            ds.true_groups().to_vec()
        };
        out.push(ds.clone().with_noisy_groups(noisy)?);
    }
    let test = out.pop().expect("three splits");
    let val = out.pop().expect("three splits");
    let train = out.pop().expect("three splits");
    let noise = estimate_noise_model(&train.group_pairs(), train.m(), train.m_hat())?;
    Ok(Splits {
        train,
        val,
        test,
        noise,
    })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    specs: Vec<ConstraintSpec>,
    ideal: Option<Vec<ModelParams>>,
}

impl Context<'_> {
    fn train(&self, approach: Approach, hyper: Hyper, seed: u64, sp: &Splits) -> Result<Candidate> {
        let cfg = TrainerConfig {
            eta_theta: hyper.eta_theta,
            eta_lambda: hyper.eta_lambda,
            eta_p: hyper.eta_p,
            eta_w: hyper.eta_w,
            seed,
            ..self.cfg.trainer.clone()
        };
        let specs = &self.specs;
        let view = sp.train.noisy_view();
        let lin = |out: crate::trainers::TrainOutcome| {
            (
                TrainedModel::Linear { params: out.params },
                out.beta,
                Some(out.best_iterate),
            )
        };
        let (model, beta, best_iterate) = match approach {
            Approach::Unconstrained => {
                let (params, log) = train_unconstrained(&view, &cfg)?;
                (TrainedModel::Linear { params }, 0.0, Some(log.len().saturating_sub(1)))
            }
            Approach::TrueGroups => lin(train_lagrangian(&sp.train.true_view(), specs, &cfg)?),
            Approach::Naive => lin(train_lagrangian(&view, specs, &cfg)?),
            Approach::Dro => lin(train_dro(&view, &sp.noise.gamma, specs, &cfg)?),
            Approach::SaPractical => lin(train_practical(&view, &sp.noise, specs, &cfg)?),
            Approach::SaIdeal => {
                let grid = self.ideal.as_ref().expect("validated config has an ideal grid");
                let out = train_ideal(&view, &sp.noise, specs, &cfg, grid)?;
                (
                    TrainedModel::Mixture {
                        classifier: out.classifier,
                    },
                    0.0,
                    None,
                )
            }
        };
        let (val_error, val_violation) = member_mean(&model, &sp.val, |mg| {
            own_violation(approach, mg, &sp.val, &sp.noise, specs)
        })?;
        Ok(Candidate {
            hyper,
            model,
            beta,
            best_iterate,
            val_error,
            val_violation,
        })
    }

    fn run_cell(
        &self,
        approach: Approach,
        gamma: f64,
        seed: u64,
        sp: &Splits,
        encoder: &Encoder,
    ) -> Result<(RunRecord, Timing, ModelFile)> {
        let start = Instant::now();
        let hypers = self.cfg.grid.points(approach, &self.cfg.trainer);
        let cands: Vec<Candidate> = hypers
            .par_iter()
            .map(|&h| self.train(approach, h, seed, sp))
            .collect::<Result<_>>()?;
        let errors: Vec<f64> = cands.iter().map(|c| c.val_error).collect();
        let viols: Vec<Vec<f64>> = cands.iter().map(|c| c.val_violation.clone()).collect();
        let pick = select_best(&errors, &viols).expect("grid is nonempty");
        let chosen = &cands[pick];
        let specs = &self.specs;
        let test = &sp.test;
        let (error, viol_true) = member_mean(&chosen.model, test, |mg| {
            rate_violations(mg, test.labels(), test.true_groups(), test.m(), specs)
        })?;
        let (_, viol_noisy) = member_mean(&chosen.model, test, |mg| {
            rate_violations(mg, test.labels(), test.noisy_groups(), test.m(), specs)
        })?;
        let (_, viol_robust) = member_mean(&chosen.model, test, |mg| {
            own_violation(approach, mg, test, &sp.noise, specs)
        })?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!(
            "{approach} noise={gamma} seed={seed}: test error {error:.4}, {} runs in {seconds:.1}s",
            cands.len()
        );
        let h = chosen.hyper;
        let record = RunRecord {
            approach,
            noise: gamma,
            seed,
            eta_theta: h.eta_theta,
            eta_lambda: h.eta_lambda,
            eta_p: h.eta_p,
            eta_w: h.eta_w,
            beta: chosen.beta,
            best_iterate: chosen.best_iterate,
            validation_feasible: chosen.val_violation.iter().all(|&v| v <= 0.0),
            error,
            viol_true,
            viol_noisy,
            viol_robust,
        };
        let timing = Timing {
            approach,
            noise: gamma,
            seed,
            runs: cands.len(),
            seconds,
        };
        let file = ModelFile {
            approach,
            noise: gamma,
            seed,
            specs: specs.clone(),
            encoder: encoder.clone(),
            model: chosen.model.clone(),
        };
        Ok((record, timing, file))
    }
}

/// Records, timings and selected models of one experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub records: Vec<RunRecord>,
    pub timings: Vec<Timing>,
    pub models: Vec<ModelFile>,
}

/// Loads, encodes and optionally subsamples the configured dataset.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(EncodedDataset, Encoder)> {
    let raw = load_csv(&cfg.dataset, &cfg.schema)?;
    let (ds, encoder) = encode(&raw, &cfg.schema)?;
    let ds = match cfg.subsample {
        Some(k) if k < ds.len() => {
            let mut idx = rand::seq::index::sample(&mut ChaCha8Rng::seed_from_u64(0), ds.len(), k).into_vec();
            idx.sort_unstable();
            ds.subset(&idx)
        }
        _ => ds,
    };
    Ok((ds, encoder))
}

/// For each seed: split, inject noise per level, estimate the noise model
/// on train, sweep the grid, select on validation, score on test.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let (ds, encoder) = load_dataset(cfg)?;
    run_on_dataset(cfg, &ds, &encoder)
}

pub fn run_on_dataset(cfg: &ExperimentConfig, ds: &EncodedDataset, encoder: &Encoder) -> Result<Experiment> {
    let ideal = match (&cfg.ideal_grid, cfg.approaches.contains(&Approach::SaIdeal)) {
        (Some(g), true) => Some(ideal_theta_grid(g, ds.dim())?),
        _ => None,
    };
    let ctx = Context {
        cfg,
        specs: cfg.specs(),
        ideal,
    };
    let baselines: Vec<Approach> = cfg.approaches.iter().copied().filter(|a| a.is_baseline()).collect();
    let robust: Vec<Approach> = cfg.approaches.iter().copied().filter(|a| !a.is_baseline()).collect();
    let mut exp = Experiment {
        records: Vec::new(),
        timings: Vec::new(),
        models: Vec::new(),
    };
    let [f0, f1, f2] = cfg.split;
    for &seed in &cfg.seeds {
        let spec = SplitSpec {
            fractions: (f0, f1, f2),
            seed,
        };
        let (tr, va, te) = split(ds, &spec)?;
        let mut levels: Vec<(f64, &[Approach])> = Vec::new();
        if !baselines.is_empty() {
            levels.push((0.0, &baselines));
        }
        if !robust.is_empty() {
            levels.extend(cfg.noise.iter().map(|&g| (g, robust.as_slice())));
        }
        for (gamma, approaches) in levels {
            let sp = prepare([&tr, &va, &te], gamma, seed)?;
            for &a in approaches {
                let (r, t, m) = ctx.run_cell(a, gamma, seed, &sp, encoder)?;
                exp.records.push(r);
                exp.timings.push(t);
                exp.models.push(m);
            }
        }
    }
    Ok(exp)
}
