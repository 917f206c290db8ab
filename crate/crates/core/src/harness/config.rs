use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintSpec, RateKind};
use crate::data::Schema;
use crate::error::{Error, Result};
use crate::trainers::TrainerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Unconstrained,
    TrueGroups,
    Naive,
    Dro,
    SaPractical,
    SaIdeal,
}

impl Approach {
    pub const ALL: [Approach; 6] = [
        Approach::Unconstrained,
        Approach::TrueGroups,
        Approach::Naive,
        Approach::Dro,
        Approach::SaPractical,
        Approach::SaIdeal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Unconstrained => "unconstrained",
            Approach::TrueGroups => "true_groups",
            Approach::Naive => "naive",
            Approach::Dro => "dro",
            Approach::SaPractical => "sa_practical",
            Approach::SaIdeal => "sa_ideal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Baselines see the true groups and run once per seed at noise 0.
    pub fn is_baseline(self) -> bool {
        matches!(self, Approach::Unconstrained | Approach::TrueGroups)
    }
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Learning-rate grids swept per approach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub eta_theta: Vec<f64>,
    pub eta_lambda: Vec<f64>,
    pub eta_p: Vec<f64>,
    pub eta_w: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            eta_theta: vec![0.001, 0.01, 0.1],
            eta_lambda: vec![0.25, 0.5, 1.0, 2.0],
            eta_p: vec![0.001, 0.01, 0.1],
            eta_w: vec![0.001, 0.01, 0.1],
        }
    }
}

/// One point of a [`HyperGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub eta_theta: f64,
    pub eta_lambda: f64,
    pub eta_p: f64,
    pub eta_w: f64,
}

impl HyperGrid {
    /// Points relevant to `approach`; rates it ignores stay at `base`.
    pub fn points(&self, approach: Approach, base: &TrainerConfig) -> Vec<Hyper> {
        let one = |v: f64| vec![v];
        let (th, la, p, w) = match approach {
            Approach::Unconstrained => (self.eta_theta.clone(), one(base.eta_lambda), one(base.eta_p), one(base.eta_w)),
            Approach::TrueGroups | Approach::Naive => {
                (self.eta_theta.clone(), self.eta_lambda.clone(), one(base.eta_p), one(base.eta_w))
            }
            Approach::Dro => (self.eta_theta.clone(), self.eta_lambda.clone(), self.eta_p.clone(), one(base.eta_w)),
            Approach::SaPractical => {
                (self.eta_theta.clone(), self.eta_lambda.clone(), one(base.eta_p), self.eta_w.clone())
            }
            Approach::SaIdeal => (one(base.eta_theta), self.eta_lambda.clone(), one(base.eta_p), self.eta_w.clone()),
        };
        let mut out = Vec::new();
        for &eta_theta in &th {
            for &eta_lambda in &la {
                for &eta_p in &p {
                    for &eta_w in &w {
                        out.push(Hyper {
                            eta_theta,
                            eta_lambda,
                            eta_p,
                            eta_w,
                        });
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("grid.eta_theta", &self.eta_theta),
            ("grid.eta_lambda", &self.eta_lambda),
            ("grid.eta_p", &self.eta_p),
            ("grid.eta_w", &self.eta_w),
        ] {
            if v.is_empty() {
                return Err(Error::config(name, "must not be empty"));
            }
            if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(Error::config(name, format!("rates must be positive, got {x}")));
            }
        }
        Ok(())
    }
}

/// Parameter grid for the grid-oracle algorithm: `points` evenly spaced
/// values in `[lo, hi]` for each listed flat coordinate (bias last), all
/// other coordinates held at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealGrid {
    pub coords: Vec<usize>,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// CSV path, resolved against the config file's directory.
    pub dataset: PathBuf,
    pub schema: Schema,
    #[serde(default = "default_approaches")]
    pub approaches: Vec<Approach>,
    pub constraints: Vec<RateKind>,
    pub alpha: f64,
    #[serde(default = "default_noise")]
    pub noise: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub grid: HyperGrid,
    /// Fixed settings; the swept rates are overwritten per run.
    #[serde(default)]
    pub trainer: TrainerConfig,
    #[serde(default = "default_fractions")]
    pub split: [f64; 3],
    #[serde(default)]
    pub subsample: Option<usize>,
    #[serde(default)]
    pub ideal_grid: Option<IdealGrid>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_approaches() -> Vec<Approach> {
    vec![
        Approach::Unconstrained,
        Approach::TrueGroups,
        Approach::Naive,
        Approach::Dro,
        Approach::SaPractical,
    ]
}

fn default_noise() -> Vec<f64> {
    vec![0.1, 0.2, 0.3, 0.4, 0.5]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_fractions() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// Reads a JSON config and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.dataset.is_relative() {
            cfg.dataset = base.join(&cfg.dataset);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn specs(&self) -> Vec<ConstraintSpec> {
        self.constraints
            .iter()
            .map(|&k| ConstraintSpec::new(k, self.alpha))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.approaches.is_empty() {
            return Err(Error::config("approaches", "must not be empty"));
        }
        let constrained = self.approaches.iter().any(|&a| a != Approach::Unconstrained);
        if constrained && self.constraints.is_empty() {
            return Err(Error::config("constraints", "constrained approaches need at least one constraint kind"));
        }
        let mut kinds = self.constraints.clone();
        kinds.sort_by_key(|k| k.name());
        kinds.dedup();
        if kinds.len() != self.constraints.len() {
            return Err(Error::config("constraints", "duplicate constraint kind"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be a nonnegative number"));
        }
        let noisy = self.approaches.iter().any(|a| !a.is_baseline());
        if noisy && self.noise.is_empty() {
            return Err(Error::config("noise", "must list at least one level"));
        }
        if let Some(g) = self.noise.iter().find(|g| !(**g >= 0.0 && **g < 1.0)) {
            return Err(Error::config("noise", format!("levels must lie in [0, 1), got {g}")));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must not be empty"));
        }
        self.grid.validate()?;
        self.trainer.validate().map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("trainer.{path}"), message),
            other => other,
        })?;
        let total: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(*f > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "fractions must be positive and sum to 1"));
        }
        if let Some(n) = self.subsample {
            if n < 10 {
                return Err(Error::config("subsample", "must keep at least 10 rows"));
            }
        }
        if self.approaches.contains(&Approach::SaIdeal) {
            let g = self
                .ideal_grid
                .as_ref()
                .ok_or_else(|| Error::config("ideal_grid", "required for sa_ideal"))?;
            if g.coords.is_empty() || g.coords.len() > 2 {
                return Err(Error::config("ideal_grid.coords", "list one or two coordinates"));
            }
            if g.points < 2 || g.points.pow(g.coords.len() as u32) > 10_000 {
                return Err(Error::config("ideal_grid.points", "need 2..=100 points per axis for two axes"));
            }
            if !(g.lo < g.hi) {
                return Err(Error::config("ideal_grid", "lo must be below hi"));
            }
        }
        self.schema
            .validate()
            .map_err(|e| Error::config("schema", e.to_string()))
    }
}
