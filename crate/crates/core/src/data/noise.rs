use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conditional distribution of true groups given noisy groups, with the
/// derived marginals and per-group flip bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// `cond[j][k] = P(G = j | Ĝ = k)`.
    pub cond: Vec<Vec<f64>>,
    /// `P(Ĝ = k)`.
    pub ghat_marginal: Vec<f64>,
    /// `P(G = j) = Σ_k cond[j][k] P(Ĝ = k)`.
    pub g_marginal: Vec<f64>,
    /// `gamma[j] = P(Ĝ != j | G = j)`.
    pub gamma: Vec<f64>,
}

impl NoiseModel {
    pub fn m(&self) -> usize {
        self.cond.len()
    }

    pub fn m_hat(&self) -> usize {
        self.ghat_marginal.len()
    }

    /// Model with `Ĝ = G`.
    pub fn identity(marginal: Vec<f64>) -> Self {
        let m = marginal.len();
        let cond = (0..m)
            .map(|j| (0..m).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            cond,
            g_marginal: marginal.clone(),
            ghat_marginal: marginal,
            gamma: vec![0.0; m],
        }
    }

    /// Builds a model from a literal conditional matrix and noisy marginal.
    /// `gamma[j] = 1 - cond[j][j] P(Ĝ=j) / P(G=j)` when `m = m̂`.
    pub fn from_matrix(cond: Vec<Vec<f64>>, ghat_marginal: Vec<f64>) -> Result<Self> {
        let m = cond.len();
        let m_hat = ghat_marginal.len();
        if m == 0 || cond.iter().any(|r| r.len() != m_hat) {
            return Err(Error::Dimension("noise matrix must be m x m̂ and nonempty".into()));
        }
        if cond.iter().flatten().any(|&v| !(v >= 0.0 && v.is_finite()))
            || ghat_marginal.iter().any(|&v| !(v >= 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidInput("noise model entries must be >= 0".into()));
        }
        for k in 0..m_hat {
            let s: f64 = cond.iter().map(|r| r[k]).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "noise matrix column {k} sums to {s}"
                )));
            }
        }
        if (ghat_marginal.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("noisy-group marginal must sum to 1".into()));
        }
        let g_marginal: Vec<f64> = cond
            .iter()
            .map(|r| r.iter().zip(&ghat_marginal).map(|(c, p)| c * p).sum())
            .collect();
        let mut gamma = Vec::with_capacity(m);
        for j in 0..m {
            if g_marginal[j] <= 0.0 {
                return Err(Error::EmptyGroup {
                    group: j,
                    what: "positive true-group probability",
                });
            }
            let stay = if j < m_hat {
                cond[j][j] * ghat_marginal[j]
            } else {
                0.0
            };
            gamma.push((1.0 - stay / g_marginal[j]).clamp(0.0, 1.0));
        }
        Ok(Self {
            cond,
            ghat_marginal,
            g_marginal,
            gamma,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let again = Self::from_matrix(self.cond.clone(), self.ghat_marginal.clone())?;
        if self.gamma.len() != again.gamma.len()
            || self.gamma.iter().any(|&g| !(0.0..=1.0).contains(&g))
        {
            return Err(Error::InvalidInput("gamma must be an m-vector in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Counts `(true, noisy)` pairs into a noise model.
pub fn estimate_noise_model(pairs: &[(usize, usize)], m: usize, m_hat: usize) -> Result<NoiseModel> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("auxiliary group pairs are empty".into()));
    }
    let mut counts = vec![vec![0usize; m_hat]; m];
    for &(g, gh) in pairs {
        if g >= m || gh >= m_hat {
            return Err(Error::InvalidInput(format!("group pair ({g}, {gh}) out of range")));
        }
        counts[g][gh] += 1;
    }
    let n = pairs.len() as f64;
    let col_tot: Vec<usize> = (0..m_hat).map(|k| counts.iter().map(|r| r[k]).sum()).collect();
    if let Some(k) = col_tot.iter().position(|&c| c == 0) {
        return Err(Error::EmptyGroup {
            group: k,
            what: "noisy-group pairs",
        });
    }
    let mut gamma = Vec::with_capacity(m);
    for (j, row) in counts.iter().enumerate() {
        let tot: usize = row.iter().sum();
        if tot == 0 {
            return Err(Error::EmptyGroup {
                group: j,
                what: "true-group pairs",
            });
        }
        let stay = row.get(j).copied().unwrap_or(0);
        gamma.push((tot - stay) as f64 / tot as f64);
    }
    let cond: Vec<Vec<f64>> = counts
        .iter()
        .map(|r| r.iter().zip(&col_tot).map(|(&c, &t)| c as f64 / t as f64).collect())
        .collect();
    let ghat_marginal: Vec<f64> = col_tot.iter().map(|&c| c as f64 / n).collect();
    let g_marginal = cond
        .iter()
        .map(|r| r.iter().zip(&ghat_marginal).map(|(c, p)| c * p).sum())
        .collect();
    Ok(NoiseModel {
        cond,
        ghat_marginal,
        g_marginal,
        gamma,
    })
}

/// Reads `(true, noisy)` group-id pairs from a two-column CSV with header.
pub fn load_group_pairs(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::RaggedRow {
                row: i + 1,
                expected: 2,
                found: rec.len(),
            });
        }
        let parse = |c: usize| {
            rec[c].parse::<usize>().map_err(|_| Error::BadNumber {
                row: i + 1,
                column: if c == 0 { "true" } else { "noisy" }.to_string(),
                value: rec[c].to_string(),
            })
        };
        out.push((parse(0)?, parse(1)?));
    }
    Ok(out)
}
