//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 6 and 7 depend on external data and long sweeps; their failures
//! are reported but only fail the run when `ACCEPTANCE_STRICT=1`.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use fairrobust::harness::{aggregate, run_experiment, HyperGrid};
use fairrobust::{Approach, ExperimentConfig, RateKind, SummaryRow};
use support::criteria::{self, Check};

const ADVISORY: [usize; 2] = [6, 7];

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn all(checks: &[Check]) -> Check {
    Check {
        passed: checks.iter().all(|c| c.passed),
        detail: checks.iter().map(|c| c.detail.as_str()).collect::<Vec<_>>().join("; "),
    }
}

fn kernels() -> Check {
    all(&[criteria::projection_oracles(100, 101), criteria::lp_oracle(200, 102)])
}

fn encodings() -> Check {
    all(&[
        criteria::dro_sign_equivalence(RateKind::Tpr, 100, 201),
        criteria::dro_sign_equivalence(RateKind::Fpr, 100, 202),
        criteria::sa_sign_equivalence(RateKind::Tpr, 100, 203),
        criteria::sa_sign_equivalence(RateKind::Fpr, 100, 204),
    ])
}

fn slack_bound() -> Check {
    criteria::slack_bound_property(5, 200, 301)
}

fn soundness() -> Check {
    criteria::soundness(200, 750, 401)
}

fn ideal() -> Check {
    let toy = criteria::ideal_toy(41, 501);
    let r = criteria::ideal_run(&toy, 800);
    Check {
        passed: r.expected_objective <= r.grid_optimum + 0.05 && r.expected_violation <= 0.05,
        detail: format!(
            "E[f] {:.4} vs grid optimum {:.4}, expected robust violation {:.4}",
            r.expected_objective, r.grid_optimum, r.expected_violation
        ),
    }
}

/// Reduced sweep: the full learning-rate grid costs ~84 runs per cell.
fn sweep(config: &Path, noise: Vec<f64>, seeds: u64) -> fairrobust::Result<Vec<SummaryRow>> {
    let mut cfg = ExperimentConfig::load(config)?;
    cfg.grid = HyperGrid {
        eta_theta: vec![0.01, 0.1],
        eta_lambda: vec![0.25, 1.0],
        eta_p: vec![0.01],
        eta_w: vec![0.01],
    };
    cfg.noise = noise;
    cfg.seeds = (0..seeds).collect();
    cfg.approaches = vec![
        Approach::Unconstrained,
        Approach::TrueGroups,
        Approach::Naive,
        Approach::Dro,
        Approach::SaPractical,
    ];
    Ok(aggregate(&run_experiment(&cfg)?.records))
}

fn row(rows: &[SummaryRow], a: Approach, noise: f64) -> &SummaryRow {
    rows.iter()
        .find(|r| r.approach == a && (r.noise - noise).abs() < 1e-12)
        .unwrap_or_else(|| panic!("no summary row for {a} at {noise}"))
}

struct Parts(Vec<(String, bool)>);

impl Parts {
    fn push(&mut self, label: String, ok: bool) {
        self.0.push((label, ok));
    }

    fn finish(self) -> Check {
        Check {
            passed: self.0.iter().all(|p| p.1),
            detail: self
                .0
                .iter()
                .map(|(l, ok)| format!("{l} [{}]", if *ok { "ok" } else { "miss" }))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

fn orderings(parts: &mut Parts, rows: &[SummaryRow], levels: &[f64]) {
    let mut prev = f64::NEG_INFINITY;
    for &g in levels {
        let (sa, dro) = (row(rows, Approach::SaPractical, g), row(rows, Approach::Dro, g));
        parts.push(
            format!("γ={g}: SA error {:.4} <= DRO error {:.4}", sa.error_mean, dro.error_mean),
            sa.error_mean <= dro.error_mean,
        );
        let naive = row(rows, Approach::Naive, g).viol_true_mean;
        parts.push(format!("γ={g}: naive violation {naive:.4} >= previous"), naive >= prev);
        prev = naive;
    }
}

fn adult() -> Check {
    let levels = [0.1, 0.3, 0.5];
    let rows = match sweep(&workspace().join("configs/adult.json"), levels.to_vec(), 5) {
        Ok(r) => r,
        Err(e) => {
            return Check {
                passed: false,
                detail: format!("sweep failed: {e}"),
            }
        }
    };
    let mut p = Parts(Vec::new());
    let un = row(&rows, Approach::Unconstrained, 0.0);
    p.push(format!("unconstrained error {:.4}", un.error_mean), (un.error_mean - 0.145).abs() <= 0.005);
    let tg = row(&rows, Approach::TrueGroups, 0.0);
    p.push(format!("true-group violation {:.4}", tg.viol_true_mean), tg.viol_true_mean < 0.0);
    let naive = row(&rows, Approach::Naive, 0.3);
    p.push(format!("naive violation at 0.3 {:.4}", naive.viol_true_mean), naive.viol_true_mean > 0.0);
    let dro = row(&rows, Approach::Dro, 0.3);
    p.push(
        format!("DRO at 0.3 error {:.4}, violation {:.4}", dro.error_mean, dro.viol_true_mean),
        (dro.error_mean - 0.216).abs() <= 0.03 && dro.viol_true_mean <= 0.01,
    );
    let sa = row(&rows, Approach::SaPractical, 0.3);
    p.push(format!("SA at 0.3 error {:.4}", sa.error_mean), (sa.error_mean - 0.158).abs() <= 0.03);
    orderings(&mut p, &rows, &levels);
    p.finish()
}

fn credit() -> Check {
    let data = workspace().join("data/credit.csv");
    if !data.is_file() {
        return Check {
            passed: false,
            detail: format!("blocked: {} is not available", data.display()),
        };
    }
    let levels = [0.2, 0.4];
    let rows = match sweep(&workspace().join("configs/credit.json"), levels.to_vec(), 5) {
        Ok(r) => r,
        Err(e) => {
            return Check {
                passed: false,
                detail: format!("sweep failed: {e}"),
            }
        }
    };
    let mut p = Parts(Vec::new());
    let un = row(&rows, Approach::Unconstrained, 0.0);
    p.push(format!("unconstrained error {:.4}", un.error_mean), (un.error_mean - 0.180).abs() <= 0.005);
    for (g, dro_ref, sa_ref) in [(0.2, 0.209, 0.182), (0.4, 0.210, 0.213)] {
        for (a, target) in [(Approach::Dro, dro_ref), (Approach::SaPractical, sa_ref)] {
            let r = row(&rows, a, g);
            p.push(
                format!("{a} at {g} error {:.4}, violation {:.4}", r.error_mean, r.viol_true_mean),
                (r.error_mean - target).abs() <= 0.03 && r.viol_true_mean <= 0.01,
            );
        }
    }
    orderings(&mut p, &rows, &levels);
    p.finish()
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    support::write_toy_csv(&data, 600, 801);
    let cfg = support::toy_config(&data, Path::new("unused"));
    let config = dir.path().join("config.json");
    std::fs::write(&config, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_fairrobust"))
            .args(["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        if !status.success() {
            return Check {
                passed: false,
                detail: format!("run {run} exited with {status}"),
            };
        }
        let read = |f: &str| std::fs::read(out.join(f)).unwrap_or_default();
        outputs.push((read("raw.json"), read("raw.csv")));
    }
    let same = outputs[0] == outputs[1] && !outputs[0].0.is_empty();
    Check {
        passed: same,
        detail: format!(
            "two runs, raw.json {} bytes, raw.csv {} bytes, identical: {same}",
            outputs[0].0.len(),
            outputs[0].1.len()
        ),
    }
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [(usize, &str, fn() -> Check); 8] = [
        (1, "kernel oracles", kernels),
        (2, "constraint encodings", encodings),
        (3, "slack bound", slack_bound),
        (4, "robust soundness", soundness),
        (5, "ideal algorithm", ideal),
        (6, "adult reproduction", adult),
        (7, "credit reproduction", credit),
        (8, "determinism", determinism),
    ];
    let mut fatal = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let c = run();
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {id} ({name}): {verdict} in {:.1}s - {}",
            start.elapsed().as_secs_f64(),
            c.detail
        );
        if !c.passed && (strict || !ADVISORY.contains(&id)) {
            fatal += 1;
        }
    }
    if fatal > 0 {
        eprintln!("{fatal} enforced criteria failed");
        std::process::exit(1);
    }
}
