//! Parameterised checks behind the acceptance suite. The core tests run them
//! at reduced sizes; the acceptance target at full size.
#![allow(dead_code)]

use fairrobust::constraints::{group_h_means, h_values_dro, h_values_sa, population_rate, certified_bound};
use fairrobust::data::{estimate_noise_model, FeatureMatrix, TrainView};
use fairrobust::dro::{train_dro, worst_case_violation};
use fairrobust::lp::{project_l1_ball, project_simplex, project_tv_ball, solve_lp, LpStatus};
use fairrobust::softassign::{
    cell_of, cell_sums, cells, g_value, sa_violations, train_ideal, train_practical, SoftAssignment, CELLS,
};
use fairrobust::{ConstraintSpec, Indicator, ModelParams, RateKind, TrainerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[derive(Debug, Clone)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

// ---------------------------------------------------------------------------
// 1. Kernels against brute-force oracles

pub fn projection_oracles(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut e_simplex, mut e_l1, mut e_tv) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..instances {
        let n = rng.gen_range(1..=8);
        let scale = [0.3, 1.0, 4.0][rng.gen_range(0..3)];
        let v: Vec<f64> = (0..n).map(|_| scale * normal(&mut rng)).collect();
        e_simplex = e_simplex.max(max_abs_diff(&project_simplex(&v), &qp_simplex(&v)));

        let c: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let r = rng.gen_range(0.0..3.0);
        e_l1 = e_l1.max(max_abs_diff(&project_l1_ball(&v, &c, r), &qp_l1_ball(&v, &c, r)));

        let p = random_reference(&mut rng, n);
        let gamma = rng.gen_range(0.0..0.6);
        let w: Vec<f64> = p.iter().map(|x| x + 0.5 * scale * normal(&mut rng)).collect();
        e_tv = e_tv.max(max_abs_diff(&project_tv_ball(&w, &p, gamma).point, &qp_tv_ball(&w, &p, gamma)));
    }
    let worst = e_simplex.max(e_l1).max(e_tv);
    Check::new(
        worst <= 1e-5,
        format!("max |Δ| simplex {e_simplex:.2e}, l1 {e_l1:.2e}, tv {e_tv:.2e} over {instances} instances each"),
    )
}

pub fn lp_oracle(programs: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst, mut mismatches, mut infeasible) = (0.0f64, 0usize, 0usize);
    for _ in 0..programs {
        let lp = random_lp(&mut rng);
        let sol = solve_lp(&lp).expect("solver error");
        match lp_by_vertices(&lp) {
            None => {
                infeasible += 1;
                if sol.status != LpStatus::Infeasible {
                    mismatches += 1;
                }
            }
            Some((value, _)) => {
                if sol.status != LpStatus::Optimal {
                    mismatches += 1;
                    continue;
                }
                worst = worst.max((sol.value - value).abs());
                let resid = lp
                    .a_eq
                    .iter()
                    .zip(&lp.b_eq)
                    .map(|(row, b)| (row.iter().zip(&sol.x).map(|(a, x)| a * x).sum::<f64>() - b).abs())
                    .fold(0.0, f64::max);
                if resid > 1e-7 || sol.x.iter().any(|&x| x < -1e-9) {
                    mismatches += 1;
                }
            }
        }
    }
    Check::new(
        worst <= 1e-7 && mismatches == 0,
        format!("{programs} programs ({infeasible} infeasible): max |Δvalue| {worst:.2e}, {mismatches} status/feasibility mismatches"),
    )
}

// ---------------------------------------------------------------------------
// 2. Linear forms against rate forms

fn six_examples<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<u8>) {
    loop {
        let margins: Vec<f64> = (0..6).map(|_| normal(rng)).collect();
        let labels: Vec<u8> = (0..6).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        if labels.contains(&0) && labels.contains(&1) {
            return (margins, labels);
        }
    }
}

/// Sign agreement of `Σ p̃ h` with the reweighted rate difference.
pub fn dro_sign_equivalence(kind: RateKind, trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..trials {
        let (margins, labels) = six_examples(&mut rng);
        let spec = ConstraintSpec::new(kind, rng.gen_range(0.0..0.3));
        let overall = population_rate(&margins, &labels, kind, Indicator::Exact).unwrap();
        let h = h_values_dro(&margins, &labels, &spec, overall, Indicator::Exact);
        let p = random_simplex_point(&mut rng, 6);
        let linear: f64 = p.iter().zip(&h).map(|(a, b)| a * b).sum();
        let rate = rate_form(kind, &margins, &labels, &p, spec.alpha);
        if !same_sign(linear, rate) {
            failures += 1;
        }
    }
    Check::new(failures == 0, format!("{kind:?}: {failures}/{trials} sign disagreements"))
}

/// Sign agreement of `E[h w(j|·)] / P(G=j)` with the soft-assigned rate
/// difference, for random assignments on the per-cell simplices.
pub fn sa_sign_equivalence(kind: RateKind, trials: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, m_hat) = (2, 2);
    let mut failures = 0;
    let mut mismatched_h = 0;
    for _ in 0..trials {
        let (margins, labels) = six_examples(&mut rng);
        let noisy: Vec<usize> = (0..6).map(|i| i % m_hat).collect();
        let spec = ConstraintSpec::new(kind, rng.gen_range(0.0..0.3));
        let overall = population_rate(&margins, &labels, kind, Indicator::Exact).unwrap();
        let h = h_values_sa(&margins, &labels, &spec, overall, Indicator::Exact);
        if h != h_values_dro(&margins, &labels, &spec, overall, Indicator::Exact) {
            mismatched_h += 1;
        }
        let mut values = Vec::with_capacity(m * m_hat * CELLS);
        for _ in 0..m_hat * CELLS {
            values.extend(random_simplex_point(&mut rng, m));
        }
        let w = SoftAssignment { m, m_hat, values };
        let sums = cell_sums(&h, &cells(&margins, &labels), &noisy, m_hat);
        for j in 0..m {
            let p_j = rng.gen_range(0.1..0.9);
            let linear = g_value(&sums, &w, j, 6, p_j);
            let weights: Vec<f64> = (0..6)
                .map(|i| w.get(j, cell_of(margins[i], labels[i]), noisy[i]))
                .collect();
            let rate = rate_form(kind, &margins, &labels, &weights, spec.alpha);
            if !same_sign(linear, rate) {
                failures += 1;
            }
        }
    }
    Check::new(
        failures == 0 && mismatched_h == 0,
        format!("{kind:?}: {failures}/{} sign disagreements, {mismatched_h} h mismatches", trials * m),
    )
}

// ---------------------------------------------------------------------------
// 3. TV radius and slack bound on finite-support joints

/// Each joint is an integer table over `(support point, label, group)`
/// with count-preserving noisy groups, so group marginals agree.
pub fn slack_bound_property(joints: usize, classifiers: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tv_fail, mut bound_fail, mut certified) = (0usize, 0usize, 0usize);
    let mut checked = 0usize;
    for _ in 0..joints {
        let m = rng.gen_range(2..=3);
        let support: Vec<Vec<f64>> = (0..6).map(|_| vec![normal(&mut rng), normal(&mut rng)]).collect();
        let mut rows = Vec::new();
        let mut cell = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for j in 0..m {
            for s in 0..support.len() {
                for y in 0..2u8 {
                    // Every group keeps both labels at some point.
                    let count = rng.gen_range(if s == 0 { 1 } else { 0 }..6);
                    for _ in 0..count {
                        rows.push(support[s].clone());
                        cell.push(s * 2 + y as usize);
                        labels.push(y);
                        groups.push(j);
                    }
                }
            }
        }
        let fraction = rng.gen_range(0.0..0.6);
        let noisy = swap_noise(&mut rng, &groups, m, fraction);
        let pairs: Vec<(usize, usize)> = groups.iter().copied().zip(noisy.iter().copied()).collect();
        let noise = estimate_noise_model(&pairs, m, m).unwrap();

        for j in 0..m {
            let mut diff = 0i64;
            for c in 0..support.len() * 2 {
                let a = (0..rows.len()).filter(|&i| cell[i] == c && groups[i] == j).count() as i64;
                let b = (0..rows.len()).filter(|&i| cell[i] == c && noisy[i] == j).count() as i64;
                diff += (a - b).abs();
            }
            let n_j = groups.iter().filter(|&&g| g == j).count() as i64;
            let moved = (0..rows.len()).filter(|&i| groups[i] == j && noisy[i] != j).count() as i64;
            // TV = diff / (2 n_j) and γ_j = moved / n_j.
            if diff > 2 * moved || (diff as f64 / (2 * n_j) as f64) > noise.gamma[j] {
                tv_fail += 1;
            }
        }

        for _ in 0..classifiers {
            let theta = random_theta(&mut rng, 2, 1.5);
            let mg = margins_of(&theta, &rows);
            if !mg.iter().zip(&labels).any(|(&x, &y)| y == 1 && x > 0.0) {
                continue;
            }
            let spec = ConstraintSpec::new(RateKind::Tpr, rng.gen_range(0.0..0.2));
            let g = group_h_means(&mg, &labels, &groups, m, &spec, Indicator::Exact).unwrap();
            let g_hat = group_h_means(&mg, &labels, &noisy, m, &spec, Indicator::Exact).unwrap();
            let bound = certified_bound(&g_hat, &noise.gamma).unwrap();
            for j in 0..m {
                checked += 1;
                if bound.certified[j] {
                    certified += 1;
                    if g.per_group[j] > noise.gamma[j] + 1e-12 {
                        bound_fail += 1;
                    }
                }
                if g.per_group[j] > bound.bound[j] + 1e-12 {
                    bound_fail += 1;
                }
            }
        }
    }
    Check::new(
        tv_fail == 0 && bound_fail == 0,
        format!(
            "{joints} joints: {tv_fail} TV > γ; {checked} group checks ({certified} certified), {bound_fail} bound violations"
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Robust feasibility implies true feasibility

pub struct SoundnessTally {
    pub thetas: usize,
    pub dro_feasible: usize,
    pub sa_feasible: usize,
    pub counterexamples: usize,
}

fn tally_theta(
    data: &Synthetic,
    theta: &ModelParams,
    specs: &[ConstraintSpec],
    gamma: &[f64],
    noise: &fairrobust::NoiseModel,
    tally: &mut SoundnessTally,
) {
    let mg = margins_of(theta, &data.rows);
    tally.thetas += 1;
    for spec in specs {
        let target = spec.kind.conditioning_label();
        let skip = (0..data.m).any(|j| !data.groups.iter().zip(&data.labels).any(|(&g, &y)| g == j && y == target))
            || (0..data.m).any(|j| !data.noisy.iter().zip(&data.labels).any(|(&g, &y)| g == j && y == target));
        if skip {
            continue;
        }
        let truth = group_rates(spec.kind, &mg, &data.labels, &data.groups, data.m, spec.alpha);
        let dro = worst_case_violation(&mg, &data.labels, &data.noisy, gamma, spec).unwrap();
        let sa = sa_violations(&mg, &data.labels, &data.noisy, noise, spec, Indicator::Exact).unwrap();
        for j in 0..data.m {
            if dro.per_group[j] <= 0.0 {
                tally.dro_feasible += 1;
                if truth[j] > 0.0 {
                    tally.counterexamples += 1;
                }
            }
            if sa.per_group[j] <= 0.0 {
                tally.sa_feasible += 1;
                if truth[j] > 0.0 {
                    tally.counterexamples += 1;
                }
            }
        }
    }
}

pub fn soundness(random_thetas: usize, iterations: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = Synthetic::generate(&mut rng, 600, 2, 2, 0.2);
    let gamma = data.flip_rates();
    let noise = estimate_noise_model(&data.pairs(), data.m, data.m).unwrap();
    let specs = [
        ConstraintSpec::new(RateKind::Tpr, 0.05),
        ConstraintSpec::new(RateKind::Fpr, 0.05),
    ];
    let mut tally = SoundnessTally {
        thetas: 0,
        dro_feasible: 0,
        sa_feasible: 0,
        counterexamples: 0,
    };
    for _ in 0..random_thetas {
        let theta = random_theta(&mut rng, 2, 2.0);
        tally_theta(&data, &theta, &specs, &gamma, &noise, &mut tally);
    }

    let view = TrainView {
        features: &data.features,
        labels: &data.labels,
        groups: &data.noisy,
        num_groups: data.m,
    };
    let mut trained = 0;
    for (eta_theta, eta_lambda) in [(0.01, 0.5), (0.1, 1.0)] {
        for set in [&specs[..1], &specs[..]] {
            let cfg = TrainerConfig {
                eta_theta,
                eta_lambda,
                iterations,
                ..TrainerConfig::default()
            };
            for out in [
                train_dro(&view, &gamma, set, &cfg).unwrap(),
                train_practical(&view, &noise, set, &cfg).unwrap(),
            ] {
                trained += 1;
                tally_theta(&data, &out.params, &specs, &gamma, &noise, &mut tally);
            }
        }
    }
    Check::new(
        tally.counterexamples == 0 && tally.dro_feasible > 0 && tally.sa_feasible > 0,
        format!(
            "{} classifiers ({trained} trained): {} DRO-feasible and {} SA-feasible group constraints, {} counterexamples",
            tally.thetas, tally.dro_feasible, tally.sa_feasible, tally.counterexamples
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Ideal algorithm on a two-parameter grid

pub struct IdealToy {
    pub features: FeatureMatrix,
    pub labels: Vec<u8>,
    pub noisy: Vec<usize>,
    pub noise: fairrobust::NoiseModel,
    pub grid: Vec<ModelParams>,
    pub specs: Vec<ConstraintSpec>,
}

/// One feature, two groups with shifted score distributions, and a
/// `side × side` grid over `(w, b)`.
pub fn ideal_toy(side: usize, seed: u64) -> IdealToy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 400;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let g = usize::from(i % 4 == 0);
        let y = rng.gen_bool(0.4);
        let centre = if y { 1.0 } else { -1.0 } - 0.8 * g as f64;
        rows.push(vec![centre + normal(&mut rng)]);
        labels.push(u8::from(y));
        groups.push(g);
    }
    let noisy = swap_noise(&mut rng, &groups, 2, 0.1);
    let pairs: Vec<(usize, usize)> = groups.iter().copied().zip(noisy.iter().copied()).collect();
    let noise = estimate_noise_model(&pairs, 2, 2).unwrap();
    let axis = |i: usize| -3.0 + 6.0 * i as f64 / (side - 1) as f64;
    let grid = (0..side)
        .flat_map(|a| {
            (0..side).map(move |b| ModelParams {
                weights: vec![axis(a)],
                bias: axis(b),
            })
        })
        .collect();
    IdealToy {
        features: FeatureMatrix::dense(&rows).unwrap(),
        labels,
        noisy,
        noise,
        grid,
        specs: vec![ConstraintSpec::new(RateKind::Tpr, 0.05)],
    }
}

pub struct IdealReport {
    pub expected_objective: f64,
    pub grid_optimum: f64,
    pub expected_violation: f64,
}

pub fn ideal_run(toy: &IdealToy, iterations: usize) -> IdealReport {
    use fairrobust::model::{hinge_from_margins, margins};
    let view = TrainView {
        features: &toy.features,
        labels: &toy.labels,
        groups: &toy.noisy,
        num_groups: 2,
    };
    let robust = |theta: &ModelParams| -> (f64, Vec<f64>) {
        let mg = margins(theta, &toy.features).unwrap();
        let f = hinge_from_margins(&mg, &toy.labels).0;
        let v = toy
            .specs
            .iter()
            .flat_map(|s| sa_violations(&mg, &toy.labels, &toy.noisy, &toy.noise, s, Indicator::Exact).unwrap().per_group)
            .collect();
        (f, v)
    };
    let grid_optimum = toy
        .grid
        .iter()
        .map(robust)
        .filter(|(_, v)| v.iter().all(|&x| x <= 0.0))
        .map(|(f, _)| f)
        .fold(f64::INFINITY, f64::min);
    let cfg = TrainerConfig {
        iterations,
        ..TrainerConfig::default()
    };
    let out = train_ideal(&view, &toy.noise, &toy.specs, &cfg, &toy.grid).unwrap();
    let mut cache = std::collections::HashMap::new();
    let mut f_sum = 0.0;
    let mut v_sum: Vec<f64> = Vec::new();
    for &idx in &out.grid_indices {
        let (f, v) = cache.entry(idx).or_insert_with(|| robust(&toy.grid[idx])).clone();
        f_sum += f;
        if v_sum.is_empty() {
            v_sum = vec![0.0; v.len()];
        }
        for (a, b) in v_sum.iter_mut().zip(&v) {
            *a += b;
        }
    }
    let count = out.grid_indices.len() as f64;
    IdealReport {
        expected_objective: f_sum / count,
        grid_optimum,
        expected_violation: v_sum.iter().map(|v| v / count).fold(f64::NEG_INFINITY, f64::max),
    }
}
