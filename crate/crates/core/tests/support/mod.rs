//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls into the kernels it is used to check.
#![allow(dead_code)]

pub mod criteria;

use fairrobust::data::FeatureMatrix;
use fairrobust::lp::LinearProgram;
use fairrobust::{ModelParams, RateKind};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Projections

/// Simplex projection by enumerating every support set.
pub fn qp_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (idx.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / idx.len() as f64;
        let mut x = vec![0.0; n];
        let mut ok = true;
        for &i in &idx {
            x[i] = v[i] - shift;
            if x[i] < -1e-12 {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let d = dist2(&x, v);
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, x));
        }
    }
    best.expect("simplex is nonempty").1
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

fn bisect(mut lo: f64, mut hi: f64, mut too_low: impl FnMut(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if too_low(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// L1-ball projection by bisection on the multiplier of the norm constraint.
pub fn qp_l1_ball(v: &[f64], c: &[f64], r: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> { v.iter().zip(c).map(|(a, b)| b + soft(a - b, mu)).collect() };
    let norm = |x: &[f64]| -> f64 { x.iter().zip(c).map(|(a, b)| (a - b).abs()).sum() };
    if norm(v) <= r {
        return v.to_vec();
    }
    let hi = v.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let mu = bisect(0.0, hi, |mu| norm(&at(mu)) > r);
    at(mu)
}

/// Projection onto the simplex intersected with `||x - p||_1 <= 2 gamma`:
/// every coordinate is a clipped soft threshold towards `p`, with one
/// bisection for the sum multiplier nested in one for the ball multiplier.
pub fn qp_tv_ball(v: &[f64], p: &[f64], gamma: f64) -> Vec<f64> {
    let coord = |nu: f64, mu: f64| -> Vec<f64> {
        v.iter()
            .zip(p)
            .map(|(&vi, &pi)| (pi + soft(vi - nu - pi, mu)).max(0.0))
            .collect()
    };
    let vmax = v.iter().fold(f64::MIN, |a, &b| a.max(b));
    let vmin = v.iter().fold(f64::MAX, |a, &b| a.min(b));
    let solve_nu = |mu: f64| -> Vec<f64> {
        let nu = bisect(vmin - mu - 2.0, vmax + mu + 1.0, |nu| coord(nu, mu).iter().sum::<f64>() > 1.0);
        coord(nu, mu)
    };
    let tv = |x: &[f64]| -> f64 { x.iter().zip(p).map(|(a, b)| (a - b).abs()).sum() };
    let x0 = solve_nu(0.0);
    if tv(&x0) <= 2.0 * gamma {
        return x0;
    }
    let hi = 2.0 * (vmax.abs() + vmin.abs() + 2.0);
    let mu = bisect(0.0, hi, |mu| tv(&solve_nu(mu)) > 2.0 * gamma);
    solve_nu(mu)
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_simplex_point<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Reference distribution with some exact zeros, as produced by groups.
pub fn random_reference<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut p = random_simplex_point(rng, n);
    for x in p.iter_mut() {
        if rng.gen_bool(0.25) {
            *x = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    if s == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    p.into_iter().map(|x| x / s).collect()
}

// ---------------------------------------------------------------------------
// Linear programs

/// Optimum of `max c·x, Ax = b, 0 <= x <= u` by enumerating basic solutions.
/// `None` when infeasible. The program must be bounded.
pub fn lp_by_vertices(lp: &LinearProgram) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    let upper = lp.upper_bounds.clone().unwrap_or_else(|| vec![f64::INFINITY; n]);
    let (a, b) = independent_rows(&lp.a_eq, &lp.b_eq)?;
    let r = a.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for basis in combinations(n, r) {
        let nonbasic: Vec<usize> = (0..n).filter(|i| !basis.contains(i)).collect();
        let finite: Vec<usize> = nonbasic.iter().copied().filter(|&i| upper[i].is_finite()).collect();
        for mask in 0u32..(1 << finite.len()) {
            let mut x = vec![0.0; n];
            for (t, &i) in finite.iter().enumerate() {
                if mask & (1 << t) != 0 {
                    x[i] = upper[i];
                }
            }
            let rhs: Vec<f64> = (0..r)
                .map(|row| b[row] - nonbasic.iter().map(|&i| a[row][i] * x[i]).sum::<f64>())
                .collect();
            let sub: Vec<Vec<f64>> = (0..r).map(|row| basis.iter().map(|&i| a[row][i]).collect()).collect();
            let Some(xb) = solve_square(sub, rhs) else { continue };
            for (&i, &v) in basis.iter().zip(&xb) {
                x[i] = v;
            }
            if x.iter().zip(&upper).any(|(&v, &u)| v < -1e-9 || v > u + 1e-9) {
                continue;
            }
            let val: f64 = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
            if best.as_ref().is_none_or(|(bv, _)| val > *bv) {
                best = Some((val, x));
            }
        }
    }
    best
}

fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    rec(0, n, r, &mut cur, &mut out);
    out
}

/// Drops linearly dependent rows; `None` if the system is inconsistent.
fn independent_rows(a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
    // Reduced copies of the kept rows, for the dependence test.
    let mut reduced: Vec<(Vec<f64>, f64, usize)> = Vec::new();
    for (row, &rhs) in a.iter().zip(b) {
        let mut r = row.clone();
        let mut s = rhs;
        for (piv_row, piv_rhs, col) in &reduced {
            let f = r[*col] / piv_row[*col];
            for (x, y) in r.iter_mut().zip(piv_row) {
                *x -= f * y;
            }
            s -= f * piv_rhs;
        }
        match (0..r.len()).max_by(|&i, &j| r[i].abs().total_cmp(&r[j].abs())) {
            Some(col) if r[col].abs() > 1e-9 => {
                reduced.push((r, s, col));
                kept.push((row.clone(), rhs));
            }
            _ if s.abs() > 1e-9 => return None,
            _ => {}
        }
    }
    Some(kept.into_iter().unzip())
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Small bounded LP with integer data (to provoke degeneracy); roughly one
/// in eight is infeasible.
pub fn random_lp<R: Rng>(rng: &mut R) -> LinearProgram {
    let n = rng.gen_range(2..=6);
    let rows = rng.gen_range(1..n.min(4));
    let bounded_by_row = rng.gen_bool(0.5);
    let x0: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..3u8))).collect();
    let mut a: Vec<Vec<f64>> = (0..rows)
        .map(|_| (0..n).map(|_| f64::from(rng.gen_range(-3..=3i8))).collect())
        .collect();
    if bounded_by_row {
        a[0] = (0..n).map(|_| f64::from(rng.gen_range(1..=3u8))).collect();
    }
    let mut b: Vec<f64> = a.iter().map(|r| r.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
    if rng.gen_bool(0.125) {
        let i = rng.gen_range(0..rows);
        b[i] += f64::from(rng.gen_range(-7..=7i8));
    }
    let c: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(-5..=5i8))).collect();
    let lp = LinearProgram::new(c, a, b);
    if bounded_by_row {
        lp
    } else {
        lp.with_upper_bounds((0..n).map(|_| f64::from(rng.gen_range(1..=4u8))).collect())
    }
}

// ---------------------------------------------------------------------------
// Rate oracles

pub fn positive(m: f64) -> bool {
    m > 0.0
}

/// Weighted rate of positive predictions among rows with label `target`.
pub fn weighted_rate(margins: &[f64], labels: &[u8], weights: &[f64], target: u8) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for ((&m, &y), &w) in margins.iter().zip(labels).zip(weights) {
        if y == target {
            den += w;
            if positive(m) {
                num += w;
            }
        }
    }
    num / den
}

/// Rate-form constraint value for a reweighted group against the uniform
/// population: `TPR - TPR_w - alpha` or `FPR_w - FPR - alpha`.
pub fn rate_form(kind: RateKind, margins: &[f64], labels: &[u8], weights: &[f64], alpha: f64) -> f64 {
    let uniform = vec![1.0; labels.len()];
    match kind {
        RateKind::Tpr => weighted_rate(margins, labels, &uniform, 1) - weighted_rate(margins, labels, weights, 1) - alpha,
        RateKind::Fpr => weighted_rate(margins, labels, weights, 0) - weighted_rate(margins, labels, &uniform, 0) - alpha,
    }
}

/// Rate-form values per true group with exact indicators.
pub fn group_rates(kind: RateKind, margins: &[f64], labels: &[u8], groups: &[usize], m: usize, alpha: f64) -> Vec<f64> {
    (0..m)
        .map(|j| {
            let w: Vec<f64> = groups.iter().map(|&g| if g == j { 1.0 } else { 0.0 }).collect();
            rate_form(kind, margins, labels, &w, alpha)
        })
        .collect()
}

/// Sign agreement where `0` counts as nonpositive.
pub fn same_sign(a: f64, b: f64) -> bool {
    (a <= 0.0) == (b <= 0.0)
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Rows with features, labels, true groups and noisy groups whose per-group
/// counts match the true ones exactly.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub features: FeatureMatrix,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub groups: Vec<usize>,
    pub noisy: Vec<usize>,
    pub m: usize,
}

impl Synthetic {
    /// Gaussian features whose mean and label rule shift with the group.
    pub fn generate<R: Rng>(rng: &mut R, n: usize, m: usize, dim: usize, flip_fraction: f64) -> Self {
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        for i in 0..n {
            let g = i % m;
            let shift = g as f64 * 0.6;
            let x: Vec<f64> = (0..dim).map(|_| normal(rng) + shift).collect();
            let score = x.iter().sum::<f64>() - shift * dim as f64 * 0.5 + 0.7 * normal(rng);
            labels.push(u8::from(score > 0.3 * g as f64));
            rows.push(x);
            groups.push(g);
        }
        let noisy = swap_noise(rng, &groups, m, flip_fraction);
        Self {
            features: FeatureMatrix::dense(&rows).unwrap(),
            rows,
            labels,
            groups,
            noisy,
            m,
        }
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.groups.iter().copied().zip(self.noisy.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Per-group `P(Ĝ != j | G = j)` from the counts.
    pub fn flip_rates(&self) -> Vec<f64> {
        (0..self.m)
            .map(|j| {
                let tot = self.groups.iter().filter(|&&g| g == j).count();
                let moved = self.groups.iter().zip(&self.noisy).filter(|(&g, &h)| g == j && h != j).count();
                moved as f64 / tot as f64
            })
            .collect()
    }
}

/// Swaps noisy labels between pairs of rows from different groups, so every
/// group keeps its size under the noisy labelling.
pub fn swap_noise<R: Rng>(rng: &mut R, groups: &[usize], m: usize, fraction: f64) -> Vec<usize> {
    let mut noisy = groups.to_vec();
    let swaps = (fraction * groups.len() as f64 / 2.0).round() as usize;
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(rng);
    let mut used = vec![false; groups.len()];
    let mut done = 0;
    'outer: for &a in &order {
        if done == swaps {
            break;
        }
        if used[a] {
            continue;
        }
        let target = (groups[a] + rng.gen_range(1..m)) % m;
        for &b in &order {
            if !used[b] && b != a && groups[b] == target {
                noisy.swap(a, b);
                used[a] = true;
                used[b] = true;
                done += 1;
                continue 'outer;
            }
        }
    }
    noisy
}

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen::<f64>().max(1e-300);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

pub fn random_theta<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> ModelParams {
    ModelParams {
        weights: (0..dim).map(|_| scale * normal(rng)).collect(),
        bias: scale * normal(rng),
    }
}

pub fn margins_of(theta: &ModelParams, rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.iter().zip(&theta.weights).map(|(a, b)| a * b).sum::<f64>() + theta.bias)
        .collect()
}

// ---------------------------------------------------------------------------
// Small CSV experiments

/// Writes `n` rows of a three-group table with a categorical column.
pub fn write_toy_csv(path: &std::path::Path, n: usize, seed: u64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("x1,x2,colour,grp,y\n");
    for i in 0..n {
        let g = ["A", "B", "C"][i % 3];
        let shift = (i % 3) as f64 * 0.5;
        let x1 = normal(&mut rng) + shift;
        let x2 = normal(&mut rng);
        let colour = ["red", "green", "blue"][rng.gen_range(0..3)];
        let y = if x1 + 0.5 * x2 + 0.4 * normal(&mut rng) > 0.6 { "yes" } else { "no" };
        out.push_str(&format!("{x1:.4},{x2:.4},{colour},{g},{y}\n"));
    }
    std::fs::write(path, out).unwrap();
}

/// Config for the toy table with a one-point grid and short runs.
pub fn toy_config(dataset: &std::path::Path, out: &std::path::Path) -> serde_json::Value {
    serde_json::json!({
        "dataset": dataset,
        "schema": {
            "columns": [
                {"name": "x1", "kind": "numeric"},
                {"name": "x2", "kind": "numeric"},
                {"name": "colour", "kind": "categorical"},
                {"name": "grp", "kind": "group"},
                {"name": "y", "kind": "label"}
            ],
            "positive_label": "yes",
            "group_levels": ["A", "B"],
            "group_other": true
        },
        "approaches": ["unconstrained", "true_groups", "naive", "dro", "sa_practical", "sa_ideal"],
        "constraints": ["TPR"],
        "alpha": 0.05,
        "noise": [0.2, 0.4],
        "seeds": [0, 1],
        "grid": {"eta_theta": [0.05], "eta_lambda": [0.5, 1.0], "eta_p": [0.01], "eta_w": [0.01]},
        "trainer": {"iterations": 60, "inner_steps": 3},
        "ideal_grid": {"coords": [0, 14], "lo": -2.0, "hi": 2.0, "points": 9},
        "out": out
    })
}
