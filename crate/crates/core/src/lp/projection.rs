const DYKSTRA_SWEEPS: usize = 500;
const DYKSTRA_TOL: f64 = 1e-10;

/// Result of a projection onto a TV ball intersected with the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct TvProjection {
    pub point: Vec<f64>,
    /// False when an iterative method hit its sweep cap.
    pub converged: bool,
    pub sweeps: usize,
}

/// Threshold `s` such that `Σ max(v_i - s, 0) = z`, for `z > 0`.
///
/// Fixed-point iteration on the active set: each pass drops entries at or
/// below the current estimate, which only ever increases.
fn capped_threshold(v: &[f64], z: f64) -> f64 {
    let mut active: Vec<f64> = v.to_vec();
    let mut sum: f64 = active.iter().sum();
    loop {
        let tau = (sum - z) / active.len() as f64;
        let before = active.len();
        active.retain(|&x| x > tau);
        if active.len() == before {
            return tau;
        }
        sum = active.iter().sum();
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let theta = capped_threshold(v, 1.0);
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Euclidean projection onto `{x : ||x - center||_1 <= radius}`.
pub fn project_l1_ball(v: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    assert_eq!(v.len(), center.len(), "vector and centre lengths differ");
    let d: Vec<f64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
    let norm: f64 = d.iter().map(|x| x.abs()).sum();
    if norm <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return center.to_vec();
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let theta = capped_threshold(&abs, radius).max(0.0);
    d.iter()
        .zip(center)
        .map(|(&di, &c)| c + di.signum() * (di.abs() - theta).max(0.0))
        .collect()
}

/// Euclidean projection onto `{x >= 0, Σx = 1, ||x - p_hat||_1 <= 2 gamma}`.
///
/// When the ball constraint binds, the optimality conditions reduce to two
/// scalar equations (one for the coordinates that gain mass, one for those
/// that lose it), each solved exactly by sorting.
pub fn project_tv_ball(v: &[f64], p_hat: &[f64], gamma: f64) -> TvProjection {
    assert_eq!(v.len(), p_hat.len(), "vector and centre lengths differ");
    let done = |point| TvProjection {
        point,
        converged: true,
        sweeps: 0,
    };
    if gamma >= 1.0 {
        return done(project_simplex(v));
    }
    if gamma <= 0.0 {
        return done(p_hat.to_vec());
    }
    let radius = 2.0 * gamma;
    let x0 = project_simplex(v);
    let dist: f64 = x0.iter().zip(p_hat).map(|(a, b)| (a - b).abs()).sum();
    if dist <= radius {
        return done(x0);
    }

    let half = gamma;
    let a: Vec<f64> = v.iter().zip(p_hat).map(|(x, p)| x - p).collect();
    let s = capped_threshold(&a, half);
    let t = loss_threshold(&a, p_hat, half);
    let point = a
        .iter()
        .zip(p_hat)
        .map(|(&ai, &pi)| {
            let d = if ai > s {
                ai - s
            } else if ai < t {
                -(t - ai).min(pi)
            } else {
                0.0
            };
            (pi + d).max(0.0)
        })
        .collect();
    done(point)
}

/// Smallest `t` with `Σ clamp(t - a_i, 0, p_i) = z`.
fn loss_threshold(a: &[f64], p: &[f64], z: f64) -> f64 {
    let mut starts: Vec<f64> = Vec::with_capacity(a.len());
    let mut ends: Vec<f64> = Vec::with_capacity(a.len());
    for (&ai, &pi) in a.iter().zip(p) {
        if pi > 0.0 {
            starts.push(ai);
            ends.push(ai + pi);
        }
    }
    starts.sort_unstable_by(f64::total_cmp);
    ends.sort_unstable_by(f64::total_cmp);
    let (mut i, mut k) = (0, 0);
    let mut level = 0.0;
    let mut slope = 0.0;
    let mut prev = starts.first().copied().unwrap_or(0.0);
    while i < starts.len() || k < ends.len() {
        let (pos, ds) = if i < starts.len() && starts[i] <= ends[k] {
            i += 1;
            (starts[i - 1], 1.0)
        } else {
            k += 1;
            (ends[k - 1], -1.0)
        };
        let next = level + slope * (pos - prev);
        if slope > 0.0 && next >= z {
            return prev + (z - level) / slope;
        }
        level = next;
        prev = pos;
        slope += ds;
    }
    prev
}

/// Dykstra alternating projections between the simplex and the L1 ball.
/// Kept as an independent cross-check of [`project_tv_ball`].
pub fn project_tv_ball_dykstra(v: &[f64], p_hat: &[f64], gamma: f64) -> TvProjection {
    assert_eq!(v.len(), p_hat.len(), "vector and centre lengths differ");
    let radius = 2.0 * gamma.max(0.0);
    let n = v.len();
    let mut x = v.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for sweep in 1..=DYKSTRA_SWEEPS {
        let shifted: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let y = project_simplex(&shifted);
        for i in 0..n {
            p[i] = shifted[i] - y[i];
        }
        let shifted: Vec<f64> = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let next = project_l1_ball(&shifted, p_hat, radius);
        for i in 0..n {
            q[i] = shifted[i] - next[i];
        }
        let change: f64 = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = next;
        if change < DYKSTRA_TOL {
            return TvProjection {
                point: x,
                converged: true,
                sweeps: sweep,
            };
        }
    }
    log::warn!("TV-ball projection did not converge in {DYKSTRA_SWEEPS} sweeps");
    TvProjection {
        point: x,
        converged: false,
        sweeps: DYKSTRA_SWEEPS,
    }
}
