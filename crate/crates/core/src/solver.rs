//! Projected gradient on a product of probability simplices.
//!
//! The variable is a row-major matrix whose rows each live in a simplex
//! (path flows per scenario, response matrices, policies). Steps use the
//! Barzilai-Borwein length as the initial trial and backtrack along the
//! projection arc until the Armijo condition holds.

use serde::{Deserialize, Serialize};

/// Stopping rule and iteration budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgOptions {
    /// Converged once `‖x − P(x − ∇f)‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const MAX_STEP: f64 = 1e14;

/// Euclidean projection onto `{x ≥ 0, Σx = 1}` by the sorting method.
pub fn project_simplex(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    project_once(v);
    // Inputs of large magnitude leave a rounding error in the sum that is
    // large relative to 1; projecting the (now small) result again removes it.
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > 4.0 * f64::EPSILON * v.len() as f64 {
        project_once(v);
    }
}

fn project_once(v: &mut [f64]) {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    for vi in v.iter_mut() {
        *vi = (*vi - theta).max(0.0);
    }
}

/// Projects each consecutive block of `width` entries onto the simplex.
pub fn project_rows(x: &mut [f64], width: usize) {
    for row in x.chunks_mut(width) {
        project_simplex(row);
    }
}

/// `‖x − P(x − g)‖∞`, zero exactly at a stationary point.
pub fn projected_gradient_residual(x: &[f64], g: &[f64], width: usize) -> f64 {
    let mut trial: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - gi).collect();
    project_rows(&mut trial, width);
    x.iter()
        .zip(&trial)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Minimizes a smooth function over a product of simplices.
///
/// `objective(x, grad)` returns `f(x)` and writes `∇f(x)` into `grad`.
/// The start point is projected before the first iteration.
pub fn minimize_on_simplices<F>(objective: F, x0: Vec<f64>, width: usize, opts: &PgOptions) -> PgOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let rows = x0.len() / width.max(1);
    minimize_on_simplices_scaled(objective, x0, width, &vec![1.0; rows], opts)
}

/// Projected gradient in the metric that weights row `r` by `scale[r]`.
///
/// Steps move along `−∇f_r / scale[r]` and the stopping rule uses the same
/// scaled gradient, which suits objectives whose rows enter with very
/// different weights. Nonpositive scales are treated as 1.
pub fn minimize_on_simplices_scaled<F>(
    mut objective: F,
    x0: Vec<f64>,
    width: usize,
    scale: &[f64],
    opts: &PgOptions,
) -> PgOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let metric: Vec<f64> = scale.iter().map(|&d| if d > 0.0 { d } else { 1.0 }).collect();
    let mut x = x0;
    project_rows(&mut x, width);
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);

    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let rescale = |g: &[f64], out: &mut [f64]| {
        for ((o, gr), d) in out.chunks_mut(width).zip(g.chunks(width)).zip(&metric) {
            for (oi, gi) in o.iter_mut().zip(gr) {
                *oi = gi / d;
            }
        }
    };
    rescale(&g, &mut scaled);
    let mut step = 1.0;
    let mut residual = projected_gradient_residual(&x, &scaled, width);
    let mut iterations = 0;

    while residual > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let mut accepted = false;
        let mut f_trial = f;
        while step >= MIN_STEP {
            for ((t, xi), gi) in trial.iter_mut().zip(&x).zip(&scaled) {
                *t = xi - step * gi;
            }
            project_rows(&mut trial, width);
            f_trial = objective(&trial, &mut g_trial);
            // Directional derivatives use row-centered gradients: equal to the
            // raw ones on the simplex, but blind to rounding drift in the row
            // sums. That drift can still move f by about |Σd|·max|g| per row,
            // which is tolerated on top of a few ulps of |f|. Once the
            // decrease drops below rounding, a nonpositive slope at the trial
            // point still certifies descent for convex objectives.
            let mut decrease = 0.0;
            let mut slope_at_trial = 0.0;
            let mut drift = 0.0;
            for ((xr, tr), (gr, gtr)) in x
                .chunks(width)
                .zip(trial.chunks(width))
                .zip(g.chunks(width).zip(g_trial.chunks(width)))
            {
                let len = gr.len() as f64;
                let mean = gr.iter().sum::<f64>() / len;
                let mean_trial = gtr.iter().sum::<f64>() / len;
                let mut row_sum = 0.0;
                let mut g_max: f64 = 0.0;
                for i in 0..gr.len() {
                    let d = tr[i] - xr[i];
                    decrease += (gr[i] - mean) * d;
                    slope_at_trial += (gtr[i] - mean_trial) * d;
                    row_sum += d;
                    g_max = g_max.max(gr[i].abs()).max(gtr[i].abs());
                }
                drift += row_sum.abs() * g_max;
            }
            let magnitude = f.abs().max(1.0);
            let slack = 8.0 * f64::EPSILON * magnitude + 2.0 * drift;
            if f_trial <= f + ARMIJO * decrease + slack
                || (slope_at_trial <= 0.0 && f_trial <= f + 1e-10 * magnitude)
            {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }

        let mut ss = 0.0;
        let mut sy = 0.0;
        for (r, d) in metric.iter().enumerate() {
            for i in r * width..((r + 1) * width).min(n) {
                let s = trial[i] - x[i];
                let y = g_trial[i] - g[i];
                ss += d * s * s;
                sy += s * y;
            }
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        f = f_trial;
        step = if sy > 0.0 { ss / sy } else { MAX_STEP };
        step = step.clamp(MIN_STEP, MAX_STEP);
        rescale(&g, &mut scaled);
        residual = projected_gradient_residual(&x, &scaled, width);
    }

    PgOutcome {
        converged: residual <= opts.tol,
        x,
        value: f,
        residual,
        iterations,
    }
}
