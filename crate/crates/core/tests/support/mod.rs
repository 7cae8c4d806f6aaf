//! Independent oracles and instance generators shared by the integration
//! tests.
#![allow(dead_code)]

use infodesign::equilibrium::Policy;
use infodesign::scenarios::{ScenarioSet, ScenarioSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Brute-force minimizer of `(x − 2a₂)f + (a₁+a₂)f²` over `points` evenly
/// spaced values of `f ∈ [0, 1]`.
pub fn grid_minimizer(a1: f64, a2: f64, x: f64, points: usize) -> f64 {
    let objective = |f: f64| (x - 2.0 * a2) * f + (a1 + a2) * f * f;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..points {
        let f = k as f64 / (points - 1) as f64;
        let v = objective(f);
        if v < best.0 {
            best = (v, f);
        }
    }
    best.1
}

/// Central differences of `f` at `y`, one entry at a time.
pub fn central_differences<F>(mut f: F, y: &[Vec<f64>], h: f64) -> Vec<Vec<f64>>
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let mut out = vec![vec![0.0; y[0].len()]; y.len()];
    let mut probe = y.to_vec();
    for i in 0..y.len() {
        for j in 0..y[i].len() {
            probe[i][j] = y[i][j] + h;
            let up = f(&probe);
            probe[i][j] = y[i][j] - h;
            let down = f(&probe);
            probe[i][j] = y[i][j];
            out[i][j] = (up - down) / (2.0 * h);
        }
    }
    out
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point
/// Gauss rule.
fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = f(c);
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for k in 0..7 {
        let dx = h * GK_NODES[k];
        let pair = f(c - dx) + f(c + dx);
        kronrod += GK_WEIGHTS[k] * pair;
        if k % 2 == 1 {
            gauss += GAUSS_WEIGHTS[k / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive Gauss-Kronrod quadrature by recursive bisection.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    fn step<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64, tol: f64, depth: u32) -> f64 {
        let (value, error) = gauss_kronrod(f, lo, hi);
        if error <= tol || depth >= 50 || hi - lo < 1e-15 {
            return value;
        }
        let mid = 0.5 * (lo + hi);
        step(f, lo, mid, 0.5 * tol, depth + 1) + step(f, mid, hi, 0.5 * tol, depth + 1)
    }
    step(&mut f, lo, hi, tol, 0)
}

/// Iterated adaptive quadrature over `[0, 1]²`.
pub fn integrate_unit_square<F: Fn(f64, f64) -> f64>(f: F, tol: f64) -> f64 {
    integrate(|u| integrate(|v| f(u, v), 0.0, 1.0, tol), 0.0, 1.0, tol)
}

/// The two obedience integrands of the clamped system-optimum share at
/// `(b₁, b₂)`, written directly from the delay functions.
pub fn obedience_integrands(a1: f64, a2: f64, b1: f64, b2: f64) -> (f64, f64) {
    let pi = ((2.0 * a2 - (b1 - b2)) / (2.0 * (a1 + a2))).clamp(0.0, 1.0);
    // Obedient flows: share π on link 1.
    let c1 = a1 * pi + b1;
    let c2 = a2 * (1.0 - pi) + b2;
    (pi * (c1 - c2), (1.0 - pi) * (c2 - c1))
}

/// All simple o→d paths by trying every subset of edges, as sorted edge
/// index lists.
pub fn brute_force_paths(edges: &[(usize, usize)], origin: usize, destination: usize) -> Vec<Vec<usize>> {
    let m = edges.len();
    assert!(m <= 16);
    let mut out = Vec::new();
    for mask in 1u32..(1 << m) {
        let chosen: Vec<usize> = (0..m).filter(|e| mask & (1 << e) != 0).collect();
        // Walk from the origin using only chosen edges, each node left at most once.
        let mut node = origin;
        let mut used = vec![false; chosen.len()];
        let mut visited = vec![origin];
        let mut ok = true;
        while node != destination {
            let next: Vec<usize> = (0..chosen.len())
                .filter(|&k| !used[k] && edges[chosen[k]].0 == node)
                .collect();
            if next.len() != 1 {
                ok = false;
                break;
            }
            used[next[0]] = true;
            node = edges[chosen[next[0]]].1;
            if visited.contains(&node) {
                ok = false;
                break;
            }
            visited.push(node);
        }
        if ok && used.iter().all(|&u| u) {
            out.push(chosen);
        }
    }
    out.sort();
    out
}

pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
    let total: f64 = v.iter().sum();
    v.into_iter().map(|x| x / total).collect()
}

pub fn random_policy(rng: &mut ChaCha8Rng, scenarios: usize, paths: usize) -> Policy {
    Policy::new((0..scenarios).map(|_| random_simplex(rng, paths)).collect()).unwrap()
}

/// Random parallel-link scenario set; each slope is zero with probability
/// `zero_slope`, otherwise in `[0.1, 2]`.
pub fn random_parallel_set(
    rng: &mut ChaCha8Rng,
    links: usize,
    scenarios: usize,
    zero_slope: f64,
) -> ScenarioSet {
    let specs: Vec<ScenarioSpec> = (0..scenarios)
        .map(|_| {
            let a = (0..links)
                .map(|_| {
                    if rng.random::<f64>() < zero_slope {
                        0.0
                    } else {
                        rng.random_range(0.1..2.0)
                    }
                })
                .collect();
            let b = (0..links).map(|_| rng.random_range(0.0..2.0)).collect();
            ScenarioSpec::new(rng.random_range(0.1..1.0), a, b)
        })
        .collect();
    ScenarioSet::from_discrete_spec(&specs).unwrap()
}

/// Two-link scenario with free-flow difference `x`, placing the free-flow
/// delay on whichever link is slower at zero flow.
pub fn two_link_spec(weight: f64, a1: f64, a2: f64, x: f64) -> ScenarioSpec {
    ScenarioSpec::new(weight, vec![a1, a2], vec![x.max(0.0), (-x).max(0.0)])
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
