//! Design of obedient recommendation policies.
//!
//! A policy is obedient when no recipient of recommendation `i` expects to
//! gain by taking another path `j` under the posterior belief induced by the
//! policy. In aggregated form this reads
//!
//! ```text
//! r_ij(π) = Σ_θ w(θ) π_i(θ) [c_i(Aπ(θ), θ) − c_j(Aπ(θ), θ)] ≤ 0   for all i ≠ j.
//! ```
//!
//! For two parallel affine links the design problem is a convex quadratic
//! program in the share `π₁(θ)` with two convex quadratic constraints, solved
//! here through its two-dimensional dual ([`design_two_link`]). Other
//! topologies get a multistart augmented-Lagrangian heuristic
//! ([`design_general`]).
//!
//! Every returned policy is evaluated at its own Bayesian user equilibrium,
//! and replaced by the merged recommendation `yᵀπ` so that following the
//! recommendation is the equilibrium.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    bayesian_ue, expected_cost, full_info_ue, path_costs, system_optimum, Policy, StateFlow,
};
use crate::network::{enumerate_paths, Graph, PathSet};
use crate::scenarios::ScenarioSet;
use crate::solver::{minimize_on_simplices, PgOptions};
use crate::twolink::{sys_opt_closed_form, user_equilibrium_closed_form, TwoLinkInstance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    /// Options of every projected-gradient solve.
    pub pg: PgOptions,
    /// Constraint tolerance used inside the solvers.
    pub obedience_tol: f64,
    /// Tolerance under which a reported policy counts as obedient.
    pub report_tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_outer: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub inner_max_iter: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            pg: PgOptions::default(),
            obedience_tol: 1e-9,
            report_tol: 1e-6,
            restarts: 16,
            seed: 0,
            max_outer: 20,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            inner_max_iter: 20_000,
        }
    }
}

/// Signal-weighted obedience residuals of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObedienceReport {
    /// `r_ij = Σ_θ w π_i (c_i − c_j)` at the obedient flow `Aπ(θ)`.
    pub residuals: Vec<Vec<f64>>,
    /// `max(0, max_{i≠j} r_ij)`.
    pub max_violation: f64,
    /// Probability that each signal is sent.
    pub marginals: Vec<f64>,
}

impl ObedienceReport {
    pub fn is_obedient(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Obedience residuals with users following their recommendation. Unused
/// signals have an all-zero row.
pub fn obedience_residuals(
    policy: &Policy,
    set: &ScenarioSet,
    paths: &PathSet,
) -> Result<ObedienceReport> {
    policy.check_against(set, paths)?;
    let n = paths.len();
    let mut residuals = vec![vec![0.0; n]; n];
    for (s, pi) in set.scenarios().iter().zip(policy.rows()) {
        let f = paths.flow_from_path_flow(pi)?;
        let c = path_costs(s, &f, paths)?;
        for (i, row) in residuals.iter_mut().enumerate() {
            let m = s.weight * pi[i];
            if m != 0.0 {
                for (rij, cj) in row.iter_mut().zip(&c) {
                    *rij += m * (c[i] - cj);
                }
            }
        }
    }
    let max_violation = residuals
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter(move |(j, _)| *j != i))
        .map(|(_, &r)| r)
        .fold(0.0, f64::max);
    Ok(ObedienceReport {
        residuals,
        max_violation,
        marginals: policy.marginals(set),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMethod {
    TwoLinkDual,
    SystemOptimumCertificate,
    Multistart,
    FullInformationFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: DesignMethod,
    /// Dual function evaluations (two-link) or inner solver iterations
    /// summed over restarts (general).
    pub iterations: usize,
    pub kkt_residual: Option<f64>,
    /// Worst obedience violation of the solver iterate before evaluation.
    pub constraint_violation: f64,
    pub multipliers: Vec<f64>,
    pub restarts: usize,
    pub feasible_restarts: usize,
    pub best_restart: Option<usize>,
    /// Equilibrium violation of the Bayesian user equilibrium used to
    /// evaluate the policy.
    pub equilibrium_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub policy: Policy,
    /// Expected travel time at the policy's Bayesian user equilibrium.
    pub expected_cost: f64,
    /// Expected travel time of the full-information system optimum.
    pub system_optimum_cost: f64,
    /// Two-link objective `Σ w[(x − 2a₂)π₁ + (a₁+a₂)π₁²]`, which differs
    /// from `expected_cost` by `Σ w (a₂ + b₂)`.
    pub algebraic_objective: Option<f64>,
    pub obedience: ObedienceReport,
    pub poa: f64,
    /// The system optimum is induced by an obedient policy, so no policy
    /// can do better.
    pub optimal: bool,
    pub diagnostics: Diagnostics,
}

/// Ratio of a policy cost to the system optimum cost.
pub fn poa_ratio(policy_cost: f64, optimum_cost: f64) -> Result<f64> {
    if optimum_cost == 0.0 {
        if policy_cost == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::ZeroOptimalCost {
                numerator: policy_cost,
            })
        }
    } else {
        Ok(policy_cost / optimum_cost)
    }
}

/// Expected cost at the policy's Bayesian user equilibrium divided by the
/// full-information system optimum cost.
pub fn price_of_anarchy(
    policy: &Policy,
    set: &ScenarioSet,
    paths: &PathSet,
    pg: &PgOptions,
) -> Result<f64> {
    let bue = bayesian_ue(policy, set, paths, pg)?;
    let numerator = expected_cost(&bue.flow, set)?;
    let denominator = expected_cost(&system_optimum(set, paths, pg)?, set)?;
    poa_ratio(numerator, denominator)
}

/// A policy evaluated at its Bayesian user equilibrium.
struct Evaluated {
    policy: Policy,
    cost: f64,
    report: ObedienceReport,
    equilibrium_violation: f64,
}

fn evaluate(policy: &Policy, set: &ScenarioSet, paths: &PathSet, pg: &PgOptions) -> Result<Evaluated> {
    let bue = bayesian_ue(policy, set, paths, pg)?;
    let merged = bue.response.merge_policy(policy)?;
    let cost = expected_cost(&bue.flow, set)?;
    let report = obedience_residuals(&merged, set, paths)?;
    Ok(Evaluated {
        policy: merged,
        cost,
        report,
        equilibrium_violation: bue.equilibrium_violation,
    })
}

fn two_link_paths() -> PathSet {
    enumerate_paths(&Graph::parallel_links(2).expect("two-node graph")).expect("two paths")
}

/// Per-scenario data of the two-link program.
struct TwoLinkProgram {
    w: Vec<f64>,
    s: Vec<f64>,
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

impl TwoLinkProgram {
    fn new(set: &ScenarioSet) -> Result<Self> {
        if set.num_links() != 2 {
            return Err(Error::NotTwoLink(format!("{} links", set.num_links())));
        }
        let mut p = Self {
            w: Vec::with_capacity(set.len()),
            s: Vec::with_capacity(set.len()),
            x: Vec::with_capacity(set.len()),
            a1: Vec::with_capacity(set.len()),
            a2: Vec::with_capacity(set.len()),
        };
        for sc in set.scenarios() {
            let s = sc.a[0] + sc.a[1];
            if sc.weight > 0.0 && s <= 0.0 {
                return Err(Error::DegenerateInstance);
            }
            p.w.push(sc.weight);
            p.s.push(s);
            p.x.push(sc.x());
            p.a1.push(sc.a[0]);
            p.a2.push(sc.a[1]);
        }
        Ok(p)
    }

    fn len(&self) -> usize {
        self.w.len()
    }

    /// Minimizer over `[0, 1]` of the Lagrangian of scenario `k`.
    #[inline]
    fn lagrangian_argmin(&self, k: usize, mu: [f64; 2]) -> f64 {
        let (x, a1, a2, s) = (self.x[k], self.a1[k], self.a2[k], self.s[k]);
        let quad = s * (1.0 + mu[0] + mu[1]);
        let lin = (x - 2.0 * a2) + mu[0] * (x - a2) + mu[1] * (x - a1 - 2.0 * a2);
        if quad > 0.0 {
            (-lin / (2.0 * quad)).clamp(0.0, 1.0)
        } else if lin < 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn argmin(&self, mu: [f64; 2]) -> Vec<f64> {
        (0..self.len()).map(|k| self.lagrangian_argmin(k, mu)).collect()
    }

    /// Obedience constraints `(g₁, g₂)` at `p`.
    fn constraints(&self, p: &[f64]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (k, &pk) in p.iter().enumerate() {
            let (w, x, a1, a2, s) = (self.w[k], self.x[k], self.a1[k], self.a2[k], self.s[k]);
            g[0] += w * ((x - a2) * pk + s * pk * pk);
            g[1] += w * (a2 - x + (x - a1 - 2.0 * a2) * pk + s * pk * pk);
        }
        g
    }

    fn constraints_at(&self, mu: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for k in 0..self.len() {
            let pk = self.lagrangian_argmin(k, mu);
            let (w, x, a1, a2, s) = (self.w[k], self.x[k], self.a1[k], self.a2[k], self.s[k]);
            g[0] += w * ((x - a2) * pk + s * pk * pk);
            g[1] += w * (a2 - x + (x - a1 - 2.0 * a2) * pk + s * pk * pk);
        }
        g
    }

    fn objective(&self, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(k, &pk)| self.w[k] * ((self.x[k] - 2.0 * self.a2[k]) * pk + self.s[k] * pk * pk))
            .sum()
    }

    /// Scale of the constraint values, used for relative tolerances.
    fn scale(&self) -> f64 {
        (0..self.len())
            .map(|k| self.w[k] * (self.x[k].abs() + self.a1[k] + self.a2[k]))
            .sum::<f64>()
            .max(f64::MIN_POSITIVE)
    }

    /// Projected-gradient residual of the Lagrangian on the box, plus
    /// complementary slackness and primal infeasibility.
    fn kkt_residual(&self, p: &[f64], mu: [f64; 2]) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, &pk) in p.iter().enumerate() {
            let (w, x, a1, a2, s) = (self.w[k], self.x[k], self.a1[k], self.a2[k], self.s[k]);
            let grad = w
                * ((x - 2.0 * a2 + 2.0 * s * pk)
                    + mu[0] * (x - a2 + 2.0 * s * pk)
                    + mu[1] * (x - a1 - 2.0 * a2 + 2.0 * s * pk));
            worst = worst.max((pk - (pk - grad).clamp(0.0, 1.0)).abs());
        }
        let g = self.constraints(p);
        for k in 0..2 {
            worst = worst.max(g[k].max(0.0)).max((mu[k] * g[k]).abs());
        }
        worst
    }
}

const MULTIPLIER_CAP: f64 = 1e16;

/// Smallest `μ ≥ 0` with `φ(μ) ≤ 0` for a continuous nonincreasing `φ`,
/// located to within `f_tol` of the root (Illinois regula falsi on a
/// bracket found by expansion). Returns the feasible end of the bracket and
/// the number of evaluations.
fn decreasing_root<F: FnMut(f64) -> f64>(mut phi: F, f_tol: f64) -> (f64, usize) {
    let mut evals = 1;
    let f0 = phi(0.0);
    if f0 <= 0.0 {
        return (0.0, evals);
    }
    let (mut lo, mut f_lo) = (0.0, f0);
    let mut hi = 1.0;
    let mut f_hi = phi(hi);
    evals += 1;
    while f_hi > 0.0 {
        if hi >= MULTIPLIER_CAP {
            return (hi, evals);
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 8.0;
        f_hi = phi(hi);
        evals += 1;
    }
    let mut side = 0i8;
    for _ in 0..400 {
        if f_hi >= -f_tol || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mut mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(mid > lo && mid < hi) {
            mid = 0.5 * (lo + hi);
        }
        let f_mid = phi(mid);
        evals += 1;
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            f_hi = f_mid;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    (hi, evals)
}

/// Optimal obedient policy for two parallel affine links.
///
/// For fixed multipliers `μ` the Lagrangian separates over scenarios and is
/// minimized in closed form by clamping the stationary point of a scalar
/// quadratic. The multipliers are found by checking, in order, `μ = 0`, a
/// single active constraint, and both constraints active, each through
/// monotone one-dimensional root finding on the concave dual.
pub fn design_two_link(set: &ScenarioSet, opts: &DesignOptions) -> Result<DesignResult> {
    let prog = TwoLinkProgram::new(set)?;
    let paths = two_link_paths();
    let f_tol = 1e-15 * prog.scale();

    // The full-information user equilibrium is obedient, so the program is
    // feasible.
    let ue: Vec<f64> = (0..prog.len())
        .map(|k| {
            if prog.s[k] > 0.0 {
                user_equilibrium_closed_form(&TwoLinkInstance {
                    a1: prog.a1[k],
                    a2: prog.a2[k],
                    x: prog.x[k],
                })
            } else if prog.x[k] < 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let ue_g = prog.constraints(&ue);
    if ue_g.iter().any(|&g| g > opts.obedience_tol) {
        return Err(Error::Infeasible);
    }

    let mut evals = 1;
    let g0 = prog.constraints_at([0.0, 0.0]);
    // At a degenerate optimum both constraints vanish together, so the
    // inactive one may come out a rounding error above zero.
    let slack = 0.5 * opts.obedience_tol;
    let feasible = |g: [f64; 2]| g[0] <= slack && g[1] <= slack;
    let mut mu = [0.0, 0.0];
    if !feasible(g0) {
        let mut found = false;
        for active in [0usize, 1] {
            if g0[active] <= 0.0 {
                continue;
            }
            let (m, e) = decreasing_root(
                |t| {
                    let mut trial = [0.0, 0.0];
                    trial[active] = t;
                    prog.constraints_at(trial)[active]
                },
                f_tol,
            );
            evals += e;
            let mut trial = [0.0, 0.0];
            trial[active] = m;
            evals += 1;
            if feasible(prog.constraints_at(trial)) {
                mu = trial;
                found = true;
                break;
            }
        }
        if !found {
            let inner = |m1: f64, evals: &mut usize| {
                let (m2, e) = decreasing_root(|t| prog.constraints_at([m1, t])[1], f_tol);
                *evals += e;
                m2
            };
            let mut inner_evals = 0;
            let (m1, e) = decreasing_root(
                |t| {
                    let m2 = inner(t, &mut inner_evals);
                    prog.constraints_at([t, m2])[0]
                },
                f_tol,
            );
            let m2 = inner(m1, &mut inner_evals);
            evals += e + inner_evals;
            mu = [m1, m2];
        }
    }

    let p = prog.argmin(mu);
    let g = prog.constraints(&p);
    let violation = g[0].max(g[1]).max(0.0);
    if violation > opts.obedience_tol {
        return Err(Error::SolverDivergence {
            iterations: evals,
            residual: violation,
        });
    }
    let kkt = prog.kkt_residual(&p, mu);

    let policy = Policy::new(p.iter().map(|&pk| vec![pk, 1.0 - pk]).collect())?;
    let so_cost: f64 = set
        .scenarios()
        .iter()
        .filter(|s| s.weight > 0.0)
        .map(|s| {
            let inst = TwoLinkInstance::from_scenario(s)?;
            let f1 = sys_opt_closed_form(&inst);
            Ok(s.weight * (inst.reduced_cost(f1) + s.a[1] + s.b[1]))
        })
        .sum::<Result<f64>>()?;

    let evaluated = evaluate(&policy, set, &paths, &opts.pg)?;
    let poa = poa_ratio(evaluated.cost, so_cost)?;
    Ok(DesignResult {
        algebraic_objective: Some(prog.objective(&p)),
        policy: evaluated.policy,
        expected_cost: evaluated.cost,
        system_optimum_cost: so_cost,
        obedience: evaluated.report,
        poa,
        optimal: mu == [0.0, 0.0],
        diagnostics: Diagnostics {
            method: DesignMethod::TwoLinkDual,
            iterations: evals,
            kkt_residual: Some(kkt),
            constraint_violation: violation,
            multipliers: mu.to_vec(),
            restarts: 0,
            feasible_restarts: 0,
            best_restart: None,
            equilibrium_violation: evaluated.equilibrium_violation,
        },
    })
}

/// Best obedient policy found by multistart search on any topology.
///
/// If the system-optimum path flow is itself obedient it is returned with
/// `optimal = true`. Otherwise `restarts` augmented-Lagrangian runs from
/// Dirichlet-random policies compete with the full-information user
/// equilibrium policy; the lowest equilibrium cost wins, ties going to the
/// lowest restart index (the fallback ranks last).
pub fn design_general(set: &ScenarioSet, paths: &PathSet, opts: &DesignOptions) -> Result<DesignResult> {
    let so = system_optimum(set, paths, &opts.pg)?;
    let so_cost = expected_cost(&so, set)?;
    let so_policy = Policy::from_state_flow(&so)?;
    if obedience_residuals(&so_policy, set, paths)?.is_obedient(opts.report_tol) {
        let so_eval = evaluate(&so_policy, set, paths, &opts.pg)?;
        let poa = poa_ratio(so_eval.cost, so_cost)?;
        return Ok(DesignResult {
            policy: so_eval.policy,
            expected_cost: so_eval.cost,
            system_optimum_cost: so_cost,
            algebraic_objective: None,
            poa,
            optimal: true,
            diagnostics: Diagnostics {
                method: DesignMethod::SystemOptimumCertificate,
                iterations: 0,
                kkt_residual: None,
                constraint_violation: so_eval.report.max_violation,
                multipliers: Vec::new(),
                restarts: 0,
                feasible_restarts: 0,
                best_restart: None,
                equilibrium_violation: so_eval.equilibrium_violation,
            },
            obedience: so_eval.report,
        });
    }

    let ue = full_info_ue(set, paths, &opts.pg)?;
    let ue_cost = expected_cost(&ue, set)?;
    let scale = if ue_cost > 0.0 { ue_cost } else { 1.0 };

    let runs: Vec<(usize, Option<Evaluated>, usize, f64)> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(r as u64 + 1);
            let start = dirichlet_policy(&mut rng, set.len(), paths.len());
            let (pi, iterations, violation) = augmented_lagrangian(set, paths, start, opts, scale);
            let evaluated = Policy::new(pi.chunks(paths.len()).map(<[f64]>::to_vec).collect())
                .and_then(|p| evaluate(&p, set, paths, &opts.pg))
                .ok();
            (r, evaluated, iterations, violation)
        })
        .collect();

    let total_iterations: usize = runs.iter().map(|r| r.2).sum();
    let mut candidates: Vec<(usize, Evaluated, f64)> = runs
        .into_iter()
        .filter_map(|(r, e, _, v)| e.map(|e| (r, e, v)))
        .filter(|(_, e, _)| e.report.is_obedient(opts.report_tol))
        .collect();
    let feasible_restarts = candidates.len();
    if let Ok(e) = Policy::from_state_flow(&ue).and_then(|p| evaluate(&p, set, paths, &opts.pg)) {
        if e.report.is_obedient(opts.report_tol) {
            candidates.push((opts.restarts, e, 0.0));
        }
    }

    let mut best: Option<(usize, Evaluated, f64)> = None;
    for cand in candidates {
        let better = match &best {
            None => true,
            Some((_, b, _)) => cand.1.cost < b.cost - 1e-12 * b.cost.abs().max(1.0),
        };
        if better {
            best = Some(cand);
        }
    }
    let (index, chosen, violation) = best.ok_or(Error::NoFeasibleFound)?;
    let fallback = index == opts.restarts;
    let poa = poa_ratio(chosen.cost, so_cost)?;
    Ok(DesignResult {
        policy: chosen.policy,
        expected_cost: chosen.cost,
        system_optimum_cost: so_cost,
        algebraic_objective: None,
        poa,
        optimal: poa <= 1.0 + 1e-9,
        diagnostics: Diagnostics {
            method: if fallback {
                DesignMethod::FullInformationFallback
            } else {
                DesignMethod::Multistart
            },
            iterations: total_iterations,
            kkt_residual: None,
            constraint_violation: violation,
            multipliers: Vec::new(),
            restarts: opts.restarts,
            feasible_restarts,
            best_restart: (!fallback).then_some(index),
            equilibrium_violation: chosen.equilibrium_violation,
        },
        obedience: chosen.report,
    })
}

fn dirichlet_policy(rng: &mut ChaCha8Rng, scenarios: usize, paths: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(scenarios * paths);
    for _ in 0..scenarios {
        let row: Vec<f64> = (0..paths).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = row.iter().sum();
        out.extend(row.into_iter().map(|v: f64| v / total));
    }
    out
}

/// Per-scenario quantities at the obedient flow `Aπ(θ)`.
struct ScenarioTerms {
    /// Path costs.
    cost: Vec<f64>,
    /// Marginal path costs `Σ_e A_ei (2 a_e f_e + b_e)`.
    marginal: Vec<f64>,
    /// `M_ik = Σ_e A_ei A_ek a_e`, the Jacobian of path costs.
    jacobian: Vec<f64>,
    total: f64,
}

fn scenario_terms(s: &crate::scenarios::Scenario, pi: &[f64], paths: &PathSet) -> ScenarioTerms {
    let n = paths.len();
    let mut f = vec![0.0; paths.num_links()];
    paths.accumulate_link_flow(pi, &mut f);
    let delays: Vec<f64> = f.iter().enumerate().map(|(e, &fe)| s.delay(e, fe)).collect();
    let marg: Vec<f64> = f
        .iter()
        .enumerate()
        .map(|(e, &fe)| 2.0 * s.a[e] * fe + s.b[e])
        .collect();
    let mut cost = vec![0.0; n];
    let mut marginal = vec![0.0; n];
    paths.sum_along_paths(&delays, &mut cost);
    paths.sum_along_paths(&marg, &mut marginal);
    let mut jacobian = vec![0.0; n * n];
    for (i, pi_path) in paths.paths().iter().enumerate() {
        for (k, pk_path) in paths.paths().iter().enumerate() {
            jacobian[i * n + k] = pi_path
                .iter()
                .filter(|e| pk_path.contains(e))
                .map(|&e| s.a[e])
                .sum();
        }
    }
    ScenarioTerms {
        cost,
        marginal,
        jacobian,
        total: s.total_cost(&f),
    }
}

/// Augmented-Lagrangian value and gradient with costs and constraints
/// divided by `scale`.
fn al_value_grad(
    set: &ScenarioSet,
    paths: &PathSet,
    x: &[f64],
    grad: &mut [f64],
    lambda: &[f64],
    rho: f64,
    scale: f64,
) -> f64 {
    let n = paths.len();
    let terms: Vec<ScenarioTerms> = set
        .scenarios()
        .iter()
        .zip(x.chunks(n))
        .map(|(s, pi)| scenario_terms(s, pi, paths))
        .collect();

    let mut residual = vec![0.0; n * n];
    let mut cost = 0.0;
    for ((s, pi), t) in set.scenarios().iter().zip(x.chunks(n)).zip(&terms) {
        cost += s.weight * t.total;
        for i in 0..n {
            let m = s.weight * pi[i];
            if m != 0.0 {
                for j in 0..n {
                    residual[i * n + j] += m * (t.cost[i] - t.cost[j]);
                }
            }
        }
    }

    let mut value = cost / scale;
    let mut weight = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let idx = i * n + j;
            let shifted = (residual[idx] / scale + lambda[idx] / rho).max(0.0);
            value += 0.5 * rho * (shifted * shifted - (lambda[idx] / rho).powi(2));
            weight[idx] = rho * shifted / scale;
        }
    }

    let row_weight: Vec<f64> = (0..n).map(|i| weight[i * n..(i + 1) * n].iter().sum()).collect();
    for ((s, pi), (t, g)) in set
        .scenarios()
        .iter()
        .zip(x.chunks(n))
        .zip(terms.iter().zip(grad.chunks_mut(n)))
    {
        // v_j = Σ_i t_ij π_i
        let v: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| weight[i * n + j] * pi[i]).sum())
            .collect();
        for k in 0..n {
            let mut pen: f64 = (0..n)
                .map(|j| weight[k * n + j] * (t.cost[k] - t.cost[j]))
                .sum();
            for i in 0..n {
                pen += pi[i] * row_weight[i] * t.jacobian[i * n + k];
                pen -= v[i] * t.jacobian[i * n + k];
            }
            g[k] = s.weight * (t.marginal[k] / scale + pen);
        }
    }
    value
}

/// Returns the final iterate, the summed inner iterations and the final
/// normalized obedience violation.
fn augmented_lagrangian(
    set: &ScenarioSet,
    paths: &PathSet,
    start: Vec<f64>,
    opts: &DesignOptions,
    scale: f64,
) -> (Vec<f64>, usize, f64) {
    let n = paths.len();
    let mut x = start;
    let mut lambda = vec![0.0; n * n];
    let mut rho = opts.initial_penalty;
    let mut previous = f64::INFINITY;
    let mut iterations = 0;
    let mut violation = f64::INFINITY;
    let inner = PgOptions {
        tol: opts.pg.tol,
        max_iter: opts.inner_max_iter,
    };
    for _ in 0..opts.max_outer {
        let out = minimize_on_simplices(
            |y, g| al_value_grad(set, paths, y, g, &lambda, rho, scale),
            x,
            n,
            &inner,
        );
        iterations += out.iterations;
        x = out.x;
        let policy = Policy::new(x.chunks(n).map(<[f64]>::to_vec).collect());
        let Ok(report) = policy.and_then(|p| obedience_residuals(&p, set, paths)) else {
            break;
        };
        violation = report.max_violation / scale;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let idx = i * n + j;
                    lambda[idx] = (lambda[idx] + rho * report.residuals[i][j] / scale).max(0.0);
                }
            }
        }
        if violation <= opts.obedience_tol && out.converged {
            break;
        }
        if violation > 0.25 * previous {
            rho *= opts.penalty_growth;
        }
        previous = violation;
    }
    (x, iterations, violation)
}

/// Obedient flow `Aπ(θ)` of a design result.
pub fn obedient_flow(result: &DesignResult, paths: &PathSet) -> Result<StateFlow> {
    StateFlow::obedient(&result.policy, paths)
}
