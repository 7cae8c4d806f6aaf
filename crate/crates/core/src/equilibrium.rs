//! Full-information and Bayesian equilibria.
//!
//! Under a recommendation policy `π`, users who receive recommendation `i`
//! take path `j` with probability `y_ij`. The resulting flow in state `θ` is
//! `A yᵀ π(θ)`. Bayesian user equilibria are exactly the minimizers of the
//! weighted potential
//!
//! ```text
//! Φ_π(y) = Σ_θ w(θ) Σ_e ∫₀^{(A yᵀ π(θ))_e} τ_e(s, θ) ds
//! ```
//!
//! over row-stochastic `y`, with `∂Φ/∂y_ij = Σ_θ w(θ) π_i(θ) c_j(θ)`. For
//! affine delays `Φ_π` is a convex quadratic and is minimized by projected
//! gradient (see [`crate::solver`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::network::{check_len, PathSet};
use crate::scenarios::{Scenario, ScenarioSet};
use crate::solver::{minimize_on_simplices, minimize_on_simplices_scaled, PgOptions};
use crate::{Error, Result};

/// Row sums of policies and response matrices must be 1 within this.
pub const SIMPLEX_TOL: f64 = 1e-12;

fn check_simplex_row(row: &[f64], what: &str, index: usize) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.iter().any(|&v| !v.is_finite() || v < 0.0) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidPolicy(format!(
            "{what} row {index} is not a probability vector: {row:?}"
        )));
    }
    Ok(())
}

/// Per-scenario distribution over paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    rows: Vec<Vec<f64>>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidPolicy("no scenarios".into()))?;
        for (k, row) in rows.iter().enumerate() {
            check_len("policy row", width, row.len())?;
            check_simplex_row(row, "policy", k)?;
        }
        Ok(Self { rows })
    }

    /// The same distribution in every scenario.
    pub fn constant(distribution: &[f64], num_scenarios: usize) -> Result<Self> {
        Self::new(vec![distribution.to_vec(); num_scenarios])
    }

    /// Uniform recommendations, independent of the state.
    pub fn uninformative(num_scenarios: usize, num_paths: usize) -> Result<Self> {
        Self::constant(&vec![1.0 / num_paths as f64; num_paths], num_scenarios)
    }

    /// Recommends each path with the probability it is used in `flow`.
    pub fn from_state_flow(flow: &StateFlow) -> Result<Self> {
        Self::new(flow.path_flows.clone())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn num_scenarios(&self) -> usize {
        self.rows.len()
    }

    pub fn num_paths(&self) -> usize {
        self.rows[0].len()
    }

    /// Probability `Σ_θ w(θ) π_i(θ)` that signal `i` is sent.
    pub fn marginals(&self, set: &ScenarioSet) -> Vec<f64> {
        let mut m = vec![0.0; self.num_paths()];
        for (s, row) in set.scenarios().iter().zip(&self.rows) {
            for (mi, &p) in m.iter_mut().zip(row) {
                *mi += s.weight * p;
            }
        }
        m
    }

    pub(crate) fn check_against(&self, set: &ScenarioSet, paths: &PathSet) -> Result<()> {
        check_len("policy scenarios", set.len(), self.rows.len())?;
        check_len("policy paths", paths.len(), self.num_paths())?;
        check_len("scenario links", paths.num_links(), set.num_links())
    }
}

/// Row-stochastic matrix: `y_ij` is the fraction of recipients of
/// recommendation `i` who take path `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMatrix {
    rows: Vec<Vec<f64>>,
}

impl ResponseMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            check_len("response row", n, row.len())?;
            check_simplex_row(row, "response", i)?;
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn flat(&self) -> Vec<f64> {
        self.rows.concat()
    }

    fn from_flat(flat: &[f64], n: usize) -> Self {
        Self {
            rows: flat.chunks(n).map(<[f64]>::to_vec).collect(),
        }
    }

    /// Merged recommendation policy `yᵀ π(θ)`: recommends to every user the
    /// path they would take anyway.
    pub fn merge_policy(&self, policy: &Policy) -> Result<Policy> {
        check_len("policy paths", self.len(), policy.num_paths())?;
        let rows = policy
            .rows()
            .iter()
            .map(|pi| {
                let mut q = vec![0.0; self.len()];
                path_flow_into(pi, &self.rows, &mut q);
                renormalize(&mut q);
                q
            })
            .collect();
        Policy::new(rows)
    }
}

fn renormalize(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if s > 0.0 {
        row.iter_mut().for_each(|v| *v /= s);
    }
}

/// Per-scenario path and link flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFlow {
    pub path_flows: Vec<Vec<f64>>,
    pub link_flows: Vec<Vec<f64>>,
    /// Worst optimality or equilibrium residual of the solve that produced
    /// the flow (zero for flows built directly from a policy).
    pub residual: f64,
}

impl StateFlow {
    /// Flow obtained when every user follows the recommendation: `A π(θ)`.
    pub fn obedient(policy: &Policy, paths: &PathSet) -> Result<Self> {
        let link_flows = policy
            .rows()
            .iter()
            .map(|z| paths.flow_from_path_flow(z))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            path_flows: policy.rows().to_vec(),
            link_flows,
            residual: 0.0,
        })
    }
}

/// Path costs `c_i = Σ_e A_ei (a_e f_e + b_e)`.
pub fn path_costs(scenario: &Scenario, link_flow: &[f64], paths: &PathSet) -> Result<Vec<f64>> {
    check_len("link flow", paths.num_links(), link_flow.len())?;
    check_len("scenario links", paths.num_links(), scenario.num_links())?;
    let delays: Vec<f64> = link_flow
        .iter()
        .enumerate()
        .map(|(e, &f)| scenario.delay(e, f))
        .collect();
    let mut c = vec![0.0; paths.len()];
    paths.sum_along_paths(&delays, &mut c);
    Ok(c)
}

/// Which per-scenario problem to solve.
#[derive(Clone, Copy)]
enum PerScenario {
    /// Total cost `Σ f (a f + b)`; gradient is the marginal path cost.
    SystemOptimum,
    /// Beckmann potential `Σ ∫τ`; gradient is the path cost.
    UserEquilibrium,
}

fn solve_per_scenario(
    set: &ScenarioSet,
    paths: &PathSet,
    opts: &PgOptions,
    kind: PerScenario,
) -> Result<StateFlow> {
    check_len("scenario links", paths.num_links(), set.num_links())?;
    let n_paths = paths.len();
    let slope = match kind {
        PerScenario::SystemOptimum => 2.0,
        PerScenario::UserEquilibrium => 1.0,
    };
    let solved: Vec<_> = set
        .scenarios()
        .par_iter()
        .map(|s| {
            let mut f = vec![0.0; paths.num_links()];
            let mut marginal = vec![0.0; paths.num_links()];
            let out = minimize_on_simplices(
                |z, g| {
                    f.iter_mut().for_each(|v| *v = 0.0);
                    paths.accumulate_link_flow(z, &mut f);
                    let mut value = 0.0;
                    for e in 0..f.len() {
                        value += match kind {
                            PerScenario::SystemOptimum => f[e] * s.delay(e, f[e]),
                            PerScenario::UserEquilibrium => s.delay_integral(e, f[e]),
                        };
                        marginal[e] = slope * s.a[e] * f[e] + s.b[e];
                    }
                    paths.sum_along_paths(&marginal, g);
                    value
                },
                vec![1.0 / n_paths as f64; n_paths],
                n_paths,
                opts,
            );
            let link = paths.flow_from_path_flow(&out.x).expect("dimension checked");
            let gap = wardrop_gap(s, &out.x, &link, paths, slope);
            (out, link, gap)
        })
        .collect();

    let mut flow = StateFlow {
        path_flows: Vec::with_capacity(set.len()),
        link_flows: Vec::with_capacity(set.len()),
        residual: 0.0,
    };
    for (out, link, gap) in solved {
        if !out.converged {
            return Err(Error::SolverDivergence {
                iterations: out.iterations,
                residual: out.residual,
            });
        }
        flow.residual = flow.residual.max(gap);
        flow.path_flows.push(out.x);
        flow.link_flows.push(link);
    }
    Ok(flow)
}

/// `max_{i: z_i > 0} c_i − min_j c_j` with costs built from `slope · a f + b`.
fn wardrop_gap(s: &Scenario, z: &[f64], link: &[f64], paths: &PathSet, slope: f64) -> f64 {
    let per_link: Vec<f64> = link
        .iter()
        .enumerate()
        .map(|(e, &f)| slope * s.a[e] * f + s.b[e])
        .collect();
    let mut c = vec![0.0; paths.len()];
    paths.sum_along_paths(&per_link, &mut c);
    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
    z.iter()
        .zip(&c)
        .filter(|(&zi, _)| zi > 0.0)
        .map(|(_, &ci)| ci - min)
        .fold(0.0, f64::max)
}

/// Full-information system optimum, solved independently in every state.
/// `residual` is the worst marginal-cost gap over used paths.
pub fn system_optimum(set: &ScenarioSet, paths: &PathSet, opts: &PgOptions) -> Result<StateFlow> {
    solve_per_scenario(set, paths, opts, PerScenario::SystemOptimum)
}

/// Full-information user equilibrium. `residual` is the worst Wardrop gap
/// over used paths.
pub fn full_info_ue(set: &ScenarioSet, paths: &PathSet, opts: &PgOptions) -> Result<StateFlow> {
    solve_per_scenario(set, paths, opts, PerScenario::UserEquilibrium)
}

/// `q = yᵀ π`.
fn path_flow_into(pi: &[f64], y: &[Vec<f64>], q: &mut [f64]) {
    q.iter_mut().for_each(|v| *v = 0.0);
    for (pi_i, row) in pi.iter().zip(y) {
        if *pi_i != 0.0 {
            for (qj, yij) in q.iter_mut().zip(row) {
                *qj += pi_i * yij;
            }
        }
    }
}

/// Value of `Φ_π` at a flattened response matrix; accumulates the gradient
/// into `grad` when given.
fn potential_flat(
    policy: &Policy,
    y: &[f64],
    set: &ScenarioSet,
    paths: &PathSet,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let n = paths.len();
    let rows: Vec<&[f64]> = y.chunks(n).collect();
    let mut q = vec![0.0; n];
    let mut f = vec![0.0; paths.num_links()];
    let mut delays = vec![0.0; paths.num_links()];
    let mut c = vec![0.0; n];
    if let Some(g) = grad.as_deref_mut() {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut value = 0.0;
    for (s, pi) in set.scenarios().iter().zip(policy.rows()) {
        q.iter_mut().for_each(|v| *v = 0.0);
        for (pi_i, row) in pi.iter().zip(&rows) {
            if *pi_i != 0.0 {
                for (qj, yij) in q.iter_mut().zip(row.iter()) {
                    *qj += pi_i * yij;
                }
            }
        }
        f.iter_mut().for_each(|v| *v = 0.0);
        paths.accumulate_link_flow(&q, &mut f);
        for e in 0..f.len() {
            value += s.weight * s.delay_integral(e, f[e]);
            delays[e] = s.delay(e, f[e]);
        }
        if let Some(g) = grad.as_deref_mut() {
            paths.sum_along_paths(&delays, &mut c);
            for (i, &pi_i) in pi.iter().enumerate() {
                let m = s.weight * pi_i;
                if m != 0.0 {
                    for (gij, cj) in g[i * n..(i + 1) * n].iter_mut().zip(&c) {
                        *gij += m * cj;
                    }
                }
            }
        }
    }
    value
}

fn check_response(y: &ResponseMatrix, paths: &PathSet) -> Result<()> {
    check_len("response matrix", paths.len(), y.len())
}

/// The weighted potential `Φ_π(y)`.
pub fn potential(
    policy: &Policy,
    y: &ResponseMatrix,
    set: &ScenarioSet,
    paths: &PathSet,
) -> Result<f64> {
    policy.check_against(set, paths)?;
    check_response(y, paths)?;
    Ok(potential_flat(policy, &y.flat(), set, paths, None))
}

/// `Φ_π` evaluated at any square matrix, not necessarily row-stochastic.
/// The potential is a polynomial in `y`, so this is its natural extension
/// and agrees with [`potential`] on response matrices.
pub fn potential_extended(
    policy: &Policy,
    y: &[Vec<f64>],
    set: &ScenarioSet,
    paths: &PathSet,
) -> Result<f64> {
    policy.check_against(set, paths)?;
    check_len("response matrix", paths.len(), y.len())?;
    for row in y {
        check_len("response row", paths.len(), row.len())?;
    }
    Ok(potential_flat(policy, &y.concat(), set, paths, None))
}

/// `∂Φ_π/∂y_ij = Σ_θ w(θ) π_i(θ) c_j(A yᵀ π(θ), θ)`.
pub fn potential_gradient(
    policy: &Policy,
    y: &ResponseMatrix,
    set: &ScenarioSet,
    paths: &PathSet,
) -> Result<Vec<Vec<f64>>> {
    policy.check_against(set, paths)?;
    check_response(y, paths)?;
    let n = paths.len();
    let mut g = vec![0.0; n * n];
    potential_flat(policy, &y.flat(), set, paths, Some(&mut g));
    Ok(g.chunks(n).map(<[f64]>::to_vec).collect())
}

/// Bayesian user equilibrium of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesianEquilibrium {
    pub response: ResponseMatrix,
    /// Flows `A yᵀ π(θ)`; `residual` holds the equilibrium violation.
    pub flow: StateFlow,
    pub potential: f64,
    /// Projected-gradient residual of the potential minimization.
    pub solver_residual: f64,
    /// `max E_i[c_j] − min_k E_i[c_k]` over used pairs `(i, j)`.
    pub equilibrium_violation: f64,
    pub iterations: usize,
}

/// Solves for the Bayesian user equilibrium starting from `y = I`.
pub fn bayesian_ue(
    policy: &Policy,
    set: &ScenarioSet,
    paths: &PathSet,
    opts: &PgOptions,
) -> Result<BayesianEquilibrium> {
    bayesian_ue_from(policy, set, paths, &ResponseMatrix::identity(paths.len()), opts)
}

/// Solves for the Bayesian user equilibrium from a given response matrix.
pub fn bayesian_ue_from(
    policy: &Policy,
    set: &ScenarioSet,
    paths: &PathSet,
    start: &ResponseMatrix,
    opts: &PgOptions,
) -> Result<BayesianEquilibrium> {
    policy.check_against(set, paths)?;
    check_response(start, paths)?;
    let n = paths.len();
    // Row i of the gradient carries the factor m_i; measuring it per unit
    // of marginal makes the tolerance a bound on posterior cost gaps.
    let marginals = policy.marginals(set);
    let out = minimize_on_simplices_scaled(
        |y, g| potential_flat(policy, y, set, paths, Some(g)),
        start.flat(),
        n,
        &marginals,
        opts,
    );
    if !out.converged {
        return Err(Error::SolverDivergence {
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    let mut y = out.x;
    for row in y.chunks_mut(n) {
        snap_residue(row);
    }
    let response = ResponseMatrix::from_flat(&y, n);
    let mut grad = vec![0.0; n * n];
    let value = potential_flat(policy, &y, set, paths, Some(&mut grad));
    let violation = equilibrium_violation(&response, &grad, &marginals);

    let mut q = vec![0.0; n];
    let mut path_flows = Vec::with_capacity(set.len());
    let mut link_flows = Vec::with_capacity(set.len());
    for pi in policy.rows() {
        path_flow_into(pi, response.rows(), &mut q);
        link_flows.push(paths.flow_from_path_flow(&q)?);
        path_flows.push(q.clone());
    }
    Ok(BayesianEquilibrium {
        response,
        flow: StateFlow {
            path_flows,
            link_flows,
            residual: violation,
        },
        potential: value,
        solver_residual: out.residual,
        equilibrium_violation: violation,
        iterations: out.iterations,
    })
}

/// Zeroes entries left over from rounding in the simplex projection.
fn snap_residue(row: &mut [f64]) {
    const RESIDUE: f64 = 1e-12;
    if row.iter().all(|&v| v <= RESIDUE) {
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        if *v <= RESIDUE {
            *v = 0.0;
        }
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

/// `E_i[c_j] = (∂Φ/∂y_ij) / m_i` for signals with positive marginal `m_i`.
fn equilibrium_violation(y: &ResponseMatrix, grad: &[f64], marginals: &[f64]) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for (i, row) in y.rows().iter().enumerate() {
        let m = marginals[i];
        if m <= 0.0 {
            continue;
        }
        let g = &grad[i * n..(i + 1) * n];
        let min = g.iter().copied().fold(f64::INFINITY, f64::min) / m;
        for (j, &yij) in row.iter().enumerate() {
            if yij > 0.0 {
                worst = worst.max(g[j] / m - min);
            }
        }
    }
    worst
}

/// Posterior belief after receiving one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub set: ScenarioSet,
    /// Probability `Σ_ω π_i(ω) w(ω)` that the signal is sent.
    pub marginal: f64,
}

/// Bayes update `w_i(θ) ∝ π_i(θ) w(θ)` for recipients of `signal`.
pub fn posterior(policy: &Policy, set: &ScenarioSet, signal: usize) -> Result<Posterior> {
    check_len("policy scenarios", set.len(), policy.num_scenarios())?;
    if signal >= policy.num_paths() {
        return Err(Error::DimensionMismatch {
            context: "signal index",
            expected: policy.num_paths(),
            found: signal,
        });
    }
    let likelihood: Vec<f64> = policy.rows().iter().map(|r| r[signal]).collect();
    let weighted: Vec<f64> = set
        .weights()
        .zip(&likelihood)
        .map(|(w, l)| w * l)
        .collect();
    let marginal: f64 = weighted.iter().sum();
    if marginal.is_nan() || marginal <= 0.0 {
        return Err(Error::DegenerateSignal { signal });
    }
    // A likelihood that is constant on the support leaves the prior as is.
    let mut on_support = set
        .weights()
        .zip(&likelihood)
        .filter(|(w, _)| *w > 0.0)
        .map(|(_, &l)| l);
    let first = on_support.next().unwrap_or(0.0);
    let posterior_set = if on_support.all(|l| l == first) {
        set.clone()
    } else {
        set.reweighted(&weighted)?
    };
    Ok(Posterior {
        set: posterior_set,
        marginal,
    })
}

/// `Σ_θ w(θ) Σ_e f_e(θ)(a_e f_e(θ) + b_e)`.
pub fn expected_cost(flow: &StateFlow, set: &ScenarioSet) -> Result<f64> {
    check_len("flow scenarios", set.len(), flow.link_flows.len())?;
    let mut total = 0.0;
    for (s, f) in set.scenarios().iter().zip(&flow.link_flows) {
        check_len("link flow", s.num_links(), f.len())?;
        total += s.weight * s.total_cost(f);
    }
    Ok(total)
}
