//! Command dispatch.

use infodesign::design::{design_general, design_two_link, poa_ratio, DesignOptions, DesignResult};
use infodesign::equilibrium::{
    bayesian_ue, expected_cost, full_info_ue, system_optimum, Policy, StateFlow,
};
use infodesign::network::{enumerate_paths_with_cap, Graph, PathSet};
use infodesign::scenarios::ScenarioSet;
use infodesign::twolink::{
    thm1_check, thm2_check, thm3_polynomials, uniform_obedience_exact, x_moments, TheoremVerdict,
    UniformObedience,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    Command, DesignChoice, GraphSpec, PolicyConfig, RunConfig, ScenarioConfig, SweepPoint, SweepSpec,
};
use crate::error::CliError;
use crate::output::{Cell, Table};

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    pub result: Outcome,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    Flow(FlowOutcome),
    Bayesian(BayesianOutcome),
    Design(DesignOutcome),
    Poa(PoaOutcome),
    Theorems(TheoremOutcome),
    Sweep(SweepOutcome),
}

#[derive(Debug, Serialize)]
pub struct FlowOutcome {
    pub expected_cost: f64,
    /// Worst Wardrop (or marginal-cost) gap over scenarios.
    pub residual: f64,
    pub paths: Vec<Vec<String>>,
    pub path_flows: Vec<Vec<f64>>,
    pub link_flows: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct BayesianOutcome {
    pub expected_cost: f64,
    pub potential: f64,
    pub equilibrium_violation: f64,
    pub solver_residual: f64,
    pub iterations: usize,
    pub paths: Vec<Vec<String>>,
    pub policy: Vec<Vec<f64>>,
    pub response: Vec<Vec<f64>>,
    pub path_flows: Vec<Vec<f64>>,
    pub link_flows: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct DesignOutcome {
    pub paths: Vec<Vec<String>>,
    #[serde(flatten)]
    pub design: DesignResult,
}

#[derive(Debug, Serialize)]
pub struct PoaOutcome {
    pub poa: f64,
    pub policy_cost: f64,
    pub system_optimum_cost: f64,
    pub full_information_cost: f64,
    pub full_information_poa: f64,
    pub equilibrium_violation: f64,
    pub policy: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct TheoremOutcome {
    pub x_mean: f64,
    pub x_variance: f64,
    pub thm1: TheoremVerdict,
    /// Present when every scenario has the same slopes.
    pub thm2: Option<TheoremVerdict>,
    /// Present for a uniform-grid scenario set.
    pub uniform: Option<UniformOutcome>,
}

#[derive(Debug, Serialize)]
pub struct UniformOutcome {
    pub g_poly: f64,
    pub h_poly: f64,
    pub obedience: UniformObedience,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepRow {
    pub a1: f64,
    pub a2: f64,
    pub g_poly: f64,
    pub h_poly: f64,
    pub lhs1: f64,
    pub lhs2: f64,
    pub poa: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepSummary {
    pub points: usize,
    pub max_g_poly: Option<f64>,
    pub max_h_poly: Option<f64>,
    pub max_lhs1: Option<f64>,
    pub max_lhs2: Option<f64>,
    pub max_poa: Option<f64>,
    /// Every polynomial and obedience value is `≤ 0`.
    pub all_nonpositive: bool,
}

#[derive(Debug, Serialize)]
pub struct SweepOutcome {
    pub point: SweepPoint,
    pub summary: SweepSummary,
    pub rows: Vec<SweepRow>,
}

struct Problem {
    set: ScenarioSet,
    paths: PathSet,
    graph: Graph,
}

impl Problem {
    fn path_labels(&self) -> Vec<Vec<String>> {
        let edges = self.graph.edges();
        self.paths
            .paths()
            .iter()
            .map(|p| p.iter().map(|&e| edges[e].id.clone()).collect())
            .collect()
    }

    fn is_two_parallel_links(&self) -> bool {
        self.paths.len() == 2 && self.paths.parallel_link_order().as_deref() == Some(&[0, 1][..])
    }
}

fn build_problem(config: &mut RunConfig) -> Result<Problem, CliError> {
    let spec = config
        .scenarios
        .as_ref()
        .ok_or_else(|| CliError::Config("missing `scenarios`".into()))?;
    let set = match spec {
        ScenarioConfig::Discrete { scenarios } => ScenarioSet::from_discrete_spec(scenarios),
        ScenarioConfig::UniformGrid { a, n } => ScenarioSet::uniform_b_grid(a, *n),
        ScenarioConfig::MonteCarlo { sampler, n } => ScenarioSet::monte_carlo(sampler, *n, config.seed),
    }
    .map_err(CliError::invalid)?;
    let graph = match &config.graph {
        Some(g) => g.build(),
        None => Graph::parallel_links(set.num_links()),
    }
    .map_err(CliError::invalid)?;
    if graph.num_edges() != set.num_links() {
        return Err(CliError::Config(format!(
            "the graph has {} edges but scenarios have {} links",
            graph.num_edges(),
            set.num_links()
        )));
    }
    let paths = enumerate_paths_with_cap(&graph, config.solver.path_cap)?;
    config.graph = Some(GraphSpec::from_graph(&graph));
    Ok(Problem { set, paths, graph })
}

fn resolve_policy(config: &RunConfig, p: &Problem) -> Result<Policy, CliError> {
    let pg = config.solver.pg();
    match &config.policy {
        PolicyConfig::Uninformative => Policy::uninformative(p.set.len(), p.paths.len()).map_err(CliError::invalid),
        PolicyConfig::FullInfoUe => Ok(Policy::from_state_flow(&full_info_ue(&p.set, &p.paths, &pg)?)?),
        PolicyConfig::SystemOptimum => Ok(Policy::from_state_flow(&system_optimum(&p.set, &p.paths, &pg)?)?),
        PolicyConfig::Table { rows } => {
            if rows.len() != p.set.len() || rows.iter().any(|r| r.len() != p.paths.len()) {
                return Err(CliError::Config(format!(
                    "policy table must be {} scenarios by {} paths",
                    p.set.len(),
                    p.paths.len()
                )));
            }
            Policy::new(rows.clone()).map_err(CliError::invalid)
        }
    }
}

pub fn run(mut config: RunConfig) -> Result<(Report, Option<Table>), CliError> {
    let (result, table) = match config.command {
        Command::Sweep => {
            let spec = config.sweep.expect("validated on load");
            let (outcome, table) = sweep(&spec, &config.solver.design(config.seed))?;
            (Outcome::Sweep(outcome), Some(table))
        }
        command => {
            let p = build_problem(&mut config)?;
            match command {
                Command::SolveSysopt | Command::SolveUe => solve_full_information(&config, &p)?,
                Command::SolveBue => solve_bayesian(&config, &p)?,
                Command::Design => design(&config, &p)?,
                Command::Poa => poa(&config, &p)?,
                Command::CheckTheorems => (check_theorems(&config, &p)?, None),
                Command::Sweep => unreachable!("handled above"),
            }
        }
    };
    Ok((
        Report {
            command: config.command,
            seed: config.seed,
            config,
            result,
        },
        table,
    ))
}

/// One row per scenario: weight, per-link flow and total travel time.
fn flow_table(p: &Problem, flow: &StateFlow, policy: Option<&Policy>) -> Table {
    let mut header = vec!["scenario".to_string(), "weight".to_string()];
    let labels = p.path_labels();
    if policy.is_some() {
        header.extend(labels.iter().map(|l| format!("policy_{}", l.join("-"))));
    }
    header.extend(p.graph.edges().iter().map(|e| format!("flow_{}", e.id)));
    header.push("cost".into());
    let rows = p
        .set
        .scenarios()
        .iter()
        .zip(&flow.link_flows)
        .enumerate()
        .map(|(k, (s, f))| {
            let mut row = vec![Cell::Int(k), Cell::Num(s.weight)];
            if let Some(policy) = policy {
                row.extend(policy.rows()[k].iter().map(|&v| Cell::Num(v)));
            }
            row.extend(f.iter().map(|&v| Cell::Num(v)));
            row.push(Cell::Num(s.total_cost(f)));
            row
        })
        .collect();
    Table { header, rows }
}

fn solve_full_information(config: &RunConfig, p: &Problem) -> Result<(Outcome, Option<Table>), CliError> {
    let pg = config.solver.pg();
    let flow = if config.command == Command::SolveSysopt {
        system_optimum(&p.set, &p.paths, &pg)?
    } else {
        full_info_ue(&p.set, &p.paths, &pg)?
    };
    let table = flow_table(p, &flow, None);
    let outcome = FlowOutcome {
        expected_cost: expected_cost(&flow, &p.set)?,
        residual: flow.residual,
        paths: p.path_labels(),
        path_flows: flow.path_flows,
        link_flows: flow.link_flows,
    };
    Ok((Outcome::Flow(outcome), Some(table)))
}

fn solve_bayesian(config: &RunConfig, p: &Problem) -> Result<(Outcome, Option<Table>), CliError> {
    let policy = resolve_policy(config, p)?;
    let bue = bayesian_ue(&policy, &p.set, &p.paths, &config.solver.pg())?;
    let table = flow_table(p, &bue.flow, None);
    let outcome = BayesianOutcome {
        expected_cost: expected_cost(&bue.flow, &p.set)?,
        potential: bue.potential,
        equilibrium_violation: bue.equilibrium_violation,
        solver_residual: bue.solver_residual,
        iterations: bue.iterations,
        paths: p.path_labels(),
        policy: policy.rows().to_vec(),
        response: bue.response.rows().to_vec(),
        path_flows: bue.flow.path_flows,
        link_flows: bue.flow.link_flows,
    };
    Ok((Outcome::Bayesian(outcome), Some(table)))
}

fn design(config: &RunConfig, p: &Problem) -> Result<(Outcome, Option<Table>), CliError> {
    let opts = config.solver.design(config.seed);
    let two_link = p.is_two_parallel_links();
    let result = match config.solver.design_method {
        DesignChoice::TwoLink if !two_link => {
            return Err(CliError::Config(
                "design_method `two-link` needs a network of two parallel links".into(),
            ))
        }
        DesignChoice::TwoLink => design_two_link(&p.set, &opts)?,
        DesignChoice::Auto if two_link => design_two_link(&p.set, &opts)?,
        DesignChoice::Auto | DesignChoice::General => design_general(&p.set, &p.paths, &opts)?,
    };
    let flow = StateFlow::obedient(&result.policy, &p.paths)?;
    let table = flow_table(p, &flow, Some(&result.policy));
    let outcome = DesignOutcome {
        paths: p.path_labels(),
        design: result,
    };
    Ok((Outcome::Design(outcome), Some(table)))
}

fn poa(config: &RunConfig, p: &Problem) -> Result<(Outcome, Option<Table>), CliError> {
    let pg = config.solver.pg();
    let policy = resolve_policy(config, p)?;
    let bue = bayesian_ue(&policy, &p.set, &p.paths, &pg)?;
    let policy_cost = expected_cost(&bue.flow, &p.set)?;
    let so_cost = expected_cost(&system_optimum(&p.set, &p.paths, &pg)?, &p.set)?;
    let ue_cost = expected_cost(&full_info_ue(&p.set, &p.paths, &pg)?, &p.set)?;
    let table = flow_table(p, &bue.flow, None);
    let outcome = PoaOutcome {
        poa: poa_ratio(policy_cost, so_cost)?,
        policy_cost,
        system_optimum_cost: so_cost,
        full_information_cost: ue_cost,
        full_information_poa: poa_ratio(ue_cost, so_cost)?,
        equilibrium_violation: bue.equilibrium_violation,
        policy: policy.rows().to_vec(),
    };
    Ok((Outcome::Poa(outcome), Some(table)))
}

fn check_theorems(config: &RunConfig, p: &Problem) -> Result<Outcome, CliError> {
    if !p.is_two_parallel_links() {
        return Err(CliError::Config("check-theorems needs a network of two parallel links".into()));
    }
    let moments = x_moments(&p.set)?;
    let thm1 = thm1_check(&p.set)?;
    let first = &p.set.scenarios()[0].a;
    let fixed_slopes = p.set.scenarios().iter().all(|s| &s.a == first);
    let thm2 = if fixed_slopes {
        Some(thm2_check(first[0], first[1], &p.set)?)
    } else {
        None
    };
    let uniform = match &config.scenarios {
        Some(ScenarioConfig::UniformGrid { a, .. }) => {
            let (g_poly, h_poly) = thm3_polynomials(a[0], a[1]);
            Some(UniformOutcome {
                g_poly,
                h_poly,
                obedience: uniform_obedience_exact(a[0], a[1])?,
            })
        }
        _ => None,
    };
    Ok(Outcome::Theorems(TheoremOutcome {
        x_mean: moments.mean,
        x_variance: moments.variance,
        thm1,
        thm2,
        uniform,
    }))
}

fn sweep_point(spec: &SweepSpec, opts: &DesignOptions, a1: f64, a2: f64) -> Result<SweepRow, CliError> {
    let (g_poly, h_poly) = thm3_polynomials(a1, a2);
    let exact = uniform_obedience_exact(a1, a2)?;
    let poa = match spec.point {
        SweepPoint::CheckTheorems => None,
        SweepPoint::Design => {
            let set = ScenarioSet::uniform_b_grid(&[a1, a2], spec.grid_n).map_err(CliError::invalid)?;
            Some(design_two_link(&set, opts)?.poa)
        }
    };
    Ok(SweepRow {
        a1,
        a2,
        g_poly,
        h_poly,
        lhs1: exact.lhs1,
        lhs2: exact.lhs2,
        poa,
    })
}

fn sweep(spec: &SweepSpec, opts: &DesignOptions) -> Result<(SweepOutcome, Table), CliError> {
    let a1s = spec.a1.values();
    let a2s = spec.a2.values();
    let grid: Vec<(f64, f64)> = a1s.iter().flat_map(|&a1| a2s.iter().map(move |&a2| (a1, a2))).collect();
    let rows = grid
        .par_iter()
        .map(|&(a1, a2)| sweep_point(spec, opts, a1, a2))
        .collect::<Result<Vec<_>, _>>()?;

    let max = |f: fn(&SweepRow) -> Option<f64>| rows.iter().filter_map(f).reduce(f64::max);
    let summary = SweepSummary {
        points: rows.len(),
        max_g_poly: max(|r| Some(r.g_poly)),
        max_h_poly: max(|r| Some(r.h_poly)),
        max_lhs1: max(|r| Some(r.lhs1)),
        max_lhs2: max(|r| Some(r.lhs2)),
        max_poa: max(|r| r.poa),
        all_nonpositive: rows
            .iter()
            .all(|r| r.g_poly <= 0.0 && r.h_poly <= 0.0 && r.lhs1 <= 0.0 && r.lhs2 <= 0.0),
    };
    let table = Table {
        header: ["a1", "a2", "g_poly", "h_poly", "lhs1", "lhs2", "poa"]
            .map(String::from)
            .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    Cell::Num(r.a1),
                    Cell::Num(r.a2),
                    Cell::Num(r.g_poly),
                    Cell::Num(r.h_poly),
                    Cell::Num(r.lhs1),
                    Cell::Num(r.lhs2),
                    r.poa.map_or(Cell::Empty, Cell::Num),
                ]
            })
            .collect(),
    };
    Ok((
        SweepOutcome {
            point: spec.point,
            summary,
            rows,
        },
        table,
    ))
}
