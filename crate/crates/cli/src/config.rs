//! Run configuration: a JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use infodesign::design::DesignOptions;
use infodesign::network::{EdgeSpec, Graph, DEFAULT_PATH_CAP};
use infodesign::scenarios::{SamplerSpec, ScenarioSpec};
use infodesign::solver::PgOptions;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveSysopt,
    SolveUe,
    SolveBue,
    Design,
    Poa,
    CheckTheorems,
    Sweep,
}

/// What a sweep computes at each grid point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepPoint {
    #[default]
    CheckTheorems,
    Design,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<String>>,
    pub edges: Vec<EdgeSpec>,
    pub origin: String,
    pub destination: String,
}

impl GraphSpec {
    pub fn build(&self) -> infodesign::Result<Graph> {
        match &self.nodes {
            Some(nodes) => Graph::with_nodes(nodes.clone(), &self.edges, &self.origin, &self.destination),
            None => Graph::build(&self.edges, &self.origin, &self.destination),
        }
    }

    pub fn from_graph(graph: &Graph) -> Self {
        let nodes = graph.nodes();
        Self {
            nodes: Some(nodes.to_vec()),
            edges: graph
                .edges()
                .iter()
                .map(|e| EdgeSpec::new(e.id.clone(), nodes[e.tail].clone(), nodes[e.head].clone()))
                .collect(),
            origin: nodes[graph.origin()].clone(),
            destination: nodes[graph.destination()].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Discrete {
        scenarios: Vec<ScenarioSpec>,
    },
    /// Midpoint grid for `b` uniform on `[0, 1]^E` with fixed slopes.
    UniformGrid {
        a: Vec<f64>,
        #[serde(default = "default_grid_n")]
        n: usize,
    },
    /// Sampled with the run seed.
    MonteCarlo {
        sampler: SamplerSpec,
        n: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyConfig {
    #[default]
    Uninformative,
    FullInfoUe,
    SystemOptimum,
    Table {
        rows: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignChoice {
    /// Exact two-link solver on two parallel links, multistart otherwise.
    #[default]
    Auto,
    TwoLink,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub path_cap: usize,
    pub design_method: DesignChoice,
    pub restarts: usize,
    pub obedience_tol: f64,
    pub report_tol: f64,
    pub max_outer: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub inner_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = DesignOptions::default();
        Self {
            tol: d.pg.tol,
            max_iter: d.pg.max_iter,
            path_cap: DEFAULT_PATH_CAP,
            design_method: DesignChoice::Auto,
            restarts: d.restarts,
            obedience_tol: d.obedience_tol,
            report_tol: d.report_tol,
            max_outer: d.max_outer,
            initial_penalty: d.initial_penalty,
            penalty_growth: d.penalty_growth,
            inner_max_iter: d.inner_max_iter,
        }
    }
}

impl SolverConfig {
    pub fn pg(&self) -> PgOptions {
        PgOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn design(&self, seed: u64) -> DesignOptions {
        DesignOptions {
            pg: self.pg(),
            obedience_tol: self.obedience_tol,
            report_tol: self.report_tol,
            restarts: self.restarts,
            seed,
            max_outer: self.max_outer,
            initial_penalty: self.initial_penalty,
            penalty_growth: self.penalty_growth,
            inner_max_iter: self.inner_max_iter,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("tol", self.tol),
            ("obedience_tol", self.obedience_tol),
            ("report_tol", self.report_tol),
            ("initial_penalty", self.initial_penalty),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if !(self.penalty_growth.is_finite() && self.penalty_growth >= 1.0) {
            return Err(CliError::Config(format!(
                "solver.penalty_growth must be at least 1, got {}",
                self.penalty_growth
            )));
        }
        if self.max_iter == 0 || self.path_cap == 0 {
            return Err(CliError::Config("solver.max_iter and solver.path_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Inclusive arithmetic grid `start, start + step, …` up to `stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

const MAX_AXIS_POINTS: usize = 100_000;

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        if self.stop < self.start {
            return Vec::new();
        }
        // Tolerate rounding in (stop − start)/step so that the end point is kept.
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.start + k as f64 * self.step).collect()
    }

    fn validate(&self, name: &str) -> Result<(), CliError> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.step.is_finite()) {
            return Err(CliError::Config(format!("sweep.{name} must be finite")));
        }
        if self.step <= 0.0 {
            return Err(CliError::Config(format!("sweep.{name}.step must be positive, got {}", self.step)));
        }
        if (self.stop - self.start) / self.step >= MAX_AXIS_POINTS as f64 {
            return Err(CliError::Config(format!(
                "sweep.{name} has more than {MAX_AXIS_POINTS} points"
            )));
        }
        Ok(())
    }
}

/// Grid over the slopes `(a₁, a₂)` of two parallel links with uniform `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub a1: Axis,
    pub a2: Axis,
    #[serde(default)]
    pub point: SweepPoint,
    /// Midpoint grid size per axis for `design` points.
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub plot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plot: true,
        }
    }
}

fn default_grid_n() -> usize {
    200
}

/// Config file as written, before references and overrides are resolved.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    graph: Option<GraphSpec>,
    graph_file: Option<PathBuf>,
    scenarios: Option<ScenarioConfig>,
    scenarios_file: Option<PathBuf>,
    #[serde(default)]
    policy: PolicyConfig,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    seed: u64,
    sweep: Option<SweepSpec>,
    #[serde(default)]
    output: OutputConfig,
}

/// Fully resolved configuration, echoed into every result.
///
/// Output locations are excluded from the echo so that results do not
/// depend on where they are written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub graph: Option<GraphSpec>,
    pub scenarios: Option<ScenarioConfig>,
    pub policy: PolicyConfig,
    pub solver: SolverConfig,
    pub seed: u64,
    pub sweep: Option<SweepSpec>,
    #[serde(skip)]
    pub output: OutputConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid_n: Option<usize>,
    pub restarts: Option<usize>,
    pub tol: Option<f64>,
    pub point: Option<SweepPoint>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::ConfigParse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn inline_or_file<T: DeserializeOwned>(
    inline: Option<T>,
    file: Option<PathBuf>,
    base: &Path,
    name: &str,
) -> Result<Option<T>, CliError> {
    match (inline, file) {
        (Some(_), Some(_)) => Err(CliError::Config(format!("both `{name}` and `{name}_file` are given"))),
        (Some(v), None) => Ok(Some(v)),
        (None, Some(f)) => read_json(&base.join(f)).map(Some),
        (None, None) => Ok(None),
    }
}

pub fn load(path: &Path, command: Command, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let file: FileConfig = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let graph = inline_or_file(file.graph, file.graph_file, base, "graph")?;
    let scenarios = inline_or_file(file.scenarios, file.scenarios_file, base, "scenarios")?;

    let mut config = RunConfig {
        command,
        graph,
        scenarios,
        policy: file.policy,
        solver: file.solver,
        seed: file.seed,
        sweep: file.sweep,
        output: file.output,
    };
    config.apply(overrides)?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dir) = &o.out {
            self.output.dir = dir.clone();
        }
        if let Some(tol) = o.tol {
            self.solver.tol = tol;
        }
        if let Some(r) = o.restarts {
            self.solver.restarts = r;
        }
        if let Some(g) = o.grid_n {
            if let Some(ScenarioConfig::UniformGrid { n, .. }) = &mut self.scenarios {
                *n = g;
            }
            if let Some(sweep) = &mut self.sweep {
                sweep.grid_n = g;
            }
        }
        if let Some(point) = o.point {
            if self.command != Command::Sweep {
                return Err(CliError::Config("a per-point command is only accepted by `sweep`".into()));
            }
            if let Some(sweep) = &mut self.sweep {
                sweep.point = point;
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), CliError> {
        self.solver.validate()?;
        if self.command == Command::Sweep {
            let sweep = self
                .sweep
                .as_ref()
                .ok_or_else(|| CliError::Config("`sweep` needs a `sweep` section".into()))?;
            sweep.a1.validate("a1")?;
            sweep.a2.validate("a2")?;
            if sweep.grid_n == 0 {
                return Err(CliError::Config("sweep.grid_n must be positive".into()));
            }
        } else if self.scenarios.is_none() {
            return Err(CliError::Config(format!(
                "`{}` needs a `scenarios` section",
                self.command.to_possible_value().expect("no skipped variants").get_name()
            )));
        }
        Ok(())
    }
}
