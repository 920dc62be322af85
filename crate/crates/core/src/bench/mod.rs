//! Scenario files, planner runs, torque metrics and run export.

pub mod export;
pub mod report;
pub mod scenario;

pub use export::export_run;
pub use report::{compute_trr, execute, RunReport, Sample, Violations};
pub use scenario::{load_scenario, save_scenario, Scenario, ScenarioError};

use crate::search::{plan_with, PlanResult, Problem, TrajoptEdges};
use crate::trajopt::SolveContext;

/// Command-line style overrides applied on top of a scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub no_lazy: bool,
    pub no_seed: bool,
    pub no_reuse: bool,
    pub no_contact: bool,
    pub seed: Option<u64>,
    pub time_budget: Option<f64>,
}

impl RunOptions {
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = if self.no_contact { scenario.without_contact() } else { scenario.clone() };
        s.planner.lazy_enabled &= !self.no_lazy;
        s.planner.seed_enabled &= !self.no_seed;
        s.planner.reuse_enabled &= !self.no_reuse;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(t) = self.time_budget {
            s.planner.time_budget = t;
        }
        s
    }
}

/// A finished run: the scenario as planned, the planner output and its report.
#[derive(Debug, Clone)]
pub struct Run {
    pub scenario: Scenario,
    pub result: PlanResult,
    pub samples: Option<Vec<Sample>>,
    pub report: RunReport,
}

pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Run {
    let scenario = options.apply(scenario);
    let spec = scenario.lattice();
    let ctx = SolveContext {
        model: &scenario.arm,
        world: &scenario.world,
        weights: &scenario.weights,
        settings: &scenario.solver,
        initial_params: &scenario.contact,
    };
    let edges = TrajoptEdges { ctx, spec: &spec };
    let problem = Problem {
        model: &scenario.arm,
        world: &scenario.world,
        spec: &spec,
        start: &scenario.start,
        goal: &scenario.goal,
        seed: scenario.seed,
    };
    let result = plan_with(problem, &scenario.planner, &edges);
    let samples = result.trajectory.as_ref().and_then(|t| match execute(t, &scenario.arm, &scenario.world) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("replay of the planned trajectory failed: {e}");
            None
        }
    });
    let report = RunReport::build(&scenario.name, &result, samples.as_deref(), &scenario.arm, &scenario.world, &spec, &scenario.goal);
    Run { scenario, result, samples, report }
}
