//! Lazy weighted-A* over the joint lattice with trajectory-optimized edges.
//!
//! Nodes are generated with a lazy cost `g(pred) + J(incremental edge)`; the
//! start-rooted warm start runs only when a node reaches the top of OPEN.

pub mod edges;
pub mod open;
pub mod rrt;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ArmModel, JointState};
use crate::geometry::{self, ContactClass, World};
use crate::lattice::{self, Cell, LatticeSpec, Successor};
use crate::trajopt::Trajectory;

pub use edges::{EdgeOptimizer, EdgeRequest, EuclideanEdges, TrajoptEdges};
pub use open::{NodeId, OpenList};
pub use rrt::{rrt_connect, RrtConfig, RrtError, SeedPath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    /// Heuristic inflation ε ≥ 1.
    pub epsilon: f64,
    pub rrt: RrtConfig,
    pub seed_enabled: bool,
    pub lazy_enabled: bool,
    pub reuse_enabled: bool,
    /// Wall-clock budget, s.
    pub time_budget: f64,
    pub max_expansions: usize,
    /// Ancestors tried per successor, the expanded node included.
    pub max_ancestors: usize,
    /// Largest per-joint cell distance of a seed-path shortcut edge.
    pub seed_edge_max_cells: i64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            epsilon: 3.0,
            rrt: RrtConfig::default(),
            seed_enabled: true,
            lazy_enabled: true,
            reuse_enabled: true,
            time_budget: 600.0,
            max_expansions: 100_000,
            max_ancestors: 8,
            seed_edge_max_cells: 6,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), (String, String)> {
        if !(self.epsilon.is_finite() && self.epsilon >= 1.0) {
            return Err(("epsilon".into(), format!("must be at least 1, got {}", self.epsilon)));
        }
        if !(self.time_budget > 0.0) {
            return Err(("time_budget".into(), "must be positive".into()));
        }
        if self.max_ancestors == 0 {
            return Err(("max_ancestors".into(), "must be at least 1".into()));
        }
        if !(self.rrt.step > 0.0 && (0.0..=1.0).contains(&self.rrt.goal_bias)) {
            return Err(("rrt.step".into(), "need step > 0 and goal_bias in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanStats {
    pub expansions: usize,
    pub pops: usize,
    pub lazy_pops: usize,
    pub reinsertions: usize,
    /// Incremental edge optimizations.
    pub optimizations: usize,
    pub failed_edges: usize,
    pub warm_starts: usize,
    pub reused_terminals: usize,
    /// Start-rooted optimizations thrown away.
    pub discarded: usize,
    pub deferred_seed_pops: usize,
    pub seed_cells: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchEvent {
    /// A node about to be expanded and the smallest live key left in OPEN.
    Expand { node: NodeId, key: f64, min_open_key: f64, actual: bool },
    /// Lazy cost replaced by the warm-started cost.
    Evaluate { node: NodeId, lazy_g: f64, actual_g: f64 },
    Retarget { from: NodeId, to: NodeId, cell: Cell, terminal_q: DVector<f64> },
    Discard { node: NodeId, lazy_g: f64 },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub cell: Cell,
    pub generation: u32,
    /// Full-D state edges leave from and arrive at.
    pub representative: JointState,
    pub g: f64,
    pub h: f64,
    pub actual: bool,
    pub pred: Option<NodeId>,
    pub traj: Option<Arc<Trajectory>>,
    pub closed: bool,
    pub is_contact: bool,
    pub from_seed: bool,
    stamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanFailure {
    InvalidEndpoint(String),
    TimeBudgetExceeded,
    ExpansionLimit,
    SearchExhausted,
    /// The goal trajectory failed the final constraint check.
    PostCheck(String),
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub success: bool,
    pub trajectory: Option<Trajectory>,
    pub stats: PlanStats,
    pub failure: Option<PlanFailure>,
    pub log: Vec<SearchEvent>,
    pub nodes: Vec<Node>,
}

/// Boundary conditions and the environment of one planning query.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub model: &'a ArmModel,
    pub world: &'a World,
    pub spec: &'a LatticeSpec,
    pub start: &'a JointState,
    pub goal: &'a JointState,
    pub seed: u64,
}

enum Evaluation {
    Kept,
    Moved(NodeId),
    Discarded,
}

pub struct Planner<'a, E: EdgeOptimizer> {
    problem: Problem<'a>,
    config: &'a PlannerConfig,
    edges: &'a E,
    nodes: Vec<Node>,
    index: HashMap<Cell, Vec<NodeId>>,
    open: OpenList,
    seed_path: Option<SeedPath>,
    stats: PlanStats,
    log: Vec<SearchEvent>,
    start_id: NodeId,
    goal_cell: Cell,
}

fn chebyshev(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).max().unwrap_or(0)
}

/// Endpoint usable by the planner: within joint limits, not in deep
/// collision, and able to hold still. A pose that fails the static torque
/// screen is accepted only while a contact pair touches the surface band.
pub fn endpoint_ok(model: &ArmModel, world: &World, x: &JointState) -> Result<(), String> {
    if x.dof() != model.dof() || !x.is_finite() {
        return Err("state must be finite with one entry per joint".into());
    }
    if !geometry::within_joint_limits(model, &x.q) {
        return Err("outside joint limits".into());
    }
    if geometry::classify(model, world, &x.q) == ContactClass::DeepCollision {
        return Err("in deep collision".into());
    }
    if !lattice::statically_admissible(model, &x.q) {
        let supported = world
            .query_contacts(model, &JointState::at_rest(x.q.clone()))
            .iter()
            .any(|c| c.psi <= world.surface_band);
        if !supported {
            return Err("gravity torque exceeds the limits and no contact pair supports the pose".into());
        }
    }
    Ok(())
}

impl<'a, E: EdgeOptimizer> Planner<'a, E> {
    pub fn new(problem: Problem<'a>, config: &'a PlannerConfig, edges: &'a E) -> Result<Self, PlanFailure> {
        for (name, x) in [("start", problem.start), ("goal", problem.goal)] {
            endpoint_ok(problem.model, problem.world, x).map_err(|e| PlanFailure::InvalidEndpoint(format!("{name}: {e}")))?;
        }
        let spec = problem.spec;
        let start_cell = spec.lambda(problem.start).map_err(|e| PlanFailure::InvalidEndpoint(e.to_string()))?;
        let goal_cell = spec.lambda(problem.goal).map_err(|e| PlanFailure::InvalidEndpoint(e.to_string()))?;
        let mut planner = Self {
            problem,
            config,
            edges,
            nodes: Vec::new(),
            index: HashMap::new(),
            open: OpenList::new(),
            seed_path: None,
            stats: PlanStats::default(),
            log: Vec::new(),
            start_id: 0,
            goal_cell,
        };
        let start_traj = edges
            .stationary(problem.start)
            .ok_or_else(|| PlanFailure::InvalidEndpoint("start: stationary rollout diverged".into()))?;
        let id = planner.new_node(start_cell, problem.start.clone());
        let n = &mut planner.nodes[id];
        n.g = 0.0;
        n.actual = true;
        n.traj = Some(Arc::new(start_traj));
        planner.start_id = id;
        Ok(planner)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    fn new_node(&mut self, cell: Cell, representative: JointState) -> NodeId {
        let generation = self.index.get(&cell).map_or(0, |v| v.len() as u32);
        let h = lattice::heuristic(self.problem.spec, &cell, &self.goal_cell);
        let id = self.nodes.len();
        self.nodes.push(Node {
            cell: cell.clone(),
            generation,
            representative,
            g: f64::INFINITY,
            h,
            actual: false,
            pred: None,
            traj: None,
            closed: false,
            is_contact: false,
            from_seed: false,
            stamp: 0,
        });
        self.index.entry(cell).or_default().push(id);
        id
    }

    /// Latest node of a cell, if any.
    fn soft_copy(&self, cell: &[i64]) -> Option<NodeId> {
        self.index.get(cell).and_then(|v| v.last().copied())
    }

    /// Node to update for `cell`; closed nodes get an augmented copy.
    fn node_for_update(&mut self, cell: &[i64], representative: &JointState) -> NodeId {
        match self.soft_copy(cell) {
            None => self.new_node(cell.to_vec(), representative.clone()),
            Some(id) if !self.nodes[id].closed => id,
            Some(id) => {
                let g = self.nodes[id].g;
                let copy = self.new_node(cell.to_vec(), representative.clone());
                self.nodes[copy].g = g;
                copy
            }
        }
    }

    fn key(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id];
        n.g + self.config.epsilon * n.h
    }

    fn push(&mut self, id: NodeId) {
        let key = self.key(id);
        let stamp = self.open.push(id, key, self.nodes[id].g);
        self.nodes[id].stamp = stamp;
    }

    fn live(nodes: &[Node]) -> impl Fn(NodeId, u64) -> bool + '_ {
        move |id, stamp| {
            let n = &nodes[id];
            n.stamp == stamp && !n.closed && n.g.is_finite()
        }
    }

    fn open_min(&mut self) -> f64 {
        let live = Self::live(&self.nodes);
        self.open.min_key(&live)
    }

    fn pop(&mut self) -> Option<(NodeId, f64)> {
        let live = Self::live(&self.nodes);
        self.open.pop(&live)
    }

    fn terminal_cell(&self, traj: &Trajectory) -> Option<Cell> {
        self.problem.spec.lambda(&traj.terminal_state).ok()
    }

    fn insert_seed(&mut self) {
        if !self.config.seed_enabled {
            return;
        }
        let p = self.problem;
        match rrt_connect(&p.start.q, &p.goal.q, p.model, p.world, p.spec, &self.config.rrt, p.seed) {
            Ok(path) => {
                self.stats.seed_cells = path.cells.len();
                for (i, cell) in path.cells.iter().enumerate().skip(1) {
                    if self.soft_copy(cell).is_some() {
                        continue;
                    }
                    let rep = if *cell == self.goal_cell { p.goal.clone() } else { p.spec.lift(cell) };
                    let id = self.new_node(cell.clone(), rep);
                    self.nodes[id].g = path.provisional_g[i];
                    self.nodes[id].from_seed = true;
                    self.push(id);
                }
                self.seed_path = Some(path);
            }
            Err(e) => log::info!("no seed path: {e:?}"),
        }
    }

    /// Furthest seed-path cell reachable from `id` by a valid straight edge.
    fn seed_successor(&self, id: NodeId, existing: &[Successor]) -> Option<Successor> {
        let path = self.seed_path.as_ref()?;
        let p = self.problem;
        let node = &self.nodes[id];
        for cell in path.cells.iter().rev() {
            if *cell == node.cell || chebyshev(cell, &node.cell) > self.config.seed_edge_max_cells {
                continue;
            }
            if existing.iter().any(|s| s.cell == *cell) || *cell == self.nodes[self.start_id].cell {
                continue;
            }
            let target = if *cell == self.goal_cell { p.goal.clone() } else { p.spec.lift(cell) };
            if rrt::segment_ok(p.model, p.world, &node.representative.q, &target.q, p.spec.resolution / 4.0) {
                return Some(Successor { cell: cell.clone(), is_contact: false, representative: target });
            }
        }
        None
    }

    fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id;
        while out.len() < self.config.max_ancestors {
            match self.nodes[cur].pred {
                Some(p) => {
                    out.push(p);
                    cur = p;
                }
                None => break,
            }
        }
        out
    }

    /// First ancestor of `id` (itself included) with a valid edge to `succ`.
    pub fn generate_trajectory(&self, id: NodeId, succ: &Successor) -> (usize, Option<(NodeId, Trajectory)>) {
        let mut tried = 0;
        for a in self.ancestors(id) {
            let anc = &self.nodes[a];
            let req = EdgeRequest {
                from: anc.representative.clone(),
                from_cell: anc.cell.clone(),
                to: succ.representative.clone(),
                to_cell: succ.cell.clone(),
                hops: chebyshev(&anc.cell, &succ.cell).max(1) as usize,
            };
            tried += 1;
            if let Some(t) = self.edges.solve_edge(&req) {
                if self.edges.is_valid(&t) {
                    return (tried, Some((a, t)));
                }
            }
        }
        (tried, None)
    }

    /// Hand a start-rooted trajectory that missed its cell to the node of the
    /// cell it actually reached.
    fn retarget(&mut self, from: Option<NodeId>, pred: NodeId, traj: Trajectory) -> Option<NodeId> {
        if !self.config.reuse_enabled {
            return None;
        }
        let cell = self.terminal_cell(&traj)?;
        if cell == self.nodes[pred].cell {
            return None;
        }
        if let Some(existing) = self.soft_copy(&cell) {
            if self.nodes[existing].closed || self.nodes[existing].g <= traj.total_cost {
                return None;
            }
        }
        let rep = JointState::at_rest(traj.terminal_state.q.clone());
        let to = self.node_for_update(&cell, &rep);
        let terminal_q = traj.terminal_state.q.clone();
        let n = &mut self.nodes[to];
        n.pred = Some(pred);
        n.g = traj.total_cost;
        n.traj = Some(Arc::new(traj));
        n.actual = true;
        n.representative = rep;
        self.stats.reused_terminals += 1;
        self.log.push(SearchEvent::Retarget { from: from.unwrap_or(to), to, cell, terminal_q });
        self.push(to);
        Some(to)
    }

    /// Replace the lazy cost of `id` with the cost of its warm-started,
    /// start-rooted trajectory.
    pub fn evaluate_true_cost(&mut self, id: NodeId) -> Result<NodeId, NodeId> {
        match self.evaluate(id) {
            Evaluation::Kept => Ok(id),
            Evaluation::Moved(to) => Ok(to),
            Evaluation::Discarded => Err(id),
        }
    }

    fn evaluate(&mut self, id: NodeId) -> Evaluation {
        let node = &self.nodes[id];
        let lazy_g = node.g;
        let (Some(pred), Some(inc)) = (node.pred, node.traj.clone()) else {
            return Evaluation::Discarded;
        };
        if pred == self.start_id {
            self.nodes[id].actual = true;
            return Evaluation::Kept;
        }
        let prefix = self.nodes[pred].traj.clone().expect("expanded nodes carry trajectories");
        self.stats.warm_starts += 1;
        let full = self.edges.warm_start(&prefix, &inc).filter(|t| self.edges.is_valid(t));
        let discard = |s: &mut Self| {
            s.nodes[id].g = f64::INFINITY;
            s.nodes[id].traj = None;
            s.nodes[id].pred = None;
            s.stats.discarded += 1;
            s.log.push(SearchEvent::Discard { node: id, lazy_g });
            Evaluation::Discarded
        };
        let Some(full) = full else { return discard(self) };
        if self.terminal_cell(&full).as_ref() == Some(&self.nodes[id].cell) {
            let n = &mut self.nodes[id];
            n.g = full.total_cost;
            n.traj = Some(Arc::new(full));
            n.actual = true;
            self.log.push(SearchEvent::Evaluate { node: id, lazy_g, actual_g: self.nodes[id].g });
            return Evaluation::Kept;
        }
        let actual_g = full.total_cost;
        match self.retarget(Some(id), pred, full) {
            Some(to) => {
                self.log.push(SearchEvent::Evaluate { node: to, lazy_g, actual_g });
                self.nodes[id].g = f64::INFINITY;
                self.nodes[id].traj = None;
                self.nodes[id].pred = None;
                Evaluation::Moved(to)
            }
            None => discard(self),
        }
    }

    fn expand(&mut self, id: NodeId) {
        self.nodes[id].closed = true;
        self.stats.expansions += 1;
        let p = self.problem;
        let cell = self.nodes[id].cell.clone();
        let start_cell = self.nodes[self.start_id].cell.clone();
        let mut succs: Vec<Successor> = lattice::successors(&cell, p.model, p.world, p.spec)
            .into_iter()
            .filter(|s| s.cell != start_cell)
            .map(|mut s| {
                if s.cell == self.goal_cell {
                    s.representative = p.goal.clone();
                }
                s
            })
            .collect();
        if let Some(s) = self.seed_successor(id, &succs) {
            succs.push(s);
        }
        let results: Vec<(usize, Option<(NodeId, Trajectory)>)> =
            succs.par_iter().map(|s| self.generate_trajectory(id, s)).collect();
        for (succ, (tried, found)) in succs.into_iter().zip(results) {
            self.stats.optimizations += tried;
            let Some((anc, traj)) = found else {
                self.stats.failed_edges += 1;
                continue;
            };
            self.update_successor(anc, succ, traj);
        }
    }

    fn update_successor(&mut self, anc: NodeId, succ: Successor, traj: Trajectory) {
        let from_start = anc == self.start_id;
        // start-rooted edges (and every edge in eager mode) are evaluated now
        let (traj, actual) = if from_start {
            (traj, true)
        } else if !self.config.lazy_enabled {
            let prefix = self.nodes[anc].traj.clone().expect("expanded nodes carry trajectories");
            self.stats.warm_starts += 1;
            match self.edges.warm_start(&prefix, &traj).filter(|t| self.edges.is_valid(t)) {
                Some(full) => (full, true),
                None => {
                    self.stats.discarded += 1;
                    return;
                }
            }
        } else {
            (traj, false)
        };
        if actual && self.terminal_cell(&traj).as_ref() != Some(&succ.cell) {
            if self.retarget(None, anc, traj).is_none() {
                self.stats.discarded += 1;
            }
            return;
        }
        let g_new = if actual && !from_start { traj.total_cost } else { self.nodes[anc].g + traj.total_cost };
        let target = self.node_for_update(&succ.cell, &succ.representative);
        let t = &self.nodes[target];
        let improves = g_new < t.g && (!t.actual || !self.config.lazy_enabled);
        if !improves {
            return;
        }
        let n = &mut self.nodes[target];
        n.pred = Some(anc);
        n.traj = Some(Arc::new(traj));
        n.actual = actual;
        n.g = g_new;
        n.is_contact = succ.is_contact;
        n.representative = succ.representative;
        self.push(target);
    }

    fn finish(self, goal: Option<NodeId>, failure: Option<PlanFailure>, t0: Instant) -> PlanResult {
        let mut stats = self.stats;
        stats.wall_time = t0.elapsed().as_secs_f64();
        let trajectory = goal.and_then(|g| self.nodes[g].traj.as_deref().cloned());
        let failure = match (failure, &trajectory) {
            (Some(f), _) => Some(f),
            (None, Some(t)) => post_check(self.problem.model, self.problem.world, self.problem.spec, t, &self.goal_cell).err(),
            (None, None) => Some(PlanFailure::SearchExhausted),
        };
        PlanResult { success: failure.is_none(), trajectory, stats, failure, log: self.log, nodes: self.nodes }
    }

    /// Run the search to completion.
    pub fn run(mut self) -> PlanResult {
        let t0 = Instant::now();
        if self.nodes[self.start_id].cell == self.goal_cell {
            let id = self.start_id;
            return self.finish(Some(id), None, t0);
        }
        self.insert_seed();
        self.push(self.start_id);
        loop {
            if t0.elapsed().as_secs_f64() > self.config.time_budget {
                return self.finish(None, Some(PlanFailure::TimeBudgetExceeded), t0);
            }
            if self.stats.expansions >= self.config.max_expansions {
                return self.finish(None, Some(PlanFailure::ExpansionLimit), t0);
            }
            let Some((id, _)) = self.pop() else {
                return self.finish(None, Some(PlanFailure::SearchExhausted), t0);
            };
            self.stats.pops += 1;
            if !self.nodes[id].actual {
                if self.nodes[id].traj.is_none() {
                    // seed node never reached by an edge yet
                    self.stats.deferred_seed_pops += 1;
                    self.nodes[id].g = f64::INFINITY;
                    continue;
                }
                self.stats.lazy_pops += 1;
                match self.evaluate(id) {
                    Evaluation::Discarded => continue,
                    Evaluation::Moved(_) => {
                        self.stats.reinsertions += 1;
                        continue;
                    }
                    Evaluation::Kept => {}
                }
                if self.key(id) > self.open_min() {
                    self.stats.reinsertions += 1;
                    self.push(id);
                    continue;
                }
            }
            let key = self.key(id);
            if self.nodes[id].cell == self.goal_cell {
                log::info!("goal reached after {} expansions", self.stats.expansions);
                return self.finish(Some(id), None, t0);
            }
            let min_open_key = self.open_min();
            self.log.push(SearchEvent::Expand { node: id, key, min_open_key, actual: self.nodes[id].actual });
            log::debug!("expand {:?} g={:.4} key={:.4}", self.nodes[id].cell, self.nodes[id].g, key);
            self.expand(id);
        }
    }
}

/// Final constraint check of a returned trajectory.
pub fn post_check(model: &ArmModel, world: &World, spec: &LatticeSpec, traj: &Trajectory, goal_cell: &[i64]) -> Result<(), PlanFailure> {
    if !geometry::states_are_valid(model, world, &traj.states) {
        return Err(PlanFailure::PostCheck("state constraint violated".into()));
    }
    if !traj.controls.within_limits(&model.torque_limits) {
        return Err(PlanFailure::PostCheck("control exceeds torque limits".into()));
    }
    match spec.lambda(&traj.terminal_state) {
        Ok(c) if c == goal_cell => Ok(()),
        _ => Err(PlanFailure::PostCheck("terminal state outside the goal cell".into())),
    }
}

/// Plan with the given edge backend.
pub fn plan_with<E: EdgeOptimizer>(problem: Problem, config: &PlannerConfig, edges: &E) -> PlanResult {
    match Planner::new(problem, config, edges) {
        Ok(p) => p.run(),
        Err(f) => PlanResult {
            success: false,
            trajectory: None,
            stats: PlanStats::default(),
            failure: Some(f),
            log: Vec::new(),
            nodes: Vec::new(),
        },
    }
}
