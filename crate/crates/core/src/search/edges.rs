use nalgebra::DVector;

use crate::contact::ContactParams;
use crate::dynamics::{ArmModel, JointState};
use crate::geometry;
use crate::lattice::{heuristic, Cell, LatticeSpec};
use crate::trajopt::{self, ControlSpline, Goal, Interpolation, SolveContext, Trajectory};

/// One boundary-value problem between two lattice nodes.
#[derive(Debug, Clone)]
pub struct EdgeRequest {
    pub from: JointState,
    pub from_cell: Cell,
    pub to: JointState,
    pub to_cell: Cell,
    /// Lattice hops spanned; sets the horizon.
    pub hops: usize,
}

/// Source of edge trajectories for the search.
pub trait EdgeOptimizer: Sync {
    /// Zero-length trajectory resting at `x`.
    fn stationary(&self, x: &JointState) -> Option<Trajectory>;
    fn solve_edge(&self, req: &EdgeRequest) -> Option<Trajectory>;
    /// Start-rooted re-optimization of `prefix` followed by `suffix`.
    fn warm_start(&self, prefix: &Trajectory, suffix: &Trajectory) -> Option<Trajectory>;
    fn is_valid(&self, traj: &Trajectory) -> bool;
}

/// Edges solved by iLQR over the arm dynamics.
pub struct TrajoptEdges<'a> {
    pub ctx: SolveContext<'a>,
    pub spec: &'a LatticeSpec,
}

impl EdgeOptimizer for TrajoptEdges<'_> {
    fn stationary(&self, x: &JointState) -> Option<Trajectory> {
        let goal = Goal { q: x.q.clone(), half_width: 0.5 * self.spec.resolution };
        trajopt::solve(&self.ctx, x, &goal, 0, None).ok()
    }

    fn solve_edge(&self, req: &EdgeRequest) -> Option<Trajectory> {
        let goal = Goal { q: req.to.q.clone(), half_width: 0.5 * self.spec.resolution };
        let segments = req.hops.max(1) * self.ctx.settings.segments_per_hop;
        match trajopt::solve(&self.ctx, &req.from, &goal, segments, None) {
            Ok(t) => Some(t),
            Err(e) => {
                log::debug!("edge {:?} -> {:?} failed: {e}", req.from_cell, req.to_cell);
                None
            }
        }
    }

    fn warm_start(&self, prefix: &Trajectory, suffix: &Trajectory) -> Option<Trajectory> {
        trajopt::warm_start_solve(&self.ctx, prefix, suffix).ok()
    }

    fn is_valid(&self, traj: &Trajectory) -> bool {
        geometry::states_are_valid(self.ctx.model, self.ctx.world, &traj.states)
    }
}

/// Test-harness edges: every generated edge is valid and costs the distance
/// between cell centres; warm starts just concatenate.
pub struct EuclideanEdges<'a> {
    pub spec: &'a LatticeSpec,
    pub model: &'a ArmModel,
}

impl EuclideanEdges<'_> {
    pub(crate) fn straight(&self, from: &JointState, to: &JointState, cost: f64, half_width: f64) -> Trajectory {
        let n = self.model.dof();
        let knots = vec![DVector::zeros(n), DVector::zeros(n)];
        Trajectory {
            times: vec![0.0, 1.0],
            states: vec![from.clone(), to.clone()],
            controls: ControlSpline::uniform(knots, 1.0, Interpolation::Linear),
            contact_params: ContactParams::for_pairs(0),
            total_cost: cost,
            converged: true,
            terminal_state: to.clone(),
            goal: Goal { q: to.q.clone(), half_width },
            dt: 1.0,
            segment_steps: 1,
            cost_log: vec![cost],
            iterations: 0,
        }
    }
}

impl EdgeOptimizer for EuclideanEdges<'_> {
    fn stationary(&self, x: &JointState) -> Option<Trajectory> {
        let mut t = self.straight(x, x, 0.0, 0.5 * self.spec.resolution);
        t.states.truncate(1);
        t.times.truncate(1);
        Some(t)
    }

    fn solve_edge(&self, req: &EdgeRequest) -> Option<Trajectory> {
        let cost = heuristic(self.spec, &req.from_cell, &req.to_cell);
        Some(self.straight(&req.from, &req.to, cost, 0.5 * self.spec.resolution))
    }

    fn warm_start(&self, prefix: &Trajectory, suffix: &Trajectory) -> Option<Trajectory> {
        let mut t = self.straight(prefix.start(), &suffix.terminal_state, prefix.total_cost + suffix.total_cost, suffix.goal.half_width);
        t.states = prefix.states.iter().chain(suffix.states.iter().skip(1)).cloned().collect();
        t.times = (0..t.states.len()).map(|i| i as f64).collect();
        Some(t)
    }

    fn is_valid(&self, _traj: &Trajectory) -> bool {
        true
    }
}
