use contact_planner::contact::ContactParams;
use contact_planner::dynamics::{ArmModel, JointState};
use contact_planner::geometry::World;
use contact_planner::lattice::LatticeSpec;
use contact_planner::search::{plan_with, PlannerConfig, Problem, TrajoptEdges};
use contact_planner::trajopt::{self, CostWeights, Goal, SolveContext, SolveSettings};
use nalgebra::DVector;

#[test]
fn one_link_plan_agrees_with_direct_solve() {
    let mut m = ArmModel::uniform(&[0.5], &[1.0], [0.0, -9.81]);
    m.torque_limits = vec![10.0];
    let world = World::empty();
    let weights = CostWeights::default();
    let settings = SolveSettings::default();
    let params = ContactParams::for_pairs(0);
    let ctx = SolveContext { model: &m, world: &world, weights: &weights, settings: &settings, initial_params: &params };
    let spec = LatticeSpec::new(0.1, &m).unwrap();
    let start = JointState::at_rest(DVector::from_vec(vec![-1.2]));
    let goal = JointState::at_rest(DVector::from_vec(vec![-0.7]));

    let edges = TrajoptEdges { ctx, spec: &spec };
    let problem = Problem { model: &m, world: &world, spec: &spec, start: &start, goal: &goal, seed: 0 };
    let result = plan_with(problem, &PlannerConfig::default(), &edges);
    assert!(result.success, "{:?}", result.failure);
    let planned = result.trajectory.unwrap();
    // the goal's g is the cost of the trajectory it stores
    let goal_cell = spec.lambda(&goal).unwrap();
    let goal_node = result.nodes.iter().filter(|n| n.cell == goal_cell && n.actual).min_by(|a, b| a.g.total_cmp(&b.g)).unwrap();
    assert_eq!(goal_node.g, planned.total_cost);
    assert_eq!(trajopt::recompute_cost(&ctx, &planned), planned.total_cost);

    let segments = planned.segments();
    let direct = trajopt::solve(&ctx, &start, &Goal { q: goal.q.clone(), half_width: 0.05 }, segments, None).unwrap();
    assert!(direct.converged);
    let rel = (planned.total_cost - direct.total_cost).abs() / direct.total_cost;
    assert!(rel <= 0.05, "planned {} direct {} over {segments} segments", planned.total_cost, direct.total_cost);
}
