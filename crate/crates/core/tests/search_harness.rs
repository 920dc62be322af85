mod common;

use contact_planner::search::{plan_with, EuclideanEdges, PlannerConfig, Problem};

#[test]
fn euclidean_harness_matches_dijkstra() {
    let config = PlannerConfig { epsilon: 1.0, seed_enabled: false, ..PlannerConfig::default() };
    let mut solved = 0;
    for seed in 0..20 {
        let (m, world, spec, start, goal) = common::random_three_joint_world(seed);
        let edges = EuclideanEdges { spec: &spec, model: &m };
        let problem = Problem { model: &m, world: &world, spec: &spec, start: &start, goal: &goal, seed };
        let r = plan_with(problem, &config, &edges);
        let oracle = common::dijkstra(&m, &world, &spec, &spec.lambda(&start).unwrap(), &spec.lambda(&goal).unwrap());
        match oracle {
            Some(d) => {
                assert!(r.success, "world {seed}: {:?}", r.failure);
                assert_eq!(r.trajectory.unwrap().total_cost, d, "world {seed}");
                solved += 1;
            }
            None => assert!(!r.success, "world {seed}"),
        }
    }
    assert!(solved >= 10);
}
