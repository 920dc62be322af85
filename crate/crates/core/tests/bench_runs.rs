use std::path::PathBuf;

use contact_planner::bench::export::{REPORT_FILE, TORQUE_FILE, TRAJECTORY_FILE};
use contact_planner::bench::{compute_trr, export_run, load_scenario, run_scenario, RunOptions, Scenario};
use contact_planner::contact::ContactParams;
use contact_planner::dynamics::{self, ArmModel, JointState};
use contact_planner::geometry::{Body, ContactPair, ConvexPolygon, HardContact, World};
use contact_planner::trajopt::{self, CostWeights, Goal, SolveContext, SolveSettings};
use nalgebra::DVector;

fn free_space() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/free-space-sanity.toml");
    load_scenario(path).unwrap()
}

fn columns(line: &str) -> Vec<f64> {
    line.split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn successful_run_exports_three_consistent_files() {
    let run = run_scenario(&free_space(), &RunOptions::default());
    assert!(run.report.success, "{:?}", run.report.failure);
    let dir = tempfile::tempdir().unwrap();
    let files = export_run(&run, dir.path()).unwrap();
    assert_eq!(files.len(), 3);

    let traj = run.result.trajectory.as_ref().unwrap();
    let expected_rows = (traj.horizon() / traj.dt).round() as usize + 1;
    let table = std::fs::read_to_string(dir.path().join(TRAJECTORY_FILE)).unwrap();
    assert_eq!(table.lines().count(), expected_rows + 1);
    assert!(table.starts_with("t,q0,q1,qdot0,qdot1,u0,u1\n"));

    // torque statistics are recomputable from the exported columns
    let torques = std::fs::read_to_string(dir.path().join(TORQUE_FILE)).unwrap();
    let mut c2 = 0.0;
    let mut wo2 = 0.0;
    for line in torques.lines().skip(1) {
        let v = columns(line);
        c2 += v[3] * v[3] + v[4] * v[4];
        wo2 += v[5] * v[5] + v[6] * v[6];
    }
    let trr = (wo2.sqrt() - c2.sqrt()) / c2.sqrt();
    assert!((run.report.norm_tau_c - c2.sqrt()).abs() <= 1e-9);
    assert!((run.report.trr.unwrap() - trr).abs() <= 1e-9);
    // no contact anywhere: the two torque series coincide
    assert_eq!(run.report.trr, Some(0.0));

    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report["success"], true);
    assert_eq!(report["samples"].as_u64().unwrap() as usize, expected_rows);
}

#[test]
fn failed_run_exports_report_only() {
    let run = run_scenario(&free_space(), &RunOptions { time_budget: Some(1e-9), ..RunOptions::default() });
    assert!(!run.report.success);
    let dir = tempfile::tempdir().unwrap();
    let files = export_run(&run, dir.path()).unwrap();
    assert_eq!(files, vec![dir.path().join(REPORT_FILE)]);
}

#[test]
fn repeated_runs_export_identical_bytes() {
    let read = |run| {
        let dir = tempfile::tempdir().unwrap();
        export_run(run, dir.path()).unwrap();
        [TRAJECTORY_FILE, TORQUE_FILE].map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    let a = run_scenario(&free_space(), &RunOptions::default());
    let b = run_scenario(&free_space(), &RunOptions::default());
    assert_eq!(read(&a), read(&b));
}

#[test]
fn torque_without_contact_matches_inverse_dynamics() {
    // a link too heavy for its motor, resting its tip on a floor
    let mut m = ArmModel::uniform(&[0.5], &[1.0], [0.0, -9.81]);
    m.torque_limits = vec![1.5];
    let floor = ConvexPolygon::from_box([-1.0, -0.6], [1.0, -0.237]).unwrap();
    let pairs = vec![ContactPair { body: Body::Link(0), obstacle: 0 }];
    let world = World::new(vec![floor], 5e-3, pairs, HardContact::default()).unwrap();
    let weights = CostWeights::default();
    let settings = SolveSettings { segment_steps: 25, ..SolveSettings::default() };
    let mut params = ContactParams::for_pairs(1);
    params.k = vec![2.0];
    params.b = vec![0.5];
    params.mu = vec![0.2];
    let ctx = SolveContext { model: &m, world: &world, weights: &weights, settings: &settings, initial_params: &params };
    let start = JointState::at_rest(DVector::from_vec(vec![-0.45]));
    let goal = Goal { q: DVector::from_vec(vec![-0.3]), half_width: 0.05 };
    let traj = trajopt::solve(&ctx, &start, &goal, 10, None).unwrap();

    let (trr, tau_c, tau_wo) = compute_trr(&traj, &m, &world).unwrap();
    assert_eq!(tau_c.len(), traj.states.len());
    let mut touched = false;
    for i in 0..traj.states.len() - 1 {
        let (x, next) = (&traj.states[i], &traj.states[i + 1]);
        let qddot = (&next.qdot - &x.qdot) / traj.dt;
        let id = dynamics::inverse_dynamics(&m, &x.q, &x.qdot, &qddot, &[]).unwrap();
        assert!((&id - &tau_wo[i]).amax() <= 1e-9, "sample {i}: {id} vs {}", tau_wo[i]);
        touched |= (&tau_wo[i] - &tau_c[i]).amax() > 1e-6;
    }
    assert!(touched, "the floor never pushed back");
    assert!(trr.is_finite());
}
