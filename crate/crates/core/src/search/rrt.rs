use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::ArmModel;
use crate::geometry::{self, ContactClass, World};
use crate::lattice::{Cell, LatticeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RrtConfig {
    pub max_iterations: usize,
    /// Extension step, rad.
    pub step: f64,
    /// Probability of sampling the other tree's root.
    pub goal_bias: f64,
}

impl Default for RrtConfig {
    fn default() -> Self {
        Self { max_iterations: 3000, step: 0.2, goal_bias: 0.1 }
    }
}

/// Lattice cells along a bidirectional RRT path, start cell first.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedPath {
    pub cells: Vec<Cell>,
    /// Path length along the cell centres up to each cell.
    pub provisional_g: Vec<f64>,
    /// Continuous tree path before snapping.
    pub waypoints: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RrtError {
    IterationBudgetExceeded,
    InvalidEndpoint,
}

/// Configuration is within limits and not in deep collision.
pub fn config_ok(model: &ArmModel, world: &World, q: &DVector<f64>) -> bool {
    geometry::within_joint_limits(model, q) && geometry::classify(model, world, q) != ContactClass::DeepCollision
}

/// Straight joint-space segment sampled every `spacing` rad (max-norm).
pub fn segment_ok(model: &ArmModel, world: &World, a: &DVector<f64>, b: &DVector<f64>, spacing: f64) -> bool {
    let d = b - a;
    let n = ((d.amax() / spacing).ceil() as usize).max(1);
    (0..=n).all(|i| config_ok(model, world, &(a + &d * (i as f64 / n as f64))))
}

struct Tree {
    nodes: Vec<DVector<f64>>,
    parent: Vec<Option<usize>>,
}

impl Tree {
    fn new(root: DVector<f64>) -> Self {
        Self { nodes: vec![root], parent: vec![None] }
    }

    fn nearest(&self, q: &DVector<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.nodes.iter().enumerate() {
            let d = (n - q).norm_squared();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    fn add(&mut self, q: DVector<f64>, parent: usize) -> usize {
        self.nodes.push(q);
        self.parent.push(Some(parent));
        self.nodes.len() - 1
    }

    fn path_to_root(&self, mut i: usize) -> Vec<DVector<f64>> {
        let mut out = vec![self.nodes[i].clone()];
        while let Some(p) = self.parent[i] {
            out.push(self.nodes[p].clone());
            i = p;
        }
        out
    }
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

fn extend(tree: &mut Tree, target: &DVector<f64>, step: f64, check: &dyn Fn(&DVector<f64>, &DVector<f64>) -> bool) -> Extend {
    let near = tree.nearest(target);
    let from = tree.nodes[near].clone();
    let d = target - &from;
    let dist = d.norm();
    let (to, reached) = if dist <= step { (target.clone(), true) } else { (&from + d * (step / dist), false) };
    if !check(&from, &to) {
        return Extend::Trapped;
    }
    let id = tree.add(to, near);
    if reached {
        Extend::Reached(id)
    } else {
        Extend::Advanced(id)
    }
}

/// Bidirectional RRT in continuous joint space, snapped to lattice cells.
pub fn rrt_connect(
    start: &DVector<f64>,
    goal: &DVector<f64>,
    model: &ArmModel,
    world: &World,
    spec: &LatticeSpec,
    config: &RrtConfig,
    seed: u64,
) -> Result<SeedPath, RrtError> {
    if !config_ok(model, world, start) || !config_ok(model, world, goal) {
        return Err(RrtError::InvalidEndpoint);
    }
    let spacing = spec.resolution / 4.0;
    let check = |a: &DVector<f64>, b: &DVector<f64>| segment_ok(model, world, a, b, spacing);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ta = Tree::new(start.clone());
    let mut tb = Tree::new(goal.clone());
    let mut a_is_start = true;
    let waypoints = if check(start, goal) {
        Some(vec![start.clone(), goal.clone()])
    } else {
        let mut found = None;
        for _ in 0..config.max_iterations {
            let sample = if rng.gen::<f64>() < config.goal_bias {
                tb.nodes[0].clone()
            } else {
                DVector::from_iterator(
                    model.dof(),
                    model.joint_limits.iter().map(|[lo, hi]| rng.gen_range(*lo..=*hi)),
                )
            };
            if let Extend::Reached(id) | Extend::Advanced(id) = extend(&mut ta, &sample, config.step, &check) {
                let target = ta.nodes[id].clone();
                let mut connected = None;
                loop {
                    match extend(&mut tb, &target, config.step, &check) {
                        Extend::Reached(j) => {
                            connected = Some(j);
                            break;
                        }
                        Extend::Advanced(_) => continue,
                        Extend::Trapped => break,
                    }
                }
                if let Some(j) = connected {
                    let mut pa = ta.path_to_root(id);
                    let pb = tb.path_to_root(j);
                    pa.reverse();
                    pa.extend(pb.into_iter().skip(1));
                    if !a_is_start {
                        pa.reverse();
                    }
                    found = Some(pa);
                    break;
                }
            }
            std::mem::swap(&mut ta, &mut tb);
            a_is_start = !a_is_start;
        }
        found
    };
    let waypoints = waypoints.ok_or(RrtError::IterationBudgetExceeded)?;
    Ok(snap(&waypoints, model, world, spec))
}

/// Densify at the lattice resolution, snap to cells and drop repeats and
/// cells whose centres are in deep collision. Endpoints are always kept.
fn snap(waypoints: &[DVector<f64>], model: &ArmModel, world: &World, spec: &LatticeSpec) -> SeedPath {
    let mut cells: Vec<Cell> = Vec::new();
    let last_index = waypoints.len() - 1;
    let start_cell = spec.lambda_q(&waypoints[0]).expect("start within limits");
    let goal_cell = spec.lambda_q(&waypoints[last_index]).expect("goal within limits");
    cells.push(start_cell);
    for w in waypoints.windows(2) {
        let d = &w[1] - &w[0];
        let n = ((d.amax() / spec.resolution).ceil() as usize).max(1);
        for i in 1..=n {
            let q = &w[0] + &d * (i as f64 / n as f64);
            let Ok(c) = spec.lambda_q(&q) else { continue };
            if cells.last() == Some(&c) || c == goal_cell {
                continue;
            }
            if geometry::classify(model, world, &spec.center(&c)) == ContactClass::DeepCollision {
                continue;
            }
            cells.push(c);
        }
    }
    if cells.last() != Some(&goal_cell) {
        cells.push(goal_cell);
    }
    let mut provisional_g = vec![0.0];
    for w in cells.windows(2) {
        let step = crate::lattice::heuristic(spec, &w[0], &w[1]);
        provisional_g.push(provisional_g.last().expect("non-empty") + step);
    }
    SeedPath { cells, provisional_g, waypoints: waypoints.to_vec() }
}
