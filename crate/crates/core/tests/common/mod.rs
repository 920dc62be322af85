//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use contact_planner::dynamics::{ArmModel, JointState};
use contact_planner::geometry::{self, ContactClass, ConvexPolygon, HardContact, World};
use contact_planner::lattice::{self, Cell, LatticeSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(PartialEq)]
struct Item(f64, Cell);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Plain Dijkstra over the lattice successor relation with centre-distance
/// edge costs. Edges back into the start cell are ignored, as in the planner.
pub fn dijkstra(model: &ArmModel, world: &World, spec: &LatticeSpec, start: &Cell, goal: &Cell) -> Option<f64> {
    let mut dist: HashMap<Cell, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    dist.insert(start.clone(), 0.0);
    heap.push(Item(0.0, start.clone()));
    while let Some(Item(d, c)) = heap.pop() {
        if &c == goal {
            return Some(d);
        }
        if d > dist[&c] {
            continue;
        }
        for s in lattice::successors(&c, model, world, spec) {
            if &s.cell == start {
                continue;
            }
            let nd = d + lattice::heuristic(spec, &c, &s.cell);
            if dist.get(&s.cell).is_none_or(|old| nd < *old) {
                dist.insert(s.cell.clone(), nd);
                heap.push(Item(nd, s.cell));
            }
        }
    }
    None
}

/// Random 3-link planar world with a few boxes; start and goal are free.
pub fn random_three_joint_world(seed: u64) -> (ArmModel, World, LatticeSpec, JointState, JointState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = ArmModel::uniform(&[0.4, 0.35, 0.3], &[1.0, 1.0, 1.0], [0.0, 0.0]);
    m.joint_limits = vec![[-0.75, 0.75]; 3];
    let spec = LatticeSpec::new(0.125, &m).unwrap();
    loop {
        let boxes = rng.gen_range(1..=3);
        let mut obstacles = Vec::new();
        for _ in 0..boxes {
            let cx = rng.gen_range(-0.2..1.1);
            let cy = rng.gen_range(-0.9..0.9);
            let w = rng.gen_range(0.05..0.3);
            let h = rng.gen_range(0.05..0.3);
            obstacles.push(ConvexPolygon::from_box([cx - w, cy - h], [cx + w, cy + h]).unwrap());
        }
        let world = World::new(obstacles, 5e-3, vec![], HardContact::default()).unwrap();
        let mut free = Vec::new();
        for _ in 0..200 {
            let c: Vec<i64> = (0..3).map(|_| rng.gen_range(-6..=6)).collect();
            let q = spec.center(&c);
            if geometry::classify(&m, &world, &q) == ContactClass::Free {
                free.push(JointState::at_rest(q));
                if free.len() == 2 {
                    let goal = free.pop().unwrap();
                    let start = free.pop().unwrap();
                    return (m, world, spec, start, goal);
                }
            }
        }
    }
}

/// Exact discrete LQ problem `x' = A x + B u` with stage cost
/// `½(uᵀ R_u u + xᵀ Q x)` and terminal cost `½ (x − x*)ᵀ Q_T (x − x*)`, solved
/// by a backward Riccati recursion. Returns the optimal total cost from `x0`.
pub fn riccati_cost(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    qt: &DMatrix<f64>,
    target: &DVector<f64>,
    x0: &DVector<f64>,
    steps: usize,
) -> f64 {
    // value function ½ xᵀ P x + pᵀ x + c
    let mut p = qt.clone();
    let mut lin = -(qt * target);
    let mut c = 0.5 * target.dot(&(qt * target));
    for _ in 0..steps {
        let quu = r + b.transpose() * &p * b;
        let qux = b.transpose() * &p * a;
        let qu = b.transpose() * &lin;
        let inv = quu.clone().try_inverse().expect("positive definite");
        let k = -&inv * &qu;
        let kk = -&inv * &qux;
        let p_new = q + a.transpose() * &p * a + kk.transpose() * &qux;
        let lin_new = a.transpose() * &lin + qux.transpose() * &k;
        c += 0.5 * qu.dot(&k);
        p = 0.5 * (&p_new + p_new.transpose());
        lin = lin_new;
    }
    0.5 * x0.dot(&(&p * x0)) + lin.dot(x0) + c
}
