//! Joint-angle lattice: cells, the λ / λ⁻¹ maps, unit-move successors and
//! the Euclidean heuristic.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, ArmModel, JointState};
use crate::geometry::{self, ContactClass, World};

pub const DEFAULT_RESOLUTION: f64 = 0.1;

/// Integer lattice coordinates, one per joint. Cell `c` is centred at `c · resolution`.
pub type Cell = Vec<i64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("joint {joint} limits [{lo}, {hi}] must be finite and ordered")]
    BadLimits { joint: usize, lo: f64, hi: f64 },
    #[error("joint {joint} value {value} outside limits")]
    OutOfLimits { joint: usize, value: f64 },
    #[error("expected {expected} joints, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub resolution: f64,
    pub joint_limits: Vec<[f64; 2]>,
}

impl LatticeSpec {
    pub fn new(resolution: f64, model: &ArmModel) -> Result<Self, LatticeError> {
        Self::with_limits(resolution, model.joint_limits.clone())
    }

    pub fn with_limits(resolution: f64, joint_limits: Vec<[f64; 2]>) -> Result<Self, LatticeError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(LatticeError::BadResolution(resolution));
        }
        for (joint, &[lo, hi]) in joint_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(LatticeError::BadLimits { joint, lo, hi });
            }
        }
        Ok(Self { resolution, joint_limits })
    }

    pub fn dof(&self) -> usize {
        self.joint_limits.len()
    }

    /// Inclusive index range of cells whose centres lie within the limits of `joint`.
    pub fn index_range(&self, joint: usize) -> (i64, i64) {
        let [lo, hi] = self.joint_limits[joint];
        ((lo / self.resolution).ceil() as i64, (hi / self.resolution).floor() as i64)
    }

    pub fn cell_count(&self) -> u128 {
        (0..self.dof())
            .map(|j| {
                let (a, b) = self.index_range(j);
                (b - a + 1).max(0) as u128
            })
            .product()
    }

    pub fn contains(&self, cell: &[i64]) -> bool {
        cell.len() == self.dof()
            && cell.iter().enumerate().all(|(j, c)| {
                let (a, b) = self.index_range(j);
                *c >= a && *c <= b
            })
    }

    /// Nearest cell centre per joint; ties round up.
    pub fn lambda_q(&self, q: &DVector<f64>) -> Result<Cell, LatticeError> {
        if q.len() != self.dof() {
            return Err(LatticeError::DimensionMismatch { expected: self.dof(), got: q.len() });
        }
        q.iter()
            .enumerate()
            .map(|(joint, &value)| {
                let [lo, hi] = self.joint_limits[joint];
                if !(value >= lo && value <= hi) {
                    return Err(LatticeError::OutOfLimits { joint, value });
                }
                Ok((value / self.resolution + 0.5).floor() as i64)
            })
            .collect()
    }

    pub fn lambda(&self, x: &JointState) -> Result<Cell, LatticeError> {
        self.lambda_q(&x.q)
    }

    pub fn center(&self, cell: &[i64]) -> DVector<f64> {
        DVector::from_iterator(cell.len(), cell.iter().map(|c| *c as f64 * self.resolution))
    }

    /// Canonical member of the cell: its centre at rest.
    pub fn lift(&self, cell: &[i64]) -> JointState {
        JointState::at_rest(self.center(cell))
    }
}

/// Straight-line distance between cell centres.
pub fn heuristic(spec: &LatticeSpec, cell: &[i64], goal: &[i64]) -> f64 {
    if cell == goal {
        return 0.0;
    }
    let sq: i64 = cell.iter().zip(goal).map(|(a, b)| (a - b) * (a - b)).sum();
    (sq as f64).sqrt() * spec.resolution
}

/// Gravity compensation alone fits within the torque limits.
pub fn statically_admissible(model: &ArmModel, q: &DVector<f64>) -> bool {
    let g = dynamics::gravity_torque(model, q);
    g.iter().zip(&model.torque_limits).all(|(t, l)| t.abs() <= *l)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub cell: Cell,
    pub is_contact: bool,
    /// Rest state the edge should reach: the centre, or the projected pose
    /// for contact successors.
    pub representative: JointState,
}

/// Unit moves in either direction of every joint, screened for joint limits
/// and unsupported gravity torque. Moves into deep collision are projected
/// onto the obstacle surface and emitted as contact successors.
pub fn successors(cell: &[i64], model: &ArmModel, world: &World, spec: &LatticeSpec) -> Vec<Successor> {
    let mut out: Vec<Successor> = Vec::with_capacity(2 * cell.len());
    for joint in 0..cell.len() {
        for dir in [-1i64, 1] {
            let mut next = cell.to_vec();
            next[joint] += dir;
            if !spec.contains(&next) {
                continue;
            }
            let lifted = spec.lift(&next);
            match geometry::classify(model, world, &lifted.q) {
                ContactClass::Free | ContactClass::Surface => {
                    if statically_admissible(model, &lifted.q) {
                        out.push(Successor { cell: next, is_contact: false, representative: lifted });
                    }
                }
                ContactClass::DeepCollision => {
                    let Ok(projected) = geometry::project_to_surface(model, world, &lifted) else {
                        continue;
                    };
                    if !geometry::within_joint_limits(model, &projected.q) {
                        continue;
                    }
                    let Ok(pc) = spec.lambda_q(&projected.q) else { continue };
                    if pc == cell || !spec.contains(&pc) || out.iter().any(|s| s.cell == pc) {
                        continue;
                    }
                    let supported = !world.contact_pairs.is_empty();
                    if supported || statically_admissible(model, &projected.q) {
                        out.push(Successor { cell: pc, is_contact: true, representative: JointState::at_rest(projected.q) });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Body, ContactPair, ConvexPolygon, HardContact};
    use proptest::prelude::*;

    fn weak_gravity_arm(n: usize) -> ArmModel {
        let mut m = ArmModel::uniform(&vec![0.5; n], &vec![1.0; n], [0.0, -0.1]);
        m.joint_limits = vec![[-3.0, 3.0]; n];
        m
    }

    #[test]
    fn lambda_rounds_half_up_and_lift_round_trips() {
        let m = weak_gravity_arm(2);
        let spec = LatticeSpec::new(0.1, &m).unwrap();
        assert_eq!(spec.lambda_q(&DVector::from_vec(vec![0.2, -0.3])).unwrap(), vec![2, -3]);
        assert_eq!(spec.lambda_q(&DVector::from_vec(vec![0.25, -0.25])).unwrap(), vec![3, -2]);
        assert!(spec.lambda_q(&DVector::from_vec(vec![3.5, 0.0])).is_err());
        for c in [vec![0, 0], vec![-30, 30], vec![7, -11]] {
            let x = spec.lift(&c);
            assert_eq!(spec.lambda(&x).unwrap(), c);
            assert!(x.qdot.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn interior_cell_has_two_n_successors() {
        let m = weak_gravity_arm(3);
        let spec = LatticeSpec::new(0.1, &m).unwrap();
        let s = successors(&[0, 5, -5], &m, &World::empty(), &spec);
        assert_eq!(s.len(), 6);
        let edge = successors(&[30, 0, 0], &m, &World::empty(), &spec);
        assert_eq!(edge.len(), 5);
    }

    #[test]
    fn move_into_wall_is_projected_onto_its_surface() {
        // single 1 m link of radius 0.01 swinging toward a wall whose face is x = 0.95
        let mut m = ArmModel::uniform(&[1.0], &[1.0], [0.0, 0.0]);
        m.link_radii = vec![0.01];
        m.joint_limits = vec![[-3.0, 3.0]];
        let wall = ConvexPolygon::from_box([0.95, -1.0], [1.5, 1.0]).unwrap();
        let pairs = vec![ContactPair { body: Body::Link(0), obstacle: 0 }];
        let world = World::new(vec![wall], 5e-3, pairs, HardContact::default()).unwrap();
        let spec = LatticeSpec::new(0.1, &m).unwrap();
        assert_eq!(geometry::classify(&m, &world, &spec.center(&[4])), ContactClass::Free);
        assert_eq!(geometry::classify(&m, &world, &spec.center(&[3])), ContactClass::DeepCollision);
        let succ = successors(&[4], &m, &world, &spec);
        let down = succ.iter().find(|s| s.is_contact).expect("projected successor");
        // the capsule reaches x = cos q + r, so it touches the face at cos q = 0.94
        let touch = 0.94f64.acos();
        let q = down.representative.q[0];
        assert!((q - touch).abs() < 0.015, "q = {q}, expected near {touch}");
        assert_eq!(geometry::classify(&m, &world, &down.representative.q), ContactClass::Surface);
        assert_eq!(down.cell, spec.lambda_q(&down.representative.q).unwrap());
        assert_eq!(succ.len(), 2);
    }

    #[test]
    fn static_screen_rejects_heavy_poses_only() {
        let mut m = ArmModel::uniform(&[1.0], &[2.0], [0.0, -9.81]);
        m.torque_limits = vec![5.0];
        m.joint_limits = vec![[-3.0, 3.0]];
        let spec = LatticeSpec::new(0.1, &m).unwrap();
        // hanging near -π/2 needs little torque; horizontal needs 9.81 N·m
        let hanging = successors(&[-16], &m, &World::empty(), &spec);
        assert_eq!(hanging.len(), 2);
        let horizontal = successors(&[0], &m, &World::empty(), &spec);
        assert!(horizontal.is_empty());
    }

    fn cell_strategy(n: usize) -> impl Strategy<Value = Cell> {
        prop::collection::vec(-25i64..25, n)
    }

    proptest! {
        #[test]
        fn free_successors_are_symmetric(c in cell_strategy(3)) {
            let m = weak_gravity_arm(3);
            let spec = LatticeSpec::new(0.1, &m).unwrap();
            let w = World::empty();
            for s in successors(&c, &m, &w, &spec) {
                prop_assert!(!s.is_contact);
                prop_assert!(successors(&s.cell, &m, &w, &spec).iter().any(|b| b.cell == c));
            }
        }

        #[test]
        fn heuristic_is_consistent_metric(a in cell_strategy(3), b in cell_strategy(3), g in cell_strategy(3)) {
            let m = weak_gravity_arm(3);
            let spec = LatticeSpec::new(0.1, &m).unwrap();
            prop_assert_eq!(heuristic(&spec, &a, &a), 0.0);
            prop_assert!(heuristic(&spec, &a, &g) <= heuristic(&spec, &a, &b) + heuristic(&spec, &b, &g) + 1e-12);
            for s in successors(&a, &m, &World::empty(), &spec) {
                let edge = heuristic(&spec, &a, &s.cell);
                prop_assert!((edge - 0.1).abs() < 1e-12);
                prop_assert!(heuristic(&spec, &a, &g) <= edge + heuristic(&spec, &s.cell, &g) + 1e-12);
            }
        }

        #[test]
        fn screen_keeps_cells_within_static_bound(c in cell_strategy(2)) {
            let mut m = ArmModel::uniform(&[0.5, 0.5], &[1.0, 1.0], [0.0, -9.81]);
            m.torque_limits = vec![6.0, 3.0];
            m.joint_limits = vec![[-3.0, 3.0]; 2];
            let spec = LatticeSpec::new(0.1, &m).unwrap();
            let kept = successors(&c, &m, &World::empty(), &spec);
            for joint in 0..2 {
                for dir in [-1, 1] {
                    let mut n = c.clone();
                    n[joint] += dir;
                    let g = dynamics::gravity_torque(&m, &spec.center(&n));
                    if spec.contains(&n) && g.amax() <= 3.0 {
                        prop_assert!(kept.iter().any(|s| s.cell == n));
                    }
                }
            }
        }
    }
}
