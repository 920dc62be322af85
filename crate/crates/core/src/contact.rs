//! Tunable smooth virtual contact forces and the stiff penalty contact used
//! as the simulated "real" reaction.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, ArmModel, JointState, PointForce};
use crate::geometry::{ContactQuery, HardContact, World};

/// Below this tangential speed the virtual friction opposes the penalty
/// stiction force instead of the velocity.
pub const STICTION_DEADBAND: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContactError {
    #[error("invalid contact parameter {field}: {reason}")]
    Invalid { field: String, reason: String },
}

/// Per-pair decision variables `(k, b, μ)` plus fixed shape constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactParams {
    /// N, one per contact pair.
    pub k: Vec<f64>,
    /// N·s/m
    pub b: Vec<f64>,
    /// Upper bound on the virtual friction coefficient.
    pub mu: Vec<f64>,
    /// 1/m
    pub alpha_k: f64,
    /// 1/m
    pub alpha_b: f64,
    pub mu_s: f64,
    pub mu_k: f64,
    /// m/s
    pub psidot_thres: f64,
    pub rho: f64,
}

impl ContactParams {
    /// Default shape constants with all virtual forces switched off.
    pub fn for_pairs(n: usize) -> Self {
        Self {
            k: vec![0.0; n],
            b: vec![0.0; n],
            mu: vec![0.0; n],
            alpha_k: 50.0,
            alpha_b: 100.0,
            mu_s: 0.5,
            mu_k: 0.3,
            psidot_thres: 0.05,
            rho: 1e-3,
        }
    }

    pub fn pairs(&self) -> usize {
        self.k.len()
    }

    pub fn mu_bar(&self) -> f64 {
        0.5 * (self.mu_s + self.mu_k)
    }

    /// `α_μ = ψ̇_thres / ln(ρ / (2μ̄ − ρ))`.
    pub fn alpha_mu(&self) -> f64 {
        let mb = self.mu_bar();
        self.psidot_thres / (self.rho / (2.0 * mb - self.rho)).ln()
    }

    /// The decision variables stacked as `[k, b, μ]`.
    pub fn decision_vector(&self) -> Vec<f64> {
        self.k.iter().chain(&self.b).chain(&self.mu).copied().collect()
    }

    pub fn set_decision(&mut self, index: usize, value: f64) {
        let n = self.pairs();
        match index / n {
            0 => self.k[index] = value,
            1 => self.b[index - n] = value,
            _ => self.mu[index - 2 * n] = value,
        }
    }

    pub fn all_zero(&self) -> bool {
        self.decision_vector().iter().all(|v| *v == 0.0)
    }

    /// Element-wise maximum of the decision variables; shape constants from `self`.
    pub fn max_with(&self, other: &ContactParams) -> ContactParams {
        let pick = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x.max(*y)).collect();
        ContactParams {
            k: pick(&self.k, &other.k),
            b: pick(&self.b, &other.b),
            mu: pick(&self.mu, &other.mu),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ContactError> {
        let bad = |field: &str, reason: String| ContactError::Invalid { field: field.into(), reason };
        let n = self.k.len();
        if self.b.len() != n || self.mu.len() != n {
            return Err(bad("b/mu", format!("k, b and mu need equal lengths, got {}, {}, {}", n, self.b.len(), self.mu.len())));
        }
        for (name, values) in [("k", &self.k), ("b", &self.b), ("mu", &self.mu)] {
            for (i, v) in values.iter().enumerate() {
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(bad(&format!("{name}[{i}]"), format!("must be non-negative, got {v}")));
                }
            }
        }
        for (name, v) in [("alpha_k", self.alpha_k), ("alpha_b", self.alpha_b), ("psidot_thres", self.psidot_thres)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.mu_k >= 0.0 && self.mu_k <= self.mu_s && self.mu_s.is_finite()) {
            return Err(bad("mu_k", format!("need 0 <= mu_k <= mu_s, got mu_k = {}, mu_s = {}", self.mu_k, self.mu_s)));
        }
        if !(self.rho > 0.0 && self.rho < 2.0 * self.mu_bar()) {
            return Err(bad("rho", format!("need 0 < rho < mu_s + mu_k, got {}", self.rho)));
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `Γ^N = k e^{−α_k ψ} + b sig(−α_b ψ) ψ̇`, clamped at zero.
pub fn virtual_normal_force(psi: f64, psidot: f64, k: f64, b: f64, p: &ContactParams) -> f64 {
    let spring = if k == 0.0 { 0.0 } else { k * (-p.alpha_k * psi).exp() };
    let damper = if b == 0.0 { 0.0 } else { b * sigmoid(-p.alpha_b * psi) * psidot };
    (spring + damper).max(0.0)
}

/// `μ_n = μ̄ − |2μ̄ / (1 + exp(ψ̇/α_μ)) − μ̄|`.
pub fn virtual_friction_coeff(psidot: f64, p: &ContactParams) -> f64 {
    let mb = p.mu_bar();
    let logistic = 2.0 * mb / (1.0 + (psidot / p.alpha_mu()).exp());
    (mb - (logistic - mb).abs()).max(0.0)
}

/// `Γ^f = μ_n (Γ^N + Ω^N)` along `tangential_dir`.
pub fn virtual_friction_force(gamma_n: f64, omega_n: f64, mu_n: f64, tangential_dir: Vector2<f64>) -> Vector2<f64> {
    mu_n * (gamma_n + omega_n) * tangential_dir
}

/// Normal magnitude and tangential force of the penalty contact.
pub fn hard_contact_force(psi: f64, psidot: f64, v_t: f64, hard: &HardContact, p: &ContactParams) -> (f64, f64) {
    if psi >= 0.0 {
        return (0.0, 0.0);
    }
    let normal = (-hard.stiffness * psi - hard.damping * psidot).max(0.0);
    let stick = -hard.stick_viscosity * v_t;
    let friction = if stick.abs() <= p.mu_s * normal {
        stick
    } else {
        -v_t.signum() * p.mu_k * normal
    };
    (normal, friction)
}

/// Forces at one contact pair during one step.
#[derive(Debug, Clone, PartialEq)]
pub struct PairForces {
    pub pair_index: usize,
    pub gamma_n: f64,
    pub gamma_f: Vector2<f64>,
    pub omega_n: f64,
    pub omega_f: Vector2<f64>,
    pub mu_n: f64,
}

impl PairForces {
    pub fn virtual_force(&self, q: &ContactQuery) -> Vector2<f64> {
        self.gamma_n * q.normal + self.gamma_f
    }

    pub fn hard_force(&self, q: &ContactQuery) -> Vector2<f64> {
        self.omega_n * q.normal + self.omega_f
    }
}

pub fn evaluate_pairs(queries: &[ContactQuery], p: &ContactParams, hard: &HardContact) -> Vec<PairForces> {
    queries
        .iter()
        .map(|c| {
            let i = c.pair_index;
            let tangent = Vector2::new(-c.normal.y, c.normal.x);
            let v_t = tangent.dot(&c.point_velocity);
            let (omega_n, omega_t) = hard_contact_force(c.psi, c.psidot, v_t, hard, p);
            let (k, b, mu) = (p.k[i], p.b[i], p.mu[i]);
            let gamma_n = virtual_normal_force(c.psi, c.psidot, k, b, p);
            let mu_n = virtual_friction_coeff(c.psidot, p).min(mu);
            let dir = if v_t.abs() >= STICTION_DEADBAND {
                -v_t.signum() * tangent
            } else if omega_t != 0.0 {
                -omega_t.signum() * tangent
            } else {
                Vector2::zeros()
            };
            PairForces {
                pair_index: i,
                gamma_n,
                gamma_f: virtual_friction_force(gamma_n, omega_n, mu_n, dir),
                omega_n,
                omega_f: omega_t * tangent,
                mu_n,
            }
        })
        .collect()
}

fn jacobian_sum(
    model: &ArmModel,
    q: &DVector<f64>,
    queries: &[ContactQuery],
    forces: impl Iterator<Item = Vector2<f64>>,
) -> DVector<f64> {
    let mut out = DVector::zeros(model.dof());
    for (c, f) in queries.iter().zip(forces) {
        if f.x != 0.0 || f.y != 0.0 {
            out += dynamics::point_jacobian(model, q, c.link, c.arm_position).transpose() * f;
        }
    }
    out
}

/// `−J_Γᵀ Γ`: generalized torque of the virtual forces acting on the arm.
pub fn virtual_torque(model: &ArmModel, q: &DVector<f64>, queries: &[ContactQuery], pairs: &[PairForces]) -> DVector<f64> {
    jacobian_sum(model, q, queries, queries.iter().zip(pairs).map(|(c, f)| f.virtual_force(c)))
}

/// `J_Ωᵀ Ω` from the penalty contact.
pub fn hard_torque(model: &ArmModel, q: &DVector<f64>, queries: &[ContactQuery], pairs: &[PairForces]) -> DVector<f64> {
    jacobian_sum(model, q, queries, queries.iter().zip(pairs).map(|(c, f)| f.hard_force(c)))
}

/// Penalty contact forces as world-frame point forces.
pub fn hard_point_forces(queries: &[ContactQuery], pairs: &[PairForces]) -> Vec<PointForce> {
    queries
        .iter()
        .zip(pairs)
        .map(|(c, f)| PointForce { link: c.link, arm_position: c.arm_position, force: f.hard_force(c) })
        .collect()
}

/// Sum of `J_Γᵀ (n Γ^N + Γ^f)` over the contact pairs.
pub fn generalized_virtual_torque(
    model: &ArmModel,
    x: &JointState,
    contacts: &[ContactQuery],
    p: &ContactParams,
    hard: &HardContact,
) -> DVector<f64> {
    let pairs = evaluate_pairs(contacts, p, hard);
    virtual_torque(model, &x.q, contacts, &pairs)
}

/// Convenience: full query plus virtual torque for a state.
pub fn virtual_torque_at(model: &ArmModel, world: &World, x: &JointState, p: &ContactParams) -> DVector<f64> {
    let queries = world.query_contacts(model, x);
    generalized_virtual_torque(model, x, &queries, p, &world.hard_contact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Body, ContactPair, ConvexPolygon};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> ContactParams {
        let mut p = ContactParams::for_pairs(1);
        p.k = vec![10.0];
        p.b = vec![2.0];
        p.mu = vec![1.0];
        p
    }

    #[test]
    fn normal_force_examples() {
        let p = params();
        assert_eq!(virtual_normal_force(0.0, 0.0, 10.0, 0.0, &p), 10.0);
        assert_relative_eq!(virtual_normal_force(0.1, 0.0, 10.0, 0.0, &p), 10.0 * (-5.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(virtual_normal_force(0.1, 0.3, 10.0, 0.0, &p), 0.0673794699908547, epsilon = 1e-12);
        for (psi, psidot) in [(-0.1, -5.0), (0.0, 3.0), (1.0, 1.0)] {
            assert_eq!(virtual_normal_force(psi, psidot, 0.0, 0.0, &p), 0.0);
        }
        // strongly separating damper would pull: clamped
        assert_eq!(virtual_normal_force(-0.01, -100.0, 1.0, 5.0, &p), 0.0);
    }

    #[test]
    fn friction_coefficient_fixed_points() {
        let p = params();
        assert_eq!(virtual_friction_coeff(0.0, &p), p.mu_bar());
        assert!((virtual_friction_coeff(p.psidot_thres, &p) - p.rho).abs() < 1e-9);
        assert!((virtual_friction_coeff(-p.psidot_thres, &p) - p.rho).abs() < 1e-9);
        assert!(virtual_friction_coeff(1e3, &p) < 1e-12);
        assert!(virtual_friction_coeff(-1e3, &p) < 1e-12);
    }

    #[test]
    fn friction_coefficient_decays_beyond_peak() {
        let p = params();
        let mut last = p.mu_bar();
        for i in 1..2000 {
            let v = i as f64 * 1e-3;
            let m = virtual_friction_coeff(v, &p);
            assert!(m <= last + 1e-15);
            last = m;
        }
    }

    #[test]
    fn friction_coefficient_has_kink_at_zero() {
        let p = params();
        let h = 1e-7;
        let right = (virtual_friction_coeff(h, &p) - virtual_friction_coeff(0.0, &p)) / h;
        let left = (virtual_friction_coeff(0.0, &p) - virtual_friction_coeff(-h, &p)) / h;
        assert!(right.is_finite() && left.is_finite());
        assert!(right < 0.0 && left > 0.0);
        assert!((right - left).abs() > 1.0);
        assert_relative_eq!(right, -left, max_relative = 1e-5);
    }

    #[test]
    fn friction_force_examples() {
        let t = Vector2::new(1.0, 0.0);
        assert_eq!(virtual_friction_force(3.0, 2.0, 0.0, t), Vector2::zeros());
        assert_relative_eq!(virtual_friction_force(0.0, 5.0, 0.3, t).norm(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn sliding_block_net_friction_crosses_zero_near_threshold() {
        // 1-D block pressed with Ω^N = 10 N sliding at speed v: engine kinetic
        // friction μ_k Ω^N against virtual friction μ_n Ω^N.
        let p = params();
        let omega_n = 10.0;
        let net = |v: f64| p.mu_k * omega_n - virtual_friction_coeff(v, &p) * omega_n;
        assert!(net(0.0) < 0.0);
        assert!(net(p.psidot_thres) > 0.0);
        // bisection for the crossing
        let (mut lo, mut hi) = (0.0, p.psidot_thres);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if net(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(lo > 0.0 && lo < p.psidot_thres);
    }

    #[test]
    fn hard_contact_regimes() {
        let p = params();
        let hard = HardContact::default();
        assert_eq!(hard_contact_force(0.01, -1.0, 1.0, &hard, &p), (0.0, 0.0));
        let (n, f) = hard_contact_force(-1e-3, 0.0, 1e-4, &hard, &p);
        assert_relative_eq!(n, 30.0, epsilon = 1e-12);
        assert_relative_eq!(f, -hard.stick_viscosity * 1e-4, epsilon = 1e-12);
        let (n, f) = hard_contact_force(-1e-3, 0.0, 1.0, &hard, &p);
        assert_relative_eq!(f, -p.mu_k * n, epsilon = 1e-12);
    }

    fn tip_contact_setup() -> (ArmModel, World) {
        let m = ArmModel::uniform(&[0.5, 0.4], &[1.0, 1.0], [0.0, 0.0]);
        let wall = ConvexPolygon::from_box([0.95, -2.0], [2.0, 2.0]).unwrap();
        let world = World::new(
            vec![wall],
            5e-3,
            vec![ContactPair { body: Body::Link(1), obstacle: 0 }],
            HardContact::default(),
        )
        .unwrap();
        (m, world)
    }

    #[test]
    fn generalized_torque_matches_virtual_work() {
        let (m, world) = tip_contact_setup();
        let mut p = params();
        p.b = vec![0.0];
        p.mu = vec![0.0];
        let x = JointState::at_rest(nalgebra::DVector::from_vec(vec![0.3, -0.5]));
        let queries = world.query_contacts(&m, &x);
        let tau = generalized_virtual_torque(&m, &x, &queries, &p, &world.hard_contact);
        let c = &queries[0];
        let f = virtual_normal_force(c.psi, c.psidot, 10.0, 0.0, &p) * c.normal;
        for j in 0..2 {
            let h = 1e-6;
            let mut qp = x.q.clone();
            let mut qm = x.q.clone();
            qp[j] += h;
            qm[j] -= h;
            let pp = dynamics::point_position(&m, &qp, c.link, c.arm_position);
            let pm = dynamics::point_position(&m, &qm, c.link, c.arm_position);
            let work = f.dot(&(pp - pm)) / (2.0 * h);
            assert_relative_eq!(tau[j], work, epsilon = 1e-8);
        }
    }

    #[test]
    fn no_virtual_torque_without_params_or_contacts() {
        let (m, world) = tip_contact_setup();
        let x = JointState::from_slices(&[0.3, -0.5], &[0.2, 0.1]);
        let queries = world.query_contacts(&m, &x);
        let zero = ContactParams::for_pairs(1);
        assert_eq!(generalized_virtual_torque(&m, &x, &queries, &zero, &world.hard_contact), DVector::zeros(2));
        assert_eq!(generalized_virtual_torque(&m, &x, &[], &params(), &world.hard_contact), DVector::zeros(2));
    }

    #[test]
    fn validation_rejects_bad_rho() {
        let mut p = params();
        p.rho = 2.0;
        assert!(p.validate().is_err());
        p.rho = 1e-3;
        p.mu_k = 0.9;
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn friction_coefficient_even_and_bounded(v in -10.0f64..10.0) {
            let p = params();
            let a = virtual_friction_coeff(v, &p);
            let b = virtual_friction_coeff(-v, &p);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0 && a <= p.mu_bar());
        }

        #[test]
        fn normal_force_decreasing_in_gap(psi in -0.05f64..0.5, d in 1e-4f64..0.1, psidot in 0.0f64..2.0) {
            let p = params();
            let a = virtual_normal_force(psi, psidot, 10.0, 2.0, &p);
            let b = virtual_normal_force(psi + d, psidot, 10.0, 2.0, &p);
            prop_assert!(b <= a);
        }

        #[test]
        fn normal_force_second_order_differences(psi in 0.0f64..0.2, psidot in -0.5f64..0.5) {
            // Richardson-style ratio of central-difference errors is ~4.
            let p = params();
            let f = |s: f64| virtual_normal_force(s, psidot, 10.0, 2.0, &p);
            let exact = {
                let z = -p.alpha_b * psi;
                -p.alpha_k * 10.0 * (-p.alpha_k * psi).exp() - p.alpha_b * 2.0 * psidot * sigmoid(z) * (1.0 - sigmoid(z))
            };
            prop_assume!(f(psi) > 1e-3);
            let h = 1e-3;
            let e1 = ((f(psi + h) - f(psi - h)) / (2.0 * h) - exact).abs();
            let e2 = ((f(psi + h / 2.0) - f(psi - h / 2.0)) / h - exact).abs();
            prop_assume!(e1 > 1e-9);
            prop_assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "ratio {}", e1 / e2);
        }
    }
}
