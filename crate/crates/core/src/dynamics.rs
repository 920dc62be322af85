//! Planar N-link revolute arm: kinematics, Euler-Lagrange terms and a
//! semi-implicit Euler integrator with penalty contact.
//!
//! Joint `i` rotates link `i` relative to link `i - 1`; the base pivot sits at
//! the world origin and `q = 0` points every link along the world +x axis.
//! Absolute link angles are the cumulative sums of the joint angles.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::{self, ContactParams};
use crate::geometry::World;

/// Default blow-up bound used by [`step`].
pub const DEFAULT_BLOWUP: f64 = 1e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("state diverged (magnitude {magnitude:e} exceeds {bound:e})")]
    Diverged { magnitude: f64, bound: f64 },
    #[error("mass matrix is not positive definite")]
    SingularMass,
}

/// How link mass is distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MassModel {
    /// Uniform rod: rotational inertia `m L² / 12` about the centre of mass.
    #[default]
    UniformRod,
    /// Point mass at the centre-of-mass offset, no rotational inertia.
    PointMass,
}

/// Arm description. Lengths in m, masses in kg, limits in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModel {
    pub link_lengths: Vec<f64>,
    pub link_masses: Vec<f64>,
    /// Distance of each link's centre of mass from its proximal joint.
    pub link_com_offsets: Vec<f64>,
    #[serde(default)]
    pub mass_model: MassModel,
    /// Capsule radius of each link, used for collision and contact.
    pub link_radii: Vec<f64>,
    pub gravity: [f64; 2],
    pub joint_damping: Vec<f64>,
    pub torque_limits: Vec<f64>,
    pub velocity_limits: Vec<f64>,
    pub acceleration_limits: Vec<f64>,
    /// `[lower, upper]` per joint, rad.
    pub joint_limits: Vec<[f64; 2]>,
    /// Point mass carried at the tip of the last link.
    #[serde(default)]
    pub payload_mass: f64,
    /// Collision radius of the payload disc; zero means no payload body.
    #[serde(default)]
    pub payload_radius: f64,
}

impl ArmModel {
    /// Uniform-rod arm with centred masses, zero damping and generous limits.
    pub fn uniform(lengths: &[f64], masses: &[f64], gravity: [f64; 2]) -> Self {
        let n = lengths.len();
        Self {
            link_lengths: lengths.to_vec(),
            link_masses: masses.to_vec(),
            link_com_offsets: lengths.iter().map(|l| 0.5 * l).collect(),
            mass_model: MassModel::UniformRod,
            link_radii: vec![0.02; n],
            gravity,
            joint_damping: vec![0.0; n],
            torque_limits: vec![1e3; n],
            velocity_limits: vec![1e2; n],
            acceleration_limits: vec![1e4; n],
            joint_limits: vec![[-std::f64::consts::PI, std::f64::consts::PI]; n],
            payload_mass: 0.0,
            payload_radius: 0.0,
        }
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn has_payload_body(&self) -> bool {
        self.payload_radius > 0.0
    }

    /// Checks the model invariants, returning the offending field on failure.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let n = self.dof();
        if n == 0 {
            return Err(("link_lengths".into(), "at least one link is required".into()));
        }
        let per_joint: [(&str, usize); 9] = [
            ("link_masses", self.link_masses.len()),
            ("link_com_offsets", self.link_com_offsets.len()),
            ("link_radii", self.link_radii.len()),
            ("joint_damping", self.joint_damping.len()),
            ("torque_limits", self.torque_limits.len()),
            ("velocity_limits", self.velocity_limits.len()),
            ("acceleration_limits", self.acceleration_limits.len()),
            ("joint_limits", self.joint_limits.len()),
            ("link_lengths", n),
        ];
        for (name, len) in per_joint {
            if len != n {
                return Err((name.into(), format!("expected {n} entries, found {len}")));
            }
        }
        let positive: [(&str, &Vec<f64>); 6] = [
            ("link_lengths", &self.link_lengths),
            ("link_masses", &self.link_masses),
            ("link_radii", &self.link_radii),
            ("torque_limits", &self.torque_limits),
            ("velocity_limits", &self.velocity_limits),
            ("acceleration_limits", &self.acceleration_limits),
        ];
        for (name, values) in positive {
            for (i, v) in values.iter().enumerate() {
                if !(v.is_finite() && *v > 0.0) {
                    return Err((format!("{name}[{i}]"), format!("must be positive, got {v}")));
                }
            }
        }
        for (i, (c, l)) in self.link_com_offsets.iter().zip(&self.link_lengths).enumerate() {
            if !(c.is_finite() && *c >= 0.0 && c <= l) {
                return Err((
                    format!("link_com_offsets[{i}]"),
                    format!("must lie in [0, {l}], got {c}"),
                ));
            }
        }
        for (i, d) in self.joint_damping.iter().enumerate() {
            if !(d.is_finite() && *d >= 0.0) {
                return Err((format!("joint_damping[{i}]"), format!("must be non-negative, got {d}")));
            }
        }
        for (i, [lo, hi]) in self.joint_limits.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err((format!("joint_limits[{i}]"), format!("need lower < upper, got [{lo}, {hi}]")));
            }
        }
        if !(self.payload_mass.is_finite() && self.payload_mass >= 0.0) {
            return Err(("payload_mass".into(), format!("must be non-negative, got {}", self.payload_mass)));
        }
        if !(self.payload_radius.is_finite() && self.payload_radius >= 0.0) {
            return Err(("payload_radius".into(), format!("must be non-negative, got {}", self.payload_radius)));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(("gravity".into(), "must be finite".into()));
        }
        Ok(())
    }

    fn check_dim(&self, what: &'static str, v: &DVector<f64>) -> Result<(), DynamicsError> {
        if v.len() != self.dof() {
            return Err(DynamicsError::DimensionMismatch {
                what,
                expected: self.dof(),
                got: v.len(),
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite(what));
        }
        Ok(())
    }

    fn rod_inertia(&self, link: usize) -> f64 {
        match self.mass_model {
            MassModel::UniformRod => self.link_masses[link] * self.link_lengths[link].powi(2) / 12.0,
            MassModel::PointMass => 0.0,
        }
    }

    /// Mass points `(link, arm-length position, mass)` making up the arm.
    fn mass_points(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let n = self.dof();
        let links = (0..n).map(move |i| (i, self.link_com_offsets[i], self.link_masses[i]));
        let payload = (self.payload_mass > 0.0).then(|| (n - 1, self.link_lengths[n - 1], self.payload_mass));
        links.chain(payload)
    }
}

/// Full planning state `[q, q̇]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl JointState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Self {
        Self { q, qdot }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self { q, qdot: DVector::zeros(n) }
    }

    pub fn from_slices(q: &[f64], qdot: &[f64]) -> Self {
        Self {
            q: DVector::from_column_slice(q),
            qdot: DVector::from_column_slice(qdot),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }

    /// Stacked `[q, q̇]` vector.
    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.dof();
        DVector::from_fn(2 * n, |i, _| if i < n { self.q[i] } else { self.qdot[i - n] })
    }

    pub fn from_vector(v: &DVector<f64>) -> Self {
        let n = v.len() / 2;
        Self {
            q: v.rows(0, n).into_owned(),
            qdot: v.rows(n, n).into_owned(),
        }
    }

    fn max_abs(&self) -> f64 {
        self.q.iter().chain(self.qdot.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// A world-frame force applied at a material point of the arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PointForce {
    pub link: usize,
    /// Position along the link measured from its proximal joint.
    pub arm_position: f64,
    pub force: Vector2<f64>,
}

/// Net generalized input `τ` plus world-frame contact forces `Ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedForces {
    pub tau: DVector<f64>,
    pub external_contact: Vec<PointForce>,
}

impl GeneralizedForces {
    pub fn torque_only(tau: DVector<f64>) -> Self {
        Self { tau, external_contact: Vec::new() }
    }
}

// ---------------------------------------------------------------------------
// kinematics

pub fn absolute_angles(q: &DVector<f64>) -> Vec<f64> {
    q.iter()
        .scan(0.0, |acc, qi| {
            *acc += qi;
            Some(*acc)
        })
        .collect()
}

fn unit(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

fn unit_perp(theta: f64) -> Vector2<f64> {
    Vector2::new(-theta.sin(), theta.cos())
}

/// Joint positions `p_0 = 0, p_1, ..., p_N` (the last one is the tip).
pub fn joint_positions(model: &ArmModel, q: &DVector<f64>) -> Vec<Vector2<f64>> {
    let theta = absolute_angles(q);
    let mut points = Vec::with_capacity(model.dof() + 1);
    let mut p = Vector2::zeros();
    points.push(p);
    for (l, th) in model.link_lengths.iter().zip(&theta) {
        p += *l * unit(*th);
        points.push(p);
    }
    points
}

/// World position of the point at distance `s` along `link`.
pub fn point_position(model: &ArmModel, q: &DVector<f64>, link: usize, s: f64) -> Vector2<f64> {
    let theta = absolute_angles(q);
    let mut p = Vector2::zeros();
    for a in 0..link {
        p += model.link_lengths[a] * unit(theta[a]);
    }
    p + s * unit(theta[link])
}

/// 2×N translational Jacobian of the point at distance `s` along `link`.
pub fn point_jacobian(model: &ArmModel, q: &DVector<f64>, link: usize, s: f64) -> DMatrix<f64> {
    let n = model.dof();
    let theta = absolute_angles(q);
    let mut jac = DMatrix::zeros(2, n);
    // column j = sum over segments a >= j of (segment length) * perp(theta_a)
    let mut acc = s * unit_perp(theta[link]);
    for j in (0..=link).rev() {
        jac[(0, j)] = acc.x;
        jac[(1, j)] = acc.y;
        if j > 0 {
            acc += model.link_lengths[j - 1] * unit_perp(theta[j - 1]);
        }
    }
    jac
}

/// Derivative of [`point_jacobian`] with respect to `q_k`.
fn point_jacobian_dq(model: &ArmModel, q: &DVector<f64>, link: usize, s: f64, k: usize) -> DMatrix<f64> {
    let n = model.dof();
    let theta = absolute_angles(q);
    let mut d = DMatrix::zeros(2, n);
    if k > link {
        return d;
    }
    for j in 0..=link {
        // d/dq_k of sum_{a >= j, a <= link} len_a perp(theta_a) = -sum_{a >= max(j,k)} len_a e(theta_a)
        let start = j.max(k);
        let mut v = -s * unit(theta[link]);
        for a in start..link {
            v -= model.link_lengths[a] * unit(theta[a]);
        }
        d[(0, j)] = v.x;
        d[(1, j)] = v.y;
    }
    d
}

fn angular_jacobian(n: usize, link: usize) -> DMatrix<f64> {
    DMatrix::from_fn(1, n, |_, j| if j <= link { 1.0 } else { 0.0 })
}

// ---------------------------------------------------------------------------
// Euler-Lagrange terms

/// Joint-space inertia `M(q)`.
pub fn mass_matrix(model: &ArmModel, q: &DVector<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    model.check_dim("q", q)?;
    Ok(mass_matrix_unchecked(model, q))
}

fn mass_matrix_unchecked(model: &ArmModel, q: &DVector<f64>) -> DMatrix<f64> {
    let n = model.dof();
    let mut m = DMatrix::zeros(n, n);
    for (link, s, mass) in model.mass_points() {
        let j = point_jacobian(model, q, link, s);
        m += mass * j.transpose() * &j;
    }
    for link in 0..n {
        let inertia = model.rod_inertia(link);
        if inertia > 0.0 {
            let jw = angular_jacobian(n, link);
            m += inertia * jw.transpose() * &jw;
        }
    }
    m
}

/// `∂M/∂q_k` for every k.
fn mass_matrix_derivatives(model: &ArmModel, q: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let n = model.dof();
    let mut out = vec![DMatrix::zeros(n, n); n];
    for (link, s, mass) in model.mass_points() {
        let j = point_jacobian(model, q, link, s);
        for (k, dm) in out.iter_mut().enumerate() {
            let h = point_jacobian_dq(model, q, link, s, k);
            let jt_h = j.transpose() * &h;
            *dm += mass * (&jt_h + jt_h.transpose());
        }
    }
    out
}

/// Coriolis matrix built from the Christoffel symbols of `M`.
pub fn coriolis_matrix(model: &ArmModel, x: &JointState) -> Result<DMatrix<f64>, DynamicsError> {
    model.check_dim("q", &x.q)?;
    model.check_dim("qdot", &x.qdot)?;
    let n = model.dof();
    let dm = mass_matrix_derivatives(model, &x.q);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]) * x.qdot[k])
            .sum()
    }))
}

/// Gravity torque `G(q) = ∂V/∂q`.
pub fn gravity_torque(model: &ArmModel, q: &DVector<f64>) -> DVector<f64> {
    let g = Vector2::new(model.gravity[0], model.gravity[1]);
    let mut out = DVector::zeros(model.dof());
    for (link, s, mass) in model.mass_points() {
        let j = point_jacobian(model, q, link, s);
        out -= mass * j.transpose() * g;
    }
    out
}

/// Returns `(C(q, q̇) q̇, G(q))`.
pub fn bias_and_gravity(model: &ArmModel, x: &JointState) -> Result<(DVector<f64>, DVector<f64>), DynamicsError> {
    let c = coriolis_matrix(model, x)?;
    Ok((c * &x.qdot, gravity_torque(model, &x.q)))
}

/// `M(q)`, `C(q, q̇) q̇` and `G(q)` in one pass.
///
/// The bias uses `Σ m Jᵀ (J̇ q̇)` per mass point; the rod inertia terms have a
/// constant angular Jacobian and contribute nothing to it.
fn arm_terms(model: &ArmModel, x: &JointState) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let n = model.dof();
    // (direction, perpendicular, absolute rate) per link
    let mut frames = Vec::with_capacity(n);
    let (mut th, mut om) = (0.0, 0.0);
    for i in 0..n {
        th += x.q[i];
        om += x.qdot[i];
        frames.push((unit(th), unit_perp(th), om));
    }
    let gravity = Vector2::new(model.gravity[0], model.gravity[1]);
    let mut m = DMatrix::zeros(n, n);
    let mut cq = DVector::zeros(n);
    let mut g = DVector::zeros(n);
    let mut jac = vec![Vector2::zeros(); n];
    for (link, s, mass) in model.mass_points() {
        let (dir, perp, w) = frames[link];
        let mut acc = s * perp;
        let mut centripetal = -s * w * w * dir;
        for j in (0..=link).rev() {
            jac[j] = acc;
            if j > 0 {
                let len = model.link_lengths[j - 1];
                let (dir, perp, w) = frames[j - 1];
                acc += len * perp;
                centripetal -= len * w * w * dir;
            }
        }
        for a in 0..=link {
            for b in a..=link {
                let v = mass * jac[a].dot(&jac[b]);
                m[(a, b)] += v;
                if a != b {
                    m[(b, a)] += v;
                }
            }
            cq[a] += mass * jac[a].dot(&centripetal);
            g[a] -= mass * jac[a].dot(&gravity);
        }
    }
    for link in 0..n {
        let inertia = model.rod_inertia(link);
        if inertia > 0.0 {
            for a in 0..=link {
                for b in 0..=link {
                    m[(a, b)] += inertia;
                }
            }
        }
    }
    (m, cq, g)
}

/// Potential energy relative to the `q = 0` pose.
pub fn potential_energy(model: &ArmModel, q: &DVector<f64>) -> f64 {
    let g = Vector2::new(model.gravity[0], model.gravity[1]);
    let zero = DVector::zeros(model.dof());
    model
        .mass_points()
        .map(|(link, s, mass)| {
            let dp = point_position(model, q, link, s) - point_position(model, &zero, link, s);
            -mass * g.dot(&dp)
        })
        .sum()
}

pub fn kinetic_energy(model: &ArmModel, x: &JointState) -> f64 {
    let m = mass_matrix_unchecked(model, &x.q);
    0.5 * x.qdot.dot(&(m * &x.qdot))
}

pub fn total_energy(model: &ArmModel, x: &JointState) -> Result<f64, DynamicsError> {
    model.check_dim("q", &x.q)?;
    model.check_dim("qdot", &x.qdot)?;
    Ok(kinetic_energy(model, x) + potential_energy(model, &x.q))
}

fn contact_torque(model: &ArmModel, q: &DVector<f64>, forces: &[PointForce]) -> DVector<f64> {
    let mut out = DVector::zeros(model.dof());
    for f in forces {
        let j = point_jacobian(model, q, f.link, f.arm_position);
        out += j.transpose() * f.force;
    }
    out
}

/// `q̈ = M⁻¹(τ + J_Ωᵀ Ω − C q̇ − G − D q̇)`.
pub fn forward_dynamics(
    model: &ArmModel,
    x: &JointState,
    forces: &GeneralizedForces,
) -> Result<DVector<f64>, DynamicsError> {
    model.check_dim("tau", &forces.tau)?;
    if !forces.external_contact.iter().all(|f| f.force.iter().all(|v| v.is_finite())) {
        return Err(DynamicsError::NonFinite("external_contact"));
    }
    let (cq, g) = bias_and_gravity(model, x)?;
    let generalized = &forces.tau + contact_torque(model, &x.q, &forces.external_contact);
    accelerate(model, x, generalized, cq, g)
}

fn accelerate(
    model: &ArmModel,
    x: &JointState,
    generalized: DVector<f64>,
    cq: DVector<f64>,
    g: DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    let m = mass_matrix_unchecked(model, &x.q);
    solve_acceleration(model, x, m, generalized, cq, g)
}

fn solve_acceleration(
    model: &ArmModel,
    x: &JointState,
    m: DMatrix<f64>,
    generalized: DVector<f64>,
    cq: DVector<f64>,
    g: DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    let mut rhs = generalized - cq - g;
    for ((r, d), v) in rhs.iter_mut().zip(&model.joint_damping).zip(x.qdot.iter()) {
        *r -= d * v;
    }
    let chol = m.cholesky().ok_or(DynamicsError::SingularMass)?;
    chol.solve_mut(&mut rhs);
    Ok(rhs)
}

/// `τ = M q̈ + C q̇ + G + D q̇ − J_Ωᵀ Ω`.
pub fn inverse_dynamics(
    model: &ArmModel,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    qddot: &DVector<f64>,
    external_contact: &[PointForce],
) -> Result<DVector<f64>, DynamicsError> {
    model.check_dim("qddot", qddot)?;
    let x = JointState::new(q.clone(), qdot.clone());
    let (cq, g) = bias_and_gravity(model, &x)?;
    let m = mass_matrix_unchecked(model, q);
    let damping = DVector::from_iterator(
        model.dof(),
        model.joint_damping.iter().zip(qdot.iter()).map(|(d, v)| d * v),
    );
    Ok(m * qddot + cq + g + damping - contact_torque(model, q, external_contact))
}

// ---------------------------------------------------------------------------
// integration

/// Everything computed while taking one integration step.
#[derive(Debug, Clone)]
pub struct StepDetail {
    pub next: JointState,
    /// Commanded torque after saturation.
    pub u: DVector<f64>,
    /// Net generalized input `τ = u − J_Γᵀ Γ` (virtual contact included).
    pub tau_net: DVector<f64>,
    /// `J_Ωᵀ Ω` from the penalty contact.
    pub hard_contact_torque: DVector<f64>,
    pub qddot: DVector<f64>,
    pub contacts: Vec<contact::PairForces>,
}

pub fn saturate(model: &ArmModel, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        model.dof(),
        u.iter().zip(&model.torque_limits).map(|(v, lim)| v.clamp(-lim, *lim)),
    )
}

/// One semi-implicit Euler step: `q̇⁺ = q̇ + dt q̈`, `q⁺ = q + dt q̇⁺`.
pub fn step(
    model: &ArmModel,
    x: &JointState,
    u: &DVector<f64>,
    world: &World,
    params: &ContactParams,
    dt: f64,
) -> Result<JointState, DynamicsError> {
    step_with_bound(model, x, u, world, params, dt, DEFAULT_BLOWUP).map(|d| d.next)
}

pub fn step_with_bound(
    model: &ArmModel,
    x: &JointState,
    u: &DVector<f64>,
    world: &World,
    params: &ContactParams,
    dt: f64,
    blowup: f64,
) -> Result<StepDetail, DynamicsError> {
    model.check_dim("u", u)?;
    let u = saturate(model, u);
    model.check_dim("q", &x.q)?;
    model.check_dim("qdot", &x.qdot)?;
    let (m, cq, g) = arm_terms(model, x);
    let queries = world.query_contacts(model, x);
    let pairs = contact::evaluate_pairs(&queries, params, &world.hard_contact);
    let virtual_torque = contact::virtual_torque(model, &x.q, &queries, &pairs);
    let hard_contact_torque = contact::hard_torque(model, &x.q, &queries, &pairs);
    let tau_net = &u + virtual_torque;
    let qddot = solve_acceleration(model, x, m, &tau_net + &hard_contact_torque, cq, g)?;
    let qdot = &x.qdot + dt * &qddot;
    let q = &x.q + dt * &qdot;
    let next = JointState::new(q, qdot);
    if !next.is_finite() {
        return Err(DynamicsError::Diverged { magnitude: f64::INFINITY, bound: blowup });
    }
    let magnitude = next.max_abs();
    if magnitude > blowup {
        return Err(DynamicsError::Diverged { magnitude, bound: blowup });
    }
    Ok(StepDetail {
        next,
        u,
        tau_net,
        hard_contact_torque,
        qddot,
        contacts: pairs,
    })
}

/// [`step_with_bound`] without the per-step detail; skips the contact
/// evaluation entirely when the world has no contact pairs.
pub fn advance(
    model: &ArmModel,
    x: &JointState,
    u: &DVector<f64>,
    world: &World,
    params: &ContactParams,
    dt: f64,
    blowup: f64,
) -> Result<JointState, DynamicsError> {
    if !world.contact_pairs.is_empty() {
        return step_with_bound(model, x, u, world, params, dt, blowup).map(|d| d.next);
    }
    model.check_dim("u", u)?;
    model.check_dim("q", &x.q)?;
    model.check_dim("qdot", &x.qdot)?;
    let (m, cq, g) = arm_terms(model, x);
    let qddot = solve_acceleration(model, x, m, saturate(model, u), cq, g)?;
    let qdot = &x.qdot + dt * qddot;
    let q = &x.q + dt * &qdot;
    let next = JointState::new(q, qdot);
    if !next.is_finite() {
        return Err(DynamicsError::Diverged { magnitude: f64::INFINITY, bound: blowup });
    }
    let magnitude = next.max_abs();
    if magnitude > blowup {
        return Err(DynamicsError::Diverged { magnitude, bound: blowup });
    }
    Ok(next)
}
