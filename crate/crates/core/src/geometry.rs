//! Obstacles, signed gaps between arm bodies and obstacles, contact-band
//! classification and projection of colliding poses onto the obstacle surface.

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, ArmModel, JointState};

pub const DEFAULT_SURFACE_BAND: f64 = 5e-3;
pub const DEFAULT_PROJECTION_ITERS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("obstacle {index}: {reason}")]
    BadObstacle { index: usize, reason: String },
    #[error("contact pair {index}: {reason}")]
    BadPair { index: usize, reason: String },
    #[error("surface band must be positive, got {0}")]
    BadBand(f64),
    #[error("projection did not reach the surface band within {0} iterations")]
    MaxIterationsExceeded(usize),
}

/// A rigid body of the arm that can touch obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    Link(usize),
    Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactPair {
    pub body: Body,
    pub obstacle: usize,
}

/// Stiff penalty contact standing in for the physics engine's contact solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HardContact {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// Viscous coefficient of the stick regime, N·s/m.
    pub stick_viscosity: f64,
}

impl Default for HardContact {
    fn default() -> Self {
        Self {
            stiffness: 3e4,
            damping: 50.0,
            stick_viscosity: 300.0,
        }
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vector2<f64>>,
    normals: Vec<Vector2<f64>>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vector2<f64>>) -> Result<Self, String> {
        let n = vertices.len();
        if n < 3 {
            return Err(format!("need at least 3 vertices, got {n}"));
        }
        if !vertices.iter().all(|v| v.x.is_finite() && v.y.is_finite()) {
            return Err("non-finite vertex".into());
        }
        let mut normals = Vec::with_capacity(n);
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let e = b - a;
            let len = e.norm();
            if len < 1e-12 {
                return Err(format!("degenerate edge at vertex {i}"));
            }
            if cross(e, c - b) <= 0.0 {
                return Err(format!("not strictly convex and counter-clockwise at vertex {}", (i + 1) % n));
            }
            normals.push(Vector2::new(e.y, -e.x) / len);
        }
        Ok(Self { vertices, normals })
    }

    pub fn from_box(min: [f64; 2], max: [f64; 2]) -> Result<Self, String> {
        if !(min[0] < max[0] && min[1] < max[1]) {
            return Err(format!("box min {min:?} must be below max {max:?}"));
        }
        Self::new(vec![
            Vector2::new(min[0], min[1]),
            Vector2::new(max[0], min[1]),
            Vector2::new(max[0], max[1]),
            Vector2::new(min[0], max[1]),
        ])
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    pub fn contains(&self, p: Vector2<f64>) -> bool {
        self.vertices
            .iter()
            .zip(&self.normals)
            .all(|(v, n)| n.dot(&(p - v)) <= 0.0)
    }

    fn edges(&self) -> impl Iterator<Item = (Vector2<f64>, Vector2<f64>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}

fn closest_on_segment(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> (Vector2<f64>, f64) {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 < 1e-24 {
        return (a, 0.0);
    }
    let t = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (a + t * d, t)
}

fn segments_cross(a: Vector2<f64>, b: Vector2<f64>, c: Vector2<f64>, d: Vector2<f64>) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Closest-feature result between a segment and a polygon.
#[derive(Debug, Clone, Copy)]
struct Proximity {
    /// Signed separation of the bare segment (no radius).
    sep: f64,
    /// Point on the segment line carrying the contact.
    x: Vector2<f64>,
    /// Matching point on the obstacle.
    y: Vector2<f64>,
    normal: Vector2<f64>,
    /// True when the normal is the segment's own normal and rotates with it.
    rotating: bool,
}

fn segment_polygon(a: Vector2<f64>, b: Vector2<f64>, poly: &ConvexPolygon) -> Proximity {
    let overlapping = poly.contains(a) || poly.contains(b) || poly.edges().any(|(c, d)| segments_cross(a, b, c, d));
    if !overlapping {
        let mut best: Option<(f64, Vector2<f64>, Vector2<f64>)> = None;
        let mut consider = |x: Vector2<f64>, y: Vector2<f64>| {
            let d = (x - y).norm();
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, x, y));
            }
        };
        for (c, d) in poly.edges() {
            for p in [a, b] {
                consider(p, closest_on_segment(p, c, d).0);
            }
        }
        for &v in poly.vertices() {
            consider(closest_on_segment(v, a, b).0, v);
        }
        let (d, x, y) = best.expect("polygon has vertices");
        if d > 1e-14 {
            return Proximity { sep: d, x, y, normal: (x - y) / d, rotating: false };
        }
    }
    // Overlapping: least penetration over the separating-axis candidates.
    let mut best = Proximity {
        sep: f64::NEG_INFINITY,
        x: a,
        y: a,
        normal: Vector2::x(),
        rotating: false,
    };
    for (v, n) in poly.vertices.iter().zip(&poly.normals) {
        let (da, db) = (n.dot(&a), n.dot(&b));
        let x = if (da - db).abs() < 1e-12 {
            0.5 * (a + b)
        } else if da < db {
            a
        } else {
            b
        };
        let sep = da.min(db) - n.dot(v);
        if sep > best.sep {
            best = Proximity { sep, x, y: x - sep * n, normal: *n, rotating: false };
        }
    }
    let dir = b - a;
    if dir.norm() > 1e-12 {
        let ns = perp(dir / dir.norm());
        for axis in [ns, -ns] {
            let y = *poly
                .vertices
                .iter()
                .max_by(|p, q| axis.dot(p).total_cmp(&axis.dot(q)))
                .expect("polygon has vertices");
            let sep = axis.dot(&a) - axis.dot(&y);
            if sep > best.sep {
                let (x, _) = closest_on_segment(y, a, b);
                best = Proximity { sep, x, y, normal: axis, rotating: true };
            }
        }
    }
    best
}

/// Immutable obstacle set plus contact bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub obstacles: Vec<ConvexPolygon>,
    /// β, m.
    pub surface_band: f64,
    pub contact_pairs: Vec<ContactPair>,
    pub hard_contact: HardContact,
}

impl World {
    pub fn empty() -> Self {
        Self {
            obstacles: Vec::new(),
            surface_band: DEFAULT_SURFACE_BAND,
            contact_pairs: Vec::new(),
            hard_contact: HardContact::default(),
        }
    }

    pub fn new(
        obstacles: Vec<ConvexPolygon>,
        surface_band: f64,
        contact_pairs: Vec<ContactPair>,
        hard_contact: HardContact,
    ) -> Result<Self, GeometryError> {
        if !(surface_band.is_finite() && surface_band > 0.0) {
            return Err(GeometryError::BadBand(surface_band));
        }
        for (index, pair) in contact_pairs.iter().enumerate() {
            if pair.obstacle >= obstacles.len() {
                return Err(GeometryError::BadPair {
                    index,
                    reason: format!("obstacle {} does not exist", pair.obstacle),
                });
            }
        }
        Ok(Self { obstacles, surface_band, contact_pairs, hard_contact })
    }

    /// Validates body references against an arm.
    pub fn check_against(&self, model: &ArmModel) -> Result<(), GeometryError> {
        for (index, pair) in self.contact_pairs.iter().enumerate() {
            match pair.body {
                Body::Link(i) if i >= model.dof() => {
                    return Err(GeometryError::BadPair { index, reason: format!("link {i} does not exist") })
                }
                Body::Payload if !model.has_payload_body() => {
                    return Err(GeometryError::BadPair { index, reason: "arm has no payload body".into() })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn without_contact(&self) -> Self {
        Self { contact_pairs: Vec::new(), ..self.clone() }
    }

    pub fn query_contacts(&self, model: &ArmModel, x: &JointState) -> Vec<ContactQuery> {
        query_contacts(model, self, x)
    }
}

/// Signed gap data for one contact pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactQuery {
    /// ψ, m. Positive when separated.
    pub psi: f64,
    /// ψ̇, m/s.
    pub psidot: f64,
    /// Point on the body surface closest to, or deepest into, the obstacle.
    pub witness_point: Vector2<f64>,
    /// Unit normal pointing from the obstacle into free space.
    pub normal: Vector2<f64>,
    pub pair_index: usize,
    pub body: Body,
    /// Link whose Jacobian carries forces at this contact.
    pub link: usize,
    /// Position of the force application point along `link`.
    pub arm_position: f64,
    /// World velocity of the force application point.
    pub point_velocity: Vector2<f64>,
}

struct BodyShape {
    link: usize,
    a: Vector2<f64>,
    b: Vector2<f64>,
    radius: f64,
}

fn body_shape(model: &ArmModel, joints: &[Vector2<f64>], body: Body) -> BodyShape {
    match body {
        Body::Link(i) => BodyShape { link: i, a: joints[i], b: joints[i + 1], radius: model.link_radii[i] },
        Body::Payload => {
            let tip = *joints.last().expect("joints");
            BodyShape { link: model.dof() - 1, a: tip, b: tip, radius: model.payload_radius }
        }
    }
}

fn bodies(model: &ArmModel) -> impl Iterator<Item = Body> {
    let n = model.dof();
    (0..n).map(Body::Link).chain(model.has_payload_body().then_some(Body::Payload))
}

fn link_rate(qdot: &DVector<f64>, link: usize) -> f64 {
    qdot.iter().take(link + 1).sum()
}

fn pair_query(
    model: &ArmModel,
    joints: &[Vector2<f64>],
    x: &JointState,
    body: Body,
    poly: &ConvexPolygon,
    pair_index: usize,
) -> ContactQuery {
    let shape = body_shape(model, joints, body);
    let prox = segment_polygon(shape.a, shape.b, poly);
    let arm_position = (prox.x - joints[shape.link]).norm();
    let jac = dynamics::point_jacobian(model, &x.q, shape.link, arm_position);
    let v = &jac * &x.qdot;
    let point_velocity = Vector2::new(v[0], v[1]);
    let mut psidot = prox.normal.dot(&point_velocity);
    if prox.rotating {
        let ndot = link_rate(&x.qdot, shape.link) * perp(prox.normal);
        psidot += ndot.dot(&(prox.x - prox.y));
    }
    ContactQuery {
        psi: prox.sep - shape.radius,
        psidot,
        witness_point: prox.x - shape.radius * prox.normal,
        normal: prox.normal,
        pair_index,
        body,
        link: shape.link,
        arm_position,
        point_velocity,
    }
}

/// One query per configured contact pair, in pair order.
pub fn query_contacts(model: &ArmModel, world: &World, x: &JointState) -> Vec<ContactQuery> {
    if world.contact_pairs.is_empty() {
        return Vec::new();
    }
    let joints = dynamics::joint_positions(model, &x.q);
    world
        .contact_pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| pair_query(model, &joints, x, pair.body, &world.obstacles[pair.obstacle], i))
        .collect()
}

/// Queries for every body against every obstacle, contact pair or not.
pub fn query_all(model: &ArmModel, world: &World, x: &JointState) -> Vec<ContactQuery> {
    let joints = dynamics::joint_positions(model, &x.q);
    let mut out = Vec::new();
    for body in bodies(model) {
        for poly in &world.obstacles {
            out.push(pair_query(model, &joints, x, body, poly, usize::MAX));
        }
    }
    out
}

/// Smallest signed gap between any body and any obstacle (infinite if none).
pub fn min_clearance(model: &ArmModel, world: &World, q: &DVector<f64>) -> f64 {
    let joints = dynamics::joint_positions(model, q);
    let mut best = f64::INFINITY;
    for body in bodies(model) {
        let shape = body_shape(model, &joints, body);
        for poly in &world.obstacles {
            best = best.min(segment_polygon(shape.a, shape.b, poly).sep - shape.radius);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactClass {
    Free,
    Surface,
    DeepCollision,
}

pub fn classify_clearance(psi_min: f64, beta: f64) -> ContactClass {
    if psi_min > beta {
        ContactClass::Free
    } else if psi_min >= -beta {
        ContactClass::Surface
    } else {
        ContactClass::DeepCollision
    }
}

pub fn classify(model: &ArmModel, world: &World, q: &DVector<f64>) -> ContactClass {
    classify_clearance(min_clearance(model, world, q), world.surface_band)
}

pub fn within_joint_limits(model: &ArmModel, q: &DVector<f64>) -> bool {
    q.iter().zip(&model.joint_limits).all(|(v, [lo, hi])| *v >= *lo && *v <= *hi)
}

pub fn within_velocity_limits(model: &ArmModel, qdot: &DVector<f64>) -> bool {
    qdot.iter().zip(&model.velocity_limits).all(|(v, lim)| v.abs() <= *lim)
}

/// Validity of a sampled trajectory: no deep collision, velocity and joint
/// limits respected. Surface contact is allowed.
pub fn states_are_valid<'a>(model: &ArmModel, world: &World, states: impl IntoIterator<Item = &'a JointState>) -> bool {
    states.into_iter().all(|s| {
        s.is_finite()
            && within_joint_limits(model, &s.q)
            && within_velocity_limits(model, &s.qdot)
            && classify(model, world, &s.q) != ContactClass::DeepCollision
    })
}

/// Central-difference gradient of the smallest gap with respect to `q`.
fn penetration_gradient(model: &ArmModel, world: &World, q: &DVector<f64>) -> DVector<f64> {
    let h = 1e-7;
    DVector::from_fn(q.len(), |i, _| {
        let mut qp = q.clone();
        let mut qm = q.clone();
        qp[i] += h;
        qm[i] -= h;
        (min_clearance(model, world, &qp) - min_clearance(model, world, &qm)) / (2.0 * h)
    })
}

/// Pushes a colliding pose out along the penetration gradient until it lies in
/// the surface band.
pub fn project_to_surface(model: &ArmModel, world: &World, x: &JointState) -> Result<JointState, GeometryError> {
    project_to_surface_with(model, world, x, DEFAULT_PROJECTION_ITERS)
}

pub fn project_to_surface_with(
    model: &ArmModel,
    world: &World,
    x: &JointState,
    max_iters: usize,
) -> Result<JointState, GeometryError> {
    let beta = world.surface_band;
    if min_clearance(model, world, &x.q) >= -beta {
        return Ok(x.clone());
    }
    let mut q = x.q.clone();
    for _ in 0..max_iters {
        let queries = query_all(model, world, &JointState::at_rest(q.clone()));
        let Some(deepest) = queries.iter().min_by(|a, b| a.psi.total_cmp(&b.psi)) else {
            break;
        };
        if deepest.psi > beta {
            break;
        }
        if deepest.psi >= -beta {
            let mut qdot = x.qdot.clone();
            for c in queries.iter().filter(|c| c.psi <= beta) {
                let g = dynamics::point_jacobian(model, &q, c.link, c.arm_position).transpose() * c.normal;
                let gg = g.norm_squared();
                if gg > 1e-18 {
                    qdot -= (g.dot(&qdot) / gg) * &g;
                }
            }
            return Ok(JointState::new(q, qdot));
        }
        let psi = deepest.psi;
        let g = penetration_gradient(model, world, &q);
        let gg = g.norm_squared();
        if gg < 1e-12 {
            // symmetric pose: nudge off the stationary point
            q.iter_mut().for_each(|v| *v += 1e-2);
            continue;
        }
        let full = -(0.25 * psi / gg) * &g;
        let mut scale = 1.0;
        let mut next = &q + &full;
        while min_clearance(model, world, &next) > beta && scale > 1e-6 {
            scale *= 0.5;
            next = &q + scale * &full;
        }
        q = next;
    }
    Err(GeometryError::MaxIterationsExceeded(max_iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_link() -> ArmModel {
        let mut m = ArmModel::uniform(&[0.5, 0.4], &[1.0, 1.0], [0.0, -9.81]);
        m.link_radii = vec![0.03, 0.02];
        m.payload_radius = 0.04;
        m.payload_mass = 0.5;
        m
    }

    fn wall_world(x0: f64) -> World {
        let wall = ConvexPolygon::from_box([x0, -2.0], [x0 + 1.0, 2.0]).unwrap();
        World::new(
            vec![wall],
            DEFAULT_SURFACE_BAND,
            vec![ContactPair { body: Body::Link(1), obstacle: 0 }, ContactPair { body: Body::Payload, obstacle: 0 }],
            HardContact::default(),
        )
        .unwrap()
    }

    #[test]
    fn polygon_validation() {
        let cw = vec![Vector2::new(0.0, 0.0), Vector2::new(0.0, 1.0), Vector2::new(1.0, 0.0)];
        assert!(ConvexPolygon::new(cw).is_err());
        assert!(ConvexPolygon::new(vec![Vector2::zeros(), Vector2::x()]).is_err());
        assert!(ConvexPolygon::from_box([0.0, 0.0], [0.0, 1.0]).is_err());
    }

    #[test]
    fn separated_gap_is_euclidean_clearance() {
        let m = two_link();
        let world = wall_world(2.0);
        let x = JointState::at_rest(DVector::from_vec(vec![0.0, 0.0]));
        let qs = world.query_contacts(&m, &x);
        // link 1 ends at x = 0.9, radius 0.02
        assert_relative_eq!(qs[0].psi, 2.0 - 0.9 - 0.02, epsilon = 1e-12);
        assert_relative_eq!(qs[1].psi, 2.0 - 0.9 - 0.04, epsilon = 1e-12);
        assert_relative_eq!(qs[0].normal, Vector2::new(-1.0, 0.0), epsilon = 1e-12);
        assert_eq!(classify(&m, &world, &x.q), ContactClass::Free);
    }

    #[test]
    fn tangent_capsule_has_zero_gap() {
        let mut m = ArmModel::uniform(&[1.0], &[1.0], [0.0, 0.0]);
        m.link_radii = vec![0.05];
        let floor = ConvexPolygon::from_box([-2.0, -1.0], [2.0, -0.05]).unwrap();
        let world = World::new(vec![floor], 5e-3, vec![ContactPair { body: Body::Link(0), obstacle: 0 }], HardContact::default()).unwrap();
        let x = JointState::at_rest(DVector::zeros(1));
        let q = &world.query_contacts(&m, &x)[0];
        assert!(q.psi.abs() < 1e-9);
        assert_eq!(classify(&m, &world, &x.q), ContactClass::Surface);
    }

    #[test]
    fn classification_bands() {
        let beta = 5e-3;
        assert_eq!(classify_clearance(1.0, beta), ContactClass::Free);
        assert_eq!(classify_clearance(0.0, beta), ContactClass::Surface);
        assert_eq!(classify_clearance(-10.0 * beta, beta), ContactClass::DeepCollision);
    }

    #[test]
    fn vertex_poking_segment_is_continuous() {
        let diamond = ConvexPolygon::new(vec![
            Vector2::new(0.0, -1.0),
            Vector2::new(1.0, 0.0),
            Vector2::new(0.0, 1.0),
            Vector2::new(-1.0, 0.0),
        ])
        .unwrap();
        for d in [1e-3, 1e-6, -1e-6, -1e-3] {
            let p = segment_polygon(Vector2::new(-2.0, 1.0 + d), Vector2::new(2.0, 1.0 + d), &diamond);
            assert_relative_eq!(p.sep, d, epsilon = 1e-12);
        }
    }

    #[test]
    fn psidot_matches_finite_difference() {
        let m = two_link();
        let box1 = ConvexPolygon::from_box([0.3, 0.1], [0.9, 0.5]).unwrap();
        let tri = ConvexPolygon::new(vec![Vector2::new(-0.6, -0.2), Vector2::new(0.1, -0.7), Vector2::new(0.2, -0.1)]).unwrap();
        let pairs = vec![
            ContactPair { body: Body::Link(0), obstacle: 0 },
            ContactPair { body: Body::Link(1), obstacle: 0 },
            ContactPair { body: Body::Link(1), obstacle: 1 },
            ContactPair { body: Body::Payload, obstacle: 1 },
        ];
        let world = World::new(vec![box1, tri], 5e-3, pairs, HardContact::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let delta = 1e-7;
        let mut checked = 0;
        for _ in 0..500 {
            let x = JointState::new(
                DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0)),
                DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
            );
            let now = world.query_contacts(&m, &x);
            let later = world.query_contacts(&m, &JointState::new(&x.q + delta * &x.qdot, x.qdot.clone()));
            let earlier = world.query_contacts(&m, &JointState::new(&x.q - delta * &x.qdot, x.qdot.clone()));
            for ((a, b), c) in now.iter().zip(&later).zip(&earlier) {
                let fwd = (b.psi - a.psi) / delta;
                let bwd = (a.psi - c.psi) / delta;
                // skip feature switches where ψ has a kink
                if (fwd - bwd).abs() > 1e-4 {
                    continue;
                }
                assert!((fwd - a.psidot).abs() < 1e-4, "fd {fwd} vs {}", a.psidot);
                checked += 1;
            }
        }
        assert!(checked > 1500);
    }

    #[test]
    fn projection_backs_tip_out_of_wall() {
        let m = ArmModel::uniform(&[1.0], &[1.0], [0.0, 0.0]);
        let beta = DEFAULT_SURFACE_BAND;
        let r = m.link_radii[0];
        let wall = ConvexPolygon::from_box([1.0 + r - 2.0 * beta, -2.0], [3.0, 2.0]).unwrap();
        let world = World::new(vec![wall], beta, vec![], HardContact::default()).unwrap();
        let x = JointState::at_rest(DVector::zeros(1));
        assert_eq!(classify(&m, &world, &x.q), ContactClass::DeepCollision);
        let p = project_to_surface(&m, &world, &x).unwrap();
        // direct back-off: the tip sits at cos(q) along x
        let psi = (1.0 + r - 2.0 * beta) - (p.q[0].cos() + r);
        assert!(psi >= -beta - 1e-12 && psi <= beta, "psi {psi}");
        assert_eq!(classify(&m, &world, &p.q), ContactClass::Surface);
    }

    #[test]
    fn projection_leaves_surface_state_alone() {
        let m = ArmModel::uniform(&[1.0], &[1.0], [0.0, 0.0]);
        let r = m.link_radii[0];
        let wall = ConvexPolygon::from_box([1.0 + r, -2.0], [3.0, 2.0]).unwrap();
        let world = World::new(vec![wall], 5e-3, vec![], HardContact::default()).unwrap();
        let x = JointState::at_rest(DVector::zeros(1));
        assert_eq!(project_to_surface(&m, &world, &x).unwrap(), x);
    }

    #[test]
    fn enclosed_link_cannot_be_projected() {
        let m = ArmModel::uniform(&[1.0], &[1.0], [0.0, 0.0]);
        let block = ConvexPolygon::from_box([-5.0, -5.0], [5.0, 5.0]).unwrap();
        let world = World::new(vec![block], 5e-3, vec![], HardContact::default()).unwrap();
        let err = project_to_surface(&m, &world, &JointState::at_rest(DVector::zeros(1))).unwrap_err();
        assert_eq!(err, GeometryError::MaxIterationsExceeded(DEFAULT_PROJECTION_ITERS));
    }

    #[test]
    fn sliding_along_wall_is_valid_but_deep_sample_is_not() {
        let m = ArmModel::uniform(&[1.0], &[1.0], [0.0, 0.0]);
        let r = m.link_radii[0];
        // floor touching the link at q = 0 from below
        let floor = ConvexPolygon::from_box([-3.0, -1.0], [3.0, -r]).unwrap();
        let world = World::new(vec![floor], 5e-3, vec![], HardContact::default()).unwrap();
        let sliding: Vec<_> = (0..10).map(|i| JointState::from_slices(&[0.0004 * i as f64], &[0.4])).collect();
        assert!(states_are_valid(&m, &world, &sliding));
        let mut bad = sliding.clone();
        bad[4] = JointState::from_slices(&[-0.2], &[0.4]);
        assert!(!states_are_valid(&m, &world, &bad));
        let open = World::empty();
        assert!(states_are_valid(&m, &open, &sliding));
    }

    proptest! {
        #[test]
        fn classify_partitions(psi in -1.0f64..1.0, beta in 1e-4f64..0.1) {
            let c = classify_clearance(psi, beta);
            let labels = [psi > beta, (-beta..=beta).contains(&psi), psi < -beta];
            prop_assert_eq!(labels.iter().filter(|b| **b).count(), 1);
            let expected = if labels[0] { ContactClass::Free } else if labels[1] { ContactClass::Surface } else { ContactClass::DeepCollision };
            prop_assert_eq!(c, expected);
        }

        #[test]
        fn gap_is_lipschitz(q0 in -3.0f64..3.0, q1 in -3.0f64..3.0, d0 in -1e-4f64..1e-4, d1 in -1e-4f64..1e-4) {
            let m = two_link();
            let world = wall_world(0.6);
            let q = DVector::from_vec(vec![q0, q1]);
            let dq = DVector::from_vec(vec![d0, d1]);
            let lip = 2.0 * m.link_lengths.iter().sum::<f64>();
            let a = min_clearance(&m, &world, &q);
            let b = min_clearance(&m, &world, &(&q + &dq));
            prop_assert!((a - b).abs() <= lip * dq.norm() + 1e-12);
        }

        #[test]
        fn successful_projection_lands_in_band(q0 in -1.5f64..1.5, q1 in -2.0f64..2.0) {
            let m = two_link();
            let world = wall_world(0.6);
            let x = JointState::at_rest(DVector::from_vec(vec![q0, q1]));
            if classify(&m, &world, &x.q) == ContactClass::DeepCollision {
                if let Ok(p) = project_to_surface(&m, &world, &x) {
                    prop_assert_eq!(classify(&m, &world, &p.q), ContactClass::Surface);
                }
            }
        }
    }
}
