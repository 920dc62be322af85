//! TOML scenario files.
//!
//! Units: lengths m, masses kg, angles rad, torques N·m, times s. Every
//! section except `arm`, `start` and `goal` may be omitted.

use std::path::Path;

use nalgebra::{DVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::ContactParams;
use crate::dynamics::{ArmModel, JointState, MassModel};
use crate::geometry::{self, ContactClass, ContactPair, ConvexPolygon, HardContact, World, DEFAULT_SURFACE_BAND};
use crate::lattice::{LatticeSpec, DEFAULT_RESOLUTION};
use crate::search::PlannerConfig;
use crate::trajopt::{CostWeights, SolveSettings};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

/// A fully resolved, validated planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub arm: ArmModel,
    pub world: World,
    pub start: JointState,
    pub goal: JointState,
    pub weights: CostWeights,
    pub contact: ContactParams,
    pub resolution: f64,
    pub planner: PlannerConfig,
    pub solver: SolveSettings,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// file layout

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    seed: u64,
    arm: ArmSection,
    #[serde(default)]
    world: WorldSection,
    start: StateSection,
    goal: StateSection,
    #[serde(default)]
    weights: CostWeights,
    #[serde(default)]
    contact: ContactSection,
    #[serde(default)]
    lattice: LatticeSection,
    #[serde(default)]
    planner: PlannerConfig,
    #[serde(default)]
    solver: SolveSettings,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArmSection {
    link_lengths: Vec<f64>,
    link_masses: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    link_com_offsets: Option<Vec<f64>>,
    #[serde(default)]
    mass_model: MassModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    link_radii: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gravity: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    joint_damping: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    torque_limits: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    velocity_limits: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    acceleration_limits: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    joint_limits: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    payload_mass: f64,
    #[serde(default)]
    payload_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldSection {
    #[serde(default = "default_band")]
    surface_band: f64,
    #[serde(default)]
    obstacles: Vec<ObstacleSection>,
    #[serde(default)]
    contact_pairs: Vec<ContactPair>,
    #[serde(default)]
    hard_contact: HardContact,
}

fn default_band() -> f64 {
    DEFAULT_SURFACE_BAND
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            surface_band: DEFAULT_SURFACE_BAND,
            obstacles: Vec::new(),
            contact_pairs: Vec::new(),
            hard_contact: HardContact::default(),
        }
    }
}

/// Either `vertices` (counter-clockwise) or an axis-aligned `min`/`max` box.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSection {
    q: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    qdot: Option<Vec<f64>>,
}

/// Overrides on [`ContactParams::for_pairs`]; per-pair lists default to zero.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContactSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu_k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    psidot_thres: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeSection {
    resolution: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self { resolution: DEFAULT_RESOLUTION }
    }
}

// ---------------------------------------------------------------------------
// resolution

fn per_joint(field: &str, given: Option<Vec<f64>>, n: usize, fill: impl Fn(usize) -> f64) -> Result<Vec<f64>, ScenarioError> {
    match given {
        Some(v) if v.len() != n => Err(invalid(format!("arm.{field}"), format!("expected {n} entries, found {}", v.len()))),
        Some(v) => Ok(v),
        None => Ok((0..n).map(fill).collect()),
    }
}

impl ArmSection {
    fn resolve(self) -> Result<ArmModel, ScenarioError> {
        let n = self.link_lengths.len();
        let lengths = self.link_lengths.clone();
        let model = ArmModel {
            link_com_offsets: per_joint("link_com_offsets", self.link_com_offsets, n, |i| 0.5 * lengths[i])?,
            link_radii: per_joint("link_radii", self.link_radii, n, |_| 0.02)?,
            joint_damping: per_joint("joint_damping", self.joint_damping, n, |_| 0.0)?,
            torque_limits: per_joint("torque_limits", self.torque_limits, n, |_| 50.0)?,
            velocity_limits: per_joint("velocity_limits", self.velocity_limits, n, |_| 10.0)?,
            acceleration_limits: per_joint("acceleration_limits", self.acceleration_limits, n, |_| 1e3)?,
            joint_limits: match self.joint_limits {
                Some(v) => v,
                None => vec![[-std::f64::consts::PI, std::f64::consts::PI]; n],
            },
            link_lengths: self.link_lengths,
            link_masses: self.link_masses,
            mass_model: self.mass_model,
            gravity: self.gravity.unwrap_or([0.0, -9.81]),
            payload_mass: self.payload_mass,
            payload_radius: self.payload_radius,
        };
        model.validate().map_err(|(field, reason)| invalid(format!("arm.{field}"), reason))?;
        Ok(model)
    }

    fn from_model(m: &ArmModel) -> Self {
        Self {
            link_lengths: m.link_lengths.clone(),
            link_masses: m.link_masses.clone(),
            link_com_offsets: Some(m.link_com_offsets.clone()),
            mass_model: m.mass_model,
            link_radii: Some(m.link_radii.clone()),
            gravity: Some(m.gravity),
            joint_damping: Some(m.joint_damping.clone()),
            torque_limits: Some(m.torque_limits.clone()),
            velocity_limits: Some(m.velocity_limits.clone()),
            acceleration_limits: Some(m.acceleration_limits.clone()),
            joint_limits: Some(m.joint_limits.clone()),
            payload_mass: m.payload_mass,
            payload_radius: m.payload_radius,
        }
    }
}

impl WorldSection {
    fn resolve(self, model: &ArmModel) -> Result<World, ScenarioError> {
        let mut polygons = Vec::with_capacity(self.obstacles.len());
        for (i, o) in self.obstacles.into_iter().enumerate() {
            let field = format!("world.obstacles[{i}]");
            let poly = match (o.vertices, o.min, o.max) {
                (Some(v), None, None) => ConvexPolygon::new(v.iter().map(|p| Vector2::new(p[0], p[1])).collect()),
                (None, Some(lo), Some(hi)) => ConvexPolygon::from_box(lo, hi),
                _ => return Err(invalid(field, "give either `vertices` or both `min` and `max`")),
            };
            polygons.push(poly.map_err(|e| invalid(field, e))?);
        }
        let world = World::new(polygons, self.surface_band, self.contact_pairs, self.hard_contact)
            .map_err(|e| invalid("world", e.to_string()))?;
        world.check_against(model).map_err(|e| invalid("world.contact_pairs", e.to_string()))?;
        let h = &world.hard_contact;
        for (name, v) in [("stiffness", h.stiffness), ("damping", h.damping), ("stick_viscosity", h.stick_viscosity)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("world.hard_contact.{name}"), format!("must be non-negative, got {v}")));
            }
        }
        Ok(world)
    }

    fn from_world(w: &World) -> Self {
        Self {
            surface_band: w.surface_band,
            obstacles: w
                .obstacles
                .iter()
                .map(|p| ObstacleSection {
                    vertices: Some(p.vertices().iter().map(|v| [v.x, v.y]).collect()),
                    min: None,
                    max: None,
                })
                .collect(),
            contact_pairs: w.contact_pairs.clone(),
            hard_contact: w.hard_contact,
        }
    }
}

impl StateSection {
    fn resolve(self, name: &str, model: &ArmModel, world: &World) -> Result<JointState, ScenarioError> {
        let n = model.dof();
        if self.q.len() != n {
            return Err(invalid(format!("{name}.q"), format!("expected {n} entries, found {}", self.q.len())));
        }
        let qdot = self.qdot.unwrap_or_else(|| vec![0.0; n]);
        if qdot.len() != n {
            return Err(invalid(format!("{name}.qdot"), format!("expected {n} entries, found {}", qdot.len())));
        }
        let x = JointState::from_slices(&self.q, &qdot);
        if !x.is_finite() {
            return Err(invalid(name, "non-finite value"));
        }
        if !geometry::within_joint_limits(model, &x.q) {
            return Err(invalid(format!("{name}.q"), "outside the joint limits"));
        }
        if geometry::classify(model, world, &x.q) == ContactClass::DeepCollision {
            return Err(invalid(format!("{name}.q"), "pose is in deep collision"));
        }
        Ok(x)
    }

    fn from_state(x: &JointState) -> Self {
        Self { q: x.q.iter().copied().collect(), qdot: Some(x.qdot.iter().copied().collect()) }
    }
}

impl ContactSection {
    fn resolve(self, pairs: usize) -> Result<ContactParams, ScenarioError> {
        let mut p = ContactParams::for_pairs(pairs);
        for (name, given, slot) in [("k", self.k, &mut p.k), ("b", self.b, &mut p.b), ("mu", self.mu, &mut p.mu)] {
            if let Some(v) = given {
                if v.len() != pairs {
                    return Err(invalid(format!("contact.{name}"), format!("expected one entry per contact pair ({pairs}), found {}", v.len())));
                }
                *slot = v;
            }
        }
        p.alpha_k = self.alpha_k.unwrap_or(p.alpha_k);
        p.alpha_b = self.alpha_b.unwrap_or(p.alpha_b);
        p.mu_s = self.mu_s.unwrap_or(p.mu_s);
        p.mu_k = self.mu_k.unwrap_or(p.mu_k);
        p.psidot_thres = self.psidot_thres.unwrap_or(p.psidot_thres);
        p.rho = self.rho.unwrap_or(p.rho);
        p.validate().map_err(|e| match e {
            crate::contact::ContactError::Invalid { field, reason } => invalid(format!("contact.{field}"), reason),
        })?;
        Ok(p)
    }

    fn from_params(p: &ContactParams) -> Self {
        Self {
            k: Some(p.k.clone()),
            b: Some(p.b.clone()),
            mu: Some(p.mu.clone()),
            alpha_k: Some(p.alpha_k),
            alpha_b: Some(p.alpha_b),
            mu_s: Some(p.mu_s),
            mu_k: Some(p.mu_k),
            psidot_thres: Some(p.psidot_thres),
            rho: Some(p.rho),
        }
    }
}

impl ScenarioFile {
    fn resolve(self) -> Result<Scenario, ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version)));
        }
        let arm = self.arm.resolve()?;
        let world = self.world.resolve(&arm)?;
        let start = self.start.resolve("start", &arm, &world)?;
        let goal = self.goal.resolve("goal", &arm, &world)?;
        self.weights.validate().map_err(|(f, r)| invalid(format!("weights.{f}"), r))?;
        let contact = self.contact.resolve(world.contact_pairs.len())?;
        LatticeSpec::new(self.lattice.resolution, &arm).map_err(|e| invalid("lattice.resolution", e.to_string()))?;
        self.planner.validate().map_err(|(f, r)| invalid(format!("planner.{f}"), r))?;
        self.solver.validate().map_err(|(f, r)| invalid(format!("solver.{f}"), r))?;
        Ok(Scenario {
            name: self.name,
            description: self.description,
            arm,
            world,
            start,
            goal,
            weights: self.weights,
            contact,
            resolution: self.lattice.resolution,
            planner: self.planner,
            solver: self.solver,
            seed: self.seed,
        })
    }
}

// ---------------------------------------------------------------------------
// public entry points

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        file.resolve()
    }

    pub fn to_toml_string(&self) -> String {
        let file = ScenarioFile {
            schema_version: SCHEMA_VERSION,
            name: self.name.clone(),
            description: self.description.clone(),
            seed: self.seed,
            arm: ArmSection::from_model(&self.arm),
            world: WorldSection::from_world(&self.world),
            start: StateSection::from_state(&self.start),
            goal: StateSection::from_state(&self.goal),
            weights: self.weights,
            contact: ContactSection::from_params(&self.contact),
            lattice: LatticeSection { resolution: self.resolution },
            planner: self.planner.clone(),
            solver: self.solver.clone(),
        };
        toml::to_string(&file).expect("scenario serializes")
    }

    pub fn lattice(&self) -> LatticeSpec {
        LatticeSpec::new(self.resolution, &self.arm).expect("validated on load")
    }

    /// Baseline variant with every contact pair removed.
    pub fn without_contact(&self) -> Self {
        Self {
            world: self.world.without_contact(),
            contact: ContactParams { k: Vec::new(), b: Vec::new(), mu: Vec::new(), ..self.contact.clone() },
            ..self.clone()
        }
    }

    pub fn goal_q(&self) -> &DVector<f64> {
        &self.goal.q
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::from_toml_str(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_toml_string()).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[arm]
link_lengths = [0.5]
link_masses = [1.0]

[start]
q = [-1.2]

[goal]
q = [-0.7]
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.arm.link_com_offsets, vec![0.25]);
        assert_eq!(s.arm.gravity, [0.0, -9.81]);
        assert_eq!(s.resolution, DEFAULT_RESOLUTION);
        assert_eq!(s.weights, CostWeights::default());
        assert_eq!(s.planner, PlannerConfig::default());
        assert_eq!(s.start.qdot[0], 0.0);
        assert!(s.world.obstacles.is_empty());
    }

    #[test]
    fn negative_mass_names_the_field() {
        let text = MINIMAL.replace("link_masses = [1.0]", "link_masses = [-1.0]");
        match Scenario::from_toml_str(&text) {
            Err(ScenarioError::Invalid { field, .. }) => assert_eq!(field, "arm.link_masses[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("[goal]", "[goal]\nvelocity = [0.0]");
        assert!(matches!(Scenario::from_toml_str(&text), Err(ScenarioError::Parse(_))));
        let text = MINIMAL.replace("[start]", "colour = 3\n[start]");
        assert!(matches!(Scenario::from_toml_str(&text), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn wrong_schema_version() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(Scenario::from_toml_str(&text), Err(ScenarioError::Invalid { field, .. }) if field == "schema_version"));
    }

    #[test]
    fn pair_lengths_are_checked() {
        let text = format!(
            "{MINIMAL}\n[world]\nobstacles = [{{ min = [-1.0, -1.0], max = [1.0, -0.6] }}]\ncontact_pairs = [{{ body = {{ link = 0 }}, obstacle = 0 }}]\n[contact]\nk = [1.0, 2.0]\n"
        );
        assert!(matches!(Scenario::from_toml_str(&text), Err(ScenarioError::Invalid { field, .. }) if field == "contact.k"));
    }

    #[test]
    fn round_trip_is_identity() {
        let text = format!(
            "{MINIMAL}\n[world]\nobstacles = [{{ min = [-1.0, -1.0], max = [1.0, -0.6] }}]\ncontact_pairs = [{{ body = {{ link = 0 }}, obstacle = 0 }}]\n[contact]\nk = [1.5]\n"
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
    }
}
