//! Replaying planned trajectories and the torque metrics reported per run.

use nalgebra::{DVector, Vector2};
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{self, ArmModel, DynamicsError, JointState};
use crate::geometry::{self, World};
use crate::lattice::LatticeSpec;
use crate::search::{PlanResult, PlanStats};
use crate::trajopt::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("replay failed: {0}")]
    Replay(#[from] DynamicsError),
    #[error("replay diverged from the stored states at sample {0}")]
    Inconsistent(usize),
    #[error("torque with contact is identically zero; TRR is undefined")]
    DegenerateTorque,
}

/// Contact quantities of one pair at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub psi: f64,
    /// Penalty normal force, N.
    pub omega_n: f64,
    /// Penalty friction along the surface tangent, N.
    pub omega_t: f64,
    pub gamma_n: f64,
    pub gamma_t: f64,
}

/// Everything known at one integration sample of an executed trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: JointState,
    /// Saturated motor command.
    pub u: DVector<f64>,
    /// Net generalized input with contact, `u − J_Γᵀ Γ`.
    pub tau_c: DVector<f64>,
    /// Torque needed for the same motion with every contact force removed.
    pub tau_wo: DVector<f64>,
    pub pairs: Vec<PairSample>,
}

/// Re-simulates `traj` from its first state, one sample per stored state.
///
/// The last sample holds the final knot value, which is what the spline
/// returns past its end.
pub fn execute(traj: &Trajectory, model: &ArmModel, world: &World) -> Result<Vec<Sample>, ReportError> {
    let mut controls = traj.step_controls(model);
    let last = traj.controls.knot_values.last().expect("at least one knot");
    controls.push(dynamics::saturate(model, last));
    let mut out = Vec::with_capacity(traj.states.len());
    for (i, (x, u)) in traj.states.iter().zip(&controls).enumerate() {
        let detail = dynamics::step_with_bound(model, x, u, world, &traj.contact_params, traj.dt, f64::MAX)?;
        if let Some(next) = traj.states.get(i + 1) {
            if detail.next != *next {
                return Err(ReportError::Inconsistent(i));
            }
        }
        let queries = world.query_contacts(model, x);
        let pairs = queries
            .iter()
            .zip(&detail.contacts)
            .map(|(c, f)| {
                let tangent = Vector2::new(-c.normal.y, c.normal.x);
                PairSample {
                    psi: c.psi,
                    omega_n: f.omega_n,
                    omega_t: f.omega_f.dot(&tangent),
                    gamma_n: f.gamma_n,
                    gamma_t: f.gamma_f.dot(&tangent),
                }
            })
            .collect();
        // M q̈ + C q̇ + G + D q̇ = τ_c + J_Ωᵀ Ω, so removing Ω leaves the sum
        let tau_wo = &detail.tau_net + &detail.hard_contact_torque;
        out.push(Sample {
            t: traj.times[i],
            state: x.clone(),
            u: detail.u,
            tau_c: detail.tau_net,
            tau_wo,
            pairs,
        });
    }
    Ok(out)
}

fn stacked_norm<'a>(series: impl Iterator<Item = &'a DVector<f64>>) -> f64 {
    series.map(|v| v.norm_squared()).sum::<f64>().sqrt()
}

/// Torque reduction ratio `(‖τ_wo‖ − ‖τ_c‖) / ‖τ_c‖` over trajectory-stacked norms.
pub fn trr_from_samples(samples: &[Sample]) -> Result<f64, ReportError> {
    let c = stacked_norm(samples.iter().map(|s| &s.tau_c));
    let wo = stacked_norm(samples.iter().map(|s| &s.tau_wo));
    if c == 0.0 {
        return Err(ReportError::DegenerateTorque);
    }
    Ok((wo - c) / c)
}

/// `(TRR, τ_c series, τ_wo series)`.
pub fn compute_trr(traj: &Trajectory, model: &ArmModel, world: &World) -> Result<(f64, Vec<DVector<f64>>, Vec<DVector<f64>>), ReportError> {
    let samples = execute(traj, model, world)?;
    let trr = trr_from_samples(&samples)?;
    Ok((trr, samples.iter().map(|s| s.tau_c.clone()).collect(), samples.iter().map(|s| s.tau_wo.clone()).collect()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Violations {
    /// Some `|τ_c|` sample above its torque limit.
    pub torque: bool,
    pub velocity: bool,
    pub joint_limits: bool,
    pub deep_collision: bool,
    pub terminal_outside_goal: bool,
}

impl Violations {
    pub fn any(&self) -> bool {
        self.torque || self.velocity || self.joint_limits || self.deep_collision || self.terminal_outside_goal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub success: bool,
    pub failure: Option<String>,
    pub wall_time: f64,
    pub stats: PlanStats,
    pub total_cost: Option<f64>,
    pub samples: usize,
    pub horizon: f64,
    pub rms_tau_c: Vec<f64>,
    pub rms_tau_wo: Vec<f64>,
    pub norm_tau_c: f64,
    pub norm_tau_wo: f64,
    pub trr: Option<f64>,
    pub max_abs_tau: f64,
    pub max_abs_u: f64,
    /// Samples with some contact pair inside the surface band.
    pub contact_samples: usize,
    pub final_contact_params: Vec<f64>,
    pub violations: Violations,
}

fn rms_per_joint(series: &[&DVector<f64>], n: usize) -> Vec<f64> {
    let count = series.len().max(1) as f64;
    (0..n).map(|j| (series.iter().map(|v| v[j] * v[j]).sum::<f64>() / count).sqrt()).collect()
}

fn max_abs<'a>(series: impl Iterator<Item = &'a DVector<f64>>) -> f64 {
    series.fold(0.0, |m, v| m.max(v.amax()))
}

impl RunReport {
    /// Report of a planner run; trajectory metrics come from `samples`.
    pub fn build(
        name: &str,
        result: &PlanResult,
        samples: Option<&[Sample]>,
        model: &ArmModel,
        world: &World,
        spec: &LatticeSpec,
        goal: &JointState,
    ) -> Self {
        let n = model.dof();
        let mut report = RunReport {
            scenario: name.to_string(),
            success: result.success,
            failure: result.failure.as_ref().map(|f| format!("{f:?}")),
            wall_time: result.stats.wall_time,
            stats: result.stats.clone(),
            total_cost: result.trajectory.as_ref().map(|t| t.total_cost),
            samples: 0,
            horizon: 0.0,
            rms_tau_c: Vec::new(),
            rms_tau_wo: Vec::new(),
            norm_tau_c: 0.0,
            norm_tau_wo: 0.0,
            trr: None,
            max_abs_tau: 0.0,
            max_abs_u: 0.0,
            contact_samples: 0,
            final_contact_params: Vec::new(),
            violations: Violations::default(),
        };
        let (Some(traj), Some(samples)) = (&result.trajectory, samples) else {
            return report;
        };
        let tau_c: Vec<&DVector<f64>> = samples.iter().map(|s| &s.tau_c).collect();
        let tau_wo: Vec<&DVector<f64>> = samples.iter().map(|s| &s.tau_wo).collect();
        report.samples = samples.len();
        report.horizon = traj.horizon();
        report.rms_tau_c = rms_per_joint(&tau_c, n);
        report.rms_tau_wo = rms_per_joint(&tau_wo, n);
        report.norm_tau_c = stacked_norm(tau_c.iter().copied());
        report.norm_tau_wo = stacked_norm(tau_wo.iter().copied());
        report.trr = trr_from_samples(samples).ok();
        report.max_abs_tau = max_abs(tau_c.iter().copied());
        report.max_abs_u = max_abs(samples.iter().map(|s| &s.u));
        report.contact_samples = samples.iter().filter(|s| s.pairs.iter().any(|p| p.psi <= world.surface_band)).count();
        report.final_contact_params = traj.contact_params.decision_vector();
        let limits = &model.torque_limits;
        report.violations = Violations {
            torque: samples.iter().any(|s| s.tau_c.iter().zip(limits).any(|(t, l)| t.abs() > *l)),
            velocity: samples.iter().any(|s| !geometry::within_velocity_limits(model, &s.state.qdot)),
            joint_limits: samples.iter().any(|s| !geometry::within_joint_limits(model, &s.state.q)),
            deep_collision: samples.iter().any(|s| geometry::classify(model, world, &s.state.q) == geometry::ContactClass::DeepCollision),
            terminal_outside_goal: match (spec.lambda(&traj.terminal_state), spec.lambda(goal)) {
                (Ok(a), Ok(b)) => a != b,
                _ => true,
            },
        };
        report
    }
}
