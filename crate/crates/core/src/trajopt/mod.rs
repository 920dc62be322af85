//! Risk-sensitive iLQR over spline-parameterized controls.
//!
//! The knot values of the control spline are the iLQR controls. Stage `j`
//! maps the augmented state `z = [q, q̇, u_{j-1}, u_{j-2}]` across one knot
//! interval with the arm dynamics, so every iterate is a true rollout.

pub mod cost;
pub mod spline;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact::ContactParams;
use crate::dynamics::{self, ArmModel, DynamicsError, JointState};
use crate::geometry::World;

pub use cost::{
    cost_gradient, cost_hessian_gn, risk_transform, risk_transform_checked, running_cost, CostDerivatives, CostWeights,
    NormKind, Residual,
};
pub use spline::{segment_control, ControlSpline, Interpolation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajoptError {
    #[error("rollout diverged: {0}")]
    Diverged(#[from] DynamicsError),
    #[error("invalid solve input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSettings {
    /// Integration step, s.
    pub dt: f64,
    /// Integration steps per knot interval.
    pub segment_steps: usize,
    /// Knot intervals per lattice hop; the hop horizon is
    /// `segments_per_hop · segment_steps · dt`.
    pub segments_per_hop: usize,
    pub max_iterations: usize,
    /// Smallest line-search step.
    pub alpha_min: f64,
    pub reg_init: f64,
    pub reg_growth: f64,
    pub reg_shrink: f64,
    pub reg_min: f64,
    pub reg_max: f64,
    /// Relative cost decrease below which iLQR stops.
    pub cost_tolerance: f64,
    pub interpolation: Interpolation,
    /// Coordinate-descent sweeps over (k, b, μ) per outer round.
    pub contact_sweeps: usize,
    pub outer_iterations: usize,
    pub golden_iterations: usize,
    pub blowup: f64,
    pub fd_step: f64,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            segment_steps: 50,
            segments_per_hop: 10,
            max_iterations: 25,
            alpha_min: 1.0 / 64.0,
            reg_init: 1e-2,
            reg_growth: 10.0,
            reg_shrink: 0.5,
            reg_min: 1e-9,
            reg_max: 1e8,
            cost_tolerance: 1e-4,
            interpolation: Interpolation::Linear,
            contact_sweeps: 3,
            outer_iterations: 2,
            golden_iterations: 12,
            blowup: dynamics::DEFAULT_BLOWUP,
            fd_step: 1e-6,
        }
    }
}

impl SolveSettings {
    pub fn hop_horizon(&self) -> f64 {
        (self.segments_per_hop * self.segment_steps) as f64 * self.dt
    }

    pub fn knot_spacing(&self) -> f64 {
        self.segment_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<(), (String, String)> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(("dt".into(), format!("must be positive, got {}", self.dt)));
        }
        if self.segment_steps == 0 || self.segments_per_hop == 0 {
            return Err(("segment_steps".into(), "segment counts must be positive".into()));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < 1.0) {
            return Err(("alpha_min".into(), format!("must lie in (0, 1), got {}", self.alpha_min)));
        }
        if !(self.reg_growth > 1.0 && self.reg_shrink > 0.0 && self.reg_shrink < 1.0) {
            return Err(("reg_growth".into(), "need reg_growth > 1 and 0 < reg_shrink < 1".into()));
        }
        if !(self.blowup > 0.0) {
            return Err(("blowup".into(), "must be positive".into()));
        }
        Ok(())
    }
}

/// Target joint position and the half-width of its lattice cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub q: DVector<f64>,
    pub half_width: f64,
}

impl Goal {
    pub fn contains(&self, q: &DVector<f64>) -> bool {
        q.iter().zip(self.q.iter()).all(|(a, c)| {
            let d = a - c;
            d >= -self.half_width && d < self.half_width
        })
    }
}

/// Everything a solve needs besides its boundary conditions.
#[derive(Debug, Clone, Copy)]
pub struct SolveContext<'a> {
    pub model: &'a ArmModel,
    pub world: &'a World,
    pub weights: &'a CostWeights,
    pub settings: &'a SolveSettings,
    /// Relaxed contact parameters used when no warm start is given.
    pub initial_params: &'a ContactParams,
}

/// Time-parameterized rollout with its control spline and contact parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<JointState>,
    pub controls: ControlSpline,
    pub contact_params: ContactParams,
    pub total_cost: f64,
    pub converged: bool,
    pub terminal_state: JointState,
    pub goal: Goal,
    pub dt: f64,
    pub segment_steps: usize,
    /// Cost after the initial rollout and after every accepted update.
    pub cost_log: Vec<f64>,
    pub iterations: usize,
}

impl Trajectory {
    pub fn segments(&self) -> usize {
        self.controls.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn start(&self) -> &JointState {
        &self.states[0]
    }

    /// States at the knot times.
    pub fn knot_states(&self) -> Vec<JointState> {
        self.states.iter().step_by(self.segment_steps).cloned().collect()
    }

    /// Applied (saturated) control at every integration step.
    pub fn step_controls(&self, model: &ArmModel) -> Vec<DVector<f64>> {
        let knots = &self.controls.knot_values;
        let mut out = Vec::with_capacity(self.states.len());
        for seg in 0..self.segments() {
            let before = &knots[seg.saturating_sub(1)];
            for i in 0..self.segment_steps {
                let s = i as f64 / self.segment_steps as f64;
                let u = segment_control(self.controls.interpolation, before, &knots[seg], &knots[seg + 1], s, &model.torque_limits);
                out.push(dynamics::saturate(model, &u));
            }
        }
        out
    }
}

/// Optional initial guess: knot values plus contact parameters.
#[derive(Debug, Clone)]
pub struct Init {
    pub knots: Vec<DVector<f64>>,
    pub params: ContactParams,
}

// ---------------------------------------------------------------------------
// rollouts

/// Integrates one knot interval from `x`. Shared by the stage maps and the
/// dense rollout so both produce identical numbers.
fn integrate_segment(
    ctx: &SolveContext,
    x: &JointState,
    before: &DVector<f64>,
    start: &DVector<f64>,
    end: &DVector<f64>,
    params: &ContactParams,
    mut collect: Option<&mut Vec<JointState>>,
) -> Result<JointState, DynamicsError> {
    let s_count = ctx.settings.segment_steps;
    let limits = &ctx.model.torque_limits;
    let mut state = x.clone();
    for i in 0..s_count {
        let s = i as f64 / s_count as f64;
        let u = segment_control(ctx.settings.interpolation, before, start, end, s, limits);
        state = dynamics::advance(ctx.model, &state, &u, ctx.world, params, ctx.settings.dt, ctx.settings.blowup)?;
        if let Some(out) = collect.as_deref_mut() {
            out.push(state.clone());
        }
    }
    Ok(state)
}

/// Dense rollout of a knot sequence from `x0`, one state per integration step.
pub fn rollout(
    ctx: &SolveContext,
    x0: &JointState,
    knots: &[DVector<f64>],
    params: &ContactParams,
) -> Result<Vec<JointState>, DynamicsError> {
    let segments = knots.len().saturating_sub(1);
    let mut states = Vec::with_capacity(segments * ctx.settings.segment_steps + 1);
    states.push(x0.clone());
    let mut x = x0.clone();
    for seg in 0..segments {
        x = integrate_segment(ctx, &x, &knots[seg.saturating_sub(1)], &knots[seg], &knots[seg + 1], params, Some(&mut states))?;
    }
    Ok(states)
}

fn stage_terms(
    ctx: &SolveContext,
    j: usize,
    x: &JointState,
    v: &DVector<f64>,
) -> Vec<Residual> {
    let w = ctx.weights;
    let mut terms = cost::stage_residuals(x, Some(v), None, w, None);
    if j == 0 {
        // the start velocity is fixed; it is counted at stage 1
        terms.retain(|t| t.ju.ncols() > 0 && t.ju.iter().any(|e| *e != 0.0));
    }
    terms
}

fn terminal_terms(ctx: &SolveContext, x: &JointState, goal: &Goal, params: &ContactParams) -> Vec<Residual> {
    let with_params = (params.pairs() > 0).then_some(params);
    cost::stage_residuals(x, None, Some(&goal.q), ctx.weights, with_params)
}

/// `J_total = Σ_j ξ(l_j, R) + ξ(l_T, R)` from the knot-time states.
pub fn trajectory_cost(
    ctx: &SolveContext,
    knot_states: &[JointState],
    knots: &[DVector<f64>],
    params: &ContactParams,
    goal: &Goal,
) -> f64 {
    let w = ctx.weights;
    let mut total = 0.0;
    for (j, v) in knots.iter().enumerate() {
        let x = &knot_states[j.saturating_sub(1)];
        total += risk_transform(cost::terms_value(&stage_terms(ctx, j, x, v), w.norm), w.risk);
    }
    let last = knot_states.last().expect("at least one state");
    total + risk_transform(cost::terms_value(&terminal_terms(ctx, last, goal, params), w.norm), w.risk)
}

/// Cost recomputed from a stored trajectory.
pub fn recompute_cost(ctx: &SolveContext, traj: &Trajectory) -> f64 {
    trajectory_cost(ctx, &traj.knot_states(), &traj.controls.knot_values, &traj.contact_params, &traj.goal)
}

fn build_trajectory(
    ctx: &SolveContext,
    x0: &JointState,
    knots: Vec<DVector<f64>>,
    params: ContactParams,
    goal: &Goal,
    cost_log: Vec<f64>,
    iterations: usize,
) -> Result<Trajectory, TrajoptError> {
    let states = rollout(ctx, x0, &knots, &params)?;
    let dt = ctx.settings.dt;
    let times = (0..states.len()).map(|i| i as f64 * dt).collect();
    let spline = ControlSpline::uniform(knots, ctx.settings.knot_spacing(), ctx.settings.interpolation);
    let terminal_state = states.last().expect("non-empty").clone();
    let mut traj = Trajectory {
        times,
        states,
        controls: spline,
        contact_params: params,
        total_cost: 0.0,
        converged: goal.contains(&terminal_state.q),
        terminal_state,
        goal: goal.clone(),
        dt,
        segment_steps: ctx.settings.segment_steps,
        cost_log,
        iterations,
    };
    traj.total_cost = recompute_cost(ctx, &traj);
    Ok(traj)
}

// ---------------------------------------------------------------------------
// augmented stage maps

struct Layout {
    n: usize,
}

impl Layout {
    fn nz(&self) -> usize {
        4 * self.n
    }

    fn pack(&self, x: &JointState, prev: &DVector<f64>, prev2: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut z = DVector::zeros(4 * n);
        z.rows_mut(0, n).copy_from(&x.q);
        z.rows_mut(n, n).copy_from(&x.qdot);
        z.rows_mut(2 * n, n).copy_from(prev);
        z.rows_mut(3 * n, n).copy_from(prev2);
        z
    }

    fn state(&self, z: &DVector<f64>) -> JointState {
        JointState::new(z.rows(0, self.n).into_owned(), z.rows(self.n, self.n).into_owned())
    }

    fn prev(&self, z: &DVector<f64>) -> DVector<f64> {
        z.rows(2 * self.n, self.n).into_owned()
    }

    fn prev2(&self, z: &DVector<f64>) -> DVector<f64> {
        z.rows(3 * self.n, self.n).into_owned()
    }
}

fn stage_map(
    ctx: &SolveContext,
    lay: &Layout,
    j: usize,
    z: &DVector<f64>,
    v: &DVector<f64>,
    params: &ContactParams,
) -> Result<DVector<f64>, DynamicsError> {
    let x = lay.state(z);
    if j == 0 {
        return Ok(lay.pack(&x, v, v));
    }
    let prev = lay.prev(z);
    let next = integrate_segment(ctx, &x, &lay.prev2(z), &prev, v, params, None)?;
    Ok(lay.pack(&next, v, &prev))
}

struct Nominal {
    z: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    cost: f64,
}

fn total_from_z(ctx: &SolveContext, lay: &Layout, nom_z: &[DVector<f64>], v: &[DVector<f64>], params: &ContactParams, goal: &Goal) -> f64 {
    let knot_states: Vec<JointState> = nom_z[1..].iter().map(|z| lay.state(z)).collect();
    trajectory_cost(ctx, &knot_states, v, params, goal)
}

/// Rollout under the policy `v = clamp(v̄ + α k + K (z − z̄))`.
fn policy_rollout(
    ctx: &SolveContext,
    lay: &Layout,
    nominal: &Nominal,
    gains: Option<(&[DVector<f64>], &[DMatrix<f64>])>,
    alpha: f64,
    params: &ContactParams,
    goal: &Goal,
) -> Option<Nominal> {
    let limits = &ctx.model.torque_limits;
    let k_count = nominal.v.len();
    let mut z = nominal.z[0].clone();
    let mut zs = Vec::with_capacity(k_count + 1);
    let mut vs = Vec::with_capacity(k_count);
    zs.push(z.clone());
    for j in 0..k_count {
        let mut v = nominal.v[j].clone();
        if let Some((ff, fb)) = gains {
            v += alpha * &ff[j] + &fb[j] * (&z - &nominal.z[j]);
        }
        for (e, l) in v.iter_mut().zip(limits) {
            *e = e.clamp(-l, *l);
        }
        z = stage_map(ctx, lay, j, &z, &v, params).ok()?;
        zs.push(z.clone());
        vs.push(v);
    }
    let cost = total_from_z(ctx, lay, &zs, &vs, params, goal);
    cost.is_finite().then_some(Nominal { z: zs, v: vs, cost })
}

type StageJacobian = (DMatrix<f64>, DMatrix<f64>);

fn stage_jacobian(
    ctx: &SolveContext,
    lay: &Layout,
    j: usize,
    z: &DVector<f64>,
    v: &DVector<f64>,
    z_next: &DVector<f64>,
    params: &ContactParams,
) -> StageJacobian {
    let n = lay.n;
    let nz = lay.nz();
    let mut a = DMatrix::zeros(nz, nz);
    let mut b = DMatrix::zeros(nz, n);
    if j == 0 {
        a.view_mut((0, 0), (2 * n, 2 * n)).fill_with_identity();
        for i in 0..n {
            b[(2 * n + i, i)] = 1.0;
            b[(3 * n + i, i)] = 1.0;
        }
        return (a, b);
    }
    for i in 0..n {
        b[(2 * n + i, i)] = 1.0;
        a[(3 * n + i, 2 * n + i)] = 1.0;
    }
    let h = ctx.settings.fd_step;
    let base = z_next.rows(0, 2 * n).into_owned();
    let column = |zp: &DVector<f64>, vp: &DVector<f64>| -> DVector<f64> {
        match stage_map(ctx, lay, j, zp, vp, params) {
            Ok(next) => (next.rows(0, 2 * n) - &base) / h,
            Err(_) => DVector::zeros(2 * n),
        }
    };
    let z_cols = match ctx.settings.interpolation {
        Interpolation::Cubic => 4 * n,
        _ => 3 * n,
    };
    for c in 0..z_cols {
        let mut zp = z.clone();
        zp[c] += h;
        a.view_mut((0, c), (2 * n, 1)).copy_from(&column(&zp, v));
    }
    if ctx.settings.interpolation != Interpolation::ZeroOrder {
        for c in 0..n {
            let mut vp = v.clone();
            vp[c] += h;
            b.view_mut((0, c), (2 * n, 1)).copy_from(&column(z, &vp));
        }
    }
    (a, b)
}

fn embed_stage_cost(ctx: &SolveContext, lay: &Layout, j: usize, z: &DVector<f64>, v: &DVector<f64>) -> CostDerivatives {
    let x = lay.state(z);
    let nz = lay.nz();
    let terms: Vec<Residual> = stage_terms(ctx, j, &x, v)
        .into_iter()
        .map(|t| {
            let mut jx = DMatrix::zeros(t.r.len(), nz);
            jx.view_mut((0, 0), (t.r.len(), 2 * lay.n)).copy_from(&t.jx);
            Residual { jx, ..t }
        })
        .collect();
    cost::terms_derivatives(&terms, nz, lay.n, ctx.weights.risk, ctx.weights.norm)
}

fn embed_terminal_cost(ctx: &SolveContext, lay: &Layout, z: &DVector<f64>, goal: &Goal, params: &ContactParams) -> CostDerivatives {
    let x = lay.state(z);
    let nz = lay.nz();
    let terms: Vec<Residual> = terminal_terms(ctx, &x, goal, params)
        .into_iter()
        .map(|t| {
            let mut jx = DMatrix::zeros(t.r.len(), nz);
            jx.view_mut((0, 0), (t.r.len(), 2 * lay.n)).copy_from(&t.jx);
            Residual { jx, ju: DMatrix::zeros(t.r.len(), lay.n), ..t }
        })
        .collect();
    cost::terms_derivatives(&terms, nz, lay.n, ctx.weights.risk, ctx.weights.norm)
}

struct Gains {
    ff: Vec<DVector<f64>>,
    fb: Vec<DMatrix<f64>>,
}

/// Riccati sweep with Levenberg regularization and box-clamped feedforward.
fn backward_pass(
    lay: &Layout,
    nominal: &Nominal,
    jacobians: &[StageJacobian],
    stage_costs: &[CostDerivatives],
    terminal: &CostDerivatives,
    reg: f64,
    limits: &[f64],
) -> Option<Gains> {
    let n = lay.n;
    let k_count = nominal.v.len();
    let mut vx = terminal.cx.clone();
    let mut vxx = terminal.cxx.clone();
    let mut ff = vec![DVector::zeros(n); k_count];
    let mut fb = vec![DMatrix::zeros(n, lay.nz()); k_count];
    for j in (0..k_count).rev() {
        let (a, b) = &jacobians[j];
        let c = &stage_costs[j];
        let qx = &c.cx + a.transpose() * &vx;
        let qu = &c.cu + b.transpose() * &vx;
        let vxx_a = &vxx * a;
        let qxx = &c.cxx + a.transpose() * &vxx_a;
        let qux = &c.cux + b.transpose() * &vxx_a;
        let quu = &c.cuu + b.transpose() * &vxx * b;
        let quu_reg = &quu + DMatrix::identity(n, n) * reg;
        let chol = quu_reg.clone().cholesky()?;
        let mut k = -chol.solve(&qu);
        let mut gain = -chol.solve(&qux);
        let ubar = &nominal.v[j];
        let clamped: Vec<bool> = (0..n)
            .map(|i| {
                let t = ubar[i] + k[i];
                t > limits[i] || t < -limits[i]
            })
            .collect();
        if clamped.iter().any(|c| *c) {
            let free: Vec<usize> = (0..n).filter(|i| !clamped[*i]).collect();
            let fixed: Vec<usize> = (0..n).filter(|i| clamped[*i]).collect();
            let mut kc = DVector::zeros(n);
            for &i in &fixed {
                kc[i] = (ubar[i] + k[i]).clamp(-limits[i], limits[i]) - ubar[i];
            }
            let mut new_k = kc.clone();
            let mut new_gain = DMatrix::zeros(n, lay.nz());
            if !free.is_empty() {
                let qff = DMatrix::from_fn(free.len(), free.len(), |r, s| quu_reg[(free[r], free[s])]);
                let chol_f = qff.cholesky()?;
                let rhs = DVector::from_fn(free.len(), |r, _| {
                    qu[free[r]] + fixed.iter().map(|&c| quu_reg[(free[r], c)] * kc[c]).sum::<f64>()
                });
                let kf = -chol_f.solve(&rhs);
                let qux_f = DMatrix::from_fn(free.len(), lay.nz(), |r, s| qux[(free[r], s)]);
                let gf = -chol_f.solve(&qux_f);
                for (r, &i) in free.iter().enumerate() {
                    new_k[i] = kf[r];
                    new_gain.row_mut(i).copy_from(&gf.row(r));
                }
            }
            k = new_k;
            gain = new_gain;
        }
        vx = &qx + gain.transpose() * &quu * &k + gain.transpose() * &qu + qux.transpose() * &k;
        let vxx_new = &qxx + gain.transpose() * &quu * &gain + gain.transpose() * &qux + qux.transpose() * &gain;
        vxx = 0.5 * (&vxx_new + vxx_new.transpose());
        ff[j] = k;
        fb[j] = gain;
    }
    Some(Gains { ff, fb })
}

fn alphas(alpha_min: f64) -> Vec<f64> {
    let mut out = vec![1.0];
    while *out.last().expect("non-empty") * 0.5 >= alpha_min * (1.0 - 1e-12) {
        out.push(out.last().expect("non-empty") * 0.5);
    }
    out
}

/// Pick the lowest cost; ties go to the larger step.
fn best_candidate(candidates: Vec<(f64, Option<Nominal>)>) -> Option<(f64, Nominal)> {
    let mut best: Option<(f64, Nominal)> = None;
    for (alpha, cand) in candidates {
        let Some(c) = cand else { continue };
        let better = match &best {
            None => true,
            Some((a, b)) => c.cost < b.cost || (c.cost == b.cost && alpha > *a),
        };
        if better {
            best = Some((alpha, c));
        }
    }
    best
}

/// Golden-section coordinate descent on the contact decision variables,
/// evaluated under the tracking policy.
fn contact_descent(
    ctx: &SolveContext,
    lay: &Layout,
    nominal: Nominal,
    fb: Option<&[DMatrix<f64>]>,
    params: ContactParams,
    upper: &[f64],
    goal: &Goal,
) -> (Nominal, ContactParams) {
    let mut nominal = nominal;
    let mut params = params;
    let zero_ff: Vec<DVector<f64>> = vec![DVector::zeros(lay.n); nominal.v.len()];
    for _ in 0..ctx.settings.contact_sweeps {
        let mut improved = false;
        for (i, &hi) in upper.iter().enumerate() {
            if hi <= 0.0 {
                continue;
            }
            let eval = |value: f64, base: &Nominal| -> Option<(Nominal, ContactParams)> {
                let mut p = params.clone();
                p.set_decision(i, value);
                let gains = fb.map(|f| (zero_ff.as_slice(), f));
                policy_rollout(ctx, lay, base, gains, 0.0, &p, goal).map(|n| (n, p))
            };
            let current = params.decision_vector()[i];
            let mut best: Option<(Nominal, ContactParams)> = None;
            let consider = |cand: Option<(Nominal, ContactParams)>, best: &mut Option<(Nominal, ContactParams)>| {
                if let Some(c) = cand {
                    if c.0.cost < best.as_ref().map_or(nominal.cost, |b| b.0.cost) {
                        *best = Some(c);
                    }
                }
            };
            consider(eval(0.0, &nominal), &mut best);
            let ratio = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (0.0, hi);
            let mut c = b - ratio * (b - a);
            let mut d = a + ratio * (b - a);
            let cost_of = |x: f64| eval(x, &nominal).map_or(f64::INFINITY, |n| n.0.cost);
            let mut fc = cost_of(c);
            let mut fd = cost_of(d);
            for _ in 0..ctx.settings.golden_iterations {
                if fc <= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - ratio * (b - a);
                    fc = cost_of(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + ratio * (b - a);
                    fd = cost_of(d);
                }
            }
            let x = if fc <= fd { c } else { d };
            if x != current {
                consider(eval(x, &nominal), &mut best);
            }
            if let Some((n, p)) = best {
                nominal = n;
                params = p;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    (nominal, params)
}

/// Gravity-compensating knots along the straight joint-space line to the goal.
pub fn default_knots(model: &ArmModel, start: &JointState, goal: &Goal, knots: usize) -> Vec<DVector<f64>> {
    (0..knots)
        .map(|j| {
            let s = if knots > 1 { j as f64 / (knots - 1) as f64 } else { 0.0 };
            let q = &start.q + s * (&goal.q - &start.q);
            dynamics::saturate(model, &dynamics::gravity_torque(model, &q))
        })
        .collect()
}

/// Boundary-value solve from `start` toward `goal` over `segments` knot intervals.
pub fn solve(
    ctx: &SolveContext,
    start: &JointState,
    goal: &Goal,
    segments: usize,
    init: Option<Init>,
) -> Result<Trajectory, TrajoptError> {
    let n = ctx.model.dof();
    if start.dof() != n || goal.q.len() != n {
        return Err(TrajoptError::InvalidInput(format!("expected {n} joints")));
    }
    if !start.is_finite() {
        return Err(TrajoptError::InvalidInput("non-finite start state".into()));
    }
    let (mut knots, params) = match init {
        Some(init) => (init.knots, init.params),
        None => (default_knots(ctx.model, start, goal, segments + 1), ctx.initial_params.clone()),
    };
    if knots.is_empty() {
        return Err(TrajoptError::InvalidInput("no knots".into()));
    }
    for k in &mut knots {
        *k = dynamics::saturate(ctx.model, k);
    }
    if knots.len() == 1 {
        let cost = trajectory_cost(ctx, std::slice::from_ref(start), &knots, &params, goal);
        return build_trajectory(ctx, start, knots, params, goal, vec![cost], 0);
    }
    let lay = Layout { n };
    let upper = params.decision_vector();
    let mut params = params;
    let z0 = lay.pack(start, &DVector::zeros(n), &DVector::zeros(n));
    let seed = Nominal { z: vec![z0], v: knots, cost: 0.0 };
    let mut nominal = policy_rollout(ctx, &lay, &seed, None, 0.0, &params, goal).ok_or_else(|| {
        let err = rollout(ctx, start, &seed.v, &params).err();
        TrajoptError::Diverged(err.unwrap_or(DynamicsError::NonFinite("cost")))
    })?;
    let mut cost_log = vec![nominal.cost];
    let mut reg = ctx.settings.reg_init;
    let mut iterations = 0;
    let mut last_fb: Option<Vec<DMatrix<f64>>> = None;
    let steps = alphas(ctx.settings.alpha_min);
    let has_params = upper.iter().any(|u| *u > 0.0);
    for _round in 0..ctx.settings.outer_iterations.max(1) {
        let round_start = nominal.cost;
        let mut stalled = false;
        while iterations < ctx.settings.max_iterations && !stalled {
            iterations += 1;
            let k_count = nominal.v.len();
            let jacobians: Vec<StageJacobian> = (0..k_count)
                .into_par_iter()
                .map(|j| stage_jacobian(ctx, &lay, j, &nominal.z[j], &nominal.v[j], &nominal.z[j + 1], &params))
                .collect();
            let stage_costs: Vec<CostDerivatives> =
                (0..k_count).map(|j| embed_stage_cost(ctx, &lay, j, &nominal.z[j], &nominal.v[j])).collect();
            let terminal = embed_terminal_cost(ctx, &lay, &nominal.z[k_count], goal, &params);
            loop {
                let Some(gains) = backward_pass(&lay, &nominal, &jacobians, &stage_costs, &terminal, reg, &ctx.model.torque_limits) else {
                    reg *= ctx.settings.reg_growth;
                    if reg > ctx.settings.reg_max {
                        stalled = true;
                        break;
                    }
                    continue;
                };
                let candidates: Vec<(f64, Option<Nominal>)> = steps
                    .par_iter()
                    .map(|&alpha| (alpha, policy_rollout(ctx, &lay, &nominal, Some((&gains.ff, &gains.fb)), alpha, &params, goal)))
                    .collect();
                log::trace!("line search: iteration {iterations}, reg {reg:e}, cost {}", nominal.cost);
                match best_candidate(candidates) {
                    Some((_, cand)) if cand.cost < nominal.cost => {
                        let decrease = (nominal.cost - cand.cost) / nominal.cost.abs().max(1e-12);
                        nominal = cand;
                        cost_log.push(nominal.cost);
                        reg = (reg * ctx.settings.reg_shrink).max(ctx.settings.reg_min);
                        last_fb = Some(gains.fb);
                        if decrease < ctx.settings.cost_tolerance {
                            stalled = true;
                        }
                        break;
                    }
                    _ => {
                        last_fb = Some(gains.fb);
                        reg *= ctx.settings.reg_growth;
                        if reg > ctx.settings.reg_max {
                            stalled = true;
                            break;
                        }
                    }
                }
            }
        }
        if has_params {
            let before = nominal.cost;
            let (n2, p2) = contact_descent(ctx, &lay, nominal, last_fb.as_deref(), params, &upper, goal);
            nominal = n2;
            params = p2;
            if nominal.cost < before {
                cost_log.push(nominal.cost);
            }
        }
        if nominal.cost >= round_start * (1.0 - ctx.settings.cost_tolerance) || iterations >= ctx.settings.max_iterations {
            break;
        }
        reg = ctx.settings.reg_init;
    }
    build_trajectory(ctx, start, nominal.v, params, goal, cost_log, iterations)
}

/// Warm-started re-optimization of `prefix` followed by `suffix`; only the
/// suffix goal is kept as a boundary condition.
pub fn warm_start_solve(ctx: &SolveContext, prefix: &Trajectory, suffix: &Trajectory) -> Result<Trajectory, TrajoptError> {
    let mut knots: Vec<DVector<f64>> = Vec::new();
    if suffix.controls.len() <= 1 {
        knots.extend(prefix.controls.knot_values.iter().cloned());
    } else {
        let keep = prefix.controls.len().saturating_sub(1);
        knots.extend(prefix.controls.knot_values[..keep].iter().cloned());
        knots.extend(suffix.controls.knot_values.iter().cloned());
    }
    let params = prefix.contact_params.max_with(&suffix.contact_params);
    let segments = knots.len().saturating_sub(1);
    solve(ctx, prefix.start(), &suffix.goal, segments, Some(Init { knots, params }))
}
