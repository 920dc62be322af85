use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contact::ContactParams;
use crate::dynamics::JointState;

/// Smoothing of the Euclidean norm at the origin, used by derivatives only.
pub const NORM_SMOOTHING: f64 = 1e-8;
/// Above this exponent the risk transform continues linearly and flags saturation.
pub const RISK_EXPONENT_CAP: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// `‖r‖`
    #[default]
    Euclidean,
    /// `½‖r‖²`, for quadratic-cost regressions.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    /// Terminal distance to the goal cell centre.
    pub w1: f64,
    /// Control effort.
    pub w2: f64,
    /// Joint velocity.
    pub w3: f64,
    pub w4: f64,
    pub w5: f64,
    pub w6: f64,
    /// Risk sensitivity `R`.
    pub risk: f64,
    pub norm: NormKind,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w1: 2.0, w2: 5e-4, w3: 2e-3, w4: 1e-4, w5: 1e-4, w6: 1e-3, risk: 0.0, norm: NormKind::Euclidean }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), (String, String)> {
        for (name, w) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3), ("w4", self.w4), ("w5", self.w5), ("w6", self.w6)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err((name.into(), format!("must be non-negative, got {w}")));
            }
        }
        if self.w1 + self.w2 + self.w3 <= 0.0 {
            return Err(("w1".into(), "one of w1, w2, w3 must be positive".into()));
        }
        if !self.risk.is_finite() {
            return Err(("risk".into(), "must be finite".into()));
        }
        Ok(())
    }
}

pub fn norm_value(kind: NormKind, r: &DVector<f64>) -> f64 {
    match kind {
        NormKind::Euclidean => r.norm(),
        NormKind::Quadratic => 0.5 * r.norm_squared(),
    }
}

fn norm_gradient(kind: NormKind, r: &DVector<f64>) -> DVector<f64> {
    match kind {
        NormKind::Euclidean => r / smoothed_norm(r),
        NormKind::Quadratic => r.clone(),
    }
}

/// `1/‖r‖ I − r rᵀ/‖r‖³` for the Euclidean norm.
fn norm_hessian(kind: NormKind, r: &DVector<f64>) -> DMatrix<f64> {
    let n = r.len();
    match kind {
        NormKind::Euclidean => {
            let s = smoothed_norm(r);
            DMatrix::identity(n, n) / s - (r * r.transpose()) / (s * s * s)
        }
        NormKind::Quadratic => DMatrix::identity(n, n),
    }
}

fn smoothed_norm(r: &DVector<f64>) -> f64 {
    (r.norm_squared() + NORM_SMOOTHING * NORM_SMOOTHING).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue {
    pub value: f64,
    pub saturated: bool,
}

/// `ξ(l, R) = (e^{R l} − 1)/R`, with the `R → 0` limit and an overflow guard.
pub fn risk_transform(l: f64, r: f64) -> f64 {
    risk_transform_checked(l, r).value
}

pub fn risk_transform_checked(l: f64, r: f64) -> RiskValue {
    if r.abs() < 1e-12 {
        return RiskValue { value: l, saturated: false };
    }
    let e = r * l;
    if e > RISK_EXPONENT_CAP {
        // linear continuation of the exponential: finite and still monotonic
        let base = RISK_EXPONENT_CAP.exp();
        return RiskValue { value: (base * (1.0 + e - RISK_EXPONENT_CAP) - 1.0) / r, saturated: true };
    }
    RiskValue { value: e.exp_m1() / r, saturated: false }
}

/// `∂ξ/∂l = e^{R l}`.
fn risk_slope(l: f64, r: f64) -> f64 {
    if r.abs() < 1e-12 {
        1.0
    } else {
        (r * l).min(RISK_EXPONENT_CAP).exp()
    }
}

/// One weighted residual with its Jacobians with respect to the state and control.
#[derive(Debug, Clone)]
pub struct Residual {
    pub weight: f64,
    pub r: DVector<f64>,
    pub jx: DMatrix<f64>,
    pub ju: DMatrix<f64>,
}

/// Value, gradient and Gauss-Newton Hessian of `c = ξ(Σ w ‖r‖, R)`.
#[derive(Debug, Clone)]
pub struct CostDerivatives {
    pub l: f64,
    pub c: f64,
    pub cx: DVector<f64>,
    pub cu: DVector<f64>,
    pub cxx: DMatrix<f64>,
    pub cuu: DMatrix<f64>,
    pub cux: DMatrix<f64>,
}

pub fn terms_value(terms: &[Residual], kind: NormKind) -> f64 {
    terms.iter().map(|t| t.weight * norm_value(kind, &t.r)).sum()
}

pub fn terms_derivatives(terms: &[Residual], nx: usize, nu: usize, risk: f64, kind: NormKind) -> CostDerivatives {
    let mut lx = DVector::zeros(nx);
    let mut lu = DVector::zeros(nu);
    let mut lxx = DMatrix::zeros(nx, nx);
    let mut luu = DMatrix::zeros(nu, nu);
    let mut lux = DMatrix::zeros(nu, nx);
    let mut l = 0.0;
    for t in terms.iter().filter(|t| t.weight != 0.0) {
        l += t.weight * norm_value(kind, &t.r);
        let g = t.weight * norm_gradient(kind, &t.r);
        let h = t.weight * norm_hessian(kind, &t.r);
        lx += t.jx.transpose() * &g;
        lu += t.ju.transpose() * &g;
        let hjx = &h * &t.jx;
        lxx += t.jx.transpose() * &hjx;
        luu += t.ju.transpose() * &h * &t.ju;
        lux += t.ju.transpose() * &hjx;
    }
    let slope = risk_slope(l, risk);
    let rr = if risk.abs() < 1e-12 { 0.0 } else { risk };
    CostDerivatives {
        l,
        c: risk_transform(l, risk),
        cxx: slope * (lxx + rr * &lx * lx.transpose()),
        cuu: slope * (luu + rr * &lu * lu.transpose()),
        cux: slope * (lux + rr * &lu * lx.transpose()),
        cx: slope * lx,
        cu: slope * lu,
    }
}

/// Residuals of one stage on the plain state `[q, q̇]` and control `u`.
///
/// `goal` marks the terminal stage and adds the w1 term; `params` adds the
/// contact-parameter norms.
pub fn stage_residuals(
    x: &JointState,
    u: Option<&DVector<f64>>,
    goal: Option<&DVector<f64>>,
    weights: &CostWeights,
    params: Option<&ContactParams>,
) -> Vec<Residual> {
    let n = x.dof();
    let nu = u.map_or(0, |u| u.len());
    let mut terms = Vec::with_capacity(6);
    if let Some(g) = goal {
        let mut jx = DMatrix::zeros(n, 2 * n);
        jx.view_mut((0, 0), (n, n)).fill_with_identity();
        terms.push(Residual { weight: weights.w1, r: &x.q - g, jx, ju: DMatrix::zeros(n, nu) });
    }
    if let Some(u) = u {
        terms.push(Residual {
            weight: weights.w2,
            r: u.clone(),
            jx: DMatrix::zeros(nu, 2 * n),
            ju: DMatrix::identity(nu, nu),
        });
    }
    let mut jv = DMatrix::zeros(n, 2 * n);
    jv.view_mut((0, n), (n, n)).fill_with_identity();
    terms.push(Residual { weight: weights.w3, r: x.qdot.clone(), jx: jv, ju: DMatrix::zeros(n, nu) });
    if let Some(p) = params {
        let np = p.pairs();
        for (w, v) in [(weights.w4, &p.k), (weights.w5, &p.b), (weights.w6, &p.mu)] {
            terms.push(Residual {
                weight: w,
                r: DVector::from_column_slice(v),
                jx: DMatrix::zeros(np, 2 * n),
                ju: DMatrix::zeros(np, nu),
            });
        }
    }
    terms
}

/// `l = w1‖q − q_G‖ (terminal) + w2‖u‖ + w3‖q̇‖ + w4‖k‖ + w5‖b‖ + w6‖μ‖`.
pub fn running_cost(
    x: &JointState,
    u: &DVector<f64>,
    goal: Option<&DVector<f64>>,
    weights: &CostWeights,
    params: Option<&ContactParams>,
) -> f64 {
    terms_value(&stage_residuals(x, Some(u), goal, weights, params), weights.norm)
}

/// `(∂c/∂x, ∂c/∂u)` of the risk-transformed stage cost.
pub fn cost_gradient(
    x: &JointState,
    u: &DVector<f64>,
    goal: Option<&DVector<f64>>,
    weights: &CostWeights,
    params: Option<&ContactParams>,
) -> (DVector<f64>, DVector<f64>) {
    let d = terms_derivatives(&stage_residuals(x, Some(u), goal, weights, params), 2 * x.dof(), u.len(), weights.risk, weights.norm);
    (d.cx, d.cu)
}

/// Gauss-Newton blocks `(∂²c/∂x², ∂²c/∂u², ∂²c/∂u∂x)`.
pub fn cost_hessian_gn(
    x: &JointState,
    u: &DVector<f64>,
    goal: Option<&DVector<f64>>,
    weights: &CostWeights,
    params: Option<&ContactParams>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let d = terms_derivatives(&stage_residuals(x, Some(u), goal, weights, params), 2 * x.dof(), u.len(), weights.risk, weights.norm);
    (d.cxx, d.cuu, d.cux)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn only(w2: f64) -> CostWeights {
        CostWeights { w1: 0.0, w2, w3: 0.0, w4: 0.0, w5: 0.0, w6: 0.0, risk: 0.0, norm: NormKind::Euclidean }
    }

    #[test]
    fn zero_residuals_cost_nothing() {
        let x = JointState::at_rest(DVector::from_vec(vec![0.3, 0.2]));
        let u = DVector::zeros(2);
        let p = ContactParams::for_pairs(2);
        let w = CostWeights::default();
        assert_eq!(running_cost(&x, &u, Some(&x.q.clone()), &w, Some(&p)), 0.0);
    }

    #[test]
    fn effort_norm_example() {
        let x = JointState::at_rest(DVector::zeros(2));
        let u = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(running_cost(&x, &u, None, &only(1.0), None), 5.0);
        let (_, gu) = cost_gradient(&x, &u, None, &only(1.0), None);
        assert_relative_eq!(gu, DVector::from_vec(vec![0.6, 0.8]), epsilon = 1e-12);
    }

    #[test]
    fn norm_hessian_example() {
        let x = JointState::at_rest(DVector::zeros(2));
        let u = DVector::from_vec(vec![1.0, -2.0]);
        let w = 0.7;
        let (_, huu, _) = cost_hessian_gn(&x, &u, None, &only(w), None);
        let n = u.norm();
        let expected = w * (DMatrix::identity(2, 2) / n - &u * u.transpose() / n.powi(3));
        assert_relative_eq!(huu, expected, epsilon = 1e-12);
    }

    #[test]
    fn gradient_vanishes_at_origin() {
        let x = JointState::at_rest(DVector::zeros(2));
        let (gx, gu) = cost_gradient(&x, &DVector::zeros(2), Some(&DVector::zeros(2)), &CostWeights::default(), None);
        assert_eq!(gx.amax(), 0.0);
        assert_eq!(gu.amax(), 0.0);
    }

    #[test]
    fn running_cost_matches_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = JointState::new(
                DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)),
                DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0)),
            );
            let u = DVector::from_fn(3, |_, _| rng.gen_range(-5.0..5.0));
            let g = DVector::from_fn(3, |_, _| rng.gen_range(-2.0..2.0));
            let mut p = ContactParams::for_pairs(2);
            p.k = vec![rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)];
            p.b = vec![rng.gen_range(0.0..5.0), 0.0];
            p.mu = vec![0.2, rng.gen_range(0.0..1.0)];
            let w = CostWeights { w1: 1.5, w2: 0.3, w3: 0.7, w4: 0.1, w5: 0.2, w6: 0.4, risk: 0.0, norm: NormKind::Euclidean };
            let naive = w.w1 * (&x.q - &g).norm()
                + w.w2 * u.norm()
                + w.w3 * x.qdot.norm()
                + w.w4 * (p.k[0].powi(2) + p.k[1].powi(2)).sqrt()
                + w.w5 * (p.b[0].powi(2) + p.b[1].powi(2)).sqrt()
                + w.w6 * (p.mu[0].powi(2) + p.mu[1].powi(2)).sqrt();
            let l = running_cost(&x, &u, Some(&g), &w, Some(&p));
            assert!((l - naive).abs() <= 1e-12 * naive.max(1.0));
        }
    }

    #[test]
    fn risk_transform_properties() {
        assert_eq!(risk_transform(3.7, 0.0), 3.7);
        for r in [-2.0, -0.1, 0.5, 3.0] {
            assert_eq!(risk_transform(0.0, r), 0.0);
        }
        assert!((risk_transform(1e3, -2.0) - 0.5).abs() < 1e-12);
        let sat = risk_transform_checked(1e3, 2.0);
        assert!(sat.saturated && sat.value.is_finite());
    }

    proptest! {
        #[test]
        fn risk_transform_monotonic(a in 0.0f64..50.0, d in 1e-6f64..10.0, r in -3.0f64..3.0) {
            let (lo, hi) = (risk_transform(a, r), risk_transform(a + d, r));
            prop_assert!(hi >= lo);
            // risk-seeking values flatten toward -1/R below double resolution
            if r * (a + d) > -20.0 {
                prop_assert!(hi > lo);
            }
        }

        #[test]
        fn risk_transform_unit_slope_at_zero(r in -5.0f64..5.0) {
            let h = 1e-8;
            let slope = (risk_transform(h, r) - risk_transform(-h, r)) / (2.0 * h);
            prop_assert!((slope - 1.0).abs() < 1e-6);
        }
    }
}
