use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    ZeroOrder,
    #[default]
    Linear,
    /// Hermite segments with backward-difference tangents.
    Cubic,
}

/// Control on one knot interval at fraction `s ∈ [0, 1)`.
///
/// `before`, `start` and `end` are the knots at `t_{j-1}`, `t_j` and `t_{j+1}`;
/// the cubic tangents are backward differences so a knot only influences the
/// intervals that follow it.
pub fn segment_control(
    kind: Interpolation,
    before: &DVector<f64>,
    start: &DVector<f64>,
    end: &DVector<f64>,
    s: f64,
    limits: &[f64],
) -> DVector<f64> {
    match kind {
        Interpolation::ZeroOrder => start.clone(),
        Interpolation::Linear => start + s * (end - start),
        Interpolation::Cubic => {
            let s2 = s * s;
            let s3 = s2 * s;
            let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
            let h10 = s3 - 2.0 * s2 + s;
            let h01 = -2.0 * s3 + 3.0 * s2;
            let h11 = s3 - s2;
            let m0 = start - before;
            let m1 = end - start;
            let raw = h00 * start + h10 * m0 + h01 * end + h11 * m1;
            DVector::from_iterator(raw.len(), raw.iter().zip(limits).map(|(v, l)| v.clamp(-l, *l)))
        }
    }
}

/// Piecewise control trajectory on a uniform knot grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSpline {
    pub knot_times: Vec<f64>,
    pub knot_values: Vec<DVector<f64>>,
    pub interpolation: Interpolation,
}

impl ControlSpline {
    /// Uniform knots `t_j = j · spacing`.
    pub fn uniform(knot_values: Vec<DVector<f64>>, spacing: f64, interpolation: Interpolation) -> Self {
        let knot_times = (0..knot_values.len()).map(|j| j as f64 * spacing).collect();
        Self { knot_times, knot_values, interpolation }
    }

    pub fn len(&self) -> usize {
        self.knot_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knot_values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.knot_times.last().copied().unwrap_or(0.0)
    }

    /// Knot before `j`, repeating the first knot at the boundary.
    pub fn knot_before(&self, j: usize) -> &DVector<f64> {
        &self.knot_values[j.saturating_sub(1)]
    }

    /// Clamp every knot to `±limits`.
    pub fn clamp(&mut self, limits: &[f64]) {
        for k in &mut self.knot_values {
            for (v, l) in k.iter_mut().zip(limits) {
                *v = v.clamp(-l, *l);
            }
        }
    }

    pub fn within_limits(&self, limits: &[f64]) -> bool {
        self.knot_values
            .iter()
            .all(|k| k.iter().zip(limits).all(|(v, l)| v.abs() <= *l))
    }

    /// Evaluate at any time; times past the last knot hold the last value.
    pub fn eval(&self, t: f64, limits: &[f64]) -> DVector<f64> {
        let n = self.len();
        if n == 1 || t <= self.knot_times[0] {
            return self.knot_values[0].clone();
        }
        if t >= self.knot_times[n - 1] {
            return self.knot_values[n - 1].clone();
        }
        let j = self.knot_times.partition_point(|kt| *kt <= t) - 1;
        let (t0, t1) = (self.knot_times[j], self.knot_times[j + 1]);
        let s = (t - t0) / (t1 - t0);
        segment_control(
            self.interpolation,
            self.knot_before(j),
            &self.knot_values[j],
            &self.knot_values[j + 1],
            s,
            limits,
        )
    }
}
