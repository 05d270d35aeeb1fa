//! Confidence-weighted penalized cubic regression spline.
//!
//! Fits `y(x)` as a uniform cubic B-spline with knots roughly every
//! `knot_spacing` columns, minimizing
//! `sum_i c_i (y(x_i) - y_i)^2 + lambda * int y''(x)^2 dx`.
//! Linear functions lie in the null space of the penalty, so gaps in the
//! evidence are bridged (and the ends extrapolated) by the smoothest curve.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

/// Inclusive range of integer columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnRange {
    pub start: i64,
    pub end: i64,
}

impl ColumnRange {
    pub fn new(start: i64, end: i64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        if self.end < self.start {
            0
        } else {
            (self.end - self.start + 1) as usize
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.start && x <= self.end
    }

    pub fn intersect(&self, other: ColumnRange) -> ColumnRange {
        ColumnRange::new(self.start.max(other.start), self.end.min(other.end))
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.start..=self.end
    }
}

/// One layer observation: column, axial row and confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSample {
    pub x: f64,
    pub y: f64,
    pub conf: f64,
}

impl LayerSample {
    pub fn new(x: f64, y: f64, conf: f64) -> Self {
        Self { x, y, conf }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplineParams {
    pub lambda: f64,
    pub knot_spacing: f64,
    /// Samples with confidence below this are discarded before fitting.
    pub min_conf: f64,
}

impl Default for SplineParams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            knot_spacing: 8.0,
            min_conf: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("only {usable} usable samples (need at least 4)")]
    InsufficientEvidence { usable: usize },
    #[error("invalid smoothing weight {0}")]
    BadLambda(f64),
    #[error("degenerate column domain")]
    EmptyDomain,
    #[error("normal equations are singular (evidence does not determine the curve)")]
    Singular,
}

/// A fitted layer boundary over a column domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCurve {
    domain: ColumnRange,
    origin: f64,
    spacing: f64,
    coef: Vec<f64>,
    values: Vec<f64>,
    conf: Vec<f64>,
    lambda: f64,
}

// Uniform cubic B-spline pieces on one knot interval, local parameter u in [0, 1].
#[inline]
fn basis(u: f64) -> [f64; 4] {
    let v = 1.0 - u;
    let u2 = u * u;
    let u3 = u2 * u;
    [
        v * v * v / 6.0,
        (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
        (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

#[inline]
fn basis_d2(u: f64) -> [f64; 4] {
    [1.0 - u, 3.0 * u - 2.0, 1.0 - 3.0 * u, u]
}

/// Symmetric positive definite matrix with half-bandwidth 3, stored by diagonals.
struct Band4 {
    a: Vec<[f64; 4]>,
}

impl Band4 {
    fn new(n: usize) -> Self {
        Self { a: vec![[0.0; 4]; n] }
    }

    #[inline]
    fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(j >= i && j - i < 4);
        self.a[i][j - i] += v;
    }

    /// In-place banded Cholesky followed by the two triangular solves.
    fn solve(mut self, rhs: &mut [f64]) -> Result<(), SplineError> {
        let n = self.a.len();
        let scale = self
            .a
            .iter()
            .map(|r| r[0].abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        // l[i][k] holds L(i, i-k).
        let mut l = vec![[0.0f64; 4]; n];
        for i in 0..n {
            let lo = i.saturating_sub(3);
            for j in lo..=i {
                let mut sum = self.a[j][i - j];
                for k in lo.max(j.saturating_sub(3))..j {
                    sum -= l[i][i - k] * l[j][j - k];
                }
                if i == j {
                    if !(sum > 1e-13 * scale) {
                        return Err(SplineError::Singular);
                    }
                    l[i][0] = math::sqrt(sum);
                } else {
                    l[i][i - j] = sum / l[j][0];
                }
            }
        }
        self.a.clear();
        for i in 0..n {
            let mut s = rhs[i];
            for k in i.saturating_sub(3)..i {
                s -= l[i][i - k] * rhs[k];
            }
            rhs[i] = s / l[i][0];
        }
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for k in i + 1..(i + 4).min(n) {
                s -= l[k][k - i] * rhs[k];
            }
            rhs[i] = s / l[i][0];
        }
        Ok(())
    }
}

/// Fits a layer curve to weighted samples over `domain`.
///
/// Samples below `params.min_conf` are dropped; at least four must remain.
pub fn fit_layer_spline(
    samples: &[LayerSample],
    params: &SplineParams,
    domain: ColumnRange,
) -> Result<LayerCurve, SplineError> {
    if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
        return Err(SplineError::BadLambda(params.lambda));
    }
    if domain.len() < 2 {
        return Err(SplineError::EmptyDomain);
    }
    let usable: Vec<LayerSample> = samples
        .iter()
        .copied()
        .filter(|s| s.conf >= params.min_conf && s.conf > 0.0 && s.x.is_finite() && s.y.is_finite())
        .collect();
    if usable.len() < 4 {
        return Err(SplineError::InsufficientEvidence { usable: usable.len() });
    }

    let origin = domain.start as f64;
    let span = (domain.end - domain.start) as f64;
    let segments = math::ceil(span / params.knot_spacing.max(1.0)).max(1.0) as usize;
    let spacing = span / segments as f64;
    let nb = segments + 3;

    let mut normal = Band4::new(nb);
    let mut rhs = vec![0.0; nb];
    for s in &usable {
        let (seg, u) = locate(s.x, origin, spacing, segments);
        let b = basis(u);
        for p in 0..4 {
            let wp = s.conf * b[p];
            rhs[seg + p] += wp * s.y;
            for q in p..4 {
                normal.add(seg + p, seg + q, wp * b[q]);
            }
        }
    }
    if params.lambda > 0.0 {
        // y'' is linear on each interval, so two-point Gauss quadrature is exact.
        let g = 0.5 / math::sqrt(3.0);
        let w = params.lambda * 0.5 / (spacing * spacing * spacing);
        for seg in 0..segments {
            for u in [0.5 - g, 0.5 + g] {
                let d = basis_d2(u);
                for p in 0..4 {
                    for q in p..4 {
                        normal.add(seg + p, seg + q, w * d[p] * d[q]);
                    }
                }
            }
        }
    }
    normal.solve(&mut rhs)?;

    let mut curve = LayerCurve {
        domain,
        origin,
        spacing,
        coef: rhs,
        values: Vec::new(),
        conf: vec![0.0; domain.len()],
        lambda: params.lambda,
    };
    curve.values = domain.iter().map(|x| curve.eval(x as f64)).collect();
    for s in &usable {
        let c = math::round(s.x) as i64;
        if domain.contains(c) {
            let slot = &mut curve.conf[(c - domain.start) as usize];
            *slot = slot.max(s.conf.min(1.0));
        }
    }
    Ok(curve)
}

#[inline]
fn locate(x: f64, origin: f64, spacing: f64, segments: usize) -> (usize, f64) {
    let t = (x - origin) / spacing;
    let seg = math::floor(t).clamp(0.0, (segments - 1) as f64);
    (seg as usize, t - seg)
}

impl LayerCurve {
    /// A curve that is exactly the straight line through the given values,
    /// used when a frame must fall back to a fixed geometry.
    pub fn constant(domain: ColumnRange, y: f64) -> Self {
        let segments = 1;
        Self {
            domain,
            origin: domain.start as f64,
            spacing: ((domain.end - domain.start) as f64).max(1.0),
            coef: vec![y; segments + 3],
            values: vec![y; domain.len()],
            conf: vec![0.0; domain.len()],
            lambda: 0.0,
        }
    }

    pub fn domain(&self) -> ColumnRange {
        self.domain
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Values at every integer column of the domain.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Confidence per column (the best usable sample at that column, 0 for gaps).
    pub fn confidence(&self) -> &[f64] {
        &self.conf
    }

    /// Value at an integer column; `None` outside the domain.
    pub fn at_column(&self, x: i64) -> Option<f64> {
        self.domain
            .contains(x)
            .then(|| self.values[(x - self.domain.start) as usize])
    }

    /// Evaluates the spline at any lateral position. Outside the domain the
    /// curve continues linearly with the end slope.
    pub fn eval(&self, x: f64) -> f64 {
        // Integer columns return the stored value so that eval and at_column agree exactly.
        if x == math::floor(x) && self.domain.contains(x as i64) {
            if let Some(v) = self.values.get((x as i64 - self.domain.start) as usize) {
                return *v;
            }
        }
        let segments = self.coef.len() - 3;
        let lo = self.origin;
        let hi = self.origin + self.spacing * segments as f64;
        if x < lo {
            return self.eval_inside(lo) + self.slope_inside(lo) * (x - lo);
        }
        if x > hi {
            return self.eval_inside(hi) + self.slope_inside(hi) * (x - hi);
        }
        self.eval_inside(x)
    }

    fn eval_inside(&self, x: f64) -> f64 {
        let segments = self.coef.len() - 3;
        let (seg, u) = locate(x, self.origin, self.spacing, segments);
        let b = basis(u);
        (0..4).map(|p| self.coef[seg + p] * b[p]).sum()
    }

    fn slope_inside(&self, x: f64) -> f64 {
        let segments = self.coef.len() - 3;
        let (seg, u) = locate(x, self.origin, self.spacing, segments);
        let v = 1.0 - u;
        let d = [
            -v * v / 2.0,
            (3.0 * u * u - 4.0 * u) / 2.0,
            (-3.0 * u * u + 2.0 * u + 1.0) / 2.0,
            u * u / 2.0,
        ];
        (0..4).map(|p| self.coef[seg + p] * d[p]).sum::<f64>() / self.spacing
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: f64) -> f64 {
        0.01 * x * x + 200.0
    }

    fn domain() -> ColumnRange {
        ColumnRange::new(0, 511)
    }

    #[test]
    fn interpolation_limit_reproduces_quadratic() {
        let samples: Vec<_> = (0..512)
            .map(|x| LayerSample::new(x as f64, quad(x as f64), 1.0))
            .collect();
        let p = SplineParams {
            lambda: 0.0,
            ..Default::default()
        };
        let c = fit_layer_spline(&samples, &p, domain()).unwrap();
        for x in 0..512 {
            assert!((c.at_column(x).unwrap() - quad(x as f64)).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn zero_confidence_outliers_are_inert() {
        let clean: Vec<_> = (0..512)
            .step_by(3)
            .map(|x| LayerSample::new(x as f64, quad(x as f64), 1.0))
            .collect();
        let mut dirty = clean.clone();
        for k in 0..10 {
            dirty.insert(k * 7, LayerSample::new(20.0 * k as f64 + 5.0, 10.0, 0.0));
        }
        let p = SplineParams::default();
        let a = fit_layer_spline(&clean, &p, domain()).unwrap();
        let b = fit_layer_spline(&dirty, &p, domain()).unwrap();
        for (ya, yb) in a.values().iter().zip(b.values()) {
            assert!((ya - yb).abs() < 1e-9);
        }
    }

    #[test]
    fn line_bridges_masked_gap() {
        let samples: Vec<_> = (0..512)
            .filter(|x| !(200..260).contains(x))
            .map(|x| LayerSample::new(x as f64, 300.0, 1.0))
            .collect();
        let c = fit_layer_spline(&samples, &SplineParams::default(), domain()).unwrap();
        for x in 200..260 {
            assert!((c.at_column(x).unwrap() - 300.0).abs() < 0.5);
        }
        assert_eq!(c.confidence()[230], 0.0);
        assert_eq!(c.confidence()[100], 1.0);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let samples: Vec<_> = (0..10)
            .map(|x| LayerSample::new(x as f64, 1.0, if x < 3 { 1.0 } else { 0.1 }))
            .collect();
        assert_eq!(
            fit_layer_spline(&samples, &SplineParams::default(), domain()),
            Err(SplineError::InsufficientEvidence { usable: 3 })
        );
    }

    #[test]
    fn extrapolates_linearly_beyond_evidence() {
        let samples: Vec<_> = (100..300)
            .map(|x| LayerSample::new(x as f64, 0.5 * x as f64 + 10.0, 1.0))
            .collect();
        let c = fit_layer_spline(&samples, &SplineParams::default(), domain()).unwrap();
        for x in [0i64, 50, 400, 511] {
            assert!((c.at_column(x).unwrap() - (0.5 * x as f64 + 10.0)).abs() < 1e-6);
        }
        assert!((c.eval(-20.0) - 0.0).abs() < 1e-6);
        assert!((c.eval(600.0) - 310.0).abs() < 1e-6);
    }
}
