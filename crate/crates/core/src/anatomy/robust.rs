//! Huber M-estimation of straight lines by iteratively reweighted least squares.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec2;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HuberParams {
    /// Residual threshold (pixels) between the quadratic and linear regimes.
    pub delta: f64,
    pub max_iter: usize,
    /// Convergence tolerance on the line coefficients.
    pub tol: f64,
}

impl Default for HuberParams {
    fn default() -> Self {
        Self {
            delta: 3.0,
            max_iter: 20,
            tol: 1e-6,
        }
    }
}

/// `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Fraction of points with `|residual| <= delta` at the final fit.
    pub inlier_fraction: f64,
    pub iterations: usize,
}

impl LineFit {
    pub fn y_at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Unit direction with positive lateral component.
    pub fn direction(&self) -> Vec2 {
        let n = math::hypot(1.0, self.slope);
        Vec2::new(1.0 / n, self.slope / n)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient evidence: {got} points (need {need})")]
    InsufficientEvidence { got: usize, need: usize },
    #[error("degenerate orientation: lateral extent {extent:.1} px (need {need})")]
    DegenerateOrientation { extent: f64, need: f64 },
    #[error("weighted normal equations are singular")]
    Singular,
}

/// Weighted least squares on centered coordinates.
fn weighted_line(xs: &[f64], ys: &[f64], w: &[f64], x_mean: f64) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&x, &y), &wi) in xs.iter().zip(ys).zip(w) {
        let xc = x - x_mean;
        sw += wi;
        sx += wi * xc;
        sy += wi * y;
        sxx += wi * xc * xc;
        sxy += wi * xc * y;
    }
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 1e-12 * sw * sxx.max(1.0)) {
        return None;
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept_c = (sy - slope * sx) / sw;
    Some((intercept_c - slope * x_mean, slope))
}

/// Ordinary least squares line fit of `y` on `x`.
pub fn ols_line(xs: &[f64], ys: &[f64]) -> Result<LineFit, FitError> {
    if xs.len() < 2 {
        return Err(FitError::InsufficientEvidence { got: xs.len(), need: 2 });
    }
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let w = vec![1.0; xs.len()];
    let (intercept, slope) = weighted_line(xs, ys, &w, x_mean).ok_or(FitError::Singular)?;
    Ok(LineFit {
        intercept,
        slope,
        inlier_fraction: 1.0,
        iterations: 0,
    })
}

/// Huber regression of `y` on `x`, started from the OLS solution.
pub fn huber_line(xs: &[f64], ys: &[f64], params: &HuberParams) -> Result<LineFit, FitError> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(FitError::InsufficientEvidence { got: n, need: 2 });
    }
    let x_mean = xs.iter().sum::<f64>() / n as f64;
    let mut w = vec![1.0; n];
    let (mut b0, mut b1) = weighted_line(xs, ys, &w, x_mean).ok_or(FitError::Singular)?;
    let mut iterations = 0;
    for _ in 0..params.max_iter {
        iterations += 1;
        for ((&x, &y), wi) in xs.iter().zip(ys).zip(w.iter_mut()) {
            let r = (y - (b0 + b1 * x)).abs();
            *wi = if r <= params.delta { 1.0 } else { params.delta / r };
        }
        let (n0, n1) = weighted_line(xs, ys, &w, x_mean).ok_or(FitError::Singular)?;
        let change = (n0 - b0).abs().max((n1 - b1).abs());
        b0 = n0;
        b1 = n1;
        if change <= params.tol {
            break;
        }
    }
    let inliers = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| (y - (b0 + b1 * x)).abs() <= params.delta)
        .count();
    Ok(LineFit {
        intercept: b0,
        slope: b1,
        inlier_fraction: inliers as f64 / n as f64,
        iterations,
    })
}

/// Robust estimate of the needle shaft.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedleEstimate {
    /// A point on the line.
    pub point: Vec2,
    /// Unit direction, oriented toward the retina (downward in the image).
    pub direction: Vec2,
    pub tip: Vec2,
    pub conf: f64,
}

impl NeedleEstimate {
    /// Axial coordinate of the line at lateral position `x` (`None` if vertical).
    pub fn y_at(&self, x: f64) -> Option<f64> {
        (self.direction.x.abs() > 1e-12)
            .then(|| self.point.y + (x - self.point.x) * self.direction.y / self.direction.x)
    }

    /// Orthogonal projection onto the line.
    pub fn project(&self, p: Vec2) -> Vec2 {
        self.point + self.direction * (p - self.point).dot(self.direction)
    }
}

pub const MIN_NEEDLE_PIXELS: usize = 10;
pub const MIN_NEEDLE_EXTENT: f64 = 5.0;

/// Fits the needle line to segmented pixels with a Huber loss on axial residuals.
pub fn fit_needle_line(pixels: &[Vec2], params: &HuberParams) -> Result<NeedleEstimate, FitError> {
    if pixels.len() < MIN_NEEDLE_PIXELS {
        return Err(FitError::InsufficientEvidence {
            got: pixels.len(),
            need: MIN_NEEDLE_PIXELS,
        });
    }
    let (lo, hi) = pixels.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.x), hi.max(p.x))
    });
    if hi - lo < MIN_NEEDLE_EXTENT {
        return Err(FitError::DegenerateOrientation {
            extent: hi - lo,
            need: MIN_NEEDLE_EXTENT,
        });
    }
    let xs: Vec<f64> = pixels.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = pixels.iter().map(|p| p.y).collect();
    let fit = huber_line(&xs, &ys, params)?;
    let mut direction = fit.direction();
    if direction.y < 0.0 || (direction.y == 0.0 && direction.x < 0.0) {
        direction = -direction;
    }
    let x_mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let point = Vec2::new(x_mean, fit.y_at(x_mean));
    let estimate = NeedleEstimate {
        point,
        direction,
        tip: point,
        conf: fit.inlier_fraction,
    };
    let deepest = pixels
        .iter()
        .copied()
        .max_by(|a, b| (*a - point).dot(direction).total_cmp(&(*b - point).dot(direction)))
        .unwrap_or(point);
    Ok(NeedleEstimate {
        tip: estimate.project(deepest),
        ..estimate
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_unit_confidence() {
        let px: Vec<_> = (0..50).map(|i| Vec2::new(i as f64, 0.5 * i as f64 + 10.0)).collect();
        let est = fit_needle_line(&px, &HuberParams::default()).unwrap();
        let expect = Vec2::new(1.0, 0.5).normalized().unwrap();
        assert!((est.direction - expect).norm() < 1e-12);
        let max_res = px
            .iter()
            .map(|p| (p.y - est.y_at(p.x).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(max_res < 1e-9);
        assert_eq!(est.conf, 1.0);
        assert!((est.tip - Vec2::new(49.0, 34.5)).norm() < 1e-9);
    }

    #[test]
    fn too_few_pixels() {
        let px: Vec<_> = (0..8).map(|i| Vec2::new(i as f64, i as f64)).collect();
        assert!(matches!(
            fit_needle_line(&px, &HuberParams::default()),
            Err(FitError::InsufficientEvidence { got: 8, .. })
        ));
    }

    #[test]
    fn vertical_cloud_is_degenerate() {
        let px: Vec<_> = (0..40)
            .map(|i| Vec2::new(100.0 + (i % 3) as f64, i as f64 * 2.0))
            .collect();
        assert!(matches!(
            fit_needle_line(&px, &HuberParams::default()),
            Err(FitError::DegenerateOrientation { .. })
        ));
    }

    #[test]
    fn huber_equals_ols_when_all_residuals_small() {
        let xs: Vec<f64> = (0..40).map(f64::from).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 2.0 - 0.3 * x + if (*x as i64) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let h = huber_line(&xs, &ys, &HuberParams::default()).unwrap();
        let o = ols_line(&xs, &ys).unwrap();
        assert!((h.slope - o.slope).abs() < 1e-6 && (h.intercept - o.intercept).abs() < 1e-6);
    }

    #[test]
    fn outliers_shift_ols_more_than_huber() {
        let xs: Vec<f64> = (0..60).map(f64::from).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 0.5 * x + 10.0 + if (x as i64) % 10 < 3 && x > 30.0 { 40.0 } else { 0.0 })
            .collect();
        let h = huber_line(&xs, &ys, &HuberParams::default()).unwrap();
        let o = ols_line(&xs, &ys).unwrap();
        assert!((h.slope - 0.5).abs() < (o.slope - 0.5).abs());
    }
}
