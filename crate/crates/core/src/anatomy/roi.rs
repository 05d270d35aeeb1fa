//! Tool-aligned region of interest in the tissue-aligned frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::robust::NeedleEstimate;
use super::spline::LayerCurve;
use crate::geom::Vec2;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoiProvenance {
    DirectIntersection,
    NeighborhoodSearch,
    TrajectoryOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoiSpec {
    /// Tissue rotation used to build the aligned frame (degrees).
    pub theta_deg: f64,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub center: Vec2,
    pub provenance: RoiProvenance,
}

impl RoiSpec {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Integer columns covered by the rectangle.
    pub fn columns(&self) -> super::ColumnRange {
        super::ColumnRange::new(libm::ceil(self.x_min) as i64, libm::floor(self.x_max) as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiParams {
    pub width: f64,
    /// Height of the rectangle above the center before vitreous extension is `height / 2`.
    pub height: f64,
    pub search_radius: f64,
    /// Minimum share of the rectangle height lying above the shallowest ILM point.
    pub vitreous_fraction: f64,
    /// Extent below the deepest RPE point; zero keeps the lattice above the RPE.
    pub sub_rpe_margin: f64,
}

impl Default for RoiParams {
    fn default() -> Self {
        Self {
            width: 256.0,
            height: 120.0,
            search_radius: 50.0,
            vitreous_fraction: 0.2,
            sub_rpe_margin: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoiError {
    #[error("frame {width}x{height} too small for an ROI")]
    Frame { width: f64, height: f64 },
    #[error("layer curves do not produce a valid rectangle")]
    Degenerate,
}

/// Where the needle line crosses the ILM, searching lateral positions in `[lo, hi]`.
fn crossing(line: &NeedleEstimate, ilm: &LayerCurve, lo: f64, hi: f64) -> Option<Vec2> {
    let g = |x: f64| line.y_at(x).map(|y| y - ilm.eval(x));
    let steps = (math::ceil((hi - lo).abs()) as usize).max(1);
    let dx = (hi - lo) / steps as f64;
    let mut a = lo;
    let mut ga = g(a)?;
    for k in 1..=steps {
        let b = lo + dx * k as f64;
        let gb = g(b)?;
        if ga == 0.0 {
            return Some(Vec2::new(a, ilm.eval(a)));
        }
        if (ga < 0.0) != (gb < 0.0) || gb == 0.0 {
            let (mut l, mut r, mut gl) = (a, b, ga);
            for _ in 0..60 {
                let m = 0.5 * (l + r);
                let gm = g(m)?;
                if (gm < 0.0) == (gl < 0.0) && gm != 0.0 {
                    l = m;
                    gl = gm;
                } else {
                    r = m;
                }
            }
            let x = 0.5 * (l + r);
            return Some(Vec2::new(x, ilm.eval(x)));
        }
        a = b;
        ga = gb;
    }
    None
}

/// Chooses the ROI center and provenance using the fallback chain.
///
/// `needle_pixels` are in the aligned frame. Without any needle evidence the
/// center falls back to the ILM at the middle of the frame (trajectory-only).
pub fn roi_center(
    ilm: &LayerCurve,
    line: Option<&NeedleEstimate>,
    needle_pixels: &[Vec2],
    frame_width: f64,
    params: &RoiParams,
) -> (Vec2, RoiProvenance) {
    let Some(line) = line else {
        let x = 0.5 * (frame_width - 1.0);
        return (Vec2::new(x, ilm.eval(x)), RoiProvenance::TrajectoryOnly);
    };

    // Direct overlap: the line crosses the ILM within the lateral extent of the evidence.
    let (lo, hi) = needle_pixels
        .iter()
        .chain(core::iter::once(&line.tip))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.x), hi.max(p.x))
        });
    if lo.is_finite() {
        if let Some(c) = crossing(line, ilm, lo - 1.0, hi + 1.0) {
            return (c, RoiProvenance::DirectIntersection);
        }
    }

    let nearest = needle_pixels
        .iter()
        .chain(core::iter::once(&line.tip))
        .map(|p| (*p, (p.y - ilm.eval(p.x)).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    if let Some((p, dist)) = nearest {
        if dist <= params.search_radius {
            return (Vec2::new(p.x, ilm.eval(p.x)), RoiProvenance::NeighborhoodSearch);
        }
    }

    // Extrapolate the trajectory ahead of the tip, then anywhere in the frame.
    let ahead = if line.direction.x >= 0.0 {
        (line.tip.x, frame_width - 1.0)
    } else {
        (line.tip.x, 0.0)
    };
    let c = crossing(line, ilm, ahead.0, ahead.1)
        .or_else(|| crossing(line, ilm, 0.0, frame_width - 1.0))
        .unwrap_or_else(|| {
            let x = line.tip.x.clamp(0.0, frame_width - 1.0);
            Vec2::new(x, ilm.eval(x))
        });
    (c, RoiProvenance::TrajectoryOnly)
}

/// Builds the ROI rectangle around the chosen center.
#[allow(clippy::too_many_arguments)]
pub fn extract_roi(
    theta_deg: f64,
    ilm: &LayerCurve,
    rpe: &LayerCurve,
    line: Option<&NeedleEstimate>,
    needle_pixels: &[Vec2],
    frame: (f64, f64),
    params: &RoiParams,
) -> Result<RoiSpec, RoiError> {
    let (fw, fh) = frame;
    if fw < 8.0 || fh < 8.0 {
        return Err(RoiError::Frame { width: fw, height: fh });
    }
    let (center, provenance) = roi_center(ilm, line, needle_pixels, fw, params);

    let w = params.width.min(fw - 1.0);
    let mut x_min = center.x - 0.5 * w;
    if x_min < 0.0 {
        x_min = 0.0;
    }
    if x_min + w > fw - 1.0 {
        x_min = fw - 1.0 - w;
    }
    let x_max = x_min + w;

    let (mut ilm_min, mut rpe_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut x = x_min;
    while x <= x_max {
        ilm_min = ilm_min.min(ilm.eval(x));
        rpe_max = rpe_max.max(rpe.eval(x));
        x += 1.0;
    }
    let y_max = (rpe_max + params.sub_rpe_margin).min(fh - 1.0);
    let f = params.vitreous_fraction.clamp(0.0, 0.9);
    let vitreous_top = (ilm_min - f * y_max) / (1.0 - f);
    let y_min = (center.y - 0.5 * params.height).min(vitreous_top).max(0.0);

    if !(y_max - y_min >= 4.0) || !(x_max - x_min >= 4.0) || !y_min.is_finite() {
        return Err(RoiError::Degenerate);
    }
    Ok(RoiSpec {
        theta_deg,
        x_min,
        y_min,
        x_max,
        y_max,
        center,
        provenance,
    })
}
