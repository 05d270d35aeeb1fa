use alloc::vec::Vec;

use thiserror::Error;

use super::robust::{huber_line, HuberParams};
use crate::frame::SegFrame;
use crate::geom::Vec2;
use crate::math;

/// Orientation estimates are clamped to this magnitude (degrees).
pub const MAX_TILT_DEG: f64 = 45.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RotationError {
    #[error("ILM defined on {defined} of {width} columns (need 25%)")]
    InsufficientIlm { defined: usize, width: usize },
    #[error("ILM points do not determine an orientation")]
    Degenerate,
}

/// Principal angle (degrees) of a robust line through `points`.
pub fn dominant_orientation(points: &[Vec2], params: &HuberParams) -> Result<f64, RotationError> {
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    let fit = huber_line(&xs, &ys, params).map_err(|_| RotationError::Degenerate)?;
    Ok(math::rad_to_deg(math::atan(fit.slope)).clamp(-MAX_TILT_DEG, MAX_TILT_DEG))
}

/// Dominant retinal orientation from the ILM of one segmentation frame.
///
/// Positive angles mean the layer descends (rows increase) to the right.
pub fn estimate_tissue_rotation(seg: &SegFrame, params: &HuberParams) -> Result<f64, RotationError> {
    let points: Vec<Vec2> = seg.ilm_samples().map(|(x, y, _)| Vec2::new(x as f64, y)).collect();
    if points.len() * 4 < seg.width || points.len() < 2 {
        return Err(RotationError::InsufficientIlm {
            defined: points.len(),
            width: seg.width,
        });
    }
    dominant_orientation(&points, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tilted(width: usize, deg: f64) -> SegFrame {
        let mut f = SegFrame::empty(0.0, width);
        let t = math::tan(math::deg_to_rad(deg));
        for x in 0..width {
            let y = 250.0 + t * (x as f64 - 256.0);
            f.ilm[x] = Some(y);
            f.rpe[x] = Some(y + 80.0);
            f.conf_ilm[x] = 1.0;
            f.conf_rpe[x] = 1.0;
        }
        f
    }

    #[test]
    fn horizontal_is_zero() {
        let th = estimate_tissue_rotation(&tilted(512, 0.0), &HuberParams::default()).unwrap();
        assert!(th.abs() < 1e-6);
    }

    #[test]
    fn outlier_columns_do_not_bias_the_angle() {
        let mut f = tilted(512, -8.0);
        // 20% of columns pushed 35 px down (oracle: exact fit on the clean subset is -8 deg).
        for x in (0..512).filter(|x| x % 5 == 2) {
            f.ilm[x] = f.ilm[x].map(|y| y + 35.0);
        }
        let th = estimate_tissue_rotation(&f, &HuberParams::default()).unwrap();
        assert!((th + 8.0).abs() < 1.0, "theta = {th}");
    }

    #[test]
    fn sparse_ilm_is_rejected() {
        let mut f = tilted(512, 3.0);
        for x in 0..400 {
            f.ilm[x] = None;
        }
        assert!(matches!(
            estimate_tissue_rotation(&f, &HuberParams::default()),
            Err(RotationError::InsufficientIlm { .. })
        ));
    }

    #[test]
    fn clamps_steep_layers() {
        let th = estimate_tissue_rotation(&tilted(512, 60.0), &HuberParams::default()).unwrap();
        assert_eq!(th, MAX_TILT_DEG);
    }
}
