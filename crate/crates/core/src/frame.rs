//! Per-frame imaging inputs: the B-scan image and its layer segmentation.

use alloc::vec::Vec;

use thiserror::Error;

use crate::geom::Vec2;

/// Smallest accepted B-scan dimension in either axis.
pub const MIN_FRAME_DIM: usize = 32;

/// One grayscale B-scan, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BScanFrame {
    pub t: f64,
    pub width: usize,
    pub height: usize,
    pub intensity: Vec<f32>,
}

impl BScanFrame {
    pub fn new(t: f64, width: usize, height: usize, intensity: Vec<f32>) -> Result<Self, FrameError> {
        let frame = Self {
            t,
            width,
            height,
            intensity,
        };
        frame.validate()?;
        Ok(frame)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.width < MIN_FRAME_DIM || self.height < MIN_FRAME_DIM {
            return Err(FrameError::TooSmall {
                width: self.width,
                height: self.height,
            });
        }
        if self.intensity.len() != self.width * self.height {
            return Err(FrameError::ImageSize {
                expected: self.width * self.height,
                got: self.intensity.len(),
            });
        }
        if let Some(i) = self.intensity.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(FrameError::Intensity { index: i });
        }
        Ok(())
    }

    /// Nearest-pixel lookup; `None` outside the image.
    pub fn sample(&self, p: Vec2) -> Option<f32> {
        let (x, y) = (libm::round(p.x), libm::round(p.y));
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        Some(self.intensity[y as usize * self.width + x as usize])
    }
}

/// Needle evidence from the segmenter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NeedleEvidence {
    pub pixels: Vec<Vec2>,
    pub tip: Option<Vec2>,
    pub conf: f64,
}

/// Segmentation of one B-scan: per-column ILM/RPE rows (or missing), their
/// confidences, and the needle pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SegFrame {
    pub t: f64,
    pub width: usize,
    pub ilm: Vec<Option<f64>>,
    pub rpe: Vec<Option<f64>>,
    pub conf_ilm: Vec<f64>,
    pub conf_rpe: Vec<f64>,
    pub needle: NeedleEvidence,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("frame too small: {width}x{height} (minimum {MIN_FRAME_DIM})")]
    TooSmall { width: usize, height: usize },
    #[error("image has {got} pixels, expected {expected}")]
    ImageSize { expected: usize, got: usize },
    #[error("intensity out of [0,1] at pixel {index}")]
    Intensity { index: usize },
    #[error("array `{field}` has length {got}, expected width {width}")]
    Length {
        field: &'static str,
        got: usize,
        width: usize,
    },
    #[error("rpe above ilm at column {column} (ilm {ilm}, rpe {rpe})")]
    LayerOrder { column: usize, ilm: f64, rpe: f64 },
    #[error("confidence `{field}` out of [0,1] at column {column}: {value}")]
    Confidence {
        field: &'static str,
        column: usize,
        value: f64,
    },
    #[error("non-finite value in `{field}` at index {index}")]
    NonFinite { field: &'static str, index: usize },
    #[error("needle point {index} outside frame: ({x}, {y})")]
    NeedleBounds { index: usize, x: f64, y: f64 },
    #[error("needle confidence out of [0,1]: {0}")]
    NeedleConfidence(f64),
}

impl SegFrame {
    /// A frame with every column missing and zero confidence.
    pub fn empty(t: f64, width: usize) -> Self {
        Self {
            t,
            width,
            ilm: alloc::vec![None; width],
            rpe: alloc::vec![None; width],
            conf_ilm: alloc::vec![0.0; width],
            conf_rpe: alloc::vec![0.0; width],
            needle: NeedleEvidence::default(),
        }
    }

    /// Checks the frame invariants. `height` bounds needle coordinates when known.
    pub fn validate(&self, height: Option<usize>) -> Result<(), FrameError> {
        let w = self.width;
        if w < MIN_FRAME_DIM {
            return Err(FrameError::TooSmall {
                width: w,
                height: height.unwrap_or(0),
            });
        }
        for (field, len) in [
            ("ilm", self.ilm.len()),
            ("rpe", self.rpe.len()),
            ("cilm", self.conf_ilm.len()),
            ("crpe", self.conf_rpe.len()),
        ] {
            if len != w {
                return Err(FrameError::Length {
                    field,
                    got: len,
                    width: w,
                });
            }
        }
        for (field, col) in [("ilm", &self.ilm), ("rpe", &self.rpe)] {
            if let Some(index) = col.iter().position(|v| v.is_some_and(|y| !y.is_finite())) {
                return Err(FrameError::NonFinite { field, index });
            }
        }
        for (field, conf) in [("cilm", &self.conf_ilm), ("crpe", &self.conf_rpe)] {
            for (column, &value) in conf.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(FrameError::Confidence { field, column, value });
                }
            }
        }
        for (column, (ilm, rpe)) in self.ilm.iter().zip(&self.rpe).enumerate() {
            if let (Some(ilm), Some(rpe)) = (*ilm, *rpe) {
                if rpe < ilm {
                    return Err(FrameError::LayerOrder { column, ilm, rpe });
                }
            }
        }
        if !(0.0..=1.0).contains(&self.needle.conf) {
            return Err(FrameError::NeedleConfidence(self.needle.conf));
        }
        let h = height.map_or(f64::INFINITY, |h| h as f64);
        let in_bounds = |p: &Vec2| p.is_finite() && p.x >= 0.0 && p.x < w as f64 && p.y >= 0.0 && p.y < h;
        let tip = self.needle.tip.iter();
        for (index, p) in self.needle.pixels.iter().chain(tip).enumerate() {
            if !in_bounds(p) {
                return Err(FrameError::NeedleBounds { index, x: p.x, y: p.y });
            }
        }
        Ok(())
    }

    /// `(column, row, confidence)` for every defined ILM column.
    pub fn ilm_samples(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        layer_samples(&self.ilm, &self.conf_ilm)
    }

    pub fn rpe_samples(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        layer_samples(&self.rpe, &self.conf_rpe)
    }

    /// Mean confidence over an inclusive column range (clamped to the frame).
    pub fn mean_confidence(&self, from: i64, to: i64) -> (f64, f64) {
        let lo = from.max(0) as usize;
        let hi = (to.max(-1) + 1).min(self.width as i64).max(0) as usize;
        if lo >= hi {
            return (0.0, 0.0);
        }
        let n = (hi - lo) as f64;
        let ci = self.conf_ilm[lo..hi].iter().sum::<f64>() / n;
        let cr = self.conf_rpe[lo..hi].iter().sum::<f64>() / n;
        (ci, cr)
    }
}

fn layer_samples<'a>(rows: &'a [Option<f64>], conf: &'a [f64]) -> impl Iterator<Item = (usize, f64, f64)> + 'a {
    rows.iter()
        .zip(conf)
        .enumerate()
        .filter_map(|(x, (y, c))| y.map(|y| (x, y, *c)))
}
