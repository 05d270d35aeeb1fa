//! Layer curves, needle line, tissue rotation and the tool-aligned ROI.

pub mod robust;
pub mod roi;
pub mod rotation;
pub mod spline;
pub mod tip;

pub use robust::{fit_needle_line, huber_line, ols_line, FitError, HuberParams, LineFit, NeedleEstimate};
pub use roi::{extract_roi, RoiError, RoiParams, RoiProvenance, RoiSpec};
pub use rotation::{dominant_orientation, estimate_tissue_rotation, RotationError};
pub use spline::{fit_layer_spline, ColumnRange, LayerCurve, LayerSample, SplineError, SplineParams};
pub use tip::TipTracker;
