//! Session configuration: every tunable constant in one tree.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::{HuberParams, RoiParams, SplineParams};
use crate::baseline::{BaselineError, BaselineParams};
use crate::dynamics::ExcitationParams;
use crate::lattice::{LatticeParams, Tissue};
use crate::phantom::PhantomConfig;
use crate::render::PickupParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Proposed,
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Baseline => "baseline",
        }
    }
}

/// Where frames come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Source {
    #[default]
    Phantom,
    Sequence {
        path: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnatomyConfig {
    pub spline: SplineParams,
    pub huber: HuberParams,
    pub roi: RoiParams,
    /// Tip EMA weight of the newest observation.
    pub tip_alpha: f64,
    /// Re-estimate the tissue rotation every frame instead of once at start.
    pub recompute_rotation: bool,
}

impl Default for AnatomyConfig {
    fn default() -> Self {
        Self {
            spline: SplineParams::default(),
            huber: HuberParams::default(),
            roi: RoiParams::default(),
            tip_alpha: 0.6,
            recompute_rotation: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub block_size: usize,
    /// Silence rendered after the last frame of an offline run (seconds).
    pub tail_s: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            block_size: 256,
            tail_s: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub frame_budget_ms: f64,
    /// Run the analysis on every n-th frame.
    pub analysis_stride: usize,
    /// Phantom frame rate in live mode.
    pub fps: f64,
    /// Capacity of the analysis-to-audio snapshot queue.
    pub queue_capacity: usize,
    /// The phantom idles when no pose arrives for this long.
    pub heartbeat_ms: u64,
    /// Audio blocks buffered ahead of real time in live mode.
    pub audio_lead_blocks: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            frame_budget_ms: 28.0,
            analysis_stride: 1,
            fps: 30.0,
            queue_capacity: 64,
            heartbeat_ms: 200,
            audio_lead_blocks: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub method: Method,
    pub seed: u64,
    pub source: Source,
    /// Frame height assumed for sequences without images.
    pub frame_height: usize,
    pub audio: AudioConfig,
    pub anatomy: AnatomyConfig,
    pub lattice: LatticeParams,
    pub excitation: ExcitationParams,
    pub render: PickupParams,
    pub baseline: BaselineParams,
    pub runtime: RuntimeConfig,
    pub phantom: PhantomConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            method: Method::Proposed,
            seed: 7,
            source: Source::Phantom,
            frame_height: 512,
            audio: AudioConfig::default(),
            anatomy: AnatomyConfig::default(),
            lattice: LatticeParams::default(),
            excitation: ExcitationParams::default(),
            render: PickupParams::default(),
            baseline: BaselineParams::default(),
            runtime: RuntimeConfig::default(),
            phantom: PhantomConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: &'static str },
    #[error("tissue {tissue}: {reason}")]
    Tissue { tissue: Tissue, reason: &'static str },
    #[error("baseline: {0}")]
    Baseline(#[from] BaselineError),
}

fn check(ok: bool, field: &'static str, reason: &'static str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid { field, reason })
    }
}

impl SessionConfig {
    /// Rejects values the pipeline cannot run with. Stiffness values that
    /// violate the stability bound are clamped when the lattice is built, so
    /// only their sign and ordering are checked here.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(
            self.audio.block_size >= 16 && self.audio.block_size <= 8192,
            "audio.block_size",
            "must be in 16..=8192",
        )?;
        check(self.audio.tail_s >= 0.0, "audio.tail_s", "must be >= 0")?;
        check(
            self.frame_height >= crate::frame::MIN_FRAME_DIM,
            "frame_height",
            "must be >= 32",
        )?;
        let a = &self.anatomy;
        check(a.spline.lambda >= 0.0, "anatomy.spline.lambda", "must be >= 0")?;
        check(
            a.spline.knot_spacing >= 1.0,
            "anatomy.spline.knot_spacing",
            "must be >= 1",
        )?;
        check(
            (0.0..=1.0).contains(&a.spline.min_conf),
            "anatomy.spline.min_conf",
            "must lie in [0, 1]",
        )?;
        check(a.huber.delta > 0.0, "anatomy.huber.delta", "must be > 0")?;
        check(a.huber.max_iter >= 1, "anatomy.huber.max_iter", "must be >= 1")?;
        check(
            a.tip_alpha > 0.0 && a.tip_alpha <= 1.0,
            "anatomy.tip_alpha",
            "must lie in (0, 1]",
        )?;
        check(
            a.roi.width >= 8.0 && a.roi.height >= 8.0,
            "anatomy.roi",
            "width and height must be >= 8",
        )?;
        check(
            (0.0..0.9).contains(&a.roi.vitreous_fraction),
            "anatomy.roi.vitreous_fraction",
            "must lie in [0, 0.9)",
        )?;
        let l = &self.lattice;
        check(l.rows >= 4 && l.cols >= 4, "lattice", "grid must be at least 4x4")?;
        check(
            l.labels.thin_weight >= 1.0,
            "lattice.labels.thin_weight",
            "must be >= 1",
        )?;
        for t in Tissue::ALL {
            let p = l.table.get(t);
            let bad = |reason| Err(ConfigError::Tissue { tissue: t, reason });
            if !(p.mass > 0.0) {
                return bad("mass must be > 0");
            }
            if !(p.stiffness > 0.0 && p.k_min > 0.0 && p.k_min <= p.stiffness && p.stiffness <= p.k_max) {
                return bad("need 0 < k_min <= stiffness <= k_max");
            }
            if !(p.damping >= 0.0) {
                return bad("damping must be >= 0");
            }
            if !(p.order == 1 || p.order == 2) {
                return bad("order must be 1 or 2");
            }
        }
        let c = &l.calibration;
        check(
            c.ref_stiffness > 0.0 && c.ref_freq_hz > 0.0,
            "lattice.calibration",
            "reference must be > 0",
        )?;
        check(
            c.anchor_coupling > 0.0 && c.damping_scale >= 0.0,
            "lattice.calibration",
            "coupling > 0, damping scale >= 0",
        )?;
        let e = &self.excitation;
        check(
            e.v_ref > 0.0 && e.v_min >= 0.0 && e.k_ref > 0.0,
            "excitation",
            "v_ref, k_ref > 0 and v_min >= 0",
        )?;
        check(e.jitter_max_ms >= 0.0, "excitation.jitter_max_ms", "must be >= 0")?;
        check(e.envelope_ms > 0.0, "excitation.envelope_ms", "must be > 0")?;
        check(e.window >= 8, "excitation.window", "must be >= 8")?;
        let r = &self.render;
        check(
            r.label_weights.iter().all(|w| w.is_finite() && *w >= 0.0),
            "render.label_weights",
            "must be finite and >= 0",
        )?;
        check(
            r.label_weights.iter().any(|w| *w > 0.0),
            "render.label_weights",
            "at least one must be > 0",
        )?;
        check(
            r.limiter_ceiling > 0.0 && r.limiter_ceiling <= 1.0,
            "render.limiter_ceiling",
            "must lie in (0, 1]",
        )?;
        check(
            r.dc_cutoff_hz >= 0.0 && r.output_gain.is_finite(),
            "render",
            "invalid filter or gain",
        )?;
        self.baseline.validate()?;
        let rt = &self.runtime;
        check(rt.analysis_stride >= 1, "runtime.analysis_stride", "must be >= 1")?;
        check(
            rt.fps > 0.0 && rt.queue_capacity >= 1,
            "runtime",
            "fps and queue capacity must be positive",
        )?;
        let p = &self.phantom;
        check(
            p.width >= 32 && p.height >= 32,
            "phantom",
            "frame must be at least 32x32",
        )?;
        check(
            p.retina_thickness - p.thickness_ripple.abs() >= 30.0,
            "phantom.retina_thickness",
            "retina must stay >= 30 px thick",
        )?;
        check(
            p.bleb_max >= 0.0 && p.bleb_v0 > 0.0 && p.bleb_sigma > 0.0,
            "phantom",
            "bleb parameters must be positive",
        )?;
        check(
            (0.0..=1.0).contains(&p.shadow_conf_factor),
            "phantom.shadow_conf_factor",
            "must lie in [0, 1]",
        )?;
        check(
            (0.0..=1.0).contains(&p.shadow_drop_prob),
            "phantom.shadow_drop_prob",
            "must lie in [0, 1]",
        )?;
        Ok(())
    }
}
