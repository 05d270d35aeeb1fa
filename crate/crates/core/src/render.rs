//! Pickup from lattice velocities to mono audio.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::VelocitySink;
use crate::geom::Vec2;
use crate::lattice::LatticeModel;
use crate::math;

/// Fixed-size mono block at [`crate::SAMPLE_RATE`].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBlock {
    pub index: u64,
    pub samples: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PickupParams {
    pub output_gain: f64,
    pub dc_cutoff_hz: f64,
    pub limiter_ceiling: f64,
    /// Per-class pickup weights (vitreous, ilm, retina, rpe).
    pub label_weights: [f64; 4],
}

impl Default for PickupParams {
    fn default() -> Self {
        Self {
            output_gain: 5.0,
            dc_cutoff_hz: 20.0,
            limiter_ceiling: 0.95,
            label_weights: [1.0; 4],
        }
    }
}

/// One-pole DC blocker `y[n] = x[n] - x[n-1] + r y[n-1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcBlocker {
    r: f64,
    x1: f64,
    y1: f64,
}

impl DcBlocker {
    pub fn new(cutoff_hz: f64, sample_rate: f64) -> Self {
        Self {
            r: math::exp(-2.0 * core::f64::consts::PI * cutoff_hz / sample_rate),
            x1: 0.0,
            y1: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = x - self.x1 + self.r * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }
}

/// `ceiling * tanh(x / ceiling)`.
#[inline]
pub fn soft_clip(x: f64, ceiling: f64) -> f64 {
    ceiling * math::tanh(x / ceiling)
}

/// Weighted velocity pickup, DC blocker and soft limiter.
///
/// Each node contributes the projection of its velocity onto the diagonal
/// `(1, 1) / sqrt(2)`, so lateral and axial motion are both heard.
#[derive(Debug, Clone)]
pub struct Pickup {
    weights: Vec<f64>,
    gain: f64,
    ceiling: f64,
    dc: DcBlocker,
    raw: Vec<f64>,
}

impl Pickup {
    /// Weights are normalized to sum to one. Negative or non-finite weights are zeroed.
    pub fn new(weights: &[f64], params: &PickupParams, sample_rate: f64) -> Self {
        let clean: Vec<f64> = weights
            .iter()
            .map(|w| if w.is_finite() && *w > 0.0 { *w } else { 0.0 })
            .collect();
        let total: f64 = clean.iter().sum();
        let weights = if total > 0.0 {
            clean.iter().map(|w| w / total).collect()
        } else {
            clean
        };
        Self {
            weights,
            gain: params.output_gain,
            ceiling: params.limiter_ceiling,
            dc: DcBlocker::new(params.dc_cutoff_hz, sample_rate),
            raw: Vec::new(),
        }
    }

    pub fn for_model(model: &LatticeModel, params: &PickupParams, sample_rate: f64) -> Self {
        let w: Vec<f64> = model
            .nodes
            .iter()
            .map(|n| params.label_weights[n.label.index()])
            .collect();
        Self::new(&w, params, sample_rate)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Linear pickup of one velocity snapshot (before DC blocking and limiting).
    pub fn mix(&self, velocities: &[Vec2]) -> f64 {
        let s: f64 = self.weights.iter().zip(velocities).map(|(w, v)| w * (v.x + v.y)).sum();
        self.gain * s * core::f64::consts::FRAC_1_SQRT_2
    }

    /// Starts a block of `n` samples.
    pub fn begin(&mut self, n: usize) {
        self.raw.clear();
        self.raw.resize(n, 0.0);
    }

    /// Pre-limiter samples collected since [`Pickup::begin`].
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// DC-blocks and limits the collected samples into `out`.
    pub fn finish(&mut self, out: &mut [f32]) {
        for (o, &x) in out.iter_mut().zip(&self.raw) {
            let y = self.dc.process(x);
            *o = soft_clip(y, self.ceiling) as f32;
        }
    }

    /// Output stage for an externally produced signal (same filter state).
    pub fn process_sample(&mut self, x: f64) -> f64 {
        soft_clip(self.dc.process(x), self.ceiling)
    }
}

impl VelocitySink for Pickup {
    fn push(&mut self, sample: usize, velocities: &[Vec2]) {
        let v = self.mix(velocities);
        if let Some(slot) = self.raw.get_mut(sample) {
            *slot = v;
        }
    }
}
