//! Parameter-mapping comparator: zone pitch plus proximity pulse rate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::LayerCurve;
use crate::geom::Vec2;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Zone {
    Vitreous,
    Intraretinal,
    SubRpe,
}

impl Zone {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Zone::Vitreous => "vitreous",
            Zone::Intraretinal => "intraretinal",
            Zone::SubRpe => "sub-rpe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Pitch per zone (vitreous, intraretinal, at/below RPE), Hz.
    pub pitches: [f64; 3],
    pub rate_min: f64,
    pub rate_max: f64,
    pub pulse_ms: f64,
    pub amplitude: f64,
    /// Pulses speed up toward the RPE when set; slow down otherwise.
    pub faster_near_rpe: bool,
    pub crossfade_ms: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            pitches: [220.0, 440.0, 880.0],
            rate_min: 2.0,
            rate_max: 12.0,
            pulse_ms: 40.0,
            amplitude: 0.3,
            faster_near_rpe: true,
            crossfade_ms: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("tip column {0:.1} outside the layer curves")]
    OutsideCurves(f64),
    #[error("invalid baseline parameters: {0}")]
    Params(&'static str),
}

impl BaselineParams {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.rate_max > self.rate_min && self.rate_min > 0.0) {
            return Err(BaselineError::Params("need rate_max > rate_min > 0"));
        }
        if self.pitches.iter().any(|p| !(100.0..=4000.0).contains(p)) {
            return Err(BaselineError::Params("pitches must lie in 100..4000 Hz"));
        }
        let [a, b, c] = self.pitches;
        if a == b || b == c || a == c {
            return Err(BaselineError::Params("pitches must be distinct"));
        }
        if !(self.pulse_ms > 0.0) {
            return Err(BaselineError::Params("pulse length must be positive"));
        }
        Ok(())
    }
}

fn layer_rows(tip: Vec2, ilm: &LayerCurve, rpe: &LayerCurve) -> Result<(f64, f64), BaselineError> {
    let col = math::round(tip.x) as i64;
    match (ilm.at_column(col), rpe.at_column(col)) {
        (Some(_), Some(_)) => Ok((ilm.eval(tip.x), rpe.eval(tip.x))),
        _ => Err(BaselineError::OutsideCurves(tip.x)),
    }
}

/// Zone of the tip: above the ILM, between ILM and RPE, or at/below the RPE.
pub fn classify_zone(tip: Vec2, ilm: &LayerCurve, rpe: &LayerCurve) -> Result<Zone, BaselineError> {
    let (yi, yr) = layer_rows(tip, ilm, rpe)?;
    Ok(if tip.y < yi {
        Zone::Vitreous
    } else if tip.y < yr {
        Zone::Intraretinal
    } else {
        Zone::SubRpe
    })
}

/// Fraction of the ILM-to-RPE traversal covered by the tip, clamped to `[0, 1]`.
pub fn depth_fraction(tip: Vec2, ilm: &LayerCurve, rpe: &LayerCurve) -> Result<f64, BaselineError> {
    let (yi, yr) = layer_rows(tip, ilm, rpe)?;
    let span = yr - yi;
    if span <= 0.0 {
        return Ok(if tip.y < yi { 0.0 } else { 1.0 });
    }
    Ok(((tip.y - yi) / span).clamp(0.0, 1.0))
}

/// Pulse rate for depth fraction `u` (linear between the bounds).
pub fn pulse_rate(u: f64, p: &BaselineParams) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let u = if p.faster_near_rpe { u } else { 1.0 - u };
    p.rate_min + (p.rate_max - p.rate_min) * u
}

/// Oscillator, pulse train and crossfade state carried across blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineVoice {
    params: BaselineParams,
    sample_rate: f64,
    phase: f64,
    fade_phase: f64,
    fade_pitch: f64,
    fade_left: u32,
    zone: Option<Zone>,
    pulse_phase: f64,
    pulse_pos: u32,
    pulse_len: u32,
    fade_len: u32,
}

impl BaselineVoice {
    pub fn new(params: BaselineParams, sample_rate: f64) -> Self {
        let pulse_len = (math::round(params.pulse_ms * 1e-3 * sample_rate) as u32).max(1);
        let fade_len = (math::round(params.crossfade_ms * 1e-3 * sample_rate) as u32).max(1);
        Self {
            params,
            sample_rate,
            phase: 0.0,
            fade_phase: 0.0,
            fade_pitch: 0.0,
            fade_left: 0,
            zone: None,
            // The first pulse starts on the first sample.
            pulse_phase: 1.0,
            pulse_pos: pulse_len,
            pulse_len,
            fade_len,
        }
    }

    pub fn zone(&self) -> Option<Zone> {
        self.zone
    }

    /// Renders `out.len()` samples for the given zone and depth fraction.
    pub fn render(&mut self, zone: Zone, u: f64, out: &mut [f32]) {
        let tau = 2.0 * core::f64::consts::PI;
        if let Some(prev) = self.zone {
            if prev != zone {
                self.fade_pitch = self.params.pitches[prev.index()];
                self.fade_phase = self.phase;
                self.phase = 0.0;
                self.fade_left = self.fade_len;
            }
        }
        self.zone = Some(zone);
        let pitch = self.params.pitches[zone.index()];
        let rate = pulse_rate(u, &self.params);
        let step = pitch / self.sample_rate;
        for o in out.iter_mut() {
            self.pulse_phase += rate / self.sample_rate;
            if self.pulse_phase >= 1.0 {
                self.pulse_phase -= math::floor(self.pulse_phase);
                self.pulse_pos = 0;
            }
            let gate = if self.pulse_pos < self.pulse_len {
                let x = (self.pulse_pos as f64 + 0.5) / self.pulse_len as f64;
                self.pulse_pos += 1;
                let s = math::sin(core::f64::consts::PI * x);
                s * s
            } else {
                0.0
            };
            let mut tone = math::sin(tau * self.phase);
            if self.fade_left > 0 {
                let mix = self.fade_left as f64 / self.fade_len as f64;
                tone = (1.0 - mix) * tone + mix * math::sin(tau * self.fade_phase);
                self.fade_phase += self.fade_pitch / self.sample_rate;
                self.fade_phase -= math::floor(self.fade_phase);
                self.fade_left -= 1;
            }
            self.phase += step;
            self.phase -= math::floor(self.phase);
            *o = (self.params.amplitude * gate * tone) as f32;
        }
    }
}
