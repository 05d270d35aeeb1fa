//! Excitation events: tool contact, anatomy deformation, confidence jitter.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anatomy::{ColumnRange, LayerCurve};
use crate::geom::Vec2;
use crate::lattice::{LatticeModel, Tissue};
use crate::math;

/// Upper bound of the deformation excitation proxy. Not configurable.
pub const F_ILM_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventSource {
    Tool,
    Crossing,
    Deformation,
}

impl EventSource {
    pub fn name(self) -> &'static str {
        match self {
            EventSource::Tool => "tool",
            EventSource::Crossing => "crossing",
            EventSource::Deformation => "deformation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Envelope {
    RaisedCosine,
}

impl Envelope {
    /// Envelope value at sample `i` of a pulse lasting `len` samples.
    #[inline]
    pub fn at(self, i: u64, len: u32) -> f64 {
        match self {
            Envelope::RaisedCosine => {
                let phase = (i as f64 + 0.5) / len as f64;
                0.5 - 0.5 * math::cos(2.0 * core::f64::consts::PI * phase)
            }
        }
    }
}

/// A timed force pulse on a set of nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationEvent {
    /// `(node, weight)`; weights sum to one.
    pub targets: Vec<(usize, f64)>,
    pub amplitude: f64,
    /// Unit force direction in the aligned frame.
    pub direction: Vec2,
    pub duration: u32,
    pub envelope: Envelope,
    /// Samples after the block boundary where the event is applied (jitter included).
    pub onset: u64,
    pub source: EventSource,
}

#[derive(Debug, Clone, PartialEq)]
struct ActiveEvent {
    event: ExcitationEvent,
    start: u64,
}

/// Events in flight on the audio thread.
#[derive(Debug, Clone, Default)]
pub struct EventSchedule {
    active: Vec<ActiveEvent>,
    applied: u64,
}

impl EventSchedule {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            active: Vec::with_capacity(n),
            applied: 0,
        }
    }

    /// Schedules `event` relative to absolute sample `now`.
    pub fn push(&mut self, now: u64, event: ExcitationEvent) {
        let start = now + event.onset;
        self.active.push(ActiveEvent { event, start });
        self.applied += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    /// Total events ever scheduled.
    pub fn applied(&self) -> u64 {
        self.applied
    }

    /// Adds the forces of all events active at `sample` and retires finished ones.
    pub fn apply(&mut self, sample: u64, force: &mut [Vec2]) {
        if self.active.is_empty() {
            return;
        }
        let mut finished = false;
        for a in &self.active {
            let e = &a.event;
            if sample < a.start {
                continue;
            }
            let i = sample - a.start;
            if i >= e.duration as u64 {
                finished = true;
                continue;
            }
            let g = e.amplitude * e.envelope.at(i, e.duration);
            for &(node, w) in &e.targets {
                if let Some(f) = force.get_mut(node) {
                    *f += e.direction * (g * w);
                }
            }
        }
        if finished {
            self.active.retain(|a| sample < a.start + a.event.duration as u64);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcitationParams {
    /// Tool excitation gain `A0` (force units).
    pub tool_gain: f64,
    /// Deformation excitation gain per unit of `f_ILM`.
    pub deformation_gain: f64,
    /// Tip speed below which no tool excitation is produced (px/s).
    pub v_min: f64,
    /// Tip speed at which the tool excitation saturates (px/s).
    pub v_ref: f64,
    /// Stiffness normalizing the stiffness scaling `sqrt(k / k_ref)`.
    pub k_ref: f64,
    pub crossing_gain: f64,
    /// Deformation events fire only when `f_ILM` exceeds this.
    pub f_min: f64,
    pub jitter_max_ms: f64,
    pub envelope_ms: f64,
    /// Lateral window width around the tip (columns).
    pub window: usize,
}

impl Default for ExcitationParams {
    fn default() -> Self {
        Self {
            tool_gain: 4000.0,
            deformation_gain: 30000.0,
            v_min: 5.0,
            v_ref: 60.0,
            k_ref: 400.0,
            crossing_gain: 3.0,
            f_min: 0.1,
            jitter_max_ms: 50.0,
            envelope_ms: 3.0,
            window: 64,
        }
    }
}

impl ExcitationParams {
    pub fn envelope_samples(&self, sample_rate: u32) -> u32 {
        (math::round(self.envelope_ms * 1e-3 * sample_rate as f64) as u32).max(1)
    }

    pub fn jitter_max_samples(&self, sample_rate: u32) -> f64 {
        self.jitter_max_ms * 1e-3 * sample_rate as f64
    }
}

/// Stiffness scaling of tool excitation amplitude.
pub fn stiffness_gain(k_local: f64, k_ref: f64) -> f64 {
    math::sqrt(k_local.max(0.0) / k_ref)
}

/// Tool-driven excitation for one analysis frame.
///
/// `crossed` is set when the tip's nearest-node label differs from the previous frame.
pub fn excite_tool(
    tip: Vec2,
    tip_velocity: Vec2,
    model: &LatticeModel,
    crossed: bool,
    params: &ExcitationParams,
    duration: u32,
) -> Vec<ExcitationEvent> {
    let speed = tip_velocity.norm();
    let mut out = Vec::new();
    if !(speed > params.v_min) && !crossed {
        return out;
    }
    let node = model.nearest_node(tip);
    let k = model.nodes[node].stiffness;
    let direction = tip_velocity.normalized().unwrap_or(Vec2::new(0.0, 1.0));
    let base = params.tool_gain * stiffness_gain(k, params.k_ref) * (speed / params.v_ref).min(1.0);
    let mk = |amplitude: f64, source| ExcitationEvent {
        targets: alloc::vec![(node, 1.0)],
        amplitude,
        direction,
        duration,
        envelope: Envelope::RaisedCosine,
        onset: 0,
        source,
    };
    if speed > params.v_min {
        out.push(mk(base, EventSource::Tool));
    }
    if crossed {
        // A crossing with a stalled tip still rings at the reference speed.
        let a = if speed > params.v_min {
            base
        } else {
            params.tool_gain * stiffness_gain(k, params.k_ref)
        };
        out.push(mk(a * params.crossing_gain, EventSource::Crossing));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeformationError {
    #[error("window lies outside the curve domain")]
    WindowOutside,
    #[error("separation fields cover different columns")]
    MismatchedColumns,
    #[error("need at least 8 columns, got {0}")]
    TooFewColumns(usize),
    #[error("non-finite separation change at column {0}")]
    NonFinite(i64),
}

/// ILM-RPE separation over a column window.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationField {
    pub columns: ColumnRange,
    pub values: Vec<f64>,
}

/// Lateral window of width `w` centered at the tip, clamped to `limit`.
pub fn window_around(tip_x: f64, w: usize, limit: ColumnRange) -> ColumnRange {
    let half = w as f64 / 2.0;
    ColumnRange::new(math::round(tip_x - half) as i64, math::round(tip_x + half) as i64).intersect(limit)
}

/// `d_t(x) = rpe(x) - ilm(x)` over the window `[tip_x - w/2, tip_x + w/2]`
/// clamped to the ROI columns.
pub fn compute_separation(
    ilm: &LayerCurve,
    rpe: &LayerCurve,
    tip_x: f64,
    window_w: usize,
    roi_columns: ColumnRange,
) -> Result<SeparationField, DeformationError> {
    let window = window_around(tip_x, window_w, roi_columns);
    let columns = window.intersect(ilm.domain()).intersect(rpe.domain());
    if columns.is_empty() {
        return Err(DeformationError::WindowOutside);
    }
    let values = columns
        .iter()
        .map(|x| rpe.at_column(x).unwrap_or(0.0) - ilm.at_column(x).unwrap_or(0.0))
        .collect();
    Ok(SeparationField { columns, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationSignal {
    pub window: ColumnRange,
    pub separation: Vec<f64>,
    /// Robust (95th percentile) change in separation since the previous frame.
    pub delta: f64,
    pub f_ilm: f64,
}

/// `min(2, max(0, delta))`; infinities clamp, NaN is rejected by callers.
#[inline]
pub fn clamp_f_ilm(delta: f64) -> f64 {
    F_ILM_MAX.min(0.0f64.max(delta))
}

/// Robust separation change between two frames on the same columns.
pub fn deformation_signal(
    now: &SeparationField,
    prev: &SeparationField,
) -> Result<DeformationSignal, DeformationError> {
    if now.columns != prev.columns || now.values.len() != prev.values.len() {
        return Err(DeformationError::MismatchedColumns);
    }
    let n = now.values.len();
    if n < 8 {
        return Err(DeformationError::TooFewColumns(n));
    }
    let diffs: Vec<f64> = now.values.iter().zip(&prev.values).map(|(a, b)| a - b).collect();
    if let Some(i) = diffs.iter().position(|d| d.is_nan()) {
        return Err(DeformationError::NonFinite(now.columns.start + i as i64));
    }
    let delta = math::nearest_rank_percentile(&diffs, 95).unwrap_or(0.0);
    Ok(DeformationSignal {
        window: now.columns,
        separation: now.values.clone(),
        delta,
        f_ilm: clamp_f_ilm(delta),
    })
}

/// Deformation signal plus, when `f_ILM > f_min`, an upward push on the
/// ILM-labeled nodes inside the window.
pub fn deformation_excitation(
    now: &SeparationField,
    prev: &SeparationField,
    model: &LatticeModel,
    params: &ExcitationParams,
    duration: u32,
) -> Result<(DeformationSignal, Option<ExcitationEvent>), DeformationError> {
    let signal = deformation_signal(now, prev)?;
    if !(signal.f_ilm > params.f_min) {
        return Ok((signal, None));
    }
    let (lo, hi) = (signal.window.start as f64 - 0.5, signal.window.end as f64 + 0.5);
    let mut nodes: Vec<usize> = model
        .nodes
        .iter()
        .enumerate()
        .filter(|(_, n)| n.label == Tissue::Ilm && n.rest.x >= lo && n.rest.x <= hi)
        .map(|(k, _)| k)
        .collect();
    if nodes.is_empty() {
        // Narrow windows can fall between node columns: use the closest ILM node.
        let mid = 0.5 * (lo + hi);
        nodes.extend(
            model
                .nodes
                .iter()
                .enumerate()
                .filter(|(_, n)| n.label == Tissue::Ilm)
                .min_by(|a, b| (a.1.rest.x - mid).abs().total_cmp(&(b.1.rest.x - mid).abs()))
                .map(|(k, _)| k),
        );
    }
    if nodes.is_empty() {
        return Ok((signal, None));
    }
    let w = 1.0 / nodes.len() as f64;
    let event = ExcitationEvent {
        targets: nodes.into_iter().map(|k| (k, w)).collect(),
        amplitude: params.deformation_gain * signal.f_ilm,
        direction: Vec2::new(0.0, -1.0),
        duration,
        envelope: Envelope::RaisedCosine,
        onset: 0,
        source: EventSource::Deformation,
    };
    Ok((signal, Some(event)))
}

/// Upper bound of the onset jitter: `J_max * (1 - min(c_ilm, c_rpe))` samples.
pub fn jitter_bound(c_ilm: f64, c_rpe: f64, j_max: f64) -> f64 {
    j_max * (1.0 - c_ilm.min(c_rpe).clamp(0.0, 1.0))
}

/// Random onset offset (samples), uniform over `[0, jitter_bound]`.
pub fn jitter_schedule<R: Rng + ?Sized>(c_ilm: f64, c_rpe: f64, j_max: f64, rng: &mut R) -> u64 {
    let bound = jitter_bound(c_ilm, c_rpe, j_max);
    if bound <= 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    math::round(u * bound) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field(start: i64, values: Vec<f64>) -> SeparationField {
        SeparationField {
            columns: ColumnRange::new(start, start + values.len() as i64 - 1),
            values,
        }
    }

    #[test]
    fn constant_layers_give_constant_separation() {
        let d = ColumnRange::new(0, 511);
        let f = compute_separation(
            &LayerCurve::constant(d, 100.0),
            &LayerCurve::constant(d, 200.0),
            256.0,
            64,
            d,
        )
        .unwrap();
        assert_eq!(f.values.len(), 65);
        assert!(f.values.iter().all(|v| *v == 100.0));
    }

    #[test]
    fn window_clamps_at_roi_edge() {
        let d = ColumnRange::new(0, 511);
        let roi = ColumnRange::new(100, 356);
        let f = compute_separation(
            &LayerCurve::constant(d, 100.0),
            &LayerCurve::constant(d, 200.0),
            110.0,
            64,
            roi,
        )
        .unwrap();
        assert_eq!(f.columns, ColumnRange::new(100, 142));
        assert!(f.values.len() < 64);
    }

    #[test]
    fn window_outside_domain_errors() {
        let d = ColumnRange::new(0, 50);
        let r = compute_separation(
            &LayerCurve::constant(d, 1.0),
            &LayerCurve::constant(d, 2.0),
            400.0,
            64,
            ColumnRange::new(0, 511),
        );
        assert_eq!(r, Err(DeformationError::WindowOutside));
    }

    #[test]
    fn null_deformation() {
        let a = field(0, vec![100.0; 20]);
        let s = deformation_signal(&a, &a).unwrap();
        assert_eq!((s.delta, s.f_ilm), (0.0, 0.0));
    }

    #[test]
    fn single_outlier_is_suppressed() {
        let prev = field(0, vec![100.0; 20]);
        let mut now = vec![101.0; 20];
        now[13] = 150.0;
        let s = deformation_signal(&field(0, now), &prev).unwrap();
        assert_eq!(s.delta, 1.0);
        assert_eq!(s.f_ilm, 1.0);
    }

    #[test]
    fn clamp_bounds() {
        let prev = field(0, vec![100.0; 16]);
        assert_eq!(
            deformation_signal(&field(0, vec![103.5; 16]), &prev).unwrap().f_ilm,
            2.0
        );
        assert_eq!(deformation_signal(&field(0, vec![99.0; 16]), &prev).unwrap().f_ilm, 0.0);
        assert_eq!(clamp_f_ilm(f64::INFINITY), 2.0);
        assert_eq!(clamp_f_ilm(f64::NEG_INFINITY), 0.0);
    }

    #[test]
    fn mismatched_and_short_windows() {
        assert_eq!(
            deformation_signal(&field(0, vec![1.0; 10]), &field(1, vec![1.0; 10])),
            Err(DeformationError::MismatchedColumns)
        );
        assert_eq!(
            deformation_signal(&field(0, vec![1.0; 7]), &field(0, vec![1.0; 7])),
            Err(DeformationError::TooFewColumns(7))
        );
        let mut nan = vec![1.0; 10];
        nan[4] = f64::NAN;
        assert!(matches!(
            deformation_signal(&field(0, nan), &field(0, vec![1.0; 10])),
            Err(DeformationError::NonFinite(4))
        ));
    }

    #[test]
    fn full_confidence_has_no_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(jitter_schedule(1.0, 1.0, 2205.0, &mut rng), 0);
        }
        assert_eq!(jitter_bound(0.5, 0.9, 2205.0), 1102.5);
    }

    #[test]
    fn jitter_is_uniform_over_the_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws: Vec<u64> = (0..10_000)
            .map(|_| jitter_schedule(0.0, 0.3, 2205.0, &mut rng))
            .collect();
        let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
        assert!((mean - 1102.5).abs() / 1102.5 < 0.03, "mean {mean}");
        assert!(draws.iter().all(|d| *d <= 2205));
    }

    #[test]
    fn schedule_retires_finished_events() {
        let mut s = EventSchedule::default();
        s.push(
            100,
            ExcitationEvent {
                targets: vec![(0, 1.0)],
                amplitude: 2.0,
                direction: Vec2::new(1.0, 0.0),
                duration: 4,
                envelope: Envelope::RaisedCosine,
                onset: 3,
                source: EventSource::Tool,
            },
        );
        let mut f = [Vec2::ZERO; 1];
        s.apply(102, &mut f);
        assert_eq!(f[0], Vec2::ZERO);
        let mut total = 0.0;
        for t in 103..107 {
            let mut f = [Vec2::ZERO; 1];
            s.apply(t, &mut f);
            total += f[0].x;
        }
        // Raised cosine sampled at bin centers sums to half the length.
        assert!((total - 2.0 * 2.0).abs() < 1e-12);
        let mut f = [Vec2::ZERO; 1];
        s.apply(107, &mut f);
        assert!(s.is_empty());
    }
}
