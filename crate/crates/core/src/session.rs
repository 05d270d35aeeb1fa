//! Per-frame analysis, audio-side synthesis and the offline session driver.
//!
//! The [`Analyzer`] owns everything the analysis role needs (rotation, ROI,
//! lattice model, tip EMA, previous curves, jitter RNG) and turns each frame
//! into an immutable [`SynthUpdate`]. The [`Synth`] owns the audio role's
//! state and applies updates at block boundaries. Neither touches I/O.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::anatomy::{
    estimate_tissue_rotation, extract_roi, fit_layer_spline, fit_needle_line, ColumnRange, LayerCurve, LayerSample,
    NeedleEstimate, RoiError, RoiSpec, SplineError, TipTracker,
};
use crate::baseline::{classify_zone, depth_fraction, BaselineVoice, Zone};
use crate::config::{ConfigError, Method, SessionConfig};
use crate::dynamics::{
    compute_separation, deformation_excitation, excite_tool, jitter_schedule, step_block, DeformationSignal,
    DynamicsFault, EventSchedule, EventSource, ExcitationEvent, LatticeState, PhysicalLattice, StepScratch,
};
use crate::frame::{BScanFrame, FrameError, SegFrame};
use crate::geom::{FrameRotation, Vec2};
use crate::lattice::{LatticeError, LatticeModel, Tissue};
use crate::render::Pickup;
use crate::{math, SAMPLE_RATE};

/// Millisecond clock used for stage timings. Offline tests may use [`NoClock`].
pub trait Clock {
    fn now_ms(&mut self) -> f64;
}

/// Reports zero for every reading.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&mut self) -> f64 {
        0.0
    }
}

pub const STAGES: [&str; 5] = ["ingest", "spline", "geometry", "lattice", "excitation"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid frame: {0}")]
    Frame(#[from] FrameError),
    #[error("initialization needs both layers: {0}")]
    InitLayers(SplineError),
    #[error("roi: {0}")]
    Roi(#[from] RoiError),
    #[error("lattice: {0}")]
    Lattice(#[from] LatticeError),
    #[error("frame width changed from {expected} to {got}")]
    WidthChanged { expected: usize, got: usize },
    #[error("timestamp {t} does not follow {prev}")]
    Timestamp { prev: f64, t: f64 },
    #[error("sequence has no frames")]
    Empty,
}

/// Conditions that degraded a frame without stopping the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameFlags {
    /// The layer fit failed and the previous curve was reused.
    pub ilm_fallback: bool,
    pub rpe_fallback: bool,
    /// Anchor update rejected (layer order); anchors kept.
    pub rejected: bool,
    pub no_tip: bool,
    pub no_deformation: bool,
}

/// One row of the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub frame: u64,
    pub t: f64,
    pub source: EventSource,
    pub label: String,
    pub value: f64,
}

/// Per-frame timings and readouts.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame: u64,
    pub t: f64,
    /// Stage durations in [`STAGES`] order (ms).
    pub stages: [f64; 5],
    pub events: usize,
    pub f_ilm: f64,
    pub delta: f64,
    pub c_ilm: f64,
    pub c_rpe: f64,
    pub zone: Option<Zone>,
    pub depth_u: f64,
    pub tip: Option<Vec2>,
    pub flags: FrameFlags,
}

impl FrameReport {
    pub fn total_ms(&self) -> f64 {
        self.stages.iter().sum()
    }
}

/// Everything the audio role needs from one analysed frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SynthUpdate {
    pub anchors: Option<Vec<Vec2>>,
    pub events: Vec<ExcitationEvent>,
    pub zone: Option<Zone>,
    pub depth_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub update: SynthUpdate,
    pub report: FrameReport,
    pub records: Vec<EventRecord>,
    pub signal: Option<DeformationSignal>,
    pub ilm: LayerCurve,
    pub rpe: LayerCurve,
    pub crossed: bool,
}

/// Analysis-role state for one session.
#[derive(Debug, Clone)]
pub struct Analyzer {
    cfg: SessionConfig,
    width: usize,
    height: usize,
    rotation: FrameRotation,
    roi: RoiSpec,
    model: LatticeModel,
    domain: ColumnRange,
    tip: TipTracker,
    prev_ilm: LayerCurve,
    prev_rpe: LayerCurve,
    prev_tip: Option<(Vec2, f64)>,
    prev_label: Option<Tissue>,
    last_t: Option<f64>,
    last_zone: Option<Zone>,
    last_u: f64,
    rng: ChaCha8Rng,
    frame: u64,
}

fn layer_samples(
    it: impl Iterator<Item = (usize, f64, f64)>,
    rot: &FrameRotation,
    domain: ColumnRange,
) -> Vec<LayerSample> {
    let (lo, hi) = (domain.start as f64, domain.end as f64);
    it.filter_map(|(x, y, c)| {
        let p = rot.to_aligned(Vec2::new(x as f64, y));
        (p.x >= lo && p.x <= hi).then(|| LayerSample::new(p.x, p.y, c))
    })
    .collect()
}

impl Analyzer {
    /// Estimates the rotation, fits both layers, extracts the ROI and builds
    /// the lattice from the first frame.
    pub fn initialize(cfg: &SessionConfig, seg: &SegFrame, img: Option<&BScanFrame>) -> Result<Self, SessionError> {
        cfg.validate()?;
        let height = img.map_or(cfg.frame_height, |i| i.height);
        seg.validate(Some(height))?;
        if let Some(i) = img {
            i.validate()?;
        }
        let width = seg.width;
        let center = Vec2::new(0.5 * (width as f64 - 1.0), 0.5 * (height as f64 - 1.0));
        let theta = estimate_tissue_rotation(seg, &cfg.anatomy.huber).unwrap_or(0.0);
        let rotation = FrameRotation::new(theta, center);
        let domain = ColumnRange::new(0, width as i64 - 1);
        let a = &cfg.anatomy;
        let ilm = fit_layer_spline(&layer_samples(seg.ilm_samples(), &rotation, domain), &a.spline, domain)
            .map_err(SessionError::InitLayers)?;
        let rpe = fit_layer_spline(&layer_samples(seg.rpe_samples(), &rotation, domain), &a.spline, domain)
            .map_err(SessionError::InitLayers)?;
        let pixels: Vec<Vec2> = seg.needle.pixels.iter().map(|p| rotation.to_aligned(*p)).collect();
        let line = fit_needle_line(&pixels, &a.huber).ok();
        let roi = extract_roi(
            theta,
            &ilm,
            &rpe,
            line.as_ref(),
            &pixels,
            (width as f64, height as f64),
            &a.roi,
        )?;
        let model = LatticeModel::build(&roi, &ilm, &rpe, img.map(|i| (i, &rotation)), &cfg.lattice)?;
        Ok(Self {
            cfg: cfg.clone(),
            width,
            height,
            rotation,
            roi,
            model,
            domain,
            tip: TipTracker::new(a.tip_alpha),
            prev_ilm: ilm,
            prev_rpe: rpe,
            prev_tip: None,
            prev_label: None,
            last_t: None,
            last_zone: None,
            last_u: 0.0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            frame: 0,
        })
    }

    pub fn model(&self) -> &LatticeModel {
        &self.model
    }

    pub fn roi(&self) -> &RoiSpec {
        &self.roi
    }

    pub fn rotation(&self) -> &FrameRotation {
        &self.rotation
    }

    pub fn height(&self) -> usize {
        self.height
    }

    fn tip_estimate(&self, seg: &SegFrame, line: Option<&NeedleEstimate>) -> Option<Vec2> {
        match (seg.needle.tip, line) {
            (Some(t), _) => Some(self.rotation.to_aligned(t)),
            (None, Some(l)) => Some(l.tip),
            (None, None) => None,
        }
    }

    /// Runs the per-frame pipeline.
    pub fn process(
        &mut self,
        seg: &SegFrame,
        img: Option<&BScanFrame>,
        clock: &mut dyn Clock,
    ) -> Result<FrameOutput, SessionError> {
        let mut stages = [0.0; 5];
        let mut flags = FrameFlags::default();
        let t0 = clock.now_ms();

        // Ingest: validation and mapping into the aligned frame.
        if seg.width != self.width {
            return Err(SessionError::WidthChanged {
                expected: self.width,
                got: seg.width,
            });
        }
        if let Some(prev) = self.last_t {
            if !(seg.t > prev) {
                return Err(SessionError::Timestamp { prev, t: seg.t });
            }
        }
        seg.validate(Some(img.map_or(self.height, |i| i.height)))?;
        let a = self.cfg.anatomy;
        if a.recompute_rotation {
            if let Ok(theta) = estimate_tissue_rotation(seg, &a.huber) {
                self.rotation = FrameRotation::new(theta, self.rotation.center);
            }
        }
        let ilm_s = layer_samples(seg.ilm_samples(), &self.rotation, self.domain);
        let rpe_s = layer_samples(seg.rpe_samples(), &self.rotation, self.domain);
        let pixels: Vec<Vec2> = seg.needle.pixels.iter().map(|p| self.rotation.to_aligned(*p)).collect();
        let t1 = clock.now_ms();
        stages[0] = t1 - t0;

        // Layer curves, falling back to the previous frame's.
        let ilm = fit_layer_spline(&ilm_s, &a.spline, self.domain).unwrap_or_else(|_| {
            flags.ilm_fallback = true;
            self.prev_ilm.clone()
        });
        let rpe = fit_layer_spline(&rpe_s, &a.spline, self.domain).unwrap_or_else(|_| {
            flags.rpe_fallback = true;
            self.prev_rpe.clone()
        });
        let t2 = clock.now_ms();
        stages[1] = t2 - t1;

        // Needle line, tip EMA, zone.
        let line = fit_needle_line(&pixels, &a.huber).ok();
        let tip = self.tip_estimate(seg, line.as_ref()).map(|raw| self.tip.update(raw));
        flags.no_tip = tip.is_none();
        let (zone, u) = match tip {
            Some(p) => match (classify_zone(p, &ilm, &rpe), depth_fraction(p, &ilm, &rpe)) {
                (Ok(z), Ok(u)) => (Some(z), u),
                _ => (self.last_zone, self.last_u),
            },
            None => (self.last_zone, self.last_u),
        };
        self.last_zone = zone;
        self.last_u = u;
        let t3 = clock.now_ms();
        stages[2] = t3 - t2;

        // Anchors follow the layers; a frame with crossed layers is rejected.
        let anchors = match self.model.update_anchors(&ilm, &rpe) {
            Ok(()) => Some(self.model.anchors()),
            Err(_) => {
                flags.rejected = true;
                None
            }
        };
        let t4 = clock.now_ms();
        stages[3] = t4 - t3;

        // Excitation.
        let mut events = Vec::new();
        let mut records = Vec::new();
        let e = self.cfg.excitation;
        let duration = e.envelope_samples(SAMPLE_RATE);
        let mut crossed = false;
        if let Some(p) = tip {
            let label = self.model.nodes[self.model.nearest_node(p)].label;
            let velocity = match self.prev_tip {
                Some((q, tq)) if seg.t > tq => (p - q) * (1.0 / (seg.t - tq)),
                _ => Vec2::ZERO,
            };
            crossed = self.prev_label.is_some_and(|l| l != label);
            for ev in excite_tool(p, velocity, &self.model, crossed, &e, duration) {
                let text = match (ev.source, self.prev_label) {
                    (EventSource::Crossing, Some(from)) => alloc::format!("{}->{}", from.name(), label.name()),
                    _ => String::from(label.name()),
                };
                records.push((ev.source, text, ev.amplitude));
                events.push(ev);
            }
            self.prev_tip = Some((p, seg.t));
            self.prev_label = Some(label);
        }
        let center_x = tip.map_or(self.roi.center.x, |p| p.x);
        let cols = self.roi.columns();
        let mut signal = None;
        match (
            compute_separation(&ilm, &rpe, center_x, e.window, cols),
            compute_separation(&self.prev_ilm, &self.prev_rpe, center_x, e.window, cols),
        ) {
            (Ok(now), Ok(prev)) if !flags.rejected => {
                match deformation_excitation(&now, &prev, &self.model, &e, duration) {
                    Ok((sig, ev)) => {
                        if let Some(ev) = ev {
                            records.push((EventSource::Deformation, String::from("ilm"), sig.f_ilm));
                            events.push(ev);
                        }
                        signal = Some(sig);
                    }
                    Err(_) => flags.no_deformation = true,
                }
            }
            _ => flags.no_deformation = true,
        }
        let window = signal.as_ref().map_or_else(
            || crate::dynamics::window_around(center_x, e.window, cols),
            |s| s.window,
        );
        let (c_ilm, c_rpe) = seg.mean_confidence(window.start, window.end);
        let j_max = e.jitter_max_samples(SAMPLE_RATE);
        for ev in &mut events {
            ev.onset = jitter_schedule(c_ilm, c_rpe, j_max, &mut self.rng);
        }
        let t5 = clock.now_ms();
        stages[4] = t5 - t4;

        let frame = self.frame;
        self.frame += 1;
        self.last_t = Some(seg.t);
        self.prev_ilm = ilm.clone();
        self.prev_rpe = rpe.clone();
        let report = FrameReport {
            frame,
            t: seg.t,
            stages: stages.map(|s: f64| s.max(0.0)),
            events: events.len(),
            f_ilm: signal.as_ref().map_or(0.0, |s| s.f_ilm),
            delta: signal.as_ref().map_or(0.0, |s| s.delta),
            c_ilm,
            c_rpe,
            zone,
            depth_u: u,
            tip,
            flags,
        };
        let records = records
            .into_iter()
            .map(|(source, label, value)| EventRecord {
                frame,
                t: seg.t,
                source,
                label,
                value,
            })
            .collect();
        Ok(FrameOutput {
            update: SynthUpdate {
                anchors,
                events,
                zone,
                depth_u: u,
            },
            report,
            records,
            signal,
            ilm,
            rpe,
            crossed,
        })
    }
}

// One voice per session, built once; never moved on the audio path.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
enum Voice {
    Proposed {
        lattice: PhysicalLattice,
        state: LatticeState,
        schedule: EventSchedule,
        pickup: Pickup,
        scratch: StepScratch,
    },
    Baseline {
        voice: BaselineVoice,
        zone: Option<Zone>,
        u: f64,
    },
}

/// Audio-role state: dynamics and pickup, or the baseline voice.
#[derive(Debug, Clone)]
pub struct Synth {
    voice: Voice,
    block_size: usize,
    sample: u64,
    block: u64,
    faults: u64,
    last_fault: Option<DynamicsFault>,
}

impl Synth {
    pub fn new(cfg: &SessionConfig, model: &LatticeModel) -> Self {
        let sr = SAMPLE_RATE as f64;
        let voice = match cfg.method {
            Method::Proposed => {
                let lattice = PhysicalLattice::from_model(model, 1.0 / sr);
                let mut scratch = StepScratch::default();
                // Warm the scratch buffers so the audio path does not allocate later.
                let mut state = LatticeState::at_rest(&lattice);
                let mut schedule = EventSchedule::with_capacity(256);
                let mut pickup = Pickup::for_model(model, &cfg.render, sr);
                pickup.begin(cfg.audio.block_size);
                let _ = step_block(
                    &mut state,
                    &lattice,
                    &mut schedule,
                    0,
                    0,
                    1.0 / sr,
                    &mut scratch,
                    &mut pickup,
                );
                Voice::Proposed {
                    lattice,
                    state,
                    schedule,
                    pickup,
                    scratch,
                }
            }
            Method::Baseline => Voice::Baseline {
                voice: BaselineVoice::new(cfg.baseline, sr),
                zone: None,
                u: 0.0,
            },
        };
        Self {
            voice,
            block_size: cfg.audio.block_size,
            sample: 0,
            block: 0,
            faults: 0,
            last_fault: None,
        }
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Absolute index of the next sample to be rendered.
    pub fn sample(&self) -> u64 {
        self.sample
    }

    pub fn blocks(&self) -> u64 {
        self.block
    }

    pub fn faults(&self) -> u64 {
        self.faults
    }

    pub fn last_fault(&self) -> Option<&DynamicsFault> {
        self.last_fault.as_ref()
    }

    /// Mechanical energy of the lattice (zero for the baseline).
    pub fn energy(&self) -> f64 {
        match &self.voice {
            Voice::Proposed { lattice, state, .. } => {
                crate::dynamics::mechanical_energy(state, lattice, 1.0 / SAMPLE_RATE as f64)
            }
            Voice::Baseline { .. } => 0.0,
        }
    }

    /// Applies an analysis update at the current block boundary and returns
    /// the number of events scheduled. The update's events are drained; its
    /// buffers stay with the caller.
    pub fn apply(&mut self, update: &mut SynthUpdate) -> usize {
        let n = update.events.len();
        match &mut self.voice {
            Voice::Proposed {
                lattice,
                state,
                schedule,
                ..
            } => {
                if let Some(new) = &update.anchors {
                    if new.len() == lattice.len() {
                        state.follow_anchors(&lattice.anchors, new);
                        lattice.set_anchors(new);
                    }
                }
                for ev in update.events.drain(..) {
                    schedule.push(self.sample, ev);
                }
            }
            Voice::Baseline { zone, u, .. } => {
                if update.zone.is_some() {
                    *zone = update.zone;
                }
                *u = update.depth_u;
                update.events.clear();
            }
        }
        n
    }

    /// Renders the next block into `out` (length = block size). A dynamics
    /// fault silences the block and resets the lattice to rest.
    pub fn render_block(&mut self, out: &mut [f32]) -> u64 {
        let n = out.len();
        let index = self.block;
        match &mut self.voice {
            Voice::Proposed {
                lattice,
                state,
                schedule,
                pickup,
                scratch,
            } => {
                pickup.begin(n);
                let dt = 1.0 / SAMPLE_RATE as f64;
                match step_block(state, lattice, schedule, self.sample, n, dt, scratch, pickup) {
                    Ok(()) => pickup.finish(out),
                    Err(fault) => {
                        out.fill(0.0);
                        *state = LatticeState::at_rest(lattice);
                        *schedule = EventSchedule::with_capacity(256);
                        self.faults += 1;
                        self.last_fault = Some(fault);
                    }
                }
            }
            Voice::Baseline { voice, zone, u } => match zone {
                Some(z) => voice.render(*z, *u, out),
                None => out.fill(0.0),
            },
        }
        self.sample += n as u64;
        self.block += 1;
        index
    }
}

/// Result of an offline session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OfflineRun {
    pub audio: Vec<f32>,
    pub reports: Vec<FrameReport>,
    pub events: Vec<EventRecord>,
    pub faults: u64,
}

/// Deterministic single-threaded session: frames in, audio and logs out.
///
/// Frame `k` at time `t_k` is analysed, then audio is rendered up to the
/// first block boundary at or after `t_k - t_0`, where the update is applied.
#[derive(Debug, Clone)]
pub struct OfflineSession {
    cfg: SessionConfig,
    inner: Option<(Analyzer, Synth)>,
    t0: f64,
    received: u64,
    run: OfflineRun,
}

impl OfflineSession {
    pub fn new(cfg: &SessionConfig) -> Result<Self, SessionError> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            inner: None,
            t0: 0.0,
            received: 0,
            run: OfflineRun::default(),
        })
    }

    pub fn analyzer(&self) -> Option<&Analyzer> {
        self.inner.as_ref().map(|(a, _)| a)
    }

    fn render_until(synth: &mut Synth, target: u64, audio: &mut Vec<f32>) {
        let n = synth.block_size();
        while synth.sample() < target {
            let start = audio.len();
            audio.resize(start + n, 0.0);
            synth.render_block(&mut audio[start..]);
        }
    }

    pub fn push(
        &mut self,
        seg: &SegFrame,
        img: Option<&BScanFrame>,
        clock: &mut dyn Clock,
    ) -> Result<(), SessionError> {
        let k = self.received;
        self.received += 1;
        if self.inner.is_none() {
            let analyzer = Analyzer::initialize(&self.cfg, seg, img)?;
            let synth = Synth::new(&self.cfg, analyzer.model());
            self.t0 = seg.t;
            self.inner = Some((analyzer, synth));
        }
        let stride = self.cfg.runtime.analysis_stride.max(1) as u64;
        let (analyzer, synth) = self.inner.as_mut().expect("initialized above");
        let target = math::round((seg.t - self.t0) * SAMPLE_RATE as f64).max(0.0) as u64;
        Self::render_until(synth, target, &mut self.run.audio);
        if !k.is_multiple_of(stride) {
            return Ok(());
        }
        let mut out = analyzer.process(seg, img, clock)?;
        synth.apply(&mut out.update);
        self.run.reports.push(out.report);
        self.run.events.extend(out.records);
        Ok(())
    }

    /// Renders the configured tail and returns the outputs. Fails if no frame arrived.
    pub fn finish(mut self) -> Option<OfflineRun> {
        let (_, mut synth) = self.inner.take()?;
        let tail = math::round(self.cfg.audio.tail_s * SAMPLE_RATE as f64) as u64;
        let end = synth.sample() + tail;
        Self::render_until(&mut synth, end, &mut self.run.audio);
        self.run.faults = synth.faults();
        Some(self.run)
    }
}

/// Runs a whole in-memory sequence offline.
pub fn run_offline<'a, I>(cfg: &SessionConfig, frames: I, clock: &mut dyn Clock) -> Result<OfflineRun, SessionError>
where
    I: IntoIterator<Item = (&'a SegFrame, Option<&'a BScanFrame>)>,
{
    let mut s = OfflineSession::new(cfg)?;
    for (seg, img) in frames {
        s.push(seg, img, clock)?;
    }
    s.finish().ok_or(SessionError::Empty)
}
