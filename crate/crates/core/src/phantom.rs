//! Deterministic synthetic subretinal injection phantom.
//!
//! The phantom carries ground-truth ILM/RPE curves, a straight needle and a
//! Gaussian bleb whose amplitude saturates with injected volume. Each step
//! emits a segmentation (ground truth, degraded in the needle shadow) and a
//! rendered B-scan.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::frame::{BScanFrame, NeedleEvidence, SegFrame};
use crate::geom::Vec2;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub width: usize,
    pub height: usize,
    /// ILM row at the frame center before tilt.
    pub ilm_depth: f64,
    /// Quadratic bowl coefficient of the ILM (px per px^2).
    pub curvature: f64,
    pub retina_thickness: f64,
    /// Amplitude of the slow thickness variation (px).
    pub thickness_ripple: f64,
    pub tilt_deg: f64,
    pub needle_start: [f64; 2],
    /// Shaft angle below horizontal (degrees); the needle points right and down.
    pub needle_angle_deg: f64,
    pub shaft_length: f64,
    /// Bleb growth `A(v) = bleb_max * (1 - exp(-v / bleb_v0))`.
    pub bleb_max: f64,
    pub bleb_v0: f64,
    pub bleb_sigma: f64,
    /// Injected volume per second while injecting.
    pub inject_rate: f64,
    pub shadow_half_width: i64,
    pub shadow_conf_factor: f64,
    pub shadow_drop_prob: f64,
    pub speckle: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            ilm_depth: 220.0,
            curvature: 2e-4,
            retina_thickness: 90.0,
            thickness_ripple: 6.0,
            tilt_deg: 3.0,
            needle_start: [190.0, 140.0],
            needle_angle_deg: 35.0,
            shaft_length: 220.0,
            bleb_max: 60.0,
            bleb_v0: 2.0,
            bleb_sigma: 40.0,
            inject_rate: 1.0,
            shadow_half_width: 6,
            shadow_conf_factor: 0.2,
            shadow_drop_prob: 0.5,
            speckle: 0.3,
        }
    }
}

impl PhantomConfig {
    /// Bleb amplitude for an injected volume.
    pub fn bleb_amplitude(&self, volume: f64) -> f64 {
        if volume <= 0.0 {
            return 0.0;
        }
        self.bleb_max * (1.0 - math::exp(-volume / self.bleb_v0))
    }
}

/// Needle steering and injection command for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Control {
    pub dx: f64,
    pub dy: f64,
    pub inject: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomState {
    pub t: f64,
    pub ilm_base: Vec<f64>,
    pub rpe_base: Vec<f64>,
    pub tilt_deg: f64,
    pub tip: Vec2,
    pub shaft_angle_deg: f64,
    pub injected_volume: f64,
    pub bleb_center: f64,
    pub bleb_amplitude: f64,
    /// Set when the last step asked to inject with the tip outside the retina.
    pub inject_blocked: bool,
    pub rng_seed: u64,
    pub height: usize,
    rng: ChaCha8Rng,
}

impl PhantomState {
    pub fn new(cfg: &PhantomConfig, seed: u64) -> Self {
        let w = cfg.width;
        let cx = 0.5 * w as f64;
        let ilm_base: Vec<f64> = (0..w)
            .map(|x| {
                let dx = x as f64 - cx;
                cfg.ilm_depth + cfg.curvature * dx * dx
            })
            .collect();
        let rpe_base = ilm_base
            .iter()
            .enumerate()
            .map(|(x, y)| {
                let ripple = cfg.thickness_ripple * math::sin(2.0 * core::f64::consts::PI * 1.5 * x as f64 / w as f64);
                y + (cfg.retina_thickness + ripple).max(30.0)
            })
            .collect();
        Self {
            t: 0.0,
            ilm_base,
            rpe_base,
            tilt_deg: cfg.tilt_deg,
            tip: Vec2::new(cfg.needle_start[0], cfg.needle_start[1]),
            shaft_angle_deg: cfg.needle_angle_deg,
            injected_volume: 0.0,
            bleb_center: cfg.needle_start[0],
            bleb_amplitude: 0.0,
            inject_blocked: false,
            rng_seed: seed,
            height: cfg.height,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn width(&self) -> usize {
        self.ilm_base.len()
    }

    fn tilt_offset(&self, x: f64) -> f64 {
        math::tan(math::deg_to_rad(self.tilt_deg)) * (x - 0.5 * self.width() as f64)
    }

    fn bleb(&self, x: f64, sigma: f64) -> f64 {
        if self.bleb_amplitude <= 0.0 {
            return 0.0;
        }
        let d = x - self.bleb_center;
        self.bleb_amplitude * math::exp(-d * d / (2.0 * sigma * sigma))
    }

    /// Ground-truth ILM row (deformed) at an integer column.
    pub fn ilm_at(&self, x: usize, cfg: &PhantomConfig) -> f64 {
        self.ilm_base[x] + self.tilt_offset(x as f64) - self.bleb(x as f64, cfg.bleb_sigma)
    }

    pub fn rpe_at(&self, x: usize) -> f64 {
        self.rpe_base[x] + self.tilt_offset(x as f64)
    }

    /// Ground-truth ILM-RPE separation per column.
    pub fn separation(&self, cfg: &PhantomConfig) -> Vec<f64> {
        (0..self.width())
            .map(|x| self.rpe_at(x) - self.ilm_at(x, cfg))
            .collect()
    }

    pub fn needle_direction(&self) -> Vec2 {
        let a = math::deg_to_rad(self.shaft_angle_deg);
        Vec2::new(math::cos(a), math::sin(a))
    }

    /// Whether the tip lies between ILM and RPE at its column.
    pub fn tip_intraretinal(&self, cfg: &PhantomConfig) -> bool {
        let x = math::round(self.tip.x);
        if x < 0.0 || x >= self.width() as f64 {
            return false;
        }
        let x = x as usize;
        self.tip.y >= self.ilm_at(x, cfg) && self.tip.y <= self.rpe_at(x)
    }

    /// Axial row of the shaft at column `x`, if the shaft covers that column.
    fn shaft_y(&self, x: f64, cfg: &PhantomConfig) -> Option<f64> {
        let d = self.needle_direction();
        if d.x.abs() < 1e-9 {
            return None;
        }
        let back = (self.tip.x - x) / d.x;
        (back >= -0.5 && back <= cfg.shaft_length).then_some(self.tip.y - back * d.y)
    }

    fn needle_pixels(&self, cfg: &PhantomConfig) -> Vec<Vec2> {
        let d = self.needle_direction();
        let n = Vec2::new(-d.y, d.x);
        let (w, h) = (self.width() as f64, self.height as f64);
        let mut out = Vec::new();
        let mut s = 0.0;
        while s <= cfg.shaft_length {
            for off in [-1.0, 0.0, 1.0] {
                let p = self.tip - d * s + n * off;
                let q = Vec2::new(math::round(p.x), math::round(p.y));
                if q.x >= 0.0 && q.y >= 0.0 && q.x < w && q.y < h {
                    out.push(q);
                }
            }
            s += 1.0;
        }
        out
    }

    /// Emits the segmentation and B-scan for the current state (advances the RNG).
    pub fn observe(&mut self, cfg: &PhantomConfig) -> (SegFrame, BScanFrame) {
        let w = self.width();
        let mut seg = SegFrame::empty(self.t, w);
        for x in 0..w {
            seg.ilm[x] = Some(self.ilm_at(x, cfg));
            seg.rpe[x] = Some(self.rpe_at(x));
            seg.conf_ilm[x] = 1.0;
            seg.conf_rpe[x] = 1.0;
        }
        let tip_col = math::round(self.tip.x) as i64;
        let mut shadowed = Vec::new();
        for c in tip_col - cfg.shadow_half_width..=tip_col + cfg.shadow_half_width {
            if c < 0 || c >= w as i64 {
                continue;
            }
            let x = c as usize;
            let shaft = self.shaft_y(x as f64, cfg);
            for layer in 0..2 {
                let drop = self.rng.gen::<f64>() < cfg.shadow_drop_prob;
                let (vals, conf) = if layer == 0 {
                    (&mut seg.ilm, &mut seg.conf_ilm)
                } else {
                    (&mut seg.rpe, &mut seg.conf_rpe)
                };
                let Some(y) = vals[x] else { continue };
                if shaft.is_some_and(|s| y > s) {
                    conf[x] = (conf[x] * cfg.shadow_conf_factor).clamp(0.0, 1.0);
                    if drop {
                        vals[x] = None;
                    }
                    if layer == 0 {
                        shadowed.push(x);
                    }
                }
            }
        }
        seg.needle = NeedleEvidence {
            pixels: self.needle_pixels(cfg),
            tip: Some(self.tip),
            conf: 1.0,
        };
        let img = self.render(cfg, &seg);
        (seg, img)
    }

    fn render(&mut self, cfg: &PhantomConfig, seg: &SegFrame) -> BScanFrame {
        let (w, h) = (self.width(), self.height);
        let mut img = alloc::vec![0.0f32; w * h];
        for x in 0..w {
            let yi = self.ilm_at(x, cfg);
            let yr = self.rpe_at(x);
            let shadow = self.shaft_y(x as f64, cfg);
            for y in 0..h {
                let yf = y as f64;
                let mut base = if (yf - yi).abs() <= 2.0 {
                    0.9
                } else if yf < yi {
                    0.04
                } else if (yf - yr).abs() <= 4.0 {
                    0.95
                } else if yf < yr {
                    0.35
                } else {
                    0.5 * math::exp(-(yf - yr) / 60.0)
                };
                if shadow.is_some_and(|s| yf > s + 1.5) {
                    base *= 0.2;
                }
                let u: f64 = self.rng.gen();
                let speckle = -math::ln(1.0 - u);
                let v = base * (1.0 - cfg.speckle + cfg.speckle * speckle);
                img[y * w + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
        for p in &seg.needle.pixels {
            img[p.y as usize * w + p.x as usize] = 1.0;
        }
        BScanFrame {
            t: self.t,
            width: w,
            height: h,
            intensity: img,
        }
    }
}

/// Advances the phantom by `dt` seconds and observes the new state.
pub fn phantom_step(
    state: &PhantomState,
    control: &Control,
    dt: f64,
    cfg: &PhantomConfig,
) -> (PhantomState, SegFrame, BScanFrame) {
    let mut next = state.clone();
    next.t += dt;
    next.tip.x = (next.tip.x + control.dx).clamp(0.0, next.width() as f64 - 1.0);
    next.tip.y = (next.tip.y + control.dy).clamp(0.0, next.height as f64 - 1.0);
    next.inject_blocked = false;
    if control.inject {
        if next.tip_intraretinal(cfg) {
            if next.injected_volume <= 0.0 {
                next.bleb_center = next.tip.x;
            }
            next.injected_volume += cfg.inject_rate * dt;
            next.bleb_amplitude = cfg.bleb_amplitude(next.injected_volume);
        } else {
            next.inject_blocked = true;
        }
    }
    let (seg, img) = next.observe(cfg);
    (next, seg, img)
}

/// A piece of a scripted needle trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptSegment {
    pub duration: f64,
    /// Tip velocity (px/s).
    pub velocity: Vec2,
    pub inject: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Script {
    pub segments: Vec<ScriptSegment>,
    pub fps: f64,
}

impl Script {
    /// Hold, advance along the shaft into the retina, hold, then inject.
    pub fn bleb_injection(cfg: &PhantomConfig) -> Self {
        let a = math::deg_to_rad(cfg.needle_angle_deg);
        let speed = 134.0;
        let v = Vec2::new(math::cos(a), math::sin(a)) * speed;
        Self {
            segments: alloc::vec![
                ScriptSegment {
                    duration: 0.3,
                    velocity: Vec2::ZERO,
                    inject: false
                },
                ScriptSegment {
                    duration: 1.5,
                    velocity: v,
                    inject: false
                },
                ScriptSegment {
                    duration: 1.4,
                    velocity: Vec2::ZERO,
                    inject: false
                },
                ScriptSegment {
                    duration: 2.8,
                    velocity: Vec2::ZERO,
                    inject: true
                },
            ],
            fps: 30.0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Control for the step that ends at time `t`.
    pub fn control_at(&self, t: f64) -> Control {
        let dt = 1.0 / self.fps;
        let mid = t - 0.5 * dt;
        let mut start = 0.0;
        for s in &self.segments {
            if mid < start + s.duration {
                return Control {
                    dx: s.velocity.x * dt,
                    dy: s.velocity.y * dt,
                    inject: s.inject,
                };
            }
            start += s.duration;
        }
        Control::default()
    }
}

/// Frames and ground truth produced by running a script.
#[derive(Debug, Clone)]
pub struct PhantomRun {
    pub frames: Vec<(SegFrame, BScanFrame)>,
    pub states: Vec<PhantomState>,
    /// Time of the first frame with a nonzero bleb.
    pub bleb_onset: Option<f64>,
}

/// Lazily plays a script: one initial observation, then one frame per step.
#[derive(Debug, Clone)]
pub struct ScriptRunner {
    cfg: PhantomConfig,
    script: Script,
    state: PhantomState,
    step: usize,
    steps: usize,
    onset: Option<f64>,
}

impl ScriptRunner {
    pub fn new(cfg: &PhantomConfig, seed: u64, script: &Script) -> Self {
        let steps = math::round(script.duration() * script.fps) as usize;
        Self {
            cfg: *cfg,
            script: script.clone(),
            state: PhantomState::new(cfg, seed),
            step: 0,
            steps,
            onset: None,
        }
    }

    /// State after the most recently emitted frame.
    pub fn state(&self) -> &PhantomState {
        &self.state
    }

    /// Time of the first emitted frame with a nonzero bleb.
    pub fn bleb_onset(&self) -> Option<f64> {
        self.onset
    }

    /// Number of frames the runner emits in total.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl Iterator for ScriptRunner {
    type Item = (SegFrame, BScanFrame);

    fn next(&mut self) -> Option<Self::Item> {
        if self.step > self.steps {
            return None;
        }
        let k = self.step;
        self.step += 1;
        if k == 0 {
            return Some(self.state.observe(&self.cfg));
        }
        let dt = 1.0 / self.script.fps;
        let control = self.script.control_at(k as f64 * dt);
        let (next, seg, img) = phantom_step(&self.state, &control, dt, &self.cfg);
        if self.onset.is_none() && next.bleb_amplitude > 0.0 {
            self.onset = Some(next.t);
        }
        self.state = next;
        Some((seg, img))
    }
}

/// Runs a whole script in memory.
pub fn run_script(cfg: &PhantomConfig, seed: u64, script: &Script) -> PhantomRun {
    let mut runner = ScriptRunner::new(cfg, seed, script);
    let mut frames = Vec::with_capacity(runner.len());
    let mut states = Vec::with_capacity(runner.len());
    while let Some(f) = runner.next() {
        frames.push(f);
        states.push(runner.state().clone());
    }
    PhantomRun {
        frames,
        states,
        bleb_onset: runner.bleb_onset(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PhantomConfig {
        PhantomConfig {
            width: 256,
            height: 256,
            ilm_depth: 110.0,
            needle_start: [60.0, 60.0],
            ..Default::default()
        }
    }

    #[test]
    fn zero_control_is_a_fixed_point() {
        let c = cfg();
        let s0 = PhantomState::new(&c, 3);
        let (s1, _, _) = phantom_step(&s0, &Control::default(), 0.1, &c);
        assert_eq!(s1.tip, s0.tip);
        assert_eq!(s1.injected_volume, 0.0);
        assert_eq!(s1.separation(&c), s0.separation(&c));
        assert!((s1.t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn injection_in_vitreous_is_blocked() {
        let c = cfg();
        let s0 = PhantomState::new(&c, 3);
        let (s1, _, _) = phantom_step(
            &s0,
            &Control {
                inject: true,
                ..Default::default()
            },
            0.1,
            &c,
        );
        assert_eq!(s1.injected_volume, 0.0);
        assert!(s1.inject_blocked);
    }

    #[test]
    fn intraretinal_injection_grows_separation() {
        let c = cfg();
        let mut s = PhantomState::new(&c, 3);
        s.tip = Vec2::new(128.0, s.ilm_at(128, &c) + 20.0);
        let mut last = s.separation(&c)[128];
        for _ in 0..10 {
            let (n, _, _) = phantom_step(
                &s,
                &Control {
                    inject: true,
                    ..Default::default()
                },
                1.0 / 30.0,
                &c,
            );
            let now = n.separation(&c)[128];
            assert!(now > last);
            // Direct evaluation of the growth law.
            assert!(
                (now - (s.rpe_at(128) - s.ilm_base[128] - s.tilt_offset(128.0)) - c.bleb_amplitude(n.injected_volume))
                    .abs()
                    < 1e-9
            );
            last = now;
            s = n;
        }
    }

    #[test]
    fn shadow_only_attenuates() {
        let c = cfg();
        let mut s = PhantomState::new(&c, 9);
        s.tip = Vec2::new(128.0, s.ilm_at(128, &c) + 10.0);
        let (seg, img) = s.observe(&c);
        assert!(seg.validate(Some(256)).is_ok());
        assert!(img.validate().is_ok());
        assert!(seg.conf_rpe.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(seg.conf_rpe[124] < 1.0);
        assert_eq!(seg.conf_rpe[140], 1.0);
    }

    #[test]
    fn same_seed_same_frames() {
        let c = cfg();
        let script = Script {
            fps: 30.0,
            ..Script::bleb_injection(&c)
        };
        let a = run_script(&c, 5, &script);
        let b = run_script(&c, 5, &script);
        assert_eq!(a.frames, b.frames);
    }
}
