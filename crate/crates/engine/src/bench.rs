//! Per-stage timing of the analysis pipeline.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use ioct_sonify_core::phantom::{Script, ScriptRunner};
use ioct_sonify_core::session::{Analyzer, STAGES};
use ioct_sonify_core::SessionConfig;

use crate::offline::WallClock;
use crate::sequence::Frame;

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, sd: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub frames: usize,
    pub stages: [Stat; 5],
    /// Spline + geometry + lattice + excitation.
    pub analysis: Stat,
    /// Lattice + excitation.
    pub lattice_excitation: Stat,
    pub budget_ms: f64,
    pub over_budget: usize,
}

impl BenchSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,mean_ms,sd_ms\n");
        for (name, st) in STAGES.iter().zip(&self.stages) {
            let _ = writeln!(s, "{name},{:.6},{:.6}", st.mean, st.sd);
        }
        let _ = writeln!(s, "analysis,{:.6},{:.6}", self.analysis.mean, self.analysis.sd);
        let _ = writeln!(
            s,
            "lattice_excitation,{:.6},{:.6}",
            self.lattice_excitation.mean, self.lattice_excitation.sd
        );
        s
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        for (name, st) in STAGES.iter().zip(&self.stages) {
            let _ = writeln!(s, "{name:>12}: {:8.4} +- {:.4} ms", st.mean, st.sd);
        }
        let _ = writeln!(
            s,
            "{:>12}: {:8.4} +- {:.4} ms/frame",
            "analysis", self.analysis.mean, self.analysis.sd
        );
        let _ = writeln!(
            s,
            "{:>12}: {:8.4} +- {:.4} ms/frame",
            "lattice+exc", self.lattice_excitation.mean, self.lattice_excitation.sd
        );
        let _ = write!(
            s,
            "{} frames, {} over the {} ms budget",
            self.frames, self.over_budget, self.budget_ms
        );
        s
    }
}

/// Per-frame stage timings collected from analysis runs.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    rows: Vec<[f64; 5]>,
}

impl Timings {
    /// Times the analysis of one sequence (the first frame initializes and is not timed).
    pub fn record<'a, I>(&mut self, cfg: &SessionConfig, frames: I, repeats: usize) -> Result<()>
    where
        I: IntoIterator<Item = &'a Frame>,
        I::IntoIter: Clone,
    {
        let frames = frames.into_iter();
        let mut clock = WallClock::default();
        for _ in 0..repeats.max(1) {
            let mut it = frames.clone();
            let Some((seg0, img0)) = it.next() else {
                bail!("empty sequence")
            };
            let mut analyzer = Analyzer::initialize(cfg, seg0, img0.as_ref())?;
            for (seg, img) in it {
                let out = analyzer.process(seg, img.as_ref(), &mut clock)?;
                self.rows.push(out.report.stages);
            }
        }
        Ok(())
    }

    pub fn summary(&self, budget_ms: f64) -> BenchSummary {
        let col = |k: usize| self.rows.iter().map(|r| r[k]).collect::<Vec<_>>();
        let stages = [0, 1, 2, 3, 4].map(|k| Stat::of(&col(k)));
        let analysis: Vec<f64> = self.rows.iter().map(|r| r[1] + r[2] + r[3] + r[4]).collect();
        let lx: Vec<f64> = self.rows.iter().map(|r| r[3] + r[4]).collect();
        let over = self.rows.iter().filter(|r| r.iter().sum::<f64>() > budget_ms).count();
        BenchSummary {
            frames: self.rows.len(),
            stages,
            analysis: Stat::of(&analysis),
            lattice_excitation: Stat::of(&lx),
            budget_ms,
            over_budget: over,
        }
    }
}

/// Benchmarks a recorded sequence. Needs at least 50 frames.
pub fn bench_sequence(cfg: &SessionConfig, frames: &[Frame], repeats: usize) -> Result<BenchSummary> {
    if frames.len() < 50 {
        bail!("bench needs at least 50 frames, got {}", frames.len());
    }
    let mut t = Timings::default();
    t.record(cfg, frames, repeats)?;
    Ok(t.summary(cfg.runtime.frame_budget_ms))
}

/// Phantom config for bench sequence `k`: the scripted injection with the
/// tilt and needle entry varied per sequence.
pub fn phantom_variant(cfg: &SessionConfig, k: usize) -> SessionConfig {
    let mut c = cfg.clone();
    let f = k as f64;
    c.phantom.tilt_deg = -6.0 + 1.3 * f;
    c.phantom.needle_start = [170.0 + 4.0 * f, 130.0 + 2.0 * f];
    c.seed = cfg.seed.wrapping_add(k as u64);
    c
}

/// Benchmarks `sequences` scripted phantom injections.
pub fn bench_phantom(cfg: &SessionConfig, sequences: usize, repeats: usize) -> Result<BenchSummary> {
    let mut t = Timings::default();
    for k in 0..sequences {
        let c = phantom_variant(cfg, k);
        let script = Script::bleb_injection(&c.phantom);
        let frames: Vec<Frame> = ScriptRunner::new(&c.phantom, c.seed, &script)
            .map(|(s, i)| (s, Some(i)))
            .collect();
        t.record(&c, &frames, repeats)?;
    }
    Ok(t.summary(cfg.runtime.frame_budget_ms))
}
