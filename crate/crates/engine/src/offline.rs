//! Offline sessions: frames in, WAV, spectrogram and CSV logs out.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ioct_sonify_core::session::{Clock, EventRecord, FrameReport, OfflineRun, OfflineSession, STAGES};
use ioct_sonify_core::{SessionConfig, SAMPLE_RATE};

use crate::sequence::{Frame, SequenceError};
use crate::spectrogram::Spectrogram;
use crate::wav;

/// Monotonic wall clock in milliseconds.
#[derive(Debug, Clone, Copy)]
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_ms(&mut self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

/// Runs a session over a stream of frames. Errors name the failing frame.
pub fn run_frames<I>(cfg: &SessionConfig, frames: I, clock: &mut dyn Clock) -> Result<OfflineRun>
where
    I: IntoIterator<Item = Result<Frame, SequenceError>>,
{
    let mut session = OfflineSession::new(cfg)?;
    for (k, frame) in frames.into_iter().enumerate() {
        let (seg, img) = frame?;
        session
            .push(&seg, img.as_ref(), clock)
            .with_context(|| format!("frame {k}"))?;
    }
    match session.finish() {
        Some(run) => Ok(run),
        None => bail!("sequence has no frames"),
    }
}

pub fn frames_csv(reports: &[FrameReport], budget_ms: f64) -> String {
    let mut s = String::from("frame,t");
    for st in STAGES {
        let _ = write!(s, ",{st}_ms");
    }
    s.push_str(
        ",total_ms,overrun,events,f_ilm,delta,c_ilm,c_rpe,zone,u,tip_x,tip_y,ilm_fallback,rpe_fallback,rejected\n",
    );
    for r in reports {
        let _ = write!(s, "{},{:.6}", r.frame, r.t);
        for v in r.stages {
            let _ = write!(s, ",{v:.4}");
        }
        let (tx, ty) = r.tip.map_or((f64::NAN, f64::NAN), |p| (p.x, p.y));
        let _ = writeln!(
            s,
            ",{:.4},{},{},{:.6},{:.6},{:.4},{:.4},{},{:.4},{:.3},{:.3},{},{},{}",
            r.total_ms(),
            u8::from(r.total_ms() > budget_ms),
            r.events,
            r.f_ilm,
            r.delta,
            r.c_ilm,
            r.c_rpe,
            r.zone.map_or("none", |z| z.name()),
            r.depth_u,
            tx,
            ty,
            u8::from(r.flags.ilm_fallback),
            u8::from(r.flags.rpe_fallback),
            u8::from(r.flags.rejected),
        );
    }
    s
}

/// Event log: `frame,t,source,label,value`.
pub fn events_csv(events: &[EventRecord]) -> String {
    let mut s = String::from("frame,t,source,label,value\n");
    for e in events {
        let _ = writeln!(
            s,
            "{},{:.6},{},{},{:.6}",
            e.frame,
            e.t,
            e.source.name(),
            e.label,
            e.value
        );
    }
    s
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub wav: PathBuf,
    pub spectrogram: PathBuf,
    pub frames: PathBuf,
    pub events: PathBuf,
}

/// Writes `audio.wav`, `spectrogram.csv` (+ best-effort `spectrogram.png`),
/// `frames.csv` and `events.csv` into `dir`.
pub fn write_outputs(run: &OfflineRun, cfg: &SessionConfig, dir: &Path) -> Result<OutputPaths> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let paths = OutputPaths {
        wav: dir.join("audio.wav"),
        spectrogram: dir.join("spectrogram.csv"),
        frames: dir.join("frames.csv"),
        events: dir.join("events.csv"),
    };
    wav::write_wav(&run.audio, SAMPLE_RATE, &paths.wav)?;
    if let Ok(spec) = Spectrogram::standard(&run.audio, SAMPLE_RATE) {
        spec.write_csv(&paths.spectrogram)
            .with_context(|| paths.spectrogram.display().to_string())?;
        let _ = spec.write_png(&dir.join("spectrogram.png"));
    }
    fs::write(&paths.frames, frames_csv(&run.reports, cfg.runtime.frame_budget_ms))?;
    fs::write(&paths.events, events_csv(&run.events))?;
    Ok(paths)
}
