//! Live phantom session served over TCP.
//!
//! Three roles share nothing but lock-free queues and atomic counters:
//! the control thread owns the socket, the analysis thread steps the phantom
//! and runs the per-frame pipeline, and the audio thread renders blocks paced
//! against the wall clock. Every queue drops its oldest entry when full.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context, Result};
use crossbeam_queue::ArrayQueue;
use ioct_sonify_core::dynamics::EventSource;
use ioct_sonify_core::phantom::{phantom_step, Control, PhantomState};
use ioct_sonify_core::session::{Analyzer, FrameOutput, FrameReport, Synth, SynthUpdate};
use ioct_sonify_core::{BScanFrame, SegFrame, SessionConfig, SAMPLE_RATE};
use serde::Serialize;
use serde_json::json;

use crate::offline::WallClock;
use crate::priority;
use crate::protocol::{self, Decoder, Message, Pose};
use crate::wav::quantize;

/// Counters shared by all roles.
#[derive(Debug, Default)]
pub struct Telemetry {
    pub blocks: AtomicU64,
    pub events_applied: AtomicU64,
    pub update_drops: AtomicU64,
    pub audio_drops: AtomicU64,
    pub underruns: AtomicU64,
    /// Worst lateness of a rendered block past its due time, microseconds.
    pub max_late_us: AtomicU64,
    /// Longest single block render, microseconds.
    pub max_render_us: AtomicU64,
    /// Longest gap between audio loop iterations, microseconds.
    pub max_wake_gap_us: AtomicU64,
    pub audio_allocs: AtomicU64,
    pub frames: AtomicU64,
    pub overruns: AtomicU64,
    pub poses: AtomicU64,
    pub protocol_errors: AtomicU64,
    pub clients: AtomicU64,
    pub faults: AtomicU64,
    /// The audio thread got the real-time scheduling class.
    pub audio_realtime: AtomicBool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Stats {
    pub blocks: u64,
    pub events_applied: u64,
    pub update_drops: u64,
    pub audio_drops: u64,
    pub underruns: u64,
    pub max_late_us: u64,
    pub max_render_us: u64,
    pub max_wake_gap_us: u64,
    pub audio_allocs: u64,
    pub frames: u64,
    pub overruns: u64,
    pub poses: u64,
    pub protocol_errors: u64,
    pub clients: u64,
    pub faults: u64,
    pub audio_realtime: bool,
}

impl Telemetry {
    pub fn snapshot(&self) -> Stats {
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        Stats {
            blocks: g(&self.blocks),
            events_applied: g(&self.events_applied),
            update_drops: g(&self.update_drops),
            audio_drops: g(&self.audio_drops),
            underruns: g(&self.underruns),
            max_late_us: g(&self.max_late_us),
            max_render_us: g(&self.max_render_us),
            max_wake_gap_us: g(&self.max_wake_gap_us),
            audio_allocs: g(&self.audio_allocs),
            frames: g(&self.frames),
            overruns: g(&self.overruns),
            poses: g(&self.poses),
            protocol_errors: g(&self.protocol_errors),
            clients: g(&self.clients),
            faults: g(&self.faults),
            audio_realtime: self.audio_realtime.load(Ordering::Relaxed),
        }
    }
}

fn bump(a: &AtomicU64) {
    a.fetch_add(1, Ordering::Relaxed);
}

enum AudioMsg {
    Update(SynthUpdate),
    Replace(Box<Synth>),
}

struct Shared {
    telemetry: Telemetry,
    shutdown: AtomicBool,
    poses: ArrayQueue<Pose>,
    patches: ArrayQueue<String>,
    errors: ArrayQueue<String>,
    updates: ArrayQueue<AudioMsg>,
    recycled: ArrayQueue<SynthUpdate>,
    audio_out: ArrayQueue<(u32, Vec<i16>)>,
    pool: ArrayQueue<Vec<i16>>,
    states: ArrayQueue<String>,
    latest_state: Mutex<Option<String>>,
}

/// Outcome of a finished live session.
#[derive(Debug, Clone)]
pub struct LiveReport {
    pub stats: Stats,
    pub reports: Vec<FrameReport>,
}

pub struct LiveServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    control: Option<JoinHandle<()>>,
    audio: Option<JoinHandle<()>>,
    analysis: Option<JoinHandle<Vec<FrameReport>>>,
}

const POOL_BUFFERS: usize = 128;
const MAX_REPORTS: usize = 1 << 17;

impl LiveServer {
    /// Binds `addr` and starts all roles. A busy port is a startup error.
    pub fn start(cfg: SessionConfig, addr: &str) -> Result<Self> {
        cfg.validate()?;
        let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
        listener.set_nonblocking(true)?;
        let local = listener.local_addr()?;
        let block = cfg.audio.block_size;
        let cap = cfg.runtime.queue_capacity.max(1);
        let shared = Arc::new(Shared {
            telemetry: Telemetry::default(),
            shutdown: AtomicBool::new(false),
            poses: ArrayQueue::new(256),
            patches: ArrayQueue::new(8),
            errors: ArrayQueue::new(16),
            updates: ArrayQueue::new(cap),
            recycled: ArrayQueue::new(cap + 4),
            audio_out: ArrayQueue::new(POOL_BUFFERS / 2),
            pool: ArrayQueue::new(POOL_BUFFERS),
            states: ArrayQueue::new(4),
            latest_state: Mutex::new(None),
        });
        for _ in 0..POOL_BUFFERS {
            let _ = shared.pool.push(Vec::with_capacity(block));
        }

        let mut phantom = PhantomState::new(&cfg.phantom, cfg.seed);
        let (seg, img) = phantom.observe(&cfg.phantom);
        let analyzer = Analyzer::initialize(&cfg, &seg, Some(&img))?;
        let synth = Synth::new(&cfg, analyzer.model());
        publish_state(
            &shared,
            &snapshot_json(&phantom, &seg, None, &shared.telemetry.snapshot(), 0),
        );

        let s = shared.clone();
        let acfg = cfg.clone();
        let analysis = thread::Builder::new()
            .name("analysis".into())
            .spawn(move || analysis_loop(s, acfg, phantom, analyzer, (seg, img)))?;
        let s = shared.clone();
        let lead = cfg.runtime.audio_lead_blocks;
        let audio = thread::Builder::new()
            .name("audio".into())
            .spawn(move || audio_loop(s, synth, block, lead))?;
        let s = shared.clone();
        let control = thread::Builder::new()
            .name("control".into())
            .spawn(move || control_loop(s, listener))?;
        Ok(Self {
            addr: local,
            shared,
            control: Some(control),
            audio: Some(audio),
            analysis: Some(analysis),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> Stats {
        self.shared.telemetry.snapshot()
    }

    /// Stops all roles and returns the session report.
    pub fn shutdown(mut self) -> Result<LiveReport> {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        let reports = self
            .analysis
            .take()
            .map(|h| h.join())
            .transpose()
            .map_err(|_| anyhow!("analysis thread panicked"))?;
        for h in [self.audio.take(), self.control.take()].into_iter().flatten() {
            h.join().map_err(|_| anyhow!("live thread panicked"))?;
        }
        Ok(LiveReport {
            stats: self.shared.telemetry.snapshot(),
            reports: reports.unwrap_or_default(),
        })
    }
}

impl Drop for LiveServer {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for h in [self.audio.take(), self.control.take()].into_iter().flatten() {
            let _ = h.join();
        }
        if let Some(h) = self.analysis.take() {
            let _ = h.join();
        }
    }
}

fn publish_state(shared: &Shared, text: &str) {
    let _ = shared.states.force_push(text.to_string());
    if let Ok(mut g) = shared.latest_state.lock() {
        *g = Some(text.to_string());
    }
}

fn every_fourth(v: &[Option<f64>]) -> Vec<Option<f64>> {
    v.iter().step_by(4).copied().collect()
}

fn snapshot_json(
    phantom: &PhantomState,
    seg: &SegFrame,
    out: Option<&FrameOutput>,
    stats: &Stats,
    marker: u32,
) -> String {
    let has = |src: EventSource| out.is_some_and(|o| o.update.events.iter().any(|e| e.source == src));
    let r = out.map(|o| &o.report);
    json!({
        "t": phantom.t,
        "frame": r.map_or(0, |r| r.frame),
        "tip": [phantom.tip.x, phantom.tip.y],
        "ilm": every_fourth(&seg.ilm),
        "rpe": every_fourth(&seg.rpe),
        "f_ilm": r.map_or(0.0, |r| r.f_ilm),
        "zone": r.and_then(|r| r.zone).map(|z| z.name()),
        "c_ilm": r.map_or(1.0, |r| r.c_ilm),
        "c_rpe": r.map_or(1.0, |r| r.c_rpe),
        "events": {
            "tool": has(EventSource::Tool),
            "crossing": has(EventSource::Crossing),
            "deformation": has(EventSource::Deformation),
        },
        "inject_blocked": phantom.inject_blocked,
        "injected_volume": phantom.injected_volume,
        "marker": marker,
        "stats": stats,
    })
    .to_string()
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Merges a JSON patch into `cfg` and validates the result.
pub fn patch_config(cfg: &SessionConfig, patch: &str) -> Result<SessionConfig> {
    let p: serde_json::Value = serde_json::from_str(patch).context("config patch is not JSON")?;
    if !p.is_object() {
        return Err(anyhow!("config patch must be a JSON object"));
    }
    let mut v = serde_json::to_value(cfg)?;
    merge(&mut v, p);
    let next: SessionConfig = serde_json::from_value(v).context("config patch rejected")?;
    next.validate().context("config patch rejected")?;
    if (next.phantom.width, next.phantom.height) != (cfg.phantom.width, cfg.phantom.height) {
        return Err(anyhow!("config patch may not change the phantom frame size"));
    }
    Ok(next)
}

fn analysis_loop(
    shared: Arc<Shared>,
    mut cfg: SessionConfig,
    mut phantom: PhantomState,
    mut analyzer: Analyzer,
    mut current: (SegFrame, BScanFrame),
) -> Vec<FrameReport> {
    priority::yield_to_audio();
    let t = &shared.telemetry;
    let period = Duration::from_secs_f64(1.0 / cfg.runtime.fps);
    let heartbeat = Duration::from_millis(cfg.runtime.heartbeat_ms);
    let mut clock = WallClock::default();
    let mut reports = Vec::new();
    let mut last_pose: Option<Instant> = None;
    let mut marker = 0u32;
    let mut next = Instant::now() + period;
    let mut k: u64 = 0;
    while !shared.shutdown.load(Ordering::Relaxed) {
        let now = Instant::now();
        if now < next {
            thread::sleep((next - now).min(Duration::from_millis(5)));
            continue;
        }
        next += period;
        if Instant::now() > next {
            // Fell more than one period behind: skip ahead rather than burst.
            next = Instant::now() + period;
        }
        while let Some(u) = shared.recycled.pop() {
            drop(u);
        }
        if let Some(patch) = shared.patches.pop() {
            match patch_config(&cfg, &patch).and_then(|c| {
                let a = Analyzer::initialize(&c, &current.0, Some(&current.1))?;
                Ok((c, a))
            }) {
                Ok((c, a)) => {
                    if c.phantom != cfg.phantom || c.seed != cfg.seed {
                        phantom = PhantomState::new(&c.phantom, c.seed);
                    }
                    let synth = Synth::new(&c, a.model());
                    if shared.updates.force_push(AudioMsg::Replace(Box::new(synth))).is_some() {
                        bump(&t.update_drops);
                    }
                    cfg = c;
                    analyzer = a;
                }
                Err(e) => {
                    let _ = shared.errors.force_push(format!("{e:#}"));
                }
            }
        }

        let mut control = Control::default();
        let mut got = false;
        while let Some(p) = shared.poses.pop() {
            control.dx += p.dx as f64;
            control.dy += p.dy as f64;
            control.inject = p.inject;
            marker = p.marker;
            got = true;
        }
        if got {
            last_pose = Some(Instant::now());
        }
        if last_pose.is_none_or(|at| at.elapsed() > heartbeat) {
            control = Control::default();
        }
        let dt = period.as_secs_f64();
        let (state, seg, img) = phantom_step(&phantom, &control, dt, &cfg.phantom);
        phantom = state;
        current = (seg, img);
        t.frames.fetch_add(1, Ordering::Relaxed);
        let stride = cfg.runtime.analysis_stride.max(1) as u64;
        let mut out = None;
        if k.is_multiple_of(stride) {
            match analyzer.process(&current.0, Some(&current.1), &mut clock) {
                Ok(o) => {
                    if o.report.total_ms() > cfg.runtime.frame_budget_ms {
                        bump(&t.overruns);
                    }
                    if reports.len() < MAX_REPORTS {
                        reports.push(o.report.clone());
                    }
                    out = Some(o);
                }
                Err(e) => {
                    let _ = shared.errors.force_push(format!("analysis: {e}"));
                }
            }
        }
        k += 1;
        let text = snapshot_json(&phantom, &current.0, out.as_ref(), &t.snapshot(), marker);
        publish_state(&shared, &text);
        if let Some(o) = out {
            if shared.updates.force_push(AudioMsg::Update(o.update)).is_some() {
                bump(&t.update_drops);
            }
        }
    }
    reports
}

fn audio_loop(shared: Arc<Shared>, mut synth: Synth, block: usize, lead: usize) {
    let t = &shared.telemetry;
    t.audio_realtime.store(priority::raise_to_realtime(), Ordering::Relaxed);
    let block_dur = block as f64 / SAMPLE_RATE as f64;
    let mut buf = vec![0.0f32; block];
    let start = Instant::now();
    let mut rendered: u64 = 0;
    let mut last_wake = Instant::now();
    while !shared.shutdown.load(Ordering::Relaxed) {
        let now = Instant::now();
        t.max_wake_gap_us
            .fetch_max((now - last_wake).as_micros() as u64, Ordering::Relaxed);
        last_wake = now;
        let elapsed = start.elapsed().as_secs_f64();
        let target = (elapsed / block_dur) as u64 + lead as u64;
        if rendered >= target {
            thread::sleep(Duration::from_micros(500));
            continue;
        }
        while let Some(msg) = shared.updates.pop() {
            match msg {
                AudioMsg::Update(mut u) => {
                    let n = synth.apply(&mut u);
                    t.events_applied.fetch_add(n as u64, Ordering::Relaxed);
                    let _ = shared.recycled.push(u);
                }
                AudioMsg::Replace(s) => synth = *s,
            }
        }
        let faults = synth.faults();
        let render_start = Instant::now();
        let index = synth.render_block(&mut buf);
        t.max_render_us
            .fetch_max(render_start.elapsed().as_micros() as u64, Ordering::Relaxed);
        if synth.faults() > faults {
            bump(&t.faults);
        }
        // Block k is played `lead` blocks after the session start plus k block lengths.
        let due = (rendered + lead as u64) as f64 * block_dur;
        let late = start.elapsed().as_secs_f64() - due;
        if late > 0.0 {
            t.max_late_us.fetch_max((late * 1e6) as u64, Ordering::Relaxed);
            bump(&t.underruns);
        }
        rendered += 1;
        bump(&t.blocks);
        let mut pcm = shared.pool.pop().unwrap_or_else(|| {
            bump(&t.audio_allocs);
            Vec::with_capacity(block)
        });
        pcm.clear();
        pcm.extend(buf.iter().map(|&x| quantize(x)));
        if let Some((_, old)) = shared.audio_out.force_push((index as u32, pcm)) {
            bump(&t.audio_drops);
            let _ = shared.pool.push(old);
        }
    }
}

struct Client {
    stream: TcpStream,
    decoder: Decoder,
}

fn send(client: &mut Client, m: &Message) -> bool {
    protocol::write_message(&mut client.stream, m).is_ok()
}

fn control_loop(shared: Arc<Shared>, listener: TcpListener) {
    priority::yield_to_audio();
    let t = &shared.telemetry;
    let mut client: Option<Client> = None;
    let mut rbuf = [0u8; 4096];
    while !shared.shutdown.load(Ordering::Relaxed) {
        if client.is_none() {
            if let Ok((stream, _)) = listener.accept() {
                let ok = stream.set_nonblocking(false).is_ok()
                    && stream.set_read_timeout(Some(Duration::from_millis(2))).is_ok()
                    && stream.set_write_timeout(Some(Duration::from_secs(1))).is_ok();
                let _ = stream.set_nodelay(true);
                if ok {
                    bump(&t.clients);
                    let mut c = Client {
                        stream,
                        decoder: Decoder::new(),
                    };
                    let hello = shared
                        .latest_state
                        .lock()
                        .ok()
                        .and_then(|g| g.clone())
                        .unwrap_or_else(|| "{}".into());
                    if send(&mut c, &Message::State(hello)) {
                        client = Some(c);
                    }
                }
            }
        }

        let mut drop_client = false;
        if let Some(c) = client.as_mut() {
            match c.stream.read(&mut rbuf) {
                Ok(0) => drop_client = true,
                Ok(n) => c.decoder.push(&rbuf[..n]),
                Err(e)
                    if matches!(
                        e.kind(),
                        ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted
                    ) => {}
                Err(_) => drop_client = true,
            }
            while let Some(msg) = c.decoder.next_message() {
                match msg {
                    Ok(Message::Pose(p)) => {
                        bump(&t.poses);
                        let _ = shared.poses.force_push(p);
                    }
                    Ok(Message::ConfigPatch(text)) => {
                        let _ = shared.patches.force_push(text);
                    }
                    Ok(other) => {
                        bump(&t.protocol_errors);
                        let m = format!("unexpected client message type 0x{:02x}", other.kind());
                        drop_client |= !send(c, &Message::Error(m));
                    }
                    Err(e) => {
                        bump(&t.protocol_errors);
                        drop_client |= !send(c, &Message::Error(e.to_string()));
                    }
                }
            }
        } else {
            thread::sleep(Duration::from_millis(2));
        }

        while let Some(e) = shared.errors.pop() {
            if let Some(c) = client.as_mut() {
                drop_client |= !send(c, &Message::Error(e));
            }
        }
        while let Some(s) = shared.states.pop() {
            if let Some(c) = client.as_mut() {
                drop_client |= !send(c, &Message::State(s));
            }
        }
        while let Some((index, pcm)) = shared.audio_out.pop() {
            if let Some(c) = client.as_mut() {
                if !drop_client {
                    let mut frame = Vec::with_capacity(protocol::HEADER_LEN + 4 + 2 * pcm.len());
                    frame.push(protocol::AUDIO);
                    frame.extend_from_slice(&((4 + 2 * pcm.len()) as u32).to_le_bytes());
                    frame.extend_from_slice(&index.to_le_bytes());
                    for s in &pcm {
                        frame.extend_from_slice(&s.to_le_bytes());
                    }
                    drop_client |= c.stream.write_all(&frame).is_err();
                }
            }
            let _ = shared.pool.push(pcm);
        }
        if drop_client {
            client = None;
        }
    }
}
