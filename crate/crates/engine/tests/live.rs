use std::io::Write;
use std::net::{Shutdown, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use ioct_sonify::live::{patch_config, LiveServer};
use ioct_sonify::protocol::{read_message, Message, Pose};
use ioct_sonify_core::SessionConfig;

#[derive(Default)]
struct Seen {
    audio_blocks: AtomicU64,
    nonzero_samples: AtomicU64,
    last_index: AtomicU64,
    gaps: AtomicU64,
    states: Mutex<Vec<String>>,
    errors: Mutex<Vec<String>>,
    closed: AtomicBool,
}

struct Client {
    stream: TcpStream,
    seen: Arc<Seen>,
    reader: Option<thread::JoinHandle<()>>,
}

impl Client {
    fn connect(server: &LiveServer) -> Self {
        let stream = TcpStream::connect(server.local_addr()).unwrap();
        let mut r = stream.try_clone().unwrap();
        let seen = Arc::new(Seen::default());
        let s = seen.clone();
        let reader = thread::spawn(move || {
            let mut prev: Option<u32> = None;
            while let Ok(m) = read_message(&mut r) {
                match m {
                    Ok(Message::Audio { index, samples }) => {
                        s.audio_blocks.fetch_add(1, Ordering::Relaxed);
                        let nz = samples.iter().filter(|v| **v != 0).count() as u64;
                        s.nonzero_samples.fetch_add(nz, Ordering::Relaxed);
                        if prev.is_some_and(|p| index != p + 1) {
                            s.gaps.fetch_add(1, Ordering::Relaxed);
                        }
                        prev = Some(index);
                        s.last_index.store(index as u64, Ordering::Relaxed);
                    }
                    Ok(Message::State(j)) => s.states.lock().unwrap().push(j),
                    Ok(Message::Error(e)) => s.errors.lock().unwrap().push(e),
                    _ => {}
                }
            }
            s.closed.store(true, Ordering::SeqCst);
        });
        Self {
            stream,
            seen,
            reader: Some(reader),
        }
    }

    fn send(&mut self, m: &Message) {
        self.stream.write_all(&m.encode()).unwrap();
    }

    fn wait_for(&self, what: impl Fn(&Seen) -> bool, timeout: Duration) -> bool {
        let end = Instant::now() + timeout;
        while Instant::now() < end {
            if what(&self.seen) {
                return true;
            }
            thread::sleep(Duration::from_millis(10));
        }
        false
    }

    fn close(mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

fn start() -> LiveServer {
    LiveServer::start(SessionConfig::default(), "127.0.0.1:0").unwrap()
}

#[test]
fn handshake_sends_state_first() {
    let server = start();
    let c = Client::connect(&server);
    assert!(c.wait_for(|s| !s.states.lock().unwrap().is_empty(), Duration::from_secs(2)));
    let first: serde_json::Value = serde_json::from_str(&c.seen.states.lock().unwrap()[0]).unwrap();
    for key in ["tip", "ilm", "rpe", "f_ilm", "zone", "c_ilm", "c_rpe", "events"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(first["ilm"].as_array().unwrap().len(), 512 / 4);
    c.close();
    server.shutdown().unwrap();
}

#[test]
fn malformed_message_returns_an_error_and_the_session_survives() {
    let server = start();
    let mut c = Client::connect(&server);
    // A well-framed message of a type only the server may send.
    c.send(&Message::State("{}".into()));
    assert!(c.wait_for(|s| !s.errors.lock().unwrap().is_empty(), Duration::from_secs(2)));
    assert!(c.seen.errors.lock().unwrap()[0].contains("0x03"));
    c.send(&Message::Pose(Pose {
        dx: 1.0,
        dy: 0.0,
        inject: false,
        marker: 42,
    }));
    assert!(c.wait_for(
        |s| s.states.lock().unwrap().iter().any(|j| j.contains("\"marker\":42")),
        Duration::from_secs(2)
    ));
    assert!(!c.seen.closed.load(Ordering::SeqCst));
    assert!(server.stats().protocol_errors >= 1);
    c.close();
    server.shutdown().unwrap();
}

#[test]
fn poses_drive_frames_and_a_continuous_audio_stream() {
    let server = start();
    let mut c = Client::connect(&server);
    assert!(c.wait_for(|s| s.audio_blocks.load(Ordering::Relaxed) > 20, Duration::from_secs(3)));
    let warm = server.stats();
    let frames0 = warm.frames;
    for k in 0..100u32 {
        c.send(&Message::Pose(Pose {
            dx: 0.8,
            dy: 0.6,
            inject: false,
            marker: k,
        }));
        thread::sleep(Duration::from_millis(33));
    }
    thread::sleep(Duration::from_millis(200));
    let end = server.stats();
    assert!(end.poses >= 100);
    assert!(end.frames - frames0 >= 100, "{} frames", end.frames - frames0);
    assert_eq!(end.audio_drops, warm.audio_drops);
    assert_eq!(end.audio_allocs, warm.audio_allocs);
    assert_eq!(c.seen.gaps.load(Ordering::Relaxed), 0);
    assert!(c.seen.nonzero_samples.load(Ordering::Relaxed) > 0);
    let report = {
        c.close();
        server.shutdown().unwrap()
    };
    assert!(report.reports.len() >= 100);
}

#[test]
fn idle_phantom_stays_silent() {
    let server = start();
    thread::sleep(Duration::from_millis(800));
    assert_eq!(server.stats().events_applied, 0);
    let c = Client::connect(&server);
    assert!(c.wait_for(|s| s.audio_blocks.load(Ordering::Relaxed) > 50, Duration::from_secs(3)));
    assert_eq!(c.seen.nonzero_samples.load(Ordering::Relaxed), 0);
    c.close();
    let r = server.shutdown().unwrap();
    assert_eq!(r.stats.events_applied, 0);
    assert!(r.stats.frames > 10);
}

#[test]
fn clients_can_reattach() {
    let server = start();
    let c = Client::connect(&server);
    assert!(c.wait_for(|s| !s.states.lock().unwrap().is_empty(), Duration::from_secs(2)));
    c.close();
    thread::sleep(Duration::from_millis(100));
    let c = Client::connect(&server);
    assert!(c.wait_for(|s| s.audio_blocks.load(Ordering::Relaxed) > 5, Duration::from_secs(3)));
    c.close();
    assert_eq!(server.shutdown().unwrap().stats.clients, 2);
}

#[test]
fn busy_port_is_a_startup_error() {
    let server = start();
    let addr = server.local_addr().to_string();
    assert!(LiveServer::start(SessionConfig::default(), &addr).is_err());
    server.shutdown().unwrap();
}

#[test]
fn config_patches_apply_or_report() {
    let server = start();
    let mut c = Client::connect(&server);
    c.send(&Message::ConfigPatch(r#"{"lattice":{"rows":2}}"#.into()));
    assert!(c.wait_for(
        |s| s.errors.lock().unwrap().iter().any(|e| e.contains("rejected")),
        Duration::from_secs(2)
    ));
    c.send(&Message::ConfigPatch(r#"{"excitation":{"jitter_max_ms":10.0}}"#.into()));
    thread::sleep(Duration::from_millis(300));
    assert_eq!(c.seen.errors.lock().unwrap().len(), 1);
    c.close();
    server.shutdown().unwrap();
}

#[test]
fn patch_merging() {
    let cfg = SessionConfig::default();
    let next = patch_config(&cfg, r#"{"seed": 9, "render": {"output_gain": 2.0}}"#).unwrap();
    assert_eq!(next.seed, 9);
    assert_eq!(next.render.output_gain, 2.0);
    assert_eq!(next.lattice, cfg.lattice);
    assert!(patch_config(&cfg, "[1]").is_err());
    assert!(patch_config(&cfg, r#"{"nope": 1}"#).is_err());
    assert!(patch_config(&cfg, r#"{"phantom": {"width": 256}}"#).is_err());
}
