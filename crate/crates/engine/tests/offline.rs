use std::fs;

use ioct_sonify::bench::{bench_phantom, bench_sequence};
use ioct_sonify::offline::{run_frames, write_outputs, WallClock};
use ioct_sonify::sequence::{load_sequence, write_sequence, SequenceReader};
use ioct_sonify_core::phantom::{run_script, PhantomConfig, Script};
use ioct_sonify_core::session::NoClock;
use ioct_sonify_core::SessionConfig;
use tempfile::tempdir;

fn short_script() -> Script {
    let mut s = Script::bleb_injection(&PhantomConfig::default());
    // Approach and first crossing only.
    s.segments.truncate(2);
    s
}

#[test]
fn recorded_sequence_reproduces_the_wav_bytes() {
    let dir = tempdir().unwrap();
    let cfg = SessionConfig::default();
    let run = run_script(&cfg.phantom, cfg.seed, &short_script());
    let seq = dir.path().join("seq.jsonl");
    write_sequence(run.frames.iter().map(|(s, i)| (s, Some(i))), &seq).unwrap();

    let a = run_frames(&cfg, SequenceReader::open(&seq).unwrap(), &mut NoClock).unwrap();
    let b = run_frames(&cfg, SequenceReader::open(&seq).unwrap(), &mut WallClock::default()).unwrap();
    let pa = write_outputs(&a, &cfg, &dir.path().join("a")).unwrap();
    let pb = write_outputs(&b, &cfg, &dir.path().join("b")).unwrap();
    assert_eq!(fs::read(&pa.wav).unwrap(), fs::read(&pb.wav).unwrap());
    assert_eq!(fs::read(&pa.events).unwrap(), fs::read(&pb.events).unwrap());
    assert_eq!(fs::read(&pa.spectrogram).unwrap(), fs::read(&pb.spectrogram).unwrap());
    assert!(dir.path().join("a/spectrogram.png").exists());

    let events = fs::read_to_string(&pa.events).unwrap();
    let mut lines = events.lines();
    assert_eq!(lines.next(), Some("frame,t,source,label,value"));
    assert!(events.contains(",crossing,vitreous->ilm,"), "{events}");
    let frames = fs::read_to_string(&pa.frames).unwrap();
    assert_eq!(frames.lines().count(), 1 + a.reports.len());
    assert!(frames.starts_with("frame,t,ingest_ms,spline_ms,geometry_ms,lattice_ms,excitation_ms,total_ms"));
}

#[test]
fn empty_sequence_is_an_error_without_outputs() {
    let dir = tempdir().unwrap();
    let seq = dir.path().join("empty.jsonl");
    fs::write(&seq, "").unwrap();
    let err = run_frames(
        &SessionConfig::default(),
        SequenceReader::open(&seq).unwrap(),
        &mut NoClock,
    );
    assert!(err.is_err());
    assert!(!dir.path().join("audio.wav").exists());
}

#[test]
fn sequence_errors_carry_the_frame_index() {
    let dir = tempdir().unwrap();
    let cfg = SessionConfig::default();
    let run = run_script(&cfg.phantom, cfg.seed, &short_script());
    let seq = dir.path().join("seq.jsonl");
    write_sequence(run.frames.iter().take(5).map(|(s, _)| (s, None)), &seq).unwrap();
    let mut text = fs::read_to_string(&seq).unwrap();
    text.push_str("{\"t\": oops}\n");
    fs::write(&seq, text).unwrap();
    let err = run_frames(&cfg, SequenceReader::open(&seq).unwrap(), &mut NoClock).unwrap_err();
    assert!(format!("{err:#}").contains("line 6"), "{err:#}");
}

#[test]
fn bench_reports_every_stage() {
    let cfg = SessionConfig::default();
    let s = bench_phantom(&cfg, 2, 1).unwrap();
    assert!(s.frames > 100);
    assert!(s.stages.iter().all(|st| st.mean >= 0.0 && st.sd >= 0.0));
    assert!(s.analysis.mean >= s.lattice_excitation.mean);
    let csv = s.to_csv();
    assert!(csv.starts_with("stage,mean_ms,sd_ms\ningest,"));
    assert_eq!(csv.lines().count(), 1 + 5 + 2);
}

#[test]
fn bench_needs_fifty_frames() {
    let dir = tempdir().unwrap();
    let cfg = SessionConfig::default();
    let run = run_script(&cfg.phantom, cfg.seed, &short_script());
    let seq = dir.path().join("seq.jsonl");
    write_sequence(run.frames.iter().take(20).map(|(s, i)| (s, Some(i))), &seq).unwrap();
    let frames = load_sequence(&seq).unwrap();
    assert!(bench_sequence(&cfg, &frames, 1).is_err());
}
