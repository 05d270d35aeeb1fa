use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ioct_sonify::bench;
use ioct_sonify::config::load_config;
use ioct_sonify::live::LiveServer;
use ioct_sonify::offline::{frames_csv, run_frames, write_outputs, WallClock};
use ioct_sonify::sequence::{write_sequence, SequenceReader};
use ioct_sonify::spectrogram::{broadband_onset_metric, Spectrogram};
use ioct_sonify::wav::read_wav;
use ioct_sonify_core::config::Source;
use ioct_sonify_core::phantom::{Script, ScriptRunner};
use ioct_sonify_core::{Method, SessionConfig};

#[derive(Parser)]
#[command(
    name = "ioct-sonify",
    version,
    about = "Sonification of subretinal injection from iOCT segmentations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML session configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set lattice.rows=12`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
}

impl Common {
    fn load(&self) -> Result<SessionConfig> {
        let mut cfg = load_config(self.config.as_deref(), &self.set)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "proposed" => Ok(Method::Proposed),
        "baseline" => Ok(Method::Baseline),
        _ => Err(format!("unknown method `{s}` (expected proposed or baseline)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sonify a recorded sequence or the scripted phantom offline.
    Sonify {
        #[command(flatten)]
        common: Common,
        /// JSONL sequence; overrides the configured source.
        #[arg(long, conflicts_with = "phantom")]
        input: Option<PathBuf>,
        /// Use the scripted phantom bleb injection as input.
        #[arg(long)]
        phantom: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Serve the live phantom session over TCP.
    Live {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Stop after this many seconds; otherwise run until stdin closes.
        #[arg(long)]
        duration: Option<f64>,
        /// Write per-frame timings here on exit.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the scripted phantom injection as a JSONL sequence.
    Phantom {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "phantom.jsonl")]
        out: PathBuf,
        /// Omit B-scan images.
        #[arg(long)]
        no_images: bool,
    },
    /// Time the analysis stages over phantom sequences.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        sequences: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Spectrogram of a WAV file.
    Spectrogram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        png: Option<PathBuf>,
        /// Also print the broadband onset metric around this time in seconds.
        #[arg(long)]
        onset: Option<f64>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sonify {
            common,
            input,
            phantom,
            out,
        } => {
            let cfg = common.load()?;
            let mut clock = WallClock::default();
            let source = match (input, phantom) {
                (Some(p), _) => Some(p),
                (None, true) => None,
                (None, false) => match &cfg.source {
                    Source::Sequence { path } => Some(PathBuf::from(path)),
                    Source::Phantom => None,
                },
            };
            let run = match source {
                Some(path) => run_frames(&cfg, SequenceReader::open(&path)?, &mut clock)
                    .with_context(|| format!("sonifying {}", path.display()))?,
                None => {
                    let runner = ScriptRunner::new(&cfg.phantom, cfg.seed, &Script::bleb_injection(&cfg.phantom));
                    run_frames(&cfg, runner.map(|(s, i)| Ok((s, Some(i)))), &mut clock)?
                }
            };
            let paths = write_outputs(&run, &cfg, &out)?;
            println!(
                "{}: {} frames, {} events, {:.2} s audio, {} faults -> {}",
                cfg.method.name(),
                run.reports.len(),
                run.events.len(),
                run.audio.len() as f64 / ioct_sonify_core::SAMPLE_RATE as f64,
                run.faults,
                paths.wav.display()
            );
        }
        Command::Live {
            common,
            listen,
            duration,
            report,
        } => {
            let cfg = common.load()?;
            let server = LiveServer::start(cfg.clone(), &listen)?;
            eprintln!("listening on {}", server.local_addr());
            match duration {
                Some(d) => {
                    let end = Instant::now() + Duration::from_secs_f64(d);
                    while Instant::now() < end {
                        thread::sleep(Duration::from_millis(50));
                    }
                }
                None => {
                    let mut sink = Vec::new();
                    let _ = std::io::stdin().read_to_end(&mut sink);
                }
            }
            let result = server.shutdown()?;
            println!("{}", serde_json::to_string(&result.stats)?);
            if let Some(p) = report {
                fs::write(&p, frames_csv(&result.reports, cfg.runtime.frame_budget_ms))?;
            }
        }
        Command::Phantom { common, out, no_images } => {
            let cfg = common.load()?;
            let runner = ScriptRunner::new(&cfg.phantom, cfg.seed, &Script::bleb_injection(&cfg.phantom));
            let frames: Vec<_> = runner.collect();
            let n = write_sequence(frames.iter().map(|(s, i)| (s, (!no_images).then_some(i))), &out)?;
            println!("wrote {n} frames to {}", out.display());
        }
        Command::Bench {
            common,
            sequences,
            repeats,
            csv,
        } => {
            let cfg = common.load()?;
            if sequences == 0 {
                bail!("--sequences must be at least 1");
            }
            let summary = bench::bench_phantom(&cfg, sequences, repeats.max(1))?;
            println!("{}", summary.describe());
            if let Some(p) = csv {
                fs::write(&p, summary.to_csv())?;
            }
        }
        Command::Spectrogram { input, out, png, onset } => {
            let (sr, samples) = read_wav(&input)?;
            let spec = Spectrogram::standard(&samples, sr)?;
            spec.write_csv(&out)?;
            if let Some(p) = png {
                spec.write_png(&p)?;
            }
            if let Some(t) = onset {
                println!("onset {:+.2} dB", broadband_onset_metric(&spec, t, None)?);
            }
        }
    }
    Ok(())
}
