//! Hann-windowed STFT spectrograms and the broadband onset metric.

use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

pub const DB_FLOOR: f64 = -120.0;

#[derive(Debug, Error, PartialEq)]
pub enum SpectrogramError {
    #[error("need at least {window} samples, got {got}")]
    TooShort { window: usize, got: usize },
    #[error("window must be even and >= 4, hop >= 1")]
    Shape,
    #[error("segment {side} has {frames} frames, need at least 10")]
    Segment { side: &'static str, frames: usize },
    #[error("band {lo}..{hi} Hz has no bins")]
    EmptyBand { lo: f64, hi: f64 },
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Raw one-sided power `|X_k|^2` of every Hann-windowed frame.
pub fn stft_power(samples: &[f32], window: usize, hop: usize) -> Result<Vec<Vec<f64>>, SpectrogramError> {
    if window < 4 || !window.is_multiple_of(2) || hop == 0 {
        return Err(SpectrogramError::Shape);
    }
    if samples.len() < window {
        return Err(SpectrogramError::TooShort {
            window,
            got: samples.len(),
        });
    }
    let w = hann(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let frames = 1 + (samples.len() - window) / hop;
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let s = &samples[f * hop..f * hop + window];
        for (b, (x, wi)) in buf.iter_mut().zip(s.iter().zip(&w)) {
            *b = Complex::new(*x as f64 * wi, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        out.push(buf[..=window / 2].iter().map(|c| c.norm_sqr()).collect());
    }
    Ok(out)
}

/// STFT magnitudes in dB (reference 1.0 = full-scale sine amplitude), floored at -120 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub window: usize,
    pub hop: usize,
    pub sample_rate: u32,
    /// `frames x (window / 2 + 1)`.
    pub db: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn compute(samples: &[f32], window: usize, hop: usize, sample_rate: u32) -> Result<Self, SpectrogramError> {
        let power = stft_power(samples, window, hop)?;
        let wsum: f64 = hann(window).iter().sum();
        let half = window / 2;
        let db = power
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .enumerate()
                    .map(|(k, p)| {
                        // One-sided amplitude: a unit sine centered on a bin reads 1.0.
                        let scale = if k == 0 || k == half { 1.0 } else { 2.0 };
                        let mag = scale * p.sqrt() / wsum;
                        if mag > 0.0 {
                            (20.0 * mag.log10()).max(DB_FLOOR)
                        } else {
                            DB_FLOOR
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            window,
            hop,
            sample_rate,
            db,
        })
    }

    /// Default analysis: window 1024, hop 256.
    pub fn standard(samples: &[f32], sample_rate: u32) -> Result<Self, SpectrogramError> {
        Self::compute(samples, 1024, 256, sample_rate)
    }

    pub fn bins(&self) -> usize {
        self.window / 2 + 1
    }

    pub fn frames(&self) -> usize {
        self.db.len()
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.window as f64
    }

    /// Time of the center of frame `f` (seconds).
    pub fn frame_time(&self, f: usize) -> f64 {
        (f * self.hop + self.window / 2) as f64 / self.sample_rate as f64
    }

    /// Index of the loudest bin of frame `f`.
    pub fn peak_bin(&self, f: usize) -> usize {
        self.db[f]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k)
    }

    /// CSV: `frame,t,b0,...` then one row per frame, six decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.frames() * self.bins() * 12);
        s.push_str("frame,t");
        for k in 0..self.bins() {
            let _ = write!(s, ",b{k}");
        }
        s.push('\n');
        for (f, row) in self.db.iter().enumerate() {
            let _ = write!(s, "{f},{:.6}", self.frame_time(f));
            for v in row {
                let _ = write!(s, ",{v:.6}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    /// Grayscale PNG, low frequencies at the bottom, -120..0 dB mapped to black..white.
    pub fn write_png(&self, path: &Path) -> Result<(), image::ImageError> {
        let (w, h) = (self.frames() as u32, self.bins() as u32);
        let img = image::GrayImage::from_fn(w, h, |x, y| {
            let v = self.db[x as usize][(h - 1 - y) as usize];
            image::Luma([(((v - DB_FLOOR) / -DB_FLOOR).clamp(0.0, 1.0) * 255.0) as u8])
        });
        img.save(path)
    }

    /// Mean linear power over frames and bins inside `band` Hz.
    fn band_power(&self, frames: &[usize], band: (f64, f64)) -> Result<f64, SpectrogramError> {
        let bins: Vec<usize> = (0..self.bins())
            .filter(|&k| (band.0..=band.1).contains(&self.bin_hz(k)))
            .collect();
        if bins.is_empty() {
            return Err(SpectrogramError::EmptyBand { lo: band.0, hi: band.1 });
        }
        let mut sum = 0.0;
        for &f in frames {
            for &k in &bins {
                sum += 10f64.powf(self.db[f][k] / 10.0);
            }
        }
        Ok(sum / (frames.len() * bins.len()) as f64)
    }
}

pub const ONSET_BAND_HZ: (f64, f64) = (200.0, 8000.0);

/// dB change of band-averaged (200 Hz - 8 kHz) energy after vs. before `t_split`.
///
/// A frame counts for a side only when its whole window lies on that side;
/// frames straddling the split are ignored. With `span`, only frames whose
/// center is within `span` seconds of the split are used. Both sides need at
/// least 10 frames.
pub fn broadband_onset_metric(spec: &Spectrogram, t_split: f64, span: Option<f64>) -> Result<f64, SpectrogramError> {
    let sr = spec.sample_rate as f64;
    let near = |f: usize| span.is_none_or(|s| (spec.frame_time(f) - t_split).abs() <= s);
    let start = |f: usize| (f * spec.hop) as f64 / sr;
    let end = |f: usize| (f * spec.hop + spec.window) as f64 / sr;
    let before: Vec<usize> = (0..spec.frames()).filter(|&f| near(f) && end(f) <= t_split).collect();
    let after: Vec<usize> = (0..spec.frames()).filter(|&f| near(f) && start(f) >= t_split).collect();
    if before.len() < 10 {
        return Err(SpectrogramError::Segment {
            side: "before",
            frames: before.len(),
        });
    }
    if after.len() < 10 {
        return Err(SpectrogramError::Segment {
            side: "after",
            frames: after.len(),
        });
    }
    let pb = spec.band_power(&before, ONSET_BAND_HZ)?;
    let pa = spec.band_power(&after, ONSET_BAND_HZ)?;
    Ok(10.0 * (pa / pb).log10())
}
