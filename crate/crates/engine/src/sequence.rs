//! JSON Lines segmentation sequences with optional 8-bit PGM images.
//!
//! One object per line, keys in this order:
//! `t, w, ilm, rpe, cilm, crpe, needle{pts, tip, conf}, img`.
//! Image paths are relative to the directory of the sequence file.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ioct_sonify_core::frame::{FrameError, NeedleEvidence};
use ioct_sonify_core::{BScanFrame, SegFrame, Vec2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A segmentation frame and its optional B-scan.
pub type Frame = (SegFrame, Option<BScanFrame>);

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line} (frame {frame}): {source}")]
    Invalid {
        line: usize,
        frame: usize,
        source: FrameError,
    },
    #[error("line {line} (frame {frame}): timestamp {t} does not follow {prev}")]
    Timestamp {
        line: usize,
        frame: usize,
        prev: f64,
        t: f64,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SequenceError + '_ {
    move |source| SequenceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeedleRecord {
    pts: Vec<[f64; 2]>,
    tip: Option<[f64; 2]>,
    conf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    t: f64,
    w: usize,
    ilm: Vec<Option<f64>>,
    rpe: Vec<Option<f64>>,
    cilm: Vec<f64>,
    crpe: Vec<f64>,
    needle: NeedleRecord,
    img: Option<String>,
}

impl Record {
    fn from_frame(seg: &SegFrame, img: Option<String>) -> Self {
        Self {
            t: seg.t,
            w: seg.width,
            ilm: seg.ilm.clone(),
            rpe: seg.rpe.clone(),
            cilm: seg.conf_ilm.clone(),
            crpe: seg.conf_rpe.clone(),
            needle: NeedleRecord {
                pts: seg.needle.pixels.iter().map(|p| [p.x, p.y]).collect(),
                tip: seg.needle.tip.map(|p| [p.x, p.y]),
                conf: seg.needle.conf,
            },
            img,
        }
    }

    fn into_frame(self) -> (SegFrame, Option<String>) {
        let seg = SegFrame {
            t: self.t,
            width: self.w,
            ilm: self.ilm,
            rpe: self.rpe,
            conf_ilm: self.cilm,
            conf_rpe: self.crpe,
            needle: NeedleEvidence {
                pixels: self.needle.pts.into_iter().map(|[x, y]| Vec2::new(x, y)).collect(),
                tip: self.needle.tip.map(|[x, y]| Vec2::new(x, y)),
                conf: self.needle.conf,
            },
        };
        (seg, self.img)
    }
}

/// Streams frames from a sequence file, validating each one.
pub struct SequenceReader {
    lines: std::io::Lines<BufReader<File>>,
    dir: PathBuf,
    line: usize,
    frame: usize,
    prev_t: Option<f64>,
}

impl SequenceReader {
    pub fn open(path: &Path) -> Result<Self, SequenceError> {
        let file = File::open(path).map_err(io_err(path))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            lines: BufReader::new(file).lines(),
            dir,
            line: 0,
            frame: 0,
            prev_t: None,
        })
    }

    fn parse(&mut self, text: &str) -> Result<Frame, SequenceError> {
        let line = self.line;
        let frame = self.frame;
        let record: Record = serde_json::from_str(text).map_err(|e| SequenceError::Parse {
            line,
            message: e.to_string(),
        })?;
        let (seg, img_path) = record.into_frame();
        let image = match img_path {
            Some(rel) => {
                let p = self.dir.join(rel);
                Some(read_pgm(&p, seg.t)?)
            }
            None => None,
        };
        seg.validate(image.as_ref().map(|i| i.height))
            .map_err(|source| SequenceError::Invalid { line, frame, source })?;
        if let Some(img) = &image {
            if img.width != seg.width {
                return Err(SequenceError::Invalid {
                    line,
                    frame,
                    source: FrameError::ImageSize {
                        expected: seg.width * img.height,
                        got: img.intensity.len(),
                    },
                });
            }
        }
        if let Some(prev) = self.prev_t {
            if !(seg.t > prev) {
                return Err(SequenceError::Timestamp {
                    line,
                    frame,
                    prev,
                    t: seg.t,
                });
            }
        }
        self.prev_t = Some(seg.t);
        self.frame += 1;
        Ok((seg, image))
    }
}

impl Iterator for SequenceReader {
    type Item = Result<Frame, SequenceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line += 1;
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(SequenceError::Parse {
                        line: self.line,
                        message: e.to_string(),
                    }))
                }
            };
            if text.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&text));
        }
    }
}

/// Loads a whole sequence into memory.
pub fn load_sequence(path: &Path) -> Result<Vec<Frame>, SequenceError> {
    SequenceReader::open(path)?.collect()
}

/// Directory holding the images of a sequence file (`<stem>.frames`).
pub fn image_dir(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "sequence".into());
    path.with_file_name(format!("{stem}.frames"))
}

/// Incremental writer; images go to `<stem>.frames/NNNNNN.pgm`.
pub struct SequenceWriter {
    out: BufWriter<File>,
    path: PathBuf,
    image_dir: PathBuf,
    count: usize,
}

impl SequenceWriter {
    pub fn create(path: &Path) -> Result<Self, SequenceError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            image_dir: image_dir(path),
            count: 0,
        })
    }

    pub fn write(&mut self, seg: &SegFrame, image: Option<&BScanFrame>) -> Result<(), SequenceError> {
        let rel = match image {
            Some(img) => {
                fs::create_dir_all(&self.image_dir).map_err(io_err(&self.image_dir))?;
                let name = format!("{:06}.pgm", self.count);
                let p = self.image_dir.join(&name);
                write_pgm(img, &p)?;
                let dir = self.image_dir.file_name().unwrap_or_default().to_string_lossy();
                Some(format!("{dir}/{name}"))
            }
            None => None,
        };
        let text = serde_json::to_string(&Record::from_frame(seg, rel)).map_err(|e| SequenceError::Parse {
            line: self.count + 1,
            message: e.to_string(),
        })?;
        writeln!(self.out, "{text}").map_err(io_err(&self.path))?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize, SequenceError> {
        self.out.flush().map_err(io_err(&self.path))?;
        Ok(self.count)
    }
}

/// Writes a sequence. `load_sequence` returns the same segmentation fields bit for bit.
pub fn write_sequence<'a, I>(frames: I, path: &Path) -> Result<usize, SequenceError>
where
    I: IntoIterator<Item = (&'a SegFrame, Option<&'a BScanFrame>)>,
{
    let mut w = SequenceWriter::create(path)?;
    for (seg, img) in frames {
        w.write(seg, img)?;
    }
    w.finish()
}

/// Writes an 8-bit binary PGM (P5); intensities are rounded to 1/255.
pub fn write_pgm(img: &BScanFrame, path: &Path) -> Result<(), SequenceError> {
    let mut bytes = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    bytes.extend(img.intensity.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, bytes).map_err(io_err(path))
}

/// Reads an 8-bit binary PGM (P5, maxval <= 255) scaled to [0, 1].
pub fn read_pgm(path: &Path, t: f64) -> Result<BScanFrame, SequenceError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = |message: &str| SequenceError::Image {
        path: path.to_path_buf(),
        message: message.into(),
    };
    let mut fields = Vec::with_capacity(4);
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(
            std::str::from_utf8(&bytes[start..i])
                .map_err(|_| bad("header is not ASCII"))?
                .to_string(),
        );
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let data = &bytes[(i + 1).min(bytes.len())..];
    if data.len() < w * h {
        return Err(bad("pixel data truncated"));
    }
    let scale = 1.0 / maxval as f32;
    let intensity = data[..w * h].iter().map(|&b| (b as f32 * scale).min(1.0)).collect();
    BScanFrame::new(t, w, h, intensity).map_err(|e| bad(&e.to_string()))
}
