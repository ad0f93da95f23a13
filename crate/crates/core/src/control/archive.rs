//! Run archives. A `.run` file is a sequence of gzip members holding one
//! JSON line each: the manifest, then one line per frame, then an end
//! marker. Every frame is a complete member, so a crash loses at most the
//! frame being written and the missing end marker flags the truncation.

use super::{Event, Frame, RunConfig, RunRecord, Scheduled};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT: &str = "flowscribe-run";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub run_id: String,
    pub created_at: String,
    /// Generator string of the LUT the run used.
    pub lut_generator: String,
    /// SHA-256 of the spec text.
    pub spec_hash: String,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(run_id: impl Into<String>, lut_generator: impl Into<String>, config: RunConfig) -> Manifest {
        Manifest {
            format: FORMAT.into(),
            version: VERSION,
            run_id: run_id.into(),
            created_at: chrono::Utc::now().to_rfc3339(),
            lut_generator: lut_generator.into(),
            spec_hash: spec_hash(&config.spec_text),
            config,
        }
    }
}

pub fn spec_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct End {
    pub truncated: bool,
    pub frames: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Line {
    Manifest(Manifest),
    Frame(Frame),
    End(End),
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a run archive: {0}")]
    Format(String),
}

/// Incremental writer.
pub struct ArchiveWriter {
    out: BufWriter<File>,
    frames: usize,
}

impl ArchiveWriter {
    pub fn create(path: &Path, manifest: &Manifest) -> io::Result<ArchiveWriter> {
        let mut w = ArchiveWriter {
            out: BufWriter::new(File::create(path)?),
            frames: 0,
        };
        w.member(&Line::Manifest(manifest.clone()))?;
        Ok(w)
    }

    fn member(&mut self, line: &Line) -> io::Result<()> {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        serde_json::to_writer(&mut enc, line)?;
        enc.write_all(b"\n")?;
        self.out.write_all(&enc.finish()?)?;
        self.out.flush()
    }

    pub fn append(&mut self, frame: &Frame) -> io::Result<()> {
        self.member(&Line::Frame(frame.clone()))?;
        self.frames += 1;
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Write the end marker (not truncated: every written frame is a
    /// completed cycle).
    pub fn finish(mut self, reason: &str) -> io::Result<()> {
        let end = End {
            truncated: false,
            frames: self.frames,
            reason: reason.into(),
        };
        self.member(&Line::End(end))?;
        self.out.get_ref().sync_all()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub manifest: Manifest,
    pub frames: Vec<Frame>,
    pub end: Option<End>,
}

impl Archive {
    /// True when the end marker is missing or says so.
    pub fn truncated(&self) -> bool {
        self.end.as_ref().map_or(true, |e| e.truncated)
    }

    pub fn record(&self) -> RunRecord {
        RunRecord {
            config: self.replay_config(),
            frames: self.frames.clone(),
        }
    }

    /// Config that reproduces the archived frames. The manifest holds the
    /// config at launch; perturbations sent while the run was live and an
    /// early stop only show up in the frames, so the schedule is rebuilt
    /// from the perturbation events and the run is cut at the last frame.
    pub fn replay_config(&self) -> RunConfig {
        let mut cfg = self.manifest.config.clone();
        cfg.control.perturbations = self
            .frames
            .iter()
            .flat_map(|f| {
                f.events.iter().filter_map(move |e| match e {
                    Event::Perturbation { perturbation } => Some(Scheduled {
                        cycle: f.cycle,
                        perturbation: perturbation.clone(),
                    }),
                    _ => None,
                })
            })
            .collect();
        if let Some(last) = self.frames.last() {
            if self.end.as_ref().map_or(true, |e| e.reason != "complete") {
                cfg.stop_after = Some(last.cycle);
            }
        }
        cfg
    }
}

/// Read an archive, keeping every complete frame before any damage.
pub fn read_archive(path: &Path) -> Result<Archive, ArchiveError> {
    let reader = BufReader::new(MultiGzDecoder::new(BufReader::new(File::open(path)?)));
    let mut manifest = None;
    let mut frames = Vec::new();
    let mut end = None;
    for line in reader.lines() {
        let Ok(line) = line else { break };
        let Ok(parsed) = serde_json::from_str::<Line>(&line) else {
            break;
        };
        match parsed {
            Line::Manifest(m) if manifest.is_none() => manifest = Some(m),
            Line::Frame(f) if manifest.is_some() && end.is_none() => frames.push(f),
            Line::End(e) if manifest.is_some() => end = Some(e),
            _ => return Err(ArchiveError::Format("records out of order".into())),
        }
    }
    let manifest = manifest.ok_or_else(|| ArchiveError::Format("missing manifest".into()))?;
    if manifest.format != FORMAT {
        return Err(ArchiveError::Format(manifest.format));
    }
    Ok(Archive {
        manifest,
        frames,
        end,
    })
}

/// Write a finished record in one go.
pub fn write_record(path: &Path, manifest: &Manifest, record: &RunRecord) -> io::Result<()> {
    let mut w = ArchiveWriter::create(path, manifest)?;
    for f in &record.frames {
        w.append(f)?;
    }
    w.finish("complete")
}
