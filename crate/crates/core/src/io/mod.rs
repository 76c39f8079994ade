//! File formats and configuration.
//!
//! Every file is JSON. Loading parses, then validates with JSON-path messages;
//! saving goes through [`canonical`], so `save(load(save(x)))` reproduces the
//! bytes of `save(x)`.

pub mod burst;
pub mod canonical;
pub mod config;
mod schema;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::classification::{Category, CategoryBank, Split};
use crate::mask::RleMask;
use crate::metrics::MetricsReport;
use crate::synth::{self, SynthConfig, SynthError};
use crate::types::{validate_meta, validate_sequence, BBox, Detection, Observation, SequenceMeta, TrackRecord, TrackSequence, ValidatedSequence};
use canonical::{to_canonical_string, value_to_string};
use schema::*;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("{}", .0.join("\n"))]
    Schema(Vec<String>),
}

/// How fields unknown to the schema are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strictness {
    #[default]
    Strict,
    Lax,
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Detections,
    Tracks,
    Bank,
}

impl FileKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FileKind::Detections => "detections",
            FileKind::Tracks => "tracks",
            FileKind::Bank => "bank",
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FileKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "detections" => Ok(FileKind::Detections),
            "tracks" => Ok(FileKind::Tracks),
            "bank" => Ok(FileKind::Bank),
            other => Err(format!("unknown file kind '{other}' (expected detections, tracks or bank)")),
        }
    }
}

fn parse_checked<T: serde::de::DeserializeOwned>(text: &str, strictness: Strictness) -> Result<(T, Vec<String>), FormatError> {
    let (value, unknown) = schema::parse::<T>(text)?;
    let msgs: Vec<String> = unknown.into_iter().map(|p| format!("{p}: unknown field")).collect();
    match strictness {
        Strictness::Strict if !msgs.is_empty() => Err(FormatError::Schema(msgs)),
        _ => Ok((value, msgs)),
    }
}

fn finish<T>(value: T, errors: Vec<String>, warnings: Vec<String>) -> Result<Loaded<T>, FormatError> {
    if errors.is_empty() {
        Ok(Loaded { value, warnings })
    } else {
        Err(FormatError::Schema(errors))
    }
}

fn mask_from_json(m: RleJson) -> RleMask {
    RleMask::from_counts_unchecked(m.size[0], m.size[1], m.counts)
}

fn mask_to_json(m: &RleMask) -> RleJson {
    RleJson { size: [m.height(), m.width()], counts: m.counts().to_vec() }
}

fn meta_errors(path: &str, meta: &SequenceMeta, names: &mut HashSet<String>, errors: &mut Vec<String>) {
    for v in validate_meta(meta) {
        errors.push(format!("{path}: {v}"));
    }
    if !names.insert(meta.name.clone()) {
        errors.push(format!("{path}.name: duplicate sequence name '{}'", meta.name));
    }
}

pub fn parse_detections(text: &str, strictness: Strictness) -> Result<Loaded<Vec<ValidatedSequence>>, FormatError> {
    let (file, warnings) = parse_checked::<DetectionsJson>(text, strictness)?;
    let mut errors = Vec::new();
    let mut names = HashSet::new();
    let mut out = Vec::with_capacity(file.sequences.len());
    for (si, seq) in file.sequences.into_iter().enumerate() {
        let path = format!("sequences[{si}]");
        let meta = SequenceMeta { name: seq.name, height: seq.height, width: seq.width, num_frames: seq.num_frames };
        meta_errors(&path, &meta, &mut names, &mut errors);
        let mut dets = Vec::new();
        let mut origin = Vec::new();
        let mut prev: Option<usize> = None;
        for (fi, frame) in seq.frames.into_iter().enumerate() {
            if prev.is_some_and(|p| frame.index <= p) {
                errors.push(format!("{path}.frames[{fi}].index: frame indices must be unique and ascending"));
            }
            if frame.index >= meta.num_frames {
                errors.push(format!("{path}.frames[{fi}].index: {} is outside 0..{}", frame.index, meta.num_frames));
            }
            prev = Some(frame.index);
            for (di, d) in frame.detections.into_iter().enumerate() {
                origin.push(format!("{path}.frames[{fi}].detections[{di}]"));
                dets.push(Detection {
                    frame_index: frame.index,
                    bbox: BBox::from(d.bbox.0),
                    mask: d.mask.map(mask_from_json),
                    objectness: d.score,
                    app_emb: d.app_emb,
                    cls_emb: d.cls_emb,
                });
            }
        }
        match validate_sequence(meta, dets) {
            Ok(v) => out.push(v),
            Err(violations) => {
                // meta problems carry no detection index and were reported above
                for v in violations {
                    if let Some(i) = v.detection {
                        errors.push(format!("{}: {}", origin[i], v.kind));
                    }
                }
            }
        }
    }
    finish(out, errors, warnings)
}

pub fn detections_to_string(seqs: &[ValidatedSequence]) -> String {
    let file = DetectionsJson {
        sequences: seqs
            .iter()
            .map(|s| {
                let meta = s.meta();
                let frames = s
                    .frames()
                    .into_iter()
                    .enumerate()
                    .map(|(index, dets)| FrameJson {
                        index,
                        detections: dets
                            .into_iter()
                            .map(|d| DetectionJson {
                                bbox: BoxJson(d.bbox.to_array()),
                                score: d.objectness,
                                mask: d.mask.as_ref().map(mask_to_json),
                                app_emb: d.app_emb.clone(),
                                cls_emb: d.cls_emb.clone(),
                            })
                            .collect(),
                    })
                    .collect();
                DetSequenceJson {
                    name: meta.name.clone(),
                    height: meta.height,
                    width: meta.width,
                    num_frames: meta.num_frames,
                    frames,
                }
            })
            .collect(),
    };
    to_canonical_string(&file).expect("detections serialize")
}

fn check_box(path: &str, b: &BBox, errors: &mut Vec<String>) {
    if !b.is_valid() {
        errors.push(format!("{path}.box: width and height must be non-negative, got {:?}", b.to_array()));
    }
}

fn check_mask(path: &str, m: &RleMask, meta: &SequenceMeta, errors: &mut Vec<String>) {
    if m.size() != (meta.height, meta.width) {
        errors.push(format!(
            "{path}.mask: size {}x{} does not match the sequence frame {}x{}",
            m.height(),
            m.width(),
            meta.height,
            meta.width
        ));
    }
    if let Err(e) = m.check() {
        errors.push(format!("{path}.mask: {e}"));
    }
}

pub fn parse_tracks(text: &str, strictness: Strictness) -> Result<Loaded<Vec<TrackSequence>>, FormatError> {
    let (file, warnings) = parse_checked::<TracksJson>(text, strictness)?;
    let mut errors = Vec::new();
    let mut names = HashSet::new();
    let mut out = Vec::with_capacity(file.sequences.len());
    for (si, seq) in file.sequences.into_iter().enumerate() {
        let path = format!("sequences[{si}]");
        let meta = SequenceMeta { name: seq.name, height: seq.height, width: seq.width, num_frames: seq.num_frames };
        meta_errors(&path, &meta, &mut names, &mut errors);
        let mut ids = BTreeSet::new();
        let mut tracks = Vec::with_capacity(seq.tracks.len());
        for (ti, t) in seq.tracks.into_iter().enumerate() {
            let tpath = format!("{path}.tracks[{ti}]");
            if !ids.insert(t.track_id) {
                errors.push(format!("{tpath}.track_id: duplicate track id {}", t.track_id));
            }
            if let Some(s) = t.score {
                if !(0.0..=1.0).contains(&s) {
                    errors.push(format!("{tpath}.score: {s} is outside [0, 1]"));
                }
            }
            let mut prev: Option<usize> = None;
            let mut observations = Vec::with_capacity(t.observations.len());
            for (oi, o) in t.observations.into_iter().enumerate() {
                let opath = format!("{tpath}.observations[{oi}]");
                if prev.is_some_and(|p| o.frame <= p) {
                    errors.push(format!("{opath}.frame: frames must be strictly ascending within a track"));
                }
                if o.frame >= meta.num_frames {
                    errors.push(format!("{opath}.frame: {} is outside 0..{}", o.frame, meta.num_frames));
                }
                prev = Some(o.frame);
                let bbox = BBox::from(o.bbox.0);
                check_box(&opath, &bbox, &mut errors);
                let mask = o.mask.map(mask_from_json);
                if let Some(m) = &mask {
                    check_mask(&opath, m, &meta, &mut errors);
                }
                observations.push(Observation { frame: o.frame, bbox, mask });
            }
            tracks.push(TrackRecord { track_id: t.track_id, category_id: t.category_id, score: t.score, observations });
        }
        out.push(TrackSequence { meta, tracks });
    }
    finish(out, errors, warnings)
}

pub fn tracks_to_string(seqs: &[TrackSequence]) -> String {
    let file = TracksJson {
        sequences: seqs
            .iter()
            .map(|s| TrackSequenceJson {
                name: s.meta.name.clone(),
                height: s.meta.height,
                width: s.meta.width,
                num_frames: s.meta.num_frames,
                tracks: s
                    .tracks
                    .iter()
                    .map(|t| TrackJson {
                        track_id: t.track_id,
                        category_id: t.category_id,
                        score: t.score,
                        observations: t
                            .observations
                            .iter()
                            .map(|o| ObservationJson {
                                frame: o.frame,
                                bbox: BoxJson(o.bbox.to_array()),
                                mask: o.mask.as_ref().map(mask_to_json),
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    to_canonical_string(&file).expect("tracks serialize")
}

pub fn parse_bank(text: &str, strictness: Strictness) -> Result<Loaded<CategoryBank>, FormatError> {
    let (file, warnings) = parse_checked::<BankJson>(text, strictness)?;
    let mut errors = Vec::new();
    let mut bank = CategoryBank::new();
    for (i, c) in file.categories.into_iter().enumerate() {
        let split = match c.split {
            SplitJson::Common => Split::Common,
            SplitJson::Uncommon => Split::Uncommon,
        };
        if let Err(e) = bank.insert(c.id, Category { name: c.name, split, prototype: c.prototype }) {
            errors.push(format!("categories[{i}]: {e}"));
        }
    }
    finish(bank, errors, warnings)
}

pub fn bank_to_string(bank: &CategoryBank) -> String {
    let file = BankJson {
        categories: bank
            .iter()
            .map(|(id, c)| CategoryJson {
                id,
                name: c.name.clone(),
                split: match c.split {
                    Split::Common => SplitJson::Common,
                    Split::Uncommon => SplitJson::Uncommon,
                },
                prototype: c.prototype.clone(),
            })
            .collect(),
    };
    to_canonical_string(&file).expect("bank serializes")
}

/// Parses and validates a file of the given kind, returning only the warnings.
pub fn validate_text(kind: FileKind, text: &str, strictness: Strictness) -> Result<Vec<String>, FormatError> {
    match kind {
        FileKind::Detections => parse_detections(text, strictness).map(|l| l.warnings),
        FileKind::Tracks => parse_tracks(text, strictness).map(|l| l.warnings),
        FileKind::Bank => parse_bank(text, strictness).map(|l| l.warnings),
    }
}

pub fn report_to_string(report: &MetricsReport) -> String {
    value_to_string(&report.to_json())
}

/// Contents of the three files written by the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub gt: String,
    pub detections: String,
    pub bank: String,
}

pub fn synth_files(cfg: &SynthConfig) -> Result<SynthFiles, SynthError> {
    let data = synth::generate(cfg)?;
    Ok(SynthFiles {
        gt: tracks_to_string(std::slice::from_ref(&data.gt)),
        detections: detections_to_string(std::slice::from_ref(&data.detections)),
        bank: bank_to_string(&data.bank),
    })
}

#[cfg(test)]
mod tests;
