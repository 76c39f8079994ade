//! HOTA (closed-world, category averaged) and OWTA (open-world, recall based)
//! evaluation of predicted tracks against ground truth.
//!
//! Closed mode evaluates every category as its own pool and averages
//! per-category scores without weighting over categories that have at least
//! one gt track. Open mode evaluates one class-agnostic pool per sequence; the
//! common/uncommon rows only restrict which gt tracks (and their TPs/FNs)
//! count, predictions stay shared.

mod hota;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::classification::{CategoryBank, Split};
use crate::types::{TrackRecord, TrackSequence};

pub use hota::{hota_alpha, match_frames, AlphaCounts, AlphaScores, FrameMatching, PoolSims, TruePositive, TIE_BREAK_WEIGHT};
pub use report::{CategoryReport, MetricsReport, Scores, SplitName, SplitReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    Mask,
    Box,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Closed => "closed",
            Mode::Open => "open",
        }
    }
}

impl Geometry {
    pub fn as_str(&self) -> &'static str {
        match self {
            Geometry::Mask => "mask",
            Geometry::Box => "box",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "closed" => Ok(Mode::Closed),
            "open" => Ok(Mode::Open),
            other => Err(format!("unknown mode '{other}', expected closed|open")),
        }
    }
}

impl FromStr for Geometry {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mask" => Ok(Geometry::Mask),
            "box" => Ok(Geometry::Box),
            other => Err(format!("unknown geometry '{other}', expected mask|box")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub alphas: Vec<f64>,
    pub mode: Mode,
    pub geometry: Geometry,
}

/// `0.05, 0.10, ..., 0.95`
pub fn default_alphas() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { alphas: default_alphas(), mode: Mode::Closed, geometry: Geometry::Mask }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.alphas.is_empty() {
            return Err(EvalError::InvalidConfig("alphas must not be empty".into()));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(EvalError::InvalidConfig("every alpha must lie in (0, 1)".into()));
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::InvalidConfig("alphas must be strictly increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error("sequence '{seq}', track {track}: unknown category_id {category}")]
    UnknownCategory { seq: String, track: u64, category: u64 },
    #[error("sequence '{seq}', track {track}: category_id is required")]
    MissingCategory { seq: String, track: u64 },
    #[error("prediction sequence '{0}' does not exist in the ground truth")]
    UnknownSequence(String),
    #[error("sequence '{0}': prediction frame size differs from ground truth")]
    SizeMismatch(String),
    #[error("sequence '{0}' appears more than once")]
    DuplicateSequence(String),
}

/// Per-sequence partial results, reduced in sequence-name order.
#[derive(Debug, Default)]
struct Partial {
    /// group → per-alpha tallies
    groups: BTreeMap<Group, Vec<AlphaCounts>>,
    box_fallback_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Group {
    All,
    Split(Split),
    Category(u64),
}

fn accumulate(into: &mut BTreeMap<Group, Vec<AlphaCounts>>, from: BTreeMap<Group, Vec<AlphaCounts>>, n: usize) {
    for (k, v) in from {
        let slot = into.entry(k).or_insert_with(|| vec![AlphaCounts::default(); n]);
        for (a, b) in slot.iter_mut().zip(&v) {
            a.merge(b);
        }
    }
}

fn check_categories(seq: &TrackSequence, bank: &CategoryBank, required: bool) -> Result<(), EvalError> {
    for t in &seq.tracks {
        match t.category_id {
            Some(c) if !bank.contains(c) => {
                return Err(EvalError::UnknownCategory { seq: seq.meta.name.clone(), track: t.track_id, category: c })
            }
            None if required => return Err(EvalError::MissingCategory { seq: seq.meta.name.clone(), track: t.track_id }),
            _ => {}
        }
    }
    Ok(())
}

fn eval_closed(gt: &TrackSequence, pred: Option<&TrackSequence>, cfg: &EvalConfig) -> Partial {
    let mut per_cat: BTreeMap<u64, (Vec<&TrackRecord>, Vec<&TrackRecord>)> = BTreeMap::new();
    for t in &gt.tracks {
        per_cat.entry(t.category_id.expect("checked")).or_default().0.push(t);
    }
    for t in pred.map(|p| p.tracks.as_slice()).unwrap_or(&[]) {
        let c = t.category_id.expect("checked");
        // Predictions in categories without gt in this sequence are pure FPs
        // for that category; categories with no gt anywhere are dropped later.
        per_cat.entry(c).or_default().1.push(t);
    }
    let mut out = Partial::default();
    for (cat, (g, p)) in per_cat {
        let sims = PoolSims::new(&g, &p, cfg.geometry);
        out.box_fallback_pairs += sims.box_fallback_pairs;
        let per_alpha: Vec<AlphaCounts> = cfg
            .alphas
            .iter()
            .map(|&alpha| {
                let m = hota::match_pool(&sims, alpha);
                hota::tally(&sims, &m, |_| (), Some(())).remove(&()).unwrap_or_default()
            })
            .collect();
        out.groups.insert(Group::Category(cat), per_alpha);
    }
    out
}

fn eval_open(gt: &TrackSequence, pred: Option<&TrackSequence>, bank: &CategoryBank, cfg: &EvalConfig) -> Partial {
    let g: Vec<&TrackRecord> = gt.tracks.iter().collect();
    let p: Vec<&TrackRecord> = pred.map(|s| s.tracks.iter().collect()).unwrap_or_default();
    let sims = PoolSims::new(&g, &p, cfg.geometry);
    let cats: Vec<u64> = g.iter().map(|t| t.category_id.expect("checked")).collect();
    let mut out = Partial { box_fallback_pairs: sims.box_fallback_pairs, ..Default::default() };
    let n = cfg.alphas.len();
    for (k, &alpha) in cfg.alphas.iter().enumerate() {
        let m = hota::match_pool(&sims, alpha);
        let by_cat = hota::tally(&sims, &m, |gi| Some(cats[gi]), None);
        let mut all = AlphaCounts::default();
        let mut split_counts: BTreeMap<Split, AlphaCounts> = BTreeMap::new();
        for (cat, c) in &by_cat {
            let cat = cat.expect("gt groups always carry a category");
            let split = bank.split_of(cat).expect("checked");
            split_counts.entry(split).or_default().merge(c);
            all.merge(c);
            out.groups.entry(Group::Category(cat)).or_insert_with(|| vec![Default::default(); n])[k] = *c;
        }
        all.fp = m.fp.len() as u64;
        out.groups.entry(Group::All).or_insert_with(|| vec![Default::default(); n])[k] = all;
        for (s, c) in split_counts {
            out.groups.entry(Group::Split(s)).or_insert_with(|| vec![Default::default(); n])[k] = c;
        }
    }
    out
}

/// Evaluates predictions against ground truth over every sequence.
///
/// Work is spread over the current rayon pool by sequence; reduction happens
/// in sequence-name order so results do not depend on the thread count.
pub fn evaluate(
    gt: &[TrackSequence],
    pred: &[TrackSequence],
    bank: &CategoryBank,
    cfg: &EvalConfig,
) -> Result<MetricsReport, EvalError> {
    cfg.validate()?;
    let mut warnings = Vec::new();

    let mut gt_by_name: BTreeMap<&str, &TrackSequence> = BTreeMap::new();
    for s in gt {
        if gt_by_name.insert(&s.meta.name, s).is_some() {
            return Err(EvalError::DuplicateSequence(s.meta.name.clone()));
        }
        check_categories(s, bank, true)?;
    }
    let mut pred_by_name: BTreeMap<&str, &TrackSequence> = BTreeMap::new();
    for s in pred {
        if !gt_by_name.contains_key(s.meta.name.as_str()) {
            match cfg.mode {
                Mode::Closed => return Err(EvalError::UnknownSequence(s.meta.name.clone())),
                Mode::Open => {
                    warnings.push(format!("prediction sequence '{}' has no ground truth and is ignored", s.meta.name));
                    continue;
                }
            }
        }
        let g = gt_by_name[s.meta.name.as_str()];
        if (g.meta.height, g.meta.width) != (s.meta.height, s.meta.width) {
            return Err(EvalError::SizeMismatch(s.meta.name.clone()));
        }
        if pred_by_name.insert(&s.meta.name, s).is_some() {
            return Err(EvalError::DuplicateSequence(s.meta.name.clone()));
        }
        if cfg.mode == Mode::Closed {
            check_categories(s, bank, true)?;
        }
    }

    let jobs: Vec<(&TrackSequence, Option<&TrackSequence>)> =
        gt_by_name.iter().map(|(name, g)| (*g, pred_by_name.get(name).copied())).collect();
    let partials: Vec<Partial> = jobs
        .par_iter()
        .map(|(g, p)| match cfg.mode {
            Mode::Closed => eval_closed(g, *p, cfg),
            Mode::Open => eval_open(g, *p, bank, cfg),
        })
        .collect();

    let n = cfg.alphas.len();
    let mut groups = BTreeMap::new();
    let mut box_fallback_pairs = 0;
    for p in partials {
        box_fallback_pairs += p.box_fallback_pairs;
        accumulate(&mut groups, p.groups, n);
    }

    let mut gt_tracks: BTreeMap<u64, usize> = BTreeMap::new();
    for s in gt {
        for t in &s.tracks {
            *gt_tracks.entry(t.category_id.expect("checked")).or_default() += 1;
        }
    }
    let mut pred_tracks: BTreeMap<u64, usize> = BTreeMap::new();
    for s in pred_by_name.values() {
        for t in &s.tracks {
            if let Some(c) = t.category_id {
                *pred_tracks.entry(c).or_default() += 1;
            }
        }
    }
    let ignored: BTreeSet<u64> = pred_tracks.keys().filter(|c| !gt_tracks.contains_key(c)).copied().collect();
    if cfg.mode == Mode::Closed && !ignored.is_empty() {
        warnings.push(format!("predictions in categories without ground truth are not scored: {ignored:?}"));
    }
    if box_fallback_pairs > 0 && cfg.geometry == Geometry::Mask {
        warnings.push(format!("{box_fallback_pairs} similarity pairs used box IoU because a mask was missing"));
    }

    let ctx = report::Context { cfg, bank, gt_tracks: &gt_tracks, pred_tracks: &pred_tracks };
    let mut report = match cfg.mode {
        Mode::Closed => report::build_closed(&ctx, &groups, &mut warnings),
        Mode::Open => report::build_open(&ctx, &groups, &mut warnings),
    };
    report.box_fallback_pairs = box_fallback_pairs;
    report.warnings = warnings;
    Ok(report)
}
