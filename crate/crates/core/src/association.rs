//! Appearance-only association of detections to tracks.
//!
//! Each frame: bi-directional softmax over raw embedding dot products, a class
//! exemplar gate on cosine similarity, and an exact maximum-score assignment.
//! Unmatched confident detections start new tracks, unmatched tracks age out.

use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

use crate::classification::{self, cosine_similarity, dot, track_label, vote_fraction, CategoryBank, ClassifyError};
use crate::types::{Detection, Observation, SequenceMeta, TrackRecord, TrackSequence, TrackState, TrackStatus, ValidatedSequence};

pub use crate::assignment::hungarian_max;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssociationError {
    #[error("embedding dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("frame {frame} is not after the last processed frame {last}")]
    OutOfOrderFrame { frame: usize, last: usize },
    #[error("detection belongs to frame {found}, expected frame {expected}")]
    WrongFrame { expected: usize, found: usize },
    #[error("invalid tracker config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Classification(#[from] ClassifyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Minimum bi-softmax score for a match.
    pub match_threshold: f64,
    /// Minimum objectness for an unmatched detection to start a track.
    pub new_track_threshold: f64,
    /// Minimum class-embedding cosine similarity for a pair to be matchable.
    pub cem_gate_threshold: f64,
    /// Weight of the incoming embedding in the running average.
    pub embedding_momentum: f64,
    /// Unmatched frames tolerated before a track is retired.
    pub max_lost_frames: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            match_threshold: 0.5,
            new_track_threshold: 0.7,
            cem_gate_threshold: 0.5,
            embedding_momentum: 0.8,
            max_lost_frames: 10,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<(), AssociationError> {
        let bad = |msg: &str| Err(AssociationError::InvalidConfig(msg.to_string()));
        if !(self.match_threshold > 0.0 && self.match_threshold < 1.0) {
            return bad("match_threshold must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.new_track_threshold) {
            return bad("new_track_threshold must be in [0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.cem_gate_threshold) {
            return bad("cem_gate_threshold must be in [-1, 1]");
        }
        if !(0.0..=1.0).contains(&self.embedding_momentum) {
            return bad("embedding_momentum must be in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameAssignment {
    /// `(detection_index, track_id, score)`
    pub matches: Vec<(usize, u64, f64)>,
    /// `(detection_index, track_id)`
    pub new_tracks: Vec<(usize, u64)>,
    pub unmatched_tracks: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackerDiagnostics {
    /// Gate pairs rejected because one class embedding had zero norm.
    pub zero_norm_gate_pairs: usize,
    /// Detections whose class embedding had zero norm at classification.
    pub zero_norm_classifications: usize,
    pub discarded_detections: usize,
}

fn check_dims<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B]) -> Result<(), AssociationError> {
    let mut dims = a.iter().map(|v| v.as_ref().len()).chain(b.iter().map(|v| v.as_ref().len()));
    if let Some(first) = dims.next() {
        if let Some(other) = dims.find(|&d| d != first) {
            return Err(AssociationError::DimensionMismatch(first, other));
        }
    }
    Ok(())
}

/// Average of the detection→track and track→detection softmax over raw dot products.
pub fn bisoftmax_scores<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    det_embs: &[A],
    track_embs: &[B],
) -> Result<Array2<f64>, AssociationError> {
    check_dims(det_embs, track_embs)?;
    let (n, m) = (det_embs.len(), track_embs.len());
    let logits = Array2::from_shape_fn((n, m), |(i, j)| dot(det_embs[i].as_ref(), track_embs[j].as_ref()));

    let mut row = Array2::zeros((n, m));
    for (i, l) in logits.outer_iter().enumerate() {
        let max = l.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = l.iter().map(|&x| (x - max).exp()).sum();
        for j in 0..m {
            row[[i, j]] = (l[j] - max).exp() / sum;
        }
    }
    let mut col = Array2::zeros((n, m));
    for (j, l) in logits.columns().into_iter().enumerate() {
        let max = l.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = l.iter().map(|&x| (x - max).exp()).sum();
        for i in 0..n {
            col[[i, j]] = (l[i] - max).exp() / sum;
        }
    }
    Ok((row + col) * 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub feasible: Array2<bool>,
    pub zero_norm_pairs: usize,
}

/// Pairs whose class embeddings are at least `threshold`-similar in cosine terms.
pub fn cem_gate<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    det_cls_embs: &[A],
    track_cls_embs: &[B],
    threshold: f64,
) -> Result<Gate, AssociationError> {
    check_dims(det_cls_embs, track_cls_embs)?;
    let mut zero_norm_pairs = 0;
    let feasible = Array2::from_shape_fn((det_cls_embs.len(), track_cls_embs.len()), |(i, j)| {
        match cosine_similarity(det_cls_embs[i].as_ref(), track_cls_embs[j].as_ref()) {
            Some(c) => c >= threshold,
            None => {
                zero_norm_pairs += 1;
                false
            }
        }
    });
    Ok(Gate { feasible, zero_norm_pairs })
}

/// Exponential moving average: `(1 - momentum) * old + momentum * det.app_emb`.
pub fn update_embedding(track: &TrackState, det: &Detection, momentum: f64) -> Vec<f64> {
    track
        .app_emb_smoothed
        .iter()
        .zip(&det.app_emb)
        .map(|(old, new)| (1.0 - momentum) * old + momentum * new)
        .collect()
}

/// Owns the track pool for one sequence and advances it frame by frame.
#[derive(Debug, Clone)]
pub struct Tracker<'a> {
    cfg: TrackerConfig,
    bank: Option<&'a CategoryBank>,
    tracks: Vec<TrackState>,
    next_id: u64,
    last_frame: Option<usize>,
    diagnostics: TrackerDiagnostics,
}

impl<'a> Tracker<'a> {
    pub fn new(cfg: TrackerConfig, bank: Option<&'a CategoryBank>) -> Result<Self, AssociationError> {
        cfg.validate()?;
        Ok(Self { cfg, bank, tracks: Vec::new(), next_id: 1, last_frame: None, diagnostics: Default::default() })
    }

    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    pub fn diagnostics(&self) -> TrackerDiagnostics {
        self.diagnostics
    }

    pub fn into_tracks(self) -> Vec<TrackState> {
        self.tracks
    }

    fn classify_into(&mut self, track_idx: usize, det: &Detection) -> Result<(), AssociationError> {
        if let Some(bank) = self.bank {
            let c = classification::classify_detection(&det.cls_emb, bank)?;
            if c.degenerate {
                self.diagnostics.zero_norm_classifications += 1;
            }
            classification::vote(&mut self.tracks[track_idx], c.category_id);
        }
        Ok(())
    }

    pub fn step(&mut self, frame_index: usize, detections: &[Detection]) -> Result<FrameAssignment, AssociationError> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(AssociationError::OutOfOrderFrame { frame: frame_index, last });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame_index != frame_index) {
            return Err(AssociationError::WrongFrame { expected: frame_index, found: d.frame_index });
        }

        let pool: Vec<usize> = (0..self.tracks.len()).filter(|&k| self.tracks[k].status != TrackStatus::Dead).collect();
        let det_app: Vec<&[f64]> = detections.iter().map(|d| d.app_emb.as_slice()).collect();
        let det_cls: Vec<&[f64]> = detections.iter().map(|d| d.cls_emb.as_slice()).collect();
        let trk_app: Vec<&[f64]> = pool.iter().map(|&k| self.tracks[k].app_emb_smoothed.as_slice()).collect();
        let trk_cls: Vec<&[f64]> = pool.iter().map(|&k| self.tracks[k].class_embedding()).collect();

        let scores = bisoftmax_scores(&det_app, &trk_app)?;
        let gate = cem_gate(&det_cls, &trk_cls, self.cfg.cem_gate_threshold)?;
        self.diagnostics.zero_norm_gate_pairs += gate.zero_norm_pairs;
        let feasible = Array2::from_shape_fn(scores.dim(), |(i, j)| {
            gate.feasible[[i, j]] && scores[[i, j]] >= self.cfg.match_threshold
        });
        let pairs = hungarian_max(&scores, &feasible);

        let mut out = FrameAssignment::default();
        let mut det_used = vec![false; detections.len()];
        let mut track_used = vec![false; pool.len()];
        for &(i, j) in &pairs {
            det_used[i] = true;
            track_used[j] = true;
            let k = pool[j];
            let det = &detections[i];
            let smoothed = update_embedding(&self.tracks[k], det, self.cfg.embedding_momentum);
            let track = &mut self.tracks[k];
            track.app_emb_smoothed = smoothed;
            track.observations.push((frame_index, det.clone()));
            track.last_frame = frame_index;
            track.status = TrackStatus::Active;
            out.matches.push((i, track.track_id, scores[[i, j]]));
            self.classify_into(k, det)?;
        }

        for (i, det) in detections.iter().enumerate() {
            if det_used[i] {
                continue;
            }
            if det.objectness >= self.cfg.new_track_threshold {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(TrackState::spawn(id, det.clone()));
                self.classify_into(self.tracks.len() - 1, det)?;
                out.new_tracks.push((i, id));
            } else {
                self.diagnostics.discarded_detections += 1;
            }
        }

        for (j, &k) in pool.iter().enumerate() {
            if track_used[j] {
                continue;
            }
            let track = &mut self.tracks[k];
            out.unmatched_tracks.push(track.track_id);
            track.status = if frame_index - track.last_frame > self.cfg.max_lost_frames {
                TrackStatus::Dead
            } else {
                TrackStatus::Lost
            };
        }

        self.last_frame = Some(frame_index);
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub tracks: Vec<TrackState>,
    pub diagnostics: TrackerDiagnostics,
}

/// Output form of tracker state. With a bank the category is the vote winner and the
/// score its vote fraction; without one both are absent.
pub fn to_track_sequence(meta: &SequenceMeta, tracks: &[TrackState]) -> TrackSequence {
    let tracks = tracks
        .iter()
        .map(|t| TrackRecord {
            track_id: t.track_id,
            category_id: track_label(t).ok(),
            score: vote_fraction(t),
            observations: t
                .observations
                .iter()
                .map(|(frame, d)| Observation { frame: *frame, bbox: d.bbox, mask: d.mask.clone() })
                .collect(),
        })
        .collect();
    TrackSequence { meta: meta.clone(), tracks }
}

/// Steps every frame of a validated sequence in order and returns every track ever spawned.
pub fn run_sequence(
    seq: &ValidatedSequence,
    cfg: &TrackerConfig,
    bank: Option<&CategoryBank>,
) -> Result<SequenceResult, AssociationError> {
    let mut tracker = Tracker::new(cfg.clone(), bank)?;
    for (frame, dets) in seq.frames().into_iter().enumerate() {
        let dets: Vec<Detection> = dets.into_iter().cloned().collect();
        tracker.step(frame, &dets)?;
    }
    let diagnostics = tracker.diagnostics();
    Ok(SequenceResult { tracks: tracker.into_tracks(), diagnostics })
}

/// Tracks every sequence independently, in parallel, keeping input order.
pub fn track_all(
    seqs: &[ValidatedSequence],
    cfg: &TrackerConfig,
    bank: Option<&CategoryBank>,
) -> Result<Vec<(TrackSequence, TrackerDiagnostics)>, AssociationError> {
    seqs.par_iter()
        .map(|seq| {
            let res = run_sequence(seq, cfg, bank)?;
            Ok((to_track_sequence(seq.meta(), &res.tracks), res.diagnostics))
        })
        .collect()
}
