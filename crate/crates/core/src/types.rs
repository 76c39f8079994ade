//! Shared domain vocabulary: boxes, detections, tracks and sequences.

use std::collections::BTreeMap;
use std::fmt;

use crate::mask::RleMask;

/// Axis-aligned box in continuous pixel coordinates, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const EMPTY: BBox = BBox { x: 0.0, y: 0.0, w: 0.0, h: 0.0 };

    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w >= 0.0 && self.h >= 0.0
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

/// One class-agnostic observation produced by the detector for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BBox,
    pub mask: Option<RleMask>,
    /// Binary object/not-object confidence.
    pub objectness: f64,
    /// Appearance embedding used for association.
    pub app_emb: Vec<f64>,
    /// Class-exemplar embedding used for gating and labeling.
    pub cls_emb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMeta {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub num_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrackStatus {
    Active,
    Lost,
    Dead,
}

/// A track maintained by the association loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub track_id: u64,
    pub category_votes: BTreeMap<u64, u32>,
    pub app_emb_smoothed: Vec<f64>,
    pub last_frame: usize,
    pub observations: Vec<(usize, Detection)>,
    pub status: TrackStatus,
}

impl TrackState {
    pub fn spawn(track_id: u64, det: Detection) -> Self {
        Self {
            track_id,
            category_votes: BTreeMap::new(),
            app_emb_smoothed: det.app_emb.clone(),
            last_frame: det.frame_index,
            observations: vec![(det.frame_index, det)],
            status: TrackStatus::Active,
        }
    }

    /// Class embedding used for gating: the most recent observation's.
    pub fn class_embedding(&self) -> &[f64] {
        self.observations.last().map(|(_, d)| d.cls_emb.as_slice()).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtAnnotation {
    pub track_id: u64,
    pub category_id: u64,
    pub frame_index: usize,
    pub bbox: BBox,
    pub mask: Option<RleMask>,
}

/// One per-frame observation of a ground-truth or predicted track.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub frame: usize,
    pub bbox: BBox,
    pub mask: Option<RleMask>,
}

/// A track as stored in a tracks file, used for both ground truth and predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub track_id: u64,
    pub category_id: Option<u64>,
    pub score: Option<f64>,
    pub observations: Vec<Observation>,
}

impl TrackRecord {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Flattens the track into per-frame ground-truth annotations.
    pub fn annotations(&self) -> Option<Vec<GtAnnotation>> {
        let category_id = self.category_id?;
        Some(
            self.observations
                .iter()
                .map(|o| GtAnnotation {
                    track_id: self.track_id,
                    category_id,
                    frame_index: o.frame,
                    bbox: o.bbox,
                    mask: o.mask.clone(),
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSequence {
    pub meta: SequenceMeta,
    pub tracks: Vec<TrackRecord>,
}

/// A single contract violation found while validating a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Index of the offending detection, `None` for sequence-level problems.
    pub detection: Option<usize>,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    InvalidMeta(String),
    EmbeddingDimensionMismatch { field: &'static str, expected: usize, found: usize },
    NonFiniteEmbedding { field: &'static str },
    MaskSizeMismatch { expected: (usize, usize), found: (usize, usize) },
    MalformedMask(String),
    ObjectnessOutOfRange(f64),
    FrameIndexOutOfRange { index: usize, num_frames: usize },
    InvalidBox([f64; 4]),
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::InvalidMeta(msg) => write!(f, "invalid sequence metadata: {msg}"),
            ViolationKind::EmbeddingDimensionMismatch { field, expected, found } => {
                write!(f, "embedding dimension mismatch: {field} has {found} components, expected {expected}")
            }
            ViolationKind::NonFiniteEmbedding { field } => write!(f, "{field} contains a non-finite component"),
            ViolationKind::MaskSizeMismatch { expected, found } => write!(
                f,
                "mask size {}x{} does not match sequence size {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            ViolationKind::MalformedMask(msg) => write!(f, "malformed mask: {msg}"),
            ViolationKind::ObjectnessOutOfRange(v) => write!(f, "objectness out of range: {v}"),
            ViolationKind::FrameIndexOutOfRange { index, num_frames } => {
                write!(f, "frame index out of range: {index} >= {num_frames}")
            }
            ViolationKind::InvalidBox(b) => write!(f, "invalid box {b:?}: coordinates must be finite, w and h non-negative"),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.detection {
            Some(i) => write!(f, "detection {i}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// A sequence whose detections all satisfy the data contract. Only obtainable
/// through [`validate_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSequence {
    meta: SequenceMeta,
    detections: Vec<Detection>,
    app_dim: Option<usize>,
    cls_dim: Option<usize>,
}

impl ValidatedSequence {
    pub fn meta(&self) -> &SequenceMeta {
        &self.meta
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn app_dim(&self) -> Option<usize> {
        self.app_dim
    }

    pub fn cls_dim(&self) -> Option<usize> {
        self.cls_dim
    }

    /// Detections grouped by frame, one (possibly empty) slot per frame.
    pub fn frames(&self) -> Vec<Vec<&Detection>> {
        let mut frames = vec![Vec::new(); self.meta.num_frames];
        for det in &self.detections {
            frames[det.frame_index].push(det);
        }
        frames
    }

    pub fn into_parts(self) -> (SequenceMeta, Vec<Detection>) {
        (self.meta, self.detections)
    }
}

pub fn validate_meta(meta: &SequenceMeta) -> Vec<Violation> {
    let mut out = Vec::new();
    for (label, v) in [("height", meta.height), ("width", meta.width), ("num_frames", meta.num_frames)] {
        if v < 1 {
            out.push(Violation { detection: None, kind: ViolationKind::InvalidMeta(format!("{label} must be >= 1")) });
        }
    }
    out
}

/// Checks every detection against the data contract and returns either the
/// validated sequence or the complete list of violations.
pub fn validate_sequence(meta: SequenceMeta, detections: Vec<Detection>) -> Result<ValidatedSequence, Vec<Violation>> {
    let mut violations = validate_meta(&meta);
    let app_dim = detections.first().map(|d| d.app_emb.len());
    let cls_dim = detections.first().map(|d| d.cls_emb.len());

    for (i, det) in detections.iter().enumerate() {
        let mut push = |kind| violations.push(Violation { detection: Some(i), kind });
        if !(0.0..=1.0).contains(&det.objectness) {
            push(ViolationKind::ObjectnessOutOfRange(det.objectness));
        }
        if det.frame_index >= meta.num_frames {
            push(ViolationKind::FrameIndexOutOfRange { index: det.frame_index, num_frames: meta.num_frames });
        }
        if !det.bbox.is_valid() {
            push(ViolationKind::InvalidBox(det.bbox.to_array()));
        }
        if let Some(expected) = app_dim {
            if det.app_emb.len() != expected {
                push(ViolationKind::EmbeddingDimensionMismatch { field: "app_emb", expected, found: det.app_emb.len() });
            }
        }
        if let Some(expected) = cls_dim {
            if det.cls_emb.len() != expected {
                push(ViolationKind::EmbeddingDimensionMismatch { field: "cls_emb", expected, found: det.cls_emb.len() });
            }
        }
        if det.app_emb.iter().any(|v| !v.is_finite()) {
            push(ViolationKind::NonFiniteEmbedding { field: "app_emb" });
        }
        if det.cls_emb.iter().any(|v| !v.is_finite()) {
            push(ViolationKind::NonFiniteEmbedding { field: "cls_emb" });
        }
        if let Some(mask) = &det.mask {
            let found = (mask.height(), mask.width());
            if found != (meta.height, meta.width) {
                push(ViolationKind::MaskSizeMismatch { expected: (meta.height, meta.width), found });
            }
            if let Err(e) = mask.check() {
                push(ViolationKind::MalformedMask(e.to_string()));
            }
        }
    }

    if violations.is_empty() {
        Ok(ValidatedSequence { meta, detections, app_dim, cls_dim })
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> SequenceMeta {
        SequenceMeta { name: "s".into(), height: 4, width: 4, num_frames: 3 }
    }

    fn det(frame: usize, objectness: f64, da: usize) -> Detection {
        Detection {
            frame_index: frame,
            bbox: BBox::new(0.0, 0.0, 2.0, 2.0),
            mask: None,
            objectness,
            app_emb: vec![1.0; da],
            cls_emb: vec![1.0; 2],
        }
    }

    #[test]
    fn empty_sequence_is_valid() {
        let seq = validate_sequence(meta(), vec![]).unwrap();
        assert!(seq.detections().is_empty());
        assert_eq!(seq.frames().len(), 3);
    }

    #[test]
    fn objectness_out_of_range_is_reported() {
        let errs = validate_sequence(meta(), vec![det(0, 1.5, 4)]).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("objectness out of range"));
    }

    #[test]
    fn embedding_dimension_mismatch_is_reported() {
        let errs = validate_sequence(meta(), vec![det(0, 0.5, 4), det(1, 0.5, 8)]).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].detection, Some(1));
        assert!(errs[0].to_string().contains("embedding dimension mismatch"));
    }

    #[test]
    fn all_violations_are_collected() {
        let mut bad = det(7, -0.1, 4);
        bad.mask = Some(RleMask::from_counts(2, 2, vec![4]).unwrap());
        bad.bbox.w = -1.0;
        let errs = validate_sequence(meta(), vec![bad]).unwrap_err();
        let kinds: Vec<_> = errs.iter().map(|v| &v.kind).collect();
        assert_eq!(kinds.len(), 4);
        assert!(matches!(kinds[0], ViolationKind::ObjectnessOutOfRange(_)));
        assert!(matches!(kinds[1], ViolationKind::FrameIndexOutOfRange { index: 7, num_frames: 3 }));
        assert!(matches!(kinds[2], ViolationKind::InvalidBox(_)));
        assert!(matches!(kinds[3], ViolationKind::MaskSizeMismatch { .. }));
    }

    #[test]
    fn invalid_meta_rejected() {
        let m = SequenceMeta { name: "x".into(), height: 0, width: 3, num_frames: 0 };
        let errs = validate_sequence(m, vec![]).unwrap_err();
        assert_eq!(errs.len(), 2);
    }
}
