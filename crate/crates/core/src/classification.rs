//! Category assignment by nearest class prototype and per-track voting.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::types::TrackState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Common,
    Uncommon,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Common => "common",
            Split::Uncommon => "uncommon",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    pub name: String,
    pub split: Split,
    /// Unit-norm class prototype. Optional for evaluation-only banks.
    pub prototype: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BankError {
    #[error("duplicate category id {0}")]
    DuplicateId(u64),
    #[error("category {id}: prototype has dimension {found}, expected {expected}")]
    DimensionMismatch { id: u64, expected: usize, found: usize },
    #[error("category {id}: prototype norm {norm} is not within 1e-6 of 1")]
    NotUnitNorm { id: u64, norm: f64 },
    #[error("category {0}: prototype contains a non-finite component")]
    NonFinite(u64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("category bank is empty")]
    EmptyBank,
    #[error("category {0} has no prototype")]
    MissingPrototype(u64),
    #[error("class embedding has dimension {found}, bank prototypes have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unlabeled track")]
    UnlabeledTrack,
}

/// Category id → name, split and prototype.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryBank {
    entries: BTreeMap<u64, Category>,
    dim: Option<usize>,
}

pub const PROTOTYPE_NORM_TOLERANCE: f64 = 1e-6;

impl CategoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u64, category: Category) -> Result<(), BankError> {
        if self.entries.contains_key(&id) {
            return Err(BankError::DuplicateId(id));
        }
        if let Some(p) = &category.prototype {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(BankError::NonFinite(id));
            }
            if let Some(expected) = self.dim {
                if p.len() != expected {
                    return Err(BankError::DimensionMismatch { id, expected, found: p.len() });
                }
            }
            let norm = l2_norm(p);
            if (norm - 1.0).abs() > PROTOTYPE_NORM_TOLERANCE {
                return Err(BankError::NotUnitNorm { id, norm });
            }
            self.dim = Some(p.len());
        }
        self.entries.insert(id, category);
        Ok(())
    }

    pub fn get(&self, id: u64) -> Option<&Category> {
        self.entries.get(&id)
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn split_of(&self, id: u64) -> Option<Split> {
        self.entries.get(&id).map(|c| c.split)
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &Category)> {
        self.entries.iter().map(|(&id, c)| (id, c))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prototype_dim(&self) -> Option<usize> {
        self.dim
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, `None` when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot(a, b) / (na * nb))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub category_id: u64,
    pub similarity: f64,
    /// The embedding had zero norm and the fallback category was returned.
    pub degenerate: bool,
}

/// Nearest prototype by cosine similarity, ties to the smallest category id.
pub fn classify_detection(cls_emb: &[f64], bank: &CategoryBank) -> Result<Classification, ClassifyError> {
    let mut best: Option<(u64, f64)> = None;
    let norm = l2_norm(cls_emb);
    let first = bank.entries.keys().next().copied().ok_or(ClassifyError::EmptyBank)?;
    for (&id, cat) in &bank.entries {
        let proto = cat.prototype.as_ref().ok_or(ClassifyError::MissingPrototype(id))?;
        if proto.len() != cls_emb.len() {
            return Err(ClassifyError::DimensionMismatch { expected: proto.len(), found: cls_emb.len() });
        }
        if norm == 0.0 {
            continue;
        }
        let sim = dot(cls_emb, proto) / (norm * l2_norm(proto));
        if best.is_none_or(|(_, s)| sim > s) {
            best = Some((id, sim));
        }
    }
    Ok(match best {
        Some((category_id, similarity)) => Classification { category_id, similarity, degenerate: false },
        None => Classification { category_id: first, similarity: 0.0, degenerate: true },
    })
}

pub fn vote(track: &mut TrackState, category_id: u64) {
    *track.category_votes.entry(category_id).or_insert(0) += 1;
}

fn winner(votes: &BTreeMap<u64, u32>) -> Option<(u64, u32)> {
    // BTreeMap iterates ascending, so a strict `>` keeps the smallest id on ties.
    votes.iter().fold(None, |best, (&id, &n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ if n == 0 => best,
        _ => Some((id, n)),
    })
}

/// Majority category over all votes, ties to the smallest category id.
pub fn track_label(track: &TrackState) -> Result<u64, ClassifyError> {
    winner(&track.category_votes).map(|(id, _)| id).ok_or(ClassifyError::UnlabeledTrack)
}

/// Share of votes held by the winning category.
pub fn vote_fraction(track: &TrackState) -> Option<f64> {
    let total: u32 = track.category_votes.values().sum();
    winner(&track.category_votes).map(|(_, n)| n as f64 / total as f64)
}
