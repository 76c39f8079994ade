//! Seeded synthetic sequences with known answers.
//!
//! Every random quantity comes from one [`SplitMix64`] stream, consumed in this
//! order:
//!
//! 1. Category prototypes, id ascending: `cls_dim` Gaussians each.
//! 2. Tracks, id ascending: width, height, x, y, vx, vy (six uniforms), then
//!    `app_dim` Gaussians for the identity vector.
//! 3. Frames, ascending. For each track: the drop uniform, four box-jitter
//!    Gaussians (x, y, w, h), `app_dim` appearance-noise Gaussians and `cls_dim`
//!    class-noise Gaussians. These are drawn even when the detection is dropped or
//!    the sigma is zero. Then `max(num_tracks, 1)` spurious slots: one uniform
//!    each, and for a slot that fires, width, height, x, y, objectness (five
//!    uniforms) followed by `app_dim` and `cls_dim` Gaussians.
//!
//! Prototype and identity vectors are Gram–Schmidt orthonormalised against the
//! earlier ones while the dimension allows, otherwise just normalised. Identity
//! vectors are then scaled by `app_scale`. Every emitted float is rounded to 9
//! significant digits so that files and in-memory values agree exactly.

mod rng;

pub use rng::SplitMix64;

use thiserror::Error;

use crate::classification::{l2_norm, Category, CategoryBank, Split};
use crate::io::canonical::{round_sig, round_vec};
use crate::mask::RleMask;
use crate::types::{validate_sequence, BBox, Detection, Observation, SequenceMeta, TrackRecord, TrackSequence, ValidatedSequence};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_frames: usize,
    pub num_tracks: usize,
    pub num_categories: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub fraction_common: f64,
    /// Per-observation probability of a missed detection.
    pub p_drop: f64,
    /// Expected spurious detections per frame.
    pub p_fp: f64,
    pub box_jitter_sigma: f64,
    pub app_noise_sigma: f64,
    pub cls_noise_sigma: f64,
    pub app_dim: usize,
    pub cls_dim: usize,
    /// Norm of the per-track identity vectors.
    pub app_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_frames: 50,
            num_tracks: 10,
            num_categories: 8,
            frame_height: 480,
            frame_width: 640,
            fraction_common: 0.5,
            p_drop: 0.0,
            p_fp: 0.0,
            box_jitter_sigma: 0.0,
            app_noise_sigma: 0.0,
            cls_noise_sigma: 0.0,
            app_dim: 32,
            cls_dim: 16,
            app_scale: 4.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid synth config: {0}")]
pub struct SynthError(pub String);

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let positive = [
            ("num_frames", self.num_frames),
            ("num_categories", self.num_categories),
            ("frame_height", self.frame_height),
            ("frame_width", self.frame_width),
            ("app_dim", self.app_dim),
            ("cls_dim", self.cls_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SynthError(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [("fraction_common", self.fraction_common), ("p_drop", self.p_drop), ("p_fp", self.p_fp)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError(format!("{name} must be in [0, 1]")));
            }
        }
        for (name, v) in [
            ("box_jitter_sigma", self.box_jitter_sigma),
            ("app_noise_sigma", self.app_noise_sigma),
            ("cls_noise_sigma", self.cls_noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SynthError(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.app_scale.is_finite() && self.app_scale > 0.0) {
            return Err(SynthError("app_scale must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn sequence_name(&self) -> String {
        format!("synth_{}", self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub gt: TrackSequence,
    pub detections: ValidatedSequence,
    pub bank: CategoryBank,
}

/// Unit vector from `dim` fresh Gaussians, orthogonalised against `basis` when
/// that still leaves room.
fn basis_vector(rng: &mut SplitMix64, dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut v = rng.gaussian_vec(dim);
    if basis.len() < dim {
        for b in basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
    }
    let n = l2_norm(&v);
    if n > 1e-12 {
        v.iter_mut().for_each(|x| *x /= n);
    } else {
        v = vec![0.0; dim];
        v[basis.len() % dim] = 1.0;
    }
    v
}

fn unit_random(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    basis_vector(rng, dim, &[])
}

/// Side length in `[0.1, 0.3]` of the frame, at least one pixel.
fn side(rng: &mut SplitMix64, limit: usize) -> f64 {
    (limit as f64 * rng.uniform_in(0.1, 0.3)).round().clamp(1.0, limit as f64)
}

struct TrackSpec {
    category: u64,
    w: f64,
    h: f64,
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    identity: Vec<f64>,
}

impl TrackSpec {
    fn box_at(&self, frame: usize, width: usize, height: usize) -> BBox {
        let f = frame as f64;
        let x = (self.x0 + self.vx * f).round().clamp(0.0, width as f64 - self.w);
        let y = (self.y0 + self.vy * f).round().clamp(0.0, height as f64 - self.h);
        BBox::new(x, y, self.w, self.h)
    }
}

fn jitter(b: &BBox, noise: [f64; 4], width: usize, height: usize) -> BBox {
    let w = (b.w + noise[2]).round().clamp(1.0, width as f64);
    let h = (b.h + noise[3]).round().clamp(1.0, height as f64);
    let x = (b.x + noise[0]).round().clamp(0.0, width as f64 - w);
    let y = (b.y + noise[1]).round().clamp(0.0, height as f64 - h);
    BBox::new(x, y, w, h)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData, SynthError> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(cfg.seed);
    let (fh, fw) = (cfg.frame_height, cfg.frame_width);

    let n_common = (cfg.fraction_common * cfg.num_categories as f64).round() as usize;
    let mut protos: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_categories);
    let mut bank = CategoryBank::new();
    for c in 0..cfg.num_categories {
        let p = basis_vector(&mut rng, cfg.cls_dim, &protos);
        let id = c as u64 + 1;
        let split = if c < n_common { Split::Common } else { Split::Uncommon };
        bank.insert(id, Category { name: format!("category_{id}"), split, prototype: Some(round_vec(&p)) })
            .map_err(|e| SynthError(format!("generated bank rejected: {e}")))?;
        protos.push(p);
    }
    let protos: Vec<Vec<f64>> = protos.iter().map(|p| round_vec(p)).collect();

    let mut identities: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_tracks);
    let mut specs = Vec::with_capacity(cfg.num_tracks);
    for t in 0..cfg.num_tracks {
        let w = side(&mut rng, fw);
        let h = side(&mut rng, fh);
        let x0 = (rng.uniform() * (fw as f64 - w)).round();
        let y0 = (rng.uniform() * (fh as f64 - h)).round();
        let vx = rng.uniform_in(-2.0, 2.0);
        let vy = rng.uniform_in(-2.0, 2.0);
        let unit = basis_vector(&mut rng, cfg.app_dim, &identities);
        let identity = round_vec(&unit.iter().map(|x| x * cfg.app_scale).collect::<Vec<_>>());
        identities.push(unit);
        specs.push(TrackSpec { category: 1 + (t % cfg.num_categories) as u64, w, h, x0, y0, vx, vy, identity });
    }

    let mut gt_obs: Vec<Vec<Observation>> = vec![Vec::with_capacity(cfg.num_frames); cfg.num_tracks];
    let mut detections = Vec::new();
    let slots = cfg.num_tracks.max(1);
    let p_slot = cfg.p_fp / slots as f64;
    for f in 0..cfg.num_frames {
        for (t, spec) in specs.iter().enumerate() {
            let gt_box = spec.box_at(f, fw, fh);
            gt_obs[t].push(Observation { frame: f, bbox: gt_box, mask: Some(RleMask::from_box(fh, fw, &gt_box)) });

            let u_drop = rng.uniform();
            let mut noise = [0.0; 4];
            noise.iter_mut().for_each(|n| *n = cfg.box_jitter_sigma * rng.gaussian());
            let app: Vec<f64> =
                spec.identity.iter().map(|&v| v + cfg.app_noise_sigma * rng.gaussian()).collect();
            let proto = &protos[(spec.category - 1) as usize];
            let cls: Vec<f64> = proto.iter().map(|&v| v + cfg.cls_noise_sigma * rng.gaussian()).collect();
            if u_drop < cfg.p_drop {
                continue;
            }
            let b = jitter(&gt_box, noise, fw, fh);
            detections.push(Detection {
                frame_index: f,
                bbox: b,
                mask: Some(RleMask::from_box(fh, fw, &b)),
                objectness: 0.95,
                app_emb: round_vec(&app),
                cls_emb: round_vec(&cls),
            });
        }
        for _ in 0..slots {
            if rng.uniform() >= p_slot {
                continue;
            }
            let w = side(&mut rng, fw);
            let h = side(&mut rng, fh);
            let x = (rng.uniform() * (fw as f64 - w)).round();
            let y = (rng.uniform() * (fh as f64 - h)).round();
            let objectness = round_sig(rng.uniform_in(0.3, 0.8));
            let app = unit_random(&mut rng, cfg.app_dim);
            let cls = unit_random(&mut rng, cfg.cls_dim);
            let b = BBox::new(x, y, w, h);
            detections.push(Detection {
                frame_index: f,
                bbox: b,
                mask: Some(RleMask::from_box(fh, fw, &b)),
                objectness,
                app_emb: round_vec(&app),
                cls_emb: round_vec(&cls),
            });
        }
    }

    let meta = SequenceMeta { name: cfg.sequence_name(), height: fh, width: fw, num_frames: cfg.num_frames };
    let tracks = specs
        .iter()
        .zip(gt_obs)
        .enumerate()
        .map(|(t, (spec, observations))| TrackRecord {
            track_id: t as u64 + 1,
            category_id: Some(spec.category),
            score: None,
            observations,
        })
        .collect();
    let gt = TrackSequence { meta: meta.clone(), tracks };
    let detections = validate_sequence(meta, detections).map_err(|v| {
        SynthError(format!("generated detections failed validation: {}", v.first().map(|x| x.to_string()).unwrap_or_default()))
    })?;
    Ok(SynthData { gt, detections, bank })
}

/// Offset applied to every track id by [`perfect_tracker`].
pub const PERFECT_ID_OFFSET: u64 = 1000;

/// Predictions equal to the ground truth, ids shifted by [`PERFECT_ID_OFFSET`],
/// score 1.
pub fn perfect_tracker(gt: &TrackSequence) -> TrackSequence {
    TrackSequence {
        meta: gt.meta.clone(),
        tracks: gt
            .tracks
            .iter()
            .map(|t| TrackRecord {
                track_id: t.track_id + PERFECT_ID_OFFSET,
                category_id: t.category_id,
                score: Some(1.0),
                observations: t.observations.clone(),
            })
            .collect(),
    }
}
