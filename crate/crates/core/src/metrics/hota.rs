//! Per-threshold HOTA machinery for one evaluation pool: similarity
//! precomputation, the two-pass frame matching, and association scores.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::assignment::hungarian_max;
use crate::mask::{box_iou, mask_iou, mask_to_box};
use crate::types::{BBox, Observation, TrackRecord};

use super::Geometry;

/// Weight of the per-frame similarity relative to the global alignment score
/// in the second matching pass.
pub const TIE_BREAK_WEIGHT: f64 = 1.0 / 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct FrameSims {
    pub frame: usize,
    /// Pool indices of gt tracks present in this frame.
    pub gt: Vec<usize>,
    /// Pool indices of predicted tracks present in this frame.
    pub pred: Vec<usize>,
    pub sim: Array2<f64>,
}

/// Localization similarities between every gt and predicted observation that
/// share a frame, computed once and reused for every alpha.
#[derive(Debug, Clone)]
pub struct PoolSims {
    pub(crate) gt_len: Vec<usize>,
    pub(crate) pred_len: Vec<usize>,
    pub(crate) frames: Vec<FrameSims>,
    /// Pairs scored by box IoU because a mask was missing in mask mode.
    pub box_fallback_pairs: usize,
}

fn obs_bounds(o: &Observation) -> BBox {
    o.mask.as_ref().map(mask_to_box).unwrap_or(o.bbox)
}

fn overlaps(a: &BBox, b: &BBox) -> bool {
    a.x < b.right() && b.x < a.right() && a.y < b.bottom() && b.y < a.bottom()
}

impl PoolSims {
    pub fn new(gt: &[&TrackRecord], pred: &[&TrackRecord], geometry: Geometry) -> Self {
        type Entry<'a> = (usize, &'a Observation, BBox);
        let mut by_frame: BTreeMap<usize, (Vec<Entry>, Vec<Entry>)> = BTreeMap::new();
        for (k, t) in gt.iter().enumerate() {
            for o in &t.observations {
                by_frame.entry(o.frame).or_default().0.push((k, o, obs_bounds(o)));
            }
        }
        for (k, t) in pred.iter().enumerate() {
            for o in &t.observations {
                by_frame.entry(o.frame).or_default().1.push((k, o, obs_bounds(o)));
            }
        }

        let mut box_fallback_pairs = 0;
        let frames = by_frame
            .into_iter()
            .map(|(frame, (g, p))| {
                let sim = Array2::from_shape_fn((g.len(), p.len()), |(a, b)| {
                    let (go, po) = (g[a].1, p[b].1);
                    match (geometry, &go.mask, &po.mask) {
                        (Geometry::Mask, Some(gm), Some(pm)) if gm.size() == pm.size() => {
                            if overlaps(&g[a].2, &p[b].2) {
                                mask_iou(gm, pm).unwrap_or(0.0)
                            } else {
                                0.0
                            }
                        }
                        (Geometry::Mask, _, _) => {
                            box_fallback_pairs += 1;
                            box_iou(&go.bbox, &po.bbox)
                        }
                        (Geometry::Box, _, _) => box_iou(&go.bbox, &po.bbox),
                    }
                });
                FrameSims { frame, gt: g.iter().map(|e| e.0).collect(), pred: p.iter().map(|e| e.0).collect(), sim }
            })
            .collect();

        Self {
            gt_len: gt.iter().map(|t| t.len()).collect(),
            pred_len: pred.iter().map(|t| t.len()).collect(),
            frames,
            box_fallback_pairs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruePositive {
    pub gt: usize,
    pub pred: usize,
    pub frame: usize,
    pub sim: f64,
}

/// Outcome of matching one pool at one alpha; indices refer to pool positions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatching {
    pub tp: Vec<TruePositive>,
    /// `(gt, frame)`
    pub fn_: Vec<(usize, usize)>,
    /// `(pred, frame)`
    pub fp: Vec<(usize, usize)>,
}

/// Global alignment `C / (T_g + T_p - C)` with `C` the number of frames at or
/// above `alpha`.
pub(crate) fn global_alignment(sims: &PoolSims, alpha: f64) -> Array2<f64> {
    let mut hits = Array2::<u32>::zeros((sims.gt_len.len(), sims.pred_len.len()));
    for f in &sims.frames {
        for ((a, b), &s) in f.sim.indexed_iter() {
            if s >= alpha {
                hits[[f.gt[a], f.pred[b]]] += 1;
            }
        }
    }
    Array2::from_shape_fn(hits.dim(), |(g, p)| {
        let c = hits[[g, p]] as f64;
        if c == 0.0 {
            0.0
        } else {
            c / (sims.gt_len[g] as f64 + sims.pred_len[p] as f64 - c)
        }
    })
}

pub fn match_pool(sims: &PoolSims, alpha: f64) -> FrameMatching {
    let glob = global_alignment(sims, alpha);
    let mut out = FrameMatching::default();
    for f in &sims.frames {
        let feasible = f.sim.mapv(|s| s >= alpha);
        let weights = Array2::from_shape_fn(f.sim.dim(), |(a, b)| {
            glob[[f.gt[a], f.pred[b]]] + f.sim[[a, b]] * TIE_BREAK_WEIGHT
        });
        let pairs = hungarian_max(&weights, &feasible);
        let mut gt_hit = vec![false; f.gt.len()];
        let mut pred_hit = vec![false; f.pred.len()];
        for (a, b) in pairs {
            gt_hit[a] = true;
            pred_hit[b] = true;
            out.tp.push(TruePositive { gt: f.gt[a], pred: f.pred[b], frame: f.frame, sim: f.sim[[a, b]] });
        }
        out.fn_.extend(f.gt.iter().zip(&gt_hit).filter(|(_, &h)| !h).map(|(&g, _)| (g, f.frame)));
        out.fp.extend(f.pred.iter().zip(&pred_hit).filter(|(_, &h)| !h).map(|(&p, _)| (p, f.frame)));
    }
    out
}

/// Two-pass frame matching of one evaluation pool at threshold `alpha`.
pub fn match_frames(gt: &[&TrackRecord], pred: &[&TrackRecord], alpha: f64, geometry: Geometry) -> FrameMatching {
    match_pool(&PoolSims::new(gt, pred, geometry), alpha)
}

/// Additive per-alpha tallies; ratios are formed only after accumulation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AlphaCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    /// Sum over true positives of the association Jaccard.
    pub ass_sum: f64,
    /// Sum over true positives of localization similarity.
    pub loc_sum: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl AlphaCounts {
    pub fn merge(&mut self, o: &AlphaCounts) {
        self.tp += o.tp;
        self.fn_ += o.fn_;
        self.fp += o.fp;
        self.ass_sum += o.ass_sum;
        self.loc_sum += o.loc_sum;
    }

    pub fn det_a(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_ + self.fp) as f64)
    }

    pub fn det_re(&self) -> f64 {
        ratio(self.tp as f64, (self.tp + self.fn_) as f64)
    }

    pub fn ass_a(&self) -> f64 {
        ratio(self.ass_sum, self.tp as f64)
    }

    pub fn loc_a(&self) -> f64 {
        ratio(self.loc_sum, self.tp as f64)
    }

    pub fn hota(&self) -> f64 {
        (self.det_a() * self.ass_a()).sqrt()
    }

    pub fn owta(&self) -> f64 {
        (self.det_re() * self.ass_a()).sqrt()
    }
}

/// Splits a matching into per-group tallies, the group of every gt track
/// given by `gt_group`. False positives have no gt track and are attributed to
/// `fp_group` when provided.
pub(crate) fn tally<K: Ord + Copy>(
    sims: &PoolSims,
    m: &FrameMatching,
    gt_group: impl Fn(usize) -> K,
    fp_group: Option<K>,
) -> BTreeMap<K, AlphaCounts> {
    let mut tpa = BTreeMap::<(usize, usize), u64>::new();
    for tp in &m.tp {
        *tpa.entry((tp.gt, tp.pred)).or_default() += 1;
    }
    let mut out: BTreeMap<K, AlphaCounts> = BTreeMap::new();
    for tp in &m.tp {
        let n = tpa[&(tp.gt, tp.pred)] as f64;
        let a = n / (sims.gt_len[tp.gt] as f64 + sims.pred_len[tp.pred] as f64 - n);
        let c = out.entry(gt_group(tp.gt)).or_default();
        c.tp += 1;
        c.ass_sum += a;
        c.loc_sum += tp.sim;
    }
    for &(g, _) in &m.fn_ {
        out.entry(gt_group(g)).or_default().fn_ += 1;
    }
    if let Some(k) = fp_group {
        out.entry(k).or_default().fp += m.fp.len() as u64;
    }
    out
}

/// Scores for one pool at one alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaScores {
    /// DetA in closed mode, DetRe in open mode.
    pub det: f64,
    pub ass: f64,
    /// HOTA in closed mode, OWTA in open mode.
    pub combined: f64,
    pub counts: AlphaCounts,
}

pub fn hota_alpha(
    gt: &[&TrackRecord],
    pred: &[&TrackRecord],
    alpha: f64,
    mode: super::Mode,
    geometry: Geometry,
) -> AlphaScores {
    let sims = PoolSims::new(gt, pred, geometry);
    let m = match_pool(&sims, alpha);
    let counts = tally(&sims, &m, |_| (), Some(())).remove(&()).unwrap_or_default();
    scores_from(counts, mode)
}

pub(crate) fn scores_from(counts: AlphaCounts, mode: super::Mode) -> AlphaScores {
    match mode {
        super::Mode::Closed => AlphaScores { det: counts.det_a(), ass: counts.ass_a(), combined: counts.hota(), counts },
        super::Mode::Open => AlphaScores { det: counts.det_re(), ass: counts.ass_a(), combined: counts.owta(), counts },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Mode;

    fn track(id: u64, boxes: &[(usize, f64)]) -> TrackRecord {
        // (frame, x) with 10x10 boxes on a shared row
        TrackRecord {
            track_id: id,
            category_id: Some(1),
            score: None,
            observations: boxes
                .iter()
                .map(|&(frame, x)| Observation { frame, bbox: BBox::new(x, 0.0, 10.0, 10.0), mask: None })
                .collect(),
        }
    }

    #[test]
    fn identical_track_is_all_tp() {
        let g = track(1, &[(0, 0.0), (1, 5.0), (2, 9.0)]);
        for alpha in [0.05, 0.5, 0.95] {
            let m = match_frames(&[&g], &[&g], alpha, Geometry::Box);
            assert_eq!(m.tp.len(), 3);
            assert!(m.fn_.is_empty() && m.fp.is_empty());
        }
    }

    #[test]
    fn threshold_decides_tp() {
        // x-offset 2.5 on width 10: IoU = 7.5 / 12.5 = 0.6
        let g = track(1, &[(0, 0.0)]);
        let p = track(2, &[(0, 2.5)]);
        let m = match_frames(&[&g], &[&p], 0.5, Geometry::Box);
        assert_eq!(m.tp.len(), 1);
        assert!((m.tp[0].sim - 0.6).abs() < 1e-12);
        let m = match_frames(&[&g], &[&p], 0.75, Geometry::Box);
        assert_eq!((m.tp.len(), m.fn_.len(), m.fp.len()), (0, 1, 1));
    }

    #[test]
    fn global_alignment_dominates_frame_iou() {
        // gt over 5 frames; p_long follows it all 5 frames, p_short only in frame 4.
        let g = track(1, &[(0, 0.0), (1, 0.0), (2, 0.0), (3, 0.0), (4, 0.0)]);
        let off = 10.0 / 19.0 * 1.0; // IoU 0.9 : overlap 10 - d over 10 + d => d = 10/19
        let long = track(2, &[(0, off), (1, off), (2, off), (3, off), (4, off)]);
        let short = track(3, &[(4, -off)]);
        let m = match_frames(&[&g], &[&short, &long], 0.5, Geometry::Box);
        assert!((m.tp[0].sim - 0.9).abs() < 1e-12);
        let frame4: Vec<_> = m.tp.iter().filter(|t| t.frame == 4).collect();
        assert_eq!(frame4.len(), 1);
        assert_eq!(frame4[0].pred, 1, "the 5-frame candidate wins frame 4");
        assert_eq!(m.fp, vec![(0, 4)]);
    }

    #[test]
    fn perfect_match() {
        let g = track(1, &[(0, 0.0), (1, 0.0)]);
        let s = hota_alpha(&[&g], &[&g], 0.5, Mode::Closed, Geometry::Box);
        assert_eq!((s.det, s.ass, s.combined), (1.0, 1.0, 1.0));
    }

    #[test]
    fn id_switch_and_false_positives() {
        let g = track(1, &[(0, 0.0), (1, 0.0)]);
        let p1 = track(11, &[(0, 0.0)]);
        let p2 = track(12, &[(1, 0.0)]);
        let s = hota_alpha(&[&g], &[&p1, &p2], 0.5, Mode::Closed, Geometry::Box);
        assert_eq!(s.det, 1.0);
        assert_eq!(s.ass, 0.5);
        assert!((s.combined - 0.5f64.sqrt()).abs() < 1e-12);

        let fp = track(13, &[(0, 50.0), (1, 50.0)]);
        let closed = hota_alpha(&[&g], &[&p1, &p2, &fp], 0.5, Mode::Closed, Geometry::Box);
        assert_eq!(closed.det, 0.5);
        assert!((closed.combined - 0.5).abs() < 1e-12);
        let open = hota_alpha(&[&g], &[&p1, &p2, &fp], 0.5, Mode::Open, Geometry::Box);
        assert_eq!(open.det, 1.0);
        assert!((open.combined - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_sides() {
        let g = track(1, &[(0, 0.0)]);
        let s = hota_alpha(&[&g], &[], 0.5, Mode::Closed, Geometry::Box);
        assert_eq!((s.det, s.ass, s.combined), (0.0, 0.0, 0.0));
        let s = hota_alpha(&[], &[], 0.5, Mode::Open, Geometry::Box);
        assert_eq!(s.combined, 0.0);
    }

    #[test]
    fn mask_mode_falls_back_to_boxes() {
        let g = track(1, &[(0, 0.0)]);
        let sims = PoolSims::new(&[&g], &[&g], Geometry::Mask);
        assert_eq!(sims.box_fallback_pairs, 1);
        assert_eq!(sims.frames[0].sim[[0, 0]], 1.0);
    }
}
