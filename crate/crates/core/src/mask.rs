//! Run-length encoded binary masks.
//!
//! Runs alternate over the column-major pixel scan and always start with a
//! (possibly empty) run of zeros, the same layout COCO and BURST use for
//! uncompressed RLE. IoU is computed by merging the two run lists directly.

use thiserror::Error;

use crate::types::BBox;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("run lengths sum to {actual} pixels, expected {expected} ({height}x{width})")]
    PixelCountMismatch { expected: u64, actual: u64, height: usize, width: usize },
    #[error("zero-length run at position {0} (only the leading run may be empty)")]
    InteriorZeroRun(usize),
    #[error("mask sizes differ: {a:?} vs {b:?}")]
    SizeMismatch { a: (usize, usize), b: (usize, usize) },
}

/// Binary grid stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![false; height * width] }
    }

    /// Builds a bitmap from row-major nested rows. All rows must have equal length.
    pub fn from_rows(rows: &[Vec<bool>]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let mut bm = Self::new(height, width);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), width, "ragged rows");
            for (c, &v) in row.iter().enumerate() {
                bm.set(r, c, v);
            }
        }
        bm
    }

    /// Builds a bitmap from pixels listed in column-major order.
    pub fn from_column_major(height: usize, width: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), height * width);
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[col * self.height + row]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[col * self.height + row] = value;
    }

    pub fn column_major(&self) -> &[bool] {
        &self.data
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|&&v| v).count() as u64
    }
}

/// Accumulates runs, merging consecutive runs of the same value.
struct RunBuilder {
    counts: Vec<u32>,
    current: bool,
}

impl RunBuilder {
    fn new() -> Self {
        Self { counts: Vec::new(), current: false }
    }

    fn push(&mut self, value: bool, len: u64) {
        if len == 0 {
            return;
        }
        let len = u32::try_from(len).expect("run length exceeds u32");
        if self.counts.is_empty() {
            if value {
                self.counts.push(0);
            }
            self.counts.push(len);
        } else if value == self.current {
            *self.counts.last_mut().unwrap() += len;
        } else {
            self.counts.push(len);
        }
        self.current = value;
    }

    fn finish(self) -> Vec<u32> {
        self.counts
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RleMask {
    height: usize,
    width: usize,
    counts: Vec<u32>,
}

impl RleMask {
    /// Wraps raw counts, rejecting anything that violates the RLE invariants.
    pub fn from_counts(height: usize, width: usize, counts: Vec<u32>) -> Result<Self, MaskError> {
        let mask = Self { height, width, counts };
        mask.check()?;
        Ok(mask)
    }

    /// Wraps raw counts without checking them. [`RleMask::check`] reports problems later.
    pub fn from_counts_unchecked(height: usize, width: usize, counts: Vec<u32>) -> Self {
        Self { height, width, counts }
    }

    pub fn empty(height: usize, width: usize) -> Self {
        let mut b = RunBuilder::new();
        b.push(false, (height * width) as u64);
        Self { height, width, counts: b.finish() }
    }

    /// Filled rectangle covering every pixel whose centre lies inside `bbox`.
    pub fn from_box(height: usize, width: usize, bbox: &BBox) -> Self {
        let span = |lo: f64, len: f64, limit: usize| -> (usize, usize) {
            let start = (lo - 0.5).ceil().max(0.0);
            let end = (lo + len - 0.5).ceil().min(limit as f64);
            if end <= start {
                (0, 0)
            } else {
                (start as usize, end as usize)
            }
        };
        let (c0, c1) = span(bbox.x, bbox.w, width);
        let (r0, r1) = span(bbox.y, bbox.h, height);
        if c0 == c1 || r0 == r1 {
            return Self::empty(height, width);
        }
        let h = height as u64;
        let mut b = RunBuilder::new();
        b.push(false, c0 as u64 * h + r0 as u64);
        for c in c0..c1 {
            b.push(true, (r1 - r0) as u64);
            if c + 1 < c1 {
                b.push(false, h - r1 as u64 + r0 as u64);
            }
        }
        b.push(false, h - r1 as u64 + (width - c1) as u64 * h);
        Self { height, width, counts: b.finish() }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn size(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn check(&self) -> Result<(), MaskError> {
        let expected = (self.height * self.width) as u64;
        let actual: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if actual != expected {
            return Err(MaskError::PixelCountMismatch { expected, actual, height: self.height, width: self.width });
        }
        if let Some(pos) = self.counts.iter().skip(1).position(|&c| c == 0) {
            return Err(MaskError::InteriorZeroRun(pos + 1));
        }
        Ok(())
    }

    /// Number of set pixels.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Set-pixel runs as `(start, len)` in column-major pixel offsets.
    fn ones_runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += c as u64;
            (i % 2 == 1 && c > 0).then_some((start, c as u64))
        })
    }
}

pub fn rle_encode(bitmap: &Bitmap) -> RleMask {
    let mut b = RunBuilder::new();
    let data = bitmap.column_major();
    let mut i = 0;
    while i < data.len() {
        let v = data[i];
        let mut j = i;
        while j < data.len() && data[j] == v {
            j += 1;
        }
        b.push(v, (j - i) as u64);
        i = j;
    }
    RleMask { height: bitmap.height, width: bitmap.width, counts: b.finish() }
}

pub fn rle_decode(mask: &RleMask) -> Result<Bitmap, MaskError> {
    mask.check()?;
    let mut data = Vec::with_capacity(mask.height * mask.width);
    for (i, &c) in mask.counts.iter().enumerate() {
        data.extend(std::iter::repeat_n(i % 2 == 1, c as usize));
    }
    Ok(Bitmap::from_column_major(mask.height, mask.width, data))
}

/// Exact `(intersection, union)` pixel counts, merging the run lists.
pub fn mask_overlap(a: &RleMask, b: &RleMask) -> Result<(u64, u64), MaskError> {
    if a.size() != b.size() {
        return Err(MaskError::SizeMismatch { a: a.size(), b: b.size() });
    }
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ra, mut rb) = (0u64, 0u64);
    let (mut inter, mut union) = (0u64, 0u64);
    loop {
        while ra == 0 && ia < a.counts.len() {
            ra = a.counts[ia] as u64;
            ia += 1;
        }
        while rb == 0 && ib < b.counts.len() {
            rb = b.counts[ib] as u64;
            ib += 1;
        }
        if ra == 0 || rb == 0 {
            break;
        }
        let step = ra.min(rb);
        // ia/ib already point past the current run, so odd runs are at even ia.
        let va = ia % 2 == 0;
        let vb = ib % 2 == 0;
        if va && vb {
            inter += step;
        }
        if va || vb {
            union += step;
        }
        ra -= step;
        rb -= step;
    }
    Ok((inter, union))
}

pub fn mask_iou(a: &RleMask, b: &RleMask) -> Result<f64, MaskError> {
    let (inter, union) = mask_overlap(a, b)?;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Intersection over union of two boxes with continuous-coordinate overlap.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.right().min(b.right()) - a.x.max(b.x)).max(0.0);
    let ih = (a.bottom().min(b.bottom()) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Tightest box around the set pixels; `(0, 0, 0, 0)` for an empty mask.
pub fn mask_to_box(mask: &RleMask) -> BBox {
    let h = mask.height as u64;
    if h == 0 {
        return BBox::EMPTY;
    }
    let mut bounds: Option<(u64, u64, u64, u64)> = None; // (col_min, col_max, row_min, row_max)
    for (start, len) in mask.ones_runs() {
        let end = start + len - 1;
        let (c0, c1) = (start / h, end / h);
        let (r0, r1) = if c0 == c1 { (start % h, end % h) } else { (0, h - 1) };
        bounds = Some(match bounds {
            None => (c0, c1, r0, r1),
            Some((a, b, c, d)) => (a.min(c0), b.max(c1), c.min(r0), d.max(r1)),
        });
    }
    match bounds {
        None => BBox::EMPTY,
        Some((c0, c1, r0, r1)) => BBox::new(c0 as f64, r0 as f64, (c1 - c0 + 1) as f64, (r1 - r0 + 1) as f64),
    }
}
