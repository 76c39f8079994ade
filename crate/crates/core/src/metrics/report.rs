use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use super::hota::AlphaCounts;
use super::{EvalConfig, Group, Mode, TIE_BREAK_WEIGHT};
use crate::classification::{CategoryBank, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SplitName {
    All,
    Common,
    Uncommon,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::All, SplitName::Common, SplitName::Uncommon];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::All => "all",
            SplitName::Common => "common",
            SplitName::Uncommon => "uncommon",
        }
    }

    /// Column suffix used in the text table.
    pub fn suffix(&self) -> &'static str {
        match self {
            SplitName::All => "all",
            SplitName::Common => "com",
            SplitName::Uncommon => "unc",
        }
    }

    fn includes(&self, s: Split) -> bool {
        match self {
            SplitName::All => true,
            SplitName::Common => s == Split::Common,
            SplitName::Uncommon => s == Split::Uncommon,
        }
    }
}

/// Scores averaged over alpha, with the per-alpha arrays they came from.
///
/// `combined` is HOTA (closed) or OWTA (open); `det` is DetA or DetRe.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub combined: f64,
    pub det: f64,
    pub ass: f64,
    pub loc: Option<f64>,
    pub combined_per_alpha: Vec<f64>,
    pub det_per_alpha: Vec<f64>,
    pub ass_per_alpha: Vec<f64>,
    pub loc_per_alpha: Option<Vec<f64>>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl Scores {
    fn from_arrays(combined: Vec<f64>, det: Vec<f64>, ass: Vec<f64>, loc: Option<Vec<f64>>) -> Self {
        Self {
            combined: mean(&combined),
            det: mean(&det),
            ass: mean(&ass),
            loc: loc.as_deref().map(mean),
            combined_per_alpha: combined,
            det_per_alpha: det,
            ass_per_alpha: ass,
            loc_per_alpha: loc,
        }
    }

    fn from_counts(counts: &[AlphaCounts], mode: Mode) -> Self {
        match mode {
            Mode::Closed => Self::from_arrays(
                counts.iter().map(AlphaCounts::hota).collect(),
                counts.iter().map(AlphaCounts::det_a).collect(),
                counts.iter().map(AlphaCounts::ass_a).collect(),
                Some(counts.iter().map(AlphaCounts::loc_a).collect()),
            ),
            Mode::Open => Self::from_arrays(
                counts.iter().map(AlphaCounts::owta).collect(),
                counts.iter().map(AlphaCounts::det_re).collect(),
                counts.iter().map(AlphaCounts::ass_a).collect(),
                None,
            ),
        }
    }

    fn zeros(n: usize, mode: Mode) -> Self {
        Self::from_counts(&vec![AlphaCounts::default(); n], mode)
    }

    /// Unweighted element-wise mean over category scores.
    fn average(items: &[&Scores], n: usize, mode: Mode) -> Self {
        if items.is_empty() {
            return Self::zeros(n, mode);
        }
        let avg = |f: &dyn Fn(&Scores) -> &[f64]| -> Vec<f64> {
            (0..n).map(|k| items.iter().map(|s| f(s)[k]).sum::<f64>() / items.len() as f64).collect()
        };
        let loc = (mode == Mode::Closed).then(|| avg(&|s| s.loc_per_alpha.as_deref().unwrap_or(&[])));
        Self::from_arrays(avg(&|s| &s.combined_per_alpha), avg(&|s| &s.det_per_alpha), avg(&|s| &s.ass_per_alpha), loc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub split: SplitName,
    pub scores: Scores,
    pub gt_tracks: usize,
    /// Categories contributing to the average (closed) or present in the gt (open).
    pub categories: usize,
    pub tp: Vec<u64>,
    pub fn_: Vec<u64>,
    /// Open-mode common/uncommon rows carry no FP counts.
    pub fp: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryReport {
    pub id: u64,
    pub name: String,
    pub split: Split,
    pub gt_tracks: usize,
    pub pred_tracks: usize,
    pub scores: Scores,
    pub tp: Vec<u64>,
    pub fn_: Vec<u64>,
    pub fp: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mode: Mode,
    pub geometry: super::Geometry,
    pub alphas: Vec<f64>,
    pub splits: Vec<SplitReport>,
    pub categories: Vec<CategoryReport>,
    pub box_fallback_pairs: usize,
    pub warnings: Vec<String>,
}

pub(super) struct Context<'a> {
    pub cfg: &'a EvalConfig,
    pub bank: &'a CategoryBank,
    pub gt_tracks: &'a BTreeMap<u64, usize>,
    pub pred_tracks: &'a BTreeMap<u64, usize>,
}

fn column<F: Fn(&AlphaCounts) -> u64>(counts: &[AlphaCounts], f: F) -> Vec<u64> {
    counts.iter().map(f).collect()
}

fn category_reports(ctx: &Context, groups: &BTreeMap<Group, Vec<AlphaCounts>>, with_fp: bool) -> Vec<CategoryReport> {
    let n = ctx.cfg.alphas.len();
    let empty = vec![AlphaCounts::default(); n];
    ctx.gt_tracks
        .iter()
        .map(|(&id, &gt_tracks)| {
            let cat = ctx.bank.get(id).expect("categories checked against bank");
            let counts = groups.get(&Group::Category(id)).unwrap_or(&empty);
            CategoryReport {
                id,
                name: cat.name.clone(),
                split: cat.split,
                gt_tracks,
                pred_tracks: ctx.pred_tracks.get(&id).copied().unwrap_or(0),
                scores: Scores::from_counts(counts, ctx.cfg.mode),
                tp: column(counts, |c| c.tp),
                fn_: column(counts, |c| c.fn_),
                fp: with_fp.then(|| column(counts, |c| c.fp)),
            }
        })
        .collect()
}

fn warn_empty(split: SplitName, warnings: &mut Vec<String>) {
    warnings.push(format!("split '{}' has no ground-truth tracks; its scores are reported as 0", split.as_str()));
}

pub(super) fn build_closed(
    ctx: &Context,
    groups: &BTreeMap<Group, Vec<AlphaCounts>>,
    warnings: &mut Vec<String>,
) -> MetricsReport {
    let n = ctx.cfg.alphas.len();
    let categories = category_reports(ctx, groups, true);
    let splits = SplitName::ALL
        .iter()
        .map(|&split| {
            let members: Vec<&CategoryReport> = categories.iter().filter(|c| split.includes(c.split)).collect();
            if members.is_empty() {
                warn_empty(split, warnings);
            }
            let scores: Vec<&Scores> = members.iter().map(|c| &c.scores).collect();
            let sum = |f: &dyn Fn(&CategoryReport) -> &Vec<u64>| -> Vec<u64> {
                (0..n).map(|k| members.iter().map(|c| f(c)[k]).sum()).collect()
            };
            SplitReport {
                split,
                scores: Scores::average(&scores, n, Mode::Closed),
                gt_tracks: members.iter().map(|c| c.gt_tracks).sum(),
                categories: members.len(),
                tp: sum(&|c| &c.tp),
                fn_: sum(&|c| &c.fn_),
                fp: Some(sum(&|c| c.fp.as_ref().expect("closed mode records FPs"))),
            }
        })
        .collect();
    MetricsReport {
        mode: Mode::Closed,
        geometry: ctx.cfg.geometry,
        alphas: ctx.cfg.alphas.clone(),
        splits,
        categories,
        box_fallback_pairs: 0,
        warnings: Vec::new(),
    }
}

pub(super) fn build_open(
    ctx: &Context,
    groups: &BTreeMap<Group, Vec<AlphaCounts>>,
    warnings: &mut Vec<String>,
) -> MetricsReport {
    let n = ctx.cfg.alphas.len();
    let empty = vec![AlphaCounts::default(); n];
    let categories = category_reports(ctx, groups, false);
    let splits = SplitName::ALL
        .iter()
        .map(|&split| {
            let key = match split {
                SplitName::All => Group::All,
                SplitName::Common => Group::Split(Split::Common),
                SplitName::Uncommon => Group::Split(Split::Uncommon),
            };
            let members: Vec<&CategoryReport> = categories.iter().filter(|c| split.includes(c.split)).collect();
            let gt_tracks: usize = members.iter().map(|c| c.gt_tracks).sum();
            if gt_tracks == 0 {
                warn_empty(split, warnings);
            }
            let counts = groups.get(&key).unwrap_or(&empty);
            SplitReport {
                split,
                scores: if gt_tracks == 0 { Scores::zeros(n, Mode::Open) } else { Scores::from_counts(counts, Mode::Open) },
                gt_tracks,
                categories: members.len(),
                tp: column(counts, |c| c.tp),
                fn_: column(counts, |c| c.fn_),
                fp: (split == SplitName::All).then(|| column(counts, |c| c.fp)),
            }
        })
        .collect();
    MetricsReport {
        mode: Mode::Open,
        geometry: ctx.cfg.geometry,
        alphas: ctx.cfg.alphas.clone(),
        splits,
        categories,
        box_fallback_pairs: 0,
        warnings: Vec::new(),
    }
}

impl MetricsReport {
    pub fn split(&self, name: SplitName) -> &SplitReport {
        self.splits.iter().find(|s| s.split == name).expect("every split is always reported")
    }

    pub fn category(&self, id: u64) -> Option<&CategoryReport> {
        self.categories.iter().find(|c| c.id == id)
    }

    /// Metric names in table order: combined, detection, association.
    pub fn metric_names(&self) -> [&'static str; 3] {
        match self.mode {
            Mode::Closed => ["HOTA", "DetA", "AssA"],
            Mode::Open => ["OWTA", "DetRe", "AssA"],
        }
    }

    fn scores_json(&self, s: &Scores) -> Value {
        let [c, d, a] = self.metric_names();
        let mut obj = Map::new();
        let mut per = Map::new();
        obj.insert(c.into(), json!(s.combined));
        obj.insert(d.into(), json!(s.det));
        obj.insert(a.into(), json!(s.ass));
        per.insert(c.into(), json!(s.combined_per_alpha));
        per.insert(d.into(), json!(s.det_per_alpha));
        per.insert(a.into(), json!(s.ass_per_alpha));
        if let (Some(l), Some(lp)) = (s.loc, &s.loc_per_alpha) {
            obj.insert("LocA".into(), json!(l));
            per.insert("LocA".into(), json!(lp));
        }
        obj.insert("per_alpha".into(), Value::Object(per));
        Value::Object(obj)
    }

    fn counts_json(tp: &[u64], fn_: &[u64], fp: &Option<Vec<u64>>) -> Value {
        let mut obj = Map::new();
        obj.insert("TP".into(), json!(tp));
        obj.insert("FN".into(), json!(fn_));
        if let Some(fp) = fp {
            obj.insert("FP".into(), json!(fp));
        }
        Value::Object(obj)
    }

    /// Full report as JSON.
    pub fn to_json(&self) -> Value {
        let mut splits = Map::new();
        for s in &self.splits {
            let mut v = self.scores_json(&s.scores);
            let obj = v.as_object_mut().unwrap();
            obj.insert("gt_tracks".into(), json!(s.gt_tracks));
            obj.insert("categories".into(), json!(s.categories));
            obj.insert("counts".into(), Self::counts_json(&s.tp, &s.fn_, &s.fp));
            splits.insert(s.split.as_str().into(), v);
        }
        let categories: Vec<Value> = self
            .categories
            .iter()
            .map(|c| {
                let mut v = self.scores_json(&c.scores);
                let obj = v.as_object_mut().unwrap();
                obj.insert("id".into(), json!(c.id));
                obj.insert("name".into(), json!(c.name));
                obj.insert("split".into(), json!(c.split.as_str()));
                obj.insert("gt_tracks".into(), json!(c.gt_tracks));
                obj.insert("pred_tracks".into(), json!(c.pred_tracks));
                obj.insert("counts".into(), Self::counts_json(&c.tp, &c.fn_, &c.fp));
                v
            })
            .collect();
        let averaging = match self.mode {
            Mode::Closed => "unweighted mean over categories with at least one gt track",
            Mode::Open => "single class-agnostic pool; splits restrict gt tracks only",
        };
        json!({
            "metadata": {
                "mode": self.mode.as_str(),
                "geometry": self.geometry.as_str(),
                "alphas": self.alphas,
                "tie_break_weight": TIE_BREAK_WEIGHT,
                "averaging": averaging,
                "box_fallback_pairs": self.box_fallback_pairs,
                "warnings": self.warnings,
            },
            "splits": splits,
            "categories": categories,
        })
    }

    /// Table headers in the published column order, e.g. `HOTAall DETAall AssAall HOTAcom ...`.
    pub fn table_headers(&self) -> Vec<String> {
        let names = match self.mode {
            Mode::Closed => ["HOTA", "DETA", "AssA"],
            Mode::Open => ["OWTA", "DETRe", "AssA"],
        };
        SplitName::ALL.iter().flat_map(|s| names.iter().map(move |n| format!("{n}{}", s.suffix()))).collect()
    }

    /// Table values (x100) aligned with [`MetricsReport::table_headers`].
    pub fn table_values(&self) -> Vec<f64> {
        SplitName::ALL
            .iter()
            .flat_map(|&s| {
                let sc = &self.split(s).scores;
                [sc.combined * 100.0, sc.det * 100.0, sc.ass * 100.0]
            })
            .collect()
    }

    /// Aligned text table with one row for `tracker`.
    pub fn to_table(&self, tracker: &str) -> String {
        let headers = self.table_headers();
        let name_w = tracker.len().max("Tracker".len());
        let mut head = format!("{:<name_w$}", "Tracker");
        let mut row = format!("{tracker:<name_w$}");
        for (h, v) in headers.iter().zip(self.table_values()) {
            let w = h.len().max(5);
            head.push_str(&format!(" {h:>w$}"));
            row.push_str(&format!(" {:>w$}", format!("{v:.1}")));
        }
        format!("{head}\n{row}\n")
    }
}
