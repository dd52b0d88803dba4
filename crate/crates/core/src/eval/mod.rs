//! MAPE/RMSE over denormalized predictions with the small-count filter,
//! region subsets and day-of-week slices.
//!
//! Both metrics are pooled over every evaluated entry of every interval and
//! share the same filtered entry set.

mod forecast;
mod report;

use chrono::{Datelike, NaiveDateTime, Weekday};

use crate::data::origin_demand;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use forecast::{collect_forecasts, standard_reports, EvalSet, Forecaster};
pub use report::{render_table, write_csv, CSV_HEADER};

/// Entries whose ground truth is below this are skipped.
pub const DEFAULT_THRESHOLD: f64 = 5.0;

/// Number of high-demand regions in the default subset.
pub const DEFAULT_HIGH_DEMAND_K: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    /// Mean absolute percentage error as a fraction (0.1 = 10%).
    pub mape: f64,
    pub rmse: f64,
    pub entries: usize,
}

/// Result of a metric computation; `Empty` when the filter leaves nothing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Outcome {
    Scores(Scores),
    Empty,
}

impl Outcome {
    pub fn scores(&self) -> Option<Scores> {
        match self {
            Outcome::Scores(s) => Some(*s),
            Outcome::Empty => None,
        }
    }

    pub fn mape(&self) -> Option<f64> {
        self.scores().map(|s| s.mape)
    }

    pub fn rmse(&self) -> Option<f64> {
        self.scores().map(|s| s.rmse)
    }

    pub fn entries(&self) -> usize {
        self.scores().map_or(0, |s| s.entries)
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Outcome::Empty)
    }
}

/// Running sums over the filtered entry set.
#[derive(Clone, Copy, Debug)]
pub struct Accumulator {
    threshold: f64,
    rel_sum: f64,
    sq_sum: f64,
    entries: usize,
}

impl Accumulator {
    pub fn new(threshold: f64) -> Self {
        Accumulator {
            threshold,
            rel_sum: 0.0,
            sq_sum: 0.0,
            entries: 0,
        }
    }

    pub fn push(&mut self, gt: f64, pred: f64) {
        if gt >= self.threshold && gt > 0.0 {
            let err = pred - gt;
            self.rel_sum += err.abs() / gt;
            self.sq_sum += err * err;
            self.entries += 1;
        }
    }

    pub fn outcome(&self) -> Outcome {
        if self.entries == 0 {
            return Outcome::Empty;
        }
        let z = self.entries as f64;
        Outcome::Scores(Scores {
            mape: self.rel_sum / z,
            rmse: (self.sq_sum / z).sqrt(),
            entries: self.entries,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every OD pair.
    Od,
    /// Per-origin totals.
    Origin,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Od => "od",
            Mode::Origin => "origin",
        }
    }
}

fn check_pairs(preds: &[Tensor], gts: &[Tensor]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth intervals",
            preds.len(),
            gts.len()
        )));
    }
    for (p, g) in preds.iter().zip(gts) {
        if p.shape() != g.shape() {
            return Err(Error::shape("metrics", format!("{:?} vs {:?}", p.shape(), g.shape())));
        }
    }
    Ok(())
}

fn od_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [n, h, w] if n == h * w => Ok((n, h, w)),
        _ => Err(Error::shape("metrics", format!("{:?} is not an N×H×W demand tensor", t.shape()))),
    }
}

/// Metrics over all OD entries of all intervals.
pub fn od_metrics(preds: &[Tensor], gts: &[Tensor], threshold: f64) -> Result<Outcome> {
    check_pairs(preds, gts)?;
    let mut acc = Accumulator::new(threshold);
    for (p, g) in preds.iter().zip(gts) {
        for (&pv, &gv) in p.data().iter().zip(g.data()) {
            acc.push(gv, pv);
        }
    }
    Ok(acc.outcome())
}

/// Metrics over per-origin totals (sums over destinations).
pub fn origin_metrics(preds: &[Tensor], gts: &[Tensor], threshold: f64) -> Result<Outcome> {
    check_pairs(preds, gts)?;
    let mut acc = Accumulator::new(threshold);
    for (p, g) in preds.iter().zip(gts) {
        let (po, go) = (origin_demand(p)?, origin_demand(g)?);
        for (&pv, &gv) in po.data().iter().zip(go.data()) {
            acc.push(gv, pv);
        }
    }
    Ok(acc.outcome())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SubsetSource {
    /// The `k` regions with most training origin demand.
    TopK(usize),
    Explicit,
}

/// A set of region indices of an `N`-region grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionSubset {
    regions: Vec<usize>,
    mask: Vec<bool>,
    pub source: SubsetSource,
}

impl RegionSubset {
    pub fn explicit(regions: Vec<usize>, n: usize) -> Result<Self> {
        Self::build(regions, n, SubsetSource::Explicit)
    }

    pub fn all(n: usize) -> Self {
        Self::build((0..n).collect(), n, SubsetSource::Explicit).expect("valid")
    }

    fn build(regions: Vec<usize>, n: usize, source: SubsetSource) -> Result<Self> {
        let mut mask = vec![false; n];
        for &r in &regions {
            if r >= n {
                return Err(Error::InvalidArgument(format!("region {r} outside 0..{n}")));
            }
            if mask[r] {
                return Err(Error::InvalidArgument(format!("region {r} listed twice")));
            }
            mask[r] = true;
        }
        Ok(RegionSubset { regions, mask, source })
    }

    /// Members in selection order.
    pub fn regions(&self) -> &[usize] {
        &self.regions
    }

    pub fn contains(&self, r: usize) -> bool {
        self.mask.get(r).copied().unwrap_or(false)
    }

    pub fn grid_regions(&self) -> usize {
        self.mask.len()
    }
}

/// Top `k` regions by total training origin demand, ties broken by the
/// lower region index.
pub fn high_demand_subset(train: &[Tensor], k: usize) -> Result<RegionSubset> {
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training intervals".into()))?;
    let (n, _, _) = od_dims(first)?;
    if k > n {
        return Err(Error::InvalidArgument(format!("cannot pick {k} of {n} regions")));
    }
    let mut totals = vec![0.0; n];
    for t in train {
        if t.shape() != first.shape() {
            return Err(Error::shape("high_demand_subset", format!("{:?} vs {:?}", t.shape(), first.shape())));
        }
        for (acc, v) in totals.iter_mut().zip(origin_demand(t)?.data()) {
            *acc += v;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));
    order.truncate(k);
    RegionSubset::build(order, n, SubsetSource::TopK(k))
}

/// Metrics restricted to a region subset. In OD mode both endpoints must be
/// members; in origin mode the origin must be.
pub fn subset_metrics(
    preds: &[Tensor],
    gts: &[Tensor],
    subset: &RegionSubset,
    mode: Mode,
    threshold: f64,
) -> Result<Outcome> {
    check_pairs(preds, gts)?;
    let mut acc = Accumulator::new(threshold);
    for (p, g) in preds.iter().zip(gts) {
        let (n, _, _) = od_dims(g)?;
        if n != subset.grid_regions() {
            return Err(Error::InvalidArgument(format!(
                "subset is for {} regions, data has {n}",
                subset.grid_regions()
            )));
        }
        match mode {
            Mode::Od => {
                for d in subset.regions() {
                    for &o in subset.regions() {
                        let idx = d * n + o;
                        acc.push(g.data()[idx], p.data()[idx]);
                    }
                }
            }
            Mode::Origin => {
                let (po, go) = (origin_demand(p)?, origin_demand(g)?);
                for &o in subset.regions() {
                    acc.push(go.data()[o], po.data()[o]);
                }
            }
        }
    }
    Ok(acc.outcome())
}

/// Both metric modes over one slice of the evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub subset: String,
    /// Number of evaluated intervals.
    pub intervals: usize,
    pub od: Outcome,
    pub origin: Outcome,
}

impl MetricsReport {
    pub fn outcome(&self, mode: Mode) -> Outcome {
        match mode {
            Mode::Od => self.od,
            Mode::Origin => self.origin,
        }
    }
}

/// Report over all regions.
pub fn report_all(name: &str, preds: &[Tensor], gts: &[Tensor], threshold: f64) -> Result<MetricsReport> {
    Ok(MetricsReport {
        subset: name.to_string(),
        intervals: preds.len(),
        od: od_metrics(preds, gts, threshold)?,
        origin: origin_metrics(preds, gts, threshold)?,
    })
}

pub fn report_subset(
    name: &str,
    preds: &[Tensor],
    gts: &[Tensor],
    subset: &RegionSubset,
    threshold: f64,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        subset: name.to_string(),
        intervals: preds.len(),
        od: subset_metrics(preds, gts, subset, Mode::Od, threshold)?,
        origin: subset_metrics(preds, gts, subset, Mode::Origin, threshold)?,
    })
}

const DAYS: [(Weekday, &str); 7] = [
    (Weekday::Mon, "monday"),
    (Weekday::Tue, "tuesday"),
    (Weekday::Wed, "wednesday"),
    (Weekday::Thu, "thursday"),
    (Weekday::Fri, "friday"),
    (Weekday::Sat, "saturday"),
    (Weekday::Sun, "sunday"),
];

pub fn is_weekend(t: &NaiveDateTime) -> bool {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Weekday and weekend reports followed by one per day of the week.
pub fn day_split_report(
    preds: &[Tensor],
    gts: &[Tensor],
    times: &[NaiveDateTime],
    threshold: f64,
) -> Result<Vec<MetricsReport>> {
    check_pairs(preds, gts)?;
    if times.len() != preds.len() {
        return Err(Error::InvalidArgument(format!(
            "{} timestamps for {} intervals",
            times.len(),
            preds.len()
        )));
    }
    let slice = |name: &str, keep: &dyn Fn(&NaiveDateTime) -> bool| -> Result<MetricsReport> {
        let (mut p, mut g) = (Vec::new(), Vec::new());
        for ((pt, gt), t) in preds.iter().zip(gts).zip(times) {
            if keep(t) {
                p.push(pt.clone());
                g.push(gt.clone());
            }
        }
        report_all(name, &p, &g, threshold)
    };
    let mut out = vec![slice("weekday", &|t| !is_weekend(t))?, slice("weekend", &is_weekend)?];
    for (day, name) in DAYS {
        out.push(slice(name, &|t| t.weekday() == day)?);
    }
    Ok(out)
}
