use chrono::NaiveDateTime;

use super::{day_split_report, high_demand_subset, report_all, report_subset, MetricsReport};
use crate::data::{Dataset, Direction, SampleWindow};
use crate::error::{Error, Result};
use crate::model::Cstn;
use crate::tensor::Tensor;

/// Anything that predicts the (normalized) interval following a window.
pub trait Forecaster: Sync {
    fn name(&self) -> String;

    fn forecast(&self, window: &SampleWindow) -> Result<Tensor>;
}

impl Forecaster for Cstn {
    fn name(&self) -> String {
        if self.config.long_term { "lcstn" } else { "cstn" }.to_string()
    }

    fn forecast(&self, window: &SampleWindow) -> Result<Tensor> {
        Ok(self.predict(window)?.swap_remove(0))
    }
}

/// Denormalized predictions aligned with raw ground truth.
#[derive(Clone, Debug, Default)]
pub struct EvalSet {
    pub preds: Vec<Tensor>,
    pub gts: Vec<Tensor>,
    pub times: Vec<NaiveDateTime>,
}

fn one(f: &dyn Forecaster, ds: &Dataset, w: &SampleWindow) -> Result<(Tensor, Tensor, NaiveDateTime)> {
    let pred = f.forecast(w)?;
    if !pred.all_finite() {
        return Err(Error::NonFinite(format!("{} prediction for window at {}", f.name(), w.anchor)));
    }
    let pred = ds.norm.normalize(&pred, Direction::Inverse)?;
    let idx = w.target_index(0);
    let target = ds
        .intervals
        .get(idx)
        .ok_or_else(|| Error::InvalidArgument(format!("window target {idx} outside the dataset")))?;
    Ok((pred, target.counts.clone(), target.start))
}

/// Forecasts every window and pairs the denormalized result with the raw
/// counts of the first target interval.
pub fn collect_forecasts(f: &dyn Forecaster, ds: &Dataset, windows: &[SampleWindow]) -> Result<EvalSet> {
    #[cfg(feature = "parallel")]
    let rows: Vec<_> = {
        use rayon::prelude::*;
        windows.par_iter().map(|w| one(f, ds, w)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<_> = windows.iter().map(|w| one(f, ds, w)).collect();
    let mut set = EvalSet::default();
    for r in rows {
        let (p, g, t) = r?;
        set.preds.push(p);
        set.gts.push(g);
        set.times.push(t);
    }
    Ok(set)
}

/// `all`, `high-demand` (top `k` regions by training origin demand) and the
/// day-of-week slices.
pub fn standard_reports(set: &EvalSet, train: &[Tensor], k: usize, threshold: f64) -> Result<Vec<MetricsReport>> {
    let subset = high_demand_subset(train, k)?;
    let mut out = vec![
        report_all("all", &set.preds, &set.gts, threshold)?,
        report_subset("high-demand", &set.preds, &set.gts, &subset, threshold)?,
    ];
    out.extend(day_split_report(&set.preds, &set.gts, &set.times, threshold)?);
    Ok(out)
}
