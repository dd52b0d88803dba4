use std::borrow::Borrow;
use std::ops::Range;

use chrono::NaiveDateTime;

use crate::data::{slot_of, NormalizedSeries, SampleWindow};
use crate::error::{Error, Result};
use crate::eval::Forecaster;
use crate::tensor::Tensor;

/// Entrywise mean over all training intervals sharing the target's
/// time-of-day slot.
#[derive(Clone, Debug, PartialEq)]
pub struct HaAll {
    interval_minutes: u32,
    slots: Vec<Option<Tensor>>,
}

impl HaAll {
    pub fn fit<'a>(
        intervals: impl IntoIterator<Item = (NaiveDateTime, &'a Tensor)>,
        interval_minutes: u32,
    ) -> Result<Self> {
        if interval_minutes == 0 || 24 * 60 % interval_minutes != 0 {
            return Err(Error::InvalidArgument(format!("interval of {interval_minutes} minutes")));
        }
        let per_day = (24 * 60 / interval_minutes) as usize;
        let mut sums: Vec<Option<(Tensor, usize)>> = vec![None; per_day];
        for (t, x) in intervals {
            match &mut sums[slot_of(t, interval_minutes)] {
                Some((acc, count)) => {
                    if acc.shape() != x.shape() {
                        return Err(Error::shape("ha_all", format!("{:?} vs {:?}", acc.shape(), x.shape())));
                    }
                    acc.add_assign(x);
                    *count += 1;
                }
                slot @ None => *slot = Some((x.clone(), 1)),
            }
        }
        if sums.iter().all(Option::is_none) {
            return Err(Error::InvalidArgument("no training intervals".into()));
        }
        let slots = sums
            .into_iter()
            .map(|s| {
                s.map(|(mut acc, count)| {
                    acc.scale(1.0 / count as f64);
                    acc
                })
            })
            .collect();
        Ok(HaAll { interval_minutes, slots })
    }

    pub fn from_series(series: &NormalizedSeries, train: Range<usize>, interval_minutes: u32) -> Result<Self> {
        Self::fit(
            series.times[train.clone()].iter().copied().zip(series.od[train].iter().map(|t| &**t)),
            interval_minutes,
        )
    }

    pub fn predict_at(&self, t: NaiveDateTime) -> Result<Tensor> {
        let slot = slot_of(t, self.interval_minutes);
        self.slots
            .get(slot)
            .and_then(Option::clone)
            .ok_or_else(|| Error::InvalidArgument(format!("no training data for time-of-day slot {slot}")))
    }
}

impl Forecaster for HaAll {
    fn name(&self) -> String {
        "ha-all".into()
    }

    fn forecast(&self, window: &SampleWindow) -> Result<Tensor> {
        let t = window
            .target_times
            .first()
            .ok_or_else(|| Error::InvalidArgument("window has no target".into()))?;
        self.predict_at(*t)
    }
}

/// Entrywise mean of exactly `n` recent intervals.
pub fn ha_rec_predict<T: Borrow<Tensor>>(recent: &[T], n: usize) -> Result<Tensor> {
    if recent.len() != n || n == 0 {
        return Err(Error::InvalidArgument(format!("expected {n} recent intervals, got {}", recent.len())));
    }
    let mut acc = recent[0].borrow().clone();
    for t in &recent[1..] {
        let t = t.borrow();
        if t.shape() != acc.shape() {
            return Err(Error::shape("ha_rec", format!("{:?} vs {:?}", acc.shape(), t.shape())));
        }
        acc.add_assign(t);
    }
    acc.scale(1.0 / n as f64);
    Ok(acc)
}

/// Mean of the last `n` inputs of each window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HaRec {
    pub n: usize,
}

impl Forecaster for HaRec {
    fn name(&self) -> String {
        "ha-rec".into()
    }

    fn forecast(&self, window: &SampleWindow) -> Result<Tensor> {
        let k = window.inputs.len();
        if k < self.n {
            return Err(Error::InvalidArgument(format!("window has {k} inputs, need {}", self.n)));
        }
        ha_rec_predict(&window.inputs[k - self.n..], self.n)
    }
}
