use std::collections::HashMap;

use chrono::{Duration, NaiveDateTime, Timelike};

use super::grid::GridSpec;
use super::meteo::{MeteoRecord, MeteoStats, WeatherVocab};
use super::norm::NormStats;
use super::od::{add_trip, empty_od, BinStats};
use super::trips::TripRecord;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Raw counts and meteorology of one time interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Interval {
    pub start: NaiveDateTime,
    pub counts: Tensor,
    pub meteo: MeteoRecord,
}

/// A consecutive run of intervals split into a training prefix and a test
/// suffix, with normalization fitted on the prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub interval_minutes: u32,
    pub intervals: Vec<Interval>,
    pub train_len: usize,
    pub vocab: WeatherVocab,
    pub norm: NormStats,
}

impl Dataset {
    /// Validates the series and fits [`NormStats`] on `intervals[..train_len]`.
    pub fn new(
        grid: GridSpec,
        interval_minutes: u32,
        intervals: Vec<Interval>,
        train_len: usize,
        vocab: WeatherVocab,
    ) -> Result<Self> {
        grid.validate()?;
        if interval_minutes == 0 || 24 * 60 % interval_minutes != 0 {
            return Err(Error::InvalidArgument(format!(
                "interval length {interval_minutes} min must divide a day"
            )));
        }
        if train_len == 0 || train_len > intervals.len() {
            return Err(Error::InvalidArgument(format!(
                "training split of {train_len} intervals out of {}",
                intervals.len()
            )));
        }
        let step = Duration::minutes(interval_minutes as i64);
        for (k, iv) in intervals.iter().enumerate() {
            if iv.counts.shape() != [grid.regions(), grid.h, grid.w] {
                return Err(Error::shape(
                    "dataset",
                    format!("interval {k} counts {:?} on a {}×{} grid", iv.counts.shape(), grid.h, grid.w),
                ));
            }
            if k > 0 && iv.start - intervals[k - 1].start != step {
                return Err(Error::InvalidArgument(format!(
                    "intervals {} and {k} are not consecutive",
                    k - 1
                )));
            }
        }
        let train = &intervals[..train_len];
        let norm = NormStats::fit(
            train.iter().map(|iv| &iv.counts),
            MeteoStats::fit(train.iter().map(|iv| &iv.meteo)),
        );
        Ok(Dataset {
            grid,
            interval_minutes,
            intervals,
            train_len,
            vocab,
            norm,
        })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn train(&self) -> &[Interval] {
        &self.intervals[..self.train_len]
    }

    pub fn test(&self) -> &[Interval] {
        &self.intervals[self.train_len..]
    }

    pub fn intervals_per_day(&self) -> usize {
        (24 * 60 / self.interval_minutes) as usize
    }

    /// Time-of-day slot of a timestamp.
    pub fn slot_of(&self, t: NaiveDateTime) -> usize {
        slot_of(t, self.interval_minutes)
    }
}

pub fn slot_of(t: NaiveDateTime, interval_minutes: u32) -> usize {
    (t.time().num_seconds_from_midnight() / 60 / interval_minutes) as usize
}

/// Everything needed to turn raw CSV rows into a [`Dataset`].
#[derive(Clone, Debug)]
pub struct IngestOptions {
    pub grid: GridSpec,
    pub interval_minutes: u32,
    /// Trailing whole days held out for testing.
    pub test_days: usize,
    pub vocab: WeatherVocab,
}

/// Bins trips into consecutive intervals covering whole days from the first
/// to the last pickup, attaching the meteorology row of each interval
/// (missing rows become all-missing `Unknown` records).
pub fn ingest(
    trips: &[TripRecord],
    meteo: &[(NaiveDateTime, MeteoRecord)],
    opts: &IngestOptions,
) -> Result<(Dataset, BinStats)> {
    let first = trips
        .iter()
        .map(|t| t.pickup_time)
        .min()
        .ok_or_else(|| Error::InvalidArgument("no trip records to ingest".into()))?;
    let last = trips.iter().map(|t| t.pickup_time).max().expect("nonempty");
    let start = first.date().and_hms_opt(0, 0, 0).expect("midnight");
    let days = (last.date() - first.date()).num_days() as usize + 1;
    let per_day = (24 * 60 / opts.interval_minutes.max(1)) as usize;
    let total = days * per_day;
    if opts.test_days >= days {
        return Err(Error::InvalidArgument(format!(
            "{} test days leave no training data in {days} days",
            opts.test_days
        )));
    }
    let step = Duration::minutes(opts.interval_minutes as i64);
    let by_time: HashMap<NaiveDateTime, &MeteoRecord> = meteo.iter().map(|(t, r)| (*t, r)).collect();
    let mut intervals: Vec<Interval> = (0..total)
        .map(|k| {
            let t = start + step * k as i32;
            Interval {
                start: t,
                counts: empty_od(&opts.grid),
                meteo: by_time.get(&t).map_or_else(MeteoRecord::missing, |r| (*r).clone()),
            }
        })
        .collect();
    let mut stats = BinStats::default();
    let step_secs = step.num_seconds();
    for trip in trips {
        let k = ((trip.pickup_time - start).num_seconds() / step_secs) as usize;
        add_trip(&mut intervals[k].counts, &opts.grid, trip, &mut stats);
    }
    let train_len = total - opts.test_days * per_day;
    let ds = Dataset::new(opts.grid, opts.interval_minutes, intervals, train_len, opts.vocab.clone())?;
    Ok((ds, stats))
}
