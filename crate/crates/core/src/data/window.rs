use std::ops::Range;
use std::sync::Arc;

use chrono::NaiveDateTime;

use super::dataset::Dataset;
use super::meteo::encode_meteo;
use super::norm::Direction;
use crate::error::Result;
use crate::tensor::Tensor;

/// The whole series normalized once, shared by every window.
#[derive(Clone, Debug)]
pub struct NormalizedSeries {
    pub od: Vec<Arc<Tensor>>,
    pub meteo: Vec<Arc<Vec<f64>>>,
    pub times: Vec<NaiveDateTime>,
}

impl NormalizedSeries {
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let mut od = Vec::with_capacity(ds.len());
        let mut meteo = Vec::with_capacity(ds.len());
        for iv in &ds.intervals {
            od.push(Arc::new(ds.norm.normalize(&iv.counts, Direction::Forward)?));
            meteo.push(Arc::new(encode_meteo(&iv.meteo, &ds.norm.meteo, &ds.vocab)));
        }
        Ok(NormalizedSeries {
            od,
            meteo,
            times: ds.intervals.iter().map(|iv| iv.start).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.od.len()
    }

    pub fn is_empty(&self) -> bool {
        self.od.is_empty()
    }
}

/// `n` consecutive inputs ending at interval `anchor` and the `m` intervals
/// that follow as targets.
#[derive(Clone, Debug)]
pub struct SampleWindow {
    pub anchor: usize,
    pub inputs: Vec<Arc<Tensor>>,
    pub meteo: Vec<Arc<Vec<f64>>>,
    pub targets: Vec<Arc<Tensor>>,
    pub input_times: Vec<NaiveDateTime>,
    pub target_times: Vec<NaiveDateTime>,
}

impl SampleWindow {
    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn m(&self) -> usize {
        self.targets.len()
    }

    /// Window built directly from normalized tensors, with placeholder
    /// timestamps. Useful for inference on ad-hoc inputs.
    pub fn from_tensors(inputs: Vec<Tensor>, meteo: Vec<Vec<f64>>, targets: Vec<Tensor>) -> Self {
        let t0 = NaiveDateTime::default();
        SampleWindow {
            anchor: inputs.len().saturating_sub(1),
            input_times: vec![t0; inputs.len()],
            target_times: vec![t0; targets.len()],
            inputs: inputs.into_iter().map(Arc::new).collect(),
            meteo: meteo.into_iter().map(Arc::new).collect(),
            targets: targets.into_iter().map(Arc::new).collect(),
        }
    }

    /// Index of the `k`-th target interval in the series.
    pub fn target_index(&self, k: usize) -> usize {
        self.anchor + 1 + k
    }
}

/// Emits one window per anchor such that every input and target interval
/// lies inside `range`; windows straddling the range boundary are skipped.
pub fn make_windows(series: &NormalizedSeries, range: Range<usize>, n: usize, m: usize) -> Vec<SampleWindow> {
    let range = range.start..range.end.min(series.len());
    if n == 0 || range.len() < n + m {
        return Vec::new();
    }
    let first = range.start + n - 1;
    let last = range.end - m - 1;
    (first..=last)
        .map(|anchor| {
            let ins = anchor + 1 - n..anchor + 1;
            let outs = anchor + 1..anchor + 1 + m;
            SampleWindow {
                anchor,
                inputs: series.od[ins.clone()].to_vec(),
                meteo: series.meteo[ins.clone()].to_vec(),
                targets: series.od[outs.clone()].to_vec(),
                input_times: series.times[ins].to_vec(),
                target_times: series.times[outs].to_vec(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;

    fn series(len: usize) -> NormalizedSeries {
        let t0 = crate::data::trips::parse_datetime("2014-02-03 00:00:00").unwrap();
        NormalizedSeries {
            od: (0..len).map(|k| Arc::new(Tensor::full([1, 1, 1], k as f64))).collect(),
            meteo: (0..len).map(|_| Arc::new(vec![0.0; 29])).collect(),
            times: (0..len).map(|k| t0 + Duration::minutes(30 * k as i64)).collect(),
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&series(6), 0..6, 5, 1).len(), 1);
        assert_eq!(make_windows(&series(10), 0..10, 5, 1).len(), 10 - 5 - 1 + 1);
        assert_eq!(make_windows(&series(20), 0..20, 5, 6).len(), 20 - 5 - 6 + 1);
        assert!(make_windows(&series(5), 0..5, 5, 1).is_empty());
    }

    #[test]
    fn windows_are_consecutive_and_bounded_by_range() {
        let s = series(30);
        let ws = make_windows(&s, 10..30, 5, 6);
        assert_eq!(ws.len(), 20 - 11 + 1);
        for w in &ws {
            let vals: Vec<f64> = w.inputs.iter().chain(&w.targets).map(|t| t.data()[0]).collect();
            assert!(vals.windows(2).all(|p| p[1] == p[0] + 1.0));
            assert!(vals[0] >= 10.0 && *vals.last().unwrap() < 30.0);
            assert_eq!(w.target_index(0) as f64, w.targets[0].data()[0]);
        }
    }
}
