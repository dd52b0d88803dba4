//! Seeded synthetic city: OD demand with daily periodicity, region-pair base
//! rates, persistent regional fluctuations and weather-dependent damping,
//! generated jointly with matching meteorology.

use chrono::{Duration, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use super::dataset::{Dataset, Interval};
use super::grid::GridSpec;
use super::meteo::{MeteoRecord, WeatherVocab};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub start: NaiveDateTime,
    pub interval_minutes: u32,
    /// Trailing intervals held out as the test split.
    pub test_intervals: usize,
    /// Mean trips per OD pair per interval.
    pub mean_rate: f64,
    /// Log-normal spread of region popularity/attractiveness; 0 is flat.
    pub rate_skew: f64,
    /// Decay of pair rates per cell of grid distance.
    pub distance_decay: f64,
    /// Relative amplitude of the daily cycle, in `[0, 1)`.
    pub daily_amplitude: f64,
    /// Strength of weather damping in `[0, 1]`; 0 disables it.
    pub weather_effect: f64,
    /// Fraction of the gap to the current weather's damping that demand
    /// closes each interval, in `(0, 1]`. Below 1, demand reacts to a weather
    /// change over several intervals while the meteorology shows it at once.
    pub weather_response: f64,
    /// Log-scale of the persistent per-origin fluctuation; 0 disables it.
    pub regional_drift: f64,
    /// Draw Poisson counts instead of emitting the rates themselves.
    pub noise: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            start: NaiveDateTime::parse_from_str("2014-01-06 00:00:00", "%Y-%m-%d %H:%M:%S").expect("literal"),
            interval_minutes: 30,
            test_intervals: 96,
            mean_rate: 12.0,
            rate_skew: 0.5,
            distance_decay: 0.15,
            daily_amplitude: 0.6,
            weather_effect: 0.8,
            weather_response: 0.5,
            regional_drift: 0.2,
            noise: true,
        }
    }
}

impl SynthParams {
    /// Constant rates, no weather, no noise.
    pub fn flat(mean_rate: f64) -> Self {
        SynthParams {
            mean_rate,
            rate_skew: 0.0,
            distance_decay: 0.0,
            daily_amplitude: 0.0,
            weather_effect: 0.0,
            regional_drift: 0.0,
            noise: false,
            ..Self::default()
        }
    }
}

/// Generated dataset plus the ground-truth pair rates it was drawn from.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub dataset: Dataset,
    /// `N×H×W` mean trips per interval before time-varying modulation.
    pub base_rates: Tensor,
}

struct Weather {
    label: &'static str,
    damping: f64,
    frequency: f64,
    temp_offset: f64,
    humidity: f64,
    visibility: f64,
    precip: f64,
}

const WEATHER: [Weather; 9] = [
    Weather { label: "Clear", damping: 1.0, frequency: 0.34, temp_offset: 1.5, humidity: 50.0, visibility: 16.1, precip: 0.0 },
    Weather { label: "Partly Cloudy", damping: 1.0, frequency: 0.2, temp_offset: 0.5, humidity: 58.0, visibility: 16.1, precip: 0.0 },
    Weather { label: "Overcast", damping: 0.92, frequency: 0.15, temp_offset: -0.5, humidity: 68.0, visibility: 14.0, precip: 0.0 },
    Weather { label: "Fog", damping: 0.85, frequency: 0.04, temp_offset: -1.0, humidity: 95.0, visibility: 1.0, precip: 0.0 },
    Weather { label: "Light Rain", damping: 0.8, frequency: 0.1, temp_offset: -1.5, humidity: 85.0, visibility: 9.0, precip: 1.0 },
    Weather { label: "Rain", damping: 0.62, frequency: 0.06, temp_offset: -2.0, humidity: 92.0, visibility: 6.0, precip: 4.5 },
    Weather { label: "Heavy Rain", damping: 0.45, frequency: 0.03, temp_offset: -2.5, humidity: 96.0, visibility: 3.0, precip: 12.0 },
    Weather { label: "Light Snow", damping: 0.6, frequency: 0.05, temp_offset: -7.0, humidity: 88.0, visibility: 4.0, precip: 1.2 },
    Weather { label: "Heavy Snow", damping: 0.3, frequency: 0.03, temp_offset: -9.0, humidity: 93.0, visibility: 0.8, precip: 6.0 },
];

const WEATHER_PERSISTENCE: f64 = 0.95;
const DRIFT_AR: f64 = 0.9;

fn pick_weather(rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = WEATHER.iter().map(|w| w.frequency).sum();
    let mut u = rng.random::<f64>() * total;
    for (k, w) in WEATHER.iter().enumerate() {
        u -= w.frequency;
        if u <= 0.0 {
            return k;
        }
    }
    WEATHER.len() - 1
}

/// Generates `intervals` consecutive intervals on `grid`.
pub fn synth_generate(seed: u64, grid: GridSpec, intervals: usize, params: &SynthParams) -> Result<SynthDataset> {
    if params.test_intervals >= intervals {
        return Err(Error::InvalidArgument(format!(
            "{} test intervals leave no training data in {intervals}",
            params.test_intervals
        )));
    }
    if !(0.0..1.0).contains(&params.daily_amplitude)
        || !(0.0..=1.0).contains(&params.weather_effect)
        || !(params.weather_response > 0.0 && params.weather_response <= 1.0)
    {
        return Err(Error::InvalidArgument(
            "daily amplitude must lie in [0, 1), weather effect in [0, 1] and weather response in (0, 1]".into(),
        ));
    }
    // independent streams, so noise settings do not change weather or drift
    let stream = |k: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(k);
        r
    };
    let (mut rng, mut weather_rng, mut drift_rng, mut noise_rng) = (stream(0), stream(1), stream(2), stream(3));
    let n = grid.regions();
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let pop: Vec<f64> = (0..n).map(|_| (params.rate_skew * gauss(&mut rng)).exp()).collect();
    let attr: Vec<f64> = (0..n).map(|_| (params.rate_skew * gauss(&mut rng)).exp()).collect();
    let phase: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();

    let mut base = Tensor::zeros([n, grid.h, grid.w]);
    for d in 0..n {
        let (id, jd) = grid.region_cell(d);
        for o in 0..n {
            let (io, jo) = grid.region_cell(o);
            let dist = ((io as f64 - id as f64).powi(2) + (jo as f64 - jd as f64).powi(2)).sqrt();
            base.data_mut()[d * n + o] = pop[o] * attr[d] * (-params.distance_decay * dist).exp();
        }
    }
    let mean = base.sum() / base.len() as f64;
    base.scale(params.mean_rate / mean);

    let per_day = (24 * 60 / params.interval_minutes.max(1)) as usize;
    let step = Duration::minutes(params.interval_minutes as i64);
    let temp_noise = Normal::new(0.0, 1.0).expect("unit normal");
    let drift_scale = (1.0 - DRIFT_AR * DRIFT_AR).sqrt();
    let mut drift: Vec<f64> = vec![0.0; n];
    let mut weather = pick_weather(&mut weather_rng);
    let damping_of = |k: usize| 1.0 - params.weather_effect * (1.0 - WEATHER[k].damping);
    let mut damping = damping_of(weather);
    let mut out = Vec::with_capacity(intervals);

    for k in 0..intervals {
        let start = params.start + step * k as i32;
        let slot = super::dataset::slot_of(start, params.interval_minutes);
        let day_angle = std::f64::consts::TAU * slot as f64 / per_day as f64;

        if k > 0 && weather_rng.random::<f64>() > WEATHER_PERSISTENCE {
            weather = pick_weather(&mut weather_rng);
        }
        let w = &WEATHER[weather];
        damping += params.weather_response * (damping_of(weather) - damping);
        for z in drift.iter_mut() {
            let e = gauss(&mut drift_rng);
            *z = DRIFT_AR * *z + drift_scale * e;
        }
        let sigma = params.regional_drift;

        let mut counts = Tensor::zeros([n, grid.h, grid.w]);
        for d in 0..n {
            for o in 0..n {
                let profile = 1.0 + params.daily_amplitude * (day_angle + phase[o]).sin();
                let fluct = (sigma * drift[o] - 0.5 * sigma * sigma).exp();
                let rate = base.data()[d * n + o] * profile * damping * fluct;
                counts.data_mut()[d * n + o] = if !params.noise {
                    rate
                } else if rate > 0.0 {
                    Poisson::new(rate).expect("positive rate").sample(&mut noise_rng)
                } else {
                    0.0
                };
            }
        }

        let temp = 4.0 - 5.0 * (day_angle).cos() + w.temp_offset + temp_noise.sample(&mut weather_rng);
        let wind = (12.0 + 6.0 * temp_noise.sample(&mut weather_rng) + 8.0 * (1.0 - w.damping)).max(0.0);
        let precip = if w.precip > 0.0 {
            (w.precip * (1.0 + 0.3 * temp_noise.sample(&mut weather_rng))).max(0.1)
        } else {
            0.0
        };
        let meteo = MeteoRecord {
            values: [
                Some(temp),
                Some(temp - 0.25 * wind),
                Some((w.humidity + 3.0 * temp_noise.sample(&mut weather_rng)).clamp(9.0, 100.0)),
                Some((w.visibility * (1.0 + 0.1 * temp_noise.sample(&mut weather_rng))).clamp(0.4, 16.1)),
                Some(wind),
                Some(precip),
            ],
            condition: w.label.to_string(),
        };
        out.push(Interval { start, counts, meteo });
    }

    let train_len = intervals - params.test_intervals;
    let dataset = Dataset::new(grid, params.interval_minutes, out, train_len, WeatherVocab::default())?;
    Ok(SynthDataset {
        dataset,
        base_rates: base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let g = GridSpec::unit(2, 2);
        let p = SynthParams::default();
        let a = synth_generate(5, g, 150, &p).unwrap();
        let b = synth_generate(5, g, 150, &p).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = synth_generate(6, g, 150, &p).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn flat_noiseless_is_constant() {
        let g = GridSpec::unit(2, 3);
        let s = synth_generate(1, g, 120, &SynthParams::flat(7.0)).unwrap();
        for iv in &s.dataset.intervals {
            assert!(iv.counts.data().iter().all(|&v| (v - 7.0).abs() < 1e-12));
        }
    }

    #[test]
    fn mean_count_tracks_base_rate() {
        let g = GridSpec::unit(2, 2);
        let p = SynthParams {
            weather_effect: 0.0,
            regional_drift: 0.0,
            test_intervals: 48,
            ..SynthParams::default()
        };
        // 30 whole days so the daily cycle averages out
        let s = synth_generate(11, g, 30 * 48, &p).unwrap();
        let n = s.dataset.len() as f64;
        let mut mean = Tensor::zeros(s.base_rates.shape().to_vec());
        for iv in &s.dataset.intervals {
            mean.add_assign(&iv.counts);
        }
        mean.scale(1.0 / n);
        for (m, b) in mean.data().iter().zip(s.base_rates.data()) {
            assert!((m - b).abs() / b < 0.05, "mean {m} vs base {b}");
        }
    }

    #[test]
    fn heavy_weather_reduces_demand() {
        let g = GridSpec::unit(2, 2);
        let s = synth_generate(3, g, 40 * 48, &SynthParams { test_intervals: 48, ..SynthParams::default() }).unwrap();
        let mean_for = |labels: &[&str]| {
            let v: Vec<f64> = s
                .dataset
                .intervals
                .iter()
                .filter(|iv| labels.contains(&iv.meteo.condition.as_str()))
                .map(|iv| iv.counts.sum())
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean_for(&["Heavy Snow", "Heavy Rain"]) < 0.8 * mean_for(&["Clear", "Partly Cloudy"]));
    }

    #[test]
    fn demand_follows_weather_gradually() {
        let g = GridSpec::unit(1, 1);
        let total = |response: f64| {
            let p = SynthParams {
                weather_effect: 1.0,
                weather_response: response,
                ..SynthParams::flat(10.0)
            };
            let s = synth_generate(4, g, 400, &p).unwrap();
            let level: Vec<f64> = s.dataset.intervals.iter().map(|iv| iv.counts.sum() / 10.0).collect();
            let labels: Vec<String> = s.dataset.intervals.iter().map(|iv| iv.meteo.condition.clone()).collect();
            (level, labels)
        };
        let (instant, labels) = total(1.0);
        let (gradual, same_labels) = total(0.5);
        assert_eq!(labels, same_labels);
        let mut changes = 0;
        for k in 1..labels.len() {
            let expected = gradual[k - 1] + 0.5 * (instant[k] - gradual[k - 1]);
            assert!((gradual[k] - expected).abs() < 1e-12);
            if (instant[k] - instant[k - 1]).abs() > 1e-9 {
                changes += 1;
                assert!((gradual[k] - instant[k]).abs() > 1e-9);
            }
        }
        assert!(changes > 3);
        assert!(synth_generate(4, g, 10, &SynthParams { weather_response: 0.0, ..SynthParams::flat(1.0) }).is_err());
    }
}
