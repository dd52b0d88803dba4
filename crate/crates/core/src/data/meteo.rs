//! Interval-level meteorology and its 29-dimensional encoding.

use std::io::Read;

use chrono::NaiveDateTime;

use super::trips::parse_datetime;
use crate::error::{Error, Result};

pub const INDICATORS: usize = 6;
pub const WEATHER_TYPES: usize = 23;
/// Length of an encoded meteorology vector.
pub const METEO_DIM: usize = WEATHER_TYPES + INDICATORS;
pub const UNKNOWN_LABEL: &str = "Unknown";

/// Indicator order inside [`MeteoRecord::values`] and the encoded vector.
pub const INDICATOR_NAMES: [&str; INDICATORS] = [
    "temp_c",
    "windchill_c",
    "humidity_pct",
    "visibility_km",
    "wind_kmh",
    "precip_mm",
];

/// Observed ranges of the Manhattan 2014 station data, useful as fixed
/// scaling bounds when no training split is available.
pub const REFERENCE_RANGES: [(f64, f64); INDICATORS] = [
    (-18.3, 35.6),
    (-28.4, 38.5),
    (9.0, 100.0),
    (0.4, 16.1),
    (0.0, 137.0),
    (0.0, 28.7),
];

#[derive(Clone, Debug, PartialEq)]
pub struct MeteoRecord {
    /// Temperature, windchill, humidity, visibility, wind speed,
    /// precipitation; `None` when missing.
    pub values: [Option<f64>; INDICATORS],
    pub condition: String,
}

impl MeteoRecord {
    pub fn missing() -> Self {
        MeteoRecord {
            values: [None; INDICATORS],
            condition: UNKNOWN_LABEL.to_string(),
        }
    }
}

/// The 23 weather-condition labels of the one-hot block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeatherVocab {
    labels: Vec<String>,
    unknown: usize,
}

pub const DEFAULT_VOCAB: [&str; WEATHER_TYPES] = [
    "Clear",
    "Partly Cloudy",
    "Mostly Cloudy",
    "Scattered Clouds",
    "Overcast",
    "Haze",
    "Mist",
    "Fog",
    "Shallow Fog",
    "Patches of Fog",
    "Light Drizzle",
    "Drizzle",
    "Light Rain",
    "Rain",
    "Heavy Rain",
    "Light Freezing Rain",
    "Thunderstorm",
    "Light Thunderstorms and Rain",
    "Light Snow",
    "Snow",
    "Heavy Snow",
    "Ice Pellets",
    UNKNOWN_LABEL,
];

impl Default for WeatherVocab {
    fn default() -> Self {
        WeatherVocab::new(DEFAULT_VOCAB.iter().map(|s| s.to_string()).collect()).expect("valid default")
    }
}

impl WeatherVocab {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() != WEATHER_TYPES {
            return Err(Error::InvalidArgument(format!(
                "weather vocabulary needs {WEATHER_TYPES} labels, got {}",
                labels.len()
            )));
        }
        let unknown = labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(UNKNOWN_LABEL))
            .ok_or_else(|| Error::InvalidArgument("weather vocabulary lacks `Unknown`".into()))?;
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].iter().any(|o| o.eq_ignore_ascii_case(l)) {
                return Err(Error::InvalidArgument(format!("duplicate weather label `{l}`")));
            }
        }
        Ok(WeatherVocab { labels, unknown })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Slot of `label`; unlisted labels map to the `Unknown` slot.
    pub fn index(&self, label: &str) -> usize {
        let label = label.trim();
        self.labels
            .iter()
            .position(|l| l.eq_ignore_ascii_case(label))
            .unwrap_or(self.unknown)
    }
}

/// Min-max bounds and fill-in means of the six indicators.
#[derive(Clone, Debug, PartialEq)]
pub struct MeteoStats {
    pub min: [f64; INDICATORS],
    pub max: [f64; INDICATORS],
    pub mean: [f64; INDICATORS],
}

impl MeteoStats {
    pub fn reference() -> Self {
        let mut s = MeteoStats {
            min: [0.0; INDICATORS],
            max: [0.0; INDICATORS],
            mean: [0.0; INDICATORS],
        };
        for (k, (lo, hi)) in REFERENCE_RANGES.iter().enumerate() {
            s.min[k] = *lo;
            s.max[k] = *hi;
            s.mean[k] = 0.5 * (lo + hi);
        }
        s
    }

    /// Fits bounds and means on the given (training) records. Indicators that
    /// are never observed get a zero range and encode to 0.
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a MeteoRecord>) -> Self {
        let mut min = [f64::INFINITY; INDICATORS];
        let mut max = [f64::NEG_INFINITY; INDICATORS];
        let mut sum = [0.0; INDICATORS];
        let mut count = [0usize; INDICATORS];
        for r in records {
            for k in 0..INDICATORS {
                if let Some(v) = r.values[k].filter(|v| v.is_finite()) {
                    min[k] = min[k].min(v);
                    max[k] = max[k].max(v);
                    sum[k] += v;
                    count[k] += 1;
                }
            }
        }
        let mut mean = [0.0; INDICATORS];
        for k in 0..INDICATORS {
            if count[k] == 0 {
                min[k] = 0.0;
                max[k] = 0.0;
            } else {
                mean[k] = sum[k] / count[k] as f64;
            }
        }
        MeteoStats { min, max, mean }
    }
}

/// One-hot weather type followed by the six indicators scaled to `[0, 1]`.
/// Missing indicators take the training mean; out-of-range values clamp.
pub fn encode_meteo(rec: &MeteoRecord, stats: &MeteoStats, vocab: &WeatherVocab) -> Vec<f64> {
    let mut out = vec![0.0; METEO_DIM];
    out[vocab.index(&rec.condition)] = 1.0;
    for k in 0..INDICATORS {
        let v = rec.values[k].filter(|v| v.is_finite()).unwrap_or(stats.mean[k]);
        let span = stats.max[k] - stats.min[k];
        out[WEATHER_TYPES + k] = if span > 0.0 {
            ((v - stats.min[k]) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
    }
    out
}

/// Reads `datetime,temp_c,windchill_c,humidity_pct,visibility_km,wind_kmh,precip_mm,condition`.
/// Empty numeric cells are missing values.
pub fn read_meteo_csv<R: Read>(reader: R) -> Result<Vec<(NaiveDateTime, MeteoRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("meteo CSV is missing column `{name}`")))
    };
    let t_col = col("datetime")?;
    let v_cols = INDICATOR_NAMES
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>>>()?;
    let c_col = col("condition")?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t = parse_datetime(rec.get(t_col).unwrap_or(""))?;
        let mut values = [None; INDICATORS];
        for (k, &c) in v_cols.iter().enumerate() {
            let s = rec.get(c).unwrap_or("");
            if !s.is_empty() {
                values[k] = Some(s.parse::<f64>().map_err(|e| {
                    Error::Parse(format!("meteo row {}: {} `{s}`: {e}", line + 2, INDICATOR_NAMES[k]))
                })?);
            }
        }
        let condition = rec.get(c_col).unwrap_or("").to_string();
        out.push((
            t,
            MeteoRecord {
                values,
                condition: if condition.is_empty() {
                    UNKNOWN_LABEL.to_string()
                } else {
                    condition
                },
            },
        ));
    }
    Ok(out)
}
