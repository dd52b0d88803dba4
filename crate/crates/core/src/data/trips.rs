use std::io::Read;

use chrono::NaiveDateTime;

use crate::error::{Error, Result};

pub const DATETIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Clone, Debug, PartialEq)]
pub struct TripRecord {
    pub pickup_time: NaiveDateTime,
    pub pickup_lon: f64,
    pub pickup_lat: f64,
    pub dropoff_lon: f64,
    pub dropoff_lat: f64,
}


/// Counters for rows that could not become trip records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub rows: usize,
    pub bad_timestamp: usize,
    pub bad_coordinate: usize,
}

pub fn parse_datetime(s: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s.trim(), DATETIME_FORMAT)
        .map_err(|e| Error::Parse(format!("datetime `{s}`: {e}")))
}

fn parse_coord(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads trips from CSV with a header row; columns are located by name and
/// extra columns are ignored. `offset_minutes` shifts every timestamp.
pub fn read_trips_csv<R: Read>(reader: R, offset_minutes: i64) -> Result<(Vec<TripRecord>, ReadStats)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("trip CSV is missing column `{name}`")))
    };
    let idx = [
        col("pickup_datetime")?,
        col("pickup_longitude")?,
        col("pickup_latitude")?,
        col("dropoff_longitude")?,
        col("dropoff_latitude")?,
    ];
    let shift = chrono::Duration::minutes(offset_minutes);
    let mut stats = ReadStats::default();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        stats.rows += 1;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let Ok(t) = parse_datetime(field(0)) else {
            stats.bad_timestamp += 1;
            continue;
        };
        let coords: Option<Vec<f64>> = (1..5).map(|k| parse_coord(field(k))).collect();
        let Some(c) = coords else {
            stats.bad_coordinate += 1;
            continue;
        };
        out.push(TripRecord {
            pickup_time: t + shift,
            pickup_lon: c[0],
            pickup_lat: c[1],
            dropoff_lon: c[2],
            dropoff_lat: c[3],
        });
    }
    Ok((out, stats))
}
