//! Versioned binary dataset cache. The byte layout is described in
//! `docs/formats.md`.

use std::path::Path;

use chrono::DateTime;

use super::dataset::{Dataset, Interval};
use super::grid::GridSpec;
use super::meteo::{MeteoRecord, MeteoStats, WeatherVocab, INDICATORS};
use super::norm::NormStats;
use crate::binio::{read_file, write_file, BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CSTNDSET";
pub const VERSION: u32 = 1;

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let mut w = BinWriter::new(MAGIC, VERSION);
    let g = &ds.grid;
    w.f64s(&[g.lat_min, g.lat_max, g.lon_min, g.lon_max]);
    w.u32(g.h as u32);
    w.u32(g.w as u32);
    w.u32(ds.interval_minutes);
    w.u64(ds.train_len as u64);
    w.u32(ds.vocab.labels().len() as u32);
    for l in ds.vocab.labels() {
        w.str(l);
    }
    w.f64(ds.norm.od_min);
    w.f64(ds.norm.od_max);
    w.f64s(&ds.norm.meteo.min);
    w.f64s(&ds.norm.meteo.max);
    w.f64s(&ds.norm.meteo.mean);
    w.u64(ds.intervals.len() as u64);
    for iv in &ds.intervals {
        w.i64(iv.start.and_utc().timestamp());
        for v in iv.meteo.values {
            w.f64(v.unwrap_or(f64::NAN));
        }
        w.str(&iv.meteo.condition);
        w.f64s(iv.counts.data());
    }
    w.finish()
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut r = BinReader::open(bytes, MAGIC, VERSION)?;
    let bounds = r.f64s(4)?;
    let (h, w) = (r.u32()? as usize, r.u32()? as usize);
    let grid = GridSpec::new(bounds[0], bounds[1], bounds[2], bounds[3], h, w)
        .map_err(|e| Error::Corrupt(format!("grid: {e}")))?;
    let interval_minutes = r.u32()?;
    let train_len = r.usize()?;
    let nlabels = r.u32()? as usize;
    let labels = (0..nlabels).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let vocab = WeatherVocab::new(labels).map_err(|e| Error::Corrupt(format!("vocabulary: {e}")))?;
    let od_min = r.f64()?;
    let od_max = r.f64()?;
    let arr = |r: &mut BinReader| -> Result<[f64; INDICATORS]> {
        Ok(r.f64s(INDICATORS)?.try_into().expect("length"))
    };
    let meteo_stats = MeteoStats {
        min: arr(&mut r)?,
        max: arr(&mut r)?,
        mean: arr(&mut r)?,
    };
    let count = r.usize()?;
    let n = grid.regions();
    let mut intervals = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let secs = r.i64()?;
        let start = DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| Error::Corrupt(format!("timestamp {secs}")))?
            .naive_utc();
        let mut values = [None; INDICATORS];
        for v in values.iter_mut() {
            let x = r.f64()?;
            *v = (!x.is_nan()).then_some(x);
        }
        let condition = r.str()?;
        let counts = Tensor::new([n, h, w], r.f64s(n * n)?)?;
        intervals.push(Interval {
            start,
            counts,
            meteo: MeteoRecord { values, condition },
        });
    }
    r.expect_end()?;
    let ds = Dataset::new(grid, interval_minutes, intervals, train_len, vocab)
        .map_err(|e| Error::Corrupt(format!("dataset: {e}")))?;
    let stored = NormStats {
        od_min,
        od_max,
        meteo: meteo_stats,
    };
    if stored != ds.norm {
        return Err(Error::Corrupt("stored normalization does not match the training split".into()));
    }
    Ok(ds)
}

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    write_file(path, &encode(ds))
}

pub fn load(path: &Path) -> Result<Dataset> {
    decode(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{synth_generate, SynthParams};

    fn sample() -> Dataset {
        let ds = synth_generate(9, GridSpec::unit(2, 3), 100, &SynthParams { test_intervals: 20, ..SynthParams::default() })
            .unwrap()
            .dataset;
        let mut intervals = ds.intervals;
        intervals[3].meteo.values[2] = None;
        Dataset::new(ds.grid, ds.interval_minutes, intervals, ds.train_len, ds.vocab).unwrap()
    }

    #[test]
    fn read_back_equality() {
        let ds = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        save(&ds, &path).unwrap();
        assert_eq!(load(&path).unwrap(), ds);
    }

    #[test]
    fn truncation_and_bad_magic_are_corrupt() {
        let bytes = encode(&sample());
        assert!(matches!(decode(&bytes[..bytes.len() - 5]), Err(Error::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Corrupt(_))));
        let mut flipped = bytes;
        flipped[40] ^= 1;
        assert!(matches!(decode(&flipped), Err(Error::Corrupt(_))));
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample());
        assert_eq!(&bytes[..8], b"CSTNDSET");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), VERSION);
        // lat_min of the unit grid
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 0.0);
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 1.0);
    }
}
