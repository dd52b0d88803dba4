//! From trip records and weather observations to normalized sample windows.

pub mod cache;
mod dataset;
pub mod grid;
pub mod meteo;
pub mod norm;
pub mod od;
pub mod synth;
pub mod trips;
mod window;

pub use dataset::{ingest, slot_of, Dataset, IngestOptions, Interval};
pub use grid::{Cell, GridSpec};
pub use meteo::{encode_meteo, read_meteo_csv, MeteoRecord, MeteoStats, WeatherVocab, METEO_DIM};
pub use norm::{Direction, NormStats};
pub use od::{build_od_tensor, destination_demand, origin_demand, transpose_od, BinStats};
pub use synth::{synth_generate, SynthDataset, SynthParams};
pub use trips::{parse_datetime, read_trips_csv, ReadStats, TripRecord, DATETIME_FORMAT};
pub use window::{make_windows, NormalizedSeries, SampleWindow};
