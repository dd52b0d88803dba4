//! Flat `key = value` run configuration. Every key has a default; files and
//! `--set` overrides may only name known keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cstn_core::data::{GridSpec, SynthParams, WeatherVocab, DATETIME_FORMAT};
use cstn_core::model::CstnConfig;
use cstn_core::train::TrainConfig;

use crate::failure::{Failure, Kind};

/// `(key, default, description)`
pub const KEYS: &[(&str, &str, &str)] = &[
    // paths
    ("trips", "", "trip CSV read by `ingest`"),
    ("meteo", "", "meteorology CSV read by `ingest`"),
    ("dataset", "dataset.bin", "dataset cache written by ingest/synth, read by the rest"),
    ("checkpoint", "model.ckpt", "checkpoint written by train, read by predict/evaluate"),
    ("out_dir", "out", "directory for reports, predictions and manifests"),
    // grid and time
    ("lat_min", "40.70", "southern edge of the grid"),
    ("lat_max", "40.88", "northern edge of the grid"),
    ("lon_min", "-74.02", "western edge of the grid"),
    ("lon_max", "-73.91", "eastern edge of the grid"),
    ("grid_h", "15", "grid rows (latitude bands)"),
    ("grid_w", "5", "grid columns (longitude bands)"),
    ("interval_minutes", "30", "interval length; must divide a day"),
    ("time_offset_minutes", "0", "shift applied to trip timestamps"),
    ("test_days", "14", "trailing whole days held out for testing"),
    ("weather_vocab", "", "comma-separated list of 23 condition labels; empty = built-in"),
    // model
    ("n_steps", "5", "input intervals per sample"),
    ("horizon", "1", "predicted intervals (long_term only)"),
    ("lsc_layers", "3", "conv layers per view"),
    ("lsc_channels", "16", "channels of each view stack"),
    ("fuse_channels", "32", "channels of the fused local features"),
    ("lstm_channels", "32", "ConvLSTM hidden channels"),
    ("lt_channels", "75", "channels of the temporal output"),
    ("sim_channels", "64", "channels of the similarity embedding"),
    ("meteo_hidden_1", "64", "first meteorology MLP width"),
    ("meteo_hidden_2", "16", "second meteorology MLP width"),
    ("meteo_embed", "8", "meteorology embedding channels"),
    ("long_term", "false", "multi-interval decoder"),
    ("tec_enabled", "true", "temporal module (ConvLSTM)"),
    ("gcc_enabled", "true", "global correlation module"),
    ("destination_view_enabled", "true", "destination-major view"),
    ("meteo_enabled", "true", "meteorological conditioning"),
    // training
    ("batch_size", "64", "minibatch size"),
    ("learning_rate", "1e-4", "initial Adam learning rate"),
    ("lr_decay", "0.1", "learning-rate factor per decay period"),
    ("lr_decay_every", "200", "epochs per decay period"),
    ("epochs", "700", "total epochs"),
    ("seed", "0", "seed for initialization, shuffling and synthesis"),
    ("shuffle", "true", "reshuffle windows each epoch"),
    ("resume", "false", "continue from `checkpoint` if it exists"),
    ("checkpoint_every", "10", "epochs between checkpoint saves"),
    // evaluation
    ("threshold", "5", "ground truth below this is not evaluated"),
    ("high_demand_k", "", "size of the high-demand subset; empty = min(20, regions)"),
    ("predict_from", "0", "first test window to predict"),
    ("predict_count", "1", "number of test windows to predict"),
    ("baseline", "ha-all", "baseline for `baseline`: ha-all, ha-rec, olsr, mlp"),
    ("olsr_jitter", "1e-8", "ridge term of the least-squares baseline"),
    // synthesis
    ("synth_days", "28", "days generated by `synth` (including test days)"),
    ("synth_start", "2014-01-06 00:00:00", "first interval of the synthetic series"),
    ("synth_mean_rate", "12", "mean trips per OD pair and interval"),
    ("synth_rate_skew", "0.5", "spread of region popularity"),
    ("synth_distance_decay", "0.15", "decay of pair rates with distance"),
    ("synth_daily_amplitude", "0.6", "relative amplitude of the daily cycle"),
    ("synth_weather_effect", "0.8", "strength of weather damping"),
    ("synth_weather_response", "0.5", "share of a weather change demand follows per interval"),
    ("synth_regional_drift", "0.2", "scale of persistent regional fluctuations"),
    ("synth_noise", "true", "Poisson counts instead of raw rates"),
];

/// Model keys shared verbatim with the architecture description.
const MODEL_KEYS: &[&str] = &[
    "n_steps",
    "horizon",
    "lsc_layers",
    "lsc_channels",
    "fuse_channels",
    "lstm_channels",
    "lt_channels",
    "sim_channels",
    "meteo_hidden_1",
    "meteo_hidden_2",
    "meteo_embed",
    "long_term",
    "tec_enabled",
    "gcc_enabled",
    "destination_view_enabled",
    "meteo_enabled",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
    /// Keys set explicitly by a file or an override.
    explicit: BTreeMap<&'static str, String>,
}

fn known(key: &str) -> Result<&'static str, Failure> {
    KEYS.iter()
        .find(|(k, _, _)| *k == key)
        .map(|(k, _, _)| *k)
        .ok_or_else(|| Failure::config(format!("unknown setting `{key}`")))
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (*k, v.to_string())).collect(),
            explicit: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Failure> {
        let key = known(key)?;
        self.values.insert(key, value.trim().to_string());
        self.explicit.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. A key may appear
    /// only once per file.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), Failure> {
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::config(format!("{origin}:{}: expected `key = value`", lineno + 1)))?;
            let k = k.trim();
            if seen.insert(k.to_string(), ()).is_some() {
                return Err(Failure::config(format!("{origin}:{}: `{k}` set twice", lineno + 1)));
            }
            self.set(k, v)
                .map_err(|e| Failure::config(format!("{origin}:{}: {}", lineno + 1, e.message)))?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), Failure> {
        let text = fs::read_to_string(path).map_err(|e| {
            Failure::new(Kind::MissingInput, format!("config file {}: {e}", path.display()))
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), Failure> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("override `{spec}` is not key=value")))?;
        self.set(k.trim(), v)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("unregistered key {key}"))
    }


    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, Failure> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| Failure::config(format!("`{key}` has invalid value `{raw}`")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, Failure> {
        match self.raw(key) {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            v => Err(Failure::config(format!("`{key}` expects true or false, got `{v}`"))),
        }
    }

    pub fn path(&self, key: &str) -> Result<PathBuf, Failure> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Err(Failure::config(format!("`{key}` must name a file")));
        }
        Ok(PathBuf::from(raw))
    }

    /// Path that must already exist.
    pub fn input_path(&self, key: &str) -> Result<PathBuf, Failure> {
        let p = self.path(key)?;
        if !p.is_file() {
            return Err(Failure::new(Kind::MissingInput, format!("`{key}`: {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn grid(&self) -> Result<GridSpec, Failure> {
        Ok(GridSpec::new(
            self.get("lat_min")?,
            self.get("lat_max")?,
            self.get("lon_min")?,
            self.get("lon_max")?,
            self.get("grid_h")?,
            self.get("grid_w")?,
        )?)
    }

    pub fn vocab(&self) -> Result<WeatherVocab, Failure> {
        let raw = self.raw("weather_vocab");
        if raw.is_empty() {
            return Ok(WeatherVocab::default());
        }
        Ok(WeatherVocab::new(raw.split(',').map(|s| s.trim().to_string()).collect())?)
    }

    /// Architecture for an `h×w` grid.
    pub fn model(&self, h: usize, w: usize) -> Result<CstnConfig, Failure> {
        let mut cfg = CstnConfig::standard(h, w);
        for key in MODEL_KEYS {
            cfg.set(key, self.raw(key))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig, Failure> {
        let cfg = TrainConfig {
            batch_size: self.get("batch_size")?,
            base_lr: self.get("learning_rate")?,
            decay_factor: self.get("lr_decay")?,
            decay_every: self.get("lr_decay_every")?,
            epochs: self.get("epochs")?,
            seed: self.get("seed")?,
            shuffle: self.flag("shuffle")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synth(&self) -> Result<(SynthParams, usize), Failure> {
        let minutes: u32 = self.get("interval_minutes")?;
        if minutes == 0 || 24 * 60 % minutes != 0 {
            return Err(Failure::config(format!("interval_minutes = {minutes} does not divide a day")));
        }
        let per_day = (24 * 60 / minutes) as usize;
        let days: usize = self.get("synth_days")?;
        let test_days: usize = self.get("test_days")?;
        if test_days == 0 || test_days >= days {
            return Err(Failure::config(format!("test_days = {test_days} must lie in 1..synth_days ({days})")));
        }
        let start = chrono::NaiveDateTime::parse_from_str(self.raw("synth_start"), DATETIME_FORMAT)
            .map_err(|e| Failure::config(format!("synth_start: {e}")))?;
        let params = SynthParams {
            start,
            interval_minutes: minutes,
            test_intervals: test_days * per_day,
            mean_rate: self.get("synth_mean_rate")?,
            rate_skew: self.get("synth_rate_skew")?,
            distance_decay: self.get("synth_distance_decay")?,
            daily_amplitude: self.get("synth_daily_amplitude")?,
            weather_effect: self.get("synth_weather_effect")?,
            weather_response: self.get("synth_weather_response")?,
            regional_drift: self.get("synth_regional_drift")?,
            noise: self.flag("synth_noise")?,
        };
        Ok((params, days * per_day))
    }

    pub fn high_demand_k(&self, regions: usize) -> Result<usize, Failure> {
        if self.raw("high_demand_k").is_empty() {
            return Ok(regions.min(20));
        }
        let k: usize = self.get("high_demand_k")?;
        if k == 0 || k > regions {
            return Err(Failure::config(format!("high_demand_k = {k} must lie in 1..={regions}")));
        }
        Ok(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_key() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.entries().count(), KEYS.len());
        let model = cfg.model(15, 5).unwrap();
        assert_eq!(model, CstnConfig::nyc());
        assert_eq!(cfg.train().unwrap(), TrainConfig::default());
        assert_eq!(cfg.high_demand_k(75).unwrap(), 20);
        assert_eq!(cfg.high_demand_k(12).unwrap(), 12);
        for key in MODEL_KEYS {
            assert!(KEYS.iter().any(|(k, _, _)| k == key));
        }
    }

    #[test]
    fn file_then_overrides() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\nepochs = 3\n\nlearning_rate=0.01 # trailing\n", "test").unwrap();
        cfg.apply_override("epochs=5").unwrap();
        assert_eq!(cfg.get::<usize>("epochs").unwrap(), 5);
        assert_eq!(cfg.get::<f64>("learning_rate").unwrap(), 0.01);
        assert!(cfg.is_explicit("epochs") && !cfg.is_explicit("seed"));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.apply_text("epoch = 3", "t").unwrap_err().kind, Kind::Config);
        assert!(cfg.apply_text("epochs = 3\nepochs = 4", "t").is_err());
        assert!(cfg.apply_text("just words", "t").is_err());
        assert!(cfg.apply_override("nokey").is_err());
        cfg.set("epochs", "many").unwrap();
        assert!(cfg.train().is_err());
        cfg.set("tec_enabled", "sometimes").unwrap();
        assert!(cfg.model(2, 2).is_err());
    }
}
