use crate::data::METEO_DIM;
use crate::error::{Error, Result};

/// Kernel of the view stacks, the two fusion convolutions and the ConvLSTM.
pub const SPATIAL_KERNEL: usize = 3;

/// Architecture of a CSTN (or, with `long_term`, an L-CSTN).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CstnConfig {
    pub h: usize,
    pub w: usize,
    /// Input sequence length `n`.
    pub n_steps: usize,
    /// Number of predicted intervals `m`; must be 1 unless `long_term`.
    pub horizon: usize,
    /// Depth `K` of each view stack.
    pub lsc_layers: usize,
    pub lsc_channels: usize,
    pub fuse_channels: usize,
    pub lstm_channels: usize,
    /// `C_lt`, channels of the spatial-temporal feature.
    pub lt_channels: usize,
    /// `C_s`, channels of the similarity embedding.
    pub sim_channels: usize,
    pub meteo_hidden: [usize; 2],
    pub meteo_embed: usize,
    pub long_term: bool,
    pub tec_enabled: bool,
    pub gcc_enabled: bool,
    pub destination_view_enabled: bool,
    pub meteo_enabled: bool,
}

impl CstnConfig {
    /// Full-size architecture on an `h×w` grid.
    pub fn standard(h: usize, w: usize) -> Self {
        CstnConfig {
            h,
            w,
            n_steps: 5,
            horizon: 1,
            lsc_layers: 3,
            lsc_channels: 16,
            fuse_channels: 32,
            lstm_channels: 32,
            lt_channels: 75,
            sim_channels: 64,
            meteo_hidden: [64, 16],
            meteo_embed: 8,
            long_term: false,
            tec_enabled: true,
            gcc_enabled: true,
            destination_view_enabled: true,
            meteo_enabled: true,
        }
    }

    /// The 15×5 Manhattan grid.
    pub fn nyc() -> Self {
        Self::standard(15, 5)
    }

    /// Reduced widths for desk-scale experiments and tests.
    pub fn small(h: usize, w: usize) -> Self {
        CstnConfig {
            lsc_channels: 8,
            fuse_channels: 16,
            lstm_channels: 16,
            lt_channels: 16,
            sim_channels: 8,
            meteo_hidden: [16, 8],
            meteo_embed: 4,
            ..Self::standard(h, w)
        }
    }

    /// Long-horizon variant predicting `m` intervals.
    pub fn long_term(mut self, m: usize) -> Self {
        self.long_term = true;
        self.horizon = m;
        self
    }

    pub fn regions(&self) -> usize {
        self.h * self.w
    }

    pub fn meteo_dim(&self) -> usize {
        METEO_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("h", self.h),
            ("w", self.w),
            ("n_steps", self.n_steps),
            ("horizon", self.horizon),
            ("lsc_layers", self.lsc_layers),
            ("lsc_channels", self.lsc_channels),
            ("fuse_channels", self.fuse_channels),
            ("lstm_channels", self.lstm_channels),
            ("lt_channels", self.lt_channels),
            ("sim_channels", self.sim_channels),
            ("meteo_hidden[0]", self.meteo_hidden[0]),
            ("meteo_hidden[1]", self.meteo_hidden[1]),
            ("meteo_embed", self.meteo_embed),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("model setting `{name}` must be positive")));
        }
        if self.horizon != 1 && !self.long_term {
            return Err(Error::InvalidArgument(
                "multi-interval horizons need the long-term decoder".into(),
            ));
        }
        if self.long_term && !self.tec_enabled {
            return Err(Error::InvalidArgument("the long-term decoder needs the temporal module".into()));
        }
        Ok(())
    }

    /// Canonical `key=value` lines, used for digests and checkpoints.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        vec![
            ("h", self.h.to_string()),
            ("w", self.w.to_string()),
            ("n_steps", self.n_steps.to_string()),
            ("horizon", self.horizon.to_string()),
            ("lsc_layers", self.lsc_layers.to_string()),
            ("lsc_channels", self.lsc_channels.to_string()),
            ("fuse_channels", self.fuse_channels.to_string()),
            ("lstm_channels", self.lstm_channels.to_string()),
            ("lt_channels", self.lt_channels.to_string()),
            ("sim_channels", self.sim_channels.to_string()),
            ("meteo_hidden_1", self.meteo_hidden[0].to_string()),
            ("meteo_hidden_2", self.meteo_hidden[1].to_string()),
            ("meteo_embed", self.meteo_embed.to_string()),
            ("long_term", self.long_term.to_string()),
            ("tec_enabled", self.tec_enabled.to_string()),
            ("gcc_enabled", self.gcc_enabled.to_string()),
            ("destination_view_enabled", self.destination_view_enabled.to_string()),
            ("meteo_enabled", self.meteo_enabled.to_string()),
        ]
    }

    /// Sets one setting from its `to_kv` key and textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(key: &str, v: &str) -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("`{key}` expects a non-negative integer, got `{v}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v.trim() {
                "true" | "1" | "on" | "yes" => Ok(true),
                "false" | "0" | "off" | "no" => Ok(false),
                _ => Err(Error::Parse(format!("`{key}` expects true or false, got `{v}`"))),
            }
        }
        match key {
            "h" => self.h = num(key, value)?,
            "w" => self.w = num(key, value)?,
            "n_steps" => self.n_steps = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "lsc_layers" => self.lsc_layers = num(key, value)?,
            "lsc_channels" => self.lsc_channels = num(key, value)?,
            "fuse_channels" => self.fuse_channels = num(key, value)?,
            "lstm_channels" => self.lstm_channels = num(key, value)?,
            "lt_channels" => self.lt_channels = num(key, value)?,
            "sim_channels" => self.sim_channels = num(key, value)?,
            "meteo_hidden_1" => self.meteo_hidden[0] = num(key, value)?,
            "meteo_hidden_2" => self.meteo_hidden[1] = num(key, value)?,
            "meteo_embed" => self.meteo_embed = num(key, value)?,
            "long_term" => self.long_term = flag(key, value)?,
            "tec_enabled" => self.tec_enabled = flag(key, value)?,
            "gcc_enabled" => self.gcc_enabled = flag(key, value)?,
            "destination_view_enabled" => self.destination_view_enabled = flag(key, value)?,
            "meteo_enabled" => self.meteo_enabled = flag(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown model setting `{key}`"))),
        }
        Ok(())
    }

    /// Inverse of [`to_kv`](Self::to_kv); every key must appear exactly once.
    pub fn from_kv<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::standard(1, 1);
        let mut seen = std::collections::BTreeSet::new();
        for (k, v) in pairs {
            cfg.set(k, v)?;
            if !seen.insert(k.to_string()) {
                return Err(Error::Parse(format!("model setting `{k}` given twice")));
            }
        }
        let expected = cfg.to_kv().len();
        if seen.len() != expected {
            return Err(Error::Parse(format!(
                "model description has {} of {expected} settings",
                seen.len()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical `key=value` lines.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (k, v) in self.to_kv() {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        h.finalize().into()
    }

    /// Learnable tensors implied by this configuration, sorted by name.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let k = SPATIAL_KERNEL;
        let n = self.regions();
        let (h, w) = (self.h, self.w);
        let l = self.lstm_channels;
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut conv = |name: &str, cout: usize, cin: usize, k: usize| {
            out.push((format!("{name}.w"), vec![cout, cin, k, k]));
            out.push((format!("{name}.b"), vec![cout]));
        };

        let mut views = vec!["lsc.origin"];
        if self.destination_view_enabled {
            views.push("lsc.dest");
        }
        for view in &views {
            for layer in 0..self.lsc_layers {
                let cin = if layer == 0 { n } else { self.lsc_channels };
                conv(&format!("{view}.{layer}"), self.lsc_channels, cin, k);
            }
        }
        conv("lsc.fuse", self.fuse_channels, self.lsc_channels * views.len(), k);

        let fuse_in = self.fuse_channels + if self.meteo_enabled { self.meteo_embed } else { 0 };
        conv("tec.fuse", self.fuse_channels, fuse_in, k);
        let lt_in = if self.tec_enabled { l } else { self.fuse_channels };
        conv("tec.lt", self.lt_channels, lt_in, 1);
        let head_in = if self.gcc_enabled { 2 * self.lt_channels } else { self.lt_channels };
        if self.gcc_enabled {
            conv("gcc.sim", self.sim_channels, self.lt_channels, 1);
        }
        conv("gcc.head", n, head_in, 1);
        if self.long_term {
            conv("dec.proj", self.fuse_channels, l, 1);
        }

        if self.meteo_enabled {
            let dims = [self.meteo_dim(), self.meteo_hidden[0], self.meteo_hidden[1], self.meteo_embed];
            for i in 0..3 {
                out.push((format!("tec.mlp.{i}.w"), vec![dims[i + 1], dims[i]]));
                out.push((format!("tec.mlp.{i}.b"), vec![dims[i + 1]]));
            }
        }

        let mut lstm = |prefix: &str| {
            out.push((format!("{prefix}.w_x"), vec![4 * l, self.fuse_channels, k, k]));
            out.push((format!("{prefix}.w_h"), vec![4 * l, l, k, k]));
            out.push((format!("{prefix}.b"), vec![4 * l]));
            for p in ["w_ci", "w_cf", "w_co"] {
                out.push((format!("{prefix}.{p}"), vec![l, h, w]));
            }
        };
        if self.tec_enabled {
            lstm("tec.lstm");
        }
        if self.long_term {
            lstm("dec.lstm");
        }
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip_and_digest() {
        let mut cfg = CstnConfig::small(4, 3).long_term(3);
        cfg.gcc_enabled = false;
        let kv = cfg.to_kv();
        let back = CstnConfig::from_kv(kv.iter().map(|(k, v)| (*k, v.as_str()))).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_ne!(CstnConfig::small(4, 3).digest(), cfg.digest());
        assert!(CstnConfig::from_kv(kv.iter().skip(1).map(|(k, v)| (*k, v.as_str()))).is_err());
        let mut c = cfg.clone();
        assert!(c.set("nope", "1").is_err());
        assert!(c.set("h", "-1").is_err());
        assert!(c.set("meteo_enabled", "maybe").is_err());
    }

    #[test]
    fn nyc_head_has_one_filter_per_region() {
        let shapes = CstnConfig::nyc().param_shapes();
        let head = shapes.iter().find(|(n, _)| n == "gcc.head.w").unwrap();
        assert_eq!(head.1, vec![75, 150, 1, 1]);
        let lt = shapes.iter().find(|(n, _)| n == "tec.lt.w").unwrap();
        assert_eq!(lt.1, vec![75, 32, 1, 1]);
        let mlp = shapes.iter().find(|(n, _)| n == "tec.mlp.0.w").unwrap();
        assert_eq!(mlp.1, vec![64, 29]);
    }

    #[test]
    fn ablations_change_parameter_sets() {
        let mut c = CstnConfig::small(3, 2);
        c.gcc_enabled = false;
        c.meteo_enabled = false;
        c.destination_view_enabled = false;
        let names: Vec<String> = c.param_shapes().into_iter().map(|(n, _)| n).collect();
        assert!(!names.iter().any(|n| n.starts_with("gcc.sim") || n.starts_with("tec.mlp") || n.starts_with("lsc.dest")));
        let head = c.param_shapes().into_iter().find(|(n, _)| n == "gcc.head.w").unwrap();
        assert_eq!(head.1, vec![6, 16, 1, 1]);
    }

    #[test]
    fn validation() {
        assert!(CstnConfig::nyc().validate().is_ok());
        let mut c = CstnConfig::nyc();
        c.horizon = 6;
        assert!(c.validate().is_err());
        assert!(c.clone().long_term(6).validate().is_ok());
        c.lt_channels = 0;
        assert!(c.validate().is_err());
    }
}
