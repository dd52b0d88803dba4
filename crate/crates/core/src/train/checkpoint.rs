//! Binary checkpoints: architecture, normalization, optimizer state and the
//! position of the shuffling stream, enough to resume a run bit for bit.
//!
//! Layout (little-endian) inside the shared framing:
//!
//! ```text
//! magic "CSTNCKPT" | version u32
//! config digest [32]            sha256 of the canonical key=value lines
//! config: count u32, (key str, value str) * count
//! norm: od_min f64, od_max f64, meteo min/max/mean (6 f64 each)
//! train: batch u64, base_lr f64, decay_factor f64, decay_every u64,
//!        epochs u64, seed u64, shuffle u8
//! epoch u64
//! rng: seed [32], stream u64, word_pos u128
//! adam step u64
//! params: count u32, then per tensor (sorted by name):
//!         name str, ndim u32, dims u64*, value f64*, m f64*, v f64*
//! sha256 of everything above [32]
//! ```
//!
//! Strings are `u32 length | UTF-8`.

use std::path::Path;

use crate::binio::{read_file, write_file, BinReader, BinWriter};
use crate::data::{MeteoStats, NormStats};
use crate::error::{Error, Result};
use crate::model::{Cstn, CstnConfig};
use crate::tensor::{ParamGroup, ParamSlot, Tensor};

use super::trainer::{RngState, TrainConfig, TrainState};

pub const MAGIC: &[u8; 8] = b"CSTNCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Cstn,
    pub norm: NormStats,
    pub train: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn new(model: Cstn, norm: NormStats, train: TrainConfig, state: &TrainState) -> Self {
        Checkpoint {
            model,
            norm,
            train,
            epoch: state.epoch,
            rng: RngState::capture(&state.rng),
        }
    }

    /// Training state to continue from.
    pub fn resume_state(&self) -> TrainState {
        TrainState {
            epoch: self.epoch,
            rng: self.rng.restore(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = BinWriter::new(MAGIC, VERSION);
        let cfg = &self.model.config;
        w.bytes(&cfg.digest());
        let kv = cfg.to_kv();
        w.u32(kv.len() as u32);
        for (k, v) in &kv {
            w.str(k);
            w.str(v);
        }

        w.f64(self.norm.od_min);
        w.f64(self.norm.od_max);
        w.f64s(&self.norm.meteo.min);
        w.f64s(&self.norm.meteo.max);
        w.f64s(&self.norm.meteo.mean);

        let t = &self.train;
        w.u64(t.batch_size as u64);
        w.f64(t.base_lr);
        w.f64(t.decay_factor);
        w.u64(t.decay_every as u64);
        w.u64(t.epochs as u64);
        w.u64(t.seed);
        w.u8(t.shuffle as u8);

        w.u64(self.epoch as u64);
        w.bytes(&self.rng.seed);
        w.u64(self.rng.stream);
        w.u128(self.rng.word_pos);

        let params = &self.model.params;
        w.u64(params.step());
        w.u32(params.len() as u32);
        for (name, slot) in params.iter() {
            w.str(name);
            w.tensor(&slot.value);
            w.f64s(slot.first_moment.data());
            w.f64s(slot.second_moment.data());
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = BinReader::open(bytes, MAGIC, VERSION)?;
        let mut digest = [0u8; 32];
        digest.copy_from_slice(r.bytes(32)?);
        let count = r.u32()? as usize;
        let mut kv = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            kv.push((r.str()?, r.str()?));
        }
        let config = CstnConfig::from_kv(kv.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .map_err(|e| Error::Corrupt(format!("model description: {e}")))?;
        if config.digest() != digest {
            return Err(Error::ConfigMismatch("stored digest does not match the model description".into()));
        }

        let od_min = r.f64()?;
        let od_max = r.f64()?;
        let mut meteo = MeteoStats::reference();
        for dst in [&mut meteo.min, &mut meteo.max, &mut meteo.mean] {
            let vals = r.f64s(dst.len())?;
            dst.copy_from_slice(&vals);
        }
        let norm = NormStats { od_min, od_max, meteo };

        let train = TrainConfig {
            batch_size: r.usize()?,
            base_lr: r.f64()?,
            decay_factor: r.f64()?,
            decay_every: r.usize()?,
            epochs: r.usize()?,
            seed: r.u64()?,
            shuffle: match r.u8()? {
                0 => false,
                1 => true,
                b => return Err(Error::Corrupt(format!("shuffle flag {b}"))),
            },
        };

        let epoch = r.usize()?;
        let mut seed = [0u8; 32];
        seed.copy_from_slice(r.bytes(32)?);
        let rng = RngState {
            seed,
            stream: r.u64()?,
            word_pos: r.u128()?,
        };

        let step = r.u64()?;
        let n = r.u32()? as usize;
        let mut params = ParamGroup::new();
        for _ in 0..n {
            let name = r.str()?;
            let value = r.tensor()?;
            let shape = value.shape().to_vec();
            let m = Tensor::new(shape.clone(), r.f64s(value.len())?)?;
            let v = Tensor::new(shape, r.f64s(value.len())?)?;
            if params.contains(&name) {
                return Err(Error::Corrupt(format!("parameter `{name}` stored twice")));
            }
            params.insert_slot(
                name,
                ParamSlot {
                    value,
                    first_moment: m,
                    second_moment: v,
                },
            )?;
        }
        params.set_step(step);
        r.expect_end()?;
        Cstn::check_params(&config, &params)?;
        Ok(Checkpoint {
            model: Cstn { config, params },
            norm,
            train,
            epoch,
            rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}
