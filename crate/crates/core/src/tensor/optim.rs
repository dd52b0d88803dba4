use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GradRecord, Tensor};
use crate::error::{Error, Result};

/// A learnable tensor with its Adam moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSlot {
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

impl ParamSlot {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        ParamSlot {
            value,
            first_moment: Tensor::zeros(shape.clone()),
            second_moment: Tensor::zeros(shape),
        }
    }
}

/// Named learnable tensors plus the shared Adam step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGroup {
    slots: BTreeMap<String, ParamSlot>,
    step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl ParamGroup {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.slots.insert(name.into(), ParamSlot::new(value));
    }

    pub fn insert_slot(&mut self, name: impl Into<String>, slot: ParamSlot) -> Result<()> {
        let name = name.into();
        if slot.first_moment.shape() != slot.value.shape()
            || slot.second_moment.shape() != slot.value.shape()
        {
            return Err(Error::shape(
                "param_slot",
                format!("moments of `{name}` do not match its shape {:?}", slot.value.shape()),
            ));
        }
        self.slots.insert(name, slot);
        Ok(())
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.slots
            .get(name)
            .map(|s| &s.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.slots
            .get_mut(name)
            .map(|s| &mut s.value)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn slot(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.slots.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamSlot)> {
        self.slots.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn num_scalars(&self) -> usize {
        self.slots.values().map(|s| s.value.len()).sum()
    }

    /// One Adam update with bias correction. Every gradient must name a known
    /// parameter of identical shape; parameters without a gradient entry are
    /// treated as having zero gradient.
    pub fn adam_step(&mut self, grads: &GradRecord, cfg: &AdamConfig) -> Result<()> {
        for (name, g) in grads.iter() {
            let slot = self
                .slots
                .get(name)
                .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
            if slot.value.shape() != g.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("gradient for `{name}` is {:?}, parameter is {:?}", g.shape(), slot.value.shape()),
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for (name, slot) in self.slots.iter_mut() {
            let g = grads.get(name);
            let ParamSlot {
                value,
                first_moment,
                second_moment,
            } = slot;
            for i in 0..value.len() {
                let gi = g.map_or(0.0, |g| g.data()[i]);
                let m = &mut first_moment.data_mut()[i];
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
                let v = &mut second_moment.data_mut()[i];
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = first_moment.data()[i] / bc1;
                let v_hat = second_moment.data()[i] / bc2;
                value.data_mut()[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Fan-in and fan-out of a weight shape: `[out, in]` for dense layers and
/// `[out, in, k, k]` for convolutions. Other ranks use the leading dimension
/// as fan-out and the rest as fan-in.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [n] => (*n, *n),
        [out, inp, rest @ ..] => {
            let receptive: usize = rest.iter().product();
            (inp * receptive, out * receptive)
        }
    }
}

/// Glorot uniform limit `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_bounds(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = fans(shape);
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn xavier_uniform_with<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Tensor {
    let limit = xavier_bounds(shape);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-limit..=limit))
}

/// Xavier/Glorot uniform initialization, deterministic for a given seed.
pub fn xavier_uniform(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_uniform_with(shape, &mut rng)
}
