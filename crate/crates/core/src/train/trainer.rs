use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Cstn, Ctx};
use crate::tensor::{AdamConfig, GradRecord, ParamGroup, Var};
use crate::data::SampleWindow;

/// Optimization schedule. Defaults are the full-size recipe.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            base_lr: 1e-4,
            decay_factor: 0.1,
            decay_every: 200,
            epochs: 700,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.decay_every == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, epochs and decay_every must be positive".into(),
            ));
        }
        if !(self.base_lr > 0.0) || !(self.decay_factor > 0.0) {
            return Err(Error::InvalidArgument("learning rate and decay factor must be positive".into()));
        }
        Ok(())
    }

    /// `base_lr · decay_factor^⌊epoch / decay_every⌋`
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.base_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Something trainable by minibatch Adam on per-sample losses.
pub trait Objective: Sync {
    type Sample: Sync;

    fn params(&self) -> &ParamGroup;
    fn params_mut(&mut self) -> &mut ParamGroup;
    fn sample_loss(&self, ctx: &mut Ctx, sample: &Self::Sample) -> Result<Var>;
}

impl Objective for Cstn {
    type Sample = SampleWindow;

    fn params(&self) -> &ParamGroup {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamGroup {
        &mut self.params
    }

    fn sample_loss(&self, ctx: &mut Ctx, sample: &SampleWindow) -> Result<Var> {
        self.loss_graph(ctx, sample)
    }
}

/// Serializable position of a ChaCha stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Epoch counter and shuffling stream of a run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub epoch: usize,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep shuffling independent of the initialization stream
        rng.set_stream(1);
        TrainState { epoch: 0, rng }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-sample loss observed during the epoch.
    pub mean_loss: f64,
    pub batches: usize,
}

fn sample_grad<M: Objective>(model: &M, sample: &M::Sample) -> Result<(f64, GradRecord)> {
    let mut ctx = Ctx::new(model.params());
    let loss = model.sample_loss(&mut ctx, sample)?;
    let value = ctx.value(loss).data()[0];
    if !value.is_finite() {
        let culprit = ctx
            .graph
            .first_non_finite()
            .unwrap_or_else(|| "loss".to_string());
        return Err(Error::NonFinite(format!("loss is {value}; first non-finite tensor: {culprit}")));
    }
    let grads = ctx.graph.backward(loss)?.record(model.params());
    Ok((value, grads))
}

#[cfg(feature = "parallel")]
fn batch_grads<M: Objective>(model: &M, batch: &[&M::Sample]) -> Vec<Result<(f64, GradRecord)>> {
    use rayon::prelude::*;
    batch.par_iter().map(|s| sample_grad(model, s)).collect()
}

#[cfg(not(feature = "parallel"))]
fn batch_grads<M: Objective>(model: &M, batch: &[&M::Sample]) -> Vec<Result<(f64, GradRecord)>> {
    batch.iter().map(|s| sample_grad(model, s)).collect()
}

/// One pass over `samples` in (optionally shuffled) minibatches; the last
/// partial batch is kept. Per-sample gradients are summed in batch order so
/// results do not depend on thread scheduling.
pub fn run_epoch<M: Objective>(
    model: &mut M,
    samples: &[M::Sample],
    cfg: &TrainConfig,
    state: &mut TrainState,
) -> Result<EpochReport> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no training samples".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    if cfg.shuffle {
        order.shuffle(&mut state.rng);
    }
    let lr = cfg.learning_rate(state.epoch);
    let adam = AdamConfig::with_lr(lr);
    let mut loss_sum = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<&M::Sample> = chunk.iter().map(|&i| &samples[i]).collect();
        let mut total = GradRecord::zeros_like(model.params());
        for r in batch_grads(&*model, &batch) {
            let (loss, g) = r?;
            loss_sum += loss;
            total.accumulate(&g)?;
        }
        total.scale(1.0 / batch.len() as f64);
        if let Some(name) = total.first_non_finite() {
            return Err(Error::NonFinite(format!("gradient of `{name}`")));
        }
        model.params_mut().adam_step(&total, &adam)?;
        batches += 1;
    }
    let report = EpochReport {
        epoch: state.epoch,
        lr,
        mean_loss: loss_sum / samples.len() as f64,
        batches,
    };
    state.epoch += 1;
    Ok(report)
}

/// Runs epochs until `state.epoch == cfg.epochs`, reporting each one.
pub fn train_until<M: Objective>(
    model: &mut M,
    samples: &[M::Sample],
    cfg: &TrainConfig,
    state: &mut TrainState,
    sink: &mut dyn FnMut(&EpochReport),
) -> Result<()> {
    cfg.validate()?;
    while state.epoch < cfg.epochs {
        let report = run_epoch(model, samples, cfg, state)?;
        sink(&report);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(0), 1e-4);
        assert_eq!(cfg.learning_rate(199), 1e-4);
        assert!((cfg.learning_rate(200) - 1e-5).abs() < 1e-20);
        assert!((cfg.learning_rate(400) - 1e-6).abs() < 1e-21);
        assert!((cfg.learning_rate(699) - 1e-7).abs() < 1e-22);
    }

    #[test]
    fn rng_state_roundtrip() {
        use rand::Rng;
        let mut a = TrainState::new(3).rng;
        let _: u64 = a.random();
        let mut b = RngState::capture(&a).restore();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    fn tiny_problem() -> (Cstn, Vec<SampleWindow>) {
        use crate::model::CstnConfig;
        use crate::tensor::Tensor;
        let cfg = CstnConfig {
            n_steps: 2,
            lsc_layers: 1,
            lsc_channels: 3,
            fuse_channels: 3,
            lstm_channels: 2,
            lt_channels: 3,
            sim_channels: 2,
            meteo_hidden: [4, 3],
            meteo_embed: 2,
            ..CstnConfig::standard(2, 2)
        };
        let model = Cstn::init(cfg, 1).unwrap();
        let frame = |k: usize| Tensor::from_fn([4, 2, 2], |i| (((i * 7 + k * 3) % 11) as f64 / 5.5) - 1.0);
        let windows = (0..7)
            .map(|k| SampleWindow::from_tensors(vec![frame(k), frame(k + 1)], vec![vec![0.5; 29]; 2], vec![frame(k + 2)]))
            .collect();
        (model, windows)
    }

    #[test]
    fn training_reduces_loss_and_resumes_exactly() {
        let (model, windows) = tiny_problem();
        let cfg = TrainConfig {
            batch_size: 3,
            base_lr: 1e-2,
            epochs: 6,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut straight = model.clone();
        let mut state = TrainState::new(cfg.seed);
        let mut losses = Vec::new();
        train_until(&mut straight, &windows, &cfg, &mut state, &mut |r| losses.push(r.mean_loss)).unwrap();
        assert_eq!(losses.len(), 6);
        assert!(losses[5] < losses[0], "{losses:?}");
        assert_eq!(straight.params.step(), 6 * 3);

        let mut split = model.clone();
        let mut state = TrainState::new(cfg.seed);
        let half = TrainConfig { epochs: 3, ..cfg.clone() };
        train_until(&mut split, &windows, &half, &mut state, &mut |_| {}).unwrap();
        let saved = RngState::capture(&state.rng);
        let mut resumed = TrainState {
            epoch: state.epoch,
            rng: saved.restore(),
        };
        train_until(&mut split, &windows, &cfg, &mut resumed, &mut |_| {}).unwrap();
        assert_eq!(split, straight);
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostic() {
        let (mut model, windows) = tiny_problem();
        model.params.value_mut("tec.lt.b").unwrap().data_mut()[0] = f64::NAN;
        let mut state = TrainState::new(0);
        let err = run_epoch(&mut model, &windows, &TrainConfig::default(), &mut state).unwrap_err();
        match err {
            Error::NonFinite(msg) => assert!(msg.contains("tec.lt.b"), "{msg}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { base_lr: 0.0, ..Default::default() }.validate().is_err());
    }
}
