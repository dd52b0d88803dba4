use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SampleWindow;
use crate::error::{Error, Result};
use crate::eval::Forecaster;
use crate::model::Ctx;
use crate::tensor::{xavier_uniform_with, ParamGroup, Tensor, Var};
use crate::train::{euclidean_loss_graph, Objective};

/// Hidden widths; the output layer has one unit per region.
pub const MLP_HIDDEN: [usize; 3] = [128, 128, 64];

/// Four dense layers applied to every destination channel separately: the
/// input for channel `d` is that channel over the last `n` intervals, the
/// output is the channel at the next interval. Weights are shared across
/// channels.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpBaseline {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub params: ParamGroup,
}

impl MlpBaseline {
    pub fn layer_sizes(n: usize, regions: usize) -> [usize; 5] {
        [n * regions, MLP_HIDDEN[0], MLP_HIDDEN[1], MLP_HIDDEN[2], regions]
    }

    /// Xavier weights, zero biases.
    pub fn init(n: usize, h: usize, w: usize, seed: u64) -> Result<Self> {
        if n == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument("MLP sizes must be positive".into()));
        }
        let sizes = Self::layer_sizes(n, h * w);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamGroup::new();
        for i in 0..4 {
            // a 1×1 convolution over channel positions is a dense layer per channel
            params.insert(format!("mlp.{i}.w"), xavier_uniform_with(&[sizes[i + 1], sizes[i], 1, 1], &mut rng));
            params.insert(format!("mlp.{i}.b"), Tensor::zeros([sizes[i + 1]]));
        }
        Ok(MlpBaseline { n, h, w, params })
    }

    fn regions(&self) -> usize {
        self.h * self.w
    }

    /// `[n·N, N, 1]`: feature `t·N + k` of channel `d` is entry `(d, k)` of
    /// the `t`-th of the last `n` inputs.
    fn features(&self, window: &SampleWindow) -> Result<Tensor> {
        let n = self.regions();
        let k = window.inputs.len();
        if k < self.n {
            return Err(Error::InvalidArgument(format!("window has {k} inputs, need {}", self.n)));
        }
        let recent = &window.inputs[k - self.n..];
        for x in recent {
            if x.shape() != [n, self.h, self.w] {
                return Err(Error::shape("mlp", format!("input {:?} on a {}×{} grid", x.shape(), self.h, self.w)));
            }
        }
        let mut data = vec![0.0; self.n * n * n];
        for (t, x) in recent.iter().enumerate() {
            for d in 0..n {
                for pos in 0..n {
                    data[(t * n + pos) * n + d] = x.data()[d * n + pos];
                }
            }
        }
        Tensor::new([self.n * n, n, 1], data)
    }

    pub fn forward_graph(&self, ctx: &mut Ctx, window: &SampleWindow) -> Result<Var> {
        let n = self.regions();
        let mut x = ctx.graph.input(self.features(window)?);
        for i in 0..4 {
            x = ctx.conv(&format!("mlp.{i}"), x)?;
            if i < 3 {
                x = ctx.graph.relu(x);
            }
        }
        // [position, channel] → [channel, position]
        let flat = ctx.graph.reshape(x, &[n, n])?;
        let t = ctx.graph.transpose(flat)?;
        ctx.graph.reshape(t, &[n, self.h, self.w])
    }

    pub fn predict(&self, window: &SampleWindow) -> Result<Tensor> {
        let mut ctx = Ctx::new(&self.params);
        let y = self.forward_graph(&mut ctx, window)?;
        Ok(ctx.value(y).clone())
    }
}

impl Objective for MlpBaseline {
    type Sample = SampleWindow;

    fn params(&self) -> &ParamGroup {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamGroup {
        &mut self.params
    }

    fn sample_loss(&self, ctx: &mut Ctx, sample: &SampleWindow) -> Result<Var> {
        let pred = self.forward_graph(ctx, sample)?;
        let target = sample
            .targets
            .first()
            .ok_or_else(|| Error::InvalidArgument("window has no target".into()))?;
        let target = ctx.graph.input((**target).clone());
        euclidean_loss_graph(&mut ctx.graph, pred, target)
    }
}

impl Forecaster for MlpBaseline {
    fn name(&self) -> String {
        "mlp".into()
    }

    fn forecast(&self, window: &SampleWindow) -> Result<Tensor> {
        self.predict(window)
    }
}
