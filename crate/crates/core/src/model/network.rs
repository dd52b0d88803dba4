//! Forward computation of CSTN and L-CSTN on a recording [`Graph`].
//!
//! Each building block takes a [`Ctx`], which pairs the graph with the
//! parameter values, so the same code serves inference and training.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::CstnConfig;
use crate::data::SampleWindow;
use crate::error::{Error, Result};
use crate::tensor::{xavier_uniform_with, Graph, ParamGroup, Tensor, Var};

/// Graph under construction plus read-only parameter values.
pub struct Ctx<'a> {
    pub graph: Graph,
    params: &'a ParamGroup,
}

impl<'a> Ctx<'a> {
    pub fn new(params: &'a ParamGroup) -> Self {
        Ctx {
            graph: Graph::new(),
            params,
        }
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let value = self.params.value(name)?;
        Ok(self.graph.param(name, value))
    }

    pub fn params(&self) -> &ParamGroup {
        self.params
    }

    /// `conv(x, {name}.w) + {name}.b`
    pub fn conv(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{name}.w"))?;
        let b = self.param(&format!("{name}.b"))?;
        self.graph.conv2d(x, w, Some(b))
    }

    pub fn dense(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{name}.w"))?;
        let b = self.param(&format!("{name}.b"))?;
        self.graph.dense(x, w, b)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.graph.value(v)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(ctx: &mut Ctx, channels: usize, h: usize, w: usize) -> Self {
        LstmState {
            h: ctx.graph.input(Tensor::zeros([channels, h, w])),
            c: ctx.graph.input(Tensor::zeros([channels, h, w])),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LocalFeatures {
    /// `F^o`
    pub origin: Var,
    /// `F^d`, absent when the destination view is disabled.
    pub dest: Option<Var>,
    /// `F^l`
    pub local: Var,
}

fn view_stack(ctx: &mut Ctx, cfg: &CstnConfig, view: &str, mut x: Var) -> Result<Var> {
    for layer in 0..cfg.lsc_layers {
        let y = ctx.conv(&format!("lsc.{view}.{layer}"), x)?;
        x = ctx.graph.relu(y);
    }
    Ok(x)
}

/// Two-view local spatial context: conv/ReLU stacks over the OD tensor and
/// its destination-major transpose, fused by a linear convolution.
pub fn lsc_forward(ctx: &mut Ctx, cfg: &CstnConfig, x: Var) -> Result<LocalFeatures> {
    let n = ctx.value(x).shape().first().copied().unwrap_or(0);
    if n != cfg.regions() {
        return Err(Error::shape(
            "lsc_forward",
            format!("input has {n} channels, grid has {} regions", cfg.regions()),
        ));
    }
    let origin = view_stack(ctx, cfg, "origin", x)?;
    let (dest, cat) = if cfg.destination_view_enabled {
        let xt = ctx.graph.transpose_od(x)?;
        let d = view_stack(ctx, cfg, "dest", xt)?;
        (Some(d), ctx.graph.concat_channels(origin, d)?)
    } else {
        (None, origin)
    };
    let local = ctx.conv("lsc.fuse", cat)?;
    Ok(LocalFeatures { origin, dest, local })
}

/// MLP embedding of the meteorology vector, tiled over the grid and fused
/// with `F^l`. Returns `(F^m, F^lm)`; without meteorology `F^lm` is the
/// fusion convolution of `F^l` alone.
pub fn meteo_embed_fuse(
    ctx: &mut Ctx,
    cfg: &CstnConfig,
    local: Var,
    meteo: Var,
) -> Result<(Option<Var>, Var)> {
    if !cfg.meteo_enabled {
        return Ok((None, ctx.conv("tec.fuse", local)?));
    }
    let len = ctx.value(meteo).len();
    if len != cfg.meteo_dim() || ctx.value(meteo).ndim() != 1 {
        return Err(Error::shape(
            "meteo_embed_fuse",
            format!("meteorology vector has {len} entries, expected {}", cfg.meteo_dim()),
        ));
    }
    let h1 = ctx.dense("tec.mlp.0", meteo)?;
    let h1 = ctx.graph.relu(h1);
    let h2 = ctx.dense("tec.mlp.1", h1)?;
    let h2 = ctx.graph.relu(h2);
    let e = ctx.dense("tec.mlp.2", h2)?;
    let fm = ctx.graph.tile(e, cfg.h, cfg.w)?;
    let cat = ctx.graph.concat_channels(local, fm)?;
    Ok((Some(fm), ctx.conv("tec.fuse", cat)?))
}

/// One peephole ConvLSTM update. `{prefix}.w_x`/`{prefix}.w_h` stack the
/// input, forget, cell and output gate kernels in that order along the
/// output channel axis; `{prefix}.b` holds the four gate biases.
pub fn convlstm_step(ctx: &mut Ctx, prefix: &str, x: Var, state: &LstmState) -> Result<LstmState> {
    let wx = ctx.param(&format!("{prefix}.w_x"))?;
    let wh = ctx.param(&format!("{prefix}.w_h"))?;
    let b = ctx.param(&format!("{prefix}.b"))?;
    let w_ci = ctx.param(&format!("{prefix}.w_ci"))?;
    let w_cf = ctx.param(&format!("{prefix}.w_cf"))?;
    let w_co = ctx.param(&format!("{prefix}.w_co"))?;
    let l = ctx.value(w_ci).shape()[0];
    let (hs, cs) = (ctx.value(state.h).shape(), ctx.value(state.c).shape());
    if hs != cs || hs[0] != l || hs[1..] != ctx.value(x).shape()[1..] || hs != ctx.value(w_ci).shape() {
        return Err(Error::shape(
            "convlstm_step",
            format!(
                "input {:?}, state {hs:?}/{cs:?}, peephole {:?}",
                ctx.value(x).shape(),
                ctx.value(w_ci).shape()
            ),
        ));
    }

    let g = &mut ctx.graph;
    let gx = g.conv2d(x, wx, Some(b))?;
    let gh = g.conv2d(state.h, wh, None)?;
    let pre = g.add(gx, gh)?;
    let gate = |g: &mut Graph, k: usize| g.slice_channels(pre, k * l, l);

    let pi = gate(g, 0)?;
    let pc = g.hadamard(w_ci, state.c)?;
    let pi = g.add(pi, pc)?;
    let i = g.sigmoid(pi);

    let pf = gate(g, 1)?;
    let pc = g.hadamard(w_cf, state.c)?;
    let pf = g.add(pf, pc)?;
    let f = g.sigmoid(pf);

    let cand = gate(g, 2)?;
    let cand = g.tanh(cand);
    let keep = g.hadamard(f, state.c)?;
    let write = g.hadamard(i, cand)?;
    let c = g.add(keep, write)?;

    let po = gate(g, 3)?;
    let pc = g.hadamard(w_co, c)?;
    let po = g.add(po, pc)?;
    let o = g.sigmoid(po);
    let tc = g.tanh(c);
    let h = g.hadamard(o, tc)?;
    Ok(LstmState { h, c })
}

/// Per-interval features of the temporal module.
#[derive(Clone, Copy, Debug)]
pub struct StepFeatures {
    pub local: LocalFeatures,
    pub meteo: Option<Var>,
    pub local_meteo: Var,
}

#[derive(Clone, Debug)]
pub struct TemporalFeatures {
    pub steps: Vec<StepFeatures>,
    /// Final ConvLSTM state; `None` with the temporal module disabled.
    pub state: Option<LstmState>,
    /// `F^lt`
    pub lt: Var,
}

/// Local features of every input interval fed through the ConvLSTM from a
/// zero state, then projected to `C_lt` channels. With the temporal module
/// disabled only the most recent interval is used.
pub fn tec_forward(ctx: &mut Ctx, cfg: &CstnConfig, inputs: &[Var], meteo: &[Var]) -> Result<TemporalFeatures> {
    if inputs.is_empty() || inputs.len() != meteo.len() {
        return Err(Error::InvalidArgument(format!(
            "{} demand inputs with {} meteorology inputs",
            inputs.len(),
            meteo.len()
        )));
    }
    let first = if cfg.tec_enabled { 0 } else { inputs.len() - 1 };
    let mut steps = Vec::with_capacity(inputs.len() - first);
    for (&x, &m) in inputs[first..].iter().zip(&meteo[first..]) {
        let local = lsc_forward(ctx, cfg, x)?;
        let (fm, flm) = meteo_embed_fuse(ctx, cfg, local.local, m)?;
        steps.push(StepFeatures {
            local,
            meteo: fm,
            local_meteo: flm,
        });
    }
    if !cfg.tec_enabled {
        let last = steps.last().expect("one step").local_meteo;
        let lt = ctx.conv("tec.lt", last)?;
        return Ok(TemporalFeatures { steps, state: None, lt });
    }
    let mut state = LstmState::zeros(ctx, cfg.lstm_channels, cfg.h, cfg.w);
    for s in &steps {
        state = convlstm_step(ctx, "tec.lstm", s.local_meteo, &state)?;
    }
    let lt = ctx.conv("tec.lt", state.h)?;
    Ok(TemporalFeatures {
        steps,
        state: Some(state),
        lt,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct GlobalFeatures {
    /// `F_s` reshaped to `C_s×N`.
    pub embed: Option<Var>,
    /// Column-softmaxed `N×N` similarity.
    pub similarity: Option<Var>,
    /// `F^g`
    pub global: Option<Var>,
    /// `F^ltg`, or `F^lt` itself with the global module disabled.
    pub fused: Var,
}

/// Similarity-weighted mixing of all regions' features.
pub fn gcc_forward(ctx: &mut Ctx, cfg: &CstnConfig, lt: Var) -> Result<GlobalFeatures> {
    if !cfg.gcc_enabled {
        return Ok(GlobalFeatures {
            embed: None,
            similarity: None,
            global: None,
            fused: lt,
        });
    }
    let n = cfg.regions();
    let clt = ctx.value(lt).shape()[0];
    let fs = ctx.conv("gcc.sim", lt)?;
    let cs = ctx.value(fs).shape()[0];
    let g = &mut ctx.graph;
    let fs = g.reshape(fs, &[cs, n])?;
    let fst = g.transpose(fs)?;
    let scores = g.matmul(fst, fs)?;
    let s = g.softmax_columns(scores)?;
    let flat = g.reshape(lt, &[clt, n])?;
    let mixed = g.matmul(flat, s)?;
    let global = g.reshape(mixed, &[clt, cfg.h, cfg.w])?;
    let fused = g.concat_channels(lt, global)?;
    Ok(GlobalFeatures {
        embed: Some(fs),
        similarity: Some(s),
        global: Some(global),
        fused,
    })
}

/// `tanh` of a 1×1 convolution with one filter per region.
pub fn predict_head(ctx: &mut Ctx, fused: Var) -> Result<Var> {
    let y = ctx.conv("gcc.head", fused)?;
    Ok(ctx.graph.tanh(y))
}

/// All nodes of one CSTN evaluation.
#[derive(Clone, Debug)]
pub struct CstnNodes {
    pub temporal: TemporalFeatures,
    pub global: GlobalFeatures,
    pub prediction: Var,
}

pub fn cstn_graph(ctx: &mut Ctx, cfg: &CstnConfig, inputs: &[Var], meteo: &[Var]) -> Result<CstnNodes> {
    let temporal = tec_forward(ctx, cfg, inputs, meteo)?;
    let global = gcc_forward(ctx, cfg, temporal.lt)?;
    let prediction = predict_head(ctx, global.fused)?;
    Ok(CstnNodes {
        temporal,
        global,
        prediction,
    })
}

/// Encoder as in CSTN, then `m` steps of a shared decoder ConvLSTM started
/// from the encoder state. Each step reads the previous hidden state through
/// a 1×1 projection and predicts through the shared `F^lt`/global/head path.
pub fn lcstn_graph(ctx: &mut Ctx, cfg: &CstnConfig, inputs: &[Var], meteo: &[Var], m: usize) -> Result<Vec<Var>> {
    if !cfg.long_term {
        return Err(Error::InvalidArgument("model has no long-term decoder".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("decode horizon must be at least 1".into()));
    }
    let temporal = tec_forward(ctx, cfg, inputs, meteo)?;
    let mut state = temporal.state.expect("long-term models keep the temporal module");
    let mut preds = Vec::with_capacity(m);
    let mut x = ctx.conv("dec.proj", state.h)?;
    for step in 0..m {
        state = convlstm_step(ctx, "dec.lstm", x, &state)?;
        let lt = ctx.conv("tec.lt", state.h)?;
        let global = gcc_forward(ctx, cfg, lt)?;
        preds.push(predict_head(ctx, global.fused)?);
        if step + 1 < m {
            x = ctx.conv("dec.proj", state.h)?;
        }
    }
    Ok(preds)
}

/// Intermediate values of one CSTN evaluation, taken at the last input
/// interval where a feature is computed per interval.
#[derive(Clone, Debug)]
pub struct FeatureTrace {
    pub origin: Tensor,
    pub dest: Option<Tensor>,
    pub local: Tensor,
    pub meteo: Option<Tensor>,
    pub local_meteo: Tensor,
    pub hidden: Option<Tensor>,
    pub cell: Option<Tensor>,
    pub lt: Tensor,
    pub sim_embed: Option<Tensor>,
    pub similarity: Option<Tensor>,
    pub global: Option<Tensor>,
    pub fused: Tensor,
    pub prediction: Tensor,
}

const FORGET_BIAS: f64 = 1.0;
/// Largest magnitude the calibrated output may take, keeping `atanh` finite.
const OUTPUT_LIMIT: f64 = 0.99;

/// CSTN / L-CSTN parameters together with their architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct Cstn {
    pub config: CstnConfig,
    pub params: ParamGroup,
}

impl Cstn {
    /// Xavier-uniform weights (drawn in parameter-name order from one seeded
    /// stream), zero peephole weights and zero biases except the ConvLSTM
    /// forget gates, which start at 1 so the cell state is carried early on.
    pub fn init(config: CstnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamGroup::new();
        let l = config.lstm_channels;
        for (name, shape) in config.param_shapes() {
            let is_weight = name.ends_with(".w") || name.ends_with(".w_x") || name.ends_with(".w_h");
            let mut value = if is_weight {
                xavier_uniform_with(&shape, &mut rng)
            } else {
                Tensor::zeros(shape)
            };
            if name.ends_with("lstm.b") {
                value.data_mut()[l..2 * l].fill(FORGET_BIAS);
            }
            params.insert(name, value);
        }
        Ok(Cstn { config, params })
    }

    /// Sets the output bias so a fresh model predicts the mean normalized
    /// target of `windows`, instead of the midpoint of the range. Sparse OD
    /// targets sit near the bottom of the range, and starting from the
    /// midpoint leaves training on a long plateau.
    pub fn calibrate_output(&mut self, windows: &[SampleWindow]) -> Result<()> {
        let (sum, count) = windows
            .iter()
            .flat_map(|w| w.targets.iter())
            .fold((0.0, 0usize), |(s, c), t| (s + t.sum(), c + t.len()));
        if count == 0 {
            return Err(Error::InvalidArgument("no targets to calibrate against".into()));
        }
        let mean = (sum / count as f64).clamp(-OUTPUT_LIMIT, OUTPUT_LIMIT);
        self.params.value_mut("gcc.head.b")?.data_mut().fill(mean.atanh());
        Ok(())
    }

    /// Checks that the parameter set is exactly the one the config implies.
    pub fn check_params(config: &CstnConfig, params: &ParamGroup) -> Result<()> {
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::ConfigMismatch(format!(
                "configuration implies {} tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in expected {
            let v = params
                .value(&name)
                .map_err(|_| Error::ConfigMismatch(format!("missing parameter `{name}`")))?;
            if v.shape() != shape.as_slice() {
                return Err(Error::ConfigMismatch(format!(
                    "`{name}` has shape {:?}, configuration implies {shape:?}",
                    v.shape()
                )));
            }
        }
        Ok(())
    }

    fn feed(ctx: &mut Ctx, window: &SampleWindow) -> (Vec<Var>, Vec<Var>) {
        let xs = window.inputs.iter().map(|t| ctx.graph.input((**t).clone())).collect();
        let ms = window
            .meteo
            .iter()
            .map(|m| ctx.graph.input(Tensor::new([m.len()], (**m).clone()).expect("vector")))
            .collect();
        (xs, ms)
    }

    fn check_window(&self, window: &SampleWindow) -> Result<()> {
        if window.n() != self.config.n_steps {
            return Err(Error::InvalidArgument(format!(
                "window has {} inputs, model expects {}",
                window.n(),
                self.config.n_steps
            )));
        }
        Ok(())
    }

    /// Builds the forward graph for `window`; returns one prediction node per
    /// target interval.
    pub fn forward_graph(&self, ctx: &mut Ctx, window: &SampleWindow) -> Result<Vec<Var>> {
        self.check_window(window)?;
        let (xs, ms) = Self::feed(ctx, window);
        if self.config.long_term {
            lcstn_graph(ctx, &self.config, &xs, &ms, self.config.horizon)
        } else {
            Ok(vec![cstn_graph(ctx, &self.config, &xs, &ms)?.prediction])
        }
    }

    /// Mean squared error against the window targets, averaged over the
    /// predicted intervals.
    pub fn loss_graph(&self, ctx: &mut Ctx, window: &SampleWindow) -> Result<Var> {
        let preds = self.forward_graph(ctx, window)?;
        if window.m() < preds.len() {
            return Err(Error::InvalidArgument(format!(
                "window has {} targets, model predicts {}",
                window.m(),
                preds.len()
            )));
        }
        let mut total: Option<Var> = None;
        for (p, t) in preds.iter().zip(&window.targets) {
            let t = ctx.graph.input((**t).clone());
            let l = crate::train::euclidean_loss_graph(&mut ctx.graph, *p, t)?;
            total = Some(match total {
                None => l,
                Some(acc) => ctx.graph.add(acc, l)?,
            });
        }
        let total = total.expect("at least one prediction");
        Ok(ctx.graph.scale(total, 1.0 / preds.len() as f64))
    }

    /// Normalized predictions for the intervals after the window.
    pub fn predict(&self, window: &SampleWindow) -> Result<Vec<Tensor>> {
        let mut ctx = Ctx::new(&self.params);
        let preds = self.forward_graph(&mut ctx, window)?;
        Ok(preds.into_iter().map(|p| ctx.value(p).clone()).collect())
    }

    /// Evaluates a plain CSTN and returns every named intermediate feature.
    pub fn trace(&self, window: &SampleWindow) -> Result<FeatureTrace> {
        self.check_window(window)?;
        let mut ctx = Ctx::new(&self.params);
        let (xs, ms) = Self::feed(&mut ctx, window);
        let nodes = cstn_graph(&mut ctx, &self.config, &xs, &ms)?;
        let step = nodes.temporal.steps.last().expect("one step");
        let get = |v: Var| ctx.value(v).clone();
        Ok(FeatureTrace {
            origin: get(step.local.origin),
            dest: step.local.dest.map(get),
            local: get(step.local.local),
            meteo: step.meteo.map(get),
            local_meteo: get(step.local_meteo),
            hidden: nodes.temporal.state.map(|s| get(s.h)),
            cell: nodes.temporal.state.map(|s| get(s.c)),
            lt: get(nodes.temporal.lt),
            sim_embed: nodes.global.embed.map(get),
            similarity: nodes.global.similarity.map(get),
            global: nodes.global.global.map(get),
            fused: get(nodes.global.fused),
            prediction: get(nodes.prediction),
        })
    }
}
