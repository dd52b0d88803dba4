use std::collections::{BTreeMap, HashMap};

use super::{ops, ParamGroup, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => ops::relu(x),
            Activation::Sigmoid => ops::sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(String),
    Conv2d { input: Var, weights: Var, bias: Option<Var> },
    Dense { input: Var, weights: Var, bias: Var },
    Act { input: Var, kind: Activation },
    SoftmaxColumns { input: Var },
    Matmul { a: Var, b: Var },
    Transpose2 { input: Var },
    Hadamard { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Scale { input: Var, factor: f64 },
    Concat { a: Var, b: Var },
    Slice { input: Var, start: usize },
    Tile { input: Var },
    TransposeOd { input: Var },
    Reshape { input: Var },
    Sum { input: Var },
    MeanSquare { input: Var },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Conv2d { .. } => "conv2d",
            Op::Dense { .. } => "dense",
            Op::Act { .. } => "activation",
            Op::SoftmaxColumns { .. } => "softmax_columns",
            Op::Matmul { .. } => "matmul",
            Op::Transpose2 { .. } => "transpose",
            Op::Hadamard { .. } => "hadamard",
            Op::Add { .. } => "add",
            Op::Sub { .. } => "sub",
            Op::Scale { .. } => "scale",
            Op::Concat { .. } => "concat_channels",
            Op::Slice { .. } => "slice_channels",
            Op::Tile { .. } => "tile",
            Op::TransposeOd { .. } => "transpose_od",
            Op::Reshape { .. } => "reshape",
            Op::Sum { .. } => "sum",
            Op::MeanSquare { .. } => "mean_square",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of operations recorded during one forward pass.
///
/// Nodes are appended in evaluation order, so the reverse sweep in
/// [`Graph::backward`] visits every node after all of its consumers.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Registers a named learnable tensor. Repeated calls with the same name
    /// return the same node so gradients from every use accumulate.
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(value.clone(), Op::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn conv2d(&mut self, input: Var, weights: Var, bias: Option<Var>) -> Result<Var> {
        let y = ops::conv2d(
            self.value(input),
            self.value(weights),
            bias.map(|b| self.value(b)),
        )?;
        Ok(self.push(y, Op::Conv2d { input, weights, bias }))
    }

    pub fn dense(&mut self, input: Var, weights: Var, bias: Var) -> Result<Var> {
        let y = ops::dense(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(y, Op::Dense { input, weights, bias }))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let y = self.value(input).map(|x| kind.apply(x));
        self.push(y, Op::Act { input, kind })
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Tanh)
    }

    pub fn softmax_columns(&mut self, input: Var) -> Result<Var> {
        let y = ops::softmax_columns(self.value(input))?;
        Ok(self.push(y, Op::SoftmaxColumns { input }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::matmul(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Matmul { a, b }))
    }

    pub fn transpose(&mut self, input: Var) -> Result<Var> {
        let y = ops::transpose2(self.value(input))?;
        Ok(self.push(y, Op::Transpose2 { input }))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::hadamard(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Hadamard { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(y, Op::Sub { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let y = self.value(input).map(|x| x * factor);
        self.push(y, Op::Scale { input, factor })
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::concat_channels(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::Concat { a, b }))
    }

    pub fn slice_channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let y = ops::slice_channels(self.value(input), start, len)?;
        Ok(self.push(y, Op::Slice { input, start }))
    }

    pub fn tile(&mut self, input: Var, h: usize, w: usize) -> Result<Var> {
        let y = ops::tile(self.value(input), h, w)?;
        Ok(self.push(y, Op::Tile { input }))
    }

    pub fn transpose_od(&mut self, input: Var) -> Result<Var> {
        let y = ops::transpose_od(self.value(input))?;
        Ok(self.push(y, Op::TransposeOd { input }))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(input).clone().reshape(shape.to_vec())?;
        Ok(self.push(y, Op::Reshape { input }))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let y = Tensor::scalar(self.value(input).sum());
        self.push(y, Op::Sum { input })
    }

    /// Mean of squared entries, a scalar.
    pub fn mean_square(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let y = x.data().iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
        self.push(Tensor::scalar(y), Op::MeanSquare { input })
    }

    /// Locates the earliest node holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.nodes.iter().enumerate().find_map(|(i, n)| {
            (!n.value.all_finite()).then(|| match &n.op {
                Op::Param(name) => format!("parameter `{name}` (node {i})"),
                op => format!("{} output at node {i}, shape {:?}", op.name(), n.value.shape()),
            })
        })
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.value(loss).shape().to_vec()));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Input | Op::Param(_)) {
                continue;
            }
            // interior gradients are dropped once propagated; leaves are kept
            let Some(g) = grads[idx].take() else { continue };
            match node.op {
                Op::Input | Op::Param(_) => unreachable!(),
                Op::Conv2d { input, weights, bias } => {
                    let (gi, gw, gb) =
                        ops::conv2d_backward(self.value(input), self.value(weights), &g);
                    acc(&mut grads, input, gi);
                    acc(&mut grads, weights, gw);
                    if let Some(b) = bias {
                        acc(&mut grads, b, gb);
                    }
                }
                Op::Dense { input, weights, bias } => {
                    let (gi, gw, gb) = ops::dense_backward(self.value(input), self.value(weights), &g);
                    acc(&mut grads, input, gi);
                    acc(&mut grads, weights, gw);
                    acc(&mut grads, bias, gb);
                }
                Op::Act { input, kind } => {
                    let x = self.value(input);
                    let mut gi = g;
                    for ((gv, &xv), &yv) in gi.data_mut().iter_mut().zip(x.data()).zip(node.value.data()) {
                        *gv *= kind.derivative(xv, yv);
                    }
                    acc(&mut grads, input, gi);
                }
                Op::SoftmaxColumns { input } => {
                    acc(&mut grads, input, ops::softmax_columns_backward(&node.value, &g));
                }
                Op::Matmul { a, b } => {
                    let (ga, gb) = ops::matmul_backward(self.value(a), self.value(b), &g);
                    acc(&mut grads, a, ga);
                    acc(&mut grads, b, gb);
                }
                Op::Transpose2 { input } => {
                    acc(&mut grads, input, ops::transpose2(&g)?);
                }
                Op::Hadamard { a, b } => {
                    let ga = g.zip_map(self.value(b), |x, y| x * y)?;
                    let gb = g.zip_map(self.value(a), |x, y| x * y)?;
                    acc(&mut grads, a, ga);
                    acc(&mut grads, b, gb);
                }
                Op::Add { a, b } => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g);
                }
                Op::Sub { a, b } => {
                    acc(&mut grads, a, g.clone());
                    acc(&mut grads, b, g.map(|x| -x));
                }
                Op::Scale { input, factor } => {
                    acc(&mut grads, input, g.map(|x| x * factor));
                }
                Op::Concat { a, b } => {
                    let ca = self.value(a).shape()[0];
                    let cb = self.value(b).shape()[0];
                    acc(&mut grads, a, ops::slice_channels(&g, 0, ca)?);
                    acc(&mut grads, b, ops::slice_channels(&g, ca, cb)?);
                }
                Op::Slice { input, start } => {
                    let src = self.value(input);
                    let plane = src.shape()[1] * src.shape()[2];
                    let mut gi = Tensor::zeros(src.shape().to_vec());
                    gi.data_mut()[start * plane..start * plane + g.len()].copy_from_slice(g.data());
                    acc(&mut grads, input, gi);
                }
                Op::Tile { input } => {
                    let d = self.value(input).len();
                    let plane = g.len() / d.max(1);
                    let gi = Tensor::from_fn([d], |c| g.data()[c * plane..(c + 1) * plane].iter().sum());
                    acc(&mut grads, input, gi);
                }
                Op::TransposeOd { input } => {
                    // the permutation is an involution
                    acc(&mut grads, input, ops::transpose_od(&g)?);
                }
                Op::Reshape { input } => {
                    let shape = self.value(input).shape().to_vec();
                    acc(&mut grads, input, g.reshape(shape)?);
                }
                Op::Sum { input } => {
                    let gv = g.data()[0];
                    acc(&mut grads, input, Tensor::full(self.value(input).shape().to_vec(), gv));
                }
                Op::MeanSquare { input } => {
                    let x = self.value(input);
                    let k = 2.0 * g.data()[0] / x.len().max(1) as f64;
                    acc(&mut grads, input, x.map(|v| k * v));
                }
            }
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<String, Var>,
}

impl Gradients {
    /// Gradient of an input or parameter node; `None` if the loss does not
    /// depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Collects gradients for every parameter in `params`. Parameters the
    /// loss does not reach get exact zeros.
    pub fn record(&self, params: &ParamGroup) -> GradRecord {
        let mut out = GradRecord::zeros_like(params);
        for (name, &v) in &self.params {
            if let (Some(g), Some(slot)) = (self.get(v), out.grads.get_mut(name)) {
                slot.add_assign(g);
            }
        }
        out
    }
}

/// Parameter gradients keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradRecord {
    grads: BTreeMap<String, Tensor>,
}

impl GradRecord {
    pub fn zeros_like(params: &ParamGroup) -> Self {
        GradRecord {
            grads: params
                .iter()
                .map(|(name, slot)| (name.to_string(), Tensor::zeros(slot.value.shape().to_vec())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, grad: Tensor) {
        self.grads.insert(name.into(), grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds `other` entrywise; both records must cover the same names.
    pub fn accumulate(&mut self, other: &GradRecord) -> Result<()> {
        for (name, g) in &other.grads {
            let slot = self
                .grads
                .get_mut(name)
                .ok_or_else(|| Error::UnknownParam(name.clone()))?;
            if slot.shape() != g.shape() {
                return Err(Error::shape(
                    "grad_accumulate",
                    format!("`{name}`: {:?} vs {:?}", slot.shape(), g.shape()),
                ));
            }
            slot.add_assign(g);
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.values_mut() {
            g.scale(factor);
        }
    }

    /// Name of the first parameter whose gradient is not finite.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.grads
            .iter()
            .find(|(_, g)| !g.all_finite())
            .map(|(k, _)| k.as_str())
    }
}
