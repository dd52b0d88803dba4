//! Forward and backward kernels operating on plain tensors.
//!
//! The graph in [`super::Graph`] records calls to these functions; they are
//! also usable directly when no gradient is needed.

use super::Tensor;
use crate::error::{Error, Result};

/// `out[P×R] = a[P×Q] · b[Q×R]` on raw row-major buffers.
pub(crate) fn gemm(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let row = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * r..(k + 1) * r];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `out[P×R] = a[P×Q] · b[R×Q]ᵀ`.
pub(crate) fn gemm_a_bt(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let arow = &a[i * q..(i + 1) * q];
        for j in 0..r {
            let brow = &b[j * q..(j + 1) * q];
            out[i * r + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `out[P×R] = a[Q×P]ᵀ · b[Q×R]`.
pub(crate) fn gemm_at_b(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for k in 0..q {
        let brow = &b[k * r..(k + 1) * r];
        for i in 0..p {
            let aki = a[k * p + i];
            if aki == 0.0 {
                continue;
            }
            let row = &mut out[i * r..(i + 1) * r];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aki * bv;
            }
        }
    }
    out
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.ndim() != rank {
        return Err(Error::shape(
            op,
            format!("expected rank {rank}, got shape {:?}", t.shape()),
        ));
    }
    Ok(())
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank("matmul", a, 2)?;
    expect_rank("matmul", b, 2)?;
    let (p, q) = (a.shape()[0], a.shape()[1]);
    let (q2, r) = (b.shape()[0], b.shape()[1]);
    if q != q2 {
        return Err(Error::shape(
            "matmul",
            format!("inner dimensions {:?} · {:?}", a.shape(), b.shape()),
        ));
    }
    Tensor::new([p, r], gemm(a.data(), b.data(), p, q, r))
}

/// Gradients of `a·b` given the upstream gradient.
pub fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> (Tensor, Tensor) {
    let (p, q, r) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let ga = gemm_a_bt(grad.data(), b.data(), p, r, q);
    let gb = gemm_at_b(a.data(), grad.data(), q, p, r);
    (
        Tensor::new([p, q], ga).expect("shape"),
        Tensor::new([q, r], gb).expect("shape"),
    )
}

pub fn transpose2(a: &Tensor) -> Result<Tensor> {
    expect_rank("transpose", a, 2)?;
    let (r, c) = (a.shape()[0], a.shape()[1]);
    let d = a.data();
    Ok(Tensor::from_fn([c, r], |k| {
        let (i, j) = (k / r, k % r);
        d[j * c + i]
    }))
}

pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "hadamard",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    a.zip_map(b, |x, y| x * y)
}

pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank("dense", weights, 2)?;
    let (out, inp) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != inp || input.ndim() != 1 {
        return Err(Error::shape(
            "dense",
            format!("weights {:?} applied to input {:?}", weights.shape(), input.shape()),
        ));
    }
    if bias.shape() != [out] {
        return Err(Error::shape(
            "dense",
            format!("bias {:?} for {out} outputs", bias.shape()),
        ));
    }
    let mut y = gemm(weights.data(), input.data(), out, inp, 1);
    for (o, b) in y.iter_mut().zip(bias.data()) {
        *o += b;
    }
    Tensor::new([out], y)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward(input: &Tensor, weights: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (out, inp) = (weights.shape()[0], weights.shape()[1]);
    let gx = gemm_at_b(weights.data(), grad.data(), inp, out, 1);
    let gw = gemm(grad.data(), input.data(), out, 1, inp);
    (
        Tensor::new([inp], gx).expect("shape"),
        Tensor::new([out, inp], gw).expect("shape"),
        grad.clone(),
    )
}

struct ConvGeom {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
}

impl ConvGeom {
    fn check(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<Self> {
        expect_rank("conv2d", input, 3)?;
        expect_rank("conv2d", weights, 4)?;
        let ws = weights.shape();
        let (cout, cin, k) = (ws[0], ws[1], ws[2]);
        if ws[3] != k || k % 2 == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square with odd size, got {ws:?}"),
            ));
        }
        if input.shape()[0] != cin {
            return Err(Error::shape(
                "conv2d",
                format!(
                    "input has {} channels but weights {ws:?} expect {cin}",
                    input.shape()[0]
                ),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias {:?} for {cout} output channels", b.shape()),
                ));
            }
        }
        Ok(ConvGeom {
            cin,
            cout,
            h: input.shape()[1],
            w: input.shape()[2],
            k,
        })
    }

    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.h * self.w
    }

    /// Unfolds the zero-padded input into a `(cin·k·k) × (h·w)` matrix.
    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let (h, w, k) = (self.h as isize, self.w as isize, self.k);
        let pad = (k / 2) as isize;
        let hw = self.pixels();
        let mut cols = vec![0.0; self.rows() * hw];
        for c in 0..self.cin {
            let plane = &input[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * hw..(row + 1) * hw];
                    let (dy, dx) = (ky as isize - pad, kx as isize - pad);
                    for y in 0..h {
                        let sy = y + dy;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x + dx;
                            if sx < 0 || sx >= w {
                                continue;
                            }
                            dst[(y * w + x) as usize] = plane[(sy * w + sx) as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let (h, w, k) = (self.h as isize, self.w as isize, self.k);
        let pad = (k / 2) as isize;
        let hw = self.pixels();
        let mut out = vec![0.0; self.cin * hw];
        for c in 0..self.cin {
            let plane = &mut out[c * hw..(c + 1) * hw];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * hw..(row + 1) * hw];
                    let (dy, dx) = (ky as isize - pad, kx as isize - pad);
                    for y in 0..h {
                        let sy = y + dy;
                        if sy < 0 || sy >= h {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x + dx;
                            if sx < 0 || sx >= w {
                                continue;
                            }
                            plane[(sy * w + sx) as usize] += src[(y * w + x) as usize];
                        }
                    }
                }
            }
        }
        out
    }
}

/// "Same" 2-D cross-correlation with stride 1 and zero padding `(k-1)/2`.
///
/// `input` is `C_in×H×W`, `weights` is `C_out×C_in×k×k`, `bias` is `C_out`.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let g = ConvGeom::check(input, weights, bias)?;
    let hw = g.pixels();
    let mut out = if g.k == 1 {
        gemm(weights.data(), input.data(), g.cout, g.cin, hw)
    } else {
        let cols = g.im2col(input.data());
        gemm(weights.data(), &cols, g.cout, g.rows(), hw)
    };
    if let Some(b) = bias {
        for (co, &bv) in b.data().iter().enumerate() {
            for o in &mut out[co * hw..(co + 1) * hw] {
                *o += bv;
            }
        }
    }
    Tensor::new([g.cout, g.h, g.w], out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`; the bias gradient is
/// always computed since it is just the per-channel sum of `grad`.
pub fn conv2d_backward(input: &Tensor, weights: &Tensor, grad: &Tensor) -> (Tensor, Tensor, Tensor) {
    let g = ConvGeom::check(input, weights, None).expect("validated in forward");
    let hw = g.pixels();
    let (gin, gw) = if g.k == 1 {
        (
            gemm_at_b(weights.data(), grad.data(), g.cin, g.cout, hw),
            gemm_a_bt(grad.data(), input.data(), g.cout, hw, g.cin),
        )
    } else {
        let cols = g.im2col(input.data());
        let gw = gemm_a_bt(grad.data(), &cols, g.cout, hw, g.rows());
        let gcols = gemm_at_b(weights.data(), grad.data(), g.rows(), g.cout, hw);
        (g.col2im(&gcols), gw)
    };
    let gb: Vec<f64> = (0..g.cout)
        .map(|co| grad.data()[co * hw..(co + 1) * hw].iter().sum())
        .collect();
    (
        Tensor::new(input.shape().to_vec(), gin).expect("shape"),
        Tensor::new(weights.shape().to_vec(), gw).expect("shape"),
        Tensor::new([g.cout], gb).expect("shape"),
    )
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Softmax applied independently to every column of an `R×C` matrix.
pub fn softmax_columns(input: &Tensor) -> Result<Tensor> {
    expect_rank("softmax_columns", input, 2)?;
    let (r, c) = (input.shape()[0], input.shape()[1]);
    let x = input.data();
    let mut out = vec![0.0; r * c];
    for j in 0..c {
        let max = (0..r).map(|i| x[i * c + j]).fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for i in 0..r {
            let e = (x[i * c + j] - max).exp();
            out[i * c + j] = e;
            total += e;
        }
        for i in 0..r {
            out[i * c + j] /= total;
        }
    }
    Tensor::new([r, c], out)
}

pub fn softmax_columns_backward(output: &Tensor, grad: &Tensor) -> Tensor {
    let (r, c) = (output.shape()[0], output.shape()[1]);
    let (y, g) = (output.data(), grad.data());
    let mut gx = vec![0.0; r * c];
    for j in 0..c {
        let dot: f64 = (0..r).map(|i| y[i * c + j] * g[i * c + j]).sum();
        for i in 0..r {
            gx[i * c + j] = y[i * c + j] * (g[i * c + j] - dot);
        }
    }
    Tensor::new([r, c], gx).expect("shape")
}

/// Stacks the channels of `a` followed by those of `b`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank("concat_channels", a, 3)?;
    expect_rank("concat_channels", b, 3)?;
    if a.shape()[1..] != b.shape()[1..] {
        return Err(Error::shape(
            "concat_channels",
            format!("spatial dims {:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new([a.shape()[0] + b.shape()[0], a.shape()[1], a.shape()[2]], data)
}

pub fn slice_channels(input: &Tensor, start: usize, len: usize) -> Result<Tensor> {
    expect_rank("slice_channels", input, 3)?;
    let s = input.shape();
    if start + len > s[0] {
        return Err(Error::shape(
            "slice_channels",
            format!("channels {start}..{} of {s:?}", start + len),
        ));
    }
    let plane = s[1] * s[2];
    Tensor::new(
        [len, s[1], s[2]],
        input.data()[start * plane..(start + len) * plane].to_vec(),
    )
}

/// Broadcasts a `D` vector to `D×H×W`.
pub fn tile(input: &Tensor, h: usize, w: usize) -> Result<Tensor> {
    expect_rank("tile", input, 1)?;
    let d = input.len();
    let hw = h * w;
    let mut data = Vec::with_capacity(d * hw);
    for &v in input.data() {
        data.extend(std::iter::repeat_n(v, hw));
    }
    Tensor::new([d, h, w], data)
}

/// Permutes an `N×H×W` OD tensor into its destination-major view:
/// `out[o, i_d, j_d] = x[d, i_o, j_o]` with `o = W·i_o + j_o`, `d = W·i_d + j_d`.
pub fn transpose_od(x: &Tensor) -> Result<Tensor> {
    expect_rank("transpose_od", x, 3)?;
    let (n, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    if n != h * w {
        return Err(Error::shape(
            "transpose_od",
            format!("{n} channels on a {h}×{w} grid (need {})", h * w),
        ));
    }
    let flat = x.clone().reshape([n, n])?;
    transpose2(&flat)?.reshape([n, h, w])
}
