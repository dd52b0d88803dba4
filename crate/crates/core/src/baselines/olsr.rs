use nalgebra::{Cholesky, DMatrix, DVector};

use crate::data::{NormStats, SampleWindow};
use crate::error::{Error, Result};
use crate::eval::Forecaster;
use crate::tensor::Tensor;

/// Default ridge term added to the normal equations.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Affine map fitted by least squares on centred data, with a small ridge
/// term on the weights (never on the intercept).
#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquares {
    /// `features × outputs`
    pub weights: DMatrix<f64>,
    pub intercept: DVector<f64>,
}

impl LeastSquares {
    /// Rows of `x` and `y` are samples. Uses the primal normal equations when
    /// there are fewer features than samples and the dual (Gram) form
    /// otherwise; both give the same ridge solution.
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        let (s, f) = x.shape();
        if s == 0 || y.nrows() != s {
            return Err(Error::InvalidArgument(format!("{s} feature rows, {} target rows", y.nrows())));
        }
        if !(jitter >= 0.0) {
            return Err(Error::InvalidArgument(format!("jitter {jitter}")));
        }
        let x_mean = x.row_mean();
        let y_mean = y.row_mean();
        let mut xc = x.clone();
        for mut row in xc.row_iter_mut() {
            row -= &x_mean;
        }
        let mut yc = y.clone();
        for mut row in yc.row_iter_mut() {
            row -= &y_mean;
        }
        let singular = || Error::InvalidArgument("normal equations are singular; increase the jitter".into());
        let weights = if f <= s {
            let mut gram = xc.tr_mul(&xc);
            for i in 0..f {
                gram[(i, i)] += jitter;
            }
            let chol = Cholesky::new(gram).ok_or_else(singular)?;
            chol.solve(&xc.tr_mul(&yc))
        } else {
            let mut gram = &xc * xc.transpose();
            for i in 0..s {
                gram[(i, i)] += jitter;
            }
            let chol = Cholesky::new(gram).ok_or_else(singular)?;
            xc.tr_mul(&chol.solve(&yc))
        };
        let intercept = (y_mean - x_mean * &weights).transpose();
        Ok(LeastSquares { weights, intercept })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.weights.nrows() {
            return Err(Error::shape(
                "least_squares",
                format!("{} features, model has {}", x.len(), self.weights.nrows()),
            ));
        }
        let x = DVector::from_column_slice(x);
        Ok((self.weights.tr_mul(&x) + &self.intercept).iter().copied().collect())
    }

    /// Root mean squared residual on a data set.
    pub fn residual(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        let mut pred = x * &self.weights;
        for mut row in pred.row_iter_mut() {
            row += self.intercept.transpose();
        }
        ((pred - y).norm_squared() / y.len() as f64).sqrt()
    }
}

/// Linear regression from the concatenated last `n` inputs to the next
/// interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Olsr {
    pub n: usize,
    pub fit: LeastSquares,
    shape: Vec<usize>,
    /// Normalized value of a zero count; predictions are clamped here.
    floor: f64,
}

fn features(window: &SampleWindow, n: usize) -> Result<Vec<f64>> {
    let k = window.inputs.len();
    if k < n {
        return Err(Error::InvalidArgument(format!("window has {k} inputs, need {n}")));
    }
    Ok(window.inputs[k - n..].iter().flat_map(|t| t.data().iter().copied()).collect())
}

impl Olsr {
    pub fn fit(windows: &[SampleWindow], n: usize, norm: &NormStats, jitter: f64) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidArgument("no training windows".into()))?;
        let shape = first.targets[0].shape().to_vec();
        let rows = windows.iter().map(|w| features(w, n)).collect::<Result<Vec<_>>>()?;
        let f = rows[0].len();
        let x = DMatrix::from_fn(rows.len(), f, |r, c| rows[r][c]);
        let outputs = first.targets[0].len();
        let y = DMatrix::from_fn(windows.len(), outputs, |r, c| windows[r].targets[0].data()[c]);
        Ok(Olsr {
            n,
            fit: LeastSquares::fit(&x, &y, jitter)?,
            shape,
            floor: norm.forward(0.0)?,
        })
    }
}

impl Forecaster for Olsr {
    fn name(&self) -> String {
        "olsr".into()
    }

    fn forecast(&self, window: &SampleWindow) -> Result<Tensor> {
        let y = self.fit.predict(&features(window, self.n)?)?;
        Ok(Tensor::new(self.shape.clone(), y)?.map(|v| v.max(self.floor)))
    }
}
