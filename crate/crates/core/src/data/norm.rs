use super::meteo::MeteoStats;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scaling statistics, always fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    /// One global bound pair for every OD entry.
    pub od_min: f64,
    pub od_max: f64,
    pub meteo: MeteoStats,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl NormStats {
    pub fn fit<'a>(
        od: impl IntoIterator<Item = &'a Tensor>,
        meteo: MeteoStats,
    ) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in od {
            for &v in t.data() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            lo = 0.0;
            hi = 0.0;
        }
        NormStats {
            od_min: lo,
            od_max: hi,
            meteo,
        }
    }

    fn span(&self) -> Result<f64> {
        let span = self.od_max - self.od_min;
        if !(span > 0.0) {
            return Err(Error::DegenerateStats(self.od_min));
        }
        Ok(span)
    }

    /// `2·(x − min)/(max − min) − 1`, mapping the training range onto `[−1, 1]`.
    pub fn forward(&self, x: f64) -> Result<f64> {
        Ok(2.0 * (x - self.od_min) / self.span()? - 1.0)
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        Ok((y + 1.0) * 0.5 * self.span()? + self.od_min)
    }

    pub fn normalize(&self, x: &Tensor, direction: Direction) -> Result<Tensor> {
        let span = self.span()?;
        let min = self.od_min;
        Ok(match direction {
            Direction::Forward => x.map(|v| 2.0 * (v - min) / span - 1.0),
            Direction::Inverse => x.map(|v| (v + 1.0) * 0.5 * span + min),
        })
    }
}
