//! Reference predictors: historical averages, least squares on the recent
//! history and a per-channel MLP. All work on normalized tensors.

mod ha;
mod mlp;
mod olsr;

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub use ha::{ha_rec_predict, HaAll, HaRec};
pub use mlp::{MlpBaseline, MLP_HIDDEN};
pub use olsr::{LeastSquares, Olsr, DEFAULT_JITTER};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    HaAll,
    HaRec,
    Olsr,
    Mlp,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [BaselineKind::HaAll, BaselineKind::HaRec, BaselineKind::Olsr, BaselineKind::Mlp];

    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::HaAll => "ha-all",
            BaselineKind::HaRec => "ha-rec",
            BaselineKind::Olsr => "olsr",
            BaselineKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline `{s}` (ha-all, ha-rec, olsr, mlp)")))
    }
}

#[cfg(test)]
mod tests;
