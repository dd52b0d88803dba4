use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Mean squared difference over all entries.
pub fn euclidean_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "euclidean_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let sq: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(sq / pred.len().max(1) as f64)
}

/// Recorded variant of [`euclidean_loss`].
pub fn euclidean_loss_graph(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    if g.value(pred).shape() != g.value(target).shape() {
        return Err(Error::shape(
            "euclidean_loss",
            format!("{:?} vs {:?}", g.value(pred).shape(), g.value(target).shape()),
        ));
    }
    let diff = g.sub(pred, target)?;
    Ok(g.mean_square(diff))
}
