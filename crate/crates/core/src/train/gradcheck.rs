use crate::error::{Error, Result};
use crate::model::Ctx;
use crate::tensor::{ParamGroup, Var};

/// Outcome of comparing recorded gradients with finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_err: f64,
    /// Parameter and flat index where it occurred.
    pub worst: (String, usize),
    /// Analytic and numeric values at the worst entry.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Gradients below this magnitude are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-7;

fn eval(params: &ParamGroup, loss: &impl Fn(&mut Ctx) -> Result<Var>) -> Result<f64> {
    let mut ctx = Ctx::new(params);
    let l = loss(&mut ctx)?;
    ctx.value(l)
        .item()
        .ok_or_else(|| Error::InvalidArgument("loss must be a single value".into()))
}

/// Checks up to `per_tensor` evenly spaced entries of every parameter against
/// a five-point central difference with step `eps`.
pub fn gradient_check(
    params: &ParamGroup,
    loss: impl Fn(&mut Ctx) -> Result<Var>,
    eps: f64,
    per_tensor: usize,
) -> Result<GradCheck> {
    let analytic = {
        let mut ctx = Ctx::new(params);
        let l = loss(&mut ctx)?;
        ctx.graph.backward(l)?.record(params)
    };
    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (String::new(), 0),
        worst_values: (0.0, 0.0),
        checked: 0,
    };
    let mut probe = params.clone();
    for (name, slot) in params.iter() {
        let len = slot.value.len();
        let count = per_tensor.min(len).max(1);
        let grad = analytic.get(name).expect("record covers every parameter");
        for k in 0..count {
            let idx = k * len / count;
            let orig = slot.value.data()[idx];
            let mut at = |delta: f64| -> Result<f64> {
                probe.value_mut(name)?.data_mut()[idx] = orig + delta;
                eval(&probe, &loss)
            };
            // five-point stencil: truncation O(eps^4), so a larger step keeps
            // cancellation error small
            let numeric = (-at(2.0 * eps)? + 8.0 * at(eps)? - 8.0 * at(-eps)? + at(-2.0 * eps)?) / (12.0 * eps);
            probe.value_mut(name)?.data_mut()[idx] = orig;
            let a = grad.data()[idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            if rel > report.max_rel_err || !rel.is_finite() {
                report.max_rel_err = rel;
                report.worst = (name.to_string(), idx);
                report.worst_values = (a, numeric);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
