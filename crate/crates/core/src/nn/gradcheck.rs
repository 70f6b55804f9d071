//! Central finite-difference verification of backprop gradients, in `f64`.

use super::{CnnModel, Mode, NnError, Tensor};

/// Worst-case disagreement for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub index: usize,
    pub shape: Vec<usize>,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

/// Gradients smaller than this are compared absolutely rather than relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares every parameter's backprop gradient against
/// `(L(w + eps) - L(w - eps)) / (2 eps)`. Dropout masks are seeded by
/// `mode`, so both perturbed evaluations see the same mask.
pub fn check_gradients(
    model: &CnnModel<f64>,
    batch: &Tensor<f64>,
    labels: &[usize],
    mode: Mode,
    eps: f64,
) -> Result<GradCheckReport, NnError> {
    let (_, grads) = model.loss_and_gradients(batch, labels, mode)?;
    let mut probe = model.clone();
    let mut tensors = Vec::with_capacity(grads.len());
    let mut checked = 0;
    for (ti, g) in grads.iter().enumerate() {
        let mut check = TensorCheck { index: ti, shape: g.shape().to_vec(), max_rel_error: 0.0, max_abs_error: 0.0 };
        for j in 0..g.len() {
            let orig = probe.parameters()[ti].data()[j];
            probe.parameters_mut()[ti].data_mut()[j] = orig + eps;
            let plus = probe.loss(batch, labels, mode)?;
            probe.parameters_mut()[ti].data_mut()[j] = orig - eps;
            let minus = probe.loss(batch, labels, mode)?;
            probe.parameters_mut()[ti].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = g.data()[j];
            check.max_rel_error = check.max_rel_error.max(relative_error(analytic, numeric));
            check.max_abs_error = check.max_abs_error.max((analytic - numeric).abs());
            checked += 1;
        }
        tensors.push(check);
    }
    Ok(GradCheckReport { tensors, checked })
}
