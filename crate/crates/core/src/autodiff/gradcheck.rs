//! Central-difference validation of tape gradients.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-input outcome of [`check_gradients`].
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Worst relative error for each input, in input order.
    pub per_input: Vec<f64>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.per_input.iter().fold(0.0, |m, &e| m.max(e))
    }
}

/// Compares the tape gradient of a scalar function with central differences.
///
/// Returns `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn finite_difference_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let report = check_gradients(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)?;
    Ok(report.max_relative_error())
}

/// Multi-input variant: `f` receives one tracked leaf per entry of `inputs`.
pub fn check_gradients<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| grads.get_or_zeros(v, x))
        .collect();

    let mut work = inputs.to_vec();
    let mut per_input = Vec::with_capacity(inputs.len());
    for (which, grad) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..grad.len() {
            let orig = work[which].data()[j];
            work[which].data_mut()[j] = orig + eps;
            let plus = eval(&work)?;
            work[which].data_mut()[j] = orig - eps;
            let minus = eval(&work)?;
            work[which].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[j];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
        per_input.push(worst);
    }
    Ok(GradCheckReport { per_input })
}
