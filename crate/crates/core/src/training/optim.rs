use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::config::{OptimizerKind, TrainConfig};

/// Adam moments for a fixed, ordered parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            eps: c.adam_eps,
        }
    }
}

fn check_aligned(params: &[&mut Tensor], grads: &[Tensor], names: &[String], step: u64) -> Result<()> {
    if params.len() != grads.len() || params.len() != names.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} names",
            params.len(),
            grads.len(),
            names.len()
        )));
    }
    for ((p, g), name) in params.iter().zip(grads).zip(names) {
        if p.shape() != g.shape() {
            return Err(Error::dim("optimizer step", p.shape(), g.shape()));
        }
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient {
                step: step as usize,
                param: name.clone(),
            });
        }
    }
    Ok(())
}

/// One bias-corrected Adam update in parameter order.
///
/// Nothing is modified when any gradient is non-finite.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    names: &[String],
    state: &mut AdamState,
    hyper: AdamHyper,
) -> Result<()> {
    check_aligned(params, grads, names, state.t + 1)?;
    if state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "Adam state tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = hyper.beta1 * *mi + (1.0 - hyper.beta1) * gi;
            *vi = hyper.beta2 * *vi + (1.0 - hyper.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

/// Plain gradient descent.
pub fn sgd_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    names: &[String],
    learning_rate: f64,
    step: u64,
) -> Result<()> {
    check_aligned(params, grads, names, step)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pi, &gi) in p.data_mut().iter_mut().zip(g.data()) {
            *pi -= learning_rate * gi;
        }
    }
    Ok(())
}

/// Optimizer selected by [`TrainConfig::optimizer`].
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    hyper: AdamHyper,
    state: AdamState,
    steps: u64,
}

impl Optimizer {
    pub fn new<'a>(config: &TrainConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        Self {
            kind: config.optimizer,
            hyper: AdamHyper::from(config),
            state: AdamState::new(params),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], names: &[String]) -> Result<()> {
        match self.kind {
            OptimizerKind::Adam => adam_step(params, grads, names, &mut self.state, self.hyper)?,
            OptimizerKind::Sgd => {
                sgd_step(params, grads, names, self.hyper.learning_rate, self.steps + 1)?
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper() -> AdamHyper {
        AdamHyper {
            learning_rate: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::vector(vec![0.3, -1.2]).unwrap();
        let before = p.to_bits();
        let mut state = AdamState::new([&p]);
        let g = Tensor::zeros_like(&p);
        adam_step(&mut [&mut p], &[g], &names(1), &mut state, hyper()).unwrap();
        assert_eq!(p.to_bits(), before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.7, -0.02] {
            let mut p = Tensor::scalar(1.0);
            let mut state = AdamState::new([&p]);
            let h = AdamHyper { eps: 1e-16, ..hyper() };
            adam_step(&mut [&mut p], &[Tensor::scalar(g)], &names(1), &mut state, h).unwrap();
            let delta = p.data()[0] - 1.0;
            assert!((delta.abs() - 0.0005).abs() < 1e-12, "{delta}");
            assert_eq!(delta.signum(), -f64::signum(g));
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut a = Tensor::scalar(1.0);
        let mut b = Tensor::scalar(2.0);
        let mut state = AdamState::new([&a, &b]);
        let err = adam_step(
            &mut [&mut a, &mut b],
            &[Tensor::scalar(0.1), Tensor::scalar(f64::NAN)],
            &names(2),
            &mut state,
            hyper(),
        )
        .unwrap_err();
        match err {
            Error::NonFiniteGradient { step, param } => {
                assert_eq!(step, 1);
                assert_eq!(param, "p1");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(a.data()[0], 1.0);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn adam_sign_matches_sgd_without_momentum() {
        let grads = [0.4, -2.0, 1e-3, -7.5];
        let mut pa = Tensor::vector(vec![0.0; 4]).unwrap();
        let mut ps = pa.clone();
        let g = Tensor::vector(grads.to_vec()).unwrap();
        let mut state = AdamState::new([&pa]);
        let h = AdamHyper {
            learning_rate: 0.1,
            beta1: 0.0,
            beta2: 0.0,
            eps: 1e3,
        };
        adam_step(&mut [&mut pa], std::slice::from_ref(&g), &names(1), &mut state, h).unwrap();
        sgd_step(&mut [&mut ps], &[g], &names(1), 0.1, 1).unwrap();
        for (a, s) in pa.data().iter().zip(ps.data()) {
            assert_eq!(a.signum(), s.signum());
        }
    }
}
