use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::ParamSet;
use crate::nn::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor<f32>>,
    second: Vec<Tensor<f32>>,
    step: u64,
}

impl AdamState {
    pub fn new<P: ParamSet + ?Sized>(params: &P, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<f32>> = params
            .named_tensors()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        AdamState {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor<f32>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<f32>] {
        &self.second
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
///
/// `grads` is in [`ParamSet::named_tensors`] order. Nothing is modified if any
/// gradient is non-finite or mis-shaped.
pub fn adam_step<P: ParamSet + ?Sized>(
    params: &mut P,
    grads: &[Tensor<f32>],
    state: &mut AdamState,
    lr: f32,
) -> Result<()> {
    if params.is_frozen() {
        return Err(Error::Frozen("adam_step refuses to update a frozen parameter set".into()));
    }
    let named = params.named_tensors();
    if grads.len() != named.len() || state.first.len() != named.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} gradients and moments", named.len()),
            format!("{} gradients, {} moments", grads.len(), state.first.len()),
        ));
    }
    for (((name, p), g), m) in named.iter().zip(grads).zip(&state.first) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("{name} {:?}", p.shape()),
                format!("gradient {:?}, moment {:?}", g.shape(), m.shape()),
            ));
        }
        g.validate_finite(&format!("gradient of {name}"))?;
    }
    drop(named);

    state.step += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        for (((p, &g), m), v) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct One(Tensor<f32>);

    impl ParamSet for One {
        fn named_tensors(&self) -> Vec<(String, &Tensor<f32>)> {
            vec![("w".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Tensor<f32>> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = One(Tensor::from_fn(vec![4], |i| i as f32));
        let before = p.0.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        for _ in 0..5 {
            adam_step(&mut p, &[Tensor::zeros(vec![4])], &mut st, 1e-3).unwrap();
        }
        assert_eq!(p.0, before);
        assert_eq!(st.step(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g and v_hat = g^2 after one step, so |delta| = lr * |g| / (|g| + eps).
        for g in [1e-3f32, 0.5, 20.0, -3.0] {
            let mut p = One(Tensor::zeros(vec![1]));
            let mut st = AdamState::new(&p, AdamConfig::default());
            adam_step(&mut p, &[Tensor::full(vec![1], g)], &mut st, 1e-4).unwrap();
            let delta = p.0.data()[0];
            let expected = 1e-4 * g.abs() / (g.abs() + 1e-8);
            assert!((delta.abs() - expected).abs() < 1e-6 * expected, "g={g} delta={delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn non_finite_gradient_is_named() {
        let mut p = One(Tensor::zeros(vec![2]));
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = Tensor::new(vec![2], vec![0.0, f32::NAN]).unwrap();
        let err = adam_step(&mut p, &[g], &mut st, 1e-4).unwrap_err();
        assert!(err.to_string().contains("gradient of w"), "{err}");
        assert_eq!(st.step(), 0);
    }
}
