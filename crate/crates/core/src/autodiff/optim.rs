use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global-norm gradient clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// First/second moment accumulators for every parameter.
#[derive(Clone, Debug)]
pub struct OptimizerState<T = f32> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || -> Vec<Tensor<T>> {
            params
                .iter()
                .map(|(_, t)| Tensor::zeros(t.shape()))
                .collect()
        };
        OptimizerState {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Clipping, when configured, is applied to
/// `grads` in place first.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &mut Gradients<T>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam_step: {} params, {} grads, {} accumulators",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    for id in params.ids() {
        if params.get(id).shape() != grads.get(id).shape()
            || params.get(id).shape() != state.first[id.index()].shape()
        {
            return Err(Error::Shape(format!(
                "adam_step: parameter {} is {:?} but gradient is {:?}",
                params.name(id),
                params.get(id).shape(),
                grads.get(id).shape()
            )));
        }
    }
    if let Some(max) = state.config.clip_norm {
        grads.clip_global_norm(max);
    }

    state.step += 1;
    let cfg = &state.config;
    let t = state.step as i32;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let corr1 = T::from_f64(1.0 - cfg.beta1.powi(t));
    let corr2 = T::from_f64(1.0 - cfg.beta2.powi(t));
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);

    for id in params.ids() {
        let i = id.index();
        let g = grads.get(id).data();
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let p = params.get_mut(id).data_mut();
        for j in 0..p.len() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / corr1;
            let v_hat = v[j] / corr2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.add("w", Tensor::vector(values));
        p
    }

    fn no_clip() -> AdamConfig {
        AdamConfig {
            clip_norm: None,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = store(vec![0.3, -1.2, 4.0]);
        let before = p.clone();
        let mut st = OptimizerState::new(&p, no_clip());
        let mut g = Gradients::zeros_like(&p);
        adam_step(&mut p, &mut g, &mut st).unwrap();
        assert_eq!(
            p.get(p.ids().next().unwrap()),
            before.get(before.ids().next().unwrap())
        );
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = store(vec![1.0, 1.0]);
        let id = p.ids().next().unwrap();
        let mut st = OptimizerState::new(&p, no_clip());
        let mut g = Gradients::zeros_like(&p);
        g.get_mut(id).data_mut().copy_from_slice(&[0.7, -3.0]);
        adam_step(&mut p, &mut g, &mut st).unwrap();
        let d = p.get(id).data();
        assert!((1.0 - d[0] - 1e-3).abs() < 1e-9);
        assert!((d[1] - 1.0 - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut p = store(vec![0.05, -0.08, 0.02]);
        let id = p.ids().next().unwrap();
        let mut st = OptimizerState::new(
            &p,
            AdamConfig {
                lr: 1e-2,
                ..no_clip()
            },
        );
        for _ in 0..200 {
            let mut g = Gradients::zeros_like(&p);
            let w: Vec<f64> = p.get(id).data().to_vec();
            for (gi, wi) in g.get_mut(id).data_mut().iter_mut().zip(&w) {
                *gi = 2.0 * wi;
            }
            adam_step(&mut p, &mut g, &mut st).unwrap();
        }
        let norm = p.get(id).sq_norm().sqrt();
        assert!(norm < 1e-3, "norm {norm}");
        assert_eq!(st.step_count(), 200);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut p = store(vec![1.0]);
        let other = store(vec![1.0, 2.0]);
        let mut st = OptimizerState::new(&p, no_clip());
        let mut g = Gradients::zeros_like(&other);
        assert!(matches!(
            adam_step(&mut p, &mut g, &mut st),
            Err(Error::Shape(_))
        ));
    }
}
