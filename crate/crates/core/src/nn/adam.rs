//! Adam optimizer with per-parameter first/second moment state keyed by
//! parameter name.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::nn::params::Params;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f32) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: ArrayD<f32>,
    v: ArrayD<f32>,
}

/// Stateful Adam. Only parameters that appear in the gradient map move; all
/// others (frozen sub-modules) are untouched, bit for bit.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    state: BTreeMap<String, Moments>,
    step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            state: BTreeMap::new(),
            step_count: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step_count
    }

    /// Applies one update. `grads` maps parameter names to gradients of the
    /// same shape; names absent from `grads` stay frozen.
    pub fn step(&mut self, params: &mut Params, grads: &BTreeMap<String, ArrayD<f32>>) {
        self.step_count += 1;
        let t = self.step_count as f32;
        let c = &self.config;
        let bias1 = 1.0 - c.beta1.powf(t);
        let bias2 = 1.0 - c.beta2.powf(t);

        for (name, grad) in grads {
            let value = match params.get_mut(name) {
                Ok(v) => v,
                Err(_) => continue,
            };
            let entry = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: ArrayD::zeros(grad.raw_dim()),
                v: ArrayD::zeros(grad.raw_dim()),
            });
            entry.m.zip_mut_with(grad, |m, &g| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            });
            entry.v.zip_mut_with(grad, |v, &g| {
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            });
            ndarray::Zip::from(value)
                .and(&entry.m)
                .and(&entry.v)
                .for_each(|p, &m, &v| {
                    let m_hat = m / bias1;
                    let v_hat = v / bias2;
                    *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;
    use crate::nn::params::Binder;

    /// Minimizes (w - 3)^2 from w = 0; Adam should get close in a few
    /// hundred steps.
    #[test]
    fn converges_on_quadratic() {
        let mut params = Params::new();
        params.insert("w", ndarray::arr1(&[0.0f32]).into_dyn());
        let mut opt = Adam::new(AdamConfig::with_lr(0.05));
        for _ in 0..400 {
            let mut g = Graph::new();
            let mut b = Binder::new(&params);
            let w = b.get(&mut g, "w").unwrap();
            let target = g.input(ndarray::arr1(&[3.0f32]).into_dyn());
            let diff = g.sub(w, target);
            let loss = g.mul(diff, diff);
            let s = g.sum_all(loss);
            g.backward(s);
            let grads = b.grads(&g);
            opt.step(&mut params, &grads);
        }
        let w = params.get("w").unwrap()[[0]];
        assert!((w - 3.0).abs() < 0.05, "w ended at {w}");
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction, the first Adam step has magnitude ~lr
        // regardless of gradient scale.
        let mut params = Params::new();
        params.insert("w", ndarray::arr1(&[1.0f32]).into_dyn());
        let mut opt = Adam::new(AdamConfig::with_lr(0.01));
        let grads: BTreeMap<String, ArrayD<f32>> =
            [("w".to_string(), ndarray::arr1(&[123.0f32]).into_dyn())].into();
        opt.step(&mut params, &grads);
        let w = params.get("w").unwrap()[[0]];
        assert!((w - (1.0 - 0.01)).abs() < 1e-5, "w = {w}");
    }

    #[test]
    fn absent_gradients_leave_parameters_frozen() {
        let mut params = Params::new();
        params.insert("frozen", ndarray::arr1(&[7.0f32]).into_dyn());
        params.insert("live", ndarray::arr1(&[7.0f32]).into_dyn());
        let before = params.sha256_hex_prefix("frozen");
        let mut opt = Adam::new(AdamConfig::default());
        let grads: BTreeMap<String, ArrayD<f32>> =
            [("live".to_string(), ndarray::arr1(&[1.0f32]).into_dyn())].into();
        for _ in 0..10 {
            opt.step(&mut params, &grads);
        }
        assert_eq!(params.sha256_hex_prefix("frozen"), before);
        assert_ne!(params.get("live").unwrap()[[0]], 7.0);
    }
}
