use crate::error::{Error, Result};
use crate::nn::ModuleParams;
use crate::scalar::Scalar;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// `base * (1 + cos(pi * t / total)) / 2`, clamped to `t <= total`.
pub fn cosine_lr(base: f64, t: u64, total: u64) -> f64 {
    if total == 0 {
        return base;
    }
    let frac = t.min(total) as f64 / total as f64;
    base * 0.5 * (1.0 + (PI * frac).cos())
}

/// Adam moments and step counter for one parameter registry.
#[derive(Clone, Debug)]
pub struct OptimState<T: Scalar> {
    pub config: AdamConfig,
    pub m: ModuleParams<T>,
    pub v: ModuleParams<T>,
    pub t: u64,
    pub total_steps: u64,
}

impl<T: Scalar> OptimState<T> {
    pub fn new(params: &ModuleParams<T>, config: AdamConfig, total_steps: u64) -> Self {
        OptimState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            total_steps,
        }
    }

    /// Learning rate the next step will use.
    pub fn next_lr(&self) -> f64 {
        cosine_lr(self.config.lr, self.t + 1, self.total_steps)
    }

    /// One bias-corrected Adam update at `lr(t)` with `t` counted after the
    /// increment. Non-finite gradients abort before anything is modified.
    pub fn step(&mut self, params: &mut ModuleParams<T>, grads: &ModuleParams<T>) -> Result<f64> {
        params.check_layout(grads)?;
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
        self.t += 1;
        let c = self.config;
        let lr = cosine_lr(c.lr, self.t, self.total_steps);
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let entries = params
            .iter_mut()
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
            .zip(grads.tensors());
        for ((((_, p), (_, m)), (_, v)), g) in entries {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                let gi = g.data()[i].to_f64();
                let mi = c.beta1 * m[i].to_f64() + (1.0 - c.beta1) * gi;
                let vi = c.beta2 * v[i].to_f64() + (1.0 - c.beta2) * gi * gi;
                m[i] = T::from_f64(mi);
                v[i] = T::from_f64(vi);
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                p[i] = T::from_f64(p[i].to_f64() - update);
            }
        }
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    fn scalar_params(v: f64) -> ModuleParams<f64> {
        let mut p = ModuleParams::new();
        p.insert("theta", Tensor::full(Shape::new(1, 1, 1, 1), v)).unwrap();
        p
    }

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(2e-4, 0, 100), 2e-4);
        assert!((cosine_lr(2e-4, 50, 100) - 1e-4).abs() < 1e-18);
        assert!(cosine_lr(2e-4, 100, 100).abs() < 1e-20);
        for t in 0..=100 {
            let lr = cosine_lr(2e-4, t, 100);
            assert!((0.0..=2e-4).contains(&lr));
        }
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar_params(0.75);
        let g = p.zeros_like();
        let mut s = OptimState::new(&p, AdamConfig::default(), 10);
        s.step(&mut p, &g).unwrap();
        assert_eq!(p.flatten(), vec![0.75]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar_params(1.0);
        let mut g = p.zeros_like();
        g.iter_mut().for_each(|(_, t)| t.data_mut()[0] = 1.0);
        let cfg = AdamConfig::default();
        let mut s = OptimState::new(&p, cfg, 1000);
        let lr = s.step(&mut p, &g).unwrap();
        // m_hat = v_hat = 1 after bias correction.
        let expected = 1.0 - lr / (1.0 + cfg.eps);
        assert_eq!(lr, cosine_lr(cfg.lr, 1, 1000));
        assert!((p.flatten()[0] - expected).abs() < 1e-16);
    }

    #[test]
    fn non_finite_gradient_aborts_without_change() {
        let mut p = scalar_params(1.0);
        let mut g = p.zeros_like();
        g.iter_mut().for_each(|(_, t)| t.data_mut()[0] = f64::NAN);
        let mut s = OptimState::new(&p, AdamConfig::default(), 10);
        assert!(matches!(s.step(&mut p, &g), Err(Error::NonFiniteGradient(n)) if n == "theta"));
        assert_eq!((p.flatten()[0], s.t), (1.0, 0));
    }

    #[test]
    fn update_is_nearly_scale_invariant_after_warmup() {
        let run = |scale: f64| {
            let mut p = scalar_params(0.0);
            let mut s = OptimState::new(&p, AdamConfig { eps: 1e-12, ..AdamConfig::default() }, 1000);
            let mut last = 0.0;
            for t in 0..60 {
                let mut g = p.zeros_like();
                let val = scale * (1.0 + 0.5 * (t as f64 * 0.7).sin());
                g.iter_mut().for_each(|(_, x)| x.data_mut()[0] = val);
                let before = p.flatten()[0];
                s.step(&mut p, &g).unwrap();
                last = p.flatten()[0] - before;
            }
            last
        };
        let (a, b) = (run(1.0), run(10.0));
        assert!(((a - b) / a).abs() < 0.01, "{a} vs {b}");
    }
}
