use serde::{Deserialize, Serialize};

use super::mat::Real;
use super::mlp::{Param, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected adaptive-moment update over every parameter.
/// Gradients are zeroed afterwards. Fails without touching any parameter if
/// a gradient is non-finite.
pub fn adam_step<T: Real>(params: &mut [&mut Param<T>], cfg: &AdamConfig) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        if !p.grad.is_finite() {
            return Err(Error::Numerics(format!("gradient of parameter {i} is not finite")));
        }
    }
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let Param {
            value,
            grad,
            moment1,
            moment2,
            ..
        } = &mut **p;
        for (((v, &g), m), s) in value
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .zip(moment1.as_mut_slice())
            .zip(moment2.as_mut_slice())
        {
            *m = b1 * *m + (T::one() - b1) * g;
            *s = b2 * *s + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let s_hat = *s / c2;
            *v = *v - lr * m_hat / (s_hat.sqrt() + eps);
        }
        p.zero_grad();
    }
    Ok(())
}

/// Applies [`adam_step`] to every parameter of a set.
pub fn adam_step_set<T: Real, P: ParamSet<T> + ?Sized>(set: &mut P, cfg: &AdamConfig) -> Result<()> {
    let mut blocks: Vec<&mut Param<T>> = set.param_blocks_mut().into_iter().map(|(_, p)| p).collect();
    adam_step(&mut blocks, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mat;

    fn scalar(v: f64) -> Param<f64> {
        Param::new(Mat::filled(1, 1, v))
    }

    #[test]
    fn zero_grad_leaves_value() {
        let mut p = scalar(0.3);
        adam_step(&mut [&mut p], &AdamConfig::default()).unwrap();
        assert_eq!(p.value[(0, 0)], 0.3);
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        p.grad[(0, 0)] = 1.0;
        let cfg = AdamConfig {
            lr: 0.001,
            ..AdamConfig::default()
        };
        adam_step(&mut [&mut p], &cfg).unwrap();
        assert!((p.value[(0, 0)] + 0.001).abs() < 1e-9);
        assert_eq!(p.grad[(0, 0)], 0.0);
    }

    #[test]
    fn minimizes_square() {
        let mut p = scalar(1.0);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let v = p.value[(0, 0)];
            let loss = v * v;
            assert!(loss <= last);
            last = loss;
            p.grad[(0, 0)] = 2.0 * v;
            adam_step(&mut [&mut p], &cfg).unwrap();
        }
        assert!(p.value[(0, 0)].abs() < 0.5);
    }

    #[test]
    fn non_finite_grad_rejected() {
        let mut p = scalar(1.0);
        p.grad[(0, 0)] = f64::NAN;
        assert!(matches!(
            adam_step(&mut [&mut p], &AdamConfig::default()),
            Err(Error::Numerics(_))
        ));
        assert_eq!(p.value[(0, 0)], 1.0);
        assert_eq!(p.step_count, 0);
    }
}
