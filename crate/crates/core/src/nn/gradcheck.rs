//! Central-difference gradient oracle.
//!
//! Everything here runs on a 64-bit shadow copy of the model. The analytic
//! side comes from the same generic reverse-mode code used for training, the
//! numeric side only ever calls forward evaluations.

use serde::Serialize;

use super::kinks;
use super::mat::Mat;
use super::mlp::{Mlp, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Central-difference half step. In 64-bit arithmetic `1e-5` balances
    /// truncation (`O(eps²)`) against rounding (`O(1e-16 / eps)`).
    pub eps: f64,
    /// Gradients smaller than this are compared in absolute terms.
    pub abs_floor: f64,
    /// Input rows whose rectifier pre-activations come closer than this to
    /// zero are dropped before a single-network check.
    pub kink_margin: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            abs_floor: 1e-3,
            kink_margin: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter block holding the worst element.
    pub worst_block: Option<String>,
    pub checked: usize,
    /// Elements whose ± perturbation crossed a kink.
    pub excluded: usize,
    /// Input rows dropped for sitting on a kink.
    pub excluded_rows: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }

    fn absorb(&mut self, rel: f64, block: &str) {
        self.checked += 1;
        if self.worst_block.is_none() || rel > self.max_rel_error {
            self.max_rel_error = rel;
            self.worst_block = Some(block.to_string());
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares analytic gradients against central differences for every
/// element of every parameter block in `model`.
///
/// `analytic` must leave the exact gradient of the loss in each parameter's
/// `grad` (grads are zeroed before it runs). `value` evaluates the loss
/// only. Both must be deterministic.
pub fn grad_check_with<M, A, V>(
    model: &mut M,
    mut analytic: A,
    mut value: V,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    M: ParamSet<f64>,
    A: FnMut(&mut M) -> Result<f64>,
    V: FnMut(&mut M) -> Result<f64>,
{
    model.zero_grad();
    analytic(model)?;
    let grads: Vec<(String, Vec<f64>)> = model
        .param_blocks()
        .into_iter()
        .map(|(n, p)| (n, p.grad.as_slice().to_vec()))
        .collect();
    model.zero_grad();

    let mut report = GradCheckReport::default();
    for (b, (name, g)) in grads.iter().enumerate() {
        for (j, &a) in g.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::Numerics(format!("analytic gradient of {name}[{j}] is not finite")));
            }
            let orig = model.param_blocks()[b].1.value.as_slice()[j];
            let mut eval_at = |m: &mut M, v: f64| -> Result<(f64, u64)> {
                m.param_blocks_mut()[b].1.value.as_mut_slice()[j] = v;
                let (r, fp) = kinks::fingerprint(|| value(m));
                Ok((r?, fp))
            };
            let (plus, fp_plus) = eval_at(model, orig + opts.eps)?;
            let (minus, fp_minus) = eval_at(model, orig - opts.eps)?;
            model.param_blocks_mut()[b].1.value.as_mut_slice()[j] = orig;
            if fp_plus != fp_minus {
                report.excluded += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.eps);
            report.absorb(relative_error(a, numeric, opts.abs_floor), name);
        }
    }
    Ok(report)
}

/// Gradient check of a single network under a loss defined on its outputs.
///
/// `loss_fn` returns the loss value and its gradient with respect to the
/// network output. Rows of `input` lying on a rectifier kink are excluded
/// (counted in `excluded_rows`).
pub fn grad_check<L>(
    net: &Mlp<f32>,
    loss_fn: L,
    input: &Mat<f32>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    L: Fn(&Mat<f64>) -> (f64, Mat<f64>),
{
    let mut shadow: Mlp<f64> = net.cast();
    let x64: Mat<f64> = input.cast();
    let margins = shadow.kink_margins(&x64)?;
    let keep: Vec<usize> = (0..x64.rows())
        .filter(|&r| margins[r] >= opts.kink_margin)
        .collect();
    let excluded_rows = x64.rows() - keep.len();
    let x = x64.select_rows(&keep);
    let mut report = grad_check_with(
        &mut shadow,
        |m| {
            let out = m.forward(&x)?;
            let (l, g) = loss_fn(&out);
            m.backward(&g)?;
            Ok(l)
        },
        |m| Ok(loss_fn(&m.infer(&x)?).0),
        opts,
    )?;
    report.excluded_rows = excluded_rows;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerKind, LayerSpec, MlpBuilder, Param};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn squared(out: &Mat<f64>) -> (f64, Mat<f64>) {
        let l = out.as_slice().iter().map(|v| v * v).sum::<f64>() * 0.5;
        (l, out.clone())
    }

    #[test]
    fn linear_net_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = MlpBuilder::new(4, &mut rng).affine(3).build().unwrap();
        let x = Mat::randn(5, 4, 1.0, &mut rng);
        let r = grad_check(&net, squared, &x, &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.checked, net.num_params());
    }

    #[test]
    fn leaky_net_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpBuilder::new(4, &mut rng)
            .affine(6)
            .leaky_relu(0.2)
            .affine(3)
            .sigmoid()
            .build()
            .unwrap();
        let x = Mat::randn(6, 4, 1.0, &mut rng);
        let r = grad_check(&net, squared, &x, &GradCheckOptions::default()).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn rows_on_the_kink_are_excluded() {
        let layers = vec![
            LayerSpec {
                kind: LayerKind::Affine,
                in_dim: 2,
                out_dim: 2,
            },
            LayerSpec {
                kind: LayerKind::LeakyRelu { slope: 0.2 },
                in_dim: 2,
                out_dim: 2,
            },
        ];
        let params = vec![Param::new(Mat::identity(2)), Param::new(Mat::zeros(1, 2))];
        let net = Mlp::from_parts(layers, params).unwrap();
        let x = Mat::from_rows(&[vec![0.0f32, 1.0], vec![0.5, -0.7]]).unwrap();
        let r = grad_check(&net, squared, &x, &GradCheckOptions::default()).unwrap();
        assert_eq!(r.excluded_rows, 1);
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn sign_flip_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = MlpBuilder::new(3, &mut rng).affine(2).build().unwrap();
        let x = Mat::<f64>::randn(4, 3, 1.0, &mut rng);
        let mut shadow: Mlp<f64> = net.cast();
        let r = grad_check_with(
            &mut shadow,
            |m| {
                let out = m.forward(&x)?;
                let (l, g) = squared(&out);
                m.backward(&g)?;
                let w = &mut m.params_mut()[0].grad;
                w[(0, 0)] = -w[(0, 0)];
                Ok(l)
            },
            |m| Ok(squared(&m.infer(&x)?).0),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(r.max_rel_error > 1.0);
        assert_eq!(r.worst_block.as_deref(), Some("affine0.weight"));
    }
}
