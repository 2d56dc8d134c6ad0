//! Conditional feature generator `G(a, ε)`, discriminator `D(x, a)` and the
//! adversarial value
//!
//! ```text
//! V(G, D) = E[log D(x, a)] + E[log(1 - D(G(a, ε), a))]
//! ```
//!
//! Conditioning is by concatenation: `G` sees `[ε | a]`, `D` sees `[x | a]`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{ClassId, SemanticTable};
use crate::embedding::EmbedNet;
use crate::error::{Error, Result};
use crate::nn::{adam_step_set, kinks, AdamConfig, Mat, Mlp, MlpBuilder, Param, ParamSet, Real, LEAKY_SLOPE};

/// Floor applied inside both logarithms of the adversarial value.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet<T: Real = f32> {
    pub net: Mlp<T>,
    pub noise_dim: usize,
    pub attr_dim: usize,
}

impl GeneratorNet<f32> {
    /// `(d_noise + d_a) → hidden → d_x` with LeakyReLU, optionally followed
    /// by a non-negativity clamp.
    pub fn new<R: Rng + ?Sized>(
        d_a: usize,
        noise_dim: usize,
        hidden: usize,
        d_x: usize,
        clamp_output: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if noise_dim == 0 {
            return Err(Error::Config("generator noise_dim must be positive".into()));
        }
        let mut b = MlpBuilder::new(noise_dim + d_a, rng)
            .affine(hidden)
            .leaky_relu(LEAKY_SLOPE)
            .affine(d_x);
        if clamp_output {
            b = b.relu();
        }
        Ok(GeneratorNet {
            net: b.build()?,
            noise_dim,
            attr_dim: d_a,
        })
    }
}

impl<T: Real> GeneratorNet<T> {
    pub fn out_dim(&self) -> usize {
        self.net.out_dim()
    }

    pub fn cast<U: Real>(&self) -> GeneratorNet<U> {
        GeneratorNet {
            net: self.net.cast(),
            noise_dim: self.noise_dim,
            attr_dim: self.attr_dim,
        }
    }

    fn input(&self, a: &Mat<T>, noise: &Mat<T>) -> Result<Mat<T>> {
        if a.cols() != self.attr_dim {
            return Err(Error::shape(format!(
                "generator expects descriptors of width {}, got {}",
                self.attr_dim,
                a.cols()
            )));
        }
        if noise.shape() != (a.rows(), self.noise_dim) {
            return Err(Error::shape(format!(
                "noise {:?} does not match {} descriptor rows × noise_dim {}",
                noise.shape(),
                a.rows(),
                self.noise_dim
            )));
        }
        noise.hcat(a)
    }

    /// Training-mode forward with explicit noise; keeps a tape.
    pub fn forward(&mut self, a: &Mat<T>, noise: &Mat<T>) -> Result<Mat<T>> {
        let x = self.input(a, noise)?;
        self.net.forward(&x)
    }

    pub fn infer(&self, a: &Mat<T>, noise: &Mat<T>) -> Result<Mat<T>> {
        self.net.infer(&self.input(a, noise)?)
    }

    pub fn clear_tape(&mut self) {
        self.net.clear_tape();
    }

    /// Sets the bias of the output layer, e.g. to the mean training feature
    /// so that training starts from the right offset.
    pub fn set_output_bias(&mut self, bias: &[T]) -> Result<()> {
        let p = self.net.params_mut().last_mut().expect("affine output layer");
        if p.value.cols() != bias.len() {
            return Err(Error::shape(format!("output bias of width {} for {} outputs", bias.len(), p.value.cols())));
        }
        p.value.as_mut_slice().copy_from_slice(bias);
        Ok(())
    }

    /// Accumulates parameter gradients; the input gradient is dropped.
    pub fn backward(&mut self, upstream: &Mat<T>) -> Result<()> {
        self.net.backward(upstream).map(|_| ())
    }
}

impl<T: Real> ParamSet<T> for GeneratorNet<T> {
    fn param_blocks(&self) -> Vec<(String, &Param<T>)> {
        self.net.param_blocks()
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.net.param_blocks_mut()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorNet<T: Real = f32> {
    pub net: Mlp<T>,
    pub feature_dim: usize,
}

impl DiscriminatorNet<f32> {
    /// `(d_x + d_a) → hidden → 1` with LeakyReLU and a terminal sigmoid.
    pub fn new<R: Rng + ?Sized>(d_x: usize, d_a: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let net = MlpBuilder::new(d_x + d_a, rng)
            .affine(hidden)
            .leaky_relu(LEAKY_SLOPE)
            .affine(1)
            .sigmoid()
            .build()?;
        Ok(DiscriminatorNet { net, feature_dim: d_x })
    }
}

impl<T: Real> DiscriminatorNet<T> {
    pub fn cast<U: Real>(&self) -> DiscriminatorNet<U> {
        DiscriminatorNet {
            net: self.net.cast(),
            feature_dim: self.feature_dim,
        }
    }

    /// Probabilities `D(x, a)` as a column.
    pub fn infer(&self, x: &Mat<T>, a: &Mat<T>) -> Result<Mat<T>> {
        self.net.infer(&x.hcat(a)?)
    }
}

impl<T: Real> ParamSet<T> for DiscriminatorNet<T> {
    fn param_blocks(&self) -> Vec<(String, &Param<T>)> {
        self.net.param_blocks()
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.net.param_blocks_mut()
    }
}

/// Standard-normal noise matrix.
pub fn sample_noise<T: Real, R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Mat<T> {
    let data = (0..rows * dim)
        .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Mat::from_vec(rows, dim, data).expect("sized")
}

/// One synthetic feature row per descriptor row, `ε ~ N(0, I)` drawn per row.
pub fn generate<R: Rng + ?Sized>(g: &GeneratorNet, a: &Mat, rng: &mut R) -> Result<Mat> {
    if a.cols() != g.attr_dim {
        return Err(Error::shape(format!(
            "generator expects descriptors of width {}, got {}",
            g.attr_dim,
            a.cols()
        )));
    }
    let noise = sample_noise(a.rows(), g.noise_dim, rng);
    g.infer(a, &noise)
}

#[inline]
fn clamped_ln<T: Real>(p: T) -> (T, bool) {
    let floor = T::of(LOG_CLAMP);
    let clamped = p < floor;
    kinks::record(clamped);
    (if clamped { floor.ln() } else { p.ln() }, clamped)
}

/// `V = mean log D(x,a) + mean log(1 - D(x̃,a))` with both logs clamped.
pub fn adversarial_value<T: Real>(
    d: &DiscriminatorNet<T>,
    real_x: &Mat<T>,
    real_a: &Mat<T>,
    fake_x: &Mat<T>,
    fake_a: &Mat<T>,
) -> Result<T> {
    let pr = d.infer(real_x, real_a)?;
    let pf = d.infer(fake_x, fake_a)?;
    let v = value_from_probs(pr.as_slice(), pf.as_slice())?;
    Ok(v)
}

fn value_from_probs<T: Real>(pr: &[T], pf: &[T]) -> Result<T> {
    if pr.is_empty() || pf.is_empty() {
        return Err(Error::domain("adversarial value needs non-empty real and fake batches"));
    }
    let nr = T::of(pr.len() as f64);
    let nf = T::of(pf.len() as f64);
    let real: T = pr.iter().map(|&p| clamped_ln(p).0).sum::<T>() / nr;
    let fake: T = pf.iter().map(|&p| clamped_ln(T::one() - p).0).sum::<T>() / nf;
    let v = real + fake;
    if !v.is_finite() {
        return Err(Error::Numerics("adversarial value is not finite".into()));
    }
    Ok(v)
}

/// Which scalar is differentiated by [`adversarial_backprop`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdvObjective {
    /// `scale · V`. The discriminator ascends with `scale = -1` (it
    /// minimizes `-V`); generator and whole-objective checks use `+1`.
    Value { scale: f64 },
    /// `-mean log D(x̃, a)`, the non-saturating generator loss.
    NonSaturating,
}

pub struct AdvPass<T: Real> {
    /// Adversarial value `V` at the current parameters.
    pub value: T,
    /// The differentiated objective.
    pub objective: T,
    /// Gradient of the objective with respect to the fake feature rows.
    pub grad_fake_x: Mat<T>,
}

/// Forward + reverse pass of the adversarial term through `D`.
///
/// Discriminator gradients accumulate in `d`; callers that keep `D` frozen
/// must zero them. The returned `grad_fake_x` is what flows into `G`.
pub fn adversarial_backprop<T: Real>(
    d: &mut DiscriminatorNet<T>,
    real_x: &Mat<T>,
    real_a: &Mat<T>,
    fake_x: &Mat<T>,
    fake_a: &Mat<T>,
    objective: AdvObjective,
) -> Result<AdvPass<T>> {
    let nr = real_x.rows();
    let nf = fake_x.rows();
    let input = real_x.hcat(real_a)?.vcat(&fake_x.hcat(fake_a)?)?;
    let probs = d.net.forward(&input)?;
    let p = probs.as_slice();
    let (pr, pf) = p.split_at(nr);
    let value = value_from_probs(pr, pf)?;

    let mut up = Mat::zeros(nr + nf, 1);
    let g = up.as_mut_slice();
    let objective_value = match objective {
        AdvObjective::Value { scale } => {
            let s = T::of(scale);
            for (i, &pi) in pr.iter().enumerate() {
                if !clamped_ln(pi).1 {
                    g[i] = s / (pi * T::of(nr as f64));
                }
            }
            for (i, &pi) in pf.iter().enumerate() {
                if !clamped_ln(T::one() - pi).1 {
                    g[nr + i] = -s / ((T::one() - pi) * T::of(nf as f64));
                }
            }
            s * value
        }
        AdvObjective::NonSaturating => {
            let mut acc = T::zero();
            for (i, &pi) in pf.iter().enumerate() {
                let (l, clamped) = clamped_ln(pi);
                acc = acc - l;
                if !clamped {
                    g[nr + i] = -T::one() / (pi * T::of(nf as f64));
                }
            }
            acc / T::of(nf as f64)
        }
    };
    let grad_in = d.net.backward(&up)?;
    let grad_fake = grad_in.slice_rows(nr, nr + nf);
    let (grad_fake_x, _) = grad_fake.split_cols(d.feature_dim)?;
    if !objective_value.is_finite() {
        return Err(Error::Numerics("adversarial objective is not finite".into()));
    }
    Ok(AdvPass {
        value,
        objective: objective_value,
        grad_fake_x,
    })
}

/// One ascent step on `V` for `D` with `G` frozen. Returns the pre-step `V`.
pub fn discriminator_step(
    g: &GeneratorNet,
    d: &mut DiscriminatorNet,
    real_x: &Mat,
    real_a: &Mat,
    fake_a: &Mat,
    noise: &Mat,
    adam: &AdamConfig,
) -> Result<f32> {
    let fake_x = g.infer(fake_a, noise)?;
    d.zero_grad();
    let pass = adversarial_backprop(d, real_x, real_a, &fake_x, fake_a, AdvObjective::Value { scale: -1.0 })?;
    adam_step_set(d, adam)?;
    Ok(pass.value)
}

/// One descent step on the adversarial generator objective with `D` frozen.
/// Returns the pre-step objective (`V` or the non-saturating loss).
#[allow(clippy::too_many_arguments)]
pub fn generator_step(
    g: &mut GeneratorNet,
    d: &mut DiscriminatorNet,
    real_x: &Mat,
    real_a: &Mat,
    fake_a: &Mat,
    noise: &Mat,
    non_saturating: bool,
    adam: &AdamConfig,
) -> Result<f32> {
    g.zero_grad();
    let fake_x = g.forward(fake_a, noise)?;
    let objective = if non_saturating {
        AdvObjective::NonSaturating
    } else {
        AdvObjective::Value { scale: 1.0 }
    };
    let pass = adversarial_backprop(d, real_x, real_a, &fake_x, fake_a, objective)?;
    d.zero_grad();
    g.backward(&pass.grad_fake_x)?;
    adam_step_set(g, adam)?;
    Ok(pass.objective)
}

/// `n_per_class` generated feature rows for every unseen class, class-major.
pub fn synthesize_unseen<R: Rng + ?Sized>(
    g: &GeneratorNet,
    semantic: &SemanticTable,
    n_per_class: usize,
    rng: &mut R,
) -> Result<(Mat, Vec<ClassId>)> {
    if n_per_class == 0 {
        return Err(Error::domain("n_per_class must be at least 1"));
    }
    let labels: Vec<ClassId> = semantic
        .unseen_ids()
        .into_iter()
        .flat_map(|c| std::iter::repeat_n(c, n_per_class))
        .collect();
    let a = semantic.rows_for(&labels)?;
    Ok((generate(g, &a, rng)?, labels))
}

/// `h̃ = E(G(a_u, ε))` for every unseen class.
pub fn synthesize_unseen_embeddings<R: Rng + ?Sized>(
    g: &GeneratorNet,
    e: &EmbedNet,
    semantic: &SemanticTable,
    n_per_class: usize,
    rng: &mut R,
) -> Result<(Mat, Vec<ClassId>)> {
    let (x, y) = synthesize_unseen(g, semantic, n_per_class, rng)?;
    Ok((e.infer(&x)?, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerKind, LayerSpec};

    fn constant_d(p: f32, d_x: usize, d_a: usize) -> DiscriminatorNet {
        // zero weights, bias = logit(p), then sigmoid
        let logit = (p / (1.0 - p)).ln();
        let layers = vec![
            LayerSpec {
                kind: LayerKind::Affine,
                in_dim: d_x + d_a,
                out_dim: 1,
            },
            LayerSpec {
                kind: LayerKind::Sigmoid,
                in_dim: 1,
                out_dim: 1,
            },
        ];
        let params = vec![
            Param::new(Mat::zeros(d_x + d_a, 1)),
            Param::new(Mat::filled(1, 1, logit)),
        ];
        DiscriminatorNet {
            net: Mlp::from_parts(layers, params).unwrap(),
            feature_dim: d_x,
        }
    }

    #[test]
    fn half_everywhere_gives_minus_two_ln_two() {
        let d = constant_d(0.5, 3, 2);
        let x = Mat::zeros(4, 3);
        let a = Mat::zeros(4, 2);
        let v = adversarial_value(&d, &x, &a, &x, &a).unwrap();
        assert!((v as f64 + 2.0 * 2f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn saturated_discriminator_stays_finite() {
        // D ≡ 1: real term 0, fake term hits the clamp.
        let mut d = constant_d(0.5, 2, 1);
        d.net.params_mut()[1].value[(0, 0)] = 1e4;
        let x = Mat::zeros(3, 2);
        let a = Mat::zeros(3, 1);
        let v = adversarial_value(&d, &x, &a, &x, &a).unwrap();
        assert!(v.is_finite());
        assert!((v as f64 - LOG_CLAMP.ln()).abs() < 1e-3);
    }

    #[test]
    fn generate_shapes_noise_and_determinism() {
        let mut rng = crate::rng_from_seed(3);
        let g = GeneratorNet::new(4, 4, 16, 6, true, &mut rng).unwrap();
        let a = Mat::filled(5, 4, 0.3);
        let x1 = generate(&g, &a, &mut crate::rng_from_seed(9)).unwrap();
        let x2 = generate(&g, &a, &mut crate::rng_from_seed(9)).unwrap();
        assert_eq!(x1, x2);
        assert_eq!(x1.shape(), (5, 6));
        assert!(x1.as_slice().iter().all(|&v| v >= 0.0));
        let rows: Vec<&[f32]> = x1.iter_rows().collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(rows[i], rows[j]);
            }
        }
        assert!(matches!(generate(&g, &Mat::zeros(2, 3), &mut rng), Err(Error::Shape(_))));
    }

    #[test]
    fn unseen_synthesis_counts() {
        let mut rng = crate::rng_from_seed(4);
        let desc = Mat::uniform(10, 3, 0.0, 1.0, &mut rng);
        let sem = SemanticTable::new(desc, 7, 3).unwrap();
        let g = GeneratorNet::new(3, 3, 8, 5, true, &mut rng).unwrap();
        let (x, y) = synthesize_unseen(&g, &sem, 100, &mut rng).unwrap();
        assert_eq!(x.rows(), 300);
        for c in 8..=10 {
            assert_eq!(y.iter().filter(|&&l| l == c).count(), 100);
        }
        assert!(synthesize_unseen(&g, &sem, 0, &mut rng).is_err());
    }

    #[test]
    fn zero_lr_leaves_discriminator_unchanged() {
        let mut rng = crate::rng_from_seed(5);
        let g = GeneratorNet::new(2, 2, 8, 3, true, &mut rng).unwrap();
        let mut d = DiscriminatorNet::new(3, 2, 8, &mut rng).unwrap();
        let before = d.clone();
        let x = Mat::uniform(6, 3, 0.0, 1.0, &mut rng);
        let a = Mat::uniform(6, 2, 0.0, 1.0, &mut rng);
        let noise = sample_noise(6, 2, &mut rng);
        let adam = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        discriminator_step(&g, &mut d, &x, &a, &a, &noise, &adam).unwrap();
        for (p, q) in d.net.params().iter().zip(before.net.params()) {
            assert_eq!(p.value, q.value);
        }
    }

    #[test]
    fn non_saturating_objective_is_minus_log_d() {
        let mut d = constant_d(0.25, 2, 1);
        let x = Mat::zeros(3, 2);
        let a = Mat::zeros(3, 1);
        let pass = adversarial_backprop(&mut d, &x, &a, &x, &a, AdvObjective::NonSaturating).unwrap();
        assert!((pass.objective as f64 + 0.25f64.ln()).abs() < 1e-6);
        let pass = adversarial_backprop(&mut d, &x, &a, &x, &a, AdvObjective::Value { scale: 1.0 }).unwrap();
        let expect = 0.25f64.ln() + 0.75f64.ln();
        assert!((pass.objective as f64 - expect).abs() < 1e-6);
    }
}
