//! Sequential networks over a fixed layer zoo with tape-based reverse mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kinks;
use super::mat::{Mat, Real};
use crate::error::{Error, Result};

/// A learnable tensor together with its gradient accumulator and
/// adaptive-moment state.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real = f32> {
    pub value: Mat<T>,
    pub grad: Mat<T>,
    pub moment1: Mat<T>,
    pub moment2: Mat<T>,
    pub step_count: u64,
}

impl<T: Real> Param<T> {
    pub fn new(value: Mat<T>) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Mat::zeros(r, c),
            moment1: Mat::zeros(r, c),
            moment2: Mat::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> Param<U> {
        Param {
            value: self.value.cast(),
            grad: self.grad.cast(),
            moment1: self.moment1.cast(),
            moment2: self.moment2.cast(),
            step_count: self.step_count,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Affine,
    LeakyRelu { slope: f64 },
    /// Non-negativity clamp, `max(x, 0)`.
    Relu,
    Sigmoid,
    L2NormalizeRows,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Anything that owns parameters. Block names are stable and ordered, so two
/// instances of the same architecture enumerate parameters identically.
pub trait ParamSet<T: Real> {
    fn param_blocks(&self) -> Vec<(String, &Param<T>)>;
    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    fn zero_grad(&mut self) {
        for (_, p) in self.param_blocks_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.param_blocks()
            .iter()
            .map(|(_, p)| p.value.as_slice().len())
            .sum()
    }
}

#[derive(Clone, Debug)]
struct Tape<T: Real> {
    // activations[i] is the input of layer i; the last entry is the output.
    activations: Vec<Mat<T>>,
}

#[derive(Clone, Debug)]
pub struct Mlp<T: Real = f32> {
    layers: Vec<LayerSpec>,
    params: Vec<Param<T>>,
    tape: Option<Tape<T>>,
}

impl<T: Real> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params
    }
}

pub struct MlpBuilder<'r, R: Rng + ?Sized> {
    width: usize,
    layers: Vec<LayerSpec>,
    params: Vec<Param<f32>>,
    rng: &'r mut R,
}

impl<'r, R: Rng + ?Sized> MlpBuilder<'r, R> {
    pub fn new(in_dim: usize, rng: &'r mut R) -> Self {
        MlpBuilder {
            width: in_dim,
            layers: Vec::new(),
            params: Vec::new(),
            rng,
        }
    }

    /// Adds an affine layer with weights and bias drawn from U(-1/√in, 1/√in).
    pub fn affine(mut self, out_dim: usize) -> Self {
        let in_dim = self.width;
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let w = Mat::uniform(in_dim, out_dim, -bound, bound, self.rng);
        let b = Mat::uniform(1, out_dim, -bound, bound, self.rng);
        self.params.push(Param::new(w));
        self.params.push(Param::new(b));
        self.layers.push(LayerSpec {
            kind: LayerKind::Affine,
            in_dim,
            out_dim,
        });
        self.width = out_dim;
        self
    }

    fn elementwise(mut self, kind: LayerKind) -> Self {
        self.layers.push(LayerSpec {
            kind,
            in_dim: self.width,
            out_dim: self.width,
        });
        self
    }

    pub fn leaky_relu(self, slope: f64) -> Self {
        self.elementwise(LayerKind::LeakyRelu { slope })
    }

    pub fn relu(self) -> Self {
        self.elementwise(LayerKind::Relu)
    }

    pub fn sigmoid(self) -> Self {
        self.elementwise(LayerKind::Sigmoid)
    }

    pub fn l2_normalize(self) -> Self {
        self.elementwise(LayerKind::L2NormalizeRows)
    }

    pub fn build(self) -> Result<Mlp<f32>> {
        Mlp::from_parts(self.layers, self.params)
    }
}

const NORM_FLOOR: f64 = 1e-12;

impl<T: Real> Mlp<T> {
    /// Assembles a network from explicit layers and parameters, validating
    /// dimension chaining and parameter shapes.
    pub fn from_parts(layers: Vec<LayerSpec>, params: Vec<Param<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("network has no layers"));
        }
        let mut p = 0;
        for (i, l) in layers.iter().enumerate() {
            if i > 0 && layers[i - 1].out_dim != l.in_dim {
                return Err(Error::shape(format!(
                    "layer {i} expects width {}, previous layer produces {}",
                    l.in_dim,
                    layers[i - 1].out_dim
                )));
            }
            match l.kind {
                LayerKind::Affine => {
                    if l.in_dim == 0 || l.out_dim == 0 {
                        return Err(Error::shape(format!("affine layer {i} has a zero dimension")));
                    }
                    let (w, b) = match (params.get(p), params.get(p + 1)) {
                        (Some(w), Some(b)) => (w, b),
                        _ => return Err(Error::shape(format!("affine layer {i} lacks parameters"))),
                    };
                    if w.value.shape() != (l.in_dim, l.out_dim) || b.value.shape() != (1, l.out_dim) {
                        return Err(Error::shape(format!(
                            "affine layer {i}: weight {:?} / bias {:?} do not match {}->{}",
                            w.value.shape(),
                            b.value.shape(),
                            l.in_dim,
                            l.out_dim
                        )));
                    }
                    p += 2;
                }
                LayerKind::LeakyRelu { slope } => {
                    if !(slope > 0.0 && slope < 1.0) {
                        return Err(Error::domain(format!("leaky_relu slope {slope} outside (0,1)")));
                    }
                    if l.in_dim != l.out_dim {
                        return Err(Error::shape(format!("elementwise layer {i} changes width")));
                    }
                }
                _ => {
                    if l.in_dim != l.out_dim {
                        return Err(Error::shape(format!("elementwise layer {i} changes width")));
                    }
                }
            }
        }
        if p != params.len() {
            return Err(Error::shape(format!(
                "{} parameters supplied, {p} consumed",
                params.len()
            )));
        }
        Ok(Mlp {
            layers,
            params,
            tape: None,
        })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }

    pub fn clear_tape(&mut self) {
        self.tape = None;
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp {
            layers: self.layers.clone(),
            params: self.params.iter().map(Param::cast).collect(),
            tape: None,
        }
    }

    /// Forward pass that retains a tape for [`Mlp::backward`].
    pub fn forward(&mut self, input: &Mat<T>) -> Result<Mat<T>> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        self.run(input, Some(&mut activations))?;
        let out = activations.last().cloned().expect("non-empty");
        self.tape = Some(Tape { activations });
        Ok(out)
    }

    /// Forward pass without recording anything; pure in `(params, input)`.
    pub fn infer(&self, input: &Mat<T>) -> Result<Mat<T>> {
        self.run(input, None)
    }

    fn run(&self, input: &Mat<T>, mut record: Option<&mut Vec<Mat<T>>>) -> Result<Mat<T>> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "network expects {} input columns, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut x = input.clone();
        let mut p = 0;
        for l in &self.layers {
            x = match l.kind {
                LayerKind::Affine => {
                    let w = &self.params[p].value;
                    let b = &self.params[p + 1].value;
                    p += 2;
                    let mut y = x.matmul(w)?;
                    let bias = b.as_slice();
                    for i in 0..y.rows() {
                        for (v, &bb) in y.row_mut(i).iter_mut().zip(bias) {
                            *v = *v + bb;
                        }
                    }
                    y
                }
                LayerKind::LeakyRelu { slope } => {
                    record_signs(&x);
                    let s = T::of(slope);
                    x.map(|v| if v >= T::zero() { v } else { v * s })
                }
                LayerKind::Relu => {
                    record_signs(&x);
                    x.map(|v| if v >= T::zero() { v } else { T::zero() })
                }
                LayerKind::Sigmoid => x.map(sigmoid),
                LayerKind::L2NormalizeRows => {
                    let mut y = x;
                    for i in 0..y.rows() {
                        let r = y.row_mut(i);
                        let n = norm(r).max(T::of(NORM_FLOOR));
                        r.iter_mut().for_each(|v| *v = *v / n);
                    }
                    y
                }
            };
            if let Some(acts) = record.as_deref_mut() {
                acts.push(x.clone());
            }
        }
        Ok(x)
    }

    /// Reverse pass over the retained tape. Parameter gradients accumulate;
    /// the gradient with respect to the forward input is returned. The tape
    /// is consumed.
    pub fn backward(&mut self, upstream: &Mat<T>) -> Result<Mat<T>> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::State("backward called without a retained forward tape".into()))?;
        let out = tape.activations.last().expect("non-empty");
        if upstream.shape() != out.shape() {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                out.shape()
            )));
        }
        let mut g = upstream.clone();
        let mut p = self.params.len();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &tape.activations[i];
            let y = &tape.activations[i + 1];
            g = match l.kind {
                LayerKind::Affine => {
                    p -= 2;
                    let dw = x.t_matmul(&g)?;
                    let db = g.sum_rows();
                    self.params[p].grad.add_assign(&dw)?;
                    self.params[p + 1].grad.add_assign(&db)?;
                    g.matmul_t(&self.params[p].value)?
                }
                LayerKind::LeakyRelu { slope } => {
                    let s = T::of(slope);
                    let mut d = g;
                    for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        if xv < T::zero() {
                            *dv = *dv * s;
                        }
                    }
                    d
                }
                LayerKind::Relu => {
                    let mut d = g;
                    for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        if xv < T::zero() {
                            *dv = T::zero();
                        }
                    }
                    d
                }
                LayerKind::Sigmoid => {
                    let mut d = g;
                    for (dv, &yv) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *dv = *dv * yv * (T::one() - yv);
                    }
                    d
                }
                LayerKind::L2NormalizeRows => {
                    // dx = (g - y (y·g)) / ‖x‖
                    let mut d = g;
                    for r in 0..d.rows() {
                        let n = norm(x.row(r));
                        if n < T::of(NORM_FLOOR) {
                            d.row_mut(r).iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let yr = y.row(r);
                        let proj = super::mat::dot(yr, d.row(r));
                        for (dv, &yv) in d.row_mut(r).iter_mut().zip(yr) {
                            *dv = (*dv - yv * proj) / n;
                        }
                    }
                    d
                }
            };
        }
        Ok(g)
    }

    /// Smallest |pre-activation| over every rectifier layer, per input row.
    /// Rows whose value is near zero sit on a kink where the network is not
    /// differentiable.
    pub fn kink_margins(&self, input: &Mat<T>) -> Result<Vec<f64>> {
        let mut acts = vec![input.clone()];
        self.run(input, Some(&mut acts))?;
        let mut margins = vec![f64::INFINITY; input.rows()];
        for (i, l) in self.layers.iter().enumerate() {
            if matches!(l.kind, LayerKind::LeakyRelu { .. } | LayerKind::Relu) {
                for (r, m) in margins.iter_mut().enumerate() {
                    for &v in acts[i].row(r) {
                        *m = m.min(v.as_f64().abs());
                    }
                }
            }
        }
        Ok(margins)
    }
}

impl<T: Real> ParamSet<T> for Mlp<T> {
    fn param_blocks(&self) -> Vec<(String, &Param<T>)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (block_name(i), p))
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (block_name(i), p))
            .collect()
    }
}

fn block_name(i: usize) -> String {
    let kind = if i % 2 == 0 { "weight" } else { "bias" };
    format!("affine{}.{kind}", i / 2)
}

fn record_signs<T: Real>(x: &Mat<T>) {
    if kinks::active() {
        for &v in x.as_slice() {
            kinks::record(v >= T::zero());
        }
    }
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn norm<T: Real>(r: &[T]) -> T {
    r.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
}

/// Numerically stable row-wise softmax.
pub fn row_softmax<T: Real>(logits: &Mat<T>) -> Mat<T> {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let r = out.row_mut(i);
        let m = r.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in r.iter_mut() {
            *v = (*v - m).exp();
            s = s + *v;
        }
        r.iter_mut().for_each(|v| *v = *v / s);
    }
    out
}

/// `log Σ exp(x)` with max subtraction.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + xs.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

/// `-log softmax(xs)[k]`, subtracting in max-shifted space so equal logits
/// give exactly `ln(len)` however large they are.
pub fn neg_log_softmax<T: Real>(xs: &[T], k: usize) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    xs.iter().map(|&v| (v - m).exp()).sum::<T>().ln() - (xs[k] - m)
}

/// `ln(1 + e^x)` without overflow or cancellation.
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}
