//! Embedding function `E`, projection head `H`, comparator `F` and the loss
//! families built on them:
//!
//! - ranking (structured hinge) loss on real and synthetic features,
//! - instance-level contrastive loss, a (K+1)-way InfoNCE over `z = H(E(x))`,
//! - class-level contrastive loss, an S-way softmax over `F(h, a_s)`.
//!
//! Loss primitives return the value together with the gradient with respect
//! to their matrix input so the caller can chain it through the networks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ClassId;
use crate::error::{Error, Result};
use crate::nn::{dot, kinks, log_sum_exp, neg_log_softmax, softplus, Mat, Mlp, MlpBuilder, Param, ParamSet, Real, LEAKY_SLOPE};
use crate::trainer::{evaluate_objective, GradMode, LossTerms, NetBundle, StepBatch, TermMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub tau_e: f64,
    pub tau_s: f64,
    pub margin_delta: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        LossParams {
            tau_e: 0.1,
            tau_s: 0.1,
            margin_delta: 1.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_e > 0.0) || !(self.tau_s > 0.0) {
            return Err(Error::Config(format!(
                "temperatures must be positive (tau_e={}, tau_s={})",
                self.tau_e, self.tau_s
            )));
        }
        if !(self.margin_delta >= 0.0) {
            return Err(Error::Config(format!("margin {} must be >= 0", self.margin_delta)));
        }
        Ok(())
    }
}

macro_rules! net_wrapper {
    ($name:ident) => {
        impl<T: Real> $name<T> {
            pub fn cast<U: Real>(&self) -> $name<U> {
                $name { net: self.net.cast() }
            }

            pub fn infer(&self, x: &Mat<T>) -> Result<Mat<T>> {
                self.net.infer(x)
            }

            pub fn forward(&mut self, x: &Mat<T>) -> Result<Mat<T>> {
                self.net.forward(x)
            }

            pub fn backward(&mut self, upstream: &Mat<T>) -> Result<Mat<T>> {
                self.net.backward(upstream)
            }

            pub fn out_dim(&self) -> usize {
                self.net.out_dim()
            }

            pub fn clear_tape(&mut self) {
                self.net.clear_tape();
            }
        }

        impl<T: Real> ParamSet<T> for $name<T> {
            fn param_blocks(&self) -> Vec<(String, &Param<T>)> {
                self.net.param_blocks()
            }

            fn param_blocks_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
                self.net.param_blocks_mut()
            }
        }
    };
}

/// `h = E(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbedNet<T: Real = f32> {
    pub net: Mlp<T>,
}

impl EmbedNet<f32> {
    /// Learned embedding space: `d_x → d_h` followed by LeakyReLU.
    pub fn new<R: Rng + ?Sized>(d_x: usize, d_h: usize, rng: &mut R) -> Result<Self> {
        if d_h == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let net = MlpBuilder::new(d_x, rng).affine(d_h).leaky_relu(LEAKY_SLOPE).build()?;
        Ok(EmbedNet { net })
    }

    /// Linear map into the descriptor space, used where the embedding space
    /// is the semantic space itself.
    pub fn semantic<R: Rng + ?Sized>(d_x: usize, d_a: usize, rng: &mut R) -> Result<Self> {
        let net = MlpBuilder::new(d_x, rng).affine(d_a).build()?;
        Ok(EmbedNet { net })
    }

    /// `E = identity`; useful for checking compositions.
    pub fn identity(d: usize) -> Result<Self> {
        use crate::nn::{LayerKind, LayerSpec};
        let net = Mlp::from_parts(
            vec![LayerSpec {
                kind: LayerKind::Affine,
                in_dim: d,
                out_dim: d,
            }],
            vec![Param::new(Mat::identity(d)), Param::new(Mat::zeros(1, d))],
        )?;
        Ok(EmbedNet { net })
    }
}

net_wrapper!(EmbedNet);

/// `z = H(h)`, rows unit-norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead<T: Real = f32> {
    pub net: Mlp<T>,
}

impl ProjectionHead<f32> {
    pub fn new<R: Rng + ?Sized>(d_h: usize, d_z: usize, rng: &mut R) -> Result<Self> {
        let net = MlpBuilder::new(d_h, rng)
            .affine(d_h)
            .leaky_relu(LEAKY_SLOPE)
            .affine(d_z)
            .l2_normalize()
            .build()?;
        Ok(ProjectionHead { net })
    }
}

net_wrapper!(ProjectionHead);

/// Relevance score `F(h, a)` from the concatenation `[h | a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparatorNet<T: Real = f32> {
    pub net: Mlp<T>,
}

impl ComparatorNet<f32> {
    pub fn new<R: Rng + ?Sized>(d_h: usize, d_a: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let net = MlpBuilder::new(d_h + d_a, rng)
            .affine(hidden)
            .leaky_relu(LEAKY_SLOPE)
            .affine(1)
            .build()?;
        Ok(ComparatorNet { net })
    }
}

net_wrapper!(ComparatorNet);

impl<T: Real> ComparatorNet<T> {
    fn all_pairs(h: &Mat<T>, a: &Mat<T>) -> Mat<T> {
        let (n, s) = (h.rows(), a.rows());
        let width = h.cols() + a.cols();
        let mut data = Vec::with_capacity(n * s * width);
        for i in 0..n {
            for j in 0..s {
                data.extend_from_slice(h.row(i));
                data.extend_from_slice(a.row(j));
            }
        }
        Mat::from_vec(n * s, width, data).expect("sized")
    }

    /// Scores of every row of `h` against every row of `a`, `n × s`.
    pub fn score_matrix(&self, h: &Mat<T>, a: &Mat<T>) -> Result<Mat<T>> {
        let out = self.net.infer(&Self::all_pairs(h, a))?;
        Mat::from_vec(h.rows(), a.rows(), out.into_vec())
    }

    /// Taped variant of [`ComparatorNet::score_matrix`].
    pub fn score_matrix_forward(&mut self, h: &Mat<T>, a: &Mat<T>) -> Result<Mat<T>> {
        let out = self.net.forward(&Self::all_pairs(h, a))?;
        Mat::from_vec(h.rows(), a.rows(), out.into_vec())
    }

    /// Back-propagates an `n × s` score gradient, returning `∂/∂h` where `h`
    /// has `d_h` columns.
    pub fn score_matrix_backward(&mut self, grad: &Mat<T>, d_h: usize) -> Result<Mat<T>> {
        let (n, s) = grad.shape();
        if d_h > self.net.in_dim() {
            return Err(Error::shape(format!("d_h {d_h} exceeds comparator input {}", self.net.in_dim())));
        }
        let col = Mat::from_vec(n * s, 1, grad.as_slice().to_vec())?;
        let gin = self.net.backward(&col)?;
        let mut gh = Mat::zeros(n, d_h);
        for i in 0..n {
            for j in 0..s {
                let src = &gin.row(i * s + j)[..d_h];
                for (o, &v) in gh.row_mut(i).iter_mut().zip(src) {
                    *o = *o + v;
                }
            }
        }
        Ok(gh)
    }

    /// Row-aligned scores `F(h_i, a_i)` as a column.
    pub fn paired_forward(&mut self, h: &Mat<T>, a: &Mat<T>) -> Result<Mat<T>> {
        self.net.forward(&h.hcat(a)?)
    }

    pub fn paired_infer(&self, h: &Mat<T>, a: &Mat<T>) -> Result<Mat<T>> {
        self.net.infer(&h.hcat(a)?)
    }

    /// Back-propagates a paired-score column gradient, returning `∂/∂h`.
    pub fn paired_backward(&mut self, grad: &Mat<T>, d_h: usize) -> Result<Mat<T>> {
        let gin = self.net.backward(grad)?;
        Ok(gin.split_cols(d_h)?.0)
    }
}

fn check_rows<T: Real>(what: &str, m: &Mat<T>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::shape(format!(
            "{what} is {:?}, expected ({rows}, {cols})",
            m.shape()
        )));
    }
    Ok(())
}

/// Mean structured hinge `max(0, Δ - s⁺ + s⁻)` over aligned score lists,
/// with the gradients with respect to each list.
pub fn hinge_from_scores<T: Real>(pos: &[T], neg: &[T], delta: T) -> (T, Vec<T>, Vec<T>) {
    let n = pos.len();
    let inv = T::one() / T::of(n.max(1) as f64);
    let mut loss = T::zero();
    let mut gp = vec![T::zero(); n];
    let mut gn = vec![T::zero(); n];
    for i in 0..n {
        let m = delta - pos[i] + neg[i];
        let active = m > T::zero();
        kinks::record(active);
        if active {
            loss = loss + m;
            gp[i] = -inv;
            gn[i] = inv;
        }
    }
    (loss * inv, gp, gn)
}

/// Hinge ranking loss with dot-product compatibility `aᵀ e` on already
/// embedded rows. Returns the value and `∂/∂emb`.
pub fn rank_hinge_dot<T: Real>(
    emb: &Mat<T>,
    a_pos: &Mat<T>,
    a_neg: &Mat<T>,
    delta: T,
) -> Result<(T, Mat<T>)> {
    let (n, d) = emb.shape();
    check_rows("positive descriptors", a_pos, n, d)?;
    check_rows("negative descriptors", a_neg, n, d)?;
    let pos: Vec<T> = (0..n).map(|i| dot(a_pos.row(i), emb.row(i))).collect();
    let neg: Vec<T> = (0..n).map(|i| dot(a_neg.row(i), emb.row(i))).collect();
    let (loss, gp, gn) = hinge_from_scores(&pos, &neg, delta);
    let mut g = Mat::zeros(n, d);
    for i in 0..n {
        let (ap, an) = (a_pos.row(i), a_neg.row(i));
        for (k, o) in g.row_mut(i).iter_mut().enumerate() {
            *o = gp[i] * ap[k] + gn[i] * an[k];
        }
    }
    Ok((loss, g))
}

/// Ranking loss on real features: `mean max(0, Δ - aᵀE(x) + a'ᵀE(x))`.
pub fn ranking_loss_real<T: Real>(
    e: &EmbedNet<T>,
    x: &Mat<T>,
    a_pos: &Mat<T>,
    a_neg: &Mat<T>,
    delta: f64,
) -> Result<T> {
    let emb = e.infer(x)?;
    Ok(rank_hinge_dot(&emb, a_pos, a_neg, T::of(delta))?.0)
}

/// Ranking loss on synthetic features `E(G(a, ε))`. Descriptors must come
/// from seen classes; the caller passes their ids for that check.
#[allow(clippy::too_many_arguments)]
pub fn ranking_loss_sync<T: Real>(
    g: &crate::generation::GeneratorNet<T>,
    e: &EmbedNet<T>,
    pos_ids: &[ClassId],
    neg_ids: &[ClassId],
    semantic: &crate::dataset::SemanticTable,
    noise: &Mat<T>,
    delta: f64,
) -> Result<T> {
    let a_pos: Mat<T> = semantic.seen_rows_for(pos_ids)?.cast();
    let a_neg: Mat<T> = semantic.seen_rows_for(neg_ids)?.cast();
    if pos_ids.iter().zip(neg_ids).any(|(p, n)| p == n) {
        return Err(Error::domain("negative descriptor equals the positive one"));
    }
    let fake = g.infer(&a_pos, noise)?;
    let emb = e.infer(&fake)?;
    Ok(rank_hinge_dot(&emb, &a_pos, &a_neg, T::of(delta))?.0)
}

/// `-log( e^{z_i·z⁺/τ} / (e^{z_i·z⁺/τ} + Σ_k e^{z_i·z_k⁻/τ}) )` for one anchor.
pub fn instance_contrastive_loss<T: Real>(
    z_i: &[T],
    z_pos: &[T],
    z_negs: &Mat<T>,
    tau_e: f64,
) -> Result<T> {
    if z_negs.rows() == 0 {
        return Err(Error::domain("instance contrastive loss needs K >= 1 negatives"));
    }
    if z_pos.len() != z_i.len() || z_negs.cols() != z_i.len() {
        return Err(Error::shape("anchor, positive and negatives differ in width"));
    }
    let inv_tau = T::of(1.0 / tau_e);
    let mut logits = Vec::with_capacity(z_negs.rows() + 1);
    logits.push(dot(z_i, z_pos) * inv_tau);
    logits.extend(z_negs.iter_rows().map(|r| dot(z_i, r) * inv_tau));
    Ok(neg_log_softmax(&logits, 0))
}

/// Positives and negatives of one anchor, as row indices into the batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnchorGroup {
    pub anchor: usize,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// In-batch groups: every other row of the anchor's class is a positive,
/// every row of another class a negative. Anchors without a positive (their
/// class occurs once) or without a negative are skipped.
pub fn groups_from_labels(labels: &[ClassId]) -> Vec<AnchorGroup> {
    let mut out = Vec::new();
    for (i, &yi) in labels.iter().enumerate() {
        let mut positives = Vec::new();
        let mut negatives = Vec::new();
        for (j, &yj) in labels.iter().enumerate() {
            if j == i {
                continue;
            }
            if yj == yi {
                positives.push(j);
            } else {
                negatives.push(j);
            }
        }
        if !positives.is_empty() && !negatives.is_empty() {
            out.push(AnchorGroup {
                anchor: i,
                positives,
                negatives,
            });
        }
    }
    out
}

/// Batch form of the instance loss: for each anchor the expectation over its
/// positives, then the mean over anchors. Returns `(0, 0)` when no anchor is
/// usable.
///
/// The negatives' log-sum-exp is shared by all positives of an anchor, so
/// each anchor costs `O((|P| + |N|) · d)`.
pub fn instance_contrastive_batch<T: Real>(
    z: &Mat<T>,
    groups: &[AnchorGroup],
    tau_e: f64,
) -> Result<(T, Mat<T>)> {
    let mut grad = Mat::zeros(z.rows(), z.cols());
    if groups.is_empty() {
        return Ok((T::zero(), grad));
    }
    let inv_tau = T::of(1.0 / tau_e);
    let n_groups = T::of(groups.len() as f64);
    let mut total = T::zero();
    for g in groups {
        if g.negatives.is_empty() || g.positives.is_empty() {
            return Err(Error::domain(format!("anchor {} lacks positives or negatives", g.anchor)));
        }
        if std::iter::once(&g.anchor).chain(&g.positives).chain(&g.negatives).any(|&r| r >= z.rows()) {
            return Err(Error::shape(format!("anchor group {} indexes past {} rows", g.anchor, z.rows())));
        }
        let zi = z.row(g.anchor);
        let neg_logits: Vec<T> = g.negatives.iter().map(|&k| dot(zi, z.row(k)) * inv_tau).collect();
        let m = log_sum_exp(&neg_logits);
        let n_pos = T::of(g.positives.len() as f64);
        let w = inv_tau / (n_pos * n_groups);
        let mut anchor_loss = T::zero();
        // Σ_p exp(m - lse_p): the shared factor of every negative's softmax weight
        let mut neg_mass = T::zero();
        let mut coeff: Vec<(usize, T)> = Vec::with_capacity(g.positives.len() + g.negatives.len());
        for &p in &g.positives {
            let lp = dot(zi, z.row(p)) * inv_tau;
            let lse = log_sum_exp(&[lp, m]);
            anchor_loss = anchor_loss + softplus(m - lp);
            neg_mass = neg_mass + (m - lse).exp();
            coeff.push((p, ((lp - lse).exp() - T::one()) * w));
        }
        for (&k, &lk) in g.negatives.iter().zip(&neg_logits) {
            coeff.push((k, (lk - m).exp() * neg_mass * w));
        }
        for (row, c) in coeff {
            if c == T::zero() {
                continue;
            }
            for j in 0..z.cols() {
                let (a, b) = (z[(g.anchor, j)], z[(row, j)]);
                grad[(g.anchor, j)] = grad[(g.anchor, j)] + c * b;
                grad[(row, j)] = grad[(row, j)] + c * a;
            }
        }
        total = total + anchor_loss / n_pos;
    }
    Ok((total / n_groups, grad))
}

/// Mean over rows of `-log softmax(scores/τ)[pos]`, with `∂/∂scores`.
/// `pos` holds 0-based column indices.
pub fn class_contrastive_from_scores<T: Real>(
    scores: &Mat<T>,
    pos: &[usize],
    tau_s: f64,
) -> Result<(T, Mat<T>)> {
    let (n, s) = scores.shape();
    if pos.len() != n {
        return Err(Error::shape(format!("{} targets for {n} score rows", pos.len())));
    }
    if let Some(&bad) = pos.iter().find(|&&p| p >= s) {
        return Err(Error::domain(format!("positive index {} outside 1..={s}", bad + 1)));
    }
    let inv_tau = T::of(1.0 / tau_s);
    let inv_n = T::one() / T::of(n.max(1) as f64);
    let mut grad = Mat::zeros(n, s);
    let mut total = T::zero();
    let mut logits = vec![T::zero(); s];
    for i in 0..n {
        for (l, &v) in logits.iter_mut().zip(scores.row(i)) {
            *l = v * inv_tau;
        }
        let lse = log_sum_exp(&logits);
        total = total + neg_log_softmax(&logits, pos[i]);
        for j in 0..s {
            let mut d = (logits[j] - lse).exp();
            if j == pos[i] {
                d = d - T::one();
            }
            grad[(i, j)] = d * inv_tau * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

/// Class-level contrastive loss: an S-way softmax over comparator scores of
/// each embedded row against all seen descriptors. `pos_ids` are class ids
/// in `1..=S`.
pub fn class_contrastive_loss<T: Real>(
    f: &ComparatorNet<T>,
    h: &Mat<T>,
    a_all_seen: &Mat<T>,
    pos_ids: &[ClassId],
    tau_s: f64,
) -> Result<T> {
    let s = a_all_seen.rows();
    let mut pos = Vec::with_capacity(pos_ids.len());
    for &id in pos_ids {
        if id == 0 || id as usize > s {
            return Err(Error::domain(format!("positive class {id} outside 1..={s}")));
        }
        pos.push(id as usize - 1);
    }
    let scores = f.score_matrix(h, a_all_seen)?;
    Ok(class_contrastive_from_scores(&scores, &pos, tau_s)?.0)
}

/// `V + L_se_real + L_se_sync` at the current parameters.
pub fn total_loss_basic<T: Real>(
    nets: &mut NetBundle<T>,
    batch: &StepBatch<T>,
    params: &LossParams,
) -> Result<LossTerms<T>> {
    evaluate_objective(nets, batch, TermMask::se_basic(), params, GradMode::None)
}

/// `V + L_ins + L_cls`, with either contrastive term switchable off.
pub fn total_loss_ce<T: Real>(
    nets: &mut NetBundle<T>,
    batch: &StepBatch<T>,
    params: &LossParams,
    instance: bool,
    class: bool,
) -> Result<LossTerms<T>> {
    let mask = TermMask {
        ins: instance,
        cls: class,
        ..TermMask::ce_full()
    };
    evaluate_objective(nets, batch, mask, params, GradMode::None)
}
