use rand::Rng;
use serde::Serialize;

use super::batch::StepBatch;
use super::config::{Mode, TrainConfig};
use crate::embedding::{
    class_contrastive_from_scores, hinge_from_scores, instance_contrastive_batch, rank_hinge_dot, ComparatorNet,
    EmbedNet, LossParams, ProjectionHead,
};
use crate::error::{Error, Result};
use crate::generation::{adversarial_backprop, adversarial_value, AdvObjective, DiscriminatorNet, GeneratorNet};
use crate::nn::{Mat, Param, ParamSet, Real};

/// All networks of the model. Parameters carry their own Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct NetBundle<T: Real = f32> {
    pub config: TrainConfig,
    pub g: GeneratorNet<T>,
    pub d: DiscriminatorNet<T>,
    pub e: EmbedNet<T>,
    pub h: ProjectionHead<T>,
    pub f: ComparatorNet<T>,
}

impl NetBundle<f32> {
    pub fn new<R: Rng + ?Sized>(cfg: &TrainConfig, d_x: usize, d_a: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let g = GeneratorNet::new(d_a, cfg.noise_dim(d_a), cfg.hidden, d_x, cfg.clamp_generator_output, rng)?;
        let d = DiscriminatorNet::new(d_x, d_a, cfg.hidden, rng)?;
        let (e, d_h) = if cfg.mode.semantic_embedding() {
            (EmbedNet::semantic(d_x, d_a, rng)?, d_a)
        } else {
            (EmbedNet::new(d_x, cfg.d_h, rng)?, cfg.d_h)
        };
        let h = ProjectionHead::new(d_h, cfg.d_z, rng)?;
        let f = ComparatorNet::new(d_h, d_a, cfg.hidden, rng)?;
        Ok(NetBundle {
            config: cfg.clone(),
            g,
            d,
            e,
            h,
            f,
        })
    }
}

impl<T: Real> NetBundle<T> {
    pub fn feature_dim(&self) -> usize {
        self.g.out_dim()
    }

    pub fn attr_dim(&self) -> usize {
        self.g.attr_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.e.out_dim()
    }

    pub fn cast<U: Real>(&self) -> NetBundle<U> {
        NetBundle {
            config: self.config.clone(),
            g: self.g.cast(),
            d: self.d.cast(),
            e: self.e.cast(),
            h: self.h.cast(),
            f: self.f.cast(),
        }
    }

    fn clear_tapes(&mut self) {
        self.g.clear_tape();
        self.d.net.clear_tape();
        self.e.clear_tape();
        self.h.clear_tape();
        self.f.clear_tape();
    }
}

impl<T: Real> ParamSet<T> for NetBundle<T> {
    fn param_blocks(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        for (tag, set) in [
            ("G", &self.g as &dyn ParamSet<T>),
            ("D", &self.d),
            ("E", &self.e),
            ("H", &self.h),
            ("F", &self.f),
        ] {
            out.extend(set.param_blocks().into_iter().map(|(n, p)| (format!("{tag}.{n}"), p)));
        }
        out
    }

    fn param_blocks_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        for (tag, set) in [
            ("G", &mut self.g as &mut dyn ParamSet<T>),
            ("D", &mut self.d),
            ("E", &mut self.e),
            ("H", &mut self.h),
            ("F", &mut self.f),
        ] {
            out.extend(set.param_blocks_mut().into_iter().map(|(n, p)| (format!("{tag}.{n}"), p)));
        }
        out
    }
}

/// How the embedding is scored against descriptors in the ranking loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankSpace {
    /// `aᵀ E(x)`, `E` maps into descriptor space.
    Semantic,
    /// `F(E(x), a)` in a learned embedding space.
    Comparator,
}

/// Terms present in the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TermMask {
    pub generator: bool,
    pub adversarial: bool,
    pub se_real: bool,
    pub se_sync: bool,
    pub rank_space: RankSpace,
    pub ins: bool,
    pub cls: bool,
}

impl TermMask {
    pub fn se_basic() -> Self {
        TermMask {
            generator: true,
            adversarial: true,
            se_real: true,
            se_sync: true,
            rank_space: RankSpace::Semantic,
            ins: false,
            cls: false,
        }
    }

    pub fn ce_full() -> Self {
        TermMask {
            generator: true,
            adversarial: true,
            se_real: false,
            se_sync: false,
            rank_space: RankSpace::Comparator,
            ins: true,
            cls: true,
        }
    }

    pub fn for_mode(mode: Mode) -> Self {
        let ce = TermMask::ce_full();
        let se = TermMask::se_basic();
        match mode {
            Mode::CeFull => ce,
            Mode::CeInsOnly => TermMask { cls: false, ..ce },
            Mode::CeClsOnly => TermMask { ins: false, ..ce },
            Mode::SeBasic => se,
            Mode::SeEmbed => TermMask {
                rank_space: RankSpace::Comparator,
                ..se
            },
            Mode::GenOnly => TermMask {
                ins: false,
                cls: false,
                ..ce
            },
            Mode::SeOnly => TermMask {
                generator: false,
                adversarial: false,
                se_sync: false,
                ..se
            },
        }
    }

    fn uses_embedding(&self) -> bool {
        self.se_real || self.se_sync || self.ins || self.cls
    }
}

/// Which gradients [`evaluate_objective`] accumulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    /// Value only.
    None,
    /// Gradient of the generator-side objective (adversarial part for `G`
    /// plus the embedding terms) into G, E, H, F. `D` receives nothing.
    GeneratorSide { non_saturating: bool },
    /// Gradient of the full objective `V + Σ terms` into every network,
    /// `D` included. Used for gradient audits.
    Total,
}

/// Values of every term at one evaluation; absent terms are `None`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossTerms<T: Real = f32> {
    #[serde(rename = "V")]
    pub v: Option<T>,
    /// The adversarial part of the generator-side objective: `V` itself or
    /// the non-saturating surrogate.
    #[serde(skip)]
    pub adv_g: Option<T>,
    #[serde(rename = "L_ins")]
    pub ins: Option<T>,
    #[serde(rename = "L_cls")]
    pub cls: Option<T>,
    #[serde(rename = "L_se_real")]
    pub se_real: Option<T>,
    #[serde(rename = "L_se_sync")]
    pub se_sync: Option<T>,
}

impl<T: Real> LossTerms<T> {
    fn embedding_sum(&self) -> T {
        [self.ins, self.cls, self.se_real, self.se_sync]
            .into_iter()
            .flatten()
            .fold(T::zero(), |a, b| a + b)
    }

    /// `V` plus every present embedding term.
    pub fn total(&self) -> T {
        self.v.unwrap_or_else(T::zero) + self.embedding_sum()
    }

    /// The quantity minimized over the generator-side networks.
    pub fn generator_side(&self) -> T {
        self.adv_g.unwrap_or_else(T::zero) + self.embedding_sum()
    }
}

fn add_rows<T: Real>(dst: &mut Mat<T>, offset: usize, src: &Mat<T>) {
    for i in 0..src.rows() {
        for (d, &s) in dst.row_mut(offset + i).iter_mut().zip(src.row(i)) {
            *d = *d + s;
        }
    }
}

/// Evaluates the masked objective on a pre-drawn batch and, depending on
/// `grad`, accumulates parameter gradients. Gradients are added to whatever
/// the networks already hold.
pub fn evaluate_objective<T: Real>(
    nets: &mut NetBundle<T>,
    batch: &StepBatch<T>,
    mask: TermMask,
    params: &LossParams,
    grad: GradMode,
) -> Result<LossTerms<T>> {
    let out = objective_inner(nets, batch, mask, params, grad);
    if grad == GradMode::None || out.is_err() {
        nets.clear_tapes();
    }
    out
}

fn objective_inner<T: Real>(
    nets: &mut NetBundle<T>,
    batch: &StepBatch<T>,
    mask: TermMask,
    params: &LossParams,
    grad: GradMode,
) -> Result<LossTerms<T>> {
    if mask.rank_space == RankSpace::Comparator && (mask.se_real || mask.se_sync) && mask.cls {
        return Err(Error::Config("comparator ranking and class loss cannot share F in one pass".into()));
    }
    if (mask.adversarial || mask.se_sync || mask.ins) && !mask.generator {
        return Err(Error::Config("adversarial, synthetic-ranking and instance terms need the generator".into()));
    }
    let b = batch.len();
    if b == 0 {
        return Err(Error::domain("empty batch"));
    }
    let backprop = grad != GradMode::None;
    let mut terms = LossTerms::default();

    let fake = if mask.generator {
        Some(if backprop {
            nets.g.forward(&batch.attrs, &batch.noise)?
        } else {
            nets.g.infer(&batch.attrs, &batch.noise)?
        })
    } else {
        None
    };
    let mut grad_fake = fake.as_ref().map(|f| Mat::zeros(f.rows(), f.cols()));

    if mask.adversarial {
        let fake_x = fake.as_ref().expect("generator present");
        match grad {
            GradMode::None => {
                let v = adversarial_value(&nets.d, &batch.real_x, &batch.attrs, fake_x, &batch.attrs)?;
                terms.v = Some(v);
                terms.adv_g = Some(v);
            }
            GradMode::GeneratorSide { non_saturating } => {
                let objective = if non_saturating {
                    AdvObjective::NonSaturating
                } else {
                    AdvObjective::Value { scale: 1.0 }
                };
                let pass =
                    adversarial_backprop(&mut nets.d, &batch.real_x, &batch.attrs, fake_x, &batch.attrs, objective)?;
                nets.d.zero_grad();
                terms.v = Some(pass.value);
                terms.adv_g = Some(pass.objective);
                add_rows(grad_fake.as_mut().expect("generator present"), 0, &pass.grad_fake_x);
            }
            GradMode::Total => {
                let pass = adversarial_backprop(
                    &mut nets.d,
                    &batch.real_x,
                    &batch.attrs,
                    fake_x,
                    &batch.attrs,
                    AdvObjective::Value { scale: 1.0 },
                )?;
                terms.v = Some(pass.value);
                terms.adv_g = Some(pass.value);
                add_rows(grad_fake.as_mut().expect("generator present"), 0, &pass.grad_fake_x);
            }
        }
    }

    if mask.uses_embedding() {
        let input = match &fake {
            Some(f) => batch.real_x.vcat(f)?,
            None => batch.real_x.clone(),
        };
        let h = if backprop { nets.e.forward(&input)? } else { nets.e.infer(&input)? };
        let d_h = h.cols();
        let mut gh = Mat::zeros(h.rows(), d_h);
        let delta = T::of(params.margin_delta);

        if mask.se_real || mask.se_sync {
            // (term active?, first row, negative descriptors)
            let parts = [
                (mask.se_real, 0, &batch.neg_attrs_real),
                (mask.se_sync && fake.is_some(), b, &batch.neg_attrs_fake),
            ];
            match mask.rank_space {
                RankSpace::Semantic => {
                    for (k, &(on, start, neg)) in parts.iter().enumerate() {
                        if !on {
                            continue;
                        }
                        let emb = h.slice_rows(start, start + b);
                        let (l, g) = rank_hinge_dot(&emb, &batch.attrs, neg, delta)?;
                        if k == 0 {
                            terms.se_real = Some(l);
                        } else {
                            terms.se_sync = Some(l);
                        }
                        add_rows(&mut gh, start, &g);
                    }
                }
                RankSpace::Comparator => {
                    // one F pass over [h|a⁺] and [h|a⁻] for every active part
                    let active: Vec<(usize, usize, &Mat<T>)> = parts
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| p.0)
                        .map(|(k, p)| (k, p.1, p.2))
                        .collect();
                    let mut hh: Option<Mat<T>> = None;
                    let mut aa: Option<Mat<T>> = None;
                    for &(_, start, neg) in &active {
                        let hs = h.slice_rows(start, start + b);
                        let pair_h = hs.vcat(&hs)?;
                        let pair_a = batch.attrs.vcat(neg)?;
                        hh = Some(match hh {
                            Some(m) => m.vcat(&pair_h)?,
                            None => pair_h,
                        });
                        aa = Some(match aa {
                            Some(m) => m.vcat(&pair_a)?,
                            None => pair_a,
                        });
                    }
                    let (hh, aa) = (hh.expect("one part active"), aa.expect("one part active"));
                    let scores = if backprop {
                        nets.f.paired_forward(&hh, &aa)?
                    } else {
                        nets.f.paired_infer(&hh, &aa)?
                    };
                    let s = scores.as_slice();
                    let mut gs = Mat::zeros(scores.rows(), 1);
                    for (slot, &(k, _, _)) in active.iter().enumerate() {
                        let base = slot * 2 * b;
                        let (l, gp, gn) = hinge_from_scores(&s[base..base + b], &s[base + b..base + 2 * b], delta);
                        if k == 0 {
                            terms.se_real = Some(l);
                        } else {
                            terms.se_sync = Some(l);
                        }
                        gs.as_mut_slice()[base..base + b].copy_from_slice(&gp);
                        gs.as_mut_slice()[base + b..base + 2 * b].copy_from_slice(&gn);
                    }
                    if backprop {
                        let g_pairs = nets.f.paired_backward(&gs, d_h)?;
                        for (slot, &(_, start, _)) in active.iter().enumerate() {
                            let base = slot * 2 * b;
                            add_rows(&mut gh, start, &g_pairs.slice_rows(base, base + b));
                            add_rows(&mut gh, start, &g_pairs.slice_rows(base + b, base + 2 * b));
                        }
                    }
                }
            }
        }

        if mask.ins {
            let z = if backprop { nets.h.forward(&h)? } else { nets.h.infer(&h)? };
            let (l, gz) = instance_contrastive_batch(&z, &batch.groups, params.tau_e)?;
            terms.ins = Some(l);
            if backprop {
                let g = nets.h.backward(&gz)?;
                gh.add_assign(&g)?;
            }
        }

        if mask.cls {
            let scores = if backprop {
                nets.f.score_matrix_forward(&h, &batch.seen_attrs)?
            } else {
                nets.f.score_matrix(&h, &batch.seen_attrs)?
            };
            let mut pos: Vec<usize> = batch.labels.iter().map(|&c| c as usize - 1).collect();
            if fake.is_some() {
                pos.extend_from_within(..);
            }
            let (l, gs) = class_contrastive_from_scores(&scores, &pos, params.tau_s)?;
            terms.cls = Some(l);
            if backprop {
                let g = nets.f.score_matrix_backward(&gs, d_h)?;
                gh.add_assign(&g)?;
            }
        }

        if backprop {
            let gin = nets.e.backward(&gh)?;
            if let Some(gf) = grad_fake.as_mut() {
                add_rows(gf, 0, &gin.slice_rows(b, 2 * b));
            }
        }
    }

    if backprop {
        if let Some(gf) = grad_fake {
            nets.g.backward(&gf)?;
        }
    }
    let all = [terms.v, terms.ins, terms.cls, terms.se_real, terms.se_sync];
    if all.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerics(format!("non-finite loss term: {terms:?}")));
    }
    Ok(terms)
}
