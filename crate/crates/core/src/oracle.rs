//! Straight-line scalar reimplementations of every loss in 64-bit floats.
//!
//! Nothing here uses `Mat` arithmetic, the tape, or the batched loss
//! kernels: each quantity is recomputed row by row with plain loops from
//! the raw parameters. Only used to cross-check the production code.

use crate::dataset::ClassId;
use crate::embedding::{AnchorGroup, ComparatorNet, EmbedNet, LossParams};
use crate::generation::{DiscriminatorNet, GeneratorNet, LOG_CLAMP};
use crate::nn::{LayerKind, Mat, Mlp};
use crate::trainer::{NetBundle, RankSpace, StepBatch, TermMask};

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Mat<f64>) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Forward pass of one input row.
pub fn mlp_row(net: &Mlp<f64>, x: &[f64]) -> Vec<f64> {
    let params = net.params();
    let mut p = 0;
    let mut cur = x.to_vec();
    for layer in net.layers() {
        cur = match layer.kind {
            LayerKind::Affine => {
                let w = &params[p].value;
                let b = &params[p + 1].value;
                p += 2;
                let mut out = vec![0.0; layer.out_dim];
                for (j, o) in out.iter_mut().enumerate() {
                    let mut acc = b[(0, j)];
                    for (i, &xi) in cur.iter().enumerate() {
                        acc += xi * w[(i, j)];
                    }
                    *o = acc;
                }
                out
            }
            LayerKind::LeakyRelu { slope } => cur.iter().map(|&v| if v >= 0.0 { v } else { slope * v }).collect(),
            LayerKind::Relu => cur.iter().map(|&v| v.max(0.0)).collect(),
            LayerKind::Sigmoid => cur.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            LayerKind::L2NormalizeRows => {
                let n = cur.iter().map(|v| v * v).sum::<f64>().sqrt();
                cur.iter().map(|&v| v / n).collect()
            }
        };
    }
    cur
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn generate(g: &GeneratorNet<f64>, a: &Rows, noise: &Rows) -> Rows {
    a.iter().zip(noise).map(|(ai, ni)| mlp_row(&g.net, &cat(ni, ai))).collect()
}

pub fn embed(e: &EmbedNet<f64>, x: &Rows) -> Rows {
    x.iter().map(|r| mlp_row(&e.net, r)).collect()
}

pub fn adversarial_value(d: &DiscriminatorNet<f64>, real_x: &Rows, real_a: &Rows, fake_x: &Rows, fake_a: &Rows) -> f64 {
    let ln = |p: f64| p.max(LOG_CLAMP).ln();
    let mut real = 0.0;
    for (x, a) in real_x.iter().zip(real_a) {
        real += ln(mlp_row(&d.net, &cat(x, a))[0]);
    }
    let mut fake = 0.0;
    for (x, a) in fake_x.iter().zip(fake_a) {
        fake += ln(1.0 - mlp_row(&d.net, &cat(x, a))[0]);
    }
    real / real_x.len() as f64 + fake / fake_x.len() as f64
}

pub fn ranking_dot(emb: &Rows, a_pos: &Rows, a_neg: &Rows, delta: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..emb.len() {
        s += (delta - dot(&a_pos[i], &emb[i]) + dot(&a_neg[i], &emb[i])).max(0.0);
    }
    s / emb.len() as f64
}

pub fn ranking_comparator(f: &ComparatorNet<f64>, h: &Rows, a_pos: &Rows, a_neg: &Rows, delta: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..h.len() {
        let sp = mlp_row(&f.net, &cat(&h[i], &a_pos[i]))[0];
        let sn = mlp_row(&f.net, &cat(&h[i], &a_neg[i]))[0];
        s += (delta - sp + sn).max(0.0);
    }
    s / h.len() as f64
}

pub fn ranking_loss_real(e: &EmbedNet<f64>, x: &Rows, a_pos: &Rows, a_neg: &Rows, delta: f64) -> f64 {
    ranking_dot(&embed(e, x), a_pos, a_neg, delta)
}

pub fn ranking_loss_sync(
    g: &GeneratorNet<f64>,
    e: &EmbedNet<f64>,
    a_pos: &Rows,
    a_neg: &Rows,
    noise: &Rows,
    delta: f64,
) -> f64 {
    ranking_dot(&embed(e, &generate(g, a_pos, noise)), a_pos, a_neg, delta)
}

/// Direct evaluation of the (K+1)-way softmax, without log-sum-exp.
pub fn instance_loss(z_i: &[f64], z_pos: &[f64], z_negs: &Rows, tau: f64) -> f64 {
    let pos = (dot(z_i, z_pos) / tau).exp();
    let negs: f64 = z_negs.iter().map(|n| (dot(z_i, n) / tau).exp()).sum();
    -(pos / (pos + negs)).ln()
}

pub fn instance_batch(z: &Rows, groups: &[AnchorGroup], tau: f64) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for g in groups {
        let negs: Rows = g.negatives.iter().map(|&k| z[k].clone()).collect();
        let mut a = 0.0;
        for &p in &g.positives {
            a += instance_loss(&z[g.anchor], &z[p], &negs, tau);
        }
        total += a / g.positives.len() as f64;
    }
    total / groups.len() as f64
}

/// One anchor's S-way loss; `pos` is a class id in `1..=S`.
pub fn class_loss(f: &ComparatorNet<f64>, h: &[f64], a_seen: &Rows, pos: ClassId, tau: f64) -> f64 {
    let scores: Vec<f64> = a_seen.iter().map(|a| (mlp_row(&f.net, &cat(h, a))[0] / tau).exp()).collect();
    -(scores[pos as usize - 1] / scores.iter().sum::<f64>()).ln()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OracleTerms {
    pub v: Option<f64>,
    pub se_real: Option<f64>,
    pub se_sync: Option<f64>,
    pub ins: Option<f64>,
    pub cls: Option<f64>,
}

impl OracleTerms {
    pub fn total(&self) -> f64 {
        [self.v, self.se_real, self.se_sync, self.ins, self.cls].into_iter().flatten().sum()
    }
}

/// Term-wise recomputation of the masked objective on a batch.
pub fn objective(nets: &NetBundle<f64>, batch: &StepBatch<f64>, mask: TermMask, params: &LossParams) -> OracleTerms {
    let real_x = rows(&batch.real_x);
    let attrs = rows(&batch.attrs);
    let fake = mask.generator.then(|| generate(&nets.g, &attrs, &rows(&batch.noise)));
    let mut out = OracleTerms::default();
    if mask.adversarial {
        out.v = Some(adversarial_value(&nets.d, &real_x, &attrs, fake.as_ref().unwrap(), &attrs));
    }
    let h_real = embed(&nets.e, &real_x);
    let h_fake = fake.as_ref().map(|f| embed(&nets.e, f));
    let delta = params.margin_delta;
    let rank = |h: &Rows, neg: &Mat<f64>| match mask.rank_space {
        RankSpace::Semantic => ranking_dot(h, &attrs, &rows(neg), delta),
        RankSpace::Comparator => ranking_comparator(&nets.f, h, &attrs, &rows(neg), delta),
    };
    if mask.se_real {
        out.se_real = Some(rank(&h_real, &batch.neg_attrs_real));
    }
    if mask.se_sync {
        out.se_sync = Some(rank(h_fake.as_ref().unwrap(), &batch.neg_attrs_fake));
    }
    let mut h_all = h_real.clone();
    let mut labels = batch.labels.clone();
    if let Some(hf) = &h_fake {
        h_all.extend(hf.iter().cloned());
        labels.extend_from_slice(&batch.labels);
    }
    if mask.ins {
        let z: Rows = h_all.iter().map(|h| mlp_row(&nets.h.net, h)).collect();
        out.ins = Some(instance_batch(&z, &batch.groups, params.tau_e));
    }
    if mask.cls {
        let seen = rows(&batch.seen_attrs);
        let s: f64 = h_all
            .iter()
            .zip(&labels)
            .map(|(h, &c)| class_loss(&nets.f, h, &seen, c, params.tau_s))
            .sum();
        out.cls = Some(s / h_all.len() as f64);
    }
    out
}

/// Same as [`objective`] for single-precision networks and batches.
pub fn objective_f32(nets: &NetBundle<f32>, batch: &StepBatch<f32>, mask: TermMask, params: &LossParams) -> OracleTerms {
    objective(&nets.cast(), &batch.cast(), mask, params)
}

/// Random networks for `mode` and an 8-row batch from a small world, with
/// temperatures and margin drawn per case.
pub fn random_case(mode: crate::trainer::Mode, seed: u64) -> crate::Result<(NetBundle, StepBatch, LossParams)> {
    use rand::Rng;
    let world = crate::dataset::make_synthetic_world(&crate::dataset::SyntheticWorldSpec {
        seen: 4,
        unseen: 2,
        d_x: 10,
        d_a: 5,
        n_per_class: 12,
        seed,
        ..Default::default()
    })?;
    let mut rng = crate::rng_from_seed(seed.wrapping_mul(31) + 7);
    let cfg = crate::trainer::TrainConfig {
        mode,
        seed,
        batch_size: 8,
        d_h: 6,
        d_z: 4,
        hidden: 12,
        tau_e: rng.random_range(0.05..2.0),
        tau_s: rng.random_range(0.05..2.0),
        margin_delta: rng.random_range(0.1..2.0),
        ..Default::default()
    };
    let nets = NetBundle::new(&cfg, 10, 5, &mut rng)?;
    let batch = StepBatch::draw(&world.dataset, &cfg, &mut rng)?;
    Ok((nets, batch, cfg.loss_params()))
}

/// Largest discrepancy, relative to `max(1, |oracle|)`, between the
/// production objective terms for `mode` and this module's recomputation
/// over `trials` random cases. A term present on only one side counts as
/// an infinite discrepancy.
pub fn objective_discrepancy(mode: crate::trainer::Mode, trials: u64) -> crate::Result<f64> {
    use crate::trainer::{evaluate_objective, GradMode};
    let mask = TermMask::for_mode(mode);
    let mut worst = 0.0f64;
    for seed in 0..trials {
        let (mut nets, batch, params) = random_case(mode, seed)?;
        let got = evaluate_objective(&mut nets, &batch, mask, &params, GradMode::None)?;
        let want = objective_f32(&nets, &batch, mask, &params);
        let pairs = [
            (got.v, want.v),
            (got.ins, want.ins),
            (got.cls, want.cls),
            (got.se_real, want.se_real),
            (got.se_sync, want.se_sync),
            (Some(got.total()), Some(want.total())),
        ];
        for (g, w) in pairs {
            let err = match (g, w) {
                (Some(g), Some(w)) => (g as f64 - w).abs() / w.abs().max(1.0),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
