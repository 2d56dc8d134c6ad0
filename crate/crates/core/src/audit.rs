//! Finite-difference audit of every loss family on small random models.

use serde::Serialize;

use crate::dataset::{make_synthetic_world, SyntheticWorldSpec};
use crate::error::Result;
use crate::nn::{grad_check_with, GradCheckOptions, GradCheckReport, ParamSet};
use crate::trainer::{evaluate_objective, GradMode, Mode, NetBundle, RankSpace, StepBatch, TermMask, TrainConfig};

/// A loss family and the networks it is evaluated with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LossFamily {
    RankingReal,
    Adversarial,
    RankingSync,
    Instance,
    Class,
    /// `V + L_se_real + L_se_sync` with dot-product compatibility.
    BasicTotal,
    /// The same with comparator scores in a learned space.
    EmbedTotal,
    /// `V + L_ins + L_cls`.
    ContrastiveTotal,
}

impl LossFamily {
    pub const ALL: [LossFamily; 8] = [
        LossFamily::RankingReal,
        LossFamily::Adversarial,
        LossFamily::RankingSync,
        LossFamily::Instance,
        LossFamily::Class,
        LossFamily::BasicTotal,
        LossFamily::EmbedTotal,
        LossFamily::ContrastiveTotal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossFamily::RankingReal => "ranking_real",
            LossFamily::Adversarial => "adversarial",
            LossFamily::RankingSync => "ranking_sync",
            LossFamily::Instance => "instance_contrastive",
            LossFamily::Class => "class_contrastive",
            LossFamily::BasicTotal => "total_basic",
            LossFamily::EmbedTotal => "total_embed",
            LossFamily::ContrastiveTotal => "total_ce",
        }
    }

    /// Mode whose network layout the family is checked on.
    pub fn mode(self) -> Mode {
        match self {
            LossFamily::RankingReal | LossFamily::RankingSync | LossFamily::BasicTotal => Mode::SeBasic,
            LossFamily::EmbedTotal => Mode::SeEmbed,
            _ => Mode::CeFull,
        }
    }

    pub fn mask(self) -> TermMask {
        let off = TermMask {
            generator: true,
            adversarial: false,
            se_real: false,
            se_sync: false,
            rank_space: RankSpace::Semantic,
            ins: false,
            cls: false,
        };
        match self {
            LossFamily::RankingReal => TermMask {
                generator: false,
                se_real: true,
                ..off
            },
            LossFamily::Adversarial => TermMask {
                adversarial: true,
                ..off
            },
            LossFamily::RankingSync => TermMask { se_sync: true, ..off },
            LossFamily::Instance => TermMask { ins: true, ..off },
            LossFamily::Class => TermMask { cls: true, ..off },
            LossFamily::BasicTotal => TermMask::for_mode(Mode::SeBasic),
            LossFamily::EmbedTotal => TermMask::for_mode(Mode::SeEmbed),
            LossFamily::ContrastiveTotal => TermMask::for_mode(Mode::CeFull),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AuditEntry {
    pub family: LossFamily,
    pub name: &'static str,
    pub instance: u64,
    pub report: GradCheckReport,
}

/// Small model and batch for one audit instance.
pub fn audit_instance(family: LossFamily, seed: u64) -> Result<(NetBundle<f64>, StepBatch<f64>, TrainConfig)> {
    let world = make_synthetic_world(&SyntheticWorldSpec {
        seen: 4,
        unseen: 2,
        d_x: 6,
        d_a: 3,
        n_per_class: 10,
        noise_sigma: 0.5,
        seed,
        class_map: None,
    })?;
    let cfg = TrainConfig {
        mode: family.mode(),
        batch_size: 8,
        d_h: 5,
        d_z: 4,
        hidden: 6,
        tau_e: 0.5,
        tau_s: 0.5,
        margin_delta: 1.0,
        seed,
        // keep the generator output off its clamp so every element is checkable
        clamp_generator_output: false,
        ..Default::default()
    };
    let mut rng = crate::rng_from_seed(seed ^ 0x5eed);
    let nets = NetBundle::new(&cfg, 6, 3, &mut rng)?;
    let batch = StepBatch::draw(&world.dataset, &cfg, &mut rng)?;
    Ok((nets.cast(), batch.cast(), cfg))
}

/// Checks one family on one instance. With `flip_block` set, the analytic
/// gradient of the named parameter block is negated before comparison.
pub fn audit_one(
    family: LossFamily,
    seed: u64,
    opts: &GradCheckOptions,
    flip_block: Option<&str>,
) -> Result<GradCheckReport> {
    let (mut nets, batch, cfg) = audit_instance(family, seed)?;
    let mask = family.mask();
    let params = cfg.loss_params();
    grad_check_with(
        &mut nets,
        |m: &mut NetBundle<f64>| {
            let t = evaluate_objective(m, &batch, mask, &params, GradMode::Total)?;
            if let Some(target) = flip_block {
                for (name, p) in m.param_blocks_mut() {
                    if name == target {
                        p.grad = p.grad.scale(-1.0);
                    }
                }
            }
            Ok(t.total())
        },
        |m: &mut NetBundle<f64>| Ok(evaluate_objective(m, &batch, mask, &params, GradMode::None)?.total()),
        opts,
    )
}

/// Runs every family on `instances` seeds.
pub fn gradient_audit(instances: u64, opts: &GradCheckOptions) -> Result<Vec<AuditEntry>> {
    let mut out = Vec::new();
    for family in LossFamily::ALL {
        for seed in 0..instances {
            out.push(AuditEntry {
                family,
                name: family.name(),
                instance: seed,
                report: audit_one(family, seed, opts, None)?,
            });
        }
    }
    Ok(out)
}
