use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batch::StepBatch;
use super::config::TrainConfig;
use super::objective::{evaluate_objective, GradMode, NetBundle, TermMask};
use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::generation::discriminator_step;
use crate::nn::{adam_step_set, ParamSet};

/// One line of the training log. Absent terms serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    #[serde(rename = "V")]
    pub v: Option<f64>,
    #[serde(rename = "L_ins")]
    pub l_ins: Option<f64>,
    #[serde(rename = "L_cls")]
    pub l_cls: Option<f64>,
    #[serde(rename = "L_se_real")]
    pub l_se_real: Option<f64>,
    #[serde(rename = "L_se_sync")]
    pub l_se_sync: Option<f64>,
    /// The generator-side objective that the joint step descends.
    #[serde(rename = "L_gen")]
    pub l_gen: f64,
    pub wall_ms: f64,
}

impl StepRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_values(&self, other: &StepRecord) -> bool {
        StepRecord {
            wall_ms: 0.0,
            ..self.clone()
        } == StepRecord {
            wall_ms: 0.0,
            ..other.clone()
        }
    }
}

/// Resumable training state: networks, random stream and step counter.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub nets: NetBundle,
    pub rng: crate::Rng,
    pub step: u64,
    last_good: Option<NetBundle>,
}

impl Trainer {
    pub fn new(ds: &FeatureDataset, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        ds.validate()?;
        let mut rng = crate::rng_from_seed(cfg.seed);
        let mut nets = NetBundle::new(cfg, ds.feature_dim(), ds.semantic.dim(), &mut rng)?;
        let mean = ds.train.x.sum_rows().scale(1.0 / ds.train.len() as f32);
        nets.g.set_output_bias(mean.as_slice())?;
        Ok(Trainer {
            nets,
            rng,
            step: 0,
            last_good: None,
        })
    }

    pub fn from_state(nets: NetBundle, rng: crate::Rng, step: u64) -> Self {
        Trainer {
            nets,
            rng,
            step,
            last_good: None,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.nets.config
    }

    pub fn steps_per_epoch(&self, ds: &FeatureDataset) -> usize {
        ds.train.len().div_ceil(self.config().batch_size).max(1)
    }

    /// Networks as they were at the start of the last completed epoch.
    pub fn last_good(&self) -> Option<&NetBundle> {
        self.last_good.as_ref()
    }

    /// `d_steps_per_g_step` discriminator ascent steps, each on a fresh
    /// batch, then one joint descent step on the generator-side objective.
    pub fn step(&mut self, ds: &FeatureDataset) -> Result<StepRecord> {
        let start = Instant::now();
        let cfg = self.nets.config.clone();
        let adam = cfg.adam();
        let mode = cfg.mode;
        let mask = TermMask::for_mode(mode);
        if mask.adversarial {
            for _ in 0..cfg.d_steps_per_g_step {
                let b = StepBatch::draw(ds, &cfg, &mut self.rng)?;
                discriminator_step(&self.nets.g, &mut self.nets.d, &b.real_x, &b.attrs, &b.attrs, &b.noise, &adam)?;
            }
        }
        let batch = StepBatch::draw(ds, &cfg, &mut self.rng)?;
        self.nets.zero_grad();
        let terms = evaluate_objective(
            &mut self.nets,
            &batch,
            mask,
            &cfg.loss_params(),
            GradMode::GeneratorSide {
                non_saturating: cfg.non_saturating,
            },
        )?;
        let nets = &mut self.nets;
        // gradients are finite-checked per network before any update
        if mode.uses_generator() {
            adam_step_set(&mut nets.g, &adam)?;
        }
        if mode.uses_embedding() {
            adam_step_set(&mut nets.e, &adam)?;
        }
        if mode.uses_projection() {
            adam_step_set(&mut nets.h, &adam)?;
        }
        if mode.uses_comparator() {
            adam_step_set(&mut nets.f, &adam)?;
        }
        self.step += 1;
        let f = |v: Option<f32>| v.map(f64::from);
        Ok(StepRecord {
            step: self.step,
            v: f(terms.v),
            l_ins: f(terms.ins),
            l_cls: f(terms.cls),
            l_se_real: f(terms.se_real),
            l_se_sync: f(terms.se_sync),
            l_gen: terms.generator_side() as f64,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Runs whole epochs, appending to `log`. On a numerical failure the
    /// networks are rolled back to the start of the failing epoch and the
    /// error is returned.
    pub fn run_epochs(&mut self, ds: &FeatureDataset, epochs: usize, log: &mut Vec<StepRecord>) -> Result<()> {
        let steps = self.steps_per_epoch(ds);
        for _ in 0..epochs {
            self.last_good = Some(self.nets.clone());
            for _ in 0..steps {
                match self.step(ds) {
                    Ok(rec) => log.push(rec),
                    Err(e @ Error::Numerics(_)) => {
                        self.nets = self.last_good.clone().expect("snapshot taken");
                        return Err(e);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }
}

/// Trains from scratch for `cfg.epochs` epochs.
pub fn train(ds: &FeatureDataset, cfg: &TrainConfig) -> Result<(NetBundle, Vec<StepRecord>)> {
    let mut t = Trainer::new(ds, cfg)?;
    let mut log = Vec::new();
    t.run_epochs(ds, cfg.epochs, &mut log)?;
    Ok((t.nets, log))
}

/// Everything produced by one train → fit → evaluate run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trainer: Trainer,
    pub log: Vec<StepRecord>,
    pub classifier: super::classify::SoftmaxClassifier,
    pub report: super::classify::EvalReport,
}

/// Trains, fits the final classifier with the trainer's random stream and
/// evaluates on both test partitions.
pub fn run_pipeline(ds: &FeatureDataset, cfg: &TrainConfig) -> Result<RunOutcome> {
    let mut trainer = Trainer::new(ds, cfg)?;
    let mut log = Vec::new();
    trainer.run_epochs(ds, cfg.epochs, &mut log)?;
    let classifier = super::classify::fit_final_classifier(&trainer.nets, ds, cfg, &mut trainer.rng)?;
    let report = super::classify::evaluate(&classifier, &trainer.nets, ds)?;
    Ok(RunOutcome {
        trainer,
        log,
        classifier,
        report,
    })
}
