use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::LossParams;
use crate::error::{Error, Result};
use crate::nn::AdamConfig;

/// Which objective is trained and in which space the final classifier lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Generator plus contrastive embedding with both contrastive terms.
    CeFull,
    CeInsOnly,
    CeClsOnly,
    /// Generator plus a semantic embedding trained with the ranking loss;
    /// the classifier works in descriptor space.
    SeBasic,
    /// Ranking loss with comparator scores in a learned embedding space.
    SeEmbed,
    /// Generator only; the classifier works on raw features.
    GenOnly,
    /// Semantic embedding only, no generator; classification by the most
    /// compatible descriptor.
    SeOnly,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::CeFull,
        Mode::CeInsOnly,
        Mode::CeClsOnly,
        Mode::SeBasic,
        Mode::SeEmbed,
        Mode::GenOnly,
        Mode::SeOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::CeFull => "ce_full",
            Mode::CeInsOnly => "ce_ins_only",
            Mode::CeClsOnly => "ce_cls_only",
            Mode::SeBasic => "se_basic",
            Mode::SeEmbed => "se_embed",
            Mode::GenOnly => "gen_only",
            Mode::SeOnly => "se_only",
        }
    }

    pub fn uses_generator(self) -> bool {
        self != Mode::SeOnly
    }

    pub fn uses_embedding(self) -> bool {
        self != Mode::GenOnly
    }

    pub fn uses_projection(self) -> bool {
        matches!(self, Mode::CeFull | Mode::CeInsOnly)
    }

    pub fn uses_comparator(self) -> bool {
        matches!(self, Mode::CeFull | Mode::CeClsOnly | Mode::SeEmbed)
    }

    /// Whether `E` maps straight into descriptor space.
    pub fn semantic_embedding(self) -> bool {
        matches!(self, Mode::SeBasic | Mode::SeOnly)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    RandomBatch,
    /// Anchors with exactly `p` same-class and `k` other-class rows each.
    PkSampler { p: usize, k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: Mode,
    pub batch_size: usize,
    pub epochs: usize,
    pub d_h: usize,
    pub d_z: usize,
    /// Noise width; 0 means "same as the descriptor width".
    pub d_noise: usize,
    /// Hidden width of G, D and F.
    pub hidden: usize,
    pub tau_e: f64,
    pub tau_s: f64,
    pub margin_delta: f64,
    pub n_syn_per_unseen: usize,
    pub d_steps_per_g_step: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub sampler: SamplerKind,
    /// Train G on `-log D(G(a, ε))` instead of `log(1 - D(G(a, ε)))`.
    pub non_saturating: bool,
    /// ReLU on the generator output (features are non-negative).
    pub clamp_generator_output: bool,
    pub classifier_epochs: usize,
    pub classifier_lr: f64,
    pub classifier_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::CeFull,
            batch_size: 64,
            epochs: 50,
            d_h: 64,
            d_z: 32,
            d_noise: 0,
            hidden: 128,
            tau_e: 0.1,
            tau_s: 0.1,
            margin_delta: 1.0,
            n_syn_per_unseen: 200,
            d_steps_per_g_step: 5,
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            sampler: SamplerKind::RandomBatch,
            non_saturating: false,
            clamp_generator_output: true,
            classifier_epochs: 50,
            classifier_lr: 1e-2,
            classifier_batch: 128,
        }
    }
}

impl TrainConfig {
    /// Network widths and batch size used for the full-size feature sets
    /// (2048-d features): `d_h = 2048`, `d_z = 512`, G/D width 4096.
    pub fn full_scale(batch_size: usize) -> Self {
        TrainConfig {
            batch_size,
            d_h: 2048,
            d_z: 512,
            hidden: 4096,
            lr: 1e-4,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size {} must be >= 2", self.batch_size));
        }
        if self.d_h == 0 || self.d_z == 0 || self.hidden == 0 {
            return bad("d_h, d_z and hidden must be positive".into());
        }
        if let SamplerKind::PkSampler { p, k } = self.sampler {
            if p < 1 || k < 1 {
                return bad(format!("pk sampler needs P >= 1 and K >= 1, got P={p} K={k}"));
            }
        }
        if self.mode.uses_generator() && self.d_steps_per_g_step == 0 {
            return bad("d_steps_per_g_step must be >= 1".into());
        }
        for (name, v) in [("lr", self.lr), ("classifier_lr", self.classifier_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} {v} must be positive"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} {v} must lie in [0, 1)"));
            }
        }
        if self.classifier_batch == 0 {
            return bad("classifier_batch must be positive".into());
        }
        self.loss_params().validate()
    }

    pub fn loss_params(&self) -> LossParams {
        LossParams {
            tau_e: self.tau_e,
            tau_s: self.tau_s,
            margin_delta: self.margin_delta,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..Default::default()
        }
    }

    pub fn noise_dim(&self, d_a: usize) -> usize {
        if self.d_noise == 0 {
            d_a
        } else {
            self.d_noise
        }
    }
}
