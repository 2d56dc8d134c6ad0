use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gzsl_core::trainer::{Mode, SamplerKind, TrainConfig};

use crate::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "gzsl", version, about = "Generalized zero-shot learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fabricate a synthetic world with linearly mapped class means.
    SynthData(SynthArgs),
    /// Train, fit the final classifier and evaluate.
    Train(TrainArgs),
    /// Re-evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run modes at matched seeds and emit tables, sweeps and plots.
    Ablate(AblateArgs),
    /// Compare analytic and finite-difference gradients of every loss family.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Gzb,
    Csv,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long = "S", default_value_t = 7)]
    pub seen: usize,
    #[arg(long = "U", default_value_t = 3)]
    pub unseen: usize,
    #[arg(long, default_value_t = 32)]
    pub dx: usize,
    #[arg(long, default_value_t = 8)]
    pub da: usize,
    /// Instances per class, split 80/20 for seen classes.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = DataFormat::Gzb)]
    pub format: DataFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SamplerFlag {
    Random,
    Pk,
}

/// Training overrides. Every flag left unset falls back to the config file,
/// then to the built-in defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct ConfigFlags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "tau-e")]
    pub tau_e: Option<f64>,
    #[arg(long = "tau-s")]
    pub tau_s: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long = "n-syn")]
    pub n_syn: Option<usize>,
    #[arg(long)]
    pub dh: Option<usize>,
    #[arg(long)]
    pub dz: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "d-steps")]
    pub d_steps: Option<usize>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerFlag>,
    /// Positives per anchor for the pk sampler.
    #[arg(long = "P")]
    pub p: Option<usize>,
    /// Negatives per anchor for the pk sampler.
    #[arg(long = "K")]
    pub k: Option<usize>,
}

impl ConfigFlags {
    /// Flags over config file over defaults.
    pub fn resolve(&self) -> CliResult<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let bytes = std::fs::read(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_slice::<TrainConfig>(&bytes)
                    .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?
            }
            None => TrainConfig::default(),
        };
        self.apply(&mut cfg)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut TrainConfig) -> CliResult<()> {
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { cfg.$field = v; })*
            };
        }
        set!(mode => mode, seed => seed, epochs => epochs, batch => batch_size,
             tau_e => tau_e, tau_s => tau_s, delta => margin_delta, n_syn => n_syn_per_unseen,
             dh => d_h, dz => d_z, hidden => hidden, lr => lr, d_steps => d_steps_per_g_step);
        let (p0, k0) = match cfg.sampler {
            SamplerKind::PkSampler { p, k } => (p, k),
            SamplerKind::RandomBatch => (1, 8),
        };
        let pk = SamplerKind::PkSampler {
            p: self.p.unwrap_or(p0),
            k: self.k.unwrap_or(k0),
        };
        match self.sampler {
            Some(SamplerFlag::Random) => {
                if self.p.is_some() || self.k.is_some() {
                    return Err(CliError::Usage("--P/--K need --sampler pk".into()));
                }
                cfg.sampler = SamplerKind::RandomBatch;
            }
            Some(SamplerFlag::Pk) => cfg.sampler = pk,
            None if self.p.is_some() || self.k.is_some() => {
                if cfg.sampler == SamplerKind::RandomBatch {
                    return Err(CliError::Usage("--P/--K need --sampler pk".into()));
                }
                cfg.sampler = pk;
            }
            None => {}
        }
        Ok(())
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Writes report.json here instead of printing it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Conventional zero-shot top-1 only; the report omits S and H.
    #[arg(long = "czsl-only")]
    pub czsl_only: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "gen_only,se_only,se_basic,se_embed,ce_full")]
    pub modes: Vec<Mode>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Sweeps synthetic samples per unseen class for `--sweep-mode`.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long = "sweep-values", value_delimiter = ',', default_value = "0,10,50,200,500")]
    pub sweep_values: Vec<usize>,
    #[arg(long = "sweep-mode", default_value = "ce_full")]
    pub sweep_mode: Mode,
    /// Cross-validates both temperatures over `--tau-values` for `--sweep-mode`.
    #[arg(long = "tau-grid")]
    pub tau_grid: bool,
    #[arg(long = "tau-values", value_delimiter = ',', default_value = "0.01,0.1,1,10")]
    pub tau_values: Vec<f64>,
    /// Worker threads for independent cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub flags: ConfigFlags,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 10)]
    pub instances: u64,
    /// Negates the analytic gradient of one parameter block in the
    /// contrastive total before comparing.
    #[arg(long = "inject-fault", hide = true, num_args = 0..=1, default_missing_value = "E.affine0.weight")]
    pub inject_fault: Option<String>,
}
