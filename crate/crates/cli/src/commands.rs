use std::io::Write;
use std::path::Path;

use gzsl_core::audit::{audit_one, LossFamily};
use gzsl_core::dataset::{load_dataset, make_synthetic_world, save_dataset, DatasetFormat, FeatureDataset, SyntheticWorldSpec};
use gzsl_core::nn::GradCheckOptions;
use gzsl_core::trainer::{
    encode_checkpoint, evaluate, evaluate_czsl, load_checkpoint, run_pipeline, Checkpoint, EvalReport, NetBundle,
    TrainConfig,
};
use serde_json::Value;

use crate::args::{Cli, Command, DataFormat, EvalArgs, GradcheckArgs, SynthArgs, TrainArgs};
use crate::manifest::RunManifest;
use crate::output::{write_atomic, write_json, write_jsonl};
use crate::{ablate, CliError, CliResult};

pub(crate) fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::SynthData(a) => synth_data(&a, out),
        Command::Train(a) => train(&a, out),
        Command::Eval(a) => eval(&a, out),
        Command::Ablate(a) => ablate::ablate(&a, out),
        Command::Gradcheck(a) => gradcheck(&a, out),
    }
}

pub(crate) fn load(path: &Path) -> CliResult<FeatureDataset> {
    Ok(load_dataset(path, DatasetFormat::infer(path))?)
}

/// The evaluation report with the resolved config embedded.
pub fn report_json(report: &EvalReport, cfg: &TrainConfig) -> CliResult<Value> {
    let mut v = serde_json::to_value(report)?;
    v.as_object_mut()
        .expect("reports serialize as objects")
        .insert("config".into(), serde_json::to_value(cfg)?);
    Ok(v)
}

fn synth_data(a: &SynthArgs, out: &mut dyn Write) -> CliResult<()> {
    let seed = a.seed.unwrap_or_else(|| {
        eprintln!("note: --seed not given, using seed 0");
        0
    });
    if a.sigma == 0.0 {
        eprintln!("warning: sigma 0 gives a degenerate world where every instance equals its class mean");
    }
    let spec = SyntheticWorldSpec {
        seen: a.seen,
        unseen: a.unseen,
        d_x: a.dx,
        d_a: a.da,
        n_per_class: a.n,
        noise_sigma: a.sigma,
        seed,
        class_map: None,
    };
    let world = make_synthetic_world(&spec)?;
    match a.format {
        DataFormat::Gzb => {
            let dir = match a.out.parent() {
                Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
                _ => ".".into(),
            };
            std::fs::create_dir_all(&dir)?;
            let tmp = tempfile::NamedTempFile::new_in(&dir)?;
            save_dataset(&world.dataset, tmp.path(), DatasetFormat::Gzb)?;
            tmp.persist(&a.out).map_err(|e| e.error)?;
        }
        DataFormat::Csv => save_dataset(&world.dataset, &a.out, DatasetFormat::CsvBundle)?,
    }
    writeln!(
        out,
        "wrote {} (S={} U={} d_x={} d_a={} seed={seed})",
        a.out.display(),
        a.seen,
        a.unseen,
        a.dx,
        a.da
    )?;
    writeln!(
        out,
        "oracle nearest-mean accuracy: test_seen={:.4} test_unseen={:.4}",
        world.oracle.test_seen, world.oracle.test_unseen
    )?;
    Ok(())
}

fn train(a: &TrainArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = a.flags.resolve()?;
    let m = RunManifest {
        config: a.flags.config.clone(),
        dataset: a.dataset.clone(),
        out: a.out.clone(),
        seeds: vec![cfg.seed],
        modes: vec![cfg.mode],
    }
    .resolve()?;
    let ds = load(&m.dataset)?;
    let run = run_pipeline(&ds, &cfg)?;
    let ck = Checkpoint {
        nets: run.trainer.nets.clone(),
        rng: run.trainer.rng.clone(),
        step: run.trainer.step,
        classifier: Some(run.classifier.clone()),
    };
    write_atomic(&m.out.join("checkpoint.cegz"), &encode_checkpoint(&ck)?)?;
    write_jsonl(&m.out.join("log.jsonl"), &run.log)?;
    write_json(&m.out.join("report.json"), &report_json(&run.report, &cfg)?)?;
    let r = &run.report;
    writeln!(
        out,
        "{} seed {}: U={:.4} S={:.4} H={:.4} czsl={:.4} ({} steps)",
        cfg.mode,
        cfg.seed,
        r.u.unwrap_or(f64::NAN),
        r.s.unwrap_or(f64::NAN),
        r.h.unwrap_or(f64::NAN),
        r.czsl_top1,
        run.trainer.step
    )?;
    Ok(())
}

fn check_compatible(nets: &NetBundle, ds: &FeatureDataset) -> CliResult<()> {
    let mut problems = Vec::new();
    if nets.feature_dim() != ds.feature_dim() {
        problems.push(format!("checkpoint d_x={} but dataset d_x={}", nets.feature_dim(), ds.feature_dim()));
    }
    if nets.attr_dim() != ds.semantic.dim() {
        problems.push(format!("checkpoint d_a={} but dataset d_a={}", nets.attr_dim(), ds.semantic.dim()));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(gzsl_core::Error::Shape(problems.join("; ")).into())
    }
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<()> {
    if !a.checkpoint.exists() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", a.checkpoint.display())));
    }
    if !a.dataset.exists() {
        return Err(CliError::Usage(format!("dataset {} does not exist", a.dataset.display())));
    }
    let ck = load_checkpoint(&a.checkpoint)?;
    let ds = load(&a.dataset)?;
    check_compatible(&ck.nets, &ds)?;
    let clf = ck
        .classifier
        .as_ref()
        .ok_or_else(|| CliError::Usage("checkpoint holds no final classifier".into()))?;
    let report = if a.czsl_only {
        evaluate_czsl(clf, &ck.nets, &ds)?
    } else {
        evaluate(clf, &ck.nets, &ds)?
    };
    let json = report_json(&report, &ck.nets.config)?;
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_json(&dir.join("report.json"), &json)?;
        }
        None => writeln!(out, "{}", serde_json::to_string_pretty(&json)?)?,
    }
    Ok(())
}

fn gradcheck(a: &GradcheckArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(a.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol {} must be positive", a.tol)));
    }
    let opts = GradCheckOptions::default();
    let start = std::time::Instant::now();
    let mut failures = Vec::new();
    for family in LossFamily::ALL {
        let mut worst = (0.0f64, String::new());
        let mut checked = 0;
        for seed in 0..a.instances {
            let flip = a.inject_fault.as_deref().filter(|_| family == LossFamily::ContrastiveTotal);
            let r = audit_one(family, seed, &opts, flip)?;
            checked += r.checked;
            let block = r.worst_block.clone().unwrap_or_default();
            if !r.passes(a.tol) {
                failures.push(format!(
                    "{} instance {seed}: block {block} relative error {:.3e}",
                    family.name(),
                    r.max_rel_error
                ));
            }
            if r.max_rel_error >= worst.0 {
                worst = (r.max_rel_error, block);
            }
        }
        writeln!(
            out,
            "{:<18} max_rel_error={:.3e} worst_block={:<22} checked={checked:<6} {}",
            family.name(),
            worst.0,
            worst.1,
            if worst.0 <= a.tol { "PASS" } else { "FAIL" }
        )?;
    }
    writeln!(out, "{} instances per family in {:.1}s", a.instances, start.elapsed().as_secs_f64())?;
    if failures.is_empty() {
        writeln!(out, "all loss families within {:e}", a.tol)?;
        Ok(())
    } else {
        for f in &failures {
            writeln!(out, "FAIL {f}")?;
        }
        Err(CliError::Verification(format!(
            "{} gradient check(s) above tolerance {:e}",
            failures.len(),
            a.tol
        )))
    }
}
