//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! The desk-scale criteria train real models through the `gzsl` binary and
//! take several minutes on one core.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use gzsl_core::embedding::{class_contrastive_from_scores, hinge_from_scores, instance_contrastive_loss};
use gzsl_core::generation::{adversarial_value, sample_noise, DiscriminatorNet};
use gzsl_core::nn::Mat;
use gzsl_core::oracle;
use gzsl_core::trainer::{harmonic_mean, Mode};
use serde_json::Value;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const SWEEP: [usize; 5] = [0, 10, 50, 200, 500];
/// Training flags shared by every desk-scale run.
const DESK: [&str; 6] = ["--epochs", "200", "--tau-e", "1", "--tau-s", "1"];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn gzsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gzsl")).args(args).output().expect("binary runs")
}

fn ok(o: &Output) -> Result<(), String> {
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn gradient_audit() -> Verdict {
    let t = Instant::now();
    let o = gzsl(&["gradcheck"]);
    let secs = t.elapsed().as_secs_f64();
    let text = String::from_utf8_lossy(&o.stdout);
    let families = text.lines().filter(|l| l.ends_with("PASS")).count();
    verdict(
        o.status.success() && secs < 30.0,
        format!("exit {:?}, {families} families passed, {secs:.1}s", o.status.code()),
    )
}

fn closed_forms() -> Verdict {
    let mut worst = 0.0f64;
    let mut rng = gzsl_core::rng_from_seed(11);

    for k in [1usize, 5, 50] {
        let z: Mat = sample_noise(1, 6, &mut rng);
        let negs = Mat::from_rows(&vec![z.row(0).to_vec(); k]).unwrap();
        let l = instance_contrastive_loss(z.row(0), z.row(0), &negs, 0.1).unwrap();
        worst = worst.max((l as f64 - ((k + 1) as f64).ln()).abs());
    }
    for n in [2usize, 7, 40] {
        let scores = Mat::filled(3, n, 0.37f32);
        let (l, _) = class_contrastive_from_scores(&scores, &[0, n / 2, n - 1], 0.1).unwrap();
        worst = worst.max((l as f64 - (n as f64).ln()).abs());
    }

    let mut d = DiscriminatorNet::new(5, 3, 8, &mut rng).unwrap();
    let n = d.net.params().len();
    for p in &mut d.net.params_mut()[n - 2..] {
        p.value = Mat::zeros(p.value.rows(), p.value.cols());
    }
    let x: Mat = sample_noise(6, 5, &mut rng);
    let a: Mat = sample_noise(6, 3, &mut rng);
    let fake: Mat = sample_noise(6, 5, &mut rng);
    let v = adversarial_value(&d, &x, &a, &fake, &a).unwrap();
    worst = worst.max((v as f64 + 2.0 * 2f64.ln()).abs());

    // margins of -1 and exactly 0
    let (hinge, _, _) = hinge_from_scores(&[2.0f32, 3.0, 1.5], &[0.0, 1.0, 0.5], 1.0);
    verdict(
        worst <= 1e-6 && hinge == 0.0,
        format!("max deviation {worst:.2e}, satisfied-margin hinge {hinge}"),
    )
}

fn harmonic_protocol() -> Verdict {
    let h = harmonic_mean(0.786, 0.631);
    let same = [0.0, 0.25, 0.7, 1.0].iter().all(|&x| (harmonic_mean(x, x) - x).abs() <= 1e-12);
    let zero = [0.0, 0.3, 1.0].iter().all(|&x| harmonic_mean(x, 0.0) == 0.0);
    verdict(
        (h - 0.700).abs() <= 5e-4 && same && zero,
        format!("H(S=0.786, U=0.631) = {h:.5}, H(x,x)=x {same}, H(s,0)=0 {zero}"),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for mode in Mode::ALL {
        let e = oracle::objective_discrepancy(mode, 100).unwrap();
        parts.push(format!("{mode} {e:.1e}"));
        worst = worst.max(e);
    }
    verdict(worst <= 1e-5, format!("100 trials per mode, worst {worst:.2e} ({})", parts.join(", ")))
}

/// Per-seed results of the desk ablation.
struct DeskRun {
    seed: u64,
    elapsed: Duration,
    /// Mean H per table mode.
    table: BTreeMap<String, f64>,
    /// ce_full (U, H) by n_syn.
    sweep: BTreeMap<usize, (f64, f64)>,
}

fn desk_runs(dir: &Path) -> Result<Vec<DeskRun>, String> {
    let mut runs = Vec::new();
    for seed in SEEDS {
        let world = dir.join(format!("world{seed}.gzb"));
        ok(&gzsl(&["synth-data", "--seed", &seed.to_string(), "-o", s(&world)]))?;
        let out = dir.join(format!("ablate{seed}"));
        let seed_s = seed.to_string();
        let mut args = vec![
            "ablate", "--dataset", s(&world), "--out", s(&out), "--modes", "se_basic,se_embed,ce_full",
            "--seeds", &seed_s, "--sweep",
        ];
        args.extend(DESK);
        let t = Instant::now();
        ok(&gzsl(&args))?;
        let elapsed = t.elapsed();
        let report: Value = serde_json::from_slice(&fs::read(out.join("report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let mut run = DeskRun {
            seed,
            elapsed,
            table: BTreeMap::new(),
            sweep: BTreeMap::new(),
        };
        for cell in report["cells"].as_array().into_iter().flatten() {
            let r = &cell["report"];
            let (Some(u), Some(h)) = (r["U"].as_f64(), r["H"].as_f64()) else {
                return Err(format!("seed {seed}: failed cell {cell}"));
            };
            match cell["kind"].as_str() {
                Some("table") => {
                    run.table.insert(cell["mode"].as_str().unwrap_or("?").to_string(), h);
                }
                Some("sweep") => {
                    run.sweep.insert(cell["n_syn"].as_u64().unwrap_or(0) as usize, (u, h));
                }
                _ => {}
            }
        }
        eprintln!(
            "  seed {seed}: {:.0}s, table H {:?}, sweep U {:?}",
            elapsed.as_secs_f64(),
            run.table,
            run.sweep.iter().map(|(n, (u, _))| (*n, (u * 1000.0).round() / 1000.0)).collect::<Vec<_>>()
        );
        runs.push(run);
    }
    Ok(runs)
}

fn hybrid_effect(runs: &[DeskRun]) -> Verdict {
    let baseline_ok = runs.iter().all(|r| r.sweep.get(&0).is_some_and(|&(u, _)| u <= 0.05));
    let good = runs
        .iter()
        .filter(|r| r.sweep.get(&200).is_some_and(|&(u, h)| u >= 0.5 && h >= 0.5))
        .count();
    let slowest = runs.iter().map(|r| r.elapsed.as_secs_f64()).fold(0.0, f64::max);
    let u0: Vec<String> = runs.iter().map(|r| format!("{:.3}", r.sweep.get(&0).map_or(f64::NAN, |x| x.0))).collect();
    verdict(
        baseline_ok && good >= 4 && slowest < 300.0,
        format!(
            "n_syn=0 U [{}], n_syn=200 U,H >= 0.5 in {good}/5 seeds, slowest seed {slowest:.0}s",
            u0.join(" ")
        ),
    )
}

fn ordering(runs: &[DeskRun]) -> Verdict {
    let mean = |mode: &str| runs.iter().map(|r| r.table.get(mode).copied().unwrap_or(f64::NAN)).sum::<f64>() / runs.len() as f64;
    let (ce, emb, basic) = (mean("ce_full"), mean("se_embed"), mean("se_basic"));
    verdict(
        ce >= emb && emb >= basic && ce - basic >= 0.03,
        format!("mean H ce_full {ce:.4}, se_embed {emb:.4}, se_basic {basic:.4}, gap {:.4}", ce - basic),
    )
}

/// Largest drop between consecutive points after the maximum.
fn drop_after_peak(curve: &[f64]) -> f64 {
    let peak = curve
        .iter()
        .enumerate()
        .fold(0, |best, (i, &u)| if u > curve[best] { i } else { best });
    curve[peak..].windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max)
}

fn sweep_shape(runs: &[DeskRun]) -> Verdict {
    let mean: Vec<f64> = SWEEP
        .iter()
        .map(|n| runs.iter().map(|r| r.sweep.get(n).map_or(f64::NAN, |x| x.0)).sum::<f64>() / runs.len() as f64)
        .collect();
    let worst = drop_after_peak(&mean);
    let per_seed = runs
        .iter()
        .filter(|r| {
            let c: Vec<f64> = SWEEP.iter().map(|n| r.sweep.get(n).map_or(f64::NAN, |x| x.0)).collect();
            drop_after_peak(&c) <= 0.05
        })
        .count();
    let shown: Vec<String> = mean.iter().map(|u| format!("{u:.3}")).collect();
    verdict(
        mean.iter().all(|u| u.is_finite()) && worst <= 0.05,
        format!(
            "mean U over n_syn {SWEEP:?} = [{}], largest drop after peak {worst:.3} ({per_seed}/5 single-seed curves also within 0.05)",
            shown.join(" ")
        ),
    )
}

fn determinism(dir: &Path) -> Result<Verdict, String> {
    let world = dir.join("det.gzb");
    ok(&gzsl(&["synth-data", "--S", "4", "--U", "2", "--dx", "12", "--da", "4", "--n", "30", "--seed", "3", "-o", s(&world)]))?;
    let flags = ["--epochs", "5", "--seed", "9", "--dh", "8", "--dz", "4", "--hidden", "16"];
    let mut reports = Vec::new();
    for k in 0..2 {
        let out = dir.join(format!("det{k}"));
        let mut args = vec!["train", "--dataset", s(&world), "--out", s(&out)];
        args.extend(flags);
        ok(&gzsl(&args))?;
        reports.push(fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    let eval_out = dir.join("det_eval");
    ok(&gzsl(&[
        "eval", "--checkpoint", s(&dir.join("det0/checkpoint.cegz")), "--dataset", s(&world), "--out", s(&eval_out),
    ]))?;
    let evaluated = fs::read(eval_out.join("report.json")).map_err(|e| e.to_string())?;
    let same = reports[0] == reports[1];
    let roundtrip = evaluated == reports[0];
    Ok(verdict(
        same && roundtrip,
        format!("repeat training byte-identical {same}, checkpoint eval byte-identical {roundtrip}"),
    ))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(&str, Verdict)> = vec![
        ("gradient audit", gradient_audit()),
        ("closed-form loss identities", closed_forms()),
        ("harmonic-mean protocol", harmonic_protocol()),
        ("oracle equivalence", oracle_equivalence()),
    ];
    eprintln!("desk-scale ablation over seeds {SEEDS:?} with {DESK:?}");
    match desk_runs(dir.path()) {
        Ok(runs) => {
            for r in &runs {
                debug_assert_eq!(r.sweep.len(), SWEEP.len(), "seed {}", r.seed);
            }
            results.push(("desk-scale hybrid effect", hybrid_effect(&runs)));
            results.push(("desk-scale embedding ordering", ordering(&runs)));
            results.push(("sweep monotone then plateau", sweep_shape(&runs)));
        }
        Err(e) => {
            for name in ["desk-scale hybrid effect", "desk-scale embedding ordering", "sweep monotone then plateau"] {
                results.push((name, verdict(false, e.clone())));
            }
        }
    }
    results.push((
        "determinism and persistence",
        determinism(dir.path()).unwrap_or_else(|e| verdict(false, e)),
    ));

    let mut failed = 0;
    for (name, v) in &results {
        println!("{} criterion {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
