//! Mode × seed tables, the synthetic-sample sweep and the temperature grid.
//! Every cell trains independently, so cells run on a small worker pool and a
//! failing cell is recorded without stopping the others.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use gzsl_core::dataset::FeatureDataset;
use gzsl_core::trainer::{evaluate, fit_final_classifier, EvalReport, Mode, TrainConfig, Trainer};
use serde::Serialize;

use crate::args::AblateArgs;
use crate::commands::load;
use crate::manifest::RunManifest;
use crate::output::{metric, write_atomic, write_csv, write_json};
use crate::svg::{heatmap, line_plot, Series};
use crate::{CliError, CliResult};

/// Trains once and fits the final classifier for every synthetic count in
/// `n_syn`, each time from the same post-training random state. The entry
/// for `cfg.n_syn_per_unseen` equals what `run_pipeline` reports.
pub fn train_then_sweep(ds: &FeatureDataset, cfg: &TrainConfig, n_syn: &[usize]) -> gzsl_core::Result<Vec<EvalReport>> {
    let mut trainer = Trainer::new(ds, cfg)?;
    let mut log = Vec::new();
    trainer.run_epochs(ds, cfg.epochs, &mut log)?;
    n_syn
        .iter()
        .map(|&n| {
            let c = TrainConfig {
                n_syn_per_unseen: n,
                ..cfg.clone()
            };
            let mut rng = trainer.rng.clone();
            let clf = fit_final_classifier(&trainer.nets, ds, &c, &mut rng)?;
            evaluate(&clf, &trainer.nets, ds)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct CellResult {
    pub mode: Mode,
    pub seed: u64,
    pub tau_e: f64,
    pub tau_s: f64,
    pub n_syn: usize,
    pub kind: CellKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Table,
    Sweep,
    TauGrid,
}

/// One training run and the cells it yields.
struct Job {
    cfg: TrainConfig,
    /// (synthetic count, kind) per classifier fit.
    fits: Vec<(usize, CellKind)>,
}

fn run_job(ds: &FeatureDataset, job: &Job) -> Vec<CellResult> {
    let ns: Vec<usize> = job.fits.iter().map(|f| f.0).collect();
    let outcome = train_then_sweep(ds, &job.cfg, &ns);
    job.fits
        .iter()
        .enumerate()
        .map(|(i, &(n, kind))| {
            let (report, error) = match &outcome {
                Ok(r) => (Some(r[i].clone()), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CellResult {
                mode: job.cfg.mode,
                seed: job.cfg.seed,
                tau_e: job.cfg.tau_e,
                tau_s: job.cfg.tau_s,
                n_syn: n,
                kind,
                report,
                error,
            }
        })
        .collect()
}

fn plan(args: &AblateArgs, base: &TrainConfig) -> Vec<Job> {
    let mut jobs = Vec::new();
    for &seed in &args.seeds {
        for &mode in &args.modes {
            let mut fits = vec![(base.n_syn_per_unseen, CellKind::Table)];
            if args.sweep && mode == args.sweep_mode {
                fits.extend(args.sweep_values.iter().map(|&n| (n, CellKind::Sweep)));
            }
            jobs.push(Job {
                cfg: TrainConfig {
                    mode,
                    seed,
                    ..base.clone()
                },
                fits,
            });
        }
        if args.sweep && !args.modes.contains(&args.sweep_mode) {
            jobs.push(Job {
                cfg: TrainConfig {
                    mode: args.sweep_mode,
                    seed,
                    ..base.clone()
                },
                fits: args.sweep_values.iter().map(|&n| (n, CellKind::Sweep)).collect(),
            });
        }
        if args.tau_grid {
            for &tau_e in &args.tau_values {
                for &tau_s in &args.tau_values {
                    jobs.push(Job {
                        cfg: TrainConfig {
                            mode: args.sweep_mode,
                            seed,
                            tau_e,
                            tau_s,
                            ..base.clone()
                        },
                        fits: vec![(base.n_syn_per_unseen, CellKind::TauGrid)],
                    });
                }
            }
        }
    }
    jobs
}

fn run_jobs(ds: &FeatureDataset, jobs: &[Job], workers: usize) -> Vec<CellResult> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Vec<CellResult>>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let cells = run_job(ds, job);
                for c in &cells {
                    match (&c.report, &c.error) {
                        (_, Some(e)) => eprintln!("[{}/{}] {} seed {}: failed: {e}", i + 1, jobs.len(), c.mode, c.seed),
                        (Some(r), None) if c.kind == CellKind::Table || c.kind == CellKind::TauGrid => eprintln!(
                            "[{}/{}] {} seed {} tau_e={} tau_s={}: H={}",
                            i + 1,
                            jobs.len(),
                            c.mode,
                            c.seed,
                            c.tau_e,
                            c.tau_s,
                            metric(r.h)
                        ),
                        _ => {}
                    }
                }
                results.lock().expect("no worker panicked")[i] = Some(cells);
            });
        }
    });
    results
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .flat_map(|c| c.expect("every job ran"))
        .collect()
}

/// Means over the successful cells: (U, S, H, ok, failed).
fn mean_of<'a>(cells: impl Iterator<Item = &'a CellResult>) -> (Option<f64>, Option<f64>, Option<f64>, usize, usize) {
    let (mut u, mut s, mut h, mut ok, mut failed) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for c in cells {
        match &c.report {
            Some(r) => {
                u += r.u.unwrap_or(f64::NAN);
                s += r.s.unwrap_or(f64::NAN);
                h += r.h.unwrap_or(f64::NAN);
                ok += 1;
            }
            None => failed += 1,
        }
    }
    if ok == 0 {
        return (None, None, None, ok, failed);
    }
    let n = ok as f64;
    (Some(u / n), Some(s / n), Some(h / n), ok, failed)
}

/// Table rows: mode, mean U, S, H over seeds, successful and failed seeds.
pub fn table_rows(modes: &[Mode], cells: &[CellResult]) -> Vec<Vec<String>> {
    modes
        .iter()
        .map(|&m| {
            let (u, s, h, ok, failed) = mean_of(cells.iter().filter(|c| c.kind == CellKind::Table && c.mode == m));
            vec![m.to_string(), metric(u), metric(s), metric(h), ok.to_string(), failed.to_string()]
        })
        .collect()
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Serialize)]
struct AblateReport<'a> {
    dataset: String,
    config: &'a TrainConfig,
    modes: &'a [Mode],
    seeds: &'a [u64],
    cells: &'a [CellResult],
}

pub(crate) fn ablate(args: &AblateArgs, out: &mut dyn Write) -> CliResult<()> {
    let base = args.flags.resolve()?;
    if (args.sweep && args.sweep_values.is_empty()) || (args.tau_grid && args.tau_values.is_empty()) {
        return Err(CliError::Usage("sweep and grid value lists must be non-empty".into()));
    }
    if let Some(bad) = args.tau_values.iter().find(|t| !(**t > 0.0)) {
        return Err(CliError::Usage(format!("temperature {bad} must be positive")));
    }
    let m = RunManifest {
        config: args.flags.config.clone(),
        dataset: args.dataset.clone(),
        out: args.out.clone(),
        seeds: args.seeds.clone(),
        modes: args.modes.clone(),
    }
    .resolve()?;
    let ds = load(&m.dataset)?;
    let jobs = plan(args, &base);
    let cells = run_jobs(&ds, &jobs, args.jobs);

    write_csv(
        &m.out.join("table.csv"),
        &["mode", "U", "S", "H", "seeds_ok", "seeds_failed"],
        &table_rows(&m.modes, &cells),
    )?;
    let cell_rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let r = c.report.as_ref();
            vec![
                format!("{:?}", c.kind).to_lowercase(),
                c.mode.to_string(),
                c.seed.to_string(),
                c.tau_e.to_string(),
                c.tau_s.to_string(),
                c.n_syn.to_string(),
                metric(r.and_then(|r| r.u)),
                metric(r.and_then(|r| r.s)),
                metric(r.and_then(|r| r.h)),
                metric(r.map(|r| r.czsl_top1)),
                csv_text(c.error.as_deref().unwrap_or("")),
            ]
        })
        .collect();
    write_csv(
        &m.out.join("cells.csv"),
        &["kind", "mode", "seed", "tau_e", "tau_s", "n_syn", "U", "S", "H", "czsl_top1", "error"],
        &cell_rows,
    )?;

    if args.sweep {
        let mut rows = Vec::new();
        let (mut us, mut ss, mut hs) = (vec![], vec![], vec![]);
        for &n in &args.sweep_values {
            let (u, s, h, ok, failed) =
                mean_of(cells.iter().filter(|c| c.kind == CellKind::Sweep && c.n_syn == n));
            rows.push(vec![n.to_string(), metric(u), metric(s), metric(h), ok.to_string(), failed.to_string()]);
            us.push(u);
            ss.push(s);
            hs.push(h);
        }
        write_csv(&m.out.join("sweep.csv"), &["n_syn", "U", "S", "H", "seeds_ok", "seeds_failed"], &rows)?;
        let ticks: Vec<String> = args.sweep_values.iter().map(|n| n.to_string()).collect();
        let svg = line_plot(
            &format!("{}: accuracy vs synthetic samples per unseen class", args.sweep_mode),
            "synthetic samples per unseen class",
            &ticks,
            &[
                Series { name: "U", values: us },
                Series { name: "S", values: ss },
                Series { name: "H", values: hs },
            ],
        );
        write_atomic(&m.out.join("plot.svg"), svg.as_bytes())?;
    }

    if args.tau_grid {
        let mut rows = Vec::new();
        let mut grid = Vec::new();
        for &te in &args.tau_values {
            let mut line = Vec::new();
            for &ts in &args.tau_values {
                let (u, s, h, ok, failed) = mean_of(
                    cells
                        .iter()
                        .filter(|c| c.kind == CellKind::TauGrid && c.tau_e == te && c.tau_s == ts),
                );
                rows.push(vec![
                    te.to_string(),
                    ts.to_string(),
                    metric(u),
                    metric(s),
                    metric(h),
                    ok.to_string(),
                    failed.to_string(),
                ]);
                line.push(h);
            }
            grid.push(line);
        }
        write_csv(
            &m.out.join("tau_grid.csv"),
            &["tau_e", "tau_s", "U", "S", "H", "seeds_ok", "seeds_failed"],
            &rows,
        )?;
        let labels: Vec<String> = args.tau_values.iter().map(|t| t.to_string()).collect();
        let svg = heatmap(
            &format!("{}: H over temperatures", args.sweep_mode),
            "tau_e",
            "tau_s",
            &labels,
            &labels,
            &grid,
        );
        write_atomic(&m.out.join("heatmap.svg"), svg.as_bytes())?;
    }

    write_json(
        &m.out.join("report.json"),
        &AblateReport {
            dataset: m.dataset.display().to_string(),
            config: &base,
            modes: &m.modes,
            seeds: &m.seeds,
            cells: &cells,
        },
    )?;
    for r in table_rows(&m.modes, &cells) {
        writeln!(out, "{:<12} U={:<7} S={:<7} H={:<7} ok={} failed={}", r[0], r[1], r[2], r[3], r[4], r[5])?;
    }
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    if failed == cells.len() {
        return Err(CliError::Runtime("every ablation cell failed".into()));
    }
    if failed > 0 {
        eprintln!("{failed} of {} cells failed; see cells.csv", cells.len());
    }
    Ok(())
}
