use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn gzsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gzsl")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// A small world: 4 seen, 2 unseen, 12-d features, 4-d descriptors.
fn small_world(dir: &Path, seed: u64) -> PathBuf {
    let path = dir.join(format!("world{seed}.gzb"));
    let o = gzsl(&[
        "synth-data", "--S", "4", "--U", "2", "--dx", "12", "--da", "4", "--n", "20", "--seed", &seed.to_string(), "-o",
        s(&path),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    path
}

const FAST: [&str; 10] = ["--epochs", "2", "--batch", "16", "--dh", "8", "--dz", "4", "--hidden", "16"];

fn train(dataset: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--dataset", s(dataset), "--out", s(out)];
    args.extend(FAST);
    args.extend(extra);
    gzsl(&args)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn synth_data_reports_oracle_and_defaults_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.gzb");
    let o = gzsl(&["synth-data", "--S", "7", "--U", "3", "--dx", "32", "--da", "8", "--n", "100", "-o", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("seed 0"), "{}", stderr(&o));
    assert!(stdout(&o).contains("oracle nearest-mean accuracy"));
    let bytes = fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"GZB1");

    let again = dir.path().join("w2.gzb");
    gzsl(&["synth-data", "--seed", "0", "-o", s(&again)]);
    assert_eq!(fs::read(&again).unwrap(), bytes);
}

#[test]
fn synth_data_zero_sigma_warns_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = gzsl(&["synth-data", "--sigma", "0", "--seed", "1", "-o", s(&dir.path().join("d.gzb"))]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));
    assert!(dir.path().join("d.gzb").exists());

    let o = gzsl(&["synth-data", "--S", "0", "--seed", "1", "-o", s(&dir.path().join("e.gzb"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = gzsl(&["synth-data", "--dx", "abc", "-o", "x"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&gzsl(&["no-such-command"])), 2);
}

#[test]
fn csv_bundle_output_trains() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    let o = gzsl(&["synth-data", "--S", "3", "--U", "2", "--dx", "6", "--da", "3", "--n", "10", "--seed", "2", "--format", "csv", "-o", s(&bundle)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(bundle.join("meta.json").exists());
    let o = train(&bundle, &dir.path().join("run"), &["--mode", "se_basic"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn train_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 3);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = train(&ds, out, &["--tau-e", "0.1", "--tau-s", "0.1", "--seed", "5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let report = read_json(&a.join("report.json"));
    assert!(report["H"].is_number());
    assert_eq!(report["mode"], "ce_full");
    assert_eq!(report["config"]["tau_e"], 0.1);
    assert_eq!(report["config"]["tau_s"], 0.1);
    assert_eq!(report["config"]["seed"], 5);
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("checkpoint.cegz")).unwrap(), fs::read(b.join("checkpoint.cegz")).unwrap());

    let log = fs::read_to_string(a.join("log.jsonl")).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert!(first["L_ins"].is_number());
    assert!(first["L_se_real"].is_null());
    // no stray temporaries from atomic writes
    let names: Vec<String> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(names.len(), 3, "{names:?}");
}

#[test]
fn flags_override_config_file_over_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 4);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"mode": "se_embed", "tau_e": 0.5, "margin_delta": 2.0, "n_syn_per_unseen": 7}"#).unwrap();
    let out = dir.path().join("run");
    let o = train(&ds, &out, &["--config", s(&cfg), "--delta", "0.25"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = &read_json(&out.join("report.json"))["config"];
    assert_eq!(c["mode"], "se_embed");
    assert_eq!(c["tau_e"], 0.5);
    assert_eq!(c["margin_delta"], 0.25);
    assert_eq!(c["n_syn_per_unseen"], 7);
    assert_eq!(c["epochs"], 2);
    assert_eq!(c["beta1"], 0.5);
}

#[test]
fn invalid_config_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 5);
    let o = train(&ds, &dir.path().join("r"), &["--tau-e", "0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = train(&ds, &dir.path().join("r"), &["--K", "3"]);
    assert_eq!(code(&o), 2);
    let o = train(&dir.path().join("missing.gzb"), &dir.path().join("r"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("does not exist"));
}

#[test]
fn pk_sampler_flags_reach_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 6);
    let out = dir.path().join("r");
    let o = train(&ds, &out, &["--sampler", "pk", "--P", "1", "--K", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let c = &read_json(&out.join("report.json"))["config"];
    assert_eq!(c["sampler"]["kind"], "pk_sampler");
    assert_eq!(c["sampler"]["k"], 3);
}

#[test]
fn eval_reproduces_train_report() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 7);
    let run = dir.path().join("run");
    assert_eq!(code(&train(&ds, &run, &[])), 0);
    let ev = dir.path().join("ev");
    let o = gzsl(&["eval", "--checkpoint", s(&run.join("checkpoint.cegz")), "--dataset", s(&ds), "--out", s(&ev)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(run.join("report.json")).unwrap(), fs::read(ev.join("report.json")).unwrap());

    let o = gzsl(&["eval", "--checkpoint", s(&run.join("checkpoint.cegz")), "--dataset", s(&ds), "--czsl-only"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.get("S").is_none() && v.get("H").is_none());
    assert!(v["czsl_top1"].is_number());
}

#[test]
fn eval_rejects_mismatched_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 8);
    let run = dir.path().join("run");
    assert_eq!(code(&train(&ds, &run, &[])), 0);
    let other = dir.path().join("other.gzb");
    gzsl(&["synth-data", "--S", "4", "--U", "2", "--dx", "10", "--da", "4", "--n", "20", "--seed", "1", "-o", s(&other)]);
    let o = gzsl(&["eval", "--checkpoint", s(&run.join("checkpoint.cegz")), "--dataset", s(&other)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("shape mismatch") && stderr(&o).contains("d_x"), "{}", stderr(&o));

    // corrupted checkpoint
    let ck = run.join("checkpoint.cegz");
    let mut bytes = fs::read(&ck).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&ck, bytes).unwrap();
    let o = gzsl(&["eval", "--checkpoint", s(&ck), "--dataset", s(&ds)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("hash"));
}

fn ablate(ds: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["ablate", "--dataset", s(ds), "--out", s(out)];
    args.extend(FAST);
    args.extend(extra);
    gzsl(&args)
}

#[test]
fn ablate_component_table_has_one_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 9);
    let out = dir.path().join("abl");
    let o = ablate(&ds, &out, &["--modes", "ce_ins_only,ce_cls_only,ce_full", "--seeds", "0,1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "mode,U,S,H,seeds_ok,seeds_failed");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("ce_ins_only,") && lines[3].starts_with("ce_full,"));
    assert!(lines[3].ends_with(",2,0"));
    assert!(!out.join("plot.svg").exists());
    assert_eq!(read_json(&out.join("report.json"))["cells"].as_array().unwrap().len(), 6);
}

#[test]
fn ablate_default_rows_and_sweep_plot() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 10);
    let out = dir.path().join("abl");
    let o = ablate(&ds, &out, &["--seeds", "0", "--sweep", "--sweep-values", "0,10,50"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let modes: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["gen_only", "se_only", "se_basic", "se_embed", "ce_full"]);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next().unwrap(), "n_syn,U,S,H,seeds_ok,seeds_failed");
    assert_eq!(sweep.lines().count(), 4);
    let svg = fs::read_to_string(out.join("plot.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn ablate_tau_grid_has_sixteen_cells() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 11);
    let out = dir.path().join("abl");
    let o = ablate(&ds, &out, &["--modes", "ce_full", "--seeds", "0", "--tau-grid", "--jobs", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let grid = fs::read_to_string(out.join("tau_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 17);
    assert!(grid.lines().any(|l| l.starts_with("0.01,10,")));
    let svg = fs::read_to_string(out.join("heatmap.svg")).unwrap();
    assert_eq!(svg.matches("<rect").count(), 17);
}

#[test]
fn ablate_records_failed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_world(dir.path(), 12);
    let out = dir.path().join("abl");
    // 16 training rows per class cannot supply 40 positives per anchor
    let o = ablate(&ds, &out, &["--modes", "se_basic,ce_full", "--seeds", "0", "--sampler", "pk", "--P", "40", "--K", "2"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let cells = fs::read_to_string(out.join("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 3);
    assert!(cells.lines().skip(1).all(|l| l.contains("sampler failed")), "{cells}");
    assert!(fs::read_to_string(out.join("table.csv")).unwrap().contains("se_basic,,,,0,1"));
}

#[test]
fn gradcheck_passes_and_detects_injected_faults() {
    let o = gzsl(&["gradcheck", "--instances", "2"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 8);

    let o = gzsl(&["gradcheck", "--instances", "1", "--inject-fault"]);
    assert_eq!(code(&o), 1);
    let text = stdout(&o);
    assert!(text.contains("FAIL total_ce instance 0: block E.affine0.weight"), "{text}");

    // central differences at the default step carry errors far above 1e-9
    let o = gzsl(&["gradcheck", "--instances", "1", "--tol", "1e-9"]);
    assert_eq!(code(&o), 1);
}
