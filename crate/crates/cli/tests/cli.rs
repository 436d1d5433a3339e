use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_lldpm");

fn lldpm(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("LLDPM_THREADS").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = lldpm(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulate a small independent scenario into `dir`.
fn simulate(dir: &Path, seed: &str) -> (PathBuf, PathBuf) {
    ok(&["simulate", "independent", "--n", "8", "--T", "40", "--blocks", "4", "--seed", seed, "--out", s(dir)]);
    (dir.join("data.csv"), dir.join("truth.json"))
}

const QUICK: [&str; 8] = ["--iterations", "600", "--burnin", "300", "--catalogue-size", "500", "--marginal-samples", "2000"];

fn fit(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec!["fit", "--data", s(data), "--out", s(out), "--seed", "4"];
    args.extend_from_slice(&QUICK);
    args.extend_from_slice(extra);
    ok(&args)
}

/// Data rows of a CSV output, without the `#` provenance lines.
fn body(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[test]
fn simulate_fit_metrics_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, truth) = simulate(&tmp.path().join("d"), "2");
    let out = tmp.path().join("f");
    fit(&data, &out, &["--hyper", "prephase"]);
    for f in ["ppc.csv", "partitions.csv", "etas.csv", "trace.csv", "summary.json", "runtime.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let ppc = body(&out.join("ppc.csv"));
    assert_eq!(ppc[0], "t,ppc,flagged");
    assert_eq!(ppc.len(), 40);
    assert_eq!(body(&out.join("partitions.csv")).len(), 1 + 40 * 8);
    assert_eq!(body(&out.join("trace.csv")).len(), 1 + 300 * 40);
    let head = std::fs::read_to_string(out.join("ppc.csv")).unwrap();
    assert!(head.starts_with("# lldpm "));
    assert!(head.contains("# seed=4\n"));

    let m = tmp.path().join("m");
    let table = ok(&["metrics", "--truth", s(&truth), "--fit", s(&out), "--out", s(&m)]);
    assert!(table.starts_with("measure,mean,sd\n"));
    for name in ["specificity", "accuracy", "recall", "precision", "f1", "ari"] {
        assert!(table.contains(&format!("\n{name},")), "{table}");
    }
    assert_eq!(body(&m.join("ari.csv")).len(), 41);
}

#[test]
fn summary_json_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = simulate(&tmp.path().join("d"), "3");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fit(&data, &a, &[]);
    ok(&["fit", "--config", s(&a.join("summary.json")), "--out", s(&b)]);
    for f in ["ppc.csv", "partitions.csv", "etas.csv", "trace.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = simulate(&tmp.path().join("d"), "5");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fit(&data, &a, &["--threads", "1"]);
    let mut args = vec!["fit", "--data", s(&data), "--out", s(&b), "--seed", "4"];
    args.extend_from_slice(&QUICK);
    let o = Command::new(BIN).args(&args).env("LLDPM_THREADS", "3").output().unwrap();
    assert!(o.status.success());
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
    assert_eq!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = simulate(&tmp.path().join("d"), "6");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(
        &cfg,
        "seed = 11\n[model]\nexpected_clusters = 3.0\n[sampler]\niterations = 500\nburnin = 250\nmarginal_samples = 1000\n[sampler.catalogue]\nsize = 300\n[decision]\nzeta = 0.05\n",
    )
    .unwrap();
    let out = tmp.path().join("f");
    ok(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--burnin", "400", "--theta", "0.7"]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["retained_draws"], 100);
    assert_eq!(v["config"]["decision"]["zeta"], 0.05);
    assert_eq!(v["model"]["theta"], 0.7);
    assert!(v["config"]["model"]["expected_clusters"].is_null());
}

#[test]
fn checkpointed_run_matches_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = simulate(&tmp.path().join("d"), "7");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let cp = tmp.path().join("chain.ckpt");
    fit(&data, &a, &[]);
    fit(&data, &b, &["--block-iterations", "250", "--checkpoint", s(&cp)]);
    assert!(cp.exists());
    assert_eq!(body(&a.join("trace.csv")), body(&b.join("trace.csv")));
    // a finished checkpoint resumes straight to the same output
    fit(&data, &c, &["--block-iterations", "250", "--checkpoint", s(&cp)]);
    assert_eq!(std::fs::read(b.join("trace.csv")).unwrap(), std::fs::read(c.join("trace.csv")).unwrap());
    // a checkpoint from other data is refused
    let (other, _) = simulate(&tmp.path().join("e"), "8");
    let o = lldpm(&["fit", "--data", s(&other), "--out", s(&tmp.path().join("x")), "--seed", "4", "--checkpoint", s(&cp), "--iterations", "600", "--burnin", "300", "--catalogue-size", "500", "--marginal-samples", "2000", "--block-iterations", "250"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn long_layout_gives_the_same_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, _) = simulate(&tmp.path().join("d"), "9");
    let rows: Vec<Vec<String>> = body(&data)[1..].iter().map(|l| l.split(',').map(str::to_owned).collect()).collect();
    let mut long = String::from("unit,time,value\n");
    for t in (0..rows[0].len()).rev() {
        for (i, r) in rows.iter().enumerate() {
            long.push_str(&format!("{},{},{}\n", i + 1, t + 1, r[t]));
        }
    }
    let lp = tmp.path().join("long.csv");
    std::fs::write(&lp, long).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    fit(&data, &a, &[]);
    fit(&lp, &b, &["--long"]);
    assert_eq!(body(&a.join("ppc.csv")), body(&b.join("ppc.csv")));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // missing output path
    assert_eq!(lldpm(&["simulate", "ar1", "--lambda", "0.9"]).status.code(), Some(2));
    // malformed data
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "1,2,3\n4,oops,6\n").unwrap();
    let o = lldpm(&["fit", "--data", s(&bad), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2, column 2"));
    // unreadable file
    let o = lldpm(&["fit", "--data", s(&tmp.path().join("none.csv")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    // invalid settings
    let (data, _) = simulate(&tmp.path().join("d"), "1");
    let o = lldpm(&["fit", "--data", s(&data), "--out", s(&tmp.path().join("o")), "--iterations", "10", "--burnin", "10"]);
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(BIN).args(["eri", "--theta", "1", "--eta", "1", "--draws", "0"]).env("LLDPM_THREADS", "many").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    // empty truth file
    let empty = tmp.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    let o = lldpm(&["metrics", "--truth", s(&empty), "--fit", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_perfect_detection_and_horizon_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, truth) = simulate(&tmp.path().join("d"), "12");
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&truth).unwrap()).unwrap();
    let cps: Vec<u64> = v["scenario"]["true_changepoints"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    let parts = v["scenario"]["true_partitions"].as_array().unwrap();
    let f = tmp.path().join("f");
    std::fs::create_dir_all(&f).unwrap();
    let mut ppc = String::from("t,ppc,flagged\n");
    for t in 2..=40u64 {
        let hit = cps.contains(&t);
        ppc.push_str(&format!("{t},{},{}\n", if hit { 1.0 } else { 0.0 }, u8::from(hit)));
    }
    std::fs::write(f.join("ppc.csv"), ppc).unwrap();
    let mut pcsv = String::from("t,unit,cluster\n");
    for (t, p) in parts.iter().enumerate() {
        for (i, l) in p.as_array().unwrap().iter().enumerate() {
            pcsv.push_str(&format!("{},{},{}\n", t + 1, i + 1, l.as_u64().unwrap() + 1));
        }
    }
    std::fs::write(f.join("partitions.csv"), pcsv).unwrap();
    let table = ok(&["metrics", "--truth", s(&truth), "--fit", s(&f)]);
    for line in table.lines().skip(1) {
        assert!(line.ends_with(",1.0000,0.0000"), "{line}");
    }
    // a fit over a different horizon is rejected
    let (_, other) = {
        let d = tmp.path().join("e");
        ok(&["simulate", "independent", "--n", "8", "--T", "45", "--blocks", "4", "--seed", "1", "--out", s(&d)]);
        (d.join("data.csv"), d.join("truth.json"))
    };
    assert_eq!(lldpm(&["metrics", "--truth", s(&other), "--fit", s(&f)]).status.code(), Some(2));
}

#[test]
fn replicate_batches_use_consecutive_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    ok(&["simulate", "ar1", "--lambda", "0.9", "--seed", "20", "--replicates", "3", "--out", s(&out)]);
    let single = tmp.path().join("s");
    ok(&["simulate", "ar1", "--lambda", "0.9", "--seed", "22", "--out", s(&single)]);
    assert_eq!(
        std::fs::read(out.join("rep003").join("data.csv")).unwrap(),
        std::fs::read(single.join("data.csv")).unwrap()
    );
    let rows = body(&single.join("data.csv"));
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[0].split(',').count(), 30);
}

#[test]
fn eri_table_and_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let t = ok(&["eri", "--theta", "1", "--eta", "1", "--lag", "1", "--draws", "0"]);
    assert_eq!(t, "lag,closed_form,monte_carlo,std_error\n1,0.5,,\n");
    let m = tmp.path().join("m.csv");
    ok(&["eri", "--theta", "1", "--eta", "0", "--draws", "200", "--T", "6", "--matrix", s(&m)]);
    let rows = body(&m);
    assert_eq!(rows.len(), 7);
    for r in &rows[1..] {
        assert!(r.split(',').all(|v| v == "1"), "{r}");
    }
    let t = ok(&["eri", "--theta", "1", "--eta", "0.05", "--draws", "4000", "--lag", "2"]);
    let cells: Vec<f64> = t.lines().nth(1).unwrap().split(',').skip(1).map(|c| c.parse().unwrap()).collect();
    assert!((cells[0] - cells[1]).abs() < 4.0 * cells[2] + 1e-3, "{t}");
}

#[test]
fn twoview_duplicated_and_stratified() {
    let tmp = tempfile::tempdir().unwrap();
    let mut dup = String::from("view1,view2\n");
    let mut strat = String::from("hospital,view1,view2\n");
    for i in 0..16 {
        let y = if i % 2 == 0 { -2.0 } else { 2.0 } + 0.03 * i as f64;
        dup.push_str(&format!("{y},{y}\n"));
        let z = if i < 8 { -2.0 } else { 2.0 } + 0.02 * i as f64;
        strat.push_str(&format!("{},{y},{z}\n", if i < 10 { "A" } else { "B" }));
    }
    let (d, st) = (tmp.path().join("dup.csv"), tmp.path().join("strat.csv"));
    std::fs::write(&d, dup).unwrap();
    std::fs::write(&st, strat).unwrap();
    let quick = ["--iterations", "1500", "--burnin", "500", "--catalogue-size", "500", "--marginal-samples", "2000"];
    let mut args = vec!["twoview", "--data", s(&d)];
    args.extend_from_slice(&quick);
    let t = ok(&args);
    let row: Vec<&str> = t.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "all");
    let eta_hat: f64 = row[3].parse().unwrap();
    assert!(eta_hat < 0.05, "{t}");

    let out = tmp.path().join("tv");
    let mut args = vec!["twoview", "--data", s(&st), "--stratified", "--out", s(&out)];
    args.extend_from_slice(&quick);
    let t = ok(&args);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("A,10,") && lines[2].starts_with("B,6,"), "{t}");
    assert_eq!(body(&out.join("partitions.csv")).len(), 1 + 2 * 16);

    let ragged = tmp.path().join("ragged.csv");
    std::fs::write(&ragged, "1,2\n3\n").unwrap();
    assert_eq!(lldpm(&["twoview", "--data", s(&ragged)]).status.code(), Some(2));
}

#[test]
fn preprocess_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw.csv");
    let mut text = String::new();
    for u in 0..3 {
        let row: Vec<String> = (0..1745).map(|k| format!("{}", ((k * (u + 1)) % 17) as f64 * 0.5)).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&raw, text).unwrap();
    let out = tmp.path().join("pre.csv");
    assert_eq!(ok(&["preprocess", "--input", s(&raw), "--out", s(&out)]), "3 units x 349 times\n");
    let rows = body(&out);
    assert_eq!(rows[1].split(',').count(), 349);
    let neg = tmp.path().join("neg.csv");
    std::fs::write(&neg, "1,2,-5,-5,-5,-5,1,2,3,4,5,6\n").unwrap();
    assert_eq!(lldpm(&["preprocess", "--input", s(&neg), "--out", s(&out)]).status.code(), Some(2));
}
