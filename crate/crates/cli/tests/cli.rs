use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gqla(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gqla"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gqla(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = "n = 16\nk = 8\nalpha = 2.5\nn_errors = 2\nT = 10\ninit_density = 0.45\nval_ebno = 2\n\
                     max_epochs = 2\npatience = 2\nsteps_per_epoch = 15\nval_max_blocks = 400\n";

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("small.conf");
    std::fs::write(&path, SMALL).unwrap();
    path
}

fn trained_code(dir: &Path) -> PathBuf {
    let cfg = small_config(dir);
    let out = dir.join("run");
    ok(&["train", "--config", p(&cfg), "--seed", "3", "--out", p(&out)]);
    out.join("code.json")
}

#[test]
fn train_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["train", "--config", p(&cfg), "--seed", "7", "--out", p(&a)]);
    ok(&["train", "--config", p(&cfg), "--seed", "7", "--out", p(&b), "--workers", "2"]);
    let code_a = std::fs::read(a.join("code.json")).unwrap();
    assert_eq!(code_a, std::fs::read(b.join("code.json")).unwrap());
    assert_eq!(
        std::fs::read(a.join("training_log.csv")).unwrap(),
        std::fs::read(b.join("training_log.csv")).unwrap()
    );

    let log = std::fs::read_to_string(a.join("training_log.csv")).unwrap();
    assert!(log.starts_with("epoch,"));
    assert_eq!(log.lines().count(), 3);

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config"]["alpha"], 2.5);
    assert!(manifest["finished_unix"].is_f64());

    let code: serde_json::Value = serde_json::from_slice(&code_a).unwrap();
    assert_eq!(code["metadata"]["seed"], 7);
    assert!(code["metadata"]["update_count"].is_u64());
}

#[test]
fn published_column_is_accepted_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(
        &cfg,
        "# (64,32)\nn = 64\nk = 32\nalpha = 2.7\nn_errors = 3\nT = 20\ninit_density = 0.25\nval_ebno = 2\n",
    )
    .unwrap();
    let out = dir.path().join("r");
    ok(&["train", "--config", p(&cfg), "--set", "max_epochs=0", "--out", p(&out)]);
    let code: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("code.json")).unwrap()).unwrap();
    assert_eq!(code["n"], 64);
    assert_eq!(code["metadata"]["threshold_T"], 20);
}

#[test]
fn missing_key_is_a_usage_error_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, SMALL.replace("alpha = 2.5\n", "")).unwrap();
    let out = gqla(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha"), "{err}");
    assert!(!dir.path().join("r").exists());

    let out = gqla(&["train", "--config", p(&cfg), "--set", "alpha=2", "--set", "bogus=1", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn exit_codes() {
    assert_eq!(gqla(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gqla(&["eval", "/nonexistent/code.json", "--ebno", "1"]).status.code(), Some(1));
    assert_eq!(gqla(&["eval", "x.json", "--ebno", "1:0:1"]).status.code(), Some(2));
    assert_eq!(gqla(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_ranges_and_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let code = trained_code(dir.path());

    let csv = ok(&["eval", p(&code), "--ebno", "0:7:1", "--iters", "5", "--rel", "0.1", "--max-blocks", "200"]);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "ebno_db,blocks,errors,p_tilde,half_width,converged");
    assert_eq!(rows.len(), 9);
    assert!(rows[1].starts_with("0,"));
    assert!(rows[8].starts_with("7,"));
    for r in &rows[1..] {
        let p_tilde = r.split(',').nth(3).unwrap();
        assert!(p_tilde.contains('e'), "{r}");
    }

    ok(&["eval", p(&code), "--ebno", "3", "--iters", "200", "--max-blocks", "100"]);

    let csv = ok(&["eval", p(&code), "--ebno", "60", "--max-blocks", "1000"]);
    let fields: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[1], "1000");
    assert_eq!(fields[2], "0");
    assert_eq!(fields[5], "false");
    let z2 = 1.96f64 * 1.96;
    let floor = 0.5 * z2 / (1000.0 + z2);
    assert!((fields[3].parse::<f64>().unwrap() - floor).abs() < 1e-15);
}

#[test]
fn eval_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let code = trained_code(dir.path());
    let args = |w: &'static str| {
        ok(&["--workers", w, "eval", p(&code), "--ebno", "1:3:1", "--rel", "0.2", "--seed", "4"])
    };
    assert_eq!(args("1"), args("3"));
}

#[test]
fn campaign_resume_cdf_stats_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let code = trained_code(dir.path());
    let d = |x: &str| dir.path().join(x);
    let search = |density: &str, count: &str, out: &Path, resume: bool| {
        let mut a = vec![
            "random-search", "--n", "16", "--k", "8", "--density", density, "--count", count, "--ebno", "2:3:1",
            "--rel", "0.3", "--seed", "5", "--out", p(out),
        ];
        if resume {
            a.push("--resume");
        }
        gqla(&a)
    };
    assert!(search("0.3", "3", &d("a.jsonl"), false).status.success());
    assert_eq!(search("0.3", "6", &d("a.jsonl"), false).status.code(), Some(2));
    assert!(search("0.3", "6", &d("a.jsonl"), true).status.success());
    assert!(search("0.3", "6", &d("b.jsonl"), false).status.success());
    assert_eq!(std::fs::read(d("a.jsonl")).unwrap(), std::fs::read(d("b.jsonl")).unwrap());
    assert!(d("a.jsonl.manifest.json").exists());

    assert!(search("0.5", "6", &d("c.jsonl"), false).status.success());
    let table = ok(&[
        "cdf-stats", p(&d("a.jsonl")), p(&d("c.jsonl")), "--ebno", "3", "--ranking", p(&d("rank.csv")),
    ]);
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("density,count,unconverged,min,q25,median,q75,max"));
    let ranking = std::fs::read_to_string(d("rank.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 6);

    // identity-only codes lose to any trained code
    assert!(search("0", "4", &d("zero.jsonl"), false).status.success());
    let csv = ok(&["compare", p(&code), "--random", p(&d("zero.jsonl")), "--ebno", "3", "--rel", "0.3"]);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(row[4].parse::<f64>().unwrap(), 0.0);

    let out = gqla(&["compare", p(&code), "--random", p(&d("a.jsonl")), "--random", p(&d("c.jsonl")), "--ebno", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_identity_only_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("zero.json");
    std::fs::write(&path, r#"{"n": 6, "k": 3, "w": ["000", "000", "000"]}"#).unwrap();
    let out: serde_json::Value = serde_json::from_str(&ok(&["analyze", p(&path)])).unwrap();
    let vn = out["vn_degree"].as_object().unwrap();
    assert!(vn.keys().all(|d| d.parse::<usize>().unwrap() <= 1));
    assert_eq!(out["vn_girth"]["none"], 6);
}

#[test]
fn shipped_configs_validate() {
    let dir = tempfile::tempdir().unwrap();
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            let out = dir.path().join(path.file_stem().unwrap());
            ok(&["train", "--config", p(&path), "--set", "max_epochs=0", "--out", p(&out)]);
            seen += 1;
        }
    }
    assert_eq!(seen, 5);
}
