//! End-to-end CLI behavior: exit codes, artifact schemas, config handling,
//! and byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lymphmix"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate_into(dir: &Path, seed: &str) {
    let out = run_in(
        dir,
        &[
            "--seed",
            seed,
            "--out-dir",
            ".",
            "simulate",
            "--family",
            "joint",
        ],
    );
    assert_code(&out, 0);
}

#[test]
fn unknown_family_exits_2_with_usage_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["simulate", "--family", "bogus"]);
    assert_code(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus"), "stderr: {stderr}");
    assert!(
        stderr.contains("joint"),
        "stderr lists known families: {stderr}"
    );
}

#[test]
fn missing_input_file_exits_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "fit",
            "--family",
            "pla_lmm",
            "--method",
            "ml",
            "--fields",
            "nope_fields.csv",
            "--vessels",
            "nope_vessels.csv",
        ],
    );
    assert_code(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nope_fields.csv"), "stderr: {stderr}");
}

#[test]
fn simulate_writes_study_sized_outputs_and_is_byte_deterministic() {
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    simulate_into(d1.path(), "1");
    simulate_into(d2.path(), "1");

    for name in ["fields.csv", "vessels.csv", "truth.json"] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d1.path().join("truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["n_specimens"], 62);
    assert_eq!(truth["seed"], 1);
    assert_eq!(truth["config"]["command"], "simulate");
    assert!(truth["theta"]["lambda_a"].is_number());

    // a different seed changes the data
    let d3 = tempfile::tempdir().unwrap();
    simulate_into(d3.path(), "2");
    assert_ne!(
        std::fs::read(d1.path().join("vessels.csv")).unwrap(),
        std::fs::read(d3.path().join("vessels.csv")).unwrap()
    );
}

#[test]
fn fit_mcmc_outputs_schema_and_reproducibility_across_threads() {
    let base = tempfile::tempdir().unwrap();
    simulate_into(base.path(), "5");

    let fit_args = |threads: &'static str| {
        vec![
            "--seed",
            "9",
            "--out-dir",
            "out",
            "--threads",
            threads,
            "fit",
            "--family",
            "joint",
            "--method",
            "mcmc",
            "--fields",
            "fields.csv",
            "--vessels",
            "vessels.csv",
            "--burn-in",
            "400",
            "--keep",
            "400",
            "--thin",
            "4",
            "--chains",
            "2",
        ]
    };

    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    for d in [&d1, &d2] {
        for name in ["fields.csv", "vessels.csv"] {
            std::fs::copy(base.path().join(name), d.path().join(name)).unwrap();
        }
    }
    let o1 = run_in(d1.path(), &fit_args("1"));
    assert_code(&o1, 0);
    let o2 = run_in(d2.path(), &fit_args("4"));
    assert_code(&o2, 0);

    for name in [
        "out/draws.csv",
        "out/fit_summary.json",
        "out/diagnostics.txt",
    ] {
        let a = std::fs::read(d1.path().join(name)).unwrap();
        let b = std::fs::read(d2.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across thread counts");
    }

    // summary JSON schema: the joint parameter set
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d1.path().join("out/fit_summary.json")).unwrap(),
    )
    .unwrap();
    let names: Vec<String> = summary["fit"]["parameters"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap().to_string())
        .collect();
    for expected in [
        "lambda_a",
        "lambda_n",
        "rho",
        "nu2",
        "sigma2",
        "beta_a_tz",
        "beta_a_cin",
        "beta_a_carc",
        "beta_n_tz",
        "beta_n_cin",
        "beta_n_carc",
    ] {
        assert!(names.contains(&expected.to_string()), "missing {expected}");
    }
    // draws.csv header is the parameter names
    let draws = std::fs::read_to_string(d1.path().join("out/draws.csv")).unwrap();
    let header = draws.lines().next().unwrap();
    assert!(header.starts_with("alpha_a,"));
    assert!(header.contains("rho"));
    // one row per kept iteration per chain
    assert_eq!(draws.lines().count(), 1 + 2 * 100);
}

#[test]
fn fit_ml_negbin_reports_poisson_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--seed",
            "3",
            "--out-dir",
            ".",
            "simulate",
            "--family",
            "lvd_pois",
        ],
    );
    assert_code(&out, 0);
    let out = run_in(
        dir.path(),
        &[
            "--out-dir",
            "pois",
            "fit",
            "--family",
            "lvd_pois",
            "--method",
            "ml",
            "--fields",
            "fields.csv",
            "--vessels",
            "vessels.csv",
        ],
    );
    assert_code(&out, 0);
    let out = run_in(
        dir.path(),
        &[
            "--out-dir",
            "nb",
            "fit",
            "--family",
            "lvd_negbin",
            "--method",
            "ml",
            "--fields",
            "fields.csv",
            "--vessels",
            "vessels.csv",
        ],
    );
    assert_code(&out, 0);

    let nb: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("nb/fit_summary.json")).unwrap(),
    )
    .unwrap();
    let cmp = &nb["poisson_comparison"];
    assert!(cmp["delta_loglik"].is_number());
    assert!(cmp["dispersion"].is_number());
    let pois: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("pois/fit_summary.json")).unwrap(),
    )
    .unwrap();
    // the comparison embeds the same Poisson fit the standalone run found
    let a = cmp["poisson_loglik"].as_f64().unwrap();
    let b = pois["fit"]["max_loglik"].as_f64().unwrap();
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn summarize_prints_group_table() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "8");
    let out = run_in(
        dir.path(),
        &[
            "summarize",
            "--fields",
            "fields.csv",
            "--vessels",
            "vessels.csv",
        ],
    );
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("carcinoma"));
    assert!(stdout.contains("LVD"));
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn power_one_row_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "power",
            "--means",
            "2.6,5.0,10.0",
            "--sd",
            "7.5",
            "--n",
            "25",
            "--alpha",
            "0.05",
            "--target",
            "0.9",
        ],
    );
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("diff_param"));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("power.json")).unwrap())
            .unwrap();
    let p = doc["power"].as_f64().unwrap();
    assert!((0.88..=0.92).contains(&p), "power {p}");
    let n = doc["required_n"].as_u64().unwrap();
    assert!((24..=26).contains(&n), "required n {n}");
}

#[test]
fn recover_smoke_emits_all_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--seed",
            "77",
            "recover",
            "--family",
            "pla_lmm",
            "--method",
            "ml",
            "--replicates",
            "2",
            "--design",
            "balanced:6,4",
        ],
    );
    assert_code(&out, 0);
    let csv = std::fs::read_to_string(dir.path().join("recover_report.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "parameter,truth,mean_estimate,bias,rmse,coverage,covered,replicates"
    );
    assert_eq!(csv.lines().count(), 1 + 6); // six pla_lmm parameters
    let doc: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("recover_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(doc["report"]["replicates"], 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "seed = 4\n\n[simulate]\nfamily = \"pla_lmm\"\ndesign = \"balanced:3,2\"\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["--config", "run.toml", "simulate"]);
    assert_code(&out, 0);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["spec"]["family"], "pla_lmm");
    assert_eq!(truth["seed"], 4);
    assert_eq!(truth["n_specimens"], 12);

    // CLI flag overrides the config file
    let out = run_in(
        dir.path(),
        &[
            "--config",
            "run.toml",
            "--seed",
            "9",
            "simulate",
            "--design",
            "balanced:2,2",
        ],
    );
    assert_code(&out, 0);
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("truth.json")).unwrap())
            .unwrap();
    assert_eq!(truth["seed"], 9);
    assert_eq!(truth["n_specimens"], 8);

    // malformed config exits 2
    std::fs::write(dir.path().join("bad.toml"), "sed = 4\n").unwrap();
    let out = run_in(dir.path(), &["--config", "bad.toml", "simulate"]);
    assert_code(&out, 2);
}

#[test]
fn truth_file_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    simulate_into(dir.path(), "11");
    // reuse the emitted truth.json as the next run's generating truth
    let out = run_in(
        dir.path(),
        &[
            "--seed",
            "12",
            "--out-dir",
            "second",
            "simulate",
            "--family",
            "joint",
            "--truth",
            "truth.json",
        ],
    );
    assert_code(&out, 0);
    let t2: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("second/truth.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(t2["theta"]["rho"], -0.78);

    // family mismatch is a usage error
    let out = run_in(
        dir.path(),
        &[
            "--out-dir",
            "third",
            "simulate",
            "--family",
            "pla_lmm",
            "--truth",
            "truth.json",
        ],
    );
    assert_code(&out, 2);
}
