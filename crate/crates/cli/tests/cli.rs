use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zo"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_identical_files_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "run",
        "--problem",
        "norm",
        "--d",
        "4",
        "--T",
        "2000",
        "--seeds",
        "7,9",
    ];
    let o = zo(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read(dir.path().join("run_7.csv")).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["n_seeds"], 2);
    assert!(summary["mean_final_metric"].as_f64().unwrap() > 0.0);
    assert!(zo(&args, dir.path()).status.success());
    assert_eq!(csv, fs::read(dir.path().join("run_7.csv")).unwrap());
    let header = String::from_utf8(csv).unwrap();
    assert!(header.starts_with("t,f_value,f_gap,grad_norm_sq,est_norm_sq,eta,alpha\n"));
}

#[test]
fn stochastic_setting_without_sigma0_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = zo(
        &["run", "--setting", "sto_nonsmooth_cvx", "--T", "100"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("missing constant sigma0"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn stochastic_setting_with_sigma0_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = zo(
        &[
            "run",
            "--setting",
            "sto_nonsmooth_cvx",
            "--T",
            "500",
            "--sigma0",
            "0.1",
            "--seeds",
            "1",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["diagnose", "everything"][..],
        &["run", "--problem", "rosenbrock", "--T", "10"],
        &["run"],
        &["run", "--T", "10", "--eps", "0.1"],
        &[
            "run",
            "--setting",
            "det_smooth_scvx",
            "--problem",
            "quadratic",
            "--T",
            "10",
        ],
    ] {
        let o = zo(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"problem": "quadratic", "d": 3, "T": 50, "seeds": [1, 2, 3], "setting": "det_smooth_cvx"}"#)
        .unwrap();
    let o = zo(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--T",
            "80",
            "--seeds",
            "5",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(s["T"], 80);
    assert_eq!(s["d"], 3);
    assert_eq!(s["n_seeds"], 1);
    assert!(dir.path().join("run_5.csv").exists());

    fs::write(&cfg, r#"{"problem": "quadratic", "horizon": 50}"#).unwrap();
    let o = zo(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2), "unknown config keys are rejected");
}

#[test]
fn dimension_sweep_on_constant_problem() {
    let dir = tempfile::tempdir().unwrap();
    let o = zo(
        &[
            "sweep-d",
            "--problem",
            "constant",
            "--value",
            "0",
            "--eps",
            "0.1",
            "--d-sweep",
            "2,4,8,16,32",
            "--gnuplot",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.split(',').nth(2) == Some("1")));
    assert!(dir.path().join("sweep.gp").exists());
}

#[test]
fn precision_sweep_recovers_the_nonsmooth_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let o = zo(
        &[
            "sweep-eps",
            "--eps-list",
            "0.4,0.2,0.1,0.05",
            "--seeds",
            "0,1,2,3,4,5,6,7",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sweep.json")).unwrap()).unwrap();
    let slope = r["fit"]["slope"].as_f64().unwrap();
    assert!((-2.4..=-1.6).contains(&slope), "exponent {slope}");
}

#[test]
fn quick_diagnose_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["moments", "proposition1"] {
        let o = zo(&["diagnose", suite, "--quick"], dir.path());
        assert!(
            o.status.success(),
            "{suite}: {}",
            String::from_utf8_lossy(&o.stdout)
        );
        assert!(dir.path().join(format!("diagnose_{suite}.json")).exists());
    }
}

#[test]
fn estimate_constants_fills_the_c0_cache() {
    let dir = tempfile::tempdir().unwrap();
    let o = zo(
        &[
            "estimate-constants",
            "--problem",
            "quadratic",
            "--d",
            "4",
            "--alpha",
            "0.05",
            "--n-draws",
            "20000",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cache: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c0_cache.json")).unwrap())
            .unwrap();
    let c0 = cache["entries"]["quadratic/4"].as_f64().unwrap();
    assert!(c0 > 0.0);

    let cache_path = dir.path().join("c0_cache.json");
    let o = zo(
        &[
            "run",
            "--setting",
            "det_nonsmooth_scvx",
            "--problem",
            "quadratic",
            "--d",
            "4",
            "--eps",
            "0.5",
            "--T",
            "100",
            "--c0-cache",
            cache_path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(s["c0"].as_f64().unwrap(), c0);
}
