use std::fs;
use std::path::Path;
use std::process::Command;

use corlmc::cli::{gof_table, run_command};
use corlmc::data::uniform_scores;
use corlmc::diagnostics::{gof_deltas, DEFAULT_Q_GRID};
use corlmc::fit::FitResult;
use corlmc::io::{self, fmt_f64};
use corlmc::simulate::{simulate, SimulationConfig};

const LOCATIONS: &str = "id,x,y\n1,0,0\n2,1,0\n3,0,1\n4,1,1\n";
const MODEL: &str = r#"{"loadings":{"variables":[
  {"alpha0_upper":1.1,"alpha_upper":0.9,"alpha0_lower":0.7,"alpha_lower":1.1},
  {"alpha0_upper":0.9,"alpha_upper":0.0,"alpha0_lower":0.7,"alpha_lower":0.0}]},
 "covariance":{"family":"shared_exponential","theta0":2.2,"theta":[0.8,1.0]}}"#;

fn run(dir: &Path, args: &[&str]) -> i32 {
    let mut full = vec!["corlmc".to_string()];
    full.extend(args.iter().map(|s| s.to_string()));
    full.extend(["--out".to_string(), dir.display().to_string()]);
    run_command(full)
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("locations.csv"), LOCATIONS).unwrap();
    fs::write(
        dir.path().join("simulate.json"),
        format!(r#"{{"locations":"locations.csv","n_replicates":100,"model":{MODEL}}}"#),
    )
    .unwrap();
    dir
}

#[test]
fn simulate_fit_gof_pipeline() {
    let dir = setup();
    let d = dir.path();
    let cfg = d.join("simulate.json");
    let sim_out = d.join("sim");
    assert_eq!(run(&sim_out, &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3"]), 0);
    for f in ["replicates.csv", "locations.csv", "params.json"] {
        assert!(sim_out.join(f).exists(), "{f}");
    }
    fs::write(
        d.join("fit.json"),
        r#"{"locations":"locations.csv","data":"sim/replicates.csv","optimizer":{"max_evals":150}}"#,
    )
    .unwrap();
    let fit_out = d.join("fit");
    assert_eq!(run(&fit_out, &["fit", "--config", d.join("fit.json").to_str().unwrap(), "--nodes", "16"]), 0);
    let fitted: FitResult = io::read_json(&fit_out.join("fit.json")).unwrap();
    assert!(fitted.loglik.is_finite());
    assert_eq!(fitted.loadings.variables[1].alpha_upper, 0.0);

    fs::write(
        d.join("gof.json"),
        r#"{"locations":"locations.csv","data":"sim/replicates.csv","fitted":"fit/fit.json","model_replicates":3000}"#,
    )
    .unwrap();
    let gof_out = d.join("gof");
    assert_eq!(run(&gof_out, &["gof", "--config", d.join("gof.json").to_str().unwrap(), "--seed", "4"]), 0);

    // the table must equal the library computation on the same inputs
    let design = io::load_design(&d.join("locations.csv"), 2).unwrap();
    let data = uniform_scores(&io::load_replicates(&sim_out.join("replicates.csv"), &design).unwrap()).unwrap();
    let model = simulate(
        &SimulationConfig::new(design, fitted.spec().unwrap(), fitted.loadings.clone(), 3000).with_seed(4),
    )
    .unwrap();
    let summary = gof_deltas(&data, &uniform_scores(&model).unwrap(), &DEFAULT_Q_GRID).unwrap();
    let mut want = String::from("group,statistic,value\n");
    for (g, s, v) in gof_table(&summary) {
        want.push_str(&format!("{g},{s},{}\n", fmt_f64(v)));
    }
    assert_eq!(fs::read_to_string(gof_out.join("gof.csv")).unwrap(), want);
    assert!(gof_out.join("gof.json").exists());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = setup();
    let cfg = dir.path().join("simulate.json");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(out, &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "11"]), 0);
        assert_eq!(run(out, &["taildep", "--config", cfg.to_str().unwrap()]), 0);
    }
    for f in ["replicates.csv", "taildep.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn fig1_schema() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("fig1.json"), r#"{"fig1_replicates":2000}"#).unwrap();
    let cfg = dir.path().join("fig1.json");
    assert_eq!(run(dir.path(), &["fig1", "--config", cfg.to_str().unwrap()]), 0);
    let mut rdr = csv::Reader::from_path(dir.path().join("fig1.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["model", "pair_type", "lag", "stat", "q", "value"]);
    let mut combos = std::collections::BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        combos.insert((rec[0].to_string(), rec[1].to_string()));
        let v: f64 = rec[5].parse().unwrap();
        assert!((-1.0..=1.0).contains(&v));
    }
    assert_eq!(combos.len(), 9);
    let svg = fs::read_to_string(dir.path().join("fig1.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let bin = env!("CARGO_BIN_EXE_corlmc");
    let out = Command::new(bin).args(["fit", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let out = Command::new(bin).args(["simulate", "--factor", "cauchy"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"locations": 3}"#).unwrap();
    let out = Command::new(bin)
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error[config]: "), "{err}");
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = setup();
    fs::write(
        dir.path().join("broken.json"),
        r#"{"locations":"locations.csv","data":"missing.csv"}"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_corlmc");
    let out = Command::new(bin)
        .args([
            "fit",
            "--config",
            dir.path().join("broken.json").to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error[io]: "));
}
