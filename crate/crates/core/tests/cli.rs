use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kpgeom(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kpgeom")).current_dir(dir).args(args).output().expect("run kpgeom")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn gen_then_moments() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpgeom(dir.path(), &["gen", "--kind", "cone", "--n", "100000", "--seed", "7", "--out", "cone.csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&out);
    assert_eq!(rep["result"]["rows"], 100_000);
    let csv = std::fs::read_to_string(dir.path().join("cone.csv")).unwrap();
    assert_eq!(csv.lines().count(), 100_001);
    assert!(csv.starts_with("x1,x2,x3,x4,weight\n"));

    let out = kpgeom(dir.path(), &["moments", "--in", "cone.csv", "--x", "0,0,0,0", "--r", "1"]);
    assert_eq!(code(&out), 0);
    let rep = json(&out);
    let ev: Vec<f64> = rep["result"]["moments"]["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (got, want) in ev.iter().zip([0.5, 0.5, 0.5, 1.5]) {
        assert!((got - want).abs() < 0.02, "{ev:?}");
    }
}

#[test]
fn reports_carry_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpgeom(dir.path(), &["gen", "--kind", "plane", "--n", "50", "--seed", "3", "--out", "p.json"]);
    assert_eq!(code(&out), 0);
    let rep = json(&out);
    assert!(rep["version"].as_str().unwrap().starts_with("v0.1.0"));
    assert_eq!(rep["command"], "gen");
    assert_eq!(rep["seed"], 3);
    assert_eq!(rep["config"]["command"]["gen"]["n"], 50);
    assert!(rep["wall_clock_s"].as_f64().unwrap() >= 0.0);
    assert!(rep["tolerances"].is_object());

    let out = kpgeom(
        dir.path(),
        &["dist", "--a", "p.json", "--b", r#"{"type":"plane","point":[0,0,0,0],"normal":[0,0,0,1]}"#, "--x", "0,0,0,0", "--r", "1"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&out);
    assert!(rep["tolerances"]["resolution"].as_f64().unwrap() > 0.0);
    assert!(rep["result"]["value"].as_f64().unwrap() < 1.0);
}

#[test]
fn output_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (t, name) in [("1", "a.csv"), ("2", "b.csv")] {
        let out = kpgeom(
            dir.path(),
            &["--threads", t, "gen", "--kind", "perturbed-cone", "--eps", "0.05", "--n", "2000", "--seed", "11", "--out", name],
        );
        assert_eq!(code(&out), 0);
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // no seed on a randomized subcommand
    let out = kpgeom(dir.path(), &["gen", "--kind", "cone", "--n", "10", "--out", "c.csv"]);
    assert_eq!(code(&out), 2);
    assert!(!out.stderr.is_empty());
    // malformed point
    let out = kpgeom(dir.path(), &["moments", "--in", "c.csv", "--x", "0,0,0", "--r", "1"]);
    assert_eq!(code(&out), 2);
    // missing file
    let out = kpgeom(dir.path(), &["moments", "--in", "missing.csv", "--x", "0,0,0,0", "--r", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    // degenerate spectrum is numerical
    assert_eq!(code(&kpgeom(dir.path(), &["gen", "--kind", "plane", "--n", "5000", "--seed", "1", "--out", "p.csv"])), 0);
    let out = kpgeom(dir.path(), &["moments", "--in", "p.csv", "--x", "0,0,0,0", "--r", "1", "--gap-min", "0.5"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate spectrum"));
    // an empty ball has zero moments but no doubling ratio
    let out = kpgeom(dir.path(), &["moments", "--in", "p.csv", "--x", "9,9,9,9", "--r", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["result"]["moments"]["trace"], 0.0);
    let out = kpgeom(dir.path(), &["doubling", "--in", "p.csv", "--x", "9,9,9,9", "--r", "1"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero mass"));
    // a command without tabular output rejects csv
    let out = kpgeom(dir.path(), &["--format", "csv", "moments", "--in", "p.csv", "--x", "0,0,0,0", "--r", "1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn doubling_exact_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpgeom(dir.path(), &["doubling", "--exact", "--x", "0,0,0,0", "--r", "1"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["result"]["deviation"].as_f64().unwrap(), 0.0);
    let out = kpgeom(dir.path(), &["--format", "csv", "doubling", "--exact", "--x", "0,0,0,0", "--r", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("r_prime,tau,ratio,deviation\n"));
    assert_eq!(text.lines().count(), 1 + 16 * 33);
}

#[test]
fn param_on_exact_cone() {
    let dir = tempfile::tempdir().unwrap();
    let cone = r#"{"type":"kpcone","base":[0,0,0,0],"axis":[0,0,0,1]}"#;
    let out = kpgeom(dir.path(), &["param", "--in", cone, "--seed", "2", "--n", "40", "--out", "param.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("param.json")).unwrap()).unwrap();
    let res = &rep["result"];
    assert_eq!(res["round_trip_fraction"], 1.0);
    assert!(res["moduli"]["max_rho0"].as_f64().unwrap() < 1e-9);
    assert!(res["moduli"]["max_rho1"].as_f64().unwrap() < 1e-9);
    assert_eq!(res["records"].as_array().unwrap().len(), 40);
}

#[test]
fn fits_on_small_clouds() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpgeom(dir.path(), &["gen", "--kind", "plane", "--n", "3000", "--seed", "5", "--extent", "1.5", "--out", "p.csv"]);
    assert_eq!(code(&out), 0);
    let fast = ["--resolution", "0.02", "--budget", "6000"];
    let mut args = vec!["fit-plane", "--in", "p.csv", "--x", "0,0,0,0", "--r", "1", "--seed", "1", "--multistart", "2"];
    args.extend(fast);
    let out = kpgeom(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let n = &json(&out)["result"]["fit"]["normal"];
    assert!((n[3].as_f64().unwrap().abs() - 1.0).abs() < 1e-3, "{n}");

    let out = kpgeom(dir.path(), &["gen", "--kind", "cone", "--n", "3000", "--seed", "5", "--out", "c.csv"]);
    assert_eq!(code(&out), 0);
    let mut args = vec!["fit-cone", "--in", "c.csv", "--x", "0,0,0,0", "--r", "0.8", "--seed", "1", "--multistart", "2"];
    args.extend(fast);
    let out = kpgeom(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let axis = &json(&out)["result"]["cone"]["axis"];
    assert!(axis[3].as_f64().unwrap().abs() > 0.99, "{axis}");
}

#[test]
fn rates_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = kpgeom(dir.path(), &["rates", "--scenario", "perturbed", "--beta", "0.5", "--out", "rates.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rates.json")).unwrap()).unwrap();
    let slope = rep["result"]["slope"]["slope"].as_f64().unwrap();
    assert!((slope - 0.5).abs() <= 0.1, "{slope}");
    assert_eq!(rep["result"]["rows"].as_array().unwrap().len(), 7);
    assert_eq!(rep["tolerances"]["slope"], 0.1);
    // sampled mode draws points and so needs a seed
    let out = kpgeom(dir.path(), &["rates", "--mode", "sampled"]);
    assert_eq!(code(&out), 2);
}
