use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_infodesign"));
    c.env_remove("INFODESIGN_THREADS");
    c
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn result(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap()
}

fn stderr_kind(o: &Output) -> String {
    let v: Value = serde_json::from_slice(&o.stderr).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn pigou() -> Value {
    json!({
        "scenarios": {
            "kind": "discrete",
            "scenarios": [{ "weight": 1.0, "a": [1.0, 0.0], "b": [0.0, 1.0] }]
        }
    })
}

/// `x = 2a₂` with probability 0.3, `x = −2a₁` otherwise.
fn boundary() -> Value {
    json!({
        "scenarios": {
            "kind": "discrete",
            "scenarios": [
                { "weight": 0.3, "a": [1.0, 0.5], "b": [1.0, 0.0] },
                { "weight": 0.7, "a": [1.0, 0.5], "b": [0.0, 2.0] }
            ]
        }
    })
}

fn wheatstone_monte_carlo() -> Value {
    json!({
        "graph": {
            "edges": [
                { "id": "ou", "tail": "o", "head": "u" },
                { "id": "ov", "tail": "o", "head": "v" },
                { "id": "uv", "tail": "u", "head": "v" },
                { "id": "ud", "tail": "u", "head": "d" },
                { "id": "vd", "tail": "v", "head": "d" }
            ],
            "origin": "o",
            "destination": "d"
        },
        "scenarios": {
            "kind": "monte-carlo",
            "n": 6,
            "sampler": {
                "type": "uniform-box",
                "a_lo": [0.5, 0.0, 0.0, 0.0, 0.5],
                "a_hi": [1.5, 0.2, 0.1, 0.2, 1.5],
                "b_lo": [0.0, 0.5, 0.0, 0.5, 0.0],
                "b_hi": [0.2, 1.5, 0.3, 1.5, 0.2]
            }
        },
        "solver": { "restarts": 3 }
    })
}

fn csv_rows(out: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(out.join("plot.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ \"scenarios\": [1, 2,").unwrap();
    let o = run(&["design"], &path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_kind(&o), "config-parse");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cases = [
        json!({ "scenarios": { "kind": "discrete", "scenarios": [] } }),
        json!({ "scenarios": { "kind": "discrete", "scenarios": [{ "weight": 1.0, "a": [-1.0], "b": [0.0] }] } }),
        json!({ "unknown_field": 1, "scenarios": pigou()["scenarios"] }),
        json!({ "seed": 1 }),
        json!({ "scenarios": pigou()["scenarios"], "solver": { "tol": -1.0 } }),
        json!({ "scenarios": pigou()["scenarios"], "policy": { "kind": "table", "rows": [[1.0]] } }),
    ];
    for (k, value) in cases.iter().enumerate() {
        let path = write_config(dir.path(), &format!("c{k}.json"), value);
        let o = run(&["solve-bue"], &path, &out);
        assert_eq!(o.status.code(), Some(2), "case {k}: {}", String::from_utf8_lossy(&o.stderr));
    }

    let sweep_without_spec = write_config(dir.path(), "s.json", &pigou());
    assert_eq!(run(&["sweep"], &sweep_without_spec, &out).status.code(), Some(2));
    let bad_step = write_config(
        dir.path(),
        "step.json",
        &json!({ "sweep": { "a1": { "start": 0.1, "stop": 0.2, "step": 0.0 }, "a2": { "start": 0.1, "stop": 0.2, "step": 0.1 } } }),
    );
    assert_eq!(run(&["sweep"], &bad_step, &out).status.code(), Some(2));
    assert_eq!(run(&["design", "check-theorems"], &sweep_without_spec, &out).status.code(), Some(2));
}

#[test]
fn io_errors() {
    let dir = TempDir::new().unwrap();
    let o = run(&["design"], &dir.path().join("missing.json"), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_kind(&o), "file-io");

    // The output directory is an existing file.
    let config = write_config(dir.path(), "pigou.json", &pigou());
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    assert_eq!(run(&["solve-ue"], &config, &blocker).status.code(), Some(3));

    let referencing = write_config(dir.path(), "ref.json", &json!({ "scenarios_file": "nowhere.json" }));
    assert_eq!(run(&["solve-ue"], &referencing, &dir.path().join("out")).status.code(), Some(3));
}

#[test]
fn solver_failure_exit_code() {
    let dir = TempDir::new().unwrap();
    let mut config = wheatstone_monte_carlo();
    config["solver"] = json!({ "max_iter": 1 });
    let path = write_config(dir.path(), "c.json", &config);
    let o = run(&["solve-ue"], &path, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_kind(&o), "solver");
}

#[test]
fn invalid_thread_count() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "c.json", &pigou());
    let o = bin()
        .args(["solve-ue", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env("INFODESIGN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pigou_costs() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "pigou.json", &pigou());
    let cost = |command: &str| {
        let out = dir.path().join(command);
        assert!(run(&[command], &path, &out).status.success());
        result(&out)["result"]["expected_cost"].as_f64().unwrap()
    };
    assert!((cost("solve-ue") - 1.0).abs() <= 1e-6);
    assert!((cost("solve-sysopt") - 0.75).abs() <= 1e-6);

    let mut config = pigou();
    config["policy"] = json!({ "kind": "full-info-ue" });
    let path = write_config(dir.path(), "poa.json", &config);
    let out = dir.path().join("poa");
    assert!(run(&["poa"], &path, &out).status.success());
    let r = result(&out);
    assert!((r["result"]["poa"].as_f64().unwrap() - 4.0 / 3.0).abs() <= 1e-6);
    assert!((r["result"]["full_information_poa"].as_f64().unwrap() - 4.0 / 3.0).abs() <= 1e-6);

    let out = dir.path().join("design");
    assert!(run(&["design"], &write_config(dir.path(), "p.json", &pigou()), &out).status.success());
    let r = result(&out);
    assert_eq!(r["result"]["optimal"], json!(false));
    assert!((r["result"]["expected_cost"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
}

#[test]
fn design_on_boundary_instance_is_optimal() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "boundary.json", &boundary());
    let out = dir.path().join("out");
    let o = run(&["design"], &path, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = result(&out);
    assert!((r["result"]["poa"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert_eq!(r["result"]["optimal"], json!(true));
    assert!(out.join("metadata.json").exists());

    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["scenario", "weight", "policy_1", "policy_2", "flow_1", "flow_2", "cost"]);
    assert_eq!(rows.len(), 2);
}

#[test]
fn single_scenario_design_has_one_row() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "pigou.json", &pigou());
    let out = dir.path().join("out");
    assert!(run(&["design"], &path, &out).status.success());
    assert_eq!(csv_rows(&out).1.len(), 1);
}

#[test]
fn sweep_reproduces_the_sign_claims() {
    let dir = TempDir::new().unwrap();
    let config = json!({
        "sweep": {
            "a1": { "start": 0.01, "stop": 0.49, "step": 0.01 },
            "a2": { "start": 0.01, "stop": 0.49, "step": 0.01 }
        }
    });
    let path = write_config(dir.path(), "sweep.json", &config);
    let out = dir.path().join("out");
    let o = run(&["sweep", "check-theorems"], &path, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["a1", "a2", "g_poly", "h_poly", "lhs1", "lhs2", "poa"]);
    assert_eq!(rows.len(), 49 * 49);
    assert_eq!(rows[0][..2], ["0.01", "0.01"]);
    assert_eq!(rows.last().unwrap()[..2], ["0.49", "0.49"]);
    for row in &rows {
        for v in &row[2..6] {
            assert!(v.parse::<f64>().unwrap() <= 0.0, "{row:?}");
        }
        assert_eq!(row[6], "");
    }
    assert_eq!(result(&out)["result"]["summary"]["all_nonpositive"], json!(true));
}

#[test]
fn sweep_with_design_points() {
    let dir = TempDir::new().unwrap();
    let config = json!({
        "sweep": {
            "a1": { "start": 0.3, "stop": 0.9, "step": 0.6 },
            "a2": { "start": 0.5, "stop": 0.5, "step": 1.0 },
            "point": "design"
        }
    });
    let path = write_config(dir.path(), "sweep.json", &config);
    let out = dir.path().join("out");
    assert!(run(&["sweep", "--grid-n", "60"], &path, &out).status.success());
    let r = result(&out);
    assert_eq!(r["config"]["sweep"]["grid_n"], json!(60));
    let (_, rows) = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    for row in rows {
        let poa: f64 = row[6].parse().unwrap();
        assert!((1.0 - 1e-9..=1.0 + 1e-3).contains(&poa), "{poa}");
    }
}

#[test]
fn empty_sweep_grid_gives_header_only_csv() {
    let dir = TempDir::new().unwrap();
    let config = json!({
        "sweep": {
            "a1": { "start": 0.5, "stop": 0.1, "step": 0.1 },
            "a2": { "start": 0.1, "stop": 0.5, "step": 0.1 }
        }
    });
    let path = write_config(dir.path(), "sweep.json", &config);
    let out = dir.path().join("out");
    assert!(run(&["sweep"], &path, &out).status.success());
    assert_eq!(
        std::fs::read_to_string(out.join("plot.csv")).unwrap(),
        "a1,a2,g_poly,h_poly,lhs1,lhs2,poa\n"
    );
}

#[test]
fn check_theorems_on_uniform_prior() {
    let dir = TempDir::new().unwrap();
    let config = json!({ "scenarios": { "kind": "uniform-grid", "a": [0.2, 0.8], "n": 40 } });
    let path = write_config(dir.path(), "u.json", &config);
    let out = dir.path().join("out");
    assert!(run(&["check-theorems"], &path, &out).status.success());
    let r = result(&out)["result"].clone();
    assert_eq!(r["uniform"]["obedience"]["case"], json!("lower-triangle-only"));
    assert!(r["uniform"]["obedience"]["lhs1"].as_f64().unwrap() <= 0.0);
    assert!(r["uniform"]["obedience"]["lhs2"].as_f64().unwrap() <= 0.0);
    assert!(r["thm2"].is_object());
    assert!(r["x_mean"].as_f64().unwrap().abs() < 1e-12);
    assert!(!out.join("plot.csv").exists());

    let wheat = write_config(dir.path(), "w.json", &wheatstone_monte_carlo());
    assert_eq!(run(&["check-theorems"], &wheat, &out).status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "w.json", &wheatstone_monte_carlo());
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert!(run(&["design", "--seed", "4"], &path, &first).status.success());
    let o = bin()
        .args(["design", "--seed", "4", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&second)
        .env("INFODESIGN_THREADS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    for file in ["result.json", "plot.csv"] {
        assert_eq!(
            std::fs::read(first.join(file)).unwrap(),
            std::fs::read(second.join(file)).unwrap(),
            "{file}"
        );
    }
    let other = dir.path().join("other");
    assert!(run(&["design", "--seed", "5"], &path, &other).status.success());
    assert_ne!(
        std::fs::read(first.join("result.json")).unwrap(),
        std::fs::read(other.join("result.json")).unwrap()
    );
}

#[test]
fn result_echoes_the_resolved_config() {
    let dir = TempDir::new().unwrap();
    let path = write_config(dir.path(), "w.json", &wheatstone_monte_carlo());
    let out = dir.path().join("out");
    assert!(run(&["design", "--seed", "9", "--tol", "1e-8", "--restarts", "2"], &path, &out)
        .status
        .success());
    let r = result(&out);
    assert_eq!(r["seed"], json!(9));
    assert_eq!(r["config"]["seed"], json!(9));
    assert_eq!(r["config"]["solver"]["tol"], json!(1e-8));
    assert_eq!(r["config"]["solver"]["restarts"], json!(2));
    // Defaults are spelled out.
    assert_eq!(r["config"]["solver"]["report_tol"], json!(1e-6));
    assert_eq!(r["config"]["policy"]["kind"], json!("uninformative"));
    assert_eq!(r["config"]["graph"]["nodes"], json!(["o", "d", "u", "v"]));
    assert!(r["config"].get("output").is_none());
    assert_eq!(r["result"]["paths"].as_array().unwrap().len(), 3);
    assert!(r["result"]["obedience"]["max_violation"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn referenced_scenario_file() {
    let dir = TempDir::new().unwrap();
    write_config(dir.path(), "scenarios.json", &boundary()["scenarios"]);
    let path = write_config(dir.path(), "c.json", &json!({ "scenarios_file": "scenarios.json" }));
    let out = dir.path().join("out");
    assert!(run(&["solve-bue"], &path, &out).status.success());
    let r = result(&out);
    assert_eq!(r["config"]["scenarios"]["kind"], json!("discrete"));
    assert!(r["result"]["equilibrium_violation"].as_f64().unwrap() <= 1e-6);
}
