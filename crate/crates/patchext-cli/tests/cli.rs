use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patchext"))
        .args(args)
        .env_remove("PATCHEXT_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn stability_sweep_is_deterministic() {
    let args = ["stability-sweep", "--p", "1..4", "--setting", "h1", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("p,setting,energy_p,energy_proxy,ratio,proxy_convergence,gamma"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        let cols: Vec<_> = row.split(',').collect();
        assert_eq!(cols.len(), 7);
        assert_eq!(cols[0], (i + 1).to_string());
        assert_eq!(cols[1], "h1");
        let ratio: f64 = cols[4].parse().unwrap();
        assert!((1.0 - 1e-8..10.0).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn seed_comes_from_the_environment() {
    let args = ["stability-sweep", "--p", "2", "--setting", "hdiv", "--fixture", "random-star"];
    let with_env = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_patchext")).args(args).env("PATCHEXT_SEED", seed).output().unwrap()
    };
    let flag = run(&[&args[..], &["--seed", "11"]].concat());
    let env = with_env("11");
    let other = with_env("12");
    assert_eq!(flag.status.code(), Some(0));
    assert_eq!(flag.stdout, env.stdout);
    assert_ne!(env.stdout, other.stdout);
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["stability-sweep", "--p", "4..1"][..],
        &["patch-check", "--fixture", "cube-star", "--boundary"],
        &["patch-check", "--setting", "curl"],
        &["estimate", "--kuhn", "0"],
        &["bogus"],
    ] {
        let o = run(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn incompatible_data_exit_with_one_and_name_the_edge() {
    let o = run(&["patch-check", "--fixture", "cube-star", "--perturb", "0.1"]);
    assert_eq!(o.status.code(), Some(1));
    let diag: Value = serde_json::from_slice(&o.stderr).expect("diagnostic is JSON");
    assert_eq!(diag["status"], "error");
    assert_eq!(diag["kind"], "IncompatibleData");
    assert!(diag["details"]["worst_edge"].is_array());
    assert!(diag["message"].as_str().unwrap().contains("edge"));
}

#[test]
fn malformed_mesh_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.mesh");
    std::fs::write(&path, "tetmesh v1\n2\n0 0 0\n1 1\n").unwrap();
    let o = run(&["estimate", "--mesh", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let diag: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(diag["kind"], "ParseError");
    assert_eq!(diag["details"]["line"], 4);
}

#[test]
fn patch_check_boundary_runs_the_cross_check() {
    let o = run(&["patch-check", "--fixture", "half-cube", "--markers", "neumann", "--boundary"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_eq!(v["patch"]["kind"], "boundary");
    let s = &v["symmetrized"];
    assert_eq!(s["sqrt2_bound_holds"], true);
    assert!(s["extension_defect"].as_f64().unwrap() < 1e-10);
}

#[test]
fn shelling_writes_a_valid_enumeration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("shelling.json");
    let o = run(&["shelling", "--fixture", "distorted-star", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["valid"], true);
    let cells = v["patch"]["cells"].as_u64().unwrap() as usize;
    let mut order: Vec<u64> = v["order"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
    order.sort();
    assert_eq!(order, (0..cells as u64).collect::<Vec<_>>());
    assert_eq!(v["three_coloring"]["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn estimate_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("est.json");
    let csv_path = dir.path().join("eta.csv");
    let o = run(&[
        "estimate",
        "--kuhn",
        "1",
        "--degree",
        "2",
        "--json",
        json_path.to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    let eta = v["eta"].as_f64().unwrap();
    let err = v["error"].as_f64().unwrap();
    let eff = v["effectivity"].as_f64().unwrap();
    assert!(err <= eta * (1.0 + 1e-10));
    assert!((eff - eta / err).abs() < 1e-12 * eff);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let rows: Vec<_> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), v["cells"].as_u64().unwrap() as usize);
    let sum: f64 = rows.iter().map(|r| r.split(',').nth(1).unwrap().parse::<f64>().unwrap().powi(2)).sum();
    assert!((sum.sqrt() - eta).abs() < 1e-10 * eta);
}

#[test]
fn estimate_accepts_a_problem_file_and_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("cube.mesh");
    let problem = dir.path().join("problem.json");
    // unit cube as 6 Kuhn tetrahedra, all boundary faces Dirichlet
    let mut text = String::from("tetmesh v1\n8\n");
    for i in 0..8 {
        text += &format!("{} {} {}\n", i & 1, (i >> 1) & 1, (i >> 2) & 1);
    }
    let cells = [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];
    text += "6\n";
    for c in cells {
        text += &format!("{} {} {} {}\n", c[0], c[1], c[2], c[3]);
    }
    std::fs::write(&mesh, &text).unwrap();
    std::fs::write(&problem, r#"{"solution": [[1.0, 2, 0, 0], [-1.0, 0, 1, 1], [0.5, 1, 1, 1]]}"#).unwrap();
    let o = run(&["estimate", "--mesh", mesh.to_str().unwrap(), "--problem", problem.to_str().unwrap()]);
    // the unmarked boundary faces are rejected
    assert_eq!(o.status.code(), Some(1));
    let diag: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(diag["kind"], "UnmarkedBoundaryFace");

    let mut marked = text.clone();
    for c in cells {
        for skip in 0..4 {
            let f: Vec<usize> = (0..4).filter(|&i| i != skip).map(|i| c[i]).collect();
            let on_boundary = (0..3).any(|axis| {
                let bits: Vec<usize> = f.iter().map(|v| (v >> axis) & 1).collect();
                bits.iter().all(|&b| b == bits[0])
            });
            if on_boundary {
                marked += &format!("D {} {} {}\n", f[0], f[1], f[2]);
            }
        }
    }
    std::fs::write(&mesh, &marked).unwrap();
    let o = run(&["estimate", "--mesh", mesh.to_str().unwrap(), "--problem", problem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["effectivity"].as_f64().unwrap() >= 1.0 - 1e-10);
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\ndelta = 4\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let base = ["stability-sweep", "--p", "2", "--setting", "hdiv", "--fixture", "random-star"];
    let from_file = run(&[&base[..], &["--config", cfg]].concat());
    let explicit = run(&[&base[..], &["--seed", "11", "--delta", "4"]].concat());
    let overridden = run(&[&base[..], &["--config", cfg, "--seed", "12", "--delta", "4"]].concat());
    let other = run(&[&base[..], &["--seed", "12", "--delta", "4"]].concat());
    assert_eq!(from_file.status.code(), Some(0), "{}", String::from_utf8_lossy(&from_file.stderr));
    assert_eq!(from_file.stdout, explicit.stdout);
    assert_eq!(overridden.stdout, other.stdout);
    assert_ne!(from_file.stdout, overridden.stdout);

    std::fs::write(dir.path().join("bad.toml"), "sede = 1\n").unwrap();
    let bad = run(&[&base[..], &["--config", dir.path().join("bad.toml").to_str().unwrap()]].concat());
    assert_eq!(bad.status.code(), Some(2));
}
