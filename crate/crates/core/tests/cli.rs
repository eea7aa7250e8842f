use std::path::Path;
use std::process::Command;

use ocp_core::grid::{Field, Grid};
use ocp_core::harness::ReportFile;

fn ocp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ocp"))
        .args(args)
        .output()
        .expect("spawn ocp")
}

fn small_solve(dir: &Path, extra: &[&str]) -> std::process::Output {
    let out = dir.to_str().unwrap();
    let mut args = vec![
        "solve",
        "--n",
        "12",
        "--nu",
        "1e-2",
        "--k-tilde",
        "1",
        "--eps-min",
        "1e-6",
        "--out",
        out,
        "--threads",
        "1",
    ];
    args.extend_from_slice(extra);
    ocp(&args)
}

fn read_report(dir: &Path) -> ReportFile {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn solve_writes_artifacts_that_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let out = small_solve(tmp.path(), &["--method", "newton-ras-eps"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rep = read_report(tmp.path());
    assert!(rep.report.converged);
    assert_eq!(rep.schema_version, 1);
    assert!(rep.report.decomposition.is_some());

    let mut rdr = csv::Reader::from_path(tmp.path().join("residual_history.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ic, ie) = (col("residual"), col("eps"));
    let mut residuals = Vec::new();
    let mut eps = Vec::new();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        residuals.push(rec[ic].parse::<f64>().unwrap());
        eps.push(rec[ie].parse::<f64>().unwrap());
    }
    assert_eq!(residuals, rep.report.residual_history);
    assert_eq!(eps, rep.report.eps_history);

    let grid = Grid::new(12).unwrap();
    for name in ["y.csv", "p.csv", "u.csv"] {
        let f = Field::read_csv(std::fs::File::open(tmp.path().join(name)).unwrap()).unwrap();
        assert_eq!(f.grid(), &grid);
    }
}

#[test]
fn repeated_runs_are_identical_except_timing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        assert!(small_solve(dir, &["--method", "raspen-eps"])
            .status
            .success());
    }
    let strip = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap())
                .unwrap();
        v["report"]["wall_time_s"] = serde_json::Value::Null;
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    for name in ["y.csv", "p.csv", "u.csv", "residual_history.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn degenerate_schedule_keeps_eps_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ocp(&[
        "solve",
        "--n",
        "16",
        "--method",
        "newton",
        "--eps0",
        "1",
        "--eps-min",
        "1",
        "--nu",
        "1e-2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rep = read_report(tmp.path());
    assert!(rep.report.eps_history.iter().all(|&e| e == 1.0));
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "# small run\nmethod = newton-eps\nn = 10\nnu = 1e-2\nk_tilde = 1\neps_min = 1e-4\n",
    )
    .unwrap();
    let dir = tmp.path().join("out");
    let out = ocp(&[
        "solve",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "8",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rep = read_report(&dir);
    assert_eq!(rep.config.n, 8);
    assert_eq!(rep.config.eps_min, 1e-4);
    assert_eq!(rep.method.name(), "newton-eps");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let code = |args: &[&str]| ocp(args).status.code().unwrap();
    assert_eq!(code(&["solve", "--method", "bogus", "--out", dir]), 2);
    assert_eq!(
        code(&["solve", "--eps0", "1e-9", "--eps-min", "1e-3", "--out", dir]),
        2
    );
    assert_eq!(code(&["solve", "--no-such-flag"]), 2);
    assert_eq!(code(&["table", "nonsense", "--out", dir]), 2);
    // one outer iteration is not enough
    assert_eq!(
        code(&[
            "solve",
            "--n",
            "8",
            "--nu",
            "1e-2",
            "--method",
            "newton",
            "--eps-min",
            "1e-6",
            "--linear",
            "direct",
            "--max-outer",
            "1",
            "--out",
            dir
        ]),
        3
    );
}

#[test]
fn table_marks_failed_cells_and_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let out = ocp(&[
        "table",
        "mono",
        "--n",
        "8",
        "--nu",
        "1e-2",
        "--k-tilde",
        "1",
        "--linear",
        "direct",
        "--max-outer",
        "4",
        "--out",
        dir,
    ]);
    assert_eq!(out.status.code(), Some(4));
    let mut rdr = csv::Reader::from_path(tmp.path().join("table_mono.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 12);
    let header = rdr.headers().unwrap().clone();
    let conv = header.iter().position(|h| h == "converged").unwrap();
    assert!(rows.iter().any(|r| &r[conv] == "true"));
    assert!(rows.iter().any(|r| &r[conv] == "false"));
}

#[test]
fn mono_table_matches_single_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let common = [
        "--n",
        "8",
        "--nu",
        "1e-2",
        "--k-tilde",
        "1",
        "--linear",
        "direct",
        "--threads",
        "1",
    ];
    let mut args = vec!["table", "mono", "--out", dir];
    args.extend_from_slice(&common);
    assert!(ocp(&args).status.success());
    let mut rdr = csv::Reader::from_path(tmp.path().join("table_mono.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |n: &str| header.iter().position(|h| h == n).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    for row in rows.iter().filter(|r| &r[col("method")] == "newton") {
        let eps = &row[col("eps_min")];
        let single = tmp.path().join(format!("single_{eps}"));
        let mut sargs = vec![
            "solve",
            "--method",
            "newton",
            "--eps-min",
            eps,
            "--out",
            single.to_str().unwrap(),
        ];
        sargs.extend_from_slice(&common);
        assert!(ocp(&sargs).status.success());
        let rep = read_report(&single);
        assert_eq!(
            row[col("outer_iters")].parse::<usize>().unwrap(),
            rep.report.outer_iters
        );
    }
}
