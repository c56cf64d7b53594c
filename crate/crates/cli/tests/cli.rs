use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mfk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfk"))
        .arg("--quiet")
        .args(args)
        .output()
        .expect("mfk runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const FORRESTER: &str = r#"
seed = 7
[problem]
builtin = "forrester"
[design]
sizes = [12, 6]
[sequential]
costs = [1.0, 5.0]
budget = 30.0
"#;

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .map(|f| {
                    if f.is_empty() {
                        f64::NAN
                    } else {
                        f.parse().unwrap()
                    }
                })
                .collect()
        })
        .collect();
    (header, rows)
}

#[test]
fn fit_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FORRESTER);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(mfk(&["fit", "--config", p(&cfg), "--out", p(&a)])
        .status
        .success());
    assert!(mfk(&["fit", "--config", p(&cfg), "--out", p(&b)])
        .status
        .success());
    for name in [
        "model.json",
        "fit_report.json",
        "design_1.csv",
        "level_2.csv",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let c = dir.path().join("c");
    assert!(
        mfk(&["fit", "--config", p(&cfg), "--out", p(&c), "--seed", "8"])
            .status
            .success()
    );
    assert_ne!(
        fs::read(a.join("design_1.csv")).unwrap(),
        fs::read(c.join("design_1.csv")).unwrap()
    );
}

#[test]
fn growing_design_sizes_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        &FORRESTER.replace("sizes = [12, 6]", "sizes = [6, 12]"),
    );
    let out = mfk(&[
        "fit",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-increasing"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "seed = 1\n[problem]\nbuiltin = \n");
    let out = mfk(&[
        "fit",
        "--config",
        p(&cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml:3"));
}

#[test]
fn missing_response_file_names_the_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FORRESTER);
    let fitted = dir.path().join("fitted");
    assert!(mfk(&["fit", "--config", p(&cfg), "--out", p(&fitted)])
        .status
        .success());
    fs::remove_file(fitted.join("level_2.csv")).unwrap();
    let data_cfg = write_config(
        dir.path(),
        "data.toml",
        "[problem]\ndata_dir = \"fitted\"\nlevels = 2\n",
    );
    let out = mfk(&[
        "fit",
        "--config",
        p(&data_cfg),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("level_2.csv"));
}

#[test]
fn fit_from_data_directory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FORRESTER);
    let fitted = dir.path().join("fitted");
    assert!(mfk(&["fit", "--config", p(&cfg), "--out", p(&fitted)])
        .status
        .success());
    let data_cfg = write_config(
        dir.path(),
        "data.toml",
        "seed = 7\n[problem]\ndata_dir = \"fitted\"\nlower = [0.0]\nupper = [1.0]\n",
    );
    let refit = dir.path().join("refit");
    assert!(mfk(&["fit", "--config", p(&data_cfg), "--out", p(&refit)])
        .status
        .success());
    assert_eq!(
        fs::read(fitted.join("model.json")).unwrap(),
        fs::read(refit.join("model.json")).unwrap()
    );
}

#[test]
fn predictions_interpolate_and_decompose() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FORRESTER);
    let model = dir.path().join("model");
    assert!(mfk(&["fit", "--config", p(&cfg), "--out", p(&model)])
        .status
        .success());

    let out = dir.path().join("at_design");
    let st = mfk(&[
        "predict",
        "--model",
        p(&model),
        "--points",
        p(&model.join("design_2.csv")),
        "--out",
        p(&out),
    ]);
    assert!(st.status.success());
    let (header, rows) = read_csv(&out.join("predictions.csv"));
    assert_eq!(
        header,
        [
            "dim_0",
            "mean_1",
            "mean_2",
            "var_1",
            "var_2",
            "contrib_1",
            "contrib_2"
        ]
    );
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(model.join("fit_report.json")).unwrap()).unwrap();
    let sigma2 = report["levels"][1]["sigma2"].as_f64().unwrap();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r[4] <= 1e-10 * sigma2);
    }

    let out = dir.path().join("grid");
    assert!(mfk(&[
        "predict",
        "--model",
        p(&model),
        "--grid",
        "101",
        "--out",
        p(&out)
    ])
    .status
    .success());
    let (_, rows) = read_csv(&out.join("predictions.csv"));
    assert_eq!(rows.len(), 101);
    for r in &rows {
        assert!((r[5] + r[6] - r[4]).abs() <= 1e-10 * (1.0 + r[4]));
    }
}

#[test]
fn empty_points_give_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FORRESTER);
    let model = dir.path().join("model");
    assert!(mfk(&["fit", "--config", p(&cfg), "--out", p(&model)])
        .status
        .success());
    let pts = dir.path().join("none.csv");
    fs::write(&pts, "dim_0\n").unwrap();
    let out = dir.path().join("pred");
    assert!(mfk(&[
        "predict",
        "--model",
        p(&model),
        "--points",
        p(&pts),
        "--out",
        p(&out)
    ])
    .status
    .success());
    assert_eq!(
        fs::read_to_string(out.join("predictions.csv")).unwrap(),
        "dim_0,mean_1,mean_2,var_1,var_2,contrib_1,contrib_2\n"
    );

    fs::write(&pts, "dim_0,dim_1\n0.1,0.2\n").unwrap();
    let st = mfk(&[
        "predict",
        "--model",
        p(&model),
        "--points",
        p(&pts),
        "--out",
        p(&out),
    ]);
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn tiny_budget_gives_empty_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        &FORRESTER.replace("budget = 30.0", "budget = 0.5"),
    );
    let out = dir.path().join("seq");
    let st = mfk(&["sequential", "--config", p(&cfg), "--out", p(&out)]);
    assert!(st.status.success());
    assert_eq!(
        fs::read_to_string(out.join("trace.csv")).unwrap(),
        "iter,x_0,level,z_1,z_2,imse_before,imse_after,cum_cost\n"
    );
    let rep = dir.path().join("rep");
    let st = mfk(&[
        "report",
        "--trace",
        p(&out.join("trace.csv")),
        "--out",
        p(&rep),
    ]);
    assert!(st.status.success());
    assert_eq!(
        fs::read_to_string(rep.join("imse_vs_cost.csv")).unwrap(),
        "iter,cum_cost,imse\n"
    );
    assert_eq!(
        fs::read_to_string(rep.join("level_histogram.csv")).unwrap(),
        "level,count\n"
    );
}

#[test]
fn sequential_runs_repeat_exactly_and_mostly_decrease() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "run.toml", FORRESTER);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(mfk(&["sequential", "--config", p(&cfg), "--out", p(&a)])
        .status
        .success());
    assert!(mfk(&["sequential", "--config", p(&cfg), "--out", p(&b)])
        .status
        .success());
    let ta = fs::read(a.join("trace.csv")).unwrap();
    assert_eq!(ta, fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("model/model.json")).unwrap(),
        fs::read(b.join("model/model.json")).unwrap()
    );
    let (header, rows) = read_csv(&a.join("trace.csv"));
    let before = header.iter().position(|h| h == "imse_before").unwrap();
    assert!(!rows.is_empty());
    let down = rows.iter().filter(|r| r[before + 1] <= r[before]).count();
    assert!(
        down * 5 >= rows.len() * 4,
        "imse_after decreased in {down}/{}",
        rows.len()
    );

    let rep = dir.path().join("rep");
    let st = mfk(&[
        "report",
        "--trace",
        p(&a.join("trace.csv")),
        "--config",
        p(&cfg),
        "--out",
        p(&rep),
    ]);
    assert!(st.status.success());
    let (_, hist) = read_csv(&rep.join("level_histogram.csv"));
    assert_eq!(
        hist.iter().map(|r| r[1] as usize).sum::<usize>(),
        rows.len()
    );
}

#[test]
fn failing_simulator_leaves_flagged_partial_trace() {
    let dir = TempDir::new().unwrap();
    let script = dir.path().join("sim.sh");
    // evaluates the Forrester pair, then fails from the 17th call on
    fs::write(
        &script,
        "#!/bin/sh\n\
         cd \"$(dirname \"$0\")\"\n\
         n=$(cat calls 2>/dev/null || echo 0); n=$((n + 1)); echo $n > calls\n\
         [ -n \"$LIMIT\" ] && [ $n -gt $LIMIT ] && exit 1\n\
         awk -v l=\"$1\" -v x=\"$2\" 'BEGIN { f = (6*x-2)^2 * sin(12*x-4); \
         if (l == 1) f = 0.5*f + 10*(x-0.5) - 5; printf \"%.17g\\n\", f }'\n",
    )
    .unwrap();
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    let cfg = write_config(
        dir.path(),
        "run.toml",
        r#"
seed = 3
[problem]
command = ["./sim.sh"]
levels = 2
lower = [0.0]
upper = [1.0]
[design]
sizes = [8, 4]
[sequential]
costs = [1.0, 5.0]
budget = 40.0
"#,
    );
    let ok = dir.path().join("ok");
    assert!(mfk(&["sequential", "--config", p(&cfg), "--out", p(&ok)])
        .status
        .success());

    fs::remove_file(dir.path().join("calls")).unwrap();
    let out = dir.path().join("fail");
    let st = Command::new(env!("CARGO_BIN_EXE_mfk"))
        .args([
            "--quiet",
            "sequential",
            "--config",
            p(&cfg),
            "--out",
            p(&out),
        ])
        .env("LIMIT", "16")
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(3));
    let status: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("status.json")).unwrap()).unwrap();
    assert_eq!(status["complete"], false);
    assert_eq!(status["stop"]["reason"], "simulator-failed");
    assert!(status["iterations"].as_u64().unwrap() >= 1);
    assert!(out.join("trace.csv").exists());
}

#[test]
fn hand_built_trace_report() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    fs::write(
        &trace,
        "iter,x_0,level,z_1,z_2,imse_before,imse_after,cum_cost\n\
         1,0.1,1,0.5,,1.0,0.8,1\n\
         2,0.7,2,0.2,0.4,0.8,0.5,7\n\
         3,0.4,1,0.3,,0.5,0.45,8\n",
    )
    .unwrap();
    let cfg = write_config(dir.path(), "run.toml", FORRESTER);
    let rep = dir.path().join("rep");
    let st = mfk(&[
        "report",
        "--trace",
        p(&trace),
        "--config",
        p(&cfg),
        "--out",
        p(&rep),
    ]);
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    assert_eq!(
        fs::read_to_string(rep.join("level_histogram.csv")).unwrap(),
        "level,count\n1,2\n2,1\n"
    );
    let (_, rows) = read_csv(&rep.join("imse_vs_cost.csv"));
    assert_eq!(
        rows,
        vec![
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 0.8],
            vec![2.0, 7.0, 0.5],
            vec![3.0, 8.0, 0.45],
        ]
    );

    // costs (1, 6) do not reproduce the cumulative column
    let cfg = write_config(dir.path(), "six.toml", &FORRESTER.replace("5.0]", "6.0]"));
    let st = mfk(&[
        "report",
        "--trace",
        p(&trace),
        "--config",
        p(&cfg),
        "--out",
        p(&rep),
    ]);
    assert_eq!(st.status.code(), Some(1));

    fs::write(
        &trace,
        "iter,x_0,level,z_1,z_2,imse_before,imse_after,cum_cost\n1,0.1,x,0.5,,1,0.8,1\n",
    )
    .unwrap();
    let st = mfk(&["report", "--trace", p(&trace), "--out", p(&rep)]);
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains(":2"));
}
