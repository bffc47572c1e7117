use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levyreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyreg"))
        .args(args)
        .env_remove("LEVYREG_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_scenarios_prints_all_seven_in_order() {
    let o = levyreg(&["list-scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let ids: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(ids, ["S1", "S2", "S3", "S4", "S5", "S6", "S7"]);
    assert!(text.lines().all(|l| l.contains("claim: ")));
}

#[test]
fn validate_reports_ok_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(dir.path(), "good.txt", "scenario = S3\nreplicas = 10\n");
    let o = levyreg(&["validate", "--config", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("ok"));

    let bad = write_config(dir.path(), "bad.txt", "scenario = S1\nreplicas = -5\n");
    let o = levyreg(&["validate", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("replicas"));

    let unknown = write_config(dir.path(), "unknown.txt", "scenario = S8\n");
    assert_eq!(levyreg(&["validate", "--config", &unknown]).status.code(), Some(1));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let o = levyreg(&["validate", "--config", "/nonexistent/levyreg.txt"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_arguments_are_config_errors() {
    assert_eq!(levyreg(&["run", "--replicas", "3"]).status.code(), Some(1));
    assert_eq!(levyreg(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(levyreg(&["--help"]).status.code(), Some(0));
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s1.txt", "scenario = S1\nreplicas = 1500\n");
    let out = dir.path().join("out");
    let o = levyreg(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7", "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    let mut lines = samples.lines();
    assert_eq!(lines.next(), Some("replica,terminal_x,terminal_z,failed"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 1500);
    for (i, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 4);
        assert_eq!(cols[0].parse::<usize>().unwrap(), i);
        assert!(cols[1].parse::<f64>().unwrap().is_finite());
        assert_eq!(cols[3], "0");
    }

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"], "S1");
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["replicas"], 1500);
    assert_eq!(summary["failures"], 0);
    assert_eq!(summary["diagnostics"]["kind"], "atom");
    assert!(summary["version"].is_string());

    assert!(out.join("plots/density.gp").exists());
    assert!(out.join("plots/terminal.gp").exists());
    assert!(out.join("kde.csv").exists());
    assert!(fs::read_to_string(out.join("config.txt")).unwrap().contains("seed = 7"));
}

#[test]
fn thread_count_from_environment_gives_identical_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s5.txt", "scenario = S5\nreplicas = 300\n");
    let mut files = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("out{threads}"));
        let o = Command::new(env!("CARGO_BIN_EXE_levyreg"))
            .args(["run", "--config", &cfg, "--out", out.to_str().unwrap()])
            .env("LEVYREG_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0));
        files.push(fs::read(out.join("samples.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn numeric_failures_above_one_percent_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = "scenario = S1\nreplicas = 20\nx0 = 1\nhorizon = 50\nstep = 0.25\n[coefficients]\na = affine(60, 0)\n";
    let cfg = write_config(dir.path(), "blowup.txt", text);
    let out = dir.path().join("out");
    let o = levyreg(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let samples = fs::read_to_string(out.join("samples.csv")).unwrap();
    assert!(samples.lines().skip(1).all(|l| l.ends_with(",1")));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s6.txt", "scenario = S6\nreplicas = 2\n");
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("out");
    let o = levyreg(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn output_directory_can_come_from_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_config");
    let text = format!("scenario = S6\nreplicas = 2\noutput = {}\n", out.display());
    let cfg = write_config(dir.path(), "s6.txt", &text);
    assert_eq!(levyreg(&["run", "--config", &cfg]).status.code(), Some(0));
    assert!(out.join("summary.json").exists());
    let no_out = write_config(dir.path(), "plain.txt", "scenario = S6\nreplicas = 2\n");
    assert_eq!(levyreg(&["run", "--config", &no_out]).status.code(), Some(1));
}
