//! End-to-end checks of the command-line interface: files, formats, exit
//! codes, and byte-level reproducibility.

use std::path::Path;
use std::process::Command;

fn mottsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mottsim"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_RUN: &str = "\
sites = 3
u = 33.3
gamma = 0.1
init = doublon
solver = exact
t_max = 2.0
save_stride = 64
r_values = 1
";

#[test]
fn simulate_small_run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", SMALL_RUN);
    let out = mottsim()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("negativity.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "time,r,negativity");
    assert!(lines.clone().count() > 10);
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[1], "1");
        fields[0].parse::<f64>().unwrap();
        fields[2].parse::<f64>().unwrap();
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["version"], 1);
    assert_eq!(summary["diagnostics"]["steps"], 3330);
}

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", SMALL_RUN);
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let status = mottsim()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["negativity.csv", "summary.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn trajectory_csv_identical_across_thread_counts() {
    let body = "\
sites = 3
u = 10
gamma = 0.2
init = doublon
solver = trajectory
n_traj = 48
master_seed = 31415
t_max = 0.8
save_stride = 40
r_values = 1
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", body);
    let mut outputs = Vec::new();
    for (threads, sub) in [("1", "t1"), ("8", "t8")] {
        let out = dir.path().join(sub);
        let status = mottsim()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("negativity.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_flag_overrides_config() {
    let body = "\
sites = 3
u = 10
gamma = 0.3
init = doublon
solver = trajectory
n_traj = 24
master_seed = 1
t_max = 0.6
save_stride = 30
r_values = 1
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", body);
    let mut csvs = Vec::new();
    for (seed, sub) in [("1", "s1"), ("2", "s2"), ("1", "s1b")] {
        let out = dir.path().join(sub);
        let status = mottsim()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(["--seed", seed])
            .status()
            .unwrap();
        assert!(status.success());
        csvs.push(std::fs::read(out.join("negativity.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[2]);
    assert_ne!(csvs[0], csvs[1]);
}

#[test]
fn scan_writes_expected_header_and_rows() {
    let body = "\
sites = 3
u = 30
init = doublon
solver = exact
t_max = 0.6
save_stride = 40
r_values = 1
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", body);
    let out = mottsim()
        .args(["scan", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .args(["--channel", "loss", "--rates", "0,0.2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("peak_scan.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "rate,channel,protocol,t_peak,n_peak,no_peak_flag");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,loss,doublon,"));
    assert!(lines[2].starts_with("0.2,loss,doublon,"));
}

#[test]
fn speed_single_point_matches_formula_column() {
    let body = "\
sites = 7
u = 33.3
init = doublon
solver = pure
t_max = 0.9
save_stride = 20
r_values = 1,2
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", body);
    let out = mottsim()
        .args(["speed", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .args(["--u-over-j", "33.3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("speed.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "u_over_j,protocol,speed,uncertainty,v_max_formula"
    );
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "33.3");
    assert_eq!(fields[1], "doublon");
    let speed: f64 = fields[2].parse().unwrap();
    let formula: f64 = fields[4].parse().unwrap();
    let expect = 4.0 * (1.0 - 4.0 / (33.3f64 * 33.3));
    assert!((formula - expect).abs() < 1e-9);
    assert!(
        (speed - formula).abs() / formula < 0.15,
        "measured {speed} vs formula {formula}"
    );
}

#[test]
fn speed_rejects_empty_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", SMALL_RUN);
    let out = mottsim()
        .args(["speed", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .args(["--u-over-j", ""])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn invalid_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "sites = 3\ninit = doublon\n");
    let out = mottsim()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("solver"), "stderr: {err}");
}

#[test]
fn resource_cap_names_the_cap() {
    let body = "\
sites = 8
u = 10
init = doublon
solver = exact
t_max = 0.2
r_values = 1
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "big.cfg", body);
    let out = mottsim()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cap"), "stderr: {err}");
}

#[test]
fn tomography_check_passes_on_small_run() {
    let body = "\
sites = 3
u = 20
gamma = 0.1
init = doublon
solver = exact
t_max = 0.4
save_stride = 60
r_values = 1
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", body);
    let out = mottsim()
        .args(["tomography-check", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("max reconstruction error"));
}

#[test]
fn tomography_check_reports_unsupported_cutoff() {
    let body = "\
sites = 3
cutoff = 4
u = 20
init = doublon
solver = exact
t_max = 0.3
r_values = 1
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", body);
    let out = mottsim()
        .args(["tomography-check", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unsupported"), "stderr: {err}");
}

#[test]
fn pulse_init_reports_preparation_fidelity() {
    let body = "\
sites = 3
u = 100
init = pulse
drive_amplitude = 2.0
pulse_target = doublon
solver = exact
t_max = 0.3
save_stride = 100
r_values = 1
";
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.cfg", body);
    let out = mottsim()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let fidelity = summary["preparation"]["fidelity"].as_f64().unwrap();
    assert!(fidelity > 0.0 && fidelity <= 1.0);
}
