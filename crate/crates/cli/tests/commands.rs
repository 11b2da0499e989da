use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use molmech_cli::parse_config_str;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_molmech"));
    c.env_remove("MOLMECH_WORKERS").env("RUST_LOG", "off");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

const STEADY: &str = r#"
[units]
gamma_over_2pi_MHz = 40.0

[phonon]
omega_b_in_gamma = 177.15
kappa_b_in_gamma = 1.6

[coupling]
g0_in_gamma = 1.0

[[tones]]
amplitude = 1.0
detuning = 0.0

[simulation]
cutoff = 4
"#;

#[test]
fn spectrum_writes_declared_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "fig2.toml", STEADY);
    let out = dir.path().join("out");
    let o = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--detuning-range",
        "-213:213:427",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out.join("spectrum.csv"));
    assert_eq!(h, ["detuning_gamma", "detuning_MHz", "pop_e", "pop_b"]);
    assert_eq!(rows.len(), 427);
    assert_eq!(num(&rows[0][0]), -213.0);
    assert_eq!(num(&rows[0][1]), -213.0 * 40.0);
    // Row 213 is Δ = 0; weakly perturbed two-level value Ω²/(1/4 + 2Ω²).
    assert!((num(&rows[213][2]) - 1.0 / 2.25).abs() < 1e-3);
    for r in &rows {
        assert_eq!(r.len(), 4);
        assert!(r[2].contains('e'), "nine significant digits in scientific form: {}", r[2]);
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "spectrum");
    assert_eq!(meta["rows"], 427);
    assert_eq!(meta["config"]["simulation"]["detuning_range"], "-213:213:427");
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(meta["physical"]["gamma_over_2pi_MHz"], 40.0);
    // The metadata copy of the configuration parses back to the same thing.
    let echoed = parse_config_str(meta["config_toml"].as_str().unwrap(), "meta").unwrap();
    let mut original = parse_config_str(STEADY, "orig").unwrap();
    original.simulation.detuning_range = Some("-213:213:427".into());
    assert_eq!(echoed, original);
}

#[test]
fn spectrum_cutoff_check_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", STEADY);
    let out = dir.path().join("o");
    let o = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--detuning-range",
        "-180:0:7",
        "--check-cutoff",
        "--out",
        out.to_str().unwrap(),
    ]);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    let conv = &meta["convergence"];
    assert_eq!(conv["report"]["cutoff"], 4);
    assert_eq!(conv["report"]["doubled_cutoff"], 8);
    let ok = conv["converged"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if ok { 0 } else { 2 }));
}

#[test]
fn estimate_reproduces_coupling_range() {
    let dir = tempfile::tempdir().unwrap();
    let mat = write(
        dir.path(),
        "dbt_ac.toml",
        "deformation_potential_over_2pi_THz = 1300.0\nyoung_modulus_Pa = 1e10\nmode_volume_um3 = 2.5e-4\n\
         mode_freq_GHz = 7.02\nstrain = [0.04, 0.12]\nQ = 1e8\n",
    );
    let out = dir.path().join("e");
    let o = run(&["estimate", "--material", mat.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out.join("estimate.csv"));
    assert_eq!(h[1], "g0_MHz");
    let lo = num(&rows[0][1]);
    let hi = num(&rows[1][1]);
    assert!((lo / 50.0 - 1.0).abs() < 0.05, "{lo}");
    assert!((hi / 150.0 - 1.0).abs() < 0.05, "{hi}");
    assert!((num(&rows[0][5]) / 2.27 - 1.0).abs() < 0.01);
    assert_eq!(num(&rows[0][6]), 0.0);
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["spectrum"]).status.code(), Some(1));
    assert_eq!(run(&["spectrum", "--config", "/nonexistent.toml"]).status.code(), Some(1));
    let bad = write(dir.path(), "bad.toml", &STEADY.replace("cutoff = 4", "cutof = 4"));
    let o = run(&["spectrum", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.toml:17"), "{err}");
    let o = run(&["spectrum", "--config", bad.to_str().unwrap(), "--detuning-range", "1:2"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn physics_failure_exits_2() {
    // An isolated phonon mode has no unique steady state.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "deg.toml",
        &STEADY.replace("kappa_b_in_gamma = 1.6", "kappa_b_in_gamma = 0.0").replace("g0_in_gamma = 1.0", "g0_in_gamma = 0.0"),
    );
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--detuning-range", "-1:1:3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

fn sweep_config(extra: &str) -> String {
    format!(
        "{STEADY}\n[sweep]\nparameter = \"tones[0].detuning\"\nrange = \"-180:4:24\"\ntarget = \"steady\"\n{extra}\n"
    )
}

#[test]
fn sweep_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.toml", &sweep_config(""));
    let mut outputs = Vec::new();
    for w in ["1", "3", "8"] {
        let out = dir.path().join(format!("w{w}"));
        let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--workers", w, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    // Environment fallback.
    let out = dir.path().join("env");
    let o = bin()
        .args(["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("MOLMECH_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(out.join("sweep.csv")).unwrap(), outputs[0]);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["workers"], 2);

    let (h, rows) = read_csv(&dir.path().join("w1").join("sweep.csv"));
    assert_eq!(
        h,
        ["index", "tones_0_detuning_gamma", "tones_0_detuning_MHz", "status", "pop_e", "pop_b", "message"]
    );
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| r[3] == "ok"));
}

#[test]
fn diverging_point_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let src = format!(
        "{STEADY}\n[sweep]\nparameter = \"phonon.kappa_b\"\nvalues = [1.6, 0.0, 1e-3]\ntarget = \"steady\"\n\
         overrides = {{ \"coupling.g0\" = 0.0 }}\n"
    );
    let cfg = write(dir.path(), "d.toml", &src);
    let out = dir.path().join("d");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--workers", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let (_, rows) = read_csv(&out.join("sweep.csv"));
    let status: Vec<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    assert_eq!(status, ["ok", "nonconverged", "ok"]);
    assert_eq!(rows[1][5], "nan");
    assert!(!rows[1][6].is_empty());
    // g0 = 0: the emitter alone.
    assert!((num(&rows[0][4]) - 1.0 / 2.25).abs() < 1e-8);
    assert_eq!(rows[0][4], rows[2][4]);

    let out = dir.path().join("ff");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--workers", "1", "--fail-fast", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let (_, rows) = read_csv(&out.join("sweep.csv"));
    let status: Vec<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    assert_eq!(status, ["ok", "nonconverged", "skipped"]);
}

const MEMORY: &str = r#"
[units]
gamma_over_2pi_MHz = 40.0

[phonon]
omega_b_in_gamma = 177.15
kappa_b_in_gamma = 1.6e-6

[coupling]
g0_in_gamma = 1.0

[simulation]
cutoff = 4

[memory]
tau_p_us = 5.3
n_signal = 0.04
m_write = 1.0
m_read = 1.57
"#;

#[test]
fn coupling_sweep_raises_write_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let mut last = [0.0; 2];
    for target in ["memory-analytic", "memory-meanfield"] {
        let src = format!("{MEMORY}\n[sweep]\nparameter = \"coupling.g0\"\nvalues = [0.25, 0.5, 1.0]\ntarget = \"{target}\"\n");
        let cfg = write(dir.path(), &format!("{target}.toml"), &src);
        let out = dir.path().join(target);
        let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let (h, rows) = read_csv(&out.join("sweep.csv"));
        let k = h.iter().position(|c| c == "eta_write").unwrap();
        let eta: Vec<f64> = rows.iter().map(|r| num(&r[k])).collect();
        assert_eq!(eta.len(), 3);
        assert!(eta[0] < eta[1] && eta[1] < eta[2], "{target}: {eta:?}");
        let m = h.iter().position(|c| c == "m_write").unwrap();
        // Fixed control amplitude: M scales as g0².
        assert!((num(&rows[0][m]) / num(&rows[2][m]) - 0.0625).abs() < 1e-12);
        last = [eta[2], last[0]];
    }
    assert!((last[1] - 0.40726).abs() < 1e-4);
}

#[test]
fn memory_command_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let src = r#"
[units]
gamma_over_2pi_MHz = 40.0

[phonon]
omega_b_in_gamma = 8.0
kappa_b_in_gamma = 0.05

[coupling]
g0_in_gamma = 0.5

[simulation]
cutoff = 3

[memory]
tau_p = 3.0
signal_amplitude = 0.1
control_write_amplitude = 2.0
control_read_amplitude = 2.5
storage_delay = 25.0
window_points = 101
gap_points = 11
delays = [7.0, 14.0]
"#;
    let cfg = write(dir.path(), "m.toml", src);
    let out = dir.path().join("m");
    let o = run(&["memory", "--config", cfg.to_str().unwrap(), "--baselines", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(
        h,
        [
            "time_gamma",
            "time_us",
            "pop_e",
            "pop_b",
            "pop_e_control_only",
            "pop_b_control_only",
            "pop_e_signal_only",
            "pop_b_signal_only",
            "pop_b_meanfield"
        ]
    );
    // Write window, gap, read window with shared end points.
    assert_eq!(rows.len(), 101 + 10 + 100);
    let eff: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("efficiency.json")).unwrap()).unwrap();
    let me = &eff["master_equation"];
    assert!(me["eta_write"].as_f64().unwrap() > 0.0);
    assert!(me["eta_read"].as_f64().unwrap() > 0.0);
    assert!(me["control_only_ratio"].as_f64().is_some());
    assert!(eff["meanfield"]["eta_write"].as_f64().unwrap() > 0.0);
    assert!(eff["analytic"]["m_write"].as_f64().unwrap() > 0.0);
    let (h, rows) = read_csv(&out.join("retrieval.csv"));
    assert_eq!(h[0], "delay_gamma");
    assert_eq!(rows.len(), 2);

    let out = dir.path().join("nb");
    let o = run(&["memory", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let eff: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("efficiency.json")).unwrap()).unwrap();
    assert!(eff["master_equation"]["eta_read"].is_null());
    let (h, _) = read_csv(&out.join("trajectory.csv"));
    assert_eq!(h.len(), 5);
}

#[test]
fn output_formats_respected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.toml", &format!("{STEADY}\n[output]\nformats = [\"csv\"]\n"));
    let out = dir.path().join("f");
    let o = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--detuning-range", "-1:1:3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("spectrum.csv").exists());
    assert!(!out.join("metadata.json").exists());
}
