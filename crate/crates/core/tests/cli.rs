use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_actuation-sim"))
}

fn run(args: &[&str]) -> std::process::Output {
    bin().args(args).output().expect("binary runs")
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dist");
    let o = run(&["disturbance", "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = read(&out.join("pd/run.csv"));
    assert!(csv.contains("# seed: 4"));
    assert!(csv.lines().any(|l| l.starts_with("t,setpoint_mm,")));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 8501);

    let metrics = read(&out.join("metrics.csv"));
    assert!(metrics.starts_with("run,metric,value\n"));
    assert!(metrics.contains("pd,velocity.recall,1.00000000e0"));

    let events = read(&out.join("events.csv"));
    assert!(events.starts_with("label,t_start,t_end,channel,peak\n"));
    assert!(events.lines().count() > 1);

    assert!(read(&out.join("config.toml")).contains("seed = 4"));
}

#[test]
fn echoed_config_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    let o = run(&[
        "beam-step",
        "--out",
        first.to_str().unwrap(),
        "--seed",
        "11",
        "--set",
        "controller.gains.kp=2.0",
        "--set",
        "sim.duration=3.0",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = first.join("config.toml");
    let o = run(&["beam-step", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let a = fs::read(first.join("pd/run.csv")).unwrap();
    let b = fs::read(second.join("pd/run.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(read(&echo), read(&second.join("config.toml")));
    assert_eq!(read(&first.join("metrics.csv")), read(&second.join("metrics.csv")));
}

#[test]
fn config_file_and_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[sim]\nduration = 0.5\n\n[controller.gains]\nkp = 3.0\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&[
        "beam-step",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "controller.gains.kd=0.01",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let echo = read(&out.join("config.toml"));
    assert!(echo.contains("kp = 3.0"));
    assert!(echo.contains("kd = 0.01"));
    let csv = read(&out.join("pd/run.csv"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 501);
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let bad_toml = dir.path().join("bad.toml");
    fs::write(&bad_toml, "[plant\nkt = 1").unwrap();
    let unknown_key = dir.path().join("unknown.toml");
    fs::write(&unknown_key, "[plant]\ntorque = 1.0\n").unwrap();

    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["fig9", "--out", out],
        vec!["step", "--bogus-flag"],
        vec!["step", "--config", "/nonexistent/x.toml", "--out", out],
        vec!["step", "--config", bad_toml.to_str().unwrap(), "--out", out],
        vec!["step", "--config", unknown_key.to_str().unwrap(), "--out", out],
        vec!["step", "--set", "sim.dt_low=-1", "--out", out],
        vec!["step", "--set", "no-equals-sign", "--out", out],
        vec!["step", "--set", "plant.kt=nan", "--out", out],
        vec!["step", "--seed", "-3", "--out", out],
        vec!["step", "--seed", "18446744073709551615", "--out", out],
    ];
    for args in cases {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(1), "args {args:?}");
        assert!(!o.stderr.is_empty(), "args {args:?} printed no diagnostic");
    }
    assert!(!Path::new(out).exists());
}

#[test]
fn run_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    // a tiny current limit can never produce a sustained oscillation
    let o = run(&["tune", "--set", "plant.current_limit=0.001", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no sustained oscillation"));
}

#[test]
fn help_exits_cleanly() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("--set"));
}
