use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cryodec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cryodec")).args(args).output().expect("binary runs")
}

fn run_in(out: &Path, args: &[&str]) -> Output {
    let mut all = vec!["--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    cryodec(&all)
}

fn ok(out: &Path, args: &[&str]) {
    let o = run_in(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_csv(path: PathBuf) -> Vec<Vec<String>> {
    std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn shipped_config() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml").to_string()
}

#[test]
fn power_report_reproduces_measured_rows() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--config", &shipped_config(), "power-report"]);
    let text = std::fs::read_to_string(dir.path().join("power.csv")).unwrap();
    assert_eq!(
        text,
        "name,p_1v8,p_3v3,total\n1.2K,3.2e-3,10.2e-3,13.4e-3\n4.2K,3.3e-3,10.9e-3,14.2e-3\n\
         35K,3.4e-3,10.9e-3,14.3e-3\n300K,3.4e-3,11.9e-3,15.3e-3\n"
    );
}

#[test]
fn program_sweep_shape() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed", "3", "program-sweep"]);
    let rows = read_csv(dir.path().join("program_sweep.csv"));
    assert_eq!(rows.len(), 200);
    let mean: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(rows[..100].iter().all(|r| r[1] == "-") && rows[100..].iter().all(|r| r[1] == "+"));
    assert!(mean[..100].windows(2).all(|w| w[1] <= w[0]), "depression not monotone");
    assert!(mean[100..].windows(2).all(|w| w[1] >= w[0]), "potentiation not monotone");
    assert!(mean[99] < mean[0] && mean[199] > mean[100]);
    assert!(rows.iter().any(|r| r[3].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn program_sweep_without_noise_has_zero_spread() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("quiet.toml");
    std::fs::write(&cfg, "[device]\nsigma_c2c = 0.0\nsigma_read = 0.0\n").unwrap();
    ok(dir.path(), &["--config", cfg.to_str().unwrap(), "program-sweep"]);
    let rows = read_csv(dir.path().join("program_sweep.csv"));
    assert!(rows.iter().all(|r| r[3] == "0"));
}

#[test]
fn sigmoid_sweep_properties() {
    let dir = tempfile::tempdir().unwrap();
    let slope = |preset: &str| {
        ok(dir.path(), &["sigmoid-sweep", "--preset", preset]);
        let rows: Vec<(f64, f64)> = read_csv(dir.path().join("sigmoid.csv"))
            .iter()
            .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
            .collect();
        assert_eq!(rows.len(), 1001);
        assert_eq!(rows[0].0, -500e-6);
        assert_eq!(rows[1000].0, 500e-6);
        assert!(rows.windows(2).all(|w| w[1].1 > w[0].1), "{preset} not strictly increasing");
        assert_eq!(rows[500], (0.0, 0.9));
        (rows[501].1 - rows[499].1) / (rows[501].0 - rows[499].0)
    };
    assert!(slope("1.2K") > slope("300K"));
}

#[test]
fn pulse_run_shows_recurrence_only_when_enabled() {
    let dir = tempfile::tempdir().unwrap();
    let recurrent_in = |extra: &[&str]| -> Vec<f64> {
        let mut args = extra.to_vec();
        args.extend(["pulse-run", "--pattern", "11,01"]);
        ok(dir.path(), &args);
        read_csv(dir.path().join("trace.csv"))
            .iter()
            .filter(|r| r[0] == "1" && r[1] == "i_recurrent_in")
            .map(|r| r[3].parse().unwrap())
            .collect()
    };
    assert!(recurrent_in(&[]).iter().any(|&i| i != 0.0));
    let cfg = dir.path().join("norec.toml");
    std::fs::write(&cfg, "[circuit]\nrecurrence_enabled = false\n").unwrap();
    assert!(recurrent_in(&["--config", cfg.to_str().unwrap()]).iter().all(|&i| i == 0.0));
    let wave = std::fs::read_to_string(dir.path().join("waveform.csv")).unwrap();
    assert!(wave.starts_with("time_s,signal,value\n"));
}

#[test]
fn exit_codes_and_single_line_errors() {
    let dir = tempfile::tempdir().unwrap();
    let check = |args: &[&str], code: i32, needle: &str| {
        let o = run_in(dir.path(), args);
        assert_eq!(o.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.contains(needle), "{err}");
    };
    check(&["pulse-run", "--pattern", ""], 1, "error[usage]");
    check(&["pulse-run", "--pattern", "11,2x"], 1, "2x");
    check(&["no-such-command"], 1, "error[usage]");
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[crossbar]\nk = 9e-5\nshceme = \"balanced\"\n").unwrap();
    check(&["--config", bad.to_str().unwrap(), "power-report"], 2, ":3:");
    check(&["--config", bad.to_str().unwrap(), "power-report"], 2, "shceme");
    check(&["sigmoid-sweep", "--preset", "10K"], 2, "10K");
    check(&["qec", "train"], 3, "dataset.csv");
    check(&["qec", "compile"], 3, "weights.csv");
    check(&["qec", "eval", "--decoder", "hardware"], 3, "crossbar_input.csv");
    let o = run_in(dir.path(), &["power-report"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stderr.is_empty());
}

#[test]
fn oracle_eval_has_zero_rate() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["qec", "eval", "--decoder", "oracle", "--trials", "300", "--p", "0.1", "--q", "0.05"]);
    let rows = read_csv(dir.path().join("eval.csv"));
    assert_eq!(rows, vec![vec!["oracle", "0.1", "0.05", "300", "0", "0", rows[0][6].as_str()]]);
}

#[test]
fn qec_chain_at_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for step in ["gen", "train", "compile", "eval"] {
        ok(dir.path(), &["--seed", "11", "qec", step]);
    }
    let rows = read_csv(dir.path().join("eval.csv"));
    let names: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(names, ["constant0", "lookup", "surrogate", "hardware"]);
    for r in &rows {
        let (ler, lo, hi): (f64, f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap(), r[6].parse().unwrap());
        assert!(lo <= ler && ler <= hi, "{r:?}");
        assert_eq!(r[3], "10000");
    }
    let ler = |i: usize| rows[i][4].parse::<f64>().unwrap();
    assert!(ler(1) < ler(0), "lookup should beat constant0");
    assert!(ler(2) < ler(0), "trained surrogate should beat constant0");
}
