use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn cosim(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cosim"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .current_dir(dir)
        .env("COSIM_THREADS", "2")
        .output()
        .unwrap()
}

fn config(dir: &Path, body: &str, out: &str) -> String {
    let out = dir.join(out);
    format!(r#"{{ {body}, "output_path": {} }}"#, serde_json::to_string(&out).unwrap())
}

/// Header plus rows, skipping `#` comment lines.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_writes_a_trace_that_reads_back_exactly() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), r#""model": "TOUGH_TIME_ONLY", "macro_dt": 0.25, "t_end": 0.25"#, "tough.csv");
    let o = cosim(dir.path(), &["run"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "");
    let (header, rows) = read_csv(&dir.path().join("tough.csv"));
    assert_eq!(header, ["time", "tough.y0", "iterations"]);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][0], 0.25);
    assert!((rows[1][1] - 2.0 * 0.25f64.sin()).abs() < 1e-9);
    let text = std::fs::read_to_string(dir.path().join("tough.csv")).unwrap();
    assert!(!text.contains('\r'));
    for line in text.lines().skip(1) {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(format!("{v:.16e}"), line.split(',').nth(1).unwrap());
    }
}

#[test]
fn several_modes_and_the_reference_get_their_own_files() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        r#""model": "LV_CLASSIC", "mode": ["ROLLBACK", "COSTARICA_SSR"], "macro_dt": 0.1, "t_end": 0.5"#,
        "lv.csv",
    );
    let o = cosim(dir.path(), &["run", "--reference"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["lv_ROLLBACK.csv", "lv_COSTARICA_SSR.csv"] {
        let (header, rows) = read_csv(&dir.path().join(name));
        assert_eq!(header, ["time", "prey.y0", "predator.y0", "iterations"]);
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().skip(1).all(|r| r[3] >= 1.0));
    }
    let (header, rows) = read_csv(&dir.path().join("lv_reference.csv"));
    assert_eq!(header, ["time", "prey.x0", "predator.x0"]);
    assert_eq!(rows.len(), 6);
    assert!(!dir.path().join("lv.csv").exists());
}

#[test]
fn mode_flag_overrides_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), r#""model": "LV_CLASSIC", "mode": ["ROLLBACK", "COSTARICA"], "macro_dt": 0.1, "t_end": 0.2"#, "o.csv");
    let o = cosim(dir.path(), &["run", "--mode", "COSTARICA_SSR"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("o.csv").exists());
    assert!(!dir.path().join("o_ROLLBACK.csv").exists());
}

#[test]
fn empty_horizon_gives_a_header_only_file() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), r#""model": "MECH_TWO_BODY", "macro_dt": 1.0, "t_end": 0.0"#, "empty.csv");
    let o = cosim(dir.path(), &["run"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("empty.csv")).unwrap();
    assert_eq!(text, "time,left.y0,left.y1,right.y0,iterations\n");
}

#[test]
fn bad_configurations_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        r#"{"model": "LV_CLASSIC", "macro_dt": 0.1, "colour": 1}"#,
        r#"{"model": "LV_CLASSIC", "macro_dt": 0.1, "stehfest_N": 7}"#,
        r#"{"model": "NOPE", "macro_dt": 0.1}"#,
        r#"{"model": "LV_CLASSIC", "dt_list": [0.1, 0.05, 0.05, 0.01]}"#,
        r#"{"model": "LV_CLASSIC"}"#,
        "not json",
    ];
    for (i, c) in cases.iter().enumerate() {
        let cmd = if i == 3 { "convergence" } else { "run" };
        let o = cosim(dir.path(), &[cmd], c);
        assert_eq!(o.status.code(), Some(2), "{c}: {}", stderr(&o));
        assert_eq!(stdout(&o), "");
    }
    let o = cosim(dir.path(), &["steperror"], r#"{"model": "MECH_TWO_BODY"}"#);
    assert_eq!(o.status.code(), Some(2));
    let o = cosim(dir.path(), &["run", "--mode", "FAST"], r#"{"model": "LV_CLASSIC", "macro_dt": 0.1}"#);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_tolerance_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), r#""model": "LV_CLASSIC", "macro_dt": 0.1, "epsilon": 1e-30, "max_iters": 4"#, "x.csv");
    let o = cosim(dir.path(), &["run", "--mode", "ROLLBACK"], &cfg);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("last reached time: 0.0000000000000000e0"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_with_1() {
    let dir = TempDir::new().unwrap();
    let missing: PathBuf = dir.path().join("no/such/dir");
    let cfg = config(&missing, r#""model": "TOUGH_TIME_ONLY", "macro_dt": 0.5"#, "t.csv");
    let o = cosim(dir.path(), &["run"], &cfg);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn convergence_prints_only_slope_lines() {
    let dir = TempDir::new().unwrap();
    let cfg = config(
        dir.path(),
        r#""model": "LV_CLASSIC", "mode": ["ROLLBACK", "COSTARICA"], "t_end": 2.0, "dt_list": [0.2, 0.1, 0.05, 0.025]"#,
        "conv.csv",
    );
    let o = cosim(dir.path(), &["convergence", "--micro-dt", "1e-4"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    for (line, mode) in lines.iter().zip(["ROLLBACK", "COSTARICA"]) {
        let rest = line.strip_prefix(&format!("{mode} slope ")).unwrap();
        let slope: f64 = rest.parse().unwrap();
        assert!(slope > 1.0, "{line}");
        let text = std::fs::read_to_string(dir.path().join(format!("conv_{mode}.csv"))).unwrap();
        assert!(text.starts_with("# dt grid: "));
        let (header, rows) = read_csv(&dir.path().join(format!("conv_{mode}.csv")));
        assert_eq!(header, ["dt", "error", "iterations_mean"]);
        assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), [0.2, 0.1, 0.05, 0.025]);
    }
}

#[test]
fn steperror_prints_the_slope() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), r#""model": "LV_CLASSIC", "dt_list": [0.1, 0.05, 0.02, 0.01]"#, "se.csv");
    let o = cosim(dir.path(), &["steperror", "--micro-dt", "1e-4"], &cfg);
    assert!(o.status.success(), "{}", stderr(&o));
    let slope: f64 = stdout(&o).trim().strip_prefix("steperror slope ").unwrap().parse().unwrap();
    assert!((2.6..3.4).contains(&slope), "{slope}");
    let (header, rows) = read_csv(&dir.path().join("se.csv"));
    assert_eq!(header, ["dt", "error"]);
    assert_eq!(rows.len(), 4);
}
