use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn specsep(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specsep"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn single_tone_gives_one_peak() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("tone.json");
    fs::write(
        &truth,
        r#"{"dim": 1, "components": [{"amplitude_re": 2.0, "amplitude_im": 0.0, "freq": [0.7]}]}"#,
    )
    .unwrap();
    let o = specsep(&["recover-1d", "--truth", truth.to_str().unwrap(), "--n", "32"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let peaks = fs::read_to_string(dir.path().join("peaks.csv")).unwrap();
    let rows: Vec<&str> = peaks.lines().skip(1).collect();
    assert_eq!(rows.len(), 1, "{peaks}");
    let f: Vec<f64> = rows[0].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    assert!((f[0] - 0.7).abs() < 1e-4, "lambda {}", f[0]);
    assert!((f[1] - 2.0).abs() < 0.05, "amplitude {}", f[1]);
    assert!(dir.path().join("spectrum.svg").exists());
}

#[test]
fn synth_then_recover_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = specsep(&["synth", "--n", "4096"], dir.path());
    assert_eq!(code(&o), 0);
    let input = dir.path().join("samples.csv");
    let o = specsep(&["recover-1d", "--input", input.to_str().unwrap(), "--tau", "2.5", "--eta", "0.016"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let peaks = fs::read_to_string(dir.path().join("peaks.csv")).unwrap();
    assert_eq!(peaks.lines().count(), 4, "{peaks}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = specsep(&["recover-1d", "--bogus"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"trials": 2, "colour": "red"}"#).unwrap();
    let o = specsep(&["bench", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    fs::write(&cfg, r#"{"trials": 0}"#).unwrap();
    let o = specsep(&["bench", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
    let o = specsep(&["bench", "--scenario", "radar"], dir.path());
    assert_eq!(code(&o), 2);
    let o = specsep(&["recover-1d", "--input", "/nonexistent/samples.csv"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn bench_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = specsep(&["bench", "--snr", "-5,10", "--n", "4096", "--eta", "0.016", "--trials", "2"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("scenario,method,snr_db,size,total,recovered"));
    assert!(lines[1].starts_with("uni1d,localized,-5.0,"));
    for f in ["results.txt", "trials.csv", "rmse.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("rmse_std"));
}

#[test]
fn multivariate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let o = specsep(&["synth", "--scenario", "multi2d"], dir.path());
    assert_eq!(code(&o), 0);
    let (t, b) = (dir.path().join("truth.json"), dir.path().join("basis.json"));
    let o = specsep(
        &["recover-nd", "--truth", t.to_str().unwrap(), "--basis", b.to_str().unwrap(), "--snr", "20", "--trials", "1", "--tau", "35"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[2], "12");
    assert_eq!(row[3].parse::<f64>().unwrap(), 12.0);
    let points = fs::read_to_string(dir.path().join("points.csv")).unwrap();
    assert_eq!(points.lines().count(), 13);
}

#[test]
fn chirp_separation_on_iq_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = specsep(&["synth", "--scenario", "chirp"], dir.path());
    assert_eq!(code(&o), 0);
    let cfg = dir.path().join("chirp.json");
    fs::write(&cfg, r#"{"D": 400, "M": 4}"#).unwrap();
    let iq = dir.path().join("iq.csv");
    let o = specsep(&["chirp-sep", "--input", iq.to_str().unwrap(), "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let comps = fs::read_to_string(dir.path().join("components.csv")).unwrap();
    assert!(comps.starts_with("p,omega,B,d,gamma,rmse,status"));
    assert!(comps.lines().count() > 12, "{comps}");
    assert!(dir.path().join("diagram.csv").exists());
    assert!(dir.path().join("diagram.svg").exists());

    fs::write(&iq, "t,re,im\n0.0,1,0\n1e-9,1,0\n3e-9,1,0\n").unwrap();
    let o = specsep(&["chirp-sep", "--input", iq.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2);
}
