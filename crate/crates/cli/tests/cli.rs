use std::path::Path;
use std::process::{Command, Output};

fn se2lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_se2lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("SE2LAB_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn zero_paths_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = se2lab(dir.path(), &["kernel", "--method", "mc", "--paths", "0", "--Ns", "16", "--No", "8"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("kernel.skf").exists());
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["kernel", "--method", "nope"][..],
        &["kernel", "--unknown-flag"],
        &["kernel", "--case", "com", "--D", "1,0,0.1"],
        &["kernel", "--method", "mc", "--time-law", "weibull", "--Ns", "8", "--No", "4"],
        &["kernel", "--s", "big"],
        &["compare", "--exact", "missing.skf", "--approx", "also-missing.skf"],
    ] {
        let o = se2lab(dir.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = se2lab(
        dir.path(),
        &["kernel", "--method", "fd-explicit", "--dt", "10", "--alpha", "0.05", "--Ns", "16", "--No", "8"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn kernel_writes_field_image_and_manifest_and_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = se2lab(
        d,
        &[
            "kernel", "--method", "exact3", "--case", "enh", "--D", "1,0,0.08", "--alpha", "0.01", "--Ns", "24",
            "--No", "8", "--s", "auto", "--out", "a",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["a.skf", "a.pgm", "a.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("a.json")).unwrap()).unwrap();
    let s = manifest["command"]["kernel"]["model"]["s"].as_str().unwrap();
    assert_ne!(s, "auto");
    assert_eq!(manifest["resolved"]["grid"]["samples"], serde_json::json!([25, 25, 9]));

    let o = se2lab(d, &["rerun", "a.json", "--out", "b"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(d.join("a.skf")).unwrap(), std::fs::read(d.join("b.skf")).unwrap());
}

#[test]
fn monte_carlo_replay_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base =
        ["kernel", "--method", "mc", "--paths", "5000", "--alpha", "0.1", "--Ns", "16", "--No", "8", "--seed", "4"];
    let o = se2lab(d, &[&base[..], &["--threads", "1", "--out", "one"]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = se2lab(d, &["--threads", "3", "rerun", "one.json", "--out", "three"]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(d.join("one.skf")).unwrap(), std::fs::read(d.join("three.skf")).unwrap());
}

#[test]
fn compare_writes_report_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = se2lab(
        d,
        &[
            "compare",
            "--case",
            "com",
            "--methods",
            "fbt,mc",
            "--paths",
            "2000",
            "--alpha",
            "0.05",
            "--D",
            "0,0,0.18",
            "--Ns",
            "16",
            "--No",
            "8",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("t.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "case,method,K,domain,error_pct");
    assert_eq!(lines.len(), 1 + 2 * 4);
    assert!(lines[1].starts_with("com,fbt,1,spatial,"));
    assert!(d.join("t.json").exists());
}

#[test]
fn stored_kernels_can_be_compared() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (m, out) in [("exact3", "e"), ("fbt", "f")] {
        let o = se2lab(
            d,
            &["kernel", "--method", m, "--alpha", "0.05", "--D", "1,0,0.05", "--Ns", "16", "--No", "8", "--out", out],
        );
        assert_eq!(code(&o), 0);
    }
    let o = se2lab(d, &["compare", "--exact", "e.skf", "--approx", "f.skf,e.skf", "--out", "r.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("r.csv")).unwrap();
    // the reference against itself
    assert!(csv.lines().any(|l| l == "enh,e.skf,1,spatial,0.0000"));
}

#[test]
fn mathieu_table_at_zero_q_is_cosine_and_sine() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = se2lab(d, &["mathieu", "eval", "--a", "2.25", "--q", "0", "--z-to", "1", "--n", "5", "--out", "m.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("m.csv")).unwrap();
    let mut rows = csv.lines().skip(1).map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>());
    let first = rows.next().unwrap();
    let scale = first[1];
    for r in rows {
        let z = r[0];
        assert!((r[1] / scale - (1.5 * z).cos()).abs() < 1e-10, "{r:?}");
        // the sign of se follows the branch of the exponent
        assert!(((r[3] / scale).abs() - (1.5 * z).sin().abs()).abs() < 1e-10, "{r:?}");
    }
}

#[test]
fn asymptotics_table_is_close_at_high_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = se2lab(
        d,
        &[
            "asymptotics",
            "--D",
            "1,0,0.05",
            "--alpha",
            "0.05",
            "--rho-from",
            "2",
            "--rho-to",
            "10",
            "--n",
            "5",
            "--out",
            "a.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(d.join("a.csv")).unwrap();
    for l in csv.lines().skip(1) {
        let rel: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(rel < 0.1, "{l}");
    }
}

#[test]
fn orientation_score_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // smooth, band-limited test image
    let (rows, cols) = (17, 19);
    let mut text = String::new();
    for r in 0..rows {
        let line: Vec<String> = (0..cols)
            .map(|c| {
                let (x, y) = (c as f64 - 9.0, r as f64 - 8.0);
                format!("{:e}", (-(x * x + y * y) / 18.0).exp())
            })
            .collect();
        text += &(line.join(",") + "\n");
    }
    std::fs::write(d.join("in.csv"), text).unwrap();
    let o = se2lab(d, &["oscore", "transform", "--input", "in.csv", "--No", "8", "--out", "u"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = se2lab(d, &["oscore", "reconstruct", "--input", "u.skf", "--out", "back.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let read = |f: &str| -> Vec<f64> {
        std::fs::read_to_string(d.join(f))
            .unwrap()
            .split([',', '\n'])
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().unwrap())
            .collect()
    };
    let (a, b) = (read("in.csv"), read("back.csv"));
    assert_eq!(a.len(), b.len());
    let err: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(err < 1e-3 * norm, "{}", err / norm);

    let o = se2lab(d, &["oscore", "enhance", "--input", "in.csv", "--No", "8", "--out", "enh.pgm"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read(d.join("enh.pgm")).unwrap().starts_with(b"P5\n19 17\n65535\n"));
}

#[test]
fn completion_field_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = se2lab(
        d,
        &[
            "completion-field",
            "--case",
            "com",
            "--D",
            "0.08",
            "--alpha",
            "0.1",
            "--k",
            "2",
            "--paths",
            "2000",
            "--Ns",
            "24",
            "--No",
            "8",
            "--from=-4,0,0",
            "--to",
            "4,0,0",
            "--out",
            "cf",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("cf.skf").exists() && d.join("cf.pgm").exists() && d.join("cf.json").exists());
}
