use std::fs;
use std::path::Path;

use pfft_core::cli::{parse_and_run, CSV_COLUMNS};

fn run(args: &[&str]) -> i32 {
    parse_and_run(std::iter::once("pfft-sim").chain(args.iter().copied()))
}

fn small_args(out: &Path) -> Vec<String> {
    [
        "--subcarriers",
        "64",
        "--taps",
        "4",
        "--pilots",
        "8",
        "--snr",
        "10,20",
        "--doppler",
        "0.0002",
        "--subblocks",
        "4",
        "--algorithm",
        "single-fft,eigen,adaptive",
        "--mu",
        "0.001",
        "--blocks",
        "5",
        "--seed",
        "9",
        "--out",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([out.display().to_string()])
    .collect()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines()
        .filter(|l| !l.starts_with('#') && *l != CSV_COLUMNS)
        .collect()
}

#[test]
fn writes_self_describing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ber.csv");
    let args = small_args(&out);
    assert_eq!(run(&args.iter().map(String::as_str).collect::<Vec<_>>()), 0);

    let text = fs::read_to_string(&out).unwrap();
    assert!(text.lines().any(|l| l == CSV_COLUMNS));
    for key in [
        "tool",
        "seed",
        "subcarriers",
        "snr",
        "algorithm",
        "bit_mapping",
        "snr_convention",
    ] {
        assert!(
            text.lines().any(|l| l.starts_with(&format!("# {key} = "))),
            "missing {key}"
        );
    }
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6);
    for row in &rows {
        assert_eq!(row.split(',').count(), 13);
    }
    assert!(rows[0].contains(",single-fft,,"));
}

#[test]
fn header_reproduces_rows() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let args = small_args(&first);
    assert_eq!(run(&args.iter().map(String::as_str).collect::<Vec<_>>()), 0);
    let text = fs::read_to_string(&first).unwrap();

    let config: String = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = dir.path().join("replay.cfg");
    fs::write(&cfg, config).unwrap();
    let second = dir.path().join("second.csv");
    let code = run(&["--config", cfg.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(data_rows(&text), data_rows(&fs::read_to_string(&second).unwrap()));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "subcarriers = 64\ntaps = 2\npilots = 8\nsubblocks = 2\nblocks = 3\nsnr = 5\n",
    )
    .unwrap();
    let out = dir.path().join("o.csv");
    let code = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--snr",
        "15",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# snr = 15\n"));
    assert!(data_rows(&text).iter().all(|r| r.starts_with("15,")));
}

#[test]
fn rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let out = out.to_str().unwrap();
    assert_ne!(run(&["--bogus"]), 0);
    assert_ne!(run(&["--config", "/nonexistent/run.cfg", "--out", out]), 0);
    assert_ne!(run(&["--subblocks", "3", "--out", out]), 0);
    assert_ne!(run(&["--algorithm", "kalman", "--out", out]), 0);
    assert_ne!(run(&["--preset", "fig9", "--out", out]), 0);

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "subcarriers = 64\nwidth = 3\n").unwrap();
    assert_ne!(run(&["--config", cfg.to_str().unwrap(), "--out", out]), 0);
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(run(&["--help"]), 0);
}
