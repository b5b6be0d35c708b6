//! End-to-end tests of the command line: parsing, exit codes, output files
//! and reproducibility.

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use bbm_cli::{run, Cli, RunConfig, EXIT_CONTRACT, EXIT_PASS, EXIT_USAGE};
use clap::Parser;

fn bbm(args: &[&str], env_seed: Option<&str>) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("bbm").chain(args.iter().copied());
    let code = run(argv, env_seed, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn resolve(args: &[&str], env_seed: Option<&str>) -> Result<RunConfig, bbm_cli::CliError> {
    let cli = Cli::try_parse_from(std::iter::once("bbm").chain(args.iter().copied())).unwrap();
    cli.command.flags().resolve(env_seed)
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn flags_build_a_supercritical_config() {
    let cfg = resolve(&["simulate", "--c", "1", "--r", "0.6", "--offspring", "dyadic"], None).unwrap();
    assert!(cfg.params().unwrap().regime().is_supercritical());
}

#[test]
fn pmf_flag_parses_the_law() {
    let cfg = resolve(&["simulate", "--c", "1", "--r", "1", "--offspring", "pmf:0.2,0,0.8"], None).unwrap();
    let law = cfg.params().unwrap().offspring().clone();
    assert_eq!(law.pmf(), &[0.2, 0.0, 0.8]);
    assert!((law.mu1() - 1.6).abs() < 1e-15);
}

#[test]
fn set_flag_parses_a_union() {
    let cfg = resolve(&["simulate", "--set", "0,1;2,inf"], None).unwrap();
    let sets = cfg.interval_sets().unwrap();
    assert_eq!(sets[0].intervals(), &[(0.0, 1.0), (2.0, f64::INFINITY)]);
}

#[test]
fn flags_override_file_and_env_overrides_seed() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "c = 1\nr = 0.6\noffspring = dyadic\nseed = 3\nset = 0,1\nhorizon = 4\n").unwrap();
    let p = path.to_str().unwrap();
    let cfg = resolve(&["simulate", "--config", p, "--r", "0.9", "--set", "1,inf"], None).unwrap();
    assert_eq!((cfg.c, cfg.r, cfg.horizon, cfg.seed), (Some(1.0), Some(0.9), Some(4.0), 3));
    assert_eq!(cfg.sets, vec!["1,inf".to_string()]);
    let cfg = resolve(&["simulate", "--config", p, "--seed", "8"], Some("21")).unwrap();
    assert_eq!(cfg.seed, 21);
}

#[test]
fn config_errors_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "c = 1\nwidth = 3\n").unwrap();
    let (code, _, err) = bbm(&["simulate", "--config", path.to_str().unwrap()], None);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("unknown key `width`"), "{err}");

    let cases = [
        ("pmf:0.2,0.7", None, "`pmf:0.2,0.7`"),
        ("dyadic", Some("1,1"), "`1,1`"),
        ("dyadic", Some("2,1"), "`2,1`"),
    ];
    let mut messages = Vec::new();
    for (law, set, token) in cases {
        let mut args = vec!["simulate", "--c", "1", "--r", "1", "--offspring", law];
        if let Some(s) = set {
            args.extend(["--set", s]);
        }
        let (code, _, err) = bbm(&args, None);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains(token), "{err}");
        messages.push(err);
    }
    assert!(messages[1].contains("empty interval") && messages[2].contains("lo >= hi"));
    let (code, _, _) = bbm(&["simulate", "--c", "1", "--r", "1"], None);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = bbm(&["nonsense"], None);
    assert_eq!(code, EXIT_USAGE);
    let (code, _, _) = bbm(&["simulate", "--format", "xml"], None);
    assert_eq!(code, EXIT_USAGE);
}

#[test]
fn help_exits_cleanly() {
    let (code, out, _) = bbm(&["--help"], None);
    assert_eq!(code, EXIT_PASS);
    assert!(out.contains("simulate"));
}

#[test]
fn moments_summary_holds_the_expected_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let (code, _, err) = bbm(
        &["moments", "--c", "1", "--r", "0.6", "--offspring", "dyadic", "--x0", "1", "--horizon", "1", "--out", &out],
        None,
    );
    assert_eq!(code, EXIT_PASS, "{err}");
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let row = summary
        .lines()
        .find(|l| l.starts_with("moments,expected_count,\"B=0,inf t=1\""))
        .unwrap();
    let value: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!((value - 0.604_757_583_383_247).abs() < 1e-14);
    assert!((value - 0.604_766).abs() < 1e-5);
    assert!(row.contains("6.0475758338324"));
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        vec![
            "simulate".to_string(),
            "--c=1".into(),
            "--r=1.5".into(),
            "--offspring=dyadic".into(),
            "--seed=42".into(),
            "--horizon=3".into(),
            "--replicates=50".into(),
            "--set=0,1;2,inf".into(),
            "--trunc-M=2".into(),
            format!("--out={}", d.display()),
        ]
    };
    let run_in = |d: &Path| {
        let argv: Vec<String> = std::iter::once("bbm".to_string()).chain(args(d)).collect();
        run(argv, None, &mut Vec::new(), &mut Vec::new())
    };
    assert_eq!(run_in(a.path()), EXIT_PASS);
    assert_eq!(run_in(b.path()), EXIT_PASS);
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(a.path(), "censuses.csv"), read(b.path(), "censuses.csv"));
    assert_eq!(read(a.path(), "summary.csv"), read(b.path(), "summary.csv"));
    let header = String::from_utf8(read(a.path(), "censuses.csv")).unwrap();
    assert!(header.starts_with("replicate,time,alive,absorbed,count_B1,D,D_trunc\n"));
}

#[test]
fn threads_do_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, threads) in [(a.path(), "1"), (b.path(), "3")] {
        let out = out_arg(d);
        let (code, _, _) = bbm(
            &["simulate", "--c", "1", "--r", "1.5", "--offspring", "dyadic", "--replicates", "40", "--threads", threads, "--out", &out],
            None,
        );
        assert_eq!(code, EXIT_PASS);
    }
    assert_eq!(fs::read(a.path().join("censuses.csv")).unwrap(), fs::read(b.path().join("censuses.csv")).unwrap());
}

#[test]
fn jsonl_records_echo_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let (code, _, _) = bbm(
        &["simulate", "--c", "1", "--r", "1.5", "--offspring", "dyadic", "--replicates", "4", "--format", "jsonl", "--out", &out],
        Some("77"),
    );
    assert_eq!(code, EXIT_PASS);
    assert!(!dir.path().join("censuses.csv").exists());
    let text = fs::read_to_string(dir.path().join("report.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0]["record"], "summary");
    for l in &lines {
        assert_eq!(l["config"]["seed"], 77);
        assert_eq!(l["config"]["offspring"], "dyadic");
    }
    assert_eq!(lines[1]["record"], "replicate");
    assert_eq!(lines[1]["status"], "completed");
}

#[test]
fn config_file_alone_drives_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("o");
    fs::write(
        &cfg,
        format!("c = 1\nr = 3\noffspring = dyadic\nx0 = 3\nhorizon = 2\nreplicates = 4\nout = {}\n", out.display()),
    )
    .unwrap();
    let (code, _, _) = bbm(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(code, EXIT_PASS);
    let text = fs::read_to_string(out.join("report.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.contains("\"status\":\"completed\"")));
}

#[test]
fn infeasible_horizon_exits_with_contract_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let (code, stdout, _) = bbm(
        &["martingale", "--c", "1", "--r", "3", "--offspring", "dyadic", "--horizon", "40", "--replicates", "5", "--out", &out],
        None,
    );
    assert_eq!(code, EXIT_CONTRACT);
    assert!(stdout.contains("infeasible"), "{stdout}");
    let text = fs::read_to_string(dir.path().join("report.jsonl")).unwrap();
    assert!(text.contains("\"passed\":false") && text.contains("\"infeasible\":\"expected population"));
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = format!("{}/sub", blocker.display());
    let (code, _, err) = bbm(&["schedule", "--out", &out], None);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("cannot write"), "{err}");
}

#[test]
fn schedule_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let (code, stdout, _) = bbm(&["schedule", "--k-max", "20000", "--delta", "2", "--out", &out], None);
    assert_eq!(code, EXIT_PASS, "{stdout}");
    let table = fs::read_to_string(dir.path().join("schedule.csv")).unwrap();
    assert_eq!(table.lines().count(), 20_000);
    let first: Vec<&str> = table.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[0], "2");
    assert!((first[3].parse::<f64>().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
    // k_max too small for the gaps to turn down
    let (code, _, _) = bbm(&["schedule", "--k-max", "100", "--out", &out], None);
    assert_eq!(code, EXIT_CONTRACT);
}

#[test]
fn verify_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let (code, stdout, _) = bbm(&["verify", "--c", "1", "--r", "0.6", "--offspring", "dyadic", "--out", &out], None);
    assert_eq!(code, EXIT_PASS, "{stdout}");
    let checks = fs::read_to_string(dir.path().join("checks.csv")).unwrap();
    assert!(checks.lines().skip(1).all(|l| l.contains(",true,")));
}

#[test]
fn binary_reports_exit_codes_and_reads_bbm_seed() {
    let exe = env!("CARGO_BIN_EXE_bbm");
    let dir = tempfile::tempdir().unwrap();
    let status = Process::new(exe).arg("frobnicate").output().unwrap().status;
    assert_eq!(status.code(), Some(EXIT_USAGE));
    let out = dir.path().join("s");
    let status = Process::new(exe)
        .args(["simulate", "--c", "1", "--r", "1.5", "--offspring", "dyadic", "--replicates", "3", "--format", "jsonl"])
        .arg("--out")
        .arg(&out)
        .env("BBM_SEED", "1234")
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(EXIT_PASS));
    let text = fs::read_to_string(out.join("report.jsonl")).unwrap();
    assert!(text.contains("\"seed\":1234"));
}
