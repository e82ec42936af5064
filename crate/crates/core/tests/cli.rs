use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac-cr"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn with_config(dir: &Path, toml: &str, args: &[&str]) -> Output {
    let path = dir.join("run.toml");
    fs::write(&path, toml).unwrap();
    let mut all = args.to_vec();
    let p = path.to_str().unwrap().to_string();
    all.extend(["--config", &p]);
    run(dir, &all)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn corner_rows_match_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["corner"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "corners.csv");
    assert!(text.starts_with("# isac-cr "));
    assert!(text.contains("# config_sha256: ") && text.contains("# seed: 1") && text.contains("# cpi_len: 200"));
    let rows = rows(&text);
    assert_eq!(rows.len(), 8);
    let get = |s: &str, k: &str| rows.iter().find(|r| r[0] == s && r[1] == k).unwrap().clone();
    // equal power P/M on every antenna: σ_s² N_s Σ 1/p, σ_s²/(L p), and the log-volume
    let (m, ns, l, p) = (8.0f64, 12.0, 200.0, 800.0);
    let trace: f64 = get("trace", "crb_min")[2].parse().unwrap();
    assert!((trace - ns * m * m / (l * p)).abs() < 1e-12 * trace);
    let maxeig: f64 = get("maxeig", "crb_min")[2].parse().unwrap();
    assert!((maxeig - m / (l * p)).abs() < 1e-12 * maxeig);
    // channel rank 6 < 8 leaves two modes dark under water-filling
    for s in ["trace", "maxeig", "logdet"] {
        assert_eq!(get(s, "rate_max")[2], "inf");
    }
    let point: f64 = get("point", "rate_max")[2].parse().unwrap();
    assert!(point.is_finite());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run(d.path(), &["boundary", "--scenario", "point", "--points", "6"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["boundary_point.csv", "plot_boundary_point.py"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert!(!a.path().join("boundary_trace.csv").exists());
}

#[test]
fn seed_changes_the_output_and_header() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path(), &["corner", "--scenario", "1"]);
    run(b.path(), &["corner", "--scenario", "1", "--seed", "2"]);
    let (ta, tb) = (read(a.path(), "corners.csv"), read(b.path(), "corners.csv"));
    assert!(tb.contains("# seed: 2"));
    let sha = |t: &str| t.lines().find(|l| l.starts_with("# config_sha256")).unwrap().to_string();
    assert_ne!(sha(&ta), sha(&tb));
}

#[test]
fn config_errors_report_the_line_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = with_config(dir.path(), "[system]\nm_tx = 4\n\n[sweep]\npoints = 0\n", &["boundary"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("points"), "{err}");

    let out = with_config(dir.path(), "[system]\nmtx = 4\n", &["corner"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mtx"));

    let out = run(dir.path(), &["corner", "--scenario", "nine"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_benchmark_set_writes_only_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[run]\nscenarios = [\"trace\"]\n\n[benchmarks]\ntime_switch = false\nsplit_ep = false\nsplit_sem = false\n";
    let out = with_config(dir.path(), toml, &["boundary", "--points", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&read(dir.path(), "boundary_trace.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[4] == "optimal"));
}

#[test]
fn time_switching_runs_on_a_full_rank_channel() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[system]\nm_tx = 6\nn_rx_comm = 6\nrician_k = 20.0\n\n[run]\nscenarios = [\"trace\"]\n\n[benchmarks]\nknob_points = 21\n";
    let out = with_config(dir.path(), toml, &["boundary", "--points", "5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "boundary_trace.csv");
    assert!(!text.contains("not applicable"), "{text}");
    let rows = rows(&text);
    assert!(rows.iter().any(|r| r[4] == "time_switch"));
    assert!(rows.iter().filter(|r| r[4] != "optimal").all(|r| r[3].is_empty()));

    // the default channel has rank 6 < 8, so time switching is skipped for extended targets
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["boundary", "--scenario", "trace", "--points", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(read(dir.path(), "boundary_trace.csv").contains("# time_switch: not applicable"));
}

#[test]
fn unreachable_threshold_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[rate_vs_snr]\nscenario = \"maxeig\"\ngamma = 1e-9\nsnr_lo_db = 0.0\nsnr_hi_db = 10.0\nsnr_step_db = 5.0\n";
    let out = with_config(dir.path(), toml, &["rate-vs-snr"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "rate_vs_snr.csv");
    assert!(rows(&text).iter().filter(|r| r[1] == "optimal").all(|r| r[3] == "infeasible"));

    // a sweep range below the attainable minimum is a parameter error instead
    let toml = "[run]\nscenarios = [\"maxeig\"]\n\n[sweep]\npoints = 3\ngamma_lo = 1e-9\ngamma_hi = 2e-9\n";
    let out = with_config(dir.path(), toml, &["boundary"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rate_vs_snr_marks_infeasible_low_snr() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[rate_vs_snr]\nscenario = \"trace\"\ngamma = 0.1\nsnr_lo_db = 0.0\nsnr_hi_db = 30.0\nsnr_step_db = 5.0\n";
    let out = with_config(dir.path(), toml, &["rate-vs-snr"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "rate_vs_snr.csv");
    assert!(text.contains("# feasibility_onset_db: "));
    let rows = rows(&text);
    let optimal: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "optimal").collect();
    assert_eq!(optimal.len(), 7);
    assert_eq!(optimal[0][3], "infeasible");
    assert!(optimal[0][2].is_empty());
    assert_eq!(optimal.last().unwrap()[3], "ok");
    // once feasible, the rate does not fall with SNR
    let rates: Vec<f64> = optimal.iter().filter(|r| r[3] == "ok").map(|r| r[2].parse().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn power_alloc_reports_matched_rate_designs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["power-alloc"]);
    assert_eq!(out.status.code(), Some(0));
    let text = read(dir.path(), "power_alloc_matched.csv");
    let sensing = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("# {name}: "))).unwrap();
        line.split("sensing_power=").nth(1).unwrap().parse().unwrap()
    };
    let (trace, maxeig, logdet) = (sensing("trace"), sensing("maxeig"), sensing("logdet"));
    assert!(maxeig > trace && maxeig > logdet, "{trace} {maxeig} {logdet}");
    let rows = rows(&text);
    assert_eq!(rows.len(), 8);
    for col in 1..4 {
        let total: f64 = rows.iter().map(|r| r[col].parse::<f64>().unwrap()).sum();
        assert!((total - 800.0).abs() < 1e-6 * 800.0);
    }
}

#[test]
fn oracle_check_passes_and_flags_a_perturbed_solver() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[oracle]\ninstances = 4\n";
    let out = with_config(dir.path(), toml, &["oracle-check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(dir.path(), "oracle_report.csv");
    assert!(text.contains("# overall: PASS"));
    assert_eq!(rows(&text).len(), 16);

    let out = with_config(dir.path(), toml, &["oracle-check", "--perturb-solver", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
    let text = read(dir.path(), "oracle_report.csv");
    assert!(text.contains("# overall: FAIL") && text.contains("# point: FAIL"));
}

#[test]
fn corner_epsilon_comes_from_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let toml = "[system]\nn_rx_sense = 4\n\n[run]\nscenarios = [\"point\"]\n\n[corner]\neta_epsilon = 1e-3\n";
    let out = with_config(dir.path(), toml, &["corner"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = rows(&read(dir.path(), "corners.csv"));
    let eta: f64 = rows.iter().find(|r| r[1] == "crb_min").unwrap()[4].parse().unwrap();
    // fewer sensing than transmit antennas: the corner is only approached, at 1 - ε
    assert!((eta - (1.0 - 1e-3)).abs() < 1e-12);

    let out = with_config(dir.path(), "[corner]\neta_epsilon = 0.0\n", &["corner"]);
    assert_eq!(out.status.code(), Some(2));
}
