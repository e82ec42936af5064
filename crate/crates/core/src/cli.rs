//! Experiment commands behind the `isac-cr` binary: each reads a
//! [`RunConfig`], runs the computation and writes CSV files (plus optional
//! matplotlib scripts) into the output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::benchmarks::{default_knob_grid, Scheme};
use crate::boundary::{
    benchmark_sweep, feasibility_onset, gamma_for_rate, pareto_sweep, rate_vs_snr, solve_scenario, PointStatus,
    RateCurve, SweepSpec,
};
use crate::channel::{rician_channel, ChannelSet, SystemParams};
use crate::config::RunConfig;
use crate::corner::{crb_min_corner, crb_min_value, crb_at_rate_max, rate_max_waterfill, waterfill_powers};
use crate::error::{IsacError, Result};
use crate::metrics::CrbMetric;
use crate::oracle::{grid_oracle_diagonal, grid_oracle_hermitian, interior_gamma, random_instance};
use crate::outcome::SolveStatus;
use crate::solver_extended::solve_allocation;

/// Overall result of a command, mapped onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    OracleMismatch,
    InfeasibleEverywhere,
    MaxIterations,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::OracleMismatch => 1,
            RunStatus::InfeasibleEverywhere => 3,
            RunStatus::MaxIterations => 4,
        }
    }
}

/// Exit code for an error raised before or during a command.
pub fn error_exit_code(err: &IsacError) -> i32 {
    match err {
        IsacError::Config(_) | IsacError::InvalidParams(_) => 2,
        IsacError::Infeasible { .. } => 3,
        _ => 1,
    }
}

#[derive(Debug, Clone)]
pub struct CommandReport {
    pub files: Vec<PathBuf>,
    pub status: RunStatus,
}

/// 17 significant digits, `inf`/`-inf`/`nan` for non-finite values.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// CSV text with a `#` header block.
struct CsvDoc {
    header: Vec<String>,
    columns: String,
    body: String,
}

impl CsvDoc {
    fn new(cfg: &RunConfig, columns: &str) -> Self {
        let header = vec![
            format!("isac-cr {}", env!("CARGO_PKG_VERSION")),
            format!("config_sha256: {}", cfg.sha256()),
            format!("seed: {}", cfg.system.seed),
            format!("cpi_len: {}", cfg.system.cpi_len),
        ];
        CsvDoc { header, columns: columns.to_string(), body: String::new() }
    }

    fn meta(&mut self, line: &str) {
        self.header.push(line.to_string());
    }

    fn row(&mut self, fields: &[String]) {
        self.body.push_str(&fields.join(","));
        self.body.push('\n');
    }

    fn text(&self) -> String {
        let mut text = String::new();
        for h in &self.header {
            let _ = writeln!(text, "# {h}");
        }
        let _ = writeln!(text, "{}", self.columns);
        text + &self.body
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.text())
    }
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.run.out.clone();
    fs::create_dir_all(&out).map_err(|source| IsacError::Io { path: out.clone(), source })?;
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| IsacError::Io { path: path.to_path_buf(), source })
}

/// Parameters and channel described by the config.
pub fn setup(cfg: &RunConfig) -> Result<(SystemParams, ChannelSet)> {
    let params = cfg.system.params();
    params.validate()?;
    let ch = rician_channel(&params, cfg.system.los_angle(), cfg.system.los_angle());
    Ok((params, ch))
}

pub fn cmd_corner(cfg: &RunConfig) -> Result<CommandReport> {
    let (params, ch) = setup(cfg)?;
    let out = prepare_out(cfg)?;
    let mut doc = CsvDoc::new(cfg, "scenario,kind,gamma,rate,eta,trace_q");
    doc.meta(&format!("channel_rank: {}", ch.rank_r));
    for &metric in &cfg.run.scenarios {
        let corners = [rate_max_waterfill(&ch, &params, metric), crb_min_corner(&ch, &params, metric, cfg.corner.eta_epsilon)];
        for c in corners {
            doc.row(&[
                metric.name().into(),
                c.kind.name().into(),
                fmt_num(c.crb),
                fmt_num(c.rate),
                fmt_opt(c.eta),
                fmt_num(c.q.trace()),
            ]);
        }
    }
    let path = out.join("corners.csv");
    doc.write(&path)?;
    Ok(CommandReport { files: vec![path], status: RunStatus::Ok })
}

pub fn cmd_boundary(cfg: &RunConfig) -> Result<CommandReport> {
    let (params, ch) = setup(cfg)?;
    let out = prepare_out(cfg)?;
    let knobs = default_knob_grid(cfg.benchmarks.knob_points);
    let mut files = Vec::new();
    let mut status = RunStatus::Ok;
    let mut any_point = false;
    for &metric in &cfg.run.scenarios {
        let spec = SweepSpec {
            metric,
            n_points: cfg.sweep.points,
            spacing: cfg.sweep.spacing,
            gamma_lo: cfg.sweep.gamma_lo,
            gamma_hi: cfg.sweep.gamma_hi,
            parallel: cfg.run.parallel,
        };
        let sweep = pareto_sweep(&spec, &ch, &params)?;
        let mut doc = CsvDoc::new(cfg, "gamma,rate,crb_achieved,active,scheme");
        doc.meta(&format!("scenario: {metric}"));
        doc.meta(&format!(
            "sweep: lo={} hi={} capped={} dropped={}",
            fmt_num(sweep.range.lo),
            fmt_num(sweep.range.hi),
            sweep.range.capped,
            sweep.dropped
        ));
        any_point |= !sweep.points.is_empty();
        for p in &sweep.points {
            if p.status == SolveStatus::MaxIterations {
                status = RunStatus::MaxIterations;
            }
            doc.row(&[
                fmt_num(p.gamma),
                fmt_num(p.rate),
                fmt_num(p.crb_achieved),
                u8::from(p.constraint_active).to_string(),
                p.scheme.name().into(),
            ]);
        }
        let mut drawn = vec![Scheme::Optimal];
        for scheme in cfg.benchmarks.enabled() {
            match benchmark_sweep(scheme, metric, &ch, &params, &knobs) {
                Ok(points) => {
                    if scheme == Scheme::TimeSwitch {
                        doc.meta("time_switch: CRB evaluated at the time-averaged covariance");
                    }
                    drawn.push(scheme);
                    for p in points {
                        doc.row(&[fmt_num(p.gamma), fmt_num(p.rate), fmt_num(p.crb_achieved), String::new(), scheme.name().into()]);
                    }
                }
                Err(IsacError::NotApplicable(why)) => {
                    info!("{scheme} skipped for {metric}: {why}");
                    doc.meta(&format!("{scheme}: not applicable ({why})"));
                }
                Err(e) => return Err(e),
            }
        }
        let path = out.join(format!("boundary_{}.csv", metric.name()));
        doc.write(&path)?;
        files.push(path);
        if cfg.run.plot {
            let script = out.join(format!("plot_boundary_{}.py", metric.name()));
            write_text(&script, &boundary_plot_script(metric, &drawn))?;
            files.push(script);
        }
    }
    if !any_point && status == RunStatus::Ok {
        status = RunStatus::InfeasibleEverywhere;
    }
    Ok(CommandReport { files, status })
}

pub fn cmd_rate_vs_snr(cfg: &RunConfig) -> Result<CommandReport> {
    let (params, ch) = setup(cfg)?;
    let out = prepare_out(cfg)?;
    let snr = &cfg.rate_vs_snr;
    let grid = snr.grid();
    let rows = rate_vs_snr(snr.scenario, &ch, &params, snr.gamma, &grid, &cfg.benchmarks.enabled())?;
    let mut doc = CsvDoc::new(cfg, "snr_db,scheme,rate,status");
    doc.meta(&format!("scenario: {}", snr.scenario));
    doc.meta(&format!("gamma: {}", fmt_num(snr.gamma)));
    let onset = feasibility_onset(snr.scenario, &params, snr.gamma, &grid);
    doc.meta(&format!("feasibility_onset_db: {}", fmt_opt(onset)));
    let mut status = RunStatus::Ok;
    let mut feasible = false;
    for r in &rows {
        if r.curve == RateCurve::Optimal {
            feasible |= r.status != PointStatus::Infeasible;
            if r.status == PointStatus::MaxIterations {
                status = RunStatus::MaxIterations;
            }
        }
        doc.row(&[fmt_num(r.snr_db), r.curve.name().into(), fmt_opt(r.rate), r.status.name().into()]);
    }
    if !feasible {
        status = RunStatus::InfeasibleEverywhere;
    }
    let path = out.join("rate_vs_snr.csv");
    doc.write(&path)?;
    let mut files = vec![path];
    if cfg.run.plot {
        let script = out.join("plot_rate_vs_snr.py");
        write_text(&script, RATE_VS_SNR_PLOT)?;
        files.push(script);
    }
    Ok(CommandReport { files, status })
}

/// Per-subchannel powers of the optimal designs at the configured thresholds,
/// and at thresholds that give every design the rate of the trace design.
pub fn cmd_power_alloc(cfg: &RunConfig) -> Result<CommandReport> {
    let (params, ch) = setup(cfg)?;
    let out = prepare_out(cfg)?;
    let m = ch.m();
    let (wf, _) = waterfill_powers(&ch, &params);
    let equal = vec![params.power / m as f64; m];
    let mut status = RunStatus::Ok;

    let mut allocs = Vec::new();
    for metric in CrbMetric::EXTENDED {
        let gamma = cfg.power_alloc.gamma(metric).expect("extended metric");
        let alloc = solve_allocation(&ch, &params, metric, gamma);
        if alloc.is_none() {
            warn!("{metric}: threshold {gamma:e} is infeasible");
        }
        allocs.push((metric, gamma, alloc));
    }
    if allocs.iter().all(|a| a.2.is_none()) {
        status = RunStatus::InfeasibleEverywhere;
    }
    let mut doc = CsvDoc::new(cfg, "subchannel,waterfill,equal_power,trace,maxeig,logdet");
    doc.meta(&format!("channel_rank: {}", ch.rank_r));
    for (metric, gamma, alloc) in &allocs {
        let rate = alloc.as_ref().map(|a| crate::metrics::rate_diag(&a.p, &ch.zeta_sq(), params.noise_comm));
        doc.meta(&format!("{metric}: gamma={} rate={}", fmt_num(*gamma), fmt_opt(rate)));
    }
    for k in 0..m {
        let mut row = vec![(k + 1).to_string(), fmt_num(wf[k]), fmt_num(equal[k])];
        row.extend(allocs.iter().map(|(_, _, a)| fmt_opt(a.as_ref().map(|a| a.p[k]))));
        doc.row(&row);
    }
    let path = out.join("power_alloc.csv");
    doc.write(&path)?;
    let mut files = vec![path];

    let matched = matched_rate_allocations(&ch, &params, cfg.power_alloc.matched_rate);
    let mut doc = CsvDoc::new(cfg, "subchannel,trace,maxeig,logdet");
    match &matched {
        Some(mr) => {
            doc.meta(&format!("matched_rate: {}", fmt_num(mr.rate)));
            for (metric, gamma, p) in &mr.allocations {
                let sensing = sensing_power(&ch, p);
                doc.meta(&format!("{metric}: gamma={} sensing_power={}", fmt_num(*gamma), fmt_num(sensing)));
            }
            for k in 0..m {
                let mut row = vec![(k + 1).to_string()];
                row.extend(mr.allocations.iter().map(|(_, _, p)| fmt_num(p[k])));
                doc.row(&row);
            }
        }
        None => doc.meta(&format!(
            "matched_rate: {} unreachable by at least one design",
            fmt_num(cfg.power_alloc.matched_rate)
        )),
    }
    let path = out.join("power_alloc_matched.csv");
    doc.write(&path)?;
    files.push(path);
    if cfg.run.plot {
        let script = out.join("plot_power_alloc.py");
        write_text(&script, POWER_ALLOC_PLOT)?;
        files.push(script);
    }
    Ok(CommandReport { files, status })
}

/// Extended-target allocations that all reach the same rate.
#[derive(Debug, Clone)]
pub struct MatchedRate {
    pub rate: f64,
    /// `(metric, threshold, powers)` in `CrbMetric::EXTENDED` order.
    pub allocations: Vec<(CrbMetric, f64, Vec<f64>)>,
}

/// Thresholds at which every extended-target design reaches `target` bits.
pub fn matched_rate_allocations(ch: &ChannelSet, params: &SystemParams, target: f64) -> Option<MatchedRate> {
    let mut allocations = Vec::new();
    for metric in CrbMetric::EXTENDED {
        let gamma = gamma_for_rate(metric, ch, params, target)?;
        allocations.push((metric, gamma, solve_allocation(ch, params, metric, gamma)?.p));
    }
    Some(MatchedRate { rate: target, allocations })
}

/// Power on subchannels the communication receiver cannot see.
pub fn sensing_power(ch: &ChannelSet, p: &[f64]) -> f64 {
    p.iter().skip(ch.rank_r).sum()
}

/// One solver-versus-oracle comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleComparison {
    pub metric: CrbMetric,
    pub instance: u64,
    pub gamma: f64,
    pub solver_rate: f64,
    /// `None` when no oracle applies at this antenna count.
    pub oracle_rate: Option<f64>,
}

impl OracleComparison {
    pub fn deviation(&self) -> Option<f64> {
        self.oracle_rate.map(|o| (self.solver_rate - o).abs())
    }
}

/// Solver against brute force on `count` random instances per scenario.
/// `perturbation` is added to every solver rate; the checker must flag it.
pub fn oracle_comparisons(
    metrics: &[CrbMetric],
    m: usize,
    count: u64,
    diagonal_steps: usize,
    hermitian_steps: usize,
    perturbation: f64,
) -> Vec<OracleComparison> {
    let jobs: Vec<(CrbMetric, u64)> = metrics.iter().flat_map(|&k| (0..count).map(move |i| (k, i))).collect();
    jobs.par_iter()
        .map(|&(metric, instance)| {
            let (params, ch) = random_instance(instance, m);
            let lo = crb_min_value(&params, metric);
            let hi = crb_at_rate_max(&ch, &params, metric);
            let gamma = interior_gamma(metric, lo, hi, 0.2 + 0.03 * instance as f64 % 0.75);
            let solver_rate = solve_scenario(metric, &ch, &params, gamma).rate + perturbation;
            let oracle_rate = match (metric, m) {
                (CrbMetric::Point, 2) => Some(grid_oracle_hermitian(&ch, &params, metric, gamma, hermitian_steps).best_rate),
                (CrbMetric::Point, _) => None,
                _ => Some(grid_oracle_diagonal(&ch, &params, metric, gamma, diagonal_steps).best_rate),
            };
            OracleComparison { metric, instance, gamma, solver_rate, oracle_rate }
        })
        .collect()
}

pub fn cmd_oracle_check(cfg: &RunConfig, perturbation: f64) -> Result<CommandReport> {
    let oc = &cfg.oracle;
    if !(2..=3).contains(&oc.m_tx) {
        return Err(IsacError::Config(format!("[oracle] m_tx: oracle checks need 2 or 3 antennas, got {}", oc.m_tx)));
    }
    let out = prepare_out(cfg)?;
    let steps = if oc.m_tx == 3 { oc.diagonal_steps.min(600) } else { oc.diagonal_steps };
    let rows = oracle_comparisons(&cfg.run.scenarios, oc.m_tx, oc.instances, steps, oc.hermitian_steps, perturbation);
    let mut doc = CsvDoc::new(cfg, "scenario,instance,gamma,solver_rate,oracle_rate,deviation,result");
    let mut failed = false;
    for &metric in &cfg.run.scenarios {
        let worst = rows
            .iter()
            .filter(|r| r.metric == metric)
            .filter_map(|r| r.deviation())
            .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.max(d))));
        let verdict = match worst {
            None => "skipped".to_string(),
            Some(w) if w <= oc.tolerance_bits => format!("PASS max_deviation={}", fmt_num(w)),
            Some(w) => {
                failed = true;
                format!("FAIL max_deviation={}", fmt_num(w))
            }
        };
        doc.meta(&format!("{metric}: {verdict}"));
    }
    doc.meta(&format!("tolerance_bits: {}", fmt_num(oc.tolerance_bits)));
    doc.meta(&format!("overall: {}", if failed { "FAIL" } else { "PASS" }));
    for r in &rows {
        let result = match r.deviation() {
            None => "skipped",
            Some(d) if d <= oc.tolerance_bits => "pass",
            Some(_) => "fail",
        };
        doc.row(&[
            r.metric.name().into(),
            r.instance.to_string(),
            fmt_num(r.gamma),
            fmt_num(r.solver_rate),
            fmt_opt(r.oracle_rate),
            fmt_opt(r.deviation()),
            result.into(),
        ]);
    }
    let path = out.join("oracle_report.csv");
    doc.write(&path)?;
    let status = if failed { RunStatus::OracleMismatch } else { RunStatus::Ok };
    Ok(CommandReport { files: vec![path], status })
}

fn boundary_plot_script(metric: CrbMetric, schemes: &[Scheme]) -> String {
    let xscale = if metric.is_log() { "linear" } else { "log" };
    let xlabel = if metric.is_log() { "ln CRB" } else { "CRB" };
    let names: Vec<String> = schemes.iter().map(|s| format!("\"{}\"", s.name())).collect();
    format!(
        r##"import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "boundary_{name}.csv"
curves = {{}}
with open(path) as f:
    rows = csv.DictReader(line for line in f if not line.startswith("#"))
    for r in rows:
        curves.setdefault(r["scheme"], []).append((float(r["gamma"]), float(r["rate"])))

fig, ax = plt.subplots()
for scheme in [{schemes}]:
    pts = sorted(curves.get(scheme, []))
    if pts:
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="." if scheme != "optimal" else None, label=scheme)
ax.set_xscale("{xscale}")
ax.set_xlabel("{xlabel}")
ax.set_ylabel("rate (bits/s/Hz)")
ax.set_title("{name}")
ax.legend()
ax.grid(True, which="both", alpha=0.3)
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"##,
        name = metric.name(),
        schemes = names.join(", "),
    )
}

const RATE_VS_SNR_PLOT: &str = r##"import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "rate_vs_snr.csv"
curves = {}
with open(path) as f:
    rows = csv.DictReader(line for line in f if not line.startswith("#"))
    for r in rows:
        if r["status"] in ("ok", "max_iterations"):
            curves.setdefault(r["scheme"], []).append((float(r["snr_db"]), float(r["rate"])))

fig, ax = plt.subplots()
for scheme, pts in curves.items():
    style = "--" if scheme in ("crb_min", "rate_max") else "-"
    ax.plot([p[0] for p in pts], [p[1] for p in pts], style, label=scheme)
ax.set_xlabel("SNR (dB)")
ax.set_ylabel("rate (bits/s/Hz)")
ax.legend()
ax.grid(True, alpha=0.3)
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"##;

const POWER_ALLOC_PLOT: &str = r##"import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "power_alloc.csv"
with open(path) as f:
    rows = list(csv.DictReader(line for line in f if not line.startswith("#")))
columns = [c for c in rows[0].keys() if c != "subchannel"]
k = [int(r["subchannel"]) for r in rows]
width = 0.8 / len(columns)

fig, ax = plt.subplots()
for i, col in enumerate(columns):
    vals = [float(r[col]) if r[col] else 0.0 for r in rows]
    ax.bar([x + (i - len(columns) / 2) * width for x in k], vals, width, label=col)
ax.set_xlabel("subchannel")
ax.set_ylabel("power")
ax.legend()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
"##;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(-0.125), "-1.2500000000000000e-1");
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn header_block_precedes_columns() {
        let cfg = RunConfig::default();
        let mut doc = CsvDoc::new(&cfg, "a,b");
        doc.meta("extra: 1");
        doc.row(&["1".into(), "2".into()]);
        let text = doc.text();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[..5].iter().all(|l| l.starts_with("# ")));
        assert_eq!(lines[4], "# extra: 1");
        assert_eq!(lines[5], "a,b");
        assert_eq!(lines[6], "1,2");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(error_exit_code(&IsacError::Config("x".into())), 2);
        assert_eq!(RunStatus::InfeasibleEverywhere.exit_code(), 3);
        assert_eq!(RunStatus::MaxIterations.exit_code(), 4);
        assert_eq!(RunStatus::OracleMismatch.exit_code(), 1);
    }
}
