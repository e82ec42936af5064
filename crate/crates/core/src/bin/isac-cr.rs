use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac_cr::cli::{cmd_boundary, cmd_corner, cmd_oracle_check, cmd_power_alloc, cmd_rate_vs_snr, error_exit_code};
use isac_cr::config::{parse_scenario, Overrides, RunConfig};
use isac_cr::metrics::CrbMetric;
use isac_cr::Result;

/// CRB-versus-rate Pareto boundaries for MIMO sensing and communication.
#[derive(Parser)]
#[command(name = "isac-cr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-maximizing and CRB-minimizing corner points.
    Corner(Common),
    /// Optimal Pareto boundary plus benchmark envelopes.
    Boundary(Common),
    /// Rate versus SNR at a fixed CRB threshold.
    RateVsSnr(Common),
    /// Per-subchannel power of the extended-target designs.
    PowerAlloc(Common),
    /// Compares the solvers with brute-force search on small instances.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        /// Bits added to every solver rate before comparison.
        #[arg(long, hide = true, default_value_t = 0.0)]
        perturb_solver: f64,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario name (point, trace, maxeig, logdet) or number 1-4.
    #[arg(long, value_parser = scenario_arg)]
    scenario: Option<CrbMetric>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of CRB thresholds in a sweep.
    #[arg(long)]
    points: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn scenario_arg(s: &str) -> std::result::Result<CrbMetric, String> {
    parse_scenario(s).map_err(|e| e.to_string())
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        scenario: common.scenario,
        seed: common.seed,
        points: common.points,
        out: common.out.clone(),
    })?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    let report = match &cli.command {
        Command::Corner(c) => cmd_corner(&load(c)?)?,
        Command::Boundary(c) => cmd_boundary(&load(c)?)?,
        Command::RateVsSnr(c) => cmd_rate_vs_snr(&load(c)?)?,
        Command::PowerAlloc(c) => cmd_power_alloc(&load(c)?)?,
        Command::OracleCheck { common, perturb_solver } => cmd_oracle_check(&load(common)?, *perturb_solver)?,
    };
    for f in &report.files {
        println!("{}", f.display());
    }
    Ok(report.status.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
