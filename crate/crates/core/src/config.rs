//! Run configuration read from TOML.
//!
//! Every section and key is optional and falls back to the built-in default.
//! Command-line overrides are applied on top of the file, so the precedence
//! is: command line, then file, then defaults.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::Scheme;
use crate::boundary::Spacing;
use crate::channel::{SystemParams, DEFAULT_LOS_ANGLE};
use crate::corner::DEFAULT_ETA_EPSILON;
use crate::error::{IsacError, Result};
use crate::linalg::c;
use crate::metrics::CrbMetric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSection {
    pub m_tx: usize,
    pub n_rx_sense: usize,
    pub n_rx_comm: usize,
    pub cpi_len: usize,
    pub power: f64,
    pub noise_comm: f64,
    pub noise_sense: f64,
    pub reflect_re: f64,
    pub reflect_im: f64,
    /// Target angle in units of π.
    pub target_angle_pi: f64,
    /// Use `inf` for a line-of-sight channel.
    pub rician_k: f64,
    /// Angle of the line-of-sight component in units of π.
    pub los_angle_pi: f64,
    pub seed: u64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let p = SystemParams::default();
        SystemSection {
            m_tx: p.m_tx,
            n_rx_sense: p.n_rx_sense,
            n_rx_comm: p.n_rx_comm,
            cpi_len: p.cpi_len,
            power: p.power,
            noise_comm: p.noise_comm,
            noise_sense: p.noise_sense,
            reflect_re: p.reflect_coeff.re,
            reflect_im: p.reflect_coeff.im,
            target_angle_pi: p.target_angle / PI,
            rician_k: p.rician_k,
            los_angle_pi: DEFAULT_LOS_ANGLE / PI,
            seed: p.seed,
        }
    }
}

impl SystemSection {
    pub fn params(&self) -> SystemParams {
        SystemParams {
            m_tx: self.m_tx,
            n_rx_sense: self.n_rx_sense,
            n_rx_comm: self.n_rx_comm,
            cpi_len: self.cpi_len,
            power: self.power,
            noise_comm: self.noise_comm,
            noise_sense: self.noise_sense,
            reflect_coeff: c(self.reflect_re, self.reflect_im),
            target_angle: self.target_angle_pi * PI,
            rician_k: self.rician_k,
            seed: self.seed,
        }
    }

    pub fn los_angle(&self) -> f64 {
        self.los_angle_pi * PI
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub scenarios: Vec<CrbMetric>,
    pub out: PathBuf,
    pub plot: bool,
    pub parallel: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { scenarios: CrbMetric::ALL.to_vec(), out: PathBuf::from("out"), plot: true, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub points: usize,
    pub spacing: Spacing,
    pub gamma_lo: Option<f64>,
    pub gamma_hi: Option<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { points: 50, spacing: Spacing::Log, gamma_lo: None, gamma_hi: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSection {
    pub time_switch: bool,
    pub split_ep: bool,
    pub split_sem: bool,
    pub knob_points: usize,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        BenchmarkSection { time_switch: true, split_ep: true, split_sem: true, knob_points: 101 }
    }
}

impl BenchmarkSection {
    pub fn enabled(&self) -> Vec<Scheme> {
        let mut v = Vec::new();
        if self.time_switch {
            v.push(Scheme::TimeSwitch);
        }
        if self.split_ep {
            v.push(Scheme::SplitEp);
        }
        if self.split_sem {
            v.push(Scheme::SplitSem);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrSection {
    pub scenario: CrbMetric,
    /// Threshold (`ln Γ` for `logdet`).
    pub gamma: f64,
    pub snr_lo_db: f64,
    pub snr_hi_db: f64,
    pub snr_step_db: f64,
}

impl Default for SnrSection {
    fn default() -> Self {
        SnrSection { scenario: CrbMetric::Trace, gamma: 0.1, snr_lo_db: 0.0, snr_hi_db: 40.0, snr_step_db: 1.0 }
    }
}

impl SnrSection {
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.snr_hi_db - self.snr_lo_db) / self.snr_step_db + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.snr_lo_db + i as f64 * self.snr_step_db).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerAllocSection {
    pub gamma_trace: f64,
    pub gamma_maxeig: f64,
    pub ln_gamma_logdet: f64,
    /// Common rate, in bits, of the matched-rate comparison.
    pub matched_rate: f64,
}

impl Default for PowerAllocSection {
    fn default() -> Self {
        PowerAllocSection { gamma_trace: 0.0152, gamma_maxeig: 8e-4, ln_gamma_logdet: -900.0, matched_rate: 26.5 }
    }
}

impl PowerAllocSection {
    pub fn gamma(&self, metric: CrbMetric) -> Option<f64> {
        match metric {
            CrbMetric::Trace => Some(self.gamma_trace),
            CrbMetric::MaxEig => Some(self.gamma_maxeig),
            CrbMetric::LogDet => Some(self.ln_gamma_logdet),
            CrbMetric::Point => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CornerSection {
    /// Perturbation of the point-target sensing corner when `n_rx_sense < m_tx`.
    pub eta_epsilon: f64,
}

impl Default for CornerSection {
    fn default() -> Self {
        CornerSection { eta_epsilon: DEFAULT_ETA_EPSILON }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub m_tx: usize,
    pub instances: u64,
    pub tolerance_bits: f64,
    pub diagonal_steps: usize,
    pub hermitian_steps: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { m_tx: 2, instances: 20, tolerance_bits: 1e-3, diagonal_steps: 2000, hermitian_steps: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub benchmarks: BenchmarkSection,
    pub rate_vs_snr: SnrSection,
    pub power_alloc: PowerAllocSection,
    pub corner: CornerSection,
    pub oracle: OracleSection,
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<CrbMetric>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| IsacError::Config(e.to_string()))?;
        cfg.validate().map_err(|(section, key, msg)| {
            let at = line_of(src, section, key).map_or(String::new(), |l| format!("line {l}: "));
            IsacError::Config(format!("{at}[{section}] {key}: {msg}"))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| IsacError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&src).map_err(|e| match e {
            IsacError::Config(msg) => IsacError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.scenario {
            self.run.scenarios = vec![s];
            self.rate_vs_snr.scenario = s;
        }
        if let Some(seed) = o.seed {
            self.system.seed = seed;
        }
        if let Some(n) = o.points {
            self.sweep.points = n;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        self.validate().map_err(|(section, key, msg)| IsacError::Config(format!("[{section}] {key}: {msg}")))
    }

    /// Serialized form of the effective configuration.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hash of the canonical form with the output directory left out, so the
    /// same run written to two places carries the same header.
    pub fn sha256(&self) -> String {
        let mut c = self.clone();
        c.run.out = PathBuf::new();
        let digest = Sha256::digest(c.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, &'static str, String)> {
        let s = &self.system;
        let bad = |section, key, msg: &str| Err((section, key, msg.to_string()));
        if s.m_tx < 2 {
            return bad("system", "m_tx", "must be > 1");
        }
        if s.n_rx_comm < 2 {
            return bad("system", "n_rx_comm", "must be > 1");
        }
        if s.n_rx_sense < 1 {
            return bad("system", "n_rx_sense", "must be >= 1");
        }
        if s.cpi_len <= s.m_tx {
            return bad("system", "cpi_len", "must exceed m_tx");
        }
        if !(s.power > 0.0 && s.power.is_finite()) {
            return bad("system", "power", "must be positive");
        }
        if !(s.noise_comm > 0.0) {
            return bad("system", "noise_comm", "must be positive");
        }
        if !(s.noise_sense > 0.0) {
            return bad("system", "noise_sense", "must be positive");
        }
        if !(s.rician_k >= 0.0) {
            return bad("system", "rician_k", "must be >= 0");
        }
        if self.run.scenarios.is_empty() {
            return bad("run", "scenarios", "must list at least one scenario");
        }
        if self.sweep.points == 0 {
            return bad("sweep", "points", "must be positive");
        }
        if self.benchmarks.knob_points == 0 {
            return bad("benchmarks", "knob_points", "must be positive");
        }
        let snr = &self.rate_vs_snr;
        if !(snr.snr_step_db > 0.0) || !(snr.snr_hi_db >= snr.snr_lo_db) {
            return bad("rate_vs_snr", "snr_step_db", "needs a positive step and snr_hi_db >= snr_lo_db");
        }
        if !snr.scenario.is_log() && !(snr.gamma > 0.0) {
            return bad("rate_vs_snr", "gamma", "must be positive");
        }
        if !(self.power_alloc.matched_rate > 0.0) {
            return bad("power_alloc", "matched_rate", "must be positive");
        }
        if !(self.corner.eta_epsilon > 0.0 && self.corner.eta_epsilon < 1.0) {
            return bad("corner", "eta_epsilon", "must lie in (0, 1)");
        }
        if !(self.oracle.tolerance_bits > 0.0) {
            return bad("oracle", "tolerance_bits", "must be positive");
        }
        if self.oracle.instances == 0 {
            return bad("oracle", "instances", "must be positive");
        }
        Ok(())
    }
}

/// 1-based line of `key = ...` inside `[section]`, if present.
fn line_of(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim();
        } else if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

/// Parses a scenario given by name or number (1 to 4).
pub fn parse_scenario(s: &str) -> Result<CrbMetric> {
    if let Ok(n) = s.parse::<u8>() {
        return CrbMetric::from_scenario(n).ok_or_else(|| IsacError::Config(format!("no scenario {n}")));
    }
    s.parse::<CrbMetric>().map_err(|_| IsacError::Config(format!("unknown scenario '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.system.params(), SystemParams::default());
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = RunConfig::from_toml_str("[system]\nm_tx = 4\nantennas = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("antennas"), "{err}");
    }

    #[test]
    fn invalid_value_points_to_its_line() {
        let err = RunConfig::from_toml_str("[system]\nm_tx = 4\n\ncpi_len = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 4: [system] cpi_len"), "{err}");
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = RunConfig::from_toml_str("[system]\nseed = 5\n[sweep]\npoints = 10\n").unwrap();
        let before = cfg.sha256();
        cfg.apply(&Overrides { scenario: Some(CrbMetric::MaxEig), seed: Some(9), points: None, out: None }).unwrap();
        assert_eq!(cfg.system.seed, 9);
        assert_eq!(cfg.sweep.points, 10);
        assert_eq!(cfg.run.scenarios, vec![CrbMetric::MaxEig]);
        assert_ne!(cfg.sha256(), before);
    }

    #[test]
    fn scenarios_by_name_or_number() {
        assert_eq!(parse_scenario("3").unwrap(), CrbMetric::MaxEig);
        assert_eq!(parse_scenario("logdet").unwrap(), CrbMetric::LogDet);
        assert!(parse_scenario("5").is_err());
        let cfg = RunConfig::from_toml_str("[run]\nscenarios = [\"point\", \"trace\"]\n").unwrap();
        assert_eq!(cfg.run.scenarios, vec![CrbMetric::Point, CrbMetric::Trace]);
    }

    #[test]
    fn snr_grid_is_inclusive() {
        let s = SnrSection { snr_lo_db: 0.0, snr_hi_db: 2.0, snr_step_db: 0.5, ..Default::default() };
        assert_eq!(s.grid(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
