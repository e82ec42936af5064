//! Pareto boundary sweeps over the CRB threshold, and rate versus SNR.

use std::fmt;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{benchmark_boundary, benchmark_points, default_knob_grid, Scheme};
use crate::channel::{ChannelSet, SystemParams};
use crate::corner::{crb_at_rate_max, crb_min_corner, crb_min_value, rate_max_waterfill, DEFAULT_ETA_EPSILON};
use crate::error::{IsacError, Result};
use crate::metrics::CrbMetric;
use crate::outcome::{Duals, SolveOutcome, SolveStatus};
use crate::solver_extended::{solve_extended, ExtendedSolverOptions};
use crate::solver_point::solve_p1;

/// Sweep range multiplier used when the rate-optimal CRB is infinite.
pub const SWEEP_CAP_FACTOR: f64 = 1e3;
/// Relative offset of the first grid point above the minimum CRB.
pub const SWEEP_LO_OFFSET: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    /// Threshold (`ln Γ` for `LogDet`).
    pub gamma: f64,
    pub rate: f64,
    pub crb_achieved: f64,
    pub constraint_active: bool,
    pub metric: CrbMetric,
    pub scheme: Scheme,
    pub status: SolveStatus,
}

impl ParetoPoint {
    pub fn scenario(&self) -> u8 {
        self.metric.scenario()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSpec {
    pub metric: CrbMetric,
    pub n_points: usize,
    pub spacing: Spacing,
    pub gamma_lo: Option<f64>,
    pub gamma_hi: Option<f64>,
    /// Solve grid points on the rayon pool.
    pub parallel: bool,
}

impl SweepSpec {
    pub fn new(metric: CrbMetric, n_points: usize) -> Self {
        SweepSpec { metric, n_points, spacing: Spacing::Log, gamma_lo: None, gamma_hi: None, parallel: false }
    }
}

/// Grid bounds after defaults are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRange {
    pub lo: f64,
    pub hi: f64,
    /// The upper end was capped because the rate-optimal CRB is infinite.
    pub capped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub points: Vec<ParetoPoint>,
    pub range: SweepRange,
    pub dropped: usize,
}

/// `(CRB_min, CRB at the rate-optimal covariance)`; the second may be `+∞`.
pub fn feasibility_range(metric: CrbMetric, ch: &ChannelSet, params: &SystemParams) -> (f64, f64) {
    (crb_min_value(params, metric), crb_at_rate_max(ch, params, metric))
}

/// Upper end used when the rate-optimal CRB is infinite. For `LogDet` this
/// scales every eigenvalue of the CRB matrix by the cap factor.
pub fn capped_gamma(metric: CrbMetric, params: &SystemParams, crb_min: f64) -> f64 {
    if metric.is_log() {
        crb_min + (params.m_tx * params.n_rx_sense) as f64 * SWEEP_CAP_FACTOR.ln()
    } else {
        crb_min * SWEEP_CAP_FACTOR
    }
}

pub fn sweep_range(spec: &SweepSpec, ch: &ChannelSet, params: &SystemParams) -> Result<SweepRange> {
    let metric = spec.metric;
    let (crb_min, crb_max) = feasibility_range(metric, ch, params);
    if !crb_min.is_finite() {
        return Err(IsacError::NotApplicable(format!("{metric} CRB is unbounded for every covariance")));
    }
    let lo_default = if metric.is_log() { crb_min + SWEEP_LO_OFFSET.ln_1p() } else { crb_min * (1.0 + SWEEP_LO_OFFSET) };
    let lo = spec.gamma_lo.unwrap_or(lo_default);
    let (hi, capped) = match spec.gamma_hi {
        Some(h) => (h, false),
        None if crb_max.is_finite() => (crb_max, false),
        None => (capped_gamma(metric, params, crb_min), true),
    };
    let hi = hi.max(lo);
    if lo.is_nan() || hi.is_nan() {
        return Err(IsacError::InvalidParams("sweep bounds are NaN".into()));
    }
    if !metric.is_log() && lo <= 0.0 {
        return Err(IsacError::InvalidParams(format!("gamma_lo {lo} must be positive")));
    }
    if metric.is_log() && lo < crb_min || !metric.is_log() && lo < crb_min * (1.0 - 1e-12) {
        return Err(IsacError::InvalidParams(format!("gamma_lo {lo} is below the minimum CRB {crb_min}")));
    }
    Ok(SweepRange { lo, hi, capped })
}

/// `n` grid values from `lo` to `hi`. `LogDet` thresholds are already
/// logarithms and are always spaced linearly.
pub fn gamma_grid(lo: f64, hi: f64, n: usize, spacing: Spacing, metric: CrbMetric) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![lo];
    }
    let log = spacing == Spacing::Log && !metric.is_log();
    let (a, b) = if log { (lo.ln(), hi.ln()) } else { (lo, hi) };
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                let x = a + (b - a) * i as f64 / (n - 1) as f64;
                if log {
                    x.exp()
                } else {
                    x
                }
            }
        })
        .collect()
}

/// Optimal solver for the scenario of `metric`.
pub fn solve_scenario(metric: CrbMetric, ch: &ChannelSet, params: &SystemParams, gamma: f64) -> SolveOutcome {
    match metric {
        CrbMetric::Point => solve_p1(ch, params, gamma),
        _ => solve_extended(ch, params, metric, gamma, &ExtendedSolverOptions::default()),
    }
}

/// Whether the CRB constraint binds, read off the dual variables.
pub fn constraint_active(out: &SolveOutcome) -> bool {
    match out.duals {
        Duals::Point { alpha, nu, .. } => alpha + nu > 0.0,
        Duals::Extended { mu, .. } => mu > 0.0,
        Duals::None => false,
    }
}

pub fn pareto_sweep(spec: &SweepSpec, ch: &ChannelSet, params: &SystemParams) -> Result<SweepResult> {
    params.validate()?;
    if spec.n_points == 0 {
        return Err(IsacError::InvalidParams("n_points must be positive".into()));
    }
    let range = sweep_range(spec, ch, params)?;
    if range.capped {
        info!("{} sweep capped at {:e}: the rate-optimal CRB is infinite", spec.metric, range.hi);
    }
    let grid = gamma_grid(range.lo, range.hi, spec.n_points, spec.spacing, spec.metric);
    let solve = |&g: &f64| solve_scenario(spec.metric, ch, params, g);
    let outcomes: Vec<SolveOutcome> =
        if spec.parallel { grid.par_iter().map(solve).collect() } else { grid.iter().map(solve).collect() };

    let r_max = rate_max_waterfill(ch, params, spec.metric).rate;
    let mut points: Vec<ParetoPoint> = Vec::with_capacity(outcomes.len());
    let mut dropped = 0;
    for out in outcomes {
        if out.status == SolveStatus::Infeasible {
            warn!("{} sweep: gamma {:e} infeasible, dropped", spec.metric, out.gamma);
            dropped += 1;
            continue;
        }
        let active = constraint_active(&out);
        let mut p = ParetoPoint {
            gamma: out.gamma,
            rate: if active { out.rate } else { r_max },
            crb_achieved: out.achieved_crb(),
            constraint_active: active,
            metric: spec.metric,
            scheme: Scheme::Optimal,
            status: out.status,
        };
        // A design that meets a tighter threshold also meets this one.
        if let Some(prev) = points.last() {
            if p.rate < prev.rate {
                p.rate = prev.rate;
                p.crb_achieved = prev.crb_achieved;
            }
        }
        points.push(p);
    }
    Ok(SweepResult { points, range, dropped })
}

/// Upper envelope of a benchmark, expressed as Pareto points.
pub fn benchmark_sweep(
    scheme: Scheme,
    metric: CrbMetric,
    ch: &ChannelSet,
    params: &SystemParams,
    knob_grid: &[f64],
) -> Result<Vec<ParetoPoint>> {
    Ok(benchmark_boundary(scheme, ch, params, metric, knob_grid)?
        .into_iter()
        .map(|b| ParetoPoint {
            gamma: b.crb,
            rate: b.rate,
            crb_achieved: b.crb,
            constraint_active: true,
            metric,
            scheme,
            status: SolveStatus::Optimal,
        })
        .collect())
}

/// Threshold at which the optimal rate reaches `target`, by bisection on the
/// threshold (the optimal rate is non-decreasing in it). `None` when `target`
/// is not below the water-filling rate.
pub fn gamma_for_rate(metric: CrbMetric, ch: &ChannelSet, params: &SystemParams, target: f64) -> Option<f64> {
    let r_max = rate_max_waterfill(ch, params, metric).rate;
    if !(target < r_max) {
        return None;
    }
    let crb_min = crb_min_value(params, metric);
    let rate_at = |g: f64| solve_scenario(metric, ch, params, g).rate;
    // work in a coordinate where the threshold grows geometrically
    let (to_gamma, mut lo, mut hi): (Box<dyn Fn(f64) -> f64>, f64, f64) = if metric.is_log() {
        (Box::new(|x| x), crb_min, crb_min + 1.0)
    } else {
        (Box::new(|x: f64| x.exp()), crb_min.ln(), crb_min.ln() + 1.0)
    };
    if rate_at(to_gamma(lo)) >= target {
        return Some(to_gamma(lo));
    }
    let mut step = 1.0;
    while rate_at(to_gamma(hi)) < target {
        lo = hi;
        step *= 2.0;
        hi += step;
        if step > 1e4 {
            return None;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate_at(to_gamma(mid)) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(to_gamma(hi))
}

/// Curves of the rate-versus-SNR comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateCurve {
    Optimal,
    /// Rate of the CRB-minimizing design.
    LowerBound,
    /// Rate of the water-filling design.
    UpperBound,
    Benchmark(Scheme),
}

impl RateCurve {
    pub fn name(self) -> &'static str {
        match self {
            RateCurve::Optimal => "optimal",
            RateCurve::LowerBound => "crb_min",
            RateCurve::UpperBound => "rate_max",
            RateCurve::Benchmark(s) => s.name(),
        }
    }
}

impl fmt::Display for RateCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointStatus {
    Ok,
    Infeasible,
    MaxIterations,
    NotApplicable,
}

impl PointStatus {
    pub fn name(self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Infeasible => "infeasible",
            PointStatus::MaxIterations => "max_iterations",
            PointStatus::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub curve: RateCurve,
    /// `None` unless the status is `Ok` or `MaxIterations`.
    pub rate: Option<f64>,
    pub status: PointStatus,
}

/// Rate versus `SNR = P/σ_c²` at a fixed threshold, for the optimal design,
/// the two corner designs and the requested benchmarks (best feasible knob).
pub fn rate_vs_snr(
    metric: CrbMetric,
    ch: &ChannelSet,
    params: &SystemParams,
    gamma: f64,
    snr_grid_db: &[f64],
    benchmarks: &[Scheme],
) -> Result<Vec<SnrPoint>> {
    params.validate()?;
    let knobs = default_knob_grid(101);
    let rows: Vec<Vec<SnrPoint>> = snr_grid_db
        .par_iter()
        .map(|&snr_db| {
            let p = params.with_power(params.noise_comm * 10f64.powf(snr_db / 10.0));
            let mut rows = Vec::with_capacity(3 + benchmarks.len());
            let out = solve_scenario(metric, ch, &p, gamma);
            let status = match out.status {
                SolveStatus::Optimal => PointStatus::Ok,
                SolveStatus::Infeasible => PointStatus::Infeasible,
                SolveStatus::MaxIterations => PointStatus::MaxIterations,
            };
            let rate = (status != PointStatus::Infeasible).then_some(out.rate);
            rows.push(SnrPoint { snr_db, curve: RateCurve::Optimal, rate, status });

            let feasible = satisfies(metric, crb_min_value(&p, metric), gamma);
            let lower = crb_min_corner(ch, &p, metric, DEFAULT_ETA_EPSILON);
            rows.push(if feasible {
                SnrPoint { snr_db, curve: RateCurve::LowerBound, rate: Some(lower.rate), status: PointStatus::Ok }
            } else {
                SnrPoint { snr_db, curve: RateCurve::LowerBound, rate: None, status: PointStatus::Infeasible }
            });
            let upper = rate_max_waterfill(ch, &p, metric);
            rows.push(SnrPoint { snr_db, curve: RateCurve::UpperBound, rate: Some(upper.rate), status: PointStatus::Ok });

            for &scheme in benchmarks {
                let curve = RateCurve::Benchmark(scheme);
                let row = match benchmark_points(scheme, ch, &p, metric, &knobs) {
                    Err(IsacError::NotApplicable(_)) => {
                        SnrPoint { snr_db, curve, rate: None, status: PointStatus::NotApplicable }
                    }
                    Err(e) => return Err(e),
                    Ok(pts) => {
                        let best = pts
                            .iter()
                            .filter(|b| satisfies(metric, b.crb, gamma))
                            .map(|b| b.rate)
                            .fold(f64::NEG_INFINITY, f64::max);
                        if best.is_finite() {
                            SnrPoint { snr_db, curve, rate: Some(best), status: PointStatus::Ok }
                        } else {
                            SnrPoint { snr_db, curve, rate: None, status: PointStatus::Infeasible }
                        }
                    }
                };
                rows.push(row);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn satisfies(metric: CrbMetric, crb: f64, gamma: f64) -> bool {
    if metric.is_log() {
        crb <= gamma + 1e-9 * gamma.abs().max(1.0)
    } else {
        crb <= gamma * (1.0 + 1e-9)
    }
}

/// Smallest grid SNR at which the minimum CRB meets `gamma`.
pub fn feasibility_onset(metric: CrbMetric, params: &SystemParams, gamma: f64, snr_grid_db: &[f64]) -> Option<f64> {
    snr_grid_db
        .iter()
        .copied()
        .filter(|&s| {
            let p = params.with_power(params.noise_comm * 10f64.powf(s / 10.0));
            satisfies(metric, crb_min_value(&p, metric), gamma)
        })
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.min(s))))
}
