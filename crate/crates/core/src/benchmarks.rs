//! Comparison schemes: time switching between the two corner designs, and
//! power splitting between communication and sensing subchannels with equal
//! power (EP) or strongest-eigenmode (SEM) data transmission.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SystemParams};
use crate::corner::{crb_min_corner, rate_max_waterfill, CornerPoint, DEFAULT_ETA_EPSILON};
use crate::error::{IsacError, Result};
use crate::linalg::from_basis_diag;
use crate::metrics::{crb, crb_extended_from_eigs, rate_diag, CrbMetric, TransmitCovariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Optimal,
    TimeSwitch,
    SplitEp,
    SplitSem,
}

impl Scheme {
    pub const BENCHMARKS: [Scheme; 3] = [Scheme::TimeSwitch, Scheme::SplitEp, Scheme::SplitSem];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Optimal => "optimal",
            Scheme::TimeSwitch => "time_switch",
            Scheme::SplitEp => "split_ep",
            Scheme::SplitSem => "split_sem",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self> {
        [Scheme::Optimal, Scheme::TimeSwitch, Scheme::SplitEp, Scheme::SplitSem]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| IsacError::Config(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchmarkCurvePoint {
    pub scheme: Scheme,
    /// Time fraction of the rate-optimal design, or the power splitting factor.
    pub knob: f64,
    pub crb: f64,
    pub rate: f64,
}

/// `(frac·Q_c + (1-frac)·Q_s)` for the CRB, and the time-shared rate.
/// The CRB is evaluated at the averaged covariance for every scenario.
pub fn time_switching(
    q_rate: &CornerPoint,
    q_crb: &CornerPoint,
    frac: f64,
    metric: CrbMetric,
    params: &SystemParams,
) -> Result<BenchmarkCurvePoint> {
    if !(0.0..=1.0).contains(&frac) {
        return Err(IsacError::InvalidParams(format!("time fraction {frac} outside [0, 1]")));
    }
    if !q_rate.crb.is_finite() {
        return Err(IsacError::NotApplicable(
            "time switching needs a rate-optimal covariance with finite CRB".into(),
        ));
    }
    let (crb_v, rate) = if frac == 1.0 {
        (q_rate.crb, q_rate.rate)
    } else if frac == 0.0 {
        (q_crb.crb, q_crb.rate)
    } else {
        let q = q_crb.q.blend(&q_rate.q, frac);
        (crb(&q, params, metric), frac * q_rate.rate + (1.0 - frac) * q_crb.rate)
    };
    Ok(BenchmarkCurvePoint { scheme: Scheme::TimeSwitch, knob: frac, crb: crb_v, rate })
}

fn diagonal_point(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric, p: &[f64]) -> (f64, f64) {
    let rate = rate_diag(p, &ch.zeta_sq(), params.noise_comm);
    let crb_v = match metric {
        CrbMetric::Point => crb(&TransmitCovariance::from_hermitian(from_basis_diag(&ch.svd_v, p)), params, metric),
        _ => crb_extended_from_eigs(p, params, metric),
    };
    (crb_v, rate)
}

/// Covariance of a diagonal allocation in the channel's right singular basis.
pub fn allocation_covariance(ch: &ChannelSet, p: &[f64]) -> TransmitCovariance {
    TransmitCovariance::from_hermitian(from_basis_diag(&ch.svd_v, p))
}

/// Equal power `βP/r` on the data subchannels and `(1-β)P/(M-r)` on the
/// sensing-only ones; `β` is forced to 1 when `r = M`.
pub fn split_ep_allocation(ch: &ChannelSet, params: &SystemParams, beta: f64) -> (f64, Vec<f64>) {
    let (m, r, pw) = (ch.m(), ch.rank_r, params.power);
    let beta = if r == m { 1.0 } else { beta };
    let mut p = vec![beta * pw / r as f64; r];
    if r < m {
        p.resize(m, (1.0 - beta) * pw / (m - r) as f64);
    }
    (beta, p)
}

pub fn power_split_ep(ch: &ChannelSet, params: &SystemParams, beta: f64, metric: CrbMetric) -> BenchmarkCurvePoint {
    let (beta, p) = split_ep_allocation(ch, params, beta);
    let (crb, rate) = diagonal_point(ch, params, metric, &p);
    BenchmarkCurvePoint { scheme: Scheme::SplitEp, knob: beta, crb, rate }
}

/// `βP` on the strongest mode and `(1-β)P/(M-1)` on each of the others.
pub fn split_sem_allocation(ch: &ChannelSet, params: &SystemParams, beta: f64) -> Vec<f64> {
    let m = ch.m();
    let mut p = vec![(1.0 - beta) * params.power / (m - 1) as f64; m];
    p[0] = beta * params.power;
    p
}

pub fn power_split_sem(ch: &ChannelSet, params: &SystemParams, beta: f64, metric: CrbMetric) -> BenchmarkCurvePoint {
    let p = split_sem_allocation(ch, params, beta);
    let (crb, rate) = diagonal_point(ch, params, metric, &p);
    BenchmarkCurvePoint { scheme: Scheme::SplitSem, knob: beta, crb, rate }
}

/// `n` uniform knob values on `[0, 1]`.
pub fn default_knob_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// Bins used by [`upper_envelope`].
pub const ENVELOPE_BINS: usize = 200;

/// Evaluates `scheme` on every knob value and returns its upper envelope.
pub fn benchmark_boundary(
    scheme: Scheme,
    ch: &ChannelSet,
    params: &SystemParams,
    metric: CrbMetric,
    knob_grid: &[f64],
) -> Result<Vec<BenchmarkCurvePoint>> {
    if knob_grid.is_empty() {
        return Err(IsacError::InvalidParams("empty knob grid".into()));
    }
    let points = benchmark_points(scheme, ch, params, metric, knob_grid)?;
    Ok(upper_envelope(&points, metric.is_log()))
}

/// Raw (unfiltered) benchmark evaluations.
pub fn benchmark_points(
    scheme: Scheme,
    ch: &ChannelSet,
    params: &SystemParams,
    metric: CrbMetric,
    knob_grid: &[f64],
) -> Result<Vec<BenchmarkCurvePoint>> {
    match scheme {
        Scheme::TimeSwitch => {
            let qc = rate_max_waterfill(ch, params, metric);
            let qs = crb_min_corner(ch, params, metric, DEFAULT_ETA_EPSILON);
            knob_grid.iter().map(|&f| time_switching(&qc, &qs, f, metric, params)).collect()
        }
        Scheme::SplitEp => Ok(knob_grid.iter().map(|&b| power_split_ep(ch, params, b, metric)).collect()),
        Scheme::SplitSem => Ok(knob_grid.iter().map(|&b| power_split_sem(ch, params, b, metric)).collect()),
        Scheme::Optimal => Err(IsacError::InvalidParams("the optimal scheme is not a benchmark".into())),
    }
}

/// Best rate per CRB bin (`ENVELOPE_BINS` bins, log-spaced unless `linear`),
/// then only the points that beat every point of smaller CRB.
/// Points with infinite CRB are dropped.
pub fn upper_envelope(points: &[BenchmarkCurvePoint], linear: bool) -> Vec<BenchmarkCurvePoint> {
    let finite: Vec<&BenchmarkCurvePoint> =
        points.iter().filter(|p| p.crb.is_finite() && (linear || p.crb > 0.0)).collect();
    if finite.is_empty() {
        return Vec::new();
    }
    let key = |x: f64| if linear { x } else { x.ln() };
    let lo = finite.iter().map(|p| key(p.crb)).fold(f64::INFINITY, f64::min);
    let hi = finite.iter().map(|p| key(p.crb)).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / ENVELOPE_BINS as f64;
    let mut bins: Vec<Option<BenchmarkCurvePoint>> = vec![None; ENVELOPE_BINS];
    for p in finite {
        let idx = if width > 0.0 { (((key(p.crb) - lo) / width) as usize).min(ENVELOPE_BINS - 1) } else { 0 };
        let better = match &bins[idx] {
            None => true,
            Some(b) => p.rate > b.rate || (p.rate == b.rate && p.crb < b.crb),
        };
        if better {
            bins[idx] = Some(*p);
        }
    }
    let mut out = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for p in bins.into_iter().flatten() {
        if p.rate > best {
            best = p.rate;
            out.push(p);
        }
    }
    out
}
