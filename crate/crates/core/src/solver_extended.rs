//! Extended-target rate maximization under a Trace, MaxEig or LogDet CRB
//! constraint.
//!
//! The optimal covariance is diagonal in the right singular basis of the
//! communication channel, so each problem reduces to a power allocation over
//! `M` subchannels: `r` of them carry data with noise-to-gain ratio
//! `s_k = σ_c²/ζ_k²`, the remaining `M - r` only serve sensing.

use std::time::Instant;

use log::warn;
use serde::Serialize;

use crate::channel::{ChannelSet, SystemParams};
use crate::corner::{crb_min_value, rate_max_waterfill};
use crate::ellipsoid::{minimize, EllipsoidOptions, Step};
use crate::linalg::from_basis_diag;
use crate::metrics::{crb_extended_from_eigs, crb_point_angle, rate_diag, CrbMetric, CrbValues, TransmitCovariance};
use crate::outcome::{Duals, KktResiduals, SolveOutcome, SolveStatus};

const LN2: f64 = std::f64::consts::LN_2;

/// Per-subchannel powers in the channel's right singular basis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerAllocation {
    pub p: Vec<f64>,
    pub metric: CrbMetric,
    /// CRB multiplier; zero when the constraint is slack.
    pub mu: f64,
    /// Power multiplier.
    pub v: f64,
}

/// The Prop.-9-style ordering `p₁ ≥ … ≥ p_r ≥ p_{r+1} = … = p_M > 0`, with slack `1e-8·P`.
pub fn check_ordering(alloc: &PowerAllocation, rank: usize, power: f64) -> bool {
    let tol = 1e-8 * power;
    let p = &alloc.p;
    if p.is_empty() || !(p[p.len() - 1] > 0.0) {
        return false;
    }
    let sorted = p.windows(2).all(|w| w[0] >= w[1] - tol);
    let flat = p[rank.min(p.len())..].windows(2).all(|w| (w[0] - w[1]).abs() <= tol);
    sorted && flat
}

/// Unique positive root of `a p³ + b p² + c p + d` (`a > 0`, `d < 0`, one sign change).
///
/// Cardano's formula when the discriminant is positive, the trigonometric form
/// when all three roots are real, then safeguarded Newton refinement.
pub fn cubic_positive_root(a: f64, b: f64, c: f64, d: f64) -> f64 {
    debug_assert!(a > 0.0);
    let f = |x: f64| ((a * x + b) * x + c) * x + d;
    let df = |x: f64| (3.0 * a * x + 2.0 * b) * x + c;
    let t1 = b / (3.0 * a);
    let t2 = (27.0 * a * a * d - 9.0 * a * b * c + 2.0 * b * b * b) / (54.0 * a * a * a);
    let t3 = (3.0 * a * c - b * b) / (9.0 * a * a);
    let disc = t2 * t2 + t3 * t3 * t3;
    let mut candidates = Vec::with_capacity(3);
    if disc >= 0.0 {
        let sq = disc.sqrt();
        candidates.push((-t2 + sq).cbrt() + (-t2 - sq).cbrt() - t1);
    } else {
        let r = (-t3).sqrt();
        let phi = (-t2 / (r * r * r)).clamp(-1.0, 1.0).acos();
        for k in 0..3 {
            candidates.push(2.0 * r * ((phi + 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() - t1);
        }
    }
    let mut x = candidates
        .iter()
        .copied()
        .filter(|x| *x > 0.0)
        .min_by(|p, q| f(*p).abs().total_cmp(&f(*q).abs()))
        .unwrap_or(0.0);

    // bracket [lo, hi] with f(lo) < 0 < f(hi)
    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..100 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d != 0.0 { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Problem data shared by the three scalarizations.
#[derive(Debug, Clone)]
struct Modes {
    /// `σ_c²/ζ_k²` for the `r` data-carrying subchannels, ascending.
    s: Vec<f64>,
    m: usize,
    power: f64,
    noise: f64,
}

impl Modes {
    fn new(ch: &ChannelSet, params: &SystemParams) -> Self {
        Modes { s: ch.noise_levels(params.noise_comm), m: ch.m(), power: params.power, noise: params.noise_comm }
    }

    fn rate(&self, p: &[f64]) -> f64 {
        self.s.iter().zip(p).map(|(s, p)| (1.0 + p / s).log2()).sum()
    }
}

/// Threshold of the CRB constraint in per-allocation form.
fn reduced_threshold(params: &SystemParams, metric: CrbMetric, gamma: f64) -> f64 {
    let (sig, l, ns, m) = (params.noise_sense, params.cpi(), params.n_rx_sense as f64, params.m_tx as f64);
    match metric {
        // Σ 1/p ≤ Γ̃₂
        CrbMetric::Trace => l * gamma / (sig * ns),
        // p_k ≥ Γ̃_e
        CrbMetric::MaxEig => sig / (l * gamma),
        // Σ ln p ≥ Γ̃_d
        CrbMetric::LogDet => m * (sig / l).ln() - gamma / ns,
        CrbMetric::Point => panic!("point target is handled by solver_point"),
    }
}

/// Maximizer of the Lagrangian for given duals (Trace or LogDet).
fn lagrangian_alloc(modes: &Modes, metric: CrbMetric, mu: f64, v: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(modes.m);
    for &s in &modes.s {
        let pk = if mu <= 0.0 {
            (1.0 / (v * LN2) - s).max(0.0)
        } else {
            match metric {
                CrbMetric::Trace => cubic_positive_root(v, v * s - 1.0 / LN2, -mu, -mu * s),
                CrbMetric::LogDet => {
                    let b = v * s - mu - 1.0 / LN2;
                    let disc = (b * b + 4.0 * v * mu * s).sqrt();
                    if b > 0.0 {
                        2.0 * mu * s / (b + disc)
                    } else {
                        (-b + disc) / (2.0 * v)
                    }
                }
                _ => unreachable!(),
            }
        };
        p.push(pk);
    }
    let sensing = match metric {
        CrbMetric::Trace => (mu / v).max(0.0).sqrt(),
        _ => (mu / v).max(0.0),
    };
    p.resize(modes.m, sensing);
    p
}

/// Constraint margin, nonnegative when satisfied.
fn margin(metric: CrbMetric, p: &[f64], thr: f64) -> f64 {
    match metric {
        CrbMetric::Trace => thr - p.iter().map(|x| 1.0 / x).sum::<f64>(),
        CrbMetric::LogDet => p.iter().map(|x| x.ln()).sum::<f64>() - thr,
        CrbMetric::MaxEig => p.iter().copied().fold(f64::INFINITY, f64::min) - thr,
        CrbMetric::Point => unreachable!(),
    }
}

fn dual_value(modes: &Modes, metric: CrbMetric, p: &[f64], mu: f64, v: f64, thr: f64) -> f64 {
    modes.rate(p) + mu * margin(metric, p, thr) - v * (p.iter().sum::<f64>() - modes.power)
}

/// Largest stationarity residual, relative to `v`.
fn stationarity(modes: &Modes, metric: CrbMetric, p: &[f64], mu: f64, v: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        let comm = modes.s.get(k).map_or(0.0, |s| 1.0 / (LN2 * (s + pk)));
        let sense = match metric {
            CrbMetric::Trace => mu / (pk * pk),
            CrbMetric::LogDet => mu / pk,
            _ => 0.0,
        };
        worst = worst.max((comm + sense - v).abs() / v.max(f64::MIN_POSITIVE));
    }
    worst
}

/// `v` with `Σ p(μ, v) = P`, by bisection on `ln v`.
fn v_for_mu(modes: &Modes, metric: CrbMetric, mu: f64, guess: f64) -> f64 {
    let total = |v: f64| lagrangian_alloc(modes, metric, mu, v).iter().sum::<f64>();
    let guess = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    let (mut lo, mut hi) = (guess, guess);
    for _ in 0..2000 {
        if total(lo) >= modes.power {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..2000 {
        if total(hi) <= modes.power {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..200 {
        if hi <= lo * (1.0 + 1e-15) {
            break;
        }
        let mid = (lo * hi).sqrt();
        if total(mid) > modes.power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Polishes `(μ, v)` so that both constraints are active; returns the
/// allocation on the feasible side and the multipliers.
fn polish(modes: &Modes, metric: CrbMetric, thr: f64, mu0: f64, v0: f64) -> (Vec<f64>, f64, f64, usize) {
    let mut iters = 0;
    let mut eval = |mu: f64, v_guess: f64| {
        iters += 1;
        let v = v_for_mu(modes, metric, mu, v_guess);
        let p = lagrangian_alloc(modes, metric, mu, v);
        (margin(metric, &p, thr), v, p)
    };
    let mu0 = if mu0.is_finite() && mu0 > 0.0 { mu0 } else { 1.0 };
    let (mut lo, mut hi) = (mu0, mu0);
    let mut v_guess = v0;
    let mut hi_state = None;
    for _ in 0..400 {
        let (h, v, p) = eval(hi, v_guess);
        v_guess = v;
        if h >= 0.0 {
            hi_state = Some((v, p));
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if lo == hi {
        for _ in 0..2000 {
            lo *= 0.5;
            let (h, v, _) = eval(lo, v_guess);
            v_guess = v;
            if h < 0.0 || lo < 1e-300 {
                break;
            }
        }
    }
    let Some(mut best) = hi_state else {
        let (_, v, p) = eval(hi, v_guess);
        return (p, hi, v, iters);
    };
    for _ in 0..200 {
        if hi <= lo * (1.0 + 1e-15) {
            break;
        }
        let mid = (lo * hi).sqrt();
        let (h, v, p) = eval(mid, best.0);
        if h >= 0.0 {
            hi = mid;
            best = (v, p);
        } else {
            lo = mid;
        }
    }
    (best.1, hi, best.0, iters)
}

/// Minimal blend toward equal power so that the CRB constraint holds exactly;
/// both margins are concave so the feasible blend weights form an interval.
fn enforce_feasible(modes: &Modes, metric: CrbMetric, thr: f64, p: Vec<f64>) -> Vec<f64> {
    let total: f64 = p.iter().sum();
    let mut p: Vec<f64> = p.iter().map(|x| x * modes.power / total).collect();
    if margin(metric, &p, thr) >= 0.0 {
        return p;
    }
    let eq = modes.power / modes.m as f64;
    let blend = |t: f64, p: &[f64]| p.iter().map(|x| (1.0 - t) * x + t * eq).collect::<Vec<_>>();
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if margin(metric, &blend(mid, &p), thr) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    p = blend(hi, &p);
    p
}

#[derive(Debug, Clone, Copy)]
pub struct ExtendedSolverOptions {
    pub max_iter: usize,
    pub volume_tol: f64,
}

impl Default for ExtendedSolverOptions {
    fn default() -> Self {
        ExtendedSolverOptions { max_iter: 10_000, volume_tol: 1e-10 }
    }
}

pub fn solve_trace(ch: &ChannelSet, params: &SystemParams, gamma2: f64) -> SolveOutcome {
    solve_extended(ch, params, CrbMetric::Trace, gamma2, &ExtendedSolverOptions::default())
}

pub fn solve_maxeig(ch: &ChannelSet, params: &SystemParams, gamma3: f64) -> SolveOutcome {
    solve_extended(ch, params, CrbMetric::MaxEig, gamma3, &ExtendedSolverOptions::default())
}

/// `ln_gamma4` is the natural log of the determinant threshold.
pub fn solve_logdet(ch: &ChannelSet, params: &SystemParams, ln_gamma4: f64) -> SolveOutcome {
    solve_extended(ch, params, CrbMetric::LogDet, ln_gamma4, &ExtendedSolverOptions::default())
}

fn is_below_min(metric: CrbMetric, gamma: f64, crb_min: f64) -> bool {
    if metric.is_log() {
        gamma < crb_min - 1e-9 * crb_min.abs().max(1.0)
    } else {
        !(gamma > 0.0) || gamma < crb_min * (1.0 - 1e-9)
    }
}

/// Rate maximization under the chosen extended-target constraint
/// (`gamma` is `ln Γ` for `LogDet`).
pub fn solve_extended(
    ch: &ChannelSet,
    params: &SystemParams,
    metric: CrbMetric,
    gamma: f64,
    opts: &ExtendedSolverOptions,
) -> SolveOutcome {
    solve_extended_alloc(ch, params, metric, gamma, opts).0
}

fn solve_extended_alloc(
    ch: &ChannelSet,
    params: &SystemParams,
    metric: CrbMetric,
    gamma: f64,
    opts: &ExtendedSolverOptions,
) -> (SolveOutcome, Option<PowerAllocation>) {
    assert!(metric.is_extended(), "extended solver called with {metric}");
    let start = Instant::now();
    let m = ch.m();
    let crb_min = crb_min_value(params, metric);
    if gamma.is_nan() || is_below_min(metric, gamma, crb_min) {
        return (SolveOutcome::infeasible(m, metric, gamma), None);
    }
    let modes = Modes::new(ch, params);
    let thr = reduced_threshold(params, metric, gamma);

    // Complementary slackness: a feasible water-filling point is optimal with μ = 0.
    let wf = rate_max_waterfill(ch, params, metric);
    if wf.crb <= gamma {
        let p = wf.powers.expect("water-filling is diagonal");
        let v = 1.0 / (LN2 * (modes.s[0] + p[0]));
        let alloc = PowerAllocation { p, metric, mu: 0.0, v };
        return finish(ch, params, &modes, alloc, gamma, thr, 0, true, start);
    }

    let (alloc, iterations, converged) = match metric {
        CrbMetric::MaxEig => {
            let (alloc, it) = maxeig_alloc(&modes, thr);
            (alloc, it, true)
        }
        _ => {
            let ell_opts = EllipsoidOptions { max_iter: opts.max_iter, abs_tol: 0.0, rel_tol: 1e-10, volume_tol: opts.volume_tol };
            let res = minimize(&[1.0, 1.0], &[1e3, 1e3], &ell_opts, |x| {
                let (mu, v) = (x[0], x[1]);
                if mu < 0.0 {
                    return Step::Cut { violation: -mu, subgrad: vec![-1.0, 0.0] };
                }
                if v <= 0.0 {
                    return Step::Cut { violation: -v, subgrad: vec![0.0, -1.0] };
                }
                let p = lagrangian_alloc(&modes, metric, mu, v);
                let h = margin(metric, &p, thr);
                if !h.is_finite() {
                    // μ = 0 with sensing-only modes: the constraint cannot be met
                    return Step::Cut { violation: 0.0, subgrad: vec![-1.0, 0.0] };
                }
                Step::Objective {
                    value: dual_value(&modes, metric, &p, mu, v, thr),
                    subgrad: vec![h, modes.power - p.iter().sum::<f64>()],
                }
            });
            let (mu0, v0) = res.best_x.as_ref().map_or((1.0, 1.0), |x| (x[0], x[1]));
            let (p, mu, v, it) = polish(&modes, metric, thr, mu0, v0);
            (PowerAllocation { p, metric, mu, v }, res.iterations + it, true)
        }
    };
    let p = enforce_feasible(&modes, metric, thr, alloc.p.clone());
    let alloc = PowerAllocation { p, ..alloc };
    finish(ch, params, &modes, alloc, gamma, thr, iterations, converged, start)
}

/// Water level by bisection: `p_k = max(w - s_k, Γ̃_e)`, `v = 1/(w ln 2)`.
fn maxeig_alloc(modes: &Modes, floor: f64) -> (PowerAllocation, usize) {
    let alloc_at = |w: f64| {
        let mut p: Vec<f64> = modes.s.iter().map(|s| (w - s).max(floor)).collect();
        p.resize(modes.m, floor);
        p
    };
    let total = |w: f64| alloc_at(w).iter().sum::<f64>();
    let s_min = modes.s.first().copied().unwrap_or(0.0);
    let s_max = modes.s.last().copied().unwrap_or(0.0);
    let (mut lo, mut hi) = (floor + s_min, floor + s_max + modes.power);
    let mut it = 0;
    if total(lo) < modes.power {
        while hi - lo > 1e-15 * hi && it < 400 {
            it += 1;
            let mid = 0.5 * (lo + hi);
            if total(mid) > modes.power {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    } else {
        hi = lo;
    }
    let w = 0.5 * (lo + hi);
    let p = alloc_at(w);
    let v = 1.0 / (w * LN2);
    // multiplier mass on modes held at the floor
    let mu: f64 = p
        .iter()
        .enumerate()
        .filter(|(_, &pk)| pk <= floor * (1.0 + 1e-12))
        .map(|(k, &pk)| (v - modes.s.get(k).map_or(0.0, |s| 1.0 / (LN2 * (s + pk)))).max(0.0))
        .sum();
    (PowerAllocation { p, metric: CrbMetric::MaxEig, mu, v }, it)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    ch: &ChannelSet,
    params: &SystemParams,
    modes: &Modes,
    alloc: PowerAllocation,
    gamma: f64,
    thr: f64,
    iterations: usize,
    converged: bool,
    start: Instant,
) -> (SolveOutcome, Option<PowerAllocation>) {
    let metric = alloc.metric;
    let p = &alloc.p;
    let q = TransmitCovariance::from_hermitian(from_basis_diag(&ch.svd_v, p));
    let rate = rate_diag(p, &ch.zeta_sq(), modes.noise);
    let crb = CrbValues {
        point: crb_point_angle(&q, params),
        trace: crb_extended_from_eigs(p, params, CrbMetric::Trace),
        maxeig: crb_extended_from_eigs(p, params, CrbMetric::MaxEig),
        logdet: crb_extended_from_eigs(p, params, CrbMetric::LogDet),
    };
    let sum: f64 = p.iter().sum();
    let h = margin(metric, p, thr);
    let h_scale = match metric {
        CrbMetric::Trace | CrbMetric::MaxEig => thr.abs(),
        _ => thr.abs().max(1.0),
    };
    let g = if alloc.mu == 0.0 || metric == CrbMetric::MaxEig {
        modes.rate(p) - alloc.v * (sum - modes.power)
    } else {
        dual_value(modes, metric, p, alloc.mu, alloc.v, thr)
    };
    let kkt = KktResiduals {
        duality_gap: (g - rate).abs(),
        power_violation: ((sum - modes.power) / modes.power).max(0.0),
        crb_violation: (-h / h_scale).max(0.0),
        power_slackness: (alloc.v * (modes.power - sum)).abs() / modes.power,
        crb_slackness: (alloc.mu * h).abs() / h_scale,
        stationarity: match metric {
            CrbMetric::MaxEig => maxeig_stationarity(modes, p, alloc.v, thr),
            _ => stationarity(modes, metric, p, alloc.mu, alloc.v),
        },
    };
    let ok = converged && kkt.power_violation <= 1e-9 && kkt.crb_violation <= 1e-9 && kkt.duality_gap <= 1e-4;
    if !ok {
        warn!("{metric} solver stopped short of tolerance: {kkt:?}");
    }
    let out = SolveOutcome {
        q,
        rate,
        crb,
        metric,
        gamma,
        duals: Duals::Extended { mu: alloc.mu, v: alloc.v },
        kkt,
        status: if ok { SolveStatus::Optimal } else { SolveStatus::MaxIterations },
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
    };
    (out, Some(alloc))
}

/// Stationarity for the clipped allocation: active modes sit on the water
/// level, clipped modes have marginal rate no larger than `v`.
fn maxeig_stationarity(modes: &Modes, p: &[f64], v: f64, floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        let comm = modes.s.get(k).map_or(0.0, |s| 1.0 / (LN2 * (s + pk)));
        let r = if pk > floor * (1.0 + 1e-12) { (comm - v).abs() } else { (comm - v).max(0.0) };
        worst = worst.max(r / v);
    }
    worst
}

/// Allocation for the constrained problem, without building the outcome.
pub fn solve_allocation(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric, gamma: f64) -> Option<PowerAllocation> {
    solve_extended_alloc(ch, params, metric, gamma, &ExtendedSolverOptions::default()).1
}

/// High-power limit of the optimal allocation.
pub fn asymptotic_allocation(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric, gamma: f64) -> PowerAllocation {
    let (m, r, p) = (ch.m(), ch.rank_r, params.power);
    let thr = reduced_threshold(params, metric, gamma);
    let (data, sense) = match metric {
        CrbMetric::Trace => {
            let sense = (m - r) as f64 / thr;
            ((p - (m - r) as f64 * sense) / r as f64, sense)
        }
        CrbMetric::MaxEig => ((p - (m - r) as f64 * thr) / r as f64, thr),
        CrbMetric::LogDet => (p / r as f64, 0.0),
        CrbMetric::Point => panic!("no asymptotic allocation for the point target"),
    };
    let mut alloc = vec![data; r];
    alloc.resize(m, sense);
    PowerAllocation { p: alloc, metric, mu: f64::NAN, v: f64::NAN }
}
