//! Brute-force reference solvers for tiny instances and a Monte-Carlo check
//! of the point-target CRB.
//!
//! Nothing here goes through solver code: candidates are built explicitly and
//! judged with the `metrics` evaluators only. Both grid oracles search the
//! face `tr Q = P`; rate grows and every CRB shrinks when `Q` is scaled up, so
//! the optimum always lies there.


use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::channel::{steering_rx, steering_tx, ChannelSet, SystemParams};
use num_complex::Complex64;

use crate::linalg::{c, from_basis_diag, CMat, Eigh};
use crate::metrics::{crb, crb_point_angle, rate, CrbMetric, TransmitCovariance};

/// Small random instance number `index` with `m` transmit antennas.
/// Odd indices use a pure line-of-sight (rank-one) channel.
pub fn random_instance(index: u64, m: usize) -> (SystemParams, ChannelSet) {
    let params = SystemParams {
        m_tx: m,
        n_rx_sense: 3,
        n_rx_comm: 2,
        cpi_len: 30,
        power: 2.0 + (index % 5) as f64,
        noise_comm: 1.0,
        noise_sense: 1.0,
        reflect_coeff: c(0.2, 0.1),
        target_angle: -0.6 + 0.05 * index as f64,
        rician_k: if index % 2 == 1 { f64::INFINITY } else { 1.0 },
        seed: 1000 + index,
    };
    let ch = crate::channel::rician_channel(&params, 0.4, 0.4);
    (params, ch)
}

/// Threshold at fraction `frac` of `[lo, hi]`, geometric unless `metric` is
/// logarithmic. An infinite `hi` is replaced by `100·lo` (`lo + 6` in log form).
pub fn interior_gamma(metric: CrbMetric, lo: f64, hi: f64, frac: f64) -> f64 {
    if metric.is_log() {
        let hi = if hi.is_finite() { hi } else { lo + 6.0 };
        lo + frac * (hi - lo)
    } else {
        let hi = if hi.is_finite() { hi } else { lo * 1e2 };
        (lo.ln() + frac * (hi.ln() - lo.ln())).exp()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub best_rate: f64,
    /// Diagonal oracle: the powers. Hermitian oracle: `(q₁₁, q₂₂, Re q₁₂, Im q₁₂)` in the `V_c` basis.
    pub best_point: Vec<f64>,
    pub grid_resolution: f64,
    pub feasible_count: usize,
    /// Relative CRB-constraint violation at the returned point (zero by construction).
    pub max_kkt_violation_of_candidate: f64,
}

impl OracleReport {
    fn empty(resolution: f64) -> Self {
        OracleReport {
            best_rate: f64::NEG_INFINITY,
            best_point: Vec::new(),
            grid_resolution: resolution,
            feasible_count: 0,
            max_kkt_violation_of_candidate: 0.0,
        }
    }

    pub fn found(&self) -> bool {
        self.best_rate.is_finite()
    }
}

fn satisfied(value: f64, gamma: f64) -> bool {
    value <= gamma
}

fn violation(value: f64, gamma: f64) -> f64 {
    ((value - gamma) / gamma.abs().max(f64::MIN_POSITIVE)).max(0.0)
}

/// Evaluates a candidate; `None` when it violates the CRB constraint.
fn judge(q: &TransmitCovariance, ch: &ChannelSet, params: &SystemParams, metric: CrbMetric, gamma: f64) -> Option<f64> {
    let v = crb(q, params, metric);
    satisfied(v, gamma).then(|| rate(q, ch, params))
}

/// Search over diagonal allocations in the `V_c` basis with `Σ p = P`.
///
/// The first power runs over a grid of step `P/steps`. For `M = 3` the second
/// power is optimized exactly along each grid line: the rate is concave and
/// the CRB-feasible part is an interval, so golden-section search and
/// bisection find the best feasible point. The best value is concave in the
/// first power too, and a final golden-section pass refines it between the
/// winner's grid neighbours.
pub fn grid_oracle_diagonal(
    ch: &ChannelSet,
    params: &SystemParams,
    metric: CrbMetric,
    gamma: f64,
    steps: usize,
) -> OracleReport {
    let m = ch.m();
    assert!((1..=3).contains(&m), "diagonal oracle supports M ≤ 3");
    let pw = params.power;
    let h = pw / steps as f64;
    let mut report = OracleReport::empty(h);
    let cov = |p: &[f64]| TransmitCovariance::from_hermitian(from_basis_diag(&ch.svd_v, p));
    if m == 1 {
        if let Some(r) = judge(&cov(&[pw]), ch, params, metric, gamma) {
            report.feasible_count = 1;
            report.best_rate = r;
            report.best_point = vec![pw];
        }
        return report;
    }
    // best allocation with first power x, or None when nothing is feasible
    let line = |x: f64| -> Option<(f64, Vec<f64>)> {
        if !(0.0..=pw).contains(&x) {
            return None;
        }
        let rest = pw - x;
        if m == 2 {
            let p = vec![x, rest];
            return judge(&cov(&p), ch, params, metric, gamma).map(|r| (r, p));
        }
        let alloc = |y: f64| vec![x, y, (rest - y).max(0.0)];
        let crb_at = |y: f64| crb(&cov(&alloc(y)), params, metric);
        let ok = |y: f64| satisfied(crb_at(y), gamma);
        let (y0, _) = golden_max(|y| -crb_at(y), 0.0, rest);
        if !ok(y0) {
            return None;
        }
        let left = if ok(0.0) { 0.0 } else { bisect_edge(ok, y0, 0.0) };
        let right = if ok(rest) { rest } else { bisect_edge(ok, y0, rest) };
        let (y, r) = golden_max(|y| rate(&cov(&alloc(y)), ch, params), left, right);
        ok(y).then(|| (r, alloc(y)))
    };
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for i in 0..=steps {
        let x = i as f64 * h;
        if let Some((r, p)) = line(x) {
            report.feasible_count += 1;
            if best.as_ref().is_none_or(|b| r > b.0) {
                best = Some((r, x, p));
            }
        }
    }
    let Some((mut best_r, x0, mut best_p)) = best else {
        return report;
    };
    let value = |x: f64| line(x).map_or(f64::NEG_INFINITY, |(r, _)| r);
    let (x, _) = golden_max(value, (x0 - h).max(0.0), (x0 + h).min(pw));
    if let Some((r, p)) = line(x) {
        if r > best_r {
            best_r = r;
            best_p = p;
        }
    }
    report.best_rate = best_r;
    report.max_kkt_violation_of_candidate = violation(crb(&cov(&best_p), params, metric), gamma);
    report.best_point = best_p;
    report
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximizer of a unimodal `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let (mut x1, mut x2) = (hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    let ends = [(lo, f(lo)), (hi, f(hi)), (x1, f1), (x2, f2)];
    ends.into_iter().fold((lo, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best })
}

/// Boundary of `{ρ : ok(ρ)}` between a feasible `inside` and an infeasible `outside`.
fn bisect_edge(ok: impl Fn(f64) -> bool, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (inside + outside);
        if ok(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Minimizer and maximizer of `crb_of`/`rate_of` over one convex slice.
struct SliceResult {
    rate: f64,
    arg: f64,
}

/// Best feasible point of a concave `rate_of` on `[lo, hi]` under a convex
/// `crb_of(x) ≤ gamma`, or the smallest CRB on the slice when none is feasible.
fn best_on_interval(
    rate_of: impl Fn(f64) -> f64,
    crb_of: impl Fn(f64) -> f64,
    gamma: f64,
    lo: f64,
    hi: f64,
) -> std::result::Result<SliceResult, f64> {
    let ok = |x: f64| satisfied(crb_of(x), gamma);
    let (xr, r) = golden_max(&rate_of, lo, hi);
    if ok(xr) {
        return Ok(SliceResult { rate: r, arg: xr });
    }
    let (xc, neg) = golden_max(|x| finite_neg(crb_of(x)), lo, hi);
    if !ok(xc) {
        return Err(-neg);
    }
    let left = if ok(lo) { lo } else { bisect_edge(ok, xc, lo) };
    let right = if ok(hi) { hi } else { bisect_edge(ok, xc, hi) };
    let (x, r) = golden_max(&rate_of, left, right);
    if ok(x) {
        Ok(SliceResult { rate: r, arg: x })
    } else {
        Ok(SliceResult { rate: rate_of(xc), arg: xc })
    }
}

fn finite_neg(v: f64) -> f64 {
    if v.is_finite() {
        -v
    } else {
        f64::MIN
    }
}

/// Rate and point CRB of `P·[t, z; z̄, 1-t]` in the `V_c` basis, in closed
/// form. Agrees with the `metrics` evaluators on the rebuilt covariance.
struct Basis2 {
    /// `V_cᴴ Hᴴ H V_c / σ_c²`
    gain: [[Complex64; 2]; 2],
    dd: [[Complex64; 2]; 2],
    da: [[Complex64; 2]; 2],
    aa: [[Complex64; 2]; 2],
    power: f64,
    guard_scale: f64,
    crb_scale: f64,
    alpha_zero: bool,
}

impl Basis2 {
    fn new(ch: &ChannelSet, params: &SystemParams) -> Self {
        let v = &ch.svd_v;
        let st = params.steering();
        let a = st.response();
        let ad = st.response_deriv();
        let to2 = |k: CMat| {
            let b = v.adjoint() * k * v;
            [[b[(0, 0)], b[(0, 1)]], [b[(1, 0)], b[(1, 1)]]]
        };
        let n = st.norms_sqr();
        let pw = params.power;
        let alpha2 = params.reflect_coeff.norm_sqr();
        Basis2 {
            gain: to2((ch.h_comm.adjoint() * &ch.h_comm).unscale(params.noise_comm)),
            dd: to2(ad.adjoint() * &ad),
            da: to2(ad.adjoint() * &a),
            aa: to2(a.adjoint() * &a),
            power: pw,
            guard_scale: (n.b * n.a_dot + n.b_dot * n.a) * n.b * n.a * pw * pw,
            crb_scale: params.noise_sense / (2.0 * alpha2 * params.cpi()),
            alpha_zero: alpha2 == 0.0,
        }
    }

    fn inner(&self, t: f64, x: f64, y: f64) -> [[Complex64; 2]; 2] {
        let p = self.power;
        let z = c(x * p, y * p);
        [[c(t * p, 0.0), z], [z.conj(), c((1.0 - t) * p, 0.0)]]
    }

    /// `tr(K S)`
    fn tr(k: &[[Complex64; 2]; 2], s: &[[Complex64; 2]; 2]) -> Complex64 {
        k[0][0] * s[0][0] + k[0][1] * s[1][0] + k[1][0] * s[0][1] + k[1][1] * s[1][1]
    }

    fn rate(&self, t: f64, x: f64, y: f64) -> f64 {
        let s = self.inner(t, x, y);
        let g = &self.gain;
        let m = |i: usize, j: usize| s[i][0] * g[0][j] + s[i][1] * g[1][j];
        let det = (c(1.0, 0.0) + m(0, 0)) * (c(1.0, 0.0) + m(1, 1)) - m(0, 1) * m(1, 0);
        (det.re.max(f64::MIN_POSITIVE).ln() / std::f64::consts::LN_2).max(0.0)
    }

    fn crb_point(&self, t: f64, x: f64, y: f64) -> f64 {
        let s = self.inner(t, x, y);
        let dd = Self::tr(&self.dd, &s).re;
        let da = Self::tr(&self.da, &s);
        let aa = Self::tr(&self.aa, &s).re;
        let den = dd * aa - da.norm_sqr();
        if !(aa > 0.0) || !(dd > 0.0) || den <= 1e-12 * (dd * aa).max(self.guard_scale) || self.alpha_zero {
            return f64::INFINITY;
        }
        self.crb_scale * aa / den
    }
}

/// Search over all 2×2 Hermitian PSD `Q` with `tr Q = P`, written in the
/// `V_c` basis as `P·[t, z; z̄, 1-t]` with `|z|² ≤ t(1-t)`.
///
/// The diagonal weight `t` runs over a grid. For fixed `t` the disk of `z` is
/// searched exactly: along each line `Re z = x` the rate is concave and the
/// CRB-feasible part is an interval, and the best value is concave in `x`.
/// The best value is concave in `t` as well, so golden-section search over
/// the feasible `t` interval finishes the job.
pub fn grid_oracle_hermitian(
    ch: &ChannelSet,
    params: &SystemParams,
    metric: CrbMetric,
    gamma: f64,
    steps: usize,
) -> OracleReport {
    assert_eq!(ch.m(), 2, "hermitian oracle supports M = 2 only");
    let pw = params.power;
    let build = |t: f64, x: f64, y: f64| -> TransmitCovariance {
        let z = c(x * pw, y * pw);
        let inner = CMat::from_row_slice(2, 2, &[c(t * pw, 0.0), z, z.conj(), c((1.0 - t) * pw, 0.0)]);
        TransmitCovariance::from_hermitian(&ch.svd_v * inner * ch.svd_v.adjoint())
    };
    let fast = Basis2::new(ch, params);
    let crb_at = |t: f64, x: f64, y: f64| match metric {
        CrbMetric::Point => fast.crb_point(t, x, y),
        _ => crb(&build(t, x, y), params, metric),
    };
    let rate_at = |t: f64, x: f64, y: f64| fast.rate(t, x, y);
    let radius = |t: f64| (t * (1.0 - t)).max(0.0).sqrt();

    // exact best over the line Re z = x of the disk at t: Ok((rate, y)) or Err(min CRB)
    let line = |t: f64, x: f64| -> std::result::Result<(f64, f64), f64> {
        let h = (radius(t).powi(2) - x * x).max(0.0).sqrt();
        best_on_interval(|y| rate_at(t, x, y), |y| crb_at(t, x, y), gamma, -h, h).map(|s| (s.rate, s.arg))
    };
    let min_crb_line = |t: f64, x: f64| -> f64 {
        let h = (radius(t).powi(2) - x * x).max(0.0).sqrt();
        -golden_max(|y| finite_neg(crb_at(t, x, y)), -h, h).1
    };
    // exact best over the disk at t: Ok((rate, x, y)) or Err(min CRB)
    let disk = |t: f64| -> std::result::Result<(f64, f64, f64), f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(f64::INFINITY);
        }
        let r = radius(t);
        let value = |x: f64| line(t, x).map_or(f64::NEG_INFINITY, |v| v.0);
        let min_crb = |x: f64| min_crb_line(t, x);
        let res = best_on_interval(value, min_crb, gamma, -r, r)?;
        let (rate_v, y) = line(t, res.arg)?;
        Ok((rate_v, res.arg, y))
    };
    let min_crb_disk = |t: f64| -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return f64::INFINITY;
        }
        let r = radius(t);
        -golden_max(|x| finite_neg(min_crb_line(t, x)), -r, r).1
    };

    let mut report = OracleReport::empty(1.0 / steps as f64);
    let mut best: Option<(f64, [f64; 3])> = None;
    let mut feasible_t = Vec::new();
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        if let Ok((r, x, y)) = disk(t) {
            report.feasible_count += 1;
            feasible_t.push(t);
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, [t, x, y]));
            }
        }
    }
    // the feasible t form an interval; find a point of it if the grid missed it
    let seed = match feasible_t.first() {
        Some(&t) => Some(t),
        None => {
            let (t, neg) = golden_max(|t| finite_neg(min_crb_disk(t)), 0.0, 1.0);
            satisfied(-neg, gamma).then_some(t)
        }
    };
    if let Some(t0) = seed {
        let ok = |t: f64| disk(t).is_ok();
        let lo_in = feasible_t.first().copied().unwrap_or(t0);
        let hi_in = feasible_t.last().copied().unwrap_or(t0);
        let left = if ok(0.0) { 0.0 } else { bisect_edge(ok, lo_in, (lo_in - report.grid_resolution).max(0.0).min(lo_in)) };
        let right = if ok(1.0) { 1.0 } else { bisect_edge(ok, hi_in, (hi_in + report.grid_resolution).min(1.0)) };
        let left = if feasible_t.is_empty() { bisect_edge(ok, t0, 0.0) } else { left };
        let right = if feasible_t.is_empty() { bisect_edge(ok, t0, 1.0) } else { right };
        let (t, _) = golden_max(|t| disk(t).map_or(f64::NEG_INFINITY, |v| v.0), left, right);
        if let Ok((r, x, y)) = disk(t) {
            if best.is_none_or(|(b, _)| r > b) {
                best = Some((r, [t, x, y]));
            }
        }
    }
    let Some((best_r, [t, x, y])) = best else {
        return report;
    };
    report.best_rate = best_r;
    report.best_point = vec![t * pw, (1.0 - t) * pw, x * pw, y * pw];
    report.max_kkt_violation_of_candidate = violation(crb_at(t, x, y), gamma);
    report
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MleCheck {
    pub empirical_var: f64,
    pub crb: f64,
    pub trials: usize,
}

impl MleCheck {
    pub fn ratio(&self) -> f64 {
        self.empirical_var / self.crb
    }
}

fn cn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> CMat {
    let s = std * std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        c(s * x, s * y)
    })
}

/// Simulates `Y = α b aᵀ X + Z` with Gaussian `X` of covariance `Q` and
/// estimates the angle by maximizing the likelihood concentrated over the
/// unknown `α`: a grid over `θ₀ ± 0.2` followed by golden-section refinement.
pub fn mle_variance_check(params: &SystemParams, q: &TransmitCovariance, trials: usize, seed: u64) -> MleCheck {
    let (m, ns, l) = (params.m_tx, params.n_rx_sense, params.cpi_len);
    let theta0 = params.target_angle;
    let alpha = params.reflect_coeff;
    let eig = Eigh::new(q.matrix());
    let q_half = eig.map(|v| v.max(0.0).sqrt());
    let a0 = steering_tx(theta0, m);
    let b0 = steering_rx(theta0, ns);
    let response = &b0 * a0.transpose() * alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_std = params.noise_sense.sqrt();

    let mut sq_err = 0.0;
    for _ in 0..trials {
        let x = &q_half * cn_matrix(&mut rng, m, l, 1.0);
        let y = &response * &x + cn_matrix(&mut rng, ns, l, noise_std);
        let r = &y * x.adjoint();
        let s = &x * x.adjoint();
        // |bᴴ R a*|² / (‖b‖² aᵀ S a*)
        let objective = |th: f64| {
            let a = steering_tx(th, m);
            let b = steering_rx(th, ns);
            let ac = a.conjugate();
            let num = (b.adjoint() * &r * &ac)[(0, 0)].norm_sqr();
            let den = b.norm_squared() * (a.transpose() * &s * &ac)[(0, 0)].re;
            num / den
        };
        let half = 0.2;
        let n = 800;
        let mut best = (theta0, f64::NEG_INFINITY);
        for i in 0..=n {
            let th = theta0 - half + 2.0 * half * i as f64 / n as f64;
            let v = objective(th);
            if v > best.1 {
                best = (th, v);
            }
        }
        let step = 2.0 * half / n as f64;
        let (mut lo, mut hi) = (best.0 - step, best.0 + step);
        let g = 0.618_033_988_749_894_8;
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (objective(x1), objective(x2));
        for _ in 0..80 {
            if f1 >= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = objective(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = objective(x2);
            }
        }
        let est = 0.5 * (lo + hi);
        sq_err += (est - theta0).powi(2);
    }
    MleCheck { empirical_var: sq_err / trials as f64, crb: crb_point_angle(q, params), trials }
}
