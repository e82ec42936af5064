//! The two corner points of each C-R region: rate maximization with no sensing
//! requirement, and CRB minimization with no rate requirement.

use serde::Serialize;

use crate::channel::{ChannelSet, SystemParams};
use crate::linalg::{from_basis_diag, outer_t, CMat};
use crate::metrics::{crb, crb_extended_from_eigs, rate, rate_diag, CrbMetric, TransmitCovariance};

/// Default offset of the mixing weight from 1 when the CRB infimum is only
/// approached in the limit (`N_s < M`).
pub const DEFAULT_ETA_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerKind {
    RateMax,
    CrbMin,
}

impl CornerKind {
    pub fn name(self) -> &'static str {
        match self {
            CornerKind::RateMax => "rate_max",
            CornerKind::CrbMin => "crb_min",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CornerPoint {
    pub q: TransmitCovariance,
    pub rate: f64,
    /// CRB under `metric`; natural log for `LogDet`, possibly `+∞`.
    pub crb: f64,
    pub metric: CrbMetric,
    pub kind: CornerKind,
    /// Mixing weight of the point-target sensing covariance.
    pub eta: Option<f64>,
    /// Per-mode powers in the channel's right singular basis, when diagonal there.
    pub powers: Option<Vec<f64>>,
}

/// Water-filling over parallel channels with noise-to-gain ratios `levels`.
#[derive(Debug, Clone)]
pub struct WaterFill {
    pub powers: Vec<f64>,
    pub level: f64,
}

/// `p_k = (ν - levels_k)⁺` with `Σ p_k = power`, via the sorted-breakpoint search.
pub fn waterfill(levels: &[f64], power: f64) -> WaterFill {
    assert!(!levels.is_empty());
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[a].total_cmp(&levels[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| levels[i]).collect();
    let mut level = sorted[0] + power;
    let mut prefix = 0.0;
    for (m, &lv) in sorted.iter().enumerate() {
        prefix += lv;
        let nu = (power + prefix) / (m + 1) as f64;
        if nu > lv {
            level = nu;
        } else {
            break;
        }
    }
    let powers = levels.iter().map(|&lv| (level - lv).max(0.0)).collect();
    WaterFill { powers, level }
}

/// Water-filling allocation padded to `M` modes (zeros on the null modes).
pub fn waterfill_powers(ch: &ChannelSet, params: &SystemParams) -> (Vec<f64>, f64) {
    let wf = waterfill(&ch.noise_levels(params.noise_comm), params.power);
    let mut p = wf.powers;
    p.resize(ch.m(), 0.0);
    (p, wf.level)
}

/// Capacity-achieving corner `(CRB_C, R_max)`.
pub fn rate_max_waterfill(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric) -> CornerPoint {
    let (p, _) = waterfill_powers(ch, params);
    diagonal_corner(ch, params, metric, p, CornerKind::RateMax)
}

fn diagonal_corner(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric, p: Vec<f64>, kind: CornerKind) -> CornerPoint {
    let q = TransmitCovariance::from_hermitian(from_basis_diag(&ch.svd_v, &p));
    let rate = rate_diag(&p, &ch.zeta_sq(), params.noise_comm);
    let crb = match metric {
        CrbMetric::Point => crb(&q, params, metric),
        _ => crb_extended_from_eigs(&p, params, metric),
    };
    CornerPoint { q, rate, crb, metric, kind, eta: None, powers: Some(p) }
}

/// `Pη ȧ*ȧᵀ/‖ȧ‖² + (1-η)P a*aᵀ/‖a‖²`.
pub fn point_sensing_cov(params: &SystemParams, eta: f64) -> TransmitCovariance {
    let st = params.steering();
    let n = st.norms_sqr();
    let pa = outer_t(&st.a.conjugate(), &st.a).scale((1.0 - eta) * params.power / n.a);
    let q = if n.a_dot > 0.0 && eta > 0.0 {
        pa + outer_t(&st.a_dot.conjugate(), &st.a_dot).scale(eta * params.power / n.a_dot)
    } else {
        pa
    };
    TransmitCovariance::from_hermitian(q)
}

/// `inf_Q CRB₁(Q)` over `tr Q ≤ P`; attained unless `N_s < M`.
pub fn point_crb_infimum(params: &SystemParams) -> f64 {
    let n = params.steering().norms_sqr();
    let best = (n.b * n.a_dot).max(n.b_dot * n.a);
    let alpha2 = params.reflect_coeff.norm_sqr();
    if best <= 0.0 || alpha2 == 0.0 {
        return f64::INFINITY;
    }
    params.noise_sense / (2.0 * alpha2 * params.cpi() * params.power * best)
}

/// Closed-form minimum CRB (`ln` for `LogDet`).
pub fn crb_min_value(params: &SystemParams, metric: CrbMetric) -> f64 {
    let (s, l, p, m, ns) = (params.noise_sense, params.cpi(), params.power, params.m_tx as f64, params.n_rx_sense as f64);
    match metric {
        CrbMetric::Point => point_crb_infimum(params),
        CrbMetric::Trace => s * ns * m * m / (p * l),
        CrbMetric::MaxEig => m * s / (l * p),
        CrbMetric::LogDet => m * ns * (m * s / (l * p)).ln(),
    }
}

/// Sensing-optimal corner for the point target.
///
/// `N_s > M`: all power along `a*`. `N_s = M`: the CRB does not depend on the
/// mixing weight, which is picked to maximize the rate. `N_s < M`: the weight
/// sits at `1 - eps`.
pub fn crb_min_point(ch: &ChannelSet, params: &SystemParams, eps: f64) -> CornerPoint {
    let eta = match params.n_rx_sense.cmp(&params.m_tx) {
        std::cmp::Ordering::Greater => 0.0,
        std::cmp::Ordering::Less => 1.0 - eps,
        std::cmp::Ordering::Equal => best_eta(ch, params),
    };
    let q = point_sensing_cov(params, eta);
    CornerPoint {
        rate: rate(&q, ch, params),
        crb: crb(&q, params, CrbMetric::Point),
        q,
        metric: CrbMetric::Point,
        kind: CornerKind::CrbMin,
        eta: Some(eta),
        powers: None,
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

fn golden_max(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
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
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Rate-maximizing mixing weight on `[0, 1 - 1e-9]`: golden section, checked
/// against a 1000-point grid and refined around the grid winner if it is better.
fn best_eta(ch: &ChannelSet, params: &SystemParams) -> f64 {
    let hi = 1.0 - 1e-9;
    let f = |eta: f64| rate(&point_sensing_cov(params, eta), ch, params);
    let (mut best_x, mut best_f) = golden_max(&f, 0.0, hi, 1e-10);
    let n = 1000;
    let mut grid_best = (0.0, f64::NEG_INFINITY, 0usize);
    for i in 0..=n {
        let x = hi * i as f64 / n as f64;
        let v = f(x);
        if v > grid_best.1 {
            grid_best = (x, v, i);
        }
    }
    if grid_best.1 > best_f + 1e-12 {
        let i = grid_best.2;
        let lo = hi * i.saturating_sub(1) as f64 / n as f64;
        let up = hi * (i + 1).min(n) as f64 / n as f64;
        let (x, v) = golden_max(&f, lo, up, 1e-12);
        if v >= grid_best.1 {
            best_x = x;
            best_f = v;
        } else {
            best_x = grid_best.0;
            best_f = grid_best.1;
        }
    }
    for x in [0.0, hi] {
        let v = f(x);
        if v > best_f {
            best_x = x;
            best_f = v;
        }
    }
    best_x
}

/// Sensing-optimal corner for the extended target: `Q = (P/M) I` for all three scalarizations.
pub fn crb_min_extended(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric) -> CornerPoint {
    assert!(metric.is_extended());
    let m = ch.m();
    let p = vec![params.power / m as f64; m];
    let q = TransmitCovariance::from_hermitian(CMat::identity(m, m).scale(params.power / m as f64));
    CornerPoint {
        q,
        rate: rate_diag(&p, &ch.zeta_sq(), params.noise_comm),
        crb: crb_min_value(params, metric),
        metric,
        kind: CornerKind::CrbMin,
        eta: None,
        powers: Some(p),
    }
}

/// Sensing-optimal corner for any scenario.
pub fn crb_min_corner(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric, eps: f64) -> CornerPoint {
    match metric {
        CrbMetric::Point => crb_min_point(ch, params, eps),
        _ => crb_min_extended(ch, params, metric),
    }
}

/// CRB at the water-filling covariance; `+∞` when it is not estimable there.
pub fn crb_at_rate_max(ch: &ChannelSet, params: &SystemParams, metric: CrbMetric) -> f64 {
    rate_max_waterfill(ch, params, metric).crb
}

/// Power threshold below which water-filling leaves a mode unused when `r = M`:
/// `Σ_{i<M} (σ²/ζ_M² - σ²/ζ_i²)`. `None` when the channel is rank deficient.
pub fn full_rank_power_threshold(ch: &ChannelSet, params: &SystemParams) -> Option<f64> {
    let m = ch.m();
    if ch.rank_r < m {
        return None;
    }
    let lv = ch.noise_levels(params.noise_comm);
    let last = lv[m - 1];
    Some(lv[..m - 1].iter().map(|l| last - l).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::rician_channel;
    use crate::linalg::c;
    use crate::metrics::crb_point_angle;

    fn params(m: usize, ns: usize, nc: usize, power: f64) -> SystemParams {
        SystemParams {
            m_tx: m,
            n_rx_sense: ns,
            n_rx_comm: nc,
            cpi_len: 64,
            power,
            noise_comm: 1.0,
            noise_sense: 1.0,
            reflect_coeff: c(0.1, 0.0),
            target_angle: -0.4,
            rician_k: 1.0,
            seed: 7,
        }
    }

    #[test]
    fn waterfill_golden_example() {
        let wf = waterfill(&[0.5, 1.0], 3.0);
        assert!((wf.level - 2.25).abs() < 1e-15);
        assert!((wf.powers[0] - 1.75).abs() < 1e-15 && (wf.powers[1] - 1.25).abs() < 1e-15);
        let ch = ChannelSet::diagonal(&[2.0, 1.0], 2, 2);
        let p = params(2, 2, 2, 3.0);
        let corner = rate_max_waterfill(&ch, &p, CrbMetric::Trace);
        let expect = 4.5f64.log2() + 2.25f64.log2();
        assert!((corner.rate - expect).abs() < 1e-12);
        assert!((rate(&corner.q, &ch, &p) - corner.rate).abs() < 1e-12);
    }

    #[test]
    fn waterfill_single_mode_and_breakpoint() {
        let ch = ChannelSet::diagonal(&[3.0], 2, 3);
        let (p, _) = waterfill_powers(&ch, &params(3, 2, 2, 5.0));
        assert_eq!(p, vec![5.0, 0.0, 0.0]);
        // second mode activates at P = 1/1 - 1/2 = 0.5
        let wf = waterfill(&[0.5, 1.0], 0.5);
        assert!(wf.powers[1].abs() < 1e-15 && (wf.powers[0] - 0.5).abs() < 1e-15);
        let wf = waterfill(&[0.5, 1.0], 0.4);
        assert_eq!(wf.powers[1], 0.0);
    }

    #[test]
    fn waterfill_kkt() {
        let levels = [0.1, 0.4, 0.45, 2.0, 7.0];
        for power in [0.01, 0.3, 1.0, 4.0, 100.0] {
            let wf = waterfill(&levels, power);
            assert!((wf.powers.iter().sum::<f64>() - power).abs() < 1e-12 * power.max(1.0));
            for (p, l) in wf.powers.iter().zip(levels) {
                if *p > 0.0 {
                    assert!((wf.level - l - p).abs() < 1e-10);
                } else {
                    assert!(wf.level <= l + 1e-10);
                }
            }
        }
    }

    #[test]
    fn point_corner_cases() {
        let p = params(4, 6, 3, 10.0);
        let ch = rician_channel(&p, 0.5, 0.5);
        let corner = crb_min_point(&ch, &p, DEFAULT_ETA_EPSILON);
        assert_eq!(corner.eta, Some(0.0));
        let eig = corner.q.eigenvalues();
        assert!(eig[..3].iter().all(|e| e.abs() < 1e-10 * p.power));
        let n = p.steering().norms_sqr();
        let closed = p.noise_sense / (2.0 * p.reflect_coeff.norm_sqr() * p.cpi() * n.b_dot * n.a * p.power);
        assert!((corner.crb - closed).abs() / closed < 1e-10);
        assert!((corner.crb - point_crb_infimum(&p)).abs() / closed < 1e-10);
        assert!((corner.q.trace() - p.power).abs() < 1e-10);

        // N_s = M: CRB independent of eta, eta = 0 reproduces the rank-one covariance
        let p_eq = params(4, 4, 3, 10.0);
        let q0 = point_sensing_cov(&p_eq, 0.0);
        let q_half = point_sensing_cov(&p_eq, 0.5);
        let (a, b) = (crb_point_angle(&q0, &p_eq), crb_point_angle(&q_half, &p_eq));
        assert!((a - b).abs() / a < 1e-10);
        let ch_eq = rician_channel(&p_eq, 0.5, 0.5);
        let corner = crb_min_point(&ch_eq, &p_eq, DEFAULT_ETA_EPSILON);
        assert!(corner.rate >= rate(&q0, &ch_eq, &p_eq) - 1e-12);
        assert!((corner.q.trace() - p_eq.power).abs() < 1e-10);

        // N_s < M: eta near one, CRB approaches the infimum from above
        let p_lt = params(6, 3, 3, 10.0);
        let ch_lt = rician_channel(&p_lt, 0.5, 0.5);
        let corner = crb_min_point(&ch_lt, &p_lt, DEFAULT_ETA_EPSILON);
        let inf = point_crb_infimum(&p_lt);
        assert!(corner.crb >= inf && corner.crb <= inf * (1.0 + 1e-5));
        assert!((corner.q.trace() - p_lt.power).abs() < 1e-9);
    }

    #[test]
    fn extended_corner_closed_forms() {
        let p = params(8, 12, 6, 800.0);
        let ch = rician_channel(&p, 0.5, 0.5);
        for metric in CrbMetric::EXTENDED {
            let corner = crb_min_extended(&ch, &p, metric);
            let eval = crb(&corner.q, &p, metric);
            assert!((eval - corner.crb).abs() <= 1e-12 * corner.crb.abs());
            let expect: f64 = ch.zeta_sq().iter().map(|z| (1.0 + z * 100.0).log2()).sum();
            assert!((corner.rate - expect).abs() < 1e-12);
            assert!(corner.rate <= rate_max_waterfill(&ch, &p, metric).rate + 1e-12);
        }
        let p1 = params(2, 1, 2, 3.0);
        let one = crb_min_extended(&ChannelSet::diagonal(&[1.0], 2, 2), &p1, CrbMetric::Trace);
        assert!((one.q.trace() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn equal_power_beats_diagonal_grid() {
        let p = params(2, 3, 2, 2.0);
        let steps = 2000;
        for metric in CrbMetric::EXTENDED {
            let best = crb_min_value(&p, metric);
            for i in 1..steps {
                let p1 = p.power * i as f64 / steps as f64;
                let v = crb_extended_from_eigs(&[p1, p.power - p1], &p, metric);
                assert!(v >= best - 1e-9 * best.abs(), "{metric} at {p1}");
            }
        }
    }

    #[test]
    fn remark_threshold_behaviour() {
        // rank deficient → infinite extended CRB at rate max
        let p = params(4, 3, 2, 10.0);
        let ch = rician_channel(&p, 0.3, 0.3);
        assert!(ch.rank_r < 4);
        for metric in CrbMetric::EXTENDED {
            assert!(crb_at_rate_max(&ch, &p, metric).is_infinite());
        }
        assert!(full_rank_power_threshold(&ch, &p).is_none());
        // full rank with P above the threshold → finite
        let p = params(3, 3, 3, 10.0);
        let ch = ChannelSet::diagonal(&[4.0, 2.0, 1.0], 3, 3);
        let p0 = full_rank_power_threshold(&ch, &p).unwrap();
        assert!((p0 - ((1.0 - 0.25) + (1.0 - 0.5))).abs() < 1e-15);
        assert!(crb_at_rate_max(&ch, &p, CrbMetric::Trace).is_finite());
        assert!(crb_at_rate_max(&ch, &p.with_power(p0 * 0.9), CrbMetric::Trace).is_infinite());
        // point target with a random channel → finite
        let p = params(4, 6, 3, 10.0);
        let ch = rician_channel(&p, 0.3, 0.3);
        assert!(crb_at_rate_max(&ch, &p, CrbMetric::Point).is_finite());
    }
}
