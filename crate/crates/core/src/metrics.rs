//! Rate and CRB evaluators for a given transmit covariance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SteeringSet, SystemParams};
use crate::error::{IsacError, Result};
use crate::linalg::{fro_norm, hermitize, ln_det_hpd, real_trace, trace_prod, CMat, Eigh};

/// Hermitian PSD transmit covariance `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariance(CMat);

impl TransmitCovariance {
    /// Validates Hermitian symmetry (1e-12 relative) and PSD (eigenvalues ≥ -1e-10·scale).
    pub fn new(q: CMat) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(IsacError::InvalidParams("covariance must be square".into()));
        }
        let scale = fro_norm(&q).max(1e-300);
        if fro_norm(&(&q - q.adjoint())) > 1e-12 * scale {
            return Err(IsacError::InvalidParams("covariance is not Hermitian".into()));
        }
        let q = hermitize(&q);
        if Eigh::new(&q).min() < -1e-10 * scale {
            return Err(IsacError::InvalidParams("covariance is not PSD".into()));
        }
        Ok(TransmitCovariance(q))
    }

    /// Wraps after symmetrizing, skipping the PSD check.
    pub fn from_hermitian(q: CMat) -> Self {
        TransmitCovariance(hermitize(&q))
    }

    pub fn zeros(m: usize) -> Self {
        TransmitCovariance(CMat::zeros(m, m))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        real_trace(&self.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        TransmitCovariance(self.0.scale(s))
    }

    /// `(1 - t)·self + t·other`.
    pub fn blend(&self, other: &Self, t: f64) -> Self {
        TransmitCovariance(self.0.scale(1.0 - t) + other.0.scale(t))
    }

    pub fn is_power_feasible(&self, power: f64) -> bool {
        self.trace() <= power * (1.0 + 1e-9)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        Eigh::new(&self.0).values
    }
}

/// Which CRB scalarization a constraint or evaluation refers to.
///
/// `LogDet` values are always natural logs of the determinant bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum CrbMetric {
    #[serde(alias = "point_angle")]
    Point,
    Trace,
    MaxEig,
    LogDet,
}

impl CrbMetric {
    pub const ALL: [CrbMetric; 4] = [CrbMetric::Point, CrbMetric::Trace, CrbMetric::MaxEig, CrbMetric::LogDet];
    pub const EXTENDED: [CrbMetric; 3] = [CrbMetric::Trace, CrbMetric::MaxEig, CrbMetric::LogDet];

    /// Scenario number 1..=4.
    pub fn scenario(self) -> u8 {
        match self {
            CrbMetric::Point => 1,
            CrbMetric::Trace => 2,
            CrbMetric::MaxEig => 3,
            CrbMetric::LogDet => 4,
        }
    }

    pub fn from_scenario(i: u8) -> Option<Self> {
        Self::ALL.get((i as usize).wrapping_sub(1)).copied()
    }

    pub fn is_extended(self) -> bool {
        self != CrbMetric::Point
    }

    /// Whether CRB values are exchanged in log domain.
    pub fn is_log(self) -> bool {
        self == CrbMetric::LogDet
    }

    pub fn name(self) -> &'static str {
        match self {
            CrbMetric::Point => "point",
            CrbMetric::Trace => "trace",
            CrbMetric::MaxEig => "maxeig",
            CrbMetric::LogDet => "logdet",
        }
    }
}

impl fmt::Display for CrbMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CrbMetric {
    type Err = IsacError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "point" | "point_angle" | "1" => Ok(CrbMetric::Point),
            "trace" | "2" => Ok(CrbMetric::Trace),
            "maxeig" | "max_eig" | "3" => Ok(CrbMetric::MaxEig),
            "logdet" | "log_det" | "det" | "4" => Ok(CrbMetric::LogDet),
            other => Err(IsacError::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Achievable rate `log₂ det(I + H Q Hᴴ/σ_c²)` in bits per channel use.
pub fn rate(q: &TransmitCovariance, ch: &ChannelSet, params: &SystemParams) -> f64 {
    rate_raw(q.matrix(), &ch.h_comm, params.noise_comm)
}

pub fn rate_raw(q: &CMat, h: &CMat, noise: f64) -> f64 {
    let n = h.nrows();
    let g = CMat::identity(n, n) + (h * q * h.adjoint()).unscale(noise);
    (ln_det_hpd(&g) / std::f64::consts::LN_2).max(0.0)
}

/// Rate of a diagonal allocation in the right-singular basis: `Σ log₂(1 + ζ_k² p_k/σ²)`.
pub fn rate_diag(p: &[f64], zeta_sq: &[f64], noise: f64) -> f64 {
    zeta_sq
        .iter()
        .zip(p)
        .map(|(z, pk)| (z * pk.max(0.0) / noise).ln_1p())
        .sum::<f64>()
        / std::f64::consts::LN_2
}

/// The three trace terms of the point-target Fisher information:
/// `tr(ȦᴴȦQ)`, `tr(ȦᴴAQ)` and `tr(AᴴAQ)`.
#[derive(Debug, Clone, Copy)]
pub struct PointFisherTerms {
    pub dd: f64,
    pub da: num_complex::Complex64,
    pub aa: f64,
}

impl PointFisherTerms {
    pub fn new(q: &CMat, st: &SteeringSet) -> Self {
        let a = st.response();
        let ad = st.response_deriv();
        let dd = trace_prod(&(ad.adjoint() * &ad), q).re;
        let da = trace_prod(&(ad.adjoint() * &a), q);
        let aa = trace_prod(&(a.adjoint() * &a), q).re;
        PointFisherTerms { dd, da, aa }
    }

    /// `tr(ȦᴴȦQ) - |tr(ȦᴴAQ)|²/tr(AᴴAQ)`; zero when `tr(AᴴAQ)` vanishes.
    pub fn schur(&self) -> f64 {
        if self.aa <= 0.0 {
            return 0.0;
        }
        self.dd - self.da.norm_sqr() / self.aa
    }
}

/// Angle CRB of a point target; `+∞` when the Fisher determinant collapses.
pub fn crb_point_angle(q: &TransmitCovariance, params: &SystemParams) -> f64 {
    let st = params.steering();
    let t = PointFisherTerms::new(q.matrix(), &st);
    let den = t.dd * t.aa - t.da.norm_sqr();
    let alpha2 = params.reflect_coeff.norm_sqr();
    // Bounds of dd and aa over tr Q; guards against pure rounding noise in both.
    let n = st.norms_sqr();
    let tr = q.trace().max(0.0);
    let scale = (n.b * n.a_dot + n.b_dot * n.a) * n.b * n.a * tr * tr;
    if !(t.aa > 0.0) || !(t.dd > 0.0) || den <= 1e-12 * (t.dd * t.aa).max(scale) || alpha2 == 0.0 {
        return f64::INFINITY;
    }
    params.noise_sense * t.aa / (2.0 * alpha2 * params.cpi() * den)
}

/// Extended-target CRB under the chosen scalarization (`LogDet` in natural log).
/// Returns `+∞` when `λ_min(Q) ≤ 1e-12·λ_max(Q)`.
pub fn crb_extended(q: &TransmitCovariance, params: &SystemParams, metric: CrbMetric) -> f64 {
    let eig = q.eigenvalues();
    crb_extended_from_eigs(&eig, params, metric)
}

pub fn crb_extended_from_eigs(eig: &[f64], params: &SystemParams, metric: CrbMetric) -> f64 {
    let lmax = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lmax > 0.0) || lmin <= 1e-12 * lmax {
        return f64::INFINITY;
    }
    let ratio = params.noise_sense / params.cpi();
    let ns = params.n_rx_sense as f64;
    let m = eig.len() as f64;
    match metric {
        CrbMetric::Trace => ratio * ns * eig.iter().map(|l| 1.0 / l).sum::<f64>(),
        CrbMetric::MaxEig => ratio / lmin,
        CrbMetric::LogDet => m * ns * ratio.ln() - ns * eig.iter().map(|l| l.ln()).sum::<f64>(),
        CrbMetric::Point => panic!("point metric is not an extended-target scalarization"),
    }
}

pub fn crb(q: &TransmitCovariance, params: &SystemParams, metric: CrbMetric) -> f64 {
    match metric {
        CrbMetric::Point => crb_point_angle(q, params),
        _ => crb_extended(q, params, metric),
    }
}

/// All four CRB values at one covariance.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct CrbValues {
    pub point: f64,
    pub trace: f64,
    pub maxeig: f64,
    pub logdet: f64,
}

impl CrbValues {
    pub fn evaluate(q: &TransmitCovariance, params: &SystemParams) -> Self {
        let eig = q.eigenvalues();
        CrbValues {
            point: crb_point_angle(q, params),
            trace: crb_extended_from_eigs(&eig, params, CrbMetric::Trace),
            maxeig: crb_extended_from_eigs(&eig, params, CrbMetric::MaxEig),
            logdet: crb_extended_from_eigs(&eig, params, CrbMetric::LogDet),
        }
    }

    pub fn get(&self, metric: CrbMetric) -> f64 {
        match metric {
            CrbMetric::Point => self.point,
            CrbMetric::Trace => self.trace,
            CrbMetric::MaxEig => self.maxeig,
            CrbMetric::LogDet => self.logdet,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSet;
    use crate::linalg::{c, cr, outer_t, CVec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(m: usize, ns: usize) -> SystemParams {
        SystemParams {
            m_tx: m,
            n_rx_sense: ns,
            n_rx_comm: 2,
            cpi_len: 64,
            power: 10.0,
            noise_comm: 1.0,
            noise_sense: 0.7,
            reflect_coeff: c(0.3, -0.4),
            target_angle: 0.41,
            rician_k: 1.0,
            seed: 1,
        }
    }

    fn random_psd(rng: &mut ChaCha8Rng, m: usize) -> CMat {
        let a = CMat::from_fn(m, m, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        &a * a.adjoint()
    }

    #[test]
    fn rate_examples() {
        let p = params(2, 2);
        let ch = ChannelSet::diagonal(&[2.0, 1.0], 2, 2);
        assert_eq!(rate(&TransmitCovariance::zeros(2), &ch, &p), 0.0);
        let scalar = CMat::from_element(1, 1, cr(1.0));
        assert!((rate_raw(&scalar, &scalar, 1.0) - 1.0).abs() < 1e-15);
        let q = CMat::from_diagonal(&CVec::from_vec(vec![cr(1.75), cr(1.25)]));
        let q = ch.svd_v.clone() * q * ch.svd_v.adjoint();
        let expect = 4.5f64.log2() + 2.25f64.log2();
        assert!((rate(&TransmitCovariance::from_hermitian(q), &ch, &p) - expect).abs() < 1e-12);
        assert!((expect - 3.33985).abs() < 1e-5);
    }

    #[test]
    fn point_crb_rank_one_closed_form() {
        for (m, ns) in [(4, 6), (8, 12), (3, 3), (5, 2)] {
            let p = params(m, ns);
            let st = p.steering();
            let n = st.norms_sqr();
            let q = outer_t(&st.a.conjugate(), &st.a).scale(p.power / n.a);
            let got = crb_point_angle(&TransmitCovariance::from_hermitian(q), &p);
            let expect = p.noise_sense / (2.0 * p.reflect_coeff.norm_sqr() * p.cpi() * n.b_dot * n.a * p.power);
            assert!(((got - expect) / expect).abs() < 1e-10, "{got} vs {expect}");
        }
    }

    #[test]
    fn point_crb_single_rx_is_unestimable() {
        let p = params(4, 1);
        let st = p.steering();
        let q = outer_t(&st.a.conjugate(), &st.a).scale(p.power / 4.0);
        assert!(crb_point_angle(&TransmitCovariance::from_hermitian(q), &p).is_infinite());
    }

    #[test]
    fn extended_closed_forms_at_equal_power() {
        let p = params(8, 12);
        let q = TransmitCovariance::from_hermitian(CMat::identity(8, 8).scale(p.power / 8.0));
        let (s, l, pw, m, ns) = (p.noise_sense, p.cpi(), p.power, 8.0, 12.0);
        let tr = crb_extended(&q, &p, CrbMetric::Trace);
        assert!((tr - s * ns * m * m / (pw * l)).abs() / tr < 1e-12);
        let me = crb_extended(&q, &p, CrbMetric::MaxEig);
        assert!((me - m * s / (l * pw)).abs() / me < 1e-12);
        let ld = crb_extended(&q, &p, CrbMetric::LogDet);
        let expect = m * ns * (m * s / (l * pw)).ln();
        assert!((ld - expect).abs() / expect.abs() < 1e-12);
    }

    #[test]
    fn singular_q_is_unestimable() {
        let p = params(3, 2);
        let q = TransmitCovariance::from_hermitian(CMat::from_diagonal(&CVec::from_vec(vec![cr(1.0), cr(1.0), cr(0.0)])));
        for m in CrbMetric::EXTENDED {
            assert!(crb_extended(&q, &p, m).is_infinite());
        }
    }

    #[test]
    fn homogeneity_all_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = params(4, 3);
        for _ in 0..100 {
            let q = TransmitCovariance::from_hermitian(random_psd(&mut rng, 4));
            let cfac = 0.1 + 5.0 * rng.random::<f64>();
            let q2 = q.scaled(cfac);
            for metric in [CrbMetric::Point, CrbMetric::Trace, CrbMetric::MaxEig] {
                let (a, b) = (crb(&q, &p, metric), crb(&q2, &p, metric));
                assert!((b * cfac - a).abs() <= 1e-9 * a, "{metric}");
            }
            let (a, b) = (crb(&q, &p, CrbMetric::LogDet), crb(&q2, &p, CrbMetric::LogDet));
            let shift = 4.0 * 3.0 * cfac.ln();
            assert!((a - shift - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn kronecker_min_eigenvalue_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m, ns, scale) = (3usize, 2usize, 12.5);
        for _ in 0..20 {
            let q = random_psd(&mut rng, m);
            let qt = q.transpose();
            let mut kron = CMat::zeros(m * ns, m * ns);
            for i in 0..m {
                for j in 0..m {
                    for k in 0..ns {
                        kron[(i * ns + k, j * ns + k)] = qt[(i, j)] * scale;
                    }
                }
            }
            let a = Eigh::new(&kron).min();
            let b = scale * Eigh::new(&q).min();
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn rate_is_midpoint_concave(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = CMat::from_fn(3, 4, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
            let q1 = random_psd(&mut rng, 4);
            let q2 = random_psd(&mut rng, 4);
            let mid = (&q1 + &q2).scale(0.5);
            let lhs = rate_raw(&mid, &h, 0.3);
            let rhs = 0.5 * (rate_raw(&q1, &h, 0.3) + rate_raw(&q2, &h, 0.3));
            prop_assert!(lhs >= rhs - 1e-9);
        }

        #[test]
        fn trace_crb_is_midpoint_convex(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = params(4, 2);
            let q1 = random_psd(&mut rng, 4) + CMat::identity(4, 4).scale(0.05);
            let q2 = random_psd(&mut rng, 4) + CMat::identity(4, 4).scale(0.05);
            let mid = TransmitCovariance::from_hermitian((&q1 + &q2).scale(0.5));
            let a = crb_extended(&mid, &p, CrbMetric::Trace);
            let b = 0.5 * (crb_extended(&TransmitCovariance::from_hermitian(q1), &p, CrbMetric::Trace)
                + crb_extended(&TransmitCovariance::from_hermitian(q2), &p, CrbMetric::Trace));
            prop_assert!(a <= b + 1e-9 * b.max(1.0));
        }
    }
}
