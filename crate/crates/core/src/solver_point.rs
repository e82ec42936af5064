//! Point-target rate maximization under an angle-CRB constraint, solved in the
//! Lagrange dual with the ellipsoid method.
//!
//! The CRB constraint is written as the 2×2 linear matrix inequality
//! `[tr(ȦᴴȦQ) - 1/Γ̃, conj(tr(ȦᴴAQ)); tr(ȦᴴAQ), tr(AᴴAQ)] ⪰ 0` and dualized with
//! a Hermitian multiplier `Z = [α, β + jγ; β - jγ, ν]`. For fixed duals the
//! Lagrangian is maximized in closed form by water-filling over the channel
//! whitened by `C(λ, Z)`.

use std::time::Instant;

use log::warn;

use crate::channel::{ChannelSet, SteeringSet, SystemParams};
use crate::corner::{crb_min_point, point_crb_infimum, point_sensing_cov, rate_max_waterfill, DEFAULT_ETA_EPSILON};
use crate::ellipsoid::{minimize, EllipsoidOptions, Step};
use crate::linalg::{hermitize, min_eig_2x2, trace_prod, CMat, CVec, Eigh, FullSvd};
use crate::metrics::{crb_point_angle, rate, CrbMetric, CrbValues, PointFisherTerms, TransmitCovariance};
use crate::outcome::{Duals, KktResiduals, SolveOutcome, SolveStatus};

const LN2: f64 = std::f64::consts::LN_2;

/// Dual variables of the point-target problem.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DualPoint {
    pub lambda: f64,
    pub alpha_d: f64,
    pub beta_d: f64,
    pub gamma_d: f64,
    pub nu_d: f64,
}

impl DualPoint {
    pub fn z_min_eig(&self) -> (f64, [num_complex::Complex64; 2]) {
        min_eig_2x2(self.alpha_d, num_complex::Complex64::new(self.beta_d, self.gamma_d), self.nu_d)
    }
}

/// `ȦᴴȦ`, `ȦᴴA`, `AᴴA` for the point target.
#[derive(Debug, Clone)]
pub struct PointKernels {
    pub dd: CMat,
    pub da: CMat,
    pub aa: CMat,
}

impl PointKernels {
    pub fn new(st: &SteeringSet) -> Self {
        let a = st.response();
        let ad = st.response_deriv();
        PointKernels { dd: ad.adjoint() * &ad, da: ad.adjoint() * &a, aa: a.adjoint() * &a }
    }

    /// `(q^H K_dd q, q^H K_da q, q^H K_aa q)`.
    fn quad(&self, q: &CVec) -> (f64, num_complex::Complex64, f64) {
        let qa = q.adjoint();
        ((&qa * &self.dd * q)[(0, 0)].re, (&qa * &self.da * q)[(0, 0)], (&qa * &self.aa * q)[(0, 0)].re)
    }
}

/// `C = λI - [α ȦᴴȦ + (β+jγ) ȦᴴA + (β-jγ) AᴴȦ + ν AᴴA]`.
pub fn build_c_matrix(dual: &DualPoint, params: &SystemParams) -> CMat {
    c_from_kernels(dual, &PointKernels::new(&params.steering()))
}

fn c_from_kernels(dual: &DualPoint, k: &PointKernels) -> CMat {
    let m = k.dd.nrows();
    let z = num_complex::Complex64::new(dual.beta_d, dual.gamma_d);
    let inner = k.dd.scale(dual.alpha_d) + &k.da * z + k.da.adjoint() * z.conj() + k.aa.scale(dual.nu_d);
    hermitize(&(CMat::identity(m, m).scale(dual.lambda) - inner))
}

/// Eigen-split of `C` and the whitened channel `W = H U₁ Δ^{-1/2}`.
#[derive(Debug, Clone)]
pub struct CompositeDecomposition {
    pub c_matrix: CMat,
    pub u1: CMat,
    pub delta: Vec<f64>,
    /// Eigenvectors of `C` treated as its null space.
    pub u0: CMat,
    /// `F` with `q_star = F Fᴴ`.
    pub factor: CMat,
    pub w: CMat,
    pub w_svd: FullSvd,
}

#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub g: f64,
    pub q_star: TransmitCovariance,
    pub bounded: bool,
    pub decomposition: Option<CompositeDecomposition>,
}

/// Relative size below which an eigenvalue of `C` counts as zero.
const C_NULL_TOL: f64 = 1e-9;

/// Evaluates the dual function at `dual`. The returned `q_star` is the
/// minimal-norm maximizer of the Lagrangian, supported on the positive
/// eigenspace of `C`.
pub fn dual_eval(dual: &DualPoint, ch: &ChannelSet, params: &SystemParams, gamma1_tilde: f64) -> DualEvaluation {
    let kernels = PointKernels::new(&params.steering());
    dual_eval_with(dual, ch, params, gamma1_tilde, &kernels)
}

fn unbounded(m: usize) -> DualEvaluation {
    DualEvaluation { g: f64::INFINITY, q_star: TransmitCovariance::zeros(m), bounded: false, decomposition: None }
}

fn dual_eval_with(
    dual: &DualPoint,
    ch: &ChannelSet,
    params: &SystemParams,
    gamma1_tilde: f64,
    kernels: &PointKernels,
) -> DualEvaluation {
    let m = ch.m();
    let c = c_from_kernels(dual, kernels);
    let eig = Eigh::new(&c);
    let scale = eig.values.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    if eig.min() < -1e-12 * scale {
        return unbounded(m);
    }
    let cut = C_NULL_TOL * eig.max().max(0.0);
    let pos: Vec<usize> = (0..m).filter(|&i| eig.values[i] > cut).collect();
    let null: Vec<usize> = (0..m).filter(|&i| eig.values[i] <= cut).collect();
    let h_norm = ch.svd_sigma.first().copied().unwrap_or(0.0);
    for &i in &null {
        let hu = &ch.h_comm * eig.vectors.column(i);
        if hu.norm() > 1e-7 * h_norm {
            return unbounded(m);
        }
    }
    let u1 = CMat::from_fn(m, pos.len(), |r, j| eig.vectors[(r, pos[j])]);
    let u0 = CMat::from_fn(m, null.len(), |r, j| eig.vectors[(r, null[j])]);
    let delta: Vec<f64> = pos.iter().map(|&i| eig.values[i]).collect();

    let mut w = &ch.h_comm * &u1;
    for (j, d) in delta.iter().enumerate() {
        let s = 1.0 / d.sqrt();
        w.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    let (q, factor, sum_p, w_svd) = if pos.is_empty() {
        (CMat::zeros(m, m), CMat::zeros(m, 0), 0.0, FullSvd::new(&CMat::zeros(1, 1)))
    } else {
        let w_svd = FullSvd::new(&w);
        let p: Vec<f64> = w_svd
            .sigma
            .iter()
            .map(|s| {
                let z2 = s * s;
                if z2 > 0.0 {
                    (1.0 / LN2 - params.noise_comm / z2).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        // Q₁₁ = Δ^{-1/2} V_W diag(p) V_Wᴴ Δ^{-1/2}
        let mut b = w_svd.v.clone();
        for (j, &pj) in p.iter().enumerate() {
            let s = pj.sqrt();
            b.column_mut(j).iter_mut().for_each(|z| *z *= s);
        }
        for (i, d) in delta.iter().enumerate() {
            let s = 1.0 / d.sqrt();
            b.row_mut(i).iter_mut().for_each(|z| *z *= s);
        }
        let ub = &u1 * b;
        let keep: Vec<usize> = (0..p.len()).filter(|&j| p[j] > 0.0).collect();
        let factor = CMat::from_fn(m, keep.len(), |r, j| ub[(r, keep[j])]);
        (&ub * ub.adjoint(), factor, p.iter().sum::<f64>(), w_svd)
    };
    let q_star = TransmitCovariance::from_hermitian(q);
    let g = rate(&q_star, ch, params) + dual.lambda * params.power - dual.alpha_d / gamma1_tilde - sum_p;
    DualEvaluation {
        g,
        q_star,
        bounded: true,
        decomposition: Some(CompositeDecomposition { c_matrix: c, u1, delta, u0, factor, w, w_svd }),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PointSolverOptions {
    pub max_iter: usize,
    /// Relative duality-gap target of the dual search.
    pub gap_tol: f64,
    /// Offset of the mixing weight from 1 for the sensing corner when `N_s < M`.
    pub eta_epsilon: f64,
    /// Duality gap, in bits, above which the result is not reported optimal.
    pub gap_report_tol: f64,
}

impl Default for PointSolverOptions {
    fn default() -> Self {
        PointSolverOptions { max_iter: 50_000, gap_tol: 1e-12, eta_epsilon: DEFAULT_ETA_EPSILON, gap_report_tol: 1e-4 }
    }
}

/// Maps normalized search coordinates to duals; the normalization makes all
/// constraint terms of order one at `tr Q = P`.
#[derive(Debug, Clone, Copy)]
struct DualScaling {
    lambda: f64,
    alpha: f64,
    cross: f64,
    nu: f64,
}

impl DualScaling {
    fn new(params: &SystemParams) -> Self {
        let n = params.steering().norms_sqr();
        let sd = (n.b * n.a_dot + n.b_dot * n.a).max(f64::MIN_POSITIVE);
        let sa = (n.b * n.a).max(f64::MIN_POSITIVE);
        let p = params.power;
        DualScaling { lambda: 1.0 / p, alpha: 1.0 / (sd * p), cross: 1.0 / (p * (sd * sa).sqrt()), nu: 1.0 / (sa * p) }
    }

    fn dual(&self, y: &[f64]) -> DualPoint {
        DualPoint {
            lambda: y[0] * self.lambda,
            alpha_d: y[1] * self.alpha,
            beta_d: y[2] * self.cross,
            gamma_d: y[3] * self.cross,
            nu_d: y[4] * self.nu,
        }
    }

    fn chain(&self, g: [f64; 5]) -> Vec<f64> {
        vec![g[0] * self.lambda, g[1] * self.alpha, g[2] * self.cross, g[3] * self.cross, g[4] * self.nu]
    }
}

/// Ellipsoid oracle at normalized point `y`.
fn oracle_step(
    y: &[f64],
    sc: &DualScaling,
    ch: &ChannelSet,
    params: &SystemParams,
    gt: f64,
    kernels: &PointKernels,
) -> Step {
    if y[0] < 0.0 {
        return Step::Cut { violation: -y[0], subgrad: vec![-1.0, 0.0, 0.0, 0.0, 0.0] };
    }
    // Z ⪰ 0 in normalized coordinates (a congruence of the original Z)
    let (zmin, z) = min_eig_2x2(y[1], num_complex::Complex64::new(y[2], y[3]), y[4]);
    if zmin < 0.0 {
        let cross = z[0].conj() * z[1];
        return Step::Cut {
            violation: -zmin,
            subgrad: vec![0.0, -z[0].norm_sqr(), -2.0 * cross.re, 2.0 * cross.im, -z[1].norm_sqr()],
        };
    }
    let dual = sc.dual(y);
    let c = c_from_kernels(&dual, kernels);
    let eig = Eigh::new(&c);
    let scale = eig.values.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let eval = if eig.min() < -1e-12 * scale { None } else { Some(dual_eval_with(&dual, ch, params, gt, kernels)) };
    match eval {
        Some(ev) if ev.bounded => {
            let t = PointFisherTerms::new(ev.q_star.matrix(), &params.steering());
            let g = [params.power - ev.q_star.trace(), t.dd - 1.0 / gt, 2.0 * t.da.re, -2.0 * t.da.im, t.aa];
            Step::Objective { value: ev.g, subgrad: sc.chain(g) }
        }
        _ => {
            // C not PSD, or its null space meets the channel: cut on the min eigenvector
            let q = eig.vectors.column(0).into_owned();
            let (kdd, kda, kaa) = kernels.quad(&q);
            let g = [-1.0, kdd, 2.0 * kda.re, -2.0 * kda.im, kaa];
            Step::Cut { violation: (-eig.min()).max(0.0), subgrad: sc.chain(g) }
        }
    }
}

/// Maximizes the rate subject to `tr Q ≤ P` and `CRB₁(Q) ≤ Γ₁`.
pub fn solve_p1(ch: &ChannelSet, params: &SystemParams, gamma1: f64) -> SolveOutcome {
    solve_p1_with(ch, params, gamma1, &PointSolverOptions::default())
}

pub fn solve_p1_with(ch: &ChannelSet, params: &SystemParams, gamma1: f64, opts: &PointSolverOptions) -> SolveOutcome {
    let start = Instant::now();
    let m = ch.m();
    let crb_inf = point_crb_infimum(params);
    if !(gamma1 > 0.0) || gamma1 < crb_inf * (1.0 - 1e-9) {
        return SolveOutcome::infeasible(m, CrbMetric::Point, gamma1);
    }
    let gt = params.gamma1_tilde(gamma1);

    // A slack CRB constraint leaves plain water-filling optimal.
    let wf = rate_max_waterfill(ch, params, CrbMetric::Point);
    if wf.crb <= gamma1 {
        let level = ch.noise_levels(params.noise_comm)[0] + wf.powers.as_ref().map_or(0.0, |p| p[0]);
        let duals = Duals::Point { lambda: 1.0 / (LN2 * level), alpha: 0.0, beta: 0.0, gamma: 0.0, nu: 0.0 };
        return finish(wf.q, ch, params, gamma1, wf.rate, duals, 0, true, opts, start);
    }

    let kernels = PointKernels::new(&params.steering());
    let sc = DualScaling::new(params);
    let ell_opts = EllipsoidOptions { max_iter: opts.max_iter, abs_tol: 0.0, rel_tol: opts.gap_tol, volume_tol: 1e-300 };
    let center = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut radius = 1e3;
    let mut total_iter = 0;
    let mut result = None;
    for _ in 0..3 {
        let res = minimize(&center, &[radius; 5], &ell_opts, |y| oracle_step(y, &sc, ch, params, gt, &kernels));
        total_iter += res.iterations;
        let near_edge = res
            .best_x
            .as_ref()
            .is_none_or(|x| x.iter().zip(center).any(|(a, c0)| (a - c0).abs() > 0.5 * radius));
        let done = !near_edge;
        result = Some(res);
        if done {
            break;
        }
        radius *= 100.0;
    }
    let res = result.expect("at least one ellipsoid run");
    let Some(y) = res.best_x.clone() else {
        warn!("point solver found no dual-feasible point");
        let q = sensing_cov_for(ch, params, gamma1, opts.eta_epsilon);
        return finish(q, ch, params, gamma1, f64::INFINITY, Duals::None, total_iter, false, opts, start);
    };
    let dual = sc.dual(&y);
    let q = recover_primal(&dual, ch, params, gamma1, gt, &kernels, opts);
    let duals = Duals::Point { lambda: dual.lambda, alpha: dual.alpha_d, beta: dual.beta_d, gamma: dual.gamma_d, nu: dual.nu_d };
    finish(q, ch, params, gamma1, res.best_value, duals, total_iter, res.converged, opts, start)
}

/// A covariance meeting `CRB ≤ Γ₁` with the largest Fisher margin available.
fn sensing_cov_for(ch: &ChannelSet, params: &SystemParams, gamma1: f64, eps: f64) -> TransmitCovariance {
    if params.n_rx_sense >= params.m_tx {
        return crb_min_point(ch, params, eps).q;
    }
    let n = params.steering().norms_sqr();
    let (a, b) = (n.b * n.a_dot, n.b_dot * n.a);
    let crb_inf = point_crb_infimum(params);
    let mut delta = eps;
    if a > b && gamma1 > crb_inf {
        delta = delta.min(0.5 * a * (1.0 - crb_inf / gamma1) / (a - b));
    }
    point_sensing_cov(params, 1.0 - delta.max(0.0))
}

/// Primal point from (approximately) optimal duals: the Lagrangian maximizer
/// on the positive eigenspace of `C`, power in the null space of `C` placed to
/// maximize the Fisher margin, then a minimal blend toward the sensing corner
/// if the CRB constraint is still violated.
fn recover_primal(
    dual: &DualPoint,
    ch: &ChannelSet,
    params: &SystemParams,
    gamma1: f64,
    gt: f64,
    kernels: &PointKernels,
    opts: &PointSolverOptions,
) -> TransmitCovariance {
    let q = recover_from_duals(dual, ch, params, gamma1, gt, kernels, opts);
    // right at the sensing corner the duals can be poor; the corner itself is a safe floor
    let qs = sensing_cov_for(ch, params, gamma1, opts.eta_epsilon);
    if crb_point_angle(&q, params) <= gamma1 && crb_point_angle(&qs, params) <= gamma1 {
        let alt = tighten_toward_waterfill(qs, ch, params, gamma1);
        if rate(&alt, ch, params) > rate(&q, ch, params) {
            return alt;
        }
    }
    q
}

fn recover_from_duals(
    dual: &DualPoint,
    ch: &ChannelSet,
    params: &SystemParams,
    gamma1: f64,
    gt: f64,
    kernels: &PointKernels,
    opts: &PointSolverOptions,
) -> TransmitCovariance {
    let ev = dual_eval_with(dual, ch, params, gt, kernels);
    let mut q = ev.q_star.clone();
    if let Some(dec) = &ev.decomposition {
        let residual = params.power - q.trace();
        if dec.u0.ncols() > 0 && residual > 0.0 {
            q = complete_null_space(&dec.factor, &dec.u0, residual, kernels);
        }
    }
    let tr = q.trace();
    if tr > 0.0 {
        q = q.scaled(params.power / tr);
    }
    if crb_point_angle(&q, params) <= gamma1 {
        return tighten_toward_waterfill(q, ch, params, gamma1);
    }
    let qs = sensing_cov_for(ch, params, gamma1, opts.eta_epsilon);
    if crb_point_angle(&qs, params) > gamma1 {
        return qs;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if crb_point_angle(&q.blend(&qs, mid), params) <= gamma1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    tighten_toward_waterfill(q.blend(&qs, hi), ch, params, gamma1)
}

/// Largest step from a feasible `q` toward the water-filling covariance that
/// keeps `CRB ≤ Γ₁`. The rate is concave along the segment and peaks at its
/// far end, so it does not decrease.
fn tighten_toward_waterfill(q: TransmitCovariance, ch: &ChannelSet, params: &SystemParams, gamma1: f64) -> TransmitCovariance {
    let wf = rate_max_waterfill(ch, params, CrbMetric::Point).q;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if crb_point_angle(&q.blend(&wf, mid), params) <= gamma1 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        q
    } else {
        q.blend(&wf, lo)
    }
}

/// Completes `F Fᴴ` with `power` spent on the null space of `C`, maximizing
/// the Fisher margin. Every PSD completion has the form
/// `(F + U₀K)(F + U₀K)ᴴ + U₀GGᴴU₀ᴴ`; the rate only sees `F Fᴴ`.
fn complete_null_space(factor: &CMat, u0: &CMat, power: f64, kernels: &PointKernels) -> TransmitCovariance {
    let (m, r, k) = (u0.nrows(), factor.ncols(), u0.ncols());
    let nk = k * r;
    let dim = 2 * (nk + k * k);
    let build = |v: &[f64]| -> CMat {
        let kk = CMat::from_fn(k, r, |i, j| num_complex::Complex64::new(v[2 * (i * r + j)], v[2 * (i * r + j) + 1]));
        let g = CMat::from_fn(k, k, |i, j| {
            let o = 2 * (nk + i * k + j);
            num_complex::Complex64::new(v[o], v[o + 1])
        });
        let f = factor + u0 * kk;
        let ug = u0 * g;
        &f * f.adjoint() + &ug * ug.adjoint()
    };
    let margin = |v: &[f64]| {
        let q = build(v);
        let t = PointFisherTerms { dd: trace_prod(&kernels.dd, &q).re, da: trace_prod(&kernels.da, &q), aa: trace_prod(&kernels.aa, &q).re };
        t.schur()
    };
    let radius = power.sqrt();
    let onto_sphere = |v: &mut [f64]| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x *= radius / n);
        }
    };
    // start from the isotropic null-space block
    let mut v = vec![0.0; dim];
    for i in 0..k {
        v[2 * (nk + i * k + i)] = (power / k as f64).sqrt();
    }
    let mut f = margin(&v);
    let mut step = 0.25 * radius;
    let h = 1e-7 * radius;
    for _ in 0..2000 {
        let mut grad = vec![0.0; dim];
        for i in 0..dim {
            let mut vp = v.clone();
            vp[i] += h;
            let mut vm = v.clone();
            vm[i] -= h;
            grad[i] = (margin(&vp) - margin(&vm)) / (2.0 * h);
        }
        // tangent part of the gradient
        let radial = grad.iter().zip(&v).map(|(g, x)| g * x).sum::<f64>() / power;
        grad.iter_mut().zip(&v).for_each(|(g, x)| *g -= radial * x);
        let gn = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let mut cand: Vec<f64> = v.iter().zip(&grad).map(|(x, g)| x + step * g / gn).collect();
        onto_sphere(&mut cand);
        let fc = margin(&cand);
        if fc > f {
            v = cand;
            f = fc;
            step *= 1.5;
        } else {
            step *= 0.5;
            if step < 1e-12 * radius {
                break;
            }
        }
    }
    debug_assert_eq!(build(&v).nrows(), m);
    TransmitCovariance::from_hermitian(build(&v))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    q: TransmitCovariance,
    ch: &ChannelSet,
    params: &SystemParams,
    gamma1: f64,
    dual_value: f64,
    duals: Duals,
    iterations: usize,
    converged: bool,
    opts: &PointSolverOptions,
    start: Instant,
) -> SolveOutcome {
    let rate_q = rate(&q, ch, params);
    let kkt = point_kkt(&q, params, gamma1, rate_q, dual_value, &duals);
    let ok = converged
        && kkt.duality_gap <= opts.gap_report_tol
        && kkt.power_violation <= 1e-8
        && kkt.crb_violation <= 1e-8;
    if !ok {
        warn!("point solver stopped short of tolerance: gap {:.3e}, iterations {iterations}", kkt.duality_gap);
    }
    SolveOutcome {
        crb: CrbValues::evaluate(&q, params),
        q,
        rate: rate_q,
        metric: CrbMetric::Point,
        gamma: gamma1,
        duals,
        kkt,
        status: if ok { SolveStatus::Optimal } else { SolveStatus::MaxIterations },
        iterations,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

fn point_kkt(
    q: &TransmitCovariance,
    params: &SystemParams,
    gamma1: f64,
    rate_q: f64,
    dual_value: f64,
    duals: &Duals,
) -> KktResiduals {
    let p = params.power;
    let gt = params.gamma1_tilde(gamma1);
    let t = PointFisherTerms::new(q.matrix(), &params.steering());
    let m11 = t.dd - 1.0 / gt;
    // smallest eigenvalue of the constraint matrix, relative to its size
    let (lmin, _) = min_eig_2x2(m11, t.da.conj(), t.aa);
    let norm = (m11 * m11 + 2.0 * t.da.norm_sqr() + t.aa * t.aa).sqrt().max(f64::MIN_POSITIVE);
    let mut kkt = KktResiduals {
        duality_gap: if dual_value.is_finite() { (dual_value - rate_q).abs() } else { f64::INFINITY },
        power_violation: ((q.trace() - p) / p).max(0.0),
        crb_violation: (-lmin / norm).max(0.0),
        ..Default::default()
    };
    if let Duals::Point { lambda, alpha, beta, gamma, nu } = *duals {
        kkt.power_slackness = (lambda * (p - q.trace())).abs() / p;
        let zm = alpha * m11 + 2.0 * (beta * t.da.re - gamma * t.da.im) + nu * t.aa;
        let zscale = (alpha.abs() / gt).max(f64::MIN_POSITIVE);
        kkt.crb_slackness = zm.abs() / zscale.max(1.0);
    }
    kkt
}

/// `tr(C Q)` for diagnostics.
pub fn c_trace(dual: &DualPoint, params: &SystemParams, q: &TransmitCovariance) -> f64 {
    trace_prod(&build_c_matrix(dual, params), q.matrix()).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::rician_channel;
    use crate::corner::crb_min_point;
    use crate::linalg::{c, fro_norm};

    fn params(m: usize, ns: usize, nc: usize) -> SystemParams {
        SystemParams {
            m_tx: m,
            n_rx_sense: ns,
            n_rx_comm: nc,
            cpi_len: 200,
            power: 10.0,
            noise_comm: 1.0,
            noise_sense: 1.0,
            reflect_coeff: c(0.05, 0.0),
            target_angle: -0.5,
            rician_k: 1.0,
            seed: 11,
        }
    }

    #[test]
    fn c_matrix_examples() {
        let p = params(4, 6, 3);
        let id = build_c_matrix(&DualPoint { lambda: 1.0, ..Default::default() }, &p);
        assert!(fro_norm(&(id - CMat::identity(4, 4))) < 1e-15);
        let c = build_c_matrix(&DualPoint { nu_d: 1.0, ..Default::default() }, &p);
        let eig = Eigh::new(&c);
        assert!(eig.max() < 1e-10);
        assert!(eig.values[1..].iter().all(|v| v.abs() < 1e-9));
        let st = p.steering();
        let n = st.norms_sqr();
        assert!((eig.min() + n.b * n.a).abs() < 1e-9);
        let c = build_c_matrix(&DualPoint { lambda: 0.3, alpha_d: 0.2, beta_d: -0.7, gamma_d: 0.4, nu_d: 0.1 }, &p);
        assert!(fro_norm(&(&c - c.adjoint())) < 1e-12 * fro_norm(&c));
    }

    #[test]
    fn dual_eval_examples() {
        let p = params(2, 3, 2);
        let ch = ChannelSet::diagonal(&[1.0, 0.25], 2, 2);
        let gt = p.gamma1_tilde(1.0);
        let ev = dual_eval(&DualPoint { lambda: 1.0, ..Default::default() }, &ch, &p, gt);
        assert!(ev.bounded);
        let e = ev.q_star.eigenvalues();
        assert!((e[1] - (1.0 / LN2 - 1.0)).abs() < 1e-12 && e[0].abs() < 1e-12);
        // λ large: nothing allocated
        let ev = dual_eval(&DualPoint { lambda: 10.0, alpha_d: 0.05, ..Default::default() }, &ch, &p, gt);
        assert_eq!(ev.q_star.trace(), 0.0);
        assert!((ev.g - (10.0 * p.power - 0.05 / gt)).abs() < 1e-12);
        let ev = dual_eval(&DualPoint { lambda: -0.1, ..Default::default() }, &ch, &p, gt);
        assert!(!ev.bounded);
    }

    #[test]
    fn slack_and_tight_ends() {
        let p = params(4, 6, 3);
        let ch = rician_channel(&p, 0.5, 0.5);
        let wf = rate_max_waterfill(&ch, &p, CrbMetric::Point);
        let out = solve_p1(&ch, &p, wf.crb * 1.5);
        assert_eq!(out.status, SolveStatus::Optimal);
        assert!((out.rate - wf.rate).abs() < 1e-6);

        let corner = crb_min_point(&ch, &p, DEFAULT_ETA_EPSILON);
        let out = solve_p1(&ch, &p, point_crb_infimum(&p) * (1.0 + 1e-9));
        assert!((out.rate - corner.rate).abs() < 1e-4, "{} vs {}", out.rate, corner.rate);
        let out = solve_p1(&ch, &p, point_crb_infimum(&p) * 0.9);
        assert_eq!(out.status, SolveStatus::Infeasible);
    }

    #[test]
    fn mid_range_duality() {
        for (m, ns, nc) in [(4, 6, 3), (4, 3, 3), (3, 3, 4)] {
            let p = params(m, ns, nc);
            let ch = rician_channel(&p, 0.5, 0.5);
            let lo = point_crb_infimum(&p);
            let hi = rate_max_waterfill(&ch, &p, CrbMetric::Point).crb;
            let gamma = (lo * hi).sqrt();
            let out = solve_p1(&ch, &p, gamma);
            assert!(out.achieved_crb() <= gamma * (1.0 + 1e-8));
            assert!(out.q.trace() <= p.power * (1.0 + 1e-8));
            assert!(out.kkt.duality_gap < 1e-4, "{m}/{ns}/{nc}: {:?}", out.kkt);
            assert_eq!(out.status, SolveStatus::Optimal);
        }
    }
}
