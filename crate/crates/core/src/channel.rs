//! Array responses, target response matrices and the Rician communication channel.
//!
//! All arrays are half-wavelength ULAs referenced to the array centre, so the
//! phase exponent of element `i` (1-based) of an `n`-element array is
//! `(2i - 1 - n)/2 · π sin θ`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{IsacError, Result};
use crate::linalg::{c, outer_t, vec_norm_sqr, CMat, CVec, FullSvd, J};

/// Scalars of the link model.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Transmit antennas `M`.
    pub m_tx: usize,
    /// Sensing receive antennas `N_s`.
    pub n_rx_sense: usize,
    /// Communication receive antennas `N_c`.
    pub n_rx_comm: usize,
    /// Symbols per coherent processing interval `L`.
    pub cpi_len: usize,
    pub power: f64,
    pub noise_comm: f64,
    pub noise_sense: f64,
    /// Point-target reflection coefficient.
    pub reflect_coeff: Complex64,
    /// Point-target angle in radians.
    pub target_angle: f64,
    /// Rician factor `K_c`; `f64::INFINITY` gives a pure line-of-sight channel.
    pub rician_k: f64,
    pub seed: u64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(IsacError::InvalidParams(msg.to_string()));
        if self.m_tx < 2 {
            return bad("m_tx must be > 1");
        }
        if self.n_rx_comm < 2 {
            return bad("n_rx_comm must be > 1");
        }
        if self.n_rx_sense < 1 {
            return bad("n_rx_sense must be >= 1");
        }
        if self.cpi_len <= self.m_tx {
            return bad("cpi_len must exceed m_tx");
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return bad("power must be positive");
        }
        if !(self.noise_comm > 0.0 && self.noise_sense > 0.0) {
            return bad("noise powers must be positive");
        }
        if !(self.rician_k >= 0.0) {
            return bad("rician_k must be >= 0");
        }
        Ok(())
    }

    pub fn with_power(&self, power: f64) -> Self {
        SystemParams { power, ..self.clone() }
    }

    pub fn cpi(&self) -> f64 {
        self.cpi_len as f64
    }

    pub fn steering(&self) -> SteeringSet {
        SteeringSet::new(self.target_angle, self.m_tx, self.n_rx_sense)
    }

    /// The rescaled point-target threshold `2 Γ L |α|² / σ_s²`.
    pub fn gamma1_tilde(&self, gamma1: f64) -> f64 {
        2.0 * gamma1 * self.cpi() * self.reflect_coeff.norm_sqr() / self.noise_sense
    }
}

/// Line-of-sight angle (both ends) of the default communication channel.
pub const DEFAULT_LOS_ANGLE: f64 = PI / 6.0;

impl Default for SystemParams {
    /// Eight transmit antennas, twelve sensing and six communication receive
    /// antennas, `P = 800`, unit noise and a 200-symbol CPI.
    fn default() -> Self {
        SystemParams {
            m_tx: 8,
            n_rx_sense: 12,
            n_rx_comm: 6,
            cpi_len: 200,
            power: 800.0,
            noise_comm: 1.0,
            noise_sense: 1.0,
            reflect_coeff: c(1e-3, 0.0),
            target_angle: -0.2803 * PI,
            rician_k: 100.0,
            seed: 1,
        }
    }
}

fn phase_coeff(i: usize, n: usize) -> f64 {
    // i is 0-based here: (2(i+1) - 1 - n)/2
    (2.0 * i as f64 + 1.0 - n as f64) / 2.0
}

/// Transmit steering vector `a(θ)`.
pub fn steering_tx(theta: f64, m: usize) -> CVec {
    let s = PI * theta.sin();
    CVec::from_fn(m, |i, _| {
        let ph = phase_coeff(i, m) * s;
        c(ph.cos(), ph.sin())
    })
}

/// Derivative `ȧ(θ)` of the transmit steering vector.
pub fn steering_tx_deriv(theta: f64, m: usize) -> CVec {
    let a = steering_tx(theta, m);
    let cos = PI * theta.cos();
    CVec::from_fn(m, |i, _| J * a[i] * (phase_coeff(i, m) * cos))
}

pub fn steering_rx(theta: f64, n: usize) -> CVec {
    steering_tx(theta, n)
}

pub fn steering_rx_deriv(theta: f64, n: usize) -> CVec {
    steering_tx_deriv(theta, n)
}

/// Steering vectors and their angle derivatives toward one direction.
#[derive(Debug, Clone)]
pub struct SteeringSet {
    pub a: CVec,
    pub b: CVec,
    pub a_dot: CVec,
    pub b_dot: CVec,
}

impl SteeringSet {
    pub fn new(theta: f64, m: usize, n_s: usize) -> Self {
        SteeringSet {
            a: steering_tx(theta, m),
            b: steering_rx(theta, n_s),
            a_dot: steering_tx_deriv(theta, m),
            b_dot: steering_rx_deriv(theta, n_s),
        }
    }

    /// `A = b aᵀ`.
    pub fn response(&self) -> CMat {
        outer_t(&self.b, &self.a)
    }

    /// `∂A/∂θ = b ȧᵀ + ḃ aᵀ`.
    pub fn response_deriv(&self) -> CMat {
        outer_t(&self.b, &self.a_dot) + outer_t(&self.b_dot, &self.a)
    }

    pub fn norms_sqr(&self) -> SteeringNorms {
        SteeringNorms {
            a: vec_norm_sqr(&self.a),
            b: vec_norm_sqr(&self.b),
            a_dot: vec_norm_sqr(&self.a_dot),
            b_dot: vec_norm_sqr(&self.b_dot),
        }
    }
}

/// Squared Euclidean norms of the four steering vectors.
#[derive(Debug, Clone, Copy)]
pub struct SteeringNorms {
    pub a: f64,
    pub b: f64,
    pub a_dot: f64,
    pub b_dot: f64,
}

/// `α b(θ) a(θ)ᵀ`.
pub fn point_target_response(params: &SystemParams) -> CMat {
    let st = params.steering();
    st.response() * params.reflect_coeff
}

/// `Σ_k α_k b(θ_k) a(θ_k)ᵀ`.
pub fn extended_target_response(scatterers: &[(Complex64, f64)], m: usize, n_s: usize) -> CMat {
    assert!(!scatterers.is_empty(), "at least one scatterer required");
    let mut h = CMat::zeros(n_s, m);
    for &(alpha, theta) in scatterers {
        h += outer_t(&steering_rx(theta, n_s), &steering_tx(theta, m)) * alpha;
    }
    h
}

/// Communication channel with its cached SVD, plus optional sensing responses.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h_comm: CMat,
    pub svd_u: CMat,
    /// Singular values, length `M`, non-increasing, zero padded.
    pub svd_sigma: Vec<f64>,
    /// Full `M×M` right singular basis.
    pub svd_v: CMat,
    pub rank_r: usize,
    pub h_sense_point: Option<CMat>,
    pub scatterers: Vec<(Complex64, f64)>,
}

impl ChannelSet {
    pub fn from_matrix(h_comm: CMat) -> Self {
        let svd = FullSvd::new(&h_comm);
        let (n, m) = h_comm.shape();
        let top = svd.sigma.first().copied().unwrap_or(0.0);
        let tol = n.max(m) as f64 * top * 1e-12;
        let rank_r = svd.sigma.iter().filter(|&&s| s > tol).count();
        ChannelSet {
            h_comm,
            svd_u: svd.u,
            svd_sigma: svd.sigma,
            svd_v: svd.v,
            rank_r,
            h_sense_point: None,
            scatterers: Vec::new(),
        }
    }

    /// Channel whose right singular basis is the identity and whose squared
    /// singular values are `zeta_sq` (padded with zeros up to `m`).
    pub fn diagonal(zeta_sq: &[f64], n_c: usize, m: usize) -> Self {
        let mut h = CMat::zeros(n_c, m);
        for (k, z) in zeta_sq.iter().enumerate() {
            h[(k, k)] = c(z.sqrt(), 0.0);
        }
        Self::from_matrix(h)
    }

    pub fn with_point_target(mut self, params: &SystemParams) -> Self {
        self.h_sense_point = Some(point_target_response(params));
        self
    }

    pub fn with_scatterers(mut self, scatterers: Vec<(Complex64, f64)>) -> Self {
        self.scatterers = scatterers;
        self
    }

    pub fn m(&self) -> usize {
        self.h_comm.ncols()
    }

    /// `ζ_k²` for the `r` non-zero modes.
    pub fn zeta_sq(&self) -> Vec<f64> {
        self.svd_sigma[..self.rank_r].iter().map(|s| s * s).collect()
    }

    /// Per-mode noise-to-gain ratios `σ_c²/ζ_k²` for the non-zero modes.
    pub fn noise_levels(&self, noise_comm: f64) -> Vec<f64> {
        self.zeta_sq().iter().map(|z| noise_comm / z).collect()
    }
}

/// Rician channel `√(K/(K+1)) a_r aₜᵀ + √(1/(K+1)) H_w`.
///
/// `H_w` is drawn from `ChaCha8Rng::seed_from_u64(params.seed)`: entries are
/// filled row-major, each taking two `StandardNormal` draws `x` then `y` and
/// setting `(x + jy)/√2`. Fixtures depend on this mapping staying put.
pub fn rician_channel(params: &SystemParams, theta_rx: f64, theta_tx: f64) -> ChannelSet {
    let (n_c, m) = (params.n_rx_comm, params.m_tx);
    let los = outer_t(&steering_rx(theta_rx, n_c), &steering_tx(theta_tx, m));
    let k = params.rician_k;
    let (w_los, w_nlos) = if k.is_infinite() {
        (1.0, 0.0)
    } else {
        ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt())
    };
    let hw = gaussian_matrix(params.seed, n_c, m);
    let h = los * c(w_los, 0.0) + hw * c(w_nlos, 0.0);
    ChannelSet::from_matrix(h)
}

/// Unit-variance circularly-symmetric Gaussian matrix, seed mapping as in [`rician_channel`].
pub fn gaussian_matrix(seed: u64, rows: usize, cols: usize) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = CMat::zeros(rows, cols);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..rows {
        for j in 0..cols {
            let x: f64 = StandardNormal.sample(&mut rng);
            let y: f64 = StandardNormal.sample(&mut rng);
            h[(i, j)] = c(x * scale, y * scale);
        }
    }
    h
}
