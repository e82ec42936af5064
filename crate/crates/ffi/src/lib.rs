//! C ABI over the `isac-cr` solvers.
//!
//! Handles are opaque and owned by the caller once returned; release them
//! with the matching `*_free` function. Every function returns an
//! [`IsacStatus`] unless noted, and the message of the last failure on the
//! calling thread is available from [`isac_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use isac_cr::boundary::solve_scenario;
use isac_cr::channel::{rician_channel, ChannelSet, SystemParams};
use isac_cr::corner::crb_min_value;
use isac_cr::linalg::CMat;
use isac_cr::metrics::CrbMetric;
use isac_cr::outcome::{SolveOutcome, SolveStatus};
use isac_cr::IsacError;
use num_complex::Complex64;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    /// Threshold below the smallest achievable CRB.
    Infeasible = 3,
    /// The solver stopped at its iteration cap; the outcome is still usable.
    MaxIterations = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// Values accepted wherever a function takes `scenario_id`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacScenario {
    Point = 1,
    Trace = 2,
    MaxEig = 3,
    LogDet = 4,
}

/// System parameters; fill with [`isac_params_default`] and adjust.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct IsacParams {
    pub m_tx: usize,
    pub n_rx_sense: usize,
    pub n_rx_comm: usize,
    pub cpi_len: usize,
    pub power: f64,
    pub noise_comm: f64,
    pub noise_sense: f64,
    pub reflect_re: f64,
    pub reflect_im: f64,
    pub target_angle: f64,
    /// Rician factor; `INFINITY` for pure line of sight.
    pub rician_k: f64,
    pub seed: u64,
}

impl From<&SystemParams> for IsacParams {
    fn from(p: &SystemParams) -> Self {
        IsacParams {
            m_tx: p.m_tx,
            n_rx_sense: p.n_rx_sense,
            n_rx_comm: p.n_rx_comm,
            cpi_len: p.cpi_len,
            power: p.power,
            noise_comm: p.noise_comm,
            noise_sense: p.noise_sense,
            reflect_re: p.reflect_coeff.re,
            reflect_im: p.reflect_coeff.im,
            target_angle: p.target_angle,
            rician_k: p.rician_k,
            seed: p.seed,
        }
    }
}

impl IsacParams {
    fn to_system(self) -> Result<SystemParams, IsacError> {
        let p = SystemParams {
            m_tx: self.m_tx,
            n_rx_sense: self.n_rx_sense,
            n_rx_comm: self.n_rx_comm,
            cpi_len: self.cpi_len,
            power: self.power,
            noise_comm: self.noise_comm,
            noise_sense: self.noise_sense,
            reflect_coeff: Complex64::new(self.reflect_re, self.reflect_im),
            target_angle: self.target_angle,
            rician_k: self.rician_k,
            seed: self.seed,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Communication channel and its decomposition.
pub struct IsacChannel {
    inner: ChannelSet,
}

/// Result of one solve.
pub struct IsacOutcome {
    inner: SolveOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let c = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: IsacStatus, msg: impl Into<String>) -> IsacStatus {
    set_error(msg);
    status
}

fn from_error(e: &IsacError) -> IsacStatus {
    let status = match e {
        IsacError::Infeasible { .. } => IsacStatus::Infeasible,
        IsacError::InvalidParams(_) | IsacError::NotApplicable(_) | IsacError::Config(_) => IsacStatus::InvalidParams,
        IsacError::Io { .. } => IsacStatus::Internal,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> IsacStatus) -> IsacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(IsacStatus::Internal, "panic inside isac-cr"),
    }
}

fn scenario(raw: i32) -> Option<CrbMetric> {
    u8::try_from(raw).ok().and_then(CrbMetric::from_scenario)
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn isac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Writes the built-in reference parameters to `out`.
///
/// # Safety
/// `out` must be null or point to writable memory for one `IsacParams`.
#[no_mangle]
pub unsafe extern "C" fn isac_params_default(out: *mut IsacParams) -> IsacStatus {
    if out.is_null() {
        return fail(IsacStatus::NullPointer, "out is null");
    }
    out.write(IsacParams::from(&SystemParams::default()));
    IsacStatus::Ok
}

/// Seeded Rician channel with line-of-sight angles `theta_rx`, `theta_tx`.
///
/// # Safety
/// `params` must point to a valid `IsacParams`; `out` to writable storage
/// for one pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_channel_rician(
    params: *const IsacParams,
    theta_rx: f64,
    theta_tx: f64,
    out: *mut *mut IsacChannel,
) -> IsacStatus {
    if params.is_null() || out.is_null() {
        return fail(IsacStatus::NullPointer, "params or out is null");
    }
    let raw = *params;
    guard(|| match raw.to_system() {
        Ok(p) => {
            let ch = rician_channel(&p, theta_rx, theta_tx);
            out.write(Box::into_raw(Box::new(IsacChannel { inner: ch })));
            IsacStatus::Ok
        }
        Err(e) => from_error(&e),
    })
}

/// Channel from an `n_rx x m_tx` row-major matrix given as interleaved
/// (re, im) pairs, `2 * n_rx * m_tx` doubles in total.
///
/// # Safety
/// `data` must point to `2 * n_rx * m_tx` readable doubles; `out` to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_channel_from_matrix(
    n_rx: usize,
    m_tx: usize,
    data: *const f64,
    out: *mut *mut IsacChannel,
) -> IsacStatus {
    if data.is_null() || out.is_null() {
        return fail(IsacStatus::NullPointer, "data or out is null");
    }
    if n_rx == 0 || m_tx == 0 {
        return fail(IsacStatus::InvalidParams, "matrix dimensions must be positive");
    }
    let vals = std::slice::from_raw_parts(data, 2 * n_rx * m_tx);
    if vals.iter().any(|v| !v.is_finite()) {
        return fail(IsacStatus::InvalidParams, "channel entries must be finite");
    }
    guard(|| {
        let h = CMat::from_fn(n_rx, m_tx, |i, j| {
            let k = 2 * (i * m_tx + j);
            Complex64::new(vals[k], vals[k + 1])
        });
        out.write(Box::into_raw(Box::new(IsacChannel { inner: ChannelSet::from_matrix(h) })));
        IsacStatus::Ok
    })
}

/// Rank of the channel, or 0 for a null handle.
///
/// # Safety
/// `ch` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_channel_rank(ch: *const IsacChannel) -> usize {
    ch.as_ref().map_or(0, |c| c.inner.rank_r)
}

/// # Safety
/// `ch` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_channel_free(ch: *mut IsacChannel) {
    if !ch.is_null() {
        drop(Box::from_raw(ch));
    }
}

/// Smallest CRB achievable under the power budget (`ln` of it for log-det).
///
/// # Safety
/// `params` must point to a valid `IsacParams`; `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn isac_crb_min(params: *const IsacParams, scenario_id: i32, out: *mut f64) -> IsacStatus {
    if params.is_null() || out.is_null() {
        return fail(IsacStatus::NullPointer, "params or out is null");
    }
    let Some(metric) = scenario(scenario_id) else {
        return fail(IsacStatus::InvalidParams, format!("unknown scenario {scenario_id}"));
    };
    let raw = *params;
    guard(|| match raw.to_system() {
        Ok(p) => {
            out.write(crb_min_value(&p, metric));
            IsacStatus::Ok
        }
        Err(e) => from_error(&e),
    })
}

/// Maximizes the rate subject to the scenario's CRB not exceeding `gamma`
/// (`ln Γ` for log-det). On `Ok` and `MaxIterations` an outcome is written
/// to `out`; on any other status `out` is set to null.
///
/// # Safety
/// `params` must point to a valid `IsacParams`, `ch` must be a live handle
/// built for the same antenna counts, and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn isac_solve(
    params: *const IsacParams,
    ch: *const IsacChannel,
    scenario_id: i32,
    gamma: f64,
    out: *mut *mut IsacOutcome,
) -> IsacStatus {
    if params.is_null() || ch.is_null() || out.is_null() {
        return fail(IsacStatus::NullPointer, "params, channel or out is null");
    }
    out.write(ptr::null_mut());
    let Some(metric) = scenario(scenario_id) else {
        return fail(IsacStatus::InvalidParams, format!("unknown scenario {scenario_id}"));
    };
    let raw = *params;
    let ch = &(*ch).inner;
    guard(|| {
        let p = match raw.to_system() {
            Ok(p) => p,
            Err(e) => return from_error(&e),
        };
        if ch.m() != p.m_tx || ch.h_comm.nrows() != p.n_rx_comm {
            return fail(
                IsacStatus::InvalidParams,
                format!("channel is {}x{}, params expect {}x{}", ch.h_comm.nrows(), ch.m(), p.n_rx_comm, p.m_tx),
            );
        }
        if !gamma.is_finite() {
            return fail(IsacStatus::InvalidParams, "gamma must be finite");
        }
        let outcome = solve_scenario(metric, ch, &p, gamma);
        let status = match outcome.status {
            SolveStatus::Optimal => IsacStatus::Ok,
            SolveStatus::MaxIterations => IsacStatus::MaxIterations,
            SolveStatus::Infeasible => {
                let min = crb_min_value(&p, metric);
                return fail(IsacStatus::Infeasible, format!("threshold {gamma} below minimum achievable CRB {min}"));
            }
        };
        out.write(Box::into_raw(Box::new(IsacOutcome { inner: outcome })));
        status
    })
}

/// Achieved rate in bits per channel use, NaN for a null handle.
///
/// # Safety
/// `o` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_outcome_rate(o: *const IsacOutcome) -> f64 {
    o.as_ref().map_or(f64::NAN, |o| o.inner.rate)
}

/// Achieved value of the scenario's CRB metric (`ln` for log-det), NaN for
/// a null handle or unknown scenario.
///
/// # Safety
/// `o` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_outcome_crb(o: *const IsacOutcome, scenario_id: i32) -> f64 {
    match (o.as_ref(), scenario(scenario_id)) {
        (Some(o), Some(m)) => o.inner.crb.get(m),
        _ => f64::NAN,
    }
}

/// Number of transmit antennas `M` of the covariance, 0 for null.
///
/// # Safety
/// `o` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_outcome_dim(o: *const IsacOutcome) -> usize {
    o.as_ref().map_or(0, |o| o.inner.q.dim())
}

/// Copies the transmit covariance into `buf` as `M*M` row-major interleaved
/// (re, im) pairs. `len` is the buffer length in doubles and must be at
/// least `2*M*M`.
///
/// # Safety
/// `o` must be a live handle and `buf` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn isac_outcome_covariance(o: *const IsacOutcome, buf: *mut f64, len: usize) -> IsacStatus {
    let Some(o) = o.as_ref() else {
        return fail(IsacStatus::NullPointer, "outcome is null");
    };
    if buf.is_null() {
        return fail(IsacStatus::NullPointer, "buf is null");
    }
    let q = o.inner.q.matrix();
    let m = q.nrows();
    if len < 2 * m * m {
        return fail(IsacStatus::BufferTooSmall, format!("need {} doubles, got {len}", 2 * m * m));
    }
    let dst = std::slice::from_raw_parts_mut(buf, 2 * m * m);
    for i in 0..m {
        for j in 0..m {
            let z = q[(i, j)];
            dst[2 * (i * m + j)] = z.re;
            dst[2 * (i * m + j) + 1] = z.im;
        }
    }
    IsacStatus::Ok
}

/// Full outcome as a JSON document; free with [`isac_string_free`]. Null on
/// failure.
///
/// # Safety
/// `o` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn isac_outcome_to_json(o: *const IsacOutcome) -> *mut c_char {
    let Some(o) = o.as_ref() else {
        set_error("outcome is null");
        return ptr::null_mut();
    };
    match serde_json::to_string(&o.inner) {
        Ok(s) => CString::new(s).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `o` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn isac_outcome_free(o: *mut IsacOutcome) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}
