//! Result record shared by all solvers.

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{IsacError, Result};
use crate::metrics::{CrbMetric, CrbValues, TransmitCovariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

/// Dual variables at termination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Duals {
    /// Power multiplier and the 2×2 Hermitian multiplier of the point-target constraint.
    Point { lambda: f64, alpha: f64, beta: f64, gamma: f64, nu: f64 },
    /// CRB multiplier `mu` and power multiplier `v`.
    Extended { mu: f64, v: f64 },
    None,
}

/// Optimality diagnostics; every field is a nonnegative residual.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct KktResiduals {
    /// `|g(duals) - rate|` in bits.
    pub duality_gap: f64,
    /// `max(0, tr Q - P) / P`.
    pub power_violation: f64,
    /// Relative violation of the CRB constraint.
    pub crb_violation: f64,
    /// `|λ (P - tr Q)| / P` or its extended-target analogue.
    pub power_slackness: f64,
    /// Complementary slackness of the CRB constraint, relative.
    pub crb_slackness: f64,
    /// Largest per-mode stationarity residual (extended target only).
    pub stationarity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOutcome {
    #[serde(serialize_with = "serialize_interleaved")]
    pub q: TransmitCovariance,
    pub rate: f64,
    pub crb: CrbValues,
    /// Metric that was constrained and its threshold (`ln Γ` for `LogDet`).
    pub metric: CrbMetric,
    pub gamma: f64,
    pub duals: Duals,
    pub kkt: KktResiduals,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
}

impl SolveOutcome {
    pub fn infeasible(m: usize, metric: CrbMetric, gamma: f64) -> Self {
        SolveOutcome {
            q: TransmitCovariance::zeros(m),
            rate: 0.0,
            crb: CrbValues { point: f64::INFINITY, trace: f64::INFINITY, maxeig: f64::INFINITY, logdet: f64::INFINITY },
            metric,
            gamma,
            duals: Duals::None,
            kkt: KktResiduals::default(),
            status: SolveStatus::Infeasible,
            iterations: 0,
            wall_time: 0.0,
        }
    }

    /// CRB under the constrained metric.
    pub fn achieved_crb(&self) -> f64 {
        self.crb.get(self.metric)
    }

    /// Turns an `Infeasible` status into an error carrying the minimum CRB.
    pub fn into_result(self, crb_min: f64) -> Result<Self> {
        match self.status {
            SolveStatus::Infeasible => Err(IsacError::Infeasible { gamma: self.gamma, crb_min }),
            _ => Ok(self),
        }
    }

    /// Row-major `[re, im, re, im, ...]` entries of `Q`.
    pub fn q_interleaved(&self) -> Vec<f64> {
        interleave(&self.q)
    }
}

pub fn interleave(q: &TransmitCovariance) -> Vec<f64> {
    let m = q.matrix();
    let mut out = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

fn serialize_interleaved<S: Serializer>(q: &TransmitCovariance, s: S) -> std::result::Result<S::Ok, S::Error> {
    let v = interleave(q);
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&x)?;
    }
    seq.end()
}
