//! Central-cut/deep-cut ellipsoid method for small convex minimizations.
//!
//! The oracle returns either an objective value with a subgradient, or a
//! violated constraint `f(x) > 0` with a subgradient of `f`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub enum Step {
    Objective { value: f64, subgrad: Vec<f64> },
    Cut { violation: f64, subgrad: Vec<f64> },
}

#[derive(Debug, Clone, Copy)]
pub struct EllipsoidOptions {
    pub max_iter: usize,
    /// Stop once `best - lower_bound ≤ abs_tol + rel_tol·|best|`.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Stop once the ellipsoid volume falls below this fraction of the initial one.
    pub volume_tol: f64,
}

#[derive(Debug, Clone)]
pub struct EllipsoidResult {
    pub best_x: Option<Vec<f64>>,
    pub best_value: f64,
    pub lower_bound: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EllipsoidResult {
    pub fn gap(&self) -> f64 {
        self.best_value - self.lower_bound
    }
}

pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
}

impl Ellipsoid {
    /// Axis-aligned start with per-coordinate radii.
    pub fn new(center: &[f64], radii: &[f64]) -> Self {
        let n = center.len();
        assert_eq!(n, radii.len());
        assert!(n >= 2, "the update formula needs at least two dimensions");
        let shape = DMatrix::from_diagonal(&DVector::from_iterator(n, radii.iter().map(|r| r * r)));
        Ellipsoid { center: DVector::from_column_slice(center), shape }
    }

    /// `sqrt(gᵀ E g)`: the spread of the linear function `g` over the ellipsoid.
    pub fn width(&self, g: &DVector<f64>) -> f64 {
        (g.transpose() * &self.shape * g)[(0, 0)].max(0.0).sqrt()
    }

    /// Keeps `{x : gᵀ(x - c) + h ≤ 0}` with `h ≥ 0`. Returns false when the cut
    /// removes the whole ellipsoid or the shape has degenerated.
    pub fn cut(&mut self, g: &DVector<f64>, h: f64) -> bool {
        let n = self.center.len() as f64;
        let w = self.width(g);
        if !(w > 0.0) || !w.is_finite() {
            return false;
        }
        let a = (h / w).max(0.0);
        if a >= 1.0 {
            return false;
        }
        let eg = &self.shape * g / w;
        let tau = (1.0 + n * a) / (n + 1.0);
        let delta = n * n * (1.0 - a * a) / (n * n - 1.0);
        let sigma = 2.0 * (1.0 + n * a) / ((n + 1.0) * (1.0 + a));
        self.center -= &eg * tau;
        let shape = (&self.shape - &eg * eg.transpose() * sigma) * delta;
        self.shape = (&shape + shape.transpose()) * 0.5;
        true
    }

    pub fn log_volume(&self) -> f64 {
        // determinant through Cholesky keeps this finite for tiny shapes
        match nalgebra::Cholesky::new(self.shape.clone()) {
            Some(ch) => ch.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum::<f64>() * 0.5,
            None => f64::NEG_INFINITY,
        }
    }
}

/// Minimizes with the ellipsoid method from the given start.
pub fn minimize(
    center: &[f64],
    radii: &[f64],
    opts: &EllipsoidOptions,
    mut oracle: impl FnMut(&[f64]) -> Step,
) -> EllipsoidResult {
    let mut ell = Ellipsoid::new(center, radii);
    let log_vol0 = ell.log_volume();
    let mut res = EllipsoidResult {
        best_x: None,
        best_value: f64::INFINITY,
        lower_bound: f64::NEG_INFINITY,
        iterations: 0,
        converged: false,
    };
    for it in 0..opts.max_iter {
        res.iterations = it + 1;
        let x: Vec<f64> = ell.center.iter().copied().collect();
        let ok = match oracle(&x) {
            Step::Cut { violation, subgrad } => {
                let g = DVector::from_vec(subgrad);
                ell.cut(&g, violation.max(0.0))
            }
            Step::Objective { value, subgrad } => {
                let g = DVector::from_vec(subgrad);
                let w = ell.width(&g);
                res.lower_bound = res.lower_bound.max(value - w);
                if value < res.best_value {
                    res.best_value = value;
                    res.best_x = Some(x);
                }
                if res.best_x.is_some() && res.gap() <= opts.abs_tol + opts.rel_tol * res.best_value.abs() {
                    res.converged = true;
                    return res;
                }
                ell.cut(&g, value - res.best_value)
            }
        };
        if !ok {
            // Nothing left to cut: the current best is as good as this start allows.
            res.converged = res.best_x.is_some();
            return res;
        }
        if ell.log_volume() - log_vol0 < opts.volume_tol.ln() {
            res.converged = res.best_x.is_some();
            return res;
        }
    }
    res
}
