//! Shared numeric settings and small linear-algebra helpers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Tolerances and step sizes used throughout the crate.
///
/// Relative entries (`conv_tol`, `mp_tol`, `mtw_step`) are multiplied by a
/// problem scale at the call site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Newton residual target, scaled by `1 + |u| + |p|`.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Maximum number of step halvings in damped Newton.
    pub max_halvings: usize,
    /// Relative step for first-derivative central differences.
    pub fd_eps_first: f64,
    /// Relative step for second derivatives of implicitly defined quantities.
    pub fd_eps_second: f64,
    pub a2_tol: f64,
    /// Minimum separation of two fiber samples for a collision to count.
    pub sep_tol: f64,
    /// Image distance below which two samples collide.
    pub coll_tol: f64,
    /// Relative midpoint-convexity slack.
    pub conv_tol: f64,
    pub a3s_tol: f64,
    /// Relative slack of the max-principle inequality.
    pub mp_tol: f64,
    pub ff_tol: f64,
    /// Relative step of the MTW second difference in p.
    pub mtw_step: f64,
    /// Step of explicit Hessians (height functions, sampled functions).
    pub hessian_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            max_iter: 50,
            max_halvings: 20,
            fd_eps_first: 1e-5,
            fd_eps_second: 1e-3,
            a2_tol: 1e-8,
            sep_tol: 1e-3,
            coll_tol: 1e-6,
            conv_tol: 1e-7,
            a3s_tol: 1e-6,
            mp_tol: 1e-9,
            ff_tol: 1e-6,
            mtw_step: 1e-3,
            hessian_step: 1e-4,
        }
    }
}

impl Tolerances {
    /// Every entry must be strictly positive.
    pub fn validate(&self) -> Result<(), String> {
        let entries = [
            ("newton_tol", self.newton_tol),
            ("fd_eps_first", self.fd_eps_first),
            ("fd_eps_second", self.fd_eps_second),
            ("a2_tol", self.a2_tol),
            ("sep_tol", self.sep_tol),
            ("coll_tol", self.coll_tol),
            ("conv_tol", self.conv_tol),
            ("a3s_tol", self.a3s_tol),
            ("mp_tol", self.mp_tol),
            ("ff_tol", self.ff_tol),
            ("mtw_step", self.mtw_step),
            ("hessian_step", self.hessian_step),
        ];
        for (key, value) in entries {
            if !(value.is_finite() && value > 0.0) {
                return Err(format!("tolerance `{key}` must be positive, got {value}"));
            }
        }
        if self.max_iter == 0 {
            return Err("tolerance `max_iter` must be positive".into());
        }
        Ok(())
    }
}

/// Central-difference step `eps * max(1, |coord|)`.
#[inline]
pub fn fd_step(eps: f64, coord: f64) -> f64 {
    eps * coord.abs().max(1.0)
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
}

/// Solves `m x = b`, returning `None` for a numerically singular system.
pub fn solve(m: &Matrix, b: &Vector) -> Option<Vector> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0_f64, |s, a| s.max(a.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let lu = m.clone().lu();
    let det = lu.determinant();
    if !det.is_finite() || det.abs() <= 1e-14 * scale.powi(n as i32) {
        return None;
    }
    let x = lu.solve(b)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Symmetric part `(m + mᵗ)/2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |s, v| s.max(*v))
}

/// Smallest singular value.
pub fn min_singular_value(m: &Matrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |s, v| s.min(*v))
}

/// `(A ξ, ξ)`.
pub fn quad_form(a: &Matrix, xi: &Vector) -> f64 {
    xi.dot(&(a * xi))
}

/// Central-difference Hessian of an explicit scalar function.
pub fn fd_hessian(f: impl Fn(&Vector) -> f64, x: &Vector, eps: f64) -> Matrix {
    let n = x.len();
    let f0 = f(x);
    let mut h = Matrix::zeros(n, n);
    for i in 0..n {
        let hi = fd_step(eps, x[i]);
        let mut xp = x.clone();
        xp[i] += hi;
        let mut xm = x.clone();
        xm[i] -= hi;
        h[(i, i)] = (f(&xp) - 2.0 * f0 + f(&xm)) / (hi * hi);
        for j in 0..i {
            let hj = fd_step(eps, x[j]);
            let shifted = |si: f64, sj: f64| {
                let mut v = x.clone();
                v[i] += si * hi;
                v[j] += sj * hj;
                f(&v)
            };
            let val = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0)
                + shifted(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = val;
            h[(j, i)] = val;
        }
    }
    h
}

/// Central-difference gradient of an explicit scalar function.
pub fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector, eps: f64) -> Vector {
    Vector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = fd_step(eps, x[i]);
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        }),
    )
}

/// Unit vectors orthogonal to `dir`: none for n = 1, the rotated direction for
/// n = 2, and `count` seeded projections of random vectors for n ≥ 3.
pub fn orthogonal_directions(dir: &Vector, count: usize, rng: &mut impl rand::Rng) -> Vec<Vector> {
    let n = dir.len();
    let norm = dir.norm();
    if n < 2 || norm == 0.0 {
        return Vec::new();
    }
    let d = dir / norm;
    if n == 2 {
        return vec![Vector::from_vec(vec![-d[1], d[0]])];
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)));
        let w = &v - &d * d.dot(&v);
        let wn = w.norm();
        if wn > 1e-3 {
            out.push(w / wn);
        }
    }
    out
}
