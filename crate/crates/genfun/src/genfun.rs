//! The generating-function abstraction: domain `Γ`, partial derivatives with
//! finite-difference fallback, and the jet of all partials used downstream.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fd_step, symmetrize, Matrix, Tolerances, Vector};
use crate::report::{ArgMin, ConditionReport, Verdict, Witness};

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vector,
    pub hi: Vector,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds differ in dimension");
        assert!(lo.iter().zip(&hi).all(|(a, b)| a < b), "empty box");
        Self {
            lo: Vector::from_vec(lo),
            hi: Vector::from_vec(hi),
        }
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; n], vec![hi; n])
    }

    pub fn centered(center: &Vector, half_width: f64) -> Self {
        Self {
            lo: center.map(|c| c - half_width),
            hi: center.map(|c| c + half_width),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vector {
        (&self.lo + &self.hi) * 0.5
    }

    /// Length of the main diagonal.
    pub fn diam(&self) -> f64 {
        (&self.hi - &self.lo).norm()
    }

    /// Half-diagonal.
    pub fn radius(&self) -> f64 {
        0.5 * self.diam()
    }

    pub fn contains(&self, x: &[f64], margin: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .enumerate()
                .all(|(i, v)| *v >= self.lo[i] + margin && *v <= self.hi[i] - margin)
    }

    /// Box shrunk on every side by `frac` of its width.
    pub fn shrunk(&self, frac: f64) -> Self {
        let w = &self.hi - &self.lo;
        Self {
            lo: &self.lo + &w * frac,
            hi: &self.hi - &w * frac,
        }
    }

    pub fn clamp(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter()
                .enumerate()
                .map(|(i, v)| v.clamp(self.lo[i], self.hi[i])),
        )
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vector {
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| rng.random_range(self.lo[i]..self.hi[i])),
        )
    }
}

pub type IntervalField = Arc<dyn Fn(&[f64], &[f64]) -> (f64, f64) + Send + Sync>;
pub type PairPredicate = Arc<dyn Fn(&[f64], &[f64]) -> bool + Send + Sync>;

/// The domain `Γ`: `x_box × y_box` restricted by an optional pair predicate,
/// with an open interval `I(x, y)` of admissible `z` over each pair.
///
/// Membership is tested on boxes and intervals shrunk by `margin` so that the
/// open domain is never evaluated on its boundary.
#[derive(Clone)]
pub struct Gamma {
    pub x_box: BoxDomain,
    pub y_box: BoxDomain,
    z_interval: IntervalField,
    pair_ok: Option<PairPredicate>,
    pub margin: f64,
}

impl std::fmt::Debug for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gamma")
            .field("x_box", &self.x_box)
            .field("y_box", &self.y_box)
            .field("margin", &self.margin)
            .finish_non_exhaustive()
    }
}

impl Gamma {
    pub fn new(
        x_box: BoxDomain,
        y_box: BoxDomain,
        z_interval: impl Fn(&[f64], &[f64]) -> (f64, f64) + Send + Sync + 'static,
    ) -> Self {
        Self {
            x_box,
            y_box,
            z_interval: Arc::new(z_interval),
            pair_ok: None,
            margin: 1e-9,
        }
    }

    /// `I(x, y) = (lo, hi)` independent of the pair.
    pub fn with_constant_interval(x_box: BoxDomain, y_box: BoxDomain, lo: f64, hi: f64) -> Self {
        Self::new(x_box, y_box, move |_, _| (lo, hi))
    }

    pub fn with_pair_constraint(
        mut self,
        pred: impl Fn(&[f64], &[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.pair_ok = Some(Arc::new(pred));
        self
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    /// The raw interval `I(x, y)`.
    pub fn interval(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        (self.z_interval)(x, y)
    }

    /// `I(x, y)` shrunk by the margin.
    pub fn inner_interval(&self, x: &[f64], y: &[f64]) -> (f64, f64) {
        let (lo, hi) = self.interval(x, y);
        (lo + self.margin, hi - self.margin)
    }

    pub fn pair_admissible(&self, x: &[f64], y: &[f64]) -> bool {
        self.x_box.contains(x, self.margin)
            && self.y_box.contains(y, self.margin)
            && self.pair_ok.as_ref().is_none_or(|p| p(x, y))
    }

    pub fn contains(&self, x: &[f64], y: &[f64], z: f64) -> bool {
        if !self.pair_admissible(x, y) {
            return false;
        }
        let (lo, hi) = self.inner_interval(x, y);
        z > lo && z < hi
    }

    /// Draws a fiber point; `None` after repeated rejection by the predicate.
    pub fn sample(&self, rng: &mut impl Rng) -> Option<FiberPoint> {
        self.sample_within(&self.x_box, &self.y_box, 0.0, rng)
    }

    /// Draws a fiber point with `x`, `y` in the given sub-boxes and `z` in the
    /// middle `1 - 2·z_frac` portion of the interval.
    pub fn sample_within(
        &self,
        x_box: &BoxDomain,
        y_box: &BoxDomain,
        z_frac: f64,
        rng: &mut impl Rng,
    ) -> Option<FiberPoint> {
        for _ in 0..1000 {
            let x = x_box.sample(rng);
            let y = y_box.sample(rng);
            if !self.pair_admissible(x.as_slice(), y.as_slice()) {
                continue;
            }
            let (lo, hi) = self.inner_interval(x.as_slice(), y.as_slice());
            if !(hi > lo) {
                continue;
            }
            let w = hi - lo;
            let (a, b) = (lo + z_frac * w, hi - z_frac * w);
            if !(b > a) {
                continue;
            }
            let z = rng.random_range(a..b);
            if self.contains(x.as_slice(), y.as_slice(), z) {
                return Some(FiberPoint { x, y, z });
            }
        }
        None
    }
}

/// `(x, y, z) ∈ Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberPoint {
    pub x: Vector,
    pub y: Vector,
    pub z: f64,
}

/// `(x, u, p)`, a one-jet in the set `𝒰`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoint {
    pub x: Vector,
    pub u: f64,
    pub p: Vector,
}

/// Analytic partials an implementation may provide. Missing entries are
/// filled by central differences in [`eval_jet`].
#[derive(Debug, Clone, Default)]
pub struct Partials {
    pub gx: Option<Vector>,
    pub gy: Option<Vector>,
    pub gz: Option<f64>,
    pub gxx: Option<Matrix>,
    /// `gxy[(i, j)] = ∂²g / ∂x_i ∂y_j`.
    pub gxy: Option<Matrix>,
    pub gxz: Option<Vector>,
    /// Overrides the provenance recorded in the jet.
    pub source: Option<JetSource>,
}

impl Partials {
    fn count(&self) -> usize {
        [
            self.gx.is_some(),
            self.gy.is_some(),
            self.gz.is_some(),
            self.gxx.is_some(),
            self.gxy.is_some(),
            self.gxz.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JetSource {
    Analytic,
    FiniteDifference,
    Mixed,
}

/// A generating function `g(x, y, z)` on its domain, normalised so that
/// `g_z < 0`.
pub trait GeneratingFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }
    fn gamma(&self) -> &Gamma;
    fn eval(&self, x: &[f64], y: &[f64], z: f64) -> f64;
    fn partials(&self, _x: &[f64], _y: &[f64], _z: f64) -> Partials {
        Partials::default()
    }
    /// Analytic `g_z` alone, used by scalar root finding.
    fn g_z(&self, _x: &[f64], _y: &[f64], _z: f64) -> Option<f64> {
        None
    }
    /// Closed-form `z`-inverse `g*(x, y, u)` when one is known; the domain
    /// check is left to the caller.
    fn gstar(&self, _x: &[f64], _y: &[f64], _u: f64) -> Option<f64> {
        None
    }
}

pub type SharedGf = Arc<dyn GeneratingFunction>;

/// All partials entering `E` and `A` at one point of `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GJet {
    pub g: f64,
    pub gx: Vector,
    pub gy: Vector,
    pub gz: f64,
    pub gxx: Matrix,
    pub gxy: Matrix,
    pub gxz: Vector,
    pub source: JetSource,
}

impl GJet {
    /// `E = g_xy − g_z⁻¹ g_xz ⊗ g_y`.
    pub fn matrix_e(&self) -> Matrix {
        &self.gxy - (&self.gxz * self.gy.transpose()) / self.gz
    }

    /// `Q = −g_y / g_z`.
    pub fn q(&self) -> Vector {
        -&self.gy / self.gz
    }
}

fn fd_gx(gf: &dyn GeneratingFunction, x: &[f64], y: &[f64], z: f64, eps: f64) -> Vector {
    let mut xs = x.to_vec();
    Vector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = fd_step(eps, x[i]);
            xs[i] = x[i] + h;
            let fp = gf.eval(&xs, y, z);
            xs[i] = x[i] - h;
            let fm = gf.eval(&xs, y, z);
            xs[i] = x[i];
            (fp - fm) / (2.0 * h)
        }),
    )
}

fn fd_gy(gf: &dyn GeneratingFunction, x: &[f64], y: &[f64], z: f64, eps: f64) -> Vector {
    let mut ys = y.to_vec();
    Vector::from_iterator(
        y.len(),
        (0..y.len()).map(|j| {
            let h = fd_step(eps, y[j]);
            ys[j] = y[j] + h;
            let fp = gf.eval(x, &ys, z);
            ys[j] = y[j] - h;
            let fm = gf.eval(x, &ys, z);
            ys[j] = y[j];
            (fp - fm) / (2.0 * h)
        }),
    )
}

/// `g_z`, analytic when available.
pub fn partial_z(
    gf: &dyn GeneratingFunction,
    x: &[f64],
    y: &[f64],
    z: f64,
    tol: &Tolerances,
) -> f64 {
    if let Some(gz) = gf.g_z(x, y, z) {
        return gz;
    }
    if let Some(gz) = gf.partials(x, y, z).gz {
        return gz;
    }
    let h = fd_step(tol.fd_eps_first, z);
    (gf.eval(x, y, z + h) - gf.eval(x, y, z - h)) / (2.0 * h)
}

/// `g_x`, analytic when available.
fn first_x(gf: &dyn GeneratingFunction, x: &[f64], y: &[f64], z: f64, tol: &Tolerances) -> Vector {
    gf.partials(x, y, z)
        .gx
        .unwrap_or_else(|| fd_gx(gf, x, y, z, tol.fd_eps_first))
}

/// Evaluates `g` and its partials `g_x, g_y, g_z, g_xx, g_xy, g_xz` at a point
/// of `Γ`, using declared analytic partials where present and central
/// differences otherwise. Second derivatives are differences of `g_x`.
pub fn eval_jet(
    gf: &dyn GeneratingFunction,
    x: &[f64],
    y: &[f64],
    z: f64,
    tol: &Tolerances,
) -> Result<GJet> {
    let gamma = gf.gamma();
    if !gamma.contains(x, y, z) {
        return Err(Error::OutOfGamma(format!("x={x:?}, y={y:?}, z={z}")));
    }
    let n = x.len();
    let part = gf.partials(x, y, z);
    let provided = part.count();
    let eps2 = tol.fd_eps_second;

    let g = gf.eval(x, y, z);
    let gx = part
        .gx
        .clone()
        .unwrap_or_else(|| fd_gx(gf, x, y, z, tol.fd_eps_first));
    let gy = part
        .gy
        .clone()
        .unwrap_or_else(|| fd_gy(gf, x, y, z, tol.fd_eps_first));
    let gz = part.gz.unwrap_or_else(|| partial_z(gf, x, y, z, tol));

    let gxx = match part.gxx {
        Some(m) => m,
        None => {
            let mut m = Matrix::zeros(n, n);
            let mut xs = x.to_vec();
            for j in 0..n {
                let h = fd_step(eps2, x[j]);
                xs[j] = x[j] + h;
                let fp = first_x(gf, &xs, y, z, tol);
                xs[j] = x[j] - h;
                let fm = first_x(gf, &xs, y, z, tol);
                xs[j] = x[j];
                m.set_column(j, &((fp - fm) / (2.0 * h)));
            }
            m
        }
    };
    let gxy = match part.gxy {
        Some(m) => m,
        None => {
            let mut m = Matrix::zeros(n, n);
            let mut ys = y.to_vec();
            for j in 0..n {
                let h = fd_step(eps2, y[j]);
                ys[j] = y[j] + h;
                let fp = first_x(gf, x, &ys, z, tol);
                ys[j] = y[j] - h;
                let fm = first_x(gf, x, &ys, z, tol);
                ys[j] = y[j];
                m.set_column(j, &((fp - fm) / (2.0 * h)));
            }
            m
        }
    };
    let gxz = match part.gxz {
        Some(v) => v,
        None => {
            let h = fd_step(eps2, z);
            (first_x(gf, x, y, z + h, tol) - first_x(gf, x, y, z - h, tol)) / (2.0 * h)
        }
    };

    if !(gz < 0.0) {
        return Err(Error::DegenerateGz(gz));
    }
    let source = part.source.unwrap_or(match provided {
        6 => JetSource::Analytic,
        0 => JetSource::FiniteDifference,
        _ => JetSource::Mixed,
    });
    Ok(GJet {
        g,
        gx,
        gy,
        gz,
        gxx: symmetrize(&gxx),
        gxy,
        gxz,
        source,
    })
}

/// Jet at a fiber point.
pub fn eval_jet_at(gf: &dyn GeneratingFunction, fp: &FiberPoint, tol: &Tolerances) -> Result<GJet> {
    eval_jet(gf, fp.x.as_slice(), fp.y.as_slice(), fp.z, tol)
}

/// Samples `Γ` and reports the minimum of `−g_z` together with any
/// membership inconsistency. Holds iff `min(−g_z) > 0` and no inconsistency
/// was seen.
pub fn validate_gamma(
    gf: &dyn GeneratingFunction,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    let gamma = gf.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: ArgMin<FiberPoint> = ArgMin::default();
    let mut inconsistent = 0usize;
    let mut empty_intervals = 0usize;
    let mut used = 0usize;
    for _ in 0..samples.max(1) {
        // empty intervals are detected before sampling z
        let x = gamma.x_box.sample(&mut rng);
        let y = gamma.y_box.sample(&mut rng);
        if !gamma.pair_admissible(x.as_slice(), y.as_slice()) {
            continue;
        }
        let (lo, hi) = gamma.interval(x.as_slice(), y.as_slice());
        if !(lo < hi) {
            empty_intervals += 1;
            continue;
        }
        let (ilo, ihi) = gamma.inner_interval(x.as_slice(), y.as_slice());
        let z = if ihi > ilo {
            rng.random_range(ilo..ihi)
        } else {
            0.5 * (lo + hi)
        };
        if !gamma.contains(x.as_slice(), y.as_slice(), z) {
            inconsistent += 1;
            continue;
        }
        used += 1;
        let gz = partial_z(gf, x.as_slice(), y.as_slice(), z, tol);
        worst.offer(-gz, || FiberPoint {
            x: x.clone(),
            y: y.clone(),
            z,
        });
    }
    let margin = worst.value;
    let ok = margin > 0.0 && inconsistent == 0 && empty_intervals == 0 && used > 0;
    let mut report = ConditionReport::new("gamma", Verdict::from_bool(ok), margin, seed)
        .with_samples(used)
        .detail("min_neg_gz", margin)
        .detail("membership_inconsistencies", inconsistent as f64)
        .detail("empty_intervals", empty_intervals as f64);
    if let Some(fp) = worst.arg {
        report = report.with_witness(
            Witness::new()
                .vector("x", &fp.x)
                .vector("y", &fp.y)
                .scalar("z", fp.z),
        );
    }
    report
}
