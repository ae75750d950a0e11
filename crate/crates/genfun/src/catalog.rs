//! Built-in generating functions and the id → builder registry.
//!
//! The optimal-transport entries use `g(x, y, z) = −c(x − y) − z`; their
//! formally unbounded `z`-range is truncated to `(−w, w)` with
//! `w = z_half_width`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::genfun::{BoxDomain, Gamma, GeneratingFunction, JetSource, Partials, SharedGf};
use crate::numerics::{Matrix, Vector};

pub type Params = BTreeMap<String, f64>;

/// Radial cost `c(d)` of the displacement `d = x − y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialCost {
    /// `|d|²/2`
    Quadratic,
    /// `−log|d|`
    NegLog,
    /// `|d|^p / p`
    Power(f64),
}

impl RadialCost {
    fn value(&self, r2: f64) -> f64 {
        match *self {
            RadialCost::Quadratic => 0.5 * r2,
            RadialCost::NegLog => -0.5 * r2.ln(),
            RadialCost::Power(p) => r2.powf(0.5 * p) / p,
        }
    }

    /// `(a, b)` with `c_x = a·d` and `c_xx = a·I + b·d⊗d`.
    fn radial_coefficients(&self, r2: f64) -> (f64, f64) {
        match *self {
            RadialCost::Quadratic => (1.0, 0.0),
            RadialCost::NegLog => (-1.0 / r2, 2.0 / (r2 * r2)),
            RadialCost::Power(p) => (r2.powf(0.5 * p - 1.0), (p - 2.0) * r2.powf(0.5 * p - 2.0)),
        }
    }
}

/// `g(x, y, z) = −c(x − y) − z`.
pub struct OtGeneratingFunction {
    name: String,
    cost: RadialCost,
    gamma: Gamma,
    params: Params,
}

impl OtGeneratingFunction {
    pub fn new(name: &str, cost: RadialCost, gamma: Gamma, params: Params) -> Self {
        Self {
            name: name.to_string(),
            cost,
            gamma,
            params,
        }
    }

    pub fn cost(&self) -> RadialCost {
        self.cost
    }
}

fn displacement(x: &[f64], y: &[f64]) -> (Vector, f64) {
    let d = Vector::from_iterator(x.len(), x.iter().zip(y).map(|(a, b)| a - b));
    let r2 = d.norm_squared();
    (d, r2)
}

impl GeneratingFunction for OtGeneratingFunction {
    fn dim(&self) -> usize {
        self.gamma.x_box.dim()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn params(&self) -> Params {
        self.params.clone()
    }

    fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    fn eval(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        -self.cost.value(r2) - z
    }

    fn partials(&self, x: &[f64], y: &[f64], _z: f64) -> Partials {
        let n = x.len();
        let (d, r2) = displacement(x, y);
        let (a, b) = self.cost.radial_coefficients(r2);
        let cx = &d * a;
        let cxx = Matrix::identity(n, n) * a + (&d * d.transpose()) * b;
        Partials {
            gx: Some(-&cx),
            gy: Some(cx),
            gz: Some(-1.0),
            gxx: Some(-&cxx),
            gxy: Some(cxx),
            gxz: Some(Vector::zeros(n)),
            source: Some(JetSource::Analytic),
        }
    }

    fn g_z(&self, _x: &[f64], _y: &[f64], _z: f64) -> Option<f64> {
        Some(-1.0)
    }

    fn gstar(&self, x: &[f64], y: &[f64], u: f64) -> Option<f64> {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        Some(-self.cost.value(r2) - u)
    }
}

/// `g(x, y, z) = −c(x, y)(1 + εz) − z` with `c = |x − y|²/2`: a generating
/// function that is not affine in `z`.
pub struct SyntheticZ {
    eps: f64,
    gamma: Gamma,
    params: Params,
}

impl SyntheticZ {
    pub fn new(eps: f64, gamma: Gamma, params: Params) -> Self {
        Self { eps, gamma, params }
    }
}

impl GeneratingFunction for SyntheticZ {
    fn dim(&self) -> usize {
        self.gamma.x_box.dim()
    }

    fn name(&self) -> &str {
        "synthetic_z"
    }

    fn params(&self) -> Params {
        self.params.clone()
    }

    fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    fn eval(&self, x: &[f64], y: &[f64], z: f64) -> f64 {
        let c: f64 = 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        -c * (1.0 + self.eps * z) - z
    }

    fn partials(&self, x: &[f64], y: &[f64], z: f64) -> Partials {
        let n = x.len();
        let (d, r2) = displacement(x, y);
        let s = 1.0 + self.eps * z;
        Partials {
            gx: Some(-&d * s),
            gy: Some(&d * s),
            gz: Some(-self.eps * 0.5 * r2 - 1.0),
            gxx: Some(Matrix::identity(n, n) * -s),
            gxy: Some(Matrix::identity(n, n) * s),
            gxz: Some(-&d * self.eps),
            source: Some(JetSource::Analytic),
        }
    }

    fn g_z(&self, x: &[f64], y: &[f64], _z: f64) -> Option<f64> {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        Some(-self.eps * 0.5 * r2 - 1.0)
    }

    fn gstar(&self, x: &[f64], y: &[f64], u: f64) -> Option<f64> {
        let c: f64 = 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        Some(-(u + c) / (1.0 + self.eps * c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedVerdict {
    Holds,
    /// Holds with the MTW tensor identically zero.
    HoldsWithEquality,
    Fails,
}

/// How an expected verdict was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Closed-form argument.
    Analytic,
    /// Seeded numerical scan with the crate's own checkers.
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KnownProperty {
    pub verdict: ExpectedVerdict,
    pub provenance: Provenance,
}

pub type Builder = Arc<dyn Fn(&Params) -> Result<SharedGf> + Send + Sync>;

#[derive(Clone)]
pub struct CatalogEntry {
    pub id: String,
    pub description: String,
    pub default_params: Params,
    pub known_properties: BTreeMap<String, KnownProperty>,
    pub builder: Builder,
}

impl std::fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CatalogEntry")
            .field("id", &self.id)
            .field("default_params", &self.default_params)
            .field("known_properties", &self.known_properties)
            .finish_non_exhaustive()
    }
}

impl CatalogEntry {
    /// Builds with defaults overridden by `params`; unknown keys are rejected.
    pub fn build(&self, params: &Params) -> Result<SharedGf> {
        let mut merged = self.default_params.clone();
        for (k, v) in params {
            if !merged.contains_key(k) {
                return Err(Error::InvalidInput(format!(
                    "unknown parameter `{k}` for `{}`",
                    self.id
                )));
            }
            merged.insert(k.clone(), *v);
        }
        (self.builder)(&merged)
    }
}

fn known(pairs: &[(&str, ExpectedVerdict, Provenance)]) -> BTreeMap<String, KnownProperty> {
    pairs
        .iter()
        .map(|(k, verdict, provenance)| {
            (
                k.to_string(),
                KnownProperty {
                    verdict: *verdict,
                    provenance: *provenance,
                },
            )
        })
        .collect()
}

fn params(pairs: &[(&str, f64)]) -> Params {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn dimension(p: &Params) -> Result<usize> {
    let n = p["n"];
    if n < 1.0 || n.fract() != 0.0 {
        return Err(Error::InvalidInput(format!(
            "dimension n must be a positive integer, got {n}"
        )));
    }
    Ok(n as usize)
}

fn positive(p: &Params, key: &str) -> Result<f64> {
    let v = p[key];
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidInput(format!(
            "parameter `{key}` must be positive, got {v}"
        )));
    }
    Ok(v)
}

/// Separated boxes `x ∈ [−½, ½]ⁿ`, `y ∈ [3/2, 5/2] × [−½, ½]ⁿ⁻¹` and the
/// constraint `|x − y| ≥ r0`.
fn separated_gamma(n: usize, p: &Params) -> Result<Gamma> {
    let x_box = BoxDomain::cube(n, -0.5, 0.5);
    let mut ylo = vec![-0.5; n];
    let mut yhi = vec![0.5; n];
    ylo[0] = 1.5;
    yhi[0] = 2.5;
    let y_box = BoxDomain::new(ylo, yhi);
    let default_r0 = (x_box.center() - y_box.center()).norm() - x_box.radius() - y_box.radius();
    if default_r0 <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "boxes are not separated in dimension {n}; the singular cost needs n ≤ 3"
        )));
    }
    let r0 = match p.get("r0") {
        Some(v) if *v > 0.0 => *v,
        _ => default_r0,
    };
    let w = positive(p, "z_half_width")?;
    Ok(
        Gamma::with_constant_interval(x_box, y_box, -w, w).with_pair_constraint(move |x, y| {
            let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            r2 >= r0 * r0
        }),
    )
}

/// The built-in catalog.
pub fn list_catalog() -> Vec<CatalogEntry> {
    use ExpectedVerdict::*;
    use Provenance::*;
    vec![
        CatalogEntry {
            id: "ot_quad".into(),
            description: "quadratic cost c = |x-y|^2/2, g = -c - z".into(),
            default_params: params(&[("n", 2.0), ("z_half_width", 5.0)]),
            known_properties: known(&[
                ("A1", Holds, Analytic),
                ("A1*", Holds, Analytic),
                ("A2", Holds, Analytic),
                ("A3w", HoldsWithEquality, Analytic),
                ("A3s", Fails, Analytic),
            ]),
            builder: Arc::new(|p| {
                let n = dimension(p)?;
                let w = positive(p, "z_half_width")?;
                let gamma = Gamma::with_constant_interval(
                    BoxDomain::cube(n, -2.0, 2.0),
                    BoxDomain::cube(n, -2.0, 2.0),
                    -w,
                    w,
                );
                Ok(Arc::new(OtGeneratingFunction::new(
                    "ot_quad",
                    RadialCost::Quadratic,
                    gamma,
                    p.clone(),
                )) as SharedGf)
            }),
        },
        CatalogEntry {
            id: "ot_log".into(),
            description: "logarithmic cost c = -log|x-y| on separated boxes".into(),
            default_params: params(&[("n", 2.0), ("z_half_width", 5.0), ("r0", 0.0)]),
            known_properties: known(&[
                ("A1", Holds, Measured),
                ("A1*", Holds, Measured),
                ("A2", Holds, Analytic),
                ("A3w", Holds, Measured),
                ("A3s", Holds, Measured),
            ]),
            builder: Arc::new(|p| {
                let n = dimension(p)?;
                let gamma = separated_gamma(n, p)?;
                Ok(Arc::new(OtGeneratingFunction::new(
                    "ot_log",
                    RadialCost::NegLog,
                    gamma,
                    p.clone(),
                )) as SharedGf)
            }),
        },
        CatalogEntry {
            id: "ot_power".into(),
            description: "power cost c = |x-y|^p/p on separated boxes".into(),
            default_params: params(&[("n", 2.0), ("p", 4.0), ("z_half_width", 5.0), ("r0", 0.0)]),
            known_properties: known(&[
                ("A2", Holds, Analytic),
                ("A3w", Fails, Measured),
                ("A3s", Fails, Measured),
            ]),
            builder: Arc::new(|p| {
                let n = dimension(p)?;
                let power = p["p"];
                if !power.is_finite() || power == 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "power p must be nonzero, got {power}"
                    )));
                }
                let gamma = separated_gamma(n, p)?;
                Ok(Arc::new(OtGeneratingFunction::new(
                    "ot_power",
                    RadialCost::Power(power),
                    gamma,
                    p.clone(),
                )) as SharedGf)
            }),
        },
        CatalogEntry {
            id: "synthetic_z".into(),
            description: "g = -c(x,y)(1+eps z) - z, c = |x-y|^2/2, z in (-1, 1)".into(),
            default_params: params(&[("n", 2.0), ("eps", 0.1)]),
            known_properties: known(&[("A2", Holds, Analytic)]),
            builder: Arc::new(|p| {
                let n = dimension(p)?;
                let eps = positive(p, "eps")?;
                if eps > 0.25 {
                    return Err(Error::InvalidInput(format!(
                        "eps must lie in (0, 1/4], got {eps}"
                    )));
                }
                let gamma = Gamma::with_constant_interval(
                    BoxDomain::cube(n, -1.0, 1.0),
                    BoxDomain::cube(n, -1.0, 1.0),
                    -1.0,
                    1.0,
                );
                Ok(Arc::new(SyntheticZ::new(eps, gamma, p.clone())) as SharedGf)
            }),
        },
    ]
}

/// Catalog entries plus user-registered plugins, addressed by id.
#[derive(Clone)]
pub struct Registry {
    entries: BTreeMap<String, CatalogEntry>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::with_catalog()
    }
}

impl Registry {
    pub fn with_catalog() -> Self {
        Self {
            entries: list_catalog()
                .into_iter()
                .map(|e| (e.id.clone(), e))
                .collect(),
        }
    }

    /// Registers (or replaces) a plugin entry.
    pub fn register(&mut self, entry: CatalogEntry) {
        self.entries.insert(entry.id.clone(), entry);
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.get(id)
    }

    pub fn build(&self, id: &str, params: &Params) -> Result<SharedGf> {
        self.get(id)
            .ok_or_else(|| Error::InvalidInput(format!("unknown generating function `{id}`")))?
            .build(params)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CatalogEntry> {
        self.entries.values()
    }
}

/// Builds a catalog entry with default parameters.
pub fn build(id: &str) -> Result<SharedGf> {
    Registry::with_catalog().build(id, &Params::new())
}

/// Builds a catalog entry with parameter overrides.
pub fn build_with(id: &str, overrides: &[(&str, f64)]) -> Result<SharedGf> {
    Registry::with_catalog().build(id, &params(overrides))
}
