//! g-convexity of sampled functions: g-affine functions, the g-transform and
//! its biconjugate envelope, the g-normal mapping, sections, and grid-scale
//! checks of the section, normal-map and local-to-global theorems.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::conditions::{
    check_a3w, sample_segments, solve_segment, SegmentConfig, SegmentSampling,
};
use crate::error::{Error, Result};
use crate::genfun::{eval_jet, BoxDomain, GeneratingFunction, JetPoint};
use crate::hull::{hull_defect, Point2};
use crate::implicit::{eval_gstar, matrix_a, solve_yz};
use crate::numerics::{symmetrize, Matrix, Tolerances, Vector};
use crate::report::{ConditionReport, Verdict, Witness};

/// Attainment tolerance of the g-normal mapping when none is given.
pub const DEFAULT_ATTAIN_TOL: f64 = 1e-8;

/// Uniform tensor grid on a box, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vector,
    pub hi: Vector,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(lo: Vector, hi: Vector, counts: Vec<usize>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != counts.len() || lo.is_empty() {
            return Err(Error::InvalidInput(
                "grid bounds and counts disagree in dimension".into(),
            ));
        }
        if counts.iter().any(|&c| c < 2) || (0..lo.len()).any(|k| !(hi[k] > lo[k])) {
            return Err(Error::InvalidInput(
                "a grid needs at least two nodes per axis on a nonempty box".into(),
            ));
        }
        Ok(Self { lo, hi, counts })
    }

    /// `per_axis` nodes per axis over `b`, endpoints included.
    pub fn on_box(b: &BoxDomain, per_axis: usize) -> Result<Self> {
        Self::new(b.lo.clone(), b.hi.clone(), vec![per_axis; b.dim()])
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.counts[axis] - 1) as f64
    }

    /// The largest spacing, `h_grid`.
    pub fn h(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k)).fold(0.0, f64::max)
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut m = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            m[k] = i % self.counts[k];
            i /= self.counts[k];
        }
        m
    }

    pub fn index(&self, m: &[usize]) -> usize {
        m.iter()
            .zip(&self.counts)
            .fold(0, |acc, (mk, ck)| acc * ck + mk)
    }

    pub fn node(&self, i: usize) -> Vector {
        let m = self.multi_index(i);
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|k| self.lo[k] + m[k] as f64 * self.spacing(k)),
        )
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: &Vector) -> usize {
        let m: Vec<usize> = (0..self.dim())
            .map(|k| {
                let t = ((x[k] - self.lo[k]) / self.spacing(k)).round();
                t.clamp(0.0, (self.counts[k] - 1) as f64) as usize
            })
            .collect();
        self.index(&m)
    }

    /// The neighbour one step along `axis` in direction `dir` (±1).
    pub fn step(&self, i: usize, axis: usize, dir: i64) -> Option<usize> {
        let mut m = self.multi_index(i);
        let t = m[axis] as i64 + dir;
        if t < 0 || t >= self.counts[axis] as i64 {
            return None;
        }
        m[axis] = t as usize;
        Some(self.index(&m))
    }
}

/// Values on the nodes of a grid; inactive nodes lie outside `Ω` and are
/// ignored everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub active: Vec<bool>,
}

impl SampledFunction {
    pub fn new(grid: Grid, values: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || active.len() != grid.len() {
            return Err(Error::InvalidInput(
                "value or mask length does not match the grid".into(),
            ));
        }
        if let Some(i) = (0..values.len()).find(|&i| active[i] && !values[i].is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at active node {i}"
            )));
        }
        Ok(Self {
            grid,
            values,
            active,
        })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Vector) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
        let active = vec![true; grid.len()];
        Self {
            grid,
            values,
            active,
        }
    }

    /// Restricts `Ω` to the nodes where `keep` holds.
    pub fn masked(mut self, keep: impl Fn(&Vector) -> bool) -> Self {
        for i in 0..self.grid.len() {
            self.active[i] = self.active[i] && keep(&self.grid.node(i));
        }
        self
    }

    /// `max_k g(·, y_k, z_k)` over the grid.
    pub fn max_of_affines(
        gf: &dyn GeneratingFunction,
        grid: Grid,
        affines: &[GAffine],
    ) -> Result<Self> {
        if affines.is_empty() {
            return Err(Error::InvalidInput("max of an empty family".into()));
        }
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let x = grid.node(i);
            let mut best = f64::NEG_INFINITY;
            for ga in affines {
                best = best.max(g_affine_eval(gf, ga, &x)?);
            }
            values.push(best);
        }
        let active = vec![true; grid.len()];
        Self::new(grid, values, active)
    }

    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.values.len()).filter(|&i| self.active[i])
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Largest difference quotient between active neighbours.
    pub fn lipschitz(&self) -> f64 {
        let mut lip: f64 = 0.0;
        for i in self.active_indices() {
            for k in 0..self.grid.dim() {
                if let Some(j) = self.grid.step(i, k, 1).filter(|&j| self.active[j]) {
                    lip = lip.max((self.values[j] - self.values[i]).abs() / self.grid.spacing(k));
                }
            }
        }
        lip
    }

    /// Vertices of the grid subdifferential at node `i`: every choice of a
    /// forward or backward difference quotient per axis.
    pub fn one_sided_gradients(&self, i: usize) -> Vec<Vector> {
        let n = self.grid.dim();
        let mut per_axis: Vec<Vec<f64>> = Vec::with_capacity(n);
        for k in 0..n {
            let h = self.grid.spacing(k);
            let mut q = Vec::new();
            if let Some(j) = self.grid.step(i, k, 1).filter(|&j| self.active[j]) {
                q.push((self.values[j] - self.values[i]) / h);
            }
            if let Some(j) = self.grid.step(i, k, -1).filter(|&j| self.active[j]) {
                q.push((self.values[i] - self.values[j]) / h);
            }
            if q.is_empty() {
                return Vec::new();
            }
            per_axis.push(q);
        }
        let mut out = vec![Vector::zeros(n)];
        for (k, qs) in per_axis.iter().enumerate() {
            out = out
                .into_iter()
                .flat_map(|p| {
                    qs.iter().map(move |q| {
                        let mut p = p.clone();
                        p[k] = *q;
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Average of the one-sided quotients per axis.
    pub fn central_gradient(&self, i: usize) -> Option<Vector> {
        let v = self.one_sided_gradients(i);
        if v.is_empty() {
            return None;
        }
        Some(
            v.iter()
                .fold(Vector::zeros(self.grid.dim()), |acc, p| acc + p)
                / v.len() as f64,
        )
    }

    /// Kink test: the grid subdifferential has diameter above `10·h·Lip`.
    pub fn is_kink(&self, i: usize) -> bool {
        let v = self.one_sided_gradients(i);
        let diam = v
            .iter()
            .flat_map(|a| v.iter().map(move |b| (a - b).norm()))
            .fold(0.0, f64::max);
        diam > 10.0 * self.grid.h() * self.lipschitz()
    }
}

/// The g-affine function `x ↦ g(x, y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GAffine {
    pub y: Vector,
    pub z: f64,
}

pub fn g_affine_eval(gf: &dyn GeneratingFunction, ga: &GAffine, x: &Vector) -> Result<f64> {
    if !gf.gamma().contains(x.as_slice(), ga.y.as_slice(), ga.z) {
        return Err(Error::OutOfGamma(format!(
            "x={:?}, y={:?}, z={}",
            x.as_slice(),
            ga.y.as_slice(),
            ga.z
        )));
    }
    Ok(gf.eval(x.as_slice(), ga.y.as_slice(), ga.z))
}

/// `count` seeded g-affine functions with parameters on `y_grid` nodes and
/// `z` within 5% of the middle of `I(x_c, y)` at the grid centre `x_c`.
pub fn seeded_affines(
    gf: &dyn GeneratingFunction,
    x_grid: &Grid,
    y_grid: &Grid,
    count: usize,
    seed: u64,
) -> Vec<GAffine> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xc = (&x_grid.lo + &x_grid.hi) * 0.5;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * 100 {
        if out.len() == count {
            break;
        }
        let y = y_grid.node(rng.random_range(0..y_grid.len()));
        let s: f64 = rng.random_range(-0.05..0.05);
        if !gf.gamma().pair_admissible(xc.as_slice(), y.as_slice()) {
            continue;
        }
        let (lo, hi) = gf.gamma().inner_interval(xc.as_slice(), y.as_slice());
        out.push(GAffine {
            y,
            z: 0.5 * (lo + hi) + s * (hi - lo),
        });
    }
    out
}

/// A g-affine function with parameter `y0` through `(x0, u(x0) + t)` whose
/// open section holds about `fraction` of the active nodes; `t ≥ 0` by
/// bisection.
pub fn section_affine(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    x0: usize,
    y0: &Vector,
    fraction: f64,
    tol: &Tolerances,
) -> Result<GAffine> {
    let x = u.grid.node(x0);
    let total = u.active_count() as f64;
    let make = |t: f64| -> Result<GAffine> {
        let z = eval_gstar(gf, x.as_slice(), y0.as_slice(), u.values[x0] + t, tol)?;
        Ok(GAffine { y: y0.clone(), z })
    };
    let share = |ga: &GAffine| -> Result<f64> {
        Ok(section_of(gf, u, ga, SectionMode::Open)?.count() as f64 / total)
    };
    let (umin, umax) = u
        .active_indices()
        .map(|i| u.values[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| {
            (a.0.min(v), a.1.max(v))
        });
    let (mut a, mut b) = (0.0, (umax - umin).max(1e-12));
    for _ in 0..16 {
        if make(b).and_then(|g| share(&g)).is_ok_and(|f| f >= fraction) {
            break;
        }
        b *= 2.0;
    }
    for _ in 0..40 {
        let m = 0.5 * (a + b);
        match make(m).and_then(|g| share(&g)) {
            Ok(f) if f < fraction => a = m,
            _ => b = m,
        }
    }
    make(0.5 * (a + b))
}

/// A g-transform with its maximizing source nodes.
#[derive(Debug, Clone)]
pub struct Transform {
    pub values: SampledFunction,
    /// Lowest-index maximizing node of the source grid per target node.
    pub argmax: Vec<Option<usize>>,
    pub clipped_pairs: usize,
    pub pairs: usize,
}

impl Transform {
    pub fn clipped_fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.clipped_pairs as f64 / self.pairs as f64
        }
    }
}

/// Parallel max over source nodes per target node, ordered and with
/// lowest-index ties.
fn sup_over(
    targets: &Grid,
    target_active: &[bool],
    sources: &[usize],
    value: impl Fn(usize, &Vector) -> Option<f64> + Sync,
) -> Result<(Vec<f64>, Vec<Option<usize>>, usize)> {
    let rows: Vec<(f64, Option<usize>, usize)> = (0..targets.len())
        .into_par_iter()
        .map(|j| {
            if !target_active[j] {
                return (f64::NAN, None, 0);
            }
            let t = targets.node(j);
            let mut best = (f64::NEG_INFINITY, None, 0);
            for &i in sources {
                match value(i, &t) {
                    Some(v) if v > best.0 => best = (v, Some(i), best.2),
                    Some(_) => {}
                    None => best.2 += 1,
                }
            }
            best
        })
        .collect();
    if let Some(j) = rows.iter().position(|r| r.1.is_none() && !r.0.is_nan()) {
        return Err(Error::AllClipped(j));
    }
    let clipped = rows.iter().map(|r| r.2).sum();
    let (values, argmax) = rows.into_iter().map(|r| (r.0, r.1)).unzip();
    Ok((values, argmax, clipped))
}

/// `v(y) = max_x g*(x, y, u(x))` over the active nodes of `u`, for every
/// node of `y_grid`.
pub fn g_transform_full(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    y_grid: &Grid,
    tol: &Tolerances,
) -> Result<Transform> {
    let sources: Vec<usize> = u.active_indices().collect();
    let xs: Vec<Vector> = (0..u.grid.len()).map(|i| u.grid.node(i)).collect();
    let active = vec![true; y_grid.len()];
    let (values, argmax, clipped) = sup_over(y_grid, &active, &sources, |i, y| {
        eval_gstar(gf, xs[i].as_slice(), y.as_slice(), u.values[i], tol).ok()
    })?;
    Ok(Transform {
        values: SampledFunction {
            grid: y_grid.clone(),
            values,
            active,
        },
        argmax,
        clipped_pairs: clipped,
        pairs: sources.len() * y_grid.len(),
    })
}

pub fn g_transform(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    y_grid: &Grid,
    tol: &Tolerances,
) -> Result<SampledFunction> {
    Ok(g_transform_full(gf, u, y_grid, tol)?.values)
}

/// `w(x) = max_y g(x, y, v(y))` on the active nodes of `like`.
fn envelope_of(
    gf: &dyn GeneratingFunction,
    v: &SampledFunction,
    like: &SampledFunction,
) -> Result<Transform> {
    let sources: Vec<usize> = v.active_indices().collect();
    let ys: Vec<Vector> = (0..v.grid.len()).map(|j| v.grid.node(j)).collect();
    let (values, argmax, clipped) = sup_over(&like.grid, &like.active, &sources, |j, x| {
        let (y, z) = (ys[j].as_slice(), v.values[j]);
        gf.gamma()
            .contains(x.as_slice(), y, z)
            .then(|| gf.eval(x.as_slice(), y, z))
    })?;
    let values = values
        .into_iter()
        .zip(&like.active)
        .map(|(w, a)| if *a { w } else { f64::NAN })
        .collect();
    Ok(Transform {
        values: SampledFunction {
            grid: like.grid.clone(),
            values,
            active: like.active.clone(),
        },
        argmax,
        clipped_pairs: clipped,
        pairs: sources.len() * like.active_count(),
    })
}

/// The transform `v` of `u` and the biconjugate `u**` with its maximizing
/// `y`-nodes.
#[derive(Debug, Clone)]
pub struct Envelope {
    pub transform: Transform,
    pub biconjugate: Transform,
}

pub fn g_envelope(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    y_grid: &Grid,
    tol: &Tolerances,
) -> Result<Envelope> {
    let transform = g_transform_full(gf, u, y_grid, tol)?;
    let biconjugate = envelope_of(gf, &transform.values, u)?;
    Ok(Envelope {
        transform,
        biconjugate,
    })
}

/// `u**(x) = max_y g(x, y, v(y))` with `v` the g-transform of `u`.
pub fn g_biconjugate(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    y_grid: &Grid,
    tol: &Tolerances,
) -> Result<SampledFunction> {
    Ok(g_envelope(gf, u, y_grid, tol)?.biconjugate.values)
}

/// `max(u − u**)` over active nodes, with its node.
fn envelope_defect(u: &SampledFunction, env: &Envelope) -> (f64, usize) {
    u.active_indices()
        .map(|i| (u.values[i] - env.biconjugate.values.values[i], i))
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
}

fn g_convexity_report(
    u: &SampledFunction,
    env: &Envelope,
    tolerance: Option<f64>,
) -> ConditionReport {
    let lip = u.lipschitz();
    let h = u.grid.h();
    let allowance = tolerance.unwrap_or(2.0 * lip * h);
    let (defect, at) = envelope_defect(u, env);
    let margin = allowance - defect;
    ConditionReport::new("g-convex", Verdict::from_bool(margin >= 0.0), margin, 0)
        .with_samples(u.active_count())
        .detail("defect", defect)
        .detail("tolerance", allowance)
        .detail("lipschitz", lip)
        .detail("h_grid", h)
        .detail("clipped_fraction", env.transform.clipped_fraction())
        .with_witness(
            Witness::new()
                .vector("x", &u.grid.node(at))
                .scalar("u", u.values[at]),
        )
}

/// Holds iff `max(u − u**) ≤ tolerance`, by default `2·Lip·h_grid`.
pub fn is_g_convex(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    y_grid: &Grid,
    tolerance: Option<f64>,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let env = g_envelope(gf, u, y_grid, tol)?;
    Ok(g_convexity_report(u, &env, tolerance))
}

fn support_tol(u: &SampledFunction) -> f64 {
    1e-8 + 2.0 * u.lipschitz() * u.grid.h()
}

/// The g-normal mapping at one node.
#[derive(Debug, Clone)]
pub struct NormalMapResult {
    pub x0: Vector,
    pub u0: f64,
    /// Global supports `(y, g*(x0, y, u0))` over the attaining `y`-nodes.
    pub supports: Vec<GAffine>,
    pub support_nodes: Vec<usize>,
    /// `v(y) − g*(x0, y, u0)` for every `y`-node where it is defined.
    pub gaps: Vec<Option<f64>>,
    /// `Y(x0, u0, p)` over the vertices `p` of the grid subdifferential.
    pub sigma0: Vec<Vector>,
    pub sigma0_rejected: usize,
}

/// Supports at node `x0`: `y`-nodes whose candidate `g*(x0, y, u0)` is within
/// `attain_tol` of `v(y)` and whose g-affine function lies below `u` on the
/// grid up to `1e-8 + 2·Lip·h_grid`.
pub fn g_normal_map(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    x0: usize,
    y_grid: &Grid,
    attain_tol: Option<f64>,
    tol: &Tolerances,
) -> Result<NormalMapResult> {
    let env = g_envelope(gf, u, y_grid, tol)?;
    normal_map_with(gf, u, x0, &env, attain_tol, tol)
}

fn normal_map_with(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    x0: usize,
    env: &Envelope,
    attain_tol: Option<f64>,
    tol: &Tolerances,
) -> Result<NormalMapResult> {
    if !u.active[x0] {
        return Err(Error::InvalidInput(format!(
            "node {x0} is outside the domain"
        )));
    }
    let report = g_convexity_report(u, env, None);
    if report.fails() {
        return Err(Error::NotGConvex(report.details["defect"]));
    }
    let xv = u.grid.node(x0);
    let u0 = u.values[x0];
    let v = &env.transform.values;
    let attain = attain_tol.unwrap_or(DEFAULT_ATTAIN_TOL);
    let stol = support_tol(u);
    let xs: Vec<(Vector, f64)> = u
        .active_indices()
        .map(|i| (u.grid.node(i), u.values[i]))
        .collect();
    let gaps: Vec<Option<f64>> = (0..v.grid.len())
        .map(|j| {
            let y = v.grid.node(j);
            eval_gstar(gf, xv.as_slice(), y.as_slice(), u0, tol)
                .ok()
                .map(|c| v.values[j] - c)
        })
        .collect();
    let mut supports = Vec::new();
    let mut support_nodes = Vec::new();
    for (j, gap) in gaps.iter().enumerate() {
        let Some(gap) = gap else { continue };
        if *gap > attain * (1.0 + v.values[j].abs()) {
            continue;
        }
        let y = v.grid.node(j);
        let z = v.values[j] - gap;
        let below = xs.iter().all(|(x, ux)| {
            !gf.gamma().contains(x.as_slice(), y.as_slice(), z)
                || *ux >= gf.eval(x.as_slice(), y.as_slice(), z) - stol
        });
        if below {
            supports.push(GAffine { y, z });
            support_nodes.push(j);
        }
    }
    let mut sigma0 = Vec::new();
    let mut rejected = 0;
    for p in u.one_sided_gradients(x0) {
        match solve_yz(
            gf,
            &JetPoint {
                x: xv.clone(),
                u: u0,
                p,
            },
            None,
            tol,
        ) {
            Ok(s) => sigma0.push(s.y),
            Err(_) => rejected += 1,
        }
    }
    Ok(NormalMapResult {
        x0: xv,
        u0,
        supports,
        support_nodes,
        gaps,
        sigma0,
        sigma0_rejected: rejected,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionMode {
    /// `u < g0`
    Open,
    /// `u ≤ g0`
    Closed,
    /// `|u − g0| ≤ contact tolerance`
    Contact,
}

/// A section of `u` cut by a g-affine function, as a node mask.
#[derive(Debug, Clone)]
pub struct Section {
    pub mode: SectionMode,
    pub mask: Vec<bool>,
}

impl Section {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// The section `{u < g0}`, `{u ≤ g0}` or contact set `{u = g0}` (within
/// `1e-8·(1 + |u|)`) over the active nodes.
pub fn section_of(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    ga: &GAffine,
    mode: SectionMode,
) -> Result<Section> {
    let mut mask = vec![false; u.grid.len()];
    for i in u.active_indices() {
        let g0 = g_affine_eval(gf, ga, &u.grid.node(i))?;
        let ui = u.values[i];
        mask[i] = match mode {
            SectionMode::Open => ui < g0,
            SectionMode::Closed => ui <= g0,
            SectionMode::Contact => (ui - g0).abs() <= 1e-8 * (1.0 + ui.abs()),
        };
    }
    Ok(Section { mode, mask })
}

/// Convexity of the image of a node set under a planar map, by hull defect
/// against the allowance `2·h·Lip`.
#[derive(Debug, Clone)]
pub struct ImageHull {
    pub defect: f64,
    pub allowance: f64,
    pub lipschitz: f64,
    pub points: usize,
    pub clipped: usize,
    pub probe: Option<Point2>,
}

impl ImageHull {
    pub fn margin(&self) -> f64 {
        self.allowance - self.defect
    }
}

fn image_hull(
    grid: &Grid,
    mask: &[bool],
    map: impl Fn(&Vector) -> Option<Vector>,
) -> Result<ImageHull> {
    if grid.dim() != 2 {
        return Err(Error::Unsupported(format!(
            "image hull defects are planar, got n = {}",
            grid.dim()
        )));
    }
    let images: Vec<Option<Vector>> = (0..grid.len())
        .map(|i| if mask[i] { map(&grid.node(i)) } else { None })
        .collect();
    let clipped = (0..grid.len())
        .filter(|&i| mask[i] && images[i].is_none())
        .count();
    let mut lip: f64 = 0.0;
    for i in 0..grid.len() {
        let Some(a) = &images[i] else { continue };
        for k in 0..2 {
            if let Some(b) = grid.step(i, k, 1).and_then(|j| images[j].as_ref()) {
                lip = lip.max((b - a).norm() / grid.spacing(k));
            }
        }
    }
    let points: Vec<Point2> = images.iter().flatten().map(|q| [q[0], q[1]]).collect();
    let h = grid.h();
    let allowance = 2.0 * h * lip;
    let (defect, probe) = if points.len() < 3 || lip == 0.0 {
        (0.0, None)
    } else {
        hull_defect(&points, 0.5 * h * lip)
    };
    Ok(ImageHull {
        defect,
        allowance,
        lipschitz: lip,
        points: points.len(),
        clipped,
        probe,
    })
}

/// Hull defect of `Q(·, y0, z0)` over the masked nodes.
pub fn q_image_hull(
    gf: &dyn GeneratingFunction,
    grid: &Grid,
    mask: &[bool],
    y0: &Vector,
    z0: f64,
    tol: &Tolerances,
) -> Result<ImageHull> {
    image_hull(grid, mask, |x| {
        eval_jet(gf, x.as_slice(), y0.as_slice(), z0, tol)
            .ok()
            .map(|j| j.q())
    })
}

/// Settings shared by the section and local-to-global checks.
#[derive(Debug, Clone)]
pub struct GConvexConfig {
    pub seed: u64,
    /// Nodes sampled for segment-solvability hypotheses.
    pub hypothesis_samples: usize,
    /// `θ`-nodes per hypothesis segment.
    pub theta_m: usize,
    /// Local support radius in units of `h_grid`.
    pub local_radius: f64,
    /// Domain-convexity probes `(y, z)` for the local-to-global check.
    pub domain_probes: usize,
}

impl Default for GConvexConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            hypothesis_samples: 32,
            theta_m: 8,
            local_radius: 5.0,
            domain_probes: 8,
        }
    }
}

fn seeded_nodes(u: &SampledFunction, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let active: Vec<usize> = u.active_indices().collect();
    let k = count.min(active.len());
    let mut picked: Vec<usize> = sample_indices(rng, active.len(), k)
        .into_iter()
        .map(|t| active[t])
        .collect();
    picked.sort_unstable();
    picked
}

/// Sections `{u < g0}` and `{u ≤ g0}` of `u` have convex `Q(·, y0, z0)`
/// images. The domain must have a convex image itself (otherwise the result
/// is inconclusive), and the jet segments from `Dg0(x)` to
/// `g_x(x, y, g*(x, y, g0(x)))` must solve for sampled supports `y`.
pub fn check_theorem31(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    ga: &GAffine,
    y_grid: &Grid,
    cfg: &GConvexConfig,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let env = g_envelope(gf, u, y_grid, tol)?;
    check_theorem31_with(gf, u, &env, ga, cfg, tol)
}

/// [`check_theorem31`] reusing the envelope of `u`.
pub fn check_theorem31_with(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    env: &Envelope,
    ga: &GAffine,
    cfg: &GConvexConfig,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let id = "thm3.1";
    if gf.dim() != 2 {
        return Err(Error::Unsupported("section hull defects need n = 2".into()));
    }
    let a3w = check_a3w(
        gf,
        &sample_segments(
            gf,
            &SegmentSampling {
                seed: cfg.seed,
                ..Default::default()
            },
            tol,
        ),
        8,
        cfg.seed,
        tol,
    );
    let mut report = ConditionReport::new(id, Verdict::Inconclusive, 0.0, cfg.seed)
        .detail("a3w_margin", a3w.margin);
    if !a3w.holds() {
        report = report.note(format!(
            "A3w check returned {} on seeded segments: the theorem does not apply",
            a3w.verdict.as_str()
        ));
    }
    let domain = q_image_hull(gf, &u.grid, &u.active, &ga.y, ga.z, tol)?;
    report = report.detail("domain_margin", domain.margin());
    if domain.margin() < 0.0 || domain.clipped > 0 {
        return Ok(report.note("domain image under Q(., y0, z0) is not convex: hypothesis not met"));
    }

    let conv = g_convexity_report(u, env, None);
    report = report.detail("u_envelope_defect", conv.details["defect"]);
    if conv.fails() {
        return Ok(report.note("u is not g-convex on the grid: hypothesis not met"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nodes = seeded_nodes(u, cfg.hypothesis_samples, &mut rng);
    let mut failures = 0;
    for &i in &nodes {
        let x = u.grid.node(i);
        let y = v_node(env, i);
        let ok = (|| -> Result<()> {
            let g0 = g_affine_eval(gf, ga, &x)?;
            let p0 = eval_jet(gf, x.as_slice(), ga.y.as_slice(), ga.z, tol)?.gx;
            let zs = eval_gstar(gf, x.as_slice(), y.as_slice(), g0, tol)?;
            let p1 = eval_jet(gf, x.as_slice(), y.as_slice(), zs, tol)?.gx;
            let seg = SegmentConfig {
                x0: x.clone(),
                u0: g0,
                p0,
                p1,
                theta_m: cfg.theta_m,
            };
            for r in solve_segment(gf, &seg, tol) {
                r?;
            }
            Ok(())
        })();
        failures += ok.is_err() as usize;
    }
    report = report
        .detail("hypothesis_failures", failures as f64)
        .with_samples(nodes.len());
    if failures as f64 > 0.01 * nodes.len() as f64 {
        return Err(Error::HypothesisUnverifiable(format!(
            "{failures} of {} support segments left the jet domain",
            nodes.len()
        )));
    }

    let mut margin = f64::INFINITY;
    let mut witness = None;
    for mode in [SectionMode::Open, SectionMode::Closed] {
        let s = section_of(gf, u, ga, mode)?;
        let img = q_image_hull(gf, &u.grid, &s.mask, &ga.y, ga.z, tol)?;
        let key = if mode == SectionMode::Open {
            "open"
        } else {
            "closed"
        };
        report = report
            .detail(&format!("{key}_defect"), img.defect)
            .detail(&format!("{key}_allowance"), img.allowance)
            .detail(&format!("{key}_nodes"), s.count() as f64);
        if img.margin() < margin {
            margin = img.margin();
            witness = img.probe;
        }
    }
    report.margin = margin;
    report.verdict = Verdict::from_bool(margin >= 0.0);
    if let Some(q) = witness {
        report = report.with_witness(
            Witness::new()
                .vector("y0", &ga.y)
                .scalar("z0", ga.z)
                .vector("q_probe", &Vector::from_vec(q.to_vec())),
        );
    }
    Ok(report)
}

/// A `y`-node attaining the biconjugate at source node `i`.
fn v_node(env: &Envelope, i: usize) -> Vector {
    let v = &env.transform.values;
    v.grid
        .node(env.biconjugate.argmax[i].expect("active node has a maximizer"))
}

/// The normal map at a kink is g*-convex: the `P(x0, ·, u0)` image of the
/// near-attaining `y`-nodes lies on the segment between the images of the
/// extreme supports within `2·h_grid` (a hull-defect test when the supports
/// span a planar region). A single support holds vacuously.
pub fn check_corollary31(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    x0: usize,
    y_grid: &Grid,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let id = "cor3.1";
    let env = g_envelope(gf, u, y_grid, tol)?;
    let nm = normal_map_with(gf, u, x0, &env, None, tol)?;
    let kink = u.is_kink(x0);
    if nm.supports.is_empty() {
        return Err(Error::HypothesisUnverifiable(format!(
            "no g-support attained at node {x0}"
        )));
    }
    if nm.supports.len() < 2 {
        return Ok(
            ConditionReport::vacuous(id, 0, "single support: the normal map is a point")
                .detail("supports", 1.0)
                .detail("grid_kink", kink as u8 as f64),
        );
    }
    let v = &env.transform.values;
    let h = u.grid.h().max(y_grid.h());
    let p_of =
        |y: &Vector, z: f64| eval_jet(gf, nm.x0.as_slice(), y.as_slice(), z, tol).map(|j| j.gx);
    let exact: Vec<Vector> = nm
        .supports
        .iter()
        .map(|s| p_of(&s.y, s.z))
        .collect::<Result<_>>()?;
    // near-attaining nodes trace the whole normal map, not only grid hits
    let trace_tol = 0.25 * v.lipschitz() * y_grid.h();
    let mut traced = Vec::new();
    for (j, gap) in nm.gaps.iter().enumerate() {
        if let Some(gap) = gap.filter(|g| *g <= trace_tol) {
            traced.push(p_of(&v.grid.node(j), v.values[j] - gap)?);
        }
    }
    let (mut ia, mut ib, mut far) = (0, 1, 0.0);
    for a in 0..exact.len() {
        for b in a + 1..exact.len() {
            let d = (&exact[a] - &exact[b]).norm();
            if d > far {
                (ia, ib, far) = (a, b, d);
            }
        }
    }
    let (pa, pb) = (&exact[ia], &exact[ib]);
    let line_dist = |p: &Vector| {
        let d = pb - pa;
        let t = ((p - pa).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (p - (pa + d * t)).norm()
    };
    let exact_spread = exact.iter().map(line_dist).fold(0.0, f64::max);
    let mut report = ConditionReport::new(id, Verdict::Inconclusive, 0.0, 0)
        .with_samples(traced.len())
        .detail("supports", nm.supports.len() as f64)
        .detail("traced_nodes", traced.len() as f64)
        .detail("grid_kink", kink as u8 as f64)
        .detail("h_grid", h);
    let (defect, mode) = if exact_spread <= 2.0 * h || gf.dim() != 2 {
        (
            traced.iter().map(line_dist).fold(exact_spread, f64::max),
            "collinearity",
        )
    } else {
        let pts: Vec<Point2> = traced.iter().chain(&exact).map(|p| [p[0], p[1]]).collect();
        (hull_defect(&pts, 0.5 * h).0, "hull")
    };
    report.margin = 2.0 * h - defect;
    report.verdict = Verdict::from_bool(report.margin >= 0.0);
    report = report
        .detail("defect", defect)
        .note(format!("{mode} test"))
        .with_witness(
            Witness::new()
                .vector("x0", &nm.x0)
                .scalar("u0", nm.u0)
                .vector("p_a", pa)
                .vector("p_b", pb),
        );
    Ok(report)
}

/// A g-support of `u` at node `i` valid on the ball of radius `radius`
/// around it: first from the grid subdifferential, then by scanning the
/// nodes of `y_grid`.
pub fn local_support(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    i: usize,
    radius: f64,
    y_grid: &Grid,
    tol: &Tolerances,
) -> Option<GAffine> {
    local_support_with(gf, u, i, radius, y_grid, support_tol(u), tol)
}

fn local_support_with(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    i: usize,
    radius: f64,
    y_grid: &Grid,
    stol: f64,
    tol: &Tolerances,
) -> Option<GAffine> {
    let x = u.grid.node(i);
    let ball: Vec<(Vector, f64)> = ball_nodes(u, i, radius)
        .into_iter()
        .map(|k| (u.grid.node(k), u.values[k]))
        .collect();
    let supports = |y: &Vector, z: f64| {
        ball.iter().all(|(xk, uk)| {
            gf.gamma().contains(xk.as_slice(), y.as_slice(), z)
                && *uk >= gf.eval(xk.as_slice(), y.as_slice(), z) - stol
        })
    };
    let mut candidates: Vec<Vector> = u.central_gradient(i).into_iter().collect();
    candidates.extend(u.one_sided_gradients(i));
    candidates
        .into_iter()
        .find_map(|p| {
            let s = solve_yz(
                gf,
                &JetPoint {
                    x: x.clone(),
                    u: u.values[i],
                    p,
                },
                None,
                tol,
            )
            .ok()?;
            supports(&s.y, s.z).then_some(GAffine { y: s.y, z: s.z })
        })
        .or_else(|| {
            (0..y_grid.len()).find_map(|j| {
                let y = y_grid.node(j);
                let z = eval_gstar(gf, x.as_slice(), y.as_slice(), u.values[i], tol).ok()?;
                supports(&y, z).then_some(GAffine { y, z })
            })
        })
}

fn ball_nodes(u: &SampledFunction, i: usize, radius: f64) -> Vec<usize> {
    let n = u.grid.dim();
    let m = u.grid.multi_index(i);
    let x = u.grid.node(i);
    let reach: Vec<i64> = (0..n)
        .map(|k| (radius / u.grid.spacing(k)).floor() as i64)
        .collect();
    let mut out = Vec::new();
    let mut offs = vec![0i64; n];
    let total: i64 = reach.iter().map(|r| 2 * r + 1).product();
    for mut t in 0..total {
        for k in (0..n).rev() {
            let w = 2 * reach[k] + 1;
            offs[k] = t % w - reach[k];
            t /= w;
        }
        let mm: Option<Vec<usize>> = (0..n)
            .map(|k| {
                let v = m[k] as i64 + offs[k];
                (v >= 0 && v < u.grid.counts[k] as i64).then_some(v as usize)
            })
            .collect();
        let Some(mm) = mm else { continue };
        let j = u.grid.index(&mm);
        if u.active[j] && (u.grid.node(j) - &x).norm() <= radius + 1e-12 {
            out.push(j);
        }
    }
    out
}

/// Local-to-global: if every node has a local g-support and the domain and
/// support-set hypotheses hold, `u` is g-convex. A domain whose `Q`-images
/// are not convex makes the check inconclusive.
pub fn check_theorem32(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    y_grid: &Grid,
    cfg: &GConvexConfig,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let id = "thm3.2";
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = ConditionReport::new(id, Verdict::Inconclusive, 0.0, cfg.seed);

    // hypothesis (i): Ω has convex Q-images for sampled (y, z)
    let xc = u
        .grid
        .node(u.grid.nearest(&((&u.grid.lo + &u.grid.hi) * 0.5)));
    let mut domain_margin = f64::INFINITY;
    for _ in 0..cfg.domain_probes {
        let y = y_grid.node(rng.random_range(0..y_grid.len()));
        if !gf.gamma().pair_admissible(xc.as_slice(), y.as_slice()) {
            continue;
        }
        let (lo, hi) = gf.gamma().inner_interval(xc.as_slice(), y.as_slice());
        let img = q_image_hull(gf, &u.grid, &u.active, &y, 0.5 * (lo + hi), tol)?;
        domain_margin = domain_margin.min(if img.clipped > 0 { -1.0 } else { img.margin() });
    }
    report = report.detail("domain_margin", domain_margin);
    if domain_margin < 0.0 {
        return Ok(
            report.note("hypothesis (i) fails: the domain is not g-convex for a sampled (y, z)")
        );
    }

    // local supports on balls of radius local_radius·h
    let radius = cfg.local_radius * u.grid.h();
    let stol = support_tol(u);
    let nodes: Vec<usize> = u.active_indices().collect();
    let supports: Vec<Option<GAffine>> = nodes
        .par_iter()
        .map(|&i| local_support_with(gf, u, i, radius, y_grid, stol, tol))
        .collect();
    if let Some(k) = supports.iter().position(|s| s.is_none()) {
        return Err(Error::NotLocallyGConvex(nodes[k]));
    }
    let supports: Vec<GAffine> = supports.into_iter().flatten().collect();

    // hypothesis (ii): g*-segments between neighbouring local supports solve
    let picks = sample_indices(
        &mut rng,
        nodes.len(),
        cfg.hypothesis_samples.min(nodes.len()),
    )
    .into_vec();
    let mut failures = 0;
    let mut tried = 0;
    for t in picks {
        let i = nodes[t];
        let Some(k) = (0..u.grid.dim())
            .filter_map(|a| u.grid.step(i, a, 1))
            .find_map(|j| nodes.binary_search(&j).ok())
        else {
            continue;
        };
        tried += 1;
        let x = u.grid.node(i);
        let ui = u.values[i];
        let ok = (|| -> Result<()> {
            let p0 = eval_jet(
                gf,
                x.as_slice(),
                supports[t].y.as_slice(),
                supports[t].z,
                tol,
            )?
            .gx;
            let zk = eval_gstar(gf, x.as_slice(), supports[k].y.as_slice(), ui, tol)?;
            let p1 = eval_jet(gf, x.as_slice(), supports[k].y.as_slice(), zk, tol)?.gx;
            for r in solve_segment(
                gf,
                &SegmentConfig {
                    x0: x.clone(),
                    u0: ui,
                    p0,
                    p1,
                    theta_m: cfg.theta_m,
                },
                tol,
            ) {
                r?;
            }
            Ok(())
        })();
        failures += ok.is_err() as usize;
    }
    report = report
        .detail("hypothesis_failures", failures as f64)
        .detail("local_radius", radius);
    if failures as f64 > 0.01 * tried.max(1) as f64 {
        return Ok(report.note("hypothesis (ii) fails: support segments leave the jet domain"));
    }

    let global = is_g_convex(gf, u, y_grid, None, tol)?;
    report.margin = global.margin;
    report.verdict = global.verdict;
    report.samples_used = nodes.len();
    report.witness = global.witness.clone();
    Ok(report
        .detail("defect", global.details["defect"])
        .detail("tolerance", global.details["tolerance"]))
}

/// Minimum eigenvalue of `D²u − A(x, u, Du)` over the given interior nodes,
/// with central differences for `Du` and `D²u`.
pub fn ellipticity_margin(
    gf: &dyn GeneratingFunction,
    u: &SampledFunction,
    nodes: &[usize],
    tol: &Tolerances,
) -> Result<f64> {
    let n = u.grid.dim();
    let mut worst = f64::INFINITY;
    for &i in nodes {
        let at = |steps: &[(usize, i64)]| -> Result<f64> {
            let mut j = i;
            for &(k, d) in steps {
                j = u
                    .grid
                    .step(j, k, d)
                    .filter(|&j| u.active[j])
                    .ok_or_else(|| Error::InvalidInput(format!("node {i} is not interior")))?;
            }
            Ok(u.values[j])
        };
        let mut hess = Matrix::zeros(n, n);
        let mut grad = Vector::zeros(n);
        for a in 0..n {
            let ha = u.grid.spacing(a);
            grad[a] = (at(&[(a, 1)])? - at(&[(a, -1)])?) / (2.0 * ha);
            hess[(a, a)] = (at(&[(a, 1)])? - 2.0 * u.values[i] + at(&[(a, -1)])?) / (ha * ha);
            for b in a + 1..n {
                let hb = u.grid.spacing(b);
                let m =
                    (at(&[(a, 1), (b, 1)])? - at(&[(a, 1), (b, -1)])? - at(&[(a, -1), (b, 1)])?
                        + at(&[(a, -1), (b, -1)])?)
                        / (4.0 * ha * hb);
                hess[(a, b)] = m;
                hess[(b, a)] = m;
            }
        }
        let jet = JetPoint {
            x: u.grid.node(i),
            u: u.values[i],
            p: grad,
        };
        let a = matrix_a(gf, &jet, None, tol)?;
        let d = symmetrize(&(hess - a));
        worst = worst.min(d.symmetric_eigenvalues().min());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::build;

    fn v(a: &[f64]) -> Vector {
        Vector::from_vec(a.to_vec())
    }

    fn square(k: usize) -> Grid {
        Grid::new(v(&[-1.0, -1.0]), v(&[1.0, 1.0]), vec![k, k]).unwrap()
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(v(&[0.0, 0.0]), v(&[1.0, 2.0]), vec![3, 5]).unwrap();
        assert_eq!(g.len(), 15);
        for i in 0..g.len() {
            assert_eq!(g.index(&g.multi_index(i)), i);
            assert_eq!(g.nearest(&g.node(i)), i);
        }
        assert_eq!(g.node(1), v(&[0.0, 0.5]));
        assert_eq!(g.step(4, 1, 1), None);
        assert!(Grid::new(v(&[0.0]), v(&[1.0]), vec![1]).is_err());
    }

    #[test]
    fn affine_value_and_domain() {
        let gf = build("ot_quad").unwrap();
        let ga = GAffine {
            y: v(&[0.0, 0.0]),
            z: 0.0,
        };
        assert!((g_affine_eval(gf.as_ref(), &ga, &v(&[1.0, 0.0])).unwrap() + 0.5).abs() < 1e-15);
        assert!(matches!(
            g_affine_eval(gf.as_ref(), &ga, &v(&[9.0, 0.0])),
            Err(Error::OutOfGamma(_))
        ));
    }

    #[test]
    fn quadratic_transform_of_half_square_norm() {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let u = SampledFunction::from_fn(square(33), |x| 0.5 * x.norm_squared());
        let t = g_transform(gf.as_ref(), &u, &square(33), &tol).unwrap();
        for j in 0..t.grid.len() {
            let y = t.grid.node(j);
            assert!((t.values[j] + 0.25 * y.norm_squared()).abs() < 5e-3);
        }
    }

    #[test]
    fn affine_function_is_its_own_envelope_with_one_support() {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let yg = square(9);
        let ga = GAffine {
            y: yg.node(30),
            z: 0.1,
        };
        let u = SampledFunction::max_of_affines(gf.as_ref(), square(17), std::slice::from_ref(&ga))
            .unwrap();
        let t = g_transform(gf.as_ref(), &u, &yg, &tol).unwrap();
        assert!((t.values[30] - 0.1).abs() < 1e-12);
        let r = is_g_convex(gf.as_ref(), &u, &yg, None, &tol).unwrap();
        assert!(r.holds() && r.details["defect"].abs() < 1e-12);
        let nm = g_normal_map(gf.as_ref(), &u, 100, &yg, None, &tol).unwrap();
        assert_eq!(nm.support_nodes, vec![30]);
    }

    #[test]
    fn min_of_two_affines_is_not_g_convex() {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let g0 = GAffine {
            y: v(&[-0.5, 0.0]),
            z: 0.0,
        };
        let g1 = GAffine {
            y: v(&[0.5, 0.0]),
            z: 0.0,
        };
        let grid = square(17);
        let mut u =
            SampledFunction::max_of_affines(gf.as_ref(), grid.clone(), std::slice::from_ref(&g0))
                .unwrap();
        let w = SampledFunction::max_of_affines(gf.as_ref(), grid, &[g1]).unwrap();
        for (a, b) in u.values.iter_mut().zip(&w.values) {
            *a = a.min(*b);
        }
        let r = is_g_convex(gf.as_ref(), &u, &square(17), None, &tol).unwrap();
        assert!(r.fails(), "{:?}", r.details);
        assert!(matches!(
            g_normal_map(gf.as_ref(), &u, 144, &square(17), None, &tol),
            Err(Error::NotGConvex(_))
        ));
    }

    #[test]
    fn sections_are_nested() {
        let gf = build("ot_quad").unwrap();
        let u = SampledFunction::from_fn(square(17), |x| 0.5 * x.norm_squared());
        let ga = GAffine {
            y: v(&[0.0, 0.0]),
            z: -0.2,
        };
        let open = section_of(gf.as_ref(), &u, &ga, SectionMode::Open).unwrap();
        let closed = section_of(gf.as_ref(), &u, &ga, SectionMode::Closed).unwrap();
        assert!(open.mask.iter().zip(&closed.mask).all(|(o, c)| !o || *c));
        assert!(open.count() > 0 && open.count() < u.grid.len());
    }

    #[test]
    fn local_support_of_convex_quadratic() {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let u = SampledFunction::from_fn(square(17), |x| 0.5 * x.norm_squared());
        assert!(local_support(gf.as_ref(), &u, 144, 5.0 * u.grid.h(), &square(9), &tol).is_some());
        let margin = ellipticity_margin(gf.as_ref(), &u, &[144, 100], &tol).unwrap();
        assert!((margin - 2.0).abs() < 1e-6, "{margin}");
    }
}
