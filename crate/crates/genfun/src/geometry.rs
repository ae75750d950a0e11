//! Dual segments `(y_θ, z_θ)`, the height functions `h_θ`, `h_{θ,δ}`, `h_0`,
//! sections `S_θ`, local g-convexity through `Q`-images, the maximum
//! principle along dual segments and the monotonicity of `D²h_θ(x0)/θ`.

use std::io::Write;

use rayon::prelude::*;

use crate::conditions::{scan_family, scan_segment, xi_directions, SegmentConfig};
use crate::error::{Error, Result};
use crate::genfun::{eval_jet, FiberPoint, GeneratingFunction};
use crate::hull::{hull_defect, Point2};
use crate::implicit::eval_gstar;
use crate::numerics::{
    fd_step, min_singular_value, quad_form, solve, symmetrize, Matrix, Tolerances, Vector,
};
use crate::report::{ArgMin, ConditionReport, Verdict, Witness};

/// Per node: the gaps `M_k`, the weights `w_k` and the largest `|g|`.
type NodeRow = (Vec<f64>, Vec<f64>, f64);

/// Solutions `y_θ = Y(x0, u0, p_θ)`, `z_θ = Z(x0, u0, p_θ)` along a segment.
#[derive(Debug, Clone)]
pub struct DualSegment {
    pub base: SegmentConfig,
    pub y: Vec<Vector>,
    pub z: Vec<f64>,
    /// Largest `|Z − g*(x0, y_θ, u0)|` over the grid.
    pub z_route_gap: f64,
}

impl DualSegment {
    pub fn fiber(&self, k: usize) -> FiberPoint {
        FiberPoint {
            x: self.base.x0.clone(),
            y: self.y[k].clone(),
            z: self.z[k],
        }
    }

    pub fn last(&self) -> usize {
        self.base.theta_m
    }
}

/// Solves every grid θ from the default start, so the endpoints coincide
/// with direct solves at `p0` and `p1`, and cross-checks `z_θ` against `g*`.
pub fn dual_segment(
    gf: &dyn GeneratingFunction,
    seg: &SegmentConfig,
    tol: &Tolerances,
) -> Result<DualSegment> {
    let mut y = Vec::with_capacity(seg.theta_m + 1);
    let mut z = Vec::with_capacity(seg.theta_m + 1);
    let mut gap = 0.0_f64;
    for k in 0..=seg.theta_m {
        let s = crate::implicit::solve_yz(gf, &seg.jet(k), None, tol)
            .map_err(|e| Error::NotInU(e.to_string()))?;
        let zs = eval_gstar(gf, seg.x0.as_slice(), s.y.as_slice(), seg.u0, tol)?;
        gap = gap.max((zs - s.z).abs());
        y.push(s.y);
        z.push(s.z);
    }
    Ok(DualSegment {
        base: seg.clone(),
        y,
        z,
        z_route_gap: gap,
    })
}

fn g_checked(gf: &dyn GeneratingFunction, x: &Vector, y: &Vector, z: f64) -> Result<f64> {
    if !gf.gamma().contains(x.as_slice(), y.as_slice(), z) {
        return Err(Error::OutOfGamma(format!("x={:?}", x.as_slice())));
    }
    Ok(gf.eval(x.as_slice(), y.as_slice(), z))
}

/// `h_θ(x) = g(x, y_θ, z_θ) − g(x, y_0, z_0)`.
pub fn h_theta(gf: &dyn GeneratingFunction, ds: &DualSegment, k: usize, x: &Vector) -> Result<f64> {
    Ok(g_checked(gf, x, &ds.y[k], ds.z[k])? - g_checked(gf, x, &ds.y[0], ds.z[0])?)
}

/// `h_{θ,δ}(x) = h_θ(x) − (δ/2) |p_θ − p0|² |x − x0|²`.
pub fn h_theta_delta(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    k: usize,
    delta: f64,
    x: &Vector,
) -> Result<f64> {
    let dp2 = (ds.base.p_theta(k) - &ds.base.p0).norm_squared();
    Ok(h_theta(gf, ds, k, x)? - 0.5 * delta * dp2 * (x - &ds.base.x0).norm_squared())
}

/// The g-hyperplane function `E⁻¹(x0, y0, z0)(p1 − p0) · [Q(x, y0, z0) − Q(x0, y0, z0)]`.
pub fn h_zero(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    x: &Vector,
    tol: &Tolerances,
) -> Result<f64> {
    let base = eval_jet(gf, ds.base.x0.as_slice(), ds.y[0].as_slice(), ds.z[0], tol)?;
    let v = solve(&base.matrix_e(), &ds.base.dp()).ok_or(Error::SingularJacobian)?;
    let q = eval_jet(gf, x.as_slice(), ds.y[0].as_slice(), ds.z[0], tol)?.q();
    Ok(v.dot(&(q - base.q())))
}

/// Offsets `r (2i − (N − 1))/(N − 1)`, exactly zero at the centre for odd `N`.
fn offsets(radius: f64, grid_n: usize) -> Vec<f64> {
    let d = (grid_n.max(2) - 1) as f64;
    (0..grid_n.max(2))
        .map(|i| radius * (2.0 * i as f64 - d) / d)
        .collect()
}

/// Tensor grid `x0 + Σ c_j b_j` in row-major order (last index fastest).
pub fn frame_grid(x0: &Vector, basis: &[Vector], radius: f64, grid_n: usize) -> Vec<Vector> {
    let n = x0.len();
    let offs = offsets(radius, grid_n);
    let k = offs.len();
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut idx = vec![0; n];
            for j in (0..n).rev() {
                idx[j] = code % k;
                code /= k;
            }
            let mut x = x0.clone();
            for j in 0..n {
                x += &basis[j] * offs[idx[j]];
            }
            x
        })
        .collect()
}

fn standard_basis(n: usize) -> Vec<Vector> {
    (0..n)
        .map(|j| Vector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }))
        .collect()
}

/// Orthonormal basis whose first vector is `dir/|dir|`.
pub fn adapted_frame(dir: &Vector) -> Vec<Vector> {
    let n = dir.len();
    let mut basis = vec![dir / dir.norm()];
    for e in standard_basis(n) {
        if basis.len() == n {
            break;
        }
        let mut w = e;
        for b in &basis {
            w -= b * b.dot(&w);
        }
        let norm = w.norm();
        if norm > 1e-8 {
            basis.push(w / norm);
        }
    }
    basis
}

/// `h_{θ,δ}` on an axis-aligned grid around `x0`; `inside` marks `S_{θ,δ}`.
#[derive(Debug, Clone)]
pub struct SectionSample {
    pub x0: Vector,
    pub radius: f64,
    pub grid_n: usize,
    pub spacing: f64,
    pub nodes: Vec<Vector>,
    /// `None` where the node leaves `Γ`.
    pub values: Vec<Option<f64>>,
    pub inside: Vec<bool>,
}

impl SectionSample {
    pub fn clipped(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Rows `x_1, …, x_n, h, mask` for nodes inside `Γ`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let n = self.x0.len();
        let header: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain(["h".into(), "mask".into()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for ((x, v), m) in self.nodes.iter().zip(&self.values).zip(&self.inside) {
            if let Some(v) = v {
                let coords: Vec<String> = x.iter().map(|c| format!("{c:.17e}")).collect();
                writeln!(w, "{},{v:.17e},{}", coords.join(","), u8::from(*m))?;
            }
        }
        Ok(())
    }
}

/// Samples `h_{θ,δ}` on a `grid_n^n` grid of half-width `radius` around `x0`.
pub fn section_sample(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    k: usize,
    delta: f64,
    radius: f64,
    grid_n: usize,
) -> SectionSample {
    let x0 = ds.base.x0.clone();
    let nodes = frame_grid(&x0, &standard_basis(x0.len()), radius, grid_n);
    let values: Vec<Option<f64>> = nodes
        .par_iter()
        .map(|x| h_theta_delta(gf, ds, k, delta, x).ok())
        .collect();
    let inside = values.iter().map(|v| v.is_some_and(|h| h < 0.0)).collect();
    SectionSample {
        x0,
        radius,
        grid_n,
        spacing: 2.0 * radius / (grid_n.max(2) - 1) as f64,
        nodes,
        values,
        inside,
    }
}

/// Local g-convexity of a section with respect to `(y0, z0)`: the `Q`-image of
/// the section, cut to a ball around `Q(x0)` that the grid image covers, must
/// fill its convex hull up to `2·h_grid·Lip(Q)`. Planar only.
pub fn check_local_gconvexity(
    gf: &dyn GeneratingFunction,
    section: &SectionSample,
    y0: &Vector,
    z0: f64,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let n = gf.dim();
    if n == 1 {
        return Ok(ConditionReport::vacuous(
            "A3w(1)",
            0,
            "n = 1: every interval is convex",
        ));
    }
    if n != 2 {
        return Err(Error::Unsupported(
            "hull defect is implemented for n = 2".into(),
        ));
    }
    let base = eval_jet(gf, section.x0.as_slice(), y0.as_slice(), z0, tol)?;
    let q0 = base.q();
    let dq = -base.matrix_e().transpose() / base.gz;
    let sigma = min_singular_value(&dq);
    let qs: Vec<Option<Vector>> = section
        .nodes
        .par_iter()
        .zip(&section.values)
        .map(|(x, v)| {
            v.as_ref()?;
            eval_jet(gf, x.as_slice(), y0.as_slice(), z0, tol)
                .ok()
                .map(|j| j.q())
        })
        .collect();
    let k = section.grid_n;
    let mut lip = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let a = i * k + j;
            for b in [
                if i + 1 < k { Some(a + k) } else { None },
                if j + 1 < k { Some(a + 1) } else { None },
            ]
            .into_iter()
            .flatten()
            {
                if let (Some(qa), Some(qb)) = (&qs[a], &qs[b]) {
                    lip = lip.max((qa - qb).norm() / section.spacing);
                }
            }
        }
    }
    let ball = 0.9 * section.radius * sigma;
    let pts: Vec<Point2> = qs
        .iter()
        .zip(&section.inside)
        .filter_map(|(q, inside)| {
            let q = q.as_ref()?;
            (*inside && (q - &q0).norm() <= ball).then(|| [q[0], q[1]])
        })
        .collect();
    let allowance = 2.0 * section.spacing * lip;
    let (defect, probe) = hull_defect(&pts, 0.5 * section.spacing * lip.max(1e-12));
    let margin = allowance - defect;
    let mut w = Witness::new()
        .vector("x0", &section.x0)
        .vector("y0", y0)
        .scalar("z0", z0)
        .scalar("defect", defect)
        .scalar("allowance", allowance);
    if let Some(p) = probe {
        w = w.vector("probe_q", &Vector::from_vec(p.to_vec()));
    }
    Ok(
        ConditionReport::new("A3w(1)", Verdict::from_bool(defect <= allowance), margin, 0)
            .with_samples(pts.len())
            .with_witness(w)
            .detail("hull_defect", defect)
            .detail("allowance", allowance)
            .detail("lip_q", lip)
            .detail("q_ball_radius", ball)
            .detail("clipped", section.clipped() as f64),
    )
}

/// `M(x, θ) = max(g(x, y0, z0), g(x, y1, z1)) − g(x, y_θ, z_θ)` and
/// `w(x, θ) = (θ(1 − θ)|p1 − p0||x − x0|)²` on a grid in the frame adapted to
/// `p1 − p0`.
#[derive(Debug, Clone)]
pub struct MaxPrincipleTable {
    pub nodes: Vec<Vector>,
    pub m: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub scale: f64,
    pub clipped: usize,
    pub spacing: f64,
}

pub fn max_principle_table(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    radius: f64,
    grid_n: usize,
) -> MaxPrincipleTable {
    let seg = &ds.base;
    let dp = seg.dp();
    let dpn = dp.norm();
    let frame = adapted_frame(&dp);
    let mut nodes = frame_grid(&seg.x0, &frame, radius, grid_n);
    nodes.extend(level_set_nodes(gf, ds, &frame, radius, grid_n));
    let last = ds.last();
    let rows: Vec<Option<NodeRow>> = nodes
        .par_iter()
        .map(|x| {
            let gs: Vec<f64> = (0..=last)
                .map(|k| g_checked(gf, x, &ds.y[k], ds.z[k]))
                .collect::<Result<_>>()
                .ok()?;
            let top = gs[0].max(gs[last]);
            let r2 = (x - &seg.x0).norm_squared();
            let m = gs.iter().map(|g| top - g).collect();
            let w = (0..=last)
                .map(|k| {
                    let t = seg.theta(k);
                    (t * (1.0 - t) * dpn).powi(2) * r2
                })
                .collect();
            Some((m, w, gs.iter().fold(0.0_f64, |s, g| s.max(g.abs()))))
        })
        .collect();
    let mut table = MaxPrincipleTable {
        nodes: Vec::new(),
        m: Vec::new(),
        w: Vec::new(),
        scale: 1.0,
        clipped: 0,
        spacing: 2.0 * radius / (grid_n.max(2) - 1) as f64,
    };
    for (x, row) in nodes.into_iter().zip(rows) {
        match row {
            Some((m, w, s)) => {
                table.nodes.push(x);
                table.m.push(m);
                table.w.push(w);
                table.scale = table.scale.max(s);
            }
            None => table.clipped += 1,
        }
    }
    table
}

/// Points of `{h_1 = 0}` above each transverse grid line, found by bisection
/// along `p1 − p0`, where the two g-affine functions cross and the maximum
/// principle is tightest.
fn level_set_nodes(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    frame: &[Vector],
    radius: f64,
    grid_n: usize,
) -> Vec<Vector> {
    let n = frame.len();
    if n < 2 {
        return Vec::new();
    }
    let transverse = frame_grid(
        &Vector::zeros(n - 1),
        &standard_basis(n - 1),
        radius,
        grid_n,
    );
    let last = ds.last();
    transverse
        .par_iter()
        .filter_map(|c| {
            let mut base = ds.base.x0.clone();
            for j in 1..n {
                base += &frame[j] * c[j - 1];
            }
            let h = |t: f64| h_theta(gf, ds, last, &(&base + &frame[0] * t)).ok();
            let (mut a, mut b) = (-radius, radius);
            let (ha, hb) = (h(a)?, h(b)?);
            if ha.signum() == hb.signum() {
                return None;
            }
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                let hm = h(mid)?;
                if hm.signum() == ha.signum() {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            Some(&base + &frame[0] * (0.5 * (a + b)))
        })
        .collect()
}

impl MaxPrincipleTable {
    /// `min (M − δ0 w)` and its `(node, θ index)`.
    pub fn margin(&self, delta0: f64) -> ArgMin<(usize, usize)> {
        let mut best = ArgMin::default();
        for (i, (m, w)) in self.m.iter().zip(&self.w).enumerate() {
            for k in 0..m.len() {
                best.offer(m[k] - delta0 * w[k], || (i, k));
            }
        }
        best
    }

    /// Largest `δ0` with `M − δ0 w ≥ 0` on the table: `min M/w` over `w > 0`,
    /// ignoring nodes within half a grid spacing of `x0` where `M/w` is
    /// rounding noise.
    pub fn delta0_star(&self, x0: &Vector) -> f64 {
        let near = 0.25 * self.spacing * self.spacing;
        let mut best = f64::INFINITY;
        for ((m, w), x) in self.m.iter().zip(&self.w).zip(&self.nodes) {
            if (x - x0).norm_squared() < near {
                continue;
            }
            for k in 0..m.len() {
                if w[k] > 0.0 {
                    best = best.min(m[k] / w[k]);
                }
            }
        }
        best
    }

    pub fn tolerance(&self, tol: &Tolerances) -> f64 {
        tol.mp_tol * self.scale
    }
}

/// Maximum principle `g(x, y_θ, z_θ) ≤ max(g0, g1) − δ0 (θ(1−θ)|p1−p0||x−x0|)²`
/// near `x0`. On failure the radius is halved while it stays above four grid
/// spacings of the initial grid; the sequence of radii is recorded.
pub fn check_max_principle(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    radius: f64,
    delta0: f64,
    grid_n: usize,
    tol: &Tolerances,
) -> ConditionReport {
    let id = if delta0 > 0.0 { "A3s(2)" } else { "A3w(2)" };
    let floor = 4.0 * 2.0 * radius / (grid_n.max(2) - 1) as f64;
    let mut r = radius;
    let mut radii = Vec::new();
    loop {
        radii.push(r);
        let table = max_principle_table(gf, ds, r, grid_n);
        let best = table.margin(delta0);
        let allowed = table.tolerance(tol);
        let ok = best.arg.is_some() && best.value >= -allowed;
        if ok || r / 2.0 < floor {
            let verdict = if best.arg.is_none() {
                Verdict::Inconclusive
            } else {
                Verdict::from_bool(ok)
            };
            let total = table.nodes.len() + table.clipped;
            let mut rep = ConditionReport::new(id, verdict, best.value, 0)
                .with_samples(table.nodes.len())
                .detail("radius", r)
                .detail("tolerance", allowed)
                .detail("retries", (radii.len() - 1) as f64)
                .detail(
                    "clipped_fraction",
                    table.clipped as f64 / total.max(1) as f64,
                )
                .note(format!("radii tried: {radii:?}"));
            if let Some((i, k)) = best.arg {
                rep = rep.with_witness(
                    Witness::new()
                        .vector("x", &table.nodes[i])
                        .vector("x0", &ds.base.x0)
                        .scalar("theta", ds.base.theta(k))
                        .scalar("delta0", delta0),
                );
            }
            return rep;
        }
        r /= 2.0;
    }
}

/// The largest `δ0` for which the strong maximum principle holds on the grid.
pub fn max_principle_delta0(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    radius: f64,
    grid_n: usize,
) -> f64 {
    max_principle_table(gf, ds, radius, grid_n).delta0_star(&ds.base.x0)
}

/// `D²h_θ(x0)` by central differences of `∇h_θ = g_x(·, y_θ, z_θ) − g_x(·, y0, z0)`
/// with step `hessian_step`, symmetrized; entries are NaN if a stencil point
/// leaves `Γ`.
pub fn hessian_h_theta(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    k: usize,
    tol: &Tolerances,
) -> Matrix {
    let x0 = &ds.base.x0;
    let n = x0.len();
    let grad = |x: &Vector| -> Vector {
        let a = eval_jet(gf, x.as_slice(), ds.y[k].as_slice(), ds.z[k], tol);
        let b = eval_jet(gf, x.as_slice(), ds.y[0].as_slice(), ds.z[0], tol);
        match (a, b) {
            (Ok(a), Ok(b)) => a.gx - b.gx,
            _ => Vector::from_element(n, f64::NAN),
        }
    };
    let mut h = Matrix::zeros(n, n);
    for j in 0..n {
        let step = fd_step(tol.hessian_step, x0[j]);
        let mut xp = x0.clone();
        xp[j] += step;
        let mut xm = x0.clone();
        xm[j] -= step;
        h.set_column(j, &((grad(&xp) - grad(&xm)) / (2.0 * step)));
    }
    symmetrize(&h)
}

/// Chord slopes `(D²h_θ ξ, ξ)(x0)/θ` must be non-decreasing in θ for `ξ`
/// tangent to the level sets of `h_θ` at `x0`.
pub fn fundamental_form_monotonicity(
    gf: &dyn GeneratingFunction,
    ds: &DualSegment,
    xi_count: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let seg = &ds.base;
    if seg.dp().norm() < 1e-12 {
        return Err(Error::DegenerateGradient);
    }
    let xis = xi_directions(seg, xi_count, seed, 0);
    if xis.is_empty() {
        return Ok(ConditionReport::vacuous(
            "ff",
            seed,
            "n = 1: no tangent directions",
        ));
    }
    let last = ds.last();
    let hessians: Vec<_> = (1..=last)
        .into_par_iter()
        .map(|k| hessian_h_theta(gf, ds, k, tol))
        .collect();
    let mut best = ArgMin::default();
    for (xi_i, xi) in xis.iter().enumerate() {
        let slopes: Vec<f64> = hessians
            .iter()
            .enumerate()
            .map(|(i, h)| quad_form(h, xi) / seg.theta(i + 1))
            .collect();
        for a in 0..slopes.len() {
            for b in a + 1..slopes.len() {
                best.offer(slopes[b] - slopes[a], || (a + 1, b + 1, xi_i));
            }
        }
    }
    if best.value.is_nan() {
        return Err(Error::OutOfGamma("Hessian stencil left Γ".into()));
    }
    let margin = best.value + tol.ff_tol;
    let mut r = ConditionReport::new("ff", Verdict::from_bool(margin >= 0.0), margin, seed)
        .with_samples(last)
        .detail("min_second_derivative", best.value);
    if let Some((a, b, k)) = best.arg {
        r = r.with_witness(
            Witness::new()
                .vector("x0", &seg.x0)
                .vector("p0", &seg.p0)
                .vector("p1", &seg.p1)
                .vector("xi", &xis[k])
                .scalar("theta", seg.theta(a))
                .scalar("theta_prime", seg.theta(b)),
        );
    }
    Ok(r)
}

/// Grids and radii for the chain and sign checks on segment families.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub radius: f64,
    pub section_grid: usize,
    pub mp_grid: usize,
    pub xi_count: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            radius: 0.1,
            section_grid: 129,
            mp_grid: 33,
            xi_count: 16,
        }
    }
}

/// `A3w(1)` and `A3w(2)` on one segment.
pub struct ChainOutcome {
    pub local_gconvexity: ConditionReport,
    pub max_principle: ConditionReport,
}

impl ChainOutcome {
    /// Smallest slack of the two, positive when both hold.
    pub fn slack(&self) -> f64 {
        let mp = self.max_principle.margin
            + self
                .max_principle
                .details
                .get("tolerance")
                .copied()
                .unwrap_or(0.0);
        self.local_gconvexity.margin.min(mp)
    }

    pub fn both_hold(&self) -> bool {
        self.local_gconvexity.holds() && self.max_principle.holds()
    }
}

pub fn chain_on_segment(
    gf: &dyn GeneratingFunction,
    seg: &SegmentConfig,
    cfg: &ChainConfig,
    tol: &Tolerances,
) -> Result<ChainOutcome> {
    let ds = dual_segment(gf, seg, tol)?;
    let section = section_sample(gf, &ds, ds.last(), 0.0, cfg.radius, cfg.section_grid);
    let local_gconvexity = check_local_gconvexity(gf, &section, &ds.y[0], ds.z[0], tol)?;
    let max_principle = check_max_principle(gf, &ds, cfg.radius, 0.0, cfg.mp_grid, tol);
    Ok(ChainOutcome {
        local_gconvexity,
        max_principle,
    })
}

/// The A3w chain on a segment family. Where the segment form of A3w holds with
/// margin above `10·conv_tol`, `A3w(1)` and `A3w(2)` must both hold; where it
/// fails below `−10·conv_tol`, the witness triple is transported to the
/// sub-segment `[p_θa, p_θb]` (both orientations) and one of them must fail.
pub fn a3w_chain(
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    cfg: &ChainConfig,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    if gf.dim() < 2 {
        return ConditionReport::vacuous("thm2.1", seed, "n = 1: no co-dimension one directions");
    }
    let band = 10.0 * tol.conv_tol;
    let mut worst: ArgMin<(usize, String)> = ArgMin::default();
    let (mut positive, mut negative, mut ambiguous, mut errors) = (0usize, 0usize, 0usize, 0usize);
    for (i, seg) in segs.iter().enumerate() {
        let xis = xi_directions(seg, cfg.xi_count, seed, i);
        let scan = scan_segment(gf, seg, &xis, tol);
        if scan.failures > 0 {
            errors += 1;
            continue;
        }
        let margin = scan.margin(tol);
        if margin > band {
            positive += 1;
            match chain_on_segment(gf, seg, cfg, tol) {
                Ok(out) => worst.offer(out.slack(), || (i, "A3w holds".into())),
                Err(_) => errors += 1,
            }
        } else if margin >= 0.0 {
            // equality within noise: a confirmation counts, a failure is not evidence
            match chain_on_segment(gf, seg, cfg, tol) {
                Ok(out) if out.both_hold() => {
                    positive += 1;
                    worst.offer(out.slack(), || (i, "A3w holds with equality".into()));
                }
                Ok(_) => ambiguous += 1,
                Err(_) => errors += 1,
            }
        } else if margin < -band {
            negative += 1;
            let (a, b, _) = scan.defect.arg.expect("scanned segment has a triple");
            let (ta, tb) = (seg.theta(a), seg.theta(b));
            let mut best_violation = f64::NEG_INFINITY;
            for sub in [
                seg.sub_segment(ta, tb, seg.theta_m),
                seg.sub_segment(tb, ta, seg.theta_m),
            ] {
                if let Ok(out) = chain_on_segment(gf, &sub, cfg, tol) {
                    best_violation = best_violation.max(-out.slack());
                }
            }
            if best_violation == f64::NEG_INFINITY {
                errors += 1;
            } else {
                worst.offer(best_violation, || {
                    (i, "A3w fails; transported witness".into())
                });
            }
        } else {
            ambiguous += 1;
        }
    }
    let verdict = if worst.arg.is_none() || errors * 100 > segs.len() {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(worst.value >= 0.0)
    };
    let mut r = ConditionReport::new("thm2.1", verdict, worst.value, seed)
        .with_samples(segs.len())
        .detail("a3w_positive_segments", positive as f64)
        .detail("a3w_negative_segments", negative as f64)
        .detail("ambiguous_segments", ambiguous as f64)
        .detail("errors", errors as f64);
    if let Some((i, what)) = worst.arg {
        let seg = &segs[i];
        r = r
            .with_witness(
                Witness::new()
                    .vector("x0", &seg.x0)
                    .vector("p0", &seg.p0)
                    .vector("p1", &seg.p1)
                    .scalar("u0", seg.u0)
                    .scalar("segment", i as f64),
            )
            .note(what);
    }
    r
}

/// Sign agreement: the signs of `delta_hat` (segment form of A3s) and of the
/// largest admissible `δ0` in the strong maximum principle agree, and the
/// monotonicity of `D²h_θ/θ` holds exactly when A3w does.
pub fn sign_agreement(
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    cfg: &ChainConfig,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    if gf.dim() < 2 {
        return ConditionReport::vacuous("thm2.2", seed, "n = 1: no co-dimension one directions");
    }
    let fam = scan_family(gf, segs, cfg.xi_count, seed, tol);
    let delta_hat = fam.quotient.value;
    let a3w_holds = fam.margin.value >= 0.0;
    let per_segment: Vec<Option<(f64, f64)>> = segs
        .par_iter()
        .enumerate()
        .map(|(i, seg)| {
            let ds = dual_segment(gf, seg, tol).ok()?;
            let d0 = max_principle_delta0(gf, &ds, cfg.radius, cfg.mp_grid);
            let ff =
                fundamental_form_monotonicity(gf, &ds, cfg.xi_count, seed ^ i as u64, tol).ok()?;
            Some((d0, ff.margin))
        })
        .collect();
    let mut delta0 = ArgMin::default();
    let mut ff = ArgMin::default();
    let mut errors = 0;
    for (i, v) in per_segment.iter().enumerate() {
        match v {
            Some((d0, f)) => {
                delta0.offer(*d0, || i);
                ff.offer(*f, || i);
            }
            None => errors += 1,
        }
    }
    if delta0.arg.is_none() || errors * 100 > segs.len() || fam.failure_rate() > 0.01 {
        return ConditionReport::new("thm2.2", Verdict::Inconclusive, 0.0, seed)
            .with_samples(segs.len())
            .note("segment solves failed");
    }
    let positive = |v: f64| v > tol.a3s_tol;
    let sign_slack = (delta_hat - tol.a3s_tol)
        .abs()
        .min((delta0.value - tol.a3s_tol).abs());
    let sign_slack = if positive(delta_hat) == positive(delta0.value) {
        sign_slack
    } else {
        -sign_slack
    };
    let ff_slack = ff.value;
    let ff_slack = if a3w_holds { ff_slack } else { -ff_slack };
    let margin = sign_slack.min(ff_slack);
    let mut r = ConditionReport::new("thm2.2", Verdict::from_bool(margin >= 0.0), margin, seed)
        .with_samples(segs.len())
        .detail("delta_hat", delta_hat)
        .detail("delta0_star", delta0.value)
        .detail("ff_margin", ff.value)
        .detail("a3w_margin", fam.margin.value);
    if let Some(i) = delta0.arg {
        let seg = &segs[i];
        r = r.with_witness(
            Witness::new()
                .vector("x0", &seg.x0)
                .vector("p0", &seg.p0)
                .vector("p1", &seg.p1)
                .scalar("u0", seg.u0),
        );
    }
    r
}
