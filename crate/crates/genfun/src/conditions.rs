//! Conditions A1, A1*, A2, A3w and A3s: sampled injectivity scans, the
//! nondegeneracy margin of `E`, the discrete MTW form and the segment form of
//! co-dimension one convexity.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genfun::{eval_jet, FiberPoint, GeneratingFunction, JetPoint};
use crate::implicit::{eval_gstar, invert_q_from, solve_yz, solve_yz_from, YzSolution};
use crate::numerics::{
    orthogonal_directions, quad_form, spectral_norm, Matrix, Tolerances, Vector,
};
use crate::report::{ArgMin, ConditionReport, Verdict, Witness};

/// A segment `(x0, u0, [p0, p1])` with the grid `θ_k = k/m`, `k = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    pub x0: Vector,
    pub u0: f64,
    pub p0: Vector,
    pub p1: Vector,
    pub theta_m: usize,
}

impl SegmentConfig {
    pub fn theta(&self, k: usize) -> f64 {
        k as f64 / self.theta_m as f64
    }

    /// `p_θ = (1 − θ) p0 + θ p1`; exact at both endpoints.
    pub fn p_at(&self, theta: f64) -> Vector {
        &self.p0 * (1.0 - theta) + &self.p1 * theta
    }

    pub fn p_theta(&self, k: usize) -> Vector {
        if k == 0 {
            self.p0.clone()
        } else if k == self.theta_m {
            self.p1.clone()
        } else {
            self.p_at(self.theta(k))
        }
    }

    pub fn jet(&self, k: usize) -> JetPoint {
        JetPoint {
            x: self.x0.clone(),
            u: self.u0,
            p: self.p_theta(k),
        }
    }

    pub fn dp(&self) -> Vector {
        &self.p1 - &self.p0
    }

    /// Same segment on a different θ-grid.
    pub fn with_theta_m(&self, m: usize) -> Self {
        Self {
            theta_m: m,
            ..self.clone()
        }
    }

    /// The sub-segment `[p_θa, p_θb]`.
    pub fn sub_segment(&self, theta_a: f64, theta_b: f64, m: usize) -> Self {
        Self {
            x0: self.x0.clone(),
            u0: self.u0,
            p0: self.p_at(theta_a),
            p1: self.p_at(theta_b),
            theta_m: m,
        }
    }
}

/// Solves `(Y, Z)` at every grid θ from the default starting point.
pub fn solve_segment(
    gf: &dyn GeneratingFunction,
    seg: &SegmentConfig,
    tol: &Tolerances,
) -> Vec<Result<YzSolution>> {
    (0..=seg.theta_m)
        .map(|k| solve_yz(gf, &seg.jet(k), None, tol))
        .collect()
}

/// Parameters of seeded segment families.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSampling {
    pub count: usize,
    pub seed: u64,
    /// Fraction of each box width removed on every side; defines the compact
    /// subset on which segments are drawn.
    pub shrink: f64,
    pub theta_m: usize,
}

impl Default for SegmentSampling {
    fn default() -> Self {
        Self {
            count: 20,
            seed: 0,
            shrink: 0.1,
            theta_m: 32,
        }
    }
}

/// Draws seeded segments: `(x0, y0, z0)` and `y1` in the shrunk boxes, with
/// `p0 = g_x(x0, y0, z0)`, `u0 = g(x0, y0, z0)` and `p1 = g_x(x0, y1, g*(x0, y1, u0))`.
/// A segment leaving `𝒰` has `p1` pulled halfway toward `p0`, at most four times.
pub fn sample_segments(
    gf: &dyn GeneratingFunction,
    cfg: &SegmentSampling,
    tol: &Tolerances,
) -> Vec<SegmentConfig> {
    let gamma = gf.gamma();
    let xb = gamma.x_box.shrunk(cfg.shrink);
    let yb = gamma.y_box.shrunk(cfg.shrink);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    let mut attempts = 0;
    while out.len() < cfg.count && attempts < 50 * cfg.count.max(1) {
        attempts += 1;
        let Some(fp) = gamma.sample_within(&xb, &yb, cfg.shrink, &mut rng) else {
            continue;
        };
        let y1 = yb.sample(&mut rng);
        let Ok(j0) = eval_jet(gf, fp.x.as_slice(), fp.y.as_slice(), fp.z, tol) else {
            continue;
        };
        let Ok(z1) = eval_gstar(gf, fp.x.as_slice(), y1.as_slice(), j0.g, tol) else {
            continue;
        };
        let Ok(j1) = eval_jet(gf, fp.x.as_slice(), y1.as_slice(), z1, tol) else {
            continue;
        };
        let mut seg = SegmentConfig {
            x0: fp.x.clone(),
            u0: j0.g,
            p0: j0.gx,
            p1: j1.gx,
            theta_m: cfg.theta_m,
        };
        for _ in 0..=4 {
            if (&seg.p1 - &seg.p0).norm() > 1e-8
                && solve_segment(gf, &seg, tol).iter().all(|r| r.is_ok())
            {
                out.push(seg);
                break;
            }
            seg.p1 = (&seg.p0 + &seg.p1) * 0.5;
        }
    }
    out
}

/// Unit directions orthogonal to `p1 − p0`: one for n = 2, `count` seeded ones
/// for n ≥ 3, none for n = 1.
pub fn xi_directions(seg: &SegmentConfig, count: usize, seed: u64, index: usize) -> Vec<Vector> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    orthogonal_directions(&seg.dp(), count, &mut rng)
}

/// Condition A2: margin `min |det E| / (1 + ‖E‖ⁿ)` over seeded points of `Γ`.
pub fn check_a2(
    gf: &dyn GeneratingFunction,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    let gamma = gf.gamma();
    let n = gf.dim() as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<FiberPoint> = (0..samples)
        .filter_map(|_| gamma.sample(&mut rng))
        .collect();
    let values: Vec<Option<(f64, f64)>> = points
        .par_iter()
        .map(|fp| {
            let e = eval_jet(gf, fp.x.as_slice(), fp.y.as_slice(), fp.z, tol)
                .ok()?
                .matrix_e();
            let det = e.determinant();
            Some((det.abs() / (1.0 + spectral_norm(&e).powi(n)), det))
        })
        .collect();
    let mut worst = ArgMin::default();
    let mut used = 0;
    for (i, v) in values.iter().enumerate() {
        if let Some((m, det)) = v {
            used += 1;
            worst.offer(*m, || (i, *det));
        }
    }
    let margin = worst.value;
    let mut r = ConditionReport::new(
        "A2",
        Verdict::from_bool(used > 0 && margin > tol.a2_tol),
        margin,
        seed,
    )
    .with_samples(used);
    if let Some((i, det)) = worst.arg {
        let fp = &points[i];
        r = r.with_witness(
            Witness::new()
                .vector("x", &fp.x)
                .vector("y", &fp.y)
                .scalar("z", fp.z)
                .scalar("det_e", det),
        );
    }
    r
}

struct Collision {
    i: usize,
    other: Vector,
    distance: f64,
}

/// Sampled injectivity scan. Candidate pairs are the nearest image neighbours
/// of each sample with separated sources; `refine(i, j)` tries to move source
/// `j` onto image `i` and returns the refined source and its image distance.
fn collision_scan(
    sources: &[Vector],
    images: &[Vector],
    tol: &Tolerances,
    refine: impl Fn(usize, usize) -> Option<(Vector, f64)> + Sync,
) -> (f64, Option<Collision>) {
    let count = images.len();
    if count < 2 {
        return (f64::INFINITY, None);
    }
    let d = images[0].len();
    let lo: Vec<f64> = (0..d)
        .map(|k| images.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let hi: Vec<f64> = (0..d)
        .map(|k| {
            images
                .iter()
                .map(|v| v[k])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let cells = ((count as f64).powf(1.0 / d as f64).ceil() as i64).max(1);
    let key = |v: &Vector| -> Vec<i64> {
        (0..d)
            .map(|k| {
                let w = (hi[k] - lo[k]).max(1e-300);
                (((v[k] - lo[k]) / w * cells as f64).floor() as i64).clamp(0, cells - 1)
            })
            .collect()
    };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, v) in images.iter().enumerate() {
        buckets.entry(key(v)).or_default().push(i);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut c| {
            (0..d)
                .map(|_| {
                    let o = (c % 3) as i64 - 1;
                    c /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let per_sample: Vec<(f64, Option<Collision>)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let base = key(&images[i]);
            let mut cands: Vec<(f64, usize)> = Vec::new();
            for off in &offsets {
                let cell: Vec<i64> = base.iter().zip(off).map(|(a, b)| a + b).collect();
                if let Some(list) = buckets.get(&cell) {
                    for &j in list {
                        if j != i && (&sources[i] - &sources[j]).norm() > tol.sep_tol {
                            cands.push(((&images[i] - &images[j]).norm(), j));
                        }
                    }
                }
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut best = f64::INFINITY;
            let mut hit = None;
            for &(dist, j) in cands.iter().take(4) {
                best = best.min(dist);
                if let Some((src, res)) = refine(i, j) {
                    if (&src - &sources[i]).norm() > tol.sep_tol && res < best {
                        best = res;
                        hit = Some(Collision {
                            i,
                            other: src,
                            distance: res,
                        });
                    }
                }
            }
            (best, hit)
        })
        .collect();
    let mut min_dist = f64::INFINITY;
    let mut witness = None;
    for (best, hit) in per_sample {
        if best < min_dist {
            min_dist = best;
            witness = hit;
        }
    }
    (min_dist, witness)
}

fn collision_report(
    id: &str,
    seed: u64,
    used: usize,
    min_dist: f64,
    hit: Option<Collision>,
    sources: &[Vector],
    tol: &Tolerances,
) -> ConditionReport {
    let margin = if min_dist.is_finite() {
        min_dist - tol.coll_tol
    } else {
        f64::INFINITY
    };
    let verdict = Verdict::from_bool(margin >= 0.0);
    let mut r = ConditionReport::new(id, verdict, margin.min(crate::report::VACUOUS_MARGIN), seed)
        .with_samples(used)
        .detail(
            "min_separated_image_distance",
            min_dist.min(crate::report::VACUOUS_MARGIN),
        );
    if let Some(c) = hit.filter(|c| c.distance < tol.coll_tol) {
        r = r.with_witness(
            Witness::new()
                .vector("source_a", &sources[c.i])
                .vector("source_b", &c.other)
                .scalar("image_distance", c.distance),
        );
    }
    r
}

/// Condition A1 at a fixed `x`: `(y, z) ↦ (g, g_x)(x, y, z)` sampled for
/// collisions. Sources are the vectors `(y, z)`.
pub fn check_a1_sampled(
    gf: &dyn GeneratingFunction,
    x: &Vector,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    let gamma = gf.gamma();
    let n = gf.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fibers = Vec::with_capacity(samples);
    for _ in 0..samples {
        for _ in 0..100 {
            let y = gamma.y_box.sample(&mut rng);
            if !gamma.pair_admissible(x.as_slice(), y.as_slice()) {
                continue;
            }
            let (lo, hi) = gamma.inner_interval(x.as_slice(), y.as_slice());
            let z = rng.random_range(lo..hi);
            fibers.push(FiberPoint { x: x.clone(), y, z });
            break;
        }
    }
    let lifted: Vec<Option<JetPoint>> = fibers
        .par_iter()
        .map(|fp| {
            let j = eval_jet(gf, fp.x.as_slice(), fp.y.as_slice(), fp.z, tol).ok()?;
            Some(JetPoint {
                x: x.clone(),
                u: j.g,
                p: j.gx,
            })
        })
        .collect();
    let (fibers, jets): (Vec<FiberPoint>, Vec<JetPoint>) = fibers
        .into_iter()
        .zip(lifted)
        .filter_map(|(f, j)| j.map(|j| (f, j)))
        .unzip();
    let stack = |y: &Vector, z: f64| {
        Vector::from_iterator(n + 1, y.iter().copied().chain(std::iter::once(z)))
    };
    let sources: Vec<Vector> = fibers.iter().map(|f| stack(&f.y, f.z)).collect();
    let images: Vec<Vector> = jets.iter().map(|j| stack(&j.p, j.u)).collect();
    let (min_dist, hit) = collision_scan(&sources, &images, tol, |i, j| {
        let s = solve_yz_from(gf, &jets[i], &fibers[j], tol).ok()?;
        Some((stack(&s.y, s.z), s.residual))
    });
    collision_report("A1", seed, sources.len(), min_dist, hit, &sources, tol)
}

/// Condition A1* at fixed `(y, z)`: `x ↦ Q(x, y, z)` sampled for collisions.
pub fn check_a1star_sampled(
    gf: &dyn GeneratingFunction,
    y: &Vector,
    z: f64,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    let gamma = gf.gamma();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(samples);
    for _ in 0..samples {
        for _ in 0..100 {
            let x = gamma.x_box.sample(&mut rng);
            if gamma.contains(x.as_slice(), y.as_slice(), z) {
                xs.push(x);
                break;
            }
        }
    }
    let qs: Vec<Option<Vector>> = xs
        .par_iter()
        .map(|x| {
            eval_jet(gf, x.as_slice(), y.as_slice(), z, tol)
                .ok()
                .map(|j| j.q())
        })
        .collect();
    let (sources, images): (Vec<Vector>, Vec<Vector>) = xs
        .into_iter()
        .zip(qs)
        .filter_map(|(x, q)| q.map(|q| (x, q)))
        .unzip();
    let (min_dist, hit) = collision_scan(&sources, &images, tol, |i, j| {
        let x = invert_q_from(gf, &images[i], y.as_slice(), z, &sources[j], tol).ok()?;
        let q = eval_jet(gf, x.as_slice(), y.as_slice(), z, tol).ok()?.q();
        Some((x, (q - &images[i]).norm()))
    });
    collision_report("A1*", seed, sources.len(), min_dist, hit, &sources, tol)
}

/// Normalized `ξ` and `η ⊥ ξ`.
pub fn orthonormal_pair(xi: &Vector, eta: &Vector) -> Result<(Vector, Vector)> {
    let xn = xi.norm();
    if xn == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let xi = xi / xn;
    let eta = eta - &xi * xi.dot(eta);
    let en = eta.norm();
    if en <= 1e-12 {
        return Err(Error::DegenerateGradient);
    }
    Ok((xi, eta / en))
}

/// The discrete MTW form: central second difference in `p` along `η` of
/// `(A ξ, ξ)`, with `ξ`, `η` orthonormalized first.
pub fn mtw_form(
    gf: &dyn GeneratingFunction,
    jet: &JetPoint,
    xi: &Vector,
    eta: &Vector,
    h: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let (xi, eta) = orthonormal_pair(xi, eta)?;
    let centre = solve_yz(gf, jet, None, tol).map_err(|e| Error::NotInU(e.to_string()))?;
    let init = centre.fiber(&jet.x);
    let form = |s: &YzSolution| -> Result<f64> {
        let j = eval_jet(gf, jet.x.as_slice(), s.y.as_slice(), s.z, tol)?;
        Ok(quad_form(&j.gxx, &xi))
    };
    let shifted = |sign: f64| -> Result<f64> {
        let jp = JetPoint {
            x: jet.x.clone(),
            u: jet.u,
            p: &jet.p + &eta * (sign * h),
        };
        let s = solve_yz(gf, &jp, Some(&init), tol).map_err(|e| Error::NotInU(e.to_string()))?;
        form(&s)
    };
    let f0 = form(&centre)?;
    Ok((shifted(1.0)? - 2.0 * f0 + shifted(-1.0)?) / (h * h))
}

/// Default MTW step `mtw_step · max(1, |p|)`.
pub fn mtw_step(jet: &JetPoint, tol: &Tolerances) -> f64 {
    tol.mtw_step * jet.p.norm().max(1.0)
}

/// Extremal midpoint statistics of one segment.
#[derive(Debug, Clone)]
pub struct SegmentScan {
    pub solves: usize,
    pub failures: usize,
    /// `max |f|` over the profile, the scale of `conv_tol`.
    pub scale: f64,
    /// Minimum of `(f(a) + f(b))/2 − f(mid)` with `(a, b, ξ index)`.
    pub defect: ArgMin<(usize, usize, usize)>,
    /// Minimum of the uniform-convexity quotient with `(a, b, ξ index)`.
    pub quotient: ArgMin<(usize, usize, usize)>,
    pub xis: Vec<Vector>,
}

impl SegmentScan {
    pub fn margin(&self, tol: &Tolerances) -> f64 {
        self.defect.value + tol.conv_tol * self.scale.max(1.0)
    }
}

/// Matrices `A(x0, u0, p_θ)` along the grid.
pub fn a_profile(
    gf: &dyn GeneratingFunction,
    seg: &SegmentConfig,
    tol: &Tolerances,
) -> Vec<Result<Matrix>> {
    solve_segment(gf, seg, tol)
        .into_iter()
        .map(|r| {
            let s = r?;
            Ok(eval_jet(gf, seg.x0.as_slice(), s.y.as_slice(), s.z, tol)?.gxx)
        })
        .collect()
}

/// Midpoint convexity of `f(θ) = (A ξ, ξ)(x0, u0, p_θ)` over all grid triples
/// `(θ_a, (θ_a + θ_b)/2, θ_b)`, together with the quotient
/// `2 · defect / ((θ_b − θ_a)²/4 · |p1 − p0|²)`.
pub fn scan_segment(
    gf: &dyn GeneratingFunction,
    seg: &SegmentConfig,
    xis: &[Vector],
    tol: &Tolerances,
) -> SegmentScan {
    let mats = a_profile(gf, seg, tol);
    let m = seg.theta_m;
    let failures = mats.iter().filter(|r| r.is_err()).count();
    let mut scan = SegmentScan {
        solves: m + 1,
        failures,
        scale: 0.0,
        defect: ArgMin::default(),
        quotient: ArgMin::default(),
        xis: xis.to_vec(),
    };
    if failures > 0 {
        return scan;
    }
    let mats: Vec<Matrix> = mats.into_iter().map(|r| r.unwrap()).collect();
    let dp2 = seg.dp().norm_squared();
    let profiles: Vec<Vec<f64>> = xis
        .iter()
        .map(|xi| mats.iter().map(|a| quad_form(a, xi)).collect())
        .collect();
    scan.scale = profiles
        .iter()
        .flatten()
        .fold(0.0_f64, |s, v| s.max(v.abs()));
    for a in 0..=m {
        for b in (a + 2..=m).step_by(2) {
            let mid = (a + b) / 2;
            let span = (b - a) as f64 / m as f64;
            for (k, f) in profiles.iter().enumerate() {
                let defect = 0.5 * (f[a] + f[b]) - f[mid];
                scan.defect.offer(defect, || (a, b, k));
                scan.quotient
                    .offer(2.0 * defect / (0.25 * span * span * dp2), || (a, b, k));
            }
        }
    }
    scan
}

fn segment_witness(
    seg: &SegmentConfig,
    index: usize,
    arg: (usize, usize, usize),
    xis: &[Vector],
) -> Witness {
    let (a, b, k) = arg;
    let mid = (a + b) / 2;
    Witness::new()
        .vector("x0", &seg.x0)
        .vector("p0", &seg.p0)
        .vector("p1", &seg.p1)
        .vector("p_mid", &seg.p_theta(mid))
        .vector("xi", &xis[k])
        .scalar("u0", seg.u0)
        .scalar("segment", index as f64)
        .scalar("theta_a", seg.theta(a))
        .scalar("theta_mid", seg.theta(mid))
        .scalar("theta_b", seg.theta(b))
        .scalar("theta_m", seg.theta_m as f64)
}

/// Segment A3w on one segment; `NotInU` if a grid solve fails.
pub fn check_a3w_segment(
    gf: &dyn GeneratingFunction,
    seg: &SegmentConfig,
    xis: &[Vector],
    tol: &Tolerances,
) -> Result<ConditionReport> {
    if xis.is_empty() {
        return Ok(ConditionReport::vacuous(
            "A3w",
            0,
            "no direction orthogonal to p1 - p0",
        ));
    }
    let scan = scan_segment(gf, seg, xis, tol);
    if scan.failures > 0 {
        return Err(Error::NotInU(format!(
            "{} of {} segment solves failed",
            scan.failures, scan.solves
        )));
    }
    let margin = scan.margin(tol);
    let mut r =
        ConditionReport::new("A3w", Verdict::from_bool(margin >= 0.0), margin, 0).with_samples(1);
    if let Some(arg) = scan.defect.arg {
        r = r.with_witness(segment_witness(seg, 0, arg, xis).scalar("defect", scan.defect.value));
    }
    Ok(r)
}

/// A3w and A3s over a segment family.
#[derive(Debug, Clone)]
pub struct FamilyScan {
    pub scans: Vec<SegmentScan>,
    pub solves: usize,
    pub failures: usize,
    pub margin: ArgMin<(usize, (usize, usize, usize))>,
    pub quotient: ArgMin<(usize, (usize, usize, usize))>,
}

impl FamilyScan {
    pub fn failure_rate(&self) -> f64 {
        if self.solves == 0 {
            0.0
        } else {
            self.failures as f64 / self.solves as f64
        }
    }
}

/// Scans every segment in parallel, then reduces in segment order so the
/// lexicographically smallest `(segment, θ, ξ)` wins ties.
pub fn scan_family(
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    xi_count: usize,
    seed: u64,
    tol: &Tolerances,
) -> FamilyScan {
    let scans: Vec<SegmentScan> = segs
        .par_iter()
        .enumerate()
        .map(|(i, seg)| scan_segment(gf, seg, &xi_directions(seg, xi_count, seed, i), tol))
        .collect();
    let mut fam = FamilyScan {
        scans: Vec::new(),
        solves: 0,
        failures: 0,
        margin: ArgMin::default(),
        quotient: ArgMin::default(),
    };
    for (i, s) in scans.iter().enumerate() {
        fam.solves += s.solves;
        fam.failures += s.failures;
        if s.failures > 0 {
            continue;
        }
        if let Some(arg) = s.defect.arg {
            fam.margin.offer(s.margin(tol), || (i, arg));
        }
        if let Some(arg) = s.quotient.arg {
            fam.quotient.offer(s.quotient.value, || (i, arg));
        }
    }
    fam.scans = scans;
    fam
}

fn family_report(
    id: &str,
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    fam: &FamilyScan,
    value: &ArgMin<(usize, (usize, usize, usize))>,
    holds: impl Fn(f64) -> bool,
    seed: u64,
) -> ConditionReport {
    if gf.dim() < 2 {
        return ConditionReport::vacuous(id, seed, "n = 1: no co-dimension one directions");
    }
    let verdict = if fam.failure_rate() > 0.01 || value.arg.is_none() {
        Verdict::Inconclusive
    } else {
        Verdict::from_bool(holds(value.value))
    };
    let mut r = ConditionReport::new(id, verdict, value.value, seed)
        .with_samples(segs.len())
        .detail("stencil_solves", fam.solves as f64)
        .detail("stencil_failures", fam.failures as f64);
    if let Some((i, arg)) = value.arg {
        r = r.with_witness(segment_witness(&segs[i], i, arg, &fam.scans[i].xis));
    }
    if verdict == Verdict::Inconclusive {
        r = r.note("more than 1% of segment solves failed");
    }
    r
}

/// Segment-form A3w over a family; holds iff the margin is nonnegative.
pub fn check_a3w(
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    xi_count: usize,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    let fam = scan_family(gf, segs, xi_count, seed, tol);
    a3w_report(gf, segs, &fam, seed)
}

pub fn a3w_report(
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    fam: &FamilyScan,
    seed: u64,
) -> ConditionReport {
    let mut r = family_report("A3w", gf, segs, fam, &fam.margin, |m| m >= 0.0, seed);
    if let (Some(w), Some((i, _))) = (r.witness.as_mut(), fam.margin.arg) {
        w.scalars.insert("defect".into(), fam.scans[i].defect.value);
    }
    r
}

/// Segment-form A3s over a family: `delta_hat` is the minimal quotient;
/// holds iff `delta_hat > a3s_tol`.
pub fn check_a3s(
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    xi_count: usize,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    let fam = scan_family(gf, segs, xi_count, seed, tol);
    a3s_report(gf, segs, &fam, seed, tol)
}

pub fn a3s_report(
    gf: &dyn GeneratingFunction,
    segs: &[SegmentConfig],
    fam: &FamilyScan,
    seed: u64,
    tol: &Tolerances,
) -> ConditionReport {
    let a3s_tol = tol.a3s_tol;
    let r = family_report("A3s", gf, segs, fam, &fam.quotient, |d| d > a3s_tol, seed);
    if r.vacuous {
        return r;
    }
    r.detail("delta_hat", fam.quotient.value)
}

/// `delta_hat` recorded in an A3s report.
pub fn delta_hat(report: &ConditionReport) -> Option<f64> {
    report.details.get("delta_hat").copied()
}
