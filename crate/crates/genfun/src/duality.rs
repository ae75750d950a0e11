//! The dual generating function `ḡ(y, x, u) = g*(x, y, u)`, the
//! correspondence between primal jets `(x, u, p)` and dual jets `(y, z, q)`,
//! and the duality invariance of A3w and A3s.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conditions::{
    a3s_report, a3w_report, mtw_form, mtw_step, sample_segments, scan_family, solve_segment,
    SegmentConfig, SegmentSampling,
};
use crate::error::{Error, Result};
use crate::genfun::{
    eval_jet, FiberPoint, Gamma, GeneratingFunction, JetPoint, JetSource, Partials, SharedGf,
};
use crate::implicit::{eval_gstar, invert_q, solve_yz};
use crate::numerics::{fd_step, Matrix, Tolerances, Vector};
use crate::report::{ConditionReport, Verdict, Witness};

/// `ḡ(a, b, c) = g*(b, a, c)`: the base variable is the primal `y`, the
/// target the primal `x`, the scalar the primal `u`.
///
/// First derivatives come from `g*_x = −g_x/g_z`, `g*_y = −g_y/g_z`,
/// `g*_u = 1/g_z` at the lifted fiber point; second derivatives are central
/// differences of `−g_y/g_z` with step `fd_eps_second`.
pub struct DualGf {
    primal: SharedGf,
    gamma: Gamma,
    name: String,
    tol: Tolerances,
}

impl DualGf {
    pub fn primal(&self) -> &SharedGf {
        &self.primal
    }

    /// Primal fiber point over dual coordinates `(a, b, c) = (y, x, u)`.
    fn lift(&self, a: &[f64], b: &[f64], c: f64) -> Option<f64> {
        eval_gstar(self.primal.as_ref(), b, a, c, &self.tol).ok()
    }

    /// `ḡ_a = −g_y/g_z` at the lifted point, NaN outside the domain.
    fn grad_a(&self, a: &[f64], b: &[f64], c: f64) -> Vector {
        self.lift(a, b, c)
            .and_then(|z| eval_jet(self.primal.as_ref(), b, a, z, &self.tol).ok())
            .map(|j| -j.gy / j.gz)
            .unwrap_or_else(|| Vector::from_element(a.len(), f64::NAN))
    }
}

/// Builds the dual of `gf`. Its domain is `y_box × x_box` with the `u`-interval
/// `(g(x, y, hi), g(x, y, lo))` over the primal interval shrunk by its margin.
pub fn build_dual(gf: SharedGf, tol: &Tolerances) -> Result<DualGf> {
    let primal_gamma = gf.gamma().clone();
    let g = gf.clone();
    let pg = primal_gamma.clone();
    let mut gamma = Gamma::new(
        primal_gamma.y_box.clone(),
        primal_gamma.x_box.clone(),
        move |a, b| {
            let (lo, hi) = pg.inner_interval(b, a);
            (g.eval(b, a, hi), g.eval(b, a, lo))
        },
    )
    .with_margin(primal_gamma.margin);
    let pg = primal_gamma.clone();
    gamma = gamma.with_pair_constraint(move |a, b| pg.pair_admissible(b, a));
    let (yc, xc) = (primal_gamma.y_box.center(), primal_gamma.x_box.center());
    let (lo, hi) = gamma.interval(yc.as_slice(), xc.as_slice());
    if primal_gamma.pair_admissible(xc.as_slice(), yc.as_slice()) && !(lo < hi) {
        return Err(Error::OutOfRange {
            u: f64::NAN,
            lo,
            hi,
        });
    }
    Ok(DualGf {
        name: format!("dual({})", gf.name()),
        primal: gf,
        gamma,
        tol: tol.clone(),
    })
}

impl GeneratingFunction for DualGf {
    fn dim(&self) -> usize {
        self.primal.dim()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn params(&self) -> BTreeMap<String, f64> {
        self.primal.params()
    }

    fn gamma(&self) -> &Gamma {
        &self.gamma
    }

    fn eval(&self, a: &[f64], b: &[f64], c: f64) -> f64 {
        self.lift(a, b, c).unwrap_or(f64::NAN)
    }

    fn g_z(&self, a: &[f64], b: &[f64], c: f64) -> Option<f64> {
        let z = self.lift(a, b, c)?;
        let gz = crate::genfun::partial_z(self.primal.as_ref(), b, a, z, &self.tol);
        Some(1.0 / gz)
    }

    /// `ḡ(a, b, ·)` inverts `g(b, a, ·)`, so its inverse is `g` itself.
    fn gstar(&self, a: &[f64], b: &[f64], w: f64) -> Option<f64> {
        Some(self.primal.eval(b, a, w))
    }

    fn partials(&self, a: &[f64], b: &[f64], c: f64) -> Partials {
        let n = a.len();
        let Some(z) = self.lift(a, b, c) else {
            return Partials::default();
        };
        let Ok(j) = eval_jet(self.primal.as_ref(), b, a, z, &self.tol) else {
            return Partials::default();
        };
        let eps = self.tol.fd_eps_second;
        let mut gxx = Matrix::zeros(n, n);
        let mut gxy = Matrix::zeros(n, n);
        let mut av = a.to_vec();
        let mut bv = b.to_vec();
        for k in 0..n {
            let h = fd_step(eps, a[k]);
            av[k] = a[k] + h;
            let fp = self.grad_a(&av, b, c);
            av[k] = a[k] - h;
            let fm = self.grad_a(&av, b, c);
            av[k] = a[k];
            gxx.set_column(k, &((fp - fm) / (2.0 * h)));
            let h = fd_step(eps, b[k]);
            bv[k] = b[k] + h;
            let fp = self.grad_a(a, &bv, c);
            bv[k] = b[k] - h;
            let fm = self.grad_a(a, &bv, c);
            bv[k] = b[k];
            gxy.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        let h = fd_step(eps, c);
        let gxz = (self.grad_a(a, b, c + h) - self.grad_a(a, b, c - h)) / (2.0 * h);
        Partials {
            gx: Some(-&j.gy / j.gz),
            gy: Some(-&j.gx / j.gz),
            gz: Some(1.0 / j.gz),
            gxx: Some(gxx),
            gxy: Some(gxy),
            gxz: Some(gxz),
            source: Some(JetSource::Mixed),
        }
    }
}

/// A primal jet with its fiber point and the dual jet `(y, z, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetCorrespondence {
    pub primal: JetPoint,
    pub fiber: FiberPoint,
    /// The dual jet: base `y`, value `z`, gradient `q = Q(x, y, z)`.
    pub dual: JetPoint,
}

pub fn correspond_jet(
    gf: &dyn GeneratingFunction,
    primal: &JetPoint,
    tol: &Tolerances,
) -> Result<JetCorrespondence> {
    let s = solve_yz(gf, primal, None, tol)?;
    let fiber = s.fiber(&primal.x);
    let q = eval_jet(gf, primal.x.as_slice(), s.y.as_slice(), s.z, tol)?.q();
    Ok(JetCorrespondence {
        primal: primal.clone(),
        dual: JetPoint {
            x: s.y,
            u: s.z,
            p: q,
        },
        fiber,
    })
}

/// Recovers the primal fiber point from a dual jet by inverting `Q` in `x`.
pub fn primal_from_dual(
    gf: &dyn GeneratingFunction,
    dual: &JetPoint,
    tol: &Tolerances,
) -> Result<JetCorrespondence> {
    let (y, z) = (&dual.x, dual.u);
    let x = invert_q(
        gf,
        &dual.p,
        y.as_slice(),
        z,
        &gf.gamma().x_box.center(),
        tol,
    )?;
    let j = eval_jet(gf, x.as_slice(), y.as_slice(), z, tol)?;
    Ok(JetCorrespondence {
        primal: JetPoint {
            x: x.clone(),
            u: j.g,
            p: j.gx,
        },
        fiber: FiberPoint { x, y: y.clone(), z },
        dual: dual.clone(),
    })
}

/// Dual segments `(y0, z0, [q0, q1])` based at the dual jets of the primal
/// segment starts, with `q1 = Q(x1, y0, z0)` for `x1 = x0 + (y1 − y0)` clipped
/// to the shrunk `x`-box; `q1` is pulled halfway toward `q0` while the dual
/// segment leaves `𝒱`.
pub fn dual_segments(
    gf: &dyn GeneratingFunction,
    dual: &dyn GeneratingFunction,
    primal_segs: &[SegmentConfig],
    shrink: f64,
    tol: &Tolerances,
) -> Vec<SegmentConfig> {
    let xb = gf.gamma().x_box.shrunk(shrink);
    primal_segs
        .iter()
        .filter_map(|seg| {
            let s0 = solve_yz(gf, &seg.jet(0), None, tol).ok()?;
            let s1 = solve_yz(gf, &seg.jet(seg.theta_m), None, tol).ok()?;
            let q0 = eval_jet(gf, seg.x0.as_slice(), s0.y.as_slice(), s0.z, tol)
                .ok()?
                .q();
            let x1 = xb.clamp(&(&seg.x0 + (&s1.y - &s0.y)));
            let mut q1 = eval_jet(gf, x1.as_slice(), s0.y.as_slice(), s0.z, tol)
                .ok()?
                .q();
            for _ in 0..=4 {
                let cand = SegmentConfig {
                    x0: s0.y.clone(),
                    u0: s0.z,
                    p0: q0.clone(),
                    p1: q1.clone(),
                    theta_m: seg.theta_m,
                };
                if cand.dp().norm() > 1e-8
                    && solve_segment(dual, &cand, tol).iter().all(|r| r.is_ok())
                {
                    return Some(cand);
                }
                q1 = (&q0 + &q1) * 0.5;
            }
            None
        })
        .collect()
}

/// Minimum of the MTW form over directions at a jet, with the value at half
/// the step for the minimizing pair.
pub fn mtw_angle_scan(
    gf: &dyn GeneratingFunction,
    jet: &JetPoint,
    seed: u64,
    tol: &Tolerances,
) -> Result<(f64, f64, Vector, Vector)> {
    let n = jet.x.len();
    let pairs: Vec<(Vector, Vector)> = if n == 2 {
        (0..64)
            .map(|k| {
                let t = PI * k as f64 / 64.0;
                (
                    Vector::from_vec(vec![t.cos(), t.sin()]),
                    Vector::from_vec(vec![-t.sin(), t.cos()]),
                )
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..256)
            .map(|_| {
                let r = |rng: &mut ChaCha8Rng| {
                    Vector::from_iterator(n, (0..n).map(|_| rng.random_range(-1.0..1.0)))
                };
                (r(&mut rng), r(&mut rng))
            })
            .collect()
    };
    let h = mtw_step(jet, tol);
    let mut best: Option<(f64, Vector, Vector)> = None;
    for (xi, eta) in pairs {
        let Ok(v) = mtw_form(gf, jet, &xi, &eta, h, tol) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, xi, eta));
        }
    }
    let (v, xi, eta) = best.ok_or_else(|| Error::NotInU("every MTW stencil failed".into()))?;
    let half = mtw_form(gf, jet, &xi, &eta, h / 2.0, tol)?;
    Ok((v, half, xi, eta))
}

/// Runs A3w or A3s on seeded primal segments and on the corresponding dual
/// segments of `build_dual(gf)`. Holds iff the verdicts (for A3s, the signs
/// of `delta_hat`) agree; when both sides exhibit a violation the dual
/// witness is mapped back to a primal jet where the MTW form must be
/// negative below `−10·conv_tol` with a sign stable under halving the step.
pub fn check_duality_invariance(
    gf: SharedGf,
    condition_id: &str,
    sampling: &SegmentSampling,
    xi_count: usize,
    tol: &Tolerances,
) -> Result<ConditionReport> {
    let id = format!("duality:{condition_id}");
    if condition_id != "A3w" && condition_id != "A3s" {
        return Err(Error::InvalidInput(format!(
            "duality check supports A3w and A3s, not {condition_id}"
        )));
    }
    let seed = sampling.seed;
    if gf.dim() < 2 {
        return Ok(ConditionReport::vacuous(
            &id,
            seed,
            "n = 1: no co-dimension one directions",
        ));
    }
    let dual = build_dual(gf.clone(), tol)?;
    let primal_segs = sample_segments(gf.as_ref(), sampling, tol);
    let dual_segs = dual_segments(gf.as_ref(), &dual, &primal_segs, sampling.shrink, tol);
    let pf = scan_family(gf.as_ref(), &primal_segs, xi_count, seed, tol);
    let df = scan_family(&dual, &dual_segs, xi_count, seed, tol);
    let (pr, dr) = if condition_id == "A3w" {
        (
            a3w_report(gf.as_ref(), &primal_segs, &pf, seed),
            a3w_report(&dual, &dual_segs, &df, seed),
        )
    } else {
        (
            a3s_report(gf.as_ref(), &primal_segs, &pf, seed, tol),
            a3s_report(&dual, &dual_segs, &df, seed, tol),
        )
    };
    let mut report = ConditionReport::new(&id, Verdict::Inconclusive, 0.0, seed)
        .with_samples(primal_segs.len() + dual_segs.len())
        .detail("primal_margin", pr.margin)
        .detail("dual_margin", dr.margin)
        .detail("dual_segments", dual_segs.len() as f64)
        .detail(
            "dual_rejected",
            (primal_segs.len() - dual_segs.len()) as f64,
        )
        .note(format!("primal {}: {}", condition_id, pr.verdict.as_str()))
        .note(format!("dual {}: {}", condition_id, dr.verdict.as_str()));
    if pr.verdict == Verdict::Inconclusive
        || dr.verdict == Verdict::Inconclusive
        || dual_segs.is_empty()
    {
        return Ok(report.note("one side is inconclusive"));
    }
    // signed statistic whose sign is the verdict on each side
    let (ps, ds) = if condition_id == "A3w" {
        (pr.margin, dr.margin)
    } else {
        (pr.margin - tol.a3s_tol, dr.margin - tol.a3s_tol)
    };
    let agree = (ps >= 0.0) == (ds >= 0.0);
    let slack = ps.abs().min(ds.abs());
    report.margin = if agree { slack } else { -slack };
    report.verdict = Verdict::from_bool(agree);
    let violation = pr.margin < -10.0 * tol.conv_tol && dr.margin < -10.0 * tol.conv_tol;
    if agree && violation {
        let w = dr
            .witness
            .as_ref()
            .expect("failing family report has a witness");
        let dual_jet = JetPoint {
            x: w.get_vector("x0").unwrap(),
            u: w.get_scalar("u0").unwrap(),
            p: w.get_vector("p_mid").unwrap(),
        };
        let back = primal_from_dual(gf.as_ref(), &dual_jet, tol)?;
        let (v, half, xi, eta) = mtw_angle_scan(gf.as_ref(), &back.primal, seed, tol)?;
        let confirmed = v < -10.0 * tol.conv_tol && half < 0.0;
        report = report
            .detail("transported_mtw", v)
            .detail("transported_mtw_half_step", half)
            .with_witness(
                Witness::new()
                    .vector("x", &back.primal.x)
                    .scalar("u", back.primal.u)
                    .vector("p", &back.primal.p)
                    .vector("xi", &xi)
                    .vector("eta", &eta)
                    .vector("dual_y", &dual_jet.x)
                    .scalar("dual_z", dual_jet.u)
                    .vector("dual_q", &dual_jet.p),
            );
        if !confirmed {
            report.verdict = Verdict::Fails;
            report.margin = -(v + 10.0 * tol.conv_tol).abs();
            report = report.note("dual witness did not transport to a primal violation");
        }
    } else if !agree {
        let w = pr
            .witness
            .clone()
            .or(dr.witness.clone())
            .unwrap_or_default();
        report = report.with_witness(w);
    }
    Ok(report)
}
