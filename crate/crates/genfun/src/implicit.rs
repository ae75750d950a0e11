//! Solvers for the generating equations `g(x, Y, Z) = u`, `g_x(x, Y, Z) = p`,
//! the dual function `g*`, the maps `Q` and `P`, and the matrices `E` and `A`.

use crate::error::{Error, Result};
use crate::genfun::{eval_jet, partial_z, FiberPoint, GJet, GeneratingFunction, JetPoint};
use crate::numerics::{inf_norm, solve, Matrix, Tolerances, Vector};

/// `(Y, Z)(x, u, p)` with solver statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct YzSolution {
    pub y: Vector,
    pub z: f64,
    /// ∞-norm of `(g_x − p, g − u)`.
    pub residual: f64,
    pub iterations: usize,
}

impl YzSolution {
    pub fn fiber(&self, x: &Vector) -> FiberPoint {
        FiberPoint {
            x: x.clone(),
            y: self.y.clone(),
            z: self.z,
        }
    }
}

/// `(x, g, g_x)` of a fiber point.
pub fn jet_of(gf: &dyn GeneratingFunction, fp: &FiberPoint, tol: &Tolerances) -> Result<JetPoint> {
    let j = eval_jet(gf, fp.x.as_slice(), fp.y.as_slice(), fp.z, tol)?;
    Ok(JetPoint {
        x: fp.x.clone(),
        u: j.g,
        p: j.gx,
    })
}

fn yz_residual(jet: &GJet, target: &JetPoint) -> f64 {
    inf_norm(&(&jet.gx - &target.p)).max((jet.g - target.u).abs())
}

enum NewtonFailure {
    Singular,
    Stalled(f64),
}

/// Damped Newton on `F(y, z) = (g_x − p, g − u)` from one starting point.
fn newton_yz(
    gf: &dyn GeneratingFunction,
    target: &JetPoint,
    y0: Vector,
    z0: f64,
    tol: &Tolerances,
) -> std::result::Result<YzSolution, NewtonFailure> {
    let n = target.x.len();
    let x = target.x.as_slice();
    let goal = tol.newton_tol * (1.0 + target.u.abs() + inf_norm(&target.p));
    let (mut y, mut z) = (y0, z0);
    let mut jet =
        eval_jet(gf, x, y.as_slice(), z, tol).map_err(|_| NewtonFailure::Stalled(f64::INFINITY))?;
    let mut res = yz_residual(&jet, target);
    for it in 0..=tol.max_iter {
        if res <= goal {
            return Ok(YzSolution {
                y,
                z,
                residual: res,
                iterations: it,
            });
        }
        if it == tol.max_iter {
            break;
        }
        let mut jac = Matrix::zeros(n + 1, n + 1);
        jac.view_mut((0, 0), (n, n)).copy_from(&jet.gxy);
        jac.view_mut((0, n), (n, 1)).copy_from(&jet.gxz);
        jac.view_mut((n, 0), (1, n)).copy_from(&jet.gy.transpose());
        jac[(n, n)] = jet.gz;
        let mut f = Vector::zeros(n + 1);
        f.rows_mut(0, n).copy_from(&(&jet.gx - &target.p));
        f[n] = jet.g - target.u;
        let step = solve(&jac, &(-f)).ok_or(NewtonFailure::Singular)?;
        let dy = step.rows(0, n).into_owned();
        let dz = step[n];
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=tol.max_halvings {
            let yc = &y + &dy * t;
            let zc = z + dz * t;
            if let Ok(jc) = eval_jet(gf, x, yc.as_slice(), zc, tol) {
                let rc = yz_residual(&jc, target);
                if rc < res {
                    y = yc;
                    z = zc;
                    jet = jc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(NewtonFailure::Stalled(res));
        }
    }
    Err(NewtonFailure::Stalled(res))
}

/// Starting points of the multistart: a `3ⁿ` grid of cell centres in the
/// `y`-box times three interior points of `I(x, y)`.
fn multistart_points(gf: &dyn GeneratingFunction, x: &[f64]) -> Vec<(Vector, f64)> {
    let gamma = gf.gamma();
    let n = gf.dim();
    let total = 3usize.pow(n as u32);
    let mut out = Vec::with_capacity(total * 3);
    for code in 0..total {
        let mut c = code;
        let y = Vector::from_iterator(
            n,
            (0..n).map(|i| {
                let k = c % 3;
                c /= 3;
                let (lo, hi) = (gamma.y_box.lo[i], gamma.y_box.hi[i]);
                lo + (k as f64 + 0.5) / 3.0 * (hi - lo)
            }),
        );
        if !gamma.pair_admissible(x, y.as_slice()) {
            continue;
        }
        let (lo, hi) = gamma.inner_interval(x, y.as_slice());
        for j in 1..=3 {
            out.push((y.clone(), lo + j as f64 / 4.0 * (hi - lo)));
        }
    }
    out
}

fn default_start(gf: &dyn GeneratingFunction, x: &[f64]) -> (Vector, f64) {
    let gamma = gf.gamma();
    let y = gamma.y_box.center();
    let (lo, hi) = gamma.interval(x, y.as_slice());
    (y, 0.5 * (lo + hi))
}

/// Solves the generating equations for `(Y, Z)` at a jet, falling back to a
/// multistart grid when Newton fails from the initial guess.
pub fn solve_yz(
    gf: &dyn GeneratingFunction,
    jet: &JetPoint,
    init: Option<&FiberPoint>,
    tol: &Tolerances,
) -> Result<YzSolution> {
    if !gf
        .gamma()
        .x_box
        .contains(jet.x.as_slice(), gf.gamma().margin)
    {
        return Err(Error::OutOfGamma(format!(
            "x={:?} outside x_box",
            jet.x.as_slice()
        )));
    }
    let (y0, z0) = match init {
        Some(fp) => (fp.y.clone(), fp.z),
        None => default_start(gf, jet.x.as_slice()),
    };
    let mut best = f64::INFINITY;
    let mut singular = 0usize;
    let mut attempts = 0usize;
    let mut record = |r: std::result::Result<YzSolution, NewtonFailure>| -> Option<YzSolution> {
        attempts += 1;
        match r {
            Ok(s) => Some(s),
            Err(NewtonFailure::Singular) => {
                singular += 1;
                None
            }
            Err(NewtonFailure::Stalled(res)) => {
                best = best.min(res);
                None
            }
        }
    };
    if let Some(s) = record(newton_yz(gf, jet, y0, z0, tol)) {
        return Ok(s);
    }
    for (y, z) in multistart_points(gf, jet.x.as_slice()) {
        if let Some(s) = record(newton_yz(gf, jet, y, z, tol)) {
            return Ok(s);
        }
    }
    if singular == attempts {
        Err(Error::SingularJacobian)
    } else {
        Err(Error::NoConvergence { residual: best })
    }
}

/// Solves from a single starting point without multistart; used to probe for
/// a second preimage near a given fiber point.
pub fn solve_yz_from(
    gf: &dyn GeneratingFunction,
    jet: &JetPoint,
    start: &FiberPoint,
    tol: &Tolerances,
) -> Result<YzSolution> {
    newton_yz(gf, jet, start.y.clone(), start.z, tol).map_err(|e| match e {
        NewtonFailure::Singular => Error::SingularJacobian,
        NewtonFailure::Stalled(residual) => Error::NoConvergence { residual },
    })
}

/// `g*(x, y, u)`: the root `z ∈ I(x, y)` of `g(x, y, z) = u`. Uses the
/// closed form when the generating function provides one and
/// [`solve_gstar`] otherwise.
pub fn eval_gstar(
    gf: &dyn GeneratingFunction,
    x: &[f64],
    y: &[f64],
    u: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let Some(z) = gf.gstar(x, y, u) else {
        return solve_gstar(gf, x, y, u, tol);
    };
    let gamma = gf.gamma();
    if !gamma.pair_admissible(x, y) {
        return Err(Error::OutOfGamma(format!("x={x:?}, y={y:?}")));
    }
    let (lo, hi) = gamma.inner_interval(x, y);
    if !(z >= lo && z <= hi) {
        return Err(Error::OutOfRange {
            u,
            lo: gf.eval(x, y, hi),
            hi: gf.eval(x, y, lo),
        });
    }
    Ok(z)
}

/// `g*(x, y, u)` by safeguarded Newton inside a bisection bracket.
pub fn solve_gstar(
    gf: &dyn GeneratingFunction,
    x: &[f64],
    y: &[f64],
    u: f64,
    tol: &Tolerances,
) -> Result<f64> {
    let gamma = gf.gamma();
    if !gamma.pair_admissible(x, y) {
        return Err(Error::OutOfGamma(format!("x={x:?}, y={y:?}")));
    }
    let (mut a, mut b) = gamma.inner_interval(x, y);
    let (g_lo, g_hi) = (gf.eval(x, y, a), gf.eval(x, y, b));
    if !(u <= g_lo && u >= g_hi) {
        return Err(Error::OutOfRange {
            u,
            lo: g_hi,
            hi: g_lo,
        });
    }
    let goal = tol.newton_tol * (1.0 + u.abs());
    let mut z = 0.5 * (a + b);
    let mut polish = 0;
    for _ in 0..200 {
        let f = gf.eval(x, y, z) - u;
        if f == 0.0 {
            return Ok(z);
        }
        if f.abs() <= goal {
            polish += 1;
            if polish > 2 {
                return Ok(z);
            }
        }
        // g is decreasing in z
        if f > 0.0 {
            a = z;
        } else {
            b = z;
        }
        let gz = partial_z(gf, x, y, z, tol);
        let newton = z - f / gz;
        let next = if gz < 0.0 && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if polish > 0 {
            // accept a polishing step only if it improves the residual
            let fn_ = gf.eval(x, y, next) - u;
            if fn_.abs() >= f.abs() {
                return Ok(z);
            }
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * z.abs().max(1.0) {
            return Ok(if (gf.eval(x, y, next) - u).abs() < f.abs() {
                next
            } else {
                z
            });
        }
        z = next;
    }
    let f = gf.eval(x, y, z) - u;
    if f.abs() <= goal {
        Ok(z)
    } else {
        Err(Error::NoConvergence { residual: f.abs() })
    }
}

/// `Q = −g_y / g_z`.
pub fn map_q(gf: &dyn GeneratingFunction, fp: &FiberPoint, tol: &Tolerances) -> Result<Vector> {
    Ok(eval_jet(gf, fp.x.as_slice(), fp.y.as_slice(), fp.z, tol)?.q())
}

/// `P(x, y, u) = g_x(x, y, g*(x, y, u))`.
pub fn map_p(
    gf: &dyn GeneratingFunction,
    x: &[f64],
    y: &[f64],
    u: f64,
    tol: &Tolerances,
) -> Result<Vector> {
    let z = eval_gstar(gf, x, y, u, tol)?;
    Ok(eval_jet(gf, x, y, z, tol)?.gx)
}

fn newton_q(
    gf: &dyn GeneratingFunction,
    q: &Vector,
    y: &[f64],
    z: f64,
    x0: Vector,
    tol: &Tolerances,
) -> std::result::Result<Vector, NewtonFailure> {
    let goal = tol.newton_tol * (1.0 + inf_norm(q));
    let mut x = x0;
    let mut jet =
        eval_jet(gf, x.as_slice(), y, z, tol).map_err(|_| NewtonFailure::Stalled(f64::INFINITY))?;
    let mut res = inf_norm(&(jet.q() - q));
    for _ in 0..tol.max_iter {
        if res <= goal {
            return Ok(x);
        }
        let jac = -jet.matrix_e().transpose() / jet.gz;
        let step = solve(&jac, &(q - jet.q())).ok_or(NewtonFailure::Singular)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=tol.max_halvings {
            let xc = &x + &step * t;
            if let Ok(jc) = eval_jet(gf, xc.as_slice(), y, z, tol) {
                let rc = inf_norm(&(jc.q() - q));
                if rc < res {
                    x = xc;
                    jet = jc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(NewtonFailure::Stalled(res));
        }
    }
    if res <= goal {
        Ok(x)
    } else {
        Err(NewtonFailure::Stalled(res))
    }
}

/// Solves `Q(x, y, z) = q` for `x` by Newton with Jacobian `−Eᵗ/g_z`,
/// with a `3ⁿ` multistart over the `x`-box on failure.
pub fn invert_q(
    gf: &dyn GeneratingFunction,
    q: &Vector,
    y: &[f64],
    z: f64,
    x_init: &Vector,
    tol: &Tolerances,
) -> Result<Vector> {
    let mut best = f64::INFINITY;
    let (mut singular, mut attempts) = (0usize, 0usize);
    let mut starts = vec![x_init.clone()];
    let gamma = gf.gamma();
    let n = gf.dim();
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        starts.push(Vector::from_iterator(
            n,
            (0..n).map(|i| {
                let k = c % 3;
                c /= 3;
                gamma.x_box.lo[i] + (k as f64 + 0.5) / 3.0 * (gamma.x_box.hi[i] - gamma.x_box.lo[i])
            }),
        ));
    }
    for s in starts {
        attempts += 1;
        match newton_q(gf, q, y, z, s, tol) {
            Ok(x) => return Ok(x),
            Err(NewtonFailure::Singular) => singular += 1,
            Err(NewtonFailure::Stalled(r)) => best = best.min(r),
        }
    }
    if singular == attempts {
        Err(Error::SingularJacobian)
    } else {
        Err(Error::NoConvergence { residual: best })
    }
}

/// Single-start variant of [`invert_q`].
pub fn invert_q_from(
    gf: &dyn GeneratingFunction,
    q: &Vector,
    y: &[f64],
    z: f64,
    x_start: &Vector,
    tol: &Tolerances,
) -> Result<Vector> {
    newton_q(gf, q, y, z, x_start.clone(), tol).map_err(|e| match e {
        NewtonFailure::Singular => Error::SingularJacobian,
        NewtonFailure::Stalled(residual) => Error::NoConvergence { residual },
    })
}

/// `E = g_xy − g_z⁻¹ g_xz ⊗ g_y` and its determinant.
pub fn matrix_e(
    gf: &dyn GeneratingFunction,
    fp: &FiberPoint,
    tol: &Tolerances,
) -> Result<(Matrix, f64)> {
    let e = eval_jet(gf, fp.x.as_slice(), fp.y.as_slice(), fp.z, tol)?.matrix_e();
    let det = e.determinant();
    Ok((e, det))
}

/// `A(x, u, p) = g_xx(x, Y, Z)`, symmetrized.
pub fn matrix_a(
    gf: &dyn GeneratingFunction,
    jet: &JetPoint,
    init: Option<&FiberPoint>,
    tol: &Tolerances,
) -> Result<Matrix> {
    let s = solve_yz(gf, jet, init, tol)?;
    Ok(eval_jet(gf, jet.x.as_slice(), s.y.as_slice(), s.z, tol)?.gxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::build;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(a: &[f64]) -> Vector {
        Vector::from_vec(a.to_vec())
    }

    #[test]
    fn ot_quad_closed_form() {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let jet = JetPoint {
            x: v(&[0.0, 0.0]),
            u: 0.0,
            p: v(&[1.0, 0.0]),
        };
        let s = solve_yz(gf.as_ref(), &jet, None, &tol).unwrap();
        assert!((s.y[0] - 1.0).abs() < 1e-12 && s.y[1].abs() < 1e-12);
        assert!((s.z + 0.5).abs() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn gstar_out_of_range() {
        let gf = build("synthetic_z").unwrap();
        let tol = Tolerances::default();
        let err = eval_gstar(gf.as_ref(), &[0.0, 0.0], &[0.0, 0.0], 10.0, &tol).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn gstar_quadratic() {
        let gf = build("ot_quad").unwrap();
        let z = eval_gstar(
            gf.as_ref(),
            &[0.0, 0.0],
            &[1.0, 0.0],
            0.0,
            &Tolerances::default(),
        )
        .unwrap();
        assert!((z + 0.5).abs() < 1e-14);
    }

    #[test]
    fn closed_form_gstar_matches_root_finding() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for id in ["ot_quad", "ot_log", "ot_power", "synthetic_z"] {
            let gf = build(id).unwrap();
            for _ in 0..50 {
                let fp = gf.gamma().sample(&mut rng).unwrap();
                let u = gf.eval(fp.x.as_slice(), fp.y.as_slice(), fp.z);
                let a = eval_gstar(gf.as_ref(), fp.x.as_slice(), fp.y.as_slice(), u, &tol).unwrap();
                let b =
                    solve_gstar(gf.as_ref(), fp.x.as_slice(), fp.y.as_slice(), u, &tol).unwrap();
                assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{id}: {a} vs {b}");
                assert!((a - fp.z).abs() < 1e-9 * (1.0 + a.abs()), "{id}");
            }
        }
    }

    #[test]
    fn q_and_p_for_quadratic() {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let fp = FiberPoint {
            x: v(&[0.3, -0.2]),
            y: v(&[0.1, 0.4]),
            z: 0.7,
        };
        let q = map_q(gf.as_ref(), &fp, &tol).unwrap();
        assert!((q - (&fp.x - &fp.y)).norm() < 1e-15);
        let p = map_p(gf.as_ref(), fp.x.as_slice(), fp.y.as_slice(), 0.25, &tol).unwrap();
        assert!((p - (&fp.y - &fp.x)).norm() < 1e-15);
        let x = invert_q(
            gf.as_ref(),
            &v(&[1.0, 1.0]),
            &[0.0, 0.0],
            0.0,
            &v(&[0.0, 0.0]),
            &tol,
        )
        .unwrap();
        assert!((x - v(&[1.0, 1.0])).norm() < 1e-12);
        let x = invert_q(
            gf.as_ref(),
            &v(&[0.5, 0.5]),
            &[0.0, 0.0],
            0.0,
            &v(&[0.0, 0.0]),
            &tol,
        )
        .unwrap();
        assert!((x - v(&[0.5, 0.5])).norm() < 1e-12);
    }

    #[test]
    fn out_of_gamma_jet() {
        let gf = build("ot_quad").unwrap();
        let jet = JetPoint {
            x: v(&[3.5, 0.0]),
            u: 0.0,
            p: v(&[0.0, 0.0]),
        };
        assert!(matches!(
            solve_yz(gf.as_ref(), &jet, None, &Tolerances::default()),
            Err(Error::OutOfGamma(_))
        ));
    }

    #[test]
    fn unreachable_jet_does_not_converge() {
        let gf = build("ot_quad").unwrap();
        // y = x + p lies far outside the y-box
        let jet = JetPoint {
            x: v(&[0.0, 0.0]),
            u: 0.0,
            p: v(&[9.0, 0.0]),
        };
        assert!(matches!(
            solve_yz(gf.as_ref(), &jet, None, &Tolerances::default()),
            Err(Error::NoConvergence { .. })
        ));
    }
}
