use approx::assert_relative_eq;
use genfun::implicit::{eval_gstar, jet_of, map_q, solve_gstar, solve_yz};
use genfun::{build, FiberPoint, JetPoint, Tolerances, Vector};
use proptest::prelude::*;

fn v2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

fn unit() -> impl Strategy<Value = f64> {
    0.1f64..0.9
}

/// A fiber point inside `Γ` at relative position `(s, t, r)` of its boxes.
fn fiber(id: &str, s: [f64; 2], t: [f64; 2], r: f64) -> FiberPoint {
    let gf = build(id).unwrap();
    let g = gf.gamma();
    let at = |b: &genfun::BoxDomain, w: [f64; 2]| {
        v2(
            b.lo[0] + w[0] * (b.hi[0] - b.lo[0]),
            b.lo[1] + w[1] * (b.hi[1] - b.lo[1]),
        )
    };
    let (x, y) = (at(&g.x_box, s), at(&g.y_box, t));
    let (lo, hi) = g.inner_interval(x.as_slice(), y.as_slice());
    FiberPoint {
        x,
        y,
        z: lo + r * (hi - lo),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadratic_solve_is_closed_form(x in prop::array::uniform2(-0.9f64..0.9), p in prop::array::uniform2(-0.9f64..0.9), u in -1.0f64..1.0) {
        let gf = build("ot_quad").unwrap();
        let jet = JetPoint { x: v2(x[0], x[1]), u, p: v2(p[0], p[1]) };
        let s = solve_yz(gf.as_ref(), &jet, None, &Tolerances::default()).unwrap();
        prop_assert!((s.y[0] - x[0] - p[0]).abs() < 1e-10);
        prop_assert!((s.y[1] - x[1] - p[1]).abs() < 1e-10);
        prop_assert!((s.z + u + 0.5 * (p[0] * p[0] + p[1] * p[1])).abs() < 1e-10);
    }

    #[test]
    fn jets_round_trip(id in prop::sample::select(vec!["ot_quad", "ot_log", "ot_power", "synthetic_z"]),
                       s in prop::array::uniform2(unit()), t in prop::array::uniform2(unit()), r in unit()) {
        let gf = build(id).unwrap();
        let tol = Tolerances::default();
        let fp = fiber(id, s, t, r);
        let jet = jet_of(gf.as_ref(), &fp, &tol).unwrap();
        let sol = solve_yz(gf.as_ref(), &jet, None, &tol).unwrap();
        prop_assert!((&sol.y - &fp.y).amax() < 1e-9, "{id}: {:?} vs {:?}", sol.y, fp.y);
        prop_assert!((sol.z - fp.z).abs() < 1e-9);
    }

    #[test]
    fn gstar_inverts_and_decreases(id in prop::sample::select(vec!["ot_quad", "ot_log", "ot_power", "synthetic_z"]),
                                   s in prop::array::uniform2(unit()), t in prop::array::uniform2(unit()), r in unit()) {
        let gf = build(id).unwrap();
        let tol = Tolerances::default();
        let fp = fiber(id, s, t, r);
        let (x, y) = (fp.x.as_slice(), fp.y.as_slice());
        let u = gf.eval(x, y, fp.z);
        let closed = eval_gstar(gf.as_ref(), x, y, u, &tol).unwrap();
        let rooted = solve_gstar(gf.as_ref(), x, y, u, &tol).unwrap();
        prop_assert!((closed - fp.z).abs() < 1e-9);
        prop_assert!((rooted - fp.z).abs() < 1e-9);
        // g_z < 0, so the inverse decreases in u.
        let up = eval_gstar(gf.as_ref(), x, y, u + 1e-3, &tol).unwrap();
        prop_assert!(up < closed);
    }
}

#[test]
fn quadratic_q_map() {
    // Q = -g_y / g_z = x - y for g = -|x - y|^2 / 2 - z.
    let gf = build("ot_quad").unwrap();
    let fp = FiberPoint {
        x: v2(0.3, -0.2),
        y: v2(-0.4, 0.5),
        z: 0.1,
    };
    let q = map_q(gf.as_ref(), &fp, &Tolerances::default()).unwrap();
    assert_relative_eq!(q[0], 0.7, epsilon = 1e-12);
    assert_relative_eq!(q[1], -0.7, epsilon = 1e-12);
}

#[test]
fn out_of_range_values_are_rejected() {
    let gf = build("ot_quad").unwrap();
    let tol = Tolerances::default();
    let (x, y) = ([0.0, 0.0], [0.5, 0.0]);
    assert!(eval_gstar(gf.as_ref(), &x, &y, 100.0, &tol).is_err());
    assert!(solve_gstar(gf.as_ref(), &x, &y, 100.0, &tol).is_err());
    assert!(eval_gstar(gf.as_ref(), &x, &[5.0, 0.0], 0.0, &tol).is_err());
}
