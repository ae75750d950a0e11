use genfun::gconvex::{
    g_biconjugate, g_normal_map, g_transform, is_g_convex, seeded_affines, GAffine, Grid,
    SampledFunction,
};
use genfun::{build, Tolerances, Vector};
use proptest::prelude::*;

fn square(n: usize) -> Grid {
    Grid::new(
        Vector::from_vec(vec![-1.0, -1.0]),
        Vector::from_vec(vec![1.0, 1.0]),
        vec![n, n],
    )
    .unwrap()
}

/// `a |x|^2 + b·x` sampled on `grid`, plus a bump making it non-convex
/// when `bump > 0`.
fn quadratic(grid: Grid, a: f64, b: [f64; 2], bump: f64) -> SampledFunction {
    SampledFunction::from_fn(grid, move |x| {
        a * x.norm_squared() + b[0] * x[0] + b[1] * x[1] + bump * (-8.0 * x.norm_squared()).exp()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn envelope_lies_below(a in 0.0f64..1.0, b in prop::array::uniform2(-0.5f64..0.5), bump in 0.0f64..0.5) {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let u = quadratic(square(13), a, b, bump);
        let uss = g_biconjugate(gf.as_ref(), &u, &square(13), &tol).unwrap();
        for i in u.active_indices() {
            prop_assert!(uss.values[i] <= u.values[i] + 1e-12);
        }
        // Idempotent: the envelope is its own envelope.
        let u4 = g_biconjugate(gf.as_ref(), &uss, &square(13), &tol).unwrap();
        for i in uss.active_indices() {
            prop_assert!((u4.values[i] - uss.values[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_reverses_order(a in 0.0f64..1.0, b in prop::array::uniform2(-0.2f64..0.2), lift in 0.0f64..0.2) {
        let gf = build("synthetic_z").unwrap();
        let tol = Tolerances::default();
        // Small values on a small grid keep every target attainable: z is
        // confined to (-1, 1).
        let grid = Grid::new(Vector::from_vec(vec![-0.5, -0.5]), Vector::from_vec(vec![0.5, 0.5]), vec![11, 11]).unwrap();
        let small = quadratic(grid.clone(), 0.2 * a, b, 0.0);
        let big = SampledFunction::from_fn(grid.clone(), |x| small.values[small.grid.nearest(x)] + lift * (1.0 + x[0] * x[0]));
        let vs = g_transform(gf.as_ref(), &small, &grid, &tol).unwrap();
        let vb = g_transform(gf.as_ref(), &big, &grid, &tol).unwrap();
        for j in 0..grid.len() {
            if vs.values[j].is_finite() && vb.values[j].is_finite() {
                prop_assert!(vb.values[j] <= vs.values[j] + 1e-12);
            }
        }
    }

    #[test]
    fn constants_shift_quadratic_transforms(c in -0.5f64..0.5, a in 0.0f64..1.0) {
        // g* = -|x - y|^2 / 2 - u, so adding c to u subtracts c from v.
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let u = quadratic(square(9), a, [0.0, 0.0], 0.0);
        let shifted = SampledFunction::from_fn(square(9), |x| a * x.norm_squared() + c);
        let v = g_transform(gf.as_ref(), &u, &square(9), &tol).unwrap();
        let w = g_transform(gf.as_ref(), &shifted, &square(9), &tol).unwrap();
        for j in 0..v.grid.len() {
            prop_assert!((w.values[j] - (v.values[j] - c)).abs() < 1e-12);
        }
    }

    #[test]
    fn supports_stay_below(seed in 0u64..500, node in 0usize..121) {
        let gf = build("ot_quad").unwrap();
        let tol = Tolerances::default();
        let grid = square(11);
        let u = SampledFunction::max_of_affines(gf.as_ref(), grid.clone(), &seeded_affines(gf.as_ref(), &grid, &grid, 3, seed)).unwrap();
        let nm = g_normal_map(gf.as_ref(), &u, node, &grid, None, &tol).unwrap();
        prop_assert!(!nm.supports.is_empty());
        let lip = u.lipschitz();
        for s in &nm.supports {
            for i in u.active_indices() {
                let gx = gf.eval(grid.node(i).as_slice(), s.y.as_slice(), s.z);
                prop_assert!(gx <= u.values[i] + 2.0 * lip * grid.h() + 1e-9);
            }
            let at = gf.eval(nm.x0.as_slice(), s.y.as_slice(), s.z);
            prop_assert!((at - nm.u0).abs() < 1e-9);
        }
    }
}

#[test]
fn max_of_affines_is_g_convex_and_bumps_are_not() {
    let gf = build("ot_quad").unwrap();
    let tol = Tolerances::default();
    let grid = square(17);
    let affines = [
        GAffine {
            y: Vector::from_vec(vec![0.5, 0.0]),
            z: 0.0,
        },
        GAffine {
            y: Vector::from_vec(vec![-0.5, 0.25]),
            z: 0.1,
        },
    ];
    let u = SampledFunction::max_of_affines(gf.as_ref(), grid.clone(), &affines).unwrap();
    assert!(is_g_convex(gf.as_ref(), &u, &grid, None, &tol)
        .unwrap()
        .holds());
    let bumped = quadratic(grid.clone(), 0.5, [0.0, 0.0], 0.5);
    assert!(is_g_convex(gf.as_ref(), &bumped, &grid, None, &tol)
        .unwrap()
        .fails());
}
