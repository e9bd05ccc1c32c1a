use nalgebra::DMatrix;
use proptest::prelude::*;

use rclab::control::vertical_lift;
use rclab::dynamics::{ChartSystem, VectorField};
use rclab::expr::{eval2, parse, BinOp, Expr, Func, SymbolTable};
use rclab::geometry::{max_abs, pullback_form, DoubleTangentVector, PointMap, TangentPoint, TwoFormAtPoint};
use rclab::reduction::{point_reduce, ReduceOptions};
use rclab::symmetry::{coadjoint_plus_form, SymmetrySpec};
use rclab::sysdef::{load, Loaded, LoadedSystem, BUILTIN_SYSTEMS};

fn table() -> SymbolTable {
    SymbolTable::new(&["x", "y"], &[("a", 1.5), ("b", -0.25)]).unwrap()
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0f64..1e6).prop_map(Expr::Const),
        (1e-9f64..1e-3).prop_map(Expr::Const),
        (0u32..50).prop_map(|n| Expr::Const(n as f64)),
        Just(Expr::Pi),
        (0usize..4).prop_map(Expr::Var),
        (0usize..2).prop_map(Expr::Param),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    let ops = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow];
    leaf().prop_recursive(5, 48, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            (prop::sample::select(ops.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            (prop::sample::select(Func::ALL.to_vec()), inner).prop_map(|(f, a)| Expr::call(f, a)),
        ]
    })
}

fn builtin(i: usize) -> LoadedSystem {
    match load(BUILTIN_SYSTEMS[i]).unwrap() {
        Loaded::Full(s) => s,
        Loaded::Reduced(_) => unreachable!(),
    }
}

/// A point of the system's box from unit-interval coordinates.
fn point_in_box(s: &LoadedSystem, u: &[f64]) -> TangentPoint {
    let space = s.rcl.sys.space();
    let n = space.dim();
    let at = |b: &rclab::geometry::Interval, t: f64| b.lo + t * (b.hi - b.lo);
    let q = (0..n).map(|i| at(&space.q_box()[i], u[i])).collect();
    let qd = (0..n).map(|i| at(&space.qdot_box()[i], u[n + i])).collect();
    TangentPoint::new(q, qd)
}

fn antisymmetric(n: usize, entries: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            m[(i, j)] = entries[k];
            m[(j, i)] = -entries[k];
            k += 1;
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse_is_identity(e in expr()) {
        let t = table();
        let printed = e.display(&t).to_string();
        prop_assert_eq!(parse(&printed, &t).unwrap(), e, "{}", printed);
    }

    #[test]
    fn eval2_is_bit_deterministic(e in expr(), p in prop::collection::vec(-3.0f64..3.0, 4)) {
        let t = table();
        let params = t.param_values();
        let bits = |d: &rclab::expr::Dual2| {
            let mut v = vec![d.value.to_bits()];
            v.extend(d.gradient.iter().map(|g| g.to_bits()));
            v.extend(d.hessian.iter().map(|h| h.to_bits()));
            v
        };
        match (eval2(&e, &t, &p, &params), eval2(&e, &t, &p, &params)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(bits(&a), bits(&b)),
            (Err(a), Err(b)) => prop_assert_eq!(a, b),
            _ => prop_assert!(false, "outcomes differ"),
        }
    }

    #[test]
    fn legendre_round_trip_in_box(i in 0usize..4, u in prop::collection::vec(0.0f64..1.0, 4)) {
        let s = builtin(i);
        let l = &s.rcl.sys;
        let v = point_in_box(&s, &u);
        let back = l.inverse_legendre(&l.legendre_transform(&v).unwrap(), None).unwrap();
        let d = back.state().iter().zip(v.state()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(d <= 1e-10, "{d:e}");
    }

    #[test]
    fn lagrangian_form_is_exactly_antisymmetric(i in 0usize..4, u in prop::collection::vec(0.0f64..1.0, 4)) {
        let s = builtin(i);
        let m = s.rcl.sys.lagrangian_two_form(&point_in_box(&s, &u)).unwrap().matrix;
        prop_assert!(m.clone() == -m.transpose());
    }

    #[test]
    fn pullback_preserves_antisymmetry(
        omega in prop::collection::vec(-5.0f64..5.0, 6),
        jac in prop::collection::vec(-5.0f64..5.0, 16),
    ) {
        let form = TwoFormAtPoint::new(vec![0.0; 4], antisymmetric(4, &omega)).unwrap();
        let j = DMatrix::from_column_slice(4, 4, &jac);
        let m = pullback_form(&j, &form, vec![0.0; 4]).matrix;
        prop_assert!(m.clone() == -m.transpose());
    }

    #[test]
    fn pullback_by_inverse_restores_form(
        omega in prop::collection::vec(-5.0f64..5.0, 6),
        jac in prop::collection::vec(-0.4f64..0.4, 16),
    ) {
        // identity plus a small perturbation stays well conditioned
        let j = DMatrix::identity(4, 4) + DMatrix::from_column_slice(4, 4, &jac) * 0.5;
        let form = TwoFormAtPoint::new(vec![0.0; 4], antisymmetric(4, &omega)).unwrap();
        let there = pullback_form(&j, &form, vec![0.0; 4]);
        let back = pullback_form(&j.clone().try_inverse().unwrap(), &there, vec![0.0; 4]);
        prop_assert!(max_abs((back.matrix - &form.matrix).iter().copied()) <= 1e-10);
    }

    #[test]
    fn two_form_is_bilinear(
        omega in prop::collection::vec(-5.0f64..5.0, 6),
        u in prop::collection::vec(-2.0f64..2.0, 4),
        v in prop::collection::vec(-2.0f64..2.0, 4),
        w in prop::collection::vec(-2.0f64..2.0, 4),
        c in -3.0f64..3.0,
    ) {
        let f = TwoFormAtPoint::new(vec![0.0; 4], antisymmetric(4, &omega)).unwrap();
        prop_assert!((f.eval(&u, &v) + f.eval(&v, &u)).abs() <= 1e-12);
        let mixed: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + c * b).collect();
        let lhs = f.eval(&mixed, &v);
        prop_assert!((lhs - f.eval(&u, &v) - c * f.eval(&w, &v)).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn tangent_lifts_compose(z in prop::collection::vec(-1.0f64..1.0, 4), dz in prop::collection::vec(-1.0f64..1.0, 4)) {
        let scale = PointMap::new(&["x", "y"], &["X", "Y"], &["2*x", "3*y"], None, &[]).unwrap();
        let shift = PointMap::new(&["X", "Y"], &["U", "V"], &["X + Y^3/10", "Y - X^3/5"], None, &[]).unwrap();
        let both = scale.then(&shift).unwrap();
        let v = TangentPoint::from_state(&z);
        let one = both.tangent_lift(&v).unwrap().state();
        let two = shift.tangent_lift(&scale.tangent_lift(&v).unwrap()).unwrap().state();
        prop_assert!(one.iter().zip(&two).all(|(a, b)| (a - b).abs() <= 1e-10));
        let w = DoubleTangentVector::new(v, dz[..2].to_vec(), dz[2..].to_vec());
        let one = both.double_tangent_lift(&w).unwrap().components();
        let two = shift.double_tangent_lift(&scale.double_tangent_lift(&w).unwrap()).unwrap().components();
        prop_assert!(max_abs((one - two).iter().copied()) <= 1e-10);
    }

    #[test]
    fn vertical_lifts_are_vertical(z in prop::collection::vec(-1e3f64..1e3, 6), w in prop::collection::vec(-1e3f64..1e3, 3)) {
        let lifted = vertical_lift(&TangentPoint::from_state(&z), &w);
        prop_assert!(lifted.is_vertical());
        prop_assert!(lifted.dq.iter().all(|&x| x == 0.0));
        prop_assert_eq!(lifted.dqdot, w);
    }

    #[test]
    fn plus_form_is_bilinear_and_antisymmetric(
        nu in prop::collection::vec(-2.0f64..2.0, 3),
        xi in prop::collection::vec(-2.0f64..2.0, 3),
        eta in prop::collection::vec(-2.0f64..2.0, 3),
        zeta in prop::collection::vec(-2.0f64..2.0, 3),
        c in -3.0f64..3.0,
    ) {
        let so3 = SymmetrySpec::so3();
        let f = |a: &[f64], b: &[f64]| coadjoint_plus_form(&so3, &nu, a, b);
        prop_assert!((f(&xi, &eta) + f(&eta, &xi)).abs() <= 1e-12);
        prop_assert_eq!(f(&xi, &xi), 0.0);
        let mixed: Vec<f64> = xi.iter().zip(&zeta).map(|(a, b)| a + c * b).collect();
        prop_assert!((f(&mixed, &eta) - f(&xi, &eta) - c * f(&zeta, &eta)).abs() <= 1e-12);
        prop_assert_eq!(coadjoint_plus_form(&SymmetrySpec::abelian_algebra(3), &nu, &xi, &eta), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduced_field_does_not_depend_on_section(
        offset in -6.0f64..6.0,
        shear in -1.0f64..1.0,
        mu in 0.5f64..1.5,
        u in prop::collection::vec(0.0f64..1.0, 2),
    ) {
        let s = builtin(2);
        let spec = s.symmetry.clone().unwrap();
        let red = point_reduce(&s.rcl, &spec, &[mu], ReduceOptions::default()).unwrap();
        let other = red.with_section(vec![offset], DMatrix::from_element(1, 1, shear)).unwrap();
        let space = red.space();
        let x = TangentPoint::new(
            vec![space.q_box()[0].lo + u[0] * space.q_box()[0].width()],
            vec![space.qdot_box()[0].lo + u[1] * space.qdot_box()[0].width()],
        );
        let a = red.field().eval(&x).unwrap().components();
        let b = other.field().eval(&x).unwrap().components();
        prop_assert!(max_abs((a - b).iter().copied()) <= 1e-9);
        let fa = red.reduced_two_form(&x).unwrap().matrix;
        let fb = other.reduced_two_form(&x).unwrap().matrix;
        prop_assert!(max_abs((fa - fb).iter().copied()) <= 1e-9);
    }
}
