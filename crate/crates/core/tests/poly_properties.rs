use proptest::prelude::*;
use sosguard::poly::Polynomial;

fn poly2() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(((0u32..4, 0u32..4), -2.0f64..2.0), 0..8).prop_map(|terms| {
        let exps: Vec<([u32; 2], f64)> = terms.into_iter().map(|((a, b), c)| ([a, b], c)).collect();
        let refs: Vec<(&[u32], f64)> = exps.iter().map(|(e, c)| (e.as_slice(), *c)).collect();
        Polynomial::from_exps(2, &refs)
    })
}

fn point() -> impl Strategy<Value = [f64; 2]> {
    (-1.5f64..1.5, -1.5f64..1.5).prop_map(|(x, y)| [x, y])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn arithmetic_commutes_with_evaluation(p in poly2(), q in poly2(), x in point()) {
        let (pv, qv) = (p.evaluate(&x).unwrap(), q.evaluate(&x).unwrap());
        prop_assert!(close(p.add(&q).unwrap().evaluate(&x).unwrap(), pv + qv));
        prop_assert!(close(p.sub(&q).unwrap().evaluate(&x).unwrap(), pv - qv));
        prop_assert!(close(p.mul(&q).unwrap().evaluate(&x).unwrap(), pv * qv));
        prop_assert!(close(p.scale(-0.7).evaluate(&x).unwrap(), -0.7 * pv));
    }

    #[test]
    fn compose_matches_nested_evaluation(p in poly2(), f in poly2(), g in poly2(), x in point()) {
        let inner = [f.evaluate(&x).unwrap(), g.evaluate(&x).unwrap()];
        let composed = p.compose(&[f, g]).unwrap();
        prop_assert!(close(composed.evaluate(&x).unwrap(), p.evaluate(&inner).unwrap()));
    }

    #[test]
    fn derivative_matches_central_difference(p in poly2(), x in point()) {
        let h = 1e-6;
        let d = p.partial_derivative(0).evaluate(&x).unwrap();
        let fd = (p.evaluate(&[x[0] + h, x[1]]).unwrap() - p.evaluate(&[x[0] - h, x[1]]).unwrap()) / (2.0 * h);
        prop_assert!((d - fd).abs() <= 1e-5 * (1.0 + d.abs()));
    }

    #[test]
    fn truncation_keeps_low_degree_terms(p in poly2(), k in 0u32..7) {
        let t = p.truncate(k);
        prop_assert!(t.degree() <= k);
        let rest = p.sub(&t).unwrap();
        prop_assert!(rest.terms().all(|(m, _)| m.degree() > k));
    }

    #[test]
    fn text_round_trip(p in poly2()) {
        let back = Polynomial::parse(&p.to_string(), 2).unwrap();
        prop_assert!(back.max_coeff_diff(&p) <= 1e-12 * (1.0 + p.max_abs_coeff()));
    }
}
