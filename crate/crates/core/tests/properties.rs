use nalgebra::DVector;
use proptest::prelude::*;

use finchord::chord::{dedup_classes, solve_chord, ChordParams, ChordResult};
use finchord::curve::{chord_seed, energy, DiscreteCurve};
use finchord::domain::ImplicitDomain;
use finchord::metric::MetricSpec;
use finchord::penalty::{chi, chi_prime, lambda_recover, penalized_energy};

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

fn on_circle(t: f64) -> DVector<f64> {
    v2(t.cos(), t.sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn chi_prime_identity(delta in 1e-3f64..1.0, frac in 1e-3f64..0.999) {
        let t = delta * frac;
        let lhs = chi_prime(delta, t).unwrap();
        let rhs = 2.0 * delta / (t * (delta - t)) * chi(delta, t).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }

    #[test]
    fn chi_vanishes_inside(delta in 1e-3f64..1.0, t in -10.0f64..0.0) {
        prop_assert_eq!(chi(delta, t).unwrap(), 0.0);
        prop_assert_eq!(chi_prime(delta, t).unwrap(), 0.0);
    }

    #[test]
    fn recovered_lambda_is_nonpositive(wobble in proptest::collection::vec(-0.08f64..0.08, 15)) {
        let dom = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        // an arc hugging the circle, wobbling across the penalty layer
        let mut nodes = vec![v2(1.0, 0.0)];
        for (k, w) in wobble.iter().enumerate() {
            nodes.push(on_circle(std::f64::consts::PI * (k + 1) as f64 / 16.0) * (1.0 + w));
        }
        nodes.push(v2(-1.0, 0.0));
        let curve = DiscreteCurve::new(nodes).unwrap();
        let delta = 0.2;
        let lambda = lambda_recover(&dom, delta, &curve).unwrap();
        prop_assert!(lambda.iter().all(|l| *l <= 0.0));
        let m = MetricSpec::euclidean(2);
        prop_assert!(penalized_energy(&m, &dom, delta, &curve).unwrap() >= energy(&m, &curve).unwrap());
    }

    #[test]
    fn reversal_is_an_involution_and_orients_drift(beta in -0.6f64..0.6, t0 in 0.0f64..6.28, t1 in 0.0f64..6.28) {
        prop_assume!((t0 - t1).abs() > 0.2);
        let m = MetricSpec::euclidean(2);
        let dom = ImplicitDomain::unit_ball(2, 0.25).unwrap();
        let c = chord_seed(&dom, &on_circle(t0), &on_circle(t1), 16).unwrap();
        let twice = c.reverse().reverse();
        prop_assert_eq!(twice.nodes(), c.nodes());
        let e = energy(&m, &c).unwrap();
        prop_assert!((energy(&m, &c.reverse()).unwrap() - e).abs() <= 1e-13 * e);
        // a drift along x makes rightward travel dearer than leftward
        let r = MetricSpec::randers_euclidean(v2(beta, 0.0)).unwrap();
        let fwd = energy(&r, &c).unwrap();
        let bwd = energy(&r, &c.reverse()).unwrap();
        let dx = on_circle(t1)[0] - on_circle(t0)[0];
        prop_assert!((fwd - bwd) * beta * dx >= -1e-12);
    }

    #[test]
    fn curve_csv_round_trips_bit_exactly(xs in proptest::collection::vec(-1e3f64..1e3, 18)) {
        let nodes = xs.chunks(2).map(|p| v2(p[0], p[1])).collect();
        let c = DiscreteCurve::new(nodes).unwrap();
        let back = DiscreteCurve::<f64>::from_csv(&c.to_csv()).unwrap();
        prop_assert_eq!(back.nodes(), c.nodes());
    }

    #[test]
    fn randers_energy_is_two_homogeneous(b0 in -0.5f64..0.5, b1 in -0.5f64..0.5, v0 in -2.0f64..2.0, v1 in -2.0f64..2.0, s in 0.01f64..50.0) {
        prop_assume!(v0.abs() + v1.abs() > 1e-3);
        let m = MetricSpec::randers_euclidean(v2(b0, b1)).unwrap();
        let q = v2(0.1, 0.2);
        let v = v2(v0, v1);
        let g = m.eval_g(&q, &v).unwrap();
        prop_assert!((m.eval_g(&q, &(&v * s)).unwrap() - s * s * g).abs() <= 1e-12 * s * s * g);
    }
}

fn solved(m: &MetricSpec<f64>, t0: f64, t1: f64) -> ChordResult<f64> {
    let dom = ImplicitDomain::unit_ball(2, 0.25).unwrap();
    solve_chord(
        m,
        &dom,
        &on_circle(t0),
        &on_circle(t1),
        &ChordParams::default_for(0.25, 32),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dedup_is_symmetric_in_input_order(t0 in 0.0f64..3.0, t1 in 0.0f64..3.0) {
        prop_assume!((t0 - t1).abs() > 0.3);
        let m = MetricSpec::euclidean(2);
        let a = solved(&m, t0, t0 + 2.5);
        let b = solved(&m, t1, t1 + 2.5);
        let ab = dedup_classes(&[a.clone(), b.clone()], true, 1e-2).unwrap().len();
        let ba = dedup_classes(&[b, a.clone()], true, 1e-2).unwrap().len();
        prop_assert_eq!(ab, ba);
        // a chord and its reverse are one class exactly when reversible
        let mut rev = a.clone();
        rev.curve = a.curve.reverse();
        prop_assert_eq!(dedup_classes(&[a.clone(), rev.clone()], true, 1e-2).unwrap().len(), 1);
        prop_assert_eq!(dedup_classes(&[a, rev], false, 1e-2).unwrap().len(), 2);
    }
}
