use proptest::prelude::*;

use twostep::prox::*;
use twostep::vecops::{dist_sq, dot, sub};

fn vecs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

fn all_prox(n: usize, weights: &[f64], point: &[f64]) -> Vec<Box<dyn ProxFunction>> {
    vec![
        Box::new(WeightedL1::new(weights.to_vec()).unwrap()),
        Box::new(GroupL2Ball::new(n / 2, 1.3).unwrap()),
        Box::new(BoxIndicator::new(weights.to_vec()).unwrap()),
        Box::new(LinearFunctional::new(point.to_vec()).unwrap()),
        Box::new(PointIndicator::new(point.to_vec()).unwrap()),
        Box::new(Zero::new(n)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn firmly_nonexpansive(
        u in vecs(6), w in vecs(6), point in vecs(6),
        weights in prop::collection::vec(0.0f64..2.0, 6),
        gamma in 0.01f64..5.0,
    ) {
        for f in all_prox(6, &weights, &point) {
            let pu = f.prox(&u, gamma);
            let pw = f.prox(&w, gamma);
            let d = sub(&pu, &pw);
            let slack = dot(&d, &sub(&u, &w)) - dist_sq(&pu, &pw);
            prop_assert!(slack >= -1e-10, "{}: {slack}", f.label());
        }
    }

    #[test]
    fn projections_idempotent(
        u in vecs(6), weights in prop::collection::vec(0.0f64..2.0, 6), mu in 0.0f64..2.0,
    ) {
        let once = project_group_l2_ball(&u, mu, 3).unwrap();
        let twice = project_group_l2_ball(&once, mu, 3).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-14);
        }
        let once = project_box(&u, &weights).unwrap();
        prop_assert_eq!(project_box(&once, &weights).unwrap(), once.clone());
        for (v, r) in once.iter().zip(&weights) {
            if *r == 0.0 {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn moreau_point_and_linear(u in vecs(5), b in vecs(5), k in 0usize..3) {
        let beta = [0.5, 1.0, 2.0][k];
        let point = PointIndicator::new(b.clone()).unwrap();
        let lin = LinearFunctional::new(b.clone()).unwrap();
        let p = point.prox(&u, beta);
        let scaled: Vec<f64> = u.iter().map(|v| v / beta).collect();
        let q = lin.prox(&scaled, 1.0 / beta);
        for i in 0..u.len() {
            prop_assert!((p[i] + beta * q[i] - u[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn weighted_l1_matches_grid(u in -2.0f64..2.0, w in 0.0f64..1.5, gamma in 0.1f64..2.0) {
        let got = prox_weighted_l1(&[u], gamma, &[w]).unwrap()[0];
        let obj = |x: f64| 0.5 * (x - u).powi(2) + gamma * w * x.abs();
        let h = 1e-4;
        let mut best = (f64::INFINITY, 0.0);
        let mut x = -4.0;
        while x <= 4.0 {
            let v = obj(x);
            if v < best.0 {
                best = (v, x);
            }
            x += h;
        }
        prop_assert!((got - best.1).abs() <= h, "{got} vs {}", best.1);
    }
}

#[test]
fn kink_maps_to_zero() {
    assert_eq!(
        prox_weighted_l1(&[0.5, -0.5], 1.0, &[0.5, 0.5]).unwrap(),
        vec![0.0, 0.0]
    );
}
