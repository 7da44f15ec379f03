mod common;

use std::sync::Arc;

use proptest::prelude::*;

use common::*;
use twostep::diagnostics::*;
use twostep::engine::{
    solve, AlgorithmSpec, Block, BlockProblem, Control, Family, IterateState, StopCriteria,
};
use twostep::prox::{ProxFunction, WeightedL1, Zero};

/// Random 3-block instance whose objective is finite everywhere.
fn finite_instance(seed: u64) -> BlockProblem {
    use rand::Rng;
    let mut r = rng(seed);
    let m = r.random_range(2..=5);
    let blocks = (0..3)
        .map(|i| {
            let n = r.random_range(1..=4);
            let data: Vec<f64> = (0..m * n).map(|_| r.random_range(-1.0..1.0)).collect();
            let f: Arc<dyn ProxFunction> = if i == 1 {
                Arc::new(Zero::new(n))
            } else {
                Arc::new(
                    WeightedL1::new((0..n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap(),
                )
            };
            Block::new(f, dense(m, n, &data))
        })
        .collect();
    BlockProblem::new(blocks, (0..m).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gap_pair_is_nonnegative(seed in any::<u64>()) {
        let p = finite_instance(seed);
        let mut r = rng(seed ^ 0x5555);
        let a = random_state(&mut r, &p);
        let b = random_state(&mut r, &p);
        let g1 = partial_gap(a.x(), a.y(), &GapQuery::from_state(&b), &p).unwrap();
        let g2 = partial_gap(b.x(), b.y(), &GapQuery::from_state(&a), &p).unwrap();
        prop_assert!(g1 + g2 >= -1e-10, "{g1} + {g2}");
    }
}

#[test]
fn gap_at_reference_is_zero() {
    let p = finite_instance(3);
    let st = random_state(&mut rng(4), &p);
    let g = partial_gap(st.x(), st.y(), &GapQuery::from_state(&st), &p).unwrap();
    assert!(g.abs() < 1e-12);
}

#[test]
fn rate_report_on_lp_instance() {
    let p = lp_instance();
    let fam = Family::TwoStepExplicit;
    let spec = AlgorithmSpec::new(fam.clone(), reasonable_alphas(&fam, &p, 0.9), 1.0);
    let out = solve(
        &p,
        &spec,
        IterateState::zeros(&p),
        &StopCriteria::iterations(2000),
        |_, _| Control::Continue,
    )
    .unwrap();
    let rep = rate_report(&out.trace.step_norms()).unwrap();
    assert!(rep.bounded && rep.vanishing);
    let mut csv = Vec::new();
    write_rate_csv(&rep, None, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 2001);
}

#[test]
fn rate_report_flags_growth() {
    let a: Vec<f64> = (1..=200).map(|k| 1.0 / (k as f64).sqrt()).collect();
    let rep = rate_report(&a).unwrap();
    assert!(!rep.bounded);
    assert!(rate_report(&a[..50]).is_err());
}

#[test]
fn ergodic_mean_matches_batch() {
    let hist: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 1.0]).collect();
    let batch = ergodic_average(&hist).unwrap();
    let mut m = ErgodicMean::new(2);
    for v in &hist[2..] {
        m.push(v).unwrap();
    }
    assert_eq!(m.mean().unwrap(), batch);
}
