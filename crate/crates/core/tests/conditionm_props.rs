mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use common::*;
use twostep::conditionm::*;
use twostep::engine::Family;
use twostep::linops::to_dense;

fn dense_blocks(p: &twostep::engine::BlockProblem) -> Vec<DMatrix<f64>> {
    p.operators().iter().map(|a| to_dense(a.as_ref())).collect()
}

fn closed_form_families() -> Vec<Family> {
    vec![
        Family::PdPrimalFirst,
        Family::PdDualFirst,
        Family::TwoStepImplicit,
        Family::TwoStepExplicit,
        Family::Hybrid {
            implicit_blocks: [0, 2].into_iter().collect(),
        },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn certified_implies_condition_m(seed in any::<u64>(), fam_idx in 0usize..5, frac in 0.05f64..0.99, beta in 0.2f64..5.0) {
        let mut r = rng(seed);
        let p = random_instance(&mut r);
        let fam = closed_form_families()[fam_idx].clone();
        let ops = p.operators();
        let alphas = suggest_step_sizes(&fam, &ops, beta, frac).unwrap();
        let cert = certify_step_sizes(&fam, &ops, &alphas, beta).unwrap();
        prop_assert!(cert.is_certified(), "{fam}: {:?}", cert.note);
        let ms = build_matrix_set(&fam, &dense_blocks(&p), &alphas, beta).unwrap();
        let rep = check_condition_m(&ms).unwrap();
        prop_assert!(rep.passed, "{fam}: contraction {} lambda_min {}", rep.contraction_norm, rep.h_min_eigenvalue);
    }

    #[test]
    fn verdict_invariant_under_scaling(seed in any::<u64>(), c in 0.01f64..100.0, frac in 0.1f64..1.9) {
        let mut r = rng(seed);
        let p = random_instance(&mut r);
        let fam = Family::TwoStepExplicit;
        let alphas: Vec<f64> = suggest_step_sizes(&fam, &p.operators(), 1.0, 0.5)
            .unwrap()
            .iter()
            .map(|a| 2.0 * a * frac)
            .collect();
        let ms = build_matrix_set(&fam, &dense_blocks(&p), &alphas, 1.0).unwrap();
        let base = check_condition_m(&ms).unwrap();
        let scaled = check_condition_m(&ms.scaled(c)).unwrap();
        prop_assert_eq!(base.passed, scaled.passed);
        if base.contraction_norm.is_finite() {
            prop_assert!((base.contraction_norm - scaled.contraction_norm).abs() <= 1e-8 * (1.0 + base.contraction_norm));
        } else {
            prop_assert_eq!(scaled.contraction_norm, f64::INFINITY);
        }
    }

    #[test]
    fn mtilde_norm_ignores_beta(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = random_instance(&mut r);
        let ops = p.operators();
        let reference = mtilde_norm(&ops).unwrap().value;
        let dense = dense_blocks(&p);
        let alphas = vec![0.1; 3];
        for beta in [0.5, 1.0, 2.0] {
            // M̃₂ = M₂ / β for the implicit family, restricted to the x block.
            let ms = build_matrix_set(&Family::TwoStepImplicit, &dense, &alphas, beta).unwrap();
            let n = p.n();
            let m2 = ms.m2.view((0, 0), (n, n)).into_owned() / beta;
            let exact = m2.singular_values().max();
            prop_assert!((exact - reference).abs() <= 1e-6 * (1.0 + exact), "{exact} vs {reference}");
        }
    }
}

#[test]
fn explicit_single_block_bound() {
    let a = dense(2, 2, &[2.0, 0.0, 0.0, 2.0]);
    let ok = certify_step_sizes(
        &Family::TwoStepExplicit,
        std::slice::from_ref(&a),
        &[0.2],
        1.0,
    )
    .unwrap();
    assert!(ok.is_certified());
    let bad = certify_step_sizes(&Family::TwoStepExplicit, &[a], &[0.26], 1.0).unwrap();
    assert_eq!(bad.status, CertStatus::Rejected);
}

#[test]
fn asymmetric_h_is_a_structure_error() {
    let m0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
    let z = DMatrix::zeros(2, 2);
    let ms = MatrixSet::new(m0.clone(), m0, z).unwrap();
    assert!(matches!(
        check_condition_m(&ms),
        Err(twostep::Error::Structure(_))
    ));
}
