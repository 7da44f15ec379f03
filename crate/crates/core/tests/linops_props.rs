use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostep::linops::*;
use twostep::vecops::dot;

fn vec_of(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_mask(rng: &mut ChaCha8Rng, d: usize) -> Vec<usize> {
    let mut m: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.3)).collect();
    if m.is_empty() {
        m.push(0);
    }
    m
}

fn operators(rng: &mut ChaCha8Rng, d1: usize, d2: usize) -> Vec<OperatorRef> {
    let d = d1 * d2;
    let dense: Vec<f64> = vec_of(rng, 15);
    let a: OperatorRef = Arc::new(DenseOperator::from_row_slice(3, 5, &dense).unwrap());
    let b: OperatorRef = Arc::new(DenseOperator::from_row_slice(3, 2, &dense[..6]).unwrap());
    let tv: OperatorRef = Arc::new(make_tv_operator(d1, d2).unwrap());
    let haar: OperatorRef = Arc::new(make_haar_undecimated(d1, d2).unwrap());
    let k: OperatorRef = Arc::new(make_partial_fourier(d1, d2, &random_mask(rng, d)).unwrap());
    vec![
        Arc::new(Identity::new(4)),
        a.clone(),
        Arc::new(Transposed(a.clone())),
        Arc::new(BlockRowOperator::new(vec![a.clone(), b.clone()]).unwrap()),
        Arc::new(SkewCoupling::from_blocks(vec![a, b]).unwrap()),
        Arc::new(make_difference_matrix(d1).unwrap()),
        tv.clone(),
        Arc::new(Transposed(tv)),
        haar.clone(),
        Arc::new(Transposed(haar)),
        k.clone(),
        Arc::new(Transposed(k)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn adjoint_identity(seed in any::<u64>(), h1 in 1usize..5, h2 in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for op in operators(&mut rng, 2 * h1, 2 * h2) {
            for _ in 0..5 {
                let u = vec_of(&mut rng, op.cols());
                let w = vec_of(&mut rng, op.rows());
                let lhs = dot(&op.forward(&u), &w);
                let rhs = dot(&u, &op.adjoint(&w));
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()), "{}: {lhs} vs {rhs}", op.label());
            }
        }
    }

    #[test]
    fn skew_coupling_is_skew(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: OperatorRef = Arc::new(DenseOperator::from_row_slice(4, 3, &vec_of(&mut rng, 12)).unwrap());
        let s = SkewCoupling::new(a);
        let v = vec_of(&mut rng, 7);
        prop_assert!(dot(&v, &s.forward(&v)).abs() <= 1e-10);
    }

    #[test]
    fn norm_estimate_never_exceeds_dense(seed in any::<u64>(), h1 in 1usize..4, h2 in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for op in operators(&mut rng, 2 * h1, 2 * h2) {
            let m = to_dense(op.as_ref());
            let exact = m.singular_values().max().powi(2);
            let tol = 1e-10;
            let est = op_norm_sq_est(op.as_ref(), tol, 20_000).unwrap();
            prop_assert!(est.value <= exact * (1.0 + tol) + tol, "{}: {} > {}", op.label(), est.value, exact);
        }
    }
}

/// `[I ⊗ D_{d1}; D_{d2} ⊗ I]` with the circulant difference `D`.
fn kron_tv(d1: usize, d2: usize) -> DMatrix<f64> {
    let diff = |r: usize| {
        DMatrix::from_fn(r, r, |i, j| {
            if i == j {
                1.0
            } else if j == (i + r - 1) % r {
                -1.0
            } else {
                0.0
            }
        })
    };
    let top = DMatrix::<f64>::identity(d2, d2).kronecker(&diff(d1));
    let bottom = diff(d2).kronecker(&DMatrix::<f64>::identity(d1, d1));
    let mut out = DMatrix::zeros(2 * d1 * d2, d1 * d2);
    out.rows_mut(0, d1 * d2).copy_from(&top);
    out.rows_mut(d1 * d2, d1 * d2).copy_from(&bottom);
    out
}

/// Naive orthonormal DFT samples, real parts then imaginary parts.
fn naive_fourier(d1: usize, d2: usize, mask: &[usize], u: &[f64]) -> Vec<f64> {
    let scale = 1.0 / ((d1 * d2) as f64).sqrt();
    let mut re = Vec::new();
    let mut im = Vec::new();
    for &idx in mask {
        let (kr, kc) = (idx % d1, idx / d1);
        let (mut sr, mut si) = (0.0, 0.0);
        for c in 0..d2 {
            for r in 0..d1 {
                let ph = -2.0
                    * std::f64::consts::PI
                    * ((kr * r) as f64 / d1 as f64 + (kc * c) as f64 / d2 as f64);
                sr += u[r + c * d1] * ph.cos();
                si += u[r + c * d1] * ph.sin();
            }
        }
        re.push(sr * scale);
        im.push(si * scale);
    }
    re.extend(im);
    re
}

#[test]
fn matrix_free_agrees_with_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (d1, d2) in [(2, 2), (4, 6), (8, 8)] {
        let u = vec_of(&mut rng, d1 * d2);
        let tv = make_tv_operator(d1, d2).unwrap();
        let want = kron_tv(d1, d2) * DVector::from_column_slice(&u);
        let got = tv.forward(&u);
        for i in 0..got.len() {
            assert!((got[i] - want[i]).abs() <= 1e-12);
        }
        let mask = random_mask(&mut rng, d1 * d2);
        let k = make_partial_fourier(d1, d2, &mask).unwrap();
        let got = k.forward(&u);
        let want = naive_fourier(d1, d2, &mask, &u);
        for i in 0..got.len() {
            assert!((got[i] - want[i]).abs() <= 1e-12);
        }
        for op in operators(&mut rng, d1, d2) {
            let dense = to_dense(op.as_ref());
            let x = vec_of(&mut rng, op.cols());
            let want = &dense * DVector::from_column_slice(&x);
            let got = op.forward(&x);
            for i in 0..got.len() {
                assert!((got[i] - want[i]).abs() <= 1e-12, "{}", op.label());
            }
        }
    }
}

#[test]
fn known_norms() {
    let tv = make_tv_operator(8, 8).unwrap();
    assert!((op_norm_sq_est(&tv, 1e-12, 10_000).unwrap().value - 8.0).abs() < 1e-6);
    let w = make_haar_undecimated(8, 8).unwrap();
    assert!((op_norm_sq_est(&w, 1e-12, 10_000).unwrap().value - 1.0).abs() < 1e-9);
    let k = make_partial_fourier(8, 8, &[0, 3, 9]).unwrap();
    assert!((op_norm_sq_est(&k, 1e-12, 10_000).unwrap().value - 1.0).abs() < 1e-9);
}
