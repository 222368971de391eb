mod common;

use common::*;
use jcas::metrics::{scnr_sense, surrogate_terms, utility_h};
use jcas::numerics::{dot, max_generalized_eigvec, vec_norm, CMatrix, HermitianMatrix, C64};
use jcas::optimizer::{init_state, update_aux, update_combiner};
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(a: &CMatrix) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(a.rows(), a.cols(), |i, j| Complex::new(a[(i, j)].re, a[(i, j)].im))
}

/// Top eigenpair of `B⁻¹A` through `L⁻¹ A L⁻ᴴ` and a dense Hermitian eigensolver.
fn dense_generalized_top(a: &CMatrix, b: &CMatrix) -> (f64, Vec<C64>) {
    let l = to_na(b).cholesky().expect("B positive definite").l();
    let l_inv = l.clone().try_inverse().unwrap();
    let c = &l_inv * to_na(a) * l_inv.adjoint();
    let c = (&c + c.adjoint()) * Complex::new(0.5, 0.0);
    let eig = c.symmetric_eigen();
    let (idx, &value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .unwrap();
    let y: DVector<Complex<f64>> = eig.eigenvectors.column(idx).into_owned();
    let x = l_inv.adjoint() * y;
    (value, x.iter().map(|z| C64::new(z.re, z.im)).collect())
}

#[test]
fn generalized_eigenvector_matches_dense_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..25 {
        let p = random_matrix(4, 4, &mut rng);
        let q = random_matrix(4, 4, &mut rng);
        let a = p.matmul(&p.adjoint());
        let mut b = q.matmul(&q.adjoint());
        for i in 0..4 {
            b[(i, i)] += C64::new(0.1, 0.0);
        }
        let (value, vector) = dense_generalized_top(&a, &b);
        let got = max_generalized_eigvec(
            &HermitianMatrix::hermitian_part(&a),
            &HermitianMatrix::hermitian_part(&b),
        )
        .unwrap();
        assert!((got.value - value).abs() <= 1e-8 * value, "{} vs {}", got.value, value);
        let cos = dot(&vector, &got.vector).norm() / (vec_norm(&vector) * vec_norm(&got.vector));
        assert!(1.0 - cos <= 1e-8, "direction mismatch, cos = {cos}");
    }
}

#[test]
fn sensing_ratio_agrees_with_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..30 {
        let scn = desk(seed);
        let w = random_precoder(&scn, &mut rng);
        let f = random_matrix(scn.nr(), scn.m(), &mut rng);
        for (a, b) in scnr_sense(&scn, &w, &f).unwrap().iter().zip(naive_scnr(&scn, &w, &f)) {
            assert!((a - b).abs() <= 1e-10 * b, "{a} vs {b}");
        }
    }
}

#[test]
fn utility_composes_worst_user_and_worst_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..30 {
        let scn = desk(seed);
        let w = random_precoder(&scn, &mut rng);
        let f = random_matrix(scn.nr(), scn.m(), &mut rng);
        for delta in [0.0, 0.3, 1.0, 25.0] {
            let a = utility_h(&scn, &w, &f, delta).unwrap();
            let b = naive_utility(&scn, &w, &f, delta);
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }
    assert!(utility_h(&desk(0), &desk(0).h, &random_matrix(8, 2, &mut rng), -1.0).is_err());
}

#[test]
fn surrogate_terms_peak_at_the_rate_over_their_auxiliaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..20 {
        let scn = desk(seed);
        let w = random_precoder(&scn, &mut rng);
        let f = random_matrix(scn.nr(), scn.m(), &mut rng);
        let aux = update_aux(&scn, &w, &f, 10.0, 10.0).unwrap();
        let (o_c, o_s) = surrogate_terms(&scn, &w, &f, &aux).unwrap();
        let sinr = naive_sinr(&scn, &w);
        let scnr = naive_scnr(&scn, &w, &f);
        for k in 0..scn.k() {
            assert!((o_c[k] - sinr[k].ln_1p()).abs() <= 1e-10);
        }
        for m in 0..scn.m() {
            assert!((o_s[m] - scnr[m].ln_1p()).abs() <= 1e-10);
        }
        // Any other auxiliary choice gives a lower bound.
        for _ in 0..20 {
            let mut other = aux.clone();
            for k in 0..scn.k() {
                other.xi_c[k] *= rng.gen_range(0.5..1.5);
                other.theta_c[k] += C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * aux.theta_c[k].norm() * 0.3;
            }
            for m in 0..scn.m() {
                other.xi_s[m] *= rng.gen_range(0.5..1.5);
                for k in 0..scn.k() {
                    other.theta_s[(m, k)] *= C64::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
                }
            }
            let (p_c, p_s) = surrogate_terms(&scn, &w, &f, &other).unwrap();
            for k in 0..scn.k() {
                assert!(p_c[k] <= o_c[k] + 1e-12);
            }
            for m in 0..scn.m() {
                assert!(p_s[m] <= o_s[m] + 1e-12);
            }
        }
    }
}

#[test]
fn closed_form_combiner_is_a_local_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for seed in 0..10 {
        let scn = desk(seed);
        let w = random_precoder(&scn, &mut rng);
        let f0 = random_matrix(scn.nr(), scn.m(), &mut rng);
        let aux = update_aux(&scn, &w, &f0, 10.0, 10.0).unwrap();
        let f = update_combiner(&scn, &w, &aux).unwrap();
        for m in 0..scn.m() {
            let best = naive_o_sm(&scn, &w, &f, &aux, m);
            let norm = vec_norm(&f.column(m));
            for _ in 0..50 {
                let d = random_matrix(scn.nr(), 1, &mut rng);
                let eps = 1e-3 * norm / vec_norm(&d.column(0));
                let mut probe = f.clone();
                let col: Vec<C64> = f.column(m).iter().zip(d.column(0)).map(|(a, b)| a + b * eps).collect();
                probe.set_column(m, &col);
                assert!(naive_o_sm(&scn, &w, &probe, &aux, m) <= best + 1e-12 * best.abs().max(1.0));
            }
        }
    }
}

#[test]
fn initial_combiner_beats_random_combiners() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for seed in 0..10 {
        let scn = desk(seed);
        let init = init_state(&scn).unwrap();
        let best = naive_scnr(&scn, &init.w, &init.f);
        for _ in 0..50 {
            let f = random_matrix(scn.nr(), scn.m(), &mut rng);
            for (r, b) in naive_scnr(&scn, &init.w, &f).iter().zip(&best) {
                assert!(r <= &(b * (1.0 + 1e-9)));
            }
        }
    }
}
