//! Minimal dense linear algebra over a generic scalar.
//!
//! The model dimensions in this crate are tiny (p, q, r are single digits),
//! so the routines here are plain loops with deterministic behavior across
//! runs and platforms, which the seeded studies rely on.

mod cholesky;
mod eigen;
mod mat;

pub use cholesky::{gauss_jordan_inverse, log_abs_det, Cholesky};
pub use eigen::{sym_eigen, sym_min_eigenvalue, sym_sqrt, SymEigen};
pub use mat::{add_vec, dot, norm2, outer, scale_vec, sub_vec, Mat};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::RandScalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {b}, got {a} (tol {tol})"
        );
    }

    fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat<f64> {
        Mat::from_fn(r, c, |_, _| f64::standard_normal(rng))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Mat<f64> {
        let a = random_mat(rng, n, n);
        let mut s = a.tr_matmul(&a);
        for i in 0..n {
            s[(i, i)] += 0.5 + n as f64 * 0.1;
        }
        s
    }

    #[test]
    fn matmul_against_known_product() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Mat::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let p = &a * &b;
        assert_eq!(p.row(0), &[19.0, 22.0]);
        assert_eq!(p.row(1), &[43.0, 50.0]);
        let q = a.tr_matmul(&b);
        assert_eq!(q.row(0), &[26.0, 30.0]);
        assert_eq!(q.row(1), &[38.0, 44.0]);
    }

    #[test]
    fn cholesky_reconstructs_and_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=6 {
            let a = random_spd(&mut rng, n);
            let ch = Cholesky::new(&a).unwrap();
            let l = ch.lower();
            let rec = l.matmul(&l.transpose());
            assert!((&rec - &a).max_abs() < 1e-10);

            let b: Vec<f64> = (0..n).map(|i| i as f64 + 0.5).collect();
            let x = ch.solve_vec(&b);
            let back = a.mul_vec(&x);
            for i in 0..n {
                assert_close(back[i], b[i], 1e-9);
            }

            let inv = ch.inverse();
            let eye = a.matmul(&inv);
            assert!((&eye - &Mat::identity(n)).max_abs() < 1e-9);

            let gj = gauss_jordan_inverse(&a).unwrap();
            assert!((&gj - &inv).max_abs() < 1e-8);

            let ld = ch.log_det();
            let ld_lu = log_abs_det(&a).unwrap();
            assert_close(ld, ld_lu, 1e-9);

            let qf = ch.inv_quad_form(&b);
            let expect = dot(&b, &inv.mul_vec(&b));
            assert_close(qf, expect, 1e-9);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(Cholesky::new(&a).is_err());
    }

    #[test]
    fn cholesky_handles_empty_matrix() {
        let a = Mat::<f64>::zeros(0, 0);
        let ch = Cholesky::new(&a).unwrap();
        assert_eq!(ch.log_det(), 0.0);
    }

    #[test]
    fn sym_eigen_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=6 {
            let a = {
                let m = random_mat(&mut rng, n, n);
                m.symmetrized()
            };
            let e = sym_eigen(&a);
            let rec = e.map_rebuild(|l| l);
            assert!((&rec - &a).max_abs() < 1e-10, "n={n}");
            // Orthonormal eigenvectors.
            let vtv = e.vectors.tr_matmul(&e.vectors);
            assert!((&vtv - &Mat::identity(n)).max_abs() < 1e-10);
            // Sorted descending.
            for k in 1..n {
                assert!(e.values[k - 1] >= e.values[k]);
            }
        }
    }

    #[test]
    fn sym_eigen_sqrt_squares_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(&mut rng, 4);
        let s = sym_eigen(&a).sqrt();
        assert!((&s.matmul(&s) - &a).max_abs() < 1e-9);
        assert!(s.is_symmetric(1e-12));
    }

    #[test]
    fn pseudo_inverse_of_singular_matrix() {
        // Rank-1 matrix u uᵀ with |u|² = 14: pinv = u uᵀ / 196.
        let u = [1.0, 2.0, 3.0];
        let a = outer(&u, &u);
        let e = sym_eigen(&a);
        let (pinv, dropped) = e.pseudo_inverse(1e-12);
        assert_eq!(dropped, 2);
        let expect = outer(&u, &u).scale(1.0 / 196.0);
        assert!((&pinv - &expect).max_abs() < 1e-12);
    }

    #[test]
    fn kron_vec_identity() {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_mat(&mut rng, 3, 2);
        let x = random_mat(&mut rng, 2, 4);
        let b = random_mat(&mut rng, 4, 3);
        let lhs = a.matmul(&x).matmul(&b).vec_cm();
        let rhs = b.transpose().kron(&a).mul_vec(&x.vec_cm());
        for (l, r) in lhs.iter().zip(&rhs) {
            assert_close(*l, *r, 1e-12);
        }
    }

    #[test]
    fn vech_round_trip() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 5.0]]);
        let v = m.vech();
        assert_eq!(v, vec![1.0, 2.0, 5.0]);
        let back = Mat::unvech(&v, 2);
        assert!((&back - &m).max_abs() == 0.0);
    }
}
