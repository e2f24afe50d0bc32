use framecond::conic::cone::{smat, svec};
use framecond::conic::SolverSettings;
use framecond::frames::{self, Frame};
use framecond::numerics::{Matrix, Vector};
use framecond::precondition;
use framecond::recovery::{basis_pursuit, basis_pursuit_settings, plant_sparse};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_frame() -> impl Strategy<Value = Frame> {
    (2usize..=5, 1usize..=5, any::<u64>())
        .prop_map(|(m, extra, seed)| frames::random_gaussian_frame(m, m + extra, seed).unwrap())
}

fn well_conditioned(m: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = plant_sparse(m * m, m * m, &mut rng);
    Matrix::identity(m, m) * 2.0
        + Matrix::from_column_slice(m, m, noise.as_slice()) * (0.5 / m as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coherence_ignores_signs_and_order(f in small_frame(), seed in any::<u64>()) {
        let big_m = f.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perm = rand::seq::index::sample(&mut rng, big_m, big_m).into_vec();
        let mut b = Matrix::zeros(f.dim(), big_m);
        for (k, &p) in perm.iter().enumerate() {
            let sign = if (seed >> (k % 64)) & 1 == 1 { -1.0 } else { 1.0 };
            b.set_column(k, &(f.column(p) * sign));
        }
        let mu_a = frames::coherence(&f).unwrap().value;
        let mu_b = frames::coherence_of_matrix(&b).unwrap().value;
        prop_assert!((mu_a - mu_b).abs() < 1e-12);
        prop_assert!(mu_a >= frames::welch_bound(f.dim(), big_m).unwrap() - 1e-12);
    }

    #[test]
    fn svec_preserves_inner_products(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix::from_column_slice(n, n, plant_sparse(n * n, n * n, &mut rng).as_slice());
        let b = Matrix::from_column_slice(n, n, plant_sparse(n * n, n * n, &mut rng).as_slice());
        let (a, b) = (&a + a.transpose(), &b + b.transpose());
        prop_assert!((svec(&a).dot(&svec(&b)) - a.dot(&b)).abs() < 1e-10 * (1.0 + a.norm() * b.norm()));
        prop_assert!((smat(svec(&a).as_slice(), n) - &a).amax() < 1e-14 * (1.0 + a.amax()));
    }

    #[test]
    fn preconditioning_never_hurts(f in small_frame()) {
        let r = precondition::solve_coherence(&f, &SolverSettings::default()).unwrap();
        prop_assert!(r.is_optimal());
        prop_assert!(r.verified_coherence <= r.coherence_before + 1e-5);
        prop_assert!(r.q >= r.welch_bound - 1e-6);
        prop_assert!((r.q - r.verified_coherence).abs() <= 1e-5);
        let kkt = r.kkt.unwrap();
        prop_assert!(kkt.max() <= 1e-6, "{:?}", kkt);
        prop_assert!((r.q + r.diag_duals.sum()).abs() <= 1e-6);
    }

    #[test]
    fn preconditioned_columns_stay_unit_norm(f in small_frame()) {
        let r = precondition::solve_coherence(&f, &SolverSettings::default()).unwrap();
        let check = frames::verify_unit_norm_mapping(&r.g, &f).unwrap();
        prop_assert!(check.norm_residual < 1e-6, "{:?}", check);
    }

    #[test]
    fn tight_projection_is_tight_and_idempotent(f in small_frame(), seed in any::<u64>()) {
        let m = f.dim();
        let alpha = f.len() as f64 / m as f64;
        let (_, out) = precondition::compose_tight_preconditioner(&well_conditioned(m, seed), &f).unwrap();
        prop_assert!((out.frame_operator() - Matrix::identity(m, m) * alpha).norm() <= 1e-9);
        let again = precondition::nearest_tight_frame(&out, alpha).unwrap();
        prop_assert!((again.matrix() - out.matrix()).amax() <= 1e-9);
    }

    #[test]
    fn basis_pursuit_objective_is_preconditioner_invariant(
        seed in any::<u64>(),
        m in 3usize..7,
        extra in 2usize..8,
        k in 1usize..3,
    ) {
        let f = frames::random_gaussian_frame(m, m + extra, seed).unwrap();
        let g = well_conditioned(m, seed ^ 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = plant_sparse(m + extra, k, &mut rng);
        let y = f.matrix() * &x;
        let s = basis_pursuit_settings();
        let a = basis_pursuit(f.matrix(), &y, &s).unwrap();
        let b = basis_pursuit(&(&g * f.matrix()), &(&g * &y), &s).unwrap();
        let l1 = |v: &Vector| v.abs().sum();
        prop_assert!((l1(&a.estimate) - l1(&b.estimate)).abs() <= 1e-6 * (1.0 + l1(&x)));
        prop_assert!(l1(&a.estimate) <= l1(&x) + 1e-7 * (1.0 + l1(&x)));
    }
}
