use pcfield_core::extrapolate::{oracle_solve, solve_channel, FunctionalSpec, SolverOptions};
use pcfield_core::linalg::{self, CMatrix, CVector};
use pcfield_core::spectral::RationalDensity;
use pcfield_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(k, k, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
}

fn spectral_radius_bound(m: &CMatrix) -> f64 {
    // operator 2-norm bounds the spectral radius
    linalg::max_eigenvalue(&(m.adjoint() * m)).sqrt()
}

fn random_instance(rng: &mut ChaCha8Rng, k: usize) -> RationalDensity {
    let mut phi = random_matrix(rng, k, 1.0);
    let r = spectral_radius_bound(&phi);
    phi *= Complex64::new(rng.gen_range(0.2..0.7) / r, 0.0);
    let b0 = random_matrix(rng, k, 0.5) + CMatrix::identity(k, k);
    let b1 = random_matrix(rng, k, 0.3);
    RationalDensity::new(vec![b0, b1], vec![CMatrix::identity(k, k), -phi]).unwrap()
}

#[test]
fn solver_matches_finite_past_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..6 {
        let k = 1 + case % 3;
        let j = [2, 4, 8][case % 3];
        let f = random_instance(&mut rng, k);
        let noisy = case % 2 == 1;
        let g = noisy.then(|| {
            let b = random_matrix(&mut rng, k, 0.4) + CMatrix::identity(k, k) * Complex64::new(0.5, 0.0);
            RationalDensity::new(vec![b, random_matrix(&mut rng, k, 0.2)], vec![CMatrix::identity(k, k)]).unwrap()
        });
        let a = FunctionalSpec::new(
            (0..j)
                .map(|_| CVector::from_fn(k, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                .collect(),
        )
        .unwrap();
        let n = 2048;
        let fg = f.rasterize(n).unwrap();
        let gg = g.as_ref().map(|g| g.rasterize(n).unwrap());
        let sol = solve_channel(&fg, gg.as_ref(), &a, &SolverOptions::default()).unwrap();
        let lags = j - 1 + 64;
        let kf = f.covariance(lags).unwrap();
        let kg = g.as_ref().map(|g| g.covariance(lags).unwrap());
        let o = oracle_solve(&kf, kg.as_ref(), &a, 64).unwrap();
        let rel = (sol.delta - o.mse).abs() / o.mse;
        assert!(rel <= 1e-4, "case {case}: solve {} oracle {} rel {rel:e}", sol.delta, o.mse);
        let d = sol.diagnostics.unwrap();
        assert!(d.causality_leakage <= 1e-6 && d.orthogonality_residual <= 1e-6, "case {case}: {d:?}");
    }
}
