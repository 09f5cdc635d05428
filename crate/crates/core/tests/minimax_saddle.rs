use pcfield_core::extrapolate::{FunctionalSpec, SolveMode, Window};
use pcfield_core::linalg::{c, CMatrix, CVector};
use pcfield_core::minimax::{
    evaluate_robust_objective, find_least_favorable, project_onto_class, saddle_point_residual, solve_anchor, ClassParams,
    ClassVariant, DensityClassSpec, MinimaxChannel, OptimizerOptions, Pointwise, ProjectionOptions,
};
use pcfield_core::spectral::{RationalDensity, SpectralDensityGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 128;

fn random_density(rng: &mut ChaCha8Rng, k: usize) -> SpectralDensityGrid {
    // P(l) P(l)^* for a random matrix trigonometric polynomial of degree 3
    let coefs: Vec<CMatrix> =
        (0..4).map(|_| CMatrix::from_fn(k, k, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect();
    SpectralDensityGrid::from_fn(k, N, |l| {
        let mut p = CMatrix::zeros(k, k);
        for (u, d) in coefs.iter().enumerate() {
            p += d * c(0.0, -(u as f64) * l).exp();
        }
        &p * p.adjoint() + CMatrix::identity(k, k) * c(0.05, 0.0)
    })
    .unwrap()
}

fn reference(k: usize) -> SpectralDensityGrid {
    let mut num = vec![CMatrix::identity(k, k)];
    let mut d1 = CMatrix::identity(k, k) * c(-0.5, 0.0);
    if k > 1 {
        d1[(0, 1)] = c(0.2, 0.1);
    }
    num.push(CMatrix::identity(k, k) * c(0.3, 0.0));
    RationalDensity::new(num, vec![CMatrix::identity(k, k), d1]).unwrap().rasterize(N).unwrap()
}

fn functional(k: usize) -> FunctionalSpec {
    let a0 = CVector::from_fn(k, |i, _| c(1.0 / (i + 1) as f64, 0.2 * i as f64));
    let a1 = CVector::from_fn(k, |i, _| c(0.5, -0.3 * i as f64));
    FunctionalSpec::new(vec![a0, a1]).unwrap()
}

fn class_for(name: &str, k: usize) -> DensityClassSpec {
    let u = reference(k);
    let p = u.mean_trace();
    let params = match name {
        "Deps1xD0_1" => {
            ClassParams { u: Some(vec![u]), eps: Some(0.3), p: Some(p), q: Some(0.5 * k as f64), ..Default::default() }
        }
        "DVU1xD1eps1" => ClassParams {
            v: Some(vec![u.scale(0.5)]),
            u: Some(vec![u.scale(1.8)]),
            p: Some(p),
            g1: Some(
                vec![SpectralDensityGrid::from_fn(k, N, |l| CMatrix::identity(k, k) * c(0.4 + 0.2 * l.cos(), 0.0)).unwrap()],
            ),
            eps: Some(0.2),
            ..Default::default()
        },
        _ => unreachable!(),
    };
    DensityClassSpec::from_variant(ClassVariant::parse(name).unwrap(), &params, vec![1.0]).unwrap()
}

#[test]
fn saddle_dominance_on_two_noisy_classes() {
    for name in ["Deps1xD0_1", "DVU1xD1eps1"] {
        for k in [1usize, 2] {
            let class = class_for(name, k);
            let ch = vec![MinimaxChannel { m: 0, functionals: vec![functional(k)] }];
            let init_f = [reference(k)];
            let init_g = [SpectralDensityGrid::identity(k, N).scale(0.5)];
            let lf = find_least_favorable(&ch, &class, &init_f, Some(&init_g), &OptimizerOptions::default()).unwrap();
            assert!(lf.converged, "{name} K={k} did not converge");
            for w in lf.history.windows(2) {
                assert!(w[1] >= w[0]);
            }
            let g0 = lf.g.clone().unwrap();
            let anchor = solve_anchor(&ch, &lf.f, Some(&g0), Window::Fixed(lf.window)).unwrap();
            let top = evaluate_robust_objective(&anchor, &lf.f, Some(&g0)).unwrap();
            assert!((top - lf.objective).abs() <= 1e-8 * lf.objective.abs().max(1.0), "{name} K={k}: {top} vs {}", lf.objective);

            let mut rng = ChaCha8Rng::seed_from_u64(11 + k as u64);
            let mut worst = f64::NEG_INFINITY;
            for trial in 0..50 {
                let mut f = [random_density(&mut rng, k)];
                let mut g = [random_density(&mut rng, k)];
                if trial % 2 == 1 {
                    // members close to the least-favorable pair
                    f[0] = lf.f[0].add(&f[0].scale(0.05 * lf.f[0].mean_trace() / f[0].mean_trace())).unwrap();
                    g[0] = g0[0].add(&g[0].scale(0.05 * g0[0].mean_trace() / g[0].mean_trace())).unwrap();
                }
                let (pf, pg) = project_onto_class(&f, Some(&g), &class, &ProjectionOptions::default()).unwrap();
                let v = evaluate_robust_objective(&anchor, &pf, pg.as_deref()).unwrap();
                worst = worst.max(v / top - 1.0);
            }
            println!(
                "{name} K={k}: objective {:.6} iterations {} worst excess {worst:.3e} residuals {:.2e} {:.2e}",
                lf.objective, lf.iterations, lf.report.residual_f, lf.report.residual_g
            );
            assert!(worst <= 1e-3, "{name} K={k}: dominance violated by {worst}");
        }
    }
}

#[test]
fn contaminated_multipliers_respect_slackness_and_signs() {
    let k = 1;
    let class = class_for("Deps1xD0_1", k);
    let ch = vec![MinimaxChannel { m: 0, functionals: vec![functional(k)] }];
    let lf = find_least_favorable(
        &ch,
        &class,
        &[reference(k)],
        Some(&[SpectralDensityGrid::identity(k, N).scale(0.5)]),
        &OptimizerOptions::default(),
    )
    .unwrap();
    let rep = saddle_point_residual(&ch, &lf.f, lf.g.as_deref(), &class, SolveMode::Noisy, Window::Fixed(lf.window)).unwrap();
    assert!(rep.multipliers_f.level.iter().all(|a| *a >= 0.0));
    assert!(rep.multipliers_g.as_ref().unwrap().level.iter().all(|a| *a >= 0.0));
    let Pointwise::Scalars(gamma) = &rep.multipliers_f.pointwise else { panic!() };
    let u = reference(k);
    for (t, g) in gamma[0].iter().enumerate() {
        assert!(g[0] <= 0.0);
        let margin = lf.f[0].value(t)[(0, 0)].re - 0.7 * u.value(t)[(0, 0)].re;
        if margin > 1e-6 {
            assert!(g[0].abs() <= 1e-6);
        }
    }
}
