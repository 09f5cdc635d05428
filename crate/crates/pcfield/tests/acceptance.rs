//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use pcfield_core::extrapolate::{
    oracle_solve, solve_by_factorization, solve_channel, spectral_factorize, Diagnostics, FunctionalSpec, SolveMode,
    SolverOptions, Window,
};
use pcfield_core::linalg::{self, CMatrix, CVector};
use pcfield_core::minimax::{
    evaluate_robust_objective, find_least_favorable, project_onto_class, saddle_point_residual, solve_anchor, ClassParams,
    ClassVariant, DensityClassSpec, MinimaxChannel, OptimizerOptions, ProjectionOptions,
};
use pcfield_core::simulate::{empirical_mse, SimulationConfig};
use pcfield_core::spectral::{check_minimality, refinement_check, DensityModel, RationalDensity, SpectralDensityGrid};
use pcfield_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn cz(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_matrix(rng: &mut ChaCha8Rng, k: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(k, k, |_, _| cz(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale)
}

fn random_functional(rng: &mut ChaCha8Rng, k: usize, j: usize) -> FunctionalSpec {
    FunctionalSpec::new(
        (0..j).map(|_| CVector::from_fn(k, |_, _| cz(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))).collect(),
    )
    .unwrap()
}

/// `(I - phi e^{-il})^{-1} (b0 + b1 e^{-il})` with `|phi| < 0.7`.
fn random_rational(rng: &mut ChaCha8Rng, k: usize) -> RationalDensity {
    let mut phi = random_matrix(rng, k, 1.0);
    let norm = linalg::max_eigenvalue(&(phi.adjoint() * &phi)).sqrt();
    phi *= cz(rng.gen_range(0.2..0.7) / norm, 0.0);
    let b0 = random_matrix(rng, k, 0.5) + CMatrix::identity(k, k);
    let b1 = random_matrix(rng, k, 0.3);
    RationalDensity::new(vec![b0, b1], vec![CMatrix::identity(k, k), -phi]).unwrap()
}

fn random_noise(rng: &mut ChaCha8Rng, k: usize) -> RationalDensity {
    let b = random_matrix(rng, k, 0.4) + CMatrix::identity(k, k) * cz(0.5, 0.0);
    RationalDensity::new(vec![b, random_matrix(rng, k, 0.2)], vec![CMatrix::identity(k, k)]).unwrap()
}

/// `(1/2 pi) int_{-pi}^{pi} g` by composite Simpson on `2m` intervals.
fn simpson(g: impl Fn(f64) -> f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = 2.0 * PI / n as f64;
    let mut acc = g(-PI) + g(PI);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(-PI + i as f64 * h);
    }
    acc * h / 3.0 / (2.0 * PI)
}

/// One-step prediction error of a scalar density: `exp((1/2 pi) int log f)`.
fn kolmogorov(f: impl Fn(f64) -> f64) -> f64 {
    simpson(|l| f(l).ln(), 20_000).exp()
}

fn check_diagnostics(d: Option<Diagnostics>, worst: &mut (f64, f64)) -> bool {
    match d {
        Some(d) => {
            worst.0 = worst.0.max(d.causality_leakage);
            worst.1 = worst.1.max(d.orthogonality_residual);
            true
        }
        None => false,
    }
}

fn criterion_1(diag: &mut (f64, f64), missing: &mut usize) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_101);
    let mut worst: f64 = 0.0;
    let n = 2048;
    let j_past = 64;
    for case in 0..20 {
        let k = 1 + case % 3;
        let j = [2, 4, 8][(case / 3) % 3];
        let noisy = case % 2 == 1;
        let f = random_rational(&mut rng, k);
        let g = noisy.then(|| random_noise(&mut rng, k));
        let a = random_functional(&mut rng, k, j);
        let fg = f.rasterize(n).unwrap();
        let gg = g.as_ref().map(|g| g.rasterize(n).unwrap());
        let sol = solve_channel(&fg, gg.as_ref(), &a, &SolverOptions::default()).unwrap();
        // exact covariances from the impulse response, not from the grid
        let lags = j - 1 + j_past;
        let kf = f.covariance(lags).unwrap();
        let kg = g.as_ref().map(|g| g.covariance(lags).unwrap());
        let o = oracle_solve(&kf, kg.as_ref(), &a, j_past).unwrap();
        worst = worst.max((sol.delta - o.mse).abs() / o.mse);
        if !check_diagnostics(sol.diagnostics, diag) {
            *missing += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && secs < 60.0,
        format!("oracle equivalence: 20 instances, worst relative gap {worst:.2e} (limit 1e-4), {secs:.1} s (limit 60 s)"),
    )
}

fn criterion_2(diag: &mut (f64, f64), missing: &mut usize) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_delta: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for (k, j, sigma2) in [(1, 1, 1.0), (2, 4, 2.5), (3, 8, 0.3)] {
        let a = random_functional(&mut rng, k, j);
        let f = SpectralDensityGrid::identity(k, 512).scale(sigma2);
        let sol = solve_channel(&f, None, &a, &SolverOptions::default()).unwrap();
        let want = sigma2 * a.coefficients().iter().map(|v| v.norm_squared()).sum::<f64>();
        worst_delta = worst_delta.max((sol.delta - want).abs());
        // delta = <c, a> forces c = sigma^2 a; at sigma^2 = 1 that is c = a
        for (i, c) in sol.c.iter().enumerate() {
            let target = a.coefficients().get(i).map_or_else(|| CVector::zeros(k), |v| v * cz(sigma2, 0.0));
            worst_c = worst_c.max((c - target).camax());
        }
        if !check_diagnostics(sol.diagnostics, diag) {
            *missing += 1;
        }
    }
    verdict(
        worst_delta <= 1e-10 && worst_c <= 1e-10,
        format!("white noise: |delta - sigma^2 |a|^2| = {worst_delta:.2e}, max |c - sigma^2 a| = {worst_c:.2e} (limit 1e-10; sigma^2 = 1, 2.5, 0.3)"),
    )
}

fn criterion_3(diag: &mut (f64, f64), missing: &mut usize) -> Verdict {
    let f = |l: f64| 1.0 / (1.0 - l.cos() + 0.25);
    let reference = kolmogorov(f);
    let grid = SpectralDensityGrid::scalar(4096, f).unwrap();
    let a = FunctionalSpec::unit(1, 4);
    let sol = solve_channel(&grid, None, &a, &SolverOptions::default()).unwrap();
    if !check_diagnostics(sol.diagnostics, diag) {
        *missing += 1;
    }
    let gap = (sol.delta - reference).abs();
    verdict(
        gap <= 1e-6 && (sol.delta - 1.0).abs() <= 1e-6,
        format!("AR(1) one step: delta = {:.12}, quadrature reference {:.12}, gap {gap:.2e} (limit 1e-6)", sol.delta, reference),
    )
}

/// `Q(l) Q(l)^* + 0.1 I` with `Q` of degree 2.
fn random_trig_density(rng: &mut ChaCha8Rng, k: usize, n: usize) -> (Vec<CMatrix>, SpectralDensityGrid) {
    let q: Vec<CMatrix> = (0..3).map(|_| random_matrix(rng, k, 1.0)).collect();
    let eval = |l: f64| {
        let mut p = CMatrix::zeros(k, k);
        for (u, d) in q.iter().enumerate() {
            p += d * cz(0.0, -(u as f64) * l).exp();
        }
        &p * p.adjoint() + CMatrix::identity(k, k) * cz(0.1, 0.0)
    };
    let grid = SpectralDensityGrid::from_fn(k, n, eval).unwrap();
    (q, grid)
}

fn criterion_4(diag: &mut (f64, f64), missing: &mut usize) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1024;
    let mut worst_rec: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for case in 0..10 {
        let k = 1 + case % 3;
        let (_, f) = random_trig_density(&mut rng, k, n);
        let fac = spectral_factorize(&f, &Default::default()).unwrap();
        // rebuild P(l) = sum_u d(u) e^{-i u l} directly at every node
        for t in 0..n {
            let l = f.lambda(t);
            let mut p = CMatrix::zeros(k, k);
            for (u, d) in fac.d.iter().enumerate() {
                p += d * cz(0.0, -(u as f64) * l).exp();
            }
            worst_rec = worst_rec.max((f.value(t) - &p * p.adjoint()).camax());
        }
        let a = random_functional(&mut rng, k, 1 + case % 4);
        let direct = solve_channel(&f, None, &a, &SolverOptions::default()).unwrap();
        let viafac = solve_by_factorization(&fac, &a).unwrap();
        worst_gap = worst_gap.max((direct.delta - viafac.delta).abs() / direct.delta);
        if !check_diagnostics(direct.diagnostics, diag) {
            *missing += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_rec <= 1e-8 && worst_gap <= 1e-6 && secs < 30.0,
        format!(
            "factorization: sup |F - P P*| = {worst_rec:.2e} (limit 1e-8), error gap {worst_gap:.2e} (limit 1e-6), {secs:.1} s (limit 30 s)"
        ),
    )
}

fn criterion_5(diag: &mut (f64, f64), missing: &mut usize) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_z: f64 = 0.0;
    let n = 256;
    for (case, (k, j, noisy)) in [(1, 1, false), (1, 3, true), (2, 2, false), (2, 2, true), (3, 2, true)].into_iter().enumerate()
    {
        let f = random_rational(&mut rng, k).rasterize(n).unwrap();
        let g = noisy.then(|| random_noise(&mut rng, k).rasterize(n).unwrap());
        let a = random_functional(&mut rng, k, j);
        let sol = solve_channel(&f, g.as_ref(), &a, &SolverOptions::default()).unwrap();
        if !check_diagnostics(sol.diagnostics, diag) {
            *missing += 1;
        }
        let cfg = SimulationConfig { seed: 500 + case as u64, n_trials: 10_000, n_steps: 64 };
        let est = empirical_mse(&sol, &a, &f, g.as_ref(), &cfg).unwrap();
        worst_z = worst_z.max((est.mean - sol.delta).abs() / est.stderr);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_z <= 3.0 && secs < 120.0,
        format!("Monte Carlo: 5 instances x 1e4 trials, worst |mse - delta| = {worst_z:.2} stderr (limit 3), {secs:.1} s (limit 120 s)"),
    )
}

fn criterion_6() -> Verdict {
    let n = 128;
    let p = 2.0;
    let class = DensityClassSpec::from_variant(
        ClassVariant::parse("D0_1").unwrap(),
        &ClassParams { p: Some(p), ..Default::default() },
        vec![1.0],
    )
    .unwrap();
    let ch = vec![MinimaxChannel { m: 0, functionals: vec![FunctionalSpec::unit(1, 1)] }];
    let init = SpectralDensityGrid::scalar(n, |l| 1.0 / (1.25 - l.cos())).unwrap();
    let lf = find_least_favorable(&ch, &class, &[init], None, &OptimizerOptions::default()).unwrap();
    let dev = lf.f[0].values().iter().map(|v| (v[(0, 0)] - cz(p, 0.0)).norm()).fold(0.0, f64::max);
    let rep = saddle_point_residual(&ch, &lf.f, None, &class, SolveMode::Noiseless, Window::Fixed(lf.window)).unwrap();
    // grid search over AR(1) shapes of power p: the one-step error peaks at phi = 0
    let best = (-90..=90)
        .map(|i| {
            let phi = i as f64 / 100.0;
            let s = p * (1.0 - phi * phi);
            kolmogorov(|l| s / (1.0 + phi * phi - 2.0 * phi * l.cos()))
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let pass =
        lf.converged && dev <= 1e-3 * p && (lf.objective - p).abs() <= 1e-3 && (best - p).abs() <= 1e-3 && rep.residual_f <= 1e-3;
    verdict(
        pass,
        format!(
            "minimax fixed power: sup |f0 - p| = {dev:.2e} (limit {:.0e}), objective {:.9} vs grid search {best:.9} (p = {p}, limit 1e-3), saddle residual {:.2e} (limit 1e-3)",
            1e-3 * p,
            lf.objective,
            rep.residual_f
        ),
    )
}

fn reference_density(k: usize, n: usize) -> SpectralDensityGrid {
    let mut d1 = CMatrix::identity(k, k) * cz(-0.5, 0.0);
    if k > 1 {
        d1[(0, 1)] = cz(0.2, 0.1);
    }
    let num = vec![CMatrix::identity(k, k), CMatrix::identity(k, k) * cz(0.3, 0.0)];
    RationalDensity::new(num, vec![CMatrix::identity(k, k), d1]).unwrap().rasterize(n).unwrap()
}

fn dominance_class(name: &str, k: usize, n: usize) -> DensityClassSpec {
    let u = reference_density(k, n);
    let p = u.mean_trace();
    let params = if name.starts_with("Deps") {
        ClassParams { u: Some(vec![u]), eps: Some(0.3), p: Some(p), q: Some(0.5 * k as f64), ..Default::default() }
    } else {
        let g1 = SpectralDensityGrid::from_fn(k, n, |l| CMatrix::identity(k, k) * cz(0.4 + 0.2 * l.cos(), 0.0)).unwrap();
        ClassParams {
            v: Some(vec![u.scale(0.5)]),
            u: Some(vec![u.scale(1.8)]),
            p: Some(p),
            g1: Some(vec![g1]),
            eps: Some(0.2),
            ..Default::default()
        }
    };
    DensityClassSpec::from_variant(ClassVariant::parse(name).unwrap(), &params, vec![1.0]).unwrap()
}

fn criterion_7() -> Verdict {
    let n = 128;
    let k = 2;
    let mut worst = f64::NEG_INFINITY;
    let mut lines = Vec::new();
    for name in ["Deps1xD0_1", "DVU1xD1eps1"] {
        let class = dominance_class(name, k, n);
        let a = FunctionalSpec::new(vec![
            CVector::from_fn(k, |i, _| cz(1.0 / (i + 1) as f64, 0.2 * i as f64)),
            CVector::from_fn(k, |i, _| cz(0.5, -0.3 * i as f64)),
        ])
        .unwrap();
        let ch = vec![MinimaxChannel { m: 0, functionals: vec![a] }];
        let init_g = [SpectralDensityGrid::identity(k, n).scale(0.5)];
        let lf =
            find_least_favorable(&ch, &class, &[reference_density(k, n)], Some(&init_g), &OptimizerOptions::default()).unwrap();
        let g0 = lf.g.clone().unwrap();
        let anchor = solve_anchor(&ch, &lf.f, Some(&g0), Window::Fixed(lf.window)).unwrap();
        let top = evaluate_robust_objective(&anchor, &lf.f, Some(&g0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut local = f64::NEG_INFINITY;
        for trial in 0..50 {
            let (_, mut f) = random_trig_density(&mut rng, k, n);
            let (_, mut g) = random_trig_density(&mut rng, k, n);
            if trial % 2 == 1 {
                f = lf.f[0].add(&f.scale(0.05 * lf.f[0].mean_trace() / f.mean_trace())).unwrap();
                g = g0[0].add(&g.scale(0.05 * g0[0].mean_trace() / g.mean_trace())).unwrap();
            }
            let (pf, pg) = project_onto_class(&[f], Some(&[g]), &class, &ProjectionOptions::default()).unwrap();
            let v = evaluate_robust_objective(&anchor, &pf, pg.as_deref()).unwrap();
            local = local.max(v / top - 1.0);
        }
        worst = worst.max(local);
        lines.push(format!("{name} K={k} worst excess {local:.2e}"));
    }
    verdict(worst <= 1e-3, format!("saddle dominance: 50 members per class, {} (limit 1e-3)", lines.join(", ")))
}

fn criterion_8(diag: (f64, f64), missing: usize) -> Verdict {
    verdict(
        missing == 0 && diag.0 <= 1e-6 && diag.1 <= 1e-6,
        format!(
            "causality and orthogonality over all solves above: leakage {:.2e}, orthogonality {:.2e} (limit 1e-6), {missing} solves without diagnostics",
            diag.0, diag.1
        ),
    )
}

fn criterion_9() -> Verdict {
    let f = RationalDensity::scalar(&[1.0, -1.0], &[1.0]).unwrap();
    let model = DensityModel::Rational(f.clone());
    let rep = refinement_check(&model, None, 4096).unwrap();
    let grid = check_minimality(&f.rasterize(4096).unwrap(), None, 1e10).unwrap();
    // an independent look at the same integral: the mean of 1/f over nodes that avoid 0
    let mean_inv = |n: usize| {
        (0..n).map(|t| -PI + 2.0 * PI * (t as f64 + 0.5) / n as f64).map(|l| 1.0 / (2.0 - 2.0 * l.cos())).sum::<f64>() / n as f64
    };
    let ratio_offset = mean_inv(8192) / mean_inv(4096);
    verdict(
        rep.diverging && rep.ratio > 1.1 && !grid.pass && ratio_offset > 1.1,
        format!(
            "minimality detector: ratio {:.3} between 8192 and 4096 nodes (limit > 1.1), grid check pass = {}, offset-grid ratio {ratio_offset:.3}",
            rep.ratio, grid.pass
        ),
    )
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    let mut files = 0;
    for name in ["noisy.json", "white.json"] {
        let outs: Vec<PathBuf> = ["1", "4"]
            .iter()
            .map(|threads| {
                let out = dir.path().join(format!("{name}-{threads}"));
                let status = Command::new(env!("CARGO_BIN_EXE_pcfield"))
                    .args(["validate", "--threads", threads, "--input"])
                    .arg(fixture(name))
                    .arg("--output")
                    .arg(&out)
                    .status()
                    .unwrap();
                assert_eq!(status.code(), Some(0), "{name}");
                out
            })
            .collect();
        let list = |p: &Path| {
            let mut v: Vec<_> = std::fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name()).collect();
            v.sort();
            v
        };
        let (a, b) = (list(&outs[0]), list(&outs[1]));
        same &= a == b;
        for f in &a {
            files += 1;
            same &= std::fs::read(outs[0].join(f)).unwrap() == std::fs::read(outs[1].join(f)).unwrap();
        }
    }
    verdict(
        same && files >= 4,
        format!("determinism: two validate runs (1 and 4 threads), {files} artifacts compared, identical = {same}"),
    )
}

fn main() {
    let mut diag = (0.0, 0.0);
    let mut missing = 0;
    let results = vec![
        criterion_1(&mut diag, &mut missing),
        criterion_2(&mut diag, &mut missing),
        criterion_3(&mut diag, &mut missing),
        criterion_4(&mut diag, &mut missing),
        criterion_5(&mut diag, &mut missing),
        criterion_6(),
        criterion_7(),
        criterion_8(diag, missing),
        criterion_9(),
        criterion_10(),
    ];
    let mut failed = 0;
    for (i, v) in results.iter().enumerate() {
        println!("criterion {:>2}: {}  {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
