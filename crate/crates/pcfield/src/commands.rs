//! The six commands. Each returns its artifacts instead of writing them.

use std::collections::BTreeMap;

use pcfield_core::extrapolate::{
    aggregate, oracle_solve_grid, solve_by_factorization, solve_channel, spectral_factorize, ChannelDelta, EstimateSolution,
    FactorizationOptions, OracleResult, SolverOptions, TailTerm, Window,
};
use pcfield_core::minimax::{
    find_least_favorable, minimax_characteristic, ClassVariant, DensityClassSpec, MinimaxChannel, Multipliers, OptimizerOptions,
    Pointwise, SaddleReport, Weighting,
};
use pcfield_core::simulate::{summarize, MseEstimate, SimulationConfig, TrialModel, RNG_NAME};
use pcfield_core::spectral::{check_minimality, refinement_check, DensityModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::model::{self, Channel, Problem};
use crate::output::{self, Artifact, Meta, OptimizerTolerances};
use crate::schema::{self, WeightingSpec};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Minimax,
    Factorize,
    Simulate,
    Validate,
    Oracle,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Minimax => "minimax",
            Command::Factorize => "factorize",
            Command::Simulate => "simulate",
            Command::Validate => "validate",
            Command::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Overrides `simulation.seed`.
    pub seed: Option<u64>,
    /// Unknown fields become schema errors instead of warnings.
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    NotConverged,
    Disagreement,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotConverged => 4,
            Status::Disagreement => 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
    pub summary: String,
}

/// Parses, validates and runs `command` on the raw bytes of a problem file.
pub fn run(command: Command, input: &[u8], opts: &RunOptions) -> Result<Outcome> {
    let text = std::str::from_utf8(input).map_err(CliError::schema)?;
    let (file, unknown) = schema::parse(text).map_err(CliError::schema)?;
    if opts.strict && !unknown.is_empty() {
        return Err(CliError::Schema(format!("unknown fields: {}", unknown.join(", "))));
    }
    let warnings = unknown.iter().map(|u| format!("ignoring unknown field `{u}`")).collect();
    let problem = model::build(file)?;
    let ctx = Context { hash: output::sha256_hex(input), problem: &problem, opts };
    let (status, artifacts, summary) = match command {
        Command::Solve => ctx.solve()?,
        Command::Minimax => ctx.minimax()?,
        Command::Factorize => ctx.factorize()?,
        Command::Simulate => ctx.simulate()?,
        Command::Validate => ctx.validate()?,
        Command::Oracle => ctx.oracle()?,
    };
    Ok(Outcome { status, artifacts, warnings, summary })
}

type Produced = (Status, Vec<Artifact>, String);

/// Collects per-channel results in input order; the first failure wins.
fn in_order<T: Send>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

#[derive(Debug, Clone, Serialize)]
struct MinimalitySummary {
    integral: f64,
    condition: f64,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
    singular_nodes: usize,
    /// Integral on `2 N_lambda` nodes over the one on `N_lambda`; only for
    /// parametric densities.
    refinement_ratio: Option<f64>,
    pass: bool,
}

fn refinable(m: &DensityModel) -> bool {
    matches!(m, DensityModel::Rational(_))
}

fn minimality(ch: &Channel, ceiling: f64, n: usize) -> Result<MinimalitySummary> {
    let rep = check_minimality(&ch.f, ch.g.as_ref(), ceiling)?;
    let refinement = if refinable(&ch.f_model) && ch.g_model.as_ref().is_none_or(refinable) {
        Some(refinement_check(&ch.f_model, ch.g_model.as_ref(), n)?)
    } else {
        None
    };
    let diverging = refinement.as_ref().is_some_and(|r| r.diverging);
    let summary = MinimalitySummary {
        integral: rep.integral,
        condition: rep.condition,
        min_eigenvalue: rep.min_eigenvalue,
        max_eigenvalue: rep.max_eigenvalue,
        singular_nodes: rep.singular_nodes.len(),
        refinement_ratio: refinement.map(|r| r.ratio),
        pass: rep.pass && !diverging,
    };
    if !summary.pass {
        let mut why = Vec::new();
        if let Some(&(t, l)) = rep.singular_nodes.first() {
            why.push(format!("F + G singular at {} nodes (first: index {t}, lambda {l:.6})", rep.singular_nodes.len()));
        }
        if rep.condition > ceiling {
            why.push(format!("condition {:.3e} exceeds ceiling {ceiling:.3e}", rep.condition));
        }
        if diverging {
            why.push(format!("integral grows by a factor {:.3} under grid refinement", summary.refinement_ratio.unwrap()));
        }
        return Err(CliError::Minimality(format!("channel {}: {}", ch.label(), why.join("; "))));
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
struct SolvedChannel {
    m: usize,
    l: usize,
    delta: f64,
    window: usize,
    condition_bound: f64,
    causality_leakage: Option<f64>,
    orthogonality_residual: Option<f64>,
    warnings: Vec<String>,
    minimality: MinimalitySummary,
    a_norm_sq: f64,
    c: Vec<Vec<[f64; 2]>>,
    h_csv: String,
}

fn solved(ch: &Channel, sol: &EstimateSolution, minimality: MinimalitySummary, prefix: &str) -> SolvedChannel {
    SolvedChannel {
        m: ch.m,
        l: ch.l,
        delta: sol.delta,
        window: sol.window,
        condition_bound: sol.condition_bound,
        causality_leakage: sol.diagnostics.map(|d| d.causality_leakage),
        orthogonality_residual: sol.diagnostics.map(|d| d.orthogonality_residual),
        warnings: sol.warnings.clone(),
        minimality,
        a_norm_sq: ch.a.norm_sq(),
        c: sol.c.iter().map(output::vector).collect(),
        h_csv: format!("{prefix}_{}.csv", ch.label()),
    }
}

#[derive(Debug, Clone, Serialize)]
struct OracleChannel {
    m: usize,
    l: usize,
    mse: f64,
    variance: f64,
    ridge: f64,
    #[serde(rename = "J_past")]
    j_past: usize,
    density_overridden: bool,
}

#[derive(Debug, Clone, Serialize)]
struct McChannel {
    m: usize,
    l: usize,
    seed: u64,
    delta_theory: f64,
    mse_empirical: f64,
    stderr: f64,
    truncated_energy: f64,
    trials_csv: Option<String>,
}

struct Context<'a> {
    hash: String,
    problem: &'a Problem,
    opts: &'a RunOptions,
}

impl Context<'_> {
    fn optimizer_options(&self) -> OptimizerOptions {
        let mut o = OptimizerOptions::default();
        if let Some(spec) = self.problem.file.class.as_ref().and_then(|c| c.optimizer) {
            o.max_iter = spec.max_iter.unwrap_or(o.max_iter);
            o.tol = spec.tol.unwrap_or(o.tol);
            o.smoothing = spec.smoothing.unwrap_or(o.smoothing);
        }
        o
    }

    fn meta(&self, command: Command) -> Meta {
        let o = self.optimizer_options();
        let tol =
            OptimizerTolerances { max_iter: o.max_iter, tol: o.tol, smoothing: o.smoothing, max_backtracks: o.max_backtracks };
        Meta::new(command.name(), &self.hash, self.problem, tol)
    }

    fn ceiling(&self) -> f64 {
        self.problem.file.solver.minimality_ceiling
    }

    fn solve_all(&self) -> Result<Vec<(EstimateSolution, MinimalitySummary)>> {
        let opts = self.problem.solver_options();
        let n = self.problem.n_lambda();
        in_order(
            self.problem
                .channels
                .par_iter()
                .map(|ch| {
                    let min = minimality(ch, self.ceiling(), n)?;
                    let sol = solve_channel(&ch.f, ch.g.as_ref(), &ch.a, &opts)?;
                    Ok((sol, min))
                })
                .collect(),
        )
    }

    fn oracle_all(&self) -> Result<Vec<OracleResult>> {
        let j_past = self.problem.file.solver.j_past;
        in_order(
            self.problem
                .channels
                .par_iter()
                .map(|ch| Ok(oracle_solve_grid(&ch.oracle_f, ch.g.as_ref(), &ch.a, j_past)?))
                .collect(),
        )
    }

    fn simulation_config(&self) -> Result<(SimulationConfig, bool)> {
        let spec = self.problem.file.simulation.clone();
        let seed = self.opts.seed.or(spec.as_ref().map(|s| s.seed)).unwrap_or(0);
        let n_trials = spec.as_ref().map_or(10_000, |s| s.n_trials);
        let n_steps = spec.as_ref().and_then(|s| s.n_steps).unwrap_or(self.problem.file.solver.j_past);
        if n_steps >= self.problem.n_lambda() / 2 {
            return Err(CliError::Schema(format!("n_steps = {n_steps} must stay below N_lambda / 2")));
        }
        let write = spec.is_some_and(|s| s.write_trials);
        Ok((SimulationConfig { seed, n_trials, n_steps }, write))
    }

    /// Channel `i` draws from base seed `seed + i`.
    fn monte_carlo(&self, sols: &[EstimateSolution], cfg: &SimulationConfig) -> Result<Vec<MseEstimate>> {
        let mut out = Vec::with_capacity(sols.len());
        for (i, (ch, sol)) in self.problem.channels.iter().zip(sols).enumerate() {
            let cfg = SimulationConfig { seed: cfg.seed.wrapping_add(i as u64), ..*cfg };
            let model = TrialModel::new(sol, &ch.a, &ch.f, ch.g.as_ref(), &cfg)?;
            let records = (0..cfg.n_trials as u64).into_par_iter().map(|t| model.trial(t)).collect();
            out.push(summarize(records, model.truncated_energy()));
        }
        Ok(out)
    }

    fn solve(&self) -> Result<Produced> {
        let meta = self.meta(Command::Solve);
        let sols = self.solve_all()?;
        let mut artifacts = Vec::new();
        let mut channels = Vec::new();
        for (ch, (sol, min)) in self.problem.channels.iter().zip(sols) {
            let rec = solved(ch, &sol, min, "h");
            artifacts.push(output::vector_grid_csv(&rec.h_csv, &meta, &sol.h_grid));
            channels.push(rec);
        }
        let deltas: Vec<ChannelDelta> = channels.iter().map(|c| ChannelDelta { m: c.m, l: c.l, delta: c.delta }).collect();
        let tail: Vec<TailTerm> = self
            .problem
            .file
            .tail
            .iter()
            .map(|t| TailTerm { multiplicity: t.multiplicity, sup_eigenvalue: t.sup_eigenvalue, a_norm_sq: t.a_norm_sq })
            .collect();
        let agg = aggregate(&deltas, &tail);

        #[derive(Serialize)]
        struct Results<'a> {
            meta: &'a Meta,
            delta_total: f64,
            tail_bound: f64,
            channels: Vec<SolvedChannel>,
        }
        let summary = format!("solve: {} channels, delta_total = {:.12e}", agg.channels, agg.delta_total);
        artifacts.insert(
            0,
            output::json(
                "results.json",
                &Results { meta: &meta, delta_total: agg.delta_total, tail_bound: agg.tail_bound, channels },
            ),
        );
        Ok((Status::Ok, artifacts, summary))
    }

    fn oracle(&self) -> Result<Produced> {
        let meta = self.meta(Command::Oracle);
        let res = self.oracle_all()?;
        let specs = &self.problem.file.channels;
        let channels: Vec<OracleChannel> = self
            .problem
            .channels
            .iter()
            .zip(&res)
            .zip(specs)
            .map(|((ch, r), s)| OracleChannel {
                m: ch.m,
                l: ch.l,
                mse: r.mse,
                variance: r.variance,
                ridge: r.ridge,
                j_past: r.j_past,
                density_overridden: s.oracle_f.is_some(),
            })
            .collect();
        let total: f64 = channels.iter().map(|c| c.mse).sum();

        #[derive(Serialize)]
        struct Report<'a> {
            meta: &'a Meta,
            mse_total: f64,
            channels: Vec<OracleChannel>,
        }
        let summary = format!("oracle: {} channels, mse_total = {total:.12e}", channels.len());
        Ok((Status::Ok, vec![output::json("oracle.json", &Report { meta: &meta, mse_total: total, channels })], summary))
    }

    fn factorize(&self) -> Result<Produced> {
        let meta = self.meta(Command::Factorize);
        let fopts = FactorizationOptions { tol: self.problem.file.solver.factorization_tol, ..Default::default() };
        let sopts = self.problem.solver_options();

        #[derive(Serialize)]
        struct FactorChannel {
            m: usize,
            l: usize,
            residual: f64,
            iterations: usize,
            terms: usize,
            /// Noiseless error from the factor; absent for noisy channels.
            delta_factorized: Option<f64>,
            delta_solve: Option<f64>,
            relative_gap: Option<f64>,
            factor_csv: String,
        }
        let per: Vec<_> = in_order(
            self.problem
                .channels
                .par_iter()
                .map(|ch| {
                    let fac = spectral_factorize(&ch.f, &fopts)?;
                    let (df, ds) = if ch.g.is_none() {
                        let a = solve_by_factorization(&fac, &ch.a)?.delta;
                        let b = solve_channel(&ch.f, None, &ch.a, &sopts)?.delta;
                        (Some(a), Some(b))
                    } else {
                        (None, None)
                    };
                    Ok((fac, df, ds))
                })
                .collect(),
        )?;
        let mut artifacts = Vec::new();
        let mut channels = Vec::new();
        for (ch, (fac, df, ds)) in self.problem.channels.iter().zip(per) {
            let name = format!("factor_{}.csv", ch.label());
            let k = ch.k();
            let header: Vec<String> = ["u", "row", "col", "re", "im"].iter().map(|s| s.to_string()).collect();
            let rows = fac.d.iter().enumerate().flat_map(|(u, d)| {
                (0..k).flat_map(move |i| {
                    (0..k).map(move |j| {
                        vec![
                            u.to_string(),
                            i.to_string(),
                            j.to_string(),
                            format!("{:?}", d[(i, j)].re),
                            format!("{:?}", d[(i, j)].im),
                        ]
                    })
                })
            });
            artifacts.push(output::csv(&name, &meta, &header, rows));
            let gap = df.zip(ds).map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
            channels.push(FactorChannel {
                m: ch.m,
                l: ch.l,
                residual: fac.residual,
                iterations: fac.iterations,
                terms: fac.d.len(),
                delta_factorized: df,
                delta_solve: ds,
                relative_gap: gap,
                factor_csv: name,
            });
        }

        #[derive(Serialize)]
        struct Report<'a> {
            meta: &'a Meta,
            channels: Vec<FactorChannel>,
        }
        let worst = channels.iter().map(|c| c.residual).fold(0.0, f64::max);
        let summary = format!("factorize: {} channels, worst residual {worst:.3e}", channels.len());
        artifacts.insert(0, output::json("factorize.json", &Report { meta: &meta, channels }));
        Ok((Status::Ok, artifacts, summary))
    }

    fn simulate(&self) -> Result<Produced> {
        let meta = self.meta(Command::Simulate);
        let (cfg, write_trials) = self.simulation_config()?;
        let sols: Vec<EstimateSolution> = self.solve_all()?.into_iter().map(|s| s.0).collect();
        let mc = self.monte_carlo(&sols, &cfg)?;
        let mut artifacts = Vec::new();
        let mut channels = Vec::new();
        for (i, ((ch, sol), est)) in self.problem.channels.iter().zip(&sols).zip(&mc).enumerate() {
            let trials_csv = write_trials.then(|| format!("trials_{}.csv", ch.label()));
            if let Some(name) = &trials_csv {
                let header: Vec<String> = ["trial", "realized_re", "realized_im", "estimate_re", "estimate_im", "squared_error"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect();
                let rows = est.records.iter().enumerate().map(|(t, r)| {
                    vec![
                        t.to_string(),
                        format!("{:?}", r.realized.re),
                        format!("{:?}", r.realized.im),
                        format!("{:?}", r.estimate.re),
                        format!("{:?}", r.estimate.im),
                        format!("{:?}", r.squared_error),
                    ]
                });
                artifacts.push(output::csv(name, &meta, &header, rows));
            }
            channels.push(McChannel {
                m: ch.m,
                l: ch.l,
                seed: cfg.seed.wrapping_add(i as u64),
                delta_theory: sol.delta,
                mse_empirical: est.mean,
                stderr: est.stderr,
                truncated_energy: est.truncated_energy,
                trials_csv,
            });
        }
        let delta_theory: f64 = channels.iter().map(|c| c.delta_theory).sum();
        let mse_empirical: f64 = channels.iter().map(|c| c.mse_empirical).sum();
        let stderr = channels.iter().map(|c| c.stderr * c.stderr).sum::<f64>().sqrt();

        #[derive(Serialize)]
        struct Report<'a> {
            meta: &'a Meta,
            rng: &'static str,
            seed: u64,
            n_trials: usize,
            n_steps: usize,
            delta_theory: f64,
            mse_empirical: f64,
            stderr: f64,
            channels: Vec<McChannel>,
        }
        let summary = format!("simulate: delta_theory = {delta_theory:.6e}, mse_empirical = {mse_empirical:.6e} +- {stderr:.2e}");
        let report = Report {
            meta: &meta,
            rng: RNG_NAME,
            seed: cfg.seed,
            n_trials: cfg.n_trials,
            n_steps: cfg.n_steps,
            delta_theory,
            mse_empirical,
            stderr,
            channels,
        };
        artifacts.insert(0, output::json("simulate.json", &report));
        Ok((Status::Ok, artifacts, summary))
    }

    fn validate(&self) -> Result<Produced> {
        let meta = self.meta(Command::Validate);
        let v = self.problem.file.validation.unwrap_or_default();
        let (cfg, _) = self.simulation_config()?;
        let sols: Vec<EstimateSolution> = self.solve_all()?.into_iter().map(|s| s.0).collect();
        let oracle = self.oracle_all()?;
        let mc = self.monte_carlo(&sols, &cfg)?;

        #[derive(Serialize)]
        struct Row {
            m: usize,
            l: usize,
            delta_solve: f64,
            delta_oracle: f64,
            mse_monte_carlo: f64,
            stderr: f64,
            rel_gap_solve_oracle: f64,
            z_solve_monte_carlo: f64,
            z_oracle_monte_carlo: f64,
            agree: bool,
        }
        let rows: Vec<Row> = self
            .problem
            .channels
            .iter()
            .zip(&sols)
            .zip(&oracle)
            .zip(&mc)
            .map(|(((ch, s), o), e)| {
                let rel = (s.delta - o.mse).abs() / s.delta.abs().max(f64::MIN_POSITIVE);
                let z = |x: f64| {
                    if e.stderr > 0.0 {
                        (x - e.mean).abs() / e.stderr
                    } else if x == e.mean {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                };
                let (zs, zo) = (z(s.delta), z(o.mse));
                Row {
                    m: ch.m,
                    l: ch.l,
                    delta_solve: s.delta,
                    delta_oracle: o.mse,
                    mse_monte_carlo: e.mean,
                    stderr: e.stderr,
                    rel_gap_solve_oracle: rel,
                    z_solve_monte_carlo: zs,
                    z_oracle_monte_carlo: zo,
                    agree: rel <= v.rel_tol && zs <= v.z && zo <= v.z,
                }
            })
            .collect();
        let agree = rows.iter().all(|r| r.agree);
        let header: Vec<String> = [
            "m",
            "l",
            "delta_solve",
            "delta_oracle",
            "mse_monte_carlo",
            "stderr",
            "rel_gap_solve_oracle",
            "z_solve_monte_carlo",
            "z_oracle_monte_carlo",
            "agree",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let table = output::csv(
            "validate.csv",
            &meta,
            &header,
            rows.iter().map(|r| {
                vec![
                    r.m.to_string(),
                    r.l.to_string(),
                    format!("{:?}", r.delta_solve),
                    format!("{:?}", r.delta_oracle),
                    format!("{:?}", r.mse_monte_carlo),
                    format!("{:?}", r.stderr),
                    format!("{:?}", r.rel_gap_solve_oracle),
                    format!("{:?}", r.z_solve_monte_carlo),
                    format!("{:?}", r.z_oracle_monte_carlo),
                    r.agree.to_string(),
                ]
            }),
        );

        #[derive(Serialize)]
        struct Report<'a> {
            meta: &'a Meta,
            rng: &'static str,
            seed: u64,
            n_trials: usize,
            n_steps: usize,
            agree: bool,
            rows: Vec<Row>,
        }
        let bad = rows.iter().filter(|r| !r.agree).count();
        let summary = if agree {
            format!("validate: all {} channels agree", rows.len())
        } else {
            format!("validate: {bad} of {} channels disagree", rows.len())
        };
        let report =
            Report { meta: &meta, rng: RNG_NAME, seed: cfg.seed, n_trials: cfg.n_trials, n_steps: cfg.n_steps, agree, rows };
        let status = if agree { Status::Ok } else { Status::Disagreement };
        Ok((status, vec![output::json("validate.json", &report), table], summary))
    }

    fn minimax(&self) -> Result<Produced> {
        let meta = self.meta(Command::Minimax);
        let p = self.problem;
        let spec = p.file.class.as_ref().ok_or_else(|| CliError::Schema("minimax needs a `class` section".into()))?;
        let variant = ClassVariant::parse(&spec.variant).map_err(CliError::schema)?;
        let k = p.channels[0].k();
        if p.channels.iter().any(|c| c.k() != k) {
            return Err(CliError::Schema("minimax needs every channel to share K".into()));
        }
        if !variant.noisy() && p.channels.iter().any(|c| c.g.is_some()) {
            return Err(CliError::Schema(format!("class {variant} is noiseless but a channel specifies G")));
        }
        let n = p.n_lambda();
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, ch) in p.channels.iter().enumerate() {
            groups.entry(ch.m).or_default().push(i);
        }
        let degrees: Vec<usize> = groups.keys().copied().collect();
        let members: Vec<&Vec<usize>> = groups.values().collect();
        let params = model::class_params(&spec.params, k, n, degrees.len())?;
        let weighting = match spec.weighting {
            WeightingSpec::Unit => Weighting::Unit,
            WeightingSpec::Sphere { n } => Weighting::Sphere { n },
        };
        let weights = weighting.weights(&degrees).map_err(CliError::schema)?;
        let class = DensityClassSpec::from_variant(variant, &params, weights).map_err(CliError::schema)?;
        class.validate(k, n).map_err(CliError::schema)?;

        let channels: Vec<MinimaxChannel> = groups
            .iter()
            .map(|(&m, idx)| MinimaxChannel { m, functionals: idx.iter().map(|&i| p.channels[i].a.clone()).collect() })
            .collect();
        let init_f: Vec<_> = members.iter().map(|idx| p.channels[idx[0]].f.clone()).collect();
        let init_g = class.g.as_ref().map(|side| {
            match members.iter().map(|idx| p.channels[idx[0]].g.clone()).collect::<Option<Vec<_>>>() {
                Some(g) => g,
                None => side.seed(k, n, members.len()),
            }
        });
        let lf = find_least_favorable(&channels, &class, &init_f, init_g.as_deref(), &self.optimizer_options())?;

        let sopts = SolverOptions { window: Window::Fixed(lf.window), condition_warning: self.ceiling() };
        let per: Vec<(usize, EstimateSolution)> = in_order(
            members
                .iter()
                .enumerate()
                .flat_map(|(gi, idx)| idx.iter().map(move |&i| (gi, i)))
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|(gi, i)| {
                    let g0 = lf.g.as_ref().map(|g| &g[gi]);
                    Ok((i, minimax_characteristic(&lf.f[gi], g0, &p.channels[i].a, &sopts)?))
                })
                .collect(),
        )?;

        let mut artifacts = Vec::new();
        for (gi, m) in degrees.iter().enumerate() {
            artifacts.push(output::density_csv(&format!("f0_m{m}.csv"), &meta, &lf.f[gi]));
            if let Some(g) = &lf.g {
                artifacts.push(output::density_csv(&format!("g0_m{m}.csv"), &meta, &g[gi]));
            }
        }
        let mut solved_channels = Vec::new();
        for (i, sol) in &per {
            let ch = &p.channels[*i];
            let gi = degrees.iter().position(|&m| m == ch.m).expect("grouped");
            let rep = check_minimality(&lf.f[gi], lf.g.as_ref().map(|g| &g[gi]), self.ceiling())?;
            let min = MinimalitySummary {
                integral: rep.integral,
                condition: rep.condition,
                min_eigenvalue: rep.min_eigenvalue,
                max_eigenvalue: rep.max_eigenvalue,
                singular_nodes: rep.singular_nodes.len(),
                refinement_ratio: None,
                pass: rep.pass,
            };
            let rec = solved(ch, sol, min, "h0");
            artifacts.push(output::vector_grid_csv(&rec.h_csv, &meta, &sol.h_grid));
            solved_channels.push(rec);
        }

        #[derive(Serialize)]
        struct Report<'a> {
            meta: &'a Meta,
            status: &'static str,
            variant: String,
            class: String,
            degrees: Vec<usize>,
            weights: Vec<f64>,
            objective: f64,
            iterations: usize,
            window: usize,
            pull: f64,
            history: Vec<f64>,
            saddle: SaddleOut,
            f0_csv: Vec<String>,
            g0_csv: Option<Vec<String>>,
            channels: Vec<SolvedChannel>,
        }
        let status = if lf.converged { Status::Ok } else { Status::NotConverged };
        let summary = format!(
            "minimax: {} after {} iterations, objective = {:.12e}, residuals {:.2e} / {:.2e}",
            if lf.converged { "converged" } else { "NOT_CONVERGED" },
            lf.iterations,
            lf.objective,
            lf.report.residual_f,
            lf.report.residual_g
        );
        let report = Report {
            meta: &meta,
            status: if lf.converged { "CONVERGED" } else { "NOT_CONVERGED" },
            variant: variant.to_string(),
            class: match &class.g {
                Some(g) => format!("{} x {}", class.f.describe(), g.describe()),
                None => class.f.describe(),
            },
            degrees: degrees.clone(),
            weights: class.weights.clone(),
            objective: lf.objective,
            iterations: lf.iterations,
            window: lf.window,
            pull: lf.pull,
            history: lf.history.clone(),
            saddle: saddle_out(&lf.report),
            f0_csv: degrees.iter().map(|m| format!("f0_m{m}.csv")).collect(),
            g0_csv: lf.g.as_ref().map(|_| degrees.iter().map(|m| format!("g0_m{m}.csv")).collect()),
            channels: solved_channels,
        };
        artifacts.insert(0, output::json("minimax.json", &report));
        Ok((status, artifacts, summary))
    }
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
enum PointwiseOut {
    None,
    /// `[degree][node][component]`
    Scalars(Vec<Vec<Vec<f64>>>),
    /// `[degree][node]` matrices
    Matrices(Vec<Vec<Vec<Vec<[f64; 2]>>>>),
}

#[derive(Debug, Serialize)]
struct MultipliersOut {
    level: Vec<f64>,
    level_matrix: Option<Vec<Vec<[f64; 2]>>>,
    pointwise: PointwiseOut,
}

#[derive(Debug, Serialize)]
struct SaddleOut {
    mode: &'static str,
    objective: f64,
    residual_f: f64,
    residual_g: f64,
    multipliers_f: MultipliersOut,
    multipliers_g: Option<MultipliersOut>,
}

fn multipliers_out(m: &Multipliers) -> MultipliersOut {
    MultipliersOut {
        level: m.level.clone(),
        level_matrix: m.level_matrix.as_ref().map(output::matrix),
        pointwise: match &m.pointwise {
            Pointwise::None => PointwiseOut::None,
            Pointwise::Scalars(s) => PointwiseOut::Scalars(s.clone()),
            Pointwise::Matrices(f) => {
                PointwiseOut::Matrices(f.iter().map(|ch| ch.iter().map(output::matrix).collect()).collect())
            }
        },
    }
}

fn saddle_out(r: &SaddleReport) -> SaddleOut {
    use pcfield_core::extrapolate::SolveMode;
    SaddleOut {
        mode: match r.mode {
            SolveMode::Noisy => "noisy",
            SolveMode::Noiseless => "noiseless",
            SolveMode::Factorized => "factorized",
        },
        objective: r.objective,
        residual_f: r.residual_f,
        residual_g: r.residual_g,
        multipliers_f: multipliers_out(&r.multipliers_f),
        multipliers_g: r.multipliers_g.as_ref().map(multipliers_out),
    }
}
