//! Command-line front end: strict JSON configuration, subcommand dispatch
//! and CSV/JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::brw::{many_to_one_check, sample_mu_t, skeleton_diagnostics, DEFAULT_CAP};
use crate::error::{Error, Result};
use crate::fixed_point::{
    factorization_diagnostic, fixed_point_residual, iterate_to_fixed_point, FactorizationOptions, FixedPointPool,
};
use crate::initial::{check_membership, symmetric_stable, InitialLaw, InitialSpec};
use crate::rng::SeedTree;
use crate::solver::{exponent_contrast, scaling_study, StudyOptions, DEFAULT_BOOTSTRAP};
use crate::spectral::{
    characteristic_index_curve, classify_regime, find_theta_star, phi, screen_assumptions, Evaluation, Regime,
    SpectralProfile, SpectralSource, DEFAULT_BRACKET, DEFAULT_TOL,
};
use crate::stats::{mean_se, median, quantile};
use crate::weights::{ModelSpec, WeightModel};

#[derive(Debug, Parser)]
#[command(name = "kinetic-brw", version, about = "Branching random walk Monte Carlo for kinetic-type equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate Φ and F on a θ grid.
    Spectral(#[command(flatten)] Common),
    /// Locate the minimizer ϑ of F and classify the regime.
    Theta(#[command(flatten)] Common),
    /// Sample U_t at one time.
    Simulate(#[command(flatten)] Common),
    /// Rescaled convergence study on a time grid.
    ScalingStudy {
        #[command(flatten)]
        common: Common,
        /// Comma-separated times.
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_parser = parse_regime)]
        regime_override: Option<Regime>,
    },
    /// Population dynamics for the smoothing fixed point.
    FixedPoint {
        #[command(flatten)]
        common: Common,
        /// CSV with a `value` column used as the seed pool.
        #[arg(long)]
        seed_from: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        ks_tol: Option<f64>,
    },
    /// Screen the model and initial law against the standing assumptions.
    CheckAssumptions(#[command(flatten)] Common),
    /// Many-to-one and skeleton martingale diagnostics.
    Martingales(#[command(flatten)] Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectral(_) => "spectral",
            Command::Theta(_) => "theta",
            Command::Simulate(_) => "simulate",
            Command::ScalingStudy { .. } => "scaling-study",
            Command::FixedPoint { .. } => "fixed-point",
            Command::CheckAssumptions(_) => "check-assumptions",
            Command::Martingales(_) => "martingales",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Spectral(c)
            | Command::Theta(c)
            | Command::Simulate(c)
            | Command::CheckAssumptions(c)
            | Command::Martingales(c) => c,
            Command::ScalingStudy { common, .. } | Command::FixedPoint { common, .. } => common,
        }
    }
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    match s.replace('-', "_").as_str() {
        "subcritical" => Ok(Regime::Subcritical),
        "boundary" => Ok(Regime::Boundary),
        "beyond_boundary" => Ok(Regime::BeyondBoundary),
        _ => Err(format!("unknown regime `{s}` (subcritical, boundary, beyond-boundary)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub scaling_study: ScalingConfig,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
    #[serde(default)]
    pub check_assumptions: AssumptionsConfig,
    #[serde(default)]
    pub martingales: MartingalesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    /// Particle cap per replicate.
    pub cap: usize,
    pub samples: usize,
    pub bootstrap: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, samples: 10_000, bootstrap: DEFAULT_BOOTSTRAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMethod {
    Auto,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub thetas: Vec<f64>,
    pub method: EvalMethod,
    pub draws: usize,
    pub bracket: (f64, f64),
    pub tol: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            thetas: vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            method: EvalMethod::Auto,
            draws: 100_000,
            bracket: DEFAULT_BRACKET,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub t: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { t: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub t_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub ks_tol: f64,
    pub iqr_floor: f64,
    pub regime_override: Option<Regime>,
    /// Number of final grid times used by the wrong-exponent contrast.
    pub contrast_last: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        let d = StudyOptions::default();
        Self {
            t_grid: d.t_grid,
            xi_grid: d.xi_grid,
            ks_tol: d.ks_tol,
            iqr_floor: d.iqr_floor,
            regime_override: None,
            contrast_last: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointConfig {
    pub seed_from: Option<PathBuf>,
    pub iters: usize,
    pub ks_tol: f64,
    /// Size of the symmetric stable pool used without `seed_from`.
    pub pool_size: usize,
    /// Replaces `F(ϑ)` in the smoothing map.
    pub f_theta: Option<f64>,
    pub factorization: bool,
    pub factorization_replicates: usize,
    pub factorization_generations: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        let f = FactorizationOptions::default();
        Self {
            seed_from: None,
            iters: 50,
            ks_tol: 0.05,
            pool_size: 10_000,
            f_theta: None,
            factorization: false,
            factorization_replicates: f.replicates,
            factorization_generations: f.generations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssumptionsConfig {
    pub draws: usize,
    pub index_grid: Vec<f64>,
}

impl Default for AssumptionsConfig {
    fn default() -> Self {
        Self { draws: 100_000, index_grid: (1..=40).map(|k| k as f64 * 0.1).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MartingalesConfig {
    pub delta: f64,
    pub n_max: usize,
    pub replicates: usize,
    /// Time of the many-to-one check.
    pub t: f64,
    /// θ values of the many-to-one check; `ϑ` is always added.
    pub thetas: Vec<f64>,
}

impl Default for MartingalesConfig {
    fn default() -> Self {
        Self { delta: 1.0, n_max: 5, replicates: 10_000, t: 2.0, thetas: vec![0.0, 1.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    /// Parse strictly; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn model(&self) -> Result<WeightModel> {
        WeightModel::new(self.model.clone())
    }

    pub fn initial_law(&self) -> Result<InitialLaw> {
        let spec = self
            .initial
            .as_ref()
            .ok_or_else(|| Error::Config("this subcommand needs an `initial` block".into()))?;
        InitialLaw::from_spec(spec)
    }
}

/// Git-style content hash: SHA-256 of `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ValueRow {
    index: usize,
    value: f64,
}

fn value_rows(values: &[f64]) -> Vec<ValueRow> {
    values.iter().enumerate().map(|(index, &value)| ValueRow { index, value }).collect()
}

/// Read the `value` column of a CSV file.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    struct Row {
        value: f64,
    }
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<Row>() {
        out.push(row?.value);
    }
    Ok(out)
}

fn build_profile(cfg: &RunConfig, model: &WeightModel, seeds: &SeedTree) -> Result<SpectralProfile> {
    let source = match cfg.spectral.method {
        EvalMethod::Auto => SpectralSource::exact(model)?,
        EvalMethod::MonteCarlo => {
            SpectralSource::monte_carlo(model, cfg.spectral.draws, &mut seeds.child("spectral-source").stream(0))
        }
    };
    find_theta_star(source, cfg.spectral.bracket, cfg.spectral.tol)
}

/// Outcome of one run: the `result` block of `summary.json` and the files written.
pub struct RunOutput {
    pub result: Value,
    pub files: Vec<PathBuf>,
}

/// Execute a subcommand with a validated configuration.
pub fn run(command: &Command, cfg: &RunConfig, seed: u64, out: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out)?;
    let model = cfg.model()?;
    let seeds = SeedTree::new(seed).child(command.name());
    let mut files = Vec::new();
    let mut csv_out = |name: &str| {
        let p = out.join(name);
        files.push(p.clone());
        p
    };
    let result = match command {
        Command::Spectral(_) => {
            #[derive(Serialize)]
            struct Row {
                theta: f64,
                phi: f64,
                phi_se: f64,
                f: Option<f64>,
                method: crate::weights::Method,
            }
            let eval = match cfg.spectral.method {
                EvalMethod::Auto => Evaluation::Auto,
                EvalMethod::MonteCarlo => Evaluation::MonteCarlo { draws: cfg.spectral.draws },
            };
            let rows = cfg
                .spectral
                .thetas
                .iter()
                .enumerate()
                .map(|(i, &theta)| {
                    let v = phi(&model, theta, eval, &mut seeds.stream(i as u64))?;
                    Ok(Row {
                        theta,
                        phi: v.value,
                        phi_se: v.se,
                        f: (theta > 0.0).then(|| v.value / theta),
                        method: v.method,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_csv(&csv_out("spectral.csv"), &rows)?;
            json!({ "points": rows.len() })
        }
        Command::Theta(_) => {
            let profile = build_profile(cfg, &model, &seeds)?;
            let m = *profile.minimizer()?;
            let regime = match &cfg.initial {
                Some(_) => Some(classify_regime(&profile, cfg.initial_law()?.gamma, None)?),
                None => None,
            };
            #[derive(Serialize)]
            struct Row {
                theta_star: f64,
                theta_se: f64,
                phi: f64,
                f: f64,
                d_residual: f64,
                method: crate::weights::Method,
            }
            write_csv(
                &csv_out("theta.csv"),
                &[Row {
                    theta_star: m.theta_star,
                    theta_se: m.theta_se,
                    phi: m.phi,
                    f: m.f,
                    d_residual: m.d_residual,
                    method: profile.method(),
                }],
            )?;
            json!({ "theta_star": m.theta_star, "theta_se": m.theta_se, "f": m.f, "phi": m.phi, "regime": regime })
        }
        Command::Simulate(_) => {
            let law = cfg.initial_law()?;
            let t = cfg.simulate.t;
            let set = sample_mu_t(&model, &law, t, cfg.budgets.samples, &seeds, cfg.budgets.cap)?;
            write_csv(&csv_out("samples.csv"), &value_rows(set.values()))?;
            let v = set.values();
            json!({
                "t": t,
                "samples": set.count(),
                "mean": mean_se(v),
                "median": median(v)?,
                "q25": quantile(v, 0.25)?,
                "q75": quantile(v, 0.75)?,
            })
        }
        Command::ScalingStudy { t_grid, samples, regime_override, .. } => {
            let law = cfg.initial_law()?;
            let profile = build_profile(cfg, &model, &seeds)?;
            let sc = &cfg.scaling_study;
            let opts = StudyOptions {
                t_grid: t_grid.clone().unwrap_or_else(|| sc.t_grid.clone()),
                n_samples: samples.unwrap_or(cfg.budgets.samples),
                cap: cfg.budgets.cap,
                xi_grid: sc.xi_grid.clone(),
                bootstrap: cfg.budgets.bootstrap,
                ks_tol: sc.ks_tol,
                iqr_floor: sc.iqr_floor,
                regime_override: regime_override.or(sc.regime_override),
            };
            let res = scaling_study(&model, &law, &profile, &opts, &seeds)?;
            #[derive(Serialize)]
            struct Row {
                t: f64,
                diagnostic: &'static str,
                xi: Option<f64>,
                value: f64,
                se: Option<f64>,
                ci_lo: Option<f64>,
                ci_hi: Option<f64>,
            }
            let mut rows = Vec::new();
            for r in &res.rows {
                let row = |diagnostic, value| Row { t: r.t, diagnostic, xi: None, value, se: None, ci_lo: None, ci_hi: None };
                rows.push(row("factor", r.factor));
                if let Some(k) = r.ks_prev {
                    rows.push(row("ks_prev", k));
                    rows.push(row("ks_crit_1pct", r.ks_crit_1pct.unwrap_or(f64::NAN)));
                }
                rows.push(row("iqr", r.iqr));
                rows.push(row("median_abs", r.median_abs));
                rows.push(Row { se: Some(r.mean.se), ..row("mean_unscaled", r.mean.value) });
                if let Some(m) = r.mean_expected {
                    rows.push(row("mean_expected", m));
                }
                for c in &r.cf {
                    rows.push(Row { xi: Some(c.xi), ci_lo: Some(c.re_ci.0), ci_hi: Some(c.re_ci.1), ..row("cf_re", c.re) });
                    rows.push(Row { xi: Some(c.xi), ci_lo: Some(c.im_ci.0), ci_hi: Some(c.im_ci.1), ..row("cf_im", c.im) });
                }
            }
            write_csv(&csv_out("scaling_study.csv"), &rows)?;
            let terminal = res.scaled.last().expect("non-empty grid");
            write_csv(&csv_out("terminal_samples.csv"), &value_rows(terminal.values()))?;
            let contrast = match res.regime.regime {
                Regime::BeyondBoundary if sc.contrast_last >= 3 && res.raw.len() >= sc.contrast_last => {
                    Some(exponent_contrast(&res, 1.0 / (2.0 * res.regime.theta_star), sc.contrast_last)?)
                }
                _ => None,
            };
            json!({
                "regime": res.regime,
                "verdict": res.verdict,
                "warnings": res.warnings,
                "contrast": contrast,
            })
        }
        Command::FixedPoint { seed_from, iters, ks_tol, .. } => {
            let profile = build_profile(cfg, &model, &seeds)?;
            let m = *profile.minimizer()?;
            let fc = &cfg.fixed_point;
            let f_theta = fc.f_theta.unwrap_or(m.f);
            let pool = match seed_from.as_ref().or(fc.seed_from.as_ref()) {
                Some(p) => read_values(p)?,
                None => {
                    if m.theta_star >= 2.0 {
                        return Err(Error::Precondition(format!(
                            "a stable seed pool needs theta* < 2, got {}; pass --seed-from",
                            m.theta_star
                        )));
                    }
                    let s = seeds.child("seed-pool");
                    (0..fc.pool_size as u64).map(|i| symmetric_stable(m.theta_star, &mut s.stream(i))).collect()
                }
            };
            let pool = FixedPointPool::new(pool)?;
            let (pool, report) = iterate_to_fixed_point(
                pool,
                &model,
                f_theta,
                iters.unwrap_or(fc.iters),
                ks_tol.unwrap_or(fc.ks_tol),
                &seeds,
            )?;
            #[derive(Serialize)]
            struct Row {
                iteration: usize,
                ks: Option<f64>,
                median_abs: f64,
            }
            let rows: Vec<Row> = report
                .scale_tracker
                .iter()
                .enumerate()
                .map(|(i, &median_abs)| Row { iteration: i, ks: i.checked_sub(1).map(|j| report.ks[j]), median_abs })
                .collect();
            write_csv(&csv_out("fixed_point_iterations.csv"), &rows)?;
            write_csv(&csv_out("pool.csv"), &value_rows(pool.samples()))?;
            let residual = fixed_point_residual(&pool, &model, f_theta, &seeds)?;
            let factorization = if fc.factorization {
                let opts = FactorizationOptions {
                    replicates: fc.factorization_replicates,
                    generations: fc.factorization_generations,
                    cap: cfg.budgets.cap,
                };
                Some(factorization_diagnostic(&pool, &model, &profile, &opts, &seeds)?)
            } else {
                None
            };
            json!({
                "f_theta": f_theta,
                "report": report,
                "residual": residual,
                "factorization": factorization,
            })
        }
        Command::CheckAssumptions(_) => {
            let profile = build_profile(cfg, &model, &seeds)?;
            let ac = &cfg.check_assumptions;
            let rep = screen_assumptions(&model, &profile, ac.draws, &mut seeds.child("screen").stream(0))?;
            let curve = characteristic_index_curve(&profile, &ac.index_grid)?;
            #[derive(Serialize)]
            struct Row {
                check: &'static str,
                estimate: f64,
                se: f64,
                pass: bool,
            }
            let screen = |check, s: crate::spectral::Screen| Row {
                check,
                estimate: s.estimate.value,
                se: s.estimate.se,
                pass: s.finite,
            };
            let mut rows = vec![
                Row { check: "theta_below_2", estimate: rep.theta_star, se: 0.0, pass: rep.theta_star < 2.0 },
                screen("second_moment", rep.second_moment),
                screen("x_log2_x", rep.x_log2_x),
                screen("xt_log_xt", rep.xt_log_xt),
                Row {
                    check: "expected_offspring",
                    estimate: rep.expected_offspring.value,
                    se: rep.expected_offspring.se,
                    pass: rep.non_explosion,
                },
            ];
            let membership = match &cfg.initial {
                Some(_) => {
                    let law = cfg.initial_law()?;
                    let m = check_membership(&law, law.gamma, ac.draws, &mut seeds.child("membership").stream(0))?;
                    rows.push(Row { check: "initial_membership", estimate: m.mc_moment.value, se: m.mc_moment.se, pass: m.member });
                    Some(m)
                }
                None => None,
            };
            write_csv(&csv_out("assumptions.csv"), &rows)?;
            #[derive(Serialize)]
            struct CurveRow {
                t: f64,
                m: Option<f64>,
            }
            let crow: Vec<CurveRow> = curve.points.iter().map(|&(t, m)| CurveRow { t, m }).collect();
            write_csv(&csv_out("index_curve.csv"), &crow)?;
            json!({ "assumptions": rep, "alpha": curve.alpha, "membership": membership })
        }
        Command::Martingales(_) => {
            let profile = build_profile(cfg, &model, &seeds)?;
            let mc = &cfg.martingales;
            let theta_star = profile.theta_star()?;
            let mut thetas = mc.thetas.clone();
            thetas.push(theta_star);
            let m2o = thetas
                .iter()
                .enumerate()
                .map(|(i, &theta)| {
                    many_to_one_check(&model, &profile, mc.t, theta, mc.replicates, &seeds.child_index(i as u64), cfg.budgets.cap)
                })
                .collect::<Result<Vec<_>>>()?;
            #[derive(Serialize)]
            struct M2oRow {
                t: f64,
                theta: f64,
                estimate: f64,
                se: f64,
                expected: f64,
                z: f64,
                truncated: usize,
            }
            let rows: Vec<M2oRow> = m2o
                .iter()
                .map(|r| M2oRow {
                    t: r.t,
                    theta: r.theta,
                    estimate: r.estimate.value,
                    se: r.estimate.se,
                    expected: r.expected,
                    z: r.z,
                    truncated: r.truncated_replicates,
                })
                .collect();
            write_csv(&csv_out("many_to_one.csv"), &rows)?;
            let sk = skeleton_diagnostics(&model, &profile, mc.delta, mc.n_max, mc.replicates, &seeds, cfg.budgets.cap)?;
            #[derive(Serialize)]
            struct SkRow {
                n: usize,
                w: f64,
                w_se: f64,
                d: f64,
                d_se: f64,
                v2: f64,
                v2_se: f64,
                min_v_recentred: f64,
                min_v_se: f64,
            }
            let srows: Vec<SkRow> = sk
                .rows
                .iter()
                .map(|r| SkRow {
                    n: r.n,
                    w: r.additive.value,
                    w_se: r.additive.se,
                    d: r.derivative.value,
                    d_se: r.derivative.se,
                    v2: r.second.value,
                    v2_se: r.second.se,
                    min_v_recentred: r.recentred_min.value,
                    min_v_se: r.recentred_min.se,
                })
                .collect();
            write_csv(&csv_out("skeleton.csv"), &srows)?;
            json!({ "theta_star": theta_star, "sigma2": sk.sigma2, "valid": sk.valid && m2o.iter().all(|r| r.valid) })
        }
    };
    Ok(RunOutput { result, files })
}

/// Parse, run and write `summary.json`. Returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let common = cli.command.common();
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let cfg = RunConfig::from_json(&text)?;
    let seed = common
        .seed
        .or(cfg.seed)
        .ok_or_else(|| Error::Config("no seed given: set `seed` in the configuration or pass --seed".into()))?;
    if let Some(0) = common.threads {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let start = Instant::now();
    let output = pool.install(|| run(&cli.command, &cfg, seed, &out))?;
    let summary = json!({
        "command": cli.command.name(),
        "config": serde_json::to_value(&cfg)?,
        "config_hash": content_hash(text.as_bytes()),
        "seed": seed,
        "threads": pool.current_num_threads(),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "files": output.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "result": output.result,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_schema() {
        let ok = r#"{"model": {"kind": "power_uniform_split", "a": 2.0}, "seed": 1}"#;
        assert!(RunConfig::from_json(ok).is_ok());
        let extra = r#"{"model": {"kind": "kac"}, "sede": 1}"#;
        assert!(RunConfig::from_json(extra).is_err());
        let nested = r#"{"model": {"kind": "kac"}, "budgets": {"capp": 3}}"#;
        assert!(RunConfig::from_json(nested).is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = RunConfig::from_json("{\n  \"model\": {\"kind\": \"kac\"},\n  oops\n}").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("column"), "{msg}");
    }

    #[test]
    fn git_blob_hash() {
        // `printf 'hello\n' | git hash-object --stdin` under SHA-256 object format
        assert_eq!(
            content_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn regime_names() {
        assert_eq!(parse_regime("beyond-boundary"), Ok(Regime::BeyondBoundary));
        assert!(parse_regime("critical").is_err());
    }
}
