//! Command-line front end. [`run_command`] parses arguments, runs one
//! subcommand and returns the process exit code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::covariance::SpatialDesign;
use crate::data::{uniform_scores, ReplicateMatrix};
use crate::diagnostics::{gof_deltas, TailSummary};
use crate::error::Error;
use crate::fit::{fit, select_variable_order, FitConfig, FitResult, LoadingMask};
use crate::ingest::{ingest_detrend, DetrendOptions};
use crate::interpolate::{back_transform, ConditionalCopula, MarginalModel, PredictionRequest};
use crate::io::{self, fmt_f64, ModelParams};
use crate::margins::FactorLoadings;
use crate::optimize::NelderMeadOptions;
use crate::quadrature::DEFAULT_NODES;
use crate::simulate::{empirical_dependence_curves, fig1_data, simulate, FactorLaw, SimulationConfig};
use crate::svg::fig1_svg;
use crate::tails::{lambda_pareto_within, lambda_within_pair, nugget_pareto, stable_tail_exponential, stable_tail_pareto};

#[derive(Debug, Parser)]
#[command(name = "corlmc", version, about = "Factor-copula coregionalization models for multivariate spatial data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; relative paths inside it are resolved against its directory
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory (created if missing)
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Gauss–Legendre nodes per panel
    #[arg(long, global = true, default_value_t = DEFAULT_NODES)]
    nodes: usize,
    /// Fix the idiosyncratic loadings of the last variable at zero (default)
    #[arg(long, global = true, overrides_with = "no_constrain_alpha2")]
    constrain_alpha2: bool,
    /// Estimate every loading
    #[arg(long, global = true, overrides_with = "constrain_alpha2")]
    no_constrain_alpha2: bool,
    /// Factor law: exp, pareto:<k> or weibull:<kappa>
    #[arg(long, global = true, default_value = "exp", value_parser = parse_law)]
    factor: FactorLaw,
    /// Thresholds for the empirical tail coefficients
    #[arg(long, global = true, value_delimiter = ',', default_value = "0.01,0.05,0.10")]
    q_grid: Vec<f64>,
}

fn parse_law(s: &str) -> std::result::Result<FactorLaw, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw replicates from a parametrized model
    Simulate,
    /// Maximum pseudo-likelihood fit to observed replicates
    Fit,
    /// Compare data with replicates simulated from a fitted model
    Gof,
    /// Closed-form and empirical tail dependence
    Taildep,
    /// Conditional copula prediction at new locations
    Interpolate,
    /// Spearman's rho and tail coefficients for the three transect models
    Fig1,
}

/// Settings read from `--config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Locations CSV (`id,x[,y]`).
    pub locations: Option<PathBuf>,
    pub p: usize,
    /// Replicates in long CSV.
    pub data: Option<PathBuf>,
    /// Raw observations to detrend instead of `data`.
    pub raw: Option<PathBuf>,
    pub detrend: Vec<DetrendOptions>,
    /// True parameters (simulate, taildep) or starting values (fit).
    pub model: Option<ModelParams>,
    /// A `fit.json` written by the fit command.
    pub fitted: Option<PathBuf>,
    pub n_replicates: usize,
    /// Replicates simulated from the fitted model for `gof`.
    pub model_replicates: usize,
    pub select_order: bool,
    pub free_rho: bool,
    pub free_exponents: bool,
    pub optimizer: NelderMeadOptions,
    pub predict: Option<PredictConfig>,
    pub fig1_replicates: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            locations: None,
            p: 2,
            data: None,
            raw: None,
            detrend: Vec::new(),
            model: None,
            fitted: None,
            n_replicates: 500,
            model_replicates: 100_000,
            select_order: false,
            free_rho: false,
            free_exponents: false,
            optimizer: NelderMeadOptions::default(),
            predict: None,
            fig1_replicates: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Coordinates of the new locations.
    pub locations: Vec<Vec<f64>>,
    /// 1-based variable to predict.
    pub variable: usize,
    /// 0-based replicates to condition on; all when omitted.
    #[serde(default)]
    pub replicates: Option<Vec<usize>>,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(msg.into()))
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Runs the command line `args` (including the program name) and returns the
/// exit code: 0 success, 1 runtime or numerical failure, 2 usage error.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Ok(t) = std::env::var("CORLMC_THREADS") {
        match t.parse::<usize>() {
            Ok(n) if n > 0 => {
                // only the first call in a process can size the global pool
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error[config]: CORLMC_THREADS must be a positive integer, got `{}`", one_line(&t));
                return 2;
            }
        }
    }
    match run(&cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error[config]: {}", one_line(&msg));
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error[{}]: {}", e.kind(), one_line(&e.to_string()));
            1
        }
    }
}

struct Context {
    config: RunConfig,
    base: PathBuf,
}

impl Context {
    fn load(cli: &Cli) -> Outcome<Self> {
        let Some(path) = &cli.config else {
            return Ok(Context {
                config: RunConfig::default(),
                base: PathBuf::from("."),
            });
        };
        let text = fs::read_to_string(path).or_else(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig =
            serde_json::from_str(&text).or_else(|e| usage(format!("bad config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(Context { config, base })
    }

    fn path(&self, p: &Option<PathBuf>, what: &str) -> Outcome<PathBuf> {
        match p {
            Some(p) if p.is_absolute() => Ok(p.clone()),
            Some(p) => Ok(self.base.join(p)),
            None => usage(format!("the config needs `{what}`")),
        }
    }

    fn design(&self) -> Outcome<SpatialDesign> {
        let path = self.path(&self.config.locations, "locations")?;
        Ok(io::load_design(&path, self.config.p)?)
    }

    fn data(&self, design: &SpatialDesign) -> Outcome<ReplicateMatrix> {
        if self.config.data.is_some() {
            return Ok(io::load_replicates(&self.path(&self.config.data, "data")?, design)?);
        }
        if self.config.raw.is_some() {
            let raw = io::read_observations(fs::File::open(self.path(&self.config.raw, "raw")?).map_err(Error::from)?)?;
            let options = if self.config.detrend.is_empty() {
                vec![DetrendOptions::default(); design.p()]
            } else {
                self.config.detrend.clone()
            };
            return Ok(ingest_detrend(&raw, design, &options)?.0);
        }
        usage("the config needs `data` or `raw`")
    }

    fn model(&self) -> Outcome<ModelParams> {
        if let Some(m) = &self.config.model {
            return Ok(m.clone());
        }
        if self.config.fitted.is_some() {
            let f = self.fitted()?;
            return Ok(ModelParams {
                loadings: f.loadings,
                covariance: f.covariance,
                mask: Some(f.mask),
            });
        }
        usage("the config needs `model` or `fitted`")
    }

    fn fitted(&self) -> Outcome<FitResult> {
        Ok(io::read_json(&self.path(&self.config.fitted, "fitted")?)?)
    }
}

fn run(cli: &Cli) -> Outcome<()> {
    let ctx = Context::load(cli)?;
    if cli.nodes < 2 {
        return usage("--nodes must be at least 2");
    }
    if cli.q_grid.iter().any(|&q| !(q > 0.0 && q < 0.5)) {
        return usage("--q-grid values must lie in (0, 0.5)");
    }
    fs::create_dir_all(&cli.out).map_err(Error::from)?;
    match cli.command {
        Command::Simulate => cmd_simulate(cli, &ctx),
        Command::Fit => cmd_fit(cli, &ctx),
        Command::Gof => cmd_gof(cli, &ctx),
        Command::Taildep => cmd_taildep(cli, &ctx),
        Command::Interpolate => cmd_interpolate(cli, &ctx),
        Command::Fig1 => cmd_fig1(cli, &ctx),
    }
}

fn cmd_simulate(cli: &Cli, ctx: &Context) -> Outcome<()> {
    let design = ctx.design()?;
    let model = ctx.model()?;
    let cfg = SimulationConfig::new(design.clone(), model.covariance.spec()?, model.loadings.clone(), ctx.config.n_replicates)
        .with_seed(cli.seed)
        .with_law(cli.factor);
    let data = simulate(&cfg)?;
    io::save_replicates(&cli.out.join("replicates.csv"), &data)?;
    io::write_locations(fs::File::create(cli.out.join("locations.csv")).map_err(Error::from)?, design.locations())?;
    io::write_json(&cli.out.join("params.json"), &model)?;
    Ok(())
}

fn fit_config(cli: &Cli, ctx: &Context, p: usize) -> Outcome<FitConfig> {
    if p != 2 {
        return usage("fitting needs p = 2");
    }
    let mut config = FitConfig::shared_exponential();
    if let Some(m) = &ctx.config.model {
        config.covariance = m.covariance.clone();
        config.start_loadings = Some(m.loadings.clone());
        config.moment_start = false;
    }
    config.mask = match ctx.config.model.as_ref().and_then(|m| m.mask.clone()) {
        Some(mask) => mask,
        None if cli.no_constrain_alpha2 => LoadingMask::full(p),
        None => LoadingMask::last_idiosyncratic_zero(p),
    };
    config.free_rho = ctx.config.free_rho;
    config.free_exponents = ctx.config.free_exponents;
    config.nodes = cli.nodes;
    config.optimizer = ctx.config.optimizer.clone();
    Ok(config)
}

fn cmd_fit(cli: &Cli, ctx: &Context) -> Outcome<()> {
    let design = ctx.design()?;
    let data = ctx.data(&design)?;
    let scores = uniform_scores(&data)?;
    let config = fit_config(cli, ctx, design.p())?;
    let result = if ctx.config.select_order {
        select_variable_order(&scores, &design, &config)?.0
    } else {
        fit(&scores, &design, &config)?
    };
    io::write_json(&cli.out.join("fit.json"), &result)?;
    Ok(())
}

fn model_scores(cli: &Cli, ctx: &Context, design: &SpatialDesign) -> Outcome<crate::data::UniformScores> {
    let (loadings, covariance) = if ctx.config.fitted.is_some() {
        let f = ctx.fitted()?;
        let (l, c) = if f.variable_order == [1, 0] {
            (f.loadings.swapped(), f.covariance.swapped())
        } else {
            (f.loadings, f.covariance)
        };
        (l, c)
    } else {
        let m = ctx.model()?;
        (m.loadings, m.covariance)
    };
    let cfg = SimulationConfig::new(design.clone(), covariance.spec()?, loadings, ctx.config.model_replicates)
        .with_seed(cli.seed)
        .with_law(cli.factor);
    Ok(uniform_scores(&simulate(&cfg)?)?)
}

/// Rows `group,statistic,value` of a goodness-of-fit summary.
pub fn gof_table(summary: &TailSummary) -> Vec<(String, &'static str, f64)> {
    let mut rows = Vec::new();
    for g in &summary.groups {
        let label = g.group.label();
        for (name, v) in [
            ("S_rho", g.mean_spearman),
            ("rho_N", g.mean_rho_normal),
            ("rho_L", g.mean_rho_lower),
            ("rho_U", g.mean_rho_upper),
            ("delta_rho", g.delta_rho),
            ("abs_delta_rho", g.abs_delta_rho),
            ("delta_L", g.delta_lower),
            ("abs_delta_L", g.abs_delta_lower),
            ("delta_U", g.delta_upper),
            ("abs_delta_U", g.abs_delta_upper),
        ] {
            rows.push((label.clone(), name, v));
        }
    }
    rows
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Outcome<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(header).map_err(Error::from)?;
    for r in rows {
        w.write_record(&r).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn cmd_gof(cli: &Cli, ctx: &Context) -> Outcome<()> {
    let design = ctx.design()?;
    let data = uniform_scores(&ctx.data(&design)?)?;
    let model = model_scores(cli, ctx, &design)?;
    let summary = gof_deltas(&data, &model, &cli.q_grid)?;
    write_csv(
        &cli.out.join("gof.csv"),
        &["group", "statistic", "value"],
        gof_table(&summary).into_iter().map(|(g, s, v)| vec![g, s.to_string(), fmt_f64(v)]),
    )?;
    io::write_json(&cli.out.join("gof.json"), &summary.groups)?;
    Ok(())
}

fn cmd_taildep(cli: &Cli, ctx: &Context) -> Outcome<()> {
    let design = ctx.design()?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |quantity: &str, pair: &str, j: usize, q: Option<f64>, value: f64| {
        rows.push(vec![
            quantity.to_string(),
            pair.to_string(),
            design.locations()[0].id.to_string(),
            design.locations()[j].id.to_string(),
            fmt_f64(design.distance(0, j)),
            q.map(fmt_f64).unwrap_or_default(),
            fmt_f64(value),
        ]);
    };
    if ctx.config.model.is_some() || ctx.config.fitted.is_some() {
        let model = ctx.model()?;
        let spec = model.covariance.spec()?;
        let l = &model.loadings;
        if l.p() != design.p() {
            return usage("model and design disagree on the number of variables");
        }
        for j in 0..design.n() {
            let d = design.distance(0, j);
            for (i, v) in l.variables.iter().enumerate() {
                let pair = format!("variable{}", i + 1);
                match cli.factor {
                    FactorLaw::Exponential if j > 0 => {
                        let (lo, up) = lambda_within_pair(spec.correlation(i, i, d), v)?;
                        push("lambda_L", &pair, j, None, lo);
                        push("lambda_U", &pair, j, None, up);
                    }
                    FactorLaw::Pareto { k } if j > 0 && v.alpha0_upper > 0.0 => {
                        push("lambda_U", &pair, j, None, lambda_pareto_within(v.alpha0_upper, v.alpha_upper, k)?);
                    }
                    FactorLaw::Pareto { k } if j == 0 && k > 2.0 => {
                        push("nugget", &pair, j, None, nugget_pareto(v.alpha0_upper, v.alpha_upper, k)?);
                    }
                    _ => {}
                }
            }
            if l.p() == 2 {
                let upper_only = FactorLoadings::from_vectors(&l.upper_vector(), &[0.0; 4])?;
                let value = match cli.factor {
                    FactorLaw::Exponential if l.lower_vector().iter().all(|&a| a == 0.0) => {
                        Some(2.0 - stable_tail_exponential(1.0, 1.0, &upper_only, spec.correlation(0, 1, d))?)
                    }
                    FactorLaw::Pareto { k } if l.variables.iter().all(|v| v.alpha0_upper > 0.0) => {
                        Some(2.0 - stable_tail_pareto(1.0, 1.0, &upper_only, k)?)
                    }
                    _ => None,
                };
                if let Some(v) = value {
                    push("lambda_U", "cross", j, None, v);
                }
            }
        }
    }
    if ctx.config.data.is_some() || ctx.config.raw.is_some() {
        let data = ctx.data(&design)?;
        let n = design.n();
        let mut pairs: Vec<(&str, usize, (usize, usize))> = (0..n).map(|j| ("variable1", j, (0, j))).collect();
        if design.p() >= 2 {
            pairs.extend((0..n).map(|j| ("variable2", j, (n, n + j))));
            pairs.extend((0..n).map(|j| ("cross", j, (0, n + j))));
        }
        for (label, j, pair) in pairs {
            for pt in empirical_dependence_curves(&data, &[pair], &cli.q_grid)? {
                push("empirical_lambda_L", label, j, Some(pt.q), pt.lambda_lower);
                push("empirical_lambda_U", label, j, Some(pt.q), pt.lambda_upper);
            }
            let s = empirical_dependence_curves(&data, &[pair], &[0.1])?;
            push("empirical_spearman", label, j, None, s[0].spearman);
        }
    }
    if rows.is_empty() {
        return usage("taildep needs `model`, `fitted` or data in the config");
    }
    write_csv(
        &cli.out.join("taildep.csv"),
        &["quantity", "pair", "location1", "location2", "distance", "q", "value"],
        rows,
    )
}

fn cmd_interpolate(cli: &Cli, ctx: &Context) -> Outcome<()> {
    let design = ctx.design()?;
    let data = ctx.data(&design)?;
    let scores = uniform_scores(&data)?;
    let fitted = ctx.fitted()?;
    let Some(predict) = &ctx.config.predict else {
        return usage("interpolate needs a `predict` section");
    };
    if predict.variable == 0 || predict.variable > 2 {
        return usage("predict.variable must be 1 or 2");
    }
    let target = predict.variable - 1;
    let n = design.n();
    let training: Vec<f64> = (0..data.n_replicates())
        .flat_map(|k| data.row(k)[target * n..(target + 1) * n].to_vec())
        .collect();
    let g = MarginalModel::empirical(training)?;
    let replicates: Vec<usize> = predict.replicates.clone().unwrap_or_else(|| (0..data.n_replicates()).collect());
    let mut rows = Vec::new();
    for &k in &replicates {
        if k >= data.n_replicates() {
            return usage(format!("replicate {k} does not exist"));
        }
        for loc in &predict.locations {
            let mut req = PredictionRequest::from_fit(&fitted, design.clone(), scores.row(k).to_vec(), loc.clone(), target)?;
            req.nodes = cli.nodes;
            let cond = ConditionalCopula::new(&req).map_err(|e| e.at_replicate(k))?;
            let (mean, median) = cond.summaries().map_err(|e| e.at_replicate(k))?;
            let mut rec = vec![k.to_string(), predict.variable.to_string()];
            rec.extend(loc.iter().map(|&c| fmt_f64(c)));
            rec.extend([fmt_f64(mean), fmt_f64(median), fmt_f64(back_transform(median, &g)?)]);
            rows.push(rec);
        }
    }
    let dim = design.locations()[0].coords.len();
    let mut header = vec!["replicate", "variable"];
    header.extend(["x", "y", "z"].iter().take(dim));
    header.extend(["mean_u", "median_u", "median_value"]);
    write_csv(&cli.out.join("predictions.csv"), &header, rows)
}

fn cmd_fig1(cli: &Cli, ctx: &Context) -> Outcome<()> {
    let rows = fig1_data(ctx.config.fig1_replicates, &cli.q_grid, cli.seed, cli.factor)?;
    write_csv(
        &cli.out.join("fig1.csv"),
        &["model", "pair_type", "lag", "stat", "q", "value"],
        rows.iter().map(|r| {
            vec![
                r.model.to_string(),
                r.pair_type.label().to_string(),
                r.lag.to_string(),
                r.stat.clone(),
                r.q.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.value),
            ]
        }),
    )?;
    fs::write(cli.out.join("fig1.svg"), fig1_svg(&rows)).map_err(Error::from)?;
    Ok(())
}
