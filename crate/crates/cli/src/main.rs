//! `shear`: command-line front end for the shear-core pipelines.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use shear_core::experiments::{
    attractor, json_number, param_map, psi_curve, svg_curve, svg_scatter, trajectories, AttractorConfig,
    AttractorInit, ExperimentRecord,
};
use shear_core::hopf::RsThetaSystem;
use shear_core::lyapunov::{epsilon_sweep, le_norm_growth};
use shear_core::params::{fmt_real, RunConfig};
use shear_core::projective::{blended_lambda_star_terms, BlendedConfig};
use shear_core::quadrature::find_c0;
use shear_core::stationary::{
    empirical_psi_hat_measure, occupation_measure, RadialDensity, WeakConvergenceConfig,
};
use shear_core::{Error, LyapunovConfig, QuadratureConfig, ShearModel, SimplifiedParams};

#[derive(Parser, Debug)]
#[command(name = "shear", version, about = "Lyapunov exponents of the noisy Hopf normal form under large shear")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long = "b-prime", global = true, allow_hyphen_values = true)]
    b_prime: Option<f64>,
    #[arg(long = "sigma-prime", global = true)]
    sigma_prime: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, global = true)]
    seeds: Option<u64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Also write an SVG rendering to this path.
    #[arg(long, global = true)]
    svg: Option<PathBuf>,
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ψ(ζ) on a uniform grid of (0, zeta_max].
    PsiCurve {
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long = "zeta-max", default_value_t = 10.0)]
        zeta_max: f64,
    },
    /// The zero C₀ of Ψ.
    C0,
    /// Simplified-model tangent paths from (0, 1) for (α̂, b̂, σ̂) = (1,1,1) and (1,1,2).
    Trajectories {
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Occupation histograms of (r, ψ) at one ε against the radial density and ρ̂.
    Stationary {
        #[arg(long = "burn-in", default_value_t = 10.0)]
        burn_in: f64,
    },
    /// Five-term decomposition of the blended log-norm.
    FkCheck,
    /// Norm-growth Lyapunov estimate of the rescaled system at one ε.
    Lyapunov,
    /// Norm-growth estimates over a descending ε grid against the shear limit.
    SweepEpsilon {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.25, 0.1])]
        grid: Vec<f64>,
    },
    /// Cloud of stationary samples pushed forward by one noise realisation.
    Attractor {
        /// `stationary`, or `burnin[,T0=<t>][,dt=<h>]`.
        #[arg(long, default_value = "stationary")]
        init: String,
    },
}

enum Failure {
    Usage(String),
    Numerical(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e)
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type CliResult<T> = Result<T, Failure>;

/// Flags and config file merged, with defaults applied per subcommand.
struct Settings {
    run: RunConfig,
    common: Common,
}

impl Settings {
    fn load(common: Common) -> CliResult<Self> {
        let file = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            alpha: common.alpha,
            beta: common.beta,
            a: common.a,
            b_prime: common.b_prime,
            sigma_prime: common.sigma_prime,
            epsilon: common.epsilon,
            seed: common.seed,
            dt: common.dt,
            t_end: common.t_end,
        };
        Ok(Self {
            run: file.merged(&flags),
            common,
        })
    }

    fn model(&self) -> CliResult<ShearModel> {
        let d = ShearModel::figure_two();
        Ok(ShearModel::new(
            self.run.alpha.unwrap_or(d.alpha),
            self.run.beta.unwrap_or(d.beta),
            self.run.a.unwrap_or(d.a),
            self.run.b_prime.unwrap_or(d.b_prime),
            self.run.sigma_prime.unwrap_or(d.sigma_prime),
        )?)
    }

    fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }

    fn seed_list(&self, default_count: u64) -> CliResult<Vec<u64>> {
        let n = self.common.seeds.unwrap_or(default_count);
        if n == 0 {
            return Err(Failure::Usage("--seeds must be at least 1".into()));
        }
        let start = self.seed();
        let end = start
            .checked_add(n)
            .ok_or_else(|| Failure::Usage("seed range overflows".into()))?;
        Ok((start..end).collect())
    }

    fn epsilon(&self, default: f64) -> f64 {
        self.run.epsilon.unwrap_or(default)
    }

    fn dt(&self, default: f64) -> f64 {
        self.run.dt.unwrap_or(default)
    }

    fn t_end(&self, default: f64) -> f64 {
        self.run.t_end.unwrap_or(default)
    }

    fn model_params(&self, m: &ShearModel) -> std::collections::BTreeMap<String, String> {
        param_map([
            ("alpha", fmt_real(m.alpha)),
            ("beta", fmt_real(m.beta)),
            ("a", fmt_real(m.a)),
            ("b_prime", fmt_real(m.b_prime)),
            ("sigma_prime", fmt_real(m.sigma_prime)),
        ])
    }
}

/// A record plus optional summary fields merged into the JSON form.
struct Output {
    record: ExperimentRecord,
    summary: Map<String, Value>,
    default_format: Format,
    svg: Option<String>,
}

impl Output {
    fn table(record: ExperimentRecord) -> Self {
        Self {
            record,
            summary: Map::new(),
            default_format: Format::Csv,
            svg: None,
        }
    }

    fn summary(record: ExperimentRecord, summary: Value) -> Self {
        let summary = match summary {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("result".into(), other);
                m
            }
        };
        Self {
            record,
            summary,
            default_format: Format::Json,
            svg: None,
        }
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.record.to_csv_string(),
            Format::Json => {
                let mut v = self.record.to_json();
                if let Value::Object(obj) = &mut v {
                    for (k, val) in &self.summary {
                        obj.insert(k.clone(), val.clone());
                    }
                }
                let mut s = serde_json::to_string_pretty(&v).expect("JSON values serialise");
                s.push('\n');
                s
            }
        }
    }
}

fn cmd_psi_curve(points: usize, zeta_max: f64) -> CliResult<Output> {
    let rec = psi_curve(points, zeta_max, &QuadratureConfig::default())?;
    let xs: Vec<f64> = rec.rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rec.rows.iter().map(|r| r[1]).collect();
    let mut out = Output::table(rec);
    out.svg = Some(svg_curve(&xs, &ys));
    Ok(out)
}

fn cmd_c0() -> CliResult<Output> {
    let cfg = QuadratureConfig::default();
    let r = find_c0(&cfg)?;
    let params = param_map([
        ("bracket_lo", fmt_real(r.bracket[0])),
        ("bracket_hi", fmt_real(r.bracket[1])),
        ("abs_tol", fmt_real(cfg.abs_tol)),
        ("rel_tol", fmt_real(cfg.rel_tol)),
    ]);
    let mut rec = ExperimentRecord::new("c0", params, Vec::new(), &["c0", "psi_at_c0", "iterations"]);
    rec.push(vec![r.c0, r.psi_at_c0, r.iterations as f64]);
    let summary = json!({
        "c0": json_number(r.c0),
        "psi_at_c0": json_number(r.psi_at_c0),
        "bracket": [json_number(r.bracket[0]), json_number(r.bracket[1])],
        "iterations": r.iterations,
    });
    Ok(Output::summary(rec, summary))
}

fn cmd_trajectories(s: &Settings, stride: usize) -> CliResult<Output> {
    let runs = [
        SimplifiedParams::new(1.0, 1.0, 1.0)?,
        SimplifiedParams::new(1.0, 1.0, 2.0)?,
    ];
    if stride == 0 {
        return Err(Failure::Usage("--stride must be at least 1".into()));
    }
    let rec = trajectories(&runs, [0.0, 1.0], s.t_end(10.0), s.dt(1e-3), s.seed(), stride)?;
    let first: Vec<&Vec<f64>> = rec.rows.iter().filter(|r| r[0] == 0.0).collect();
    let xs: Vec<f64> = first.iter().map(|r| r[2]).collect();
    let ys: Vec<f64> = first.iter().map(|r| r[3]).collect();
    let mut out = Output::table(rec);
    out.svg = Some(svg_curve(&xs, &ys));
    Ok(out)
}

fn cmd_stationary(s: &Settings, burn_in: f64) -> CliResult<Output> {
    let m = s.model()?;
    let eps = s.epsilon(0.1);
    let cfg = WeakConvergenceConfig {
        t_end: s.t_end(1000.0),
        burn_in,
        dt: s.dt(1e-3),
        seed: s.seed(),
        batches: 20,
    };
    let reference = empirical_psi_hat_measure(&m.hat_params()?, cfg.t_end + burn_in, burn_in, cfg.dt, s.seed())?;
    let (hist, mut row) = occupation_measure(&m, eps, &cfg)?;
    row.tv_psi = hist.psi.total_variation(&reference);
    let density = RadialDensity::for_model(&m, eps)?;

    let mut params = s.model_params(&m);
    params.insert("epsilon".into(), fmt_real(eps));
    params.insert("t_end".into(), fmt_real(cfg.t_end));
    params.insert("burn_in".into(), fmt_real(burn_in));
    params.insert("dt".into(), fmt_real(cfg.dt));
    params.insert("w1_r".into(), fmt_real(row.w1_r));
    params.insert("tv_psi".into(), fmt_real(row.tv_psi));
    params.insert("mode_r".into(), fmt_real(row.mode_r));
    params.insert("restarts".into(), row.restarts.to_string());
    // marginal: 0 = r, 1 = ψ, 2 = reference ρ̂. `analytic` is the ξ_ε bin mass for r.
    let mut rec = ExperimentRecord::new(
        "stationary",
        params,
        vec![s.seed()],
        &["marginal", "lower", "upper", "probability", "analytic"],
    );
    let r_prob = hist.r.probabilities();
    for (i, p) in r_prob.iter().enumerate() {
        let (lo, hi) = (hist.r.edges[i], hist.r.edges[i + 1]);
        rec.push(vec![0.0, lo, hi, *p, density.cdf(hi) - density.cdf(lo)]);
    }
    for (tag, h) in [(1.0, &hist.psi), (2.0, &reference)] {
        for (i, p) in h.probabilities().iter().enumerate() {
            rec.push(vec![tag, h.edges[i], h.edges[i + 1], *p, f64::NAN]);
        }
    }
    let summary = json!({
        "epsilon": json_number(eps),
        "w1_r": json_number(row.w1_r),
        "tv_psi": json_number(row.tv_psi),
        "mode_r": json_number(row.mode_r),
        "mean_r": json_number(row.mean_r),
        "mean_r_stderr": json_number(row.mean_r_stderr),
        "restarts": row.restarts,
    });
    let mut out = Output::summary(rec, summary);
    out.default_format = Format::Csv;
    Ok(out)
}

fn cmd_fk_check(s: &Settings) -> CliResult<Output> {
    let m = s.model()?;
    let cfg = BlendedConfig {
        epsilon: s.epsilon(0.1),
        t_end: s.t_end(1000.0),
        dt: s.dt(1e-3),
        burn_in: 10.0,
        renorm_interval: 1.0,
        seeds: s.seed_list(8)?,
    };
    let r = blended_lambda_star_terms(&m, &cfg)?;
    let mut params = s.model_params(&m);
    params.insert("epsilon".into(), fmt_real(cfg.epsilon));
    params.insert("t_end".into(), fmt_real(cfg.t_end));
    params.insert("dt".into(), fmt_real(cfg.dt));
    params.insert("burn_in".into(), fmt_real(cfg.burn_in));
    let mut rec = ExperimentRecord::new(
        "fk-check",
        params,
        cfg.seeds.clone(),
        &["seed", "term_I", "term_II", "term_III", "term_IV", "term_V", "norm_growth", "restarts"],
    );
    for p in &r.per_seed {
        let mut row = vec![p.seed as f64];
        row.extend_from_slice(&p.terms);
        row.push(p.norm_growth);
        row.push(p.restarts as f64);
        rec.push(row);
    }
    let names = ["term_I", "term_II", "term_III", "term_IV", "term_V"];
    let mut summary = Map::new();
    summary.insert("epsilon".into(), json_number(r.epsilon));
    for (i, name) in names.iter().enumerate() {
        summary.insert((*name).into(), json_number(r.term_mean[i]));
        summary.insert(format!("{name}_stderr"), json_number(r.term_stderr[i]));
    }
    summary.insert("norm_growth".into(), json_number(r.norm_growth));
    summary.insert("norm_growth_stderr".into(), json_number(r.norm_growth_stderr));
    summary.insert("restarts".into(), json!(r.restarts));
    summary.insert("T".into(), json_number(r.t_end));
    summary.insert("dt".into(), json_number(r.dt));
    summary.insert("seeds".into(), json!(cfg.seeds));
    Ok(Output::summary(rec, Value::Object(summary)))
}

fn cmd_lyapunov(s: &Settings) -> CliResult<Output> {
    let m = s.model()?;
    let eps = s.epsilon(0.1);
    let mut cfg = LyapunovConfig::new(s.t_end(1000.0), s.dt(1e-3), 1);
    cfg.seeds = s.seed_list(16)?;
    let sys = RsThetaSystem::new(m, eps)?;
    let est = le_norm_growth(&sys, &cfg, [1.0, 0.0])?;
    let mut params = s.model_params(&m);
    params.insert("epsilon".into(), fmt_real(eps));
    params.insert("t_end".into(), fmt_real(cfg.t_end));
    params.insert("dt".into(), fmt_real(cfg.dt));
    params.insert("burn_in".into(), fmt_real(cfg.burn_in));
    params.insert("renorm_interval".into(), fmt_real(cfg.renorm_interval));
    let mut rec = ExperimentRecord::new("lyapunov", params, cfg.seeds.clone(), &["seed", "lambda"]);
    for (seed, v) in cfg.seeds.iter().zip(&est.per_seed) {
        rec.push(vec![*seed as f64, *v]);
    }
    let summary = json!({
        "epsilon": json_number(eps),
        "value": json_number(est.value),
        "stderr": json_number(est.stderr),
        "T": json_number(est.t_end),
        "dt": json_number(est.dt),
        "n_seeds": est.n_seeds,
        "renorm_interval": json_number(est.renorm_interval),
        "restarts": est.restarts,
        "flagged": est.flagged,
    });
    Ok(Output::summary(rec, summary))
}

fn cmd_sweep(s: &Settings, grid: &[f64]) -> CliResult<Output> {
    let m = s.model()?;
    let mut cfg = LyapunovConfig::new(s.t_end(2000.0), s.dt(1e-3), 1);
    cfg.seeds = s.seed_list(16)?;
    let sweep = epsilon_sweep(&m, grid, &cfg)?;
    let mut params = s.model_params(&m);
    let grid_txt: Vec<String> = grid.iter().map(|e| fmt_real(*e)).collect();
    params.insert("grid".into(), grid_txt.join(","));
    params.insert("t_end".into(), fmt_real(cfg.t_end));
    params.insert("dt".into(), fmt_real(cfg.dt));
    params.insert("r_floor_factor".into(), fmt_real(sweep.r_floor_factor));
    let flagged: Vec<String> = sweep
        .rows
        .iter()
        .filter(|r| r.flagged())
        .map(|r| fmt_real(r.epsilon))
        .collect();
    params.insert("flagged".into(), flagged.join(","));
    let mut rec = ExperimentRecord::new(
        "sweep-epsilon",
        params,
        cfg.seeds.clone(),
        &["epsilon", "lambda", "stderr", "limit", "gap", "restarts"],
    );
    for row in &sweep.rows {
        let (v, se, rs) = match &row.estimate {
            Some(e) => (e.value, e.stderr, e.restarts as f64),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        rec.push(vec![row.epsilon, v, se, row.limit, row.gap, rs]);
    }
    let xs: Vec<f64> = rec.rows.iter().map(|r| r[0]).collect();
    let ys: Vec<f64> = rec.rows.iter().map(|r| r[1]).collect();
    let mut out = Output::table(rec);
    out.svg = Some(svg_curve(&xs, &ys));
    Ok(out)
}

fn parse_init(text: &str) -> CliResult<AttractorInit> {
    let mut parts = text.split(',').map(str::trim);
    match parts.next() {
        Some("stationary") if text.trim() == "stationary" => Ok(AttractorInit::Stationary),
        Some("burnin") => {
            let (mut t0, mut dt) = (100.0, 1e-3);
            for kv in parts {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Failure::Usage(format!("--init: expected key=value, got {kv:?}")))?;
                let v: f64 = v
                    .parse()
                    .map_err(|e| Failure::Usage(format!("--init {k}: {e}")))?;
                match k {
                    "T0" | "t0" => t0 = v,
                    "dt" => dt = v,
                    other => return Err(Failure::Usage(format!("--init: unknown key {other:?}"))),
                }
            }
            Ok(AttractorInit::Burnin { t0, dt })
        }
        _ => Err(Failure::Usage(format!(
            "--init must be `stationary` or `burnin[,T0=..][,dt=..]`, got {text:?}"
        ))),
    }
}

fn cmd_attractor(s: &Settings, init: &str) -> CliResult<Output> {
    let m = s.model()?;
    let mut cfg = AttractorConfig::figure_two(s.seed());
    cfg.params = m.at_epsilon(s.epsilon(1.0))?;
    cfg.n_samples = s.common.samples.unwrap_or(cfg.n_samples);
    cfg.t_end = s.t_end(cfg.t_end);
    cfg.dt = s.dt(cfg.dt);
    cfg.init = parse_init(init)?;
    let cloud = attractor(&cfg)?;
    let mut rec = cloud.record(&cfg);
    rec.params.insert("diameter".into(), fmt_real(cloud.diameter()));
    let mut out = Output::table(rec);
    out.svg = Some(svg_scatter(&cloud.z1, &cloud.z2, cloud.r_hat));
    Ok(out)
}

fn run(cli: Cli) -> CliResult<()> {
    let has_svg = matches!(
        cli.command,
        Command::PsiCurve { .. } | Command::Trajectories { .. } | Command::SweepEpsilon { .. } | Command::Attractor { .. }
    );
    if cli.common.svg.is_some() && !has_svg {
        return Err(Failure::Usage("--svg is only available for psi-curve, trajectories, sweep-epsilon and attractor".into()));
    }
    let settings = Settings::load(cli.common.clone())?;
    let output = match &cli.command {
        Command::PsiCurve { points, zeta_max } => cmd_psi_curve(*points, *zeta_max)?,
        Command::C0 => cmd_c0()?,
        Command::Trajectories { stride } => cmd_trajectories(&settings, *stride)?,
        Command::Stationary { burn_in } => cmd_stationary(&settings, *burn_in)?,
        Command::FkCheck => cmd_fk_check(&settings)?,
        Command::Lyapunov => cmd_lyapunov(&settings)?,
        Command::SweepEpsilon { grid } => cmd_sweep(&settings, grid)?,
        Command::Attractor { init } => cmd_attractor(&settings, init)?,
    };
    let format = cli.common.format.unwrap_or(output.default_format);
    let text = output.render(format);
    match &cli.common.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    if let (Some(path), Some(svg)) = (&cli.common.svg, &output.svg) {
        fs::write(path, svg)?;
    }
    Ok(())
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Domain { .. } => "domain",
        Error::Convergence { .. } => "convergence",
        Error::Bracket { .. } => "bracket",
        Error::RegionExit { .. } => "region_exit",
        Error::NonFinite { .. } => "non_finite",
        Error::Contract(_) => "contract",
        Error::Config(_) => "config",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            let diag = json!({
                "error": "numerical",
                "kind": error_kind(&e),
                "message": e.to_string(),
            });
            eprintln!("{diag}");
            ExitCode::from(3)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
