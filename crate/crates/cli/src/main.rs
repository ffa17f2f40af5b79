mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use conehyp::dist::Division;
use serde_json::json;

use crate::config::{
    parse_list, parse_param_list, DistName, FloatList, Format, ParamList, RunConfig,
};
use crate::error::{CliError, CliResult};

/// Beta-hypergeometric distributions on positive-definite symmetric matrices.
#[derive(Debug, Parser)]
#[command(name = "conehyp", version)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate pFq at a matrix or at the identity.
    EvalHyp(EvalHypArgs),
    /// Density of mu_(a,a',b) at a matrix.
    Density(DensityArgs),
    /// Normalizing constant of mu_(a,a',b).
    Constant(CommonArgs),
    /// Generalized-power moment of mu_(a,a',b).
    Moment(MomentArgs),
    /// Draw samples as CSV rows of upper triangles.
    Sample(SampleArgs),
    /// Run identity suites.
    Verify(VerifyArgs),
    /// Tabulate generalized Pochhammer symbols and zonal values at the identity.
    PartitionsTable(TableArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rank: Option<usize>,
    /// Comma-separated parameters, `a,a',b` for mu.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    params: Option<FloatList>,
    #[arg(long)]
    degree_cap: Option<usize>,
    /// Relative layer tolerance of the series.
    #[arg(long)]
    tol: Option<f64>,
    /// Largest accepted error estimate of extrapolated series.
    #[arg(long)]
    accel_tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalHypArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Upper parameters: comma-separated, each a scalar or `v1:...:vr`.
    #[arg(long, value_parser = parse_param_list, allow_hyphen_values = true)]
    upper: Option<ParamList>,
    #[arg(long, value_parser = parse_param_list, allow_hyphen_values = true)]
    lower: Option<ParamList>,
    /// JSON file with the matrix rows.
    #[arg(long, conflicts_with = "at_identity")]
    matrix: Option<PathBuf>,
    #[arg(long)]
    at_identity: bool,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Report the log-density.
    #[arg(long)]
    log: bool,
}

#[derive(Debug, Args)]
struct MomentArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    t: Option<FloatList>,
    /// Exponent of `Delta(e - X)` for the joint moment.
    #[arg(long, value_parser = parse_list, allow_hyphen_values = true)]
    s: Option<FloatList>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    dist: Option<DistName>,
    #[arg(long)]
    n: Option<usize>,
    /// Falls back to CONEHYP_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    division: Option<DivisionArg>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Suite name or `all`.
    #[arg(long)]
    suite: Option<String>,
    /// JSON suite configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Falls back to the configuration, then CONEHYP_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    division: Option<DivisionArg>,
}

#[derive(Debug, Args)]
struct TableArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum DivisionArg {
    Cholesky,
    SquareRoot,
}

impl From<DivisionArg> for Division {
    fn from(d: DivisionArg) -> Self {
        match d {
            DivisionArg::Cholesky => Division::Cholesky,
            DivisionArg::SquareRoot => Division::SquareRoot,
        }
    }
}

impl CommonArgs {
    fn flags(&self) -> RunConfig {
        RunConfig {
            rank: self.rank,
            params: self.params.clone().map(|l| l.0),
            out: self.out.clone(),
            ..Default::default()
        }
    }

    /// File settings overlaid with the flags, series flags applied field by field.
    fn resolve(&self, extra: RunConfig) -> CliResult<RunConfig> {
        let file = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        let mut cfg = file.merged(self.flags()).merged(extra);
        if self.degree_cap.is_some() || self.tol.is_some() || self.accel_tol.is_some() {
            let mut series = cfg.series_options();
            if let Some(cap) = self.degree_cap {
                series.degree_cap = cap;
            }
            if let Some(tol) = self.tol {
                series.rel_tol = tol;
            }
            if let Some(tol) = self.accel_tol {
                series.accel_tol = tol;
            }
            cfg.series = Some(series);
        }
        Ok(cfg)
    }
}

fn with_format(mut cfg: RunConfig, format: Option<Format>) -> RunConfig {
    if format.is_some() {
        cfg.format = format;
    }
    cfg
}

fn run(cli: Cli) -> CliResult<i32> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    }
    let format = cli.format;
    match cli.command {
        Command::EvalHyp(args) => {
            let extra = RunConfig {
                upper: args.upper.map(|l| l.0),
                lower: args.lower.map(|l| l.0),
                matrix: args.matrix.map(config::MatrixSource::Path),
                at_identity: args.at_identity.then_some(true),
                ..Default::default()
            };
            commands::eval_hyp(with_format(args.common.resolve(extra)?, format))
        }
        Command::Density(args) => {
            let extra = RunConfig {
                matrix: args.matrix.map(config::MatrixSource::Path),
                log: args.log.then_some(true),
                ..Default::default()
            };
            commands::density(with_format(args.common.resolve(extra)?, format))
        }
        Command::Constant(args) => {
            commands::constant(with_format(args.resolve(RunConfig::default())?, format))
        }
        Command::Moment(args) => {
            let extra = RunConfig {
                t: args.t.map(|l| l.0),
                s: args.s.map(|l| l.0),
                ..Default::default()
            };
            commands::moment(with_format(args.common.resolve(extra)?, format))
        }
        Command::Sample(args) => {
            let extra = RunConfig {
                dist: args.dist,
                n: args.n,
                seed: args.seed,
                division: args.division.map(Division::from),
                ..Default::default()
            };
            commands::sample(with_format(args.common.resolve(extra)?, format))
        }
        Command::Verify(args) => commands::verify(commands::VerifyRequest {
            suite: args.suite,
            config: args.config,
            out: args.out,
            seed: args.seed,
            n: args.n,
            division: args.division.map(Division::from),
        }),
        Command::PartitionsTable(args) => {
            let file = match &args.config {
                Some(path) => RunConfig::from_file(path)?,
                None => RunConfig::default(),
            };
            let flags = RunConfig {
                a: args.a,
                rank: args.rank,
                max_degree: args.max_degree,
                out: args.out,
                ..Default::default()
            };
            commands::partitions_table(with_format(file.merged(flags), format))
        }
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::EvalHyp(_) => "eval-hyp",
        Command::Density(_) => "density",
        Command::Constant(_) => "constant",
        Command::Moment(_) => "moment",
        Command::Sample(_) => "sample",
        Command::Verify(_) => "verify",
        Command::PartitionsTable(_) => "partitions-table",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string());
            let detail = e.render().to_string();
            eprintln!("{}", err.to_json(json!({ "usage": detail.trim() })));
            return ExitCode::from(1);
        }
    };
    let name = command_name(&cli.command);
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", e.to_json(json!({ "command": name })));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
