//! `monotone-ei`: bounds and inference for group means from aggregate data.
//!
//! Exit status: 0 on success, 1 for input or configuration problems, 2 when
//! the data do not support the requested quantity or reject the declared
//! assumptions.

mod commands;
mod config;
mod render;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Failure, EXIT_INPUT};
use config::{read_config_file, RunConfig, SEED_ENV};

#[derive(Parser)]
#[command(name = "monotone-ei", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Global bounds on D, Y1 and Y0 with point estimates and diagnostics.
    Bounds,
    /// Neighborhood-level bounds and the fitted slope curve.
    Local,
    /// Signs of the two conditional associations from individual-level data.
    MicroSigns,
    /// Bootstrap confidence interval for a statistic or a bound.
    Ci,
    /// Compare analytic bounds with brute-force enumeration (small inputs).
    Audit,
}

#[derive(Args)]
struct Flags {
    /// Input CSV: id,population,x_share,y_mean (micro-signs: x,y,x_n,weight,stratum).
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Outcome bounds as LO:HI [default: 0:1].
    #[arg(long, global = true, value_name = "LO:HI")]
    bounds: Option<String>,
    /// Sign of the within-group association: nonneg, nonpos, zero or unknown.
    #[arg(long, global = true)]
    within: Option<String>,
    /// Sign of the between-group association: nonneg, nonpos, zero or unknown.
    #[arg(long, global = true)]
    between: Option<String>,
    /// Assume contextual reinforcement (both associations share a sign).
    #[arg(long, global = true)]
    cr: bool,
    /// Target: 1, 0 or d.
    #[arg(long, global = true, value_name = "0|1|d")]
    group: Option<String>,
    /// Kernel bandwidth; chosen by cross-validation when absent.
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// Cross-validation folds [default: 10].
    #[arg(long, global = true)]
    cv_folds: Option<usize>,
    /// Bootstrap replicates [default: 1000].
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Master seed; falls back to $MONOTONE_EI_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Confidence level [default: 0.95].
    #[arg(long, global = true)]
    level: Option<f64>,
    /// Output format: json, table or csv [default: table].
    #[arg(long, global = true)]
    format: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// File of `key = value` settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Statistic for `ci`: bounds, mob, er, nm, mean-y or gamma [default: bounds].
    #[arg(long, global = true)]
    statistic: Option<String>,
    /// Prevalence bin width for `micro-signs` [default: 0.05].
    #[arg(long, global = true)]
    bin_width: Option<f64>,
    /// Grid points per coordinate for `audit` [default: 201].
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Omit neighborhoods where the slope is undefined instead of failing.
    #[arg(long, global = true)]
    skip_undefined: bool,
    /// Pool neighborhoods with equal prevalence in `local`.
    #[arg(long, global = true)]
    pooled: bool,
    /// Accept that neighborhoods with equal prevalence share group means, so
    /// the slope can restrict a single neighborhood.
    #[arg(long, global = true)]
    same_means: bool,
    /// Write the fitted slope curve of `local` to this CSV.
    #[arg(long, global = true)]
    curve: Option<PathBuf>,
}

impl Flags {
    /// The flags that were given, keyed like the config file.
    fn settings(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let on = |b: bool| b.then(|| "true".to_string());
        put("input", path(&self.input));
        put("bounds", self.bounds.clone());
        put("within", self.within.clone());
        put("between", self.between.clone());
        put("cr", on(self.cr));
        put("group", self.group.clone());
        put("bandwidth", self.bandwidth.map(|v| v.to_string()));
        put("cv-folds", self.cv_folds.map(|v| v.to_string()));
        put("replicates", self.replicates.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("level", self.level.map(|v| v.to_string()));
        put("format", self.format.clone());
        put("threads", self.threads.map(|v| v.to_string()));
        put("statistic", self.statistic.clone());
        put("bin-width", self.bin_width.map(|v| v.to_string()));
        put("grid-points", self.grid_points.map(|v| v.to_string()));
        put("skip-undefined", on(self.skip_undefined));
        put("pooled", on(self.pooled));
        put("same-means", on(self.same_means));
        put("curve", path(&self.curve));
        m
    }
}

fn resolve(flags: &Flags) -> Result<RunConfig, Failure> {
    let mut settings = match &flags.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    settings.extend(flags.settings());
    let env_seed = std::env::var(SEED_ENV).ok();
    Ok(RunConfig::from_settings(&settings, env_seed.as_deref())?)
}

fn run(cli: &Cli) -> Result<commands::Output, Failure> {
    let cfg = resolve(&cli.flags)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_INPUT,
                message: format!("cannot start thread pool: {e}"),
            })?;
    }
    match cli.command {
        Command::Bounds => commands::bounds(&cfg),
        Command::Local => commands::local(&cfg),
        Command::MicroSigns => commands::micro_signs(&cfg),
        Command::Ci => commands::ci(&cfg),
        Command::Audit => commands::audit(&cfg),
    }
}

fn main() -> ExitCode {
    // Usage errors are input errors; clap's own status would collide with
    // the statistical one.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe is not worth a panic.
            let _ = stdout.write_all(out.text.as_bytes());
            if let Some(w) = out.warning {
                eprintln!("monotone-ei: {w}");
            }
            ExitCode::from(out.code as u8)
        }
        Err(f) => {
            eprintln!("monotone-ei: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
