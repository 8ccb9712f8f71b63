use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use ppstat::data::{write_adult_fixture, write_insurance_fixture};
use ppstat::{CkksParams, SignConfig};

use crate::harness::{
    run_approx, run_bench, run_dataset, ApproxArgs, ApproxFn, BenchArgs, DatasetArgs, Measure, RunConfig, Sampling,
};
use crate::report::StatReport;
use crate::{CliError, ExitStatus};

#[derive(Debug, Parser)]
#[command(name = "ppstat", version, about = "Encrypted statistics on an emulated CKKS backend")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Worker threads for chunk-level parallelism.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    /// Round every slot to the 2^-40 grid.
    #[arg(long, global = true)]
    pub quantize: bool,
    #[arg(long, global = true, default_value_t = 32_768)]
    pub slots: usize,
    #[arg(long, global = true, default_value_t = 11)]
    pub max_level: u32,
    /// Disable the domain and degeneracy checks.
    #[arg(long, global = true)]
    pub no_checks: bool,
    /// Composite sign folds of g3.
    #[arg(long, global = true, default_value_t = 7)]
    pub sign_folds: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Accuracy of one primitive on a grid or on uniform samples.
    Approx(ApproxOpts),
    /// One statistical measure on synthetic uniform data.
    Bench(BenchOpts),
    /// One statistical measure on columns of a CSV file.
    Dataset(DatasetOpts),
    /// Write a synthetic CSV with the Adult or Insurance schema.
    Fixture(FixtureOpts),
}

#[derive(Debug, Args)]
pub struct ApproxOpts {
    #[arg(long = "fn", value_enum)]
    pub function: ApproxFn,
    /// Input range as lo:hi.
    #[arg(long, value_parser = parse_domain, allow_hyphen_values = true)]
    pub domain: (f64, f64),
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 511)]
    pub degree: usize,
    /// Newton iterations (defaults: 6, or 21/25 with --baseline).
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub baseline: bool,
    /// Evenly spaced points instead of uniform samples.
    #[arg(long, conflicts_with = "seed")]
    pub grid: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32_768)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchOpts {
    #[arg(long, value_enum)]
    pub measure: Measure,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[arg(long, value_parser = parse_domain, allow_hyphen_values = true)]
    pub domain: (f64, f64),
    #[arg(long)]
    pub scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// For pcc: correlate X with itself.
    #[arg(long)]
    pub y_equals_x: bool,
    #[arg(long)]
    pub sqrt_degree: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetOpts {
    #[arg(long)]
    pub file: PathBuf,
    #[arg(long, value_enum)]
    pub measure: Measure,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: Option<String>,
    #[arg(long)]
    pub scale: f64,
    /// Do not map smoker yes/no or divide charges by 1000.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub sqrt_degree: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    Adult,
    Insurance,
}

#[derive(Debug, Args)]
pub struct FixtureOpts {
    #[arg(long, value_enum)]
    pub kind: FixtureKind,
    #[arg(long, default_value_t = 2_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_domain(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(lo)?, parse(hi)?))
}

impl GlobalOpts {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            params: CkksParams::default()
                .with_slot_count(self.slots)
                .with_max_level(self.max_level)
                .with_quantize(self.quantize)
                .with_checks(!self.no_checks),
            threads: self.threads.max(1),
            sign: SignConfig {
                folds: self.sign_folds,
                ..SignConfig::default()
            },
            ..RunConfig::default()
        }
    }
}

fn emit(report: &StatReport, out: Option<&Path>) -> Result<(), CliError> {
    let json = report.to_json();
    match out {
        Some(path) => std::fs::write(path, json + "\n").map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })?,
        None => println!("{json}"),
    }
    eprintln!("{}", report.summary());
    Ok(())
}

/// Runs a parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = cli.global.run_config();
    match cli.command {
        Command::Approx(o) => {
            cfg.cheb_degree = o.degree;
            cfg.newton_iters = o.iters;
            let args = ApproxArgs {
                function: o.function,
                domain: o.domain,
                scale: o.scale,
                baseline: o.baseline,
                sampling: if o.grid {
                    Sampling::Grid
                } else {
                    Sampling::Uniform { seed: o.seed }
                },
                points: o.points,
            };
            emit(&run_approx(&args, &cfg)?, o.out.as_deref())
        }
        Command::Bench(o) => {
            cfg.sqrt_degree = o.sqrt_degree;
            let args = BenchArgs {
                measure: o.measure,
                n: o.n,
                domain: o.domain,
                scale: o.scale,
                seed: o.seed,
                y_equals_x: o.y_equals_x,
            };
            emit(&run_bench(&args, &cfg)?, o.out.as_deref())
        }
        Command::Dataset(o) => {
            cfg.sqrt_degree = o.sqrt_degree;
            let args = DatasetArgs {
                file: o.file,
                measure: o.measure,
                x: o.x,
                y: o.y,
                scale: o.scale,
                raw: o.raw,
            };
            emit(&run_dataset(&args, &cfg)?, o.out.as_deref())
        }
        Command::Fixture(o) => {
            match o.kind {
                FixtureKind::Adult => write_adult_fixture(&o.out, o.rows, o.seed)?,
                FixtureKind::Insurance => write_insurance_fixture(&o.out, o.rows, o.seed)?,
            }
            eprintln!("wrote {} rows to {}", o.rows, o.out.display());
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit status.
/// Help and version requests succeed; other parse failures are usage errors.
pub fn run<I, T>(args: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage
            } else {
                ExitStatus::Success
            };
        }
    };
    if cli.global.threads > 1 {
        // Only the first configuration in a process takes effect.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.global.threads)
            .build_global();
    }
    match execute(cli) {
        Ok(()) => ExitStatus::Success,
        Err(e) => {
            eprintln!("error: {e}");
            e.status()
        }
    }
}
