//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input or usage, 2 for numerical
//! failure (including unconverged transport solves under
//! `--require-convergence`).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::eval::{evaluate, RankingRecord};
use crate::io::{load_pool, read_scores, write_scores, Pool, Regularizer, TEConfig, Weights};
use crate::metrics::{build_cache, PairwiseCache};
use crate::selection::{exhaustive_select, greedy_select, score_all};
use crate::synth::{generate, proxy_accuracy, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "osborn", version, about = "Transferability estimation and ensemble selection for model pools")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute per-model and per-pair terms into cache.csv.
    Pairwise {
        #[arg(long)]
        pool: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Fail with exit code 2 if any transport solve did not converge.
        #[arg(long)]
        require_convergence: bool,
    },
    /// Select an ensemble of size k.
    Select {
        #[command(flatten)]
        source: CacheSource,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Strategy::Greedy)]
        strategy: Strategy,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every k-subset into rankings.csv.
    Score {
        #[command(flatten)]
        source: CacheSource,
        #[arg(long)]
        k: usize,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fill the accuracy column of rankings.csv with majority-vote accuracy.
    Accuracy {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate scores with accuracies into report.csv.
    Eval {
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic pool directory from a synth.spec file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Greedy,
    Exhaustive,
}

/// Where the pairwise terms come from: a cache file, a pool, or both
/// (checked against each other).
#[derive(Debug, Args)]
struct CacheSource {
    #[arg(long, required_unless_present = "cache")]
    pool: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Fail with exit code 2 if any transport solve did not converge.
    #[arg(long)]
    require_convergence: bool,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `λD,λT,λC`.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    regularizer: Option<String>,
    #[arg(long)]
    standardize: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TEConfig> {
        let mut config = match &self.config {
            Some(path) => TEConfig::load(path)?,
            None => TEConfig::default(),
        };
        if let Some(w) = &self.weights {
            config.weights = w.parse::<Weights>()?;
        }
        if let Some(e) = self.epsilon {
            config.epsilon = e;
        }
        if let Some(r) = &self.regularizer {
            config.regularizer = r.parse::<Regularizer>()?;
        }
        if let Some(s) = self.standardize {
            config.standardize = s;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        config.validate()?;
        Ok(config)
    }
}

fn check_convergence(cache: &PairwiseCache, required: bool) -> Result<()> {
    let stalled: Vec<&str> = (0..cache.len())
        .filter(|&i| !cache.converged(i))
        .map(|i| cache.ids()[i].as_str())
        .collect();
    if stalled.is_empty() {
        return Ok(());
    }
    let message = format!("transport solve did not converge for: {}", stalled.join(", "));
    if required {
        return Err(Error::Numerical(message));
    }
    eprintln!("warning: {message}");
    Ok(())
}

impl CacheSource {
    fn load(&self, config: &TEConfig) -> Result<PairwiseCache> {
        let pool = self.pool.as_deref().map(load_pool).transpose()?;
        let cache = match (&self.cache, &pool) {
            (Some(path), _) => PairwiseCache::load(path)?,
            (None, Some(pool)) => build_cache(pool, config)?,
            (None, None) => return Err(Error::Invalid("either --pool or --cache is required".into())),
        };
        if let Some(pool) = &pool {
            cache.check_pool(pool)?;
        }
        check_convergence(&cache, self.require_convergence)?;
        Ok(cache)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Pairwise {
            pool,
            config,
            out,
            require_convergence,
        } => {
            let config = config.resolve()?;
            let cache = build_cache(&load_pool(&pool)?, &config)?;
            check_convergence(&cache, require_convergence)?;
            cache.write(&out)
        }
        Command::Select {
            source,
            k,
            strategy,
            config,
            out,
        } => {
            let config = config.resolve()?;
            let cache = source.load(&config)?;
            match strategy {
                Strategy::Greedy => greedy_select(&cache, k, &config)?.write(&out),
                Strategy::Exhaustive => {
                    let (best, f) = exhaustive_select(&cache, k, &config)?;
                    let text = format!(
                        "f,{}\nensemble,{}\n",
                        crate::io::format_real(f),
                        best.members().join(";")
                    );
                    crate::io::write_text(&out, &text)
                }
            }
        }
        Command::Score {
            source,
            k,
            config,
            out,
        } => {
            let config = config.resolve()?;
            let cache = source.load(&config)?;
            let rows: Vec<RankingRecord> = score_all(&cache, k, &config)?
                .into_iter()
                .map(|(candidate, osborn)| RankingRecord {
                    candidate,
                    alpha: -osborn,
                    accuracy: None,
                })
                .collect();
            write_scores(&rows, &out)
        }
        Command::Accuracy { pool, rankings, out } => {
            let pool: Pool = load_pool(&pool)?;
            let mut rows = read_scores(&rankings)?;
            for row in &mut rows {
                row.accuracy = Some(proxy_accuracy(&row.candidate, &pool)?);
            }
            write_scores(&rows, &out)
        }
        Command::Eval { rankings, out } => evaluate(&read_scores(&rankings)?)?.write(&out),
        Command::Synth { spec, seed, out } => {
            let mut spec = SynthSpec::load(&spec)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            generate(&spec)?.write_to_dir(&out).map(|_| ())
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    if err.is_computational() {
        EXIT_COMPUTATION
    } else {
        EXIT_INVALID
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to stdout/stderr.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(Error::Invalid("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(workers) => workers.install(|| execute(cli.command)),
            Err(e) => Err(Error::Invalid(format!("cannot start {n} worker threads: {e}"))),
        },
        None => execute(cli.command),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}
