use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adagram::bench::{
    grid_search, parse_key_values, prepare, run_invariant_suite, run_prepared, summary_tsv,
    write_grid_outputs, DatasetSource, ExperimentConfig, GridSpace, SuiteOptions,
};
use adagram::data::{generate_synthetic, save_libsvm};
use adagram::par::Execution;
use adagram::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "adagram", version, about = "AdaGram optimizer benchmarks on logistic regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its per-epoch CSV trace.
    Run {
        #[command(flatten)]
        settings: Settings,
    },
    /// Sweep a hyperparameter grid and write one CSV per run plus summary.tsv.
    Grid {
        /// TOML file with value lists (optimizer, batch_size, lr, eps, rank, mu).
        #[arg(long)]
        grid: PathBuf,
        /// Run configurations one after another instead of on the thread pool.
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run the numerical invariant checks.
    Verify {
        #[arg(long, default_value_t = SuiteOptions::default().seed)]
        seed: u64,
        /// Scale every β of the exact backend (a deliberately broken update).
        #[arg(long, default_value_t = 1.0, hide = true)]
        beta_scale: f64,
    },
    /// Write a synthetic dataset as LIBSVM text.
    Generate {
        #[command(flatten)]
        settings: Settings,
    },
}

/// Experiment settings. Flags override values from `--config`.
#[derive(Args)]
struct Settings {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LIBSVM file or synth:<isotropic|tridiagonal|dense>[:rho].
    #[arg(long)]
    dataset: Option<String>,
    /// Feature count of a synthetic dataset.
    #[arg(long, allow_hyphen_values = true)]
    features: Option<String>,
    /// Sample count of a synthetic dataset.
    #[arg(long, allow_hyphen_values = true)]
    samples: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    lr: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    rank: Option<String>,
    /// Memory weight in [0, 1], or "none".
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    batch_size: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    epochs: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    /// Output file (run, generate) or directory (grid).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Settings {
    fn resolve(&self) -> adagram::Result<ExperimentConfig> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                parse_key_values(&text)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("dataset", &self.dataset),
            ("features", &self.features),
            ("samples", &self.samples),
            ("optimizer", &self.optimizer),
            ("lr", &self.lr),
            ("eps", &self.eps),
            ("rank", &self.rank),
            ("mu", &self.mu),
            ("batch_size", &self.batch_size),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                pairs.retain(|(k, _)| k != key);
                pairs.push((key.to_string(), v.clone()));
            }
        }
        let mut cfg = ExperimentConfig::default();
        cfg.apply(&pairs)?;
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn write_out(path: Option<&Path>, text: &str) -> adagram::Result<()> {
    match path {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

fn run(settings: &Settings) -> adagram::Result<ExitCode> {
    let cfg = settings.resolve()?;
    cfg.validate()?;
    let data = prepare(&cfg)?;
    let record = run_prepared(&cfg, &data, Execution::default())?;
    write_out(cfg.output.as_deref(), &record.to_csv_string())?;
    if let Some(last) = record.final_row() {
        eprintln!(
            "{} epochs: train loss {:.6}, test loss {:.6}, test accuracy {:.4}, {:.3} s",
            last.epoch, last.train_loss, last.test_loss, last.test_acc, last.wall_clock_s
        );
    }
    if record.meta.diverged {
        eprintln!("run diverged after {} epochs", record.rows.len().saturating_sub(1));
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn grid(path: &Path, sequential: bool, settings: &Settings) -> adagram::Result<ExitCode> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let space = GridSpace::from_text(&text)?;
    let base = settings.resolve()?;
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let outcome = grid_search(&space, &base, exec)?;
    match &base.output {
        Some(dir) => write_grid_outputs(dir, &outcome)?,
        None => write_out(None, &summary_tsv(&outcome))?,
    }
    let best = outcome.best_record();
    eprintln!(
        "{} runs; best {} (lr {}, eps {}, batch {}, rank {}) final train loss {:.6}",
        outcome.records.len(),
        best.meta.optimizer,
        best.meta.learning_rate,
        best.meta.eps,
        best.meta.batch_size,
        best.meta.rank.map_or_else(|| "-".into(), |r| r.to_string()),
        best.final_train_loss()
    );
    Ok(ExitCode::SUCCESS)
}

fn verify(seed: u64, beta_scale: f64) -> adagram::Result<ExitCode> {
    let report = run_invariant_suite(SuiteOptions {
        seed,
        beta_scale,
        ..Default::default()
    })?;
    print!("{report}");
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVARIANT)
    })
}

fn generate(settings: &Settings) -> adagram::Result<ExitCode> {
    let cfg = settings.resolve()?;
    let DatasetSource::Synthetic(spec) = &cfg.dataset else {
        return Err(Error::Config("generate needs a synth: dataset".into()));
    };
    let ds = generate_synthetic(spec)?;
    match &cfg.output {
        Some(path) => save_libsvm(&ds, path)?,
        None => {
            let stdout = io::stdout();
            adagram::data::write_libsvm(&ds, stdout.lock()).map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })?
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { settings } => run(settings),
        Command::Grid {
            grid: path,
            sequential,
            settings,
        } => grid(path, *sequential, settings),
        Command::Verify { seed, beta_scale } => verify(*seed, *beta_scale),
        Command::Generate { settings } => generate(settings),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
