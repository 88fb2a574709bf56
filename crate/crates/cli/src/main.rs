use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ltkd_core::data::{class_stats, GeneratorConfig};
use ltkd_core::distill::{Temperature, WeightMode};
use ltkd_core::experiment::{self, ExperimentConfig};
use ltkd_core::subsets::StrategyKind;
use ltkd_core::{par, Error, Result};

/// Relational-subset knowledge distillation for long-tailed multi-label data.
#[derive(Parser)]
#[command(name = "ltkd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic long-tailed multi-label dataset.
    GenData {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON experiment config; its `data` section is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train teachers and a distilled student, then evaluate against ERM.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Option<Strategy>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, value_enum)]
        weights: Option<Weights>,
        #[arg(long, value_enum)]
        kd: Option<Switch>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compare finished run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Write the comparison JSON here as well.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Shot,
    Region,
    Feature,
}

#[derive(Clone, Copy, ValueEnum)]
enum Weights {
    Dynamic,
    Fixed,
    /// Uniform weight of one; same as `fixed`.
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn gen_data(seed: u64, config: Option<&Path>, out: &Path) -> Result<()> {
    let data: GeneratorConfig = load_config(config)?.data;
    let (ds, hash) = experiment::gen_data(&data, seed, out)?;
    let stats = class_stats(&ds)?;
    let mut text = format!(
        "wrote {} instances to {} (sha256 {hash})\n",
        ds.len(),
        out.display()
    );
    let _ = writeln!(text, "imbalance ratio {:.1}", stats.imbalance_ratio);
    let _ = writeln!(text, "{:>5} {:>8} {:>8}", "class", "count", "p");
    for (c, (&n, p)) in stats.counts.iter().zip(&stats.sampling_probs).enumerate() {
        let _ = writeln!(text, "{c:>5} {n:>8} {p:>8.4}");
    }
    emit(&text);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    strategy: Option<Strategy>,
    temperature: Option<f64>,
    delta: Option<f64>,
    weights: Option<Weights>,
    kd: Option<Switch>,
    seed: Option<u64>,
    epochs: Option<usize>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = strategy {
        cfg.strategy = match s {
            Strategy::Shot => StrategyKind::ShotBased,
            Strategy::Region => StrategyKind::RegionBased,
            Strategy::Feature => StrategyKind::FeatureBased,
        };
    }
    if let Some(t) = temperature {
        cfg.train.temperature = Temperature::new(t)?;
    }
    if let Some(d) = delta {
        cfg.train.delta = d;
    }
    if let Some(w) = weights {
        cfg.train.weight_mode = match w {
            Weights::Dynamic => WeightMode::Dynamic,
            Weights::Fixed | Weights::Off => WeightMode::Fixed,
        };
    }
    if let Some(k) = kd {
        cfg.kd = matches!(k, Switch::On);
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;

    let (ds, hash) = experiment::load_dataset_hashed(data)?;
    let outcome = experiment::run(&ds, &hash, &cfg, out)?;
    emit(&format!(
        "{}run written to {}\n",
        outcome.comparison.to_text(),
        out.display()
    ));
    Ok(())
}

fn report(runs: &[PathBuf], json: Option<&Path>) -> Result<()> {
    let dirs: Vec<&Path> = runs.iter().map(PathBuf::as_path).collect();
    let cmp = experiment::report(&dirs)?;
    emit(&cmp.to_text());
    if let Some(path) = json {
        std::fs::write(path, cmp.to_json()?)
            .map_err(|e| Error::Integrity(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = par::with_threads(par::threads_from_env(), || match &cli.command {
        Command::GenData { seed, config, out } => gen_data(*seed, config.as_deref(), out),
        Command::Run {
            data,
            out,
            config,
            strategy,
            temperature,
            delta,
            weights,
            kd,
            seed,
            epochs,
        } => run(
            data,
            out,
            config.as_deref(),
            *strategy,
            *temperature,
            *delta,
            *weights,
            *kd,
            *seed,
            *epochs,
        ),
        Command::Report { runs, json } => report(runs, json.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
