use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qlstm_bench::datasets::SignalKind;
use qlstm_bench::harness::{
    emit_convergence, emit_table, run_batch, run_experiment, BatchSpec, ExperimentConfig,
    ModelKind, Report,
};
use qlstm_bench::{Error, Execution};

#[derive(Parser)]
#[command(version, about = "Benchmark classic, quantum and stochastic LSTM variants on synthetic series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on one dataset.
    Run {
        #[arg(long, default_value = "sine")]
        dataset: SignalKind,
        #[arg(long, default_value = "classic")]
        model: ModelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        opts: ExperimentOpts,
    },
    /// Comparison table from summary.json files or run directories.
    Table {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write the CSV form here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Long-format validation curves from epochs.csv files or run directories.
    Convergence {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a datasets x models x seeds grid.
    Batch {
        #[arg(long, value_delimiter = ',', default_value = "sine")]
        datasets: Vec<SignalKind>,
        /// Model names; shot-based models use `--shots` unless written as e.g. `slstm-shots-100`.
        #[arg(long, value_delimiter = ',', default_value = "classic")]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        opts: ExperimentOpts,
    },
}

#[derive(Args, Clone)]
struct ExperimentOpts {
    #[arg(long, default_value_t = 1)]
    shots: u32,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Parameter-initialization seed, independent of `--seed`.
    #[arg(long)]
    init_seed: Option<u64>,
    /// Shuffle training samples each epoch.
    #[arg(long)]
    shuffle: bool,
    /// Disable data-parallel evaluation and gradient accumulation.
    #[arg(long)]
    sequential: bool,
    /// Record measured per-epoch seconds in epochs.csv.
    #[arg(long)]
    epoch_times: bool,
    #[arg(long)]
    n_points: Option<usize>,
    #[arg(long)]
    periods: Option<f64>,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    a2: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    mass: Option<f64>,
    #[arg(long)]
    spring: Option<f64>,
    #[arg(long)]
    friction: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    v0: Option<f64>,
}

impl ExperimentOpts {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Copy>(target: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *target = v;
            }
        }
        cfg.shots = self.shots;
        set(&mut cfg.hidden_dim, self.hidden_dim);
        set(&mut cfg.window_len, self.window);
        set(&mut cfg.train.epochs, self.epochs);
        set(&mut cfg.train.batch_size, self.batch_size);
        set(&mut cfg.n_qubits, self.qubits);
        set(&mut cfg.depth, self.depth);
        set(&mut cfg.train_fraction, self.train_fraction);
        set(&mut cfg.train.optimizer.learning_rate, self.learning_rate);
        cfg.init_seed = self.init_seed;
        cfg.train.shuffle = self.shuffle;
        if self.sequential {
            cfg.train.execution = Execution::Sequential;
        }
        cfg.epoch_times = self.epoch_times;
        let d = &mut cfg.dataset;
        set(&mut d.n_points, self.n_points);
        set(&mut d.periods, self.periods);
        set(&mut d.waves.a1, self.a1);
        set(&mut d.waves.a2, self.a2);
        set(&mut d.waves.lambda1, self.lambda1);
        set(&mut d.waves.lambda2, self.lambda2);
        set(&mut d.waves.x_max, self.x_max);
        set(&mut d.oscillator.mass, self.mass);
        set(&mut d.oscillator.spring, self.spring);
        set(&mut d.oscillator.friction, self.friction);
        set(&mut d.oscillator.t_max, self.t_max);
        set(&mut d.oscillator.x0, self.x0);
        set(&mut d.oscillator.v0, self.v0);
    }
}

/// Accepts `slstm-shots-100` as shorthand for `slstm-shots` with 100 shots.
fn parse_model(s: &str, default_shots: u32) -> Result<(ModelKind, u32), Error> {
    if let Ok(kind) = s.parse::<ModelKind>() {
        return Ok((kind, default_shots));
    }
    let (base, shots) = s.rsplit_once('-').unwrap_or((s, ""));
    match (base.parse::<ModelKind>(), shots.parse::<u32>()) {
        (Ok(kind), Ok(shots)) if kind.uses_shots() => Ok((kind, shots)),
        _ => Err(Error::InvalidConfig {
            field: "models",
            reason: format!("unknown model {s:?}"),
        }),
    }
}

fn print_report(report: &Report, text: bool) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if text {
        print!("{}", report.text);
    } else {
        print!("{}", report.csv);
    }
}

fn write_out(path: &PathBuf, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            dataset,
            model,
            seed,
            out,
            opts,
        } => {
            let mut cfg = ExperimentConfig::new(dataset, model, seed, out);
            opts.apply(&mut cfg);
            let outcome = run_experiment(&cfg)?;
            let s = &outcome.summary;
            println!(
                "{} on {}: best epoch {} val rmse {:.4}, {:.1}s -> {}",
                s.model,
                s.dataset,
                s.best_epoch,
                s.val_rmse,
                s.wall_seconds,
                cfg.output.display()
            );
        }
        Command::Table { summaries, csv } => {
            let report = emit_table(&summaries)?;
            print_report(&report, true);
            if let Some(path) = csv {
                write_out(&path, &report.csv)?;
            }
        }
        Command::Convergence { runs, out } => {
            let report = emit_convergence(&runs)?;
            match out {
                Some(path) => {
                    for w in &report.warnings {
                        eprintln!("warning: {w}");
                    }
                    write_out(&path, &report.csv)?;
                }
                None => print_report(&report, false),
            }
        }
        Command::Batch {
            datasets,
            models,
            seeds,
            jobs,
            out,
            opts,
        } => {
            let mut base = ExperimentConfig::new(SignalKind::Sine, ModelKind::Classic, 0, out);
            opts.apply(&mut base);
            let models = models
                .iter()
                .map(|m| parse_model(m, opts.shots))
                .collect::<Result<Vec<_>, _>>()?;
            let spec = BatchSpec {
                base,
                datasets,
                models,
                seeds,
                jobs,
            };
            let mut failed = 0;
            for (cfg, result) in spec.configs().iter().zip(run_batch(&spec)?) {
                match result {
                    Ok(o) => println!(
                        "{} {} seed {}: val rmse {:.4} ({:.1}s)",
                        o.summary.dataset,
                        o.summary.model,
                        o.summary.seed,
                        o.summary.val_rmse,
                        o.summary.wall_seconds
                    ),
                    Err(e) => {
                        failed += 1;
                        eprintln!("error: {}: {e}", cfg.output.display());
                    }
                }
            }
            if failed > 0 {
                return Err(Error::Degenerate("some batch runs failed"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
