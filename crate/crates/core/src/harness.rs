//! Experiment runner and report generation.
//!
//! A run writes three files into its output directory:
//!
//! - `epochs.csv`: `epoch,train_rmse,train_r2,val_rmse,val_r2,seconds`, one
//!   row per epoch, numbers with 6 significant digits;
//! - `summary.json`: best-epoch metrics, training wall-clock seconds, the seed
//!   and the full effective [`ExperimentConfig`];
//! - `dataset.csv`: the generated series before and after scaling.
//!
//! The `seconds` column is `0` unless [`ExperimentConfig::epoch_times`] is
//! set, which keeps `epochs.csv` byte-identical across reruns of a seed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datasets::{prepare, write_dataset_csv, PreparedData, SignalConfig, SignalKind};
use crate::error::{Error, Result};
use crate::lstm::LstmParams;
use crate::math::Prng;
use crate::par::Execution;
use crate::qlstm::{QlstmDims, QlstmParams};
use crate::quantum::ExpectationMode;
use crate::stochastic::QuantConfig;
use crate::train::{
    train_model, ClassicModel, QuantumModel, RunRecord, SequenceModel, StochasticModel,
    TrainConfig,
};

/// Model family; the shot count lives in [`ExperimentConfig::shots`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Classic,
    QlstmAnalytic,
    QlstmShots,
    SlstmShots,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Classic,
        ModelKind::QlstmAnalytic,
        ModelKind::QlstmShots,
        ModelKind::SlstmShots,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Classic => "classic",
            ModelKind::QlstmAnalytic => "qlstm-analytic",
            ModelKind::QlstmShots => "qlstm-shots",
            ModelKind::SlstmShots => "slstm-shots",
        }
    }

    pub fn uses_shots(&self) -> bool {
        matches!(self, ModelKind::QlstmShots | ModelKind::SlstmShots)
    }

    /// Display label, e.g. `slstm-shots-100`.
    pub fn label(&self, shots: u32) -> String {
        if self.uses_shots() {
            format!("{}-{shots}", self.name())
        } else {
            self.name().to_string()
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "model",
                    format!("unknown model {s:?}; expected one of classic, qlstm-analytic, qlstm-shots, slstm-shots"),
                )
            })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: SignalConfig,
    pub model: ModelKind,
    pub shots: u32,
    pub hidden_dim: usize,
    pub window_len: usize,
    pub n_qubits: usize,
    pub depth: usize,
    pub train_fraction: f64,
    pub train: TrainConfig,
    pub seed: u64,
    /// Seed for parameter initialization; defaults to a stream derived from `seed`.
    pub init_seed: Option<u64>,
    pub epoch_times: bool,
    pub output: PathBuf,
}

impl ExperimentConfig {
    pub fn new(kind: SignalKind, model: ModelKind, seed: u64, output: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: SignalConfig::new(kind),
            model,
            shots: 1,
            hidden_dim: 5,
            window_len: 4,
            n_qubits: 4,
            depth: 1,
            train_fraction: 0.67,
            train: TrainConfig::default(),
            seed,
            init_seed: None,
            epoch_times: false,
            output: output.into(),
        }
    }

    pub fn label(&self) -> String {
        self.model.label(self.shots)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: usize| {
            if v == 0 {
                Err(Error::config(field, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive("hidden_dim", self.hidden_dim)?;
        positive("window_len", self.window_len)?;
        positive("epochs", self.train.epochs)?;
        positive("n_qubits", self.n_qubits)?;
        positive("depth", self.depth)?;
        if self.n_qubits > 16 {
            return Err(Error::config("n_qubits", "at most 16 qubits are simulated"));
        }
        if self.shots == 0 {
            return Err(Error::config("shots", "must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
        }
        if self.dataset.n_points < self.window_len + 2 {
            return Err(Error::config(
                "n_points",
                format!("need at least window_len + 2 = {} points", self.window_len + 2),
            ));
        }
        if !(self.dataset.periods.is_finite() && self.dataset.periods > 0.0) {
            return Err(Error::config("periods", "must be positive"));
        }
        let w = &self.dataset.waves;
        for (field, v) in [
            ("a1", w.a1),
            ("a2", w.a2),
            ("lambda1", w.lambda1),
            ("lambda2", w.lambda2),
            ("x_max", w.x_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.dataset.kind == SignalKind::DampedOscillator {
            self.dataset.oscillator.validate()?;
        }
        self.train.validate()
    }
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub best_epoch: usize,
    pub train_rmse: f64,
    pub train_r2: Option<f64>,
    pub val_rmse: f64,
    pub val_r2: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub record: RunRecord,
    pub summary: Summary,
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn fit<M: SequenceModel>(
    mut model: M,
    data: &PreparedData,
    cfg: &TrainConfig,
    rng: &mut Prng,
) -> Result<RunRecord> {
    train_model(&mut model, &data.train, &data.val, cfg, rng)
}

/// Trains the configured model; performs no file I/O.
pub fn train_experiment(cfg: &ExperimentConfig) -> Result<(PreparedData, RunRecord)> {
    cfg.validate()?;
    let data = prepare(&cfg.dataset, cfg.window_len, cfg.train_fraction)?;
    let mut root = Prng::seed_from_u64(cfg.seed);
    let derived = root.split();
    let mut init = cfg.init_seed.map_or(derived, Prng::seed_from_u64);
    let mut rng = root.split();
    let (input_dim, output_dim) = (1, 1);
    let lstm = |init: &mut Prng| LstmParams::init(input_dim, cfg.hidden_dim, output_dim, init);
    let dims = QlstmDims {
        input_dim,
        hidden_dim: cfg.hidden_dim,
        output_dim,
        n_qubits: cfg.n_qubits,
        depth: cfg.depth,
    };
    let record = match cfg.model {
        ModelKind::Classic => fit(
            ClassicModel {
                params: lstm(&mut init)?,
            },
            &data,
            &cfg.train,
            &mut rng,
        )?,
        ModelKind::SlstmShots => fit(
            StochasticModel {
                params: lstm(&mut init)?,
                quant: QuantConfig::with_shots(cfg.shots),
            },
            &data,
            &cfg.train,
            &mut rng,
        )?,
        ModelKind::QlstmAnalytic | ModelKind::QlstmShots => {
            let mode = if cfg.model == ModelKind::QlstmAnalytic {
                ExpectationMode::Analytic
            } else {
                ExpectationMode::Shots(cfg.shots)
            };
            fit(
                QuantumModel {
                    params: QlstmParams::init(dims, &mut init)?,
                    mode,
                },
                &data,
                &cfg.train,
                &mut rng,
            )?
        }
    };
    Ok((data, record))
}

/// Trains the configured model and writes its output files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let started = Instant::now();
    let (data, record) = train_experiment(cfg)?;
    log::info!(
        "{} on {} (seed {}) trained in {:.1}s",
        cfg.label(),
        cfg.dataset.kind,
        cfg.seed,
        started.elapsed().as_secs_f64()
    );
    let best = record.best_epoch()?;
    let summary = Summary {
        model: cfg.label(),
        dataset: cfg.dataset.kind.name().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        best_epoch: best.epoch,
        train_rmse: best.train_rmse,
        train_r2: finite_or_none(best.train_r2),
        val_rmse: best.val_rmse,
        val_r2: finite_or_none(best.val_r2),
        wall_seconds: record.wall_seconds,
    };
    write_file(&cfg.output.join("epochs.csv"), &epochs_csv(&record, cfg.epoch_times))?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&cfg.output.join("summary.json"), &(json + "\n"))?;
    write_dataset_csv(&cfg.output.join("dataset.csv"), &data)?;
    Ok(Outcome { record, summary })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Renders `x` with 6 significant digits, `%g` style.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const EPOCHS_HEADER: &str = "epoch,train_rmse,train_r2,val_rmse,val_r2,seconds";

pub fn epochs_csv(record: &RunRecord, with_times: bool) -> String {
    let mut out = format!("{EPOCHS_HEADER}\n");
    for e in &record.epochs {
        let seconds = if with_times { e.seconds } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch,
            format_sig6(e.train_rmse),
            format_sig6(e.train_r2),
            format_sig6(e.val_rmse),
            format_sig6(e.val_r2),
            format_sig6(seconds),
        ));
    }
    out
}

/// Loads a `summary.json`; `path` may also name the run directory.
pub fn load_summary(path: &Path) -> Result<Summary> {
    let file = if path.is_dir() {
        path.join("summary.json")
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: file,
        reason: e.to_string(),
    })
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub csv: String,
    pub text: String,
    /// One message per skipped input.
    pub warnings: Vec<String>,
}

pub const TABLE_HEADER: [&str; 9] = [
    "model",
    "dataset",
    "seed",
    "train_rmse",
    "train_r2",
    "val_rmse",
    "val_r2",
    "runtime_s",
    "note",
];

/// One row per summary, sorted by model name; repeated models are kept and
/// marked `duplicate`.
pub fn emit_table(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::Degenerate("no summaries given"));
    }
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    for p in paths {
        match load_summary(p) {
            Ok(s) => rows.push(s),
            Err(e) => {
                log::warn!("skipping {}: {e}", p.display());
                warnings.push(format!("skipping {}: {e}", p.display()));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("every summary was malformed"));
    }
    rows.sort_by(|a, b| (&a.model, &a.dataset, a.seed).cmp(&(&b.model, &b.dataset, b.seed)));
    let fmt_opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), format_sig6);
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|s| {
            let dup = rows.iter().filter(|o| o.model == s.model && o.dataset == s.dataset).count() > 1;
            vec![
                s.model.clone(),
                s.dataset.clone(),
                s.seed.to_string(),
                format_sig6(s.train_rmse),
                fmt_opt(s.train_r2),
                format_sig6(s.val_rmse),
                fmt_opt(s.val_r2),
                format!("{:.2}", s.wall_seconds),
                if dup { "duplicate".into() } else { String::new() },
            ]
        })
        .collect();

    let mut csv = TABLE_HEADER.join(",") + "\n";
    for row in &cells {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }

    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |row: Vec<&str>| {
        let padded: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut text = line(TABLE_HEADER.to_vec());
    text.push_str(&line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for row in &cells {
        text.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    Ok(Report { csv, text, warnings })
}

fn read_val_rmse(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some(EPOCHS_HEADER) {
        return Err(malformed("missing epochs header".into()));
    }
    lines
        .enumerate()
        .map(|(k, l)| {
            let cols: Vec<&str> = l.split(',').collect();
            if cols.len() != 6 {
                return Err(malformed(format!("row {} has {} columns", k + 1, cols.len())));
            }
            Ok((cols[0].to_string(), cols[3].to_string()))
        })
        .collect()
}

/// Long-format `model,epoch,val_rmse` CSV from `epochs.csv` files (or run
/// directories). Model names come from the sibling `summary.json`, or the
/// parent directory's name when it is absent. Values are copied verbatim.
pub fn emit_convergence(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::Degenerate("no runs given"));
    }
    let mut warnings = Vec::new();
    let mut csv = String::from("model,epoch,val_rmse\n");
    let mut used = 0;
    for p in paths {
        let (dir, file) = if p.is_dir() {
            (p.clone(), p.join("epochs.csv"))
        } else {
            (p.parent().map(Path::to_path_buf).unwrap_or_default(), p.clone())
        };
        let model = load_summary(&dir.join("summary.json"))
            .map(|s| s.model)
            .unwrap_or_else(|_| {
                dir.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "unknown".into())
            });
        match read_val_rmse(&file) {
            Ok(rows) => {
                used += 1;
                for (epoch, v) in rows {
                    csv.push_str(&format!("{model},{epoch},{v}\n"));
                }
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", file.display());
                warnings.push(format!("skipping {}: {e}", file.display()));
            }
        }
    }
    if used == 0 {
        return Err(Error::Degenerate("every run was malformed"));
    }
    Ok(Report {
        csv,
        text: String::new(),
        warnings,
    })
}

/// A grid of experiments sharing one base configuration.
#[derive(Clone, Debug)]
pub struct BatchSpec {
    pub base: ExperimentConfig,
    pub datasets: Vec<SignalKind>,
    /// Each model paired with its shot count.
    pub models: Vec<(ModelKind, u32)>,
    pub seeds: Vec<u64>,
    pub jobs: usize,
}

impl BatchSpec {
    /// Expanded configs, each writing to `<output>/<dataset>/<model>/seed-<seed>`.
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &kind in &self.datasets {
            for &(model, shots) in &self.models {
                for &seed in &self.seeds {
                    let mut cfg = self.base.clone();
                    cfg.dataset.kind = kind;
                    cfg.model = model;
                    cfg.shots = shots;
                    cfg.seed = seed;
                    cfg.output = self
                        .base
                        .output
                        .join(kind.name())
                        .join(model.label(shots))
                        .join(format!("seed-{seed}"));
                    out.push(cfg);
                }
            }
        }
        out
    }
}

/// Runs every config of the grid, up to `jobs` at a time; results are in
/// grid order.
pub fn run_batch(spec: &BatchSpec) -> Result<Vec<Result<Outcome>>> {
    if spec.jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1"));
    }
    let configs = spec.configs();
    if configs.is_empty() {
        return Err(Error::Degenerate("empty experiment grid"));
    }
    for c in &configs {
        c.validate()?;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.jobs)
            .build()
            .map_err(|e| Error::config("jobs", e.to_string()))?;
        Ok(pool.install(|| configs.par_iter().map(run_experiment).collect()))
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok(configs.iter().map(run_experiment).collect())
    }
}

/// Returns `cfg` with the given execution strategy.
pub fn with_execution(mut cfg: ExperimentConfig, execution: Execution) -> ExperimentConfig {
    cfg.train.execution = execution;
    cfg
}
