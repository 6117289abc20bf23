//! Benchmark signals, min-max scaling, and sliding-window supervised pairs.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Sine,
    Sawtooth,
    SummedWaves,
    DampedOscillator,
}

impl SignalKind {
    pub const ALL: [SignalKind; 4] = [
        SignalKind::Sine,
        SignalKind::Sawtooth,
        SignalKind::SummedWaves,
        SignalKind::DampedOscillator,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SignalKind::Sine => "sine",
            SignalKind::Sawtooth => "sawtooth",
            SignalKind::SummedWaves => "summed_waves",
            SignalKind::DampedOscillator => "damped_oscillator",
        }
    }
}

impl std::str::FromStr for SignalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "sine" => Ok(SignalKind::Sine),
            "sawtooth" => Ok(SignalKind::Sawtooth),
            "summed_waves" => Ok(SignalKind::SummedWaves),
            "damped_oscillator" | "oscillator" => Ok(SignalKind::DampedOscillator),
            other => Err(Error::config("dataset", format!("unknown signal `{other}`"))),
        }
    }
}

impl std::fmt::Display for SignalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummedWaves {
    pub a1: f64,
    pub a2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub x_max: f64,
}

impl Default for SummedWaves {
    fn default() -> Self {
        SummedWaves {
            a1: 1.0,
            a2: 1.0,
            lambda1: 9.0,
            lambda2: 11.0,
            x_max: 99.0,
        }
    }
}

/// Mass-spring system with friction, `m·x'' + c·x' + k·x = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oscillator {
    pub mass: f64,
    pub spring: f64,
    pub friction: f64,
    pub t_max: f64,
    pub x0: f64,
    pub v0: f64,
}

impl Default for Oscillator {
    fn default() -> Self {
        Oscillator {
            mass: 0.75,
            spring: 4.0,
            friction: 0.1,
            t_max: 20.0,
            x0: 1.0,
            v0: 0.0,
        }
    }
}

impl Oscillator {
    /// Characteristic frequency `√(k/m)`.
    pub fn omega0(&self) -> f64 {
        (self.spring / self.mass).sqrt()
    }

    /// Damping ratio `c / (2√(mk))`.
    pub fn damping_ratio(&self) -> f64 {
        self.friction / (2.0 * (self.mass * self.spring).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("mass", self.mass),
            ("spring", self.spring),
            ("t_max", self.t_max),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if !(self.friction >= 0.0) {
            return Err(Error::config("friction", "must be non-negative"));
        }
        if self.damping_ratio() >= 1.0 {
            return Err(Error::config(
                "friction",
                format!("damping ratio {} is not underdamped", self.damping_ratio()),
            ));
        }
        Ok(())
    }

    /// Closed-form underdamped displacement at time `t`.
    pub fn displacement(&self, t: f64) -> f64 {
        let w0 = self.omega0();
        let chi = self.damping_ratio();
        let wd = w0 * (1.0 - chi * chi).sqrt();
        let decay = (-chi * w0 * t).exp();
        decay
            * (self.x0 * (wd * t).cos() + (self.v0 + chi * w0 * self.x0) / wd * (wd * t).sin())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub kind: SignalKind,
    pub n_points: usize,
    /// Periods covered by sine and sawtooth.
    pub periods: f64,
    pub waves: SummedWaves,
    pub oscillator: Oscillator,
}

impl SignalConfig {
    pub fn new(kind: SignalKind) -> Self {
        SignalConfig {
            kind,
            n_points: 300,
            periods: 4.0,
            waves: SummedWaves::default(),
            oscillator: Oscillator::default(),
        }
    }

    pub fn generate(&self) -> Result<Vec<f64>> {
        match self.kind {
            SignalKind::Sine => gen_sine(self.n_points, self.periods),
            SignalKind::Sawtooth => gen_sawtooth(self.n_points, self.periods),
            SignalKind::SummedWaves => gen_summed_waves(&self.waves, self.n_points),
            SignalKind::DampedOscillator => gen_damped_oscillator(&self.oscillator, self.n_points),
        }
    }
}

fn check_points(n_points: usize) -> Result<()> {
    if n_points < 2 {
        return Err(Error::config("n_points", "need at least 2 samples"));
    }
    Ok(())
}

/// Uniform grid `k·span/(n−1)`.
fn grid(n_points: usize, span: f64) -> impl Iterator<Item = f64> {
    let step = span / (n_points - 1) as f64;
    (0..n_points).map(move |k| k as f64 * step)
}

/// `sin(2π·periods·k/(n−1))`
pub fn gen_sine(n_points: usize, periods: f64) -> Result<Vec<f64>> {
    check_points(n_points)?;
    Ok((0..n_points)
        .map(|k| (2.0 * PI * periods * k as f64 / (n_points - 1) as f64).sin())
        .collect())
}

/// Rises linearly from −1 towards +1 over each period, then drops back.
pub fn gen_sawtooth(n_points: usize, periods: f64) -> Result<Vec<f64>> {
    check_points(n_points)?;
    Ok((0..n_points)
        .map(|k| {
            let phase = periods * k as f64 / (n_points - 1) as f64;
            2.0 * (phase - phase.floor()) - 1.0
        })
        .collect())
}

pub fn summed_waves_at(cfg: &SummedWaves, x: f64) -> f64 {
    cfg.a1 * (2.0 * PI * x / cfg.lambda1).cos() + cfg.a2 * (2.0 * PI * x / cfg.lambda2).cos()
}

/// Two cosines sampled on `[0, x_max]`.
pub fn gen_summed_waves(cfg: &SummedWaves, n_points: usize) -> Result<Vec<f64>> {
    check_points(n_points)?;
    if !(cfg.lambda1 > 0.0 && cfg.lambda2 > 0.0) {
        return Err(Error::config("lambda", "wavelengths must be positive"));
    }
    Ok(grid(n_points, cfg.x_max)
        .map(|x| summed_waves_at(cfg, x))
        .collect())
}

/// Closed-form damped oscillator sampled on `[0, t_max]`.
pub fn gen_damped_oscillator(cfg: &Oscillator, n_points: usize) -> Result<Vec<f64>> {
    check_points(n_points)?;
    cfg.validate()?;
    Ok(grid(n_points, cfg.t_max)
        .map(|t| cfg.displacement(t))
        .collect())
}

/// Affine map of `[min, max]` onto `[−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
}

impl Scaler {
    pub fn apply(&self, x: f64) -> f64 {
        let t = 2.0 * (x - self.min) / (self.max - self.min) - 1.0;
        t.clamp(-1.0, 1.0)
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y + 1.0) / 2.0 * (self.max - self.min) + self.min
    }
}

pub fn scale_minmax(series: &[f64]) -> Result<(Vec<f64>, Scaler)> {
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("scale_minmax"));
    }
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(Error::Degenerate("series is constant"));
    }
    let scaler = Scaler { min, max };
    Ok((series.iter().map(|&x| scaler.apply(x)).collect(), scaler))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// One length-`input_dim` vector per time step.
    pub window: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub scaler: Option<Scaler>,
    /// Index of the first sample in the source series.
    pub offset: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target[0]).collect()
    }
}

/// Sample `k` takes `series[k..k+window_len]` as input and `series[k+window_len]`
/// as target.
pub fn make_windows(series: &[f64], window_len: usize) -> Result<Dataset> {
    if window_len == 0 {
        return Err(Error::config("window_len", "must be at least 1"));
    }
    if series.len() <= window_len {
        return Err(Error::config(
            "window_len",
            format!("series of {} points is too short for window {window_len}", series.len()),
        ));
    }
    let samples = series
        .windows(window_len + 1)
        .map(|w| Sample {
            window: w[..window_len].iter().map(|&x| vec![x]).collect(),
            target: vec![w[window_len]],
        })
        .collect();
    Ok(Dataset {
        samples,
        scaler: None,
        offset: 0,
    })
}

/// First `round(fraction·n)` samples train, the rest validate; order kept.
pub fn split_chronological(ds: &Dataset, train_fraction: f64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("train_fraction", "must lie strictly between 0 and 1"));
    }
    let n_train = (train_fraction * ds.len() as f64).round() as usize;
    if n_train == 0 || n_train >= ds.len() {
        return Err(Error::config(
            "train_fraction",
            format!("split of {} samples leaves one side empty", ds.len()),
        ));
    }
    let train = Dataset {
        samples: ds.samples[..n_train].to_vec(),
        scaler: ds.scaler,
        offset: ds.offset,
    };
    let val = Dataset {
        samples: ds.samples[n_train..].to_vec(),
        scaler: ds.scaler,
        offset: ds.offset + n_train,
    };
    Ok((train, val))
}

/// Generated, scaled, windowed and split data for one experiment.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub raw: Vec<f64>,
    pub scaled: Vec<f64>,
    pub train: Dataset,
    pub val: Dataset,
}

pub fn prepare(cfg: &SignalConfig, window_len: usize, train_fraction: f64) -> Result<PreparedData> {
    if cfg.n_points < window_len + 2 {
        return Err(Error::config(
            "n_points",
            format!("need at least window_len + 2 = {} points", window_len + 2),
        ));
    }
    let raw = cfg.generate()?;
    let (scaled, scaler) = scale_minmax(&raw)?;
    let mut ds = make_windows(&scaled, window_len)?;
    ds.scaler = Some(scaler);
    let (train, val) = split_chronological(&ds, train_fraction)?;
    Ok(PreparedData {
        raw,
        scaled,
        train,
        val,
    })
}

/// `index,raw,scaled` CSV of the generated series.
pub fn write_dataset_csv(path: &Path, data: &PreparedData) -> Result<()> {
    let mut out = String::from("index,raw,scaled\n");
    for (k, (r, s)) in data.raw.iter().zip(&data.scaled).enumerate() {
        out.push_str(&format!("{k},{r},{s}\n"));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
