//! Stochastic rounding of MAC outputs and the stochastic LSTM built on it.
//!
//! Each gate pre-activation `u = W·v + b` is replaced by the mean of `shots`
//! independent draws of `clamp(Q(u))`, where `Q` rounds up with probability
//! equal to the fractional part of `u`. Only the forward path is stochastic;
//! the backward pass treats the quantizer as identity inside the clamp range.

use serde::{Deserialize, Serialize};

use crate::cell::CellState;
use crate::error::{Error, Result};
use crate::lstm::{
    cell_forward_with, sequence_backward_with, sequence_forward_with, LstmParams, SequenceCache,
    StepRecord,
};
use crate::math::Prng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub shots: u32,
    pub clamp_lo: i64,
    pub clamp_hi: i64,
}

impl Default for QuantConfig {
    /// One shot, 8-bit signed range.
    fn default() -> Self {
        QuantConfig {
            shots: 1,
            clamp_lo: -128,
            clamp_hi: 127,
        }
    }
}

impl QuantConfig {
    pub fn with_shots(shots: u32) -> Self {
        QuantConfig {
            shots,
            ..QuantConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::config("shots", "must be at least 1"));
        }
        if self.clamp_lo >= self.clamp_hi {
            return Err(Error::config(
                "clamp",
                format!("lower bound {} must be below upper bound {}", self.clamp_lo, self.clamp_hi),
            ));
        }
        Ok(())
    }

    fn in_range(&self, u: f64) -> bool {
        u >= self.clamp_lo as f64 && u <= self.clamp_hi as f64
    }
}

/// `⌊w⌋ + 1` with probability `w − ⌊w⌋`, otherwise `⌊w⌋`.
pub fn stochastic_round(w: f64, rng: &mut Prng) -> Result<f64> {
    if !w.is_finite() {
        return Err(Error::NonFinite("stochastic_round"));
    }
    Ok(round_unchecked(w, rng))
}

#[inline]
fn round_unchecked(w: f64, rng: &mut Prng) -> f64 {
    let floor = w.floor();
    let frac = w - floor;
    // A zero fractional part still consumes a draw so the stream position does
    // not depend on the data.
    if rng.uniform() < frac {
        floor + 1.0
    } else {
        floor
    }
}

pub fn clamp(q: f64, cfg: &QuantConfig) -> f64 {
    q.max(cfg.clamp_lo as f64).min(cfg.clamp_hi as f64)
}

/// Elementwise mean of `cfg.shots` draws of `clamp(stochastic_round(uᵢ))`.
pub fn nshot_quantize(u: &[f64], cfg: &QuantConfig, rng: &mut Prng) -> Result<Vec<f64>> {
    cfg.validate()?;
    if u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("nshot_quantize"));
    }
    Ok(quantize_unchecked(u, cfg, rng))
}

fn quantize_unchecked(u: &[f64], cfg: &QuantConfig, rng: &mut Prng) -> Vec<f64> {
    u.iter()
        .map(|&x| {
            let total: f64 = (0..cfg.shots)
                .map(|_| clamp(round_unchecked(x, rng), cfg))
                .sum();
            total / cfg.shots as f64
        })
        .collect()
}

/// Straight-through derivative of the quantizer at raw pre-activation `u`.
pub fn straight_through(u: f64, cfg: &QuantConfig) -> f64 {
    if cfg.in_range(u) {
        1.0
    } else {
        0.0
    }
}

fn checked_quantizer<'a>(
    cfg: &'a QuantConfig,
    rng: &'a mut Prng,
    failed: &'a mut bool,
) -> impl FnMut(&[f64]) -> Vec<f64> + 'a {
    move |u: &[f64]| {
        if u.iter().any(|x| !x.is_finite()) {
            *failed = true;
            return u.to_vec();
        }
        quantize_unchecked(u, cfg, rng)
    }
}

/// Classic cell arithmetic with every gate MAC output passed through
/// [`nshot_quantize`] before its activation. `h` and `c` stay unquantized.
pub fn slstm_cell_forward(
    p: &LstmParams,
    cfg: &QuantConfig,
    x: &[f64],
    prev: &CellState,
    rng: &mut Prng,
) -> Result<(CellState, StepRecord)> {
    cfg.validate()?;
    let mut failed = false;
    let out = cell_forward_with(p, x, prev, checked_quantizer(cfg, rng, &mut failed))?;
    if failed {
        return Err(Error::NonFinite("slstm pre-activation"));
    }
    Ok(out)
}

pub fn slstm_sequence_forward(
    p: &LstmParams,
    cfg: &QuantConfig,
    window: &[Vec<f64>],
    rng: &mut Prng,
) -> Result<(Vec<f64>, SequenceCache)> {
    cfg.validate()?;
    let mut failed = false;
    let out = sequence_forward_with(p, window, checked_quantizer(cfg, rng, &mut failed))?;
    if failed {
        return Err(Error::NonFinite("slstm pre-activation"));
    }
    Ok(out)
}

/// BPTT through the realized forward values with a straight-through quantizer.
pub fn slstm_sequence_backward(
    p: &LstmParams,
    cfg: &QuantConfig,
    cache: &SequenceCache,
    d_prediction: &[f64],
) -> Result<LstmParams> {
    sequence_backward_with(p, cache, d_prediction, |u| straight_through(u, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::{sequence_backward, sequence_forward};
    use crate::math::Matrix;
    use crate::params::ParamSet;
    use proptest::prelude::*;

    fn byte() -> QuantConfig {
        QuantConfig::default()
    }

    #[test]
    fn integers_are_fixed_points() {
        let mut rng = Prng::seed_from_u64(0);
        for _ in 0..1000 {
            assert_eq!(stochastic_round(2.0, &mut rng).unwrap(), 2.0);
            assert_eq!(stochastic_round(-7.0, &mut rng).unwrap(), -7.0);
        }
    }

    #[test]
    fn negative_fraction_rounds_toward_both_neighbours() {
        let mut rng = Prng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        let mut ups = 0;
        for _ in 0..n {
            let q = stochastic_round(-1.25, &mut rng).unwrap();
            assert!(q == -1.0 || q == -2.0);
            ups += (q == -1.0) as usize;
            sum += q;
        }
        assert!((sum / n as f64 + 1.25).abs() < 0.005);
        assert!((ups as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn frequency_of_round_up_within_three_sigma() {
        let mut rng = Prng::seed_from_u64(2);
        let n = 100_000;
        let ones = (0..n)
            .map(|_| stochastic_round(0.3, &mut rng).unwrap())
            .inspect(|q| assert!(*q == 0.0 || *q == 1.0))
            .filter(|&q| q == 1.0)
            .count();
        let sigma = (0.3_f64 * 0.7 / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - 0.3).abs() < 3.0 * sigma);
    }

    #[test]
    fn rejects_non_finite() {
        let mut rng = Prng::seed_from_u64(0);
        assert!(stochastic_round(f64::NAN, &mut rng).is_err());
        assert!(nshot_quantize(&[f64::INFINITY], &byte(), &mut rng).is_err());
    }

    #[test]
    fn clamp_cases() {
        let cfg = byte();
        assert_eq!(clamp(200.0, &cfg), 127.0);
        assert_eq!(clamp(0.0, &cfg), 0.0);
        assert_eq!(clamp(-130.0, &cfg), -128.0);
    }

    #[test]
    fn config_validation() {
        assert!(QuantConfig::with_shots(0).validate().is_err());
        let bad = QuantConfig {
            shots: 1,
            clamp_lo: 3,
            clamp_hi: 3,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nshot_cases() {
        let mut rng = Prng::seed_from_u64(3);
        assert_eq!(nshot_quantize(&[2.0], &byte(), &mut rng).unwrap(), vec![2.0]);
        let big = QuantConfig::with_shots(100_000);
        let m = nshot_quantize(&[0.3], &big, &mut rng).unwrap()[0];
        assert!((m - 0.3).abs() < 0.01);
    }

    #[test]
    fn hundred_shot_spread_matches_binomial() {
        let mut rng = Prng::seed_from_u64(4);
        let cfg = QuantConfig::with_shots(100);
        let draws: Vec<f64> = (0..4000)
            .map(|_| nshot_quantize(&[0.5], &cfg, &mut rng).unwrap()[0])
            .collect();
        assert!(draws.iter().all(|d| (0.0..=1.0).contains(d)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var.sqrt() - 0.05).abs() < 0.005, "std {}", var.sqrt());
    }

    #[test]
    fn variance_scales_inversely_with_shots() {
        let mut rng = Prng::seed_from_u64(5);
        let w: f64 = 2.3;
        let f = w - w.floor();
        let cfg = QuantConfig::with_shots(100);
        let draws: Vec<f64> = (0..5000)
            .map(|_| nshot_quantize(&[w], &cfg, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        let expected = f * (1.0 - f) / 100.0;
        assert!(var / expected < 1.5 && expected / var < 1.5);
    }

    #[test]
    fn zero_params_quantize_to_classic_zero_case() {
        let p = LstmParams::zeros(1, 3, 1);
        let mut rng = Prng::seed_from_u64(6);
        let (s, rec) = slstm_cell_forward(&p, &byte(), &[0.9], &CellState::zeros(3), &mut rng)
            .unwrap();
        assert!(rec.used.iter().all(|u| u.iter().all(|&x| x == 0.0)));
        assert_eq!(rec.acts.forget, vec![0.5; 3]);
        assert_eq!(s.h, vec![0.0; 3]);
    }

    #[test]
    fn one_shot_outputs_are_clamped_integers() {
        let mut rng = Prng::seed_from_u64(7);
        let mut p = LstmParams::init(1, 4, 1, &mut rng).unwrap();
        for w in p.w.iter_mut() {
            *w = Matrix::uniform(4, 5, 6.0, &mut rng);
        }
        let cfg = QuantConfig {
            shots: 1,
            clamp_lo: -2,
            clamp_hi: 2,
        };
        let (_, rec) =
            slstm_cell_forward(&p, &cfg, &[3.0], &CellState::zeros(4), &mut rng).unwrap();
        for u in rec.used.iter().flatten() {
            assert_eq!(u.fract(), 0.0);
            assert!((-2.0..=2.0).contains(u));
        }
    }

    #[test]
    fn many_shots_approach_classic_gates() {
        let mut rng = Prng::seed_from_u64(8);
        let cfg = QuantConfig::with_shots(100_000);
        for _ in 0..5 {
            let mut p = LstmParams::zeros(1, 1, 1);
            for t in p.tensors_mut() {
                for x in t.iter_mut() {
                    *x = rng.uniform() * 2.0 - 1.0;
                }
            }
            let x = [rng.uniform() * 6.0 - 3.0];
            let prev = CellState {
                h: vec![rng.uniform() * 2.0 - 1.0],
                c: vec![rng.uniform() * 2.0 - 1.0],
            };
            let (_, exact) = crate::lstm::lstm_cell_forward(&p, &x, &prev).unwrap();
            let (_, noisy) = slstm_cell_forward(&p, &cfg, &x, &prev, &mut rng).unwrap();
            for (a, b) in [
                (&exact.acts.forget, &noisy.acts.forget),
                (&exact.acts.input, &noisy.acts.input),
                (&exact.acts.candidate, &noisy.acts.candidate),
                (&exact.acts.output, &noisy.acts.output),
            ] {
                assert!((a[0] - b[0]).abs() < 0.01);
            }
        }
    }

    #[test]
    fn integer_preactivations_give_classic_gradients() {
        // Integer weights and inputs with zero hidden weights keep every MAC
        // output integral, so the quantizer is exactly the identity.
        let mut p = LstmParams::zeros(1, 2, 1);
        for (g, w) in p.w.iter_mut().enumerate() {
            w.set(0, 2, 1.0 + g as f64);
            w.set(1, 2, -(g as f64));
        }
        p.b = [vec![1.0, 0.0], vec![0.0, -1.0], vec![2.0, 1.0], vec![-1.0, 1.0]];
        p.w_y = Matrix::from_rows(&[vec![0.5, -0.25]]).unwrap();
        let window = vec![vec![1.0]];
        let cfg = QuantConfig::with_shots(1000);
        let mut rng = Prng::seed_from_u64(9);
        let (_, classic) = sequence_forward(&p, &window).unwrap();
        let (_, noisy) = slstm_sequence_forward(&p, &cfg, &window, &mut rng).unwrap();
        let a = sequence_backward(&p, &classic, &[1.0]).unwrap();
        let b = slstm_sequence_backward(&p, &cfg, &noisy, &[1.0]).unwrap();
        assert_eq!(a.flatten(), b.flatten());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = Prng::seed_from_u64(10);
        let p = LstmParams::init(1, 3, 1, &mut rng).unwrap();
        let (_, cache) =
            slstm_sequence_forward(&p, &byte(), &[vec![0.2], vec![0.4]], &mut rng).unwrap();
        let g = slstm_sequence_backward(&p, &byte(), &cache, &[0.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn clamped_preactivation_blocks_gradient() {
        let mut p = LstmParams::zeros(1, 1, 1);
        // Forget gate saturates far above the clamp range.
        p.b[0] = vec![10.0];
        p.w[0].set(0, 1, 1.0);
        p.w_y = Matrix::from_rows(&[vec![1.0]]).unwrap();
        p.b[2] = vec![1.0];
        p.b[1] = vec![1.0];
        p.b[3] = vec![1.0];
        let cfg = QuantConfig {
            shots: 1,
            clamp_lo: -4,
            clamp_hi: 4,
        };
        let mut rng = Prng::seed_from_u64(11);
        let window = vec![vec![0.5], vec![0.5]];
        let (_, cache) = slstm_sequence_forward(&p, &cfg, &window, &mut rng).unwrap();
        assert!(cache.steps.iter().all(|s| s.used[0][0] == 4.0));
        let g = slstm_sequence_backward(&p, &cfg, &cache, &[1.0]).unwrap();
        assert_eq!(g.w[0].as_slice(), &[0.0, 0.0]);
        assert_eq!(g.b[0], vec![0.0]);
        assert!(g.b[1][0] != 0.0);
    }

    proptest! {
        #[test]
        fn support_is_floor_and_ceiling(w in -1000.0f64..1000.0, seed in any::<u64>()) {
            let mut rng = Prng::seed_from_u64(seed);
            for _ in 0..16 {
                let q = stochastic_round(w, &mut rng).unwrap();
                prop_assert!(q == w.floor() || q == w.floor() + 1.0);
            }
        }

        #[test]
        fn integers_round_to_themselves(k in -1_000_000i64..1_000_000, seed in any::<u64>()) {
            let mut rng = Prng::seed_from_u64(seed);
            prop_assert_eq!(stochastic_round(k as f64, &mut rng).unwrap(), k as f64);
        }
    }
}
