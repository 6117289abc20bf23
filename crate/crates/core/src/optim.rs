//! RMSProp.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmspropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmspropConfig {
    fn default() -> Self {
        RmspropConfig {
            learning_rate: 0.01,
            decay: 0.99,
            epsilon: 1e-8,
        }
    }
}

impl RmspropConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::config("decay", "must lie strictly between 0 and 1"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        Ok(())
    }
}

/// Running mean of squared gradients, one accumulator per parameter.
#[derive(Clone, Debug)]
pub struct RmspropState {
    pub config: RmspropConfig,
    mean_square: Vec<Vec<f64>>,
}

impl RmspropState {
    pub fn new<P: ParamSet>(config: RmspropConfig, params: &P) -> Result<Self> {
        config.validate()?;
        Ok(RmspropState {
            config,
            mean_square: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        })
    }

    pub fn mean_square(&self) -> &[Vec<f64>] {
        &self.mean_square
    }

    /// `s ← ρs + (1−ρ)g²`, `θ ← θ − η·g/(√s + ε)`.
    pub fn step<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let RmspropConfig {
            learning_rate: lr,
            decay: rho,
            epsilon: eps,
        } = self.config;
        let g_tensors = grads.tensors();
        let p_tensors = params.tensors_mut();
        ensure_len("rmsprop tensors", self.mean_square.len(), p_tensors.len())?;
        ensure_len("rmsprop grads", p_tensors.len(), g_tensors.len())?;
        for ((p, g), s) in p_tensors.into_iter().zip(g_tensors).zip(&mut self.mean_square) {
            ensure_len("rmsprop tensor", s.len(), p.len())?;
            ensure_len("rmsprop grad tensor", p.len(), g.len())?;
            for ((w, &dw), acc) in p.iter_mut().zip(g).zip(s.iter_mut()) {
                *acc = rho * *acc + (1.0 - rho) * dw * dw;
                *w -= lr * dw / (acc.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::LstmParams;
    use crate::math::Prng;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = LstmParams::init(1, 3, 1, &mut Prng::seed_from_u64(1)).unwrap();
        let before = p.clone();
        let mut opt = RmspropState::new(RmspropConfig::default(), &p).unwrap();
        let g = p.zeros_like();
        for _ in 0..5 {
            opt.step(&mut p, &g).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_magnitude() {
        let mut p = LstmParams::zeros(1, 1, 1);
        let mut g = p.zeros_like();
        g.fill(1.0);
        let mut opt = RmspropState::new(RmspropConfig::default(), &p).unwrap();
        opt.step(&mut p, &g).unwrap();
        // s = 0.01·1², so the step is η/(0.1 + ε).
        let expected = -0.01 / (0.1 + 1e-8);
        for x in p.flatten() {
            assert!((x - expected).abs() < 1e-12, "{x}");
            assert!((x + 0.09999999).abs() < 1e-7);
        }
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut rng = Prng::seed_from_u64(3);
            let mut p = LstmParams::init(1, 2, 1, &mut rng).unwrap();
            let mut opt = RmspropState::new(RmspropConfig::default(), &p).unwrap();
            for _ in 0..10 {
                let mut g = p.clone();
                g.scale(0.3);
                opt.step(&mut p, &g).unwrap();
            }
            p.flatten()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn accumulators_non_negative_and_shapes_checked() {
        let mut p = LstmParams::init(1, 2, 1, &mut Prng::seed_from_u64(4)).unwrap();
        let mut opt = RmspropState::new(RmspropConfig::default(), &p).unwrap();
        let mut g = p.clone();
        g.scale(-2.0);
        opt.step(&mut p, &g).unwrap();
        assert!(opt.mean_square().iter().flatten().all(|s| *s >= 0.0));
        let other = LstmParams::zeros(1, 3, 1);
        assert!(opt.step(&mut p, &other).is_err());
        let bad = RmspropConfig {
            decay: 1.0,
            ..RmspropConfig::default()
        };
        assert!(RmspropState::new(bad, &p).is_err());
    }
}
