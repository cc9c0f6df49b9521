//! Synthetic "complexity-shift" objectives: with little data performance
//! peaks at moderate complexity and then degrades; with all the data it
//! rises monotonically with complexity and saturates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{derive_seed, Objective, TuningTask};
use crate::error::{invalid, Result};
use crate::space::{Dimension, Monotonicity, SearchSpace};

const FULL_STEEPNESS: f64 = 12.0;
const FLOOR: f64 = 0.2;
const FULL_CEILING: f64 = 0.9;
const SMALL_PEAK: f64 = 0.8;
const SMALL_RISE_WIDTH: f64 = 0.2;
const NUISANCE_WEIGHT: f64 = 0.04;
/// Maximum spurious shift of a subset run's peak.
const SUBSET_PEAK_JITTER: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticComplexityParams {
    /// Peak location of the small-data curve.
    pub c_small: f64,
    /// Saturation onset of the full-data curve.
    pub c_big: f64,
    pub noise_sd: f64,
    /// Post-peak decay rate of the small-data curve.
    pub decay: f64,
}

impl Default for SyntheticComplexityParams {
    fn default() -> Self {
        Self {
            c_small: 0.4,
            c_big: 0.8,
            noise_sd: 0.0,
            decay: 4.0,
        }
    }
}

impl SyntheticComplexityParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c_small && self.c_small < self.c_big && self.c_big < 1.0) {
            return invalid(format!(
                "need 0 < c_small < c_big < 1, got c_small={} c_big={}",
                self.c_small, self.c_big
            ));
        }
        if !(self.noise_sd >= 0.0) || !(self.decay > 0.0) {
            return invalid("noise_sd must be >= 0 and decay > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Small,
    Full,
}

#[derive(Debug, Clone)]
pub struct SyntheticObjective {
    params: SyntheticComplexityParams,
    regime: Regime,
    seed: u64,
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl SyntheticObjective {
    /// Noise-free value at `x` (first coordinate is the complexity axis).
    pub fn mean(&self, x: &[f64]) -> f64 {
        let c = x[0];
        let trend = match self.regime {
            Regime::Full => {
                let s = |u: f64| logistic(FULL_STEEPNESS * (u - self.params.c_big));
                FLOOR + (FULL_CEILING - FLOOR) * (s(c) - s(0.0)) / (s(1.0) - s(0.0))
            }
            Regime::Small => {
                let peak = self.params.c_small;
                let bump = if c <= peak {
                    (-((c - peak) / SMALL_RISE_WIDTH).powi(2)).exp()
                } else {
                    (-self.params.decay * (c - peak)).exp()
                };
                FLOOR + (SMALL_PEAK - FLOOR) * bump
            }
        };
        let nuisance: f64 = x[1..].iter().map(|u| (u - 0.5) * (u - 0.5)).sum();
        trend - NUISANCE_WEIGHT * nuisance
    }

    pub fn params(&self) -> &SyntheticComplexityParams {
        &self.params
    }

    fn noise(&self, x: &[f64]) -> f64 {
        if self.params.noise_sd == 0.0 {
            return 0.0;
        }
        let key = x.iter().fold(self.seed, |acc, v| derive_seed(acc, v.to_bits()));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let z: f64 = StandardNormal.sample(&mut rng);
        self.params.noise_sd * z
    }
}

impl Objective for SyntheticObjective {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
            return invalid("synthetic objective needs a finite, non-empty point");
        }
        Ok(self.mean(x) + self.noise(x))
    }
}

/// Builds the objective for one regime. Noise is a deterministic function of
/// `(x, seed)`.
pub fn synthetic_objective(params: SyntheticComplexityParams, regime: Regime, seed: u64) -> Result<SyntheticObjective> {
    params.validate()?;
    Ok(SyntheticObjective { params, regime, seed })
}

/// Synthetic tuning task on `[0, 1]^D`: dimension 0 is complexity (`+1`), the
/// rest are neutral nuisance dimensions.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    params: SyntheticComplexityParams,
    /// Noise level of the subset objectives; the full objective uses `params.noise_sd`.
    subset_noise_sd: f64,
    space: SearchSpace,
    seed: u64,
}

impl SyntheticTask {
    pub fn new(params: SyntheticComplexityParams, dims: usize, seed: u64) -> Result<Self> {
        let mut d = vec![Dimension::linear("complexity", 0.0, 1.0, Monotonicity::Increasing)];
        for i in 1..dims {
            let name = if dims == 2 {
                "nuisance".to_string()
            } else {
                format!("nuisance{i}")
            };
            d.push(Dimension::linear(&name, 0.0, 1.0, Monotonicity::Neutral));
        }
        Self::with_space(params, SearchSpace::new(d)?, seed)
    }

    /// Uses a caller-declared space; dimension 0 must be named `complexity`.
    pub fn with_space(params: SyntheticComplexityParams, space: SearchSpace, seed: u64) -> Result<Self> {
        params.validate()?;
        let names = space.names();
        if names[0] != "complexity" || names[1..].iter().any(|n| !n.starts_with("nuisance")) {
            return invalid(format!(
                "synthetic task expects dimensions [complexity, nuisance...], got {names:?}"
            ));
        }
        if space.dims().iter().any(|d| d.lower != 0.0 || d.upper != 1.0) {
            return invalid("synthetic task dimensions must span [0, 1]");
        }
        Ok(Self {
            params,
            subset_noise_sd: 0.01,
            space,
            seed,
        })
    }

    pub fn with_subset_noise(mut self, sd: f64) -> Self {
        self.subset_noise_sd = sd;
        self
    }

    pub fn params(&self) -> &SyntheticComplexityParams {
        &self.params
    }
}

impl TuningTask for SyntheticTask {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn full_objective(&self) -> Box<dyn Objective + '_> {
        Box::new(SyntheticObjective {
            params: self.params,
            regime: Regime::Full,
            seed: derive_seed(self.seed, 0),
        })
    }

    fn subset_objective(&self, run: usize, _fraction: f64, seed: u64) -> Result<Box<dyn Objective + '_>> {
        // Each subset gets its own spurious peak shift and noise stream.
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, run as u64 + 1));
        let u: f64 = rand::Rng::random(&mut rng);
        let shift = (2.0 * u - 1.0) * SUBSET_PEAK_JITTER;
        let params = SyntheticComplexityParams {
            c_small: (self.params.c_small + shift).clamp(0.01, self.params.c_big - 0.01),
            noise_sd: self.subset_noise_sd,
            ..self.params
        };
        Ok(Box::new(SyntheticObjective {
            params,
            regime: Regime::Small,
            seed: derive_seed(seed, 1000 + run as u64),
        }))
    }

    fn description(&self) -> String {
        format!(
            "synthetic complexity-shift task ({}-d, c_small={}, c_big={})",
            self.space.len(),
            self.params.c_small,
            self.params.c_big
        )
    }

    fn known_optimum(&self) -> Option<f64> {
        (self.params.noise_sd == 0.0).then_some(FULL_CEILING)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> impl Iterator<Item = f64> {
        (0..=1000).map(|i| i as f64 * 1e-3)
    }

    #[test]
    fn full_regime_rises_and_saturates() {
        let f = synthetic_objective(SyntheticComplexityParams::default(), Regime::Full, 0).unwrap();
        let top = f.evaluate(&[1.0]).unwrap();
        let bottom = f.evaluate(&[0.0]).unwrap();
        assert!(top - bottom > 0.5);
        assert!((top - 0.9).abs() < 1e-12 && (bottom - 0.2).abs() < 1e-12);
        let vals: Vec<f64> = grid().map(|x| f.evaluate(&[x]).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn small_regime_is_unimodal_at_c_small() {
        let p = SyntheticComplexityParams::default();
        let f = synthetic_objective(p, Regime::Small, 0).unwrap();
        let vals: Vec<f64> = grid().map(|x| f.evaluate(&[x, 0.5]).unwrap()).collect();
        let argmax = vals
            .iter()
            .enumerate()
            .fold(0, |b, (i, v)| if *v > vals[b] { i } else { b });
        assert!((argmax as f64 * 1e-3 - p.c_small).abs() <= 1e-3);
        assert!(vals[..=argmax].windows(2).all(|w| w[1] >= w[0]));
        assert!(vals[argmax..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn noise_is_deterministic_per_point() {
        let p = SyntheticComplexityParams {
            noise_sd: 0.05,
            ..Default::default()
        };
        let f = synthetic_objective(p, Regime::Full, 11).unwrap();
        let a = f.evaluate(&[0.3, 0.2]).unwrap();
        assert_eq!(a, f.evaluate(&[0.3, 0.2]).unwrap());
        assert_ne!(a, f.evaluate(&[0.3, 0.2000001]).unwrap());
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SyntheticComplexityParams {
            c_small: 0.9,
            ..Default::default()
        };
        assert!(synthetic_objective(p, Regime::Full, 0).is_err());
    }

    #[test]
    fn nuisance_is_mild() {
        let f = synthetic_objective(SyntheticComplexityParams::default(), Regime::Full, 0).unwrap();
        let d = f.evaluate(&[1.0, 0.5]).unwrap() - f.evaluate(&[1.0, 0.0]).unwrap();
        assert!(d > 0.0 && d < 0.05);
    }

    #[test]
    fn subset_peaks_vary_by_run() {
        let task = SyntheticTask::new(SyntheticComplexityParams::default(), 2, 1).unwrap();
        let a = task.subset_objective(0, 0.1, 5).unwrap();
        let b = task.subset_objective(1, 0.1, 5).unwrap();
        assert_ne!(a.evaluate(&[0.4, 0.5]).unwrap(), b.evaluate(&[0.4, 0.5]).unwrap());
        assert_eq!(task.known_optimum(), Some(0.9));
    }
}
