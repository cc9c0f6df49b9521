//! Expected improvement and a derivative-free maximizer over the unit box.

use rand::Rng;
use rayon::prelude::*;

use crate::ep::{ep_predict, EpState};
use crate::error::{invalid, Result};
use crate::normal;
use crate::observation::ValueObservation;
use crate::space::SearchSpace;

const SIGMA_FLOOR: f64 = 1e-12;
const NEGATIVE_VARIANCE_TOLERANCE: f64 = -1e-9;

/// Best value observation so far. Sign observations never contribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub x_best: Vec<f64>,
    pub y_best: f64,
}

impl Incumbent {
    /// Highest finite `y` among the value observations (first one wins ties).
    pub fn from_values(values: &[ValueObservation]) -> Option<Self> {
        values
            .iter()
            .filter(|v| v.y.is_finite())
            .fold(None::<&ValueObservation>, |best, v| match best {
                Some(b) if b.y >= v.y => Some(b),
                _ => Some(v),
            })
            .map(|v| Incumbent {
                x_best: v.x.clone(),
                y_best: v.y,
            })
    }
}

pub fn expected_improvement(mean: f64, variance: f64, incumbent: &Incumbent) -> Result<f64> {
    if variance < NEGATIVE_VARIANCE_TOLERANCE || !variance.is_finite() || !mean.is_finite() {
        return invalid(format!("invalid predictive moments ({mean}, {variance})"));
    }
    let sigma = variance.max(0.0).sqrt();
    let gap = mean - incumbent.y_best;
    if sigma <= SIGMA_FLOOR {
        return Ok(gap.max(0.0));
    }
    let z = gap / sigma;
    Ok((gap * normal::cdf(z) + sigma * normal::pdf(z)).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionConfig {
    /// Uniform random candidates scored before refinement.
    pub candidates: usize,
    /// Evaluations spent by the coordinate pattern search.
    pub refine_evals: usize,
    pub initial_step: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            candidates: 1000,
            refine_evals: 50,
            initial_step: 0.1,
        }
    }
}

fn ei_at(model: &EpState, incumbent: &Incumbent, x: &[f64]) -> f64 {
    ep_predict(model, x)
        .and_then(|p| expected_improvement(p.mean, p.variance, incumbent))
        .unwrap_or(0.0)
}

/// Maximizes EI with `budget` uniform candidates followed by a shrinking-step
/// coordinate pattern search from the best one.
pub fn maximize_acquisition<R: Rng + ?Sized>(
    model: &EpState,
    space: &SearchSpace,
    incumbent: &Incumbent,
    budget: usize,
    rng: &mut R,
) -> Vec<f64> {
    let config = AcquisitionConfig {
        candidates: budget.max(1),
        ..Default::default()
    };
    maximize_acquisition_with(model, space.len(), incumbent, &config, rng)
}

pub fn maximize_acquisition_with<R: Rng + ?Sized>(
    model: &EpState,
    dims: usize,
    incumbent: &Incumbent,
    config: &AcquisitionConfig,
    rng: &mut R,
) -> Vec<f64> {
    let n = config.candidates.max(1);
    let candidates: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
        .collect();
    let scores: Vec<f64> = candidates.par_iter().map(|x| ei_at(model, incumbent, x)).collect();
    // Ties go to the lowest candidate index.
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut x = candidates[best].clone();
    let mut value = scores[best];

    let mut step = config.initial_step;
    let mut used = 0;
    'search: while used < config.refine_evals {
        let mut moved = false;
        for d in 0..dims {
            for dir in [1.0, -1.0] {
                if used >= config.refine_evals {
                    break 'search;
                }
                let mut trial = x.clone();
                trial[d] = (trial[d] + dir * step).clamp(0.0, 1.0);
                if trial[d] == x[d] {
                    continue;
                }
                used += 1;
                let v = ei_at(model, incumbent, &trial);
                if v > value {
                    x = trial;
                    value = v;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
            if step < 1e-9 {
                break;
            }
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ep::{ep_fit, EpConfig, DEFAULT_SLACK};
    use crate::kernel::KernelParams;
    use crate::space::{Dimension, Monotonicity};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inc(y: f64) -> Incumbent {
        Incumbent {
            x_best: vec![0.0],
            y_best: y,
        }
    }

    #[test]
    fn ei_examples() {
        assert!((expected_improvement(0.0, 1.0, &inc(0.0)).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert_eq!(expected_improvement(-1.0, 0.0, &inc(0.0)).unwrap(), 0.0);
        assert_eq!(expected_improvement(0.0, 0.0, &inc(0.0)).unwrap(), 0.0);
        assert_eq!(expected_improvement(3.0, 1e-30, &inc(0.0)).unwrap(), 3.0);
        assert_eq!(expected_improvement(1.0, -1e-12, &inc(0.0)).unwrap(), 1.0);
        assert!(expected_improvement(1.0, -1e-3, &inc(0.0)).is_err());
    }

    #[test]
    fn incumbent_ignores_failed_values() {
        let v = vec![
            ValueObservation::new(vec![0.1], 0.3),
            ValueObservation::new(vec![0.2], f64::NEG_INFINITY),
            ValueObservation::new(vec![0.3], 0.7),
            ValueObservation::new(vec![0.4], 0.7),
        ];
        let i = Incumbent::from_values(&v).unwrap();
        assert_eq!(i.y_best, 0.7);
        assert_eq!(i.x_best, vec![0.3]);
        assert!(Incumbent::from_values(&v[1..2]).is_none());
    }

    fn peaked_model() -> EpState {
        let params = KernelParams::new(0.01, 1.0, 1e-4).unwrap();
        let values: Vec<_> = [0.0, 0.2, 0.4, 0.5, 0.8, 1.0]
            .iter()
            .zip([-1.0, -0.5, 0.3, 0.9, -0.8, -1.0])
            .map(|(&x, y)| ValueObservation::new(vec![x], y))
            .collect();
        ep_fit(&values, &[], &params, DEFAULT_SLACK, &EpConfig::default()).unwrap()
    }

    fn space1() -> SearchSpace {
        SearchSpace::new(vec![Dimension::linear("x", 0.0, 1.0, Monotonicity::Neutral)]).unwrap()
    }

    #[test]
    fn maximizer_finds_grid_peak() {
        let model = peaked_model();
        let incumbent = Incumbent::from_values(model.values()).unwrap();
        let (mut best_x, mut best_v) = (0.0, -1.0);
        for i in 0..=1000 {
            let x = i as f64 * 1e-3;
            let v = ei_at(&model, &incumbent, &[x]);
            if v > best_v {
                best_v = v;
                best_x = x;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = maximize_acquisition(&model, &space1(), &incumbent, 1000, &mut rng);
        assert!((x[0] - best_x).abs() < 0.05, "{} vs grid {}", x[0], best_x);
        assert!(ei_at(&model, &incumbent, &x) >= 0.95 * best_v);
    }

    #[test]
    fn single_candidate_stays_in_box_and_is_deterministic() {
        let model = peaked_model();
        let incumbent = Incumbent::from_values(model.values()).unwrap();
        let a = maximize_acquisition(&model, &space1(), &incumbent, 1, &mut ChaCha8Rng::seed_from_u64(9));
        let b = maximize_acquisition(&model, &space1(), &incumbent, 1, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a[0]));
    }

    proptest! {
        #[test]
        fn ei_monotone_in_mean_and_sigma(
            mean in -5.0..5.0f64, dm in 0.0..2.0f64,
            sigma in 0.0..3.0f64, ds in 0.0..2.0f64, y in -5.0..5.0f64,
        ) {
            let i = inc(y);
            let base = expected_improvement(mean, sigma * sigma, &i).unwrap();
            prop_assert!(base >= 0.0);
            let up = expected_improvement(mean + dm, sigma * sigma, &i).unwrap();
            prop_assert!(up >= base - 1e-12);
            if mean <= y {
                let wide = expected_improvement(mean, (sigma + ds).powi(2), &i).unwrap();
                prop_assert!(wide >= base - 1e-12);
            }
        }
    }
}
