//! Type-II maximum likelihood for the kernel hyperparameters.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::kernel::KernelParams;
use crate::observation::ValueObservation;

// Exact logs of the bounds, so that exp() lands inside the box.
#[allow(clippy::approx_constant)]
const LOG_THETA: (f64, f64) = (-4.605_170_185_988_091, 2.302_585_092_994_046); // ln 0.01, ln 10
#[allow(clippy::approx_constant)]
const LOG_AMPLITUDE: (f64, f64) = (-2.302_585_092_994_046, 2.302_585_092_994_046); // ln 0.1, ln 10
const LOG_NOISE: (f64, f64) = (-13.815_510_557_964_274, 0.0); // ln 1e-6, ln 1
const STARTS: usize = 8;
const START_SEED: u64 = 0x5eed_6b9f;
const INITIAL_STEP: f64 = 0.5;
const MIN_STEP: f64 = 0.02;
const MAX_EVALS_PER_START: usize = 400;

/// Affine map putting observed values at zero mean, unit variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScaling {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScaling {
    /// `None` when the values are (numerically) all equal.
    pub fn fit(y: &[f64]) -> Option<Self> {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = var.sqrt();
        (scale > 1e-12 * mean.abs().max(1.0)).then_some(Self { mean, scale })
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }
}

fn squared_distances(xs: &[&[f64]]) -> DMatrix<f64> {
    let n = xs.len();
    DMatrix::from_fn(n, n, |i, j| {
        xs[i].iter().zip(xs[j]).map(|(a, b)| (a - b) * (a - b)).sum()
    })
}

fn lml_from_distances(d2: &DMatrix<f64>, y: &DVector<f64>, params: &KernelParams) -> Option<f64> {
    let n = y.len();
    let mut k = d2.map(|d| params.amplitude * (-0.5 * d / params.theta).exp());
    for i in 0..n {
        k[(i, i)] += params.noise;
    }
    let chol = k.cholesky()?;
    let alpha = chol.solve(y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    let v = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    v.is_finite().then_some(v)
}

/// Exact log marginal likelihood of zero-mean GP regression.
pub fn gp_log_marginal_likelihood(values: &[ValueObservation], params: &KernelParams) -> Result<f64> {
    params.validate()?;
    if values.is_empty() {
        return invalid("log marginal likelihood needs at least one observation");
    }
    let xs: Vec<&[f64]> = values.iter().map(|v| v.x.as_slice()).collect();
    let y = DVector::from_iterator(values.len(), values.iter().map(|v| v.y));
    lml_from_distances(&squared_distances(&xs), &y, params).ok_or_else(|| crate::Error::Conditioning {
        what: "value covariance in log marginal likelihood".into(),
        jitter: 0.0,
    })
}

fn to_params(p: &[f64; 3]) -> KernelParams {
    KernelParams {
        theta: p[0].exp(),
        amplitude: p[1].exp(),
        noise: p[2].exp(),
    }
}

const BOUNDS: [(f64, f64); 3] = [LOG_THETA, LOG_AMPLITUDE, LOG_NOISE];

fn coordinate_search(start: [f64; 3], objective: &dyn Fn(&[f64; 3]) -> f64) -> ([f64; 3], f64) {
    let mut best = start;
    let mut best_val = objective(&best);
    let mut step = INITIAL_STEP;
    let mut evals = 1;
    while step >= MIN_STEP && evals < MAX_EVALS_PER_START {
        let mut moved = false;
        for d in 0..3 {
            for dir in [1.0, -1.0] {
                let mut trial = best;
                trial[d] = (trial[d] + dir * step).clamp(BOUNDS[d].0, BOUNDS[d].1);
                if trial[d] == best[d] {
                    continue;
                }
                evals += 1;
                let v = objective(&trial);
                if v > best_val {
                    best = trial;
                    best_val = v;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (best, best_val)
}

/// Fits lengthscale, amplitude and noise to standardized values by multi-start
/// coordinate search on the log marginal likelihood. Values are expected in
/// normalized coordinates; sign observations play no part. Falls back to the
/// defaults when all values are equal or no start yields a finite likelihood.
pub fn fit_gp_hyperparams(values: &[ValueObservation]) -> Result<KernelParams> {
    if values.len() < 2 {
        return invalid(format!(
            "hyperparameter fitting needs at least 2 value observations, got {}",
            values.len()
        ));
    }
    if values.iter().any(|v| !v.y.is_finite()) {
        return invalid("hyperparameter fitting needs finite values");
    }
    let raw: Vec<f64> = values.iter().map(|v| v.y).collect();
    let Some(scaling) = TargetScaling::fit(&raw) else {
        return Ok(KernelParams::default());
    };
    let y = DVector::from_iterator(raw.len(), raw.iter().map(|v| scaling.apply(*v)));
    let xs: Vec<&[f64]> = values.iter().map(|v| v.x.as_slice()).collect();
    let d2 = squared_distances(&xs);
    let objective = |p: &[f64; 3]| lml_from_distances(&d2, &y, &to_params(p)).unwrap_or(f64::NEG_INFINITY);

    let defaults = KernelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut best: Option<([f64; 3], f64)> = None;
    for s in 0..STARTS {
        let start = if s == 0 {
            [defaults.theta.ln(), defaults.amplitude.ln(), defaults.noise.ln()]
        } else {
            BOUNDS.map(|(lo, hi)| rng.random_range(lo..hi))
        };
        let (p, v) = coordinate_search(start, &objective);
        if v.is_finite() && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((p, v));
        }
    }
    Ok(best.map(|(p, _)| to_params(&p)).unwrap_or(defaults))
}
