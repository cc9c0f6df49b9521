//! Elastic-net regularized logistic regression fitted by proximal gradient
//! descent, and the tuning task built on it.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::dataset::{load_csv_dataset, split_dataset, subsample, Dataset};
use super::{derive_seed, Objective, TuningTask};
use crate::error::{invalid, Error, Result};
use crate::space::{Dimension, Monotonicity, SearchSpace};

/// Rows above this are never used for a subset run, whatever the fraction.
pub const SUBSET_ROW_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxGradConfig {
    pub max_iters: usize,
    /// Stop once the gradient-mapping norm falls below this.
    pub tolerance: f64,
}

impl Default for ProxGradConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetModel {
    pub weights: DVector<f64>,
    pub intercept: f64,
    pub iterations: usize,
}

impl ElasticNetModel {
    pub fn decision(&self, features: &DMatrix<f64>) -> DVector<f64> {
        features * &self.weights + DVector::from_element(features.nrows(), self.intercept)
    }

    pub fn predict_proba(&self, features: &DMatrix<f64>) -> DVector<f64> {
        self.decision(features).map(sigmoid)
    }

    /// Fraction of rows whose thresholded prediction matches the label.
    pub fn accuracy(&self, ds: &Dataset) -> f64 {
        let z = self.decision(ds.features());
        let hits = z
            .iter()
            .zip(ds.labels().iter())
            .filter(|(z, y)| (**z > 0.0) == (**y == 1.0))
            .count();
        hits as f64 / ds.n_rows() as f64
    }
}

/// Per-feature centering and scaling, fitted on one dataset and applied to others.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: DVector<f64>,
    scale: DVector<f64>,
}

impl Standardizer {
    pub fn fit(ds: &Dataset) -> Self {
        let x = ds.features();
        let n = x.nrows() as f64;
        let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
        let scale = DVector::from_iterator(
            x.ncols(),
            x.column_iter().zip(mean.iter()).map(|(c, m)| {
                let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            }),
        );
        Self { mean, scale }
    }

    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let mut x = ds.features().clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.mean[j]) / self.scale[j]);
        }
        ds.with_features(x)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1]` by power iteration, padded slightly.
fn gram_spectral_bound(x: &DMatrix<f64>) -> f64 {
    let f = x.ncols();
    let mut v = DVector::from_element(f + 1, 1.0 / ((f + 1) as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let xv = x * v.rows(0, f) + DVector::from_element(x.nrows(), v[f]);
        let mut w = DVector::zeros(f + 1);
        w.rows_mut(0, f).copy_from(&x.tr_mul(&xv));
        w[f] = xv.sum();
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= 1e-9 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda * 1.05 + 1e-12
}

struct Problem<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    l1: f64,
    l2: f64,
}

impl Problem<'_> {
    fn objective(&self, w: &DVector<f64>, b: f64) -> f64 {
        let n = self.x.nrows() as f64;
        let z = self.x * w;
        let loss: f64 = z
            .iter()
            .zip(self.y.iter())
            .map(|(z, y)| softplus(z + b) - y * (z + b))
            .sum::<f64>()
            / n;
        loss + self.l1 * w.lp_norm(1) + 0.5 * self.l2 * w.norm_squared()
    }
}

/// Fits weights and an unpenalized intercept minimizing mean logistic loss
/// plus `λ(ratio·‖w‖₁ + (1 − ratio)·½‖w‖²)` with `λ = 10^alpha_exponent`.
pub fn train_elastic_net(
    train: &Dataset,
    ratio: f64,
    alpha_exponent: f64,
    config: &ProxGradConfig,
) -> Result<ElasticNetModel> {
    train_inner(train, ratio, alpha_exponent, config, None)
}

/// As [`train_elastic_net`], also returning the objective after every iteration
/// (first entry is the zero initialization).
pub fn train_elastic_net_traced(
    train: &Dataset,
    ratio: f64,
    alpha_exponent: f64,
    config: &ProxGradConfig,
) -> Result<(ElasticNetModel, Vec<f64>)> {
    let mut trace = Vec::new();
    let model = train_inner(train, ratio, alpha_exponent, config, Some(&mut trace))?;
    Ok((model, trace))
}

fn train_inner(
    train: &Dataset,
    ratio: f64,
    alpha_exponent: f64,
    config: &ProxGradConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<ElasticNetModel> {
    if !(0.0..=1.0).contains(&ratio) {
        return invalid(format!("l1 ratio {ratio} not in [0, 1]"));
    }
    if !alpha_exponent.is_finite() {
        return invalid("alpha exponent must be finite");
    }
    if !train.has_both_classes() {
        return invalid("elastic-net training data must contain both classes");
    }
    let lambda = 10f64.powf(alpha_exponent);
    let x = train.features();
    let p = Problem {
        x,
        y: train.labels(),
        l1: lambda * ratio,
        l2: lambda * (1.0 - ratio),
    };
    let n = x.nrows() as f64;
    let lipschitz = gram_spectral_bound(x) / (4.0 * n) + p.l2;
    let step = 1.0 / lipschitz;

    let mut w = DVector::zeros(x.ncols());
    let mut b = 0.0;
    if let Some(t) = trace.as_deref_mut() {
        t.push(p.objective(&w, b));
    }
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let z = x * &w;
        let resid = DVector::from_iterator(z.len(), z.iter().zip(p.y.iter()).map(|(z, y)| sigmoid(z + b) - y));
        let grad_w = x.tr_mul(&resid) / n + &w * p.l2;
        let grad_b = resid.sum() / n;
        let w_next = (&w - &grad_w * step).map(|v| soft_threshold(v, step * p.l1));
        let b_next = b - step * grad_b;
        let mapping = ((&w - &w_next).norm_squared() + (b - b_next).powi(2)).sqrt() / step;
        w = w_next;
        b = b_next;
        if let Some(t) = trace.as_deref_mut() {
            t.push(p.objective(&w, b));
        }
        if mapping < config.tolerance {
            break;
        }
    }
    if w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Objective("elastic-net fit diverged".into()));
    }
    Ok(ElasticNetModel {
        weights: w,
        intercept: b,
        iterations,
    })
}

/// The default search space: `l1_ratio ∈ [0, 1]` (neutral) and
/// `alpha ∈ [-7, -1]` in base-10 exponent units (decreasing).
pub fn default_elastic_net_space() -> SearchSpace {
    SearchSpace::new(vec![
        Dimension::linear("l1_ratio", 0.0, 1.0, Monotonicity::Neutral),
        Dimension::exponent("alpha", -7.0, -1.0, Monotonicity::Decreasing),
    ])
    .expect("static space is valid")
}

/// Validation accuracy of an elastic-net fit over `[l1_ratio, alpha exponent]`.
#[derive(Clone)]
pub struct ElasticNetTask {
    train: Arc<Dataset>,
    valid: Arc<Dataset>,
    heldout: Arc<Dataset>,
    space: SearchSpace,
    config: ProxGradConfig,
}

struct Fit {
    train: Arc<Dataset>,
    eval: Arc<Dataset>,
    config: ProxGradConfig,
    ratio_dim: usize,
    alpha_dim: usize,
}

impl Objective for Fit {
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let model = train_elastic_net(&self.train, x[self.ratio_dim], x[self.alpha_dim], &self.config)?;
        Ok(model.accuracy(&self.eval))
    }
}

impl ElasticNetTask {
    /// Splits 0.6 / 0.2 / 0.2 with `seed` and standardizes using training statistics.
    pub fn new(data: &Dataset, space: SearchSpace, seed: u64) -> Result<Self> {
        if data.n_rows() < 10 {
            return Err(Error::Split(format!("need at least 10 rows, got {}", data.n_rows())));
        }
        let names = space.names();
        if names.len() != 2 || !names.contains(&"l1_ratio") || !names.contains(&"alpha") {
            return invalid(format!(
                "elastic-net space must have exactly the dimensions l1_ratio and alpha, got {names:?}"
            ));
        }
        let (train, valid, heldout) = split_dataset(data, 0.6, 0.2, seed)?;
        let std = Standardizer::fit(&train);
        Ok(Self {
            train: Arc::new(std.apply(&train)),
            valid: Arc::new(std.apply(&valid)),
            heldout: Arc::new(std.apply(&heldout)),
            space,
            config: ProxGradConfig::default(),
        })
    }

    pub fn from_csv(path: &Path, space: SearchSpace, seed: u64) -> Result<Self> {
        Self::new(&load_csv_dataset(path)?, space, seed)
    }

    pub fn with_config(mut self, config: ProxGradConfig) -> Self {
        self.config = config;
        self
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn validation(&self) -> &Dataset {
        &self.valid
    }

    pub fn heldout(&self) -> &Dataset {
        &self.heldout
    }

    fn fit(&self, train: Arc<Dataset>, eval: Arc<Dataset>) -> Fit {
        let names = self.space.names();
        Fit {
            train,
            eval,
            config: self.config,
            ratio_dim: names.iter().position(|n| *n == "l1_ratio").unwrap_or(0),
            alpha_dim: names.iter().position(|n| *n == "alpha").unwrap_or(1),
        }
    }
}

impl TuningTask for ElasticNetTask {
    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn full_objective(&self) -> Box<dyn Objective + '_> {
        Box::new(self.fit(self.train.clone(), self.valid.clone()))
    }

    fn subset_objective(&self, run: usize, fraction: f64, seed: u64) -> Result<Box<dyn Objective + '_>> {
        let n = self.train.n_rows();
        let rows = ((fraction * n as f64).ceil() as usize).min(SUBSET_ROW_CAP);
        let sub = subsample(&self.train, rows as f64 / n as f64, derive_seed(seed, run as u64))?;
        Ok(Box::new(self.fit(Arc::new(sub), self.valid.clone())))
    }

    fn description(&self) -> String {
        format!(
            "elastic-net logistic regression ({} train / {} validation / {} held-out rows, {} features)",
            self.train.n_rows(),
            self.valid.n_rows(),
            self.heldout.n_rows(),
            self.train.n_features()
        )
    }

    fn heldout_error(&self, x: &[f64]) -> Option<Result<f64>> {
        Some(
            self.fit(self.train.clone(), self.heldout.clone())
                .evaluate(x)
                .map(|acc| 1.0 - acc),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::generate_classification;

    fn data() -> Dataset {
        generate_classification(300, 6, 3, 5).unwrap()
    }

    #[test]
    fn objective_never_increases() {
        let ds = Standardizer::fit(&data()).apply(&data());
        for (ratio, a) in [(0.5, -2.0), (1.0, -1.0), (0.0, 0.0), (0.3, -4.0)] {
            let (_, trace) = train_elastic_net_traced(&ds, ratio, a, &ProxGradConfig::default()).unwrap();
            assert!(trace.len() >= 2);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "ratio {ratio} alpha {a}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn heavy_lasso_zeroes_weights() {
        let ds = Standardizer::fit(&data()).apply(&data());
        let m = train_elastic_net(&ds, 1.0, 1.0, &ProxGradConfig::default()).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn weak_penalty_learns_signal() {
        let ds = Standardizer::fit(&data()).apply(&data());
        let m = train_elastic_net(&ds, 0.5, -4.0, &ProxGradConfig::default()).unwrap();
        assert!(m.accuracy(&ds) > 0.75);
    }

    #[test]
    fn standardizer_centers_training_data() {
        let ds = data();
        let s = Standardizer::fit(&ds).apply(&ds);
        for c in s.features().column_iter() {
            let m = c.sum() / c.len() as f64;
            let v = c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / c.len() as f64;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_ratio() {
        assert!(train_elastic_net(&data(), 1.5, 0.0, &ProxGradConfig::default()).is_err());
    }

    #[test]
    fn rejects_single_class() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let ds = Dataset::new(x, vec![1, 1, 1], vec!["a".into()]).unwrap();
        assert!(matches!(
            train_elastic_net(&ds, 0.5, -2.0, &ProxGradConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn separable_pair_is_fit_exactly() {
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let ds = Dataset::new(x, vec![0, 1], vec!["a".into()]).unwrap();
        let m = train_elastic_net(&ds, 0.5, -7.0, &ProxGradConfig::default()).unwrap();
        assert_eq!(m.accuracy(&ds), 1.0);
    }

    #[test]
    fn task_evaluates() {
        let task = ElasticNetTask::new(&data(), default_elastic_net_space(), 2).unwrap();
        let acc = task.full_objective().evaluate(&[0.5, -2.0]).unwrap();
        assert!((0.0..=1.0).contains(&acc));
        let sub = task.subset_objective(0, 0.2, 3).unwrap();
        assert!(sub.evaluate(&[0.5, -2.0]).is_ok());
        let err = task.heldout_error(&[0.5, -2.0]).unwrap().unwrap();
        assert!((0.0..=1.0).contains(&err));
    }

    #[test]
    fn task_requires_ten_rows() {
        let small = generate_classification(9, 2, 1, 0).unwrap();
        assert!(ElasticNetTask::new(&small, default_elastic_net_space(), 0).is_err());
    }
}
