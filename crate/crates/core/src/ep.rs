//! Expectation propagation for a Gaussian process observed through exact
//! (Gaussian-noise) function values and probit-linked derivative signs.
//!
//! Value observations are Gaussian and are conditioned on in closed form.
//! What remains is an `M`-dimensional problem over the derivative latents
//! with prior `N(m_y, S_y)` (the derivative posterior given the values) and
//! one probit site `Phi(m_i f'_i / v)` per sign observation. Sequential EP
//! runs on that reduced problem; predictions and the evidence are then
//! assembled from both stages. The result is the same Gaussian approximation
//! one would get by running EP on the full joint with exact Gaussian sites
//! for the values.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};
use crate::kernel::{cholesky_with_jitter, latent_cov, JointGram, KernelParams, Latent};
use crate::normal::{self, probit_moments};
use crate::observation::{SignObservation, ValueObservation};

/// Probit slack used for sign sites unless overridden.
pub const DEFAULT_SLACK: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Negative predictive variances smaller than this in magnitude are rounding.
const VARIANCE_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpConfig {
    /// Weight on the freshly computed site parameters, in `(0, 1]`.
    pub damping: f64,
    pub max_sweeps: usize,
    /// Convergence threshold on the largest absolute change of any site
    /// natural parameter within one sweep.
    pub tolerance: f64,
}

impl Default for EpConfig {
    fn default() -> Self {
        Self {
            damping: 0.8,
            max_sweeps: 200,
            tolerance: 1e-6,
        }
    }
}

impl EpConfig {
    fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return invalid(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if self.max_sweeps == 0 {
            return invalid("max_sweeps must be at least 1");
        }
        if !(self.tolerance > 0.0) {
            return invalid("tolerance must be positive");
        }
        Ok(())
    }
}

/// Gaussian predictive marginal of one latent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
    /// The query point lies outside the normalized box.
    pub extrapolated: bool,
    /// A slightly negative variance was rounded up to zero.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evidence {
    pub log_z: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpDiagnostics {
    /// Site updates skipped because the cavity variance was not positive.
    pub skipped_updates: usize,
    /// Jitter added to the value covariance `K_ff + noise I`.
    pub value_jitter: f64,
    /// Jitter added to the conditional derivative covariance.
    pub derivative_jitter: f64,
    /// Largest site change in the final sweep.
    pub final_delta: f64,
}

/// Converged (or exhausted) EP approximation. Immutable once built.
#[derive(Debug, Clone)]
pub struct EpState {
    params: KernelParams,
    slack: f64,
    values: Vec<ValueObservation>,
    signs: Vec<SignObservation>,
    gram: JointGram,

    value_chol: Cholesky<f64, Dyn>,
    /// `A^{-1} y` with `A = K_ff + noise I`.
    alpha: DVector<f64>,
    /// `A^{-1} K_fg`.
    value_solve_fg: DMatrix<f64>,
    derivative_prior_mean: DVector<f64>,

    site_precision: DVector<f64>,
    site_shift: DVector<f64>,
    sqrt_precision: DVector<f64>,
    site_chol: Option<Cholesky<f64, Dyn>>,
    /// Centered site solution; the derivative posterior mean is `m_y + S_y beta`.
    beta: DVector<f64>,

    posterior_mean: DVector<f64>,
    posterior_cov: DMatrix<f64>,
    log_z: f64,
    converged: bool,
    sweeps_used: usize,
    diagnostics: EpDiagnostics,
}

struct Tilted {
    precision: f64,
    shift: f64,
}

/// Site parameters that moment-match `N(mu_c, var_c) * Phi(sign * f / slack)`.
fn probit_site(mu_c: f64, var_c: f64, sign: f64, slack: f64) -> Tilted {
    let denom = slack * slack + var_c;
    let scale = denom.sqrt();
    let z = sign * mu_c / scale;
    let m = probit_moments(z);
    let r = var_c / denom;
    // Posterior/cavity variance ratio, kept away from cancellation.
    let q = slack * slack / denom + r * normal::truncated_variance_ratio(z);
    let var_hat = var_c * q;
    let mu_hat = mu_c + sign * var_c * m.hazard / scale;
    let precision = r * m.shrink / (q * var_c);
    let shift = precision * mu_c + (mu_hat - mu_c) / var_hat;
    Tilted { precision, shift }
}

fn solve_lower(ch: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    ch.l_dirty()
        .solve_lower_triangular(b)
        .expect("cholesky factor has a positive diagonal")
}

/// Factorizes `I + W^1/2 S W^1/2`, jittering `S` if rounding made it indefinite.
fn factor_sites(cov: &DMatrix<f64>, sqrt_tau: &DVector<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let m = cov.nrows();
    let mean_diag = cov.diagonal().iter().sum::<f64>() / m.max(1) as f64;
    let mut jitter = 0.0;
    loop {
        let mut b = DMatrix::identity(m, m);
        for i in 0..m {
            for j in 0..m {
                let s = cov[(i, j)] + if i == j { jitter } else { 0.0 };
                b[(i, j)] += sqrt_tau[i] * s * sqrt_tau[j];
            }
        }
        if let Some(ch) = Cholesky::new(b) {
            return Ok((ch, jitter));
        }
        let ceiling = crate::kernel::JITTER_MAX * mean_diag.abs().max(f64::MIN_POSITIVE);
        if jitter >= ceiling {
            return Err(Error::Conditioning {
                what: "EP site system".into(),
                jitter,
            });
        }
        jitter = if jitter == 0.0 {
            crate::kernel::JITTER_START * mean_diag.abs().max(f64::MIN_POSITIVE)
        } else {
            (jitter * 10.0).min(ceiling)
        };
    }
}

/// Fits the EP approximation to the joint posterior over value and derivative latents.
pub fn ep_fit(
    values: &[ValueObservation],
    signs: &[SignObservation],
    params: &KernelParams,
    slack: f64,
    config: &EpConfig,
) -> Result<EpState> {
    params.validate()?;
    config.validate()?;
    if values.is_empty() {
        return invalid("ep_fit needs at least one value observation");
    }
    if !(slack > 0.0 && slack.is_finite()) {
        return invalid(format!("probit slack must be positive, got {slack}"));
    }
    let dims = values[0].x.len();
    if values.iter().any(|v| v.x.len() != dims || !v.y.is_finite()) {
        return invalid("value observations must share one dimension and have finite y");
    }
    if signs.iter().any(|s| s.x.len() != dims || s.dim >= dims) {
        return invalid("sign observation dimension mismatch");
    }

    let xs: Vec<Vec<f64>> = values.iter().map(|v| v.x.clone()).collect();
    // The prior itself is never factorized; the value and site stages add
    // their own jitter when needed.
    let gram = crate::kernel::assemble_joint_gram(&xs, signs, params)?;
    let p = values.len();
    let m = signs.len();
    let k_ff = gram.k_ff();
    let k_fg = gram.k_fg();
    let k_gg = gram.k_gg();

    let mut a = k_ff.clone();
    for i in 0..p {
        a[(i, i)] += params.noise;
    }
    let (value_chol, value_jitter) = cholesky_with_jitter(&a, 0.0, "value covariance")?;
    let y = DVector::from_iterator(p, values.iter().map(|v| v.y));
    let alpha = value_chol.solve(&y);
    let value_solve_fg = value_chol.solve(&k_fg);
    let derivative_prior_mean = k_fg.transpose() * &alpha;
    let mut derivative_prior_cov = &k_gg - k_fg.transpose() * &value_solve_fg;
    derivative_prior_cov = (&derivative_prior_cov + derivative_prior_cov.transpose()) * 0.5;

    let mut diagnostics = EpDiagnostics {
        value_jitter,
        ..Default::default()
    };

    let mut site_precision: DVector<f64> = DVector::zeros(m);
    let mut site_shift: DVector<f64> = DVector::zeros(m);
    let mut converged = true;
    let mut sweeps_used = 0;

    if m > 0 {
        converged = false;
        let mut sigma: DMatrix<f64> = derivative_prior_cov.clone();
        let mut mu = derivative_prior_mean.clone();
        for sweep in 1..=config.max_sweeps {
            sweeps_used = sweep;
            let mut max_delta: f64 = 0.0;
            for i in 0..m {
                let var_i = sigma[(i, i)];
                let tau_cav = 1.0 / var_i - site_precision[i];
                if !(tau_cav > 0.0 && tau_cav.is_finite()) {
                    diagnostics.skipped_updates += 1;
                    continue;
                }
                let nu_cav = mu[i] / var_i - site_shift[i];
                let var_c = 1.0 / tau_cav;
                let mu_c = nu_cav * var_c;
                let t = probit_site(mu_c, var_c, signs[i].sign.as_f64(), slack);
                if !(t.precision.is_finite() && t.shift.is_finite()) {
                    diagnostics.skipped_updates += 1;
                    continue;
                }
                let d = config.damping;
                let new_tau = ((1.0 - d) * site_precision[i] + d * t.precision).max(0.0);
                let new_nu = (1.0 - d) * site_shift[i] + d * t.shift;
                let d_tau = new_tau - site_precision[i];
                let d_nu = new_nu - site_shift[i];
                max_delta = max_delta.max(d_tau.abs()).max(d_nu.abs());
                site_precision[i] = new_tau;
                site_shift[i] = new_nu;

                let s = sigma.column(i).into_owned();
                let denom = 1.0 + d_tau * var_i;
                let mu_i = mu[i];
                sigma -= (&s * s.transpose()) * (d_tau / denom);
                mu += &s * ((d_nu - d_tau * mu_i) / denom);
            }
            // Refresh from scratch to keep rank-one drift out.
            let (fresh_sigma, fresh_mu, jitter) = site_posterior(
                &derivative_prior_cov,
                &derivative_prior_mean,
                &site_precision,
                &site_shift,
            )?;
            diagnostics.derivative_jitter = diagnostics.derivative_jitter.max(jitter);
            sigma = fresh_sigma;
            mu = fresh_mu;
            diagnostics.final_delta = max_delta;
            if max_delta < config.tolerance {
                converged = true;
                break;
            }
        }
    }

    let sqrt_precision = site_precision.map(f64::sqrt);
    let centered_shift = &site_shift - site_precision.component_mul(&derivative_prior_mean);
    let (site_chol, beta) = if m > 0 {
        let (ch, jitter) = factor_sites(&derivative_prior_cov, &sqrt_precision)?;
        diagnostics.derivative_jitter = diagnostics.derivative_jitter.max(jitter);
        let inner = sqrt_precision.component_mul(&(&derivative_prior_cov * &centered_shift));
        let beta = &centered_shift - sqrt_precision.component_mul(&ch.solve(&inner));
        (Some(ch), beta)
    } else {
        (None, DVector::zeros(0))
    };

    let mut state = EpState {
        params: *params,
        slack,
        values: values.to_vec(),
        signs: signs.to_vec(),
        gram,
        value_chol,
        alpha,
        value_solve_fg,
        derivative_prior_mean,
        site_precision,
        site_shift,
        sqrt_precision,
        site_chol,
        beta,
        posterior_mean: DVector::zeros(0),
        posterior_cov: DMatrix::zeros(0, 0),
        log_z: 0.0,
        converged,
        sweeps_used,
        diagnostics,
    };
    state.fill_joint_posterior();
    state.log_z = state.compute_log_evidence(&centered_shift);
    Ok(state)
}

/// Posterior over the derivative latents given sites, `(Sigma, mu, jitter)`.
fn site_posterior(
    prior_cov: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    tau: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let sw = tau.map(f64::sqrt);
    let (ch, jitter) = factor_sites(prior_cov, &sw)?;
    let l = ch.l();
    let scaled = DMatrix::from_fn(prior_cov.nrows(), prior_cov.ncols(), |i, j| sw[i] * prior_cov[(i, j)]);
    let v = l
        .solve_lower_triangular(&scaled)
        .expect("cholesky factor has a positive diagonal");
    let mut sigma = prior_cov - v.transpose() * v;
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let centered = nu - tau.component_mul(prior_mean);
    let mu = prior_mean + &sigma * centered;
    Ok((sigma, mu, jitter))
}

impl EpState {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn slack(&self) -> f64 {
        self.slack
    }

    pub fn gram(&self) -> &JointGram {
        &self.gram
    }

    pub fn values(&self) -> &[ValueObservation] {
        &self.values
    }

    pub fn signs(&self) -> &[SignObservation] {
        &self.signs
    }

    pub fn dims(&self) -> usize {
        self.values[0].x.len()
    }

    /// Site precisions `tau_i >= 0`, one per sign observation.
    pub fn site_precisions(&self) -> &DVector<f64> {
        &self.site_precision
    }

    /// Site natural means `nu_i`, one per sign observation.
    pub fn site_means(&self) -> &DVector<f64> {
        &self.site_shift
    }

    /// Value-noise precision applied to the value latents.
    pub fn value_precision(&self) -> f64 {
        1.0 / self.params.noise
    }

    /// Posterior mean over `[f; f']`.
    pub fn posterior_mean(&self) -> &DVector<f64> {
        &self.posterior_mean
    }

    /// Posterior covariance over `[f; f']`.
    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.posterior_cov
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn sweeps_used(&self) -> usize {
        self.sweeps_used
    }

    pub fn diagnostics(&self) -> &EpDiagnostics {
        &self.diagnostics
    }

    fn training_latents(&self) -> Vec<Latent<'_>> {
        self.values
            .iter()
            .map(|v| Latent::Value(&v.x))
            .chain(self.signs.iter().map(|s| Latent::Derivative(&s.x, s.dim)))
            .collect()
    }

    /// Prior covariances of `q` with the value latents and with the sign latents.
    fn cross_cov(&self, q: Latent<'_>) -> (DVector<f64>, DVector<f64>) {
        let kf = DVector::from_iterator(
            self.values.len(),
            self.values
                .iter()
                .map(|v| latent_cov(q, Latent::Value(&v.x), &self.params)),
        );
        let kg = DVector::from_iterator(
            self.signs.len(),
            self.signs
                .iter()
                .map(|s| latent_cov(q, Latent::Derivative(&s.x, s.dim), &self.params)),
        );
        (kf, kg)
    }

    /// `(mean, value-stage whitened vector, site-stage whitened vector)` for a query.
    fn query_parts(&self, q: Latent<'_>) -> (f64, DVector<f64>, DVector<f64>) {
        let (kf, kg) = self.cross_cov(q);
        let w_value = solve_lower(&self.value_chol, &kf);
        let mut mean = kf.dot(&self.alpha);
        let w_site = match &self.site_chol {
            Some(ch) => {
                let c = &kg - self.value_solve_fg.transpose() * &kf;
                mean += c.dot(&self.beta);
                solve_lower(ch, &self.sqrt_precision.component_mul(&c))
            }
            None => DVector::zeros(0),
        };
        (mean, w_value, w_site)
    }

    fn fill_joint_posterior(&mut self) {
        let latents = self.training_latents();
        let parts: Vec<_> = latents.iter().map(|&q| self.query_parts(q)).collect();
        let n = latents.len();
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let prior = latent_cov(latents[i], latents[j], &self.params);
                let c = prior - parts[i].1.dot(&parts[j].1) - parts[i].2.dot(&parts[j].2);
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }
        self.posterior_mean = DVector::from_iterator(n, parts.iter().map(|p| p.0));
        self.posterior_cov = cov;
    }

    fn marginal(&self, q: Latent<'_>) -> Result<Prediction> {
        let x = q.point();
        if x.len() != self.dims() || x.iter().any(|v| !v.is_finite()) {
            return invalid(format!(
                "query must be a finite {}-vector, got length {}",
                self.dims(),
                x.len()
            ));
        }
        if let Latent::Derivative(_, d) = q {
            if d >= self.dims() {
                return invalid(format!("derivative dimension {d} out of range"));
            }
        }
        let (mean, wv, ws) = self.query_parts(q);
        let prior = latent_cov(q, q, &self.params);
        let variance = prior - wv.norm_squared() - ws.norm_squared();
        if variance < VARIANCE_FLOOR * prior.max(1.0) {
            return Err(Error::Conditioning {
                what: format!("negative predictive variance {variance:e}"),
                jitter: self.diagnostics.value_jitter.max(self.diagnostics.derivative_jitter),
            });
        }
        Ok(Prediction {
            mean,
            variance: variance.max(0.0),
            extrapolated: x.iter().any(|v| !(0.0..=1.0).contains(v)),
            clamped: variance < 0.0,
        })
    }

    /// Posterior marginal of the derivative latent `df/dx_dim` at `x`.
    pub fn derivative_marginal(&self, x: &[f64], dim: usize) -> Result<Prediction> {
        self.marginal(Latent::Derivative(x, dim))
    }

    fn compute_log_evidence(&self, centered_shift: &DVector<f64>) -> f64 {
        let p = self.values.len();
        let y = DVector::from_iterator(p, self.values.iter().map(|v| v.y));
        let log_det_a: f64 = self
            .value_chol
            .l_dirty()
            .diagonal()
            .iter()
            .take(p)
            .map(|d| d.ln())
            .sum();
        let value_term = -0.5 * y.dot(&self.alpha) - log_det_a - 0.5 * p as f64 * LN_2PI;
        let Some(ch) = &self.site_chol else {
            return value_term;
        };
        let m = self.signs.len();
        let sigma = self.posterior_cov.view((p, p), (m, m)).into_owned();
        let mu_centered = self.posterior_mean.rows(p, m) - &self.derivative_prior_mean;
        let tau = &self.site_precision;
        let nu = centered_shift;

        let mut nlz: f64 = ch.l_dirty().diagonal().iter().take(m).map(|d| d.ln()).sum();
        nlz -= 0.5 * nu.dot(&(&sigma * nu));
        for i in 0..m {
            let var_i = sigma[(i, i)];
            let tau_n = 1.0 / var_i - tau[i];
            if !(tau_n > 0.0 && tau_n.is_finite()) {
                continue;
            }
            let nu_n = mu_centered[i] / var_i - nu[i];
            let cav_mean = nu_n / tau_n + self.derivative_prior_mean[i];
            let z = self.signs[i].sign.as_f64() * cav_mean / (self.slack * self.slack + 1.0 / tau_n).sqrt();
            nlz -= normal::log_cdf(z);
            nlz -= 0.5 * nu_n * (tau[i] / tau_n * nu_n - 2.0 * nu[i]) / (tau[i] + tau_n);
            nlz += 0.5 * nu[i] * nu[i] / (tau_n + tau[i]);
            nlz -= 0.5 * (tau[i] / tau_n).ln_1p();
        }
        value_term - nlz
    }
}

/// Gaussian predictive distribution of `f(x_star)`.
pub fn ep_predict(state: &EpState, x_star: &[f64]) -> Result<Prediction> {
    state.marginal(Latent::Value(x_star))
}

/// `Phi(m * mu' / sqrt(v^2 + var'))` for the derivative latent at the site's location.
pub fn sign_probability(state: &EpState, site: &SignObservation) -> Result<f64> {
    let pred = state.derivative_marginal(&site.x, site.dim)?;
    let z = site.sign.as_f64() * pred.mean / (state.slack * state.slack + pred.variance).sqrt();
    Ok(normal::cdf(z).clamp(0.0, 1.0))
}

/// Approximate log marginal likelihood of values and signs.
pub fn ep_log_evidence(state: &EpState) -> Evidence {
    Evidence {
        log_z: state.log_z,
        converged: state.converged,
    }
}
