//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the crate's kernel or EP code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// 1-D squared-exponential prior with squared lengthscale `theta`.
#[derive(Clone, Copy, Debug)]
pub struct Prior1d {
    pub theta: f64,
    pub amp: f64,
    pub noise: f64,
}

/// A latent of a 1-D GP: `f(x)` or `f'(x)`.
#[derive(Clone, Copy, Debug)]
pub enum L {
    F(f64),
    D(f64),
}

impl Prior1d {
    pub fn cov(&self, a: L, b: L) -> f64 {
        let (xa, xb) = match (a, b) {
            (L::F(x), L::F(y)) | (L::F(x), L::D(y)) | (L::D(x), L::F(y)) | (L::D(x), L::D(y)) => (x, y),
        };
        let r = xa - xb;
        let k = self.amp * (-r * r / (2.0 * self.theta)).exp();
        match (a, b) {
            (L::F(_), L::F(_)) => k,
            // d/dy k(x, y)
            (L::F(_), L::D(_)) => k * r / self.theta,
            (L::D(_), L::F(_)) => -k * r / self.theta,
            (L::D(_), L::D(_)) => k * (1.0 / self.theta - r * r / (self.theta * self.theta)),
        }
    }

    pub fn matrix(&self, a: &[L], b: &[L]) -> DMatrix<f64> {
        DMatrix::from_fn(a.len(), b.len(), |i, j| self.cov(a[i], b[j]))
    }
}

/// Exact GP regression: posterior mean/cov of `query` latents and log p(y).
pub fn gp_regression(prior: &Prior1d, xs: &[f64], y: &[f64], query: &[L]) -> (DVector<f64>, DMatrix<f64>, f64) {
    let f: Vec<L> = xs.iter().map(|&x| L::F(x)).collect();
    let mut a = prior.matrix(&f, &f);
    for i in 0..xs.len() {
        a[(i, i)] += prior.noise;
    }
    let yv = DVector::from_column_slice(y);
    let chol = a.clone().cholesky().expect("value covariance is SPD");
    let alpha = chol.solve(&yv);
    let kqf = prior.matrix(query, &f);
    let mean = &kqf * &alpha;
    let cov = prior.matrix(query, query) - &kqf * chol.solve(&kqf.transpose());
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * logdet - 0.5 * xs.len() as f64 * LN_2PI;
    (mean, cov, lml)
}

fn phi_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Exact posterior summary obtained by brute-force quadrature.
#[derive(Debug, Clone)]
pub struct Quadrature {
    /// Posterior mean and variance of each sign latent.
    pub sign_moments: Vec<(f64, f64)>,
    /// Posterior mean and variance of each query value.
    pub query_moments: Vec<(f64, f64)>,
    pub log_z: f64,
}

/// Posterior under Gaussian values plus probit sign sites `Phi(m f'(s) / v)`,
/// integrated on a midpoint grid over the (at most two) whitened sign latents.
pub fn quadrature(prior: &Prior1d, xs: &[f64], y: &[f64], signs: &[(f64, f64)], v: f64, queries: &[f64]) -> Quadrature {
    let m = signs.len();
    assert!(m <= 2);
    let mut latents: Vec<L> = signs.iter().map(|&(s, _)| L::D(s)).collect();
    latents.extend(queries.iter().map(|&q| L::F(q)));
    let (mu, c, lml) = gp_regression(prior, xs, y, &latents);
    if m == 0 {
        return Quadrature {
            sign_moments: vec![],
            query_moments: (0..queries.len()).map(|i| (mu[i], c[(i, i)])).collect(),
            log_z: lml,
        };
    }
    let cgg = c.view((0, 0), (m, m)).into_owned();
    let lg = cgg.clone().cholesky().expect("sign block is SPD").l();

    let (lo, hi) = (-10.0, 10.0);
    let steps = if m == 1 { 40_000 } else { 1_600 };
    let h = (hi - lo) / steps as f64;
    let w1 = h * (-0.5 * LN_2PI).exp();
    let mut z0 = 0.0;
    let mut s1 = [0.0; 2];
    let mut s2 = [[0.0; 2]; 2];
    let mut visit = |g: [f64; 2], weight: f64| {
        let mut lik = 1.0;
        for j in 0..m {
            lik *= phi_cdf(signs[j].1 * g[j] / v);
        }
        let w = weight * lik;
        if w == 0.0 {
            return;
        }
        z0 += w;
        for j in 0..m {
            s1[j] += w * g[j];
            for k in 0..m {
                s2[j][k] += w * g[j] * g[k];
            }
        }
    };
    for i in 0..steps {
        let a = lo + (i as f64 + 0.5) * h;
        let wa = w1 * (-0.5 * a * a).exp();
        let g0 = mu[0] + lg[(0, 0)] * a;
        if m == 1 {
            visit([g0, 0.0], wa);
        } else {
            for j in 0..steps {
                let b = lo + (j as f64 + 0.5) * h;
                let g1 = mu[1] + lg[(1, 0)] * a + lg[(1, 1)] * b;
                visit([g0, g1], wa * w1 * (-0.5 * b * b).exp());
            }
        }
    }
    let s1 = DVector::from_iterator(m, s1.iter().take(m).copied());
    let s2 = DMatrix::from_fn(m, m, |j, k| s2[j][k]);
    let eg = &s1 / z0;
    let cov_g = &s2 / z0 - &eg * eg.transpose();

    // f(q) | y, g is Gaussian with mean linear in g.
    let cgg_inv = cgg.clone().try_inverse().expect("invertible");
    let query_moments = (0..queries.len())
        .map(|q| {
            let i = m + q;
            let cqg = c.view((i, 0), (1, m)).into_owned();
            let b = &cqg * &cgg_inv;
            let dm = &eg - mu.rows(0, m);
            let mean = mu[i] + (&b * dm)[(0, 0)];
            let var = c[(i, i)] - (&b * cqg.transpose())[(0, 0)] + (&b * &cov_g * b.transpose())[(0, 0)];
            (mean, var)
        })
        .collect();
    Quadrature {
        sign_moments: (0..m).map(|j| (eg[j], cov_g[(j, j)])).collect(),
        query_moments,
        log_z: lml + z0.ln(),
    }
}

/// `Phi(m mu / sqrt(v^2 + var))`, the functional reported for a sign site.
pub fn sign_functional(m: f64, mean: f64, var: f64, v: f64) -> f64 {
    phi_cdf(m * mean / (v * v + var).sqrt())
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
