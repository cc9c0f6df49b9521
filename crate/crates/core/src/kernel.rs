//! Squared-exponential covariance, its first and second derivative
//! cross-covariances, and assembly of the joint prior covariance over
//! function values and directional derivatives.
//!
//! The kernel is parametrized with a *squared* lengthscale `theta`:
//! `k(x, x') = amplitude * exp(-|x - x'|^2 / (2 theta))`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{invalid, Error, Result};
use crate::observation::SignObservation;

/// Relative jitter floor, as a fraction of the mean diagonal.
pub const JITTER_START: f64 = 1e-9;
/// Relative jitter ceiling before giving up.
pub const JITTER_MAX: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    /// Squared lengthscale in normalized input units.
    pub theta: f64,
    /// Output-scale multiplier.
    pub amplitude: f64,
    /// Gaussian observation noise variance on function values.
    pub noise: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            theta: 0.2,
            amplitude: 1.0,
            noise: 1e-4,
        }
    }
}

impl KernelParams {
    pub fn new(theta: f64, amplitude: f64, noise: f64) -> Result<Self> {
        let p = Self {
            theta,
            amplitude,
            noise,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return invalid(format!("lengthscale must be positive, got {}", self.theta));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return invalid(format!("amplitude must be positive, got {}", self.amplitude));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return invalid(format!("noise must be non-negative, got {}", self.noise));
        }
        Ok(())
    }

    /// Prior variance of a directional derivative latent, `amplitude / theta`.
    pub fn derivative_variance(&self) -> f64 {
        self.amplitude / self.theta
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return invalid(format!("dimension mismatch: {} vs {}", a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return invalid("non-finite input coordinate");
    }
    Ok(())
}

fn check_dim(d: usize, dims: usize) -> Result<()> {
    if d >= dims {
        return invalid(format!("dimension index {d} out of range for {dims}-d input"));
    }
    Ok(())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[inline]
fn raw_kernel(a: &[f64], b: &[f64], p: &KernelParams) -> f64 {
    p.amplitude * (-sq_dist(a, b) / (2.0 * p.theta)).exp()
}

#[inline]
fn raw_dobs(a: &[f64], b: &[f64], d: usize, p: &KernelParams) -> f64 {
    -((a[d] - b[d]) / p.theta) * raw_kernel(a, b, p)
}

#[inline]
fn raw_dd(a: &[f64], b: &[f64], d: usize, g: usize, p: &KernelParams) -> f64 {
    let delta = if d == g { 1.0 / p.theta } else { 0.0 };
    let cross = (a[d] - b[d]) * (a[g] - b[g]) / (p.theta * p.theta);
    (delta - cross) * raw_kernel(a, b, p)
}

pub fn se_kernel(x: &[f64], x2: &[f64], params: &KernelParams) -> Result<f64> {
    params.validate()?;
    check_pair(x, x2)?;
    Ok(raw_kernel(x, x2, params))
}

/// `d/dx_i[d] k(x_i, x_j)`: covariance between the derivative latent at `x_i`
/// along `d` and the value latent at `x_j`.
pub fn se_kernel_dobs(xi: &[f64], xj: &[f64], d: usize, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    check_pair(xi, xj)?;
    check_dim(d, xi.len())?;
    Ok(raw_dobs(xi, xj, d, params))
}

/// `d^2/(dx_i[d] dx_j[g]) k(x_i, x_j)`: covariance between two derivative latents.
pub fn se_kernel_dd(xi: &[f64], xj: &[f64], d: usize, g: usize, params: &KernelParams) -> Result<f64> {
    params.validate()?;
    check_pair(xi, xj)?;
    check_dim(d, xi.len())?;
    check_dim(g, xi.len())?;
    Ok(raw_dd(xi, xj, d, g, params))
}

/// A latent variable of the joint process: either `f(x)` or `df/dx_dim (x)`.
#[derive(Debug, Clone, Copy)]
pub enum Latent<'a> {
    Value(&'a [f64]),
    Derivative(&'a [f64], usize),
}

impl Latent<'_> {
    pub fn point(&self) -> &[f64] {
        match self {
            Latent::Value(x) | Latent::Derivative(x, _) => x,
        }
    }
}

/// Prior covariance between two latents. Inputs are assumed validated.
pub(crate) fn latent_cov(a: Latent<'_>, b: Latent<'_>, p: &KernelParams) -> f64 {
    match (a, b) {
        (Latent::Value(x), Latent::Value(y)) => raw_kernel(x, y, p),
        (Latent::Derivative(x, d), Latent::Value(y)) => raw_dobs(x, y, d, p),
        (Latent::Value(x), Latent::Derivative(y, d)) => raw_dobs(y, x, d, p),
        (Latent::Derivative(x, d), Latent::Derivative(y, g)) => raw_dd(x, y, d, g, p),
    }
}

/// Joint prior covariance over `p` value latents followed by `M`
/// derivative latents, with jitter already on the diagonal.
#[derive(Debug, Clone)]
pub struct JointGram {
    matrix: DMatrix<f64>,
    n_values: usize,
    /// `(point index within the sign list, dimension)` per derivative column.
    derivative_index: Vec<(usize, usize)>,
    jitter: f64,
}

impl JointGram {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn n_values(&self) -> usize {
        self.n_values
    }

    pub fn n_derivatives(&self) -> usize {
        self.derivative_index.len()
    }

    pub fn derivative_index(&self) -> &[(usize, usize)] {
        &self.derivative_index
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn k_ff(&self) -> DMatrix<f64> {
        let p = self.n_values;
        self.matrix.view((0, 0), (p, p)).into_owned()
    }

    pub fn k_fg(&self) -> DMatrix<f64> {
        let p = self.n_values;
        let m = self.n_derivatives();
        self.matrix.view((0, p), (p, m)).into_owned()
    }

    pub fn k_gg(&self) -> DMatrix<f64> {
        let p = self.n_values;
        let m = self.n_derivatives();
        self.matrix.view((p, p), (m, m)).into_owned()
    }
}

/// Relative starting jitter for a matrix with the given diagonal.
pub fn default_jitter(matrix: &DMatrix<f64>) -> f64 {
    let n = matrix.nrows().max(1) as f64;
    JITTER_START * matrix.diagonal().iter().sum::<f64>() / n
}

/// Cholesky-factorizes `matrix + jitter * I`, escalating the jitter by 10x
/// from `start` up to [`JITTER_MAX`] times the mean diagonal.
pub(crate) fn cholesky_with_jitter(matrix: &DMatrix<f64>, start: f64, what: &str) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    let mean_diag = if n == 0 {
        1.0
    } else {
        matrix.diagonal().iter().sum::<f64>() / n as f64
    };
    let ceiling = JITTER_MAX * mean_diag.abs().max(f64::MIN_POSITIVE);
    let mut jitter = start.max(0.0);
    loop {
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            return Ok((ch, jitter));
        }
        if jitter >= ceiling {
            return Err(Error::Conditioning {
                what: what.to_string(),
                jitter,
            });
        }
        jitter = if jitter == 0.0 {
            JITTER_START * mean_diag.abs().max(f64::MIN_POSITIVE)
        } else {
            (jitter * 10.0).min(ceiling)
        };
    }
}

/// Assembles the joint prior covariance over value and sign latents as is,
/// without checking that it factorizes.
pub(crate) fn assemble_joint_gram(
    values: &[Vec<f64>],
    signs: &[SignObservation],
    params: &KernelParams,
) -> Result<JointGram> {
    params.validate()?;
    if values.is_empty() {
        return invalid("joint gram needs at least one value point");
    }
    let dims = values[0].len();
    for x in values.iter().chain(signs.iter().map(|s| &s.x)) {
        check_pair(&values[0], x)?;
    }
    for s in signs {
        check_dim(s.dim, dims)?;
    }

    let latents: Vec<Latent<'_>> = values
        .iter()
        .map(|x| Latent::Value(x))
        .chain(signs.iter().map(|s| Latent::Derivative(&s.x, s.dim)))
        .collect();
    let n = latents.len();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let c = latent_cov(latents[i], latents[j], params);
            matrix[(i, j)] = c;
            matrix[(j, i)] = c;
        }
    }
    Ok(JointGram {
        matrix,
        n_values: values.len(),
        derivative_index: signs.iter().enumerate().map(|(i, s)| (i, s.dim)).collect(),
        jitter: 0.0,
    })
}

/// Builds the joint Gram matrix over value points and sign points.
///
/// `jitter` is the starting diagonal jitter; it is escalated until the
/// assembled matrix factorizes.
pub fn build_joint_gram(
    values: &[Vec<f64>],
    signs: &[SignObservation],
    params: &KernelParams,
    jitter: f64,
) -> Result<JointGram> {
    let mut gram = assemble_joint_gram(values, signs, params)?;
    let (_, used) = cholesky_with_jitter(&gram.matrix, jitter, "joint gram")?;
    for i in 0..gram.matrix.nrows() {
        gram.matrix[(i, i)] += used;
    }
    gram.jitter = used;
    Ok(gram)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::Sign;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit(theta: f64) -> KernelParams {
        KernelParams::new(theta, 1.0, 0.0).unwrap()
    }

    // Central finite differences of se_kernel; independent of the analytic forms.
    fn fd_first(xi: &[f64], xj: &[f64], d: usize, p: &KernelParams, h: f64) -> f64 {
        let mut a = xi.to_vec();
        let mut b = xi.to_vec();
        a[d] += h;
        b[d] -= h;
        (se_kernel(&a, xj, p).unwrap() - se_kernel(&b, xj, p).unwrap()) / (2.0 * h)
    }

    fn fd_second(xi: &[f64], xj: &[f64], d: usize, g: usize, p: &KernelParams, h: f64) -> f64 {
        let mut a = xj.to_vec();
        let mut b = xj.to_vec();
        a[g] += h;
        b[g] -= h;
        (fd_first(xi, &a, d, p, h) - fd_first(xi, &b, d, p, h)) / (2.0 * h)
    }

    #[test]
    fn kernel_examples() {
        let p = unit(1.0);
        assert_eq!(se_kernel(&[0.3, 0.7], &[0.3, 0.7], &p).unwrap(), 1.0);
        assert_relative_eq!(
            se_kernel(&[0.0], &[1.0], &p).unwrap(),
            0.606_530_659_712_633_4,
            epsilon = 1e-15
        );
        let a = [0.1, 0.9, 0.4];
        let b = [0.5, 0.2, 0.8];
        let p = unit(0.3);
        assert_eq!(se_kernel(&a, &b, &p).unwrap(), se_kernel(&b, &a, &p).unwrap());
    }

    #[test]
    fn kernel_rejects_bad_input() {
        let p = unit(1.0);
        assert!(se_kernel(&[f64::NAN], &[0.0], &p).is_err());
        assert!(se_kernel(&[0.0, 1.0], &[0.0], &p).is_err());
        assert!(KernelParams::new(0.0, 1.0, 0.0).is_err());
        assert!(KernelParams::new(1.0, -1.0, 0.0).is_err());
        assert!(KernelParams::new(1.0, 1.0, -1e-3).is_err());
        assert!(se_kernel_dobs(&[0.0], &[1.0], 1, &p).is_err());
        assert!(se_kernel_dd(&[0.0], &[1.0], 0, 3, &p).is_err());
    }

    #[test]
    fn first_derivative_examples() {
        let p = unit(1.0);
        assert_eq!(se_kernel_dobs(&[0.4, 0.2], &[0.4, 0.2], 1, &p).unwrap(), 0.0);
        let v = se_kernel_dobs(&[0.0], &[1.0], 0, &p).unwrap();
        // frozen from the central difference with h = 1e-6
        let fd = fd_first(&[0.0], &[1.0], 0, &p, 1e-6);
        assert_relative_eq!(v, 0.606_530_659_712_633_4, epsilon = 1e-15);
        assert_relative_eq!(v, fd, max_relative = 1e-8);
        let a = [0.1, 0.9];
        let b = [0.6, 0.3];
        let q = unit(0.4);
        assert_eq!(
            se_kernel_dobs(&a, &b, 1, &q).unwrap(),
            -se_kernel_dobs(&b, &a, 1, &q).unwrap()
        );
    }

    #[test]
    fn second_derivative_examples() {
        let p = unit(1.0);
        let x = [0.25, 0.75];
        assert_relative_eq!(se_kernel_dd(&x, &x, 0, 0, &p).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(fd_second(&x, &x, 0, 0, &p, 1e-4), 1.0, epsilon = 1e-6);
        assert_eq!(se_kernel_dd(&x, &x, 0, 1, &p).unwrap(), 0.0);
        let v = se_kernel_dd(&[0.0], &[1.0], 0, 0, &p).unwrap();
        assert!(v.abs() < 1e-15);
        assert!(fd_second(&[0.0], &[1.0], 0, 0, &p, 1e-4).abs() < 1e-6);
    }

    #[test]
    fn gram_single_point() {
        let g = build_joint_gram(&[vec![0.5]], &[], &unit(1.0), 1e-9).unwrap();
        assert_eq!(g.matrix().shape(), (1, 1));
        assert_relative_eq!(g.matrix()[(0, 0)], 1.0 + 1e-9, epsilon = 1e-15);
    }

    #[test]
    fn gram_mixed_blocks_match_finite_differences() {
        let p = unit(0.5);
        let values = vec![vec![0.1], vec![0.7]];
        let signs = vec![SignObservation::new(vec![0.4], 0, Sign::Increasing)];
        let g = build_joint_gram(&values, &signs, &p, 0.0).unwrap();
        let m = g.matrix();
        assert_eq!(m.shape(), (3, 3));
        for (j, xj) in values.iter().enumerate() {
            let fd = fd_first(&[0.4], xj, 0, &p, 1e-6);
            assert_relative_eq!(m[(j, 2)], fd, max_relative = 1e-7);
            assert_relative_eq!(m[(2, j)], fd, max_relative = 1e-7);
        }
        assert_relative_eq!(
            m[(2, 2)],
            fd_second(&[0.4], &[0.4], 0, 0, &p, 1e-4),
            max_relative = 1e-6
        );
        assert_eq!(g.k_fg().shape(), (2, 1));
        assert_eq!(g.k_gg().shape(), (1, 1));
    }

    #[test]
    fn gram_duplicate_points_factorize() {
        let values = vec![vec![0.3, 0.3], vec![0.3, 0.3], vec![0.9, 0.1]];
        let g = build_joint_gram(&values, &[], &unit(0.2), 1e-9).unwrap();
        assert!(Cholesky::new(g.matrix().clone()).is_some());
    }

    fn vec_in(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0..1.0f64, d)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn derivatives_match_finite_differences(
            (xi, xj, d, g) in (1usize..=5).prop_flat_map(|dim| (vec_in(dim), vec_in(dim), 0..dim, 0..dim)),
            theta in 0.05..2.0f64,
        ) {
            let p = unit(theta);
            let h = 1e-5;
            let analytic = se_kernel_dobs(&xi, &xj, d, &p).unwrap();
            let fd = fd_first(&xi, &xj, d, &p, h);
            prop_assert!((analytic - fd).abs() < 1e-8 || ((analytic - fd) / analytic).abs() < 1e-4);
            let analytic = se_kernel_dd(&xi, &xj, d, g, &p).unwrap();
            let fd = fd_second(&xi, &xj, d, g, &p, h);
            prop_assert!((analytic - fd).abs() < 1e-5 || ((analytic - fd) / analytic).abs() < 1e-3,
                "{} vs {}", analytic, fd);
        }

        #[test]
        fn kernel_is_stationary(
            (a, b, shift) in (1usize..=5).prop_flat_map(|dim| (vec_in(dim), vec_in(dim), vec_in(dim))),
            theta in 0.05..2.0f64,
        ) {
            let p = unit(theta);
            let a2: Vec<f64> = a.iter().zip(&shift).map(|(u, s)| u + s).collect();
            let b2: Vec<f64> = b.iter().zip(&shift).map(|(u, s)| u + s).collect();
            let k1 = se_kernel(&a, &b, &p).unwrap();
            let k2 = se_kernel(&a2, &b2, &p).unwrap();
            prop_assert!((k1 - k2).abs() < 1e-12);
        }

        #[test]
        fn joint_gram_is_symmetric(
            pts in proptest::collection::vec(vec_in(2), 1..6),
            sign_pts in proptest::collection::vec((vec_in(2), 0usize..2), 0..4),
            theta in 0.05..2.0f64,
        ) {
            let signs: Vec<_> = sign_pts.into_iter()
                .map(|(x, d)| SignObservation::new(x, d, Sign::Increasing)).collect();
            let g = build_joint_gram(&pts, &signs, &unit(theta), 1e-9).unwrap();
            let m = g.matrix();
            prop_assert!((m - m.transpose()).abs().max() < 1e-12);
            prop_assert!(Cholesky::new(m.clone()).is_some());
        }
    }
}
