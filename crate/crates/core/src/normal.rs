//! Standard normal density, distribution and the truncated-moment helpers
//! used by the probit sites.
//!
//! The probit slack used for sign sites is tiny (around `1e-6`), so the
//! standardized argument `z` can reach magnitudes of `1e6`. For `z < -6`
//! everything is computed from a continued fraction for the Mills ratio
//! instead of from `Phi(z)` itself, which underflows.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const TAIL_SWITCH: f64 = -6.0;
const CF_DEPTH: usize = 120;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn log_cdf(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        let t = -z;
        let (a, _, _) = mills_tails(t);
        -0.5 * t * t - LN_SQRT_2PI - (t + a).ln()
    } else if z > 5.0 {
        (-0.5 * erfc(z / SQRT_2)).ln_1p()
    } else {
        cdf(z).ln()
    }
}

/// Tail terms `T_k = k / (t + T_{k+1})` of the Mills-ratio continued fraction,
/// returned as `(T_1, T_2, T_3)`. `1 / (t + T_1)` equals `Phi(-t) / phi(t)`.
fn mills_tails(t: f64) -> (f64, f64, f64) {
    let mut tail = 0.0;
    let mut t3 = 0.0;
    let mut t2 = 0.0;
    for k in (1..=CF_DEPTH).rev() {
        tail = k as f64 / (t + tail);
        match k {
            3 => t3 = tail,
            2 => t2 = tail,
            _ => {}
        }
    }
    (tail, t2, t3)
}

/// Moments of a standard normal truncated to `(-z, inf)`, expressed through
/// the inverse Mills ratio `h = phi(z) / Phi(z)`.
#[derive(Debug, Clone, Copy)]
pub struct ProbitMoments {
    /// `log Phi(z)`.
    pub log_z: f64,
    /// `phi(z) / Phi(z)`.
    pub hazard: f64,
    /// `h * (z + h)`, the relative variance reduction; lies in `[0, 1)`.
    pub shrink: f64,
}

pub fn probit_moments(z: f64) -> ProbitMoments {
    if z < TAIL_SWITCH {
        let t = -z;
        let (a, b, c) = mills_tails(t);
        let hazard = t + a;
        // 1 - h(h - t) rewritten without cancellation: a (b - a).
        let residual = a * (t + 2.0 * b - c) / ((t + c) * (t + b));
        ProbitMoments {
            log_z: -0.5 * t * t - LN_SQRT_2PI - hazard.ln(),
            hazard,
            shrink: 1.0 - residual,
        }
    } else {
        let phi_big = cdf(z);
        let hazard = pdf(z) / phi_big;
        let shrink = (hazard * (z + hazard)).clamp(0.0, 1.0);
        ProbitMoments {
            log_z: log_cdf(z),
            hazard,
            shrink,
        }
    }
}

/// Variance of the truncated normal relative to the untruncated one,
/// `1 - h (z + h)`, accurate deep in the lower tail.
pub fn truncated_variance_ratio(z: f64) -> f64 {
    if z < TAIL_SWITCH {
        let t = -z;
        let (a, b, c) = mills_tails(t);
        a * (t + 2.0 * b - c) / ((t + c) * (t + b))
    } else {
        1.0 - probit_moments(z).shrink
    }
}
