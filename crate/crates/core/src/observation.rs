use serde::{Deserialize, Serialize};

/// A hyperparameter vector in normalized coordinates with its measured
/// validation performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueObservation {
    pub x: Vec<f64>,
    pub y: f64,
}

impl ValueObservation {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// Direction of a monotone trend along one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Increasing,
    #[serde(rename = "-1")]
    Decreasing,
}

impl Sign {
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Increasing => 1.0,
            Sign::Decreasing => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Increasing => Sign::Decreasing,
            Sign::Decreasing => Sign::Increasing,
        }
    }
}

/// A virtual observation asserting only the sign of `df/dx_dim` at `x`.
///
/// `dim` is zero-based. `x` lives in the normalized box `[0, 1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignObservation {
    pub x: Vec<f64>,
    pub dim: usize,
    pub sign: Sign,
}

impl SignObservation {
    pub fn new(x: Vec<f64>, dim: usize, sign: Sign) -> Self {
        Self { x, dim, sign }
    }
}
