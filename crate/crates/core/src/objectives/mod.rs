//! Benchmark objectives and the data plumbing behind them.

mod dataset;
mod elastic_net;
mod synthetic;

pub use dataset::{
    generate_classification, load_csv_dataset, split_dataset, split_indices, subsample, write_csv_dataset, Dataset,
};
pub use elastic_net::{
    default_elastic_net_space, train_elastic_net, train_elastic_net_traced, ElasticNetModel, ElasticNetTask,
    ProxGradConfig, Standardizer, SUBSET_ROW_CAP,
};
pub use synthetic::{synthetic_objective, Regime, SyntheticComplexityParams, SyntheticObjective, SyntheticTask};

use crate::error::Result;
use crate::space::SearchSpace;

/// A black-box performance measure over declared hyperparameter units.
/// Larger is better.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

/// A tuning problem: a full-data objective, a factory for cheap subset
/// objectives, and the space both are defined over.
pub trait TuningTask: Sync {
    fn space(&self) -> &SearchSpace;

    fn full_objective(&self) -> Box<dyn Objective + '_>;

    /// Objective built from an independent random subset. `run` indexes the
    /// subset run; `seed` drives the subset draw.
    fn subset_objective(&self, run: usize, fraction: f64, seed: u64) -> Result<Box<dyn Objective + '_>>;

    fn description(&self) -> String;

    /// Generalization error on data never used during tuning, if the task has any.
    fn heldout_error(&self, _x: &[f64]) -> Option<Result<f64>> {
        None
    }

    /// Maximum of the full objective, when known in closed form.
    fn known_optimum(&self) -> Option<f64> {
        None
    }
}

/// Mixes a seed with a stream index into a fresh 64-bit seed (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
