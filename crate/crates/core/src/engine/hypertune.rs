//! Subset-stage optimization, virtual sign points, and the composed tuner.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bo::{run_bo_with, BoConfig, RunKind, StopRule};
use super::record::{BudgetLedger, RunRecord};
use crate::acquisition::AcquisitionConfig;
use crate::ep::{EpConfig, DEFAULT_SLACK};
use crate::error::{invalid, Error, Result};
use crate::objectives::{derive_seed, TuningTask};
use crate::observation::SignObservation;
use crate::space::SearchSpace;

/// RNG stream of the full-data run.
pub const MAIN_STREAM: u64 = 0;
/// RNG stream of virtual-point sampling.
pub const VIRTUAL_STREAM: u64 = 1;
/// Subset run `b` (0-based) uses stream `SUBSET_STREAM_BASE + b`.
pub const SUBSET_STREAM_BASE: u64 = 100;

/// Independent generator for one stream of a seeded experiment.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperTuneConfig {
    /// Number of subset runs.
    #[serde(rename = "B")]
    pub b: usize,
    pub subset_fraction: f64,
    pub subset_iters: usize,
    /// Virtual points drawn below the averaged subset optimum.
    #[serde(rename = "N")]
    pub n_virtual: usize,
    /// Main-loop iterations.
    #[serde(rename = "T")]
    pub t: usize,
    pub init_points: Option<usize>,
    pub v: f64,
    pub seed: u64,
}

impl Default for HyperTuneConfig {
    fn default() -> Self {
        Self {
            b: 5,
            subset_fraction: 0.1,
            subset_iters: 30,
            n_virtual: 10,
            t: 30,
            init_points: None,
            v: DEFAULT_SLACK,
            seed: 0,
        }
    }
}

impl HyperTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return invalid("B must be at least 1");
        }
        if self.t == 0 {
            return invalid("T must be at least 1");
        }
        if self.init_points.is_some_and(|n| n < 2) {
            return invalid("init_points must be at least 2");
        }
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return invalid(format!("subset_fraction {} not in (0, 1]", self.subset_fraction));
        }
        if !(self.v > 0.0 && self.v.is_finite()) {
            return invalid(format!("probit slack v must be positive, got {}", self.v));
        }
        Ok(())
    }

    pub fn bo_config(&self) -> BoConfig {
        BoConfig {
            init_points: self.init_points,
            slack: self.v,
            acquisition: AcquisitionConfig::default(),
            ep: EpConfig::default(),
        }
    }
}

/// Outcome of the subset stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetStage {
    /// Mean of the per-run optima, normalized coordinates.
    pub averaged: Vec<f64>,
    pub optima: Vec<Vec<f64>>,
    pub records: Vec<RunRecord>,
}

/// Coordinate-wise mean of normalized points.
pub fn average_optima(optima: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = optima.first() else {
        return invalid("no subset optima to average");
    };
    if optima.iter().any(|o| o.len() != first.len()) {
        return invalid("subset optima differ in dimension");
    }
    let n = optima.len() as f64;
    Ok((0..first.len())
        .map(|d| optima.iter().map(|o| o[d]).sum::<f64>() / n)
        .collect())
}

/// Runs `B` plain-EI optimizations on independent subsets (in parallel) and
/// averages their best points.
pub fn subset_stage(task: &dyn TuningTask, config: &HyperTuneConfig) -> Result<SubsetStage> {
    config.validate()?;
    let space = task.space();
    let bo = config.bo_config();
    let records = (0..config.b)
        .into_par_iter()
        .map(|b| {
            let stream = SUBSET_STREAM_BASE + b as u64;
            let objective = task.subset_objective(b, config.subset_fraction, derive_seed(config.seed, stream))?;
            let mut rng = stream_rng(config.seed, stream);
            run_bo_with(
                objective.as_ref(),
                space,
                &StopRule::iterations(config.subset_iters),
                &[],
                &bo,
                &mut rng,
                RunKind::Subset(b + 1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let optima = records
        .iter()
        .enumerate()
        .map(|(b, r)| {
            r.subset_incumbent(b + 1)
                .map(|t| t.x_normalized.clone())
                .ok_or_else(|| Error::Objective(format!("subset run {} had no successful evaluation", b + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SubsetStage {
        averaged: average_optima(&optima)?,
        optima,
        records,
    })
}

/// Draws `n` points uniformly in `[0, x̄]` (normalized) and emits one sign
/// observation per annotated dimension at each.
pub fn sample_virtual_points<R: Rng>(
    space: &SearchSpace,
    averaged: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<Vec<SignObservation>> {
    if averaged.len() != space.len() {
        return invalid(format!(
            "averaged optimum has {} coordinates, space has {}",
            averaged.len(),
            space.len()
        ));
    }
    if averaged.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("averaged optimum must lie in the unit box");
    }
    if space.all_neutral() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = averaged.iter().map(|hi| rng.random::<f64>() * hi).collect();
        for (d, dim) in space.dims().iter().enumerate() {
            if let Some(sign) = dim.monotonicity.sign() {
                out.push(SignObservation::new(x.clone(), d, sign));
            }
        }
    }
    Ok(out)
}

/// Subset stage, virtual points, then `T` main iterations on the full-data
/// objective with the sign observations attached.
pub fn hypertune(task: &dyn TuningTask, config: &HyperTuneConfig) -> Result<RunRecord> {
    hypertune_with(task, config, None)
}

/// As [`hypertune`], additionally stopping the main loop once `target` is reached.
pub fn hypertune_with(task: &dyn TuningTask, config: &HyperTuneConfig, target: Option<f64>) -> Result<RunRecord> {
    let stage = subset_stage(task, config)?;
    let mut vrng = stream_rng(config.seed, VIRTUAL_STREAM);
    let signs = sample_virtual_points(task.space(), &stage.averaged, config.n_virtual, &mut vrng)?;
    let stop = StopRule {
        target,
        ..StopRule::iterations(config.t)
    };
    let objective = task.full_objective();
    let mut rng = stream_rng(config.seed, MAIN_STREAM);
    let main = run_bo_with(
        objective.as_ref(),
        task.space(),
        &stop,
        &signs,
        &config.bo_config(),
        &mut rng,
        RunKind::Main,
    )?;

    // Lay the subset runs end to end on the time axis.
    let mut trials = Vec::new();
    let mut offset = 0.0;
    let mut ledger = BudgetLedger::default();
    for r in stage.records {
        for mut t in r.trials {
            t.elapsed_seconds += offset;
            trials.push(t);
        }
        offset += r.budget.total_seconds();
        ledger.subset_seconds.extend(r.budget.subset_seconds);
        ledger.subset_evals += r.budget.subset_evals;
    }
    for mut t in main.trials {
        t.elapsed_seconds += offset;
        trials.push(t);
    }
    ledger.main_seconds = main.budget.main_seconds;
    ledger.main_evals = main.budget.main_evals;
    Ok(RunRecord {
        trials,
        averaged_optimum: Some(stage.averaged),
        subset_optima: stage.optima,
        sign_points: signs,
        budget: ledger,
        stop_reason: main.stop_reason,
        model_failures: main.model_failures,
    })
}

/// Plain EI on the full-data objective, using the same main RNG stream as
/// [`hypertune`].
pub fn run_baseline(task: &dyn TuningTask, config: &HyperTuneConfig, stop: &StopRule) -> Result<RunRecord> {
    config.validate()?;
    let objective = task.full_objective();
    let mut rng = stream_rng(config.seed, MAIN_STREAM);
    run_bo_with(
        objective.as_ref(),
        task.space(),
        stop,
        &[],
        &config.bo_config(),
        &mut rng,
        RunKind::Main,
    )
}

/// Stop rule granting a baseline the evaluations and seconds a HyperTune run
/// consumed, whichever runs out first.
pub fn parity_stop(reference: &RunRecord) -> StopRule {
    StopRule {
        max_iters: None,
        max_evals: Some(reference.budget.total_evals()),
        max_seconds: Some(reference.budget.total_seconds()),
        target: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{SyntheticComplexityParams, SyntheticTask};
    use crate::observation::Sign;
    use crate::space::{Dimension, Monotonicity};

    #[test]
    fn averaging_is_arithmetic_mean() {
        let m = average_optima(&[vec![0.1], vec![0.2], vec![0.3]]).unwrap();
        assert!((m[0] - 0.2).abs() < 1e-15);
        assert_eq!(average_optima(&[vec![0.7, 0.1]]).unwrap(), vec![0.7, 0.1]);
        assert!(average_optima(&[]).is_err());
    }

    #[test]
    fn virtual_points_follow_construction_rule() {
        let space = SearchSpace::new(vec![
            Dimension::linear("a", 0.0, 1.0, Monotonicity::Increasing),
            Dimension::linear("b", 0.0, 1.0, Monotonicity::Neutral),
        ])
        .unwrap();
        let avg = [0.4, 0.6];
        let mut rng = stream_rng(3, VIRTUAL_STREAM);
        let s = sample_virtual_points(&space, &avg, 5, &mut rng).unwrap();
        assert_eq!(s.len(), 5);
        for o in &s {
            assert_eq!((o.dim, o.sign), (0, Sign::Increasing));
            assert!(o.x.iter().zip(&avg).all(|(x, hi)| (0.0..=*hi).contains(x)));
        }
        assert!(sample_virtual_points(&space, &avg, 0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn all_neutral_space_gives_no_signs() {
        let space = SearchSpace::new(vec![Dimension::linear("a", 0.0, 1.0, Monotonicity::Neutral)]).unwrap();
        let mut rng = stream_rng(3, VIRTUAL_STREAM);
        assert!(sample_virtual_points(&space, &[0.5], 10, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn zero_subset_runs_rejected() {
        let task = SyntheticTask::new(SyntheticComplexityParams::default(), 2, 0).unwrap();
        let config = HyperTuneConfig {
            b: 0,
            ..Default::default()
        };
        assert!(matches!(subset_stage(&task, &config), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn ledger_adds_up() {
        let task = SyntheticTask::new(SyntheticComplexityParams::default(), 2, 0).unwrap();
        let config = HyperTuneConfig {
            b: 2,
            subset_iters: 3,
            t: 3,
            seed: 9,
            ..Default::default()
        };
        let rec = hypertune(&task, &config).unwrap();
        let subset: f64 = rec.budget.subset_seconds.iter().sum();
        assert!((rec.budget.total_seconds() - subset - rec.budget.main_seconds).abs() < 1e-12);
        assert_eq!(rec.budget.total_evals(), rec.trials.len());
        assert_eq!(
            rec.trials
                .iter()
                .filter(|t| t.phase == crate::engine::Phase::Main)
                .count(),
            3
        );
        let last = rec.trials.last().unwrap().elapsed_seconds;
        assert!(last <= rec.budget.total_seconds() + 1e-9);
        assert_eq!(rec.sign_points.len(), config.n_virtual);
    }
}
