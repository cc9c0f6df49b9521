//! The Bayesian optimization loop over value and sign observations.

use std::time::Instant;

use rand::Rng;

use super::hyperparams::{fit_gp_hyperparams, TargetScaling};
use super::record::{BudgetLedger, Phase, RunRecord, StopReason, Trial};
use crate::acquisition::{maximize_acquisition_with, AcquisitionConfig, Incumbent};
use crate::ep::{ep_fit, EpConfig, DEFAULT_SLACK};
use crate::error::{invalid, Result};
use crate::objectives::Objective;
use crate::observation::{SignObservation, ValueObservation};
use crate::space::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoConfig {
    /// Size of the uniform initial design; `None` means `max(5, 2D)`.
    pub init_points: Option<usize>,
    pub slack: f64,
    pub acquisition: AcquisitionConfig,
    pub ep: EpConfig,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            init_points: None,
            slack: DEFAULT_SLACK,
            acquisition: AcquisitionConfig::default(),
            ep: EpConfig::default(),
        }
    }
}

impl BoConfig {
    pub fn init_points_for(&self, dims: usize) -> usize {
        self.init_points.unwrap_or((2 * dims).max(5))
    }
}

/// When a run ends. Checked before every evaluation, initial design included.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StopRule {
    /// Acquisition iterations after the initial design.
    pub max_iters: Option<usize>,
    /// Total evaluations including the initial design.
    pub max_evals: Option<usize>,
    pub max_seconds: Option<f64>,
    /// Stop once the incumbent reaches this value.
    pub target: Option<f64>,
}

impl StopRule {
    pub fn iterations(iters: usize) -> Self {
        Self {
            max_iters: Some(iters),
            ..Default::default()
        }
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters.is_none() && self.max_evals.is_none() && self.max_seconds.is_none() {
            return invalid("stop rule needs an iteration, evaluation or time limit");
        }
        if self.max_seconds.is_some_and(|s| !(s >= 0.0)) {
            return invalid("time limit must be non-negative");
        }
        Ok(())
    }
}

/// Plain labels for the two phases of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Main,
    /// Subset run `b`, numbered from 1.
    Subset(usize),
}

impl RunKind {
    fn phases(self) -> (Phase, Phase) {
        match self {
            RunKind::Main => (Phase::MainInit, Phase::Main),
            RunKind::Subset(b) => (Phase::SubsetInit(b), Phase::Subset(b)),
        }
    }
}

/// Runs `iters` acquisition steps after the initial design. With no signs
/// this is plain expected-improvement BO.
pub fn run_bo<R: Rng>(
    objective: &dyn Objective,
    space: &SearchSpace,
    iters: usize,
    signs: &[SignObservation],
    config: &BoConfig,
    rng: &mut R,
) -> Result<RunRecord> {
    run_bo_with(
        objective,
        space,
        &StopRule::iterations(iters),
        signs,
        config,
        rng,
        RunKind::Main,
    )
}

struct Loop<'a> {
    objective: &'a dyn Objective,
    space: &'a SearchSpace,
    start: Instant,
    trials: Vec<Trial>,
    values: Vec<ValueObservation>,
    incumbent: f64,
}

impl Loop<'_> {
    fn evaluate(&mut self, unit: Vec<f64>, phase: Phase, iteration: usize) {
        let x_raw = self.space.denormalize(&unit);
        let x_normalized = self.space.normalize(&x_raw);
        let (y, error) = match self.objective.evaluate(&x_raw) {
            Ok(y) if y.is_finite() => (y, None),
            Ok(y) => (f64::NEG_INFINITY, Some(format!("objective returned {y}"))),
            Err(e) => (f64::NEG_INFINITY, Some(e.to_string())),
        };
        if y.is_finite() {
            self.values.push(ValueObservation {
                x: x_normalized.clone(),
                y,
            });
            self.incumbent = self.incumbent.max(y);
        }
        self.trials.push(Trial {
            phase,
            iteration,
            x_raw,
            x_normalized,
            y,
            incumbent_y: self.incumbent,
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
            error,
        });
    }

    fn should_stop(&self, stop: &StopRule) -> Option<StopReason> {
        if stop.target.is_some_and(|t| self.incumbent >= t) {
            return Some(StopReason::Target);
        }
        if stop.max_evals.is_some_and(|m| self.trials.len() >= m) {
            return Some(StopReason::Evaluations);
        }
        if stop
            .max_seconds
            .is_some_and(|s| self.start.elapsed().as_secs_f64() >= s)
        {
            return Some(StopReason::Seconds);
        }
        None
    }
}

fn uniform_point<R: Rng>(dims: usize, rng: &mut R) -> Vec<f64> {
    (0..dims).map(|_| rng.random::<f64>()).collect()
}

/// Next point to evaluate, or `None` if the surrogate cannot be fitted.
fn propose<R: Rng>(
    values: &[ValueObservation],
    signs: &[SignObservation],
    dims: usize,
    config: &BoConfig,
    rng: &mut R,
) -> Option<Vec<f64>> {
    if values.len() < 2 {
        return None;
    }
    let ys: Vec<f64> = values.iter().map(|v| v.y).collect();
    let scaling = TargetScaling::fit(&ys).unwrap_or(TargetScaling {
        mean: ys[0],
        scale: 1.0,
    });
    let standardized: Vec<ValueObservation> = values
        .iter()
        .map(|v| ValueObservation {
            x: v.x.clone(),
            y: scaling.apply(v.y),
        })
        .collect();
    let params = fit_gp_hyperparams(values).ok()?;
    let state = ep_fit(&standardized, signs, &params, config.slack, &config.ep).ok()?;
    let incumbent = Incumbent::from_values(&standardized)?;
    Some(maximize_acquisition_with(
        &state,
        dims,
        &incumbent,
        &config.acquisition,
        rng,
    ))
}

/// Runs BO until `stop` fires. Failed evaluations are logged with `y = -inf`
/// and left out of the surrogate.
pub fn run_bo_with<R: Rng>(
    objective: &dyn Objective,
    space: &SearchSpace,
    stop: &StopRule,
    signs: &[SignObservation],
    config: &BoConfig,
    rng: &mut R,
    kind: RunKind,
) -> Result<RunRecord> {
    space.validate()?;
    stop.validate()?;
    let dims = space.len();
    let init_points = config.init_points_for(dims);
    if init_points < 2 {
        return invalid(format!("init_points must be at least 2, got {init_points}"));
    }
    if signs.iter().any(|s| s.x.len() != dims || s.dim >= dims) {
        return invalid("sign observations do not match the search space");
    }
    let (init_phase, main_phase) = kind.phases();
    let mut run = Loop {
        objective,
        space,
        start: Instant::now(),
        trials: Vec::new(),
        values: Vec::new(),
        incumbent: f64::NEG_INFINITY,
    };
    let mut model_failures = 0;
    let mut reason = StopReason::Iterations;

    let mut stopped = false;
    for i in 1..=init_points {
        if let Some(r) = run.should_stop(stop) {
            reason = r;
            stopped = true;
            break;
        }
        let unit = uniform_point(dims, rng);
        run.evaluate(unit, init_phase, i);
    }
    if !stopped {
        let mut t = 1;
        loop {
            if stop.max_iters.is_some_and(|m| t > m) {
                reason = StopReason::Iterations;
                break;
            }
            if let Some(r) = run.should_stop(stop) {
                reason = r;
                break;
            }
            let unit = match propose(&run.values, signs, dims, config, rng) {
                Some(x) => x,
                None => {
                    model_failures += 1;
                    uniform_point(dims, rng)
                }
            };
            run.evaluate(unit, main_phase, t);
            t += 1;
        }
    }

    let seconds = run.start.elapsed().as_secs_f64();
    let evals = run.trials.len();
    let budget = match kind {
        RunKind::Main => BudgetLedger {
            main_seconds: seconds,
            main_evals: evals,
            ..Default::default()
        },
        RunKind::Subset(_) => BudgetLedger {
            subset_seconds: vec![seconds],
            subset_evals: evals,
            ..Default::default()
        },
    };
    Ok(RunRecord {
        trials: run.trials,
        averaged_optimum: None,
        subset_optima: Vec::new(),
        sign_points: signs.to_vec(),
        budget,
        stop_reason: reason,
        model_failures,
    })
}
