//! Trial logs and the budget ledger of an optimization run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::observation::SignObservation;

/// Which part of a run produced a trial. Subset runs are numbered from 1.
/// Initial-design evaluations carry their own label so that the `main`
/// phase holds exactly the acquisition-driven iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Phase {
    SubsetInit(usize),
    Subset(usize),
    MainInit,
    Main,
}

impl Phase {
    /// True for trials evaluated on the full-data objective.
    pub fn is_main(self) -> bool {
        matches!(self, Phase::MainInit | Phase::Main)
    }

    pub fn subset_run(self) -> Option<usize> {
        match self {
            Phase::SubsetInit(b) | Phase::Subset(b) => Some(b),
            _ => None,
        }
    }

    pub fn is_init(self) -> bool {
        matches!(self, Phase::MainInit | Phase::SubsetInit(_))
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::SubsetInit(b) => write!(f, "subset-{b}-init"),
            Phase::Subset(b) => write!(f, "subset-{b}"),
            Phase::MainInit => f.write_str("main-init"),
            Phase::Main => f.write_str("main"),
        }
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "main" => return Ok(Phase::Main),
            "main-init" => return Ok(Phase::MainInit),
            _ => {}
        }
        let bad = || format!("unknown phase {s:?}");
        let rest = s.strip_prefix("subset-").ok_or_else(bad)?;
        match rest.strip_suffix("-init") {
            Some(b) => b.parse().map(Phase::SubsetInit).map_err(|_| bad()),
            None => rest.parse().map(Phase::Subset).map_err(|_| bad()),
        }
    }
}

impl From<Phase> for String {
    fn from(p: Phase) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Phase {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Serializes `-inf` (failed evaluation / no incumbent yet) as JSON `null`.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub phase: Phase,
    /// 1-based position within the phase.
    pub iteration: usize,
    /// Point in declared units (exponents for exponent-scaled dimensions).
    pub x_raw: Vec<f64>,
    pub x_normalized: Vec<f64>,
    /// Objective value; `-inf` marks a failed evaluation.
    #[serde(with = "finite_or_null")]
    pub y: f64,
    /// Best `y` of the run so far; `-inf` until the first success.
    #[serde(with = "finite_or_null")]
    pub incumbent_y: f64,
    /// Cumulative budget time at the end of this evaluation.
    pub elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trial {
    pub fn failed(&self) -> bool {
        !self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Iterations,
    Evaluations,
    Seconds,
    Target,
}

/// Where the time and evaluations of a run went. Subset runs count as if
/// executed one after another, whatever the actual parallelism.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub subset_seconds: Vec<f64>,
    pub subset_evals: usize,
    pub main_seconds: f64,
    pub main_evals: usize,
}

impl BudgetLedger {
    pub fn total_seconds(&self) -> f64 {
        self.subset_seconds.iter().sum::<f64>() + self.main_seconds
    }

    pub fn total_evals(&self) -> usize {
        self.subset_evals + self.main_evals
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub trials: Vec<Trial>,
    /// Mean of the subset-run optima in normalized coordinates.
    pub averaged_optimum: Option<Vec<f64>>,
    pub subset_optima: Vec<Vec<f64>>,
    /// Virtual sign observations, normalized coordinates.
    pub sign_points: Vec<SignObservation>,
    pub budget: BudgetLedger,
    pub stop_reason: StopReason,
    /// Iterations where the surrogate could not be fitted and a uniform
    /// random point was evaluated instead.
    pub model_failures: usize,
}

impl RunRecord {
    pub fn main_trials(&self) -> impl Iterator<Item = &Trial> {
        self.trials.iter().filter(|t| t.phase.is_main())
    }

    /// Best successful full-data trial (earliest wins ties).
    pub fn final_incumbent(&self) -> Option<&Trial> {
        best(self.main_trials())
    }

    /// Best successful trial of subset run `b` (1-based).
    pub fn subset_incumbent(&self, b: usize) -> Option<&Trial> {
        best(self.trials.iter().filter(|t| t.phase.subset_run() == Some(b)))
    }

    /// Number of full-data evaluations until the first with `y >= target`.
    pub fn evals_to_target(&self, target: f64) -> Option<usize> {
        self.main_trials().position(|t| t.y >= target).map(|i| i + 1)
    }
}

fn best<'a>(trials: impl Iterator<Item = &'a Trial>) -> Option<&'a Trial> {
    trials
        .filter(|t| !t.failed())
        .fold(None, |acc: Option<&Trial>, t| match acc {
            Some(b) if b.y >= t.y => Some(b),
            _ => Some(t),
        })
}
