//! HyperTune against plain EI on the synthetic complexity-shift task, where
//! small-data optima sit at lower complexity than the full-data optimum.
//!
//! cargo run --release --example synthetic_hypertune [seeds]

use monotune::engine::{hypertune_with, run_baseline, HyperTuneConfig, StopRule};
use monotune::objectives::{SyntheticComplexityParams, SyntheticTask, TuningTask};

fn main() -> monotune::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let params = SyntheticComplexityParams::default();
    println!("seed  subset-average complexity  hypertune  ei   (main evaluations to within 1%)");
    for seed in 0..seeds {
        let task = SyntheticTask::new(params, 2, seed)?;
        let opt = task.known_optimum().expect("noise-free task");
        let target = opt - 0.01 * opt.abs();
        let config = HyperTuneConfig {
            seed,
            ..HyperTuneConfig::default()
        };
        let ht = hypertune_with(&task, &config, Some(target))?;
        let stop = StopRule {
            max_iters: None,
            max_evals: Some(ht.budget.subset_evals + config.t),
            max_seconds: None,
            target: Some(target),
        };
        let ei = run_baseline(&task, &config, &stop)?;
        let show = |n: Option<usize>| n.map_or("-".to_string(), |n| n.to_string());
        println!(
            "{seed:>4}  {:>25.3}  {:>9}  {:>3}",
            ht.averaged_optimum.as_ref().unwrap()[0],
            show(ht.evals_to_target(target)),
            show(ei.evals_to_target(target))
        );
    }
    println!("\n{}", SyntheticTask::new(params, 2, 0)?.description());
    Ok(())
}
