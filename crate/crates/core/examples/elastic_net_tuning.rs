//! HyperTune on elastic-net logistic regression over the bundled dataset.
//!
//! cargo run --release --example elastic_net_tuning [path/to/data.csv]

use std::path::PathBuf;

use monotune::engine::{hypertune, HyperTuneConfig};
use monotune::objectives::{default_elastic_net_space, ElasticNetTask, TuningTask};

fn main() -> monotune::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/classification.csv")));
    let task = ElasticNetTask::from_csv(&path, default_elastic_net_space(), 0)?;
    println!("{}", task.description());
    println!(
        "train {} / validation {} / held-out {} rows",
        task.train().n_rows(),
        task.validation().n_rows(),
        task.heldout().n_rows()
    );

    let config = HyperTuneConfig {
        seed: 1,
        ..HyperTuneConfig::default()
    };
    let rec = hypertune(&task, &config)?;
    let space = task.space();
    for (b, opt) in rec.subset_optima.iter().enumerate() {
        let raw = space.denormalize(opt);
        println!("subset run {}: l1_ratio {:.3}, alpha 10^{:.2}", b + 1, raw[0], raw[1]);
    }
    let avg = space.denormalize(rec.averaged_optimum.as_ref().unwrap());
    println!("averaged optimum: l1_ratio {:.3}, alpha 10^{:.2}", avg[0], avg[1]);
    println!(
        "{} sign observations (alpha below the average: larger alpha is simpler)",
        rec.sign_points.len()
    );

    let best = rec.final_incumbent().expect("some evaluation succeeded");
    let held = task.heldout_error(&best.x_raw).expect("held-out split")?;
    println!(
        "best validation accuracy {:.4} at l1_ratio {:.3}, alpha 10^{:.2}; held-out error {held:.4}",
        best.y, best.x_raw[0], best.x_raw[1]
    );
    println!(
        "budget: {} evaluations, {:.2}s ({:.2}s in the subset stage)",
        rec.budget.total_evals(),
        rec.budget.total_seconds(),
        rec.budget.subset_seconds.iter().sum::<f64>()
    );
    Ok(())
}
