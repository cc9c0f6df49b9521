//! Budget-matched comparison through the same code path as `monotune compare`,
//! printing the CSV it would write.
//!
//! cargo run --release --example compare_methods [repeats]

use std::path::Path;

use monotune::cli::{comparison_csv, load_config, run_comparison};

fn main() {
    let repeats: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let run = || -> Result<String, monotune::cli::CliError> {
        let a = load_config(&dir.join("synthetic_hypertune.json"))?;
        let b = load_config(&dir.join("synthetic_ei.json"))?;
        Ok(comparison_csv(&run_comparison(&a, &b, repeats)?))
    };
    match run() {
        Ok(csv) => print!("{csv}"),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
