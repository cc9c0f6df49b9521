//! Regenerates the bundled benchmark dataset.
//!
//! cargo run --example generate_dataset -- data/classification.csv

use std::path::PathBuf;

use monotune::objectives::{generate_classification, write_csv_dataset};

fn main() -> monotune::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/classification.csv"));
    let ds = generate_classification(2000, 20, 5, 7)?;
    write_csv_dataset(&ds, &path)?;
    println!(
        "wrote {} rows x {} features ({} positive) to {}",
        ds.n_rows(),
        ds.n_features(),
        ds.positives(),
        path.display()
    );
    Ok(())
}
