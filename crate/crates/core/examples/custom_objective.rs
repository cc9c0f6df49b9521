//! Tuning your own function: a closure objective over a declared space, with
//! and without sign hints on the complexity dimension.
//!
//! cargo run --example custom_objective

use monotune::engine::{run_bo, stream_rng, BoConfig, MAIN_STREAM};
use monotune::observation::{Sign, SignObservation};
use monotune::space::{Dimension, Monotonicity, SearchSpace};

fn main() -> monotune::Result<()> {
    // Validation score rises with capacity (log10 of a width) until 10^2.5,
    // then falls off; the learning rate matters only mildly.
    let objective = |x: &[f64]| -> monotune::Result<f64> {
        let width = x[0];
        let lr = x[1];
        let rise = 1.0 / (1.0 + (-4.0 * (width - 1.5)).exp());
        let fall = (-(width - 2.5).max(0.0).powi(2)).exp();
        Ok(rise * fall - 0.05 * (lr + 2.0).powi(2))
    };
    let space = SearchSpace::new(vec![
        Dimension::exponent("width", 0.0, 4.0, Monotonicity::Increasing),
        Dimension::linear("lr_exponent", -4.0, 0.0, Monotonicity::Neutral),
    ])?;

    // Hints in normalized coordinates: the score increases in width below 10^2.
    let signs: Vec<_> = [0.1, 0.2, 0.3, 0.4]
        .iter()
        .flat_map(|&w| [0.25, 0.75].map(|l| SignObservation::new(vec![w, l], 0, Sign::Increasing)))
        .collect();

    let config = BoConfig::default();
    for (label, hints) in [("plain EI", &[][..]), ("with signs", &signs[..])] {
        let mut rng = stream_rng(3, MAIN_STREAM);
        let rec = run_bo(&objective, &space, 15, hints, &config, &mut rng)?;
        let best = rec.final_incumbent().expect("some evaluation succeeded");
        println!(
            "{label:>10}: best {:.4} at width 10^{:.2}, lr 10^{:.2} after {} evaluations",
            best.y,
            best.x_raw[0],
            best.x_raw[1],
            rec.trials.len()
        );
    }
    Ok(())
}
