//! Expected improvement: the closed form, and maximizing it over a fitted model.
//!
//! cargo run --example expected_improvement

use monotune::acquisition::{expected_improvement, maximize_acquisition, Incumbent};
use monotune::ep::{ep_fit, ep_predict, EpConfig, DEFAULT_SLACK};
use monotune::kernel::KernelParams;
use monotune::observation::ValueObservation;
use monotune::space::{Dimension, Monotonicity, SearchSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> monotune::Result<()> {
    let inc = Incumbent {
        x_best: vec![0.0],
        y_best: 0.5,
    };
    println!("  mean   sigma   EI");
    for (m, s) in [(0.5, 0.0), (0.7, 0.0), (0.5, 0.2), (0.3, 0.2), (0.8, 0.1)] {
        println!("  {m:.2}   {s:.2}   {:.5}", expected_improvement(m, s * s, &inc)?);
    }

    let xs = [0.05, 0.3, 0.45, 0.8];
    let values: Vec<_> = xs
        .iter()
        .map(|&x| ValueObservation::new(vec![x], (6.0 * x).sin()))
        .collect();
    let params = KernelParams::new(0.02, 1.0, 1e-4)?;
    let model = ep_fit(&values, &[], &params, DEFAULT_SLACK, &EpConfig::default())?;
    let inc = Incumbent::from_values(&values).expect("finite values");
    let space = SearchSpace::new(vec![Dimension::linear("x", 0.0, 1.0, Monotonicity::Neutral)])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let next = maximize_acquisition(&model, &space, &inc, 1000, &mut rng);
    let p = ep_predict(&model, &next)?;
    println!(
        "\nincumbent {:.4} at {:?}; next point {:.4} (mean {:.4}, sd {:.4}, EI {:.5})",
        inc.y_best,
        inc.x_best,
        next[0],
        p.mean,
        p.variance.sqrt(),
        expected_improvement(p.mean, p.variance, &inc)?
    );
    Ok(())
}
