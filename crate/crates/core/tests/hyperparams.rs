mod common;

use common::{median, Prior1d, L};
use monotune::engine::fit_gp_hyperparams;
use monotune::observation::ValueObservation;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn sample_gp(prior: &Prior1d, n: usize, seed: u64) -> Vec<ValueObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let lat: Vec<L> = xs.iter().map(|&x| L::F(x)).collect();
    let mut k = prior.matrix(&lat, &lat);
    for i in 0..n {
        k[(i, i)] += prior.noise + 1e-10;
    }
    let l = k.cholesky().unwrap().l();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let y = l * z;
    xs.iter()
        .zip(y.iter())
        .map(|(&x, &y)| ValueObservation::new(vec![x], y))
        .collect()
}

#[test]
fn recovers_lengthscale_of_known_gp() {
    let truth = Prior1d {
        theta: 0.3,
        amp: 1.0,
        noise: 0.01,
    };
    let fitted: Vec<f64> = (0..20)
        .map(|seed| fit_gp_hyperparams(&sample_gp(&truth, 40, seed)).unwrap().theta.ln())
        .collect();
    let m = median(fitted);
    assert!((m - truth.theta.ln()).abs() <= 0.7, "median log theta {m}");
}

#[test]
fn fit_is_deterministic() {
    let truth = Prior1d {
        theta: 0.1,
        amp: 1.0,
        noise: 0.01,
    };
    let data = sample_gp(&truth, 15, 3);
    assert_eq!(fit_gp_hyperparams(&data).unwrap(), fit_gp_hyperparams(&data).unwrap());
}
