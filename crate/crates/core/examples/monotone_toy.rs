//! One value observation plus one "increasing" sign: EP tilts the posterior
//! upward to the right of the site.
//!
//! cargo run --example monotone_toy

use monotune::ep::{ep_fit, ep_log_evidence, ep_predict, sign_probability, EpConfig, DEFAULT_SLACK};
use monotune::kernel::KernelParams;
use monotune::observation::{Sign, SignObservation, ValueObservation};

fn main() -> monotune::Result<()> {
    let params = KernelParams::new(0.5, 1.0, 1e-4)?;
    let values = [ValueObservation::new(vec![0.0], 0.0)];
    let config = EpConfig::default();

    let plain = ep_fit(&values, &[], &params, DEFAULT_SLACK, &config)?;
    for sign in [Sign::Increasing, Sign::Decreasing] {
        let site = SignObservation::new(vec![0.5], 0, sign);
        let st = ep_fit(&values, std::slice::from_ref(&site), &params, DEFAULT_SLACK, &config)?;
        println!(
            "sign {sign:?}: {} sweeps, converged {}, log evidence {:.4}, P(sign holds) {:.4}",
            st.sweeps_used(),
            st.converged(),
            ep_log_evidence(&st).log_z,
            sign_probability(&st, &site)?
        );
        println!("   x    plain mean   with sign   variance");
        for x in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let a = ep_predict(&plain, &[x])?;
            let b = ep_predict(&st, &[x])?;
            println!("  {x:.1}   {:+.4}      {:+.4}     {:.4}", a.mean, b.mean, b.variance);
        }
        let d = st.derivative_marginal(&[0.5], 0)?;
        println!("  derivative at 0.5: mean {:+.4}, variance {:.4}\n", d.mean, d.variance);
    }
    Ok(())
}
