//! The squared-exponential kernel and its derivative cross-covariances,
//! checked against central differences.
//!
//! cargo run --example kernel_derivatives

use monotune::kernel::{build_joint_gram, se_kernel, se_kernel_dd, se_kernel_dobs, KernelParams};
use monotune::observation::{Sign, SignObservation};

fn main() -> monotune::Result<()> {
    let p = KernelParams::new(0.3, 1.0, 1e-4)?;
    let a = [0.2, 0.7];
    let b = [0.5, 0.4];
    let h = 1e-5;

    println!("k(a, b) = {:.6}", se_kernel(&a, &b, &p)?);
    for d in 0..2 {
        let mut up = a;
        let mut down = a;
        up[d] += h;
        down[d] -= h;
        let fd = (se_kernel(&up, &b, &p)? - se_kernel(&down, &b, &p)?) / (2.0 * h);
        println!(
            "dk/da[{d}]        = {:+.6}   finite difference {:+.6}",
            se_kernel_dobs(&a, &b, d, &p)?,
            fd
        );
    }
    for d in 0..2 {
        for g in 0..2 {
            println!("d2k/da[{d}]db[{g}] = {:+.6}", se_kernel_dd(&a, &b, d, g, &p)?);
        }
    }
    println!(
        "derivative prior variance sigma_f^2 / theta = {:.4}",
        p.derivative_variance()
    );

    // Joint covariance over two values and one derivative latent.
    let values = [a.to_vec(), b.to_vec()];
    let signs = [SignObservation::new(vec![0.35, 0.55], 0, Sign::Increasing)];
    let gram = build_joint_gram(&values, &signs, &p, 0.0)?;
    println!(
        "\njoint gram ({} values + {} derivatives):",
        gram.n_values(),
        gram.n_derivatives()
    );
    println!("{:.4}", gram.matrix());
    Ok(())
}
