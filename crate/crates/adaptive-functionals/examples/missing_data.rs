//! The missing-data mean pipeline on data drawn from the two-hypothesis
//! null construction, where the population mean is exactly 1/2.
//!
//! Run with: cargo run --release --example missing_data

use adaptive_functionals::functionals::{missing_data_mean, PipelineConfig, Problem};
use adaptive_functionals::lowerbound::{build_priors, sample_from_prior, BumpFunction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adaptive_functionals::Result<()> {
    // a_lambda fluctuates around 2 (so the observation rate E(A|X) = 1/a
    // fluctuates around 1/2), b = 1/2 frozen, design density 1/2
    let (theta0, theta1) =
        build_priors(Problem::Missing, 0.25, 1.0, 1, 16, 8.0, BumpFunction::step(1))?;
    println!(
        "population means: Theta_0 = {}, Theta_1 = {}",
        theta0.functional_value(),
        theta1.functional_value()
    );

    let mut cfg = PipelineConfig::defaults(1);
    cfg.b_lo = 0.25;
    cfg.b_hi = 3.0;
    cfg.c_opt = 0.25;
    cfg.c_star = std::f64::consts::SQRT_2;
    cfg.c_dstar = 1.0;

    let n = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let (data, lambda) = sample_from_prior(&theta0, 3 * n, &mut rng)?;
    let observed = data.iter().filter(|o| o.w[1] == 1.0).count();
    println!(
        "drew sign pattern {lambda:?}; {observed}/{} outcomes observed",
        data.len()
    );

    let out = missing_data_mean(&data, &cfg)?;
    println!(
        "estimate {:.5} (truth 0.5); nuisance levels {:?}, pi_hat {:.4}",
        out.estimate,
        out.nuisances,
        out.nuisances.pi_hat.unwrap()
    );
    Ok(())
}
