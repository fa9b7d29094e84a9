//! The treatment-effect pipeline: covariance functional and the
//! variance-weighted ratio tau, on data with a known constant contrast.
//!
//! Run with: cargo run --release --example treatment_effect

use adaptive_functionals::function::FunctionRep;
use adaptive_functionals::functionals::{
    treatment_effect_covariance, treatment_effect_tau, PipelineConfig, Problem,
};
use adaptive_functionals::sim::{generate_dataset, Bounds, ModelSpec, OutcomeLaw};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> adaptive_functionals::Result<()> {
    let mut cfg = PipelineConfig::defaults(1);
    cfg.c_opt = 0.25;
    cfg.c_star = std::f64::consts::SQRT_2;
    cfg.c_dstar = 1.0;

    // E(Y | A, X) = tau0 (A - a(X)) + b(X) with tau0 = 0.3
    let tau0 = 0.3;
    let spec = ModelSpec {
        problem: Problem::Treatment,
        d: 1,
        a: Some(FunctionRep::constant(1, 0.5)),
        b: Some(FunctionRep::constant(1, 0.5)),
        c: Some(FunctionRep::constant(1, tau0)),
        g: FunctionRep::constant(1, 1.0),
        outcome: OutcomeLaw::Binary,
        bounds: Bounds { radius: 2.0, b_lo: 0.5, b_hi: 2.0 },
    };
    println!("population E[Cov(Y,A|X)] = {:.5}", spec.truth());

    let n = 4000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = generate_dataset(&spec, 3 * n, &mut rng)?;

    let cov = treatment_effect_covariance(&data, &cfg)?;
    println!(
        "covariance estimate {:.5} (selected ladder entry {}, nuisance levels {:?})",
        cov.estimate, cov.trace.selected, cov.nuisances
    );

    let tau = treatment_effect_tau(&data, &cfg)?;
    println!(
        "tau = {:.4} (numerator {:.5}, denominator {:.5}; population value {tau0})",
        tau.tau, tau.covariance.estimate, tau.variance.estimate
    );
    Ok(())
}
