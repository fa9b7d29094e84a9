//! A small Monte Carlo rate study for the quadratic functional: RMSE against
//! n/sqrt(ln n) with the fitted decay exponent.
//!
//! Run with: cargo run --release --example quadratic_rate
//! (the full-scale version of this study is the acceptance rate criterion)

use adaptive_functionals::functionals::{PipelineConfig, Problem};
use adaptive_functionals::sim::{
    emit_csv, fit_rate, run_experiment, ExperimentConfig, FunctionConfig, ModelConfig, OutcomeLaw,
};

fn main() -> adaptive_functionals::Result<()> {
    let mut pipeline = PipelineConfig::defaults(1);
    pipeline.c_opt = 0.25;
    pipeline.c_star = std::f64::consts::SQRT_2;
    pipeline.c_dstar = 1.0;

    let config = ExperimentConfig {
        problem: Problem::Quadratic,
        model: ModelConfig {
            a: None,
            b: Some(FunctionConfig::Holder {
                exponent: 0.25,
                radius: 2.0,
                max_level: 9,
                lo: 0.25,
                hi: 0.75,
                seed: 2024,
            }),
            c: None,
            g: FunctionConfig::UniformDensity,
            outcome: OutcomeLaw::Binary,
        },
        pipeline,
        n_grid: vec![500, 1000, 2000, 4000],
        replicates: 50,
        seed: 7070,
    };

    let results = run_experiment(&config)?;
    for s in &results.per_n {
        println!(
            "n = {:>5}: rmse {:.5} over {} replicates (truth {:.5})",
            s.n, s.rmse, s.replicates, s.truth
        );
    }
    let fit = fit_rate(&results.per_n)?;
    println!(
        "log-RMSE slope vs log(n/sqrt(ln n)): {:.3} +- {:.3} (r^2 {:.3})",
        fit.slope, fit.slope_se, fit.r_squared
    );
    println!(
        "squared-error decay exponent: {:.3} (adaptive target 1 at this smoothness)",
        -2.0 * fit.slope
    );

    let out = std::env::temp_dir().join("afe_quadratic_rate.csv");
    emit_csv(&results, &out)?;
    println!("replicate table written to {}", out.display());
    Ok(())
}
