//! The second-order estimator: coefficient-space fast path against the
//! brute-force double sum, and the empirical Hoeffding decomposition.
//!
//! Run with: cargo run --release --example ustat_oracle

use adaptive_functionals::ustat::{
    estimate_phi, estimate_phi_bruteforce, hoeffding_pieces, variance_proxy, InfluenceTriple,
    Observation,
};
use adaptive_functionals::wavelet::WaveletFamily;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> adaptive_functionals::Result<()> {
    let family = WaveletFamily::haar(1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 200;
    let data: Vec<Observation> = (0..n)
        .map(|_| {
            Observation::new(vec![rng.random::<f64>() * 2.0 - 1.0], vec![rng.random::<f64>()])
        })
        .collect::<adaptive_functionals::Result<_>>()?;
    let triple = InfluenceTriple::new(
        |o: &Observation| 0.3 * o.w[0],
        |o: &Observation| (2.0 * o.w[0]).sin(),
        |o: &Observation| (o.w[0] - 0.2).cos(),
        1.5,
    );

    for j in [4u32, 8] {
        let fast = estimate_phi(&data, &triple, &family, j)?;
        let brute = estimate_phi_bruteforce(&data, &triple, &family, j)?;
        println!(
            "j={j}: fast {:.12}, brute {:.12}, relative gap {:.2e}",
            fast.value,
            brute.value,
            ((fast.value - brute.value) / brute.value.abs()).abs()
        );
        println!(
            "      linear {:.6}, pair term {:.6}, variance proxy (C2=1) {:.2e}",
            fast.linear_part,
            fast.quadratic_part,
            variance_proxy(j, 1, n, 1.0)
        );
        let (t1, t2) = hoeffding_pieces(&data, &triple, &family, j)?;
        println!("      hoeffding pieces: T1 {t1:.2e}, T2 {t2:.2e}");
    }
    Ok(())
}
