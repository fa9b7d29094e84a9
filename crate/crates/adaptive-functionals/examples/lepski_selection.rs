//! The resolution ladder and the data-driven selection rule, with the full
//! audit trace serialized as JSON.
//!
//! Run with: cargo run --release --example lepski_selection

use adaptive_functionals::lepski::{adaptive_estimate, build_grid, GridMode};
use adaptive_functionals::ustat::{InfluenceTriple, Observation};
use adaptive_functionals::wavelet::WaveletFamily;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> adaptive_functionals::Result<()> {
    // the asymptotic ladder is tiny at desk scale; the practical sweep spans
    // 2^{jd} from n to n^2/ln n dyadically
    for mode in [GridMode::PaperFaithful, GridMode::PracticalSpan] {
        let grid = build_grid(10_000, 1, 1.5, mode)?;
        let selectable = grid.entries.len().saturating_sub(grid.s_star);
        println!(
            "{mode:?}: N = {}, s_star = {}, {selectable} selectable entries, j range {}..={}",
            grid.entries.len(),
            grid.s_star,
            grid.entries.first().unwrap().j_used,
            grid.entries.last().unwrap().j_used,
        );
        for e in grid.entries.iter().take(3) {
            println!(
                "  l={} j_l={} k={:.0} beta={:.4} k*={:.1} R={:.3e} j(k*)={}",
                e.l, e.j_l, e.k, e.beta, e.k_star, e.r, e.j_used
            );
        }
    }

    // a full adaptive run on simulated data, trace included
    let family = WaveletFamily::haar(1)?;
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<Observation> = (0..n)
        .map(|_| {
            let x = rng.random::<f64>();
            let y = if rng.random::<f64>() < 0.4 + 0.2 * x { 1.0 } else { 0.0 };
            Observation::new(vec![y], vec![x])
        })
        .collect::<adaptive_functionals::Result<_>>()?;
    let triple = InfluenceTriple::new(
        |o: &Observation| o.w[0],
        |o: &Observation| o.w[0] - 0.5,
        |o: &Observation| o.w[0] - 0.5,
        1.5,
    );
    let grid = build_grid(n, 1, 1.5, GridMode::PracticalSpan)?;
    let (value, trace) = adaptive_estimate(&data, &triple, &family, &grid, 0.25)?;
    println!("selected l = {} with value {value:.6}", trace.selected);
    println!("trace JSON:\n{}", serde_json::to_string_pretty(&trace).unwrap());
    Ok(())
}
