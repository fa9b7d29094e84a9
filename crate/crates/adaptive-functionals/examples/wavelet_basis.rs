//! Wavelet families on [0,1]: evaluation, projection kernels in both
//! representations, orthonormality/reproduction residuals, and the on-disk
//! table cache.
//!
//! Run with: cargo run --release --example wavelet_basis

use adaptive_functionals::wavelet::{
    diagnostics, save_table_cache, MultiresIndex, WaveletFamily,
};

fn main() -> adaptive_functionals::Result<()> {
    // Haar evaluates in closed form
    let haar = WaveletFamily::haar(1)?;
    let father = MultiresIndex { level: 0, shift: vec![0], types: vec![false] };
    let mother = MultiresIndex { level: 1, shift: vec![0], types: vec![true] };
    println!("haar father(0.3)   = {}", haar.eval_basis(&father, &[0.3])?);
    println!("haar mother_1(0.1) = {:.5}", haar.eval_basis(&mother, &[0.1])?);
    println!(
        "haar kernel j=1: K(0.1, 0.2) = {}, K(0.1, 0.6) = {}",
        haar.kernel_eval(1, &[0.1], &[0.2])?,
        haar.kernel_eval(1, &[0.1], &[0.6])?
    );

    // boundary-corrected family of order 4: the two kernel representations
    // (single scaling level vs father block + mother levels) agree
    let db4 = WaveletFamily::daubechies(4, 1)?;
    let j = db4.base_level() + 2;
    let (x, y) = ([0.312], [0.305]);
    println!(
        "db4 kernel at level {j}: single-level {:.6}, multilevel {:.6}",
        db4.kernel_eval(j, &x, &y)?,
        db4.kernel_eval_multilevel(j, &x, &y)?
    );

    // residuals of the family contracts
    for (name, fam) in [("db2", WaveletFamily::daubechies(2, 1)?), ("db4", db4.clone())] {
        let diag = diagnostics(&fam, 5, 1)?;
        println!(
            "{name}: orthonormality delta {:.2e}, polynomial reproduction {:.2e}",
            diag.orthonormality_delta, diag.polynomial_reproduction_error
        );
    }

    // flat-file cache of the numeric tables
    let path = std::env::temp_dir().join("afe_db4_tables.csv");
    save_table_cache(&db4, &path)?;
    println!("table cache written to {}", path.display());
    Ok(())
}
