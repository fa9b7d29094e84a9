//! One-time numerical construction of the tabulated boundary-corrected
//! Daubechies-type families: cascade tables for the base pair, then edge
//! scaling functions (orthonormalized truncated translates) and boundary
//! mother functions (nullspace of the refinement constraints) per side.
//!
//! All inner products are taken on a half-line grid at twice the table
//! resolution; products of the piecewise-linear interpolants are integrated
//! exactly (Simpson per cell), so the only error source is the interpolation
//! of the base tables themselves.

use crate::error::{Error, Result};
use crate::numeric::{sym_eigen, KahanSum};

/// Dyadic table step exponent: tables are sampled at 2^-14.
pub const TABLE_RES_LOG2: u32 = 14;

/// Orthonormal Daubechies low-pass filters with `order` vanishing moments,
/// normalized so the coefficients sum to sqrt(2).
#[allow(clippy::excessive_precision)]
pub fn daubechies_filter(order: u32) -> Result<Vec<f64>> {
    let h: &[f64] = match order {
        2 => &[
            0.482_962_913_144_534_143_4,
            0.836_516_303_737_807_905_6,
            0.224_143_868_042_013_381,
            -0.129_409_522_551_260_381_2,
        ],
        3 => &[
            0.332_670_552_950_082_616,
            0.806_891_509_311_092_576_5,
            0.459_877_502_118_491_57,
            -0.135_011_020_010_254_588_7,
            -0.085_441_273_882_026_661_69,
            0.035_226_291_885_709_536_6,
        ],
        4 => &[
            0.230_377_813_308_896_500_9,
            0.714_846_570_552_915_647,
            0.630_880_767_929_858_907_9,
            -0.027_983_769_416_859_854_2,
            -0.187_034_811_719_093_084_1,
            0.030_841_381_835_560_763_63,
            0.032_883_011_666_885_199_74,
            -0.010_597_401_785_069_032_1,
        ],
        _ => {
            return Err(Error::Parameter(format!(
                "tabulated families support orders 2..=4 (edge Gram conditioning \
                 exceeds f64 precision beyond that); got {order}"
            )))
        }
    };
    Ok(h.to_vec())
}

/// Tables of the full boundary-corrected system at unit scale.
#[derive(Debug)]
pub struct FamilyTables {
    /// Table step (2^-TABLE_RES_LOG2).
    pub step: f64,
    /// Base scaling function on `[0, 2S-1]`.
    pub phi: Vec<f64>,
    /// Base mother wavelet on `[0, 2S-1]`.
    pub psi: Vec<f64>,
    /// Left edge scaling functions, each on `[0, 2S-2]`.
    pub left_edge: Vec<Vec<f64>>,
    /// Right edge scaling functions on `[0, 2S-2]` in reflected coordinates
    /// (argument `2^l (1 - x)`).
    pub right_edge: Vec<Vec<f64>>,
    /// Left boundary mothers, each on `[0, (4S-3)/2]`.
    pub left_mother: Vec<Vec<f64>>,
    /// Right boundary mothers in reflected coordinates.
    pub right_mother: Vec<Vec<f64>>,
}

impl FamilyTables {
    pub fn support_len(&self) -> f64 {
        (self.phi.len() - 1) as f64 * self.step
    }
}

/// Linear interpolation of a table on `[0, (len-1)*step]`, zero outside.
#[inline]
pub fn interp_table(table: &[f64], step: f64, x: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let pos = x / step;
    let hi = (table.len() - 1) as f64;
    if pos > hi {
        return 0.0;
    }
    let i = pos.floor() as usize;
    if i + 1 >= table.len() {
        return table[table.len() - 1];
    }
    let fr = pos - i as f64;
    table[i] * (1.0 - fr) + table[i + 1] * fr
}

/// Cascade: exact dyadic refinement of phi from its integer-point values.
fn cascade(h: &[f64], res_log2: u32) -> Result<Vec<f64>> {
    let taps = h.len();
    let sup = taps - 1; // support [0, 2S-1]
    let sqrt2 = std::f64::consts::SQRT_2;

    // phi at integers: fixed point of phi(i) = sqrt(2) sum_k h_k phi(2i - k),
    // found by power iteration (the transition matrix has spectrum 1, 1/2, ...).
    let n_int = sup + 1;
    let mut v = vec![1.0 / n_int as f64; n_int];
    for _ in 0..200 {
        let mut next = vec![0.0; n_int];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &hk) in h.iter().enumerate() {
                let m = 2 * i as i64 - k as i64;
                if m >= 0 && (m as usize) < n_int {
                    acc += sqrt2 * hk * v[m as usize];
                }
            }
            *slot = acc;
        }
        let total: f64 = next.iter().sum();
        if total.abs() < 1e-300 {
            return Err(Error::Construction("cascade fixed point degenerated".into()));
        }
        for x in next.iter_mut() {
            *x /= total;
        }
        v = next;
    }

    let n = sup << res_log2;
    let mut vals = vec![0.0f64; n + 1];
    for (i, &vi) in v.iter().enumerate() {
        vals[i << res_log2] = vi;
    }
    // fill odd multiples of 2^-level from the previous level
    for level in 1..=res_log2 {
        let step_idx = 1usize << (res_log2 - level);
        let prev_idx = step_idx << 1;
        let mut i = step_idx;
        while i <= n {
            if !i.is_multiple_of(prev_idx) {
                // t = i * 2^-res; phi(t) = sqrt(2) sum h_k phi(2t - k)
                let mut acc = 0.0;
                for (k, &hk) in h.iter().enumerate() {
                    let src = 2 * i as i64 - ((k as i64) << res_log2);
                    if src >= 0 && src <= n as i64 {
                        acc += sqrt2 * hk * vals[src as usize];
                    }
                }
                vals[i] = acc;
            }
            i += step_idx;
        }
    }
    Ok(vals)
}

fn psi_from_phi(h: &[f64], phi: &[f64], res_log2: u32) -> Vec<f64> {
    let taps = h.len();
    let sup = taps - 1;
    let sqrt2 = std::f64::consts::SQRT_2;
    let g: Vec<f64> = (0..taps).map(|k| if k % 2 == 0 { h[taps - 1 - k] } else { -h[taps - 1 - k] }).collect();
    let n = sup << res_log2;
    let mut psi = vec![0.0f64; n + 1];
    for (i, slot) in psi.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &gk) in g.iter().enumerate() {
            // psi(t) = sqrt(2) sum g_k phi(2t - k); 2t - k lands on the table grid
            let src = 2 * i as i64 - ((k as i64) << res_log2);
            if src >= 0 && src <= n as i64 {
                acc += sqrt2 * gk * phi[src as usize];
            }
        }
        *slot = acc;
    }
    psi
}

/// A function sampled on the half-line fine grid (step 2^-(res+1)), linear
/// between knots, zero outside `[lo_idx*step, (lo_idx+len-1)*step]`.
#[derive(Clone)]
struct Sampled {
    lo_idx: i64,
    vals: Vec<f64>,
}

impl Sampled {
    fn hi_idx(&self) -> i64 {
        self.lo_idx + self.vals.len() as i64 - 1
    }
}

struct FineGrid {
    /// fine step = 2^-(res_log2+1)
    step: f64,
    res_log2: u32,
}

impl FineGrid {
    /// Sample `table(u - shift)` truncated to `u >= 0` on the fine grid.
    /// `shift` is an integer, so table knots land on even fine indices and odd
    /// indices are interpolation midpoints.
    fn translate(&self, table: &[f64], shift: i64) -> Sampled {
        let sup_int = (table.len() - 1) as i64 >> self.res_log2;
        let lo_fine = shift.max(0) << (self.res_log2 + 1);
        let hi_fine = ((shift + sup_int) << (self.res_log2 + 1)).max(lo_fine);
        let n = (hi_fine - lo_fine) as usize + 1;
        let mut vals = vec![0.0; n];
        for (i, v) in vals.iter_mut().enumerate() {
            let u = (lo_fine + i as i64) as f64 * self.step;
            *v = interp_table(table, 2.0 * self.step, u - shift as f64);
        }
        Sampled { lo_idx: lo_fine, vals }
    }

    /// Sample `sqrt(2) * table(2u - k)` truncated to `u >= 0`: the child at
    /// half scale. Its knots coincide with the fine grid exactly.
    fn child(&self, table: &[f64], k: i64) -> Sampled {
        let sqrt2 = std::f64::consts::SQRT_2;
        let sup_idx_coarse = (table.len() - 1) as i64 >> self.res_log2;
        // support in u: [k/2, (k + sup)/2]; fine index = u / step = u * 2^(res+1)
        let lo_fine = k.max(0) << self.res_log2;
        let hi_fine = (k + sup_idx_coarse) << self.res_log2;
        let n = (hi_fine - lo_fine).max(0) as usize + 1;
        let mut vals = vec![0.0; n];
        for (i, v) in vals.iter_mut().enumerate() {
            let u = (lo_fine + i as i64) as f64 * self.step;
            *v = sqrt2 * interp_table(table, 2.0 * self.step, 2.0 * u - k as f64);
        }
        Sampled { lo_idx: lo_fine, vals }
    }

    fn combine(&self, coefs: &[f64], parts: &[Sampled]) -> Sampled {
        let lo = parts.iter().map(|p| p.lo_idx).min().unwrap();
        let hi = parts.iter().map(|p| p.hi_idx()).max().unwrap();
        let mut vals = vec![0.0; (hi - lo) as usize + 1];
        for (c, p) in coefs.iter().zip(parts) {
            for (i, v) in p.vals.iter().enumerate() {
                vals[(p.lo_idx - lo) as usize + i] += c * v;
            }
        }
        Sampled { lo_idx: lo, vals }
    }

    /// Exact integral of the product of two piecewise-linear interpolants on
    /// the shared fine grid (Simpson per cell is exact for quadratics).
    fn ip(&self, a: &Sampled, b: &Sampled) -> f64 {
        let lo = a.lo_idx.max(b.lo_idx);
        let hi = a.hi_idx().min(b.hi_idx());
        if hi <= lo {
            return 0.0;
        }
        let mut acc = KahanSum::new();
        for idx in lo..hi {
            let f0 = a.vals[(idx - a.lo_idx) as usize];
            let f1 = a.vals[(idx + 1 - a.lo_idx) as usize];
            let g0 = b.vals[(idx - b.lo_idx) as usize];
            let g1 = b.vals[(idx + 1 - b.lo_idx) as usize];
            acc.add(f0 * g0 + (f0 + f1) * (g0 + g1) + f1 * g1);
        }
        acc.value() * self.step / 6.0
    }
}

/// Exact integral of the squared piecewise-linear interpolant of a table.
fn table_norm_sq(table: &[f64], step: f64) -> f64 {
    let mut acc = KahanSum::new();
    for i in 0..table.len() - 1 {
        let f0 = table[i];
        let f1 = table[i + 1];
        acc.add(f0 * f0 + (f0 + f1) * (f0 + f1) + f1 * f1);
    }
    acc.value() * step / 6.0
}

/// Rescale a tabulated function to unit L2 norm as a coarse interpolant.
/// The construction normalizes on a finer grid; the stored table is what the
/// family actually evaluates, so its own norm is the one that must be 1.
fn renormalize(table: &mut [f64], step: f64) {
    let norm = table_norm_sq(table, step).sqrt();
    if norm > 0.0 {
        for v in table.iter_mut() {
            *v /= norm;
        }
    }
}

/// Loewdin orthonormalization: G^(-1/2) for a symmetric positive definite
/// Gram matrix (row-major n x n).
fn inverse_sqrt(g: &[f64], n: usize) -> Result<Vec<f64>> {
    let (vals, vecs) = sym_eigen(g, n);
    let max = vals.iter().cloned().fold(f64::MIN, f64::max);
    let mut out = vec![0.0; n * n];
    for (idx, &lam) in vals.iter().enumerate() {
        if lam <= 1e-14 * max.max(1.0) {
            return Err(Error::Construction(format!(
                "Gram matrix numerically singular (eigenvalue {lam:.3e})"
            )));
        }
        let scale = 1.0 / lam.sqrt();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] += scale * vecs[i * n + idx] * vecs[j * n + idx];
            }
        }
    }
    Ok(out)
}

type SideTables = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Edge construction for one side. `phi`/`psi` are the base tables (already
/// reflected for the right side). Returns (edge scaling tables, boundary
/// mother tables) at the coarse table step.
fn build_side(phi: &[f64], psi: &[f64], order: u32, res_log2: u32) -> Result<SideTables> {
    let s = order as i64;
    let e = (2 * s - 2) as usize; // truncated translates per side
    let grid = FineGrid { step: 0.5f64.powi(res_log2 as i32 + 1), res_log2 };
    let coarse_step = 0.5f64.powi(res_log2 as i32);

    // ---- edge scaling functions ----
    let trunc: Vec<Sampled> = (-(e as i64)..0).map(|k| grid.translate(phi, k)).collect();
    let mut gram = vec![0.0; e * e];
    for i in 0..e {
        for j in i..e {
            let v = grid.ip(&trunc[i], &trunc[j]);
            gram[i * e + j] = v;
            gram[j * e + i] = v;
        }
    }
    let a = inverse_sqrt(&gram, e)?;

    // tabulate each edge function on [0, 2S-2] at the coarse step
    let edge_len = e << res_log2;
    let mut edge_tables = Vec::with_capacity(e);
    for i in 0..e {
        let mut tab = vec![0.0; edge_len + 1];
        for (idx, slot) in tab.iter_mut().enumerate() {
            let u = idx as f64 * coarse_step;
            let mut acc = 0.0;
            for (j, k) in (-(e as i64)..0).enumerate() {
                acc += a[i * e + j] * interp_table(phi, coarse_step, u - k as f64);
            }
            *slot = acc;
        }
        renormalize(&mut tab, coarse_step);
        edge_tables.push(tab);
    }

    // ---- boundary mothers ----
    // children at half scale, k = -E..=W with W = 2S-2
    let w_max = 2 * s - 2;
    let child_ks: Vec<i64> = (-(e as i64)..=w_max).collect();
    let children: Vec<Sampled> = child_ks.iter().map(|&k| grid.child(phi, k)).collect();
    let nb = children.len();

    // constraints: edge scalings, parent scalings, parent interior mothers
    let span_end = (w_max + 2 * s - 1) as f64 / 2.0;
    let n_parent = span_end.ceil() as i64 + 1;
    let mut constraints: Vec<Sampled> = Vec::new();
    for i in 0..e {
        let parts = trunc.clone();
        let coefs: Vec<f64> = (0..e).map(|j| a[i * e + j]).collect();
        constraints.push(grid.combine(&coefs, &parts));
    }
    for m in 0..n_parent {
        constraints.push(grid.translate(phi, m));
    }
    for m in 0..n_parent {
        constraints.push(grid.translate(psi, m));
    }

    let rows = constraints.len();
    let mut cmat = vec![0.0; rows * nb];
    for (r, c) in constraints.iter().enumerate() {
        for (j, ch) in children.iter().enumerate() {
            cmat[r * nb + j] = grid.ip(c, ch);
        }
    }
    // nullspace of C within the child span via eigenvectors of C^T C
    let mut ctc = vec![0.0; nb * nb];
    for i in 0..nb {
        for j in 0..nb {
            let mut acc = 0.0;
            for r in 0..rows {
                acc += cmat[r * nb + i] * cmat[r * nb + j];
            }
            ctc[i * nb + j] = acc;
        }
    }
    let (vals, vecs) = sym_eigen(&ctc, nb);
    let max = vals.iter().cloned().fold(1.0f64, f64::max);
    let mut null: Vec<Vec<f64>> = Vec::new();
    for (idx, &lam) in vals.iter().enumerate() {
        if lam < 1e-10 * max {
            null.push((0..nb).map(|i| vecs[i * nb + idx]).collect());
        }
    }
    let expected = (s - 1) as usize;
    if null.len() != expected {
        return Err(Error::Construction(format!(
            "boundary mother nullspace has dimension {} (expected {expected})",
            null.len()
        )));
    }

    // orthonormalize the nullspace vectors in function space
    let mut child_gram = vec![0.0; nb * nb];
    for i in 0..nb {
        for j in i..nb {
            let v = grid.ip(&children[i], &children[j]);
            child_gram[i * nb + j] = v;
            child_gram[j * nb + i] = v;
        }
    }
    let k = null.len();
    let mut small = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let mut acc = 0.0;
            for p in 0..nb {
                for q in 0..nb {
                    acc += null[i][p] * child_gram[p * nb + q] * null[j][q];
                }
            }
            small[i * k + j] = acc;
        }
    }
    let fix = inverse_sqrt(&small, k)?;
    let mut mother_coefs = vec![vec![0.0; nb]; k];
    for i in 0..k {
        for j in 0..k {
            for p in 0..nb {
                mother_coefs[i][p] += fix[i * k + j] * null[j][p];
            }
        }
    }

    // tabulate boundary mothers on [0, (4S-3)/2] at the coarse step
    let sup_num = (4 * s - 3) as usize; // support end = sup_num / 2
    let mot_len = sup_num << (res_log2 - 1);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut mother_tables = Vec::with_capacity(k);
    for coefs in &mother_coefs {
        let mut tab = vec![0.0; mot_len + 1];
        for (idx, slot) in tab.iter_mut().enumerate() {
            let u = idx as f64 * coarse_step;
            let mut acc = 0.0;
            for (j, &kk) in child_ks.iter().enumerate() {
                if u >= 0.0 {
                    acc += coefs[j] * sqrt2 * interp_table(phi, coarse_step, 2.0 * u - kk as f64);
                }
            }
            *slot = acc;
        }
        renormalize(&mut tab, coarse_step);
        mother_tables.push(tab);
    }

    Ok((edge_tables, mother_tables))
}

/// Build the full table set for a boundary-corrected family of the given order.
pub fn build_tables(order: u32, res_log2: u32) -> Result<FamilyTables> {
    let h = daubechies_filter(order)?;
    let phi = cascade(&h, res_log2)?;
    let psi = psi_from_phi(&h, &phi, res_log2);
    let phi_rev: Vec<f64> = phi.iter().rev().cloned().collect();
    let psi_rev: Vec<f64> = psi.iter().rev().cloned().collect();

    let (left_edge, left_mother) = build_side(&phi, &psi, order, res_log2)?;
    let (right_edge, right_mother) = build_side(&phi_rev, &psi_rev, order, res_log2)?;

    Ok(FamilyTables {
        step: 0.5f64.powi(res_log2 as i32),
        phi,
        psi,
        left_edge,
        right_edge,
        left_mother,
        right_mother,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn filters_are_orthonormal() {
        for order in 2..=4 {
            let h = daubechies_filter(order).unwrap();
            let sum: f64 = h.iter().sum();
            assert_abs_diff_eq!(sum, std::f64::consts::SQRT_2, epsilon = 1e-12);
            for m in 0..order as usize {
                let acc: f64 = (0..h.len())
                    .filter(|&k| k + 2 * m < h.len())
                    .map(|k| h[k] * h[k + 2 * m])
                    .sum();
                let expect = if m == 0 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(acc, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cascade_tables_integrate_correctly() {
        // int phi = 1 and int phi^2 = 1 for an orthonormal scaling function
        let h = daubechies_filter(3).unwrap();
        let phi = cascade(&h, 10).unwrap();
        let step = 0.5f64.powi(10);
        let mass: f64 = trapezoid(&phi, step);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-5);
        let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
        assert_abs_diff_eq!(trapezoid(&sq, step), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn psi_moments_vanish() {
        let h = daubechies_filter(4).unwrap();
        let phi = cascade(&h, 12).unwrap();
        let psi = psi_from_phi(&h, &phi, 12);
        let step = 0.5f64.powi(12);
        for deg in 0..4 {
            let weighted: Vec<f64> = psi
                .iter()
                .enumerate()
                .map(|(i, v)| v * (i as f64 * step).powi(deg))
                .collect();
            assert_abs_diff_eq!(trapezoid(&weighted, step), 0.0, epsilon = 2e-4);
        }
    }

    fn trapezoid(vals: &[f64], step: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..vals.len() - 1 {
            acc += 0.5 * (vals[i] + vals[i + 1]) * step;
        }
        acc
    }
}
