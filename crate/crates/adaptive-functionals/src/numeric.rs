//! Small numeric helpers shared across the crate: compensated summation,
//! Gauss-Legendre quadrature, and a tiny dense-symmetric eigen solver used by
//! the boundary-wavelet construction.

/// Kahan compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    c: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// 8-point Gauss-Legendre nodes and weights on `[-1, 1]`.
pub const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];

pub const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// 8-point Gauss-Legendre on `[a, b]`.
pub fn gl8<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
        acc += weight * f(mid + half * node);
    }
    acc * half
}

/// Composite 8-point Gauss-Legendre over `[a, b]` split into `cells` equal cells.
pub fn gl8_composite<F: FnMut(f64) -> f64>(a: f64, b: f64, cells: usize, mut f: F) -> f64 {
    let step = (b - a) / cells as f64;
    let mut acc = KahanSum::new();
    for i in 0..cells {
        let lo = a + i as f64 * step;
        acc.add(gl8(lo, lo + step, &mut f));
    }
    acc.value()
}

/// Composite tensor Gauss-Legendre over the rectangle `lo[m]..hi[m]` with
/// `cells[m]` cells per axis.
pub fn gl8_composite_nd<F: FnMut(&[f64]) -> f64>(
    lo: &[f64],
    hi: &[f64],
    cells: &[usize],
    mut f: F,
) -> f64 {
    let d = lo.len();
    assert_eq!(hi.len(), d);
    assert_eq!(cells.len(), d);
    let mut idx = vec![0usize; d];
    let mut point = vec![0.0f64; d];
    let mut acc = KahanSum::new();
    let steps: Vec<f64> = (0..d).map(|m| (hi[m] - lo[m]) / cells[m] as f64).collect();
    // iterate over all cells, then all tensor GL nodes within a cell
    'cells: loop {
        let mut node_idx = vec![0usize; d];
        'nodes: loop {
            let mut w = 1.0;
            for m in 0..d {
                let cell_lo = lo[m] + idx[m] as f64 * steps[m];
                let half = 0.5 * steps[m];
                point[m] = cell_lo + half + half * GL8_NODES[node_idx[m]];
                w *= GL8_WEIGHTS[node_idx[m]] * half;
            }
            acc.add(w * f(&point));
            for m in 0..d {
                node_idx[m] += 1;
                if node_idx[m] < 8 {
                    continue 'nodes;
                }
                node_idx[m] = 0;
            }
            break;
        }
        for m in 0..d {
            idx[m] += 1;
            if idx[m] < cells[m] {
                continue 'cells;
            }
            idx[m] = 0;
        }
        break;
    }
    acc.value()
}

/// Centers of the `2^{level*d}` dyadic cells of `[0,1]^d`, in lexicographic order.
pub fn dyadic_centers(level: u32, d: usize) -> Vec<Vec<f64>> {
    let per_axis = 1usize << level;
    let step = 1.0 / per_axis as f64;
    let total = per_axis.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut x = vec![0.0; d];
        for coord in x.iter_mut() {
            *coord = (rem % per_axis) as f64 * step + 0.5 * step;
            rem /= per_axis;
        }
        out.push(x);
    }
    out
}

/// Symmetric Jacobi eigendecomposition of a small dense matrix (row-major,
/// `n x n`). Returns (eigenvalues, eigenvectors as columns).
pub fn sym_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() < 1e-15 * (1.0 + frobenius(&m, n)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| m[i * n + i]).collect();
    (eigenvalues, v)
}

fn frobenius(m: &[f64], n: usize) -> f64 {
    m.iter().take(n * n).map(|x| x * x).sum::<f64>().sqrt()
}

/// Ordinary least squares fit of `y = intercept + slope * x`.
/// Returns (slope, intercept, slope standard error, r_squared).
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let n = x.len();
    if n < 3 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let e = yi - (intercept + slope * xi);
            e * e
        })
        .sum();
    let ss_tot: f64 = y.iter().map(|yi| (yi - my) * (yi - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let se = if n > 2 { (ss_res / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Some((slope, intercept, se, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gl8_integrates_high_degree_polynomials_exactly() {
        // degree 15 is the exactness limit of 8-point Gauss-Legendre
        let val = gl8(0.0, 1.0, |x| x.powi(15));
        assert_abs_diff_eq!(val, 1.0 / 16.0, epsilon = 1e-14);
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3
        let (mut vals, _) = sym_eigen(&[2.0, 1.0, 1.0, 2.0], 2);
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let (slope, intercept, se, r2) = ols(&x, &y).unwrap();
        assert_abs_diff_eq!(slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(se, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-12);
    }
}
