//! The generic second-order estimator: an empirical linear term minus a
//! symmetrized projection-kernel U-statistic,
//!
//! `phi_hat_{n,j} = (1/n) sum L1(O_i)
//!                 - (1/(n(n-1))) sum_{i1 != i2} S(L2l(O_{i1}) K_{V_j}(X_{i1}, X_{i2}) L2r(O_{i2}))`.
//!
//! Two evaluation paths are provided: a coefficient-space path that
//! accumulates per-basis-slot sums in O(n) kernel work, and a literal
//! brute-force double sum kept as the reference oracle. The symmetrization
//! `S` drops out of the fast path because the kernel's basis form is
//! symmetric in its arguments; the brute-force path applies `S` explicitly so
//! the identity is itself under test.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::wavelet::WaveletFamily;

/// One i.i.d. record `O = (W, X)` with `X` in `[0,1]^d`.
#[derive(Debug, Clone)]
pub struct Observation {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
}

pub type Dataset = Vec<Observation>;

impl Observation {
    pub fn new(w: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        for &v in &w {
            if !v.is_finite() {
                return Err(Error::Contract(format!("non-finite W component {v}")));
            }
        }
        for &c in &x {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Contract(format!("X coordinate {c} outside [0,1]")));
            }
        }
        Ok(Observation { w, x })
    }
}

pub type InfluenceFn = Arc<dyn Fn(&Observation) -> f64 + Send + Sync>;

/// The bounded functions `(L1, L2l, L2r)` defining an estimator sequence,
/// together with the bound `B` they are claimed to satisfy. The bound is
/// validated against the actual data on every estimate call.
#[derive(Clone)]
pub struct InfluenceTriple {
    pub l1: InfluenceFn,
    pub l2l: InfluenceFn,
    pub l2r: InfluenceFn,
    pub bound: f64,
}

impl InfluenceTriple {
    pub fn new<F1, F2, F3>(l1: F1, l2l: F2, l2r: F3, bound: f64) -> Self
    where
        F1: Fn(&Observation) -> f64 + Send + Sync + 'static,
        F2: Fn(&Observation) -> f64 + Send + Sync + 'static,
        F3: Fn(&Observation) -> f64 + Send + Sync + 'static,
    {
        InfluenceTriple {
            l1: Arc::new(l1),
            l2l: Arc::new(l2l),
            l2r: Arc::new(l2r),
            bound,
        }
    }

    /// Validate `max{|L1|, |L2l|, |L2r|} <= B` on every observation.
    pub fn check(&self, data: &[Observation]) -> Result<()> {
        for (i, o) in data.iter().enumerate() {
            for (name, f) in [("L1", &self.l1), ("L2l", &self.l2l), ("L2r", &self.l2r)] {
                let v = f(o);
                if !v.is_finite() || v.abs() > self.bound {
                    return Err(Error::Contract(format!(
                        "{name}(O_{i}) = {v} violates bound B = {}",
                        self.bound
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Value and parts of one second-order estimate at resolution `j`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SecondOrderEstimate {
    pub value: f64,
    pub linear_part: f64,
    pub quadratic_part: f64,
    pub j: u32,
    pub n: usize,
}

fn check_inputs(data: &[Observation], family: &WaveletFamily, j: u32, min_n: usize) -> Result<()> {
    if data.len() < min_n {
        return Err(Error::SampleSize(format!(
            "need at least {min_n} observations, got {}",
            data.len()
        )));
    }
    if j < family.base_level() {
        return Err(Error::Domain(format!(
            "resolution {j} below family base level {}",
            family.base_level()
        )));
    }
    let d = family.dimension();
    for (i, o) in data.iter().enumerate() {
        if o.x.len() != d {
            return Err(Error::Contract(format!(
                "observation {i} has X dimension {}, family expects {d}",
                o.x.len()
            )));
        }
    }
    Ok(())
}

/// Coefficient-space evaluation in O(n) kernel work: for every scaling slot
/// tuple at resolution `j` accumulate `s_a = sum a_i psi(X_i)`,
/// `s_b = sum b_i psi(X_i)`, `diag = sum a_i b_i psi(X_i)^2`; the off-diagonal
/// pair sum is then `s_a s_b - diag` per slot.
pub fn estimate_phi(
    data: &[Observation],
    triple: &InfluenceTriple,
    family: &WaveletFamily,
    j: u32,
) -> Result<SecondOrderEstimate> {
    check_inputs(data, family, j, 2)?;
    triple.check(data)?;
    let n = data.len();
    let d = family.dimension();
    let stride = family.scaling_slot_count(j) as u64;

    struct Acc {
        s_a: KahanSum,
        s_b: KahanSum,
        diag: KahanSum,
    }

    let mut linear = KahanSum::new();
    let mut cells: HashMap<u64, Acc> = HashMap::new();
    let mut slot_buf: Vec<Vec<u32>> = vec![Vec::new(); d];
    let mut combo = vec![0usize; d];
    for o in data {
        linear.add((triple.l1)(o));
        let a = (triple.l2l)(o);
        let b = (triple.l2r)(o);
        for m in 0..d {
            family.slots_containing_scaling(j, o.x[m], &mut slot_buf[m]);
        }
        combo.iter_mut().for_each(|c| *c = 0);
        'outer: loop {
            let mut key = 0u64;
            let mut basis = 1.0;
            for m in 0..d {
                let slot = slot_buf[m][combo[m]];
                key = key * stride + slot as u64;
                basis *= family.eval_slot(j, false, slot, o.x[m]);
            }
            if basis != 0.0 {
                let acc = cells.entry(key).or_insert_with(|| Acc {
                    s_a: KahanSum::new(),
                    s_b: KahanSum::new(),
                    diag: KahanSum::new(),
                });
                acc.s_a.add(a * basis);
                acc.s_b.add(b * basis);
                acc.diag.add(a * b * basis * basis);
            }
            for m in 0..d {
                combo[m] += 1;
                if combo[m] < slot_buf[m].len() {
                    continue 'outer;
                }
                combo[m] = 0;
            }
            break;
        }
    }

    // deterministic reduction: sorted slot order
    let mut keys: Vec<u64> = cells.keys().copied().collect();
    keys.sort_unstable();
    let mut quad = KahanSum::new();
    for key in keys {
        let acc = &cells[&key];
        quad.add(acc.s_a.value() * acc.s_b.value() - acc.diag.value());
    }
    let pairs = (n * (n - 1)) as f64;
    let linear_part = linear.value() / n as f64;
    let quadratic_part = quad.value() / pairs;
    Ok(SecondOrderEstimate {
        value: linear_part - quadratic_part,
        linear_part,
        quadratic_part,
        j,
        n,
    })
}

/// Literal double loop over ordered pairs applying the symmetrization `S`
/// explicitly. Reference implementation for the coefficient-space path.
pub fn estimate_phi_bruteforce(
    data: &[Observation],
    triple: &InfluenceTriple,
    family: &WaveletFamily,
    j: u32,
) -> Result<SecondOrderEstimate> {
    check_inputs(data, family, j, 2)?;
    triple.check(data)?;
    let n = data.len();
    let a: Vec<f64> = data.iter().map(|o| (triple.l2l)(o)).collect();
    let b: Vec<f64> = data.iter().map(|o| (triple.l2r)(o)).collect();
    let mut linear = KahanSum::new();
    for o in data {
        linear.add((triple.l1)(o));
    }
    let mut quad = KahanSum::new();
    for i1 in 0..n {
        for i2 in 0..n {
            if i1 == i2 {
                continue;
            }
            let k12 = family.kernel_eval(j, &data[i1].x, &data[i2].x)?;
            let k21 = family.kernel_eval(j, &data[i2].x, &data[i1].x)?;
            // S(h)(O_{i1}, O_{i2}) = (h(O_{i1},O_{i2}) + h(O_{i2},O_{i1})) / 2
            quad.add(0.5 * (a[i1] * k12 * b[i2] + a[i2] * k21 * b[i1]));
        }
    }
    let pairs = (n * (n - 1)) as f64;
    let linear_part = linear.value() / n as f64;
    let quadratic_part = quad.value() / pairs;
    Ok(SecondOrderEstimate {
        value: linear_part - quadratic_part,
        linear_part,
        quadratic_part,
        j,
        n,
    })
}

/// Empirical Hoeffding decomposition of the centered U-statistic: the linear
/// projection part `T1` and the degenerate remainder `T2`, with conditional
/// expectations replaced by within-sample (plug-in) averages including the
/// diagonal. `T1 + T2` equals the U-statistic minus its plug-in mean.
pub fn hoeffding_pieces(
    data: &[Observation],
    triple: &InfluenceTriple,
    family: &WaveletFamily,
    j: u32,
) -> Result<(f64, f64)> {
    check_inputs(data, family, j, 3)?;
    triple.check(data)?;
    let n = data.len();
    let a: Vec<f64> = data.iter().map(|o| (triple.l2l)(o)).collect();
    let b: Vec<f64> = data.iter().map(|o| (triple.l2r)(o)).collect();
    let mut r = vec![0.0; n * n];
    for i1 in 0..n {
        for i2 in 0..n {
            let k = family.kernel_eval(j, &data[i1].x, &data[i2].x)?;
            r[i1 * n + i2] = 0.5 * (a[i1] * k * b[i2] + a[i2] * k * b[i1]);
        }
    }
    let nf = n as f64;
    let row_mean: Vec<f64> = (0..n)
        .map(|i| {
            let mut acc = KahanSum::new();
            for i2 in 0..n {
                acc.add(r[i * n + i2]);
            }
            acc.value() / nf
        })
        .collect();
    let grand = row_mean.iter().sum::<f64>() / nf;
    let t1 = 2.0 / nf * row_mean.iter().map(|m| m - grand).sum::<f64>();
    let mut t2acc = KahanSum::new();
    for i1 in 0..n {
        for i2 in 0..n {
            if i1 == i2 {
                continue;
            }
            t2acc.add(r[i1 * n + i2] - row_mean[i1] - row_mean[i2] + grand);
        }
    }
    let t2 = t2acc.value() / (nf * (nf - 1.0));
    Ok((t1, t2))
}

/// The Variance Bound proxy `C2 * 2^{jd} / n^2`.
pub fn variance_proxy(j: u32, d: usize, n: usize, c2: f64) -> f64 {
    c2 * 2f64.powi((j as usize * d) as i32) / (n as f64 * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn uniform_data(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Dataset {
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let w = vec![rng.random::<f64>() * 2.0 - 1.0];
                Observation::new(w, x).unwrap()
            })
            .collect()
    }

    fn random_triple(rng: &mut ChaCha8Rng) -> InfluenceTriple {
        let (c1, c2, c3) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
        InfluenceTriple::new(
            move |o: &Observation| c1 * o.w[0],
            move |o: &Observation| (c2 * o.w[0]).sin(),
            move |o: &Observation| (c3 + o.w[0]).cos(),
            2.0,
        )
    }

    #[test]
    fn zero_triple_gives_zero() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = uniform_data(10, 1, &mut rng);
        let triple = InfluenceTriple::new(|_| 0.0, |_| 0.0, |o: &Observation| o.w[0], 1.0);
        let est = estimate_phi(&data, &triple, &family, 3).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn single_pair_haar_closed_form() {
        // n = 2, Haar d=1 j=1, X = 0.1 and 0.2: quadratic part is K(0.1, 0.2) = 2
        let family = WaveletFamily::haar(1).unwrap();
        let data = vec![
            Observation::new(vec![0.0], vec![0.1]).unwrap(),
            Observation::new(vec![0.0], vec![0.2]).unwrap(),
        ];
        let triple = InfluenceTriple::new(|_| 0.0, |_| 1.0, |_| 1.0, 1.0);
        let est = estimate_phi(&data, &triple, &family, 1).unwrap();
        assert_abs_diff_eq!(est.quadratic_part, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.value, -2.0, epsilon = 1e-12);
        let brute = estimate_phi_bruteforce(&data, &triple, &family, 1).unwrap();
        assert_abs_diff_eq!(brute.value, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_equivalence_haar_random_instances() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..10 {
            let n = 20 + 10 * trial;
            let data = uniform_data(n, 1, &mut rng);
            let triple = random_triple(&mut rng);
            let j = 2 + (trial % 5) as u32;
            let fast = estimate_phi(&data, &triple, &family, j).unwrap();
            let brute = estimate_phi_bruteforce(&data, &triple, &family, j).unwrap();
            let scale = brute.value.abs().max(1e-8);
            assert!(
                ((fast.value - brute.value) / scale).abs() < 1e-10,
                "trial {trial}: fast {} vs brute {}",
                fast.value,
                brute.value
            );
        }
    }

    #[test]
    fn swapping_observations_preserves_symmetric_quadratic() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut data = vec![
            Observation::new(vec![0.3], vec![0.12]).unwrap(),
            Observation::new(vec![-0.8], vec![0.17]).unwrap(),
        ];
        let triple = InfluenceTriple::new(|_| 0.0, |o: &Observation| o.w[0], |o: &Observation| o.w[0], 1.0);
        let before = estimate_phi_bruteforce(&data, &triple, &family, 2).unwrap();
        data.swap(0, 1);
        let after = estimate_phi_bruteforce(&data, &triple, &family, 2).unwrap();
        assert_abs_diff_eq!(before.quadratic_part, after.quadratic_part, epsilon = 1e-14);
    }

    #[test]
    fn bound_violation_names_offending_index() {
        let family = WaveletFamily::haar(1).unwrap();
        let data = vec![
            Observation::new(vec![0.1], vec![0.3]).unwrap(),
            Observation::new(vec![5.0], vec![0.6]).unwrap(),
        ];
        let triple = InfluenceTriple::new(|o: &Observation| o.w[0], |_| 0.0, |_| 0.0, 1.0);
        let err = estimate_phi(&data, &triple, &family, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("O_1"), "message should name the observation: {msg}");
    }

    #[test]
    fn too_small_sample_errors() {
        let family = WaveletFamily::haar(1).unwrap();
        let data = vec![Observation::new(vec![0.0], vec![0.5]).unwrap()];
        let triple = InfluenceTriple::new(|_| 0.0, |_| 0.0, |_| 0.0, 1.0);
        assert!(matches!(
            estimate_phi(&data, &triple, &family, 1),
            Err(Error::SampleSize(_))
        ));
    }

    #[test]
    fn scaling_contract_in_l2l_is_exact() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = uniform_data(40, 1, &mut rng);
        let base = InfluenceTriple::new(|_| 0.0, |o: &Observation| o.w[0], |_| 1.0, 2.0);
        let scaled = InfluenceTriple::new(|_| 0.0, |o: &Observation| 0.25 * o.w[0], |_| 1.0, 2.0);
        let e1 = estimate_phi(&data, &base, &family, 4).unwrap();
        let e2 = estimate_phi(&data, &scaled, &family, 4).unwrap();
        assert_abs_diff_eq!(e2.quadratic_part, 0.25 * e1.quadratic_part, epsilon = 1e-13);
    }

    #[test]
    fn hoeffding_reconstruction_identity() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [3usize, 7, 25] {
            let data = uniform_data(n, 1, &mut rng);
            let triple = random_triple(&mut rng);
            let (t1, t2) = hoeffding_pieces(&data, &triple, &family, 3).unwrap();
            // T1 + T2 = U - plug-in mean of the kernel (V-statistic mean)
            let est = estimate_phi_bruteforce(&data, &triple, &family, 3).unwrap();
            let a: Vec<f64> = data.iter().map(|o| (triple.l2l)(o)).collect();
            let b: Vec<f64> = data.iter().map(|o| (triple.l2r)(o)).collect();
            let mut vmean = KahanSum::new();
            for i1 in 0..n {
                for i2 in 0..n {
                    let k = family.kernel_eval(3, &data[i1].x, &data[i2].x).unwrap();
                    vmean.add(0.5 * (a[i1] * k * b[i2] + a[i2] * k * b[i1]));
                }
            }
            let vmean = vmean.value() / (n * n) as f64;
            assert_abs_diff_eq!(t1 + t2, est.quadratic_part - vmean, epsilon = 1e-12);
        }
    }

    #[test]
    fn hoeffding_needs_three() {
        let family = WaveletFamily::haar(1).unwrap();
        let data = vec![
            Observation::new(vec![0.0], vec![0.1]).unwrap(),
            Observation::new(vec![0.0], vec![0.9]).unwrap(),
        ];
        let triple = InfluenceTriple::new(|_| 0.0, |_| 1.0, |_| 1.0, 1.0);
        assert!(hoeffding_pieces(&data, &triple, &family, 1).is_err());
    }

    #[test]
    fn variance_proxy_arithmetic() {
        // 2^{jd} = n^2 with C2 = 1 gives exactly 1
        assert_abs_diff_eq!(variance_proxy(4, 1, 4, 1.0), 1.0, epsilon = 1e-15);
        // n = 100, 2^{jd} = 100 is impossible dyadically; use 2^7 = 128 scaled
        assert_abs_diff_eq!(variance_proxy(7, 1, 100, 1.0), 128.0 / 1e4, epsilon = 1e-15);
        // doubling n quarters the proxy
        let r = variance_proxy(6, 1, 50, 2.5) / variance_proxy(6, 1, 100, 2.5);
        assert_abs_diff_eq!(r, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_under_identical_input() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let data = uniform_data(120, 1, &mut rng);
        let triple = random_triple(&mut rng);
        let e1 = estimate_phi(&data, &triple, &family, 8).unwrap();
        let e2 = estimate_phi(&data, &triple, &family, 8).unwrap();
        assert_eq!(e1.value.to_bits(), e2.value.to_bits());
    }
}
