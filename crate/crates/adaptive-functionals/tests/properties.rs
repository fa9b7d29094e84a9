//! Property tests for the exact algebraic contracts.

use adaptive_functionals::supnorm::TruncationMap;
use adaptive_functionals::ustat::{estimate_phi, InfluenceTriple, Observation};
use adaptive_functionals::wavelet::WaveletFamily;
use proptest::prelude::*;

fn small_dataset() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..1.0, -1.0f64..1.0), 5..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimate_is_permutation_invariant(rows in small_dataset(), seed in 0u64..1000, j in 0u32..7) {
        let family = WaveletFamily::haar(1).unwrap();
        let data: Vec<Observation> = rows
            .iter()
            .map(|&(x, w)| Observation::new(vec![w], vec![x]).unwrap())
            .collect();
        let triple = InfluenceTriple::new(
            |o: &Observation| o.w[0],
            |o: &Observation| o.w[0],
            |o: &Observation| 0.5 - o.w[0],
            2.0,
        );
        let base = estimate_phi(&data, &triple, &family, j).unwrap();
        let mut permuted = data.clone();
        // deterministic permutation derived from the seed
        let n = permuted.len();
        for i in (1..n).rev() {
            let pick = (seed as usize).wrapping_mul(2654435761).wrapping_add(i * 40503) % (i + 1);
            permuted.swap(i, pick);
        }
        let shuffled = estimate_phi(&permuted, &triple, &family, j).unwrap();
        prop_assert!(
            (base.value - shuffled.value).abs() <= 1e-12 * (1.0 + base.value.abs()),
            "permutation moved the estimate from {} to {}",
            base.value,
            shuffled.value
        );
    }

    #[test]
    fn rescaling_left_factor_scales_pair_term(rows in small_dataset(), c in -3.0f64..3.0) {
        let family = WaveletFamily::haar(1).unwrap();
        let data: Vec<Observation> = rows
            .iter()
            .map(|&(x, w)| Observation::new(vec![w], vec![x]).unwrap())
            .collect();
        let base = InfluenceTriple::new(|_| 0.0, |o: &Observation| o.w[0], |o: &Observation| o.w[0], 4.0);
        let scaled = InfluenceTriple::new(
            |_| 0.0,
            move |o: &Observation| c * o.w[0],
            |o: &Observation| o.w[0],
            4.0,
        );
        let e0 = estimate_phi(&data, &base, &family, 3).unwrap();
        let e1 = estimate_phi(&data, &scaled, &family, 3).unwrap();
        prop_assert!((e1.quadratic_part - c * e0.quadratic_part).abs() <= 1e-12 * (1.0 + e0.quadratic_part.abs() * c.abs()));
    }

    #[test]
    fn kernel_is_symmetric(x in 0.0f64..1.0, y in 0.0f64..1.0, j in 0u32..8) {
        let family = WaveletFamily::haar(1).unwrap();
        let a = family.kernel_eval(j, &[x], &[y]).unwrap();
        let b = family.kernel_eval(j, &[y], &[x]).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn truncation_contracts_toward_the_identity_zone(h in -10.0f64..10.0, g in 0.5f64..2.0) {
        let map = TruncationMap::density(0.5, 2.0).unwrap();
        let psi = map.apply(h);
        prop_assert!((g - psi).abs() <= (g - h).abs() + 1e-12);
        prop_assert!((map.floor..=map.ceil).contains(&psi));
    }
}
