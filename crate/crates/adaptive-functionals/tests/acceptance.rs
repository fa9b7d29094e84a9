//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured quantity next to its threshold.

use adaptive_functionals::function::FunctionRep;
use adaptive_functionals::functionals::{
    quadratic_triple, run_pipeline, PipelineConfig, Problem, SplitPlan,
};
use adaptive_functionals::lepski::{build_grid, candidate_estimates, select_l, GridMode};
use adaptive_functionals::lowerbound::{
    build_priors, chi2_bound, chi2_mixture_bruteforce, compute_ingredients, constrained_risk_rhs,
    functional_separation, sample_from_prior, BumpFunction, RiskBoundInputs,
};
use adaptive_functionals::sim::{
    fit_rate, generate_dataset, run_experiment, sample_holder_function, substream_seed, Bounds,
    DesignSampler, ExperimentConfig, FunctionConfig, HolderTarget, ModelConfig, ModelSpec,
    OutcomeLaw,
};
use adaptive_functionals::supnorm::{
    density_adaptive, regression_adaptive, sup_distance, ResolutionWindow,
};
use adaptive_functionals::ustat::{
    estimate_phi, estimate_phi_bruteforce, InfluenceTriple, Observation,
};
use adaptive_functionals::wavelet::{diagnostics, holder_coeff_norm, WaveletFamily};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const C_OPT: f64 = 0.25;
const C_STAR: f64 = std::f64::consts::SQRT_2;
const C_DSTAR: f64 = 1.0;

fn pipeline_defaults() -> PipelineConfig {
    let mut cfg = PipelineConfig::defaults(1);
    cfg.c_opt = C_OPT;
    cfg.c_star = C_STAR;
    cfg.c_dstar = C_DSTAR;
    cfg
}

fn report(criterion: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {criterion}: {detail}");
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn criterion_1_wavelet_correctness() {
    // orthonormality and polynomial reproduction within 1e-6 up to level 5,
    // d in {1, 2}; Haar kernel matches its closed form exactly
    let mut worst_orth = 0.0f64;
    let mut worst_poly = 0.0f64;
    for order in [2u32, 4] {
        for d in [1usize, 2] {
            let fam = WaveletFamily::daubechies(order, d).unwrap();
            let diag = diagnostics(&fam, 5, 1000 + order as u64 + d as u64).unwrap();
            worst_orth = worst_orth.max(diag.orthonormality_delta);
            worst_poly = worst_poly.max(diag.polynomial_reproduction_error);
        }
    }
    let mut haar_err = 0.0f64;
    for d in [1usize, 2] {
        let fam = WaveletFamily::haar(d).unwrap();
        let diag = diagnostics(&fam, 5, 2000 + d as u64).unwrap();
        haar_err = haar_err.max(diag.haar_closed_form_error.unwrap());
    }
    report(
        "criterion 1 (wavelet correctness)",
        worst_orth < 1e-6 && worst_poly < 1e-6 && haar_err == 0.0,
        &format!(
            "orthonormality delta {worst_orth:.2e} < 1e-6, reproduction {worst_poly:.2e} < 1e-6, haar closed form {haar_err:.1e} == 0"
        ),
    );
}

#[test]
fn criterion_2_ustat_oracle_equivalence() {
    // coefficient-space estimator equals the brute-force double sum to
    // relative 1e-10 on 50 random instances with n <= 300
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst = 0.0f64;
    let cases: Vec<(WaveletFamily, usize)> = vec![
        (WaveletFamily::haar(1).unwrap(), 20),
        (WaveletFamily::haar(2).unwrap(), 10),
        (WaveletFamily::daubechies(4, 1).unwrap(), 10),
        (WaveletFamily::daubechies(2, 2).unwrap(), 10),
    ];
    for (family, n_cases) in &cases {
        let d = family.dimension();
        for _ in 0..*n_cases {
            let n = rng.random_range(20..=300);
            let data: Vec<Observation> = (0..n)
                .map(|_| {
                    let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                    Observation::new(vec![rng.random::<f64>() * 2.0 - 1.0], x).unwrap()
                })
                .collect();
            let (c1, c2) = (rng.random::<f64>(), rng.random::<f64>());
            let triple = InfluenceTriple::new(
                move |o: &Observation| c1 * o.w[0],
                move |o: &Observation| (c2 * 3.0 * o.w[0]).sin(),
                move |o: &Observation| (o.w[0] - c1).cos(),
                2.0,
            );
            let j = family.base_level() + rng.random_range(0..=(6 / d as u32));
            let fast = estimate_phi(&data, &triple, family, j).unwrap();
            let brute = estimate_phi_bruteforce(&data, &triple, family, j).unwrap();
            let rel = (fast.value - brute.value).abs() / brute.value.abs().max(1e-8);
            worst = worst.max(rel);
        }
    }
    report(
        "criterion 2 (U-statistic oracle equivalence)",
        worst < 1e-10,
        &format!("worst relative gap {worst:.2e} < 1e-10 over 50 instances"),
    );
}

#[test]
fn criterion_3_lepski_formula_fidelity() {
    // grid algebra at n = 10^4, c = 1.5
    let grid = build_grid(10_000, 1, 1.5, GridMode::PaperFaithful).unwrap();
    let n_ok = grid.entries.len() == 3;
    let mut back_ok = true;
    for mode in [GridMode::PaperFaithful, GridMode::PracticalSpan] {
        let g = build_grid(10_000, 1, 1.5, mode).unwrap();
        for e in &g.entries {
            let k_back = 10_000f64.powf(2.0 / (1.0 + 4.0 * e.beta));
            back_ok &= ((e.k - k_back) / e.k).abs() <= 1e-12;
        }
    }
    let k_star = adaptive_functionals::lepski::k_star_for_beta(10_000, 1, 0.25);
    let k_star_ok =
        (k_star - (1e8 / 10_000f64.ln()).sqrt()).abs() < 1e-9 && (k_star - 3295.0).abs() < 0.5;

    // selection agrees with an independent definition-chasing scan on 100
    // randomized candidate sets
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let grid2 = build_grid(5000, 1, 1.5, GridMode::PracticalSpan).unwrap();
    let big_n = grid2.entries.len();
    let mut select_ok = true;
    for _ in 0..100 {
        let mut estimates = std::collections::BTreeMap::new();
        for l in grid2.s_star..big_n {
            estimates.insert(l, rng.random::<f64>() * 0.05 - 0.025);
        }
        let c_opt = 0.1 + rng.random::<f64>() * 2.0;
        let (l_hat, _) = select_l(&estimates, &grid2, c_opt).unwrap();
        let mut oracle = big_n - 1;
        'outer: for l in grid2.s_star..big_n {
            for lp in l..big_n {
                let diff = estimates[&l] - estimates[&lp];
                if diff * diff > c_opt * c_opt * grid2.entries[lp].r * 5000f64.ln() {
                    continue 'outer;
                }
            }
            oracle = l;
            break;
        }
        select_ok &= l_hat == oracle;
    }
    report(
        "criterion 3 (Lepski formula fidelity)",
        n_ok && back_ok && k_star_ok && select_ok,
        &format!(
            "N = {} (want 3), back-substitution <= 1e-12: {back_ok}, k_* = {k_star:.1} (want ~3295.0), selector matches scan oracle on 100 sets: {select_ok}",
            grid.entries.len()
        ),
    );
}

fn rate_experiment_config() -> ExperimentConfig {
    let mut pipeline = pipeline_defaults();
    pipeline.shuffle_seed = None;
    ExperimentConfig {
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
        n_grid: vec![500, 1000, 2000, 4000, 8000],
        replicates: 200,
        seed: 7070,
    }
}

#[test]
fn criterion_4_rate_recovery() {
    // quadratic functional, beta = 1/4, g = 1: the mean-squared-error decay
    // exponent against n/sqrt(ln n) recovers the target 1 within 0.15
    // (equivalently the fitted log-RMSE slope is half of that)
    let config = rate_experiment_config();
    let results = run_experiment(&config).unwrap();
    let fit = fit_rate(&results.per_n).unwrap();
    let mse_slope = 2.0 * fit.slope;
    report(
        "criterion 4 (rate recovery)",
        (-1.15..=-0.85).contains(&mse_slope) && results.failures.is_empty(),
        &format!(
            "MSE-scale slope {mse_slope:.3} in [-1.15, -0.85] (log-RMSE slope {:.3}, r^2 {:.3}), {} failures",
            fit.slope, fit.r_squared, results.failures.len()
        ),
    );
}

#[test]
fn criterion_5_oracle_mimicking() {
    // adaptive MSE within 10 ln n of the best fixed-entry MSE on the same
    // replicates, for beta in {0.2, 0.25, 0.3}
    let family = WaveletFamily::haar(1).unwrap();
    let cfg = pipeline_defaults();
    let n = 2000usize;
    let reps = 200usize;
    let budget = 10.0 * (n as f64).ln();
    let mut worst_ratio = 0.0f64;
    for beta in [0.2f64, 0.25, 0.3] {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let b_truth = sample_holder_function(
            &family,
            beta,
            2.0,
            9,
            HolderTarget::Range { lo: 0.25, hi: 0.75 },
            &mut rng,
        )
        .unwrap();
        let spec = ModelSpec {
            problem: Problem::Quadratic,
            d: 1,
            a: None,
            b: Some(b_truth),
            c: None,
            g: FunctionRep::constant(1, 1.0),
            outcome: OutcomeLaw::Binary,
            bounds: Bounds { radius: 2.0, b_lo: 0.5, b_hi: 2.0 },
        };
        let truth = spec.truth();
        let grid = build_grid(n, 1, cfg.grid_c, cfg.grid_mode).unwrap();
        let n_entries = grid.entries.len();
        let rows: Vec<(Vec<f64>, f64)> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(777, beta.to_bits(), rep as u64));
                let data = generate_dataset(&spec, 3 * n, &mut rng).unwrap();
                let split = SplitPlan::new(data.len(), None).unwrap();
                let b3: Vec<Observation> = split.blocks[2].iter().map(|&i| data[i].clone()).collect();
                let b2: Vec<Observation> = split.blocks[1].iter().map(|&i| data[i].clone()).collect();
                let b1: Vec<Observation> = split.blocks[0].iter().map(|&i| data[i].clone()).collect();
                let dwin = ResolutionWindow::new(
                    b3.len(), 1, cfg.gamma_min, cfg.gamma_max, cfg.radius, cfg.b_lo, cfg.b_hi, 0,
                )
                .unwrap();
                let g_fit = density_adaptive(&b3, &family, &dwin, cfg.c_star).unwrap();
                let rwin = ResolutionWindow::new(
                    b2.len(), 1, cfg.beta_min, cfg.beta_max, cfg.radius, cfg.b_lo, cfg.b_hi, 0,
                )
                .unwrap();
                let b_fit = regression_adaptive(
                    &b2, |o| o.w[0], &g_fit.estimate, &family, &rwin, cfg.c_dstar,
                )
                .unwrap();
                let triple = quadratic_triple(&b_fit.estimate, &g_fit.estimate, &cfg);
                let ests = candidate_estimates(&b1, &triple, &family, &grid).unwrap();
                let (l_hat, _) = select_l(&ests, &grid, cfg.c_opt).unwrap();
                let per_entry: Vec<f64> =
                    (0..n_entries).map(|l| *ests.get(&l).unwrap_or(&f64::NAN)).collect();
                (per_entry, ests[&l_hat])
            })
            .collect();
        type Row = (Vec<f64>, f64);
        let mse = |f: &dyn Fn(&Row) -> f64| {
            rows.iter()
                .map(|r| {
                    let e = f(r) - truth;
                    e * e
                })
                .sum::<f64>()
                / reps as f64
        };
        let adaptive_mse = mse(&|r| r.1);
        let best_fixed = (grid.s_star..n_entries)
            .map(|l| mse(&|r| r.0[l]))
            .filter(|m| m.is_finite())
            .fold(f64::INFINITY, f64::min);
        worst_ratio = worst_ratio.max(adaptive_mse / best_fixed);
    }
    report(
        "criterion 5 (oracle mimicking)",
        worst_ratio <= budget,
        &format!("worst adaptive/best-fixed MSE ratio {worst_ratio:.2} <= 10 ln n = {budget:.1}"),
    );
}

#[test]
fn criterion_6_pipeline_sanity() {
    let reps = 200usize;
    let n = 4000usize;
    let cfg = pipeline_defaults();

    // (a) treatment covariance with constant nuisances: truth 0
    let spec = ModelSpec {
        problem: Problem::Treatment,
        d: 1,
        a: Some(FunctionRep::constant(1, 0.5)),
        b: Some(FunctionRep::constant(1, 0.5)),
        c: None,
        g: FunctionRep::constant(1, 1.0),
        outcome: OutcomeLaw::Binary,
        bounds: cfg.bounds(),
    };
    let ests: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(61, 0, rep as u64));
            let data = generate_dataset(&spec, 3 * n, &mut rng).unwrap();
            run_pipeline(Problem::Treatment, &data, &cfg).unwrap().estimate
        })
        .collect();
    let (m_t, se_t) = mean_se(&ests);
    let treat_ok = (m_t - 0.0).abs() <= 3.0 * se_t;

    // (b) E(ab) on the treatment Theta_0 prior: truth 1/4 (valid amplitudes
    // need k = 256 at exponent 1/4; the frozen-b' arm is exponent-free)
    let (t0, _) = build_priors(Problem::Treatment, 0.25, 1.0, 1, 256, 8.0, BumpFunction::step(1)).unwrap();
    let eabs: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(62, 0, rep as u64));
            let (data, _) = sample_from_prior(&t0, 3 * n, &mut rng).unwrap();
            let out = run_pipeline(Problem::Treatment, &data, &cfg).unwrap();
            let block1 = &out.split.as_ref().unwrap().blocks[0];
            let mean_ay =
                block1.iter().map(|&i| data[i].w[0] * data[i].w[1]).sum::<f64>() / block1.len() as f64;
            mean_ay - out.estimate
        })
        .collect();
    let (m_ab, se_ab) = mean_se(&eabs);
    let eab_ok = (m_ab - 0.25).abs() <= 3.0 * se_ab;

    // (c) missing-data mean on the Theta_0 prior: truth 1/2
    let (m0, _) = build_priors(Problem::Missing, 0.25, 1.0, 1, 16, 8.0, BumpFunction::step(1)).unwrap();
    let mut mcfg = cfg.clone();
    mcfg.b_lo = 0.25;
    mcfg.b_hi = 3.0;
    let moms: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(63, 0, rep as u64));
            let (data, _) = sample_from_prior(&m0, 3 * n, &mut rng).unwrap();
            run_pipeline(Problem::Missing, &data, &mcfg).unwrap().estimate
        })
        .collect();
    let (m_m, se_m) = mean_se(&moms);
    let missing_ok = (m_m - 0.5).abs() <= 3.0 * se_m;

    report(
        "criterion 6 (pipeline sanity)",
        treat_ok && eab_ok && missing_ok,
        &format!(
            "treatment mean {m_t:.5} (3se {:.5}), E(ab) mean {m_ab:.5} vs 0.25 (3se {:.5}), missing mean {m_m:.5} vs 0.5 (3se {:.5})",
            3.0 * se_t,
            3.0 * se_ab,
            3.0 * se_m
        ),
    );
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn criterion_7_supnorm_surrogates() {
    let family = WaveletFamily::haar(1).unwrap();
    let gamma = 0.8;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g_truth = sample_holder_function(
        &family,
        gamma,
        2.0,
        8,
        HolderTarget::Density { b_lo: 0.5, b_hi: 1.5 },
        &mut rng,
    )
    .unwrap();
    let (b_lo, b_hi) = (0.5, 2.0);

    // (a) pointwise range contracts on every grid point, density and regression
    let n0 = 2000usize;
    let window = ResolutionWindow::new(n0, 1, 0.5, 1.5, 2.0, b_lo, b_hi, 0).unwrap();
    let mut rng0 = ChaCha8Rng::seed_from_u64(70);
    let sampler = DesignSampler::new(&g_truth, 1).unwrap();
    let data: Vec<Observation> = (0..n0)
        .map(|_| {
            let x = sampler.sample(&mut rng0).unwrap();
            let y = 0.5 + 0.3 * (x[0] - 0.5);
            Observation::new(vec![y], x).unwrap()
        })
        .collect();
    let g_fit = density_adaptive(&data, &family, &window, C_STAR).unwrap();
    let rwin = ResolutionWindow::new(n0, 1, 0.2, 0.8, 2.0, b_lo, b_hi, 0).unwrap();
    let f_fit = regression_adaptive(&data, |o| o.w[0], &g_fit.estimate, &family, &rwin, C_DSTAR).unwrap();
    let g_vals = g_fit.estimate.eval_grid(window.grid_level());
    let f_vals = f_fit.estimate.eval_grid(rwin.grid_level());
    let g_range_ok = g_vals.iter().all(|&v| (b_lo / 2.0..=2.0 * b_hi).contains(&v));
    let f_range_ok = f_vals.iter().all(|&v| v.abs() <= 2.0 * b_hi);

    // (b) Hölder certificate at the calibrated constant (pre-registered
    // 500-draw max of the norm, doubled: C = 3.4)
    let c_cert = 3.4;
    let passes: usize = (0..200usize)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(11, 0, rep as u64));
            let sampler = DesignSampler::new(&g_truth, 1).unwrap();
            let data: Vec<Observation> = (0..n0)
                .map(|_| Observation::new(vec![0.0], sampler.sample(&mut rng).unwrap()).unwrap())
                .collect();
            let fit = density_adaptive(&data, &family, &window, C_STAR).unwrap();
            let proj = family.project(window.l_max, &fit.estimate, window.l_max + 3).unwrap();
            usize::from(holder_coeff_norm(&proj, gamma).unwrap() <= c_cert)
        })
        .sum();
    let cert_ok = passes >= 190;

    // (c) E||ghat - g||_inf strictly decreasing over n
    let mut means = Vec::new();
    for n in [1000usize, 2000, 4000] {
        let win = ResolutionWindow::new(n, 1, 0.5, 1.5, 2.0, b_lo, b_hi, 0).unwrap();
        let errs: Vec<f64> = (0..100usize)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(9, n as u64, rep as u64));
                let sampler = DesignSampler::new(&g_truth, 1).unwrap();
                let data: Vec<Observation> = (0..n)
                    .map(|_| Observation::new(vec![0.0], sampler.sample(&mut rng).unwrap()).unwrap())
                    .collect();
                let fit = density_adaptive(&data, &family, &win, C_STAR).unwrap();
                sup_distance(&fit.estimate, &g_truth, win.grid_level())
            })
            .collect();
        means.push(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    let decreasing = means[0] > means[1] && means[1] > means[2];

    report(
        "criterion 7 (sup-norm surrogates)",
        g_range_ok && f_range_ok && cert_ok && decreasing,
        &format!(
            "range contracts (g: {g_range_ok}, f: {f_range_ok}), certificate {passes}/200 >= 190 at C = {c_cert}, E||ghat-g||_inf = {:.4} > {:.4} > {:.4}",
            means[0], means[1], means[2]
        ),
    );
}

#[test]
fn criterion_8_lower_bound_lab() {
    // closed-form separations at the display-exact parameters
    let (t0v, t1v) = functional_separation(Problem::Treatment, 0.25, 0.25, 1, 16);
    let sep_t = (t0v - 0.25).abs() < 1e-12 && (t1v - (0.25 + 16f64.powf(-0.5))).abs() < 1e-12;
    let (m0v, m1v) = functional_separation(Problem::Missing, 0.25, 0.25, 1, 16);
    let sep_m = (m0v - 0.5).abs() < 1e-12 && (m1v - (0.5 + 0.5 * 16f64.powf(-0.5))).abs() < 1e-12;

    // built priors agree with the arithmetic
    let (bt0, bt1) =
        build_priors(Problem::Treatment, 1.75, 1.75, 1, 4, 8.0, BumpFunction::step(1)).unwrap();
    let (w0, w1) = functional_separation(Problem::Treatment, 1.75, 1.75, 1, 4);
    let built_ok =
        (bt0.functional_value() - w0).abs() < 1e-12 && (bt1.functional_value() - w1).abs() < 1e-12;

    // exact divergence: zero for identical arms; dominated by the bound for
    // some finite recorded C on n <= 4, k <= 4 step priors
    let ident = chi2_mixture_bruteforce(&bt0, &bt0, 4).unwrap();
    let ing = compute_ingredients(&bt0, &bt1).unwrap();
    let mut c_recorded = Vec::new();
    let mut dominated = true;
    for n in [1usize, 2, 4] {
        let exact = chi2_mixture_bruteforce(&bt0, &bt1, n).unwrap();
        let mut found = None;
        for c in [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            if chi2_bound(&ing, n, c) >= exact {
                found = Some(c);
                break;
            }
        }
        dominated &= found.is_some();
        c_recorded.push((n, exact, found));
    }

    // constrained-risk arithmetic on three hand cases
    let h1 = constrained_risk_rhs(&RiskBoundInputs { mu0: 0.0, mu1: 0.1, sigma0: 0.0, epsilon: 0.0, chi: 0.0 });
    let h2 = constrained_risk_rhs(&RiskBoundInputs { mu0: 0.25, mu1: 0.5, sigma0: 0.0, epsilon: 0.1, chi: 0.5 });
    let h3 = constrained_risk_rhs(&RiskBoundInputs { mu0: 0.0, mu1: 0.1, sigma0: 0.2, epsilon: 0.3, chi: 100.0 });
    let hand_ok = (h1 - 0.1).abs() < 1e-15
        && (h2 - (0.25 - 0.1 * 0.5)).abs() < 1e-15
        && (h3 - (0.1 - 0.5 * 100.0)).abs() < 1e-12;

    report(
        "criterion 8 (lower-bound lab)",
        sep_t && sep_m && built_ok && ident.abs() < 1e-12 && dominated && hand_ok,
        &format!(
            "separations exact: {}, built-prior match: {built_ok}, identical-arm chi2 = {ident:.1e}, bound dominates with recorded C: {c_recorded:?}, hand arithmetic: {hand_ok}",
            sep_t && sep_m
        ),
    );
}

#[test]
fn criterion_9_seeded_determinism_library() {
    // byte-identical outputs for repeated runs at a fixed seed (the CLI-level
    // check lives in tests/cli.rs; this covers the library surface it wraps)
    let config = ExperimentConfig {
        n_grid: vec![200, 400],
        replicates: 4,
        ..rate_experiment_config()
    };
    let r1 = run_experiment(&config).unwrap();
    let r2 = run_experiment(&config).unwrap();
    let same = r1.rows.len() == r2.rows.len()
        && r1
            .rows
            .iter()
            .zip(&r2.rows)
            .all(|(a, b)| a.estimate.to_bits() == b.estimate.to_bits() && a.seed == b.seed);
    // and a prior sample
    let (t0, _) =
        build_priors(Problem::Treatment, 1.75, 1.75, 1, 4, 8.0, BumpFunction::step(1)).unwrap();
    let (d1, l1) = sample_from_prior(&t0, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let (d2, l2) = sample_from_prior(&t0, 50, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let prior_same =
        l1 == l2 && d1.iter().zip(&d2).all(|(a, b)| a.x[0].to_bits() == b.x[0].to_bits());
    report(
        "criterion 9 (determinism, library)",
        same && prior_same,
        &format!("experiment rows bit-identical: {same}, prior draws bit-identical: {prior_same}"),
    );
}
