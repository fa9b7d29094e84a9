//! The functional-estimation pipelines: three-way sample splitting, adaptive
//! nuisance estimation, and the resolution-selected second-order estimator,
//! specialized to the treatment-effect covariance (and its ratio `tau`), the
//! missing-data mean, the quadratic functional, and the homoscedastic
//! variance functional.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::function::FunctionRep;
use crate::lepski::{adaptive_estimate, build_grid, select_l, GridMode, SelectionTrace};
use crate::numeric::KahanSum;
use crate::supnorm::{density_adaptive, regression_adaptive, ResolutionWindow};
use crate::sim::Bounds;
use crate::ustat::{InfluenceTriple, Observation};
use crate::wavelet::{FamilySpec, WaveletFamily};

/// Which functional a pipeline estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Treatment,
    Missing,
    Quadratic,
    Variance,
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Problem::Treatment => "treatment",
            Problem::Missing => "missing",
            Problem::Quadratic => "quadratic",
            Problem::Variance => "variance",
        };
        f.write_str(s)
    }
}

/// Net sign of the pairwise kernel term relative to the generic estimator,
/// which always subtracts it. `Added` flips the left kernel factor so the
/// final value carries a plus sign in front of the U-statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UStatSign {
    Subtracted,
    Added,
}

/// How the variance functional weights the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceWeighting {
    /// `w = 1`: assumes a uniform design
    Uniform,
    /// `w = 1/sqrt(ghat)` with the adaptive density plug-in
    Normalized,
}

/// Default constants, calibrated on the quadratic null model by the
/// `calibrate` subcommand (quantile procedure, target 0.95, n = 2000,
/// 200 replicates; stable across seeds). See the README for the recipe.
pub const DEFAULT_C_OPT: f64 = 0.25;
pub const DEFAULT_C_STAR: f64 = std::f64::consts::SQRT_2;
pub const DEFAULT_C_DSTAR: f64 = 1.0;

/// All knobs of a pipeline run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub d: usize,
    pub wavelet: FamilySpec,
    /// regression smoothness window
    pub beta_min: f64,
    pub beta_max: f64,
    /// density smoothness window
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub epsilon: f64,
    /// Hölder radius and pointwise bounds
    pub radius: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    /// selection constants
    pub c_opt: f64,
    pub c_star: f64,
    pub c_dstar: f64,
    pub grid_mode: GridMode,
    pub grid_c: f64,
    /// floor for the variance denominator of `tau`
    pub delta_var: f64,
    pub variance_weighting: VarianceWeighting,
    /// optional seeded pre-shuffle before the deterministic index split
    pub shuffle_seed: Option<u64>,
    /// enforce the smoothness-class constraint
    /// `gamma_min >= 2 (1 + epsilon) beta_max`
    pub assert_theta: bool,
}

impl PipelineConfig {
    pub fn defaults(d: usize) -> Self {
        PipelineConfig {
            d,
            wavelet: FamilySpec::Haar,
            beta_min: 0.1,
            beta_max: 0.5,
            gamma_min: 0.5,
            gamma_max: 1.5,
            epsilon: 0.1,
            radius: 2.0,
            b_lo: 0.5,
            b_hi: 2.0,
            c_opt: DEFAULT_C_OPT,
            c_star: DEFAULT_C_STAR,
            c_dstar: DEFAULT_C_DSTAR,
            grid_mode: GridMode::PracticalSpan,
            grid_c: 1.5,
            delta_var: 1e-3,
            variance_weighting: VarianceWeighting::Uniform,
            shuffle_seed: None,
            assert_theta: false,
        }
    }

    pub fn bounds(&self) -> Bounds {
        Bounds { radius: self.radius, b_lo: self.b_lo, b_hi: self.b_hi }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b_lo > 0.0 && self.b_lo < self.b_hi && self.radius > 0.0) {
            return Err(Error::Parameter("bounds must satisfy 0 < B_L < B_U, M > 0".into()));
        }
        if self.assert_theta && self.gamma_min < 2.0 * (1.0 + self.epsilon) * self.beta_max {
            return Err(Error::Parameter(format!(
                "smoothness class constraint violated: gamma_min {} < 2(1+eps) beta_max {}",
                self.gamma_min,
                2.0 * (1.0 + self.epsilon) * self.beta_max
            )));
        }
        Ok(())
    }

    fn family(&self) -> Result<WaveletFamily> {
        WaveletFamily::from_spec(&self.wavelet, self.d)
    }

    fn density_window(&self, n: usize, family: &WaveletFamily) -> Result<ResolutionWindow> {
        ResolutionWindow::new(
            n,
            self.d,
            self.gamma_min,
            self.gamma_max,
            self.radius,
            self.b_lo,
            self.b_hi,
            family.base_level(),
        )
    }

    fn regression_window(&self, n: usize, family: &WaveletFamily) -> Result<ResolutionWindow> {
        ResolutionWindow::new(
            n,
            self.d,
            self.beta_min,
            self.beta_max,
            self.radius,
            self.b_lo,
            self.b_hi,
            family.base_level(),
        )
    }
}

/// Three disjoint equal index blocks over `3n` observations.
#[derive(Debug, Clone, Serialize)]
pub struct SplitPlan {
    pub blocks: [Vec<usize>; 3],
}

impl SplitPlan {
    pub fn new(total: usize, shuffle_seed: Option<u64>) -> Result<Self> {
        if total == 0 || !total.is_multiple_of(3) {
            return Err(Error::SampleSize(format!(
                "sample splitting needs a positive multiple of 3 observations, got {total}"
            )));
        }
        let mut indices: Vec<usize> = (0..total).collect();
        if let Some(seed) = shuffle_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            indices.shuffle(&mut rng);
        }
        let n = total / 3;
        Ok(SplitPlan {
            blocks: [
                indices[0..n].to_vec(),
                indices[n..2 * n].to_vec(),
                indices[2 * n..].to_vec(),
            ],
        })
    }

    pub fn take<'a>(&self, data: &'a [Observation], block: usize) -> Vec<&'a Observation> {
        self.blocks[block].iter().map(|&i| &data[i]).collect()
    }
}

fn owned(block: Vec<&Observation>) -> Vec<Observation> {
    block.into_iter().cloned().collect()
}

/// Summary of the nuisance stage for reporting.
#[derive(Debug, Clone, Serialize)]
pub struct NuisanceDiagnostics {
    pub g_level: Option<u32>,
    pub a_level: Option<u32>,
    pub b_level: Option<u32>,
    pub pi_hat: Option<f64>,
}

impl NuisanceDiagnostics {
    fn empty() -> Self {
        NuisanceDiagnostics { g_level: None, a_level: None, b_level: None, pi_hat: None }
    }
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutput {
    pub problem: Problem,
    pub estimate: f64,
    pub trace: SelectionTrace,
    pub nuisances: NuisanceDiagnostics,
    #[serde(skip)]
    pub split: Option<SplitPlan>,
}

/// Plug-in nuisance functions supplied directly (oracle mode for tests and
/// bias studies; skips the splitting and estimation stages).
pub struct OracleNuisances {
    pub g: FunctionRep,
    pub a: Option<FunctionRep>,
    pub b: Option<FunctionRep>,
}

#[allow(clippy::too_many_arguments)]
fn adaptive_second_order(
    block: &[Observation],
    l1: impl Fn(&Observation) -> f64 + Send + Sync + 'static,
    l2l: impl Fn(&Observation) -> f64 + Send + Sync + 'static,
    l2r: impl Fn(&Observation) -> f64 + Send + Sync + 'static,
    sign: UStatSign,
    bound: f64,
    family: &WaveletFamily,
    cfg: &PipelineConfig,
) -> Result<(f64, SelectionTrace)> {
    let grid = build_grid(block.len(), cfg.d, cfg.grid_c, cfg.grid_mode)?;
    let triple = match sign {
        UStatSign::Subtracted => InfluenceTriple::new(l1, l2l, l2r, bound),
        UStatSign::Added => InfluenceTriple::new(l1, move |o: &Observation| -l2l(o), l2r, bound),
    };
    adaptive_estimate(block, &triple, family, &grid, cfg.c_opt)
}

// ---------------------------------------------------------------------------
// treatment effect
// ---------------------------------------------------------------------------

/// `E[Cov(Y, A | X)]` from records with `W = (Y, A)`: density from block 3,
/// outcome and treatment regressions from block 2, second-order estimator
/// with resolution selection on block 1.
pub fn treatment_effect_covariance(
    data: &[Observation],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    if data.len() < 300 {
        return Err(Error::SampleSize(format!(
            "treatment pipeline needs 3n >= 300 for meaningful windows, got {}",
            data.len()
        )));
    }
    let family = cfg.family()?;
    let split = SplitPlan::new(data.len(), cfg.shuffle_seed)?;
    let block3 = owned(split.take(data, 2));
    let block2 = owned(split.take(data, 1));
    let block1 = owned(split.take(data, 0));

    let g_fit = density_adaptive(&block3, &family, &cfg.density_window(block3.len(), &family)?, cfg.c_star)?;
    let reg_window = cfg.regression_window(block2.len(), &family)?;
    let a_fit = regression_adaptive(&block2, |o| o.w[1], &g_fit.estimate, &family, &reg_window, cfg.c_dstar)?;
    let b_fit = regression_adaptive(&block2, |o| o.w[0], &g_fit.estimate, &family, &reg_window, cfg.c_dstar)?;

    let diag = NuisanceDiagnostics {
        g_level: Some(g_fit.selected_level),
        a_level: Some(a_fit.selected_level),
        b_level: Some(b_fit.selected_level),
        pi_hat: None,
    };
    let (estimate, trace) =
        treatment_core(&block1, &a_fit.estimate, &b_fit.estimate, &g_fit.estimate, &family, cfg)?;
    Ok(PipelineOutput {
        problem: Problem::Treatment,
        estimate,
        trace,
        nuisances: diag,
        split: Some(split),
    })
}

/// Treatment-effect estimator with supplied nuisances on the full sample.
pub fn treatment_effect_covariance_oracle(
    data: &[Observation],
    nuis: &OracleNuisances,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let family = cfg.family()?;
    let a = nuis.a.clone().ok_or_else(|| Error::Parameter("oracle a required".into()))?;
    let b = nuis.b.clone().ok_or_else(|| Error::Parameter("oracle b required".into()))?;
    let (estimate, trace) = treatment_core(data, &a, &b, &nuis.g, &family, cfg)?;
    Ok(PipelineOutput {
        problem: Problem::Treatment,
        estimate,
        trace,
        nuisances: NuisanceDiagnostics::empty(),
        split: None,
    })
}

fn treatment_core(
    block1: &[Observation],
    ahat: &FunctionRep,
    bhat: &FunctionRep,
    ghat: &FunctionRep,
    family: &WaveletFamily,
    cfg: &PipelineConfig,
) -> Result<(f64, SelectionTrace)> {
    let res_bound = 1.5 * cfg.b_hi + cfg.b_hi;
    let g_floor = 0.75 * cfg.b_lo;
    let bound = (res_bound * res_bound).max(res_bound / g_floor.sqrt()).max(1.0);
    let (a1, b1) = (ahat.clone(), bhat.clone());
    let (b2, g2) = (bhat.clone(), ghat.clone());
    let (a3, g3) = (ahat.clone(), ghat.clone());
    adaptive_second_order(
        block1,
        move |o: &Observation| (o.w[0] - b1.eval(&o.x)) * (o.w[1] - a1.eval(&o.x)),
        move |o: &Observation| (o.w[0] - b2.eval(&o.x)) / g2.eval(&o.x).sqrt(),
        move |o: &Observation| (o.w[1] - a3.eval(&o.x)) / g3.eval(&o.x).sqrt(),
        UStatSign::Subtracted,
        bound,
        family,
        cfg,
    )
}

/// Output of the variance-weighted treatment-effect ratio.
#[derive(Debug, Clone, Serialize)]
pub struct TauOutput {
    pub tau: f64,
    pub covariance: PipelineOutput,
    pub variance: PipelineOutput,
}

/// `tau = E[Cov(Y,A|X)] / E[Var(A|X)]`: the ratio of two covariance runs,
/// the denominator with `Y` replaced by `A`.
pub fn treatment_effect_tau(data: &[Observation], cfg: &PipelineConfig) -> Result<TauOutput> {
    let covariance = treatment_effect_covariance(data, cfg)?;
    let swapped: Vec<Observation> = data
        .iter()
        .map(|o| Observation { w: vec![o.w[1], o.w[1]], x: o.x.clone() })
        .collect();
    let variance = treatment_effect_covariance(&swapped, cfg)?;
    if variance.estimate <= cfg.delta_var {
        return Err(Error::DegenerateVariance(format!(
            "denominator estimate {} at or below the floor {}",
            variance.estimate, cfg.delta_var
        )));
    }
    Ok(TauOutput { tau: covariance.estimate / variance.estimate, covariance, variance })
}

// ---------------------------------------------------------------------------
// missing-data mean
// ---------------------------------------------------------------------------

/// `E(Y)` under missing-at-random from records with `W = (YA, A)`.
///
/// Block 3 yields `f1_hat` (density of `X` given `A = 1`), `pi_hat` (the
/// sample average of `A`), the full-design density for the block-2
/// regressions, and `g_hat = f1_hat * pi_hat`. Block 2 yields
/// `a_hat = 1 / E_hat(A | .)` and `b_hat = E_hat(Y | A = 1, .)`.
pub fn missing_data_mean(data: &[Observation], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if data.len() < 300 {
        return Err(Error::SampleSize(format!(
            "missing-data pipeline needs 3n >= 300, got {}",
            data.len()
        )));
    }
    let family = cfg.family()?;
    let split = SplitPlan::new(data.len(), cfg.shuffle_seed)?;
    let block3 = owned(split.take(data, 2));
    let block2 = owned(split.take(data, 1));
    let block1 = owned(split.take(data, 0));

    // block 3: f1_hat among the treated, pi_hat, full-design density
    let treated3: Vec<Observation> = block3.iter().filter(|o| o.w[1] == 1.0).cloned().collect();
    if treated3.len() < 2 {
        return Err(Error::Construction("block 3 has fewer than 2 observed outcomes".into()));
    }
    let pi_hat = block3.iter().map(|o| o.w[1]).sum::<f64>() / block3.len() as f64;
    let f1_fit =
        density_adaptive(&treated3, &family, &cfg.density_window(treated3.len(), &family)?, cfg.c_star)?;
    let f_fit =
        density_adaptive(&block3, &family, &cfg.density_window(block3.len(), &family)?, cfg.c_star)?;
    let (f1, pi) = (f1_fit.estimate.clone(), pi_hat);
    let ghat = FunctionRep::from_fn(cfg.d, f1.sup_bound() * pi, move |x| f1.eval(x) * pi);

    // block 2: propensity regression on the full design, outcome regression
    // among the treated (their design density is f1)
    let reg_window = cfg.regression_window(block2.len(), &family)?;
    let ehat_fit =
        regression_adaptive(&block2, |o| o.w[1], &f_fit.estimate, &family, &reg_window, cfg.c_dstar)?;
    let treated2: Vec<Observation> = block2.iter().filter(|o| o.w[1] == 1.0).cloned().collect();
    if treated2.len() < 2 {
        return Err(Error::Construction("block 2 has fewer than 2 observed outcomes".into()));
    }
    let b_fit = regression_adaptive(
        &treated2,
        |o| o.w[0],
        &f1_fit.estimate,
        &family,
        &cfg.regression_window(treated2.len(), &family)?,
        cfg.c_dstar,
    )?;

    // a_hat = 1 / E_hat(A|x) with the propensity clamped into its model range
    let e_floor = 1.0 / cfg.b_hi;
    let ehat = ehat_fit.estimate.clone();
    let ahat =
        FunctionRep::from_fn(cfg.d, cfg.b_hi, move |x| 1.0 / ehat.eval(x).clamp(e_floor, 1.0));

    let diag = NuisanceDiagnostics {
        g_level: Some(f1_fit.selected_level),
        a_level: Some(ehat_fit.selected_level),
        b_level: Some(b_fit.selected_level),
        pi_hat: Some(pi_hat),
    };

    let g_floor = 0.75 * cfg.b_lo * pi_hat;
    if g_floor <= 0.0 {
        return Err(Error::DegenerateVariance("no observed outcomes: pi_hat = 0".into()));
    }
    let res_bound = cfg.b_hi + 1.5 * cfg.b_hi;
    let bound = (cfg.b_hi * res_bound + 1.5 * cfg.b_hi)
        .max(res_bound / g_floor.sqrt())
        .max((cfg.b_hi + 1.0) / g_floor.sqrt())
        .max(1.0);

    let (a1, b1) = (ahat.clone(), b_fit.estimate.clone());
    let (b2, g2) = (b_fit.estimate.clone(), ghat.clone());
    let (a3, g3) = (ahat.clone(), ghat.clone());
    // Kernel-term sign: E[A(Y-b_hat)|X] = (b-b_hat)/a and
    // E[A a_hat - 1|X] = +(a_hat-a)/a, so the pair term reproduces the
    // linear term's product bias with the SAME sign and must be subtracted
    // to cancel it (Monte Carlo confirms the cancellation).
    let (estimate, trace) = adaptive_second_order(
        &block1,
        // A a_hat (Y - b_hat) + b_hat, with A(Y - b_hat) = YA - A b_hat
        move |o: &Observation| {
            let b = b1.eval(&o.x);
            o.w[1] * a1.eval(&o.x) * (o.w[0] - b) + b
        },
        move |o: &Observation| o.w[1] * (o.w[0] - b2.eval(&o.x)) / g2.eval(&o.x).sqrt(),
        move |o: &Observation| (o.w[1] * a3.eval(&o.x) - 1.0) / g3.eval(&o.x).sqrt(),
        UStatSign::Subtracted,
        bound,
        &family,
        cfg,
    )?;
    Ok(PipelineOutput {
        problem: Problem::Missing,
        estimate,
        trace,
        nuisances: diag,
        split: Some(split),
    })
}

// ---------------------------------------------------------------------------
// quadratic functional
// ---------------------------------------------------------------------------

/// `E[(E(Y|X))^2]` from records with `W = Y`: density from block 3, outcome
/// regression from block 2, kernel term added.
pub fn quadratic_functional(data: &[Observation], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if data.len() < 48 {
        return Err(Error::SampleSize(format!(
            "quadratic pipeline needs at least 48 observations, got {}",
            data.len()
        )));
    }
    let family = cfg.family()?;
    let split = SplitPlan::new(data.len(), cfg.shuffle_seed)?;
    let block3 = owned(split.take(data, 2));
    let block2 = owned(split.take(data, 1));
    let block1 = owned(split.take(data, 0));

    let g_fit =
        density_adaptive(&block3, &family, &cfg.density_window(block3.len(), &family)?, cfg.c_star)?;
    let b_fit = regression_adaptive(
        &block2,
        |o| o.w[0],
        &g_fit.estimate,
        &family,
        &cfg.regression_window(block2.len(), &family)?,
        cfg.c_dstar,
    )?;
    let diag = NuisanceDiagnostics {
        g_level: Some(g_fit.selected_level),
        a_level: None,
        b_level: Some(b_fit.selected_level),
        pi_hat: None,
    };
    let (estimate, trace) =
        quadratic_core(&block1, &b_fit.estimate, &g_fit.estimate, &family, cfg)?;
    Ok(PipelineOutput {
        problem: Problem::Quadratic,
        estimate,
        trace,
        nuisances: diag,
        split: Some(split),
    })
}

/// Quadratic-functional estimator with supplied nuisances on the full sample.
pub fn quadratic_functional_oracle(
    data: &[Observation],
    nuis: &OracleNuisances,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let family = cfg.family()?;
    let b = nuis.b.clone().ok_or_else(|| Error::Parameter("oracle b required".into()))?;
    let (estimate, trace) = quadratic_core(data, &b, &nuis.g, &family, cfg)?;
    Ok(PipelineOutput {
        problem: Problem::Quadratic,
        estimate,
        trace,
        nuisances: NuisanceDiagnostics::empty(),
        split: None,
    })
}

/// The quadratic-functional influence triple (kernel-term sign applied), for
/// use by both the pipeline and the constant calibration.
pub fn quadratic_triple(
    bhat: &FunctionRep,
    ghat: &FunctionRep,
    cfg: &PipelineConfig,
) -> InfluenceTriple {
    let res_bound = cfg.b_hi + 1.5 * cfg.b_hi;
    let g_floor = 0.75 * cfg.b_lo;
    let bound = ((2.0 * cfg.b_hi + 1.5 * cfg.b_hi) * 1.5 * cfg.b_hi)
        .max(res_bound / g_floor.sqrt())
        .max(1.0);
    let b1 = bhat.clone();
    let (b2, g2) = (bhat.clone(), ghat.clone());
    let (b3, g3) = (bhat.clone(), ghat.clone());
    InfluenceTriple::new(
        move |o: &Observation| {
            let b = b1.eval(&o.x);
            (2.0 * o.w[0] - b) * b
        },
        // kernel term enters with a plus sign: flip the left factor
        move |o: &Observation| -(o.w[0] - b2.eval(&o.x)) / g2.eval(&o.x).sqrt(),
        move |o: &Observation| (o.w[0] - b3.eval(&o.x)) / g3.eval(&o.x).sqrt(),
        bound,
    )
}

fn quadratic_core(
    block1: &[Observation],
    bhat: &FunctionRep,
    ghat: &FunctionRep,
    family: &WaveletFamily,
    cfg: &PipelineConfig,
) -> Result<(f64, SelectionTrace)> {
    let triple = quadratic_triple(bhat, ghat, cfg);
    let grid = build_grid(block1.len(), cfg.d, cfg.grid_c, cfg.grid_mode)?;
    adaptive_estimate(block1, &triple, family, &grid, cfg.c_opt)
}

// ---------------------------------------------------------------------------
// homoscedastic variance functional
// ---------------------------------------------------------------------------

/// The pairwise-difference kernel statistic at one resolution:
/// `(1/2) (1/(n(n-1))) sum_{i1 != i2} (Y_i1 - Y_i2)^2 K_{V_j} w(X_i1) w(X_i2)`,
/// evaluated in coefficient space.
pub fn variance_statistic(
    block: &[Observation],
    weights: &[f64],
    family: &WaveletFamily,
    j: u32,
) -> Result<f64> {
    if block.len() < 2 {
        return Err(Error::SampleSize("variance statistic needs n >= 2".into()));
    }
    let n = block.len();
    let d = family.dimension();
    let stride = family.scaling_slot_count(j) as u64;
    // pairwise differences are shift-invariant; centering the outcomes keeps
    // the cancellation exact for constant Y and conditions the sums
    let y_min = block.iter().map(|o| o.w[0]).fold(f64::INFINITY, f64::min);
    let y_max = block.iter().map(|o| o.w[0]).fold(f64::NEG_INFINITY, f64::max);
    let center = if y_min == y_max {
        y_min
    } else {
        block.iter().map(|o| o.w[0]).sum::<f64>() / n as f64
    };
    struct Acc {
        s_w: KahanSum,
        s_wy: KahanSum,
        s_wy2: KahanSum,
    }
    let mut cells: std::collections::HashMap<u64, Acc> = std::collections::HashMap::new();
    let mut slot_buf: Vec<Vec<u32>> = vec![Vec::new(); d];
    let mut combo = vec![0usize; d];
    for (o, &w) in block.iter().zip(weights) {
        let y = o.w[0] - center;
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
                    s_w: KahanSum::new(),
                    s_wy: KahanSum::new(),
                    s_wy2: KahanSum::new(),
                });
                acc.s_w.add(w * basis);
                acc.s_wy.add(w * y * basis);
                acc.s_wy2.add(w * y * y * basis);
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
    let mut keys: Vec<u64> = cells.keys().copied().collect();
    keys.sort_unstable();
    let mut total = KahanSum::new();
    for key in keys {
        let acc = &cells[&key];
        // off-diagonal (y - y')^2 w w' pair sum collapses to this per slot
        total.add(acc.s_wy2.value() * acc.s_w.value() - acc.s_wy.value() * acc.s_wy.value());
    }
    Ok(total.value() / (n as f64 * (n as f64 - 1.0)))
}

/// Brute-force reference for [`variance_statistic`].
pub fn variance_statistic_bruteforce(
    block: &[Observation],
    weights: &[f64],
    family: &WaveletFamily,
    j: u32,
) -> Result<f64> {
    let n = block.len();
    let mut acc = KahanSum::new();
    for i1 in 0..n {
        for i2 in 0..n {
            if i1 == i2 {
                continue;
            }
            let dy = block[i1].w[0] - block[i2].w[0];
            let k = family.kernel_eval(j, &block[i1].x, &block[i2].x)?;
            acc.add(0.5 * dy * dy * k * weights[i1] * weights[i2]);
        }
    }
    Ok(acc.value() / (n as f64 * (n as f64 - 1.0)))
}

/// `sigma^2` under homoscedasticity: the pairwise-difference statistic with
/// resolution selection; weights per the configured mode.
pub fn variance_functional(data: &[Observation], cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if data.len() < 48 {
        return Err(Error::SampleSize(format!(
            "variance pipeline needs at least 48 observations, got {}",
            data.len()
        )));
    }
    let family = cfg.family()?;
    let split = SplitPlan::new(data.len(), cfg.shuffle_seed)?;
    let block3 = owned(split.take(data, 2));
    let block1 = owned(split.take(data, 0));

    let (weights, diag) = match cfg.variance_weighting {
        VarianceWeighting::Uniform => (vec![1.0; block1.len()], NuisanceDiagnostics::empty()),
        VarianceWeighting::Normalized => {
            let g_fit = density_adaptive(
                &block3,
                &family,
                &cfg.density_window(block3.len(), &family)?,
                cfg.c_star,
            )?;
            let w: Vec<f64> =
                block1.iter().map(|o| 1.0 / g_fit.estimate.eval(&o.x).sqrt()).collect();
            (
                w,
                NuisanceDiagnostics {
                    g_level: Some(g_fit.selected_level),
                    a_level: None,
                    b_level: None,
                    pi_hat: None,
                },
            )
        }
    };

    let grid = build_grid(block1.len(), cfg.d, cfg.grid_c, cfg.grid_mode)?;
    let mut estimates = BTreeMap::new();
    let mut by_res: BTreeMap<u32, f64> = BTreeMap::new();
    for entry in grid.entries.iter().skip(grid.s_star) {
        let v = match by_res.get(&entry.j_used) {
            Some(v) => *v,
            None => {
                let v = variance_statistic(&block1, &weights, &family, entry.j_used)?;
                by_res.insert(entry.j_used, v);
                v
            }
        };
        estimates.insert(entry.l, v);
    }
    let (l_hat, trace) = select_l(&estimates, &grid, cfg.c_opt)?;
    Ok(PipelineOutput {
        problem: Problem::Variance,
        estimate: estimates[&l_hat],
        trace,
        nuisances: diag,
        split: Some(split),
    })
}

/// Dispatch a pipeline by problem tag.
pub fn run_pipeline(
    problem: Problem,
    data: &[Observation],
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    match problem {
        Problem::Treatment => treatment_effect_covariance(data, cfg),
        Problem::Missing => missing_data_mean(data, cfg),
        Problem::Quadratic => quadratic_functional(data, cfg),
        Problem::Variance => variance_functional(data, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, Bounds, ModelSpec, OutcomeLaw};
    use approx::assert_abs_diff_eq;

    fn quadratic_spec(b: f64) -> ModelSpec {
        ModelSpec {
            problem: Problem::Quadratic,
            d: 1,
            a: None,
            b: Some(FunctionRep::constant(1, b)),
            c: None,
            g: FunctionRep::constant(1, 1.0),
            outcome: OutcomeLaw::Binary,
            bounds: Bounds { radius: 2.0, b_lo: 0.5, b_hi: 2.0 },
        }
    }

    #[test]
    fn split_plan_partitions_equally() {
        let plan = SplitPlan::new(9, None).unwrap();
        let mut all: Vec<usize> = plan.blocks.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
        assert!(plan.blocks.iter().all(|b| b.len() == 3));
        assert!(SplitPlan::new(10, None).is_err());
        // seeded shuffle is reproducible
        let p1 = SplitPlan::new(9, Some(5)).unwrap();
        let p2 = SplitPlan::new(9, Some(5)).unwrap();
        assert_eq!(p1.blocks, p2.blocks);
    }

    #[test]
    fn quadratic_oracle_is_exact_for_constant_outcome() {
        // Y = c deterministic, b_hat exact: linear term (2c - c)c = c^2,
        // kernel term vanishes because Y - b_hat = 0
        let cfg = PipelineConfig::defaults(1);
        let c = 0.7;
        let data: Vec<Observation> = (0..120)
            .map(|i| Observation::new(vec![c], vec![(i as f64 + 0.5) / 120.0]).unwrap())
            .collect();
        let nuis = OracleNuisances {
            g: FunctionRep::constant(1, 1.0),
            a: None,
            b: Some(FunctionRep::constant(1, c)),
        };
        let out = quadratic_functional_oracle(&data, &nuis, &cfg).unwrap();
        assert_abs_diff_eq!(out.estimate, c * c, epsilon = 1e-12);
    }

    #[test]
    fn sign_conventions_pinned_by_hand_arithmetic() {
        // With b_hat = a_hat = 0, g_hat = 1 and Y = A = 1 everywhere, the
        // kernel pair sum at resolution j is P(j) = sum_{i1 != i2} K_j, so
        //   treatment:  mean(Y A) - P(j)/(n(n-1))    (subtracted)
        //   quadratic:  0 + P(j)/(n(n-1))            (added)
        //   missing:    mean(b_hat=0 term) - P(j)/(n(n-1)) with its own L's
        let cfg = PipelineConfig { grid_mode: GridMode::PaperFaithful, ..PipelineConfig::defaults(1) };
        let family = WaveletFamily::haar(1).unwrap();
        let n = 100usize;
        let data: Vec<Observation> = (0..n)
            .map(|i| Observation::new(vec![1.0, 1.0], vec![(i as f64 + 0.5) / n as f64]).unwrap())
            .collect();
        let zero = FunctionRep::constant(1, 0.0);
        let one = FunctionRep::constant(1, 1.0);

        let (v_treat, tr) = treatment_core(&data, &zero, &zero, &one, &family, &cfg).unwrap();
        let j = build_grid(n, 1, cfg.grid_c, cfg.grid_mode).unwrap().entries[tr.selected].j_used;
        let mut pair_sum = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                if i1 != i2 {
                    pair_sum += family.kernel_eval(j, &data[i1].x, &data[i2].x).unwrap();
                }
            }
        }
        let quad_term = pair_sum / (n as f64 * (n as f64 - 1.0));
        assert!(quad_term > 0.0);
        assert_abs_diff_eq!(v_treat, 1.0 - quad_term, epsilon = 1e-10);

        let qdata: Vec<Observation> = data
            .iter()
            .map(|o| Observation::new(vec![1.0], o.x.clone()).unwrap())
            .collect();
        let (v_quad, qt) = quadratic_core(&qdata, &zero, &one, &family, &cfg).unwrap();
        let jq = build_grid(n, 1, cfg.grid_c, cfg.grid_mode).unwrap().entries[qt.selected].j_used;
        assert_eq!(jq, j);
        // linear term is zero; the kernel term enters with a plus sign
        assert_abs_diff_eq!(v_quad, quad_term, epsilon = 1e-10);
    }

    #[test]
    fn tau_is_one_when_outcome_equals_treatment() {
        let mut cfg = PipelineConfig::defaults(1);
        cfg.shuffle_seed = Some(9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let spec = ModelSpec {
            problem: Problem::Treatment,
            d: 1,
            a: Some(FunctionRep::constant(1, 0.5)),
            b: Some(FunctionRep::constant(1, 0.5)),
            c: Some(FunctionRep::constant(1, 0.4)),
            g: FunctionRep::constant(1, 1.0),
            outcome: OutcomeLaw::Binary,
            bounds: cfg.bounds(),
        };
        let mut data = generate_dataset(&spec, 600, &mut rng).unwrap();
        // force Y = A
        for o in data.iter_mut() {
            o.w[0] = o.w[1];
        }
        let out = treatment_effect_tau(&data, &cfg).unwrap();
        assert_abs_diff_eq!(out.tau, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tau_degenerate_variance_errors() {
        let cfg = PipelineConfig::defaults(1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(78);
        let spec = quadratic_spec(0.5);
        let mut data = generate_dataset(&spec, 600, &mut rng).unwrap();
        // constant A: Var(A|X) = 0
        for o in data.iter_mut() {
            let y = o.w[0];
            o.w = vec![y, 1.0];
        }
        assert!(matches!(
            treatment_effect_tau(&data, &cfg),
            Err(Error::DegenerateVariance(_))
        ));
    }

    #[test]
    fn variance_statistic_matches_bruteforce() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let block: Vec<Observation> = (0..80)
            .map(|_| {
                Observation::new(vec![rng.random::<f64>()], vec![rng.random::<f64>()]).unwrap()
            })
            .collect();
        let weights: Vec<f64> = (0..80).map(|_| 0.5 + rng.random::<f64>()).collect();
        for j in [2u32, 5, 8] {
            let fast = variance_statistic(&block, &weights, &family, j).unwrap();
            let brute = variance_statistic_bruteforce(&block, &weights, &family, j).unwrap();
            let scale = brute.abs().max(1e-10);
            assert!(
                ((fast - brute) / scale).abs() < 1e-10,
                "j={j}: {fast} vs {brute}"
            );
        }
    }

    #[test]
    fn variance_constant_outcome_is_exactly_zero() {
        let mut cfg = PipelineConfig::defaults(1);
        cfg.variance_weighting = VarianceWeighting::Uniform;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let data: Vec<Observation> = (0..300)
            .map(|_| Observation::new(vec![0.42], vec![rng.random::<f64>()]).unwrap())
            .collect();
        let out = variance_functional(&data, &cfg).unwrap();
        assert_eq!(out.estimate, 0.0);
    }

    #[test]
    fn no_missingness_with_constant_outcome_is_exact() {
        // A = 1 everywhere on an equispaced design: the density candidates
        // are exactly 1, the propensity regression clamps to 1, the kernel
        // factor (A a_hat - 1) vanishes, and Y = 1/2 passes through exactly
        let mut cfg = PipelineConfig::defaults(1);
        cfg.b_lo = 0.25;
        cfg.b_hi = 3.0;
        let n_block = 128usize;
        let mut data = Vec::new();
        for _block in 0..3 {
            for i in 0..n_block {
                let x = (i as f64 + 0.5) / n_block as f64;
                data.push(Observation::new(vec![0.5, 1.0], vec![x]).unwrap());
            }
        }
        let out = missing_data_mean(&data, &cfg).unwrap();
        assert_abs_diff_eq!(out.estimate, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.nuisances.pi_hat.unwrap(), 1.0);
    }

    #[test]
    fn within_block_permutation_invariance() {
        // permuting observations inside one block leaves the estimate
        // unchanged up to summation-order noise
        let mut cfg = PipelineConfig::defaults(1);
        cfg.shuffle_seed = None;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(123);
        let spec = quadratic_spec(0.5);
        let mut data = generate_dataset(&spec, 450, &mut rng).unwrap();
        let base = quadratic_functional(&data, &cfg).unwrap();
        // swap two observations inside block 2 (indices 150..300)
        data.swap(160, 240);
        let permuted = quadratic_functional(&data, &cfg).unwrap();
        assert_abs_diff_eq!(base.estimate, permuted.estimate, epsilon = 1e-12);
    }
}
