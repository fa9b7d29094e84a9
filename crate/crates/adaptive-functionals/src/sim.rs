//! Data generation for Hölder-smooth models, Monte Carlo experiment
//! orchestration, empirical rate fitting, and the serializable configuration
//! the CLI consumes.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;

use crate::error::{Error, Result};
use crate::function::FunctionRep;
use crate::functionals::{PipelineConfig, Problem};
use crate::numeric::{ols, KahanSum};
use crate::ustat::{Dataset, Observation};
use crate::wavelet::{holder_coeff_norm, MultiresIndex, WaveletFamily};

/// Quadrature resolution used for generator truths: 2^16 cells for d = 1,
/// 2^10 per axis for d = 2.
pub fn truth_quadrature_level(d: usize) -> u32 {
    if d == 1 {
        16
    } else {
        10
    }
}

/// splitmix64 mix: derives independent per-replicate seeds from (seed, n, rep).
pub fn substream_seed(seed: u64, stream: u64, rep: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ rep.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// What the sampled Hölder function is mapped into.
#[derive(Debug, Clone, Copy)]
pub enum HolderTarget {
    /// zero-mean wavelet series, no offset
    Plain,
    /// affine image within `[lo, hi]`
    Range { lo: f64, hi: f64 },
    /// density: offset 1 (so the integral is exactly 1 by vanishing moments)
    /// with values kept inside `[b_lo, b_hi]`
    Density { b_lo: f64, b_hi: f64 },
}

/// Draw a function from the Hölder ball `H(beta, m)`: mother coefficients
/// uniform within half the envelope `m 2^{-l(beta + d/2)}` up to `max_level`,
/// plus a father-block offset. The construction keeps the coefficient norm
/// within `m` (asserted) and the values inside the requested range.
pub fn sample_holder_function(
    family: &WaveletFamily,
    beta: f64,
    m: f64,
    max_level: u32,
    target: HolderTarget,
    rng: &mut ChaCha8Rng,
) -> Result<FunctionRep> {
    if beta >= family.regularity() as f64 {
        return Err(Error::Parameter(format!(
            "need beta < regularity S: beta = {beta}, S = {}",
            family.regularity()
        )));
    }
    let d = family.dimension() as f64;
    let j0 = family.base_level();

    let (offset, half_span) = match target {
        HolderTarget::Plain => (0.0, f64::INFINITY),
        HolderTarget::Range { lo, hi } => {
            if hi <= lo {
                return Err(Error::Construction("empty range request".into()));
            }
            ((lo + hi) / 2.0, (hi - lo) / 2.0)
        }
        HolderTarget::Density { b_lo, b_hi } => {
            if !(b_lo < 1.0 && 1.0 < b_hi) {
                return Err(Error::Construction(
                    "density sampling needs B_L < 1 < B_U so the unit-mass offset fits".into(),
                ));
            }
            (1.0, (1.0 - b_lo).min(b_hi - 1.0))
        }
    };

    // father block of the constant offset
    let mut coeffs: BTreeMap<MultiresIndex, f64> = BTreeMap::new();
    let mut father_term = 0.0f64;
    if offset != 0.0 {
        let constant = FunctionRep::constant(family.dimension(), offset);
        let projected = family.project(j0, &constant, j0 + 2)?;
        let c = projected.as_coefficients()?;
        let mut father_max = 0.0f64;
        for (idx, &v) in &c.coeffs {
            if idx.is_father() {
                coeffs.insert(idx.clone(), v);
                father_max = father_max.max(v.abs());
            }
        }
        father_term = 2f64.powf(j0 as f64 * (beta + d / 2.0)) * father_max;
        if father_term >= m {
            return Err(Error::Construction(format!(
                "offset {offset} alone exhausts the Hölder radius {m} (father term {father_term:.3})"
            )));
        }
    }

    // mother coefficients within the remaining envelope budget
    let mother_budget = ((m - father_term) / 2.0).min(m / 2.0);
    let mut mother_coeffs: BTreeMap<MultiresIndex, f64> = BTreeMap::new();
    family.for_each_index(max_level, |idx| {
        if idx.is_father() {
            return;
        }
        let envelope = mother_budget * 2f64.powf(-(idx.level as f64) * (beta + d / 2.0));
        let v = (rng.random::<f64>() * 2.0 - 1.0) * envelope;
        mother_coeffs.insert(idx.clone(), v);
    })?;

    // shrink the oscillating part until the values fit the range
    let mut scale = 1.0f64;
    if half_span.is_finite() {
        let probe =
            FunctionRep::from_coefficients(family.clone(), max_level, mother_coeffs.clone());
        let dev = probe
            .eval_grid((max_level + 2).min(12))
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        if dev > 0.95 * half_span {
            scale = 0.95 * half_span / dev;
        }
    }
    for (idx, v) in mother_coeffs {
        coeffs.insert(idx, v * scale);
    }

    let out = FunctionRep::from_coefficients(family.clone(), max_level, coeffs);
    let norm = holder_coeff_norm(&out, beta)?;
    if norm > m * (1.0 + 1e-12) {
        return Err(Error::Construction(format!(
            "sampled function violates its own envelope: norm {norm} > {m}"
        )));
    }
    Ok(out)
}

/// Outcome law attached to the regression-type problems.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum OutcomeLaw {
    /// `Y ~ Bernoulli(mean(X))` (or the conditional mean the problem defines)
    Binary,
    /// `Y = mean(X) + epsilon` with `epsilon` uniform on `{-scale, +scale}`
    SignNoise { scale: f64 },
}

/// Shared positive bounds of a model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bounds {
    pub radius: f64,
    pub b_lo: f64,
    pub b_hi: f64,
}

/// A fully-specified data generating mechanism.
pub struct ModelSpec {
    pub problem: Problem,
    pub d: usize,
    /// `E(A|X)` for treatment; the `1/E(A|X)` parametrization for missing data
    pub a: Option<FunctionRep>,
    /// outcome regression function
    pub b: Option<FunctionRep>,
    /// treatment-effect contrast `c(x)`
    pub c: Option<FunctionRep>,
    /// design density (treatment/quadratic/variance) or `f/a` (missing)
    pub g: FunctionRep,
    pub outcome: OutcomeLaw,
    pub bounds: Bounds,
}

impl ModelSpec {
    /// Validate the probabilistic contracts: the X-marginal integrates to one
    /// and all conditional probabilities stay inside [0, 1] on a dense grid.
    pub fn validate(&self) -> Result<()> {
        let level = truth_quadrature_level(self.d).min(12);
        let marginal = self.marginal_density();
        let mass = marginal.integrate(level);
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::Construction(format!(
                "X-marginal integrates to {mass}, expected 1"
            )));
        }
        let grid = crate::numeric::dyadic_centers(level.min(10), self.d);
        for x in &grid {
            match self.problem {
                Problem::Treatment => {
                    let a = self.a.as_ref().unwrap().eval(x);
                    let b = self.b.as_ref().unwrap().eval(x);
                    let c = self.c.as_ref().map(|f| f.eval(x)).unwrap_or(0.0);
                    if !(0.0 < a && a < 1.0) {
                        return Err(Error::Construction(format!("a({x:?}) = {a} outside (0,1)")));
                    }
                    if matches!(self.outcome, OutcomeLaw::Binary) {
                        for arm in [0.0, 1.0] {
                            let p = c * (arm - a) + b;
                            if !(0.0..=1.0).contains(&p) {
                                return Err(Error::Construction(format!(
                                    "P(Y=1|A={arm},x) = {p} outside [0,1]"
                                )));
                            }
                        }
                    }
                }
                Problem::Missing => {
                    let a = self.a.as_ref().unwrap().eval(x);
                    if a < 1.0 {
                        return Err(Error::Construction(format!(
                            "missing-data a({x:?}) = {a} < 1 makes E(A|X) = 1/a > 1"
                        )));
                    }
                    if matches!(self.outcome, OutcomeLaw::Binary) {
                        let b = self.b.as_ref().unwrap().eval(x);
                        if !(0.0..=1.0).contains(&b) {
                            return Err(Error::Construction(format!(
                                "b({x:?}) = {b} outside [0,1]"
                            )));
                        }
                    }
                }
                Problem::Quadratic | Problem::Variance => {
                    if matches!(self.outcome, OutcomeLaw::Binary) {
                        let b = self.b.as_ref().unwrap().eval(x);
                        if !(0.0..=1.0).contains(&b) {
                            return Err(Error::Construction(format!(
                                "b({x:?}) = {b} outside [0,1]"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// The marginal density of `X`: `g` except in the missing-data model,
    /// where the marginal is `f = a g`.
    pub fn marginal_density(&self) -> FunctionRep {
        match self.problem {
            Problem::Missing => {
                let a = self.a.clone().unwrap();
                let g = self.g.clone();
                FunctionRep::from_fn(self.d, a.sup_bound() * g.sup_bound(), move |x| {
                    a.eval(x) * g.eval(x)
                })
            }
            _ => self.g.clone(),
        }
    }

    /// The target functional of this generator, by quadrature.
    pub fn truth(&self) -> f64 {
        let level = truth_quadrature_level(self.d);
        match self.problem {
            Problem::Treatment => {
                // E Cov(Y, A | X) = int c(x) a(x)(1 - a(x)) g(x) dx
                let a = self.a.clone().unwrap();
                let c = self.c.clone();
                let g = self.g.clone();
                let f = FunctionRep::from_fn(self.d, 1.0, move |x| {
                    let av = a.eval(x);
                    let cv = c.as_ref().map(|f| f.eval(x)).unwrap_or(0.0);
                    cv * av * (1.0 - av) * g.eval(x)
                });
                f.integrate(level)
            }
            Problem::Missing => {
                // E(Y) = int b f = int b a g
                let a = self.a.clone().unwrap();
                let b = self.b.clone().unwrap();
                let g = self.g.clone();
                let f = FunctionRep::from_fn(self.d, 1.0, move |x| {
                    b.eval(x) * a.eval(x) * g.eval(x)
                });
                f.integrate(level)
            }
            Problem::Quadratic => {
                let b = self.b.clone().unwrap();
                let g = self.g.clone();
                let f = FunctionRep::from_fn(self.d, 1.0, move |x| {
                    let bv = b.eval(x);
                    bv * bv * g.eval(x)
                });
                f.integrate(level)
            }
            Problem::Variance => match self.outcome {
                // homoscedastic by construction
                OutcomeLaw::SignNoise { scale } => scale * scale,
                OutcomeLaw::Binary => {
                    let b = self.b.clone().unwrap();
                    let g = self.g.clone();
                    let f = FunctionRep::from_fn(self.d, 1.0, move |x| {
                        let bv = b.eval(x);
                        bv * (1.0 - bv) * g.eval(x)
                    });
                    f.integrate(level)
                }
            },
        }
    }

    /// `E(a b)` under the generator (the treatment lower-bound functional).
    pub fn mean_ab(&self) -> Result<f64> {
        let a = self.a.clone().ok_or_else(|| Error::Parameter("model has no a".into()))?;
        let b = self.b.clone().ok_or_else(|| Error::Parameter("model has no b".into()))?;
        let g = self.g.clone();
        let f = FunctionRep::from_fn(self.d, 1.0, move |x| a.eval(x) * b.eval(x) * g.eval(x));
        Ok(f.integrate(truth_quadrature_level(self.d)))
    }
}

/// Inverse-CDF sampler for a 1-d density, tabulated once.
pub struct InverseCdf {
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn new(density: &FunctionRep, level: u32) -> Result<Self> {
        let cells = 1usize << level;
        let step = 1.0 / cells as f64;
        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = KahanSum::new();
        for i in 0..cells {
            let x = [(i as f64 + 0.5) * step];
            let v = density.eval(&x);
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Construction(format!("density value {v} at {x:?}")));
            }
            acc.add(v * step);
            cdf.push(acc.value());
        }
        let total = *cdf.last().unwrap();
        if total <= 0.0 {
            return Err(Error::Construction("density has zero mass".into()));
        }
        for v in cdf.iter_mut() {
            *v /= total;
        }
        Ok(InverseCdf { cdf })
    }

    pub fn sample(&self, u: f64) -> f64 {
        let cells = self.cdf.len() - 1;
        let mut lo = 0usize;
        let mut hi = cells;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c0 = self.cdf[lo];
        let c1 = self.cdf[hi];
        let fr = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        ((lo as f64 + fr) / cells as f64).clamp(0.0, 1.0)
    }
}

/// Sampler for `X ~ density` in any dimension: inverse CDF for d = 1,
/// envelope rejection for d >= 2 (erroring below 1% acceptance).
pub struct DesignSampler {
    d: usize,
    inverse: Option<InverseCdf>,
    density: Option<FunctionRep>,
    envelope: f64,
}

impl DesignSampler {
    pub fn new(density: &FunctionRep, d: usize) -> Result<Self> {
        if d == 1 {
            Ok(DesignSampler {
                d,
                inverse: Some(InverseCdf::new(density, 14)?),
                density: None,
                envelope: 0.0,
            })
        } else {
            let sup = density
                .eval_grid(if d == 2 { 7 } else { 4 })
                .iter()
                .fold(0.0f64, |a, v| a.max(*v));
            Ok(DesignSampler {
                d,
                inverse: None,
                density: Some(density.clone()),
                envelope: sup * 1.1 + 1e-9,
            })
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if let Some(inv) = &self.inverse {
            return Ok(vec![inv.sample(rng.random::<f64>())]);
        }
        let density = self.density.as_ref().unwrap();
        for _ in 0..1000usize {
            let x: Vec<f64> = (0..self.d).map(|_| rng.random::<f64>()).collect();
            let u = rng.random::<f64>() * self.envelope;
            if u <= density.eval(&x) {
                return Ok(x);
            }
        }
        // 1000 straight rejections: acceptance below ~0.1%
        Err(Error::Construction("rejection sampling efficiency below 1%".into()))
    }
}

/// Draw `n` i.i.d. observations from the model.
pub fn generate_dataset(spec: &ModelSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let sampler = DesignSampler::new(&spec.marginal_density(), spec.d)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = sampler.sample(rng)?;
        let w = match spec.problem {
            Problem::Treatment => {
                let a = spec.a.as_ref().unwrap().eval(&x);
                let arm = if rng.random::<f64>() < a { 1.0 } else { 0.0 };
                let mean = spec.c.as_ref().map(|f| f.eval(&x)).unwrap_or(0.0) * (arm - a)
                    + spec.b.as_ref().unwrap().eval(&x);
                let y = draw_outcome(mean, spec.outcome, rng);
                vec![y, arm]
            }
            Problem::Missing => {
                let a = spec.a.as_ref().unwrap().eval(&x);
                let observed = rng.random::<f64>() < 1.0 / a;
                let b = spec.b.as_ref().unwrap().eval(&x);
                // MAR: Y drawn regardless, emitted only when observed
                let y = draw_outcome(b, spec.outcome, rng);
                if observed {
                    vec![y, 1.0]
                } else {
                    vec![0.0, 0.0]
                }
            }
            Problem::Quadratic | Problem::Variance => {
                let b = spec.b.as_ref().unwrap().eval(&x);
                vec![draw_outcome(b, spec.outcome, rng)]
            }
        };
        out.push(Observation::new(w, x)?);
    }
    Ok(out)
}

fn draw_outcome(mean: f64, law: OutcomeLaw, rng: &mut ChaCha8Rng) -> f64 {
    match law {
        OutcomeLaw::Binary => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
        OutcomeLaw::SignNoise { scale } => {
            if rng.random::<f64>() < 0.5 {
                mean + scale
            } else {
                mean - scale
            }
        }
    }
}

/// Serializable description of one nuisance truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FunctionConfig {
    Constant { value: f64 },
    /// random Hölder draw mapped into `[lo, hi]`, reproducible from `seed`
    Holder { exponent: f64, radius: f64, max_level: u32, lo: f64, hi: f64, seed: u64 },
    /// random Hölder density with unit mass, values inside `[b_lo, b_hi]`
    HolderDensity { exponent: f64, radius: f64, max_level: u32, b_lo: f64, b_hi: f64, seed: u64 },
    UniformDensity,
}

impl FunctionConfig {
    pub fn build(&self, family: &WaveletFamily) -> Result<FunctionRep> {
        match self {
            FunctionConfig::Constant { value } => {
                Ok(FunctionRep::constant(family.dimension(), *value))
            }
            FunctionConfig::UniformDensity => Ok(FunctionRep::constant(family.dimension(), 1.0)),
            FunctionConfig::Holder { exponent, radius, max_level, lo, hi, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                sample_holder_function(
                    family,
                    *exponent,
                    *radius,
                    *max_level,
                    HolderTarget::Range { lo: *lo, hi: *hi },
                    &mut rng,
                )
            }
            FunctionConfig::HolderDensity { exponent, radius, max_level, b_lo, b_hi, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                sample_holder_function(
                    family,
                    *exponent,
                    *radius,
                    *max_level,
                    HolderTarget::Density { b_lo: *b_lo, b_hi: *b_hi },
                    &mut rng,
                )
            }
        }
    }
}

/// Serializable model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub a: Option<FunctionConfig>,
    pub b: Option<FunctionConfig>,
    pub c: Option<FunctionConfig>,
    pub g: FunctionConfig,
    pub outcome: OutcomeLaw,
}

impl ModelConfig {
    pub fn build(
        &self,
        problem: Problem,
        family: &WaveletFamily,
        bounds: Bounds,
    ) -> Result<ModelSpec> {
        let spec = ModelSpec {
            problem,
            d: family.dimension(),
            a: self.a.as_ref().map(|c| c.build(family)).transpose()?,
            b: self.b.as_ref().map(|c| c.build(family)).transpose()?,
            c: self.c.as_ref().map(|c| c.build(family)).transpose()?,
            g: self.g.build(family)?,
            outcome: self.outcome,
            bounds,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Full experiment description (the CLI `simulate` input).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Parameter("need at least 2 replicates".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter("n_grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// One completed replicate.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub problem: Problem,
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub estimate: f64,
    pub truth: f64,
    pub sq_error: f64,
}

/// One failed replicate (excluded from the CSV rows, echoed in the summary).
#[derive(Debug, Clone, Serialize)]
pub struct FailureRow {
    pub n: usize,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct NSummary {
    pub n: usize,
    pub replicates: usize,
    pub rmse: f64,
    pub mean_estimate: f64,
    pub truth: f64,
}

/// Results of a full experiment run.
#[derive(Debug, Clone, Serialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailureRow>,
    pub per_n: Vec<NSummary>,
}

/// OLS fit of `log RMSE` on `log(n / sqrt(ln n))`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub r_squared: f64,
}

/// Run the configured experiment: for each `n` and replicate, generate `3n`
/// observations, run the pipeline, and record the squared error against the
/// generator truth. Replicates execute in parallel on independent substreams
/// keyed by `(seed, n, rep)` and are collected in deterministic order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let family = WaveletFamily::from_spec(&config.pipeline.wavelet, config.pipeline.d)?;
    let spec = config.model.build(config.problem, &family, config.pipeline.bounds())?;
    let truth = spec.truth();

    let jobs: Vec<(usize, usize)> = config
        .n_grid
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |rep| (n, rep)))
        .collect();

    let outcomes: Vec<(usize, usize, u64, Result<f64>)> = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let rep_seed = substream_seed(config.seed, n as u64, rep as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            let mut run = || -> Result<f64> {
                let data = generate_dataset(&spec, 3 * n, &mut rng)?;
                let out = crate::functionals::run_pipeline(config.problem, &data, &config.pipeline)?;
                Ok(out.estimate)
            };
            (n, rep, rep_seed, run())
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (n, rep, rep_seed, outcome) in outcomes {
        match outcome {
            Ok(estimate) => {
                let sq = (estimate - truth) * (estimate - truth);
                rows.push(ResultRow {
                    problem: config.problem,
                    n,
                    rep,
                    seed: rep_seed,
                    estimate,
                    truth,
                    sq_error: sq,
                });
            }
            Err(e) => failures.push(FailureRow { n, rep, error: e.to_string() }),
        }
    }
    let total = rows.len() + failures.len();
    if failures.len() * 10 > total {
        return Err(Error::Numerical(format!(
            "{} of {} replicates failed; first: {}",
            failures.len(),
            total,
            failures[0].error
        )));
    }

    let mut per_n = Vec::new();
    for &n in &config.n_grid {
        let sub: Vec<&ResultRow> = rows.iter().filter(|r| r.n == n).collect();
        if sub.is_empty() {
            continue;
        }
        let mse = sub.iter().map(|r| r.sq_error).sum::<f64>() / sub.len() as f64;
        let mean = sub.iter().map(|r| r.estimate).sum::<f64>() / sub.len() as f64;
        per_n.push(NSummary { n, replicates: sub.len(), rmse: mse.sqrt(), mean_estimate: mean, truth });
    }
    Ok(ResultsTable { rows, failures, per_n })
}

/// Fit the empirical rate: OLS of `log RMSE` against `log(n / sqrt(ln n))`.
pub fn fit_rate(per_n: &[NSummary]) -> Result<RateFit> {
    if per_n.len() < 3 {
        return Err(Error::Parameter("rate fit needs at least 3 distinct n".into()));
    }
    let x: Vec<f64> = per_n
        .iter()
        .map(|s| (s.n as f64 / (s.n as f64).ln().sqrt()).ln())
        .collect();
    let y: Vec<f64> = per_n.iter().map(|s| s.rmse.ln()).collect();
    let (slope, intercept, slope_se, r_squared) =
        ols(&x, &y).ok_or_else(|| Error::Numerical("degenerate rate regressor".into()))?;
    Ok(RateFit { slope, intercept, slope_se, r_squared })
}

/// One calibrated window constant.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SupnormCalibration {
    pub constant: f64,
    pub attained: bool,
    pub overshoot_rate: f64,
}

/// Calibration of all three selection constants on a null model.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub reps: usize,
    pub target_quantile: f64,
    pub c_opt: crate::lepski::CalibrationOutcome,
    pub c_star: SupnormCalibration,
    pub c_dstar: SupnormCalibration,
}

/// Calibrate `C_opt`, `C*`, and `C**` by the quantile procedure: for each the
/// smallest constant from the fixed logarithmic candidate set whose selection
/// overshoots the per-replicate oracle level in at most `1 - target` of
/// replicates under the configured generator.
pub fn calibrate_constants(config: &ExperimentConfig, target: f64) -> Result<CalibrationReport> {
    use crate::functionals::quadratic_triple;
    use crate::functionals::SplitPlan;
    use crate::lepski::{c_opt_candidates, calibrate_copt};
    use crate::supnorm::{
        density_adaptive, density_candidates, regression_candidates, select_over_window,
        sup_distance,
    };

    let reps = config.replicates;
    if reps < 50 {
        return Err(Error::Parameter("calibration needs at least 50 replicates".into()));
    }
    let n = config.n_grid[0];
    let family = WaveletFamily::from_spec(&config.pipeline.wavelet, config.pipeline.d)?;
    let spec = config.model.build(config.problem, &family, config.pipeline.bounds())?;
    if !matches!(config.problem, Problem::Quadratic) {
        return Err(Error::Parameter(
            "constants are calibrated on the quadratic model; set problem = quadratic".into(),
        ));
    }
    let truth = spec.truth();
    let cfg = &config.pipeline;

    // C_opt on the second-order candidates with estimated nuisances
    let grid = crate::lepski::build_grid(n, cfg.d, cfg.grid_c, cfg.grid_mode)?;
    let gen = |rep: u64| -> Result<(Dataset, crate::ustat::InfluenceTriple, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, 1, rep));
        let data = generate_dataset(&spec, 3 * n, &mut rng)?;
        let split = SplitPlan::new(data.len(), cfg.shuffle_seed)?;
        let block3: Vec<Observation> = split.blocks[2].iter().map(|&i| data[i].clone()).collect();
        let block2: Vec<Observation> = split.blocks[1].iter().map(|&i| data[i].clone()).collect();
        let block1: Vec<Observation> = split.blocks[0].iter().map(|&i| data[i].clone()).collect();
        let window = crate::supnorm::ResolutionWindow::new(
            block3.len(),
            cfg.d,
            cfg.gamma_min,
            cfg.gamma_max,
            cfg.radius,
            cfg.b_lo,
            cfg.b_hi,
            family.base_level(),
        )?;
        let g_fit = density_adaptive(&block3, &family, &window, cfg.c_star)?;
        let reg_window = crate::supnorm::ResolutionWindow::new(
            block2.len(),
            cfg.d,
            cfg.beta_min,
            cfg.beta_max,
            cfg.radius,
            cfg.b_lo,
            cfg.b_hi,
            family.base_level(),
        )?;
        let b_fit = crate::supnorm::regression_adaptive(
            &block2,
            |o| o.w[0],
            &g_fit.estimate,
            &family,
            &reg_window,
            cfg.c_dstar,
        )?;
        Ok((block1, quadratic_triple(&b_fit.estimate, &g_fit.estimate, cfg), truth))
    };
    let c_opt = calibrate_copt(gen, &family, &grid, reps, target)?;

    // C* and C** on the window selections against the generator truths
    let candidates = c_opt_candidates();
    let mut star_overshoot = vec![0usize; candidates.len()];
    let mut dstar_overshoot = vec![0usize; candidates.len()];
    let g_truth = spec.g.clone();
    let b_truth = spec.b.clone().ok_or_else(|| Error::Parameter("model needs b".into()))?;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, 2, rep as u64));
        let data = generate_dataset(&spec, 3 * n, &mut rng)?;
        let split = SplitPlan::new(data.len(), cfg.shuffle_seed)?;
        let block3: Vec<Observation> = split.blocks[2].iter().map(|&i| data[i].clone()).collect();
        let block2: Vec<Observation> = split.blocks[1].iter().map(|&i| data[i].clone()).collect();
        let window = crate::supnorm::ResolutionWindow::new(
            block3.len(),
            cfg.d,
            cfg.gamma_min,
            cfg.gamma_max,
            cfg.radius,
            cfg.b_lo,
            cfg.b_hi,
            family.base_level(),
        )?;
        let grid_level = window.grid_level();
        let g_cands = density_candidates(&block3, &family, &window);
        let g_oracle = (0..g_cands.len())
            .min_by(|&i, &j| {
                let ei = sup_distance(&g_cands[i].1, &g_truth, grid_level);
                let ej = sup_distance(&g_cands[j].1, &g_truth, grid_level);
                ei.partial_cmp(&ej).unwrap()
            })
            .unwrap();
        for (ci, &c) in candidates.iter().enumerate() {
            let (pos, _) = select_over_window(&g_cands, c, cfg.d, block3.len(), grid_level);
            if pos > g_oracle {
                star_overshoot[ci] += 1;
            }
        }

        let g_fit = density_adaptive(&block3, &family, &window, cfg.c_star)?;
        let reg_window = crate::supnorm::ResolutionWindow::new(
            block2.len(),
            cfg.d,
            cfg.beta_min,
            cfg.beta_max,
            cfg.radius,
            cfg.b_lo,
            cfg.b_hi,
            family.base_level(),
        )?;
        let reg_grid_level = reg_window.grid_level();
        let b_cands =
            regression_candidates(&block2, |o| o.w[0], &g_fit.estimate, &family, &reg_window)?;
        let b_oracle = (0..b_cands.len())
            .min_by(|&i, &j| {
                let ei = sup_distance(&b_cands[i].1, &b_truth, reg_grid_level);
                let ej = sup_distance(&b_cands[j].1, &b_truth, reg_grid_level);
                ei.partial_cmp(&ej).unwrap()
            })
            .unwrap();
        for (ci, &c) in candidates.iter().enumerate() {
            let (pos, _) = select_over_window(&b_cands, c, cfg.d, block2.len(), reg_grid_level);
            if pos > b_oracle {
                dstar_overshoot[ci] += 1;
            }
        }
    }
    let allowed = (1.0 - target) * reps as f64;
    let pick = |overshoot: &[usize]| -> SupnormCalibration {
        for (ci, &c) in candidates.iter().enumerate() {
            if (overshoot[ci] as f64) <= allowed {
                return SupnormCalibration {
                    constant: c,
                    attained: true,
                    overshoot_rate: overshoot[ci] as f64 / reps as f64,
                };
            }
        }
        SupnormCalibration {
            constant: *candidates.last().unwrap(),
            attained: false,
            overshoot_rate: *overshoot.last().unwrap() as f64 / reps as f64,
        }
    };
    Ok(CalibrationReport {
        n,
        reps,
        target_quantile: target,
        c_opt,
        c_star: pick(&star_overshoot),
        c_dstar: pick(&dstar_overshoot),
    })
}

/// Emit the replicate table as CSV with the fixed column set.
pub fn emit_csv(results: &ResultsTable, path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    w.write_record(["problem", "n", "rep", "seed", "estimate", "truth", "sq_error"])?;
    for r in &results.rows {
        w.write_record([
            r.problem.to_string(),
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            format!("{:.17e}", r.estimate),
            format!("{:.17e}", r.truth),
            format!("{:.17e}", r.sq_error),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Emit the JSON summary: config echo, per-n RMSE, failures, and the rate fit
/// when the grid is long enough.
pub fn emit_json(
    config: &ExperimentConfig,
    results: &ResultsTable,
    path: &std::path::Path,
) -> Result<()> {
    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a ExperimentConfig,
        per_n: &'a [NSummary],
        failures: &'a [FailureRow],
        rate_fit: Option<RateFit>,
    }
    let rate_fit = fit_rate(&results.per_n).ok();
    let payload = Summary { config, per_n: &results.per_n, failures: &results.failures, rate_fit };
    let mut f =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let body = serde_json::to_string_pretty(&payload)?;
    f.write_all(body.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(b"\n").map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vanishing_radius_leaves_only_the_offset() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // the offset's father block must fit inside the radius, so the
        // admissible request keeps the oscillation negligible against it
        let h = sample_holder_function(
            &family,
            0.6,
            0.5 + 1e-9,
            4,
            HolderTarget::Range { lo: 0.2, hi: 0.8 },
            &mut rng,
        )
        .unwrap();
        for v in h.eval_grid(6) {
            assert_abs_diff_eq!(v, 0.5, epsilon = 1e-9);
        }
        // an offset that exhausts the radius is a construction error
        let err = sample_holder_function(
            &family,
            0.6,
            1e-9,
            4,
            HolderTarget::Range { lo: 0.2, hi: 0.8 },
            &mut rng,
        );
        assert!(err.is_err());
        // radius zero with no offset is the zero function
        let zero =
            sample_holder_function(&family, 0.6, 0.0, 4, HolderTarget::Plain, &mut rng).unwrap();
        for v in zero.eval_grid(6) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn sampled_function_certifies_its_ball() {
        let family = WaveletFamily::haar(1).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h =
                sample_holder_function(&family, 0.6, 1.0, 8, HolderTarget::Plain, &mut rng).unwrap();
            let norm = holder_coeff_norm(&h, 0.6).unwrap();
            assert!(norm <= 1.0 + 1e-12, "norm {norm}");
        }
    }

    #[test]
    fn density_mode_has_unit_mass() {
        let family = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = sample_holder_function(
            &family,
            0.8,
            2.0,
            7,
            HolderTarget::Density { b_lo: 0.5, b_hi: 1.5 },
            &mut rng,
        )
        .unwrap();
        assert_abs_diff_eq!(g.integrate(16), 1.0, epsilon = 1e-8);
        for v in g.eval_grid(9) {
            assert!((0.5..=1.5).contains(&v), "density value {v}");
        }
    }

    #[test]
    fn uniform_design_bernoulli_mean() {
        let spec = ModelSpec {
            problem: Problem::Quadratic,
            d: 1,
            a: None,
            b: Some(FunctionRep::constant(1, 0.5)),
            c: None,
            g: FunctionRep::constant(1, 1.0),
            outcome: OutcomeLaw::Binary,
            bounds: Bounds { radius: 1.0, b_lo: 0.5, b_hi: 2.0 },
        };
        spec.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let data = generate_dataset(&spec, n, &mut rng).unwrap();
        let mean = data.iter().map(|o| o.w[0]).sum::<f64>() / n as f64;
        // 3 standard errors of a Bernoulli(1/2) mean
        let se = (0.25f64 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn missing_data_masks_unobserved_outcomes() {
        let spec = ModelSpec {
            problem: Problem::Missing,
            d: 1,
            a: Some(FunctionRep::constant(1, 2.0)),
            b: Some(FunctionRep::constant(1, 0.5)),
            c: None,
            g: FunctionRep::constant(1, 0.5),
            outcome: OutcomeLaw::Binary,
            bounds: Bounds { radius: 1.0, b_lo: 0.25, b_hi: 3.0 },
        };
        spec.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data = generate_dataset(&spec, 20_000, &mut rng).unwrap();
        for o in &data {
            if o.w[1] == 0.0 {
                assert_eq!(o.w[0], 0.0, "YA must be zero when A = 0");
            }
        }
        // P(A = 1) = E(1/a) under the marginal f = a g: here exactly 1/2
        let p1 = data.iter().map(|o| o.w[1]).sum::<f64>() / data.len() as f64;
        let se = (0.25f64 / data.len() as f64).sqrt();
        assert!((p1 - 0.5).abs() < 3.0 * se, "P(A=1) = {p1}");
    }

    #[test]
    fn fixed_seed_reproduces_dataset() {
        let spec = ModelSpec {
            problem: Problem::Quadratic,
            d: 1,
            a: None,
            b: Some(FunctionRep::constant(1, 0.4)),
            c: None,
            g: FunctionRep::constant(1, 1.0),
            outcome: OutcomeLaw::SignNoise { scale: 0.2 },
            bounds: Bounds { radius: 1.0, b_lo: 0.5, b_hi: 2.0 },
        };
        let d1 = generate_dataset(&spec, 50, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let d2 = generate_dataset(&spec, 50, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        for (a, b) in d1.iter().zip(&d2) {
            assert_eq!(a.x[0].to_bits(), b.x[0].to_bits());
            assert_eq!(a.w[0].to_bits(), b.w[0].to_bits());
        }
    }

    #[test]
    fn rate_fit_recovers_synthetic_slopes() {
        let mk = |f: &dyn Fn(f64) -> f64| -> Vec<NSummary> {
            [500usize, 1000, 2000, 4000]
                .iter()
                .map(|&n| {
                    let x = n as f64 / (n as f64).ln().sqrt();
                    NSummary { n, replicates: 1, rmse: f(x), mean_estimate: 0.0, truth: 0.0 }
                })
                .collect()
        };
        let exact = fit_rate(&mk(&|x| 1.0 / x)).unwrap();
        assert_abs_diff_eq!(exact.slope, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(exact.r_squared, 1.0, epsilon = 1e-12);
        let flat = fit_rate(&mk(&|_| 0.37)).unwrap();
        assert_abs_diff_eq!(flat.slope, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_cdf_matches_uniform() {
        let g = FunctionRep::constant(1, 1.0);
        let inv = InverseCdf::new(&g, 12).unwrap();
        for u in [0.0, 0.25, 0.5, 0.99] {
            assert_abs_diff_eq!(inv.sample(u), u, epsilon = 1e-9);
        }
    }
}
