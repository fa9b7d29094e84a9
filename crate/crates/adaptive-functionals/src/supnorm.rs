//! Sup-norm adaptive nuisance estimators: a wavelet-projection density
//! estimator and a plug-in regression estimator, each with its own Lepski
//! selection over a resolution window, followed by smooth truncation into the
//! pointwise bounds the downstream U-statistics require.

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::FunctionRep;
use crate::lepski::dyadic_floor_level;
use crate::numeric::dyadic_centers;
use crate::ustat::Observation;
use crate::wavelet::WaveletFamily;

/// The level window `[l_min, l_max]` with its defining parameters.
///
/// `2^{l_min d} = floor((n / ln n)^{1/(2 e_max/d + 1)})` and `l_max` likewise
/// with the smaller exponent, where the exponents are the smoothness range
/// being adapted over (`gamma` for densities, `beta` for regressions).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResolutionWindow {
    pub l_min: u32,
    pub l_max: u32,
    pub exponent_min: f64,
    pub exponent_max: f64,
    pub radius: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub n: usize,
    pub d: usize,
}

fn window_endpoint(n: usize, d: usize, exponent: f64) -> f64 {
    let nf = n as f64;
    (nf / nf.ln()).powf(1.0 / (2.0 * exponent / d as f64 + 1.0)).floor()
}

impl ResolutionWindow {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        d: usize,
        exponent_min: f64,
        exponent_max: f64,
        radius: f64,
        b_lo: f64,
        b_hi: f64,
        base_level: u32,
    ) -> Result<Self> {
        if n < 16 {
            return Err(Error::SampleSize(format!("window needs n >= 16, got {n}")));
        }
        if exponent_min <= 0.0 || exponent_max < exponent_min {
            return Err(Error::Parameter(
                "window exponents must satisfy 0 < min <= max".into(),
            ));
        }
        if !(0.0 < b_lo && b_lo < b_hi) {
            return Err(Error::Parameter("bounds must satisfy 0 < B_L < B_U".into()));
        }
        let l_min = dyadic_floor_level(window_endpoint(n, d, exponent_max), d).max(base_level);
        let l_max = dyadic_floor_level(window_endpoint(n, d, exponent_min), d).max(base_level);
        if l_min > l_max {
            return Err(Error::Parameter(format!(
                "empty resolution window: l_min {l_min} > l_max {l_max}"
            )));
        }
        Ok(ResolutionWindow {
            l_min,
            l_max,
            exponent_min,
            exponent_max,
            radius,
            b_lo,
            b_hi,
            n,
            d,
        })
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.l_min..=self.l_max
    }

    /// Default evaluation-grid level for sup norms: two levels past `l_max`.
    pub fn grid_level(&self) -> u32 {
        self.l_max + 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ClampKind {
    /// identity on `[lower, upper]`, range `[3 lower/4, 3 upper/2]`
    Density,
    /// identity on `[-upper, upper]`, range `[-3 upper/2, 3 upper/2]`
    Symmetric,
}

/// A fixed `C-infinity` clamp: identity on its core interval, monotone with
/// `|psi'| <= 1`, smoothly saturating outside. Built from the standard
/// `e^{-1/t}` step, with the transition zones `[lower/2, lower]` and
/// `[upper, 2 upper]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncationMap {
    pub lower: f64,
    pub upper: f64,
    /// range the output is guaranteed to stay in
    pub floor: f64,
    pub ceil: f64,
    /// recorded derivative bound (kappa)
    pub lipschitz: f64,
    kind: ClampKind,
}

/// `int_0^w s(t) dt` for the smooth step `s(t) = sigma(t)/(sigma(t)+sigma(1-t))`,
/// tabulated once. `s` is flat to infinite order at 0 and 1 and `I(1) = 1/2`.
const STEP_CELLS: usize = 4096;

fn step_integral(w: f64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let sigma = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
        let s = |t: f64| {
            let a = sigma(t);
            let b = sigma(1.0 - t);
            if a + b == 0.0 {
                0.0
            } else {
                a / (a + b)
            }
        };
        let h = 1.0 / STEP_CELLS as f64;
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(STEP_CELLS + 1);
        out.push(0.0);
        for i in 0..STEP_CELLS {
            let a = i as f64 * h;
            // Simpson per cell; s is smooth so this is ~1e-14 accurate
            acc += h / 6.0 * (s(a) + 4.0 * s(a + 0.5 * h) + s(a + h));
            out.push(acc);
        }
        out
    });
    if w <= 0.0 {
        return 0.0;
    }
    if w >= 1.0 {
        return table[STEP_CELLS] + (w - 1.0);
    }
    let pos = w * STEP_CELLS as f64;
    let i = (pos.floor() as usize).min(STEP_CELLS - 1);
    let fr = pos - i as f64;
    table[i] * (1.0 - fr) + table[i + 1] * fr
}

impl TruncationMap {
    /// Density clamp: value `x` on `[b_lo, b_hi]`, range within `[b_lo/2, 2 b_hi]`.
    pub fn density(b_lo: f64, b_hi: f64) -> Result<Self> {
        if !(0.0 < b_lo && b_lo < b_hi) {
            return Err(Error::Parameter("density clamp needs 0 < B_L < B_U".into()));
        }
        let half_span = 0.5 * step_integral(1.0);
        Ok(TruncationMap {
            lower: b_lo,
            upper: b_hi,
            floor: b_lo - 0.5 * b_lo * half_span * 2.0,
            ceil: b_hi + b_hi * (1.0 - step_integral(1.0)),
            lipschitz: 1.0,
            kind: ClampKind::Density,
        })
    }

    /// Symmetric clamp: value `x` on `[-b_hi, b_hi]`, range within `[-2 b_hi, 2 b_hi]`.
    pub fn symmetric(b_hi: f64) -> Result<Self> {
        if b_hi <= 0.0 {
            return Err(Error::Parameter("symmetric clamp needs B_U > 0".into()));
        }
        let ceil = b_hi + b_hi * (1.0 - step_integral(1.0));
        Ok(TruncationMap {
            lower: -b_hi,
            upper: b_hi,
            floor: -ceil,
            ceil,
            lipschitz: 1.0,
            kind: ClampKind::Symmetric,
        })
    }

    /// The clamp value at `x`.
    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            ClampKind::Symmetric => {
                let b = self.upper;
                if x.abs() <= b {
                    x
                } else {
                    x.signum() * upper_saturation(x.abs(), b)
                }
            }
            ClampKind::Density => {
                if x >= self.lower && x <= self.upper {
                    x
                } else if x > self.upper {
                    upper_saturation(x, self.upper)
                } else {
                    // lower transition over [lower/2, lower], floor 3 lower/4
                    let b = self.lower;
                    let w = ((b - x) / (0.5 * b)).min(1.0);
                    b - 0.5 * b * (w - step_integral_complement(w))
                }
            }
        }
    }
}

/// `B + B (w - I_s(w))` with `w = min((x - B)/B, 1)`: the saturating branch
/// above the identity zone; derivative `1 - s(w)` in `[0, 1]`.
fn upper_saturation(x: f64, b: f64) -> f64 {
    let w = ((x - b) / b).min(1.0);
    b + b * (w - step_integral(w))
}

/// `int_0^w (1 - s(t)) dt` restated for the lower branch.
fn step_integral_complement(w: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else if w >= 1.0 {
        1.0 - step_integral(1.0)
    } else {
        w - step_integral(w)
    }
}

/// Pointwise composition `psi(h(x))` as a callable representation.
pub fn smooth_truncate(h: &FunctionRep, map: TruncationMap) -> FunctionRep {
    let bound = map.ceil.abs().max(map.floor.abs());
    let inner = h.clone();
    FunctionRep::from_fn(h.dimension(), bound, move |x| map.apply(inner.eval(x)))
}

/// Max absolute difference over the dyadic-center grid of `2^{grid_level d}`
/// points. Exact for piecewise constants at or below the grid level.
pub fn sup_distance(h1: &FunctionRep, h2: &FunctionRep, grid_level: u32) -> f64 {
    debug_assert_eq!(h1.dimension(), h2.dimension());
    dyadic_centers(grid_level, h1.dimension())
        .iter()
        .fold(0.0f64, |acc, x| acc.max((h1.eval(x) - h2.eval(x)).abs()))
}

/// True iff the Hölder coefficient norm of `h` is within `c`.
pub fn holder_certificate(h: &FunctionRep, beta: f64, c: f64) -> Result<bool> {
    Ok(crate::wavelet::holder_coeff_norm(h, beta)? <= c)
}

/// Scaling-block estimate at one level: coefficients over the tensor slots.
struct LevelEstimate {
    family: WaveletFamily,
    level: u32,
    coeffs: Arc<Vec<f64>>,
}

impl LevelEstimate {
    /// `c_slot = (1/n) sum_i w_i Phi_slot(X_i)`, the coefficient form of
    /// `(1/n) sum_i w_i K_{V_level}(X_i, x)`.
    fn accumulate(
        family: &WaveletFamily,
        level: u32,
        data: &[Observation],
        weights: &[f64],
    ) -> Self {
        let d = family.dimension();
        let stride = family.scaling_slot_count(level) as usize;
        let mut coeffs = vec![0.0f64; stride.pow(d as u32)];
        let mut slot_buf: Vec<Vec<u32>> = vec![Vec::new(); d];
        let mut combo = vec![0usize; d];
        for (o, &w) in data.iter().zip(weights) {
            for m in 0..d {
                family.slots_containing_scaling(level, o.x[m], &mut slot_buf[m]);
            }
            combo.iter_mut().for_each(|c| *c = 0);
            'outer: loop {
                let mut flat = 0usize;
                let mut basis = 1.0;
                for m in 0..d {
                    let slot = slot_buf[m][combo[m]];
                    flat = flat * stride + slot as usize;
                    basis *= family.eval_slot(level, false, slot, o.x[m]);
                }
                coeffs[flat] += w * basis;
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
        let inv_n = 1.0 / data.len() as f64;
        for c in coeffs.iter_mut() {
            *c *= inv_n;
        }
        LevelEstimate { family: family.clone(), level, coeffs: Arc::new(coeffs) }
    }

    fn into_function(self) -> FunctionRep {
        let LevelEstimate { family, level, coeffs } = self;
        let d = family.dimension();
        let stride = family.scaling_slot_count(level) as usize;
        // crude sup bound for metadata
        let max_c = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let bound = max_c * 2f64.powf(level as f64 * d as f64 / 2.0) * (2 * d) as f64;
        FunctionRep::from_fn(d, bound, move |x| {
            let mut slot_buf: Vec<Vec<u32>> = vec![Vec::new(); d];
            for m in 0..d {
                family.slots_containing_scaling(level, x[m], &mut slot_buf[m]);
            }
            let mut acc = 0.0;
            let mut combo = vec![0usize; d];
            'outer: loop {
                let mut flat = 0usize;
                let mut basis = 1.0;
                for m in 0..d {
                    let slot = slot_buf[m][combo[m]];
                    flat = flat * stride + slot as usize;
                    basis *= family.eval_slot(level, false, slot, x[m]);
                }
                acc += coeffs[flat] * basis;
                for m in 0..d {
                    combo[m] += 1;
                    if combo[m] < slot_buf[m].len() {
                        continue 'outer;
                    }
                    combo[m] = 0;
                }
                break;
            }
            acc
        })
    }
}

/// One pairwise sup-distance check in a window selection.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WindowCheck {
    pub j: u32,
    pub l: u32,
    pub sup_dist: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Outcome of one adaptive fit.
#[derive(Debug, Clone, Serialize)]
pub struct SupnormTrace {
    pub kind: &'static str,
    pub constant: f64,
    pub levels: Vec<u32>,
    pub checks: Vec<WindowCheck>,
    pub selected_level: u32,
    pub grid_level: u32,
}

#[derive(Debug)]
pub struct SupnormFit {
    /// smooth-truncated estimate respecting the pointwise bounds
    pub estimate: FunctionRep,
    /// the selected candidate before truncation
    pub raw: FunctionRep,
    pub selected_level: u32,
    pub trace: SupnormTrace,
}

/// Threshold `C sqrt(2^{ld} l d / n)` of the window selection rules.
fn window_threshold(c: f64, level: u32, d: usize, n: usize) -> f64 {
    let k = 2f64.powi((level as usize * d) as i32);
    c * (k * level as f64 * d as f64 / n as f64).sqrt()
}

/// The window candidates of the density estimator, one per level.
pub fn density_candidates(
    data: &[Observation],
    family: &WaveletFamily,
    window: &ResolutionWindow,
) -> Vec<(u32, FunctionRep)> {
    let weights = vec![1.0; data.len()];
    window
        .levels()
        .map(|l| (l, LevelEstimate::accumulate(family, l, data, &weights).into_function()))
        .collect()
}

/// Apply the window selection rule to precomputed candidates: the coarsest
/// level within `C sqrt(2^{ld} l d / n)` of every finer candidate. Returns
/// the position within `candidates` and the audit records.
pub fn select_over_window(
    candidates: &[(u32, FunctionRep)],
    c_constant: f64,
    d: usize,
    n: usize,
    grid_level: u32,
) -> (usize, Vec<WindowCheck>) {
    lepski_over_window(candidates, c_constant, d, n, grid_level)
}

fn lepski_over_window(
    candidates: &[(u32, FunctionRep)],
    c_constant: f64,
    d: usize,
    n: usize,
    grid_level: u32,
) -> (usize, Vec<WindowCheck>) {
    let mut checks = Vec::new();
    let mut chosen = candidates.len() - 1;
    'outer: for (pos, (j, cand)) in candidates.iter().enumerate() {
        let mut ok = true;
        for (l, other) in candidates.iter().skip(pos) {
            let dist = sup_distance(cand, other, grid_level);
            let threshold = window_threshold(c_constant, *l, d, n);
            let pass = dist <= threshold;
            checks.push(WindowCheck { j: *j, l: *l, sup_dist: dist, threshold, pass });
            if !pass {
                ok = false;
            }
        }
        if ok {
            chosen = pos;
            break 'outer;
        }
    }
    (chosen, checks)
}

/// Adaptive density estimator: candidates `(1/n) sum_i K_{V_l}(X_i, .)` over
/// the window, selection by pairwise sup distance against
/// `C* sqrt(2^{ld} l d / n)`, then smooth truncation into `[B_L/2, 2 B_U]`.
pub fn density_adaptive(
    data: &[Observation],
    family: &WaveletFamily,
    window: &ResolutionWindow,
    c_star: f64,
) -> Result<SupnormFit> {
    if data.len() < 2 {
        return Err(Error::SampleSize("density estimation needs n >= 2".into()));
    }
    if c_star <= 0.0 {
        return Err(Error::Parameter("C* must be positive".into()));
    }
    let candidates = density_candidates(data, family, window);
    let grid_level = window.grid_level();
    let (pos, checks) = lepski_over_window(&candidates, c_star, window.d, data.len(), grid_level);
    let selected_level = candidates[pos].0;
    let raw = candidates[pos].1.clone();
    let map = TruncationMap::density(window.b_lo, window.b_hi)?;
    let estimate = smooth_truncate(&raw, map);
    Ok(SupnormFit {
        estimate,
        raw,
        selected_level,
        trace: SupnormTrace {
            kind: "density",
            constant: c_star,
            levels: window.levels().collect(),
            checks,
            selected_level,
            grid_level,
        },
    })
}

/// Adaptive regression estimator: candidates
/// `(1/n) sum_i response(O_i)/ghat(X_i) K_{V_j}(X_i, .)` with Lepski selection
/// and symmetric truncation to `|f| <= 2 B_U`. Requires the density plug-in
/// to respect its lower bound `B_L/2`.
/// The window candidates of the plug-in regression estimator.
pub fn regression_candidates<R>(
    data: &[Observation],
    response: R,
    ghat: &FunctionRep,
    family: &WaveletFamily,
    window: &ResolutionWindow,
) -> Result<Vec<(u32, FunctionRep)>>
where
    R: Fn(&Observation) -> f64,
{
    let floor = window.b_lo / 2.0;
    let weights: Vec<f64> = data
        .iter()
        .map(|o| {
            let g = ghat.eval(&o.x);
            if g < floor * (1.0 - 1e-9) {
                return f64::NAN;
            }
            response(o) / g
        })
        .collect();
    if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
        return Err(Error::Contract(format!(
            "density plug-in below B_L/2 at observation {i}: truncation broken upstream"
        )));
    }
    Ok(window
        .levels()
        .map(|l| (l, LevelEstimate::accumulate(family, l, data, &weights).into_function()))
        .collect())
}

pub fn regression_adaptive<R>(
    data: &[Observation],
    response: R,
    ghat: &FunctionRep,
    family: &WaveletFamily,
    window: &ResolutionWindow,
    c_dstar: f64,
) -> Result<SupnormFit>
where
    R: Fn(&Observation) -> f64,
{
    if data.len() < 2 {
        return Err(Error::SampleSize("regression estimation needs n >= 2".into()));
    }
    if c_dstar <= 0.0 {
        return Err(Error::Parameter("C** must be positive".into()));
    }
    let candidates = regression_candidates(data, response, ghat, family, window)?;
    let grid_level = window.grid_level();
    let (pos, checks) = lepski_over_window(&candidates, c_dstar, window.d, data.len(), grid_level);
    let selected_level = candidates[pos].0;
    let raw = candidates[pos].1.clone();
    let map = TruncationMap::symmetric(window.b_hi)?;
    let estimate = smooth_truncate(&raw, map);
    Ok(SupnormFit {
        estimate,
        raw,
        selected_level,
        trace: SupnormTrace {
            kind: "regression",
            constant: c_dstar,
            levels: window.levels().collect(),
            checks,
            selected_level,
            grid_level,
        },
    })
}
