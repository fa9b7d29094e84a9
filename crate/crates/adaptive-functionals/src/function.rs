//! Function representations: multiresolution coefficient form or an opaque
//! callable with declared metadata. Houses the functions `h` whose wavelet
//! coefficients, projections, and sup norms drive the estimators.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;
use crate::wavelet::{MultiresIndex, WaveletFamily};

/// Coefficient form: a map over [`MultiresIndex`] up to `max_level` (father
/// block at `J0` plus mother blocks `J0..=max_level`). Reconstruction equals
/// the projection of the original function onto `V_{max_level + 1}`.
#[derive(Clone)]
pub struct CoefficientForm {
    pub family: WaveletFamily,
    pub max_level: u32,
    pub coeffs: BTreeMap<MultiresIndex, f64>,
}

/// Shared evaluation handle on `[0,1]^d`.
pub type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Callable form: an arbitrary evaluation handle on `[0,1]^d` with a declared
/// sup bound.
#[derive(Clone)]
pub struct CallableForm {
    pub dimension: usize,
    pub sup_bound: f64,
    pub f: EvalFn,
}

/// Either representation of a function on `[0,1]^d`.
#[derive(Clone)]
pub enum FunctionRep {
    Coefficients(CoefficientForm),
    Callable(CallableForm),
}

impl std::fmt::Debug for FunctionRep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FunctionRep::Coefficients(c) => f
                .debug_struct("FunctionRep::Coefficients")
                .field("max_level", &c.max_level)
                .field("n_coeffs", &c.coeffs.len())
                .finish(),
            FunctionRep::Callable(c) => f
                .debug_struct("FunctionRep::Callable")
                .field("dimension", &c.dimension)
                .field("sup_bound", &c.sup_bound)
                .finish(),
        }
    }
}

impl FunctionRep {
    pub fn from_coefficients(
        family: WaveletFamily,
        max_level: u32,
        coeffs: BTreeMap<MultiresIndex, f64>,
    ) -> Self {
        FunctionRep::Coefficients(CoefficientForm { family, max_level, coeffs })
    }

    /// Wrap a closure with a declared sup bound.
    pub fn from_fn<F>(dimension: usize, sup_bound: f64, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        FunctionRep::Callable(CallableForm { dimension, sup_bound, f: Arc::new(f) })
    }

    /// The constant function.
    pub fn constant(dimension: usize, value: f64) -> Self {
        Self::from_fn(dimension, value.abs(), move |_| value)
    }

    pub fn dimension(&self) -> usize {
        match self {
            FunctionRep::Coefficients(c) => c.family.dimension(),
            FunctionRep::Callable(c) => c.dimension,
        }
    }

    /// Declared sup bound for callables; for coefficient form, the max over
    /// a dyadic grid two levels finer than the representation (exact for Haar).
    pub fn sup_bound(&self) -> f64 {
        match self {
            FunctionRep::Callable(c) => c.sup_bound,
            FunctionRep::Coefficients(c) => {
                let grid_level = (c.max_level + 2).min(12);
                self.eval_grid(grid_level)
                    .iter()
                    .fold(0.0f64, |acc, v| acc.max(v.abs()))
            }
        }
    }

    /// Pointwise evaluation. Coefficient form sums the basis elements whose
    /// support contains `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FunctionRep::Callable(c) => (c.f)(x),
            FunctionRep::Coefficients(c) => eval_coeffs(c, x),
        }
    }

    /// Evaluate on all points of the dyadic-center grid at `grid_level`.
    pub fn eval_grid(&self, grid_level: u32) -> Vec<f64> {
        crate::numeric::dyadic_centers(grid_level, self.dimension())
            .iter()
            .map(|x| self.eval(x))
            .collect()
    }

    /// Midpoint-rule integral over `[0,1]^d` at dyadic resolution `level`
    /// per axis.
    pub fn integrate(&self, level: u32) -> f64 {
        let d = self.dimension();
        let pts = crate::numeric::dyadic_centers(level, d);
        let vol = 1.0 / pts.len() as f64;
        let mut acc = KahanSum::new();
        for x in &pts {
            acc.add(self.eval(x));
        }
        acc.value() * vol
    }

    /// Largest mother level present plus one; the reconstruction is exact on
    /// dyadic cells finer than this (Haar).
    pub fn finest_level(&self) -> Option<u32> {
        match self {
            FunctionRep::Coefficients(c) => Some(c.max_level + 1),
            FunctionRep::Callable(_) => None,
        }
    }

    pub fn as_coefficients(&self) -> Result<&CoefficientForm> {
        match self {
            FunctionRep::Coefficients(c) => Ok(c),
            FunctionRep::Callable(_) => Err(Error::Domain(
                "operation requires coefficient form; call project() first".into(),
            )),
        }
    }

    /// Pointwise composition `g(h(x))` as a callable.
    pub fn compose<F>(&self, sup_bound: f64, g: F) -> FunctionRep
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let inner = self.clone();
        FunctionRep::from_fn(self.dimension(), sup_bound, move |x| g(inner.eval(x)))
    }
}

fn eval_coeffs(c: &CoefficientForm, x: &[f64]) -> f64 {
    let family = &c.family;
    let d = family.dimension();
    let j0 = family.base_level();
    let mut acc = KahanSum::new();
    let mut scaling_slots = vec![Vec::new(); d];
    let mut mother_slots = vec![Vec::new(); d];
    let mut idx = MultiresIndex { level: j0, shift: vec![0; d], types: vec![false; d] };
    for level in j0..=c.max_level {
        idx.level = level;
        for m in 0..d {
            family.slots_containing_scaling(level, x[m], &mut scaling_slots[m]);
            family.slots_containing_mother(level, x[m], &mut mother_slots[m]);
        }
        let pattern_start = if level == j0 { 0u32 } else { 1u32 };
        for pattern in pattern_start..(1u32 << d) {
            for m in 0..d {
                idx.types[m] = pattern & (1 << m) != 0;
            }
            let slots: Vec<&Vec<u32>> = (0..d)
                .map(|m| if idx.types[m] { &mother_slots[m] } else { &scaling_slots[m] })
                .collect();
            if slots.iter().any(|s| s.is_empty()) {
                continue;
            }
            let mut combo = vec![0usize; d];
            'outer: loop {
                for m in 0..d {
                    idx.shift[m] = slots[m][combo[m]];
                }
                if let Some(&v) = c.coeffs.get(&idx) {
                    if v != 0.0 {
                        let mut basis = 1.0;
                        for m in 0..d {
                            basis *= family.eval_slot(level, idx.types[m], idx.shift[m], x[m]);
                        }
                        acc.add(v * basis);
                    }
                }
                for m in 0..d {
                    combo[m] += 1;
                    if combo[m] < slots[m].len() {
                        continue 'outer;
                    }
                    combo[m] = 0;
                }
                break;
            }
        }
    }
    acc.value()
}
