//! Compactly supported orthonormal wavelet bases on `[0,1]^d`, projection
//! kernels, projections, and the Hölder-ball machinery built on wavelet
//! coefficient envelopes.
//!
//! Two families are provided: Haar (exact closed form) and tabulated
//! boundary-corrected Daubechies-type families of order `S`, built once per
//! process by [`construct`] and shared behind an `Arc`.
//!
//! Conventions. The resolution-`j` projection space `V_j` is the span of the
//! scaling functions at level `j` (dimension `2^{jd}` for Haar, `(2^j+2S-2)^d`
//! for tabulated families), so `kernel_eval(j, ..)` sums scaling products at
//! level `j` only. Multiresolution coefficient sets consist of the father
//! block at the base level `J0` plus mother blocks at levels `J0..=L`; the
//! reconstruction from levels `J0..=L` is the projection onto `V_{L+1}`.

pub mod construct;
pub mod diag;

pub use diag::{diagnostics, WaveletDiagnostics};

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::FunctionRep;
use crate::numeric::{gl8, KahanSum};
use construct::{interp_table, FamilyTables, TABLE_RES_LOG2};

/// Which base pair the family uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    /// Exact closed-form Haar system (regularity 1).
    Haar,
    /// Tabulated boundary-corrected Daubechies-type family of the given order.
    Tabulated { order: u32 },
}

/// An orthonormal wavelet family on `[0,1]^d`. Cheap to clone; immutable and
/// shareable across threads after construction.
#[derive(Debug, Clone)]
pub struct WaveletFamily {
    kind: FamilyKind,
    regularity: u32,
    base_level: u32,
    dimension: usize,
    tables: Option<Arc<FamilyTables>>,
}

fn table_registry() -> &'static Mutex<std::collections::HashMap<u32, Arc<FamilyTables>>> {
    static REGISTRY: OnceLock<Mutex<std::collections::HashMap<u32, Arc<FamilyTables>>>> =
        OnceLock::new();
    REGISTRY.get_or_init(|| Mutex::new(std::collections::HashMap::new()))
}

impl WaveletFamily {
    /// The Haar family on `[0,1]^d`: `S = 1`, `J0 = 0`, no tables.
    pub fn haar(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Parameter("dimension must be >= 1".into()));
        }
        Ok(WaveletFamily {
            kind: FamilyKind::Haar,
            regularity: 1,
            base_level: 0,
            dimension,
            tables: None,
        })
    }

    /// Boundary-corrected Daubechies-type family of the given order
    /// (vanishing moments). Construction runs once per order per process.
    pub fn daubechies(order: u32, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Parameter("dimension must be >= 1".into()));
        }
        // order 2 has the roughest base pair (Hölder exponent ~0.55); its
        // interpolation error needs finer tables to hold the 1e-6
        // orthonormality tolerance across levels
        let res = if order == 2 { TABLE_RES_LOG2 + 3 } else { TABLE_RES_LOG2 };
        let tables = {
            let mut reg = table_registry().lock().unwrap();
            if let Some(t) = reg.get(&order) {
                t.clone()
            } else {
                let built = Arc::new(construct::build_tables(order, res)?);
                reg.insert(order, built.clone());
                built
            }
        };
        // smallest level at which the two edge zones cannot interact
        let need = 4 * order as i64 - 3;
        let mut base_level = 0u32;
        while (1i64 << base_level) < need {
            base_level += 1;
        }
        Ok(WaveletFamily {
            kind: FamilyKind::Tabulated { order },
            regularity: order,
            base_level,
            dimension,
            tables: Some(tables),
        })
    }

    pub fn from_spec(spec: &FamilySpec, dimension: usize) -> Result<Self> {
        match spec {
            FamilySpec::Haar => Self::haar(dimension),
            FamilySpec::Daubechies { order } => Self::daubechies(*order, dimension),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Regularity `S` of the base pair.
    pub fn regularity(&self) -> u32 {
        self.regularity
    }

    /// Base level `J0` of the father block.
    pub fn base_level(&self) -> u32 {
        self.base_level
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_haar(&self) -> bool {
        matches!(self.kind, FamilyKind::Haar)
    }

    /// Step of the numeric tables at unit scale (None for Haar).
    pub fn table_step(&self) -> Option<f64> {
        self.tables.as_ref().map(|t| t.step)
    }

    /// Same base system (kind), ignoring dimension.
    pub fn same_basis(&self, other: &WaveletFamily) -> bool {
        self.kind == other.kind
    }

    fn edges(&self) -> u32 {
        match self.kind {
            FamilyKind::Haar => 0,
            FamilyKind::Tabulated { order } => 2 * order - 2,
        }
    }

    fn boundary_mothers(&self) -> u32 {
        match self.kind {
            FamilyKind::Haar => 0,
            FamilyKind::Tabulated { order } => order - 1,
        }
    }

    /// Number of per-dimension scaling shifts at `level` (the set `Z_level`).
    pub fn scaling_slot_count(&self, level: u32) -> u32 {
        self.interior_scaling_count(level) + 2 * self.edges()
    }

    /// Number of per-dimension mother shifts at `level`.
    pub fn mother_slot_count(&self, level: u32) -> u32 {
        1u32 << level
    }

    fn interior_scaling_count(&self, level: u32) -> u32 {
        match self.kind {
            FamilyKind::Haar => 1 << level,
            FamilyKind::Tabulated { order } => (1u32 << level) + 2 - 2 * order,
        }
    }

    fn interior_mother_count(&self, level: u32) -> u32 {
        match self.kind {
            FamilyKind::Haar => 1 << level,
            FamilyKind::Tabulated { order } => (1u32 << level) + 2 - 2 * order,
        }
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level < self.base_level {
            return Err(Error::Domain(format!(
                "level {level} below base level {}",
                self.base_level
            )));
        }
        if level > 40 {
            return Err(Error::Domain(format!("level {level} too large")));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Domain(format!(
                "point has dimension {}, family expects {}",
                x.len(),
                self.dimension
            )));
        }
        for &c in x {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::Domain(format!("coordinate {c} outside [0,1]")));
            }
        }
        Ok(())
    }

    /// Evaluate a single 1-d scaling function `phi_{level,slot}` at `x`.
    fn eval_scaling_1d(&self, level: u32, slot: u32, x: f64) -> f64 {
        let scale = (1u64 << level) as f64;
        let amp = scale.sqrt();
        let t = scale * x;
        match self.kind {
            FamilyKind::Haar => {
                let k = slot as f64;
                let inside = if slot == (1u32 << level) - 1 {
                    (k..=k + 1.0).contains(&t)
                } else {
                    (k..k + 1.0).contains(&t)
                };
                if inside {
                    amp
                } else {
                    0.0
                }
            }
            FamilyKind::Tabulated { .. } => {
                let tables = self.tables.as_ref().unwrap();
                let e = self.edges();
                let interior = self.interior_scaling_count(level);
                if slot < e {
                    amp * interp_table(&tables.left_edge[slot as usize], tables.step, t)
                } else if slot < e + interior {
                    let k = (slot - e) as f64;
                    amp * interp_table(&tables.phi, tables.step, t - k)
                } else {
                    let i = (slot - e - interior) as usize;
                    amp * interp_table(&tables.right_edge[i], tables.step, scale - t)
                }
            }
        }
    }

    /// Evaluate a single 1-d mother function `psi_{level,slot}` at `x`.
    fn eval_mother_1d(&self, level: u32, slot: u32, x: f64) -> f64 {
        let scale = (1u64 << level) as f64;
        let amp = scale.sqrt();
        let t = scale * x;
        match self.kind {
            FamilyKind::Haar => {
                let k = slot as f64;
                let u = t - k;
                let last = slot == (1u32 << level) - 1;
                if (0.0..0.5).contains(&u) {
                    amp
                } else if u >= 0.5 && (u < 1.0 || (last && u <= 1.0)) {
                    -amp
                } else {
                    0.0
                }
            }
            FamilyKind::Tabulated { .. } => {
                let tables = self.tables.as_ref().unwrap();
                let b = self.boundary_mothers();
                let interior = self.interior_mother_count(level);
                if slot < b {
                    amp * interp_table(&tables.left_mother[slot as usize], tables.step, t)
                } else if slot < b + interior {
                    let k = (slot - b) as f64;
                    amp * interp_table(&tables.psi, tables.step, t - k)
                } else {
                    let i = (slot - b - interior) as usize;
                    amp * interp_table(&tables.right_mother[i], tables.step, scale - t)
                }
            }
        }
    }

    fn eval_1d(&self, level: u32, mother: bool, slot: u32, x: f64) -> f64 {
        if mother {
            self.eval_mother_1d(level, slot, x)
        } else {
            self.eval_scaling_1d(level, slot, x)
        }
    }

    /// Per-dimension support interval (in `[0,1]` coordinates) of a basis slot.
    fn support_1d(&self, level: u32, mother: bool, slot: u32) -> (f64, f64) {
        let scale = (1u64 << level) as f64;
        match self.kind {
            FamilyKind::Haar => {
                let k = slot as f64;
                (k / scale, (k + 1.0) / scale)
            }
            FamilyKind::Tabulated { order } => {
                let s = order as f64;
                let e = self.edges();
                let edge_len = (2.0 * s - 2.0) / scale;
                let mother_len = (4.0 * s - 3.0) / (2.0 * scale);
                if mother {
                    let b = self.boundary_mothers();
                    let interior = self.interior_mother_count(level);
                    if slot < b {
                        (0.0, mother_len)
                    } else if slot < b + interior {
                        let k = (slot - b) as f64;
                        (k / scale, (k + 2.0 * s - 1.0) / scale)
                    } else {
                        (1.0 - mother_len, 1.0)
                    }
                } else {
                    let interior = self.interior_scaling_count(level);
                    if slot < e {
                        (0.0, edge_len)
                    } else if slot < e + interior {
                        let k = (slot - e) as f64;
                        (k / scale, (k + 2.0 * s - 1.0) / scale)
                    } else {
                        (1.0 - edge_len, 1.0)
                    }
                }
            }
        }
    }

    /// Collect the per-dimension slots whose support contains `x` (scaling or
    /// mother type). O(S) slots independent of the level.
    fn slots_containing_1d(&self, level: u32, mother: bool, x: f64, out: &mut Vec<u32>) {
        out.clear();
        let scale = (1u64 << level) as f64;
        let t = scale * x;
        match self.kind {
            FamilyKind::Haar => {
                let cells = 1u32 << level;
                let k = (t.floor() as i64).clamp(0, cells as i64 - 1) as u32;
                out.push(k);
            }
            FamilyKind::Tabulated { order } => {
                let s = order as i64;
                let e = self.edges();
                let (b_cnt, interior) = if mother {
                    (self.boundary_mothers(), self.interior_mother_count(level))
                } else {
                    (e, self.interior_scaling_count(level))
                };
                let zone = if mother {
                    (4.0 * s as f64 - 3.0) / 2.0
                } else {
                    (2 * s - 2) as f64
                };
                if t <= zone {
                    for i in 0..b_cnt {
                        out.push(i);
                    }
                }
                // interior translates with k < t < k + 2S-1
                let lo = (t - (2.0 * s as f64 - 1.0)).floor() as i64;
                let hi = t.ceil() as i64;
                for k in lo..=hi {
                    if k >= 0 && (k as u32) < interior {
                        out.push(b_cnt + k as u32);
                    }
                }
                if scale - t <= zone {
                    for i in 0..b_cnt {
                        out.push(b_cnt + interior + i);
                    }
                }
            }
        }
    }

    fn validate_index(&self, idx: &MultiresIndex) -> Result<()> {
        let d = self.dimension;
        if idx.types.len() != d || idx.shift.len() != d {
            return Err(Error::Domain(format!(
                "index dimension mismatch (family d = {d})"
            )));
        }
        self.check_level(idx.level)?;
        let father = idx.types.iter().all(|&v| !v);
        if father && idx.level != self.base_level {
            return Err(Error::Domain(format!(
                "father-only block is permitted only at base level {}",
                self.base_level
            )));
        }
        for m in 0..d {
            let count = if idx.types[m] {
                self.mother_slot_count(idx.level)
            } else {
                self.scaling_slot_count(idx.level)
            };
            if idx.shift[m] >= count {
                return Err(Error::Domain(format!(
                    "shift {} outside Z_{} (count {count})",
                    idx.shift[m], idx.level
                )));
            }
        }
        Ok(())
    }


    /// Per-dimension scaling slots whose support contains `x`.
    pub fn slots_containing_scaling(&self, level: u32, x: f64, out: &mut Vec<u32>) {
        self.slots_containing_1d(level, false, x, out)
    }

    /// Per-dimension mother slots whose support contains `x`.
    pub fn slots_containing_mother(&self, level: u32, x: f64, out: &mut Vec<u32>) {
        self.slots_containing_1d(level, true, x, out)
    }

    /// Evaluate one per-dimension factor (scaling or mother) at `x`.
    pub fn eval_slot(&self, level: u32, mother: bool, slot: u32, x: f64) -> f64 {
        self.eval_1d(level, mother, slot, x)
    }

    /// Per-dimension support interval of a slot, clipped to `[0,1]`.
    pub fn slot_support(&self, level: u32, mother: bool, slot: u32) -> (f64, f64) {
        let (a, b) = self.support_1d(level, mother, slot);
        (a.max(0.0), b.min(1.0))
    }

    /// Classify a per-dimension slot: boundary block or interior translate.
    pub fn slot_class(&self, level: u32, mother: bool, slot: u32) -> SlotClass {
        match self.kind {
            FamilyKind::Haar => SlotClass::Interior(slot),
            FamilyKind::Tabulated { .. } => {
                let (edge, interior) = if mother {
                    (self.boundary_mothers(), self.interior_mother_count(level))
                } else {
                    (self.edges(), self.interior_scaling_count(level))
                };
                if slot < edge {
                    SlotClass::LeftEdge(slot)
                } else if slot < edge + interior {
                    SlotClass::Interior(slot - edge)
                } else {
                    SlotClass::RightEdge(slot - edge - interior)
                }
            }
        }
    }

    /// Evaluate a tensor basis element at `x`.
    ///
    /// `psi_{l,k}^v(x) = prod_m 2^{l/2} psi^{v_m}(2^l x_m - k_m)` with the
    /// boundary slots replacing translated interior functions near the edges.
    pub fn eval_basis(&self, idx: &MultiresIndex, x: &[f64]) -> Result<f64> {
        self.validate_index(idx)?;
        self.check_point(x)?;
        let mut prod = 1.0;
        for m in 0..self.dimension {
            prod *= self.eval_1d(idx.level, idx.types[m], idx.shift[m], x[m]);
            if prod == 0.0 {
                return Ok(0.0);
            }
        }
        Ok(prod)
    }

    /// 1-d scaling-block kernel at `level`: sum over slots containing both points.
    fn kernel_1d(&self, level: u32, mother: bool, x1: f64, x2: f64) -> f64 {
        if self.is_haar() && !mother {
            // exact closed form: 2^level on the shared dyadic cell
            let cells = 1u64 << level;
            let c1 = ((x1 * cells as f64) as u64).min(cells - 1);
            let c2 = ((x2 * cells as f64) as u64).min(cells - 1);
            return if c1 == c2 { (1u64 << level) as f64 } else { 0.0 };
        }
        let mut slots1 = Vec::new();
        let mut slots2 = Vec::new();
        self.slots_containing_1d(level, mother, x1, &mut slots1);
        self.slots_containing_1d(level, mother, x2, &mut slots2);
        let mut acc = 0.0;
        for &s1 in &slots1 {
            if slots2.contains(&s1) {
                acc += self.eval_1d(level, mother, s1, x1) * self.eval_1d(level, mother, s1, x2);
            }
        }
        acc
    }

    /// Projection kernel `K_{V_j}(x1, x2)`: the reproducing kernel of the span
    /// of scaling functions at level `j`, evaluated by enumerating only slots
    /// whose support contains the arguments. Factorizes over dimensions.
    pub fn kernel_eval(&self, j: u32, x1: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_level(j)?;
        self.check_point(x1)?;
        self.check_point(x2)?;
        let mut prod = 1.0;
        for m in 0..self.dimension {
            prod *= self.kernel_1d(j, false, x1[m], x2[m]);
            if prod == 0.0 {
                return Ok(0.0);
            }
        }
        Ok(prod)
    }

    /// The equivalent multilevel representation of the same kernel: father
    /// block at `J0` plus mother blocks at levels `J0..j`. Agrees with
    /// [`WaveletFamily::kernel_eval`] up to table interpolation error.
    pub fn kernel_eval_multilevel(&self, j: u32, x1: &[f64], x2: &[f64]) -> Result<f64> {
        self.check_level(j)?;
        self.check_point(x1)?;
        self.check_point(x2)?;
        let d = self.dimension;
        let j0 = self.base_level;
        let father: f64 = (0..d).map(|m| self.kernel_1d(j0, false, x1[m], x2[m])).product();
        let mut acc = father;
        for l in j0..j {
            // sum over nonzero type patterns v: (S_l + M_l)^{(x)d} - S_l^{(x)d}
            let mut with = 1.0;
            let mut without = 1.0;
            for m in 0..d {
                let s = self.kernel_1d(l, false, x1[m], x2[m]);
                let mo = self.kernel_1d(l, true, x1[m], x2[m]);
                with *= s + mo;
                without *= s;
            }
            acc += with - without;
        }
        Ok(acc)
    }

    /// Apply the kernel to a function: `x -> int K_{V_j}(x, y) h(y) dy`,
    /// i.e. the projection of `h` onto `V_j` evaluated at `x`.
    pub fn kernel_apply(&self, j: u32, h: &FunctionRep, x: &[f64], quad_level: u32) -> Result<f64> {
        self.check_level(j)?;
        self.check_point(x)?;
        let d = self.dimension;
        let mut slots = vec![Vec::new(); d];
        for m in 0..d {
            self.slots_containing_1d(j, false, x[m], &mut slots[m]);
        }
        let mut acc = KahanSum::new();
        let mut combo = vec![0usize; d];
        let mut idx = MultiresIndex {
            level: j,
            shift: vec![0; d],
            types: vec![false; d],
        };
        'outer: loop {
            for m in 0..d {
                idx.shift[m] = slots[m][combo[m]];
            }
            let at_x: f64 = (0..d)
                .map(|m| self.eval_1d(j, false, idx.shift[m], x[m]))
                .product();
            if at_x != 0.0 {
                let coeff = self.coefficient(&idx, h, quad_level)?;
                acc.add(at_x * coeff);
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
        Ok(acc.value())
    }

    /// Inner product `<h, Psi_idx>` by composite Gauss-Legendre on the dyadic
    /// cells of the index support at granularity `2^-quad_level`.
    pub fn coefficient(&self, idx: &MultiresIndex, h: &FunctionRep, quad_level: u32) -> Result<f64> {
        if let FunctionRep::Coefficients(c) = h {
            if c.family.same_basis(self) && c.family.dimension() == self.dimension {
                // orthonormality: the coefficient is stored or zero
                if idx.level <= c.max_level {
                    return Ok(c.coeffs.get(idx).copied().unwrap_or(0.0));
                }
                return Ok(0.0);
            }
        }
        let d = self.dimension;
        let q = quad_level.max(idx.level + 1);
        let step = 0.5f64.powi(q as i32);
        let mut lo = vec![0.0; d];
        let mut cells = vec![0usize; d];
        for m in 0..d {
            let (a, b) = self.support_1d(idx.level, idx.types[m], idx.shift[m]);
            let a = a.max(0.0);
            let b = b.min(1.0);
            lo[m] = (a / step).floor() * step;
            cells[m] = (((b - lo[m]) / step).ceil() as usize).max(1);
        }
        // tensor composite quadrature, dimension-recursive
        #[allow(clippy::too_many_arguments)]
        fn rec(
            fam: &WaveletFamily,
            idx: &MultiresIndex,
            h: &FunctionRep,
            step: f64,
            lo: &[f64],
            cells: &[usize],
            dim: usize,
            x: &mut Vec<f64>,
        ) -> f64 {
            let d = lo.len();
            if dim == d {
                let basis: f64 = (0..d)
                    .map(|m| fam.eval_1d(idx.level, idx.types[m], idx.shift[m], x[m].clamp(0.0, 1.0)))
                    .product();
                if basis == 0.0 {
                    return 0.0;
                }
                return basis * h.eval(x);
            }
            let mut acc = KahanSum::new();
            for c in 0..cells[dim] {
                let a = lo[dim] + c as f64 * step;
                let b = (a + step).min(1.0);
                if b <= a {
                    continue;
                }
                acc.add(gl8(a, b, |t| {
                    x[dim] = t;
                    rec(fam, idx, h, step, lo, cells, dim + 1, x)
                }));
            }
            acc.value()
        }
        let mut x = vec![0.0; d];
        let v = rec(self, idx, h, step, &lo, &cells, 0, &mut x);
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "quadrature produced non-finite coefficient at index {idx:?}"
            )));
        }
        Ok(v)
    }

    /// Visit every multiresolution index up to mother level `max_level`:
    /// the father block at `J0` and mother blocks at `J0..=max_level`.
    pub fn for_each_index<F: FnMut(&MultiresIndex)>(&self, max_level: u32, mut f: F) -> Result<()> {
        self.check_level(max_level)?;
        let d = self.dimension;
        let j0 = self.base_level;
        // father block: all types zero
        let father_count = self.scaling_slot_count(j0);
        let mut idx = MultiresIndex {
            level: j0,
            shift: vec![0; d],
            types: vec![false; d],
        };
        visit_shifts(&mut idx, &vec![father_count; d], &mut f);
        // mother blocks
        for level in j0..=max_level {
            idx.level = level;
            for pattern in 1..(1u32 << d) {
                let mut counts = vec![0u32; d];
                for m in 0..d {
                    let mother = pattern & (1 << m) != 0;
                    idx.types[m] = mother;
                    counts[m] = if mother {
                        self.mother_slot_count(level)
                    } else {
                        self.scaling_slot_count(level)
                    };
                }
                visit_shifts(&mut idx, &counts, &mut f);
            }
        }
        Ok(())
    }

    /// Project `h` onto the multiresolution span through mother level `j`
    /// (the projection onto `V_{j+1}` in kernel terms), returning coefficient
    /// form. `quad_level` sets the dyadic quadrature granularity for callable
    /// inputs; coefficient inputs over the same basis are restricted exactly.
    pub fn project(&self, j: u32, h: &FunctionRep, quad_level: u32) -> Result<FunctionRep> {
        self.check_level(j)?;
        if h.dimension() != self.dimension {
            return Err(Error::Domain("function/family dimension mismatch".into()));
        }
        let mut coeffs = BTreeMap::new();
        let mut failure: Option<Error> = None;
        self.for_each_index(j, |idx| {
            if failure.is_some() {
                return;
            }
            match self.coefficient(idx, h, quad_level) {
                Ok(v) => {
                    coeffs.insert(idx.clone(), v);
                }
                Err(e) => failure = Some(e),
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(FunctionRep::from_coefficients(self.clone(), j, coeffs))
    }
}

fn visit_shifts<F: FnMut(&MultiresIndex)>(idx: &mut MultiresIndex, counts: &[u32], f: &mut F) {
    let d = counts.len();
    for s in idx.shift.iter_mut() {
        *s = 0;
    }
    'outer: loop {
        f(idx);
        for m in 0..d {
            idx.shift[m] += 1;
            if idx.shift[m] < counts[m] {
                continue 'outer;
            }
            idx.shift[m] = 0;
        }
        break;
    }
}

/// Position of a per-dimension slot within its level's ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotClass {
    LeftEdge(u32),
    Interior(u32),
    RightEdge(u32),
}

/// Serializable family choice used in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FamilySpec {
    Haar,
    Daubechies { order: u32 },
}

/// Index of one tensor basis element: level, per-dimension shift (dense slot
/// in `Z_level`, edge blocks first), and per-dimension type bit (`true` for
/// mother). The all-scaling pattern is the father block, only valid at `J0`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiresIndex {
    pub level: u32,
    pub shift: Vec<u32>,
    pub types: Vec<bool>,
}

impl MultiresIndex {
    pub fn father(level: u32, shift: Vec<u32>) -> Self {
        let d = shift.len();
        MultiresIndex { level, shift, types: vec![false; d] }
    }

    pub fn is_father(&self) -> bool {
        self.types.iter().all(|&v| !v)
    }
}

/// Specification of a Hölder ball `H(beta, M)` via the wavelet coefficient
/// envelope `M 2^{-l(beta + d/2)}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HolderBallSpec {
    pub exponent: f64,
    pub radius: f64,
    pub dimension: usize,
    pub required_regularity: u32,
}

impl HolderBallSpec {
    pub fn new(exponent: f64, radius: f64, dimension: usize) -> Result<Self> {
        if exponent <= 0.0 || radius <= 0.0 {
            return Err(Error::Parameter("Hölder exponent and radius must be positive".into()));
        }
        Ok(HolderBallSpec {
            exponent,
            radius,
            dimension,
            required_regularity: exponent.floor() as u32 + 1,
        })
    }

    /// Membership via the coefficient norm. Requires a family regularity
    /// exceeding the exponent and a coefficient-form input; monotone in the
    /// radius by construction.
    pub fn contains(&self, h: &FunctionRep) -> Result<bool> {
        if let FunctionRep::Coefficients(c) = h {
            if (c.family.regularity() as f64) <= self.exponent {
                return Err(Error::Parameter(format!(
                    "family regularity {} must exceed the Hölder exponent {}",
                    c.family.regularity(),
                    self.exponent
                )));
            }
            if c.family.dimension() != self.dimension {
                return Err(Error::Domain("ball/function dimension mismatch".into()));
            }
        }
        Ok(holder_coeff_norm(h, self.exponent)? <= self.radius)
    }
}

/// Hölder-ball coefficient norm of a coefficient-form function:
/// `2^{J0(beta+d/2)} max |father coeffs| + sup_{l,k,v} 2^{l(beta+d/2)} |coeff|`
/// over the available levels. Membership in `H(beta, M)` holds iff the value
/// is at most `M`.
pub fn holder_coeff_norm(h: &FunctionRep, beta: f64) -> Result<f64> {
    let c = match h {
        FunctionRep::Coefficients(c) => c,
        FunctionRep::Callable(_) => {
            return Err(Error::Domain(
                "holder_coeff_norm requires coefficient form (project first)".into(),
            ))
        }
    };
    if c.coeffs.is_empty() {
        return Err(Error::Domain("empty coefficient set".into()));
    }
    let d = c.family.dimension() as f64;
    let j0 = c.family.base_level();
    let mut father_max = 0.0f64;
    let mut mother_sup = 0.0f64;
    for (idx, &v) in &c.coeffs {
        if idx.is_father() {
            father_max = father_max.max(v.abs());
        } else {
            let weight = 2f64.powf(idx.level as f64 * (beta + d / 2.0));
            mother_sup = mother_sup.max(weight * v.abs());
        }
    }
    Ok(2f64.powf(j0 as f64 * (beta + d / 2.0)) * father_max + mother_sup)
}

/// Write the family's numeric tables as `(function-id, knot, value)` CSV rows.
pub fn save_table_cache(family: &WaveletFamily, path: &std::path::Path) -> Result<()> {
    let tables = match &family.tables {
        Some(t) => t,
        None => {
            return Err(Error::Parameter(
                "haar families evaluate in closed form and have no tables to cache".into(),
            ))
        }
    };
    let mut w = csv::Writer::from_path(path).map_err(Error::Csv)?;
    w.write_record(["function_id", "knot", "value"])?;
    let mut dump = |id: &str, tab: &[f64]| -> Result<()> {
        for (i, v) in tab.iter().enumerate() {
            w.write_record([id, &format!("{}", i as f64 * tables.step), &format!("{v:.17e}")])?;
        }
        Ok(())
    };
    dump("phi", &tables.phi)?;
    dump("psi", &tables.psi)?;
    for (i, t) in tables.left_edge.iter().enumerate() {
        dump(&format!("left_edge_{i}"), t)?;
    }
    for (i, t) in tables.right_edge.iter().enumerate() {
        dump(&format!("right_edge_{i}"), t)?;
    }
    for (i, t) in tables.left_mother.iter().enumerate() {
        dump(&format!("left_mother_{i}"), t)?;
    }
    for (i, t) in tables.right_mother.iter().enumerate() {
        dump(&format!("right_mother_{i}"), t)?;
    }
    w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Rebuild a tabulated family of the given order from a cache written by
/// [`save_table_cache`], skipping the numeric construction.
pub fn load_table_cache(order: u32, dimension: usize, path: &std::path::Path) -> Result<WaveletFamily> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::Csv)?;
    let mut groups: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for record in reader.records() {
        let record = record.map_err(Error::Csv)?;
        let id = record[0].to_string();
        let knot: f64 = record[1].parse().map_err(|_| Error::Contract("bad knot field".into()))?;
        let value: f64 =
            record[2].parse().map_err(|_| Error::Contract("bad value field".into()))?;
        groups.entry(id).or_default().push((knot, value));
    }
    let take = |id: &str| -> Result<Vec<f64>> {
        let rows = groups
            .get(id)
            .ok_or_else(|| Error::Contract(format!("cache is missing table '{id}'")))?;
        Ok(rows.iter().map(|&(_, v)| v).collect())
    };
    let take_block = |prefix: &str, count: usize| -> Result<Vec<Vec<f64>>> {
        (0..count).map(|i| take(&format!("{prefix}_{i}"))).collect()
    };
    let phi = take("phi")?;
    let psi = take("psi")?;
    let phi_rows = groups["phi"].clone();
    if phi_rows.len() < 2 {
        return Err(Error::Contract("cache phi table too short".into()));
    }
    let step = phi_rows[1].0 - phi_rows[0].0;
    let e = (2 * order - 2) as usize;
    let tables = construct::FamilyTables {
        step,
        phi,
        psi,
        left_edge: take_block("left_edge", e)?,
        right_edge: take_block("right_edge", e)?,
        left_mother: take_block("left_mother", order as usize - 1)?,
        right_mother: take_block("right_mother", order as usize - 1)?,
    };
    let expect_len = ((2 * order - 1) as f64 / step).round() as usize + 1;
    if tables.phi.len() != expect_len || tables.psi.len() != expect_len {
        return Err(Error::Contract(format!(
            "cache tables have {} knots, expected {expect_len} for order {order}",
            tables.phi.len()
        )));
    }
    let need = 4 * order as i64 - 3;
    let mut base_level = 0u32;
    while (1i64 << base_level) < need {
        base_level += 1;
    }
    Ok(WaveletFamily {
        kind: FamilyKind::Tabulated { order },
        regularity: order,
        base_level,
        dimension,
        tables: Some(Arc::new(tables)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::FunctionRep;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn haar_father_is_one_on_unit_interval() {
        let f = WaveletFamily::haar(1).unwrap();
        let idx = MultiresIndex { level: 0, shift: vec![0], types: vec![false] };
        assert_abs_diff_eq!(f.eval_basis(&idx, &[0.3]).unwrap(), 1.0);
    }

    #[test]
    fn haar_mother_closed_form() {
        let f = WaveletFamily::haar(1).unwrap();
        let idx = MultiresIndex { level: 1, shift: vec![0], types: vec![true] };
        // 2^{1/2} * psi(2 * 0.1) with psi = +1 on the left half
        assert_abs_diff_eq!(f.eval_basis(&idx, &[0.1]).unwrap(), 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(f.eval_basis(&idx, &[0.3]).unwrap(), -(2f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn tabulated_zero_outside_support() {
        let f = WaveletFamily::daubechies(4, 1).unwrap();
        let j0 = f.base_level();
        // interior translate k = 0 at the base level: support [0, 7/16]
        let idx = MultiresIndex {
            level: j0,
            shift: vec![f.edges()],
            types: vec![false],
        };
        assert_eq!(f.eval_basis(&idx, &[0.9]).unwrap(), 0.0);
    }

    #[test]
    fn index_domain_errors() {
        let f = WaveletFamily::haar(1).unwrap();
        let bad_shift = MultiresIndex { level: 1, shift: vec![7], types: vec![true] };
        assert!(f.eval_basis(&bad_shift, &[0.5]).is_err());
        let idx = MultiresIndex { level: 1, shift: vec![0], types: vec![true] };
        assert!(f.eval_basis(&idx, &[1.5]).is_err());
        // father block above the base level is invalid
        let father_high = MultiresIndex { level: 2, shift: vec![0], types: vec![false] };
        assert!(f.eval_basis(&father_high, &[0.5]).is_err());
    }

    #[test]
    fn haar_kernel_examples() {
        let f = WaveletFamily::haar(1).unwrap();
        assert_abs_diff_eq!(f.kernel_eval(1, &[0.1], &[0.2]).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.kernel_eval(1, &[0.1], &[0.6]).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_symmetry_exact() {
        let f = WaveletFamily::daubechies(2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = [rng.random::<f64>()];
            let y = [rng.random::<f64>()];
            let j = f.base_level() + rng.random_range(0..3);
            let a = f.kernel_eval(j, &x, &y).unwrap();
            let b = f.kernel_eval(j, &y, &x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn kernel_matches_full_enumeration() {
        // support-local evaluation vs the full sum over every slot
        let f = WaveletFamily::daubechies(4, 1).unwrap();
        let j = f.base_level();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = [rng.random::<f64>()];
            let y = [rng.random::<f64>()];
            let fast = f.kernel_eval(j, &x, &y).unwrap();
            let mut full = 0.0;
            for s in 0..f.scaling_slot_count(j) {
                full += f.eval_slot(j, false, s, x[0]) * f.eval_slot(j, false, s, y[0]);
            }
            assert_abs_diff_eq!(fast, full, epsilon = 1e-10);
        }
    }

    #[test]
    fn kernel_two_representations_agree() {
        for order in [2u32, 4] {
            let f = WaveletFamily::daubechies(order, 1).unwrap();
            let j0 = f.base_level();
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let mut worst = 0.0f64;
            for _ in 0..40 {
                let x = [rng.random::<f64>()];
                let y = [rng.random::<f64>()];
                let j = j0 + rng.random_range(1..3);
                let single = f.kernel_eval(j, &x, &y).unwrap();
                let multi = f.kernel_eval_multilevel(j, &x, &y).unwrap();
                worst = worst.max((single - multi).abs());
            }
            assert!(worst < 2e-4 * 64.0, "order {order}: representations differ by {worst}");
        }
        // Haar: exact
        let f = WaveletFamily::haar(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..40 {
            let x = [rng.random::<f64>()];
            let y = [rng.random::<f64>()];
            let single = f.kernel_eval(4, &x, &y).unwrap();
            let multi = f.kernel_eval_multilevel(4, &x, &y).unwrap();
            assert_abs_diff_eq!(single, multi, epsilon = 1e-10);
        }
    }

    #[test]
    fn diagnostics_within_tolerances() {
        for order in [2u32, 4] {
            let f1 = WaveletFamily::daubechies(order, 1).unwrap();
            let d1 = diagnostics(&f1, 5, 1).unwrap();
            assert!(
                d1.orthonormality_delta < 1e-6,
                "order {order} d=1 orthonormality {}",
                d1.orthonormality_delta
            );
            assert!(
                d1.polynomial_reproduction_error < 1e-6,
                "order {order} d=1 reproduction {}",
                d1.polynomial_reproduction_error
            );
            let f2 = WaveletFamily::daubechies(order, 2).unwrap();
            let d2 = diagnostics(&f2, 5, 2).unwrap();
            assert!(d2.orthonormality_delta < 1e-6);
            assert!(d2.polynomial_reproduction_error < 1e-6);
        }
        let h = WaveletFamily::haar(2).unwrap();
        let dh = diagnostics(&h, 5, 3).unwrap();
        assert_eq!(dh.haar_closed_form_error, Some(0.0));
        assert!(dh.orthonormality_delta < 1e-12);
    }

    #[test]
    fn project_constant_haar() {
        let f = WaveletFamily::haar(1).unwrap();
        let h = FunctionRep::constant(1, 1.0);
        let proj = f.project(2, &h, 4).unwrap();
        let c = proj.as_coefficients().unwrap();
        for (idx, &v) in &c.coeffs {
            if idx.is_father() {
                assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn project_recovers_basis_element() {
        let f = WaveletFamily::haar(1).unwrap();
        let target = MultiresIndex { level: 1, shift: vec![0], types: vec![true] };
        let fam = f.clone();
        let t2 = target.clone();
        let h = FunctionRep::from_fn(1, 2.0, move |x| fam.eval_basis(&t2, x).unwrap());
        let proj = f.project(2, &h, 4).unwrap();
        let c = proj.as_coefficients().unwrap();
        for (idx, &v) in &c.coeffs {
            let want = if *idx == target { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(v, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn project_reconstructs_linear_function_tabulated() {
        let f = WaveletFamily::daubechies(2, 1).unwrap();
        let j = f.base_level() + 1;
        let h = FunctionRep::from_fn(1, 1.0, |x| x[0]);
        let proj = f.project(j, &h, j + 6).unwrap();
        let mut worst = 0.0f64;
        for i in 0..1024 {
            let x = [(i as f64 + 0.5) / 1024.0];
            worst = worst.max((proj.eval(&x) - x[0]).abs());
        }
        assert!(worst < 1e-5, "reconstruction error {worst}");
    }

    #[test]
    fn projection_idempotence() {
        let f = WaveletFamily::haar(1).unwrap();
        let h = FunctionRep::from_fn(1, 1.0, |x| (6.0 * x[0]).sin() * 0.4 + 0.5);
        let p1 = f.project(3, &h, 6).unwrap();
        let p2 = f.project(3, &p1, 6).unwrap();
        let c1 = p1.as_coefficients().unwrap();
        let c2 = p2.as_coefficients().unwrap();
        assert_eq!(c1.coeffs.len(), c2.coeffs.len());
        for (idx, &v) in &c1.coeffs {
            assert_abs_diff_eq!(v, c2.coeffs[idx], epsilon = 1e-10);
        }
    }

    #[test]
    fn projection_nesting() {
        let f = WaveletFamily::haar(1).unwrap();
        let h = FunctionRep::from_fn(1, 1.0, |x| x[0] * x[0]);
        let coarse = f.project(2, &h, 6).unwrap();
        let fine = f.project(4, &h, 6).unwrap();
        let cc = coarse.as_coefficients().unwrap();
        let cf = fine.as_coefficients().unwrap();
        for (idx, &v) in &cc.coeffs {
            assert_abs_diff_eq!(v, cf.coeffs[idx], epsilon = 1e-12);
        }
    }

    #[test]
    fn holder_norm_examples() {
        let f = WaveletFamily::haar(1).unwrap();
        // single mother coefficient 1 at level 2, beta = 0.5, d = 1
        let mut coeffs = BTreeMap::new();
        coeffs.insert(MultiresIndex { level: 2, shift: vec![1], types: vec![true] }, 1.0);
        let h = FunctionRep::from_coefficients(f.clone(), 2, coeffs);
        assert_abs_diff_eq!(holder_coeff_norm(&h, 0.5).unwrap(), 4.0, epsilon = 1e-12);

        // zero function: all stored coefficients vanish
        let zero = f.project(2, &FunctionRep::constant(1, 0.0), 4).unwrap();
        assert_abs_diff_eq!(holder_coeff_norm(&zero, 0.5).unwrap(), 0.0);

        // empty coefficient set is a domain error
        let empty = FunctionRep::from_coefficients(f, 2, BTreeMap::new());
        assert!(holder_coeff_norm(&empty, 0.5).is_err());
    }

    #[test]
    fn order_three_family_constructs() {
        let f = WaveletFamily::daubechies(3, 1).unwrap();
        assert_eq!(f.base_level(), 4); // smallest level with 2^J0 >= 4S-3 = 9
        assert_eq!(f.mother_slot_count(4), 16);
        assert_eq!(f.scaling_slot_count(4), 16 + 2 * 3 - 2); // 2^l + 2S - 2
        // a mid-domain evaluation lands on the interior translate branch
        let idx = MultiresIndex { level: 4, shift: vec![8], types: vec![false] };
        assert!(f.eval_basis(&idx, &[0.5]).unwrap().is_finite());
        assert!(WaveletFamily::daubechies(5, 1).is_err());
    }

    #[test]
    fn table_cache_roundtrip() {
        let f = WaveletFamily::daubechies(2, 1).unwrap();
        let dir = std::env::temp_dir().join("afe_wavelet_cache_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("db2.csv");
        save_table_cache(&f, &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert!(content.starts_with("function_id,knot,value"));
        assert!(content.contains("left_mother_0"));
        // a reloaded family evaluates identically
        let reloaded = load_table_cache(2, 1, &path).unwrap();
        assert_eq!(reloaded.base_level(), f.base_level());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = rng.random::<f64>();
            let level = f.base_level() + rng.random_range(0..2);
            let slot = rng.random_range(0..f.mother_slot_count(level));
            let a = f.eval_slot(level, true, slot, x);
            let b = reloaded.eval_slot(level, true, slot, x);
            assert!((a - b).abs() < 1e-12, "cache reload drifted: {a} vs {b}");
        }
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn base_tables_integrate_to_analytic_moments() {
        // the stored tables reproduce int phi = 1 and int psi = 0
        for order in [2u32, 4] {
            let f = WaveletFamily::daubechies(order, 1).unwrap();
            let step = f.table_step().unwrap();
            let j0 = f.base_level();
            let scale = (1u64 << j0) as f64;
            let amp = scale.sqrt();
            let sup = (2 * order - 1) as f64;
            let n = (sup / step).round() as usize;
            let mut phi_mass = 0.0;
            let mut psi_mass = 0.0;
            // first interior slots evaluated through the family surface
            let phi_slot = f.edges();
            let psi_slot = f.boundary_mothers();
            for i in 0..n {
                let u = (i as f64 + 0.5) * step;
                phi_mass += f.eval_slot(j0, false, phi_slot, u / scale) / amp * step;
                psi_mass += f.eval_slot(j0, true, psi_slot, u / scale) / amp * step;
            }
            assert_abs_diff_eq!(phi_mass, 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(psi_mass, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn holder_ball_spec_membership_is_monotone_in_radius() {
        let f = WaveletFamily::haar(1).unwrap();
        let mut coeffs = BTreeMap::new();
        coeffs.insert(MultiresIndex { level: 2, shift: vec![1], types: vec![true] }, 1.0);
        let h = FunctionRep::from_coefficients(f, 2, coeffs);
        // norm is 4.0 at beta = 0.5
        let tight = HolderBallSpec::new(0.5, 3.9, 1).unwrap();
        let loose = HolderBallSpec::new(0.5, 4.1, 1).unwrap();
        assert!(!tight.contains(&h).unwrap());
        assert!(loose.contains(&h).unwrap());
    }
}
