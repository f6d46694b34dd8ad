//! Multilevel B-spline representation `f ~ Q_kbar(f) + sum_k q_k(f)`.
//!
//! The detail `q_k = Q_k - Q_{k-1}` is expanded in level-`k` B-splines with
//! coefficients `c_{k,s} = a_{k,s} - a'_{k,s}`, where `a'_k` re-expresses the
//! level-`(k-1)` coefficients through the two-scale relation of `M`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::bspline::{
    level_index_bounds, level_len, local_values, refinement_mask, BSplineOrder, DyadicIndex,
};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::oracle::FunctionOracle;
use crate::quasi_interpolant::{
    a_coeffs_from_grid, a_functional_with, apply_along_axis, grid_values, Access, AxisMap,
    BoundaryExtension, LevelCoefficients, NdArray, QuasiInterpolantSpec,
};

/// Pairs `(m, weight)` with `2m + j - r = s`, `m in J(k-1)`, `0 <= j <= 2r`.
///
/// `weight = binom(2r, j) / 2^(2r-1)`; this is the refinement set of translate `s` at level `k`.
pub fn refinement_pairs(order: BSplineOrder, k: u32, s: i64) -> Vec<(i64, f64)> {
    assert!(k >= 1, "refinement pairs need k >= 1");
    let mask = refinement_mask(order).weights();
    let r = order.ri();
    let (lo, hi) = level_index_bounds(order, k - 1);
    let mut out = Vec::new();
    for (j, &w) in mask.iter().enumerate().rev() {
        let twice_m = s + r - j as i64;
        if twice_m.rem_euclid(2) == 0 && (lo..=hi).contains(&(twice_m / 2)) {
            out.push((twice_m / 2, w));
        }
    }
    out
}

fn refine_axis_map(order: BSplineOrder, k: u32) -> AxisMap {
    let (lo_c, _) = level_index_bounds(order, k - 1);
    let (lo, hi) = level_index_bounds(order, k);
    let rows = (lo..=hi)
        .map(|s| {
            refinement_pairs(order, k, s)
                .into_iter()
                .map(|(m, w)| ((m - lo_c) as usize, w))
                .collect()
        })
        .collect();
    AxisMap {
        rows,
        in_len: level_len(order, k - 1),
    }
}

/// Re-express level-`(k-1)` coefficients as level-`k` coefficients of the same spline on the cube.
pub fn refine(prev: &LevelCoefficients) -> LevelCoefficients {
    let order = prev.order();
    let k = prev.k + 1;
    let map = refine_axis_map(order, k);
    let mut arr = prev.as_array();
    for axis in (0..prev.dim()).rev() {
        arr = apply_along_axis(&arr, axis, &map);
    }
    LevelCoefficients::from_array(order, k, arr)
}

/// Detail coefficients `c_{k,s}` from the `a`-coefficients at levels `k - 1` and `k`.
///
/// With `a_prev = None` (level 0) the detail is `a_curr` itself.
pub fn c_coeffs(
    a_prev: Option<&LevelCoefficients>,
    a_curr: &LevelCoefficients,
    spec: &QuasiInterpolantSpec,
) -> Result<LevelCoefficients> {
    if a_curr.order() != spec.order() {
        return Err(Error::precondition("coefficients built with a different spline order"));
    }
    let Some(prev) = a_prev else {
        return Ok(a_curr.clone());
    };
    if prev.k + 1 != a_curr.k || prev.dim() != a_curr.dim() || prev.order() != a_curr.order() {
        return Err(Error::precondition(format!(
            "detail at level {} needs level-{} coefficients, got level {}",
            a_curr.k,
            a_curr.k.saturating_sub(1),
            prev.k
        )));
    }
    let refined = refine(prev);
    let mut out = a_curr.clone();
    for (c, p) in out.values_mut().iter_mut().zip(refined.values()) {
        *c -= p;
    }
    Ok(out)
}

/// `Q_kbar(f)` plus the dense details of levels `kbar+1..=K`.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub base_level: u32,
    pub base: LevelCoefficients,
    pub details: Vec<LevelCoefficients>,
}

impl Decomposition {
    pub fn top_level(&self) -> u32 {
        self.base_level + self.details.len() as u32
    }

    pub fn detail(&self, k: u32) -> Option<&LevelCoefficients> {
        k.checked_sub(self.base_level + 1)
            .and_then(|i| self.details.get(i as usize))
    }

    pub fn to_expansion(&self) -> SparseExpansion {
        let mut e = SparseExpansion::from_level(&self.base);
        for d in &self.details {
            e.extend_level(d);
        }
        e
    }
}

/// Decompose from level-`K` grid samples; levels below `K` reuse the coarser sub-grids.
pub fn decompose_from_grid(
    grid: &NdArray,
    spec: &QuasiInterpolantSpec,
    base_level: u32,
    top_level: u32,
) -> Result<Decomposition> {
    if base_level > top_level {
        return Err(Error::precondition(format!(
            "base level {base_level} exceeds top level {top_level}"
        )));
    }
    BoundaryExtension::new(spec.order(), base_level)?;
    let mut a_levels = Vec::new();
    for k in base_level..=top_level {
        let sub = subsample(grid, top_level, k);
        a_levels.push(a_coeffs_from_grid(&sub, spec, k)?);
    }
    let mut details = Vec::with_capacity(a_levels.len() - 1);
    for w in a_levels.windows(2) {
        details.push(c_coeffs(Some(&w[0]), &w[1], spec)?);
    }
    Ok(Decomposition {
        base_level,
        base: a_levels.swap_remove(0),
        details,
    })
}

/// `f = Q_kbar(f) + sum_{kbar < k <= K} q_k(f)`, reading the level-`K` grid through the ledger.
pub fn decompose(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    base_level: u32,
    top_level: u32,
) -> Result<Decomposition> {
    decompose_with(oracle, spec, base_level, top_level, Access::Metered)
}

pub fn decompose_with(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    base_level: u32,
    top_level: u32,
    access: Access,
) -> Result<Decomposition> {
    if base_level > top_level {
        return Err(Error::precondition(format!(
            "base level {base_level} exceeds top level {top_level}"
        )));
    }
    BoundaryExtension::new(spec.order(), base_level)?;
    let grid = grid_values(oracle, top_level, access)?;
    decompose_from_grid(&grid, spec, base_level, top_level)
}

/// Every `2^(fine-coarse)`-th node of a level-`fine` grid.
pub(crate) fn subsample(grid: &NdArray, fine: u32, coarse: u32) -> NdArray {
    if fine == coarse {
        return grid.clone();
    }
    let stride = 1usize << (fine - coarse);
    let side = (1usize << coarse) + 1;
    let d = grid.shape.len();
    let total = side.pow(d as u32);
    let mut out = NdArray::zeros(vec![side; d]);
    let mut idx = vec![0usize; d];
    for flat in 0..total {
        let mut rem = flat;
        for axis in (0..d).rev() {
            idx[axis] = (rem % side) * stride;
            rem /= side;
        }
        out.data[flat] = grid.get(&idx);
    }
    out
}

/// Discrete proxy `2^(-dk/p) ||{c_s}||_p` for `||sum_s c_s M_{k,s}||_p`.
pub fn level_norm(c: &LevelCoefficients, p: Exponent) -> f64 {
    let scale = (-(c.dim() as f64) * c.k as f64 * p.recip()).exp2();
    scale * p.norm(c.values())
}

/// Univariate `a'_{k,s}` as weights on level-`k` nodes.
fn a_prime_functional(
    spec: &QuasiInterpolantSpec,
    coarse_ext: &BoundaryExtension,
    k: u32,
    s: i64,
) -> Vec<(i64, f64)> {
    let mut acc: BTreeMap<i64, f64> = BTreeMap::new();
    for (m, w) in refinement_pairs(spec.order(), k, s) {
        for (node, v) in a_functional_with(spec, coarse_ext, m) {
            *acc.entry(2 * node).or_insert(0.0) += w * v;
        }
    }
    acc.into_iter().collect()
}

/// `c_{k,s}` (or `a_{k,s}` at the base level) as an explicit linear functional of level-`k` node values.
#[derive(Clone, Debug)]
pub struct CoefficientStencil {
    pub k: u32,
    pub s: Vec<i64>,
    fine: Vec<Vec<(i64, f64)>>,
    coarse: Option<Vec<Vec<(i64, f64)>>>,
}

/// Precomputed extensions for building stencils at one level.
pub struct StencilBuilder<'a> {
    spec: &'a QuasiInterpolantSpec,
    k: u32,
    fine_ext: BoundaryExtension,
    coarse_ext: Option<BoundaryExtension>,
}

impl<'a> StencilBuilder<'a> {
    /// Stencils of detail coefficients `c_{k,s}`; requires `k - 1 >= spec.min_level()`.
    pub fn detail(spec: &'a QuasiInterpolantSpec, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::precondition("detail stencils need k >= 1"));
        }
        Ok(Self {
            spec,
            k,
            fine_ext: BoundaryExtension::new(spec.order(), k)?,
            coarse_ext: Some(BoundaryExtension::new(spec.order(), k - 1)?),
        })
    }

    /// Stencils of base coefficients `a_{k,s}`.
    pub fn base(spec: &'a QuasiInterpolantSpec, k: u32) -> Result<Self> {
        Ok(Self {
            spec,
            k,
            fine_ext: BoundaryExtension::new(spec.order(), k)?,
            coarse_ext: None,
        })
    }

    pub fn build(&self, s: &[i64]) -> CoefficientStencil {
        let fine = s
            .iter()
            .map(|&si| a_functional_with(self.spec, &self.fine_ext, si))
            .collect();
        let coarse = self.coarse_ext.as_ref().map(|ce| {
            s.iter()
                .map(|&si| a_prime_functional(self.spec, ce, self.k, si))
                .collect()
        });
        CoefficientStencil {
            k: self.k,
            s: s.to_vec(),
            fine,
            coarse,
        }
    }
}

fn for_each_product(axes: &[Vec<(i64, f64)>], mut f: impl FnMut(&[i64], f64)) {
    if axes.iter().any(Vec::is_empty) {
        return;
    }
    let d = axes.len();
    let mut cursor = vec![0usize; d];
    let mut node = vec![0i64; d];
    loop {
        let mut w = 1.0;
        for a in 0..d {
            let (n, wa) = axes[a][cursor[a]];
            node[a] = n;
            w *= wa;
        }
        f(&node, w);
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            cursor[a] += 1;
            if cursor[a] < axes[a].len() {
                break;
            }
            cursor[a] = 0;
        }
    }
}

impl CoefficientStencil {
    /// Evaluate against node values `f(node)` where `node` indexes `2^-k * node`.
    pub fn apply<E>(&self, mut f: impl FnMut(&[i64]) -> std::result::Result<f64, E>) -> std::result::Result<f64, E> {
        let mut err = None;
        let mut total = 0.0;
        for_each_product(&self.fine, |n, w| {
            if err.is_none() {
                match f(n) {
                    Ok(v) => total += w * v,
                    Err(e) => err = Some(e),
                }
            }
        });
        let mut sub = 0.0;
        if let Some(coarse) = &self.coarse {
            for_each_product(coarse, |n, w| {
                if err.is_none() {
                    match f(n) {
                        Ok(v) => sub += w * v,
                        Err(e) => err = Some(e),
                    }
                }
            });
        }
        match err {
            Some(e) => Err(e),
            None => Ok(total - sub),
        }
    }

    /// Distinct level-`k` nodes the functional reads, sorted lexicographically.
    pub fn nodes(&self) -> Vec<Vec<i64>> {
        let mut set = BTreeSet::new();
        for_each_product(&self.fine, |n, _| {
            set.insert(n.to_vec());
        });
        if let Some(coarse) = &self.coarse {
            for_each_product(coarse, |n, _| {
                set.insert(n.to_vec());
            });
        }
        set.into_iter().collect()
    }

    /// Node coordinates `2^-k * node`.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let h = (self.k as f64).exp2().recip();
        self.nodes()
            .into_iter()
            .map(|n| n.into_iter().map(|v| v as f64 * h).collect())
            .collect()
    }
}

/// Largest number of distinct nodes read by one univariate detail functional.
///
/// A `d`-variate detail coefficient reads at most `width^d` nodes.
pub fn detail_stencil_width(spec: &QuasiInterpolantSpec) -> usize {
    let k0 = spec.min_level() + 1;
    let mut width = 0;
    for k in k0..k0 + 6 {
        let b = StencilBuilder::detail(spec, k).expect("levels above the minimum are valid");
        let (lo, hi) = level_index_bounds(spec.order(), k);
        for s in lo..=hi {
            width = width.max(b.build(&[s]).nodes().len());
        }
    }
    width
}

/// A finite combination `sum c M_{k,s}` of dyadic B-splines.
#[derive(Clone, Debug)]
pub struct SparseExpansion {
    order: BSplineOrder,
    dim: usize,
    terms: Vec<(DyadicIndex, f64)>,
    index: BTreeMap<u32, HashMap<u128, usize>>,
}

fn encode(order: BSplineOrder, k: u32, s: &[i64]) -> Option<u128> {
    let (lo, hi) = level_index_bounds(order, k);
    let side = (hi - lo + 1) as u128;
    let mut key = 0u128;
    for &si in s {
        if si < lo || si > hi {
            return None;
        }
        key = key.checked_mul(side)?.checked_add((si - lo) as u128)?;
    }
    Some(key)
}

impl SparseExpansion {
    pub fn new(order: BSplineOrder, dim: usize) -> Self {
        Self {
            order,
            dim,
            terms: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Dense expansion of one level's coefficients.
    pub fn from_level(c: &LevelCoefficients) -> Self {
        let mut e = Self::new(c.order(), c.dim());
        e.extend_level(c);
        e
    }

    /// Append a whole level; coefficients are added onto existing terms of that level.
    pub fn extend_level(&mut self, c: &LevelCoefficients) {
        for (s, v) in c.iter() {
            self.add(DyadicIndex::new(c.k, s), v)
                .expect("level coefficients are indexed on the cube");
        }
    }

    pub fn order(&self) -> BSplineOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(DyadicIndex, f64)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.index.keys().copied()
    }

    fn check(&self, idx: &DyadicIndex) -> Result<u128> {
        if idx.dim() != self.dim {
            return Err(Error::precondition(format!(
                "index of dimension {} in a {}-dimensional expansion",
                idx.dim(),
                self.dim
            )));
        }
        encode(self.order, idx.k, &idx.s).ok_or_else(|| {
            Error::precondition(format!("translate {:?} is not in J^d({})", idx.s, idx.k))
        })
    }

    /// Add a new term; duplicates and indices off the cube are rejected.
    pub fn push(&mut self, idx: DyadicIndex, c: f64) -> Result<()> {
        let key = self.check(&idx)?;
        let level = self.index.entry(idx.k).or_default();
        if level.contains_key(&key) {
            return Err(Error::precondition(format!(
                "duplicate term (k={}, s={:?})",
                idx.k, idx.s
            )));
        }
        level.insert(key, self.terms.len());
        self.terms.push((idx, c));
        Ok(())
    }

    /// Add `c` to the coefficient of `idx`, creating the term if needed.
    pub fn add(&mut self, idx: DyadicIndex, c: f64) -> Result<()> {
        let key = self.check(&idx)?;
        let level = self.index.entry(idx.k).or_default();
        match level.get(&key) {
            Some(&i) => self.terms[i].1 += c,
            None => {
                level.insert(key, self.terms.len());
                self.terms.push((idx, c));
            }
        }
        Ok(())
    }

    pub fn coefficient(&self, idx: &DyadicIndex) -> Option<f64> {
        let key = encode(self.order, idx.k, &idx.s)?;
        self.index
            .get(&idx.k)
            .and_then(|l| l.get(&key))
            .map(|&i| self.terms[i].1)
    }

    /// `sum c M_{k,s}(x)`, visiting only translates whose support contains `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        let width = 2 * self.order.r() as usize;
        let mut total = 0.0;
        let mut s = vec![0i64; d];
        for (&k, level) in &self.index {
            let locals: Vec<(i64, Vec<f64>)> =
                x.iter().map(|&xi| local_values(self.order, k, xi)).collect();
            let mut cursor = vec![0usize; d];
            'combos: loop {
                let mut w = 1.0;
                for a in 0..d {
                    s[a] = locals[a].0 + cursor[a] as i64;
                    w *= locals[a].1[cursor[a]];
                }
                if w != 0.0 {
                    if let Some(key) = encode(self.order, k, &s) {
                        if let Some(&i) = level.get(&key) {
                            total += self.terms[i].1 * w;
                        }
                    }
                }
                let mut a = d;
                loop {
                    if a == 0 {
                        break 'combos;
                    }
                    a -= 1;
                    cursor[a] += 1;
                    if cursor[a] < width {
                        break;
                    }
                    cursor[a] = 0;
                }
            }
        }
        total
    }

    /// CSV rows `k,s_1..s_d,coefficient` after a `# d=.. r=..` header line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# d={} r={}\nk", self.dim, self.order.r());
        for i in 1..=self.dim {
            let _ = write!(out, ",s_{i}");
        }
        out.push_str(",coefficient\n");
        for (idx, c) in &self.terms {
            let _ = write!(out, "{}", idx.k);
            for s in &idx.s {
                let _ = write!(out, ",{s}");
            }
            let _ = writeln!(out, ",{c:?}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty expansion CSV".into()))?;
        let mut d = None;
        let mut r = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("d=") {
                d = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("r=") {
                r = v.parse::<u32>().ok();
            }
        }
        let (d, r) = match (d, r) {
            (Some(d), Some(r)) if d > 0 => (d, r),
            _ => {
                return Err(Error::Parse(format!(
                    "expansion CSV header must record d and r, got {header:?}"
                )))
            }
        };
        let mut e = Self::new(BSplineOrder::new(r)?, d);
        for (lineno, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('k') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != d + 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    d + 2,
                    fields.len()
                )));
            }
            let bad = |e: &dyn std::fmt::Display| Error::Parse(format!("line {}: {e}", lineno + 2));
            let k: u32 = fields[0].parse().map_err(|e| bad(&e))?;
            let s = fields[1..=d]
                .iter()
                .map(|f| f.parse::<i64>().map_err(|e| bad(&e)))
                .collect::<Result<Vec<_>>>()?;
            let c: f64 = fields[d + 1].parse().map_err(|e| bad(&e))?;
            e.push(DyadicIndex::new(k, s), c)?;
        }
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::eval_cardinal;
    use crate::quasi_interpolant::{a_coeffs, apply_q};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ord(r: u32) -> BSplineOrder {
        BSplineOrder::new(r).unwrap()
    }

    #[test]
    fn refinement_pairs_brute_force_r1() {
        // 2m + j - 1 = s with m in J(0) = {0, 1}, 0 <= j <= 2.
        assert_eq!(refinement_pairs(ord(1), 1, -1), vec![(0, 0.5)]);
        assert_eq!(refinement_pairs(ord(1), 1, 0), vec![(0, 1.0)]);
        assert_eq!(refinement_pairs(ord(1), 1, 1), vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(refinement_pairs(ord(1), 1, 2), vec![(1, 1.0)]);
        assert_eq!(refinement_pairs(ord(1), 1, 3), vec![(1, 0.5)]);
        for s in [-3, -2, 4] {
            assert!(refinement_pairs(ord(1), 1, s).is_empty());
        }
        // At most r + 1 pairs for any s.
        for r in 1..=4 {
            let (lo, hi) = level_index_bounds(ord(r), 5);
            for s in lo..=hi {
                assert!(refinement_pairs(ord(r), 5, s).len() <= r as usize + 1);
            }
        }
    }

    #[test]
    fn level_zero_detail_is_a() {
        let spec = QuasiInterpolantSpec::piecewise_linear();
        let o = FunctionOracle::from_fn("f", 1, |x| x[0] * x[0]);
        let a0 = a_coeffs(&o, &spec, 0).unwrap();
        assert_eq!(c_coeffs(None, &a0, &spec).unwrap(), a0);
    }

    #[test]
    fn level_mismatch_rejected() {
        let spec = QuasiInterpolantSpec::cubic();
        let o = FunctionOracle::from_fn("f", 1, |x| x[0]);
        let a2 = a_coeffs(&o, &spec, 2).unwrap();
        let a4 = a_coeffs(&o, &spec, 4).unwrap();
        assert!(matches!(
            c_coeffs(Some(&a2), &a4, &spec),
            Err(Error::Precondition(_))
        ));
        assert!(decompose(&o, &spec, 5, 4).is_err());
    }

    #[test]
    fn pointwise_telescoping_r1_level1() {
        let spec = QuasiInterpolantSpec::piecewise_linear();
        let f = FunctionOracle::from_fn("sq", 1, |x| x[0] * x[0]);
        let a0 = a_coeffs(&f, &spec, 0).unwrap();
        let a1 = a_coeffs(&f, &spec, 1).unwrap();
        let c1 = c_coeffs(Some(&a0), &a1, &spec).unwrap();
        let q0 = SparseExpansion::from_level(&a0);
        let q1 = SparseExpansion::from_level(&a1);
        let d1 = SparseExpansion::from_level(&c1);
        for i in 0..1000 {
            let x = [i as f64 / 999.0];
            assert_abs_diff_eq!(d1.eval(&x), q1.eval(&x) - q0.eval(&x), epsilon = 1e-14);
        }
    }

    #[test]
    fn polynomial_details_vanish() {
        for spec in [QuasiInterpolantSpec::piecewise_linear(), QuasiInterpolantSpec::cubic()] {
            let deg = 2 * spec.r() as i32 - 1;
            let o = FunctionOracle::from_fn("p", 2, move |x| {
                (0.3 + x[0].powi(deg) - x[0]) * (1.0 - 2.0 * x[1].powi(deg))
            });
            let kb = spec.min_level();
            let dec = decompose(&o, &spec, kb, kb + 4).unwrap();
            for d in &dec.details {
                assert!(d.max_abs() < 1e-9, "level {} max {}", d.k, d.max_abs());
            }
        }
    }

    #[test]
    fn telescoping_2d_random_points() {
        let spec = QuasiInterpolantSpec::cubic();
        let o = FunctionOracle::from_fn("f", 2, |x| ((x[0] - 0.3).abs() + x[1]).sqrt());
        let dec = decompose(&o, &spec, 2, 6).unwrap();
        let e = dec.to_expansion();
        let q = apply_q(&o.fresh(), &spec, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            assert_abs_diff_eq!(e.eval(&x), q.eval(&x), epsilon = 1e-10);
        }
        assert_eq!(o.samples_used(), 65 * 65);
    }

    #[test]
    fn empty_telescope() {
        let spec = QuasiInterpolantSpec::cubic();
        let o = FunctionOracle::from_fn("f", 1, |x| x[0].exp());
        let dec = decompose(&o, &spec, 3, 3).unwrap();
        assert!(dec.details.is_empty());
        let q = apply_q(&o.fresh(), &spec, 3).unwrap();
        assert_eq!(dec.to_expansion().eval(&[0.37]), q.eval(&[0.37]));
    }

    #[test]
    fn stencils_match_dense_details() {
        for spec in [QuasiInterpolantSpec::piecewise_linear(), QuasiInterpolantSpec::cubic()] {
            let f = |x: &[f64]| (4.0 * x[0]).sin() * (1.0 + x[1]).ln();
            let o = FunctionOracle::from_fn("f", 2, f);
            let k = spec.min_level() + 3;
            let dec = decompose(&o, &spec, k - 1, k).unwrap();
            let c = &dec.details[0];
            let b = StencilBuilder::detail(&spec, k).unwrap();
            let h = (k as f64).exp2().recip();
            for (i, &v) in c.values().iter().enumerate() {
                let st = b.build(&c.index_of(i));
                let via = st
                    .apply::<()>(|n| Ok(f(&[n[0] as f64 * h, n[1] as f64 * h])))
                    .unwrap();
                assert_abs_diff_eq!(via, v, epsilon = 1e-12);
                for n in st.nodes() {
                    assert!(n.iter().all(|&j| (0..=(1i64 << k)).contains(&j)));
                }
            }
        }
    }

    #[test]
    fn stencil_widths() {
        // Hat: odd translates read s-1, s, s+1.
        assert_eq!(detail_stencil_width(&QuasiInterpolantSpec::piecewise_linear()), 3);
        // Cubic: even interior translates read s-4, s-2, s-1, s, s+1, s+2, s+4.
        assert_eq!(detail_stencil_width(&QuasiInterpolantSpec::cubic()), 7);
    }

    #[test]
    fn expansion_eval_basics() {
        let e = SparseExpansion::new(ord(2), 1);
        assert_eq!(e.eval(&[0.3]), 0.0);
        let mut e = SparseExpansion::new(ord(2), 1);
        e.push(DyadicIndex::new(3, vec![2]), 1.5).unwrap();
        assert_abs_diff_eq!(e.eval(&[0.25]), 1.5 * eval_cardinal(ord(2), 0.0));
        assert!(e.push(DyadicIndex::new(3, vec![2]), 1.0).is_err());
        assert!(e.push(DyadicIndex::new(3, vec![11]), 1.0).is_err());

        let c = LevelCoefficients::from_values(ord(1), 4, 1, vec![1.0; 17]).unwrap();
        let e = SparseExpansion::from_level(&c);
        for i in 0..=100 {
            assert_abs_diff_eq!(e.eval(&[i as f64 / 100.0]), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn level_norm_examples() {
        let inf = Exponent::INFINITY;
        let c = LevelCoefficients::from_values(ord(2), 3, 1, vec![-2.5; 11]).unwrap();
        assert_eq!(level_norm(&c, inf), 2.5);
        let mut v = vec![0.0; 11];
        v[4] = -3.0;
        let c = LevelCoefficients::from_values(ord(2), 3, 1, v).unwrap();
        assert_abs_diff_eq!(level_norm(&c, Exponent::new(1.0).unwrap()), 3.0 / 8.0);
    }

    #[test]
    fn single_term_l1_norm_matches_quadrature() {
        // integral |c M_{k,s}| = |c| 2^-k ||M||_1 with ||M||_1 = 1 for a cardinal B-spline.
        let o = ord(2);
        let k = 4;
        let mut e = SparseExpansion::new(o, 1);
        e.push(DyadicIndex::new(k, vec![8]), 3.0).unwrap();
        let n = 1 << 14;
        let quad: f64 = (0..n)
            .map(|i| e.eval(&[(i as f64 + 0.5) / n as f64]).abs())
            .sum::<f64>()
            / n as f64;
        let mut v = vec![0.0; level_len(o, k)];
        v[9] = 3.0;
        let c = LevelCoefficients::from_values(o, k, 1, v).unwrap();
        assert_abs_diff_eq!(level_norm(&c, Exponent::new(1.0).unwrap()), quad, epsilon = 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let spec = QuasiInterpolantSpec::cubic();
        let o = FunctionOracle::from_fn("f", 2, |x| x[0] - x[1] * 0.1);
        let e = apply_q(&o, &spec, 2).unwrap();
        let text = e.to_csv();
        assert!(text.starts_with("# d=2 r=2\nk,s_1,s_2,coefficient\n"));
        let back = SparseExpansion::from_csv(&text).unwrap();
        assert_eq!(back.terms(), e.terms());
        assert!(SparseExpansion::from_csv("k,s_1,coefficient\n").is_err());
    }

    #[test]
    fn perturbing_a_coefficient_moves_the_center_value() {
        let spec = QuasiInterpolantSpec::cubic();
        let o = FunctionOracle::from_fn("f", 2, |x| (x[0] * 3.0).cos() + x[1]);
        let dec = decompose(&o, &spec, 2, 5).unwrap();
        let e0 = dec.to_expansion();
        let mut dec2 = dec.clone();
        let eta = 1e-3;
        let pos = dec2.details[2].position(&[9, 20]).unwrap();
        dec2.details[2].values_mut()[pos] += eta;
        let e1 = dec2.to_expansion();
        let x = [9.0 / 32.0, 20.0 / 32.0];
        let m0 = eval_cardinal(ord(2), 0.0);
        assert_abs_diff_eq!(e1.eval(&x) - e0.eval(&x), eta * m0 * m0, epsilon = 1e-12);
    }
}
