//! Quasi-interpolants `Q_m` on the unit cube.
//!
//! A univariate even mask `lambda(j)`, `|j| <= mu`, defines the coefficient
//! functional `a_{m,s}(f) = sum_j lambda(j) f_m(2^-m (s - j))`, where `f_m` is
//! `f` extended past the ends of `[0,1]` by Lagrange extrapolation of degree
//! `2r - 1` through the `2r` outermost grid nodes. Multivariate coefficients
//! tensorize the univariate functional axis by axis.

use serde::{Deserialize, Serialize};

use crate::bspline::{eval_cardinal, level_index_bounds, level_len, BSplineOrder};
use crate::error::{Error, Result};
use crate::multilevel::SparseExpansion;
use crate::oracle::FunctionOracle;
use crate::par;

/// Tolerance of the monomial reproduction check run when a spec is built.
pub const REPRODUCTION_TOL: f64 = 1e-8;

/// Order `r` plus an even univariate mask `lambda(-mu..=mu)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct QuasiInterpolantSpec {
    order: BSplineOrder,
    mu: u32,
    lambda: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    r: u32,
    mu: u32,
    lambda: Vec<f64>,
}

impl TryFrom<RawSpec> for QuasiInterpolantSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        Self::new(BSplineOrder::new(raw.r)?, raw.mu, raw.lambda)
    }
}

impl From<QuasiInterpolantSpec> for RawSpec {
    fn from(s: QuasiInterpolantSpec) -> Self {
        RawSpec {
            r: s.order.r(),
            mu: s.mu,
            lambda: s.lambda,
        }
    }
}

/// Names accepted by [`QuasiInterpolantSpec::builtin`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinSpec {
    PiecewiseLinear,
    Cubic,
}

impl std::str::FromStr for BuiltinSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise_linear" | "piecewise-linear" | "linear" | "nodal" => {
                Ok(Self::PiecewiseLinear)
            }
            "cubic" => Ok(Self::Cubic),
            other => Err(Error::config(format!(
                "unknown quasi-interpolant {other:?} (expected piecewise_linear or cubic)"
            ))),
        }
    }
}

impl QuasiInterpolantSpec {
    /// Validate evenness and polynomial reproduction up to degree `2r - 1`.
    pub fn new(order: BSplineOrder, mu: u32, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != 2 * mu as usize + 1 {
            return Err(Error::config(format!(
                "mask of radius {mu} needs {} weights, got {}",
                2 * mu + 1,
                lambda.len()
            )));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("mask weights must be finite"));
        }
        for j in 0..lambda.len() / 2 {
            let (a, b) = (lambda[j], lambda[lambda.len() - 1 - j]);
            if (a - b).abs() > 1e-14 * (1.0 + a.abs()) {
                return Err(Error::config(format!(
                    "mask is not even: lambda({}) = {a} but lambda({}) = {b}",
                    j as i64 - mu as i64,
                    mu as i64 - j as i64
                )));
            }
        }
        let spec = Self { order, mu, lambda };
        spec.check_reproduction()?;
        Ok(spec)
    }

    pub fn builtin(which: BuiltinSpec) -> Self {
        match which {
            BuiltinSpec::PiecewiseLinear => Self {
                order: BSplineOrder::new(1).unwrap(),
                mu: 0,
                lambda: vec![1.0],
            },
            BuiltinSpec::Cubic => Self {
                order: BSplineOrder::new(2).unwrap(),
                mu: 1,
                lambda: vec![-1.0 / 6.0, 8.0 / 6.0, -1.0 / 6.0],
            },
        }
    }

    /// Builtin by name, e.g. `"cubic"`.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(Self::builtin(name.parse()?))
    }

    pub fn piecewise_linear() -> Self {
        Self::builtin(BuiltinSpec::PiecewiseLinear)
    }

    pub fn cubic() -> Self {
        Self::builtin(BuiltinSpec::Cubic)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn order(&self) -> BSplineOrder {
        self.order
    }

    pub fn r(&self) -> u32 {
        self.order.r()
    }

    pub fn mu(&self) -> u32 {
        self.mu
    }

    /// Mask weight `lambda(j)`, zero outside `[-mu, mu]`.
    pub fn lambda(&self, j: i64) -> f64 {
        let mu = self.mu as i64;
        if j.abs() > mu {
            0.0
        } else {
            self.lambda[(j + mu) as usize]
        }
    }

    pub fn lambda_slice(&self) -> &[f64] {
        &self.lambda
    }

    /// `||Lambda|| = sum_j |lambda(j)|` of the univariate mask.
    pub fn mask_norm(&self) -> f64 {
        self.lambda.iter().map(|v| v.abs()).sum()
    }

    /// Coarsest level at which the boundary extension is defined (`2^m + 1 >= 2r`).
    pub fn min_level(&self) -> u32 {
        let need = 2 * self.r() as usize;
        (0..).find(|&m| (1usize << m) + 1 >= need).unwrap()
    }

    fn check_reproduction(&self) -> Result<()> {
        // Shift-invariant operator on R: Q(p)(x) = sum_s (sum_j lambda(j) p(s - j)) M(x - s).
        let r = self.order.ri();
        let mu = self.mu as i64;
        for deg in 0..self.order.order() as i32 {
            for step in 0..=16 {
                let x = step as f64 / 16.0;
                let p = |t: f64| t.powi(deg);
                let lo = (x - r as f64).floor() as i64;
                let mut q = 0.0;
                for s in lo..=lo + 2 * r + 1 {
                    let coeff: f64 = (-mu..=mu).map(|j| self.lambda(j) * p((s - j) as f64)).sum();
                    q += coeff * eval_cardinal(self.order, x - s as f64);
                }
                if (q - p(x)).abs() > REPRODUCTION_TOL {
                    return Err(Error::config(format!(
                        "mask does not reproduce x^{deg}: Q(x^{deg})({x}) = {q}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lagrange extrapolation of grid samples past the ends of `[0, 1]` at level `m`.
///
/// Nodes are `x_j = j 2^-m`; exterior values come from the degree-`2r-1`
/// interpolant through `x_0..x_{2r-1}` (left) or `x_{2^m-2r+1}..x_{2^m}` (right).
#[derive(Clone, Debug)]
pub struct BoundaryExtension {
    pub m: u32,
    order: BSplineOrder,
    left_nodes: Vec<i64>,
    right_nodes: Vec<i64>,
}

impl BoundaryExtension {
    pub fn new(order: BSplineOrder, m: u32) -> Result<Self> {
        let n = 1i64 << m;
        let p = 2 * order.ri();
        if n + 1 < p {
            return Err(Error::precondition(format!(
                "level-{m} grid has {} nodes per axis, fewer than the {p} needed for the extension",
                n + 1
            )));
        }
        Ok(Self {
            m,
            order,
            left_nodes: (0..p).collect(),
            right_nodes: (n - p + 1..=n).collect(),
        })
    }

    pub fn order(&self) -> BSplineOrder {
        self.order
    }

    pub fn left_nodes(&self) -> &[i64] {
        &self.left_nodes
    }

    pub fn right_nodes(&self) -> &[i64] {
        &self.right_nodes
    }

    /// `f_m(j 2^-m)` as a linear combination of interior node values.
    pub fn weights(&self, j: i64) -> Vec<(i64, f64)> {
        let n = 1i64 << self.m;
        let nodes = if j < 0 {
            &self.left_nodes
        } else if j > n {
            &self.right_nodes
        } else {
            return vec![(j, 1.0)];
        };
        nodes
            .iter()
            .map(|&xi| {
                let w: f64 = nodes
                    .iter()
                    .filter(|&&xl| xl != xi)
                    .map(|&xl| (j - xl) as f64 / (xi - xl) as f64)
                    .product();
                (xi, w)
            })
            .collect()
    }

    /// Extended value at node `j` of a univariate line of `2^m + 1` samples.
    pub fn extend_line(&self, line: &[f64], j: i64) -> f64 {
        self.weights(j)
            .into_iter()
            .map(|(i, w)| w * line[i as usize])
            .sum()
    }
}

/// Grid samples of `f` on `{j 2^-m}^d` together with their per-axis extension.
pub struct ExtendedSamples<'a> {
    grid: &'a NdArray,
    ext: BoundaryExtension,
}

impl<'a> ExtendedSamples<'a> {
    pub fn new(grid: &'a NdArray, order: BSplineOrder, m: u32) -> Result<Self> {
        let side = (1usize << m) + 1;
        if grid.shape.iter().any(|&n| n != side) {
            return Err(Error::precondition(format!(
                "grid shape {:?} does not match level {m}",
                grid.shape
            )));
        }
        Ok(Self {
            grid,
            ext: BoundaryExtension::new(order, m)?,
        })
    }

    /// `f_m` at the multi-index `j`, extrapolating along every axis where `j_i` is exterior.
    pub fn value(&self, j: &[i64]) -> f64 {
        let per_axis: Vec<Vec<(i64, f64)>> = j.iter().map(|&ji| self.ext.weights(ji)).collect();
        let mut total = 0.0;
        let mut idx = vec![0usize; j.len()];
        let mut cursor = vec![0usize; j.len()];
        loop {
            let mut w = 1.0;
            for (axis, &c) in cursor.iter().enumerate() {
                let (node, wi) = per_axis[axis][c];
                idx[axis] = node as usize;
                w *= wi;
            }
            total += w * self.grid.get(&idx);
            // odometer
            let mut axis = j.len();
            loop {
                if axis == 0 {
                    return total;
                }
                axis -= 1;
                cursor[axis] += 1;
                if cursor[axis] < per_axis[axis].len() {
                    break;
                }
                cursor[axis] = 0;
            }
        }
    }
}

/// Row-major dense array.
#[derive(Clone, Debug, PartialEq)]
pub struct NdArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NdArray {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for axis in (0..self.shape.len()).rev() {
            idx[axis] = flat % self.shape[axis];
            flat /= self.shape[axis];
        }
        idx
    }
}

/// A sparse linear map applied along one axis: `out[t] = sum_(i, w) in rows[t]  w * in[i]`.
pub(crate) struct AxisMap {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub in_len: usize,
}

pub(crate) fn apply_along_axis(input: &NdArray, axis: usize, map: &AxisMap) -> NdArray {
    assert_eq!(input.shape[axis], map.in_len, "axis length mismatch");
    let mut shape = input.shape.clone();
    shape[axis] = map.rows.len();
    let inner: usize = input.shape[axis + 1..].iter().product();
    let outer: usize = input.shape[..axis].iter().product();
    let in_len = map.in_len;
    let out_len = map.rows.len();
    // One output block per outer index; each block is (out_len x inner).
    let blocks = par::map_range(outer, |o| {
        let base = o * in_len * inner;
        let mut block = vec![0.0; out_len * inner];
        for (t, row) in map.rows.iter().enumerate() {
            let dst = &mut block[t * inner..(t + 1) * inner];
            for &(i, w) in row {
                let src = &input.data[base + i * inner..base + (i + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        block
    });
    NdArray {
        shape,
        data: blocks.concat(),
    }
}

/// Coefficients `{v_s}` of one dyadic level, dense over `s in J^d(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelCoefficients {
    pub k: u32,
    order: BSplineOrder,
    dim: usize,
    values: Vec<f64>,
}

impl LevelCoefficients {
    pub fn from_values(order: BSplineOrder, k: u32, dim: usize, values: Vec<f64>) -> Result<Self> {
        let side = level_len(order, k);
        if values.len() != side.pow(dim as u32) {
            return Err(Error::precondition(format!(
                "level {k} needs {} coefficients, got {}",
                side.pow(dim as u32),
                values.len()
            )));
        }
        Ok(Self {
            k,
            order,
            dim,
            values,
        })
    }

    pub(crate) fn from_array(order: BSplineOrder, k: u32, arr: NdArray) -> Self {
        let dim = arr.shape.len();
        debug_assert!(arr.shape.iter().all(|&n| n == level_len(order, k)));
        Self {
            k,
            order,
            dim,
            values: arr.data,
        }
    }

    pub(crate) fn as_array(&self) -> NdArray {
        NdArray {
            shape: vec![level_len(self.order, self.k); self.dim],
            data: self.values.clone(),
        }
    }

    pub fn order(&self) -> BSplineOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn side(&self) -> usize {
        level_len(self.order, self.k)
    }

    /// Translate `s` of the flat position `flat`.
    pub fn index_of(&self, mut flat: usize) -> Vec<i64> {
        let side = self.side();
        let (lo, _) = level_index_bounds(self.order, self.k);
        let mut s = vec![0i64; self.dim];
        for axis in (0..self.dim).rev() {
            s[axis] = (flat % side) as i64 + lo;
            flat /= side;
        }
        s
    }

    /// Flat position of translate `s`, if it lies in `J^d(k)`.
    pub fn position(&self, s: &[i64]) -> Option<usize> {
        let side = self.side() as i64;
        let (lo, _) = level_index_bounds(self.order, self.k);
        let mut flat = 0i64;
        for &si in s {
            let off = si - lo;
            if !(0..side).contains(&off) {
                return None;
            }
            flat = flat * side + off;
        }
        Some(flat as usize)
    }

    pub fn get(&self, s: &[i64]) -> Option<f64> {
        self.position(s).map(|i| self.values[i])
    }

    /// Iterate `(s, value)` in row-major (lexicographic) order of `s`.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.index_of(i), v))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Univariate functional `a_{k,s}` as weights on level-`k` grid nodes `0..=2^k`.
pub fn a_functional(spec: &QuasiInterpolantSpec, k: u32, s: i64) -> Result<Vec<(i64, f64)>> {
    let ext = BoundaryExtension::new(spec.order(), k)?;
    Ok(a_functional_with(spec, &ext, s))
}

pub(crate) fn a_functional_with(
    spec: &QuasiInterpolantSpec,
    ext: &BoundaryExtension,
    s: i64,
) -> Vec<(i64, f64)> {
    let mu = spec.mu() as i64;
    let mut acc: Vec<(i64, f64)> = Vec::new();
    for j in -mu..=mu {
        let lam = spec.lambda(j);
        if lam == 0.0 {
            continue;
        }
        for (node, w) in ext.weights(s - j) {
            match acc.iter_mut().find(|(n, _)| *n == node) {
                Some(slot) => slot.1 += lam * w,
                None => acc.push((node, lam * w)),
            }
        }
    }
    acc.sort_by_key(|&(n, _)| n);
    acc
}

pub(crate) fn a_axis_map(spec: &QuasiInterpolantSpec, k: u32) -> Result<AxisMap> {
    let ext = BoundaryExtension::new(spec.order(), k)?;
    let (lo, hi) = level_index_bounds(spec.order(), k);
    let rows = (lo..=hi)
        .map(|s| {
            a_functional_with(spec, &ext, s)
                .into_iter()
                .map(|(n, w)| (n as usize, w))
                .collect()
        })
        .collect();
    Ok(AxisMap {
        rows,
        in_len: (1usize << k) + 1,
    })
}

/// How grid values are read from an oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Access {
    /// Recorded in the ledger.
    Metered,
    /// Not recorded; only for choosing sample positions or measuring error.
    Probe,
}

/// All level-`m` grid points `j 2^-m`, `j in {0..2^m}^d`, in row-major order.
pub fn grid_points(d: usize, m: u32) -> Vec<Vec<f64>> {
    let side = (1usize << m) + 1;
    let h = (m as f64).exp2().recip();
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut flat| {
            let mut x = vec![0.0; d];
            for axis in (0..d).rev() {
                x[axis] = (flat % side) as f64 * h;
                flat /= side;
            }
            x
        })
        .collect()
}

/// Level-`m` grid samples of the oracle.
pub fn grid_values(oracle: &FunctionOracle, m: u32, access: Access) -> Result<NdArray> {
    let d = oracle.dim();
    let pts = grid_points(d, m);
    let data = match access {
        Access::Metered => oracle.sample_many(&pts)?,
        Access::Probe => par::try_map_slice(&pts, |p| oracle.probe(p))?,
    };
    Ok(NdArray {
        shape: vec![(1usize << m) + 1; d],
        data,
    })
}

/// `a_{m,s}` for all `s in J^d(m)` from level-`m` grid samples (last axis first).
pub fn a_coeffs_from_grid(
    grid: &NdArray,
    spec: &QuasiInterpolantSpec,
    m: u32,
) -> Result<LevelCoefficients> {
    let side = (1usize << m) + 1;
    if grid.shape.iter().any(|&n| n != side) {
        return Err(Error::precondition(format!(
            "grid shape {:?} does not match level {m}",
            grid.shape
        )));
    }
    let map = a_axis_map(spec, m)?;
    let mut arr = grid.clone();
    for axis in (0..grid.shape.len()).rev() {
        arr = apply_along_axis(&arr, axis, &map);
    }
    Ok(LevelCoefficients::from_array(spec.order(), m, arr))
}

/// `a_{m,s}(f)` for all `s in J^d(m)`, reading the `(2^m + 1)^d` grid values through the ledger.
pub fn a_coeffs(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    m: u32,
) -> Result<LevelCoefficients> {
    BoundaryExtension::new(spec.order(), m)?;
    let grid = grid_values(oracle, m, Access::Metered)?;
    a_coeffs_from_grid(&grid, spec, m)
}

/// `Q_m(f)` as a dense level-`m` expansion.
pub fn apply_q(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    m: u32,
) -> Result<SparseExpansion> {
    let a = a_coeffs(oracle, spec, m)?;
    Ok(SparseExpansion::from_level(&a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn poly_oracle(coeffs: Vec<f64>) -> FunctionOracle {
        FunctionOracle::from_fn("poly", 1, move |x| {
            coeffs.iter().rev().fold(0.0, |acc, c| acc * x[0] + c)
        })
    }

    #[test]
    fn builtin_masks() {
        let pl = QuasiInterpolantSpec::piecewise_linear();
        assert_eq!((pl.r(), pl.mu(), pl.lambda_slice()), (1, 0, &[1.0][..]));
        let c = QuasiInterpolantSpec::cubic();
        assert_eq!(c.r(), 2);
        assert_eq!(c.mu(), 1);
        assert_abs_diff_eq!(c.lambda(-1), -1.0 / 6.0);
        assert_abs_diff_eq!(c.lambda(0), 4.0 / 3.0);
        assert_abs_diff_eq!(c.lambda_slice().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(QuasiInterpolantSpec::by_name("quintic").is_err());
    }

    #[test]
    fn bad_masks_rejected() {
        let r2 = BSplineOrder::new(2).unwrap();
        // Nodal mask does not reproduce cubics with the cubic spline.
        assert!(QuasiInterpolantSpec::new(r2, 0, vec![1.0]).is_err());
        assert!(QuasiInterpolantSpec::new(r2, 1, vec![-0.2, 1.4, -0.1]).is_err());
        assert!(QuasiInterpolantSpec::new(r2, 1, vec![1.0]).is_err());
        let ok = QuasiInterpolantSpec::new(r2, 1, vec![-1.0 / 6.0, 8.0 / 6.0, -1.0 / 6.0]);
        assert!(ok.is_ok());
    }

    #[test]
    fn json_round_trip() {
        let c = QuasiInterpolantSpec::cubic();
        let text = c.to_json();
        assert!(text.contains("\"mu\":1"));
        assert_eq!(QuasiInterpolantSpec::from_json(&text).unwrap(), c);
        assert!(QuasiInterpolantSpec::from_json(r#"{"r":2,"mu":0,"lambda":[1.0]}"#).is_err());
    }

    #[test]
    fn linear_extrapolation_examples() {
        let ext = BoundaryExtension::new(BSplineOrder::new(1).unwrap(), 1).unwrap();
        let line = [1.0, 2.0, 5.0];
        assert_abs_diff_eq!(ext.extend_line(&line, -1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ext.extend_line(&line, 3), 8.0, epsilon = 1e-15);
        assert_eq!(ext.extend_line(&line, 1), 2.0);
    }

    #[test]
    fn extension_reproduces_polynomials() {
        let r2 = BSplineOrder::new(2).unwrap();
        for m in 2..6 {
            let ext = BoundaryExtension::new(r2, m).unwrap();
            assert_eq!(ext.right_nodes().len(), 4);
            let h = (m as f64).exp2().recip();
            let p = |x: f64| 1.0 - 3.0 * x + 0.5 * x * x + 2.0 * x.powi(3);
            let line: Vec<f64> = (0..=(1 << m)).map(|j| p(j as f64 * h)).collect();
            for j in -6..(1 << m) + 6 {
                assert_abs_diff_eq!(
                    ext.extend_line(&line, j),
                    p(j as f64 * h),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let r2 = BSplineOrder::new(2).unwrap();
        assert!(matches!(
            BoundaryExtension::new(r2, 1),
            Err(Error::Precondition(_))
        ));
        assert!(BoundaryExtension::new(r2, 2).is_ok());
        assert_eq!(QuasiInterpolantSpec::cubic().min_level(), 2);
        assert_eq!(QuasiInterpolantSpec::piecewise_linear().min_level(), 0);
    }

    #[test]
    fn nodal_coefficients_are_samples() {
        let spec = QuasiInterpolantSpec::piecewise_linear();
        let o = FunctionOracle::from_fn("f", 1, |x| (3.0 * x[0]).sin());
        let a = a_coeffs(&o, &spec, 4).unwrap();
        for s in 0..=16i64 {
            assert_eq!(a.get(&[s]).unwrap(), (3.0 * s as f64 / 16.0).sin());
        }
    }

    #[test]
    fn cubic_constant_and_quadratic_coefficients() {
        let spec = QuasiInterpolantSpec::cubic();
        let one = FunctionOracle::from_fn("one", 2, |_| 1.0);
        let a = a_coeffs(&one, &spec, 3).unwrap();
        assert_eq!(a.len(), 11 * 11);
        for v in a.values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-13);
        }
        let sq = poly_oracle(vec![0.0, 0.0, 1.0]);
        let a = a_coeffs(&sq, &spec, 3).unwrap();
        let direct = (-1.0 / 6.0) * (3.0f64 / 8.0).powi(2) + (4.0 / 3.0) * 0.25
            + (-1.0 / 6.0) * (5.0f64 / 8.0).powi(2);
        assert_abs_diff_eq!(a.get(&[4]).unwrap(), direct, epsilon = 1e-15);
    }

    #[test]
    fn sample_count_is_the_grid() {
        let spec = QuasiInterpolantSpec::cubic();
        let o = FunctionOracle::from_fn("f", 2, |x| x[0] * x[1]);
        apply_q(&o, &spec, 4).unwrap();
        assert_eq!(o.samples_used(), 17 * 17);
        for p in o.ledger_points() {
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn locality_under_point_perturbation() {
        let spec = QuasiInterpolantSpec::cubic();
        let m = 5;
        let base = FunctionOracle::from_fn("base", 1, |x| 0.3 - x[0] + 0.7 * x[0] * x[0]);
        let a0 = a_coeffs(&base, &spec, m).unwrap();
        for bump in [0usize, 1, 7, 16, 31, 32] {
            let bumped = FunctionOracle::from_fn("bumped", 1, move |x| {
                let v = 0.3 - x[0] + 0.7 * x[0] * x[0];
                if x[0] == bump as f64 / 32.0 {
                    v + 1.0
                } else {
                    v
                }
            });
            let a1 = a_coeffs(&bumped, &spec, m).unwrap();
            let reach = (spec.mu() + 2 * spec.r()) as i64;
            for (i, (&u, &v)) in a0.values().iter().zip(a1.values()).enumerate() {
                let s = a0.index_of(i)[0];
                if (s - bump as i64).abs() > reach {
                    assert_eq!(u, v, "coefficient {s} moved for bump at {bump}");
                }
            }
        }
    }

    #[test]
    fn extended_samples_tensorize() {
        let r2 = BSplineOrder::new(2).unwrap();
        let m = 3;
        let p = |x: &[f64]| (1.0 + x[0] - x[0].powi(3)) * (2.0 - x[1] * x[1]);
        let pts = grid_points(2, m);
        let grid = NdArray {
            shape: vec![9, 9],
            data: pts.iter().map(|x| p(x)).collect(),
        };
        let ext = ExtendedSamples::new(&grid, r2, m).unwrap();
        for j in [[-2i64, -1], [-1, 10], [4, 4], [10, 10]] {
            let x = [j[0] as f64 / 8.0, j[1] as f64 / 8.0];
            assert_abs_diff_eq!(ext.value(&j), p(&x), epsilon = 1e-10);
        }
    }

    #[test]
    fn a_functional_matches_dense() {
        let spec = QuasiInterpolantSpec::cubic();
        let o = FunctionOracle::from_fn("f", 1, |x| (5.0 * x[0]).exp());
        let m = 4;
        let a = a_coeffs(&o, &spec, m).unwrap();
        for s in -1..=17 {
            let via: f64 = a_functional(&spec, m, s)
                .unwrap()
                .into_iter()
                .map(|(n, w)| w * (5.0 * n as f64 / 16.0).exp())
                .sum();
            assert_abs_diff_eq!(via, a.get(&[s]).unwrap(), epsilon = 1e-12);
        }
    }
}
