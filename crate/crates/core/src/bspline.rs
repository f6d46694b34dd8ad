//! Centered cardinal B-splines of even order `2r` and their dyadic translates.
//!
//! `M` has integer knots `-r, ..., r` and support `[-r, r]`. The dilated
//! translate is `M_{k,s}(x) = M(2^k x - s)`, tensorized over coordinates in
//! several variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported half-order. Keeps every binomial and mask denominator exact in 64 bits.
pub const MAX_HALF_ORDER: u32 = 8;

/// Half-order `r` of a centered B-spline of even order `2r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct BSplineOrder(u32);

impl BSplineOrder {
    pub fn new(r: u32) -> Result<Self> {
        if r == 0 || r > MAX_HALF_ORDER {
            return Err(Error::config(format!(
                "B-spline half-order r must lie in 1..={MAX_HALF_ORDER}, got {r}"
            )));
        }
        Ok(Self(r))
    }

    /// Half-order `r`.
    pub fn r(self) -> u32 {
        self.0
    }

    /// Spline order `2r` (polynomial degree `2r - 1`).
    pub fn order(self) -> u32 {
        2 * self.0
    }

    pub(crate) fn ri(self) -> i64 {
        self.0 as i64
    }
}

impl TryFrom<u32> for BSplineOrder {
    type Error = Error;
    fn try_from(r: u32) -> Result<Self> {
        Self::new(r)
    }
}

impl From<BSplineOrder> for u32 {
    fn from(o: BSplineOrder) -> u32 {
        o.0
    }
}

/// A dyadic level `k` together with a translate `s` in `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub k: u32,
    pub s: Vec<i64>,
}

impl DyadicIndex {
    pub fn new(k: u32, s: Vec<i64>) -> Self {
        Self { k, s }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// True when `s` lies in `J^d(k)`, i.e. `M_{k,s}` does not vanish on the cube.
    pub fn is_on_cube(&self, order: BSplineOrder) -> bool {
        let (lo, hi) = level_index_bounds(order, self.k);
        self.s.iter().all(|&si| (lo..=hi).contains(&si))
    }
}

/// Inclusive bounds of `J(k) = { s : -r < s < 2^k + r }`.
pub fn level_index_bounds(order: BSplineOrder, k: u32) -> (i64, i64) {
    let r = order.ri();
    (1 - r, (1i64 << k) + r - 1)
}

/// `|J(k)| = 2^k + 2r - 1`.
pub fn level_len(order: BSplineOrder, k: u32) -> usize {
    (1usize << k) + 2 * order.r() as usize - 1
}

/// Evaluate the centered cardinal B-spline `M` of order `2r` at `x`.
///
/// Uses the Cox-de Boor recursion on the uniform knots `0, 1, ..., 2r` of the
/// shifted spline `N_{2r}(x + r)`. Evaluated at `|x|` so that symmetry holds bitwise.
pub fn eval_cardinal(order: BSplineOrder, x: f64) -> f64 {
    let r = order.r() as usize;
    let x = x.abs();
    if !(x < r as f64) {
        return 0.0;
    }
    let y = x + r as f64;
    let p = 2 * r;
    // Only N_1(y - j) for j = floor(y) is nonzero; raise the order from there.
    let j = (y.floor() as usize).min(p - 1);
    // vals[i] holds N_o(y - (j + 1 - o + i)) for i in 0..o.
    // vals[t] holds N_o(y - (j + 1 - o + t)) for t in 0..o.
    let mut vals = [0.0f64; 2 * MAX_HALF_ORDER as usize];
    vals[0] = 1.0;
    for o in 2..=p {
        let base = j as f64 + 1.0 - o as f64;
        let inv = 1.0 / (o - 1) as f64;
        let mut next = [0.0f64; 2 * MAX_HALF_ORDER as usize];
        for (t, slot) in next.iter_mut().enumerate().take(o) {
            let u = y - (base + t as f64);
            // N_o(u) = (u N_{o-1}(u) + (o - u) N_{o-1}(u - 1)) / (o - 1)
            let at_u = if t >= 1 { vals[t - 1] } else { 0.0 };
            let at_u1 = if t + 1 < o { vals[t] } else { 0.0 };
            *slot = (u * at_u + (o as f64 - u) * at_u1) * inv;
        }
        vals = next;
    }
    // N_{2r}(y) sits at t = 2r - 1 - j.
    vals[p - 1 - j].max(0.0)
}

/// Evaluate `M_{k,s}(x) = prod_i M(2^k x_i - s_i)`.
pub fn eval_translate(order: BSplineOrder, idx: &DyadicIndex, x: &[f64]) -> f64 {
    debug_assert_eq!(idx.s.len(), x.len());
    let scale = (idx.k as f64).exp2();
    let mut prod = 1.0;
    for (&xi, &si) in x.iter().zip(&idx.s) {
        let v = eval_cardinal(order, scale * xi - si as f64);
        if v == 0.0 {
            return 0.0;
        }
        prod *= v;
    }
    prod
}

/// Univariate values `M(2^k x - s)` for every `s` whose support contains `x`.
///
/// Returns the first translate index and the values in increasing `s`; at most `2r` entries.
pub fn local_values(order: BSplineOrder, k: u32, x: f64) -> (i64, Vec<f64>) {
    let r = order.ri();
    let y = (k as f64).exp2() * x;
    let first = (y - r as f64).floor() as i64 + 1;
    let vals = (first..first + 2 * r)
        .map(|s| eval_cardinal(order, y - s as f64))
        .collect();
    (first, vals)
}

/// Two-scale mask of `M`: `M(x) = sum_j m_j M(2x - j + r)`, `j = 0..=2r`.
///
/// Entries are `binom(2r, j) / 2^(2r-1)`, stored as exact numerators over a common denominator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefinementMask {
    order: BSplineOrder,
    numerators: Vec<u64>,
    denominator: u64,
}

impl RefinementMask {
    pub fn order(&self) -> BSplineOrder {
        self.order
    }

    /// Exact `(numerator, denominator)` of entry `j`.
    pub fn rational(&self, j: usize) -> (u64, u64) {
        (self.numerators[j], self.denominator)
    }

    pub fn len(&self) -> usize {
        self.numerators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerators.is_empty()
    }

    /// Floating-point entries `m_0..m_{2r}`.
    pub fn weights(&self) -> Vec<f64> {
        self.numerators
            .iter()
            .map(|&n| n as f64 / self.denominator as f64)
            .collect()
    }
}

pub(crate) fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

pub fn refinement_mask(order: BSplineOrder) -> RefinementMask {
    let p = order.order() as u64;
    RefinementMask {
        order,
        numerators: (0..=p).map(|j| binomial(p, j)).collect(),
        denominator: 1u64 << (p - 1),
    }
}
