//! Linear and adaptive n-sampling recovery.
//!
//! The linear algorithm is the dense quasi-interpolant `Q_k*` on the finest
//! grid that fits the budget. The adaptive algorithm keeps a dense base
//! `Q_kbar(f)` and, on each finer level `k`, only the `n(k)` largest detail
//! coefficients, each shrunk by the `(n(k)+1)`-th largest magnitude. The
//! shrinkage makes the selection continuous in `f`.
//!
//! Choosing which coefficients to keep needs to know `f`: the selection pass
//! reads the target through [`FunctionOracle::probe`] and so costs nothing.
//! The coefficients that end up in the result are then recomputed from metered
//! samples only, so the ledger holds exactly the points the recovery is built from.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::bspline::{level_index_bounds, level_len, DyadicIndex};
use crate::error::{Error, Result};
use crate::exponent::{positive_part, Exponent};
use crate::multilevel::{
    decompose_from_grid, detail_stencil_width, SparseExpansion, StencilBuilder,
};
use crate::oracle::FunctionOracle;
use crate::par;
use crate::quasi_interpolant::{
    a_axis_map, a_coeffs_from_grid, grid_points, grid_values, Access, LevelCoefficients, NdArray,
    QuasiInterpolantSpec,
};

/// Continuous `n`-term selector: keep the `n` largest magnitudes, shrink them by the next one.
///
/// Ties in magnitude are broken by position. `sign(0) = 0`, so zeros stay zero.
pub fn soft_select(x: &[f64], n: usize) -> Result<Vec<f64>> {
    let sel = Selection::compute(x, n)?;
    let mut out = vec![0.0; x.len()];
    for &(i, v) in &sel.kept {
        out[i] = v;
    }
    Ok(out)
}

/// Positions ranked by decreasing magnitude, ties by increasing position.
fn magnitude_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.abs()
        .partial_cmp(&a.1.abs())
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// The top `len` entries of `x` under [`magnitude_order`], sorted.
fn top_ranked(x: &[f64], len: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = x.iter().copied().enumerate().collect();
    let len = len.min(all.len());
    if len == 0 {
        return Vec::new();
    }
    if len < all.len() {
        all.select_nth_unstable_by(len - 1, |a, b| magnitude_order(*a, *b));
        all.truncate(len);
    }
    all.sort_by(|a, b| magnitude_order(*a, *b));
    all
}

/// Output of [`soft_select`] in sparse form.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// `(position, shrunk value)` in rank order.
    pub kept: Vec<(usize, f64)>,
    /// Magnitude of the `(n+1)`-th entry, or 0 when nothing is dropped.
    pub threshold: f64,
}

impl Selection {
    pub fn compute(x: &[f64], n: usize) -> Result<Self> {
        if n > x.len() {
            return Err(Error::precondition(format!(
                "cannot keep {n} of {} entries",
                x.len()
            )));
        }
        let ranked = top_ranked(x, n + 1);
        let threshold = if n < x.len() { ranked[n].1.abs() } else { 0.0 };
        let kept = ranked
            .into_iter()
            .take(n)
            .map(|(i, v)| (i, v - threshold * sign(v)))
            .collect();
        Ok(Self { kept, threshold })
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Smoothness class `B^alpha_{p,theta}` in `d` variables, with the error norm `L_q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub alpha: f64,
    pub p: Exponent,
    pub q: Exponent,
    pub theta: Exponent,
    pub d: usize,
}

impl BesovParams {
    pub fn new(alpha: f64, p: Exponent, q: Exponent, theta: Exponent, d: usize) -> Result<Self> {
        let bp = Self {
            alpha,
            p,
            q,
            theta,
            d,
        };
        bp.validate()?;
        Ok(bp)
    }

    /// Embedding into continuous functions: `alpha > d/p`, or `alpha = d/p` with
    /// `theta <= min(1, p)` and `p, q` finite.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("smoothness must be positive, got {}", self.alpha)));
        }
        let critical = self.d as f64 * self.p.recip();
        let above = self.alpha > critical;
        let at = (self.alpha - critical).abs() < 1e-12
            && self.theta.value() <= 1f64.min(self.p.value())
            && !self.p.is_infinite()
            && !self.q.is_infinite();
        if above || at {
            Ok(())
        } else {
            Err(Error::config(format!(
                "need alpha > d/p = {critical} (or alpha = d/p with theta <= min(1, p), p, q finite); got alpha = {}",
                self.alpha
            )))
        }
    }

    /// `delta = d (1/p - 1/q)_+`.
    pub fn delta(&self) -> f64 {
        self.d as f64 * positive_part(self.p.recip() - self.q.recip())
    }

    /// Whether adaptivity can help: `p < q`.
    pub fn is_adaptive_regime(&self) -> bool {
        self.p.value() < self.q.value()
    }

    /// Rate exponent of the adaptive algorithm, `-alpha/d`.
    pub fn adaptive_slope(&self) -> f64 {
        -self.alpha / self.d as f64
    }

    /// Rate exponent of linear recovery, `-alpha/d + (1/p - 1/q)_+`.
    pub fn linear_slope(&self) -> f64 {
        -self.alpha / self.d as f64 + positive_part(self.p.recip() - self.q.recip())
    }
}

/// Tunables of the budget schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleOptions {
    /// Decay rate of the per-level budgets; default `min((alpha - delta) / (2 delta), 1)`.
    pub epsilon: Option<f64>,
    /// `C1 2^(d kbar) <= n < C2 2^(d kbar)` picks the starting base level.
    pub c1: f64,
    pub c2: f64,
    /// Finest level ever scheduled.
    pub max_level: u32,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        Self {
            epsilon: None,
            c1: 0.25,
            c2: 0.5,
            max_level: 48,
        }
    }
}

/// Budget plan of the adaptive algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub n: usize,
    pub d: usize,
    pub k_bar: u32,
    pub k_star: u32,
    pub epsilon: f64,
    pub lambda: f64,
    pub delta: f64,
    /// `n(k)` for `k in (k_bar, k_star]`, truncated at the level cap.
    pub budgets: BTreeMap<u32, usize>,
    /// Terms in the recovered expansion, `|J^d(k_bar)| + sum n(k)`.
    pub term_bound: usize,
    /// Upper bound on distinct samples.
    pub sample_bound: usize,
    /// Distinct nodes read by one univariate detail functional.
    pub stencil_width: usize,
    /// Levels above this were dropped from `budgets`.
    pub level_cap: u32,
}

impl AdaptiveSchedule {
    pub fn budget(&self, k: u32) -> usize {
        self.budgets.get(&k).copied().unwrap_or(0)
    }

    /// Finest level with a nonzero budget.
    pub fn top_active_level(&self) -> Option<u32> {
        self.budgets
            .iter()
            .filter(|(_, &b)| b > 0)
            .map(|(&k, _)| k)
            .max()
    }
}

/// `(2^k + 1)^d`, saturating.
fn grid_count(d: usize, k: u32) -> usize {
    ((1usize << k.min(62)) + 1).saturating_pow(d as u32)
}

fn level_count(spec: &QuasiInterpolantSpec, d: usize, k: u32) -> usize {
    level_len(spec.order(), k.min(62)).saturating_pow(d as u32)
}

/// Largest `k` with `(2^k + 1)^d <= n`.
pub fn linear_level(n: usize, d: usize) -> Option<u32> {
    (0..62u32).take_while(|&k| grid_count(d, k) <= n).last()
}

/// Budget schedule for `n` samples. For `p >= q` this is the linear plan (no details).
pub fn make_schedule(
    n: usize,
    bp: &BesovParams,
    spec: &QuasiInterpolantSpec,
) -> Result<Plan> {
    make_schedule_with(n, bp, spec, &ScheduleOptions::default())
}

/// Which algorithm a budget resolves to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Plan {
    Linear { n: usize, level: u32 },
    Adaptive(AdaptiveSchedule),
}

impl Plan {
    pub fn as_adaptive(&self) -> Option<&AdaptiveSchedule> {
        match self {
            Plan::Adaptive(s) => Some(s),
            Plan::Linear { .. } => None,
        }
    }
}

fn linear_plan(n: usize, d: usize, spec: &QuasiInterpolantSpec) -> Result<u32> {
    let k = linear_level(n, d).filter(|&k| k >= spec.min_level()).ok_or_else(|| {
        Error::InfeasibleBudget(format!(
            "n = {n} is below the {} samples of the coarsest admissible grid",
            grid_count(d, spec.min_level())
        ))
    })?;
    Ok(k)
}

pub fn make_schedule_with(
    n: usize,
    bp: &BesovParams,
    spec: &QuasiInterpolantSpec,
    opts: &ScheduleOptions,
) -> Result<Plan> {
    bp.validate()?;
    let d = bp.d;
    if !bp.is_adaptive_regime() {
        let level = linear_plan(n, d, spec)?;
        return Ok(Plan::Linear { n, level });
    }
    let delta = bp.delta();
    if bp.alpha >= 2.0 * spec.r() as f64 {
        return Err(Error::config(format!(
            "smoothness {} must be below the spline order 2r = {}",
            bp.alpha,
            2 * spec.r()
        )));
    }
    if bp.alpha <= delta {
        return Err(Error::config(format!(
            "need alpha > delta = d(1/p - 1/q) = {delta}, got alpha = {}",
            bp.alpha
        )));
    }
    let eps_max = (bp.alpha - delta) / delta;
    let epsilon = opts.epsilon.unwrap_or_else(|| (0.5 * eps_max).min(1.0));
    if !(epsilon > 0.0 && epsilon < eps_max) {
        return Err(Error::config(format!(
            "epsilon must lie in (0, {eps_max}), got {epsilon}"
        )));
    }
    let nf = n as f64;
    // Largest kbar with C1 2^(d kbar) <= n; the upper condition n < C2 2^(d kbar) then
    // picks the same level whenever the window contains a power of 2^d.
    let mut k_bar = (0..opts.max_level)
        .take_while(|&k| opts.c1 * (d as f64 * k as f64).exp2() <= nf)
        .last()
        .ok_or_else(|| Error::InfeasibleBudget(format!("n = {n} is too small for any base level")))?;
    while k_bar > 0
        && (grid_count(d, k_bar) as f64 > nf / 2.0 || level_count(spec, d, k_bar) > n)
    {
        k_bar -= 1;
    }
    if k_bar < spec.min_level()
        || grid_count(d, k_bar) as f64 > nf / 2.0
        || level_count(spec, d, k_bar) > n
    {
        return Err(Error::InfeasibleBudget(format!(
            "n = {n}: the coarsest admissible base grid ({} samples at level {}) does not fit in n/2",
            grid_count(d, spec.min_level()),
            spec.min_level()
        )));
    }
    let width = detail_stencil_width(spec);
    let per_coeff = width.saturating_pow(d as u32);
    let base_samples = grid_count(d, k_bar);
    let base_terms = level_count(spec, d, k_bar);
    let level_cap = opts.max_level.max(k_bar + 1);

    let mut lambda = 1.0f64;
    while lambda * nf >= 1.0 {
        let ln = lambda * nf;
        let k_star = (ln.log2() / epsilon).floor() as u32 + k_bar + 1;
        let mut budgets = BTreeMap::new();
        let mut terms = base_terms;
        let mut samples = base_samples;
        for k in k_bar + 1..=k_star.min(level_cap) {
            let raw = (ln * (-(epsilon * (k - k_bar) as f64)).exp2()).floor() as usize;
            let nk = raw.min(level_count(spec, d, k));
            budgets.insert(k, nk);
            terms = terms.saturating_add(nk);
            if nk > 0 {
                let read = (nk + 1).min(level_count(spec, d, k));
                samples = samples.saturating_add(read.saturating_mul(per_coeff));
            }
        }
        if terms <= n && samples <= n {
            return Ok(Plan::Adaptive(AdaptiveSchedule {
                n,
                d,
                k_bar,
                k_star,
                epsilon,
                lambda,
                delta,
                budgets,
                term_bound: terms,
                sample_bound: samples,
                stencil_width: width,
                level_cap,
            }));
        }
        lambda *= 0.5;
    }
    Err(Error::InfeasibleBudget(format!(
        "n = {n}: no lambda = 2^-t with lambda n >= 1 fits the sample budget"
    )))
}

/// Tunables of the selection pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    /// Levels with at most this many coefficients are ranked exactly over all of `J^d(k)`.
    pub dense_limit: usize,
    /// Finer levels rank only the children of the top-ranked coefficients one level up;
    /// this many parents per kept coefficient are followed.
    pub candidate_factor: usize,
    pub min_candidates: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            dense_limit: 1 << 18,
            candidate_factor: 4,
            min_candidates: 32,
        }
    }
}

/// Per-level record of the selection, with the selector's error bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub k: u32,
    pub budget: usize,
    /// Coefficients ranked at this level (all of `J^d(k)` when `exact`).
    pub ranked: usize,
    pub exact: bool,
    pub threshold: f64,
    /// `||c_k - P_n(c_k)||_q`, including the shrinkage of kept entries.
    pub residual_q: f64,
    /// `l_q` norm of the dropped entries alone.
    pub dropped_q: f64,
    /// `||c_k||_p` over the ranked coefficients.
    pub norm_p: f64,
    /// `n(k)^(1/q - 1/p) ||c_k||_p`.
    pub bound: f64,
}

impl LevelReport {
    pub fn within_bound(&self) -> bool {
        self.budget == 0 || self.residual_q <= self.bound * (1.0 + 1e-12) + 1e-300
    }
}

/// A recovered approximant together with its sample accounting.
#[derive(Clone, Debug)]
pub struct RecoveryResult {
    pub expansion: SparseExpansion,
    pub samples_used: usize,
    pub sample_points: Vec<Vec<f64>>,
    pub plan: Plan,
    pub levels: Vec<LevelReport>,
}

/// JSON sidecar written next to the expansion CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySidecar {
    pub n: usize,
    pub samples_used: usize,
    pub terms: usize,
    pub bspline_terms: usize,
    pub algorithm: String,
    pub k_bar: u32,
    pub k_star: u32,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub budgets: BTreeMap<u32, usize>,
}

impl RecoveryResult {
    /// Functions in the recovered linear combination.
    ///
    /// A linear plan forms `sum_j f(2^-k j) psi_{k,j}` with one kernel per sample, so it
    /// counts `(2^k + 1)^d`; its B-spline form can hold more terms (`expansion.len()`).
    /// An adaptive plan counts its B-spline terms.
    pub fn term_count(&self) -> usize {
        match &self.plan {
            Plan::Linear { level, .. } => grid_count(self.expansion.dim(), *level),
            Plan::Adaptive(_) => self.expansion.len(),
        }
    }

    pub fn sidecar(&self) -> RecoverySidecar {
        match &self.plan {
            Plan::Linear { n, level } => RecoverySidecar {
                n: *n,
                samples_used: self.samples_used,
                terms: self.term_count(),
                bspline_terms: self.expansion.len(),
                algorithm: "linear".into(),
                k_bar: *level,
                k_star: *level,
                epsilon: None,
                lambda: None,
                budgets: BTreeMap::new(),
            },
            Plan::Adaptive(s) => RecoverySidecar {
                n: s.n,
                samples_used: self.samples_used,
                terms: self.term_count(),
                bspline_terms: self.expansion.len(),
                algorithm: "adaptive".into(),
                k_bar: s.k_bar,
                k_star: s.k_star,
                epsilon: Some(s.epsilon),
                lambda: Some(s.lambda),
                budgets: s.budgets.clone(),
            },
        }
    }
}

fn check_oracle(oracle: &FunctionOracle, d: usize) -> Result<()> {
    if oracle.dim() != d {
        return Err(Error::config(format!(
            "oracle has dimension {} but the problem has d = {d}",
            oracle.dim()
        )));
    }
    Ok(())
}

fn finish(
    oracle: &FunctionOracle,
    before: usize,
    expansion: SparseExpansion,
    plan: Plan,
    levels: Vec<LevelReport>,
) -> RecoveryResult {
    let points = oracle.ledger_points();
    RecoveryResult {
        expansion,
        samples_used: points.len() - before,
        sample_points: points[before..].to_vec(),
        plan,
        levels,
    }
}

/// Dense `Q_k*(f)` on the finest grid with `(2^k* + 1)^d <= n` samples.
pub fn recover_linear(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    n: usize,
) -> Result<RecoveryResult> {
    let d = oracle.dim();
    let mut level = linear_plan(n, d, spec)?;
    if let Some(m) = oracle.max_level() {
        level = level.min(m);
    }
    let before = oracle.samples_used();
    let grid = grid_values(oracle, level, Access::Metered)?;
    let a = a_coeffs_from_grid(&grid, spec, level)?;
    Ok(finish(
        oracle,
        before,
        SparseExpansion::from_level(&a),
        Plan::Linear { n, level },
        Vec::new(),
    ))
}

/// Adaptive recovery with the default schedule and selection options.
pub fn recover_adaptive(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    bp: &BesovParams,
    n: usize,
) -> Result<RecoveryResult> {
    let plan = make_schedule(n, bp, spec)?;
    recover_with_plan(oracle, spec, bp, &plan, &AdaptiveOptions::default())
}

/// Scouted coefficients of one level, restricted to the top entries.
struct ScoutedLevel {
    k: u32,
    /// `(s, value)` in rank order.
    top: Vec<(Vec<i64>, f64)>,
    report: LevelReport,
}

fn level_report(
    k: u32,
    budget: usize,
    values: &[f64],
    exact: bool,
    bp: &BesovParams,
) -> Result<LevelReport> {
    let n = budget.min(values.len());
    let sel = Selection::compute(values, n)?;
    let mut residual: Vec<f64> = values.to_vec();
    for &(i, v) in &sel.kept {
        residual[i] -= v;
    }
    let kept: BTreeSet<usize> = sel.kept.iter().map(|&(i, _)| i).collect();
    let dropped: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(i, _)| !kept.contains(i))
        .map(|(_, &v)| v)
        .collect();
    let norm_p = bp.p.norm(values);
    let bound = if n == 0 {
        f64::INFINITY
    } else {
        (n as f64).powf(bp.q.recip() - bp.p.recip()) * norm_p
    };
    Ok(LevelReport {
        k,
        budget,
        ranked: values.len(),
        exact,
        threshold: sel.threshold,
        residual_q: bp.q.norm(&residual),
        dropped_q: bp.q.norm(&dropped),
        norm_p,
        bound,
    })
}

fn keep_count(budget: usize, opts: &AdaptiveOptions, next_budget: usize) -> usize {
    let follow = opts
        .candidate_factor
        .saturating_mul(next_budget.max(budget) + 1)
        .max(opts.min_candidates);
    follow.max(budget + 1)
}

/// Children at level `k` of translate `s` at level `k - 1`: supports overlap.
fn children(spec: &QuasiInterpolantSpec, k: u32, s: &[i64], out: &mut BTreeSet<Vec<i64>>) {
    let r = spec.order().ri();
    let (lo, hi) = level_index_bounds(spec.order(), k);
    let ranges: Vec<(i64, i64)> = s
        .iter()
        .map(|&si| ((2 * si - 3 * r + 1).max(lo), (2 * si + 3 * r - 1).min(hi)))
        .collect();
    let d = s.len();
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    if ranges.iter().any(|r| r.0 > r.1) {
        return;
    }
    loop {
        out.insert(cur.clone());
        let mut a = d;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            cur[a] += 1;
            if cur[a] <= ranges[a].1 {
                break;
            }
            cur[a] = ranges[a].0;
        }
    }
}

fn node_point(k: u32, node: &[i64]) -> Vec<f64> {
    let h = (k as f64).exp2().recip();
    node.iter().map(|&v| v as f64 * h).collect()
}

/// Rank the detail coefficients of every active level without metering.
fn scout(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    bp: &BesovParams,
    sched: &AdaptiveSchedule,
    top: u32,
    opts: &AdaptiveOptions,
) -> Result<Vec<ScoutedLevel>> {
    let d = sched.d;
    let k_bar = sched.k_bar;
    let mut out: Vec<ScoutedLevel> = Vec::new();
    if top <= k_bar {
        return Ok(out);
    }
    let dense_top = (k_bar + 1..=top)
        .take_while(|&k| level_count(spec, d, k) <= opts.dense_limit
            && grid_count(d, k) <= opts.dense_limit.saturating_mul(2))
        .last();
    if let Some(kd) = dense_top {
        let grid = grid_values(oracle, kd, Access::Probe)?;
        let dec = decompose_from_grid(&grid, spec, k_bar, kd)?;
        for c in &dec.details {
            let budget = sched.budget(c.k);
            let keep = keep_count(budget, opts, sched.budget(c.k + 1));
            let ranked = top_ranked(c.values(), keep);
            let report = level_report(c.k, budget, c.values(), true, bp)?;
            out.push(ScoutedLevel {
                k: c.k,
                top: ranked.into_iter().map(|(i, v)| (c.index_of(i), v)).collect(),
                report,
            });
        }
    }
    let first_sparse = dense_top.map_or(k_bar + 1, |k| k + 1);
    for k in first_sparse..=top {
        let builder = StencilBuilder::detail(spec, k)?;
        let mut cands: BTreeSet<Vec<i64>> = BTreeSet::new();
        match out.last() {
            Some(prev) => {
                for (s, _) in &prev.top {
                    children(spec, k, s, &mut cands);
                }
            }
            None => {
                // No dense level below: rank the base level's finest details from scratch.
                let base = grid_values(oracle, k_bar, Access::Probe)?;
                let a = a_coeffs_from_grid(&base, spec, k_bar)?;
                for (i, _) in a.values().iter().enumerate() {
                    children(spec, k, &a.index_of(i), &mut cands);
                }
            }
        }
        let cands: Vec<Vec<i64>> = cands.into_iter().collect();
        let values = par::try_map_slice(&cands, |s| {
            builder.build(s).apply(|node| oracle.probe(&node_point(k, node)))
        })?;
        let budget = sched.budget(k);
        let keep = keep_count(budget, opts, sched.budget(k + 1));
        let ranked = top_ranked(&values, keep);
        let report = level_report(k, budget, &values, false, bp)?;
        out.push(ScoutedLevel {
            k,
            top: ranked
                .into_iter()
                .map(|(i, v)| (cands[i].clone(), v))
                .collect(),
            report,
        });
    }
    Ok(out)
}

/// Run the plan: linear plans give `Q_k*`, adaptive plans give `Q_kbar + sum_k G_k`.
pub fn recover_with_plan(
    oracle: &FunctionOracle,
    spec: &QuasiInterpolantSpec,
    bp: &BesovParams,
    plan: &Plan,
    opts: &AdaptiveOptions,
) -> Result<RecoveryResult> {
    check_oracle(oracle, bp.d)?;
    let sched = match plan {
        Plan::Linear { n, .. } => {
            let mut r = recover_linear(oracle, spec, *n)?;
            r.plan = plan.clone();
            return Ok(r);
        }
        Plan::Adaptive(s) => s,
    };
    let d = sched.d;
    let k_bar = sched.k_bar;
    let mut top = sched.top_active_level().unwrap_or(k_bar);
    if let Some(m) = oracle.max_level() {
        top = top.min(m);
        if k_bar > m {
            return Err(Error::InfeasibleBudget(format!(
                "base level {k_bar} is finer than the level-{m} data grid"
            )));
        }
    }
    let scouted = scout(oracle, spec, bp, sched, top, opts)?;

    // Points to meter: the base grid, then the stencils of every coefficient that enters
    // the result (including the one that sets each level's threshold).
    let mut points = grid_points(d, k_bar);
    let base_len = points.len();
    let mut chosen: Vec<(u32, usize, Vec<Vec<i64>>)> = Vec::new();
    for lvl in &scouted {
        let budget = sched.budget(lvl.k);
        if budget == 0 {
            continue;
        }
        let take = (budget + 1).min(lvl.top.len()).min(level_count(spec, d, lvl.k));
        let idx: Vec<Vec<i64>> = lvl.top[..take].iter().map(|(s, _)| s.clone()).collect();
        let builder = StencilBuilder::detail(spec, lvl.k)?;
        let mut nodes = BTreeSet::new();
        for s in &idx {
            nodes.extend(builder.build(s).nodes());
        }
        points.extend(nodes.iter().map(|n| node_point(lvl.k, n)));
        chosen.push((lvl.k, budget, idx));
    }
    let before = oracle.samples_used();
    let values = oracle.sample_many(&points)?;
    let metered: HashMap<Vec<u64>, f64> = points
        .iter()
        .zip(&values)
        .map(|(p, &v)| (p.iter().map(|c| (c + 0.0).to_bits()).collect(), v))
        .collect();
    let lookup = |k: u32, node: &[i64]| -> Result<f64> {
        let p = node_point(k, node);
        let key: Vec<u64> = p.iter().map(|c| (c + 0.0).to_bits()).collect();
        metered
            .get(&key)
            .copied()
            .ok_or_else(|| Error::precondition(format!("stencil node {p:?} was not metered")))
    };

    let base_grid = NdArray {
        shape: vec![(1usize << k_bar) + 1; d],
        data: values[..base_len].to_vec(),
    };
    let base = a_coeffs_from_grid(&base_grid, spec, k_bar)?;
    let mut expansion = SparseExpansion::from_level(&base);
    for (k, budget, idx) in &chosen {
        let builder = StencilBuilder::detail(spec, *k)?;
        let coeffs = idx
            .iter()
            .map(|s| builder.build(s).apply(|node| lookup(*k, node)))
            .collect::<Result<Vec<f64>>>()?;
        let keep = (*budget).min(coeffs.len());
        let sel = Selection::compute(&coeffs, keep)?;
        for (i, v) in sel.kept {
            if v != 0.0 {
                expansion.push(DyadicIndex::new(*k, idx[i].clone()), v)?;
            }
        }
    }
    let levels = scouted.into_iter().map(|l| l.report).collect();
    Ok(finish(oracle, before, expansion, plan.clone(), levels))
}

/// Weights `gamma_{k,j}(s)` with `psi_{k,j} = sum_s gamma_{k,j}(s) M_{k,s}` and
/// `Q_k(f) = sum_j f(2^-k j) psi_{k,j}`.
pub fn kernel_weights(
    spec: &QuasiInterpolantSpec,
    k: u32,
    j: &[i64],
) -> Result<Vec<(Vec<i64>, f64)>> {
    let top = 1i64 << k;
    if j.iter().any(|&ji| !(0..=top).contains(&ji)) {
        return Err(Error::precondition(format!("node {j:?} is not in I^d({k})")));
    }
    let map = a_axis_map(spec, k)?;
    let (lo, _) = level_index_bounds(spec.order(), k);
    // For each axis: translates whose functional reads node j_i.
    let per_axis: Vec<Vec<(i64, f64)>> = j
        .iter()
        .map(|&ji| {
            map.rows
                .iter()
                .enumerate()
                .filter_map(|(t, row)| {
                    row.iter()
                        .find(|&&(node, _)| node as i64 == ji)
                        .map(|&(_, w)| (t as i64 + lo, w))
                })
                .filter(|&(_, w)| w != 0.0)
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let d = j.len();
    if per_axis.iter().any(Vec::is_empty) {
        return Ok(out);
    }
    let mut cursor = vec![0usize; d];
    loop {
        let s: Vec<i64> = (0..d).map(|a| per_axis[a][cursor[a]].0).collect();
        let w: f64 = (0..d).map(|a| per_axis[a][cursor[a]].1).product();
        out.push((s, w));
        let mut a = d;
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            cursor[a] += 1;
            if cursor[a] < per_axis[a].len() {
                break;
            }
            cursor[a] = 0;
        }
    }
}

/// Dense check used by tests and diagnostics: the level coefficients of `Q_k` rebuilt from kernels.
pub fn coefficients_from_kernels(
    spec: &QuasiInterpolantSpec,
    k: u32,
    grid: &NdArray,
) -> Result<LevelCoefficients> {
    let d = grid.shape.len();
    let mut values = vec![0.0; level_count(spec, d, k)];
    let proto = LevelCoefficients::from_values(spec.order(), k, d, values.clone())?;
    for (flat, &fv) in grid.data.iter().enumerate() {
        let j: Vec<i64> = grid.unflatten(flat).into_iter().map(|v| v as i64).collect();
        for (s, w) in kernel_weights(spec, k, &j)? {
            let pos = proto.position(&s).expect("kernel translates lie in J^d(k)");
            values[pos] += w * fv;
        }
    }
    LevelCoefficients::from_values(spec.order(), k, d, values)
}
