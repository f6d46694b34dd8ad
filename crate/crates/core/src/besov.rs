//! Moduli of smoothness, Besov quasi-norm estimates and a corpus of test functions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adaptive::BesovParams;
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::multilevel::{level_norm, Decomposition, SparseExpansion};
use crate::oracle::FunctionOracle;
use crate::par;

/// Default quadrature points per axis: `2^12` in one variable, `2^7` in two.
pub fn default_resolution(d: usize) -> usize {
    if d == 1 {
        1 << 12
    } else {
        1 << 7
    }
}

/// How `omega_l(f, t)_p` is estimated.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothnessProbe {
    pub l: usize,
    /// `t = 2^-k` for each listed `k`, strictly increasing.
    pub levels: Vec<u32>,
    pub p: Exponent,
    /// Random directions per `t`, on top of the coordinate axes.
    pub h_samples: usize,
    /// Midpoint-rule points per axis.
    pub resolution: usize,
    pub seed: u64,
}

impl SmoothnessProbe {
    pub fn new(l: usize, k_max: u32, p: Exponent, d: usize) -> Self {
        Self {
            l,
            levels: (0..=k_max).collect(),
            p,
            h_samples: 4,
            resolution: default_resolution(d),
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::config("difference order l must be positive"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("step sizes t = 2^-k must be strictly decreasing"));
        }
        if self.resolution == 0 {
            return Err(Error::config("quadrature resolution must be positive"));
        }
        Ok(())
    }
}

fn binomial_signed(l: usize) -> Vec<f64> {
    let mut c = vec![1.0f64; l + 1];
    for j in 1..=l {
        c[j] = c[j - 1] * (l + 1 - j) as f64 / j as f64;
    }
    (0..=l)
        .map(|j| if (l - j).is_multiple_of(2) { c[j] } else { -c[j] })
        .collect()
}

/// `||Delta_h^l f||_p` over `{x : x, x + l h in [0,1]^d}` by the midpoint rule.
pub fn difference_norm(
    oracle: &FunctionOracle,
    h: &[f64],
    l: usize,
    p: Exponent,
    resolution: usize,
) -> Result<f64> {
    let d = oracle.dim();
    let mut lo = vec![0.0; d];
    let mut width = vec![0.0; d];
    for i in 0..d {
        let shift = l as f64 * h[i];
        let a = (-shift).max(0.0);
        let b = (1.0 - shift).min(1.0);
        if b <= a {
            return Ok(0.0);
        }
        lo[i] = a;
        width[i] = b - a;
    }
    let coeffs = binomial_signed(l);
    let total = resolution.pow(d as u32);
    let vals = par::try_map_slice(&(0..total).collect::<Vec<_>>(), |&flat| {
        let mut x = vec![0.0; d];
        let mut rem = flat;
        for i in (0..d).rev() {
            x[i] = lo[i] + ((rem % resolution) as f64 + 0.5) * width[i] / resolution as f64;
            rem /= resolution;
        }
        let mut acc = 0.0;
        let mut y = x.clone();
        for (j, &c) in coeffs.iter().enumerate() {
            for i in 0..d {
                y[i] = (x[i] + j as f64 * h[i]).clamp(0.0, 1.0);
            }
            acc += c * oracle.probe(&y)?;
        }
        Ok::<f64, Error>(acc)
    })?;
    let volume: f64 = width.iter().product();
    Ok(quadrature_norm(&vals, p, volume))
}

/// `(volume * mean |v|^p)^(1/p)`, or `max |v|` for `p = inf`.
pub fn quadrature_norm(vals: &[f64], p: Exponent, volume: f64) -> f64 {
    if vals.is_empty() {
        return 0.0;
    }
    if p.is_infinite() {
        return p.norm(vals);
    }
    let pv = p.value();
    let mean = vals.iter().map(|v| v.abs().powf(pv)).sum::<f64>() / vals.len() as f64;
    (volume * mean).powf(1.0 / pv)
}

/// `||f||_p` on the cube by the midpoint rule.
pub fn function_norm(oracle: &FunctionOracle, p: Exponent, resolution: usize) -> Result<f64> {
    let vals = midpoint_values(oracle.dim(), resolution, |x| oracle.probe(x))?;
    Ok(quadrature_norm(&vals, p, 1.0))
}

/// Values of `f` at the midpoints of a `resolution^d` grid, row-major.
pub fn midpoint_values(
    d: usize,
    resolution: usize,
    f: impl Fn(&[f64]) -> Result<f64> + Sync,
) -> Result<Vec<f64>> {
    let total = resolution.pow(d as u32);
    let idx: Vec<usize> = (0..total).collect();
    par::try_map_slice(&idx, |&flat| {
        let mut x = vec![0.0; d];
        let mut rem = flat;
        for i in (0..d).rev() {
            x[i] = ((rem % resolution) as f64 + 0.5) / resolution as f64;
            rem /= resolution;
        }
        f(&x)
    })
}

/// `(t, omega_l(f, t)_p)` for each `t` of the probe, in the probe's order.
pub fn modulus(oracle: &FunctionOracle, probe: &SmoothnessProbe) -> Result<Vec<(f64, f64)>> {
    probe.validate()?;
    let d = oracle.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut raw = Vec::with_capacity(probe.levels.len());
    for &k in &probe.levels {
        let t = (-(k as f64)).exp2();
        let mut steps: Vec<Vec<f64>> = Vec::new();
        for i in 0..d {
            let mut e = vec![0.0; d];
            e[i] = t;
            steps.push(e);
        }
        for _ in 0..probe.h_samples {
            let mut u: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let len = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let mag = t * rng.random_range(0.5..1.0);
            u.iter_mut().for_each(|v| *v *= mag / len);
            steps.push(u);
        }
        let mut best = 0.0f64;
        for h in &steps {
            best = best.max(difference_norm(oracle, h, probe.l, probe.p, probe.resolution)?);
        }
        raw.push((t, best));
    }
    // Running max from the smallest t up: omega is non-decreasing in t.
    let mut run = 0.0f64;
    for entry in raw.iter_mut().rev() {
        run = run.max(entry.1);
        entry.1 = run;
    }
    Ok(raw)
}

/// A truncated series estimate together with its terms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeriesEstimate {
    pub value: f64,
    /// `(k, term)` in increasing `k`.
    pub terms: Vec<(u32, f64)>,
    /// The last term of the truncated series; large values mean the series has not settled.
    pub tail: f64,
    /// Additive part outside the series (`||f||_p` for `B1`, otherwise 0).
    pub offset: f64,
}

fn series(terms: Vec<(u32, f64)>, theta: Exponent, offset: f64) -> SeriesEstimate {
    let tail = terms.last().map_or(0.0, |t| t.1);
    let value = theta.combine(terms.iter().map(|t| t.1)) + offset;
    SeriesEstimate {
        value,
        terms,
        tail,
        offset,
    }
}

/// `B1(f) = (sum_k (2^(alpha k) omega_l(f, 2^-k)_p)^theta)^(1/theta) + ||f||_p`, `k = 0..=10`.
pub fn besov_seminorm_b1(
    oracle: &FunctionOracle,
    bp: &BesovParams,
    l: usize,
) -> Result<SeriesEstimate> {
    let probe = SmoothnessProbe::new(l, 10, bp.p, oracle.dim());
    besov_seminorm_b1_with(oracle, bp, &probe)
}

pub fn besov_seminorm_b1_with(
    oracle: &FunctionOracle,
    bp: &BesovParams,
    probe: &SmoothnessProbe,
) -> Result<SeriesEstimate> {
    if probe.l as f64 <= bp.alpha {
        return Err(Error::config(format!(
            "difference order l = {} must exceed alpha = {}",
            probe.l, bp.alpha
        )));
    }
    let mut probe = probe.clone();
    probe.p = bp.p;
    let omega = modulus(oracle, &probe)?;
    let terms = probe
        .levels
        .iter()
        .zip(&omega)
        .map(|(&k, &(_, w))| (k, (bp.alpha * k as f64).exp2() * w))
        .collect();
    let norm = function_norm(oracle, bp.p, probe.resolution)?;
    Ok(series(terms, bp.theta, norm))
}

/// `B3(f) = (sum_k (2^((alpha - d/p) k) ||{c_{k,s}}||_p)^theta)^(1/theta)` over the decomposition.
///
/// The base level contributes its `a`-coefficients, as `c_{0,s} = a_{0,s}`.
pub fn besov_discrete_b3(dec: &Decomposition, bp: &BesovParams) -> SeriesEstimate {
    let d = dec.base.dim() as f64;
    let w = |k: u32| ((bp.alpha - d * bp.p.recip()) * k as f64).exp2();
    let mut terms = vec![(dec.base_level, w(dec.base_level) * bp.p.norm(dec.base.values()))];
    for c in &dec.details {
        terms.push((c.k, w(c.k) * bp.p.norm(c.values())));
    }
    series(terms, bp.theta, 0.0)
}

/// `B2(f) = ||{2^(alpha k) ||q_k||_p}||_theta` with `||q_k||_p` by midpoint quadrature.
pub fn besov_b2(dec: &Decomposition, bp: &BesovParams, resolution: usize) -> Result<SeriesEstimate> {
    let d = dec.base.dim();
    let mut levels = vec![SparseExpansion::from_level(&dec.base)];
    levels.extend(dec.details.iter().map(SparseExpansion::from_level));
    let mut terms = Vec::with_capacity(levels.len());
    for (i, q) in levels.iter().enumerate() {
        let k = dec.base_level + i as u32;
        let vals = midpoint_values(d, resolution, |x| Ok(q.eval(x)))?;
        terms.push((k, (bp.alpha * k as f64).exp2() * quadrature_norm(&vals, bp.p, 1.0)));
    }
    Ok(series(terms, bp.theta, 0.0))
}

/// `B2` with `||q_k||_p` replaced by the coefficient proxy `2^(-dk/p) ||c_k||_p`.
pub fn besov_b2_proxy(dec: &Decomposition, bp: &BesovParams) -> SeriesEstimate {
    let mut terms = vec![(
        dec.base_level,
        (bp.alpha * dec.base_level as f64).exp2() * level_norm(&dec.base, bp.p),
    )];
    for c in &dec.details {
        terms.push((c.k, (bp.alpha * c.k as f64).exp2() * level_norm(c, bp.p)));
    }
    series(terms, bp.theta, 0.0)
}

/// Where a corpus function fails to be smooth.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Singularity {
    Point(Vec<f64>),
    /// `{x : normal . x = offset}`.
    Hyperplane { normal: Vec<f64>, offset: f64 },
}

/// A named test function with the smoothness class it is meant to exercise.
#[derive(Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub oracle: FunctionOracle,
    pub nominal: BesovParams,
    /// Expression accepted by [`FunctionOracle::from_expression`].
    pub closed_form: Option<String>,
    pub singularities: Vec<Singularity>,
}

impl Clone for CorpusEntry {
    /// The copy shares the evaluator but starts with an empty ledger.
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            oracle: self.oracle.fresh(),
            nominal: self.nominal,
            closed_form: self.closed_form.clone(),
            singularities: self.singularities.clone(),
        }
    }
}

fn ex(v: f64) -> Exponent {
    Exponent::new(v).expect("positive exponent")
}

fn smooth_params(d: usize) -> BesovParams {
    BesovParams {
        alpha: 3.5,
        p: Exponent::INFINITY,
        q: Exponent::INFINITY,
        theta: Exponent::INFINITY,
        d,
    }
}

fn entry(
    name: &str,
    d: usize,
    expr: &str,
    f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    nominal: BesovParams,
    singularities: Vec<Singularity>,
) -> CorpusEntry {
    CorpusEntry {
        name: name.to_string(),
        oracle: FunctionOracle::from_fn(name, d, f),
        nominal,
        closed_form: Some(expr.to_string()),
        singularities,
    }
}

/// Cusp location in one variable.
pub const CUSP_POINT: f64 = std::f64::consts::FRAC_1_PI;
/// Cusp location in two variables.
pub const RADIAL_POINT: [f64; 2] = [std::f64::consts::FRAC_1_PI, 0.367_879_441_171_442_33];
/// Kink location in one variable.
pub const KINK_POINT: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// The two-variable kink lies on `x + y = KINK_OFFSET`.
pub const KINK_OFFSET: f64 = 0.9;

/// Test functions in `d` variables; `d` must be 1 or 2.
pub fn corpus(d: usize) -> Result<Vec<CorpusEntry>> {
    let inf = Exponent::INFINITY;
    match d {
        1 => {
            let mut out = vec![
                entry("const", 1, "1", |_| 1.0, smooth_params(1), vec![]),
                entry("poly1", 1, "0.5 - 2*x", |x| 0.5 - 2.0 * x[0], smooth_params(1), vec![]),
                entry(
                    "poly3",
                    1,
                    "x^3 - 0.6*x^2 + 0.1*x + 0.2",
                    |x| ((x[0] - 0.6) * x[0] + 0.1) * x[0] + 0.2,
                    smooth_params(1),
                    vec![],
                ),
                entry(
                    "sin",
                    1,
                    "sin(2*PI*x)",
                    |x| (std::f64::consts::TAU * x[0]).sin(),
                    smooth_params(1),
                    vec![],
                ),
            ];
            for beta in [0.4, 0.6, 0.8] {
                out.push(entry(
                    &format!("cusp-{beta}"),
                    1,
                    &format!("abs(x - 1/PI)^{beta}"),
                    move |x| (x[0] - CUSP_POINT).abs().powf(beta),
                    BesovParams {
                        alpha: beta + 1.0,
                        p: ex(1.0),
                        q: inf,
                        theta: inf,
                        d: 1,
                    },
                    vec![Singularity::Point(vec![CUSP_POINT])],
                ));
            }
            out.push(entry(
                "kink",
                1,
                "abs(x - 1/sqrt(2)) + x^2",
                |x| (x[0] - KINK_POINT).abs() + x[0] * x[0],
                BesovParams {
                    alpha: 2.0 - 1e-9,
                    p: ex(1.0),
                    q: inf,
                    theta: inf,
                    d: 1,
                },
                vec![Singularity::Point(vec![KINK_POINT])],
            ));
            Ok(out)
        }
        2 => {
            let mut out = vec![
                entry(
                    "poly3",
                    2,
                    "(x^3 - 0.5*x)*(1 + y - y^3)",
                    |x| (x[0].powi(3) - 0.5 * x[0]) * (1.0 + x[1] - x[1].powi(3)),
                    smooth_params(2),
                    vec![],
                ),
                entry(
                    "sin",
                    2,
                    "sin(2*PI*x)*sin(2*PI*y)",
                    |x| (std::f64::consts::TAU * x[0]).sin() * (std::f64::consts::TAU * x[1]).sin(),
                    smooth_params(2),
                    vec![],
                ),
            ];
            for beta in [0.4, 0.6, 0.8] {
                let [a, b] = RADIAL_POINT;
                out.push(entry(
                    &format!("radial-{beta}"),
                    2,
                    &format!("((x - 1/PI)^2 + (y - 1/E)^2)^{}", beta / 2.0),
                    move |x| ((x[0] - a).powi(2) + (x[1] - b).powi(2)).powf(beta / 2.0),
                    BesovParams {
                        alpha: beta + 2.0,
                        p: ex(1.0),
                        q: inf,
                        theta: inf,
                        d: 2,
                    },
                    vec![Singularity::Point(RADIAL_POINT.to_vec())],
                ));
            }
            out.push(entry(
                "kink",
                2,
                "abs(x + y - 0.9) + x*y",
                |x| (x[0] + x[1] - KINK_OFFSET).abs() + x[0] * x[1],
                BesovParams {
                    alpha: 1.5,
                    p: ex(2.0),
                    q: inf,
                    theta: inf,
                    d: 2,
                },
                vec![Singularity::Hyperplane {
                    normal: vec![1.0, 1.0],
                    offset: KINK_OFFSET,
                }],
            ));
            Ok(out)
        }
        _ => Err(Error::config(format!("the corpus covers d = 1 and d = 2, not d = {d}"))),
    }
}

/// Corpus entry by name, e.g. `"cusp-0.6"`.
pub fn corpus_entry(name: &str, d: usize) -> Result<CorpusEntry> {
    corpus(d)?
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::config(format!("no corpus entry {name:?} in d = {d}")))
}
