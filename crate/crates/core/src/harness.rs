//! Experiment plumbing: error quadrature, budget ladders and log-log rate fits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{
    make_schedule_with, recover_linear, recover_with_plan, AdaptiveOptions, BesovParams,
    RecoveryResult, ScheduleOptions,
};
use crate::besov::{corpus_entry, default_resolution, midpoint_values, quadrature_norm, Singularity};
use crate::error::{Error, Result};
use crate::exponent::{positive_part, Exponent};
use crate::multilevel::SparseExpansion;
use crate::oracle::{from_grid_file, FunctionOracle};
use crate::par;
use crate::quasi_interpolant::{grid_points, QuasiInterpolantSpec};

/// Quadrature for `||f - g||_q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quadrature {
    /// Midpoints per axis.
    pub resolution: usize,
    /// Known singular sets; for `q = inf` the error is also sampled on graded points around them.
    pub singularities: Vec<Singularity>,
}

impl Quadrature {
    pub fn new(resolution: usize) -> Self {
        Self {
            resolution,
            singularities: Vec::new(),
        }
    }

    pub fn with_singularities(mut self, s: Vec<Singularity>) -> Self {
        self.singularities = s;
        self
    }

    pub fn doubled(&self) -> Self {
        Self {
            resolution: 2 * self.resolution,
            singularities: self.singularities.clone(),
        }
    }
}

fn clamp_point(x: &mut [f64]) -> bool {
    x.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
}

/// Points at geometrically shrinking distances from each singular set.
fn graded_points(d: usize, singularities: &[Singularity]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let dists: Vec<f64> = (0..=240).map(|j| (-(j as f64) / 4.0).exp2()).collect();
    for s in singularities {
        match s {
            Singularity::Point(xi) => {
                let dirs: Vec<Vec<f64>> = if d == 1 {
                    vec![vec![1.0], vec![-1.0]]
                } else {
                    (0..8)
                        .map(|a| {
                            let t = a as f64 * std::f64::consts::FRAC_PI_4;
                            let mut v = vec![0.0; d];
                            v[0] = t.cos();
                            v[1] = t.sin();
                            v
                        })
                        .collect()
                };
                out.push(xi.clone());
                for u in &dirs {
                    for &r in &dists {
                        let mut x: Vec<f64> = xi.iter().zip(u).map(|(a, b)| a + r * b).collect();
                        if clamp_point(&mut x) {
                            out.push(x);
                        }
                    }
                }
            }
            Singularity::Hyperplane { normal, offset } if d == 2 => {
                let len = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                let n: Vec<f64> = normal.iter().map(|v| v / len).collect();
                let foot: Vec<f64> = n.iter().map(|v| v * offset / len).collect();
                let tangent = [-n[1], n[0]];
                for i in -64..=64 {
                    let t = i as f64 / 64.0 * 1.5;
                    let base = [foot[0] + t * tangent[0], foot[1] + t * tangent[1]];
                    for &r in dists.iter().step_by(2).take(100) {
                        for sgn in [-1.0, 0.0, 1.0] {
                            let mut x = vec![base[0] + sgn * r * n[0], base[1] + sgn * r * n[1]];
                            if clamp_point(&mut x) {
                                out.push(x);
                            }
                        }
                    }
                }
            }
            Singularity::Hyperplane { .. } => {}
        }
    }
    out
}

/// Points inside the supports of terms finer than the quadrature grid.
fn support_points(g: &SparseExpansion, resolution: usize) -> Vec<Vec<f64>> {
    let r = g.order().r() as i64;
    let coarse = (resolution as f64).log2().floor() as u32;
    let d = g.dim();
    let mut seen: BTreeSet<Vec<u64>> = BTreeSet::new();
    for (idx, _) in g.terms() {
        if idx.k <= coarse {
            continue;
        }
        let scale = (-(idx.k as f64 + 1.0)).exp2();
        let offsets: Vec<i64> = (-2 * r + 1..2 * r).collect();
        let mut cur = vec![0usize; d];
        loop {
            let x: Vec<f64> = (0..d)
                .map(|a| ((2 * idx.s[a] + offsets[cur[a]]) as f64 * scale).clamp(0.0, 1.0))
                .collect();
            seen.insert(x.iter().map(|v| v.to_bits()).collect());
            let mut a = d;
            let mut done = true;
            while a > 0 {
                a -= 1;
                cur[a] += 1;
                if cur[a] < offsets.len() {
                    done = false;
                    break;
                }
                cur[a] = 0;
            }
            if done {
                break;
            }
        }
    }
    seen.into_iter()
        .map(|bits| bits.into_iter().map(f64::from_bits).collect())
        .collect()
}

/// `||f - g||_q` by the midpoint rule; for `q = inf` the max also covers graded points
/// near the singular sets and points in the supports of under-resolved terms.
///
/// Grid oracles are compared on their own grid points, since nothing else can be read.
pub fn lq_error(
    f: &FunctionOracle,
    g: &SparseExpansion,
    q: Exponent,
    quad: &Quadrature,
) -> Result<f64> {
    let d = f.dim();
    if g.dim() != d {
        return Err(Error::config(format!(
            "expansion has d = {} but the target has d = {d}",
            g.dim()
        )));
    }
    if quad.resolution == 0 {
        return Err(Error::config("quadrature resolution must be positive"));
    }
    if let Some(m) = f.max_level() {
        let pts = grid_points(d, m);
        let diffs = par::try_map_slice(&pts, |x| Ok::<f64, Error>(f.probe(x)? - g.eval(x)))?;
        return Ok(quadrature_norm(&diffs, q, 1.0));
    }
    let diffs = midpoint_values(d, quad.resolution, |x| Ok(f.probe(x)? - g.eval(x)))?;
    let base = quadrature_norm(&diffs, q, 1.0);
    if !q.is_infinite() {
        return Ok(base);
    }
    let mut extra = graded_points(d, &quad.singularities);
    extra.extend(support_points(g, quad.resolution));
    let worst = par::try_map_slice(&extra, |x| Ok::<f64, Error>((f.probe(x)? - g.eval(x)).abs()))?
        .into_iter()
        .fold(base, f64::max);
    Ok(worst)
}

/// Least-squares line through `(log2 n, log2 error)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in `log2` units.
    pub residual: f64,
    pub points: usize,
    pub warnings: Vec<String>,
}

pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<RateFit> {
    let mut warnings = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(n, e) in pairs {
        if !(e > 0.0) || !e.is_finite() || !(n > 0.0) {
            let w = format!("excluded (n = {n}, error = {e}) from the fit");
            log::warn!("{w}");
            warnings.push(w);
            continue;
        }
        xs.push(n.log2());
        ys.push(e.log2());
    }
    if xs.len() < 2 {
        return Err(Error::config(format!(
            "a rate fit needs at least 2 valid points, got {}",
            xs.len()
        )));
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("a rate fit needs at least 2 distinct n"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(RateFit {
        slope,
        intercept,
        residual: (sse / m).sqrt(),
        points: xs.len(),
        warnings,
    })
}

/// What to recover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Corpus {
        corpus: String,
        #[serde(default = "one")]
        d: usize,
    },
    Expression {
        expression: String,
        d: usize,
    },
    Grid {
        grid_file: PathBuf,
    },
}

fn one() -> usize {
    1
}

fn cubic_name() -> String {
    "cubic".into()
}

/// A resolved target: oracle, default smoothness class and singular sets.
pub struct ResolvedTarget {
    pub name: String,
    pub oracle: FunctionOracle,
    pub nominal: Option<BesovParams>,
    pub singularities: Vec<Singularity>,
}

impl Target {
    pub fn resolve(&self) -> Result<ResolvedTarget> {
        match self {
            Target::Corpus { corpus, d } => {
                let e = corpus_entry(corpus, *d)?;
                Ok(ResolvedTarget {
                    name: e.name,
                    oracle: e.oracle,
                    nominal: Some(e.nominal),
                    singularities: e.singularities,
                })
            }
            Target::Expression { expression, d } => Ok(ResolvedTarget {
                name: expression.clone(),
                oracle: FunctionOracle::from_expression(expression, *d)?,
                nominal: None,
                singularities: Vec::new(),
            }),
            Target::Grid { grid_file } => Ok(ResolvedTarget {
                name: grid_file.display().to_string(),
                oracle: from_grid_file(grid_file)?,
                nominal: None,
                singularities: Vec::new(),
            }),
        }
    }
}

/// One budget-ladder experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: Target,
    #[serde(default = "cubic_name")]
    pub spec: String,
    /// Defaults to the corpus entry's nominal class.
    #[serde(default)]
    pub besov: Option<BesovParams>,
    pub ladder: Vec<usize>,
    /// Error norms to report; defaults to `besov.q`.
    #[serde(default)]
    pub error_q: Vec<Exponent>,
    /// Midpoints per axis; defaults to `2^12` (d = 1) or `2^7` (d = 2).
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

impl ExperimentConfig {
    /// Parse JSON or TOML, chosen by extension (`.toml` is TOML, everything else JSON).
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("bad JSON config: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad TOML config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.ladder.is_empty() {
            return Err(Error::config("the budget ladder is empty"));
        }
        if self.ladder.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("the budget ladder must be strictly increasing"));
        }
        if self.resolution == Some(0) {
            return Err(Error::config("quadrature resolution must be positive"));
        }
        Ok(())
    }
}

/// Error of one run in one norm, at resolutions `R` and `2R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub q: Exponent,
    pub value: f64,
    pub refined: f64,
    /// The two resolutions disagree by more than 5%.
    pub unstable: bool,
}

/// One algorithm at one budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// Distinct points in the run's ledger.
    pub samples_used: usize,
    /// See [`RecoveryResult::term_count`].
    pub terms: usize,
    pub bspline_terms: usize,
    pub errors: Vec<ErrorEstimate>,
    pub k_bar: u32,
    pub k_star: u32,
    /// Adaptive levels whose selection residual was checked against its bound.
    pub levels_checked: usize,
    /// Levels where `||c_k - P_n(c_k)||_q > n(k)^(1/q - 1/p) ||c_k||_p`.
    pub bound_violations: usize,
}

impl RunStats {
    pub fn error(&self, q: Exponent) -> Option<f64> {
        self.errors.iter().find(|e| e.q == q).map(|e| e.value)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub n: usize,
    pub linear: Option<RunStats>,
    pub adaptive: Option<RunStats>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub algorithm: String,
    pub q: Exponent,
    /// Fit over the upper half of the ladder (at least 4 points when available).
    pub fit: Option<RateFit>,
    pub full_fit: Option<RateFit>,
    pub theoretical: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub target: String,
    pub spec: String,
    pub besov: BesovParams,
    pub resolution: usize,
    pub seed: u64,
    pub rows: Vec<LadderRow>,
    pub slopes: Vec<SlopeReport>,
    pub warnings: Vec<String>,
}

impl RateReport {
    pub fn slope(&self, algorithm: &str, q: Exponent) -> Option<&SlopeReport> {
        self.slopes.iter().find(|s| s.algorithm == algorithm && s.q == q)
    }

    /// `n,samples_linear,err_linear,samples_adaptive,err_adaptive` for one error norm.
    pub fn to_csv(&self, q: Exponent) -> String {
        let mut out = String::from("n,samples_linear,err_linear,samples_adaptive,err_adaptive\n");
        let cell = |r: &Option<RunStats>| match r {
            Some(s) => (
                s.samples_used.to_string(),
                s.error(q).map_or(String::new(), |e| format!("{e:e}")),
            ),
            None => (String::new(), String::new()),
        };
        for row in &self.rows {
            let (sl, el) = cell(&row.linear);
            let (sa, ea) = cell(&row.adaptive);
            let _ = writeln!(out, "{},{sl},{el},{sa},{ea}", row.n);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `report.json` plus one `rates_q<q>.csv` per error norm.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json())?;
        written.push(json);
        let qs: Vec<Exponent> = self.slopes.iter().map(|s| s.q).fold(Vec::new(), |mut v, q| {
            if !v.contains(&q) {
                v.push(q);
            }
            v
        });
        for q in qs {
            let path = dir.join(format!("rates_q{q}.csv"));
            std::fs::write(&path, self.to_csv(q))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn run_stats(
    oracle: &FunctionOracle,
    result: &RecoveryResult,
    qs: &[Exponent],
    quad: &Quadrature,
) -> Result<RunStats> {
    let mut errors = Vec::new();
    let fine = quad.doubled();
    for &q in qs {
        let value = lq_error(oracle, &result.expansion, q, quad)?;
        let refined = lq_error(oracle, &result.expansion, q, &fine)?;
        let unstable = (value - refined).abs() > 0.05 * value.max(refined) + 1e-13;
        errors.push(ErrorEstimate {
            q,
            value,
            refined,
            unstable,
        });
    }
    let side = result.sidecar();
    Ok(RunStats {
        // Counted from the oracle's own ledger.
        samples_used: oracle.samples_used(),
        terms: result.term_count(),
        bspline_terms: result.expansion.len(),
        errors,
        k_bar: side.k_bar,
        k_star: side.k_star,
        levels_checked: result.levels.iter().filter(|l| l.budget > 0).count(),
        bound_violations: result.levels.iter().filter(|l| !l.within_bound()).count(),
    })
}

fn check_budget(n: usize, stats: &RunStats, algorithm: &str, warnings: &mut Vec<String>) {
    if stats.bound_violations > 0 {
        warnings.push(format!(
            "{algorithm} at n = {n}: {} levels exceed the selection bound",
            stats.bound_violations
        ));
    }
    if stats.samples_used > n || stats.terms > n {
        warnings.push(format!(
            "{algorithm} at n = {n}: {} samples and {} terms exceed the budget",
            stats.samples_used, stats.terms
        ));
    }
    for e in &stats.errors {
        if e.unstable {
            warnings.push(format!(
                "{algorithm} at n = {n}: q = {} error moved from {:e} to {:e} when the quadrature was refined",
                e.q, e.value, e.refined
            ));
        }
    }
}

fn ladder_row(
    n: usize,
    target: &ResolvedTarget,
    spec: &QuasiInterpolantSpec,
    bp: &BesovParams,
    sched_opts: &ScheduleOptions,
    qs: &[Exponent],
    quad: &Quadrature,
) -> Result<LadderRow> {
    let mut warnings = Vec::new();
    let oracle = target.oracle.fresh();
    let linear = match recover_linear(&oracle, spec, n) {
        Ok(r) => Some(run_stats(&oracle, &r, qs, quad)?),
        Err(Error::InfeasibleBudget(msg)) => {
            warnings.push(format!("linear skipped at n = {n}: {msg}"));
            None
        }
        Err(e) => return Err(e),
    };
    let adaptive = if bp.is_adaptive_regime() {
        let oracle = target.oracle.fresh();
        let run = make_schedule_with(n, bp, spec, sched_opts).and_then(|plan| {
            recover_with_plan(&oracle, spec, bp, &plan, &AdaptiveOptions::default())
        });
        match run {
            Ok(r) => Some(run_stats(&oracle, &r, qs, quad)?),
            Err(Error::InfeasibleBudget(msg)) => {
                warnings.push(format!("adaptive skipped at n = {n}: {msg}"));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    for (name, stats) in [("linear", &linear), ("adaptive", &adaptive)] {
        if let Some(s) = stats {
            check_budget(n, s, name, &mut warnings);
        }
    }
    Ok(LadderRow {
        n,
        linear,
        adaptive,
        warnings,
    })
}

fn fits(rows: &[LadderRow], q: Exponent, pick: impl Fn(&LadderRow) -> Option<&RunStats>) -> (Option<RateFit>, Option<RateFit>) {
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| pick(r).and_then(|s| s.error(q)).map(|e| (r.n as f64, e)))
        .collect();
    let full = fit_rate(&pairs).ok();
    let keep = (pairs.len() / 2).max(4).min(pairs.len());
    let upper = fit_rate(&pairs[pairs.len() - keep..]).ok();
    (upper, full)
}

/// Run both algorithms over the ladder and fit their rates.
pub fn run_ladder(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let target = cfg.target.resolve()?;
    let spec = QuasiInterpolantSpec::by_name(&cfg.spec)?;
    let bp = cfg.besov.or(target.nominal).ok_or_else(|| {
        Error::config("the target has no nominal smoothness class; set `besov` in the config")
    })?;
    bp.validate()?;
    let d = target.oracle.dim();
    if bp.d != d {
        return Err(Error::config(format!(
            "besov.d = {} but the target has d = {d}",
            bp.d
        )));
    }
    let qs = if cfg.error_q.is_empty() {
        vec![bp.q]
    } else {
        cfg.error_q.clone()
    };
    let resolution = cfg.resolution.unwrap_or_else(|| default_resolution(d));
    let quad = Quadrature::new(resolution).with_singularities(target.singularities.clone());
    let sched_opts = ScheduleOptions {
        epsilon: cfg.epsilon,
        ..ScheduleOptions::default()
    };
    let rows = par::try_map_slice(&cfg.ladder, |&n| {
        ladder_row(n, &target, &spec, &bp, &sched_opts, &qs, &quad)
    })?;
    let mut warnings: Vec<String> = rows.iter().flat_map(|r| r.warnings.clone()).collect();
    let mut slopes = Vec::new();
    let gap = positive_part(bp.p.recip() - bp.q.recip());
    for &q in &qs {
        let gap_q = positive_part(bp.p.recip() - q.recip());
        let (fit, full_fit) = fits(&rows, q, |r| r.linear.as_ref());
        slopes.push(SlopeReport {
            algorithm: "linear".into(),
            q,
            fit,
            full_fit,
            theoretical: -bp.alpha / d as f64 + gap_q,
        });
        if bp.is_adaptive_regime() {
            let (fit, full_fit) = fits(&rows, q, |r| r.adaptive.as_ref());
            slopes.push(SlopeReport {
                algorithm: "adaptive".into(),
                q,
                fit,
                full_fit,
                theoretical: -bp.alpha / d as f64 + gap_q - gap,
            });
        }
    }
    for s in &slopes {
        if s.fit.is_none() {
            warnings.push(format!("no {} rate fit for q = {}", s.algorithm, s.q));
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(RateReport {
        target: target.name,
        spec: cfg.spec.clone(),
        besov: bp,
        resolution,
        seed: cfg.seed,
        rows,
        slopes,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quasi_interpolant::apply_q;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn inf() -> Exponent {
        Exponent::INFINITY
    }

    fn zero(d: usize) -> SparseExpansion {
        SparseExpansion::new(QuasiInterpolantSpec::cubic().order(), d)
    }

    #[test]
    fn error_quadrature_examples() {
        let one = FunctionOracle::from_fn("1", 2, |_| 1.0);
        for q in [1.0, 2.0, 0.5] {
            let e = lq_error(&one, &zero(2), Exponent::new(q).unwrap(), &Quadrature::new(32)).unwrap();
            assert_abs_diff_eq!(e, 1.0, epsilon = 1e-12);
        }
        assert_eq!(lq_error(&one, &zero(2), inf(), &Quadrature::new(8)).unwrap(), 1.0);
        let x = FunctionOracle::from_fn("x", 1, |x| x[0]);
        let e = lq_error(&x, &zero(1), Exponent::new(2.0).unwrap(), &Quadrature::new(4096)).unwrap();
        assert_abs_diff_eq!(e, 1.0 / 3f64.sqrt(), epsilon = 1e-3);
        let spec = QuasiInterpolantSpec::cubic();
        let p = FunctionOracle::from_fn("p", 1, |x| x[0].powi(3) - 2.0 * x[0]);
        let g = apply_q(&p, &spec, 4).unwrap();
        assert!(lq_error(&p, &g, inf(), &Quadrature::new(4096)).unwrap() <= 1e-8);
    }

    #[test]
    fn graded_points_find_the_cusp_peak() {
        let xi = 0.3;
        let f = FunctionOracle::from_fn("f", 1, move |x| 1.0 - (x[0] - xi).abs().powf(0.5));
        let plain = lq_error(&f, &zero(1), inf(), &Quadrature::new(4)).unwrap();
        let quad = Quadrature::new(4).with_singularities(vec![Singularity::Point(vec![xi])]);
        let graded = lq_error(&f, &zero(1), inf(), &quad).unwrap();
        assert!(plain < 0.9);
        assert_eq!(graded, 1.0);
    }

    #[test]
    fn fit_rate_examples() {
        let exact: Vec<(f64, f64)> = (5..12).map(|k| {
            let n = (1u64 << k) as f64;
            (n, 3.0 * n.powf(-2.0))
        }).collect();
        let f = fit_rate(&exact).unwrap();
        assert_abs_diff_eq!(f.slope, -2.0, epsilon = 1e-12);
        assert!(f.residual <= 1e-12);
        assert!(fit_rate(&[(4.0, 1.0), (8.0, 0.0)]).is_err());
        let f = fit_rate(&[(4.0, 1.0), (8.0, -1.0), (16.0, 0.25)]).unwrap();
        assert_eq!(f.points, 2);
        assert_eq!(f.warnings.len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noisy: Vec<(f64, f64)> = (4..16).map(|k| {
            let n = (1u64 << k) as f64;
            (n, 0.7 * n.powf(-1.6) * (1.0 + 0.05 * rng.random_range(-1.0..1.0)))
        }).collect();
        assert!((fit_rate(&noisy).unwrap().slope + 1.6).abs() < 0.1);
    }

    #[test]
    fn config_parsing() {
        let json = r#"{"target": {"corpus": "cusp-0.6"}, "ladder": [64, 128],
                       "error_q": ["inf", 2], "seed": 7}"#;
        let cfg = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(cfg.spec, "cubic");
        assert_eq!(cfg.error_q, vec![inf(), Exponent::new(2.0).unwrap()]);
        let toml = "ladder = [32, 64]\nspec = \"piecewise_linear\"\n[target]\nexpression = \"x*y\"\nd = 2\n";
        let cfg = ExperimentConfig::from_toml(toml).unwrap();
        assert_eq!(cfg.target, Target::Expression { expression: "x*y".into(), d: 2 });
        let bad = r#"{"target": {"corpus": "sin"}, "ladder": [64, 32]}"#;
        assert!(ExperimentConfig::from_json(bad).unwrap().validate().is_err());
    }

    #[test]
    fn ladder_with_an_infeasible_budget() {
        let cfg = ExperimentConfig {
            target: Target::Corpus { corpus: "cusp-0.6".into(), d: 1 },
            spec: "cubic".into(),
            besov: None,
            ladder: vec![8, 64, 128, 256, 512, 1024],
            error_q: vec![],
            resolution: Some(1024),
            seed: 0,
            output: None,
            epsilon: None,
        };
        let report = run_ladder(&cfg).unwrap();
        assert_eq!(report.rows.len(), 6);
        assert!(report.rows[0].adaptive.is_none());
        assert!(!report.rows[0].warnings.is_empty());
        let fit = report.slope("adaptive", inf()).unwrap().full_fit.as_ref().unwrap();
        assert_eq!(fit.points, 5);
        for row in &report.rows {
            for s in [&row.linear, &row.adaptive].into_iter().flatten() {
                assert!(s.samples_used <= row.n);
            }
        }
        let again = run_ladder(&cfg).unwrap();
        assert_eq!(report.to_json(), again.to_json());
        assert!(report.to_csv(inf()).starts_with("n,samples_linear,err_linear,samples_adaptive,err_adaptive\n8,"));
    }
}
