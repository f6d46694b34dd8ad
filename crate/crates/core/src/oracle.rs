//! Point-evaluable targets with exact, distinct-point sample accounting.
//!
//! Every recovery algorithm reads function values through [`FunctionOracle::sample`]
//! (or [`FunctionOracle::sample_many`]), which records each distinct point in an
//! ordered ledger. [`FunctionOracle::probe`] evaluates without recording and is
//! reserved for choosing sample positions and for error quadrature.

use std::fmt;
use std::path::Path;
use std::sync::{Arc, Mutex};

use exmex::prelude::*;
use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::par;

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Dense dyadic samples `f(j / 2^m)`, `j in {0..2^m}^d`, stored row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct GridData {
    pub d: usize,
    pub m: u32,
    pub values: Vec<f64>,
}

impl GridData {
    pub fn new(d: usize, m: u32, values: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("grid dimension must be positive"));
        }
        let expected = ((1usize << m) + 1).pow(d as u32);
        if values.len() != expected {
            return Err(Error::config(format!(
                "grid of dimension {d} at level {m} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self { d, m, values })
    }

    /// Sample `f` on the level-`m` grid.
    pub fn from_fn(d: usize, m: u32, f: impl Fn(&[f64]) -> f64) -> Self {
        let side = (1usize << m) + 1;
        let h = (m as f64).exp2().recip();
        let total = side.pow(d as u32);
        let mut x = vec![0.0; d];
        let values = (0..total)
            .map(|flat| {
                let mut rem = flat;
                for axis in (0..d).rev() {
                    x[axis] = (rem % side) as f64 * h;
                    rem /= side;
                }
                f(&x)
            })
            .collect();
        Self { d, m, values }
    }

    fn side(&self) -> usize {
        (1usize << self.m) + 1
    }

    /// Look up the stored value at a grid point; anything else is an [`Error::OffGrid`].
    pub fn lookup(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::precondition(format!(
                "point of dimension {} queried on a {}-dimensional grid",
                x.len(),
                self.d
            )));
        }
        let scale = (self.m as f64).exp2();
        let side = self.side();
        let mut flat = 0usize;
        for &xi in x {
            let t = xi * scale;
            if !(0.0..=scale).contains(&t) || t.fract() != 0.0 {
                return Err(Error::OffGrid {
                    point: x.to_vec(),
                    reason: format!("not a node of the level-{} grid", self.m),
                });
            }
            flat = flat * side + t as usize;
        }
        Ok(self.values[flat])
    }

    /// Parse the whitespace format (`d m` header, then row-major values) or
    /// the CSV format (`x_1,...,x_d,value` rows, optional header row).
    pub fn parse(text: &str) -> Result<Self> {
        let first = text
            .lines()
            .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .ok_or_else(|| Error::Parse("empty grid file".into()))?;
        if first.contains(',') {
            Self::parse_csv(text)
        } else {
            Self::parse_plain(text)
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn parse_plain(text: &str) -> Result<Self> {
        let mut tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(str::split_whitespace);
        let mut header = |what: &str| -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what} in grid header")))?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("bad {what} in grid header: {e}")))
        };
        let d = header("dimension")?;
        let m = header("level")? as u32;
        let values = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad grid value {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, m, values)
    }

    fn parse_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            match fields {
                Ok(v) => rows.push(v),
                Err(_) if rows.is_empty() => continue, // header row
                Err(e) => {
                    return Err(Error::Parse(format!("line {}: {e}", lineno + 1)));
                }
            }
        }
        let width = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Parse("no data rows in grid CSV".into()))?;
        if width < 2 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Parse(
                "grid CSV rows must all have d coordinates plus one value".into(),
            ));
        }
        let d = width - 1;
        let per_axis = (rows.len() as f64).powf(1.0 / d as f64).round() as usize;
        if per_axis < 2 || !(per_axis - 1).is_power_of_two() || per_axis.pow(d as u32) != rows.len()
        {
            return Err(Error::Parse(format!(
                "{} CSV rows do not form a dyadic grid in dimension {d}",
                rows.len()
            )));
        }
        let m = (per_axis - 1).trailing_zeros();
        let mut values = vec![f64::NAN; rows.len()];
        let mut seen = vec![false; rows.len()];
        let scale = (m as f64).exp2();
        for row in &rows {
            let mut flat = 0usize;
            for &xi in &row[..d] {
                let t = xi * scale;
                if !(0.0..=scale).contains(&t) || (t - t.round()).abs() > 1e-9 {
                    return Err(Error::OffGrid {
                        point: row[..d].to_vec(),
                        reason: format!("CSV coordinate is not a level-{m} node"),
                    });
                }
                flat = flat * per_axis + t.round() as usize;
            }
            if seen[flat] {
                return Err(Error::Parse(format!("duplicate grid node {:?}", &row[..d])));
            }
            seen[flat] = true;
            values[flat] = row[d];
        }
        Self::new(d, m, values)
    }

    /// Write in the whitespace format.
    pub fn to_plain_string(&self) -> String {
        let mut out = format!("{} {}\n", self.d, self.m);
        let side = self.side();
        for row in self.values.chunks(side) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone)]
enum Source {
    Closed(Evaluator),
    Grid(Arc<GridData>),
}

fn point_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same sample point.
    x.iter().map(|&v| (v + 0.0).to_bits()).collect()
}

/// Distinct sampled points keyed by coordinate bits, in first-query order.
type Ledger = IndexMap<Vec<u64>, (Vec<f64>, f64)>;

/// A target function on `[0,1]^d` with a ledger of distinct sampled points.
pub struct FunctionOracle {
    name: String,
    dim: usize,
    source: Source,
    budget_cap: Option<usize>,
    ledger: Mutex<Ledger>,
}

impl fmt::Debug for FunctionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FunctionOracle")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("budget_cap", &self.budget_cap)
            .field("samples", &self.samples_used())
            .finish()
    }
}

impl FunctionOracle {
    pub fn from_fn(
        name: impl Into<String>,
        dim: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::with_source(name.into(), dim, Source::Closed(Arc::new(f)))
    }

    /// Parse an arithmetic expression in the coordinates.
    ///
    /// Coordinates are named `x`, `y`, `z` or `x1`, `x2`, ...; `PI`/`π` and `E` are constants.
    pub fn from_expression(expr: &str, dim: usize) -> Result<Self> {
        let flat = exmex::parse::<f64>(expr)
            .map_err(|e| Error::config(format!("cannot parse expression {expr:?}: {e}")))?;
        let mut slots = Vec::new();
        for var in flat.var_names() {
            let axis = match var.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                v if v.starts_with('x') && v[1..].parse::<usize>().is_ok() => {
                    let i: usize = v[1..].parse().unwrap();
                    if i == 0 {
                        return Err(Error::config("coordinates are numbered from x1"));
                    }
                    i - 1
                }
                other => {
                    return Err(Error::config(format!(
                        "unknown variable {other:?} in expression {expr:?}"
                    )))
                }
            };
            if axis >= dim {
                return Err(Error::config(format!(
                    "variable {var:?} refers to axis {} but d = {dim}",
                    axis + 1
                )));
            }
            slots.push(axis);
        }
        let eval = move |x: &[f64]| {
            let vals: Vec<f64> = slots.iter().map(|&a| x[a]).collect();
            flat.eval(&vals).unwrap_or(f64::NAN)
        };
        Ok(Self::from_fn(expr, dim, eval))
    }

    pub fn from_grid(grid: GridData) -> Self {
        let dim = grid.d;
        Self::with_source(
            format!("grid(d={}, m={})", grid.d, grid.m),
            dim,
            Source::Grid(Arc::new(grid)),
        )
    }

    fn with_source(name: String, dim: usize, source: Source) -> Self {
        Self {
            name,
            dim,
            source,
            budget_cap: None,
            ledger: Mutex::new(IndexMap::new()),
        }
    }

    /// Refuse samples beyond `cap` distinct points.
    pub fn with_budget_cap(mut self, cap: usize) -> Self {
        self.budget_cap = Some(cap);
        self
    }

    /// A copy sharing the evaluator but with an empty ledger and no cap.
    pub fn fresh(&self) -> Self {
        Self::with_source(self.name.clone(), self.dim, self.source.clone())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn budget_cap(&self) -> Option<usize> {
        self.budget_cap
    }

    /// Finest dyadic level the oracle can answer, if limited (gridded data).
    pub fn max_level(&self) -> Option<u32> {
        match &self.source {
            Source::Closed(_) => None,
            Source::Grid(g) => Some(g.m),
        }
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::precondition(format!(
                "oracle of dimension {} queried with a point of dimension {}",
                self.dim,
                x.len()
            )));
        }
        let v = match &self.source {
            Source::Closed(f) => f(x),
            Source::Grid(g) => g.lookup(x)?,
        };
        if !v.is_finite() {
            return Err(Error::config(format!(
                "target {} is not finite at {x:?}",
                self.name
            )));
        }
        Ok(v)
    }

    /// Evaluate without touching the ledger.
    pub fn probe(&self, x: &[f64]) -> Result<f64> {
        self.evaluate(x)
    }

    /// Metered evaluation: records `x` in the ledger (once per distinct point).
    pub fn sample(&self, x: &[f64]) -> Result<f64> {
        let key = point_key(x);
        let mut ledger = self.ledger.lock().expect("ledger poisoned");
        if let Some((_, v)) = ledger.get(&key) {
            return Ok(*v);
        }
        if let Some(cap) = self.budget_cap {
            if ledger.len() >= cap {
                return Err(Error::BudgetCap { cap });
            }
        }
        let v = self.evaluate(x)?;
        ledger.insert(key, (x.to_vec(), v));
        Ok(v)
    }

    /// Metered evaluation of a batch, recorded in the given order.
    ///
    /// All-or-nothing: if the new distinct points would exceed the cap, nothing is recorded.
    pub fn sample_many(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut ledger = self.ledger.lock().expect("ledger poisoned");
        let mut fresh: IndexMap<Vec<u64>, usize> = IndexMap::new();
        for (i, p) in points.iter().enumerate() {
            let key = point_key(p);
            if !ledger.contains_key(&key) {
                fresh.entry(key).or_insert(i);
            }
        }
        if let Some(cap) = self.budget_cap {
            if ledger.len() + fresh.len() > cap {
                return Err(Error::BudgetCap { cap });
            }
        }
        let order: Vec<usize> = fresh.values().copied().collect();
        let values = par::try_map_slice(&order, |&i| self.evaluate(&points[i]))?;
        for ((key, i), v) in fresh.into_iter().zip(&values) {
            ledger.insert(key, (points[i].clone(), *v));
        }
        Ok(points
            .iter()
            .map(|p| ledger[&point_key(p)].1)
            .collect())
    }

    /// Number of distinct points sampled so far.
    pub fn samples_used(&self) -> usize {
        self.ledger.lock().expect("ledger poisoned").len()
    }

    /// Sampled points in first-query order.
    pub fn ledger_points(&self) -> Vec<Vec<f64>> {
        self.ledger
            .lock()
            .expect("ledger poisoned")
            .values()
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Whether `x` has been sampled.
    pub fn was_sampled(&self, x: &[f64]) -> bool {
        self.ledger
            .lock()
            .expect("ledger poisoned")
            .contains_key(&point_key(x))
    }
}

/// A corpus function by name (`"sin"`, `"cusp-0.6"`, ...), or else a parsed expression.
pub fn from_closed_form(name_or_expr: &str, d: usize) -> Result<FunctionOracle> {
    match crate::besov::corpus_entry(name_or_expr, d) {
        Ok(entry) => Ok(entry.oracle),
        Err(_) => FunctionOracle::from_expression(name_or_expr, d),
    }
}

/// Read a grid file and wrap it in an oracle.
pub fn from_grid_file(path: &Path) -> Result<FunctionOracle> {
    Ok(FunctionOracle::from_grid(GridData::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_forms_by_name_or_expression() {
        let o = from_closed_form("sin", 1).unwrap();
        assert_abs_diff_eq!(o.sample(&[0.25]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(o.samples_used(), 1);
        let o = from_closed_form("x^2 + y", 2).unwrap();
        assert_abs_diff_eq!(o.probe(&[0.5, 1.0]).unwrap(), 1.25);
        assert!(matches!(from_closed_form("cusp-9", 1), Err(Error::Config(_))));
    }

    #[test]
    fn expression_oracle() {
        let o = FunctionOracle::from_expression("sin(2*PI*x)", 1).unwrap();
        assert_abs_diff_eq!(o.sample(&[0.25]).unwrap(), 1.0, epsilon = 1e-15);
        let o = FunctionOracle::from_expression("x*y + x3", 2);
        assert!(o.is_err());
        let o = FunctionOracle::from_expression("x1*x2 + 1", 2).unwrap();
        assert_abs_diff_eq!(o.probe(&[0.5, 0.5]).unwrap(), 1.25, epsilon = 1e-15);
        assert!(FunctionOracle::from_expression("x + t", 1).is_err());
        assert!(FunctionOracle::from_expression("y", 1).is_err());
        assert!(FunctionOracle::from_expression("((x", 1).is_err());
    }

    #[test]
    fn budget_cap_enforced_on_the_sixth_point() {
        let o = FunctionOracle::from_fn("id", 1, |x| x[0]).with_budget_cap(5);
        for i in 0..5 {
            o.sample(&[i as f64 / 8.0]).unwrap();
        }
        o.sample(&[0.0]).unwrap();
        assert!(matches!(o.sample(&[0.75]), Err(Error::BudgetCap { cap: 5 })));
        assert_eq!(o.samples_used(), 5);
    }

    #[test]
    fn repeated_queries_count_once() {
        let o = FunctionOracle::from_fn("id", 2, |x| x[0] + x[1]);
        for _ in 0..10 {
            o.sample(&[0.5, 0.25]).unwrap();
        }
        o.sample(&[-0.0, 0.0]).unwrap();
        o.sample(&[0.0, 0.0]).unwrap();
        assert_eq!(o.samples_used(), 2);
        assert!(o.was_sampled(&[0.5, 0.25]));
        o.probe(&[0.1, 0.1]).unwrap();
        assert_eq!(o.samples_used(), 2);
    }

    #[test]
    fn batch_sampling_is_all_or_nothing() {
        let o = FunctionOracle::from_fn("id", 1, |x| x[0]).with_budget_cap(3);
        let pts: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 / 4.0]).collect();
        assert!(o.sample_many(&pts).is_err());
        assert_eq!(o.samples_used(), 0);
        let v = o.sample_many(&pts[..3]).unwrap();
        assert_eq!(v, vec![0.0, 0.25, 0.5]);
        assert_eq!(
            o.ledger_points(),
            vec![vec![0.0], vec![0.25], vec![0.5]]
        );
    }

    #[test]
    fn grid_lookup() {
        let g = GridData::from_fn(1, 3, |x| x[0] * x[0]);
        let o = FunctionOracle::from_grid(g);
        assert_eq!(o.sample(&[3.0 / 8.0]).unwrap(), 9.0 / 64.0);
        assert_eq!(o.sample(&[0.5]).unwrap(), 0.25);
        assert!(matches!(
            o.sample(&[1.0 / 3.0]),
            Err(Error::OffGrid { .. })
        ));
        assert!(o.sample(&[1.0 / 16.0]).is_err());
        assert_eq!(o.max_level(), Some(3));
    }

    #[test]
    fn grid_formats() {
        let g = GridData::from_fn(2, 2, |x| x[0] + 10.0 * x[1]);
        let parsed = GridData::parse(&g.to_plain_string()).unwrap();
        assert_eq!(parsed, g);

        let mut csv = String::from("x,y,value\n");
        for i in (0..=4).rev() {
            for j in 0..=4 {
                let (x, y) = (i as f64 / 4.0, j as f64 / 4.0);
                csv.push_str(&format!("{x},{y},{}\n", x + 10.0 * y));
            }
        }
        assert_eq!(GridData::parse(&csv).unwrap(), g);

        assert!(GridData::parse("1 2\n0 1 2").is_err());
        assert!(GridData::parse("0.1,1\n0.3,2\n0.7,3\n").is_err());
    }
}
