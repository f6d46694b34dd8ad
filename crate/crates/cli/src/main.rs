use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use spline_recovery::adaptive::{
    make_schedule_with, recover_linear, recover_with_plan, AdaptiveOptions, BesovParams,
    RecoverySidecar, ScheduleOptions,
};
use spline_recovery::besov::{
    besov_b2, besov_b2_proxy, besov_discrete_b3, besov_seminorm_b1_with, corpus_entry,
    default_resolution, SmoothnessProbe,
};
use spline_recovery::exponent::Exponent;
use spline_recovery::harness::{lq_error, run_ladder, ExperimentConfig, Quadrature, ResolvedTarget, Target};
use spline_recovery::multilevel::decompose;
use spline_recovery::quasi_interpolant::{LevelCoefficients, QuasiInterpolantSpec};
use spline_recovery::error::Error;

/// Linear and adaptive B-spline sampling recovery on the unit cube.
#[derive(Parser)]
#[command(name = "splrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover one function from n samples; writes the expansion CSV and a JSON sidecar.
    Recover(RecoverArgs),
    /// Run both algorithms over a budget ladder from a JSON or TOML config.
    Bench(BenchArgs),
    /// Write the multilevel coefficients, one CSV per level.
    Decompose(DecomposeArgs),
    /// Estimate the Besov quasi-norms B1, B2 and B3 of a function.
    Besov(BesovArgs),
}

#[derive(Args)]
struct TargetArgs {
    /// Corpus name (e.g. cusp-0.6) or an expression in x, y (or x1, x2, ...).
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    target: Option<String>,
    /// Gridded samples: a `d m` header plus values, or CSV with coordinates.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Dimension of a corpus or expression target.
    #[arg(long, default_value_t = 1)]
    d: usize,
}

impl TargetArgs {
    fn to_target(&self) -> Target {
        if let Some(path) = &self.grid {
            return Target::Grid {
                grid_file: path.clone(),
            };
        }
        let name = self.target.clone().unwrap_or_default();
        if corpus_entry(&name, self.d).is_ok() {
            Target::Corpus {
                corpus: name,
                d: self.d,
            }
        } else {
            Target::Expression {
                expression: name,
                d: self.d,
            }
        }
    }

    fn resolve(&self) -> Result<ResolvedTarget> {
        Ok(self.to_target().resolve()?)
    }
}

#[derive(Args)]
struct ClassArgs {
    /// Smoothness alpha; defaults to the corpus entry's nominal value.
    #[arg(long)]
    alpha: Option<f64>,
    /// Integrability p of the smoothness class (a number or `inf`).
    #[arg(long)]
    p: Option<Exponent>,
    /// Error norm q.
    #[arg(long)]
    q: Option<Exponent>,
    /// Fine index theta.
    #[arg(long)]
    theta: Option<Exponent>,
}

impl ClassArgs {
    fn resolve(&self, nominal: Option<BesovParams>, d: usize) -> Result<BesovParams> {
        let base = match nominal {
            Some(b) => b,
            None => BesovParams {
                alpha: self
                    .alpha
                    .ok_or_else(|| anyhow!(Error::Config("--alpha is required for this target".into())))?,
                p: self
                    .p
                    .ok_or_else(|| anyhow!(Error::Config("--p is required for this target".into())))?,
                q: Exponent::INFINITY,
                theta: Exponent::INFINITY,
                d,
            },
        };
        let bp = BesovParams {
            alpha: self.alpha.unwrap_or(base.alpha),
            p: self.p.unwrap_or(base.p),
            q: self.q.unwrap_or(base.q),
            theta: self.theta.unwrap_or(base.theta),
            d,
        };
        bp.validate()?;
        Ok(bp)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    /// Adaptive when p < q, linear otherwise.
    Auto,
    Linear,
    Adaptive,
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    class: ClassArgs,
    /// Sample budget.
    #[arg(long)]
    n: usize,
    /// Quasi-interpolant: piecewise_linear or cubic.
    #[arg(long, default_value = "cubic")]
    spec: String,
    #[arg(long, value_enum, default_value_t = Algorithm::Auto)]
    algorithm: Algorithm,
    /// Budget decay rate of the adaptive schedule.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Midpoints per axis for the reported L_q error (closed-form targets only).
    #[arg(long)]
    resolution: Option<usize>,
    /// Recorded in the sidecar; recovery itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for expansion.csv and recovery.json; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config (.json or .toml).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Output directory for report.json and rates_q*.csv; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long, default_value = "cubic")]
    spec: String,
    /// Base level; defaults to the coarsest level the spec supports.
    #[arg(long)]
    base: Option<u32>,
    /// Finest level.
    #[arg(long)]
    top: u32,
    /// Accepted for uniformity; the decomposition is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for level_<k>.csv; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BesovArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, default_value = "cubic")]
    spec: String,
    /// Difference order of the modulus; defaults to the spline order 2r.
    #[arg(long)]
    l: Option<usize>,
    /// Largest k in the modulus series.
    #[arg(long, default_value_t = 10)]
    k_max: u32,
    /// Random directions per step size.
    #[arg(long, default_value_t = 4)]
    h_samples: usize,
    /// Midpoints per axis.
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for besov.json; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_or_print(out: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(name);
            std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct Sidecar {
    #[serde(flatten)]
    recovery: RecoverySidecar,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<Value>,
}

fn recover(args: &RecoverArgs) -> Result<()> {
    let target = args.target.resolve()?;
    let spec = QuasiInterpolantSpec::by_name(&args.spec)?;
    let d = target.oracle.dim();
    let bp = args.class.resolve(target.nominal, d)?;
    let oracle = target.oracle.fresh();
    let adaptive = match args.algorithm {
        Algorithm::Auto => bp.is_adaptive_regime(),
        Algorithm::Linear => false,
        Algorithm::Adaptive => {
            if !bp.is_adaptive_regime() {
                bail!(Error::Config("the adaptive algorithm needs p < q".into()));
            }
            true
        }
    };
    let result = if adaptive {
        let opts = ScheduleOptions {
            epsilon: args.epsilon,
            ..ScheduleOptions::default()
        };
        let plan = make_schedule_with(args.n, &bp, &spec, &opts)?;
        recover_with_plan(&oracle, &spec, &bp, &plan, &AdaptiveOptions::default())?
    } else {
        recover_linear(&oracle, &spec, args.n)?
    };
    let error = if oracle.max_level().is_none() {
        let resolution = args.resolution.unwrap_or_else(|| default_resolution(d));
        let quad = Quadrature::new(resolution).with_singularities(target.singularities.clone());
        let value = lq_error(&target.oracle, &result.expansion, bp.q, &quad)?;
        Some(json!({ "q": bp.q, "value": value, "resolution": resolution }))
    } else {
        None
    };
    let sidecar = Sidecar {
        recovery: result.sidecar(),
        seed: args.seed,
        error,
    };
    let side = serde_json::to_string_pretty(&sidecar)? + "\n";
    match &args.out {
        Some(dir) => {
            write_or_print(Some(dir), "expansion.csv", &result.expansion.to_csv())?;
            write_or_print(Some(dir), "recovery.json", &side)?;
        }
        None => {
            print!("{}", result.expansion.to_csv());
            eprint!("{side}");
        }
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_path(&args.config)
        .map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", args.config.display())),
            other => other,
        })?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.resolution.is_some() {
        cfg.resolution = args.resolution;
    }
    if args.out.is_some() {
        cfg.output = args.out.clone();
    }
    let report = run_ladder(&cfg)?;
    for s in &report.slopes {
        let fit = s
            .fit
            .as_ref()
            .map_or("n/a".to_string(), |f| format!("{:.3} (residual {:.3})", f.slope, f.residual));
        eprintln!("{} q={}: slope {fit}, theory {:.3}", s.algorithm, s.q, s.theoretical);
    }
    match &cfg.output {
        Some(dir) => {
            for path in report.write(dir)? {
                log::info!("wrote {}", path.display());
            }
        }
        None => println!("{}", report.to_json()),
    }
    Ok(())
}

fn level_csv(c: &LevelCoefficients, kind: &str) -> String {
    let mut out = format!("# d={} r={} k={} kind={kind}\n", c.dim(), c.order().r(), c.k);
    for i in 1..=c.dim() {
        let _ = write!(out, "s_{i},");
    }
    out.push_str("coefficient\n");
    for (s, v) in c.iter() {
        for si in s {
            let _ = write!(out, "{si},");
        }
        let _ = writeln!(out, "{v:?}");
    }
    out
}

fn decompose_cmd(args: &DecomposeArgs) -> Result<()> {
    let target = args.target.resolve()?;
    let spec = QuasiInterpolantSpec::by_name(&args.spec)?;
    let base = args.base.unwrap_or(spec.min_level());
    let dec = decompose(&target.oracle, &spec, base, args.top)?;
    write_or_print(args.out.as_deref(), &format!("level_{base}.csv"), &level_csv(&dec.base, "base"))?;
    for c in &dec.details {
        write_or_print(args.out.as_deref(), &format!("level_{}.csv", c.k), &level_csv(c, "detail"))?;
    }
    eprintln!("sampled {} points", target.oracle.samples_used());
    Ok(())
}

fn besov_cmd(args: &BesovArgs) -> Result<()> {
    let target = args.target.resolve()?;
    let spec = QuasiInterpolantSpec::by_name(&args.spec)?;
    let d = target.oracle.dim();
    let bp = args.class.resolve(target.nominal, d)?;
    let resolution = args.resolution.unwrap_or_else(|| default_resolution(d));
    let probe = SmoothnessProbe {
        h_samples: args.h_samples,
        resolution,
        seed: args.seed,
        ..SmoothnessProbe::new(args.l.unwrap_or(2 * spec.r() as usize), args.k_max, bp.p, d)
    };
    let b1 = besov_seminorm_b1_with(&target.oracle, &bp, &probe)?;
    let top = resolution.max(2).ilog2().max(spec.min_level());
    let dec = decompose(&target.oracle.fresh(), &spec, spec.min_level(), top)?;
    let report: Value = json!({
        "target": target.name,
        "besov": bp,
        "l": probe.l,
        "resolution": resolution,
        "seed": args.seed,
        "b1": b1,
        "b2": besov_b2(&dec, &bp, resolution)?,
        "b2_proxy": besov_b2_proxy(&dec, &bp),
        "b3": besov_discrete_b3(&dec, &bp),
    });
    write_or_print(args.out.as_deref(), "besov.json", &(serde_json::to_string_pretty(&report)? + "\n"))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::InfeasibleBudget(_)) | Some(Error::BudgetCap { .. }) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::Recover(a) => recover(a),
        Command::Bench(a) => bench(a),
        Command::Decompose(a) => decompose_cmd(a),
        Command::Besov(a) => besov_cmd(a),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
