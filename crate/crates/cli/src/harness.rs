use std::path::PathBuf;
use std::time::Instant;

use clap::ValueEnum;
use rayon::prelude::*;

use ppstat::data::{self, decode_column, encode_column, load_csv};
use ppstat::primitives;
use ppstat::stats::{self, StatConfig};
use ppstat::{
    Ciphertext, CkksParams, CostMeter, DatasetSpec, Error, EvalContext, InvRootConfig, Result, SignConfig, SignMode,
};

use crate::report::{params_of, StatReport};

/// Settings shared by every command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: CkksParams,
    pub threads: usize,
    pub cheb_degree: usize,
    pub newton_iters: Option<usize>,
    pub sign: SignConfig,
    pub sqrt_degree: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: CkksParams::default(),
            threads: 1,
            cheb_degree: 511,
            newton_iters: None,
            sign: SignConfig::default(),
            sqrt_degree: None,
        }
    }
}

impl RunConfig {
    fn context(&self) -> Result<EvalContext> {
        Ok(EvalContext::new(self.params.clone())?.with_threads(self.threads))
    }

    fn inv_root(&self, n: u32, baseline: bool) -> InvRootConfig {
        let mut cfg = if n == 1 {
            InvRootConfig::inverse()
        } else {
            InvRootConfig::default()
        };
        cfg.cheb_degree = self.cheb_degree;
        cfg.baseline_mode = baseline;
        if let Some(k) = self.newton_iters {
            if baseline {
                cfg.baseline_iters = k;
            } else {
                cfg.newton_iters = k;
            }
        }
        cfg
    }

    fn stat_config(&self) -> StatConfig {
        StatConfig {
            inv_root: self.inv_root(2, false),
            sign: self.sign.clone(),
            sqrt_degree: self.sqrt_degree,
        }
    }

    fn sign_mode(&self) -> String {
        match self.sign.mode {
            SignMode::G3Composition => format!("g3x{}", self.sign.folds),
            SignMode::CustomComposite => format!("custom({})", self.sign.custom_polys.len()),
        }
    }

    fn common_assumptions(&self) -> Vec<String> {
        vec![
            "bootstraps are inserted when an operand lacks the levels for the next step".into(),
            "wall_seconds is emulation time and is not comparable to HE runtimes".into(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApproxFn {
    Invsqrt,
    Inv,
    Sqrt,
    Sign,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Evenly spaced; split at 1 into two equal halves when the domain
    /// straddles 1.
    Grid,
    Uniform {
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxArgs {
    pub function: ApproxFn,
    pub domain: (f64, f64),
    pub scale: f64,
    pub baseline: bool,
    pub sampling: Sampling,
    pub points: usize,
}

/// Inputs with `|x|` below this are excluded from sign error metrics.
pub const SIGN_MARGIN: f64 = 0.05;

fn check_domain(args: &ApproxArgs) -> Result<()> {
    let (lo, hi) = args.domain;
    let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return bad("domain must satisfy lo < hi");
    }
    if !(args.scale > 0.0) {
        return bad("scale must be positive");
    }
    if args.points == 0 {
        return bad("at least one point is required");
    }
    match args.function {
        ApproxFn::Invsqrt | ApproxFn::Inv if lo <= 0.0 => bad("domain must be positive"),
        ApproxFn::Sqrt if lo < 0.0 => bad("domain must be non-negative"),
        ApproxFn::Sign if lo < -1.0 || hi > 1.0 => bad("sign domain must lie in [-1, 1]"),
        _ => Ok(()),
    }
}

/// Sample points of an approximation run.
pub fn approx_points(args: &ApproxArgs) -> Vec<f64> {
    let (lo, hi) = args.domain;
    match args.sampling {
        Sampling::Grid if lo < 1.0 && 1.0 < hi && args.points >= 4 => {
            data::two_range_grid(lo, 1.0, hi, args.points / 2)
        }
        Sampling::Grid => data::linspace(lo, hi, args.points),
        Sampling::Uniform { seed } => data::synthetic_uniform(seed, args.points, lo, hi),
    }
}

/// Applies `f` to every chunk of `col`, on forked contexts when more than
/// one thread is configured.
fn per_chunk<F>(ctx: &mut EvalContext, chunks: &[Ciphertext], f: F) -> Result<Vec<Ciphertext>>
where
    F: Fn(&mut EvalContext, &Ciphertext) -> Result<Ciphertext> + Sync,
{
    if ctx.threads() <= 1 {
        return chunks.iter().map(|c| f(ctx, c)).collect();
    }
    let base = ctx.fork();
    let outcomes: Vec<(Result<Ciphertext>, CostMeter)> = chunks
        .par_iter()
        .map(|c| {
            let mut local = base.fork();
            let out = f(&mut local, c);
            (out, *local.meter())
        })
        .collect();
    outcomes
        .into_iter()
        .map(|(out, meter)| {
            ctx.absorb(&meter);
            out
        })
        .collect()
}

pub fn run_approx(args: &ApproxArgs, cfg: &RunConfig) -> Result<StatReport> {
    check_domain(args)?;
    let start = Instant::now();
    let xs = approx_points(args);
    let mut ctx = cfg.context()?;
    let s = args.scale;
    let inputs: Vec<f64> = match args.function {
        ApproxFn::Sign => xs.clone(),
        _ => xs.iter().map(|x| x / s).collect(),
    };
    let col = encode_column(&ctx, &inputs)?;
    let n_root = if args.function == ApproxFn::Inv { 1 } else { 2 };
    let inv_cfg = cfg.inv_root(n_root, args.baseline);
    let degree = cfg.cheb_degree;
    let out = per_chunk(&mut ctx, col.chunks(), |c, ct| match args.function {
        ApproxFn::Invsqrt => primitives::crypto_invsqrt(c, ct, s, &inv_cfg),
        ApproxFn::Inv => primitives::crypto_inv(c, ct, s, &inv_cfg),
        ApproxFn::Sqrt => primitives::crypto_sqrt(c, ct, s, degree),
        ApproxFn::Sign => primitives::crypto_sign(c, ct, &cfg.sign),
    })?;
    let approx = decode_column(&ppstat::EncryptedColumn::new(out, xs.len(), "", ctx.slot_count())?);
    let wall_seconds = start.elapsed().as_secs_f64();

    let exact: Vec<f64> = xs
        .iter()
        .map(|&x| match args.function {
            ApproxFn::Invsqrt => 1.0 / x.sqrt(),
            ApproxFn::Inv => 1.0 / x,
            ApproxFn::Sqrt => x.sqrt(),
            ApproxFn::Sign => x.signum(),
        })
        .collect();
    // Sign is scored away from its transition, sqrt away from its zero.
    let keep: Vec<bool> = xs
        .iter()
        .map(|&x| match args.function {
            ApproxFn::Sign => x.abs() >= SIGN_MARGIN,
            ApproxFn::Sqrt => x > 0.0,
            _ => true,
        })
        .collect();
    let pick = |v: &[f64]| -> Vec<f64> { v.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect() };
    let (a, e) = (pick(&approx), pick(&exact));
    let mre = data::mre(&a, &e)?;
    let max_error = data::max_abs_error(&a, &e);

    let iterations = match (args.function, args.baseline) {
        (ApproxFn::Invsqrt | ApproxFn::Inv, true) => inv_cfg.baseline_iters,
        (ApproxFn::Invsqrt | ApproxFn::Inv, false) => inv_cfg.newton_iters,
        _ => 0,
    };
    let measure = match (args.function, args.baseline) {
        (ApproxFn::Invsqrt, false) => "invsqrt",
        (ApproxFn::Invsqrt, true) => "invsqrt-baseline",
        (ApproxFn::Inv, false) => "inv",
        (ApproxFn::Inv, true) => "inv-baseline",
        (ApproxFn::Sqrt, _) => "sqrt",
        (ApproxFn::Sign, _) => "sign",
    };
    let mut assumptions = cfg.common_assumptions();
    match args.function {
        ApproxFn::Invsqrt | ApproxFn::Inv if args.baseline => assumptions.push(format!(
            "baseline: Newton from y0 = 1 on x/{s}, {iterations} iterations, rescaled in plaintext"
        )),
        ApproxFn::Invsqrt | ApproxFn::Inv => assumptions.push(format!(
            "Chebyshev seed of degree {degree} on x/{s} - 1, one bootstrap, {iterations} Newton iterations"
        )),
        ApproxFn::Sqrt => assumptions.push(format!("Chebyshev degree {degree}; mre excludes x = 0")),
        ApproxFn::Sign => assumptions.push(format!("errors scored against sign(x) for |x| >= {SIGN_MARGIN}")),
    }
    if matches!(args.sampling, Sampling::Grid)
        && xs.len() == 2 * (args.points / 2)
        && args.domain.0 < 1.0
        && 1.0 < args.domain.1
    {
        assumptions.push("grid split at 1 with both endpoints per subrange; 1.0 appears twice".into());
    }
    Ok(StatReport {
        measure: measure.into(),
        params: params_of(&cfg.params, s, degree, iterations, &cfg.sign_mode()),
        value: None,
        mre,
        max_error: Some(max_error),
        cost: *ctx.meter(),
        wall_seconds,
        assumptions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Measure {
    Znorm,
    Skew,
    Kurt,
    Cv,
    Pcc,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Znorm => "znorm",
            Measure::Skew => "skew",
            Measure::Kurt => "kurt",
            Measure::Cv => "cv",
            Measure::Pcc => "pcc",
        }
    }
}

/// Outcome of one measure against its plaintext oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: Option<f64>,
    pub reference: Option<f64>,
    pub mre: f64,
    pub max_error: Option<f64>,
}

fn relative(v: f64, r: f64) -> Result<f64> {
    data::mre(&[v], &[r])
}

/// Encrypts the columns, runs `measure` and scores it against the plaintext
/// formula. Kurtosis is returned as excess kurtosis; its error is measured
/// on the raw ratio.
pub fn evaluate(
    ctx: &mut EvalContext,
    measure: Measure,
    x: &[f64],
    y: Option<&[f64]>,
    b: f64,
    cfg: &StatConfig,
) -> Result<Evaluation> {
    use ppstat::reference as plain;
    let cx = encode_column(ctx, x)?;
    let scalar = |ct: Ciphertext| ct.slots()[0];
    Ok(match measure {
        Measure::Znorm => {
            let z = decode_column(&stats::znorm_with(ctx, &cx, b, cfg)?);
            let want = plain::zscores(x);
            Evaluation {
                value: None,
                reference: None,
                mre: data::mre(&z, &want)?,
                max_error: Some(data::max_abs_error(&z, &want)),
            }
        }
        Measure::Skew => {
            let v = scalar(stats::skewness_with(ctx, &cx, b, cfg)?);
            let r = plain::skewness(x);
            Evaluation {
                value: Some(v),
                reference: Some(r),
                mre: relative(v, r)?,
                max_error: None,
            }
        }
        Measure::Kurt => {
            let v = scalar(stats::kurtosis_with(ctx, &cx, b, cfg)?);
            let r = plain::kurtosis(x);
            Evaluation {
                value: Some(v - 3.0),
                reference: Some(r - 3.0),
                mre: relative(v, r)?,
                max_error: None,
            }
        }
        Measure::Cv => {
            let v = scalar(stats::coeff_variation_with(ctx, &cx, b, cfg)?);
            let r = plain::coeff_variation(x);
            Evaluation {
                value: Some(v),
                reference: Some(r),
                mre: relative(v, r)?,
                max_error: None,
            }
        }
        Measure::Pcc => {
            let y = y.ok_or_else(|| Error::InvalidParams("pcc needs a second column".into()))?;
            let cy = encode_column(ctx, y)?;
            let v = scalar(stats::pearson_with(ctx, &cx, &cy, b, cfg)?);
            let r = plain::pearson(x, y);
            Evaluation {
                value: Some(v),
                reference: Some(r),
                mre: relative(v, r)?,
                max_error: None,
            }
        }
    })
}

fn measure_assumptions(cfg: &RunConfig, measure: Measure) -> Vec<String> {
    let stat = cfg.stat_config();
    let mut out = cfg.common_assumptions();
    out.push("population moments (normalized by N)".into());
    out.push(format!(
        "inverse square root: Chebyshev degree {}, {} Newton iterations",
        stat.inv_root.cheb_degree, stat.inv_root.newton_iters
    ));
    match measure {
        Measure::Kurt => out.push("value is excess kurtosis; mre is computed on the raw ratio".into()),
        Measure::Cv => {
            out.push(format!("square root Chebyshev degree {}", stat.sqrt_degree()));
            out.push(format!(
                "sign of the mean from {} applied to mean/(2B)",
                cfg.sign_mode()
            ));
        }
        _ => {}
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchArgs {
    pub measure: Measure,
    pub n: usize,
    pub domain: (f64, f64),
    pub scale: f64,
    pub seed: u64,
    /// Correlate against X itself instead of the default mixed column.
    pub y_equals_x: bool,
}

/// Second benchmark column: `0.6·X + 0.4·U` with an independent uniform `U`.
pub fn bench_columns(args: &BenchArgs) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = args.domain;
    let x = data::synthetic_uniform(args.seed, args.n, lo, hi);
    let y = if args.y_equals_x {
        x.clone()
    } else {
        let u = data::synthetic_uniform(args.seed.wrapping_add(1), args.n, lo, hi);
        x.iter().zip(&u).map(|(a, b)| 0.6 * a + 0.4 * b).collect()
    };
    (x, y)
}

pub fn run_bench(args: &BenchArgs, cfg: &RunConfig) -> Result<StatReport> {
    let (lo, hi) = args.domain;
    if !(lo < hi) || args.n == 0 || !(args.scale > 0.0) {
        return Err(Error::InvalidParams("need lo < hi, n >= 1 and a positive scale".into()));
    }
    let start = Instant::now();
    let (x, y) = bench_columns(args);
    let mut ctx = cfg.context()?;
    let eval = evaluate(&mut ctx, args.measure, &x, Some(&y), args.scale, &cfg.stat_config())?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let mut assumptions = measure_assumptions(cfg, args.measure);
    assumptions.push(format!("{} uniforms on [{lo}, {hi}) from seed {}", args.n, args.seed));
    if args.measure == Measure::Pcc && !args.y_equals_x {
        assumptions.push("Y = 0.6 X + 0.4 U with an independent uniform U".into());
    }
    Ok(report(
        cfg,
        args.measure,
        args.scale,
        eval,
        *ctx.meter(),
        wall_seconds,
        assumptions,
    ))
}

fn report(
    cfg: &RunConfig,
    measure: Measure,
    b: f64,
    eval: Evaluation,
    cost: CostMeter,
    wall_seconds: f64,
    assumptions: Vec<String>,
) -> StatReport {
    let stat = cfg.stat_config();
    StatReport {
        measure: measure.name().into(),
        params: params_of(
            &cfg.params,
            b,
            stat.inv_root.cheb_degree,
            stat.inv_root.newton_iters,
            &cfg.sign_mode(),
        ),
        value: eval.value,
        mre: eval.mre,
        max_error: eval.max_error,
        cost,
        wall_seconds,
        assumptions,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetArgs {
    pub file: PathBuf,
    pub measure: Measure,
    pub x: String,
    pub y: Option<String>,
    pub scale: f64,
    /// Skip the `smoker` yes/no and `charges`/1000 transforms.
    pub raw: bool,
}

pub fn run_dataset(args: &DatasetArgs, cfg: &RunConfig) -> Result<StatReport> {
    if !(args.scale > 0.0) {
        return Err(Error::InvalidParams("scale must be positive".into()));
    }
    if args.measure == Measure::Pcc && args.y.is_none() {
        return Err(Error::InvalidParams("pcc needs --y".into()));
    }
    let start = Instant::now();
    let spec = if args.raw {
        DatasetSpec::new(&args.file)
    } else {
        DatasetSpec::insurance(&args.file)
    };
    let mut features = vec![args.x.as_str()];
    if let Some(y) = &args.y {
        features.push(y);
    }
    let table = load_csv(&spec, &features)?;
    let x = table.column(&args.x).expect("selected column");
    let y = args.y.as_deref().and_then(|name| table.column(name));
    let mut ctx = cfg.context()?;
    let eval = evaluate(&mut ctx, args.measure, x, y, args.scale, &cfg.stat_config())?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let mut assumptions = measure_assumptions(cfg, args.measure);
    assumptions.push(format!(
        "{} rows used, {} dropped for missing values",
        table.rows(),
        table.dropped_rows
    ));
    if !args.raw {
        assumptions.push("smoker mapped yes -> 1, no -> 0; charges divided by 1000".into());
    }
    if let Some(r) = eval.reference {
        assumptions.push(format!("plaintext reference value {r:.6}"));
    }
    Ok(report(
        cfg,
        args.measure,
        args.scale,
        eval,
        *ctx.meter(),
        wall_seconds,
        assumptions,
    ))
}
