//! Inverse roots, square root and sign over ciphertexts.
//!
//! The inverse square root is seeded by a Chebyshev interpolant of the
//! scaled target `1/(√S·√(t+1))`, evaluated on `t − 1` where the ciphertext
//! holds `t = x/S`. The seed is bootstrapped once and refined by Newton's
//! iteration for `y^-n = x`:
//!
//! ```text
//! y ← ((n+1)/n)·y − (x/n)·y^(n+1)
//! ```
//!
//! The Newton operand `x = S·t` is never formed explicitly: the plaintext
//! constant of the pre-step is `S/n` instead of `1/n`, so undoing the input
//! scaling costs no additional level.

use serde::{Deserialize, Serialize};

use crate::chebyshev::{ChebyshevSeries, ScaledTarget, DOMAIN_TOLERANCE};
use crate::emulator::{Ciphertext, EvalContext};
use crate::error::{Error, Result};

/// Slots whose Newton iterate exceeds this magnitude are treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Odd-power coefficients of `g₃(x) = (35x − 35x³ + 21x⁵ − 5x⁷)/16`.
pub const G3_ODD_COEFFS: [f64; 4] = [35.0 / 16.0, -35.0 / 16.0, 21.0 / 16.0, -5.0 / 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InvRootConfig {
    /// Root order: 1 for the inverse, 2 for the inverse square root.
    pub n: u32,
    pub cheb_degree: usize,
    pub newton_iters: usize,
    /// Start Newton from the constant 1 instead of a Chebyshev seed.
    pub baseline_mode: bool,
    pub baseline_iters: usize,
}

impl Default for InvRootConfig {
    fn default() -> Self {
        Self {
            n: 2,
            cheb_degree: 511,
            newton_iters: 6,
            baseline_mode: false,
            baseline_iters: 21,
        }
    }
}

impl InvRootConfig {
    /// Defaults for the plain inverse (`n = 1`).
    pub fn inverse() -> Self {
        Self {
            n: 1,
            baseline_iters: 25,
            ..Self::default()
        }
    }

    pub fn baseline(mut self) -> Self {
        self.baseline_mode = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignMode {
    /// `folds`-fold composition of `g₃`.
    G3Composition,
    /// Composition of the user-supplied odd polynomials, applied in order.
    CustomComposite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignConfig {
    pub mode: SignMode,
    pub folds: usize,
    /// Each entry lists the coefficients of `x, x³, x⁵, …`.
    pub custom_polys: Vec<Vec<f64>>,
}

impl Default for SignConfig {
    fn default() -> Self {
        Self {
            mode: SignMode::G3Composition,
            folds: 7,
            custom_polys: Vec::new(),
        }
    }
}

impl SignConfig {
    pub fn custom(polys: Vec<Vec<f64>>) -> Self {
        Self {
            mode: SignMode::CustomComposite,
            folds: polys.len(),
            custom_polys: polys,
        }
    }

    /// The component polynomials as Chebyshev series, in application order.
    pub fn components(&self) -> Result<Vec<ChebyshevSeries>> {
        let odd: Vec<&[f64]> = match self.mode {
            SignMode::G3Composition => vec![&G3_ODD_COEFFS[..]; self.folds],
            SignMode::CustomComposite => self.custom_polys.iter().map(Vec::as_slice).collect(),
        };
        odd.into_iter()
            .map(|coeffs| {
                if coeffs.is_empty() {
                    return Err(Error::InvalidParams("empty sign component".into()));
                }
                let mut power = vec![0.0; 2 * coeffs.len()];
                for (i, &c) in coeffs.iter().enumerate() {
                    power[2 * i + 1] = c;
                }
                ChebyshevSeries::from_power_basis(&power)
            })
            .collect()
    }
}

/// Plaintext reference for one composite sign evaluation.
pub fn sign_plain(cfg: &SignConfig, x: f64) -> Result<f64> {
    Ok(cfg.components()?.iter().fold(x, |acc, poly| poly.eval_plain(acc)))
}

fn check_domain(ctx: &EvalContext, ct: &Ciphertext, lo: f64, hi: f64, open_lo: bool) -> Result<()> {
    if !ctx.params().checks {
        return Ok(());
    }
    // Exact zeros are padding. A closed lower end gets the rounding slack of
    // the series check.
    let tol = DOMAIN_TOLERANCE * (hi - lo);
    let bad = ct
        .slots()
        .iter()
        .enumerate()
        .find(|(_, &v)| v != 0.0 && ((open_lo && v <= lo) || (!open_lo && v < lo - tol) || v > hi));
    match bad {
        Some((slot, &value)) => Err(Error::DomainViolation { slot, value, lo, hi }),
        None => Ok(()),
    }
}

/// Depth of the balanced product `x·y^(n+1)`.
fn product_depth(n: u32) -> u32 {
    let leaves = n + 2;
    u32::BITS - (leaves - 1).leading_zeros()
}

fn balanced_product(ctx: &mut EvalContext, x: &Ciphertext, y: &Ciphertext, n: u32) -> Result<Ciphertext> {
    let mut layer: Vec<Ciphertext> = Vec::with_capacity(n as usize + 2);
    layer.push(x.clone());
    layer.extend(std::iter::repeat_n(y.clone(), n as usize + 1));
    while layer.len() > 1 {
        let mut next = Vec::with_capacity(layer.len().div_ceil(2));
        let mut it = layer.chunks(2);
        for pair in &mut it {
            next.push(match pair {
                [a, b] if a == b => ctx.square(a)?,
                [a, b] => ctx.mul(a, b)?,
                [a] => a.clone(),
                _ => unreachable!(),
            });
        }
        layer = next;
    }
    Ok(layer.pop().unwrap())
}

/// Newton refinement where the ciphertext holds `t` and the iteration runs
/// on `x = scale·t`.
fn newton_scaled(
    ctx: &mut EvalContext,
    ct_t: &Ciphertext,
    seed: Ciphertext,
    n: u32,
    iters: usize,
    scale: f64,
) -> Result<Ciphertext> {
    if n == 0 {
        return Err(Error::InvalidParams("root order must be positive".into()));
    }
    let pre = scale / n as f64;
    let mut operand = if n >= 2 || scale != 1.0 {
        ctx.mul_scalar(ct_t, pre)?
    } else {
        ct_t.clone()
    };
    let depth = product_depth(n);
    let gain = (n + 1) as f64 / n as f64;
    let mut y = seed;
    for _ in 0..iters {
        operand = ctx.ensure_level(&operand, depth)?;
        y = ctx.ensure_level(&y, depth)?;
        let tmp_a = ctx.mul_scalar(&y, gain)?;
        let tmp_b = balanced_product(ctx, &operand, &y, n)?;
        y = ctx.sub(&tmp_a, &tmp_b);
        if ctx.params().checks {
            let magnitude = y
                .slots()
                .iter()
                .zip(operand.slots())
                .filter(|(_, &x)| x != 0.0)
                .map(|(v, _)| v.abs())
                .fold(0.0, f64::max);
            if !(magnitude <= DIVERGENCE_LIMIT) {
                return Err(Error::Divergence { magnitude });
            }
        }
    }
    Ok(y)
}

/// `d` Newton iterations for `x^(-1/n)` from the seed `ct_y0`.
///
/// Each iteration spends one plaintext product on `((n+1)/n)·y` and `n + 1`
/// ciphertext products on `(x/n)·y^(n+1)`, arranged as a balanced tree so an
/// iteration costs `ceil(log2(n + 2))` levels. The operand and the iterate
/// are bootstrapped at the start of an iteration when they lack the levels
/// for it.
pub fn newton_refine(
    ctx: &mut EvalContext,
    ct_x: &Ciphertext,
    ct_y0: &Ciphertext,
    n: u32,
    d: usize,
) -> Result<Ciphertext> {
    newton_scaled(ctx, ct_x, ct_y0.clone(), n, d, 1.0)
}

/// Chebyshev-seeded inverse square root. `ct` holds `t = x/scale` with
/// `t ∈ (0, 2]`; the result approximates `1/√x`.
pub fn crypto_invsqrt(ctx: &mut EvalContext, ct: &Ciphertext, scale: f64, cfg: &InvRootConfig) -> Result<Ciphertext> {
    if cfg.baseline_mode {
        return baseline_invsqrt(ctx, ct, scale, cfg.baseline_iters);
    }
    check_domain(ctx, ct, 0.0, 2.0, true)?;
    let series = ScaledTarget::inv_sqrt(scale)?.fit(cfg.cheb_degree)?;
    let shifted = ctx.add_scalar(ct, -1.0);
    let seed = series.eval_encrypted(ctx, &shifted)?;
    let seed = ctx.bootstrap(&seed);
    newton_scaled(ctx, ct, seed, 2, cfg.newton_iters, scale)
}

/// `1/x` as the square of [`crypto_invsqrt`].
pub fn crypto_inv(ctx: &mut EvalContext, ct: &Ciphertext, scale: f64, cfg: &InvRootConfig) -> Result<Ciphertext> {
    if cfg.baseline_mode {
        return baseline_inv(ctx, ct, scale, cfg.baseline_iters);
    }
    let y = crypto_invsqrt(ctx, ct, scale, cfg)?;
    ctx.square(&y)
}

/// Dispatches on `cfg.n`.
pub fn crypto_inv_root(ctx: &mut EvalContext, ct: &Ciphertext, scale: f64, cfg: &InvRootConfig) -> Result<Ciphertext> {
    match cfg.n {
        1 => crypto_inv(ctx, ct, scale, cfg),
        2 => crypto_invsqrt(ctx, ct, scale, cfg),
        n => Err(Error::InvalidParams(format!("root order {n} is not supported"))),
    }
}

/// `√x` from one Chebyshev evaluation of `√S·√(t+1)` at `t − 1`, where `ct`
/// holds `t = x/scale ∈ [0, 2]`.
pub fn crypto_sqrt(ctx: &mut EvalContext, ct: &Ciphertext, scale: f64, degree: usize) -> Result<Ciphertext> {
    check_domain(ctx, ct, 0.0, 2.0, false)?;
    let series = ScaledTarget::sqrt(scale)?.fit(degree)?;
    let shifted = ctx.add_scalar(ct, -1.0);
    series.eval_encrypted(ctx, &shifted)
}

/// Composite odd-polynomial approximation of `sign(x)` for `x ∈ [-1, 1]`.
/// Each component is bootstrapped into when the remaining levels do not
/// cover its depth.
pub fn crypto_sign(ctx: &mut EvalContext, ct: &Ciphertext, cfg: &SignConfig) -> Result<Ciphertext> {
    let mut y = ct.clone();
    for poly in cfg.components()? {
        y = poly.eval_encrypted(ctx, &y)?;
    }
    Ok(y)
}

/// Fixed-seed Newton baseline: `y₀ = 1`, `iters` iterations on the scaled
/// input `t = x/scale ∈ (0, 1]`, then a plaintext rescale by `1/√scale`.
pub fn baseline_invsqrt(ctx: &mut EvalContext, ct: &Ciphertext, scale: f64, iters: usize) -> Result<Ciphertext> {
    check_domain(ctx, ct, 0.0, 1.0, true)?;
    let seed = ctx.encrypt_constant(1.0);
    let y = newton_scaled(ctx, ct, seed, 2, iters, 1.0)?;
    ctx.mul_scalar(&y, 1.0 / scale.sqrt())
}

/// Fixed-seed Newton baseline for `1/x`, rescaled by `1/scale`.
pub fn baseline_inv(ctx: &mut EvalContext, ct: &Ciphertext, scale: f64, iters: usize) -> Result<Ciphertext> {
    check_domain(ctx, ct, 0.0, 1.0, true)?;
    let seed = ctx.encrypt_constant(1.0);
    let y = newton_scaled(ctx, ct, seed, 1, iters, 1.0)?;
    ctx.mul_scalar(&y, 1.0 / scale)
}
