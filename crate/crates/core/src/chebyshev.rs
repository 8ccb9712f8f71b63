//! Chebyshev interpolation and its homomorphic evaluation.
//!
//! Series are stored as `p(x) = Σ cᵢ·Tᵢ(x)` with the leading `c₀` already
//! halved, so plaintext evaluation is a plain Clenshaw sum.
//!
//! Encrypted evaluation reaches the optimal depth `ceil(log2(d + 1))` even
//! though every plaintext product costs a level. Powers `Tᵢ` are built with
//! `T₂ₖ = 2Tₖ² − 1` and `Tₐ₊ᵦ = 2TₐTᵦ − Tₐ₋ᵦ` (the doubling is an addition),
//! so `Tᵢ` sits at depth `ceil(log2 i)`. A polynomial of degree below `2^k`
//! is split at `M = 2^(k-1)` as `p = A + T_M·B` with
//!
//! ```text
//! B = c_M + Σⱼ 2·c_{M+j}·Tⱼ,      A = Σ_{i<M} cᵢ·Tᵢ − Σⱼ c_{M+j}·T_{M−j}
//! ```
//!
//! `B` is evaluated recursively one level shallower and `A` either
//! recursively or, once the pieces are small, directly as a sum of scalar
//! multiples of precomputed baby-step powers.

use std::f64::consts::PI;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::emulator::{Ciphertext, EvalContext};
use crate::error::{Error, Result};

/// Relative slack of the encrypted-evaluation domain check.
pub const DOMAIN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevSeries {
    coeffs: Vec<f64>,
    domain: (f64, f64),
}

#[derive(Serialize, Deserialize)]
struct SeriesJson {
    degree: usize,
    coeffs: Vec<f64>,
    domain: [f64; 2],
}

/// A plaintext evaluation that also reports whether `x` was outside the
/// series domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlainValue {
    pub value: f64,
    pub extrapolated: bool,
}

impl ChebyshevSeries {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        Self::with_domain(coeffs, -1.0, 1.0)
    }

    pub fn with_domain(coeffs: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidParams("a series needs at least one coefficient".into()));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParams(format!("invalid domain [{lo}, {hi}]")));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidParams(format!("coefficient {i} is not finite")));
        }
        Ok(Self {
            coeffs,
            domain: (lo, hi),
        })
    }

    /// Interpolates `target` on `[-1, 1]` at the `degree + 1` Chebyshev
    /// nodes of the first kind.
    pub fn fit(target: impl Fn(f64) -> f64, degree: usize) -> Result<Self> {
        Self::fit_on(target, degree, -1.0, 1.0)
    }

    pub fn fit_on(target: impl Fn(f64) -> f64, degree: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidParams(format!("invalid domain [{lo}, {hi}]")));
        }
        let n = degree + 1;
        // cos(π·m / 2n) for m in 0..4n; node k and order j use m = j(2k+1) mod 4n.
        let table: Vec<f64> = (0..4 * n).map(|m| (PI * m as f64 / (2 * n) as f64).cos()).collect();
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut samples = Vec::with_capacity(n);
        for k in 0..n {
            let x = table[2 * k + 1];
            let fx = target(mid + half * x);
            if !fx.is_finite() {
                return Err(Error::NonFiniteTarget { node: k, x });
            }
            samples.push(fx);
        }
        let mut coeffs: Vec<f64> = (0..n)
            .map(|j| {
                let s: f64 = samples
                    .iter()
                    .enumerate()
                    .map(|(k, &fx)| fx * table[(j * (2 * k + 1)) % (4 * n)])
                    .sum();
                2.0 * s / n as f64
            })
            .collect();
        coeffs[0] *= 0.5;
        Self::with_domain(coeffs, lo, hi)
    }

    /// Interpolates `target` at the `degree + 1` Chebyshev extrema
    /// `cos(πk/degree)`, endpoints included. Reproduces the target exactly at
    /// both ends of the domain, which matters for roots with a branch point
    /// there.
    pub fn fit_extrema_on(target: impl Fn(f64) -> f64, degree: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidParams(format!("invalid domain [{lo}, {hi}]")));
        }
        if degree == 0 {
            return Self::fit_on(target, 0, lo, hi);
        }
        let n = degree;
        // cos(πm/n) for m in 0..2n; node k and order j use m = jk mod 2n.
        let table: Vec<f64> = (0..2 * n).map(|m| (PI * m as f64 / n as f64).cos()).collect();
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let mut samples = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let x = if k == n { -1.0 } else { table[k] };
            let fx = target(mid + half * x);
            if !fx.is_finite() {
                return Err(Error::NonFiniteTarget { node: k, x });
            }
            // Endpoint samples carry half weight in the trapezoid sum.
            samples.push(if k == 0 || k == n { 0.5 * fx } else { fx });
        }
        let mut coeffs: Vec<f64> = (0..=n)
            .map(|j| {
                let s: f64 = samples
                    .iter()
                    .enumerate()
                    .map(|(k, &fx)| fx * table[(j * k) % (2 * n)])
                    .sum();
                2.0 * s / n as f64
            })
            .collect();
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        Self::with_domain(coeffs, lo, hi)
    }

    /// Converts power-basis coefficients `a₀ + a₁x + …` on `[-1, 1]`.
    pub fn from_power_basis(power: &[f64]) -> Result<Self> {
        if power.is_empty() {
            return Err(Error::InvalidParams("empty polynomial".into()));
        }
        // Horner in the Chebyshev basis: p ← p·x + aₖ, with x·Tⱼ = (Tⱼ₊₁ + Tⱼ₋₁)/2.
        let mut acc = vec![*power.last().unwrap()];
        for &a in power.iter().rev().skip(1) {
            let mut next = vec![0.0; acc.len() + 1];
            for (j, &c) in acc.iter().enumerate() {
                if j == 0 {
                    next[1] += c;
                } else {
                    next[j + 1] += 0.5 * c;
                    next[j - 1] += 0.5 * c;
                }
            }
            next[0] += a;
            acc = next;
        }
        Self::new(acc)
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn is_standard_domain(&self) -> bool {
        self.domain == (-1.0, 1.0)
    }

    fn to_unit(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain;
        (2.0 * x - lo - hi) / (hi - lo)
    }

    /// Clenshaw evaluation.
    pub fn eval_plain(&self, x: f64) -> f64 {
        let s = self.to_unit(x);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs[1..].iter().rev() {
            let b = 2.0 * s * b1 - b2 + c;
            b2 = b1;
            b1 = b;
        }
        s * b1 - b2 + self.coeffs[0]
    }

    pub fn eval_checked(&self, x: f64) -> PlainValue {
        let (lo, hi) = self.domain;
        PlainValue {
            value: self.eval_plain(x),
            extrapolated: !(lo..=hi).contains(&x),
        }
    }

    /// Levels consumed by [`eval_encrypted`](Self::eval_encrypted):
    /// `ceil(log2(degree + 1))`, plus one when the domain needs a
    /// non-unit rescaling onto `[-1, 1]`.
    pub fn depth(&self) -> u32 {
        let d = self.degree();
        let core = if d == 0 { 0 } else { usize::BITS - d.leading_zeros() };
        let (lo, hi) = self.domain;
        core + u32::from(d > 0 && hi - lo != 2.0)
    }

    /// Evaluates the series slot-wise on `ct`.
    pub fn eval_encrypted(&self, ctx: &mut EvalContext, ct: &Ciphertext) -> Result<Ciphertext> {
        if ctx.params().checks {
            let (lo, hi) = self.domain;
            // Rounding overshoot, e.g. a previous odd polynomial landing on 1 + ulp.
            let tol = DOMAIN_TOLERANCE * (hi - lo);
            if let Some((slot, &value)) = ct
                .slots()
                .iter()
                .enumerate()
                .find(|(_, v)| !(lo - tol..=hi + tol).contains(*v))
            {
                return Err(Error::DomainViolation { slot, value, lo, hi });
            }
        }
        let ct = ctx.ensure_level(ct, self.depth())?;
        let (lo, hi) = self.domain;
        let unit = if self.is_standard_domain() {
            ct
        } else if hi - lo == 2.0 {
            ctx.add_scalar(&ct, -0.5 * (lo + hi))
        } else {
            let scaled = ctx.mul_scalar(&ct, 2.0 / (hi - lo))?;
            ctx.add_scalar(&scaled, -(lo + hi) / (hi - lo))
        };

        let d = self.degree();
        if d == 0 {
            let zero = ctx.sub(&unit, &unit);
            return Ok(ctx.add_scalar(&zero, self.coeffs[0]));
        }
        let k = usize::BITS - d.leading_zeros();
        let mut eval = PowerEvaluator::new(ctx, unit, k);
        match eval.eval(&self.coeffs, k)? {
            Term::Ct(ct) => Ok(ct),
            Term::Const(_) => unreachable!("degree >= 1 always yields a ciphertext"),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SeriesJson {
            degree: self.degree(),
            coeffs: self.coeffs.clone(),
            domain: [self.domain.0, self.domain.1],
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SeriesJson = serde_json::from_str(s)?;
        if raw.coeffs.len() != raw.degree + 1 {
            return Err(Error::InvalidParams(format!(
                "degree {} does not match {} coefficients",
                raw.degree,
                raw.coeffs.len()
            )));
        }
        Self::with_domain(raw.coeffs, raw.domain[0], raw.domain[1])
    }
}

enum Term {
    Const(f64),
    Ct(Ciphertext),
}

struct PowerEvaluator<'a> {
    ctx: &'a mut EvalContext,
    powers: Vec<Option<Rc<Ciphertext>>>,
    baby: usize,
}

impl<'a> PowerEvaluator<'a> {
    fn new(ctx: &'a mut EvalContext, x: Ciphertext, k: u32) -> Self {
        Self {
            ctx,
            powers: vec![None, Some(Rc::new(x))],
            baby: 1 << k.div_ceil(2).max(1),
        }
    }

    fn power(&mut self, i: usize) -> Result<Rc<Ciphertext>> {
        if i >= self.powers.len() {
            self.powers.resize(i + 1, None);
        }
        if let Some(t) = &self.powers[i] {
            return Ok(Rc::clone(t));
        }
        let t = if i.is_power_of_two() {
            let half = self.power(i / 2)?;
            let sq = self.ctx.square(&half)?;
            let twice = self.ctx.add(&sq, &sq);
            self.ctx.add_scalar(&twice, -1.0)
        } else {
            let a = 1usize << (usize::BITS - 1 - i.leading_zeros());
            let b = i - a;
            let ta = self.power(a)?;
            let tb = self.power(b)?;
            let tc = self.power(a - b)?;
            let p = self.ctx.mul(&ta, &tb)?;
            let twice = self.ctx.add(&p, &p);
            self.ctx.sub(&twice, &tc)
        };
        let t = Rc::new(t);
        self.powers[i] = Some(Rc::clone(&t));
        Ok(t)
    }

    /// Evaluates `Σ cᵢTᵢ` (with `c.len() <= 2^k`) within `k` levels.
    fn eval(&mut self, c: &[f64], k: u32) -> Result<Term> {
        if c.len() == 1 {
            return Ok(Term::Const(c[0]));
        }
        let half = 1usize << (k - 1);
        if c.len() <= half + 1 && c.len() - 1 <= self.baby {
            return self.direct(c).map(Term::Ct);
        }
        if c.len() <= half {
            return self.eval(c, k - 1);
        }
        let m = half;
        let mut low = c[..m].to_vec();
        let mut high = Vec::with_capacity(c.len() - m);
        high.push(c[m]);
        for j in 1..c.len() - m {
            high.push(2.0 * c[m + j]);
            low[m - j] -= c[m + j];
        }
        let low = self.eval(&low, k)?;
        let high = self.eval(&high, k - 1)?;
        let tm = self.power(m)?;
        let prod = match high {
            Term::Const(v) => self.ctx.mul_scalar(&tm, v)?,
            Term::Ct(h) => self.ctx.mul(&tm, &h)?,
        };
        Ok(Term::Ct(match low {
            Term::Const(v) => self.ctx.add_scalar(&prod, v),
            Term::Ct(l) => self.ctx.add(&prod, &l),
        }))
    }

    fn direct(&mut self, c: &[f64]) -> Result<Ciphertext> {
        let mut acc: Option<Ciphertext> = None;
        for (i, &ci) in c.iter().enumerate().skip(1) {
            let t = self.power(i)?;
            let term = self.ctx.mul_scalar(&t, ci)?;
            acc = Some(match acc {
                None => term,
                Some(a) => self.ctx.add(&a, &term),
            });
        }
        let acc = acc.expect("direct evaluation needs degree >= 1");
        Ok(self.ctx.add_scalar(&acc, c[0]))
    }
}

/// Which scaled root a [`ScaledTarget`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetKind {
    /// `1 / (√S·√(t+1))` for `t > -1`, else 0.
    InvSqrtShifted,
    /// `√S·√(t+1)` for `t >= -1`, else 0.
    SqrtShifted,
}

/// A root function shifted onto `[-1, 1]` with a folded scale `S`: an input
/// `x` is presented as `t = x/S - 1`, and the target returns the root of
/// `x` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledTarget {
    pub kind: TargetKind,
    pub scale: f64,
}

impl ScaledTarget {
    pub fn inv_sqrt(scale: f64) -> Result<Self> {
        Self::new(TargetKind::InvSqrtShifted, scale)
    }

    pub fn sqrt(scale: f64) -> Result<Self> {
        Self::new(TargetKind::SqrtShifted, scale)
    }

    pub fn new(kind: TargetKind, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParams(format!("scale must be positive, got {scale}")));
        }
        Ok(Self { kind, scale })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            TargetKind::InvSqrtShifted if t > -1.0 => 1.0 / (self.scale.sqrt() * (t + 1.0).sqrt()),
            TargetKind::SqrtShifted if t >= -1.0 => self.scale.sqrt() * (t + 1.0).sqrt(),
            _ => 0.0,
        }
    }

    /// The inverse square root is singular at `t = -1` and is sampled at
    /// interior nodes; the square root is sampled at the extrema so that
    /// `√0 = 0` is reproduced exactly.
    pub fn fit(&self, degree: usize) -> Result<ChebyshevSeries> {
        match self.kind {
            TargetKind::InvSqrtShifted => ChebyshevSeries::fit(|t| self.eval(t), degree),
            TargetKind::SqrtShifted => ChebyshevSeries::fit_extrema_on(|t| self.eval(t), degree, -1.0, 1.0),
        }
    }
}
