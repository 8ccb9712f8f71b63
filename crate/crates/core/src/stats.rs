//! Encrypted statistical measures over packed columns.
//!
//! Inputs are scaled by a constant `1/B` chosen so that `Var(x)/B²` and
//! `|mean(x)|/B` fall inside the domains of the inverse-root and sign
//! approximations. The scaling is folded into the plaintext constants of the
//! first products, so it never costs a level of its own. The variance is
//! computed as
//!
//! ```text
//! Var(x)/B² = Σ (xᵢ/(B√N))² − (Σ xᵢ/(B·N))²
//! ```
//!
//! which needs two levels where the naive `E[X²] − E[X]²` followed by a
//! rescale needs three.
//!
//! All moments are population moments (normalized by `N`).

use rayon::prelude::*;

use crate::data::EncryptedColumn;
use crate::emulator::{Ciphertext, EvalContext};
use crate::error::{Error, Result};
use crate::primitives::{crypto_invsqrt, crypto_sign, crypto_sqrt, InvRootConfig, SignConfig};

/// Scaled variances below this are rejected by the debug checks.
pub const MIN_VARIANCE: f64 = 1e-9;
/// The debug checks reject means with `|μ| < NEAR_ZERO_MEAN · B`.
pub const NEAR_ZERO_MEAN: f64 = 0.01;

/// Knobs shared by the measures.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatConfig {
    pub inv_root: InvRootConfig,
    pub sign: SignConfig,
    /// Chebyshev degree of the square root used by the coefficient of
    /// variation.
    pub sqrt_degree: Option<usize>,
}

impl StatConfig {
    pub const DEFAULT_SQRT_DEGREE: usize = 511;

    pub fn sqrt_degree(&self) -> usize {
        self.sqrt_degree.unwrap_or(Self::DEFAULT_SQRT_DEGREE)
    }
}

/// Replicated mean and scaled variance of one column.
#[derive(Debug, Clone)]
pub struct MomentSet {
    /// `μ` in every slot, one level below the input.
    pub ct_mu: Ciphertext,
    /// `Var(x)/B²` in every slot, two levels below the input.
    pub ct_var: Ciphertext,
    pub n_valid: usize,
}

/// Runs `f` once per chunk index, on forked contexts when the context asks
/// for more than one thread. Meters of the forks are charged back in chunk
/// order, so the totals do not depend on the thread count.
fn map_chunks<T, F>(ctx: &mut EvalContext, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut EvalContext, usize) -> Result<T> + Sync,
{
    if ctx.threads() <= 1 || n <= 1 {
        return (0..n).map(|i| f(ctx, i)).collect();
    }
    let base = ctx.fork();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads())
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut local = base.fork();
                let out = f(&mut local, i);
                (out, *local.meter())
            })
            .collect()
    });
    outcomes
        .into_iter()
        .map(|(out, meter)| {
            ctx.absorb(&meter);
            out
        })
        .collect()
}

fn require_nonempty(col: &EncryptedColumn) -> Result<()> {
    if col.n_valid() == 0 || col.chunks().is_empty() {
        Err(Error::EmptyColumn)
    } else {
        Ok(())
    }
}

fn require_same_shape(x: &EncryptedColumn, y: &EncryptedColumn) -> Result<()> {
    if x.n_valid() != y.n_valid() || x.chunks().len() != y.chunks().len() {
        Err(Error::ColumnLengthMismatch {
            left: x.n_valid(),
            right: y.n_valid(),
        })
    } else {
        Ok(())
    }
}

/// Sums slot-replicated partial sums across chunks.
fn add_all(ctx: &mut EvalContext, parts: Vec<Ciphertext>) -> Ciphertext {
    let mut it = parts.into_iter();
    let first = it.next().expect("at least one chunk");
    it.fold(first, |acc, p| ctx.add(&acc, &p))
}

/// `factor · Σ chunk` over all valid slots, replicated. Padding slots of the
/// chunks may hold anything when `masked` is set: the mask is folded into
/// the plaintext product, which is the one level this costs.
fn scaled_sum(
    ctx: &mut EvalContext,
    col: &EncryptedColumn,
    chunks: &[Ciphertext],
    factor: f64,
    masked: bool,
) -> Result<Ciphertext> {
    let slots = ctx.slot_count();
    let parts = map_chunks(ctx, chunks.len(), |c, i| {
        let valid = col.valid_in_chunk(i);
        let scaled = if masked && valid < slots {
            let mut plain = vec![0.0; slots];
            plain[..valid].fill(factor);
            c.mul_plain(&chunks[i], &plain)?
        } else {
            c.mul_scalar(&chunks[i], factor)?
        };
        c.sum_all_slots(&scaled, valid)
    })?;
    Ok(add_all(ctx, parts))
}

/// Mean of the chunks over the valid slots, ignoring padding contents.
fn masked_mean(ctx: &mut EvalContext, col: &EncryptedColumn, chunks: &[Ciphertext]) -> Result<Ciphertext> {
    scaled_sum(ctx, col, chunks, 1.0 / col.n_valid() as f64, true)
}

/// Per-chunk map over a list of ciphertexts.
fn map_each<F>(ctx: &mut EvalContext, chunks: &[Ciphertext], f: F) -> Result<Vec<Ciphertext>>
where
    F: Fn(&mut EvalContext, &Ciphertext) -> Result<Ciphertext> + Sync,
{
    map_chunks(ctx, chunks.len(), |c, i| f(c, &chunks[i]))
}

fn map_column<F>(ctx: &mut EvalContext, col: &EncryptedColumn, f: F) -> Result<Vec<Ciphertext>>
where
    F: Fn(&mut EvalContext, &Ciphertext) -> Result<Ciphertext> + Sync,
{
    map_each(ctx, col.chunks(), f)
}

/// `μ/B` in every slot. One level.
pub fn mean_scaled(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64) -> Result<Ciphertext> {
    require_nonempty(col)?;
    scaled_sum(ctx, col, col.chunks(), 1.0 / (b * col.n_valid() as f64), false)
}

/// `Var(x)/s` in every slot. Two levels.
pub fn variance_with_scale(ctx: &mut EvalContext, col: &EncryptedColumn, s: f64) -> Result<Ciphertext> {
    require_nonempty(col)?;
    let n = col.n_valid() as f64;
    let root = s.sqrt();
    let c = 1.0 / (root * n.sqrt());
    let squares = map_column(ctx, col, |ctx, x| {
        let scaled = ctx.mul_scalar(x, c)?;
        ctx.square(&scaled)
    })?;
    let second = scaled_sum_plain(ctx, col, &squares)?;
    let mean = mean_scaled(ctx, col, root)?;
    let mean_sq = ctx.square(&mean)?;
    Ok(ctx.sub(&second, &mean_sq))
}

/// Level-free sum of chunks whose padding is already zero.
fn scaled_sum_plain(ctx: &mut EvalContext, col: &EncryptedColumn, chunks: &[Ciphertext]) -> Result<Ciphertext> {
    let parts = map_chunks(ctx, chunks.len(), |c, i| {
        c.sum_all_slots(&chunks[i], col.valid_in_chunk(i))
    })?;
    Ok(add_all(ctx, parts))
}

/// `Var(x)/B²` in every slot. Two levels.
pub fn variance_scaled(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64) -> Result<Ciphertext> {
    variance_with_scale(ctx, col, b * b)
}

/// Mean and scaled variance in one pass.
pub fn moments(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64) -> Result<MomentSet> {
    let ct_mu = mean_scaled(ctx, col, 1.0)?;
    let ct_var = variance_scaled(ctx, col, b)?;
    Ok(MomentSet {
        ct_mu,
        ct_var,
        n_valid: col.n_valid(),
    })
}

fn check_variance(ctx: &EvalContext, ct_var: &Ciphertext, b: f64) -> Result<()> {
    if ctx.params().checks {
        let value = ct_var.slots()[0] * b * b;
        if !(value >= MIN_VARIANCE) {
            return Err(Error::DegenerateVariance { value });
        }
    }
    Ok(())
}

/// `1/σ` in every slot, from the scaled variance.
fn inv_std(ctx: &mut EvalContext, ct_var: &Ciphertext, b: f64, cfg: &StatConfig) -> Result<Ciphertext> {
    check_variance(ctx, ct_var, b)?;
    crypto_invsqrt(ctx, ct_var, b * b, &cfg.inv_root)
}

/// `x − μ` per chunk. Padding slots end up holding `−μ`.
fn centered(ctx: &mut EvalContext, col: &EncryptedColumn, mu: &Ciphertext) -> Result<Vec<Ciphertext>> {
    map_column(ctx, col, |c, x| Ok(c.sub(x, mu)))
}

/// Z-score normalization `(x − μ)/σ`. Padding slots of the result are not
/// zero; decoding truncates them.
pub fn znorm(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64) -> Result<EncryptedColumn> {
    znorm_with(ctx, col, b, &StatConfig::default())
}

pub fn znorm_with(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64, cfg: &StatConfig) -> Result<EncryptedColumn> {
    let m = moments(ctx, col, b)?;
    let inv = inv_std(ctx, &m.ct_var, b, cfg)?;
    let chunks = map_column(ctx, col, |c, x| {
        let d = c.sub(x, &m.ct_mu);
        c.mul(&d, &inv)
    })?;
    EncryptedColumn::new(
        chunks,
        col.n_valid(),
        format!("znorm({})", col.name()),
        ctx.slot_count(),
    )
}

/// Fourth standardized moment `E[(x−μ)⁴]/σ⁴` (not the excess).
pub fn kurtosis(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64) -> Result<Ciphertext> {
    kurtosis_with(ctx, col, b, &StatConfig::default())
}

pub fn kurtosis_with(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64, cfg: &StatConfig) -> Result<Ciphertext> {
    let m = moments(ctx, col, b)?;
    let inv = inv_std(ctx, &m.ct_var, b, cfg)?;
    let d = centered(ctx, col, &m.ct_mu)?;
    let fourth = map_each(ctx, &d, |c, x| {
        let sq = c.square(x)?;
        c.square(&sq)
    })?;
    let numerator = masked_mean(ctx, col, &fourth)?;
    let inv2 = ctx.square(&inv)?;
    let inv4 = ctx.square(&inv2)?;
    ctx.mul(&numerator, &inv4)
}

/// Third standardized moment `E[(x−μ)³]/σ³`.
pub fn skewness(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64) -> Result<Ciphertext> {
    skewness_with(ctx, col, b, &StatConfig::default())
}

pub fn skewness_with(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64, cfg: &StatConfig) -> Result<Ciphertext> {
    let m = moments(ctx, col, b)?;
    let inv = inv_std(ctx, &m.ct_var, b, cfg)?;
    let d = centered(ctx, col, &m.ct_mu)?;
    let third = map_each(ctx, &d, |c, x| {
        let sq = c.square(x)?;
        c.mul(&sq, x)
    })?;
    let numerator = masked_mean(ctx, col, &third)?;
    let inv2 = ctx.square(&inv)?;
    let inv3 = ctx.mul(&inv2, &inv)?;
    ctx.mul(&numerator, &inv3)
}

/// Coefficient of variation `σ/μ`, sign included.
///
/// The sign of the mean is extracted from `μ/(2B)`, which keeps the sign
/// input inside `[-1, 1]` whenever `|μ| ≤ 2B`. Then `|μ|/B` is inverted with
/// the inverse square root (squared) and `σ` comes from one square-root
/// evaluation on `Var/B²`. The approximate sign `s` enters both as `μ·s` and
/// as the final factor, so its error cancels to first order.
pub fn coeff_variation(ctx: &mut EvalContext, col: &EncryptedColumn, b: f64) -> Result<Ciphertext> {
    coeff_variation_with(ctx, col, b, &StatConfig::default())
}

pub fn coeff_variation_with(
    ctx: &mut EvalContext,
    col: &EncryptedColumn,
    b: f64,
    cfg: &StatConfig,
) -> Result<Ciphertext> {
    let mu = mean_scaled(ctx, col, b)?;
    if ctx.params().checks {
        let value = mu.slots()[0] * b;
        let threshold = NEAR_ZERO_MEAN * b;
        if !(value.abs() >= threshold) {
            return Err(Error::NearZeroMean { value, threshold });
        }
    }
    let half = mean_scaled(ctx, col, 2.0 * b)?;
    let sign = crypto_sign(ctx, &half, &cfg.sign)?;
    let mu_pos = ctx.mul(&mu, &sign)?;
    let inv_sqrt_mu = crypto_invsqrt(ctx, &mu_pos, b, &cfg.inv_root)?;
    let inv_mu = ctx.square(&inv_sqrt_mu)?;
    let var = variance_scaled(ctx, col, b)?;
    let std = crypto_sqrt(ctx, &var, b * b, cfg.sqrt_degree())?;
    let signed_inv = ctx.mul(&inv_mu, &sign)?;
    ctx.mul(&std, &signed_inv)
}

/// Pearson correlation `cov(x, y)/(σx·σy)`.
pub fn pearson(ctx: &mut EvalContext, x: &EncryptedColumn, y: &EncryptedColumn, b: f64) -> Result<Ciphertext> {
    pearson_with(ctx, x, y, b, &StatConfig::default())
}

pub fn pearson_with(
    ctx: &mut EvalContext,
    x: &EncryptedColumn,
    y: &EncryptedColumn,
    b: f64,
    cfg: &StatConfig,
) -> Result<Ciphertext> {
    require_same_shape(x, y)?;
    let mx = moments(ctx, x, b)?;
    let my = moments(ctx, y, b)?;
    let inv_x = inv_std(ctx, &mx.ct_var, b, cfg)?;
    let inv_y = inv_std(ctx, &my.ct_var, b, cfg)?;
    let dx = centered(ctx, x, &mx.ct_mu)?;
    let dy = centered(ctx, y, &my.ct_mu)?;
    let products = map_chunks(ctx, dx.len(), |c, i| c.mul(&dx[i], &dy[i]))?;
    let cov = masked_mean(ctx, x, &products)?;
    let scaled = ctx.mul(&cov, &inv_x)?;
    ctx.mul(&scaled, &inv_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{decode_column, encode_column};
    use crate::emulator::CkksParams;
    use crate::reference;

    fn ctx(slots: usize) -> EvalContext {
        EvalContext::new(CkksParams::default().with_slot_count(slots)).unwrap()
    }

    fn col(c: &EvalContext, v: &[f64]) -> EncryptedColumn {
        encode_column(c, v).unwrap()
    }

    #[test]
    fn mean_examples() {
        let mut c = ctx(8);
        let x = col(&c, &[1.0, 2.0, 3.0, 4.0]);
        let m = mean_scaled(&mut c, &x, 1.0).unwrap();
        for v in m.decrypt(8) {
            assert!((v - 2.5).abs() < 1e-12);
        }
        assert_eq!(m.level(), 10);
        let m = mean_scaled(&mut c, &x, 10.0).unwrap();
        assert!((m.decrypt(1)[0] - 0.25).abs() < 1e-12);
        let k = col(&c, &[7.0; 5]);
        assert!((mean_scaled(&mut c, &k, 2.0).unwrap().decrypt(1)[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        let mut c = ctx(8);
        let x = col(&c, &[1.0, 2.0, 3.0, 4.0]);
        let v = variance_scaled(&mut c, &x, 1.0).unwrap();
        assert!((v.decrypt(1)[0] - 1.25).abs() < 1e-9);
        assert_eq!(v.level(), 9);
        let v10 = variance_scaled(&mut c, &x, 10.0).unwrap();
        assert!((v10.decrypt(1)[0] - 1.25 / 100.0).abs() < 1e-9);
        let k = col(&c, &[3.0; 6]);
        assert!(variance_scaled(&mut c, &k, 1.0).unwrap().decrypt(1)[0].abs() < 1e-9);
    }

    #[test]
    fn multi_chunk_moments() {
        let mut c = ctx(4);
        let data: Vec<f64> = (1..=10).map(f64::from).collect();
        let x = col(&c, &data);
        assert_eq!(x.chunks().len(), 3);
        let m = mean_scaled(&mut c, &x, 1.0).unwrap();
        assert!((m.decrypt(1)[0] - 5.5).abs() < 1e-12);
        let v = variance_scaled(&mut c, &x, 1.0).unwrap();
        assert!((v.decrypt(1)[0] - 8.25).abs() < 1e-9);
    }

    #[test]
    fn empty_column_is_rejected() {
        let mut c = ctx(4);
        let x = col(&c, &[]);
        assert!(matches!(mean_scaled(&mut c, &x, 1.0), Err(Error::EmptyColumn)));
    }

    #[test]
    fn znorm_small() {
        let mut c = ctx(8);
        let data = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0];
        let x = col(&c, &data);
        let z = decode_column(&znorm(&mut c, &x, 4.0).unwrap());
        let want = reference::zscores(&data);
        for (a, b) in z.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert_eq!(c.meter().bootstrap, 2);
    }

    #[test]
    fn two_point_moments() {
        let mut c = ctx(8);
        let x = col(&c, &[-1.0, 1.0, -1.0, 1.0]);
        let k = kurtosis(&mut c, &x, 1.0).unwrap().decrypt(1)[0];
        assert!((k - 1.0).abs() < 1e-3);
        let s = skewness(&mut c, &x, 1.0).unwrap().decrypt(1)[0];
        assert!(s.abs() < 1e-3);
    }

    #[test]
    fn skew_matches_oracle() {
        let mut c = ctx(8);
        let data = [0.0, 0.0, 0.0, 10.0];
        let x = col(&c, &data);
        let s = skewness(&mut c, &x, 10.0).unwrap().decrypt(1)[0];
        let want = reference::skewness(&data);
        assert!((s - want).abs() < 1e-4 * want.abs(), "{s} vs {want}");
    }

    #[test]
    fn degenerate_variance() {
        let mut c = ctx(8);
        let x = col(&c, &[5.0; 4]);
        assert!(matches!(znorm(&mut c, &x, 1.0), Err(Error::DegenerateVariance { .. })));
    }

    #[test]
    fn cv_sign_and_value() {
        let mut c = ctx(8);
        let data = [3.0, 5.0, 7.0, 9.0, 11.0];
        let x = col(&c, &data);
        let cv = coeff_variation(&mut c, &x, 10.0).unwrap().decrypt(1)[0];
        let want = reference::coeff_variation(&data);
        assert!((cv - want).abs() < 1e-3 * want, "{cv} vs {want}");
        assert!(c.meter().bootstrap <= 7);
        let neg: Vec<f64> = data.iter().map(|v| -v).collect();
        let xn = col(&c, &neg);
        let cvn = coeff_variation(&mut c, &xn, 10.0).unwrap().decrypt(1)[0];
        assert!((cvn + want).abs() < 2e-3 * want);
    }

    #[test]
    fn cv_near_zero_mean() {
        let mut c = ctx(8);
        let x = col(&c, &[-1.0, 1.0]);
        assert!(matches!(
            coeff_variation(&mut c, &x, 10.0),
            Err(Error::NearZeroMean { .. })
        ));
    }

    #[test]
    fn pearson_identities() {
        let mut c = ctx(8);
        let data = [1.0, 3.0, 2.0, 5.0, 4.0];
        let x = col(&c, &data);
        let r = pearson(&mut c, &x, &x, 5.0).unwrap().decrypt(1)[0];
        assert!((r - 1.0).abs() < 1e-3);
        assert_eq!(c.meter().bootstrap, 4);
        let neg: Vec<f64> = data.iter().map(|v| -v).collect();
        let y = col(&c, &neg);
        let r = pearson(&mut c, &x, &y, 5.0).unwrap().decrypt(1)[0];
        assert!((r + 1.0).abs() < 1e-3);
        let short = col(&c, &data[..3]);
        assert!(matches!(
            pearson(&mut c, &x, &short, 5.0),
            Err(Error::ColumnLengthMismatch { .. })
        ));
    }

    #[test]
    fn threads_do_not_change_results_or_costs() {
        let data: Vec<f64> = (0..50).map(|i| (i * 7 % 13) as f64 + 1.0).collect();
        let mut one = ctx(8);
        let mut many = ctx(8).with_threads(4);
        let x1 = col(&one, &data);
        let x4 = col(&many, &data);
        let a = kurtosis(&mut one, &x1, 10.0).unwrap();
        let b = kurtosis(&mut many, &x4, 10.0).unwrap();
        assert_eq!(a.slots(), b.slots());
        assert_eq!(one.meter(), many.meter());
    }
}
