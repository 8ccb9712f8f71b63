//! Value-faithful emulation of CKKS ciphertext arithmetic.
//!
//! A [`Ciphertext`] here is simply the vector of slot values it would decrypt
//! to, tagged with its remaining multiplicative level. Every operation goes
//! through an [`EvalContext`], which enforces the level rules of a leveled
//! scheme and records the cost of the circuit in a [`CostMeter`]:
//!
//! * additions, subtractions and rotations are level-free;
//! * ciphertext-ciphertext and ciphertext-plaintext products consume one
//!   level (the rescale), measured from the lower of the input levels;
//! * bootstrapping resets the level to `max_level` and keeps the values.
//!
//! With `quantize` enabled every produced slot is rounded to the
//! `2^-scale_bits` grid, which models the fixed-point encoding error of the
//! scale factor. No probabilistic noise is modelled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global emulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CkksParams {
    /// Number of SIMD slots per ciphertext. Must be a power of two.
    pub slot_count: usize,
    /// Level of a freshly encrypted or bootstrapped ciphertext.
    pub max_level: u32,
    /// log2 of the scale factor.
    pub scale_bits: u32,
    /// Round every produced slot to the `2^-scale_bits` grid.
    pub quantize: bool,
    /// Bootstrap an operand automatically instead of failing with
    /// [`Error::LevelExhausted`].
    pub auto_bootstrap: bool,
    /// Run the debug-mode checks on emulated values (padding hygiene,
    /// approximation domains, divergence, degenerate inputs).
    pub checks: bool,
}

impl Default for CkksParams {
    fn default() -> Self {
        Self {
            slot_count: 1 << 15,
            max_level: 11,
            scale_bits: 40,
            quantize: false,
            auto_bootstrap: true,
            checks: true,
        }
    }
}

impl CkksParams {
    pub fn with_slot_count(mut self, slot_count: usize) -> Self {
        self.slot_count = slot_count;
        self
    }

    pub fn with_max_level(mut self, max_level: u32) -> Self {
        self.max_level = max_level;
        self
    }

    pub fn with_quantize(mut self, quantize: bool) -> Self {
        self.quantize = quantize;
        self
    }

    pub fn with_auto_bootstrap(mut self, auto_bootstrap: bool) -> Self {
        self.auto_bootstrap = auto_bootstrap;
        self
    }

    pub fn with_checks(mut self, checks: bool) -> Self {
        self.checks = checks;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot_count == 0 || !self.slot_count.is_power_of_two() {
            return Err(Error::InvalidParams(format!(
                "slot_count must be a power of two, got {}",
                self.slot_count
            )));
        }
        if self.max_level < 1 {
            return Err(Error::InvalidParams("max_level must be at least 1".into()));
        }
        if self.scale_bits == 0 || self.scale_bits > 60 {
            return Err(Error::InvalidParams(format!(
                "scale_bits must be in 1..=60, got {}",
                self.scale_bits
            )));
        }
        Ok(())
    }

    /// Spacing of the quantization grid, `2^-scale_bits`.
    pub fn quantum(&self) -> f64 {
        (-(self.scale_bits as f64)).exp2()
    }
}

/// An emulated ciphertext: the slot vector it decrypts to and its level.
#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    slots: Vec<f64>,
    level: u32,
}

impl Ciphertext {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// The first `n` slot values (clamped to the slot count).
    pub fn decrypt(&self, n: usize) -> Vec<f64> {
        self.slots[..n.min(self.slots.len())].to_vec()
    }

    /// Read-only view of every slot. Only meaningful for an emulator; used
    /// by the debug checks and by tests.
    pub fn slots(&self) -> &[f64] {
        &self.slots
    }
}

/// Operation counts of one evaluation context.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostMeter {
    pub mul_ct: u64,
    pub mul_pt: u64,
    pub add: u64,
    pub rotate: u64,
    pub bootstrap: u64,
}

impl CostMeter {
    pub fn merge(&mut self, other: &CostMeter) {
        self.mul_ct += other.mul_ct;
        self.mul_pt += other.mul_pt;
        self.add += other.add;
        self.rotate += other.rotate;
        self.bootstrap += other.bootstrap;
    }

    /// Counts accumulated since the `earlier` snapshot.
    pub fn since(&self, earlier: &CostMeter) -> CostMeter {
        CostMeter {
            mul_ct: self.mul_ct - earlier.mul_ct,
            mul_pt: self.mul_pt - earlier.mul_pt,
            add: self.add - earlier.add,
            rotate: self.rotate - earlier.rotate,
            bootstrap: self.bootstrap - earlier.bootstrap,
        }
    }

    pub fn multiplications(&self) -> u64 {
        self.mul_ct + self.mul_pt
    }
}

/// Parameters plus the cost meter every operation is charged to.
///
/// A context is single-threaded. Independent work can run on [`fork`]ed
/// contexts whose meters are folded back with [`absorb`].
///
/// [`fork`]: EvalContext::fork
/// [`absorb`]: EvalContext::absorb
#[derive(Debug, Clone)]
pub struct EvalContext {
    params: CkksParams,
    meter: CostMeter,
    rng_seed: u64,
    threads: usize,
}

impl EvalContext {
    pub fn new(params: CkksParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            meter: CostMeter::default(),
            rng_seed: 0,
            threads: 1,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn params(&self) -> &CkksParams {
        &self.params
    }

    pub fn meter(&self) -> &CostMeter {
        &self.meter
    }

    pub fn reset_meter(&mut self) {
        self.meter = CostMeter::default();
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn slot_count(&self) -> usize {
        self.params.slot_count
    }

    pub fn max_level(&self) -> u32 {
        self.params.max_level
    }

    /// A context with the same parameters and an empty meter.
    pub fn fork(&self) -> EvalContext {
        EvalContext {
            params: self.params.clone(),
            meter: CostMeter::default(),
            rng_seed: self.rng_seed,
            threads: 1,
        }
    }

    /// Charges the work recorded by a forked context to this one.
    pub fn absorb(&mut self, child: &CostMeter) {
        self.meter.merge(child);
    }

    fn quantize_in_place(&self, slots: &mut [f64]) {
        if self.params.quantize {
            let scale = (self.params.scale_bits as f64).exp2();
            for v in slots.iter_mut() {
                *v = (*v * scale).round() / scale;
            }
        }
    }

    fn make(&self, mut slots: Vec<f64>, level: u32) -> Ciphertext {
        self.quantize_in_place(&mut slots);
        Ciphertext { slots, level }
    }

    fn zip_with(&self, a: &Ciphertext, b: &Ciphertext, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        debug_assert_eq!(a.slots.len(), b.slots.len());
        a.slots.iter().zip(&b.slots).map(|(&x, &y)| f(x, y)).collect()
    }

    /// Packs `values` into a fresh ciphertext at `max_level`, zero padded.
    pub fn encrypt(&self, values: &[f64]) -> Result<Ciphertext> {
        let slots = self.params.slot_count;
        if values.len() > slots {
            return Err(Error::TooManyValues {
                given: values.len(),
                slots,
            });
        }
        let mut packed = vec![0.0; slots];
        packed[..values.len()].copy_from_slice(values);
        Ok(self.make(packed, self.params.max_level))
    }

    /// A fresh ciphertext holding `value` in every slot.
    pub fn encrypt_constant(&self, value: f64) -> Ciphertext {
        self.make(vec![value; self.params.slot_count], self.params.max_level)
    }

    pub fn add(&mut self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.meter.add += 1;
        let slots = self.zip_with(a, b, |x, y| x + y);
        self.make(slots, a.level.min(b.level))
    }

    pub fn sub(&mut self, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
        self.meter.add += 1;
        let slots = self.zip_with(a, b, |x, y| x - y);
        self.make(slots, a.level.min(b.level))
    }

    /// Adds a plaintext constant to every slot. Level-free.
    pub fn add_scalar(&mut self, a: &Ciphertext, c: f64) -> Ciphertext {
        self.meter.add += 1;
        let slots = a.slots.iter().map(|&x| x + c).collect();
        self.make(slots, a.level)
    }

    /// Returns `a` itself, or `a` bootstrapped when it sits below `needed`
    /// and auto-bootstrapping is on.
    fn refreshed(&mut self, a: &Ciphertext, needed: u32) -> Result<Option<Ciphertext>> {
        if a.level >= needed {
            return Ok(None);
        }
        if self.params.auto_bootstrap && needed <= self.params.max_level {
            Ok(Some(self.bootstrap(a)))
        } else {
            Err(Error::LevelExhausted {
                needed,
                available: a.level,
            })
        }
    }

    /// Bootstraps `a` if it has fewer than `needed` levels left (auto mode),
    /// otherwise fails with [`Error::LevelExhausted`].
    pub fn ensure_level(&mut self, a: &Ciphertext, needed: u32) -> Result<Ciphertext> {
        Ok(self.refreshed(a, needed)?.unwrap_or_else(|| a.clone()))
    }

    pub fn mul(&mut self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        let same = std::ptr::eq(a, b);
        let fresh_a = self.refreshed(a, 1)?;
        let a = fresh_a.as_ref().unwrap_or(a);
        let fresh_b = if same { None } else { self.refreshed(b, 1)? };
        let b = if same { a } else { fresh_b.as_ref().unwrap_or(b) };
        self.meter.mul_ct += 1;
        let slots = self.zip_with(a, b, |x, y| x * y);
        Ok(self.make(slots, a.level.min(b.level) - 1))
    }

    pub fn square(&mut self, a: &Ciphertext) -> Result<Ciphertext> {
        self.mul(a, a)
    }

    /// Multiplies every slot by a plaintext constant. Costs one level even
    /// when `c` is 1.
    pub fn mul_scalar(&mut self, a: &Ciphertext, c: f64) -> Result<Ciphertext> {
        let fresh = self.refreshed(a, 1)?;
        let a = fresh.as_ref().unwrap_or(a);
        self.meter.mul_pt += 1;
        let slots = a.slots.iter().map(|&x| x * c).collect();
        Ok(self.make(slots, a.level - 1))
    }

    /// Slot-wise product with a plaintext vector of exactly `slot_count`
    /// entries.
    pub fn mul_plain(&mut self, a: &Ciphertext, plain: &[f64]) -> Result<Ciphertext> {
        if plain.len() != a.slots.len() {
            return Err(Error::LengthMismatch {
                given: plain.len(),
                slots: a.slots.len(),
            });
        }
        let fresh = self.refreshed(a, 1)?;
        let a = fresh.as_ref().unwrap_or(a);
        self.meter.mul_pt += 1;
        let slots = a.slots.iter().zip(plain).map(|(&x, &p)| x * p).collect();
        Ok(self.make(slots, a.level - 1))
    }

    /// Cyclic left shift by `k` slots.
    pub fn rotate(&mut self, a: &Ciphertext, k: i64) -> Ciphertext {
        self.meter.rotate += 1;
        let n = a.slots.len();
        let shift = k.rem_euclid(n as i64) as usize;
        let mut slots = Vec::with_capacity(n);
        slots.extend_from_slice(&a.slots[shift..]);
        slots.extend_from_slice(&a.slots[..shift]);
        self.make(slots, a.level)
    }

    pub fn bootstrap(&mut self, a: &Ciphertext) -> Ciphertext {
        self.meter.bootstrap += 1;
        self.make(a.slots.clone(), self.params.max_level)
    }

    /// Replicates the sum of all slots into every slot with
    /// `log2(slot_count)` rotate-and-add steps. Slots at index `n_valid` and
    /// beyond must be zero.
    pub fn sum_all_slots(&mut self, a: &Ciphertext, n_valid: usize) -> Result<Ciphertext> {
        if self.params.checks {
            let eps = if self.params.quantize {
                self.params.quantum()
            } else {
                0.0
            };
            if let Some((slot, &value)) = a.slots.iter().enumerate().skip(n_valid).find(|(_, v)| v.abs() > eps) {
                return Err(Error::DirtyPadding { slot, value });
            }
        }
        let mut acc = a.clone();
        let mut step = 1usize;
        while step < a.slots.len() {
            let rotated = self.rotate(&acc, step as i64);
            acc = self.add(&acc, &rotated);
            step <<= 1;
        }
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(slots: usize) -> EvalContext {
        EvalContext::new(CkksParams::default().with_slot_count(slots)).unwrap()
    }

    #[test]
    fn encrypt_pads_with_zeros_at_max_level() {
        let c = ctx(4);
        let ct = c.encrypt(&[1.0, 2.0]).unwrap();
        assert_eq!(ct.slots(), &[1.0, 2.0, 0.0, 0.0]);
        assert_eq!(ct.level(), 11);
        assert_eq!(c.encrypt(&[]).unwrap().decrypt(0), Vec::<f64>::new());
        assert_eq!(c.encrypt(&[5.5]).unwrap().decrypt(1), vec![5.5]);
    }

    #[test]
    fn encrypt_rejects_overflow() {
        let c = ctx(4);
        assert!(matches!(
            c.encrypt(&[0.0; 5]),
            Err(Error::TooManyValues { given: 5, slots: 4 })
        ));
    }

    #[test]
    fn quantized_encrypt_lands_on_grid() {
        let c = EvalContext::new(CkksParams::default().with_slot_count(4).with_quantize(true)).unwrap();
        let v = c.encrypt(&[0.3]).unwrap().decrypt(1)[0];
        assert!((v - 0.3).abs() <= 2f64.powi(-40));
        assert_eq!(v * 2f64.powi(40), (v * 2f64.powi(40)).round());
    }

    #[test]
    fn add_sub_use_min_level() {
        let mut c = ctx(4);
        let a = c.encrypt(&[1.0, 2.0]).unwrap();
        let b = c.encrypt(&[3.0, 4.0]).unwrap();
        assert_eq!(c.add(&a, &b).decrypt(2), vec![4.0, 6.0]);
        assert_eq!(c.sub(&b, &a).decrypt(2), vec![2.0, 2.0]);
        let lowered = Ciphertext {
            slots: a.slots.clone(),
            level: 5,
        };
        let low = Ciphertext {
            slots: b.slots.clone(),
            level: 3,
        };
        assert_eq!(c.add(&lowered, &low).level(), 3);
        let two = Ciphertext {
            slots: a.slots.clone(),
            level: 2,
        };
        let seven = Ciphertext {
            slots: b.slots.clone(),
            level: 7,
        };
        assert_eq!(c.sub(&two, &seven).level(), 2);
        assert_eq!(c.sub(&a, &a).decrypt(4), vec![0.0; 4]);
        assert_eq!(c.meter().add, 5);
    }

    #[test]
    fn mul_consumes_one_level() {
        let mut c = ctx(4);
        let a = c.encrypt(&[1.0, 2.0]).unwrap();
        let b = c.encrypt(&[3.0, 4.0]).unwrap();
        let p = c.mul(&a, &b).unwrap();
        assert_eq!(p.decrypt(2), vec![3.0, 8.0]);
        assert_eq!(p.level(), 10);
        assert_eq!(c.meter().mul_ct, 1);
    }

    #[test]
    fn mul_at_level_zero_fails_without_auto_bootstrap() {
        let mut c = EvalContext::new(CkksParams::default().with_slot_count(4).with_auto_bootstrap(false)).unwrap();
        let a = Ciphertext {
            slots: vec![1.0; 4],
            level: 0,
        };
        assert!(matches!(
            c.mul(&a, &a),
            Err(Error::LevelExhausted {
                needed: 1,
                available: 0
            })
        ));
        assert!(c.mul_scalar(&a, 2.0).is_err());
        assert_eq!(c.meter().mul_ct, 0);
    }

    #[test]
    fn auto_bootstrap_refreshes_only_the_exhausted_operand() {
        let mut c = ctx(4);
        let a = Ciphertext {
            slots: vec![2.0; 4],
            level: 0,
        };
        let b = c.encrypt(&[3.0; 4]).unwrap();
        let p = c.mul(&a, &b).unwrap();
        assert_eq!(p.level(), 10);
        assert_eq!(c.meter().bootstrap, 1);
        let sq = c.square(&a).unwrap();
        assert_eq!(sq.decrypt(1), vec![4.0]);
        assert_eq!(c.meter().bootstrap, 2);
    }

    #[test]
    fn plaintext_products() {
        let mut c = ctx(2);
        let a = c.encrypt(&[2.0, 4.0]).unwrap();
        assert_eq!(c.mul_scalar(&a, 0.5).unwrap().decrypt(2), vec![1.0, 2.0]);
        let same = c.mul_scalar(&a, 1.0).unwrap();
        assert_eq!(same.decrypt(2), vec![2.0, 4.0]);
        assert_eq!(same.level(), 10);
        assert_eq!(c.mul_plain(&a, &[0.5, 0.25]).unwrap().decrypt(2), vec![1.0, 1.0]);
        assert!(matches!(
            c.mul_plain(&a, &[1.0]),
            Err(Error::LengthMismatch { given: 1, slots: 2 })
        ));
        assert_eq!(c.meter().mul_pt, 3);
    }

    #[test]
    fn rotate_is_cyclic_left_shift() {
        let mut c = ctx(4);
        let a = c.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.rotate(&a, 1).decrypt(4), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(c.rotate(&a, 4).decrypt(4), a.decrypt(4));
        assert_eq!(c.rotate(&a, 0).decrypt(4), a.decrypt(4));
        assert_eq!(c.rotate(&a, -1).decrypt(4), vec![4.0, 1.0, 2.0, 3.0]);
        assert_eq!(c.rotate(&a, 1).level(), 11);
    }

    #[test]
    fn bootstrap_resets_level_and_keeps_values() {
        let mut c = ctx(4);
        let a = Ciphertext {
            slots: vec![0.5, -1.0, 2.0, 0.0],
            level: 0,
        };
        let b = c.bootstrap(&a);
        assert_eq!(b.level(), 11);
        assert_eq!(b.slots(), a.slots());
        assert_eq!(c.meter().bootstrap, 1);
        assert_eq!(c.bootstrap(&b).slots(), a.slots());
    }

    #[test]
    fn sum_all_slots_replicates_total() {
        let mut c = ctx(4);
        let a = c.encrypt(&[1.0, 2.0, 3.0]).unwrap();
        let s = c.sum_all_slots(&a, 3).unwrap();
        assert_eq!(s.decrypt(4), vec![6.0; 4]);
        assert_eq!(s.level(), 11);
        assert_eq!(c.meter().rotate, 2);
        assert_eq!(c.meter().add, 2);
        let z = c.encrypt(&[]).unwrap();
        assert_eq!(c.sum_all_slots(&z, 0).unwrap().decrypt(4), vec![0.0; 4]);
    }

    #[test]
    fn sum_all_slots_flags_dirty_padding() {
        let mut c = ctx(4);
        let a = c.encrypt(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            c.sum_all_slots(&a, 3),
            Err(Error::DirtyPadding { slot: 3, .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(CkksParams::default().with_slot_count(6).validate().is_err());
        assert!(CkksParams::default().with_max_level(0).validate().is_err());
        assert!(CkksParams::default().validate().is_ok());
    }

    #[test]
    fn forked_meters_merge() {
        let mut parent = ctx(4);
        let mut child = parent.fork();
        let a = child.encrypt(&[1.0]).unwrap();
        child.mul(&a, &a).unwrap();
        parent.absorb(child.meter());
        assert_eq!(parent.meter().mul_ct, 1);
    }
}
