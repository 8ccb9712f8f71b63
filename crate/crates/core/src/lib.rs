//! Privacy-preserving statistics over an emulated CKKS scheme.
//!
//! The crate is layered bottom-up:
//!
//! * [`emulator`]: ciphertexts as slot vectors with strict level accounting,
//!   bootstrap metering and optional fixed-point quantization.
//! * [`chebyshev`]: Chebyshev interpolation and depth-optimal homomorphic
//!   evaluation.
//! * [`primitives`]: Chebyshev-seeded Newton inverse roots, the scaled square
//!   root, composite-polynomial sign and the fixed-seed Newton baseline.
//! * [`stats`]: scaled mean and variance plus Z-score normalization,
//!   skewness, kurtosis, coefficient of variation and Pearson correlation.
//! * [`data`]: CSV ingestion, column packing, synthetic inputs and error
//!   metrics.
//!
//! ```
//! use ppstat::{CkksParams, EvalContext};
//!
//! let mut ctx = EvalContext::new(CkksParams::default().with_slot_count(8))?;
//! let a = ctx.encrypt(&[1.0, 2.0])?;
//! let b = ctx.encrypt(&[3.0, 4.0])?;
//! let p = ctx.mul(&a, &b)?;
//! assert_eq!(p.decrypt(2), vec![3.0, 8.0]);
//! assert_eq!(p.level(), 10);
//! # Ok::<(), ppstat::Error>(())
//! ```

pub mod chebyshev;
pub mod data;
pub mod emulator;
mod error;
pub mod primitives;
pub mod reference;
pub mod stats;

pub use chebyshev::{ChebyshevSeries, ScaledTarget, TargetKind};
pub use data::{DatasetSpec, EncryptedColumn, Transform};
pub use emulator::{Ciphertext, CkksParams, CostMeter, EvalContext};
pub use error::{Error, Result};
pub use primitives::{InvRootConfig, SignConfig, SignMode};
