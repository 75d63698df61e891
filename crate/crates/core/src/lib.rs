//! Classical simulation of two-party protocols that estimate `|<psi|phi>|^2`
//! and `|<phi|M|psi>|^2` when Alice holds copies of `|psi>` and Bob holds
//! copies of `|phi>`.
//!
//! The crate is organised bottom-up:
//!
//! - [`qmath`]: dense complex states, observables, Haar sampling and Born-rule
//!   measurement.
//! - [`sampling`]: outcome-level samplers for the SWAP test, the `M`-weighted
//!   overlap test and the standard POVM on a symmetric subspace.
//! - [`spectral`]: threshold truncation of an observable's spectrum.
//! - [`dipe`]: the random-subspace protocol with bounded quantum messages.
//! - [`gdipe`]: the LOCC-only estimator for bilinear forms.
//! - [`oracles`]: closed-form moment evaluators, Monte-Carlo oracles and
//!   decision-problem instance generators.
//!
//! All randomness flows through explicit streams derived with [`rng`], so
//! every experiment is a pure function of its seed.

pub mod dipe;
pub mod error;
pub mod gdipe;
pub mod oracles;
pub mod qmath;
pub mod rng;
pub mod sampling;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use qmath::{HermitianObservable, Projector, PureState, UnitaryMatrix, C64};
pub use rng::{StreamFactory, StreamRng};
