//! Simulator and verification suite for a factoring circuit built from three
//! oscillators and one qubit.
//!
//! The crate is organized around the stages of that algorithm:
//!
//! - [`numtheory`]: exact integer arithmetic, order finding, pseudomodular
//!   powers and the classical post-processing that turns a homodyne sample
//!   into a factor.
//! - [`gkpmath`]: closed-form Gaussian/GKP quantities (peaks, envelopes,
//!   normalization constants, overlaps) and the combinatorial bounds they
//!   must satisfy, each paired with its analytic bound for property testing.
//! - [`approxcalc`]: the error calculus for approximate function evaluation
//!   by the composite unitaries, and the per-stage error budget.
//! - [`peaksim`]: structured simulator working on finite superpositions of
//!   truncated Gaussian peaks; exact ideal gate semantics on integers.
//! - [`gridsim`]: dense position-grid state-vector oracle used to validate
//!   the ideal semantics and the approximation bounds on small instances.
//! - [`spectral`]: the analytic output distribution of the homodyne
//!   measurement, its interval masses, and a validated sampler.
//! - [`pipeline`]: end-to-end factoring runs, parameter selection, and the
//!   success-probability oracle.
//! - [`report`]: the bound-check suites behind `verify`.

pub mod approxcalc;
pub mod gkpmath;
pub mod gridsim;
pub mod numtheory;
pub mod peaksim;
pub mod pipeline;
pub mod quad;
pub mod report;
pub mod spectral;

pub use numtheory::FactorInstance;
pub use peaksim::{CircuitParams, PeakState, PeakTerm};
pub use pipeline::{RunConfig, RunTranscript};
pub use spectral::SpectralModel;
