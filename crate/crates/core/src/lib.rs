//! Two-ion decoherence-free-subspace Ramsey spectroscopy, end to end.
//!
//! This crate models a pair of trapped ions prepared in product-state Bell
//! superpositions whose branches share the same total magnetic quantum number.
//! Such states dephase from electric-quadrupole and field-gradient couplings
//! while staying immune to uniform magnetic-field fluctuations, which makes
//! them a precision probe of the atomic electric quadrupole moment.
//!
//! The crate covers the full chain:
//!
//! * [`physics`] / [`constants`] — Zeeman sublevels, orientation factors, and
//!   single-level shifts with injectable constants;
//! * [`trap`] — tip voltage to axial frequency, field gradient, and two-ion
//!   separation;
//! * [`states`] — Bell-state specifications and their phase-rate budgets;
//! * [`ramsey`] / [`dataset`] — parity-oscillation expectation values and
//!   deterministic Monte-Carlo sampling of full scans;
//! * [`estimation`] — damped-sinusoid, weighted-linear, and angular fits plus
//!   the quadrupole-moment extraction;
//! * [`pipeline`] — config-driven scan orchestration behind the CLI.
//!
//! Sampling uses counter-derived per-point random substreams, so results are
//! byte-identical for a fixed seed regardless of thread count. The `parallel`
//! feature (default on) runs scan points and replicate studies on rayon;
//! sequential twins of the entry points remain available for benchmarking.

pub mod constants;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod exec;
pub mod physics;
pub mod pipeline;
pub mod ramsey;
pub mod rng;
pub mod states;
pub mod trap;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
