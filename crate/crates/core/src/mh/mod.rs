//! Model-agnostic CDA machinery.
//!
//! A model supplies its data-augmentation sweep under working parameters
//! `(r, b)` through [`CdaModel`]. The engine uses that sweep as a
//! Metropolis-Hastings proposal, adapts `(r, b)` from the current state for
//! the first `n_adapt` iterations, freezes them, and records a [`Trace`].

mod calibration;
mod engine;
mod trace;

pub use calibration::CalibrationParams;
pub use engine::{
    accept, run_chain, AdaptPoint, Blocks, CdaModel, ChainRunner, ChainState, Proposal, SamplerConfig, SamplerKind,
    StepOutcome,
};
pub use trace::{AdaptRow, PhaseTimings, Trace};
