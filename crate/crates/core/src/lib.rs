//! Shortcut-to-equilibration protocols for a harmonic oscillator weakly
//! coupled to an Ohmic bath.
//!
//! A protocol is specified by a scaling function `b(t)`. The trap frequency
//! follows from the Ermakov equation and the open-system dynamics from an
//! invariant-based master equation. Results can be checked against the exact
//! Gaussian dynamics of the oscillator plus a discretized bath, or against a
//! truncated Fock-space integration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ermakov;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod master;
pub mod model;
pub mod observables;
pub mod ode;
pub mod optimize;
pub mod quad;
pub mod shortcut;

pub use error::{Error, Result};
