//! Certified asymptotic secret-key rates for decoy-state BB84 with
//! imperfectly phase-randomised laser sources.
//!
//! The pipeline: build truncated Fock-space model states of the source and
//! eigendecompose them ([`spectral`]), widen the observed channel statistics
//! ([`channel`]) into fidelity-safe intervals ([`fidelity`]), solve
//! semidefinite relaxations for the single-tag yield and phase-error rate
//! ([`sdp`]), and combine the certified bounds into a key rate optimised
//! over the signal intensity ([`rate`]). The uniformity parameter q is
//! either supplied directly or calibrated from a measured interference
//! visibility ([`calibration`]).

pub mod calibration;
pub mod channel;
pub mod config;
pub mod error;
pub mod fidelity;
pub mod fock;
pub mod rate;
pub mod sdp;
pub mod spectral;

pub use config::ProtocolConfig;
pub use error::{Error, Result};
