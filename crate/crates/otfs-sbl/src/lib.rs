//! OTFS delay-Doppler channel estimation with sparse Bayesian solvers.
//!
//! The crate models a single-antenna OTFS link at the delay-Doppler level:
//! sparse doubly-dispersive channels with fractional Doppler, embedded
//! pilot frames with guard bands, and the linear measurement model that a
//! receiver extracts around the pilot. On top of that sit four sparse
//! recovery algorithms (OMP, SBL, inverse-free SBL, and inverse-free SBL
//! with an embedded adaptive Bayesian threshold), message-passing and
//! LMMSE symbol detectors, and a configuration-driven Monte-Carlo harness
//! that produces plot-ready CSV for NMSE, BER, convergence, and
//! success-rate experiments.

pub mod channel;
pub mod detect;
pub mod error;
pub mod generic_cs;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod measurement;
pub mod params;
pub mod pilot;
pub mod solver;

pub use channel::{gen_channel, phi_coeff, psi_coeff, synthesize_rx, ChannelSpec, PathParams,
                  PowerDelayProfile};
pub use error::{Error, Result};
pub use grid::DDGrid;
pub use linalg::lipschitz_v;
pub use measurement::{build_measurement, extract_window, virtual_truth, Measurement};
pub use params::SystemParams;
pub use pilot::{make_pilot_frame, PilotLayout, Region};
pub use solver::{ifsbl_estimate, ifsblt_estimate, nmse_db, omp_estimate, sbl_estimate,
                 Algorithm, GammaInit, OmpStop, RecoveryResult, SblHyper};
