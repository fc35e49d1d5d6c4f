//! Core of the DCX digital-twin control plane.
//!
//! The crate is organised bottom-up:
//!
//! - [`netmodel`]: topology document, domain types and validation.
//! - [`qot`]: BER/SNR conversions, ASE/NLI noise accumulation, TRx noise
//!   model and segment GSNR algebra.
//! - [`modes`]: transceiver mode catalogs, intersection and selection.
//! - [`routing`]: route enumeration over the POP overlay, segment
//!   decomposition, first-fit spectrum assignment and ranking.
//! - [`linetwin`]: deterministic line simulator producing power profiles,
//!   telemetry, faults and round-trip delay.
//! - [`monitor`]: step localisation, profile denoising, line calibration,
//!   gain/tilt optimisation, NF fault detection and delay inversion.
//! - [`protocol`]: the user/carrier provisioning state machines.
//!
//! [`fixtures`] holds reusable topologies for tests, scenarios and demos.

pub mod fixtures;
pub mod linetwin;
pub mod modes;
pub mod monitor;
pub mod netmodel;
pub mod protocol;
pub mod qot;
pub mod routing;
pub mod units;

pub use netmodel::{LinkId, SiteId, Topology, TrxId};
