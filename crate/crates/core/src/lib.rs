//! Simulation toolkit for two flux-tunable transmons coupled through a
//! grounded tunable coupler, driven by parametric-resonance flux modulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod circuit;
pub mod device;
pub mod dynamics;
pub mod effective;
pub mod error;
pub mod fluxcontrol;
pub mod numeric;
pub mod spectrum;
pub mod tomography;

pub use error::{Error, Result};
