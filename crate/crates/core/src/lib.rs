//! Internal-temperature dynamics of laser-heated fullerenes in a Talbot-Lau
//! matter-wave beamline: thermal photon emission, radiative cooling,
//! thermionic ionization, thermometry fits and emission decoherence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beamline;
pub mod constants;
pub mod cooling;
pub mod decoherence;
pub mod error;
pub mod io;
pub mod numerics;
pub mod spectra;
pub mod thermometry;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
