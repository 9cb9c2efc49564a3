//! Beamforming toolkit for dynamic metasurface antennas.
//!
//! Covers the Lorentzian element model, array geometry and guide field,
//! weight mappings with phase-rotation search, hierarchical codebooks,
//! an analytic far-field oracle, a seeded cluster channel, and the
//! transmitter power and efficiency model.

pub mod array;
pub mod channel;
pub mod beampattern;
pub mod codebook;
pub mod efficiency;
pub mod element;
pub mod error;
pub mod mapping;

pub use error::{Error, Result};
pub use num_complex::Complex64;
