//! Mapping desired unit-modulus weights onto Lorentzian weights, and the
//! global phase-rotation search that picks the mapping with the highest
//! realized gain.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{effective_desired_weights, Beamformer, GuideField};
use crate::element::{quantize_to_available, LorentzianWeight, TuningTable, J};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMethod {
    /// Nearest circle point in Euclidean distance.
    Euclidean,
    /// Desired phase substituted into the circle equation.
    LorentzianConstrained,
}

impl MappingMethod {
    pub fn short_name(self) -> &'static str {
        match self {
            MappingMethod::Euclidean => "EM",
            MappingMethod::LorentzianConstrained => "LC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationMode {
    None,
    BruteForce,
}

pub const DEFAULT_ROTATIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RotationPolicy {
    pub mode: RotationMode,
    /// Number of uniformly spaced rotations searched.
    #[serde(alias = "Z")]
    pub rotations: usize,
}

impl RotationPolicy {
    pub fn none() -> Self {
        Self {
            mode: RotationMode::None,
            rotations: 1,
        }
    }

    pub fn brute_force(rotations: usize) -> Self {
        Self {
            mode: RotationMode::BruteForce,
            rotations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotations == 0 {
            return Err(invalid("at least one phase rotation is required"));
        }
        Ok(())
    }

    /// `{2πz/Z : z = 0..Z−1}`, or `{0}` without rotation.
    pub fn candidates(&self) -> Vec<f64> {
        match self.mode {
            RotationMode::None => vec![0.0],
            RotationMode::BruteForce => rotation_set(self.rotations),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self.mode {
            RotationMode::None => "NR",
            RotationMode::BruteForce => "BF",
        }
    }
}

pub fn rotation_set(z: usize) -> Vec<f64> {
    (0..z).map(|i| TAU * i as f64 / z as f64).collect()
}

/// `2w̃ + j = 0`: every circle point is equally close.
pub fn is_euclidean_degenerate(w_tilde: Complex64) -> bool {
    w_tilde * 2.0 + J == Complex64::new(0.0, 0.0)
}

/// Closest Lorentzian weight to `w_tilde`:
/// `−(j + e^{j(∠(2w̃+j) − π)})/2`. The degenerate centre point maps to the
/// peak weight.
pub fn euclidean_map(w_tilde: Complex64) -> LorentzianWeight {
    if is_euclidean_degenerate(w_tilde) {
        return LorentzianWeight::peak();
    }
    LorentzianWeight::from_phase((w_tilde * 2.0 + J).arg() - PI)
}

/// `−(j − e^{j∠w̃})/2`.
pub fn lorentzian_map(w_tilde: Complex64) -> Result<LorentzianWeight> {
    if w_tilde == Complex64::new(0.0, 0.0) {
        return Err(Error::ZeroWeight);
    }
    // −(j − e^{jθ}) = −(j + e^{j(θ+π)})
    Ok(LorentzianWeight::from_phase(w_tilde.arg() + PI))
}

fn rotation_factor(zeta: f64) -> Complex64 {
    Complex64::from_polar(1.0, zeta.rem_euclid(TAU))
}

/// Magnitude and phase of the rotated Lorentzian-constrained weight,
/// `sqrt((1 − sin θ)/2)` and `atan2(sin θ − 1, cos θ)` with `θ = ∠(w̃e^{jζ})`.
pub fn magnitude_phase_of_rotated(w_tilde: Complex64, zeta: f64) -> Result<(f64, f64)> {
    if w_tilde == Complex64::new(0.0, 0.0) {
        return Err(Error::ZeroWeight);
    }
    let theta = (w_tilde * rotation_factor(zeta)).arg();
    let (s, c) = theta.sin_cos();
    let magnitude = ((1.0 - s) / 2.0).max(0.0).sqrt();
    Ok((magnitude, (s - 1.0).atan2(c)))
}

/// Mapping method plus optional hardware quantization.
#[derive(Debug, Clone)]
pub struct Mapper {
    pub method: MappingMethod,
    pub table: Option<TuningTable>,
}

impl Mapper {
    pub fn new(method: MappingMethod) -> Self {
        Self { method, table: None }
    }

    pub fn with_table(method: MappingMethod, table: TuningTable) -> Self {
        Self {
            method,
            table: Some(table),
        }
    }

    fn map_one(&self, w_tilde: Complex64) -> Result<LorentzianWeight> {
        let q = if w_tilde == Complex64::new(0.0, 0.0) {
            LorentzianWeight::zero()
        } else {
            match self.method {
                MappingMethod::Euclidean => euclidean_map(w_tilde),
                MappingMethod::LorentzianConstrained => lorentzian_map(w_tilde)?,
            }
        };
        match &self.table {
            Some(t) => quantize_to_available(&q, t),
            None => Ok(q),
        }
    }

    /// Compensate the guide phase, rotate by `zeta`, map each element.
    pub fn map(&self, f_ps: &Beamformer, m: &GuideField, zeta: f64) -> Result<Beamformer> {
        let rot = rotation_factor(zeta);
        let mapped = effective_desired_weights(f_ps, m)?
            .into_iter()
            .map(|w| self.map_one(w * rot))
            .collect::<Result<Vec<_>>>()?;
        Ok(Beamformer::from_lorentzian(&mapped))
    }
}

/// Unquantized mapping of a desired beamformer at rotation `zeta`.
pub fn rotate_and_map(
    f_ps: &Beamformer,
    m: &GuideField,
    zeta: f64,
    method: MappingMethod,
) -> Result<Beamformer> {
    Mapper::new(method).map(f_ps, m, zeta)
}

/// Realized gain of a beamformer in one direction.
pub trait GainOracle: Sync {
    /// Gain in dBi towards azimuth `phi_deg`.
    fn gain_dbi(&self, f: &Beamformer, phi_deg: f64) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct RotationSearch {
    pub zeta: f64,
    pub beamformer: Beamformer,
    pub gain_dbi: f64,
    /// Gain of every candidate, in candidate order.
    pub gains_dbi: Vec<f64>,
}

/// Evaluate every rotation in `{2πz/Z}` and keep the one with the highest
/// gain towards `phi0_deg`; ties go to the smallest rotation.
pub fn brute_force_rotation(
    f_ps: &Beamformer,
    m: &GuideField,
    mapper: &Mapper,
    rotations: usize,
    phi0_deg: f64,
    oracle: &dyn GainOracle,
) -> Result<RotationSearch> {
    if rotations == 0 {
        return Err(invalid("at least one phase rotation is required"));
    }
    let candidates = rotation_set(rotations);
    let evaluated = candidates
        .par_iter()
        .map(|&zeta| {
            let bf = mapper.map(f_ps, m, zeta)?;
            let g = oracle.gain_dbi(&bf, phi0_deg)?;
            Ok((zeta, bf, g))
        })
        .collect::<Result<Vec<_>>>()?;

    let gains_dbi: Vec<f64> = evaluated.iter().map(|e| e.2).collect();
    let mut best = 0;
    for (i, g) in gains_dbi.iter().enumerate() {
        if g.is_nan() {
            return Err(Error::Oracle(format!("gain at rotation {} is NaN", candidates[i])));
        }
        if *g > gains_dbi[best] {
            best = i;
        }
    }
    let (zeta, beamformer, gain_dbi) = evaluated.into_iter().nth(best).expect("index in range");
    Ok(RotationSearch {
        zeta,
        beamformer,
        gain_dbi,
        gains_dbi,
    })
}
