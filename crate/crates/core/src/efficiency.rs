//! Transmitter power model, limited-feedback codeword selection, spectral
//! and energy efficiency.
//!
//! Loss chain: `P_T = P_IN / (L_D · L_PS)`, with no phase-shifter term for
//! the metasurface. Consumption:
//! `P = P_LO + P_T/η + 2 P_DAC + P_RF + N_T · P_elem`, where `P_elem` is the
//! phase-shifter draw for a phased array and the varactor draw for a
//! metasurface.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{element_positions, feed_field, ArrayConfig, ArrayKind};
use crate::codebook::CodebookLayer;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Dma,
    PhasedActive,
    PhasedPassive,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Dma => "dma",
            Architecture::PhasedActive => "phased_active",
            Architecture::PhasedPassive => "phased_passive",
        }
    }

    pub fn array_kind(self) -> ArrayKind {
        match self {
            Architecture::Dma => ArrayKind::Dma,
            _ => ArrayKind::Phased,
        }
    }
}

/// Component draws in mW, losses in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    pub eta_pa: f64,
    pub p_ps_active_mw: f64,
    pub p_ps_passive_mw: f64,
    pub p_dac_mw: f64,
    pub p_lo_mw: f64,
    pub p_rf_mw: f64,
    pub p_var_mw: f64,
    /// Negative: active shifters amplify.
    pub l_ps_active_db: f64,
    pub l_ps_passive_db: f64,
    /// Loss per two-way divider stage.
    pub l_d_bar_db: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            eta_pa: 0.27,
            p_ps_active_mw: 21.6,
            p_ps_passive_mw: 0.0,
            p_dac_mw: 75.8,
            p_lo_mw: 22.5,
            p_rf_mw: 31.6,
            p_var_mw: 0.0,
            l_ps_active_db: -2.3,
            l_ps_passive_db: 8.8,
            l_d_bar_db: 0.6,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_pa > 0.0 && self.eta_pa <= 1.0) {
            return Err(invalid("amplifier efficiency must lie in (0, 1]"));
        }
        let draws = [
            self.p_ps_active_mw,
            self.p_ps_passive_mw,
            self.p_dac_mw,
            self.p_lo_mw,
            self.p_rf_mw,
            self.p_var_mw,
        ];
        if draws.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(invalid("component powers must be finite and non-negative"));
        }
        if ![self.l_ps_active_db, self.l_ps_passive_db, self.l_d_bar_db].iter().all(|l| l.is_finite()) {
            return Err(invalid("losses must be finite"));
        }
        Ok(())
    }

    /// Phase-shifter loss in dB; zero for the metasurface.
    pub fn phase_shifter_loss_db(&self, arch: Architecture) -> f64 {
        match arch {
            Architecture::Dma => 0.0,
            Architecture::PhasedActive => self.l_ps_active_db,
            Architecture::PhasedPassive => self.l_ps_passive_db,
        }
    }

    /// Per-element tuning draw in W.
    pub fn element_power_w(&self, arch: Architecture) -> f64 {
        1e-3 * match arch {
            Architecture::Dma => self.p_var_mw,
            Architecture::PhasedActive => self.p_ps_active_mw,
            Architecture::PhasedPassive => self.p_ps_passive_mw,
        }
    }

    /// `P_LO + 2 P_DAC + P_RF` in W.
    pub fn fixed_power_w(&self) -> f64 {
        1e-3 * (self.p_lo_mw + 2.0 * self.p_dac_mw + self.p_rf_mw)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * db_to_linear(dbm)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}

/// `L̄_D · ⌈log₂ N_A⌉` dB.
pub fn divider_loss(n_a: usize, l_d_bar_db: f64) -> Result<f64> {
    if n_a == 0 {
        return Err(invalid("a divider needs at least one output"));
    }
    let stages = usize::BITS - (n_a - 1).leading_zeros();
    Ok(l_d_bar_db * stages as f64)
}

/// Radiated transmit power for input power `p_in_w`.
pub fn transmit_power(p_in_w: f64, arch: Architecture, pm: &PowerModel, n_a: usize) -> Result<f64> {
    if !(p_in_w > 0.0) {
        return Err(invalid("input power must be positive"));
    }
    let loss_db = divider_loss(n_a, pm.l_d_bar_db)? + pm.phase_shifter_loss_db(arch);
    Ok(p_in_w / db_to_linear(loss_db))
}

/// Total consumed power in W.
pub fn total_power(arch: Architecture, pm: &PowerModel, p_t_w: f64, n_t: usize) -> Result<f64> {
    if !(p_t_w >= 0.0) {
        return Err(invalid("transmit power must be non-negative"));
    }
    Ok(pm.fixed_power_w() + p_t_w / pm.eta_pa + n_t as f64 * pm.element_power_w(arch))
}

/// Bits/s/Hz per W.
pub fn energy_efficiency(se: f64, p_w: f64) -> Result<f64> {
    if !(p_w > 0.0) {
        return Err(invalid("power must be positive"));
    }
    Ok(se / p_w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub noise_density_dbm_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            noise_density_dbm_hz: -174.0,
            bandwidth_hz: 20e6,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !self.noise_density_dbm_hz.is_finite() {
            return Err(invalid("link needs positive bandwidth and finite noise density"));
        }
        Ok(())
    }

    pub fn noise_density_w_hz(&self) -> f64 {
        dbm_to_w(self.noise_density_dbm_hz)
    }

    /// `ρ = P_T / (B N₀)`.
    pub fn snr(&self, p_t_w: f64) -> f64 {
        p_t_w / (self.bandwidth_hz * self.noise_density_w_hz())
    }
}

/// Element and divider counts of one transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmitter {
    pub architecture: Architecture,
    /// Radiating elements.
    pub n_t: usize,
    /// Divider outputs: one per guide for a metasurface, one per element
    /// for a phased array.
    pub n_a: usize,
}

impl Transmitter {
    pub fn new(architecture: Architecture, array: &ArrayConfig) -> Result<Self> {
        if architecture.array_kind() != array.kind {
            return Err(invalid(format!("{} needs a {:?} array", architecture.name(), architecture.array_kind())));
        }
        let n_t = array.num_elements();
        let n_a = match architecture {
            Architecture::Dma => array.waveguides,
            _ => n_t,
        };
        Ok(Self {
            architecture,
            n_t,
            n_a,
        })
    }

    pub fn transmit_power(&self, p_in_w: f64, pm: &PowerModel) -> Result<f64> {
        transmit_power(p_in_w, self.architecture, pm, self.n_a)
    }

    pub fn total_power(&self, p_t_w: f64, pm: &PowerModel) -> Result<f64> {
        total_power(self.architecture, pm, p_t_w, self.n_t)
    }
}

/// `|h[k]^H f|²` for every subcarrier.
pub fn beamformed_gains(h_eff: &[Vec<Complex64>], f: &[Complex64]) -> Vec<f64> {
    h_eff
        .iter()
        .map(|hk| {
            debug_assert_eq!(hk.len(), f.len());
            hk.iter().zip(f).map(|(h, w)| h.conj() * w).sum::<Complex64>().norm_sqr()
        })
        .collect()
}

/// `(1/K) Σ_k log₂(1 + ρ g_k)`.
pub fn spectral_efficiency_from_gains(gains: &[f64], rho: f64) -> f64 {
    if gains.is_empty() {
        return 0.0;
    }
    gains.iter().map(|g| (rho * g).ln_1p()).sum::<f64>() / std::f64::consts::LN_2 / gains.len() as f64
}

pub fn spectral_efficiency(h_eff: &[Vec<Complex64>], f: &[Complex64], rho: f64) -> Result<f64> {
    if !(rho >= 0.0) {
        return Err(invalid("SNR must be non-negative"));
    }
    if h_eff.iter().any(|hk| hk.len() != f.len()) {
        return Err(crate::error::Error::LengthMismatch {
            expected: f.len(),
            found: h_eff.iter().map(Vec::len).find(|&l| l != f.len()).unwrap_or(0),
        });
    }
    Ok(spectral_efficiency_from_gains(&beamformed_gains(h_eff, f), rho))
}

/// Index and spectral efficiency of the best codeword; ties go to the
/// smallest index.
pub fn select_from_gains(per_codeword: &[Vec<f64>], rho: f64) -> Result<(usize, f64)> {
    if per_codeword.is_empty() {
        return Err(invalid("codeword set is empty"));
    }
    let mut best = (0, spectral_efficiency_from_gains(&per_codeword[0], rho));
    for (i, g) in per_codeword.iter().enumerate().skip(1) {
        let se = spectral_efficiency_from_gains(g, rho);
        if se > best.1 {
            best = (i, se);
        }
    }
    Ok(best)
}

/// Power radiated by excitations `a` of isotropic point sources, relative
/// to the same total power spread over uncoupled elements:
/// `a^H R a` with `R_ij = sin(k r_ij)/(k r_ij)`.
pub fn radiated_power(array: &ArrayConfig, a: &[Complex64]) -> f64 {
    let pos = element_positions(array);
    let k = array.wavenumber();
    let mut p = 0.0;
    for (i, (ai, ri)) in a.iter().zip(&pos).enumerate() {
        p += ai.norm_sqr();
        for (aj, rj) in a.iter().zip(&pos).skip(i + 1) {
            let kr = k * (ri.0 - rj.0).hypot(ri.1 - rj.1);
            p += 2.0 * (ai * aj.conj()).re * kr.sin() / kr;
        }
    }
    p
}

/// Link weights of every codeword in `layer`, scaled to unit radiated
/// power so that closely spaced elements share one aperture's worth of
/// gain.
pub fn codeword_weights(layer: &CodebookLayer, array: &ArrayConfig) -> Result<Vec<Vec<Complex64>>> {
    let m = feed_field(array);
    layer
        .mapped()
        .map(|f| {
            if f.len() != m.len() {
                return Err(crate::error::Error::LengthMismatch {
                    expected: m.len(),
                    found: f.len(),
                });
            }
            let a: Vec<Complex64> = f.weights().iter().zip(m.values()).map(|(w, mi)| w * mi).collect();
            let p = radiated_power(array, &a);
            if !(p > 0.0) {
                return Err(crate::error::Error::Oracle("codeword radiates no power".into()));
            }
            let s = 1.0 / p.sqrt();
            Ok(f.weights().iter().map(|w| w * s).collect())
        })
        .collect()
}

pub fn select_codeword(h_eff: &[Vec<Complex64>], weights: &[Vec<Complex64>], rho: f64) -> Result<(usize, f64)> {
    if !(rho >= 0.0) {
        return Err(invalid("SNR must be non-negative"));
    }
    let gains: Vec<Vec<f64>> = weights
        .iter()
        .map(|f| {
            if h_eff.iter().any(|hk| hk.len() != f.len()) {
                return Err(crate::error::Error::LengthMismatch {
                    expected: f.len(),
                    found: h_eff.first().map_or(0, Vec::len),
                });
            }
            Ok(beamformed_gains(h_eff, f))
        })
        .collect::<Result<_>>()?;
    select_from_gains(&gains, rho)
}
