//! Array geometry, the waveguide feed field and the effective-weight /
//! effective-channel transforms.
//!
//! All per-element vectors share one flattening: guide-major, index
//! `d * L + l` for guide `d` and element `l` along it.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::element::{circle_deviation, LorentzianWeight};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    Dma,
    Phased,
}

/// Default guide wavelength of the hollow feed, m.
pub const DEFAULT_GUIDE_WAVELENGTH: f64 = 0.028;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    /// Number of waveguides (rows), D.
    #[serde(alias = "D")]
    pub waveguides: usize,
    /// Elements along each guide, L.
    #[serde(alias = "L")]
    pub elements_per_guide: usize,
    /// Element spacing along a guide, m.
    pub dx: f64,
    /// Spacing between guides, m.
    pub dy: f64,
    pub wavelength: f64,
    pub carrier_hz: f64,
    /// Guide propagation constant, rad/m.
    pub beta: f64,
    /// Guide attenuation, Np/m.
    #[serde(default)]
    pub guide_attenuation: f64,
    /// Exponent `p` of the `cos^p` element pattern.
    #[serde(default = "default_pattern_exponent")]
    pub element_pattern_exponent: f64,
    pub kind: ArrayKind,
}

fn default_pattern_exponent() -> f64 {
    1.0
}

impl ArrayConfig {
    /// The 5 x 8 metasurface of the reference design: 5 mm / 10 mm pitch at
    /// 15 GHz.
    pub fn reference_dma() -> Self {
        Self {
            waveguides: 5,
            elements_per_guide: 8,
            dx: 0.005,
            dy: 0.010,
            wavelength: 0.020,
            carrier_hz: 15e9,
            beta: TAU / DEFAULT_GUIDE_WAVELENGTH,
            guide_attenuation: 0.0,
            element_pattern_exponent: 1.0,
            kind: ArrayKind::Dma,
        }
    }

    /// Half-wavelength 5 x 4 patch array covering the same aperture.
    pub fn reference_phased() -> Self {
        Self {
            waveguides: 5,
            elements_per_guide: 4,
            dx: 0.010,
            dy: 0.010,
            kind: ArrayKind::Phased,
            ..Self::reference_dma()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.waveguides == 0 || self.elements_per_guide == 0 {
            return Err(invalid("array needs at least one guide and one element per guide"));
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.dx) && pos(self.dy) && pos(self.wavelength) && pos(self.carrier_hz)) {
            return Err(invalid("dx, dy, wavelength and carrier must be positive"));
        }
        if !self.element_pattern_exponent.is_finite() || self.element_pattern_exponent < 0.0 {
            return Err(invalid("element pattern exponent must be non-negative"));
        }
        if self.kind == ArrayKind::Dma {
            if !pos(self.beta) {
                return Err(invalid("guide propagation constant must be positive"));
            }
            if !self.guide_attenuation.is_finite() || self.guide_attenuation < 0.0 {
                return Err(invalid("guide attenuation must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn num_elements(&self) -> usize {
        self.waveguides * self.elements_per_guide
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    pub fn index(&self, guide: usize, element: usize) -> usize {
        guide * self.elements_per_guide + element
    }
}

/// `(x, y)` of every element, guide-major: `x = l·dx`, `y = d·dy`.
pub fn element_positions(cfg: &ArrayConfig) -> Vec<(f64, f64)> {
    (0..cfg.waveguides)
        .flat_map(|d| (0..cfg.elements_per_guide).map(move |l| (l as f64 * cfg.dx, d as f64 * cfg.dy)))
        .collect()
}

/// Feed field sampled at every element.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideField {
    values: Vec<Complex64>,
}

impl GuideField {
    pub fn from_values(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    /// Unit field, as seen by an array without a feeding guide.
    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![Complex64::new(1.0, 0.0); n],
        }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn conjugate(&self) -> Self {
        Self {
            values: self.values.iter().map(|m| m.conj()).collect(),
        }
    }
}

/// `m = e^{−(α_g + jβ)x}` at each element; frequency-flat.
pub fn guide_field(cfg: &ArrayConfig) -> Result<GuideField> {
    if cfg.kind != ArrayKind::Dma {
        return Err(invalid("a guide field exists only for metasurface arrays"));
    }
    let gamma = Complex64::new(cfg.guide_attenuation, cfg.beta);
    let values = element_positions(cfg)
        .into_iter()
        .map(|(x, _)| (-gamma * x).exp())
        .collect();
    Ok(GuideField { values })
}

/// Field the radiated weights are multiplied by: the guide field for a
/// metasurface, unity for a phased array.
pub fn feed_field(cfg: &ArrayConfig) -> GuideField {
    match cfg.kind {
        ArrayKind::Dma => guide_field(cfg).expect("metasurface kind checked"),
        ArrayKind::Phased => GuideField::uniform(cfg.num_elements()),
    }
}

fn hadamard(a: &[Complex64], b: &[Complex64]) -> Result<Vec<Complex64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: b.len(),
            found: a.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).collect())
}

/// `h ⊙ m`.
pub fn effective_channel(h: &[Complex64], m: &GuideField) -> Result<Vec<Complex64>> {
    hadamard(h, &m.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDomain {
    /// Unit-modulus phase-shifter weights, zero for switched-off elements.
    Desired,
    /// Weights on the Lorentzian circle.
    Lorentzian,
}

impl WeightDomain {
    fn name(self) -> &'static str {
        match self {
            WeightDomain::Desired => "desired",
            WeightDomain::Lorentzian => "lorentzian",
        }
    }
}

pub const BEAMFORMER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Beamformer {
    weights: Vec<Complex64>,
    domain: WeightDomain,
}

impl Beamformer {
    /// Unit-modulus (or zero) weights.
    pub fn desired(weights: Vec<Complex64>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| {
            let n = w.norm();
            !(n <= BEAMFORMER_TOLERANCE || (n - 1.0).abs() <= BEAMFORMER_TOLERANCE)
        }) {
            return Err(invalid(format!("desired weight {i} has modulus {}", w.norm())));
        }
        Ok(Self {
            weights,
            domain: WeightDomain::Desired,
        })
    }

    pub fn lorentzian(weights: Vec<Complex64>) -> Result<Self> {
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| circle_deviation(**w).abs() > BEAMFORMER_TOLERANCE)
        {
            return Err(invalid(format!("weight {i} = {w} is off the Lorentzian circle")));
        }
        Ok(Self {
            weights,
            domain: WeightDomain::Lorentzian,
        })
    }

    pub fn from_lorentzian(weights: &[LorentzianWeight]) -> Self {
        Self {
            weights: weights.iter().map(|w| w.value()).collect(),
            domain: WeightDomain::Lorentzian,
        }
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn domain(&self) -> WeightDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_weights(self) -> Vec<Complex64> {
        self.weights
    }

    pub fn power(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_sqr()).sum()
    }

    /// Weights scaled to unit total power; an all-zero beamformer is
    /// returned unchanged.
    pub fn unit_power_weights(&self) -> Vec<Complex64> {
        let p = self.power();
        if p == 0.0 {
            return self.weights.clone();
        }
        let s = 1.0 / p.sqrt();
        self.weights.iter().map(|w| w * s).collect()
    }

    pub(crate) fn require(&self, domain: WeightDomain) -> Result<()> {
        if self.domain != domain {
            return Err(Error::DomainMismatch {
                expected: domain.name(),
                found: self.domain.name(),
            });
        }
        Ok(())
    }
}

/// `w̃ = w ⊙ m*`, the weights that undo the guide phase advance. Zero
/// weights stay exactly zero.
pub fn effective_desired_weights(f_ps: &Beamformer, m: &GuideField) -> Result<Vec<Complex64>> {
    f_ps.require(WeightDomain::Desired)?;
    if f_ps.len() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            found: f_ps.len(),
        });
    }
    Ok(f_ps
        .weights
        .iter()
        .zip(&m.values)
        .map(|(w, mi)| if *w == Complex64::new(0.0, 0.0) { *w } else { w * mi.conj() })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg(d: usize, l: usize) -> ArrayConfig {
        ArrayConfig {
            waveguides: d,
            elements_per_guide: l,
            ..ArrayConfig::reference_dma()
        }
    }

    #[test]
    fn positions() {
        assert_eq!(element_positions(&cfg(1, 2)), vec![(0.0, 0.0), (0.005, 0.0)]);
        let p = element_positions(&cfg(5, 8));
        assert_eq!(p.len(), 40);
        let max_x = p.iter().map(|q| q.0).fold(0.0, f64::max);
        let max_y = p.iter().map(|q| q.1).fold(0.0, f64::max);
        assert!((max_x - 0.035).abs() < 1e-15);
        assert!((max_y - 0.04).abs() < 1e-15);
        assert_eq!(element_positions(&cfg(2, 1)), vec![(0.0, 0.0), (0.0, 0.01)]);
        for guide in p.chunks(8) {
            assert!(guide.windows(2).all(|w| w[1].0 > w[0].0));
        }
    }

    #[test]
    fn guide_field_values() {
        let mut a = cfg(1, 2);
        a.dx = 0.007;
        a.beta = TAU / 0.028;
        let m = guide_field(&a).unwrap();
        assert_eq!(m.values()[0], c(1.0, 0.0));
        assert!((m.values()[1] - c(0.0, -1.0)).norm() < 1e-15);

        a.beta = PI / a.dx;
        let m = guide_field(&a).unwrap();
        assert!((m.values()[1] - c(-1.0, 0.0)).norm() < 1e-15);

        for v in guide_field(&cfg(5, 8)).unwrap().values() {
            assert!((v.norm() - 1.0).abs() < 1e-15);
        }
        assert!(guide_field(&ArrayConfig::reference_phased()).is_err());
    }

    #[test]
    fn attenuation_decays() {
        let mut a = cfg(1, 8);
        a.guide_attenuation = 2.0;
        let m = guide_field(&a).unwrap();
        assert!((m.values()[7].norm() - (-2.0 * 0.035f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn effective_channel_identities() {
        let a = cfg(2, 4);
        let m = guide_field(&a).unwrap();
        let h: Vec<_> = (0..8).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        assert_eq!(effective_channel(&h, &GuideField::uniform(8)).unwrap(), h);
        assert_eq!(effective_channel(&[c(1.0, 0.0); 8], &m).unwrap(), m.values());
        for (he, hi) in effective_channel(&h, &m).unwrap().iter().zip(&h) {
            assert!((he.norm() - hi.norm()).abs() < 1e-12);
        }
        assert!(effective_channel(&h[..3], &m).is_err());
    }

    #[test]
    fn effective_weights() {
        let a = cfg(1, 4);
        let m = guide_field(&a).unwrap();
        let w = Beamformer::desired(vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, 0.0), c(-1.0, 0.0)]).unwrap();
        assert_eq!(effective_desired_weights(&w, &GuideField::uniform(4)).unwrap(), w.weights());

        let aligned = Beamformer::desired(m.values().to_vec()).unwrap();
        for v in effective_desired_weights(&aligned, &m).unwrap() {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }
        let eff = effective_desired_weights(&w, &m).unwrap();
        assert_eq!(eff[2], c(0.0, 0.0));
        // conjugate cancellation
        for ((e, mi), wi) in eff.iter().zip(m.values()).zip(w.weights()) {
            assert!((e * mi - wi).norm() < 1e-15);
        }
        let lor = Beamformer::from_lorentzian(&[LorentzianWeight::peak(); 4]);
        assert!(matches!(
            effective_desired_weights(&lor, &m),
            Err(Error::DomainMismatch { .. })
        ));
    }

    #[test]
    fn beamformer_domains() {
        assert!(Beamformer::desired(vec![c(0.5, 0.0)]).is_err());
        assert!(Beamformer::desired(vec![c(0.0, 0.0), c(0.6, 0.8)]).is_ok());
        assert!(Beamformer::lorentzian(vec![c(0.0, -1.0), c(0.0, 0.0)]).is_ok());
        assert!(Beamformer::lorentzian(vec![c(1.0, 0.0)]).is_err());
    }
}
