//! Analytic azimuth-cut far-field model and the pattern analyses built on
//! it: half-power beamwidth, steering error and coverage percentiles.
//!
//! The field towards azimuth `φ` (elevation zero) is
//! `E(φ) = g(φ) Σ f_i m_i e^{−j k x_i sin φ}`, where `m` is the guide field
//! (unity for a phased array) and `g² = cos^{2p} φ` rescaled to unit mean
//! over the cut. Gain is `|E|² / Σ|f_i m_i|²`, i.e. relative to an
//! isotropic radiator fed with the same total element power. Guide
//! offsets along `y` add no path difference on this cut.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::array::{element_positions, feed_field, ArrayConfig, Beamformer, GuideField};
use crate::codebook::CodebookLayer;
use crate::error::{invalid, Error, Result};
use crate::mapping::GainOracle;

/// Gain floor, dBi.
pub const GAIN_FLOOR_DBI: f64 = -60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    pub start_deg: f64,
    pub stop_deg: f64,
    pub step_deg: f64,
}

impl Default for AngleGrid {
    fn default() -> Self {
        Self {
            start_deg: -90.0,
            stop_deg: 90.0,
            step_deg: 0.5,
        }
    }
}

impl AngleGrid {
    pub fn new(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Self> {
        let g = Self {
            start_deg,
            stop_deg,
            step_deg,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_deg > 0.0 && self.stop_deg > self.start_deg) {
            return Err(invalid("angle grid needs stop > start and a positive step"));
        }
        if self.start_deg < -90.0 || self.stop_deg > 90.0 {
            return Err(invalid("angle grid must lie within [-90, 90] degrees"));
        }
        Ok(())
    }

    pub fn angles(&self) -> Vec<f64> {
        let n = ((self.stop_deg - self.start_deg) / self.step_deg + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start_deg + i as f64 * self.step_deg).collect()
    }
}

/// Mean of `cos^{2p} φ` over `φ ∈ [−π/2, π/2]` by composite Simpson.
fn element_mean_power(p: f64) -> f64 {
    if p == 0.0 {
        return 1.0;
    }
    let n = 4096;
    let h = std::f64::consts::PI / n as f64;
    let f = |i: usize| (-FRAC_PI_2 + i as f64 * h).cos().abs().powf(2.0 * p);
    let mut s = f(0) + f(n);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
    }
    s * h / 3.0 / std::f64::consts::PI
}

/// Far-field evaluator for one array.
#[derive(Debug, Clone)]
pub struct FarField {
    xs: Vec<f64>,
    feed: GuideField,
    k: f64,
    pattern_exponent: f64,
    element_norm: f64,
}

impl FarField {
    pub fn new(cfg: &ArrayConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            xs: element_positions(cfg).into_iter().map(|(x, _)| x).collect(),
            feed: feed_field(cfg),
            k: cfg.wavenumber(),
            pattern_exponent: cfg.element_pattern_exponent,
            element_norm: element_mean_power(cfg.element_pattern_exponent),
        })
    }

    fn check(&self, f: &Beamformer) -> Result<()> {
        if f.len() != self.xs.len() {
            return Err(Error::LengthMismatch {
                expected: self.xs.len(),
                found: f.len(),
            });
        }
        Ok(())
    }

    /// Normalized element power pattern `g²(φ)`.
    pub fn element_power(&self, phi_deg: f64) -> f64 {
        if self.pattern_exponent == 0.0 {
            return 1.0;
        }
        phi_deg.to_radians().cos().abs().powf(2.0 * self.pattern_exponent) / self.element_norm
    }

    /// Array sum `Σ f_i m_i e^{−j k x_i sin φ}` without the element pattern.
    pub fn array_sum(&self, f: &Beamformer, phi_deg: f64) -> Result<Complex64> {
        self.check(f)?;
        let u = phi_deg.to_radians().sin();
        Ok(f.weights()
            .iter()
            .zip(self.feed.values())
            .zip(&self.xs)
            .map(|((w, m), x)| w * m * Complex64::from_polar(1.0, -self.k * x * u))
            .sum())
    }

    fn excitation_power(&self, f: &Beamformer) -> f64 {
        f.weights()
            .iter()
            .zip(self.feed.values())
            .map(|(w, m)| (w * m).norm_sqr())
            .sum()
    }

    /// Linear power gain towards `phi_deg`.
    pub fn gain_linear(&self, f: &Beamformer, phi_deg: f64) -> Result<f64> {
        let p = self.excitation_power(f);
        if p == 0.0 {
            return Ok(0.0);
        }
        Ok(self.array_sum(f, phi_deg)?.norm_sqr() * self.element_power(phi_deg) / p)
    }

    pub fn gain_dbi(&self, f: &Beamformer, phi_deg: f64) -> Result<f64> {
        Ok(to_dbi(self.gain_linear(f, phi_deg)?))
    }

    pub fn pattern(&self, f: &Beamformer, grid: &AngleGrid) -> Result<BeamPattern> {
        self.check(f)?;
        let angles = grid.angles();
        let gain = angles
            .iter()
            .map(|&a| self.gain_dbi(f, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(BeamPattern::new(angles, gain))
    }
}

impl GainOracle for FarField {
    fn gain_dbi(&self, f: &Beamformer, phi_deg: f64) -> Result<f64> {
        FarField::gain_dbi(self, f, phi_deg)
    }
}

fn to_dbi(g: f64) -> f64 {
    if g > 0.0 {
        (10.0 * g.log10()).max(GAIN_FLOOR_DBI)
    } else {
        GAIN_FLOOR_DBI
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamPattern {
    pub angles_deg: Vec<f64>,
    pub gain_dbi: Vec<f64>,
    pub peak_gain_dbi: f64,
    pub peak_angle_deg: f64,
    peak_index: usize,
}

impl BeamPattern {
    /// Peak ties resolve to the smallest angle.
    pub fn new(angles_deg: Vec<f64>, gain_dbi: Vec<f64>) -> Self {
        assert_eq!(angles_deg.len(), gain_dbi.len());
        assert!(!angles_deg.is_empty());
        let mut peak_index = 0;
        for (i, g) in gain_dbi.iter().enumerate() {
            if *g > gain_dbi[peak_index] {
                peak_index = i;
            }
        }
        Self {
            peak_gain_dbi: gain_dbi[peak_index],
            peak_angle_deg: angles_deg[peak_index],
            angles_deg,
            gain_dbi,
            peak_index,
        }
    }

    pub fn peak_index(&self) -> usize {
        self.peak_index
    }

    /// Linearly interpolated gain at `phi_deg`, clamped to the grid ends.
    pub fn gain_at(&self, phi_deg: f64) -> f64 {
        let a = &self.angles_deg;
        if phi_deg <= a[0] {
            return self.gain_dbi[0];
        }
        if phi_deg >= a[a.len() - 1] {
            return self.gain_dbi[a.len() - 1];
        }
        let i = a.partition_point(|&x| x <= phi_deg) - 1;
        let t = (phi_deg - a[i]) / (a[i + 1] - a[i]);
        self.gain_dbi[i] + t * (self.gain_dbi[i + 1] - self.gain_dbi[i])
    }
}

/// Far-field pattern of `f` on `grid`.
pub fn far_field_gain(f: &Beamformer, cfg: &ArrayConfig, grid: &AngleGrid) -> Result<BeamPattern> {
    FarField::new(cfg)?.pattern(f, grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beamwidth {
    pub width_deg: f64,
    pub lower_deg: f64,
    pub upper_deg: f64,
    /// The −3 dB region reached the end of the grid.
    pub truncated: bool,
    /// Another lobe reaches the peak level outside the main lobe.
    pub ambiguous: bool,
}

/// Contiguous −3 dB region around the global peak, edges interpolated
/// linearly between samples.
pub fn half_power_beamwidth(p: &BeamPattern) -> Beamwidth {
    let level = p.peak_gain_dbi - 3.0;
    let (a, g) = (&p.angles_deg, &p.gain_dbi);
    let n = a.len();
    let crossing = |inside: usize, outside: usize| {
        let t = (g[inside] - level) / (g[inside] - g[outside]);
        a[inside] + t * (a[outside] - a[inside])
    };

    let mut lo = p.peak_index;
    while lo > 0 && g[lo - 1] >= level {
        lo -= 1;
    }
    let mut hi = p.peak_index;
    while hi + 1 < n && g[hi + 1] >= level {
        hi += 1;
    }
    let mut truncated = false;
    let lower_deg = if lo == 0 {
        truncated = true;
        a[0]
    } else {
        crossing(lo, lo - 1)
    };
    let upper_deg = if hi == n - 1 {
        truncated = true;
        a[n - 1]
    } else {
        crossing(hi, hi + 1)
    };
    let ambiguous = g
        .iter()
        .enumerate()
        .any(|(i, &v)| (i < lo || i > hi) && v >= p.peak_gain_dbi - 1e-9);
    Beamwidth {
        width_deg: upper_deg - lower_deg,
        lower_deg,
        upper_deg,
        truncated,
        ambiguous,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SteeringRow {
    pub codeword: usize,
    pub desired_deg: f64,
    pub achieved_deg: f64,
    pub error_deg: f64,
}

/// Achieved pattern peak of every codeword against its target direction.
pub fn steering_report(layer: &CodebookLayer, cfg: &ArrayConfig, grid: &AngleGrid) -> Result<Vec<SteeringRow>> {
    let ff = FarField::new(cfg)?;
    layer
        .codewords
        .iter()
        .map(|cw| {
            let p = ff.pattern(&cw.mapped, grid)?;
            Ok(SteeringRow {
                codeword: cw.index,
                desired_deg: cw.steering_deg,
                achieved_deg: p.peak_angle_deg,
                error_deg: p.peak_angle_deg - cw.steering_deg,
            })
        })
        .collect()
}

/// Best-codeword gain per grid angle.
pub fn codebook_gain(layer: &CodebookLayer, cfg: &ArrayConfig, grid: &AngleGrid) -> Result<Vec<f64>> {
    if layer.is_empty() {
        return Err(invalid("codebook layer is empty"));
    }
    let ff = FarField::new(cfg)?;
    let patterns = layer
        .codewords
        .iter()
        .map(|cw| ff.pattern(&cw.mapped, grid))
        .collect::<Result<Vec<_>>>()?;
    let n = patterns[0].gain_dbi.len();
    Ok((0..n)
        .map(|i| {
            patterns
                .iter()
                .map(|p| p.gain_dbi[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// `1 − CDF` of the per-angle best-codeword gain.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCurve {
    /// Per-angle gains sorted ascending.
    sorted_gain_dbi: Vec<f64>,
}

impl CoverageCurve {
    pub fn from_gains(mut gains: Vec<f64>) -> Result<Self> {
        if gains.is_empty() {
            return Err(invalid("coverage needs at least one angle"));
        }
        if gains.iter().any(|g| g.is_nan()) {
            return Err(Error::Oracle("NaN gain in coverage input".into()));
        }
        gains.sort_by(f64::total_cmp);
        Ok(Self { sorted_gain_dbi: gains })
    }

    pub fn sorted_gains(&self) -> &[f64] {
        &self.sorted_gain_dbi
    }

    /// Percentage of angles with gain at least `g`.
    pub fn percentile_at(&self, g: f64) -> f64 {
        let n = self.sorted_gain_dbi.len();
        let below = self.sorted_gain_dbi.partition_point(|&x| x < g);
        100.0 * (n - below) as f64 / n as f64
    }

    /// `(gain, percentile)` at every distinct gain, gain ascending.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &g in &self.sorted_gain_dbi {
            if out.last().map(|p| p.0) != Some(g) {
                out.push((g, self.percentile_at(g)));
            }
        }
        out
    }

    /// This curve lies at or to the right of `other` at every percentile.
    pub fn dominates(&self, other: &CoverageCurve) -> bool {
        self.sorted_gain_dbi.len() == other.sorted_gain_dbi.len()
            && self
                .sorted_gain_dbi
                .iter()
                .zip(&other.sorted_gain_dbi)
                .all(|(a, b)| a >= b)
    }
}

/// Coverage over `[range_lo, range_hi]` degrees sampled with `step_deg`.
pub fn coverage_percentile(
    layer: &CodebookLayer,
    cfg: &ArrayConfig,
    range_deg: (f64, f64),
    step_deg: f64,
) -> Result<CoverageCurve> {
    let grid = AngleGrid::new(range_deg.0, range_deg.1, step_deg)?;
    CoverageCurve::from_gains(codebook_gain(layer, cfg, &grid)?)
}
