//! Single metasurface element: Lorentzian polarizability, the normalized
//! Lorentzian weight circle, and measured S-parameter tuning tables.
//!
//! Every achievable weight lies on the circle `-(j + e^{jφ})/2`, centre
//! `-j/2`, radius `1/2`. The phase parameter `φ` is the natural coordinate
//! along it: `φ = π/2` is the peak weight `-j`, `φ = 3π/2` the zero weight.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Read;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const J: Complex64 = Complex64::new(0.0, 1.0);

/// Centre of the Lorentzian circle.
pub const CIRCLE_CENTER: Complex64 = Complex64::new(0.0, -0.5);
pub const CIRCLE_RADIUS: f64 = 0.5;

/// Phase parameter of the zero weight.
pub const ZERO_PHASE: f64 = 3.0 * FRAC_PI_2;

/// Default half-width of the varactor tuning gap around the zero weight.
pub const DEFAULT_GAP_HALF_WIDTH: f64 = 0.15;

/// Signed distance of `z` from the Lorentzian circle.
pub fn circle_deviation(z: Complex64) -> f64 {
    (z - CIRCLE_CENTER).norm() - CIRCLE_RADIUS
}

/// Lorentzian resonator parameters of one element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianElement {
    pub coupling: f64,
    /// Damping factor, rad/s.
    pub damping: f64,
    /// Resonant angular frequency set by the varactor, rad/s.
    pub resonant_omega: f64,
    /// Operating (centre) angular frequency, rad/s.
    pub center_omega: f64,
}

impl LorentzianElement {
    pub fn new(coupling: f64, damping: f64, resonant_omega: f64, center_omega: f64) -> Result<Self> {
        let elem = Self {
            coupling,
            damping,
            resonant_omega,
            center_omega,
        };
        elem.validate()?;
        Ok(elem)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.coupling) && ok(self.damping) && ok(self.resonant_omega) && ok(self.center_omega)) {
            return Err(invalid("Lorentzian element parameters must be finite and positive"));
        }
        Ok(())
    }

    /// Copy of this element retuned to a new resonance.
    pub fn with_resonance(&self, resonant_omega: f64) -> Self {
        Self {
            resonant_omega,
            ..*self
        }
    }
}

/// Magnetic polarizability `Fω² / (ω₀² − ω² + jωγ)`.
pub fn polarizability(elem: &LorentzianElement, omega: f64) -> Complex64 {
    let w0 = elem.resonant_omega;
    let num = elem.coupling * omega * omega;
    num / Complex64::new(w0 * w0 - omega * omega, omega * elem.damping)
}

/// Scale a polarizability by `γ / (Fω₀)` so the resonant value is `-j`.
pub fn normalize_polarizability(alpha: Complex64, elem: &LorentzianElement) -> Complex64 {
    alpha * (elem.damping / (elem.coupling * elem.resonant_omega))
}

/// A weight on the Lorentzian circle together with its phase parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianWeight {
    value: Complex64,
    phase: f64,
}

impl LorentzianWeight {
    /// `-(j + e^{jφ})/2` with `φ` reduced to `[0, 2π)`.
    pub fn from_phase(phi: f64) -> Self {
        let phase = phi.rem_euclid(TAU);
        // rem_euclid can round up to exactly TAU for tiny negative inputs
        let phase = if phase >= TAU { 0.0 } else { phase };
        Self {
            value: -(J + Complex64::from_polar(1.0, phi)) * 0.5,
            phase,
        }
    }

    pub fn zero() -> Self {
        Self {
            value: Complex64::new(0.0, 0.0),
            phase: ZERO_PHASE,
        }
    }

    pub fn peak() -> Self {
        Self::from_phase(FRAC_PI_2)
    }

    /// Phase parameter of the circle point nearest to `z` (radial projection).
    pub fn phase_of(z: Complex64) -> f64 {
        let p = (-(z * 2.0) - J).arg().rem_euclid(TAU);
        if p >= TAU {
            0.0
        } else {
            p
        }
    }

    pub fn value(&self) -> Complex64 {
        self.value
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn is_zero(&self) -> bool {
        self.value == Complex64::new(0.0, 0.0)
    }
}

/// Total function: any finite `φ` maps onto the circle.
pub fn weight_from_phase(phi: f64) -> LorentzianWeight {
    LorentzianWeight::from_phase(phi)
}

/// One S-parameter sample of a single element in its feeding guide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SParamRecord {
    pub omega: f64,
    pub s11: Complex64,
    pub s21: Complex64,
    /// Broad waveguide dimension, m.
    pub guide_a: f64,
    /// Narrow waveguide dimension, m.
    pub guide_b: f64,
    /// Guide propagation constant, rad/m.
    pub beta: f64,
}

/// `α = −(jab/β)(1 + S11 − S21)`.
pub fn polarizability_from_sparams(rec: &SParamRecord) -> Result<Complex64> {
    if !(rec.guide_a > 0.0 && rec.guide_b > 0.0 && rec.beta > 0.0) {
        return Err(invalid("waveguide a, b and beta must be positive"));
    }
    if rec.s11.norm() > 1.0 + 1e-12 || rec.s21.norm() > 1.0 + 1e-12 {
        return Err(invalid("|S11| and |S21| must not exceed 1"));
    }
    let scale = -J * (rec.guide_a * rec.guide_b / rec.beta);
    Ok(scale * (Complex64::new(1.0, 0.0) + rec.s11 - rec.s21))
}

/// Open arc `(start, start + len)` of phase parameters, wrapping at 2π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseInterval {
    pub start: f64,
    pub len: f64,
}

impl PhaseInterval {
    const EDGE_EPS: f64 = 1e-12;

    pub fn new(start: f64, len: f64) -> Self {
        Self {
            start: start.rem_euclid(TAU),
            len,
        }
    }

    pub fn end(&self) -> f64 {
        (self.start + self.len).rem_euclid(TAU)
    }

    pub fn contains(&self, phi: f64) -> bool {
        let off = (phi - self.start).rem_euclid(TAU);
        off > Self::EDGE_EPS && off < self.len - Self::EDGE_EPS
    }

    fn overlaps(&self, other: &PhaseInterval) -> bool {
        let off = (other.start - self.start).rem_euclid(TAU);
        off < self.len || (TAU - off) < other.len
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningEntry {
    pub capacitance_pf: f64,
    /// Normalized measured weight.
    pub weight: Complex64,
    /// Phase parameter of `weight` on the circle.
    pub phase: f64,
}

/// Capacitance-to-weight mapping of a tunable element with its unreachable
/// phase-parameter gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningTable {
    entries: Vec<TuningEntry>,
    gaps: Vec<PhaseInterval>,
}

/// Tolerance for measured weights off the ideal circle.
pub const MEASURED_CIRCLE_TOLERANCE: f64 = 0.05;

/// How raw polarizabilities are brought onto the unit-peak circle.
#[derive(Debug, Clone, Copy)]
pub enum Normalization {
    /// Scale by `γ/(Fω₀)` of a known resonator.
    Element(LorentzianElement),
    /// Rotate and scale so the largest-magnitude sample becomes `-j`.
    Peak,
}

impl TuningTable {
    pub fn from_parts(mut entries: Vec<TuningEntry>, gaps: Vec<PhaseInterval>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyTable);
        }
        entries.sort_by(|a, b| a.capacitance_pf.total_cmp(&b.capacitance_pf));
        for pair in entries.windows(2) {
            if pair[0].capacitance_pf == pair[1].capacitance_pf {
                return Err(Error::DuplicateCapacitance(pair[0].capacitance_pf));
            }
        }
        for e in &entries {
            if circle_deviation(e.weight).abs() > MEASURED_CIRCLE_TOLERANCE {
                return Err(invalid(format!(
                    "weight at {} pF is {:.3} off the Lorentzian circle",
                    e.capacitance_pf,
                    circle_deviation(e.weight)
                )));
            }
        }
        for (i, a) in gaps.iter().enumerate() {
            if !(a.len > 0.0 && a.len < TAU) {
                return Err(invalid("gap length must lie in (0, 2π)"));
            }
            if gaps[i + 1..].iter().any(|b| a.overlaps(b)) {
                return Err(invalid("gap intervals must be disjoint"));
            }
        }
        Ok(Self { entries, gaps })
    }

    /// Ideal element sampled densely on the circle with one gap centred on
    /// the zero weight. A zero half-width yields the gap-free circle.
    pub fn synthetic(samples: usize, gap_half_width: f64) -> Result<Self> {
        if samples < 2 {
            return Err(invalid("synthetic tuning table needs at least two samples"));
        }
        if !(0.0..PI).contains(&gap_half_width) {
            return Err(invalid("gap half-width must lie in [0, π)"));
        }
        // start just past the upper gap edge and sweep round to the lower edge
        let first = ZERO_PHASE + gap_half_width;
        let span = TAU - 2.0 * gap_half_width;
        let entries = (0..samples)
            .map(|i| {
                let phi = first + span * i as f64 / (samples - 1) as f64;
                let w = LorentzianWeight::from_phase(phi);
                TuningEntry {
                    capacitance_pf: 0.1 + i as f64 * 0.01,
                    weight: w.value(),
                    phase: w.phase(),
                }
            })
            .collect();
        let gaps = if gap_half_width > 0.0 {
            vec![PhaseInterval::new(ZERO_PHASE - gap_half_width, 2.0 * gap_half_width)]
        } else {
            Vec::new()
        };
        Self::from_parts(entries, gaps)
    }

    pub fn entries(&self) -> &[TuningEntry] {
        &self.entries
    }

    pub fn gaps(&self) -> &[PhaseInterval] {
        &self.gaps
    }

    pub fn is_achievable(&self, phi: f64) -> bool {
        !self.gaps.iter().any(|g| g.contains(phi))
    }

    /// Capacitance realizing phase parameter `phi`, interpolated linearly in
    /// phase between neighbouring samples (shorter arc).
    pub fn capacitance_for(&self, phi: f64) -> Option<f64> {
        if !self.is_achievable(phi) {
            return None;
        }
        let wrap = |d: f64| (d + PI).rem_euclid(TAU) - PI;
        for e in &self.entries {
            if wrap(phi - e.phase).abs() < 1e-12 {
                return Some(e.capacitance_pf);
            }
        }
        self.entries.windows(2).find_map(|pair| {
            let (a, b) = (pair[0], pair[1]);
            let span = wrap(b.phase - a.phase);
            let off = wrap(phi - a.phase);
            if span == 0.0 || off.signum() != span.signum() || off.abs() > span.abs() {
                return None;
            }
            let t = off / span;
            Some(a.capacitance_pf + t * (b.capacitance_pf - a.capacitance_pf))
        })
    }
}

/// Normalize measured S-parameter samples into a tuning table.
///
/// Phase-parameter arcs farther than `gap_threshold` from every sampled
/// weight are recorded as unreachable.
pub fn build_tuning_table(
    records: &[(f64, SParamRecord)],
    normalization: Normalization,
    gap_threshold: f64,
) -> Result<TuningTable> {
    if records.len() < 2 {
        return Err(invalid("a tuning table needs at least two samples"));
    }
    if !(gap_threshold >= 0.0) {
        return Err(invalid("gap threshold must be non-negative"));
    }
    let mut raw = records
        .iter()
        .map(|(cap, rec)| Ok((*cap, polarizability_from_sparams(rec)?)))
        .collect::<Result<Vec<_>>>()?;
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(pair) = raw.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(Error::DuplicateCapacitance(pair[0].0));
    }

    let scale = match normalization {
        Normalization::Element(elem) => {
            elem.validate()?;
            Complex64::new(elem.damping / (elem.coupling * elem.resonant_omega), 0.0)
        }
        Normalization::Peak => {
            let peak = raw
                .iter()
                .map(|(_, a)| *a)
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .expect("at least two records");
            if peak.norm() == 0.0 {
                return Err(invalid("all measured polarizabilities are zero"));
            }
            -J / peak
        }
    };

    let entries: Vec<TuningEntry> = raw
        .into_iter()
        .map(|(cap, alpha)| {
            let weight = alpha * scale;
            TuningEntry {
                capacitance_pf: cap,
                weight,
                phase: LorentzianWeight::phase_of(weight),
            }
        })
        .collect();

    let mut phases: Vec<f64> = entries.iter().map(|e| e.phase).collect();
    phases.sort_by(f64::total_cmp);
    let mut gaps = Vec::new();
    for (i, &p) in phases.iter().enumerate() {
        let next = if i + 1 < phases.len() {
            phases[i + 1]
        } else {
            phases[0] + TAU
        };
        let arc = next - p;
        if arc > 2.0 * gap_threshold {
            gaps.push(PhaseInterval::new(p + gap_threshold, arc - 2.0 * gap_threshold));
        }
    }
    TuningTable::from_parts(entries, gaps)
}

/// Nearest achievable weight in Euclidean distance; ties go to the smaller
/// phase parameter.
pub fn quantize_to_available(q: &LorentzianWeight, table: &TuningTable) -> Result<LorentzianWeight> {
    if table.entries.is_empty() {
        return Err(Error::EmptyTable);
    }
    if table.is_achievable(q.phase()) {
        return Ok(*q);
    }
    let best = table
        .gaps
        .iter()
        .filter(|g| g.contains(q.phase()))
        .flat_map(|g| [g.start, g.end()])
        .map(LorentzianWeight::from_phase)
        .min_by(|a, b| {
            let da = (a.value() - q.value()).norm();
            let db = (b.value() - q.value()).norm();
            if (da - db).abs() <= 1e-12 {
                a.phase().total_cmp(&b.phase())
            } else {
                da.total_cmp(&db)
            }
        })
        .expect("a containing gap has two edges");
    Ok(best)
}

/// One row of the S-parameter CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SParamRow {
    pub cap_pf: f64,
    pub omega_rad_s: f64,
    pub s11_re: f64,
    pub s11_im: f64,
    pub s21_re: f64,
    pub s21_im: f64,
}

const SPARAM_HEADER: [&str; 6] = ["cap_pF", "omega_rad_s", "s11_re", "s11_im", "s21_re", "s21_im"];

/// Read `cap_pF,omega_rad_s,s11_re,s11_im,s21_re,s21_im` rows.
pub fn read_sparam_csv<R: Read>(reader: R) -> Result<Vec<SParamRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(SPARAM_HEADER.iter().copied()) {
        return Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            SPARAM_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != 6 {
            return Err(Error::Parse(format!("expected 6 columns, found {}", vals.len())));
        }
        rows.push(SParamRow {
            cap_pf: vals[0],
            omega_rad_s: vals[1],
            s11_re: vals[2],
            s11_im: vals[3],
            s21_re: vals[4],
            s21_im: vals[5],
        });
    }
    Ok(rows)
}

/// Per capacitance, pick the sample nearest to `omega` and attach the guide
/// dimensions.
pub fn records_at_frequency(
    rows: &[SParamRow],
    omega: f64,
    guide_a: f64,
    guide_b: f64,
    beta: f64,
) -> Vec<(f64, SParamRecord)> {
    let mut best: BTreeMap<u64, SParamRow> = BTreeMap::new();
    for row in rows {
        // capacitances are positive so the bit pattern orders like the value
        let key = row.cap_pf.to_bits();
        match best.get(&key) {
            Some(cur) if (cur.omega_rad_s - omega).abs() <= (row.omega_rad_s - omega).abs() => {}
            _ => {
                best.insert(key, *row);
            }
        }
    }
    best.values()
        .map(|r| {
            (
                r.cap_pf,
                SParamRecord {
                    omega: r.omega_rad_s,
                    s11: Complex64::new(r.s11_re, r.s11_im),
                    s21: Complex64::new(r.s21_re, r.s21_im),
                    guide_a,
                    guide_b,
                    beta,
                },
            )
        })
        .collect()
}
