//! Binary hierarchical DFT codebook, replicated over every guide and mapped
//! onto the Lorentzian weights.
//!
//! Layer `r` (1-based) switches on the first `2^(r−1)` elements of each
//! guide and holds `2^(r−1)` beams steered to the direction cosines
//! `Ω(r, c) = −1 + (2c − 1)/2^(r−1)`, `c = 1..2^(r−1)`. The last layer
//! uses all `L` elements.

use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{feed_field, ArrayConfig, ArrayKind, Beamformer};
use crate::error::{invalid, Error, Result};
use crate::mapping::{brute_force_rotation, GainOracle, Mapper, MappingMethod, RotationMode, RotationPolicy};

/// Unit-norm steering vector `(1/√n)[e^{j k dx l Ω}]`, `l = 0..n−1`.
pub fn array_factor(cfg: &ArrayConfig, n_active: usize, omega: f64) -> Vec<Complex64> {
    let kd = cfg.wavenumber() * cfg.dx;
    let scale = 1.0 / (n_active as f64).sqrt();
    (0..n_active)
        .map(|l| Complex64::from_polar(scale, kd * l as f64 * omega))
        .collect()
}

pub fn layer_count(elements_per_guide: usize) -> Result<usize> {
    if elements_per_guide == 0 || !elements_per_guide.is_power_of_two() {
        return Err(invalid(format!(
            "elements per guide must be a power of two, got {elements_per_guide}"
        )));
    }
    Ok(elements_per_guide.trailing_zeros() as usize + 1)
}

/// Steering direction cosine of codeword `c` in layer `r`.
pub fn codeword_omega(r: usize, c: usize) -> f64 {
    let beams = (1usize << (r - 1)) as f64;
    -1.0 + (2 * c - 1) as f64 / beams
}

fn unit_modulus(v: &[Complex64]) -> Vec<Complex64> {
    v.iter().map(|w| w / w.norm()).collect()
}

/// Single-guide codeword `(r, c)`: unit-modulus steering weights on the
/// first `2^(r−1)` elements, zeros after.
pub fn hcb_codeword(cfg: &ArrayConfig, r: usize, c: usize) -> Result<Beamformer> {
    let l = cfg.elements_per_guide;
    let layers = layer_count(l)?;
    if r == 0 || r > layers {
        return Err(invalid(format!("layer {r} outside 1..={layers}")));
    }
    let beams = 1usize << (r - 1);
    if c == 0 || c > beams {
        return Err(invalid(format!("codeword {c} outside 1..={beams} of layer {r}")));
    }
    let mut w = unit_modulus(&array_factor(cfg, beams, codeword_omega(r, c)));
    w.resize(l, Complex64::new(0.0, 0.0));
    Beamformer::desired(w)
}

/// `D` guide-major copies of a single-guide codeword.
pub fn replicate_across_waveguides(f: &Beamformer, guides: usize) -> Beamformer {
    let weights: Vec<Complex64> = (0..guides).flat_map(|_| f.weights().iter().copied()).collect();
    Beamformer::desired(weights).expect("copies of a desired beamformer stay unit-modulus")
}

/// Full-aperture unit-modulus steering towards `omega`, on every guide.
pub fn steered_beamformer(cfg: &ArrayConfig, omega: f64) -> Beamformer {
    let single = unit_modulus(&array_factor(cfg, cfg.elements_per_guide, omega));
    let single = Beamformer::desired(single).expect("unit-modulus steering");
    replicate_across_waveguides(&single, cfg.waveguides)
}

#[derive(Debug, Clone)]
pub struct Codeword {
    /// 1-based index within the layer.
    pub index: usize,
    pub omega: f64,
    pub steering_deg: f64,
    pub desired: Beamformer,
    /// Weights actually applied: Lorentzian for a metasurface, equal to
    /// `desired` for a phased array.
    pub mapped: Beamformer,
    pub zeta: f64,
}

#[derive(Debug, Clone)]
pub struct CodebookLayer {
    /// 1-based layer index.
    pub index: usize,
    pub codewords: Vec<Codeword>,
}

impl CodebookLayer {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn mapped(&self) -> impl Iterator<Item = &Beamformer> {
        self.codewords.iter().map(|c| &c.mapped)
    }
}

#[derive(Debug, Clone)]
pub struct HierarchicalCodebook {
    pub config: ArrayConfig,
    pub method: MappingMethod,
    pub rotation: RotationPolicy,
    pub layers: Vec<CodebookLayer>,
}

impl HierarchicalCodebook {
    pub fn layer(&self, r: usize) -> Option<&CodebookLayer> {
        self.layers.iter().find(|l| l.index == r)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.len()).collect()
    }
}

/// Map desired beamformers into a layer, searching rotations per codeword
/// when the policy asks for it.
pub fn build_layer(
    cfg: &ArrayConfig,
    index: usize,
    desired: Vec<(f64, Beamformer)>,
    mapper: &Mapper,
    rotation: RotationPolicy,
    oracle: Option<&dyn GainOracle>,
) -> Result<CodebookLayer> {
    rotation.validate()?;
    if cfg.kind == ArrayKind::Dma && rotation.mode == RotationMode::BruteForce && oracle.is_none() {
        return Err(invalid("brute-force rotation needs a gain oracle"));
    }
    let m = feed_field(cfg);
    let codewords = desired
        .into_par_iter()
        .enumerate()
        .map(|(i, (omega, f_ps))| {
            if f_ps.len() != cfg.num_elements() {
                return Err(Error::LengthMismatch {
                    expected: cfg.num_elements(),
                    found: f_ps.len(),
                });
            }
            let steering_deg = omega.asin().to_degrees();
            let (mapped, zeta) = match (cfg.kind, rotation.mode) {
                (ArrayKind::Phased, _) => (f_ps.clone(), 0.0),
                (ArrayKind::Dma, RotationMode::None) => (mapper.map(&f_ps, &m, 0.0)?, 0.0),
                (ArrayKind::Dma, RotationMode::BruteForce) => {
                    let oracle = oracle.expect("checked above");
                    let s = brute_force_rotation(&f_ps, &m, mapper, rotation.rotations, steering_deg, oracle)?;
                    (s.beamformer, s.zeta)
                }
            };
            Ok(Codeword {
                index: i + 1,
                omega,
                steering_deg,
                desired: f_ps,
                mapped,
                zeta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CodebookLayer { index, codewords })
}

/// All `log2(L) + 1` layers for `cfg`.
pub fn build_codebook(
    cfg: &ArrayConfig,
    mapper: &Mapper,
    rotation: RotationPolicy,
    oracle: Option<&dyn GainOracle>,
) -> Result<HierarchicalCodebook> {
    cfg.validate()?;
    let layers = (1..=layer_count(cfg.elements_per_guide)?)
        .map(|r| {
            let desired = (1..=1usize << (r - 1))
                .map(|c| {
                    let single = hcb_codeword(cfg, r, c)?;
                    Ok((codeword_omega(r, c), replicate_across_waveguides(&single, cfg.waveguides)))
                })
                .collect::<Result<Vec<_>>>()?;
            build_layer(cfg, r, desired, mapper, rotation, oracle)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HierarchicalCodebook {
        config: cfg.clone(),
        method: mapper.method,
        rotation,
        layers,
    })
}

/// Full-aperture steering layer aimed at the same directions as `reference`,
/// used to give a comparison array the same beam set.
pub fn matched_layer(cfg: &ArrayConfig, reference: &CodebookLayer) -> Result<CodebookLayer> {
    cfg.validate()?;
    let desired = reference
        .codewords
        .iter()
        .map(|c| (c.omega, steered_beamformer(cfg, c.omega)))
        .collect();
    let mapper = Mapper::new(MappingMethod::Euclidean);
    build_layer(cfg, reference.index, desired, &mapper, RotationPolicy::none(), None)
}

/// One row of the codebook CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookRow {
    pub layer: usize,
    pub codeword: usize,
    pub element_index: usize,
    pub w_re: f64,
    pub w_im: f64,
    pub q_re: f64,
    pub q_im: f64,
    pub zeta_hat: f64,
}

pub fn codebook_rows(cb: &HierarchicalCodebook) -> Vec<CodebookRow> {
    let mut rows = Vec::new();
    for layer in &cb.layers {
        for cw in &layer.codewords {
            for (i, (w, q)) in cw.desired.weights().iter().zip(cw.mapped.weights()).enumerate() {
                rows.push(CodebookRow {
                    layer: layer.index,
                    codeword: cw.index,
                    element_index: i,
                    w_re: w.re,
                    w_im: w.im,
                    q_re: q.re,
                    q_im: q.im,
                    zeta_hat: cw.zeta,
                });
            }
        }
    }
    rows
}

/// Shortest round-trip float formatting keeps re-import bit-exact.
pub fn write_codebook_csv<W: Write>(rows: &[CodebookRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_codebook_csv<R: Read>(input: R) -> Result<Vec<CodebookRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<CodebookRow>, _>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::WeightDomain;
    use crate::element::circle_deviation;

    fn dma() -> ArrayConfig {
        ArrayConfig::reference_dma()
    }

    #[test]
    fn array_factor_norms() {
        let cfg = dma();
        assert_eq!(array_factor(&cfg, 1, 0.3), vec![Complex64::new(1.0, 0.0)]);
        for v in array_factor(&cfg, 4, 0.0) {
            assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        for n in 1..10 {
            for omega in [-1.0, -0.3, 0.0, 0.77, 1.0] {
                let norm: f64 = array_factor(&cfg, n, omega).iter().map(|v| v.norm_sqr()).sum();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn codeword_examples() {
        let cfg = dma();
        let f = hcb_codeword(&cfg, 1, 1).unwrap();
        let mut expected = [Complex64::new(0.0, 0.0); 8];
        expected[0] = Complex64::new(1.0, 0.0);
        assert_eq!(f.weights(), &expected[..]);

        let omegas: Vec<f64> = (1..=8).map(|c| codeword_omega(4, c)).collect();
        let want: Vec<f64> = [-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0].iter().map(|v| v / 8.0).collect();
        assert_eq!(omegas, want);
        for c in 1..=8 {
            let f = hcb_codeword(&cfg, 4, c).unwrap();
            assert!(f.weights().iter().all(|w| (w.norm() - 1.0).abs() < 1e-12));
        }

        let f = hcb_codeword(&cfg, 2, 1).unwrap();
        assert_eq!(codeword_omega(2, 1), -0.5);
        assert!(f.weights()[..2].iter().all(|w| (w.norm() - 1.0).abs() < 1e-12));
        assert!(f.weights()[2..].iter().all(|w| *w == Complex64::new(0.0, 0.0)));

        assert!(hcb_codeword(&cfg, 2, 3).is_err());
        assert!(hcb_codeword(&cfg, 5, 1).is_err());
        let mut odd = dma();
        odd.elements_per_guide = 6;
        assert!(hcb_codeword(&odd, 1, 1).is_err());
    }

    #[test]
    fn replication() {
        let cfg = dma();
        let f = hcb_codeword(&cfg, 3, 2).unwrap();
        assert_eq!(replicate_across_waveguides(&f, 1), f);
        let r = replicate_across_waveguides(&f, 5);
        assert_eq!(r.len(), 40);
        for d in 0..5 {
            assert_eq!(&r.weights()[d * 8..(d + 1) * 8], f.weights());
        }
    }

    #[test]
    fn codebook_layout_and_membership() {
        let cfg = dma();
        let cb = build_codebook(
            &cfg,
            &Mapper::new(MappingMethod::LorentzianConstrained),
            RotationPolicy::none(),
            None,
        )
        .unwrap();
        assert_eq!(cb.sizes(), vec![1, 2, 4, 8]);
        for layer in &cb.layers {
            for pair in layer.codewords.windows(2) {
                let spacing = pair[1].omega - pair[0].omega;
                assert!((spacing - 2.0 / layer.len() as f64).abs() < 1e-15);
            }
            for cw in &layer.codewords {
                assert!(cw.omega.abs() < 1.0);
                assert_eq!(cw.mapped.domain(), WeightDomain::Lorentzian);
                assert!(cw.mapped.weights().iter().all(|w| circle_deviation(*w).abs() < 1e-9));
                let direct = crate::mapping::rotate_and_map(
                    &cw.desired,
                    &feed_field(&cfg),
                    0.0,
                    MappingMethod::LorentzianConstrained,
                )
                .unwrap();
                assert_eq!(direct, cw.mapped);
            }
        }
    }

    #[test]
    fn phased_codebook_is_unmapped() {
        let cfg = ArrayConfig::reference_phased();
        let cb = build_codebook(&cfg, &Mapper::new(MappingMethod::Euclidean), RotationPolicy::none(), None).unwrap();
        assert_eq!(cb.sizes(), vec![1, 2, 4]);
        for cw in cb.layers.iter().flat_map(|l| &l.codewords) {
            assert_eq!(cw.mapped, cw.desired);
        }
    }

    #[test]
    fn brute_force_requires_oracle() {
        let r = build_codebook(&dma(), &Mapper::new(MappingMethod::Euclidean), RotationPolicy::brute_force(16), None);
        assert!(r.is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let cb = build_codebook(&dma(), &Mapper::new(MappingMethod::Euclidean), RotationPolicy::none(), None).unwrap();
        let rows = codebook_rows(&cb);
        assert_eq!(rows.len(), 15 * 40);
        let mut buf = Vec::new();
        write_codebook_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("layer,codeword,element_index,w_re,w_im,q_re,q_im,zeta_hat\n"));
        let back = read_codebook_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.w_re.to_bits(), b.w_re.to_bits());
            assert_eq!(a.w_im.to_bits(), b.w_im.to_bits());
            assert_eq!(a.q_re.to_bits(), b.q_re.to_bits());
            assert_eq!(a.q_im.to_bits(), b.q_im.to_bits());
        }
        let mut again = Vec::new();
        write_codebook_csv(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }
}
