//! Experiment runners. Each `*_data` function computes results in memory;
//! the matching `run_*` writes them as CSV plus a manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dmabeam::array::{guide_field, ArrayConfig};
use dmabeam::beampattern::{coverage_percentile, half_power_beamwidth, steering_report, Beamwidth, BeamPattern, CoverageCurve, FarField};
use dmabeam::channel::{apply_waveguide, generate_user_channel, ChannelRealization};
use dmabeam::codebook::{build_codebook, codebook_rows, matched_layer, write_codebook_csv, CodebookLayer, HierarchicalCodebook};
use dmabeam::efficiency::{beamformed_gains, codeword_weights, dbm_to_w, energy_efficiency, select_from_gains, Architecture, Transmitter};
use dmabeam::element::{build_tuning_table, read_sparam_csv, records_at_frequency, Normalization, TuningTable};
use dmabeam::mapping::{Mapper, MappingMethod, RotationPolicy};
use dmabeam::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

/// One codebook flavour compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub architecture: Architecture,
    /// `None` for the phased array.
    pub mapping: Option<MappingMethod>,
    pub rotation: RotationPolicy,
}

impl Variant {
    pub fn dma(mapping: MappingMethod, rotation: RotationPolicy) -> Self {
        Self {
            architecture: Architecture::Dma,
            mapping: Some(mapping),
            rotation,
        }
    }

    pub fn phased(architecture: Architecture) -> Self {
        Self {
            architecture,
            mapping: None,
            rotation: RotationPolicy::none(),
        }
    }

    pub fn mapping_name(&self) -> &'static str {
        self.mapping.map_or("PS", MappingMethod::short_name)
    }

    /// `EM:NR`, `LC:BF`, `PS:A`, `PS:P`.
    pub fn label(&self) -> String {
        match self.architecture {
            Architecture::Dma => format!("{}:{}", self.mapping_name(), self.rotation.short_name()),
            Architecture::PhasedActive => "PS:A".into(),
            Architecture::PhasedPassive => "PS:P".into(),
        }
    }
}

/// EM:NR, EM:BF and LC:NR, the brute-force search using `cfg.rotation.rotations`.
pub fn dma_variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    vec![
        Variant::dma(MappingMethod::Euclidean, RotationPolicy::none()),
        Variant::dma(MappingMethod::Euclidean, RotationPolicy::brute_force(cfg.rotation.rotations)),
        Variant::dma(MappingMethod::LorentzianConstrained, RotationPolicy::none()),
    ]
}

pub fn dma_codebook(array: &ArrayConfig, mapping: MappingMethod, rotation: RotationPolicy) -> CliResult<HierarchicalCodebook> {
    let oracle = FarField::new(array)?;
    Ok(build_codebook(array, &Mapper::new(mapping), rotation, Some(&oracle))?)
}

/// Phased-array layer with the same beam directions as the metasurface
/// layer `reference`: its own hierarchical layer while it has enough
/// elements, a full-aperture steering set beyond that.
pub fn phased_layer(phased: &ArrayConfig, reference: &CodebookLayer) -> CliResult<CodebookLayer> {
    let own = build_codebook(phased, &Mapper::new(MappingMethod::Euclidean), RotationPolicy::none(), None)?;
    match own.layer(reference.index) {
        Some(l) => Ok(l.clone()),
        None => Ok(matched_layer(phased, reference)?),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e.into()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn check_finite(what: &str, values: impl IntoIterator<Item = f64>) -> CliResult<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(CliError::Numerical(format!("non-finite value in {what}")));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PatternResult {
    pub layer: usize,
    pub codeword: usize,
    pub steering_deg: f64,
    pub zeta: f64,
    pub pattern: BeamPattern,
    pub beamwidth: Beamwidth,
}

#[derive(Debug, Serialize)]
struct PatternRow {
    phi_deg: f64,
    gain_dbi: f64,
}

#[derive(Debug, Serialize)]
struct PatternSidecar<'a> {
    layer: usize,
    codeword: usize,
    mapping: &'a str,
    rotation: &'a str,
    steering_deg: f64,
    zeta_hat: f64,
    peak_angle_deg: f64,
    peak_gain_dbi: f64,
    hpbw_deg: f64,
    hpbw_lower_deg: f64,
    hpbw_upper_deg: f64,
    hpbw_truncated: bool,
    hpbw_ambiguous: bool,
}

/// Patterns of one codeword, or of every codeword when `codeword` is `None`,
/// for the configured mapping and rotation.
pub fn pattern_data(cfg: &ExperimentConfig, layer: usize, codeword: Option<usize>) -> CliResult<Vec<PatternResult>> {
    let layers = cfg.layers();
    if layer == 0 || layer > layers {
        return Err(CliError::Config(format!("layer {layer} outside 1..={layers}")));
    }
    let size = 1usize << (layer - 1);
    if let Some(c) = codeword {
        if c == 0 || c > size {
            return Err(CliError::Config(format!("codeword {c} outside 1..={size} of layer {layer}")));
        }
    }
    let cb = dma_codebook(&cfg.array, cfg.mapping, cfg.rotation)?;
    let ff = FarField::new(&cfg.array)?;
    let l = cb.layer(layer).expect("layer range checked");
    l.codewords
        .iter()
        .filter(|cw| codeword.is_none_or(|c| c == cw.index))
        .map(|cw| {
            let pattern = ff.pattern(&cw.mapped, &cfg.grid)?;
            check_finite("pattern", pattern.gain_dbi.iter().copied())?;
            let beamwidth = half_power_beamwidth(&pattern);
            Ok(PatternResult {
                layer,
                codeword: cw.index,
                steering_deg: cw.steering_deg,
                zeta: cw.zeta,
                pattern,
                beamwidth,
            })
        })
        .collect()
}

pub fn run_pattern(cfg: &ExperimentConfig, layer: usize, codeword: Option<usize>, out: &Path) -> CliResult<Vec<PathBuf>> {
    let results = pattern_data(cfg, layer, codeword)?;
    ensure_dir(out)?;
    let mut files = Vec::new();
    for r in &results {
        let stem = format!("pattern_L{}_C{}", r.layer, r.codeword);
        let csv_path = out.join(format!("{stem}.csv"));
        let rows: Vec<PatternRow> = r
            .pattern
            .angles_deg
            .iter()
            .zip(&r.pattern.gain_dbi)
            .map(|(&phi_deg, &gain_dbi)| PatternRow { phi_deg, gain_dbi })
            .collect();
        write_rows(&csv_path, &rows)?;
        let side = PatternSidecar {
            layer: r.layer,
            codeword: r.codeword,
            mapping: cfg.mapping.short_name(),
            rotation: cfg.rotation.short_name(),
            steering_deg: r.steering_deg,
            zeta_hat: r.zeta,
            peak_angle_deg: r.pattern.peak_angle_deg,
            peak_gain_dbi: r.pattern.peak_gain_dbi,
            hpbw_deg: r.beamwidth.width_deg,
            hpbw_lower_deg: r.beamwidth.lower_deg,
            hpbw_upper_deg: r.beamwidth.upper_deg,
            hpbw_truncated: r.beamwidth.truncated,
            hpbw_ambiguous: r.beamwidth.ambiguous,
        };
        let side_path = out.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
        std::fs::write(&side_path, text + "\n").map_err(|e| CliError::io(&side_path, e))?;
        files.push(csv_path);
        files.push(side_path);
    }
    Manifest::new("pattern", cfg).write(out, &files)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteeringRecord {
    pub variant: String,
    pub codeword: usize,
    pub desired_deg: f64,
    pub achieved_deg: f64,
    pub error_deg: f64,
}

/// Last-layer steering report for EM:NR, EM:BF, LC:NR and the phased array.
pub fn steering_data(cfg: &ExperimentConfig) -> CliResult<Vec<SteeringRecord>> {
    let layer = cfg.layers();
    let mut out = Vec::new();
    let mut reference = None;
    for v in dma_variants(cfg) {
        let cb = dma_codebook(&cfg.array, v.mapping.expect("metasurface variant"), v.rotation)?;
        let l = cb.layer(layer).expect("last layer exists").clone();
        push_steering(&mut out, &v.label(), &l, &cfg.array, cfg)?;
        reference.get_or_insert(l);
    }
    let ps = phased_layer(&cfg.phased, &reference.expect("at least one variant"))?;
    push_steering(&mut out, "PS", &ps, &cfg.phased, cfg)?;
    Ok(out)
}

fn push_steering(
    out: &mut Vec<SteeringRecord>,
    label: &str,
    layer: &CodebookLayer,
    array: &ArrayConfig,
    cfg: &ExperimentConfig,
) -> CliResult<()> {
    for r in steering_report(layer, array, &cfg.grid)? {
        check_finite("steering", [r.achieved_deg, r.error_deg])?;
        out.push(SteeringRecord {
            variant: label.to_string(),
            codeword: r.codeword,
            desired_deg: r.desired_deg,
            achieved_deg: r.achieved_deg,
            error_deg: r.error_deg,
        });
    }
    Ok(())
}

pub fn run_steering(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let rows = steering_data(cfg)?;
    ensure_dir(out)?;
    let path = out.join("steering.csv");
    write_rows(&path, &rows)?;
    let files = vec![path];
    Manifest::new("steering", cfg).write(out, &files)?;
    Ok(files)
}

#[derive(Debug, Clone)]
pub struct CoverageResult {
    pub variant: String,
    pub layer: usize,
    pub curve: CoverageCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRecord {
    pub variant: String,
    pub layer: usize,
    pub gain_dbi: f64,
    pub percentile: f64,
}

/// Coverage curves over `[−range, range]` per variant and requested layer.
pub fn coverage_data(cfg: &ExperimentConfig, layers: &[usize]) -> CliResult<Vec<CoverageResult>> {
    let total = cfg.layers();
    if let Some(&bad) = layers.iter().find(|&&l| l == 0 || l > total) {
        return Err(CliError::Config(format!("layer {bad} outside 1..={total}")));
    }
    let range = (-cfg.coverage.range_deg, cfg.coverage.range_deg);
    let mut out = Vec::new();
    let mut reference: Option<HierarchicalCodebook> = None;
    for v in dma_variants(cfg) {
        let cb = dma_codebook(&cfg.array, v.mapping.expect("metasurface variant"), v.rotation)?;
        for &r in layers {
            let curve = coverage_percentile(cb.layer(r).expect("checked"), &cfg.array, range, cfg.coverage.step_deg)?;
            out.push(CoverageResult {
                variant: v.label(),
                layer: r,
                curve,
            });
        }
        reference.get_or_insert(cb);
    }
    let reference = reference.expect("at least one variant");
    for &r in layers {
        let ps = phased_layer(&cfg.phased, reference.layer(r).expect("checked"))?;
        let curve = coverage_percentile(&ps, &cfg.phased, range, cfg.coverage.step_deg)?;
        out.push(CoverageResult {
            variant: "PS".into(),
            layer: r,
            curve,
        });
    }
    Ok(out)
}

pub fn run_coverage(cfg: &ExperimentConfig, layers: &[usize], out: &Path) -> CliResult<Vec<PathBuf>> {
    let curves = coverage_data(cfg, layers)?;
    let mut rows = Vec::new();
    for c in &curves {
        let mut points = c.curve.points();
        // closing step down to 0 % just above the strongest angle
        let top = points.last().expect("curve is nonempty").0;
        points.push((top, 0.0));
        for (gain_dbi, percentile) in points {
            rows.push(CoverageRecord {
                variant: c.variant.clone(),
                layer: c.layer,
                gain_dbi,
                percentile,
            });
        }
    }
    check_finite("coverage", rows.iter().map(|r| r.gain_dbi))?;
    ensure_dir(out)?;
    let path = out.join("coverage.csv");
    write_rows(&path, &rows)?;
    let files = vec![path];
    Manifest::new("coverage", cfg).write(out, &files)?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub arch: String,
    pub mapping: String,
    pub rotation: String,
    #[serde(rename = "P_in_dBm")]
    pub p_in_dbm: f64,
    #[serde(rename = "P_T_W")]
    pub p_t_w: f64,
    #[serde(rename = "P_total_W")]
    pub p_total_w: f64,
    #[serde(rename = "SE_bpshz")]
    pub se_bpshz: f64,
    #[serde(rename = "EE_bpshz_per_W")]
    pub ee_bpshz_per_w: f64,
}

/// `|h_eff[k]^H f_c|²` for every codeword `c` and subcarrier `k`.
fn codeword_gains(h_eff: &[Vec<Complex64>], weights: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    weights.iter().map(|f| beamformed_gains(h_eff, f)).collect()
}

struct SweepArm {
    variant: Variant,
    transmitter: Transmitter,
    /// Per user, per codeword, per subcarrier gains.
    gains: Vec<Vec<Vec<f64>>>,
}

/// Mean spectral and energy efficiency per variant and input power.
///
/// Every user sees one channel realization seeded from the master seed;
/// the metasurface and the phased array share its paths.
pub fn efficiency_sweep_data(cfg: &ExperimentConfig) -> CliResult<Vec<SweepRecord>> {
    let layer = cfg.sweep_layer();
    let chan_cfg = cfg.seeded_channel();
    let m_conj = guide_field(&cfg.array)?.conjugate();

    let mut dma_weights = Vec::new();
    let mut reference = None;
    for v in dma_variants(cfg) {
        let cb = dma_codebook(&cfg.array, v.mapping.expect("metasurface variant"), v.rotation)?;
        let l = cb.layer(layer).expect("sweep layer validated");
        dma_weights.push((v, codeword_weights(l, &cfg.array)?));
        reference.get_or_insert_with(|| l.clone());
    }
    let ps_weights = codeword_weights(&phased_layer(&cfg.phased, &reference.expect("at least one variant"))?, &cfg.phased)?;

    // users in parallel; collect keeps user order
    let per_user: Vec<(Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>)> = (0..cfg.users)
        .into_par_iter()
        .map(|u| -> CliResult<_> {
            let dma_ch: ChannelRealization = generate_user_channel(&chan_cfg, &cfg.array, u)?;
            let h_eff = apply_waveguide(&dma_ch, &m_conj)?;
            let ps_ch = generate_user_channel(&chan_cfg, &cfg.phased, u)?;
            let dma: Vec<Vec<Vec<f64>>> = dma_weights.iter().map(|(_, w)| codeword_gains(&h_eff.h, w)).collect();
            Ok((dma, codeword_gains(&ps_ch.h, &ps_weights)))
        })
        .collect::<CliResult<_>>()?;

    let mut arms = Vec::new();
    for (i, (v, _)) in dma_weights.iter().enumerate() {
        arms.push(SweepArm {
            variant: *v,
            transmitter: Transmitter::new(Architecture::Dma, &cfg.array)?,
            gains: per_user.iter().map(|(d, _)| d[i].clone()).collect(),
        });
    }
    for arch in [Architecture::PhasedActive, Architecture::PhasedPassive] {
        arms.push(SweepArm {
            variant: Variant::phased(arch),
            transmitter: Transmitter::new(arch, &cfg.phased)?,
            gains: per_user.iter().map(|(_, p)| p.clone()).collect(),
        });
    }

    let mut rows = Vec::new();
    for arm in &arms {
        for &p_in_dbm in &cfg.sweep.p_in_dbm {
            let p_t = arm.transmitter.transmit_power(dbm_to_w(p_in_dbm), &cfg.power)?;
            let rho = cfg.link.snr(p_t);
            let mut se_sum = 0.0;
            for g in &arm.gains {
                se_sum += select_from_gains(g, rho)?.1;
            }
            let se = se_sum / arm.gains.len() as f64;
            let p_total = arm.transmitter.total_power(p_t, &cfg.power)?;
            let ee = energy_efficiency(se, p_total)?;
            check_finite("efficiency sweep", [p_t, p_total, se, ee])?;
            rows.push(SweepRecord {
                arch: arm.variant.architecture.name().into(),
                mapping: arm.variant.mapping_name().into(),
                rotation: arm.variant.rotation.short_name().into(),
                p_in_dbm,
                p_t_w: p_t,
                p_total_w: p_total,
                se_bpshz: se,
                ee_bpshz_per_w: ee,
            });
        }
    }
    Ok(rows)
}

pub fn run_efficiency_sweep(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let rows = efficiency_sweep_data(cfg)?;
    ensure_dir(out)?;
    let path = out.join("sweep.csv");
    write_rows(&path, &rows)?;
    let files = vec![path];
    Manifest::new("sweep", cfg).write(out, &files)?;
    Ok(files)
}

/// Codebook for the configured mapping and rotation.
pub fn run_export_codebook(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let cb = dma_codebook(&cfg.array, cfg.mapping, cfg.rotation)?;
    let rows = codebook_rows(&cb);
    check_finite("codebook", rows.iter().flat_map(|r| [r.q_re, r.q_im, r.zeta_hat]))?;
    ensure_dir(out)?;
    let path = out.join("codebook.csv");
    write_codebook_csv(&rows, create(&path)?)?;
    let files = vec![path];
    Manifest::new("export-codebook", cfg).write(out, &files)?;
    Ok(files)
}

/// Settings for turning S-parameter samples into a tuning table.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub input: PathBuf,
    pub omega_rad_s: f64,
    pub guide_a_m: f64,
    pub guide_b_m: f64,
    /// Guide propagation constant; the configured array's when absent.
    pub beta: Option<f64>,
    pub gap_threshold_rad: f64,
}

#[derive(Debug, Serialize)]
struct TuningRow {
    #[serde(rename = "cap_pF")]
    cap_pf: f64,
    phase_rad: f64,
    w_re: f64,
    w_im: f64,
}

#[derive(Debug, Serialize)]
struct GapRow {
    start_rad: f64,
    len_rad: f64,
}

pub fn ingest_data(cfg: &ExperimentConfig, opts: &IngestOptions) -> CliResult<TuningTable> {
    let file = File::open(&opts.input).map_err(|e| CliError::Config(format!("cannot read {}: {e}", opts.input.display())))?;
    let rows = read_sparam_csv(file)?;
    let beta = opts.beta.unwrap_or(cfg.array.beta);
    let records = records_at_frequency(&rows, opts.omega_rad_s, opts.guide_a_m, opts.guide_b_m, beta);
    Ok(build_tuning_table(&records, Normalization::Peak, opts.gap_threshold_rad)?)
}

pub fn run_ingest_sparams(cfg: &ExperimentConfig, opts: &IngestOptions, out: &Path) -> CliResult<Vec<PathBuf>> {
    let table = ingest_data(cfg, opts)?;
    ensure_dir(out)?;
    let entries: Vec<TuningRow> = table
        .entries()
        .iter()
        .map(|e| TuningRow {
            cap_pf: e.capacitance_pf,
            phase_rad: e.phase,
            w_re: e.weight.re,
            w_im: e.weight.im,
        })
        .collect();
    let gaps: Vec<GapRow> = table
        .gaps()
        .iter()
        .map(|g| GapRow {
            start_rad: g.start,
            len_rad: g.len,
        })
        .collect();
    let t_path = out.join("tuning_table.csv");
    let g_path = out.join("tuning_gaps.csv");
    write_rows(&t_path, &entries)?;
    // header only when no gaps were found
    if gaps.is_empty() {
        std::fs::write(&g_path, "start_rad,len_rad\n").map_err(|e| CliError::io(&g_path, e))?;
    } else {
        write_rows(&g_path, &gaps)?;
    }
    let files = vec![t_path, g_path];
    Manifest::new("ingest-sparams", cfg).write(out, &files)?;
    Ok(files)
}
