//! Seeded geometric cluster channel for a MISO-OFDM downlink.
//!
//! Each realization draws `n_clusters` cluster centres uniformly in the
//! service sector, `rays_per_cluster` Laplacian-spread rays per cluster,
//! a uniform delay and a unit-variance complex Gaussian gain per ray.
//! Subcarrier `k` then sees
//! `h[k]_i = sqrt(PL) / sqrt(P) Σ_p α_p e^{j k₀ x_i sin φ_p} e^{−j2π τ_p f_k}`.
//! Paths are drawn before any geometry is touched, so the same seed gives
//! the same paths for every array.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{element_positions, ArrayConfig, GuideField};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(alias = "K")]
    pub subcarriers: usize,
    #[serde(alias = "B")]
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub distance_m: f64,
    pub n_clusters: usize,
    pub rays_per_cluster: usize,
    /// RMS angular spread of rays about their cluster centre.
    pub angle_spread_deg: f64,
    /// Cluster centres are uniform in `[−range, range]`.
    pub cluster_range_deg: f64,
    pub pathloss_exponent: f64,
    /// Loss at 1 m; free-space at the carrier when absent.
    pub reference_loss_db: Option<f64>,
    /// Largest path delay; `K / (4B)` when absent.
    pub max_delay_s: Option<f64>,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            subcarriers: 64,
            bandwidth_hz: 20e6,
            carrier_hz: 15e9,
            distance_m: 500.0,
            n_clusters: 5,
            rays_per_cluster: 20,
            angle_spread_deg: 10.0,
            cluster_range_deg: 60.0,
            pathloss_exponent: 3.0,
            reference_loss_db: None,
            max_delay_s: None,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subcarriers == 0 {
            return Err(invalid("channel needs at least one subcarrier"));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.carrier_hz > 0.0) {
            return Err(invalid("bandwidth and carrier must be positive"));
        }
        if !(self.distance_m > 0.0) {
            return Err(invalid("distance must be positive"));
        }
        if self.n_clusters == 0 || self.rays_per_cluster == 0 {
            return Err(invalid("channel needs at least one cluster and one ray"));
        }
        if !(self.angle_spread_deg >= 0.0) || !(0.0..=90.0).contains(&self.cluster_range_deg) {
            return Err(invalid("angle spread must be non-negative and cluster range within [0, 90]"));
        }
        if !self.pathloss_exponent.is_finite() {
            return Err(invalid("path-loss exponent must be finite"));
        }
        if let Some(t) = self.max_delay_s {
            if !(t >= 0.0) {
                return Err(invalid("maximum delay must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn reference_loss(&self) -> f64 {
        self.reference_loss_db
            .unwrap_or_else(|| 32.4 + 20.0 * (self.carrier_hz / 1e9).log10())
    }

    /// Log-distance path loss, dB.
    pub fn pathloss_db(&self) -> f64 {
        self.reference_loss() + 10.0 * self.pathloss_exponent * self.distance_m.log10()
    }

    pub fn max_delay(&self) -> f64 {
        self.max_delay_s
            .unwrap_or(self.subcarriers as f64 / (4.0 * self.bandwidth_hz))
    }

    /// Baseband offset of subcarrier `k` (0-based) from the carrier.
    pub fn subcarrier_offset(&self, k: usize) -> f64 {
        let kk = self.subcarriers as f64;
        ((k + 1) as f64 - (kk + 1.0) / 2.0) * self.bandwidth_hz / kk
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub angle_deg: f64,
    pub delay_s: f64,
    pub gain: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `h[k]`, one vector per subcarrier.
    pub h: Vec<Vec<Complex64>>,
    pub pathloss_db: f64,
    pub cluster_angles_deg: Vec<f64>,
    pub paths: Vec<Path>,
    pub seed: u64,
}

impl ChannelRealization {
    pub fn subcarriers(&self) -> usize {
        self.h.len()
    }

    pub fn num_elements(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    /// `Σ_k ‖h[k]‖² / K`.
    pub fn mean_power(&self) -> f64 {
        let total: f64 = self.h.iter().flatten().map(Complex64::norm_sqr).sum();
        total / self.h.len() as f64
    }
}

/// One splitmix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of user `u`: the `(u+1)`-th splitmix64 output from `master`.
pub fn user_seed(master: u64, user: usize) -> u64 {
    let mut state = master.wrapping_add((user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    splitmix64(&mut state)
}

/// Laplacian sample with standard deviation `sigma`.
fn laplacian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let b = sigma / 2f64.sqrt();
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2f64.sqrt()
}

fn draw_paths(cfg: &ChannelConfig, seed: u64) -> (Vec<f64>, Vec<Path>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau_max = cfg.max_delay();
    let mut centres = Vec::with_capacity(cfg.n_clusters);
    let mut paths = Vec::with_capacity(cfg.n_clusters * cfg.rays_per_cluster);
    for _ in 0..cfg.n_clusters {
        let r = cfg.cluster_range_deg;
        let centre = if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        centres.push(centre);
        for _ in 0..cfg.rays_per_cluster {
            let angle_deg = (centre + laplacian(&mut rng, cfg.angle_spread_deg)).clamp(-90.0, 90.0);
            let delay_s = if tau_max > 0.0 { rng.random_range(0.0..=tau_max) } else { 0.0 };
            let gain = complex_gaussian(&mut rng);
            paths.push(Path {
                angle_deg,
                delay_s,
                gain,
            });
        }
    }
    (centres, paths)
}

/// Realization for `cfg.seed`.
pub fn generate_channel(cfg: &ChannelConfig, array: &ArrayConfig) -> Result<ChannelRealization> {
    generate_with_seed(cfg, array, cfg.seed)
}

/// Realization for user `user`, seeded from `cfg.seed` by [`user_seed`].
pub fn generate_user_channel(cfg: &ChannelConfig, array: &ArrayConfig, user: usize) -> Result<ChannelRealization> {
    generate_with_seed(cfg, array, user_seed(cfg.seed, user))
}

/// Realizations for users `0..users`, in user order.
pub fn generate_users(cfg: &ChannelConfig, array: &ArrayConfig, users: usize) -> Result<Vec<ChannelRealization>> {
    (0..users)
        .into_par_iter()
        .map(|u| generate_user_channel(cfg, array, u))
        .collect()
}

pub fn generate_with_seed(cfg: &ChannelConfig, array: &ArrayConfig, seed: u64) -> Result<ChannelRealization> {
    cfg.validate()?;
    array.validate()?;
    let (cluster_angles_deg, paths) = draw_paths(cfg, seed);
    let pathloss_db = cfg.pathloss_db();
    let scale = 10f64.powf(-pathloss_db / 20.0) / (paths.len() as f64).sqrt();
    let k0 = array.wavenumber();
    let xs: Vec<f64> = element_positions(array).into_iter().map(|(x, _)| x).collect();

    // per-path steering vectors, then per-subcarrier delay phases
    let steering: Vec<Vec<Complex64>> = paths
        .iter()
        .map(|p| {
            let u = p.angle_deg.to_radians().sin();
            xs.iter().map(|x| Complex64::from_polar(1.0, k0 * x * u)).collect()
        })
        .collect();
    let h = (0..cfg.subcarriers)
        .map(|k| {
            let fk = cfg.subcarrier_offset(k);
            let mut hk = vec![Complex64::new(0.0, 0.0); xs.len()];
            for (p, a) in paths.iter().zip(&steering) {
                let c = p.gain * Complex64::from_polar(scale, -2.0 * PI * p.delay_s * fk);
                for (acc, ai) in hk.iter_mut().zip(a) {
                    *acc += c * ai;
                }
            }
            hk
        })
        .collect();
    Ok(ChannelRealization {
        h,
        pathloss_db,
        cluster_angles_deg,
        paths,
        seed,
    })
}

/// Multiply every subcarrier vector elementwise by `m`.
pub fn apply_waveguide(ch: &ChannelRealization, m: &GuideField) -> Result<ChannelRealization> {
    if ch.num_elements() != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len(),
            found: ch.num_elements(),
        });
    }
    let h = ch
        .h
        .iter()
        .map(|hk| hk.iter().zip(m.values()).map(|(a, b)| a * b).collect())
        .collect();
    Ok(ChannelRealization { h, ..ch.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct DumpRow {
    user: usize,
    seed: u64,
    k: usize,
    element: usize,
    re: f64,
    im: f64,
}

/// Channel matrices read back from a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpedChannel {
    pub user: usize,
    pub seed: u64,
    pub h: Vec<Vec<Complex64>>,
}

/// Write `user,seed,k,element,re,im` rows.
pub fn write_channel_csv<'a, W, I>(channels: I, out: W) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (usize, &'a ChannelRealization)>,
{
    let mut w = csv::Writer::from_writer(out);
    for (user, ch) in channels {
        for (k, hk) in ch.h.iter().enumerate() {
            for (element, v) in hk.iter().enumerate() {
                w.serialize(DumpRow {
                    user,
                    seed: ch.seed,
                    k,
                    element,
                    re: v.re,
                    im: v.im,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a dump written by [`write_channel_csv`]; rows may come in any order
/// but every `(user, k, element)` cell must be present exactly once.
pub fn read_channel_csv<R: Read>(input: R) -> Result<Vec<DumpedChannel>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        let row: DumpRow = r?;
        rows.push(row);
    }
    rows.sort_by_key(|r| (r.user, r.k, r.element));
    let mut out: Vec<DumpedChannel> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let user = rows[i].user;
        let seed = rows[i].seed;
        let end = i + rows[i..].partition_point(|r| r.user == user);
        let group = &rows[i..end];
        let k_count = group.last().map_or(0, |r| r.k + 1);
        let n = group.iter().map(|r| r.element + 1).max().unwrap_or(0);
        if group.len() != k_count * n {
            return Err(Error::Parse(format!("user {user}: expected {} cells, found {}", k_count * n, group.len())));
        }
        let mut h = vec![vec![Complex64::new(0.0, 0.0); n]; k_count];
        for (j, r) in group.iter().enumerate() {
            if r.seed != seed || r.k != j / n || r.element != j % n {
                return Err(Error::Parse(format!("user {user}: irregular or duplicated cell at k={} element={}", r.k, r.element)));
            }
            h[r.k][r.element] = Complex64::new(r.re, r.im);
        }
        out.push(DumpedChannel { user, seed, h });
        i = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::guide_field;

    fn flat_single_path() -> ChannelConfig {
        ChannelConfig {
            n_clusters: 1,
            rays_per_cluster: 1,
            angle_spread_deg: 0.0,
            max_delay_s: Some(0.0),
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn defaults() {
        let c = ChannelConfig::default();
        assert!((c.max_delay() - 64.0 / 80e6).abs() < 1e-18);
        assert!((c.reference_loss() - (32.4 + 20.0 * 15f64.log10())).abs() < 1e-12);
        assert!((c.pathloss_db() - (c.reference_loss() + 30.0 * 500f64.log10())).abs() < 1e-12);
        assert!((c.subcarrier_offset(0) + 31.5 * 20e6 / 64.0).abs() < 1e-6);
        assert!((c.subcarrier_offset(63) - 31.5 * 20e6 / 64.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            ChannelConfig { subcarriers: 0, ..Default::default() },
            ChannelConfig { bandwidth_hz: 0.0, ..Default::default() },
            ChannelConfig { distance_m: -1.0, ..Default::default() },
            ChannelConfig { n_clusters: 0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }

    #[test]
    fn frequency_flat_limit() {
        let ch = generate_channel(&flat_single_path(), &ArrayConfig::reference_dma()).unwrap();
        assert_eq!(ch.subcarriers(), 64);
        assert!(ch.h.iter().all(|hk| hk == &ch.h[0]));
        // single path: every element has the same magnitude
        let m0 = ch.h[0][0].norm();
        assert!(ch.h[0].iter().all(|v| (v.norm() - m0).abs() < 1e-12 * m0.max(1e-300)));
    }

    #[test]
    fn single_path_matches_steering_vector() {
        let cfg = flat_single_path();
        let arr = ArrayConfig::reference_dma();
        let ch = generate_channel(&cfg, &arr).unwrap();
        let p = ch.paths[0];
        let amp = 10f64.powf(-ch.pathloss_db / 20.0);
        for ((x, _), v) in element_positions(&arr).into_iter().zip(&ch.h[0]) {
            let expect = p.gain * amp * Complex64::from_polar(1.0, arr.wavenumber() * x * p.angle_deg.to_radians().sin());
            assert!((v - expect).norm() < 1e-12 * amp);
        }
    }

    #[test]
    fn determinism() {
        let cfg = ChannelConfig { seed: 42, ..Default::default() };
        let arr = ArrayConfig::reference_dma();
        assert_eq!(generate_channel(&cfg, &arr).unwrap(), generate_channel(&cfg, &arr).unwrap());
        let other = ChannelConfig { seed: 43, ..cfg.clone() };
        assert_ne!(generate_channel(&cfg, &arr).unwrap().h, generate_channel(&other, &arr).unwrap().h);
    }

    #[test]
    fn paths_do_not_depend_on_array() {
        let cfg = ChannelConfig { seed: 9, ..Default::default() };
        let a = generate_channel(&cfg, &ArrayConfig::reference_dma()).unwrap();
        let b = generate_channel(&cfg, &ArrayConfig::reference_phased()).unwrap();
        assert_eq!(a.paths, b.paths);
        assert!(a.paths.iter().all(|p| p.delay_s >= 0.0 && p.delay_s <= cfg.max_delay()));
    }

    #[test]
    fn splitmix_reference_values() {
        // first outputs of splitmix64 seeded with 0
        let mut s = 0u64;
        assert_eq!(splitmix64(&mut s), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(&mut s), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(user_seed(0, 0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(user_seed(0, 1), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn pathloss_scales_exactly() {
        let arr = ArrayConfig::reference_phased();
        let near = ChannelConfig { seed: 5, distance_m: 100.0, ..Default::default() };
        let far = ChannelConfig { distance_m: 1000.0, ..near.clone() };
        let a = generate_channel(&near, &arr).unwrap();
        let b = generate_channel(&far, &arr).unwrap();
        let ratio = (a.mean_power() / b.mean_power()).log10() * 10.0;
        assert!((ratio - 30.0).abs() < 1e-9);
    }

    #[test]
    fn waveguide_application() {
        let arr = ArrayConfig::reference_dma();
        let ch = generate_channel(&ChannelConfig::default(), &arr).unwrap();
        let m = guide_field(&arr).unwrap();
        let ones = apply_waveguide(&ch, &GuideField::uniform(40)).unwrap();
        assert_eq!(ones, ch);
        let eff = apply_waveguide(&ch, &m).unwrap();
        assert!((eff.mean_power() - ch.mean_power()).abs() < 1e-12 * ch.mean_power());
        let back = apply_waveguide(&eff, &m.conjugate()).unwrap();
        for (x, y) in back.h.iter().flatten().zip(ch.h.iter().flatten()) {
            assert!((x - y).norm() < 1e-12 * y.norm().max(1e-300));
        }
        assert!(apply_waveguide(&ch, &GuideField::uniform(3)).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let cfg = ChannelConfig { subcarriers: 4, ..Default::default() };
        let arr = ArrayConfig::reference_phased();
        let chans = generate_users(&cfg, &arr, 3).unwrap();
        let mut buf = Vec::new();
        write_channel_csv(chans.iter().enumerate(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("user,seed,k,element,re,im\n"));
        let back = read_channel_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (d, c) in back.iter().zip(&chans) {
            assert_eq!(d.seed, c.seed);
            assert_eq!(d.h, c.h);
        }
        let truncated: String = text.lines().take(31).map(|l| format!("{l}\n")).collect();
        assert!(read_channel_csv(truncated.as_bytes()).is_err());
    }
}
