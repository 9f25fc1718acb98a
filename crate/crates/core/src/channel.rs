//! UPA steering vectors, multipath channel synthesis, SNR and per-RB rate.
//!
//! ```
//! use ttdrl::channel::{steering_vector, UpaConfig};
//! use ttdrl::geometry::Direction;
//! let upa = UpaConfig::half_wavelength(4, 4, 4e9);
//! let a = steering_vector(&upa, Direction::BORESIGHT);
//! assert!((a.norm() - 1.0).abs() < 1e-12);
//! ```

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Direction, GeometrySnapshot, LinkAngles, PanelFrame, SPEED_OF_LIGHT};

/// Uniform planar array geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaConfig {
    pub n_x: usize,
    pub n_y: usize,
    pub spacing: f64,
    pub wavelength: f64,
}

impl UpaConfig {
    pub fn half_wavelength(n_x: usize, n_y: usize, carrier_freq: f64) -> Self {
        let wavelength = SPEED_OF_LIGHT / carrier_freq;
        Self {
            n_x,
            n_y,
            spacing: wavelength / 2.0,
            wavelength,
        }
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Unit-norm complex beam or steering vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexBeamVector {
    pub entries: Vec<Complex64>,
}

impl ComplexBeamVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian inner product `self^H other`.
    pub fn inner(&self, other: &ComplexBeamVector) -> Complex64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn rotated(&self, phase: f64) -> Self {
        let r = Complex64::from_polar(1.0, phase);
        Self {
            entries: self.entries.iter().map(|z| z * r).collect(),
        }
    }
}

/// Steering vector `a_x(θ,φ) ⊗ a_y(φ)`; entry `p·n_y + q` carries phase
/// `(2π/λ)·d·(p·sinφ·cosθ + q·cosφ)`.
pub fn steering_vector(upa: &UpaConfig, dir: Direction) -> ComplexBeamVector {
    let k = 2.0 * std::f64::consts::PI / upa.wavelength * upa.spacing;
    let ux = dir.elevation.sin() * dir.azimuth.cos();
    let uy = dir.elevation.cos();
    let amp = 1.0 / (upa.len() as f64).sqrt();
    let ay: Vec<Complex64> = (0..upa.n_y)
        .map(|q| Complex64::from_polar(1.0, k * q as f64 * uy))
        .collect();
    let mut entries = Vec::with_capacity(upa.len());
    for p in 0..upa.n_x {
        let ax = Complex64::from_polar(amp, k * p as f64 * ux);
        entries.extend(ay.iter().map(|y| ax * y));
    }
    ComplexBeamVector { entries }
}

/// One propagation path of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathDescriptor {
    pub alpha: Complex64,
    /// Doppler shift (Hz).
    pub doppler: f64,
    /// Propagation delay (s).
    pub delay: f64,
    pub aod: Direction,
    pub aoa: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipathChannel {
    pub paths: Vec<PathDescriptor>,
}

/// Statistics of the synthetic scattering model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScatterConfig {
    pub num_paths: usize,
    /// Rician K-factor (dB); `f64::INFINITY` puts all power on the LOS path.
    pub k_factor_db: f64,
    /// Standard deviation of the angular jitter around LOS (degrees).
    pub angle_jitter_deg: f64,
    /// Scattered delays are uniform in `[LOS, LOS + max_excess_delay]` (s).
    pub max_excess_delay: f64,
}

impl Default for ScatterConfig {
    fn default() -> Self {
        Self {
            num_paths: 3,
            k_factor_db: 10.0,
            angle_jitter_deg: 5.0,
            max_excess_delay: 1e-6,
        }
    }
}

/// Seeded small-scale draws that stay fixed while the geometry evolves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterProfile {
    pub alphas: Vec<Complex64>,
    pub aod_offsets: Vec<(f64, f64)>,
    pub aoa_offsets: Vec<(f64, f64)>,
    pub excess_delays: Vec<f64>,
}

impl ScatterProfile {
    pub fn draw(config: &ScatterConfig, seed: u64) -> Result<Self> {
        let l = config.num_paths;
        if l == 0 {
            return Err(Error::InvalidArgument("channel needs at least one path".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 10f64.powf(config.k_factor_db / 10.0);
        let los_power = if l == 1 || k.is_infinite() {
            1.0
        } else {
            k / (k + 1.0)
        };
        let mut alphas = vec![Complex64::new(los_power.sqrt(), 0.0)];
        let raw: Vec<Complex64> = (1..l)
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let raw_power: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
        let scatter_power = 1.0 - los_power;
        for z in raw {
            let s = if raw_power > 0.0 {
                (scatter_power / raw_power).sqrt()
            } else {
                0.0
            };
            alphas.push(z * s);
        }
        let jitter = Normal::new(0.0, config.angle_jitter_deg.to_radians())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut aod_offsets = vec![(0.0, 0.0)];
        let mut aoa_offsets = vec![(0.0, 0.0)];
        let mut excess_delays = vec![0.0];
        for _ in 1..l {
            aod_offsets.push((jitter.sample(&mut rng), jitter.sample(&mut rng)));
            aoa_offsets.push((jitter.sample(&mut rng), jitter.sample(&mut rng)));
            excess_delays.push(rng.random::<f64>() * config.max_excess_delay);
        }
        Ok(Self {
            alphas,
            aod_offsets,
            aoa_offsets,
            excess_delays,
        })
    }

    /// Realizes the paths at a geometry given LOS angles in the panel frames.
    pub fn realize(
        &self,
        geom: &GeometrySnapshot,
        los: &LinkAngles,
        carrier_freq: f64,
    ) -> MultipathChannel {
        let los_doppler = geometry::doppler(-geom.relative_speed, carrier_freq);
        let los_delay = geom.distance / SPEED_OF_LIGHT;
        let shift = |d: Direction, (dt, dp): (f64, f64)| Direction {
            azimuth: (d.azimuth + dt).clamp(0.0, std::f64::consts::PI),
            elevation: (d.elevation + dp).clamp(0.0, std::f64::consts::PI),
        };
        let paths = (0..self.alphas.len())
            .map(|l| {
                let aod = if l == 0 { los.aod } else { shift(los.aod, self.aod_offsets[l]) };
                let aoa = if l == 0 { los.aoa } else { shift(los.aoa, self.aoa_offsets[l]) };
                let cos_offset = geometry::dot(aoa.to_local(), los.aoa.to_local()).clamp(-1.0, 1.0);
                PathDescriptor {
                    alpha: self.alphas[l],
                    doppler: los_doppler * cos_offset,
                    delay: los_delay + self.excess_delays[l],
                    aod,
                    aoa,
                }
            })
            .collect();
        MultipathChannel { paths }
    }
}

/// LOS path from the geometry plus `L − 1` scattered paths, deterministic per seed.
pub fn synthesize_channel(
    geom: &GeometrySnapshot,
    panels: (&PanelFrame, &PanelFrame),
    config: &ScatterConfig,
    carrier_freq: f64,
    seed: u64,
) -> Result<MultipathChannel> {
    let los = geometry::compute_angles(geom, panels.0, panels.1);
    Ok(ScatterProfile::draw(config, seed)?.realize(geom, &los, carrier_freq))
}

/// Complex coefficient `α_l·exp(j2π[n·T_s·v_l − (m/T_s)·τ_l])` of every path.
pub fn path_coefficients(ch: &MultipathChannel, slot: u64, rb: usize, symbol_duration: f64) -> Vec<Complex64> {
    let t = slot as f64 * symbol_duration;
    let f = rb as f64 / symbol_duration;
    ch.paths
        .iter()
        .map(|p| {
            let cycles = (t * p.doppler).fract() - (f * p.delay).fract();
            p.alpha * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * cycles)
        })
        .collect()
}

/// Channel matrix `H_{n,m}` (N_r × N_t).
pub fn channel_matrix(
    ch: &MultipathChannel,
    tx: &UpaConfig,
    rx: &UpaConfig,
    slot: u64,
    rb: usize,
    symbol_duration: f64,
) -> DMatrix<Complex64> {
    let coeffs = path_coefficients(ch, slot, rb, symbol_duration);
    let mut h = DMatrix::<Complex64>::zeros(rx.len(), tx.len());
    for (p, c) in ch.paths.iter().zip(coeffs) {
        let ar = steering_vector(rx, p.aoa);
        let at = steering_vector(tx, p.aod);
        for i in 0..rx.len() {
            let ci = c * ar.entries[i];
            for j in 0..tx.len() {
                h[(i, j)] += ci * at.entries[j].conj();
            }
        }
    }
    h
}

/// `w_r^H H w_t`.
pub fn beam_response(w_r: &ComplexBeamVector, w_t: &ComplexBeamVector, h: &DMatrix<Complex64>) -> Result<Complex64> {
    if h.nrows() != w_r.len() {
        return Err(Error::ShapeMismatch {
            what: "receive beam",
            expected: h.nrows(),
            got: w_r.len(),
        });
    }
    if h.ncols() != w_t.len() {
        return Err(Error::ShapeMismatch {
            what: "transmit beam",
            expected: h.ncols(),
            got: w_t.len(),
        });
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..h.nrows() {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..h.ncols() {
            row += h[(i, j)] * w_t.entries[j];
        }
        acc += w_r.entries[i].conj() * row;
    }
    Ok(acc)
}

/// Thermal noise per RB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub boltzmann: f64,
    pub noise_temperature: f64,
    pub rb_bandwidth: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            boltzmann: 1.380649e-23,
            noise_temperature: 290.0,
            rb_bandwidth: 180e3,
        }
    }
}

impl NoiseModel {
    pub fn variance(&self) -> f64 {
        self.boltzmann * self.noise_temperature * self.rb_bandwidth
    }
}

/// SNR `P_t·L_n·|w_r^H H w_t|² / (N_r·δ_z²)`.
pub fn snr(
    w_r: &ComplexBeamVector,
    w_t: &ComplexBeamVector,
    h: &DMatrix<Complex64>,
    tx_power: f64,
    large_scale_gain: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    let g = beam_response(w_r, w_t, h)?.norm_sqr();
    Ok(snr_from_gain(g, tx_power, large_scale_gain, w_r.len(), noise))
}

pub fn snr_from_gain(beam_gain: f64, tx_power: f64, large_scale_gain: f64, n_r: usize, noise: &NoiseModel) -> f64 {
    tx_power * large_scale_gain * beam_gain / (n_r as f64 * noise.variance())
}

/// Shannon rate `B·log2(1 + snr)` in bits/s.
pub fn rate(snr: f64, bandwidth: f64) -> f64 {
    bandwidth * snr.ln_1p() / std::f64::consts::LN_2
}

/// Per-path beam projections used to evaluate many RBs for one beam pair.
///
/// `w_r^H H_{n,m} w_t = Σ_l c_l(n,m)·(w_r^H a_r(l))·(a_t(l)^H w_t)`, so a beam
/// pair is reduced to one complex weight per path.
pub fn path_projections(
    ch: &MultipathChannel,
    tx: &UpaConfig,
    rx: &UpaConfig,
    w_t: &ComplexBeamVector,
    w_r: &ComplexBeamVector,
) -> Vec<Complex64> {
    ch.paths
        .iter()
        .map(|p| {
            let gr = w_r.inner(&steering_vector(rx, p.aoa));
            let gt = steering_vector(tx, p.aod).inner(w_t);
            gr * gt
        })
        .collect()
}

/// Beam gains `|w_r^H H_{n,m} w_t|²` for RBs `0..num_rbs` from path projections.
pub fn rb_gains(ch: &MultipathChannel, proj: &[Complex64], slot: u64, num_rbs: usize, symbol_duration: f64) -> Vec<f64> {
    let t = slot as f64 * symbol_duration;
    let base: Vec<Complex64> = ch
        .paths
        .iter()
        .zip(proj)
        .map(|(p, v)| p.alpha * v * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (t * p.doppler).fract()))
        .collect();
    (0..num_rbs)
        .map(|m| {
            let f = m as f64 / symbol_duration;
            ch.paths
                .iter()
                .zip(&base)
                .map(|(p, b)| b * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (f * p.delay).fract()))
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_antenna_steering_is_one() {
        let upa = UpaConfig::half_wavelength(1, 1, 4e9);
        let a = steering_vector(&upa, Direction { azimuth: 0.3, elevation: 1.2 });
        assert_eq!(a.entries, vec![Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn two_by_two_hand_evaluation() {
        let upa = UpaConfig::half_wavelength(2, 2, 4e9);
        let a = steering_vector(
            &upa,
            Direction {
                azimuth: 0.0,
                elevation: std::f64::consts::FRAC_PI_2,
            },
        );
        let expected = [0.5, 0.5, -0.5, -0.5];
        for (z, e) in a.entries.iter().zip(expected) {
            assert_abs_diff_eq!(z.re, e, epsilon = 1e-12);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn noise_variance_table_constants() {
        assert_abs_diff_eq!(NoiseModel::default().variance(), 7.2069e-16, epsilon = 1e-19);
    }

    #[test]
    fn rate_reference_values() {
        assert_eq!(rate(0.0, 180e3), 0.0);
        assert_abs_diff_eq!(rate(1.0, 180e3), 180e3, epsilon = 1e-6);
        assert_abs_diff_eq!(rate(3.0, 180e3), 360e3, epsilon = 1e-6);
    }

    #[test]
    fn single_path_channel_has_unit_alpha() {
        let cfg = ScatterConfig {
            num_paths: 1,
            ..ScatterConfig::default()
        };
        let p = ScatterProfile::draw(&cfg, 3).unwrap();
        assert_eq!(p.alphas.len(), 1);
        assert_abs_diff_eq!(p.alphas[0].norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn power_is_normalized() {
        let p = ScatterProfile::draw(&ScatterConfig::default(), 9).unwrap();
        let total: f64 = p.alphas.iter().map(|z| z.norm_sqr()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn snr_dimension_mismatch_is_an_error() {
        let h = DMatrix::<Complex64>::zeros(2, 3);
        let w = ComplexBeamVector {
            entries: vec![Complex64::new(1.0, 0.0); 2],
        };
        assert!(snr(&w, &w, &h, 1.0, 1.0, &NoiseModel::default()).is_err());
    }
}
