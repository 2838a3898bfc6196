//! Clustered delay-line channel synthesis and datasets.

mod dataset;
mod profile;

pub use dataset::{
    generate_dataset, load_dataset, read_dataset, sample_seed, save_dataset, write_dataset,
    Dataset, Provenance,
};
pub use profile::{delay_moments, make_profile, Cluster, ClusterProfile, ProfileKind};

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream, tag};
use crate::tensor::Tensor;
use crate::Real;

pub const DEFAULT_DELAY_SPREAD_S: f64 = 30e-9;

/// Array, numerology and antenna-split configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub num_antennas: usize,
    /// Element spacing in wavelengths.
    pub antenna_spacing: f64,
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub delay_spread_s: f64,
    pub max_doppler_hz: f64,
    /// Antennas whose channel is observed (model input).
    pub observed: Vec<usize>,
    /// Antennas whose channel is predicted (model target).
    pub predicted: Vec<usize>,
}

impl Default for ChannelConfig {
    /// Desk-scale grid: 4 antennas, 64 subcarriers, 16 symbols, {0,1} → {2,3}.
    fn default() -> Self {
        Self {
            num_antennas: 4,
            antenna_spacing: 0.5,
            carrier_hz: 40e9,
            subcarrier_spacing_hz: 15e3,
            num_subcarriers: 64,
            num_symbols: 16,
            delay_spread_s: DEFAULT_DELAY_SPREAD_S,
            max_doppler_hz: 30.0,
            observed: vec![0, 1],
            predicted: vec![2, 3],
        }
    }
}

impl ChannelConfig {
    /// 16 receive antennas over a 624 × 140 grid.
    pub fn full_scale() -> Self {
        Self {
            num_antennas: 16,
            num_subcarriers: 624,
            num_symbols: 140,
            ..Self::default()
        }
    }

    pub fn m_s(&self) -> usize {
        self.observed.len()
    }

    pub fn m_r(&self) -> usize {
        self.predicted.len()
    }

    /// OFDM symbol duration without cyclic prefix.
    pub fn symbol_time_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_antennas == 0 || self.num_subcarriers == 0 || self.num_symbols == 0 {
            return bad("antenna, subcarrier and symbol counts must be positive".into());
        }
        for (name, v) in [
            ("antenna_spacing", self.antenna_spacing),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
            ("delay_spread_s", self.delay_spread_s),
            ("carrier_hz", self.carrier_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.max_doppler_hz >= 0.0 && self.max_doppler_hz.is_finite()) {
            return bad(format!(
                "max_doppler_hz must be >= 0, got {}",
                self.max_doppler_hz
            ));
        }
        if self.observed.is_empty() || self.predicted.is_empty() {
            return bad("observed and predicted antenna sets must be non-empty".into());
        }
        if self.m_s() + self.m_r() > self.num_antennas {
            return bad(format!(
                "m_s + m_r = {} exceeds {} antennas",
                self.m_s() + self.m_r(),
                self.num_antennas
            ));
        }
        let mut seen = vec![false; self.num_antennas];
        for &a in self.observed.iter().chain(&self.predicted) {
            if a >= self.num_antennas {
                return bad(format!("antenna index {a} out of range"));
            }
            if std::mem::replace(&mut seen[a], true) {
                return bad(format!("antenna {a} appears twice in the split"));
            }
        }
        Ok(())
    }
}

/// Complex channel grid over (antenna, subcarrier, symbol), stored as two
/// real planes in row-major `[k][f][t]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ChannelSample {
    pub fn zeros(num_antennas: usize, num_subcarriers: usize, num_symbols: usize) -> Self {
        let n = num_antennas * num_subcarriers * num_symbols;
        Self {
            num_antennas,
            num_subcarriers,
            num_symbols,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    #[inline]
    pub fn index(&self, k: usize, f: usize, t: usize) -> usize {
        (k * self.num_subcarriers + f) * self.num_symbols + t
    }

    pub fn get(&self, k: usize, f: usize, t: usize) -> Complex64 {
        let i = self.index(k, f, t);
        Complex64::new(self.re[i], self.im[i])
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        let s: f64 = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum();
        s / self.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    /// Scale to unit mean power. Returns the applied factor.
    fn normalize(&mut self) -> f64 {
        let p = self.mean_power();
        if p <= 0.0 {
            return 1.0;
        }
        let s = p.sqrt().recip();
        self.re
            .iter_mut()
            .chain(self.im.iter_mut())
            .for_each(|v| *v *= s);
        s
    }
}

/// Per-cluster phases `φ_p ~ U[0, 2π)` for a sample seed.
pub fn cluster_phases(profile: &ClusterProfile, seed: u64) -> Vec<f64> {
    let mut rng = stream(derive_seed(seed, &[tag::PHASE]));
    profile
        .clusters
        .iter()
        .map(|_| TAU * rng.gen::<f64>())
        .collect()
}

/// Draw one channel realization; only the cluster phases are random.
pub fn synthesize_channel(
    profile: &ClusterProfile,
    config: &ChannelConfig,
    seed: u64,
) -> Result<ChannelSample> {
    synthesize_with_phases(profile, config, &cluster_phases(profile, seed))
}

/// Sum-of-clusters OFDM response for explicit cluster phases, normalized to
/// unit mean power:
///
/// `h_k(f, t) = Σ_p √P_p · e^{jφ_p} · e^{-jπ·2d·k·sin θ_p} · e^{j2π·ν·cos α_p·t·T_sym} · e^{-j2π·f·Δf·τ_p}`
pub fn synthesize_with_phases(
    profile: &ClusterProfile,
    config: &ChannelConfig,
    phases: &[f64],
) -> Result<ChannelSample> {
    config.validate()?;
    if phases.len() != profile.clusters.len() {
        return Err(Error::Config(format!(
            "{} phases for {} clusters",
            phases.len(),
            profile.clusters.len()
        )));
    }
    let (nk, nf, nt) = (
        config.num_antennas,
        config.num_subcarriers,
        config.num_symbols,
    );
    let t_sym = config.symbol_time_s();
    let mut sample = ChannelSample::zeros(nk, nf, nt);
    let mut freq = vec![Complex64::default(); nf];
    let mut time = vec![Complex64::default(); nt];
    for (c, &phi) in profile.clusters.iter().zip(phases) {
        let amp = Complex64::from_polar(c.power.sqrt(), phi);
        let steer_step = -PI * 2.0 * config.antenna_spacing * c.aoa_rad.sin();
        let doppler_step = TAU * config.max_doppler_hz * c.doppler_angle_rad.cos() * t_sym;
        let delay_step = -TAU * config.subcarrier_spacing_hz * c.delay_s;
        for (f, v) in freq.iter_mut().enumerate() {
            *v = Complex64::from_polar(1.0, delay_step * f as f64);
        }
        for (t, v) in time.iter_mut().enumerate() {
            *v = Complex64::from_polar(1.0, doppler_step * t as f64);
        }
        for k in 0..nk {
            let ak = amp * Complex64::from_polar(1.0, steer_step * k as f64);
            for (f, fv) in freq.iter().enumerate() {
                let akf = ak * fv;
                let base = (k * nf + f) * nt;
                for (t, tv) in time.iter().enumerate() {
                    let h = akf * tv;
                    sample.re[base + t] += h.re;
                    sample.im[base + t] += h.im;
                }
            }
        }
    }
    sample.normalize();
    Ok(sample)
}

/// Real tensor `[2·|antennas|, F, T]` with channels `(re a0, im a0, re a1, …)`.
pub fn antenna_tensor<T: Real>(sample: &ChannelSample, antennas: &[usize]) -> Result<Tensor<T>> {
    let (nf, nt) = (sample.num_subcarriers, sample.num_symbols);
    let mut data = Vec::with_capacity(2 * antennas.len() * nf * nt);
    for &a in antennas {
        if a >= sample.num_antennas {
            return Err(Error::Config(format!("antenna index {a} out of range")));
        }
        let range = sample.index(a, 0, 0)..sample.index(a, 0, 0) + nf * nt;
        data.extend(sample.re[range.clone()].iter().map(|&v| T::lit(v)));
        data.extend(sample.im[range].iter().map(|&v| T::lit(v)));
    }
    Tensor::from_vec(&[2 * antennas.len(), nf, nt], data)
}

/// Cross-antenna split into `(H_s, H_r)`.
pub fn split_antennas<T: Real>(
    sample: &ChannelSample,
    config: &ChannelConfig,
) -> Result<(Tensor<T>, Tensor<T>)> {
    config.validate()?;
    Ok((
        antenna_tensor(sample, &config.observed)?,
        antenna_tensor(sample, &config.predicted)?,
    ))
}

/// Inverse of [`antenna_tensor`]: one complex `[F·T]` grid per antenna.
pub fn reassemble<T: Real>(tensor: &Tensor<T>) -> Result<Vec<Vec<Complex64>>> {
    let &[c, nf, nt] = tensor.shape() else {
        return Err(Error::shape(format!(
            "expected [2m, F, T], got {:?}",
            tensor.shape()
        )));
    };
    if c % 2 != 0 {
        return Err(Error::shape(format!("odd channel count {c}")));
    }
    let plane = nf * nt;
    Ok((0..c / 2)
        .map(|a| {
            let re = &tensor.data()[2 * a * plane..(2 * a + 1) * plane];
            let im = &tensor.data()[(2 * a + 1) * plane..(2 * a + 2) * plane];
            re.iter()
                .zip(im)
                .map(|(r, i)| Complex64::new(r.as_f64(), i.as_f64()))
                .collect()
        })
        .collect())
}
