//! AWGN feedback link for latent grids.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{vq_quantize, ModelBundle, ModelKind};
use crate::rng::{derive_seed, stream, tag, Gaussian};
use crate::tensor::Tensor;
use crate::Real;

/// Link signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    /// Noiseless identity link.
    Off,
    Db(f64),
}

impl Snr {
    /// Sort key treating `Off` as +∞.
    pub fn as_db(self) -> f64 {
        match self {
            Snr::Off => f64::INFINITY,
            Snr::Db(v) => v,
        }
    }

    fn stream_tag(self) -> u64 {
        match self {
            Snr::Off => u64::MAX,
            Snr::Db(v) => v.to_bits(),
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Off => f.write_str("off"),
            Snr::Db(v) => write!(f, "{v}"),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("off") || t.eq_ignore_ascii_case("inf") {
            return Ok(Snr::Off);
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Snr::Db(v)),
            _ => Err(Error::Config(format!("invalid SNR `{s}`"))),
        }
    }
}

/// Parse a comma-separated SNR list such as `"-10,0,10,off"`.
pub fn parse_snr_list(s: &str) -> Result<Vec<Snr>> {
    let list: Vec<Snr> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Config("empty SNR list".into()));
    }
    Ok(list)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub snr: Snr,
    pub seed: u64,
}

impl LinkConfig {
    pub fn new(snr: Snr, seed: u64) -> Self {
        Self { snr, seed }
    }

    pub fn off() -> Self {
        Self::new(Snr::Off, 0)
    }

    pub fn is_off(&self) -> bool {
        self.snr == Snr::Off
    }

    /// Noise stream seed of sample `index`; independent of batching.
    pub fn sample_seed(&self, index: u64) -> u64 {
        derive_seed(self.seed, &[tag::LINK, self.snr.stream_tag(), index])
    }
}

/// Additive noise for one latent grid: `σ² = mean(z²) / 10^(γ/10)`.
pub fn latent_noise<T: Real>(z: &[T], snr_db: f64, seed: u64) -> Vec<T> {
    let n = z.len() as f64;
    let power = z.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>() / n;
    let std = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut g = Gaussian::new(stream(seed));
    z.iter().map(|_| T::lit(std * g.sample())).collect()
}

/// Noise for a batch `[N, …]` where row `i` is sample `sample_ids[i]`.
/// `None` when the link is off.
pub fn batch_noise<T: Real>(
    z: &Tensor<T>,
    link: &LinkConfig,
    sample_ids: &[u64],
) -> Result<Option<Tensor<T>>> {
    let Snr::Db(db) = link.snr else {
        return Ok(None);
    };
    let n = z.shape()[0];
    if sample_ids.len() != n {
        return Err(Error::shape(format!(
            "{} sample ids for a batch of {n}",
            sample_ids.len()
        )));
    }
    let mut data = Vec::with_capacity(z.numel());
    for (i, &id) in sample_ids.iter().enumerate() {
        data.extend(latent_noise(z.outer(i), db, link.sample_seed(id)));
    }
    Ok(Some(Tensor::from_vec(z.shape(), data)?))
}

/// Transmit one latent grid (treated as sample 0): `z̃ = z + n`.
/// An off link returns an exact copy.
pub fn awgn<T: Real>(z: &Tensor<T>, link: &LinkConfig) -> Tensor<T> {
    match link.snr {
        Snr::Off => z.clone(),
        Snr::Db(db) => {
            let noise = latent_noise(z.data(), db, link.sample_seed(0));
            let data = z.data().iter().zip(noise).map(|(&a, b)| a + b).collect();
            Tensor::raw(z.shape().to_vec(), data)
        }
    }
}

/// What the decoder receives for encoder output `z_e`: the noisy latent
/// for AE/VAE, the noisy latent snapped back onto the codebook for VQ-VAE.
pub fn transmit<T: Real>(
    model: &ModelBundle<T>,
    z_e: &Tensor<T>,
    link: &LinkConfig,
) -> Result<Tensor<T>> {
    let noisy = awgn(z_e, link);
    match model.kind {
        ModelKind::Ae | ModelKind::Vae => Ok(noisy),
        ModelKind::VqVae => {
            let codebook = model
                .codebook()
                .ok_or_else(|| Error::Contract("VQ-VAE bundle without a codebook".into()))?;
            Ok(vq_quantize(&noisy, codebook)?.0)
        }
    }
}
