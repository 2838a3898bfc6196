//! AE, VAE and VQ-VAE predictors over a shared convolutional trunk.

mod arch;
mod bundle;
mod checkpoint;
mod vq;

use std::fmt;
use std::str::FromStr;

pub use arch::{ArchitectureSpec, ConvLayer, DEFAULT_CODEBOOK_SIZE, DEFAULT_LATENT_DIM};
pub use bundle::{
    param_layout, reparameterize, Aux, Encoded, Forward, Latent, LinkTx, Mode, ModelBundle,
    CODEBOOK,
};
pub use checkpoint::{load_model, read_model, save_model, write_model};
pub use vq::{
    check_codebook, codebook_from_rows, nearest_codewords, squared_distance, vq_quantize,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Ae,
    Vae,
    VqVae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [Self::Ae, Self::Vae, Self::VqVae];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ae => "ae",
            Self::Vae => "vae",
            Self::VqVae => "vqvae",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', '_'], "")
            .as_str()
        {
            "ae" => Ok(Self::Ae),
            "vae" => Ok(Self::Vae),
            "vqvae" => Ok(Self::VqVae),
            _ => Err(Error::Config(format!("unknown model kind `{s}`"))),
        }
    }
}
