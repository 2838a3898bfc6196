use crate::error::{Error, Result};
use crate::linalg::ConvGeom;

/// Convolution layer; a transposed convolution in decoder position.
/// Stride and padding apply to both spatial axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayer {
    pub out_channels: usize,
    /// `[kh, kw]`.
    pub kernel: [usize; 2],
    pub stride: usize,
    pub padding: usize,
}

impl ConvLayer {
    pub const fn new(out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            out_channels,
            kernel: [kernel, kernel],
            stride,
            padding,
        }
    }

    fn kernel_shape(&self, in_channels: usize) -> [usize; 4] {
        [
            self.out_channels,
            in_channels,
            self.kernel[0],
            self.kernel[1],
        ]
    }
}

/// Shared convolutional trunk of the three model kinds.
///
/// Encoder layers are convolutions with a ReLU between consecutive layers;
/// decoder layers are transposed convolutions likewise. For a VAE the last
/// encoder layer is duplicated into the mean and log-variance heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    /// Input `[C, H, W]`.
    pub input: [usize; 3],
    pub output_channels: usize,
    pub latent_dim: usize,
    pub codebook_size: usize,
    pub encoder: Vec<ConvLayer>,
    pub decoder: Vec<ConvLayer>,
}

pub const DEFAULT_LATENT_DIM: usize = 64;
pub const DEFAULT_CODEBOOK_SIZE: usize = 512;

impl ArchitectureSpec {
    /// conv(32, 3×3, /2) → conv(64, 3×3, /2) → conv(64, 1×1), mirrored.
    pub fn default_for(
        input_channels: usize,
        output_channels: usize,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        Self::mirrored(
            [input_channels, height, width],
            output_channels,
            DEFAULT_LATENT_DIM,
            DEFAULT_CODEBOOK_SIZE,
            &[
                ConvLayer::new(32, 3, 2, 1),
                ConvLayer::new(64, 3, 2, 1),
                ConvLayer::new(DEFAULT_LATENT_DIM, 1, 1, 0),
            ],
        )
    }

    /// Encoder as given; decoder mirrors it in reverse with transposed
    /// convolutions whose kernels are widened to restore each spatial extent
    /// exactly.
    pub fn mirrored(
        input: [usize; 3],
        output_channels: usize,
        latent_dim: usize,
        codebook_size: usize,
        encoder: &[ConvLayer],
    ) -> Result<Self> {
        let mut spatial = vec![(input[0], input[1], input[2])];
        let (mut c, mut h, mut w) = (input[0], input[1], input[2]);
        for l in encoder {
            let g = ConvGeom::conv2d(&[c, h, w], &l.kernel_shape(c), l.stride, l.padding)?;
            (c, h, w) = (l.out_channels, g.oh, g.ow);
            spatial.push((c, h, w));
        }
        let mut decoder = Vec::with_capacity(encoder.len());
        for (i, l) in encoder.iter().enumerate().rev() {
            let (c_prev, h_prev, w_prev) = spatial[i];
            let rem_h = (h_prev + 2 * l.padding - l.kernel[0]) % l.stride;
            let rem_w = (w_prev + 2 * l.padding - l.kernel[1]) % l.stride;
            let out = if i == 0 { output_channels } else { c_prev };
            decoder.push(ConvLayer {
                out_channels: out,
                kernel: [l.kernel[0] + rem_h, l.kernel[1] + rem_w],
                stride: l.stride,
                padding: l.padding,
            });
        }
        let spec = Self {
            input,
            output_channels,
            latent_dim,
            codebook_size,
            encoder: encoder.to_vec(),
            decoder,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Latent grid `[d, gh, gw]`.
    pub fn latent_shape(&self) -> Result<[usize; 3]> {
        let [mut c, mut h, mut w] = self.input;
        for l in &self.encoder {
            let g = ConvGeom::conv2d(&[c, h, w], &l.kernel_shape(c), l.stride, l.padding)?;
            (c, h, w) = (l.out_channels, g.oh, g.ow);
        }
        Ok([c, h, w])
    }

    /// Decoder output `[C, H, W]`.
    pub fn output_shape(&self) -> Result<[usize; 3]> {
        let [mut c, mut h, mut w] = self.latent_shape()?;
        for l in &self.decoder {
            let g = ConvGeom::transpose(
                &[c, h, w],
                &[c, l.out_channels, l.kernel[0], l.kernel[1]],
                l.stride,
                l.padding,
            )?;
            (c, h, w) = (l.out_channels, g.h, g.w);
        }
        Ok([c, h, w])
    }

    pub fn validate(&self) -> Result<()> {
        if self.input.contains(&0) || self.output_channels == 0 {
            return Err(Error::shape(format!("empty input {:?}", self.input)));
        }
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(Error::shape("encoder and decoder need at least one layer"));
        }
        if self.latent_dim == 0 || self.codebook_size == 0 {
            return Err(Error::Config(
                "latent_dim and codebook_size must be positive".into(),
            ));
        }
        for l in self.encoder.iter().chain(&self.decoder) {
            if l.out_channels == 0 || l.kernel.contains(&0) || l.stride == 0 {
                return Err(Error::shape(format!("degenerate layer {l:?}")));
            }
        }
        let latent = self.latent_shape()?;
        if latent[0] != self.latent_dim {
            return Err(Error::shape(format!(
                "encoder ends with {} channels, latent_dim is {}",
                latent[0], self.latent_dim
            )));
        }
        let out = self.output_shape()?;
        let want = [self.output_channels, self.input[1], self.input[2]];
        if out != want {
            return Err(Error::shape(format!(
                "decoder produces {out:?}, target is {want:?}"
            )));
        }
        Ok(())
    }
}
