use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::link::{batch_noise, LinkConfig};
use crate::params::{Bound, ParamSet};
use crate::rng::{derive_seed, gaussian_vec, tag};
use crate::tensor::{Init, Tensor};
use crate::Real;

use super::arch::{ArchitectureSpec, ConvLayer};
use super::vq::{check_codebook, nearest_codewords};
use super::ModelKind;

pub const CODEBOOK: &str = "codebook";

/// Forward-pass mode. Training samples the VAE posterior and uses the
/// straight-through path for VQ-VAE; evaluation is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Link noise applied to the latent inside a forward pass; row `i` of the
/// batch is sample `sample_ids[i]` of the link's noise streams.
#[derive(Debug, Clone, Copy)]
pub struct LinkTx<'a> {
    pub config: &'a LinkConfig,
    pub sample_ids: &'a [u64],
}

/// Encoder output on a tape.
#[derive(Debug, Clone, Copy)]
pub enum Encoded {
    Latent(Var),
    Gaussian { mu: Var, logvar: Var },
}

/// Model-specific values the losses need.
#[derive(Debug, Clone)]
pub enum Aux {
    None,
    Gaussian {
        mu: Var,
        logvar: Var,
    },
    Quantized {
        z_e: Var,
        z_q: Var,
        indices: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub prediction: Var,
    pub aux: Aux,
}

/// Tensor-level encoder output.
#[derive(Debug, Clone, PartialEq)]
pub enum Latent<T> {
    Grid(Tensor<T>),
    Gaussian { mu: Tensor<T>, logvar: Tensor<T> },
}

/// Parameters and architecture of one trained or initialized model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle<T> {
    pub kind: ModelKind,
    pub arch: ArchitectureSpec,
    pub params: ParamSet<T>,
}

/// Expected `(name, shape)` list for a kind and architecture, in storage order.
pub fn param_layout(kind: ModelKind, arch: &ArchitectureSpec) -> Result<Vec<(String, Vec<usize>)>> {
    arch.validate()?;
    let mut out = Vec::new();
    let mut c = arch.input[0];
    let trunk = match kind {
        ModelKind::Vae => arch.encoder.len() - 1,
        _ => arch.encoder.len(),
    };
    for (i, l) in arch.encoder[..trunk].iter().enumerate() {
        out.push((
            format!("enc.{i}.weight"),
            vec![l.out_channels, c, l.kernel[0], l.kernel[1]],
        ));
        out.push((format!("enc.{i}.bias"), vec![l.out_channels]));
        c = l.out_channels;
    }
    if kind == ModelKind::Vae {
        let l = arch.encoder[trunk];
        for head in ["mu", "logvar"] {
            out.push((
                format!("vae.{head}.weight"),
                vec![l.out_channels, c, l.kernel[0], l.kernel[1]],
            ));
            out.push((format!("vae.{head}.bias"), vec![l.out_channels]));
        }
        c = l.out_channels;
    }
    for (i, l) in arch.decoder.iter().enumerate() {
        out.push((
            format!("dec.{i}.weight"),
            vec![c, l.out_channels, l.kernel[0], l.kernel[1]],
        ));
        out.push((format!("dec.{i}.bias"), vec![l.out_channels]));
        c = l.out_channels;
    }
    if kind == ModelKind::VqVae {
        out.push((
            CODEBOOK.to_string(),
            vec![arch.codebook_size, arch.latent_dim],
        ));
    }
    Ok(out)
}

impl<T: Real> ModelBundle<T> {
    /// Fresh model. Weights are He-normal (unit-gain for layers without a
    /// following ReLU), biases zero, codebook uniform on `(-1/k, 1/k)`.
    pub fn new(kind: ModelKind, arch: ArchitectureSpec, seed: u64) -> Result<Self> {
        let layout = param_layout(kind, &arch)?;
        let mut params = ParamSet::new();
        let last_dec = format!("dec.{}.weight", arch.decoder.len() - 1);
        let last_enc = format!("enc.{}.weight", arch.encoder.len() - 1);
        for (i, (name, shape)) in layout.into_iter().enumerate() {
            let pseed = derive_seed(seed, &[tag::INIT, i as u64]);
            let init = if name == CODEBOOK {
                let k = arch.codebook_size as f64;
                Init::Uniform {
                    seed: pseed,
                    low: -1.0 / k,
                    high: 1.0 / k,
                }
            } else if name.ends_with(".bias") {
                Init::Zeros
            } else {
                let linear_out = name == last_dec || name == last_enc || name.starts_with("vae.");
                let gain = if linear_out { 1.0 } else { 2.0 };
                let fan_in = if name.starts_with("dec.") {
                    let stride = arch.decoder[decoder_index(&name)].stride;
                    (shape[0] * shape[2] * shape[3]) as f64 / (stride * stride) as f64
                } else {
                    (shape[1] * shape[2] * shape[3]) as f64
                };
                Init::Gaussian {
                    seed: pseed,
                    mean: 0.0,
                    std: (gain / fan_in).sqrt(),
                }
            };
            params.insert(name, Tensor::create(&shape, init)?)?;
        }
        let model = Self { kind, arch, params };
        if let Some(cb) = model.codebook() {
            check_codebook(cb)?;
        }
        Ok(model)
    }

    /// Reassemble from stored parameters, checking names and shapes.
    pub fn from_params(
        kind: ModelKind,
        arch: ArchitectureSpec,
        params: ParamSet<T>,
    ) -> Result<Self> {
        let layout = param_layout(kind, &arch)?;
        if layout.len() != params.len() {
            return Err(Error::Contract(format!(
                "{kind} expects {} parameter tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), (pn, pt)) in layout.iter().zip(params.iter()) {
            if name != pn || shape.as_slice() != pt.shape() {
                return Err(Error::Contract(format!(
                    "parameter `{pn}` {:?} where `{name}` {shape:?} was expected",
                    pt.shape()
                )));
            }
        }
        Ok(Self { kind, arch, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn codebook(&self) -> Option<&Tensor<T>> {
        self.params.get(CODEBOOK)
    }

    fn index(&self, name: &str) -> usize {
        self.params
            .position(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from a validated bundle"))
    }

    /// Check a batch `[N, C, H, W]` (or single `[C, H, W]`) against the input.
    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let chw = match shape {
            [c, h, w] | [_, c, h, w] => [*c, *h, *w],
            _ => {
                return Err(Error::shape(format!(
                    "input must be [C,H,W] or [N,C,H,W], got {shape:?}"
                )))
            }
        };
        if chw != self.arch.input {
            return Err(Error::shape(format!(
                "input {chw:?} does not match model input {:?}",
                self.arch.input
            )));
        }
        Ok(())
    }

    fn layer(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        prefix: &str,
        x: Var,
        layer: &ConvLayer,
        transpose: bool,
    ) -> Result<Var> {
        let w = bound.var(self.index(&format!("{prefix}.weight")));
        let b = bound.var(self.index(&format!("{prefix}.bias")));
        let y = if transpose {
            tape.conv_transpose2d(x, w, layer.stride, layer.padding)?
        } else {
            tape.conv2d(x, w, layer.stride, layer.padding)?
        };
        let shape = tape.shape(y).to_vec();
        let bias = tape.expand_channels(b, &shape)?;
        tape.add(y, bias)
    }

    /// Encoder `h(·)` on a tape. VAE returns the mean and log-variance grids.
    pub fn encode_graph(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Encoded> {
        self.check_input(tape.shape(x))?;
        let layers = &self.arch.encoder;
        let mut h = x;
        for (i, l) in layers.iter().enumerate() {
            let last = i + 1 == layers.len();
            if last && self.kind == ModelKind::Vae {
                let mu = self.layer(tape, bound, "vae.mu", h, l, false)?;
                let logvar = self.layer(tape, bound, "vae.logvar", h, l, false)?;
                return Ok(Encoded::Gaussian { mu, logvar });
            }
            h = self.layer(tape, bound, &format!("enc.{i}"), h, l, false)?;
            if !last {
                h = tape.relu(h);
            }
        }
        Ok(Encoded::Latent(h))
    }

    /// Decoder `g(·)` on a tape.
    pub fn decode_graph(&self, tape: &mut Tape<T>, bound: &Bound, z: Var) -> Result<Var> {
        let latent = self.arch.latent_shape()?;
        let zs = tape.shape(z);
        let grid = match zs {
            [c, h, w] | [_, c, h, w] => [*c, *h, *w],
            _ => {
                return Err(Error::shape(format!(
                    "latent must be 3-D or 4-D, got {zs:?}"
                )))
            }
        };
        if grid != latent {
            return Err(Error::shape(format!(
                "latent {grid:?} does not match {latent:?}"
            )));
        }
        let layers = &self.arch.decoder;
        let mut h = z;
        for (i, l) in layers.iter().enumerate() {
            h = self.layer(tape, bound, &format!("dec.{i}"), h, l, true)?;
            if i + 1 != layers.len() {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Snap each latent vector of `z` to its nearest codeword. The returned
    /// grid is differentiable with respect to the codebook only.
    pub fn quantize_graph(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        z: Var,
    ) -> Result<(Var, Vec<usize>)> {
        let cb_idx = self
            .params
            .position(CODEBOOK)
            .ok_or_else(|| Error::Contract(format!("{} model has no codebook", self.kind)))?;
        let cb = bound.var(cb_idx);
        let shape = tape.shape(z).to_vec();
        let rows = tape.channels_to_rows(z)?;
        let d = self.arch.latent_dim;
        let indices = nearest_codewords(tape.value(rows).data(), tape.value(cb).data(), d);
        let gathered = tape.gather_rows(cb, &indices)?;
        let z_q = tape.rows_to_channels(gathered, &shape)?;
        Ok((z_q, indices))
    }

    fn apply_link(&self, tape: &mut Tape<T>, z: Var, link: Option<LinkTx<'_>>) -> Result<Var> {
        let Some(link) = link else {
            return Ok(z);
        };
        let value = tape.value(z);
        let batched = if value.shape().len() == 3 {
            value.reshaped(&[1, value.shape()[0], value.shape()[1], value.shape()[2]])?
        } else {
            value.clone()
        };
        match batch_noise(&batched, link.config, link.sample_ids)? {
            None => Ok(z),
            Some(noise) => {
                let noise = tape.constant(noise.reshaped(value.shape())?);
                tape.add(z, noise)
            }
        }
    }

    /// Full prediction pipeline `Ĥ_r = g(link(h(H_s)))`.
    ///
    /// * AE: `g(h(x))`.
    /// * VAE: `g(μ + σ ⊙ ε)` in training, `g(μ)` in evaluation.
    /// * VQ-VAE: `z_e → link → quantize → g`, through the straight-through
    ///   estimator in training.
    ///
    /// `eps_seed` seeds the VAE's reparameterization noise.
    pub fn forward_graph(
        &self,
        tape: &mut Tape<T>,
        bound: &Bound,
        x: Var,
        mode: Mode,
        link: Option<LinkTx<'_>>,
        eps_seed: u64,
    ) -> Result<Forward> {
        match (self.kind, self.encode_graph(tape, bound, x)?) {
            (ModelKind::Ae, Encoded::Latent(z)) => {
                let z = self.apply_link(tape, z, link)?;
                let prediction = self.decode_graph(tape, bound, z)?;
                Ok(Forward {
                    prediction,
                    aux: Aux::None,
                })
            }
            (ModelKind::Vae, Encoded::Gaussian { mu, logvar }) => {
                let z = match mode {
                    Mode::Train => {
                        let eps = gaussian_vec(
                            derive_seed(eps_seed, &[tag::REPARAM]),
                            tape.value(mu).numel(),
                        );
                        let eps = Tensor::from_vec(tape.shape(mu), eps)?;
                        reparameterize(tape, mu, logvar, eps)?
                    }
                    Mode::Eval => mu,
                };
                let z = self.apply_link(tape, z, link)?;
                let prediction = self.decode_graph(tape, bound, z)?;
                Ok(Forward {
                    prediction,
                    aux: Aux::Gaussian { mu, logvar },
                })
            }
            (ModelKind::VqVae, Encoded::Latent(z_e)) => {
                let received = self.apply_link(tape, z_e, link)?;
                let (z_q, indices) = self.quantize_graph(tape, bound, received)?;
                let decoder_in = match mode {
                    Mode::Train => tape.straight_through(received, z_q)?,
                    Mode::Eval => z_q,
                };
                let prediction = self.decode_graph(tape, bound, decoder_in)?;
                Ok(Forward {
                    prediction,
                    aux: Aux::Quantized { z_e, z_q, indices },
                })
            }
            (kind, _) => Err(Error::Contract(format!(
                "encoder output does not fit {kind}"
            ))),
        }
    }

    /// Encoder on tensors (evaluation, no gradients).
    pub fn encode(&self, x: &Tensor<T>) -> Result<Latent<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        Ok(match self.encode_graph(&mut tape, &bound, xv)? {
            Encoded::Latent(z) => Latent::Grid(tape.value(z).clone()),
            Encoded::Gaussian { mu, logvar } => Latent::Gaussian {
                mu: tape.value(mu).clone(),
                logvar: tape.value(logvar).clone(),
            },
        })
    }

    /// Decoder on tensors.
    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let out = self.decode_graph(&mut tape, &bound, zv)?;
        Ok(tape.value(out).clone())
    }

    /// Evaluation-mode prediction, optionally through a noisy link.
    pub fn predict(&self, x: &Tensor<T>, link: Option<LinkTx<'_>>) -> Result<Tensor<T>> {
        Ok(self.predict_traced(x, link)?.0)
    }

    /// [`ModelBundle::predict`] plus the bytes held by the forward pass.
    pub fn predict_traced(
        &self,
        x: &Tensor<T>,
        link: Option<LinkTx<'_>>,
    ) -> Result<(Tensor<T>, usize)> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let fwd = self.forward_graph(&mut tape, &bound, xv, Mode::Eval, link, 0)?;
        let bytes = tape.live_bytes();
        Ok((tape.value(fwd.prediction).clone(), bytes))
    }
}

fn decoder_index(name: &str) -> usize {
    name.split('.')
        .nth(1)
        .and_then(|s| s.parse().ok())
        .expect("decoder parameter names are dec.<i>.<field>")
}

/// `z = μ + exp(½·logvar) ⊙ ε` with `ε` held constant.
pub fn reparameterize<T: Real>(
    tape: &mut Tape<T>,
    mu: Var,
    logvar: Var,
    eps: Tensor<T>,
) -> Result<Var> {
    let half = tape.mul_scalar(logvar, T::lit(0.5));
    let std = tape.exp(half);
    let eps = tape.constant(eps);
    let noise = tape.mul(std, eps)?;
    tape.add(mu, noise)
}
