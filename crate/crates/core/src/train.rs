//! Mini-batch Adam training.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::Tape;
use crate::channel::{split_antennas, ChannelConfig, Dataset};
use crate::error::{Error, Result};
use crate::link::{LinkConfig, Snr};
use crate::loss::{model_loss_graph, LossBreakdown, LossWeights};
use crate::model::{ArchitectureSpec, LinkTx, Mode, ModelBundle, ModelKind};
use crate::optim::{adam_step, AdamState};
use crate::rng::{derive_seed, stream, tag};
use crate::tensor::Tensor;
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub kl_weight: f64,
    pub commit_beta: f64,
    pub seed: u64,
    /// Train through a noisy link with γ drawn uniformly from this dB
    /// range per batch. `None` trains on the clean latent.
    pub noise_aware: Option<(f64, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            epochs: 30,
            kl_weight: 2.5e-5,
            commit_beta: 0.25,
            seed: 0,
            noise_aware: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad(format!("kl_weight must be >= 0, got {}", self.kl_weight));
        }
        if !(self.commit_beta >= 0.0 && self.commit_beta.is_finite()) {
            return bad(format!(
                "commit_beta must be >= 0, got {}",
                self.commit_beta
            ));
        }
        if let Some((lo, hi)) = self.noise_aware {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("noise_aware range [{lo}, {hi}] is invalid"));
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            kl_weight: self.kl_weight,
            commit_beta: self.commit_beta,
        }
    }
}

/// Epoch-averaged losses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    pub epochs: Vec<LossBreakdown>,
    /// Wall-clock duration of each epoch.
    pub epoch_seconds: Vec<f64>,
}

impl LossTrace {
    pub const CSV_HEADER: &'static str = "epoch,total,mse,kl,vq,commit";

    pub fn last(&self) -> Option<&LossBreakdown> {
        self.epochs.last()
    }

    /// Trace as CSV rows (without a trailing comment header).
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (i, b) in self.epochs.iter().enumerate() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                i + 1,
                b.total,
                b.mse,
                b.kl,
                b.vq,
                b.commit
            );
        }
        s
    }

    pub fn mean_epoch_seconds(&self) -> Option<f64> {
        if self.epoch_seconds.is_empty() {
            None
        } else {
            Some(self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64)
        }
    }
}

/// Input/target pairs `([N, 2·m_s, F, T], [N, 2·m_r, F, T])`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pairs<T> {
    pub inputs: Tensor<T>,
    pub targets: Tensor<T>,
}

impl<T: Real> Pairs<T> {
    pub fn from_dataset(dataset: &Dataset, config: &ChannelConfig) -> Result<Self> {
        dataset.check_config(config)?;
        if dataset.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        let (xs, ys): (Vec<_>, Vec<_>) = dataset
            .samples
            .iter()
            .map(|s| split_antennas::<T>(s, config))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(Self {
            inputs: Tensor::stack(&xs.iter().collect::<Vec<_>>())?,
            targets: Tensor::stack(&ys.iter().collect::<Vec<_>>())?,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `indices` of the inputs and targets.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((
            gather(&self.inputs, indices)?,
            gather(&self.targets, indices)?,
        ))
    }
}

fn gather<T: Real>(t: &Tensor<T>, indices: &[usize]) -> Result<Tensor<T>> {
    let mut shape = t.shape().to_vec();
    shape[0] = indices.len();
    let mut data = Vec::with_capacity(shape.iter().product());
    for &i in indices {
        data.extend_from_slice(t.outer(i));
    }
    Tensor::from_vec(&shape, data)
}

/// Default architecture for a channel configuration's antenna split.
pub fn default_arch(config: &ChannelConfig) -> Result<ArchitectureSpec> {
    ArchitectureSpec::default_for(
        2 * config.m_s(),
        2 * config.m_r(),
        config.num_subcarriers,
        config.num_symbols,
    )
}

/// One optimizer step on a batch; returns the batch losses.
#[allow(clippy::too_many_arguments)]
fn train_step<T: Real>(
    model: &mut ModelBundle<T>,
    adam: &mut AdamState<T>,
    x: Tensor<T>,
    y: Tensor<T>,
    link: Option<(&LinkConfig, &[u64])>,
    eps_seed: u64,
    weights: LossWeights,
) -> Result<(LossBreakdown, usize)> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape, true);
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let link = link.map(|(config, sample_ids)| LinkTx { config, sample_ids });
    let fwd = model.forward_graph(&mut tape, &bound, xv, Mode::Train, link, eps_seed)?;
    let (loss, breakdown) = model_loss_graph(&mut tape, &fwd, yv, weights)?;
    if !breakdown.is_finite() {
        return Err(Error::Degenerate(format!(
            "non-finite loss {}",
            breakdown.total
        )));
    }
    tape.backward(loss)?;
    let bytes = tape.live_bytes();
    let grads: Vec<Vec<T>> = bound
        .vars()
        .iter()
        .map(|&v| {
            tape.take_grad(v)
                .expect("trainable leaves receive gradients")
        })
        .collect();
    adam_step(&mut model.params, &grads, adam)?;
    Ok((breakdown, bytes))
}

/// Train a fresh model of `kind` on `pairs`.
pub fn train_pairs<T: Real>(
    kind: ModelKind,
    pairs: &Pairs<T>,
    arch: ArchitectureSpec,
    cfg: &TrainConfig,
) -> Result<(ModelBundle<T>, LossTrace)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let mut model = ModelBundle::new(kind, arch, cfg.seed)?;
    model.check_input(pairs.inputs.shape())?;
    let mut adam = AdamState::new(&model.params, T::lit(cfg.lr));
    let weights = cfg.weights();
    let mut trace = LossTrace::default();
    let n = pairs.len();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut stream(derive_seed(
            cfg.seed,
            &[tag::SHUFFLE, epoch as u64],
        )));
        let mut sum = LossBreakdown::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let step_seed = derive_seed(cfg.seed, &[epoch as u64, b as u64]);
            let link = cfg.noise_aware.map(|(lo, hi)| {
                let mut rng = stream(derive_seed(step_seed, &[tag::TRAIN_SNR]));
                let db = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                LinkConfig::new(Snr::Db(db), derive_seed(step_seed, &[tag::LINK]))
            });
            let ids: Vec<u64> = chunk.iter().map(|&i| i as u64).collect();
            let (x, y) = pairs.batch(chunk)?;
            let link_ref = link.as_ref().map(|l| (l, ids.as_slice()));
            let diverged = |e: Error| match e {
                Error::NonFiniteGradient { .. } | Error::Degenerate(_) => Error::Diverged {
                    epoch: epoch + 1,
                    reason: e.to_string(),
                },
                other => other,
            };
            let (bd, _) = train_step(&mut model, &mut adam, x, y, link_ref, step_seed, weights)
                .map_err(diverged)?;
            sum.accumulate(&bd, chunk.len() as f64 / n as f64);
        }
        trace.epochs.push(sum);
        trace.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok((model, trace))
}

/// Train on a dataset using `config`'s antenna split.
pub fn train<T: Real>(
    kind: ModelKind,
    dataset: &Dataset,
    config: &ChannelConfig,
    arch: ArchitectureSpec,
    cfg: &TrainConfig,
) -> Result<(ModelBundle<T>, LossTrace)> {
    let pairs = Pairs::from_dataset(dataset, config)?;
    train_pairs(kind, &pairs, arch, cfg)
}

/// Time `steps` optimizer steps on the first batch of `pairs` and return
/// the mean seconds per step and the largest tape footprint seen.
pub fn time_train_steps<T: Real>(
    model: &ModelBundle<T>,
    pairs: &Pairs<T>,
    cfg: &TrainConfig,
    steps: usize,
) -> Result<(f64, usize)> {
    let mut model = model.clone();
    let mut adam = AdamState::new(&model.params, T::lit(cfg.lr));
    let idx: Vec<usize> = (0..cfg.batch_size.min(pairs.len())).collect();
    let mut peak = 0;
    let started = Instant::now();
    for s in 0..steps.max(1) {
        let (x, y) = pairs.batch(&idx)?;
        let (_, bytes) = train_step(&mut model, &mut adam, x, y, None, s as u64, cfg.weights())?;
        peak = peak.max(bytes);
    }
    Ok((started.elapsed().as_secs_f64() / steps.max(1) as f64, peak))
}
