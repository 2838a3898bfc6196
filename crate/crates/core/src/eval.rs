//! NMSE evaluation, SNR sweeps, out-of-distribution runs and benchmarks.

use std::fmt::Write as _;
use std::time::Instant;

use crate::channel::{generate_dataset, ChannelConfig, ClusterProfile, ProfileKind};
use crate::error::{Error, Result};
use crate::link::{LinkConfig, Snr};
use crate::loss::{nmse, nmse_db};
use crate::model::{LinkTx, ModelBundle, ModelKind};
use crate::rng::{derive_seed, gaussian_vec, tag};
use crate::tensor::Tensor;
use crate::train::{time_train_steps, Pairs, TrainConfig};
use crate::Real;

/// Samples per forward pass during evaluation. Results do not depend on it.
pub const EVAL_BATCH: usize = 64;

/// One `(model, profile, γ)` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: ModelKind,
    pub profile: ProfileKind,
    pub snr: Snr,
    pub nmse_db: f64,
    pub n_samples: usize,
}

/// Evaluation-mode predictions for every input, with sample `i` using the
/// link's noise stream `i`.
pub fn predict_all<T: Real>(
    model: &ModelBundle<T>,
    inputs: &Tensor<T>,
    link: &LinkConfig,
) -> Result<Tensor<T>> {
    let n = inputs.shape()[0];
    let mut data = Vec::new();
    let mut out_shape = Vec::new();
    for start in (0..n).step_by(EVAL_BATCH) {
        let end = (start + EVAL_BATCH).min(n);
        let mut shape = inputs.shape().to_vec();
        shape[0] = end - start;
        let x = Tensor::from_vec(
            &shape,
            (start..end)
                .flat_map(|i| inputs.outer(i).iter().copied())
                .collect(),
        )?;
        let ids: Vec<u64> = (start as u64..end as u64).collect();
        let tx = LinkTx {
            config: link,
            sample_ids: &ids,
        };
        let y = model.predict(&x, Some(tx))?;
        out_shape = y.shape().to_vec();
        data.extend(y.into_data());
    }
    out_shape[0] = n;
    Tensor::from_vec(&out_shape, data)
}

/// NMSE in dB over all samples concatenated, for each γ in `snrs`.
pub fn evaluate_sweep<T: Real>(
    model: &ModelBundle<T>,
    pairs: &Pairs<T>,
    profile: ProfileKind,
    snrs: &[Snr],
    seed: u64,
) -> Result<Vec<MetricRow>> {
    if snrs.is_empty() {
        return Err(Error::Config("SNR list is empty".into()));
    }
    model.check_input(pairs.inputs.shape())?;
    snrs.iter()
        .map(|&snr| {
            let pred = predict_all(model, &pairs.inputs, &LinkConfig::new(snr, seed))?;
            Ok(MetricRow {
                model: model.kind,
                profile,
                snr,
                nmse_db: nmse_db(nmse(&pairs.targets, &pred)?),
                n_samples: pairs.len(),
            })
        })
        .collect()
}

/// γ values reported by [`evaluate_ood`].
pub const OOD_SNRS: [Snr; 2] = [Snr::Db(30.0), Snr::Off];

/// Seed of the fresh test set drawn for `profile`.
pub fn test_set_seed(seed: u64, profile: ProfileKind) -> u64 {
    derive_seed(seed, &[tag::PROFILE, profile.id() as u64])
}

/// Test pairs for `profile`: `n` fresh samples from [`test_set_seed`].
pub fn test_pairs<T: Real>(
    profile: ProfileKind,
    config: &ChannelConfig,
    n: usize,
    seed: u64,
) -> Result<Pairs<T>> {
    let p = ClusterProfile::builtin(profile, config.delay_spread_s)?;
    let ds = generate_dataset(&p, config, n, test_set_seed(seed, profile))?;
    Pairs::from_dataset(&ds, config)
}

/// Evaluate on fresh test sets of each profile at γ ∈ {30 dB, off}.
pub fn evaluate_ood<T: Real>(
    model: &ModelBundle<T>,
    profiles: &[ProfileKind],
    config: &ChannelConfig,
    n: usize,
    seed: u64,
) -> Result<Vec<MetricRow>> {
    if profiles.is_empty() {
        return Err(Error::Config("no profiles to evaluate".into()));
    }
    let mut rows = Vec::new();
    for &p in profiles {
        let pairs = test_pairs(p, config, n, seed)?;
        rows.extend(evaluate_sweep(model, &pairs, p, &OOD_SNRS, seed)?);
    }
    Ok(rows)
}

pub const METRICS_HEADER: &str = "model,profile,snr_db,nmse_db,n_samples";
pub const BENCH_HEADER: &str =
    "model,inference_ms_median,train_s_per_epoch,param_count,peak_mem_bytes";

/// `# seed=…, version=…, config-hash=…` provenance line.
pub fn provenance_comment(seed: u64, config_hash: &str) -> String {
    format!(
        "# seed={seed}, version={}, config-hash={config_hash}",
        env!("CARGO_PKG_VERSION")
    )
}

pub fn metrics_csv(rows: &[MetricRow], comment: &str) -> String {
    let mut s = format!("{comment}\n{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{}",
            r.model, r.profile, r.snr, r.nmse_db, r.n_samples
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub model: ModelKind,
    pub inference_ms_median: f64,
    pub train_s_per_epoch: f64,
    pub param_count: usize,
    /// Parameters, Adam moments and the largest recorded training tape.
    pub peak_mem_bytes: usize,
}

pub fn bench_csv(rows: &[BenchRow], comment: &str) -> String {
    let mut s = format!("{comment}\n{BENCH_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{},{}",
            r.model, r.inference_ms_median, r.train_s_per_epoch, r.param_count, r.peak_mem_bytes
        );
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub warmup: usize,
    pub iters: usize,
    /// Training steps timed to estimate the epoch time.
    pub train_steps: usize,
    /// Samples per epoch the estimate is scaled to.
    pub train_samples: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup: 10,
            iters: 100,
            train_steps: 3,
            train_samples: 2048,
            seed: 0,
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn random_pairs<T: Real>(model: &ModelBundle<T>, n: usize, seed: u64) -> Result<Pairs<T>> {
    let [c, h, w] = model.arch.input;
    let out = model.arch.output_shape()?;
    let x = gaussian_vec(derive_seed(seed, &[0]), n * c * h * w);
    let y = gaussian_vec(derive_seed(seed, &[1]), n * out.iter().product::<usize>());
    Ok(Pairs {
        inputs: Tensor::from_vec(&[n, c, h, w], x)?,
        targets: Tensor::from_vec(&[n, out[0], out[1], out[2]], y)?,
    })
}

/// Benchmark several models. Single-sample inference timings are
/// interleaved across models so drift affects them equally.
pub fn benchmark_many<T: Real>(
    models: &[&ModelBundle<T>],
    cfg: &BenchConfig,
    train: &TrainConfig,
) -> Result<Vec<BenchRow>> {
    let samples = models
        .iter()
        .map(|m| random_pairs(m, 1, cfg.seed).map(|p| p.inputs))
        .collect::<Result<Vec<_>>>()?;
    let mut times = vec![Vec::with_capacity(cfg.iters); models.len()];
    for it in 0..cfg.warmup + cfg.iters {
        for (i, (m, x)) in models.iter().zip(&samples).enumerate() {
            let started = Instant::now();
            let y = m.predict(x, None)?;
            let ms = started.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(y);
            if it >= cfg.warmup {
                times[i].push(ms);
            }
        }
    }
    models
        .iter()
        .zip(times.iter_mut())
        .map(|(m, t)| {
            let batch = train.batch_size;
            let pairs = random_pairs(m, batch, cfg.seed)?;
            let (step_s, tape_bytes) = time_train_steps(m, &pairs, train, cfg.train_steps)?;
            let steps_per_epoch = cfg.train_samples.div_ceil(batch);
            Ok(BenchRow {
                model: m.kind,
                inference_ms_median: median(t),
                train_s_per_epoch: step_s * steps_per_epoch as f64,
                param_count: m.param_count(),
                peak_mem_bytes: 3 * m.params.bytes() + tape_bytes,
            })
        })
        .collect()
}

pub fn benchmark<T: Real>(
    model: &ModelBundle<T>,
    cfg: &BenchConfig,
    train: &TrainConfig,
) -> Result<BenchRow> {
    Ok(benchmark_many(&[model], cfg, train)?.remove(0))
}
