use std::fs;
use std::path::{Path, PathBuf};

use vqmimo_core::channel::{
    generate_dataset, load_dataset, save_dataset, ChannelConfig, ClusterProfile, Dataset,
    ProfileKind,
};
use vqmimo_core::eval::{
    bench_csv, benchmark_many, evaluate_ood, evaluate_sweep, metrics_csv, provenance_comment,
    BenchConfig,
};
use vqmimo_core::link::parse_snr_list;
use vqmimo_core::model::{load_model, save_model, ModelKind};
use vqmimo_core::train::{train as train_model, Pairs};
use vqmimo_core::{Error, ModelBundle, Result};

use crate::config::RunConfig;
use crate::Common;

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        cfg.merge_json(&text)?;
    }
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

/// Channel configuration with the grid taken from `dataset`.
fn channel_for(cfg: &RunConfig, dataset: &Dataset) -> Result<ChannelConfig> {
    let mut c = cfg.channel()?;
    c.num_antennas = dataset.num_antennas;
    c.num_subcarriers = dataset.num_subcarriers;
    c.num_symbols = dataset.num_symbols;
    c.validate()?;
    Ok(c)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

pub fn gen(
    common: &Common,
    profile: &str,
    samples: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    full_scale: bool,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    if full_scale {
        cfg.full_scale();
    }
    if let Some(n) = samples {
        cfg.set("gen.samples", n.to_string())?;
    }
    if let Some(s) = seed {
        cfg.set("seed", s.to_string())?;
    }
    let kind: ProfileKind = profile.parse()?;
    let channel = cfg.channel()?;
    let p = ClusterProfile::builtin(kind, channel.delay_spread_s)?;
    let ds = generate_dataset(&p, &channel, cfg.num("gen.samples")?, cfg.num("seed")?)?;
    save_dataset(&ds, out)?;
    println!(
        "wrote {} samples of {} x {} x {} ({}) to {}; rms delay spread {:.3} ns (target {:.3} ns)",
        ds.len(),
        ds.num_antennas,
        ds.num_subcarriers,
        ds.num_symbols,
        kind,
        out.display(),
        p.rms_delay_spread() * 1e9,
        channel.delay_spread_s * 1e9
    );
    Ok(())
}

/// `model.mmdl` → `model.loss.csv`.
pub fn trace_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("loss.csv")
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    common: &Common,
    model: &str,
    data: &Path,
    out: &Path,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    for (k, v) in [
        ("train.epochs", epochs.map(|v| v.to_string())),
        ("train.lr", lr.map(|v| v.to_string())),
        ("train.batch_size", batch_size.map(|v| v.to_string())),
        ("train.seed", seed.map(|v| v.to_string())),
    ] {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    let kind: ModelKind = model.parse()?;
    let tcfg = cfg.train()?;
    let ds = load_dataset(data)?;
    let channel = channel_for(&cfg, &ds)?;
    let arch = cfg.arch(&channel)?;
    let (bundle, trace) = train_model::<f64>(kind, &ds, &channel, arch, &tcfg)?;
    save_model(&bundle, out)?;
    let comment = provenance_comment(tcfg.seed, &cfg.hash());
    write(&trace_path(out), &format!("{comment}\n{}", trace.to_csv()))?;
    match trace.last() {
        Some(b) => println!(
            "{kind}: {} epochs, final total={:.6e} mse={:.6e} kl={:.6e} vq={:.6e} commit={:.6e}",
            trace.epochs.len(),
            b.total,
            b.mse,
            b.kl,
            b.vq,
            b.commit
        ),
        None => println!("{kind}: 0 epochs, wrote initialized model"),
    }
    Ok(())
}

pub fn sweep(
    common: &Common,
    ckpt: &Path,
    data: &Path,
    snr: Option<&str>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(s) = snr {
        cfg.set("eval.snr", s)?;
    }
    if let Some(s) = seed {
        cfg.set("seed", s.to_string())?;
    }
    let snrs = parse_snr_list(cfg.get("eval.snr"))?;
    let model: ModelBundle = load_model(ckpt)?;
    let ds = load_dataset(data)?;
    let channel = channel_for(&cfg, &ds)?;
    let pairs = Pairs::from_dataset(&ds, &channel)?;
    let seed = cfg.num("seed")?;
    let rows = evaluate_sweep(&model, &pairs, ds.profile, &snrs, seed)?;
    write(
        out,
        &metrics_csv(&rows, &provenance_comment(seed, &cfg.hash())),
    )?;
    for r in &rows {
        println!(
            "{} {} snr={} nmse={:.2} dB",
            r.model, r.profile, r.snr, r.nmse_db
        );
    }
    Ok(())
}

pub fn parse_profiles(list: &str) -> Result<Vec<ProfileKind>> {
    list.split(',').map(str::parse).collect()
}

pub fn ood(
    common: &Common,
    ckpt: &Path,
    profiles: &str,
    samples: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(n) = samples {
        cfg.set("eval.ood_samples", n.to_string())?;
    }
    if let Some(s) = seed {
        cfg.set("seed", s.to_string())?;
    }
    let profiles = parse_profiles(profiles)?;
    let model: ModelBundle = load_model(ckpt)?;
    let channel = cfg.channel()?;
    let seed = cfg.num("seed")?;
    let rows = evaluate_ood(
        &model,
        &profiles,
        &channel,
        cfg.num("eval.ood_samples")?,
        seed,
    )?;
    write(
        out,
        &metrics_csv(&rows, &provenance_comment(seed, &cfg.hash())),
    )?;
    for r in &rows {
        println!(
            "{} {} snr={} nmse={:.2} dB",
            r.model, r.profile, r.snr, r.nmse_db
        );
    }
    Ok(())
}

pub fn bench(common: &Common, ckpts: &[PathBuf], iters: Option<usize>, out: &Path) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(n) = iters {
        cfg.set("bench.iters", n.to_string())?;
    }
    let models = ckpts
        .iter()
        .map(load_model)
        .collect::<Result<Vec<ModelBundle>>>()?;
    let seed = cfg.num("seed")?;
    let bcfg = BenchConfig {
        warmup: cfg.num("bench.warmup")?,
        iters: cfg.num("bench.iters")?,
        train_samples: cfg.num("gen.samples")?,
        seed,
        ..BenchConfig::default()
    };
    let refs: Vec<&ModelBundle> = models.iter().collect();
    let rows = benchmark_many(&refs, &bcfg, &cfg.train()?)?;
    write(
        out,
        &bench_csv(&rows, &provenance_comment(seed, &cfg.hash())),
    )?;
    let mut order: Vec<_> = rows.iter().collect();
    order.sort_by(|a, b| a.inference_ms_median.total_cmp(&b.inference_ms_median));
    let summary: Vec<String> = order
        .iter()
        .map(|r| {
            format!(
                "{} ({:.3} ms, {} params)",
                r.model, r.inference_ms_median, r.param_count
            )
        })
        .collect();
    println!("inference latency: {}", summary.join(" <= "));
    Ok(())
}
