//! Phase-law and delay-spread oracles for the channel generator.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rustfft::FftPlanner;
use vqmimo_core::channel::{
    synthesize_channel, synthesize_with_phases, ChannelConfig, Cluster, ClusterProfile, ProfileKind,
};

pub fn single(delay_s: f64, aoa_deg: f64, doppler_deg: f64) -> ClusterProfile {
    ClusterProfile {
        kind: ProfileKind::CdlC,
        clusters: vec![Cluster {
            delay_s,
            power: 1.0,
            aoa_rad: aoa_deg.to_radians(),
            doppler_angle_rad: doppler_deg.to_radians(),
        }],
        los: false,
        k_factor_db: None,
    }
}

/// Wrap to (−π, π].
pub fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y > PI {
        y - TAU
    } else {
        y
    }
}

fn step_err(a: Complex64, b: Complex64, want: f64) -> f64 {
    wrap((b / a).arg() - want).abs()
}

/// Worst error of the antenna-to-antenna phase step `−π·2d·sin θ`.
pub fn steering_worst() -> f64 {
    let cfg = ChannelConfig {
        num_antennas: 8,
        ..ChannelConfig::default()
    };
    let mut worst: f64 = 0.0;
    for aoa in [-60.0, -12.5, 0.0, 7.0, 33.3, 75.0] {
        let s = synthesize_with_phases(&single(10e-9, aoa, 40.0), &cfg, &[0.7]).unwrap();
        let want = wrap(-PI * 2.0 * cfg.antenna_spacing * f64::sin(aoa.to_radians()));
        for k in 0..cfg.num_antennas - 1 {
            for (f, t) in [(0, 0), (5, 3), (63, 15)] {
                worst = worst.max(step_err(s.get(k, f, t), s.get(k + 1, f, t), want));
            }
        }
    }
    worst
}

/// Worst error of the symbol-to-symbol phase step `2π·ν·cos α·T_sym`.
pub fn doppler_worst() -> f64 {
    let cfg = ChannelConfig::default();
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 45.0, 90.0, 130.0, 180.0, 300.0] {
        let s = synthesize_with_phases(&single(5e-9, 12.0, alpha), &cfg, &[1.3]).unwrap();
        let want =
            wrap(TAU * cfg.max_doppler_hz * f64::cos(alpha.to_radians()) * cfg.symbol_time_s());
        for t in 0..cfg.num_symbols - 1 {
            worst = worst.max(step_err(s.get(1, 7, t), s.get(1, 7, t + 1), want));
        }
    }
    worst
}

/// Worst error of the subcarrier-to-subcarrier phase step `−2π·τ·Δf`.
pub fn delay_worst() -> f64 {
    let cfg = ChannelConfig::default();
    let mut worst: f64 = 0.0;
    for tau in [0.0, 13e-9, 30e-9, 250e-9, 4e-6] {
        let s = synthesize_with_phases(&single(tau, 12.0, 60.0), &cfg, &[2.0]).unwrap();
        let want = wrap(-TAU * tau * cfg.subcarrier_spacing_hz);
        for f in 0..cfg.num_subcarriers - 1 {
            worst = worst.max(step_err(s.get(2, f, 4), s.get(2, f + 1, 4), want));
        }
    }
    worst
}

/// Largest `|mean power − 1|` over `seeds` samples of every profile.
pub fn power_worst(seeds: u64) -> f64 {
    let cfg = ChannelConfig::default();
    let mut worst: f64 = 0.0;
    for kind in ProfileKind::ALL {
        let p = ClusterProfile::builtin(kind, cfg.delay_spread_s).unwrap();
        for seed in 0..seeds {
            let s = synthesize_channel(&p, &cfg, seed).unwrap();
            worst = worst.max((s.mean_power() - 1.0).abs());
        }
    }
    worst
}

/// RMS delay spread of the averaged power-delay profile, estimated by an
/// inverse FFT of wide-band frequency responses.
pub fn pdp_rms_delay_spread(kind: ProfileKind, seeds: u64) -> f64 {
    let cfg = ChannelConfig {
        num_antennas: 2,
        subcarrier_spacing_hz: 1e6,
        num_subcarriers: 2048,
        num_symbols: 1,
        observed: vec![0],
        predicted: vec![1],
        ..ChannelConfig::default()
    };
    let profile = ClusterProfile::builtin(kind, 30e-9).unwrap();
    let n = cfg.num_subcarriers;
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
        .collect();
    let mut pdp = vec![0.0; n];
    for seed in 0..seeds {
        let s = synthesize_channel(&profile, &cfg, seed).unwrap();
        let mut buf: Vec<Complex64> = (0..n).map(|f| s.get(0, f, 0) * window[f]).collect();
        fft.process(&mut buf);
        for (p, v) in pdp.iter_mut().zip(&buf) {
            *p += v.norm_sqr();
        }
    }
    let bin = 1.0 / (n as f64 * cfg.subcarrier_spacing_hz);
    let delay = |i: usize| if i < n / 2 { i as f64 } else { i as f64 - n as f64 } * bin;
    let total: f64 = pdp.iter().sum();
    let mean = pdp
        .iter()
        .enumerate()
        .map(|(i, p)| p * delay(i))
        .sum::<f64>()
        / total;
    let second = pdp
        .iter()
        .enumerate()
        .map(|(i, p)| p * delay(i).powi(2))
        .sum::<f64>()
        / total;
    (second - mean * mean).sqrt()
}
