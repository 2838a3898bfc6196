//! Built-in clustered delay-line profiles.
//!
//! These are compact stand-ins for the CDL-A..D family: each profile is a
//! fixed set of clusters with its own delay/power/angle shape. Delays are
//! stored on a relative scale and stretched so the RMS delay spread matches
//! the configured value exactly. All profiles share a 12° mean angle of
//! arrival; A, B and C are NLOS with increasing angular spread, D is LOS with
//! a dominant specular ray (K-factor 13 dB) plus weak scattered clusters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProfileKind {
    CdlA,
    CdlB,
    CdlC,
    CdlD,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 4] = [Self::CdlA, Self::CdlB, Self::CdlC, Self::CdlD];

    /// Identifier used in dataset file headers.
    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CdlA => "CDL-A",
            Self::CdlB => "CDL-B",
            Self::CdlC => "CDL-C",
            Self::CdlD => "CDL-D",
        }
    }

    pub fn is_los(self) -> bool {
        self == Self::CdlD
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    /// Accepts `CDL-A`, `cdl-a`, `cdla` or just `a`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let letter = t
            .strip_prefix("cdl-")
            .or_else(|| t.strip_prefix("cdl"))
            .unwrap_or(&t);
        match letter {
            "a" => Ok(Self::CdlA),
            "b" => Ok(Self::CdlB),
            "c" => Ok(Self::CdlC),
            "d" => Ok(Self::CdlD),
            _ => Err(Error::UnknownProfile(s.to_string())),
        }
    }
}

/// One propagation cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    /// Excess delay in seconds.
    pub delay_s: f64,
    /// Linear power; cluster powers of a profile sum to one.
    pub power: f64,
    /// Angle of arrival in radians, measured from array broadside.
    pub aoa_rad: f64,
    /// Angle between motion and arrival direction, in radians.
    pub doppler_angle_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterProfile {
    pub kind: ProfileKind,
    pub clusters: Vec<Cluster>,
    pub los: bool,
    /// Ricean K-factor of the first cluster (LOS profiles only).
    pub k_factor_db: Option<f64>,
}

// (relative delay, power dB, AoA deg, Doppler angle deg)
type Row = (f64, f64, f64, f64);

const CDL_A: [Row; 8] = [
    (0.0, -3.0, 9.2, 20.0),
    (0.3, 0.0, 13.4, 70.0),
    (0.7, -2.0, 11.3, 110.0),
    (1.1, -4.0, 15.5, 160.0),
    (1.6, -6.0, 7.8, 200.0),
    (2.2, -8.0, 14.1, 250.0),
    (3.0, -10.0, 12.0, 300.0),
    (4.0, -13.0, 9.9, 340.0),
];

const CDL_B: [Row; 8] = [
    (0.0, 0.0, 12.7, 10.0),
    (0.2, -2.0, 7.8, 60.0),
    (0.5, -3.0, 16.9, 100.0),
    (0.9, -5.0, 9.9, 150.0),
    (1.3, -7.0, 18.3, 190.0),
    (1.8, -9.0, 5.7, 230.0),
    (2.5, -12.0, 14.8, 290.0),
    (3.3, -14.0, 10.6, 330.0),
];

const CDL_C: [Row; 8] = [
    (0.0, -1.0, 12.0, 30.0),
    (0.15, 0.0, 6.4, 80.0),
    (0.4, -2.0, 19.0, 120.0),
    (0.8, -3.0, 3.6, 170.0),
    (1.2, -5.0, 16.2, 210.0),
    (1.7, -7.0, 9.2, 260.0),
    (2.3, -9.0, 21.1, 300.0),
    (3.1, -11.0, 2.2, 345.0),
];

// First row is the specular LOS ray; its power comes from the K-factor.
const CDL_D: [Row; 6] = [
    (0.0, 0.0, 12.0, 0.0),
    (0.3, -14.0, 8.5, 90.0),
    (0.8, -16.0, 16.2, 150.0),
    (1.5, -18.0, 6.4, 210.0),
    (2.4, -21.0, 18.3, 280.0),
    (3.5, -24.0, 9.9, 330.0),
];

const CDL_D_K_FACTOR_DB: f64 = 13.0;

/// Power-weighted mean and RMS spread of cluster delays.
pub fn delay_moments(clusters: &[Cluster]) -> (f64, f64) {
    let total: f64 = clusters.iter().map(|c| c.power).sum();
    let mean = clusters.iter().map(|c| c.power * c.delay_s).sum::<f64>() / total;
    let second = clusters
        .iter()
        .map(|c| c.power * c.delay_s * c.delay_s)
        .sum::<f64>()
        / total;
    (mean, (second - mean * mean).max(0.0).sqrt())
}

impl ClusterProfile {
    /// Built-in profile scaled to the requested RMS delay spread.
    pub fn builtin(kind: ProfileKind, delay_spread_s: f64) -> Result<Self> {
        if !(delay_spread_s > 0.0 && delay_spread_s.is_finite()) {
            return Err(Error::Config(format!(
                "delay spread must be positive, got {delay_spread_s}"
            )));
        }
        let rows: &[Row] = match kind {
            ProfileKind::CdlA => &CDL_A,
            ProfileKind::CdlB => &CDL_B,
            ProfileKind::CdlC => &CDL_C,
            ProfileKind::CdlD => &CDL_D,
        };
        let mut powers: Vec<f64> = rows.iter().map(|r| 10f64.powf(r.1 / 10.0)).collect();
        let k_factor_db = kind.is_los().then_some(CDL_D_K_FACTOR_DB);
        if let Some(kdb) = k_factor_db {
            let k = 10f64.powf(kdb / 10.0);
            let scattered: f64 = powers[1..].iter().sum();
            powers[0] = k / (k + 1.0);
            for p in &mut powers[1..] {
                *p /= scattered * (k + 1.0);
            }
        }
        let total: f64 = powers.iter().sum();
        let clusters: Vec<Cluster> = rows
            .iter()
            .zip(&powers)
            .map(|(r, p)| Cluster {
                delay_s: r.0,
                power: p / total,
                aoa_rad: r.2.to_radians(),
                doppler_angle_rad: r.3.to_radians(),
            })
            .collect();
        let mut profile = Self {
            kind,
            clusters,
            los: kind.is_los(),
            k_factor_db,
        };
        profile.scale_delay_spread(delay_spread_s);
        Ok(profile)
    }

    /// Stretch delays so the RMS delay spread equals `target_s`.
    pub fn scale_delay_spread(&mut self, target_s: f64) {
        let (_, rms) = delay_moments(&self.clusters);
        if rms > 0.0 {
            let s = target_s / rms;
            for c in &mut self.clusters {
                c.delay_s *= s;
            }
        }
    }

    pub fn rms_delay_spread(&self) -> f64 {
        delay_moments(&self.clusters).1
    }

    pub fn total_power(&self) -> f64 {
        self.clusters.iter().map(|c| c.power).sum()
    }
}

/// Built-in profile by name at the default 30 ns delay spread.
pub fn make_profile(name: &str) -> Result<ClusterProfile> {
    ClusterProfile::builtin(name.parse()?, super::DEFAULT_DELAY_SPREAD_S)
}
