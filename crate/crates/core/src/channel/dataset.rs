//! Channel datasets and the `MCHD` binary format.
//!
//! Layout (little-endian):
//!
//! | offset | field            | type  |
//! |--------|------------------|-------|
//! | 0      | magic `"MCHD"`   | [u8;4]|
//! | 4      | version = 1      | u16   |
//! | 6      | flags = 0        | u16   |
//! | 8      | n_samples        | u32   |
//! | 12     | num_antennas     | u32   |
//! | 16     | num_subcarriers  | u32   |
//! | 20     | num_symbols      | u32   |
//! | 24     | profile_id       | u8    |
//! | 25     | zero padding     | [u8;7]|
//!
//! followed by, per sample, antenna, subcarrier and symbol: `re` then `im`
//! as f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{synthesize_channel, ChannelConfig, ChannelSample, ClusterProfile, ProfileKind};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};

pub const MAGIC: &[u8; 4] = b"MCHD";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 32;

/// How a dataset was generated. Not stored in `MCHD` files.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config: ChannelConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub profile: ProfileKind,
    pub num_antennas: usize,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub samples: Vec<ChannelSample>,
    pub provenance: Option<Provenance>,
}

/// Equality over the persisted content; provenance is ignored.
impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.profile == other.profile
            && self.num_antennas == other.num_antennas
            && self.num_subcarriers == other.num_subcarriers
            && self.num_symbols == other.num_symbols
            && self.samples == other.samples
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn file_len(&self) -> usize {
        HEADER_LEN + self.len() * self.num_antennas * self.num_subcarriers * self.num_symbols * 16
    }

    /// Check that `config` describes this dataset's grid.
    pub fn check_config(&self, config: &ChannelConfig) -> Result<()> {
        if (
            config.num_antennas,
            config.num_subcarriers,
            config.num_symbols,
        ) != (self.num_antennas, self.num_subcarriers, self.num_symbols)
        {
            return Err(Error::shape(format!(
                "dataset grid {}x{}x{} does not match configured {}x{}x{}",
                self.num_antennas,
                self.num_subcarriers,
                self.num_symbols,
                config.num_antennas,
                config.num_subcarriers,
                config.num_symbols
            )));
        }
        Ok(())
    }
}

/// Seed of sample `index` in a dataset generated from `seed`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[tag::SAMPLE, index as u64])
}

pub fn generate_dataset(
    profile: &ClusterProfile,
    config: &ChannelConfig,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    config.validate()?;
    if n == 0 {
        return Err(Error::Config("dataset needs at least one sample".into()));
    }
    let samples = (0..n)
        .map(|i| synthesize_channel(profile, config, sample_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        profile: profile.kind,
        num_antennas: config.num_antennas,
        num_subcarriers: config.num_subcarriers,
        num_symbols: config.num_symbols,
        samples,
        provenance: Some(Provenance {
            config: config.clone(),
            seed,
        }),
    })
}

fn to_u32(field: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format(field, format!("{v} exceeds u32")))
}

pub fn write_dataset<W: Write>(dataset: &Dataset, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u16::<LittleEndian>(0)?;
    w.write_u32::<LittleEndian>(to_u32("n_samples", dataset.len())?)?;
    w.write_u32::<LittleEndian>(to_u32("num_antennas", dataset.num_antennas)?)?;
    w.write_u32::<LittleEndian>(to_u32("num_subcarriers", dataset.num_subcarriers)?)?;
    w.write_u32::<LittleEndian>(to_u32("num_symbols", dataset.num_symbols)?)?;
    w.write_u8(dataset.profile.id())?;
    w.write_all(&[0u8; 7])?;
    for s in &dataset.samples {
        for (re, im) in s.re.iter().zip(&s.im) {
            w.write_f64::<LittleEndian>(*re)?;
            w.write_f64::<LittleEndian>(*im)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn truncated(field: &'static str) -> impl FnOnce(std::io::Error) -> Error {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(field, "file is truncated")
        } else {
            Error::Io(e)
        }
    }
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated("magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(
            "magic",
            format!("expected MCHD, found {magic:?}"),
        ));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated("version"))?;
    if version != VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}"),
        ));
    }
    let flags = r.read_u16::<LittleEndian>().map_err(truncated("flags"))?;
    if flags != 0 {
        return Err(Error::format("flags", format!("unknown flags {flags:#x}")));
    }
    let mut dims = [0usize; 4];
    let names = [
        "n_samples",
        "num_antennas",
        "num_subcarriers",
        "num_symbols",
    ];
    for (d, name) in dims.iter_mut().zip(names) {
        *d = r.read_u32::<LittleEndian>().map_err(truncated(name))? as usize;
    }
    let [n, nk, nf, nt] = dims;
    if nk == 0 || nf == 0 || nt == 0 {
        return Err(Error::format(
            "num_antennas",
            "grid extents must be positive",
        ));
    }
    let pid = r.read_u8().map_err(truncated("profile_id"))?;
    let profile = ProfileKind::from_id(pid)
        .ok_or_else(|| Error::format("profile_id", format!("unknown profile id {pid}")))?;
    let mut pad = [0u8; 7];
    r.read_exact(&mut pad).map_err(truncated("padding"))?;

    let per = nk * nf * nt;
    let mut samples = Vec::with_capacity(n.min(1 << 16));
    let mut buf = vec![0u8; per * 16];
    for _ in 0..n {
        r.read_exact(&mut buf).map_err(truncated("payload"))?;
        let mut s = ChannelSample::zeros(nk, nf, nt);
        for (i, pair) in buf.chunks_exact(16).enumerate() {
            s.re[i] = f64::from_le_bytes(pair[..8].try_into().expect("8 bytes"));
            s.im[i] = f64::from_le_bytes(pair[8..].try_into().expect("8 bytes"));
        }
        samples.push(s);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::format("payload", "trailing bytes after last sample"));
    }
    Ok(Dataset {
        profile,
        num_antennas: nk,
        num_subcarriers: nf,
        num_symbols: nt,
        samples,
        provenance: None,
    })
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(dataset, BufWriter::new(File::create(path)?))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?))
}
