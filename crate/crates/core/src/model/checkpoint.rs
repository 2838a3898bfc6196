//! `MMDL` model files.
//!
//! Little-endian: magic `"MMDL"`, u16 version, u8 model kind, then the
//! architecture (u32 input C/H/W, output channels, latent dim, codebook
//! size, and for encoder then decoder a u32 layer count followed by
//! out-channels, kh, kw, stride, padding per layer). The body is a u32
//! tensor count and per tensor: u16 name length, UTF-8 name, u8 rank, u32
//! dims, f64 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{param_layout, ArchitectureSpec, ConvLayer, ModelBundle, ModelKind};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;
use crate::Real;

pub const MAGIC: &[u8; 4] = b"MMDL";
pub const VERSION: u16 = 1;

const MAX_LAYERS: usize = 64;
const MAX_RANK: usize = 8;

fn truncated(field: &'static str) -> impl Fn(std::io::Error) -> Error {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::format(field, "file truncated")
        } else {
            Error::Io(e)
        }
    }
}

fn put_u32<W: Write>(w: &mut W, field: &'static str, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(field, format!("{v} exceeds u32")))?;
    w.write_u32::<LittleEndian>(v)?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R, field: &'static str) -> Result<usize> {
    Ok(r.read_u32::<LittleEndian>().map_err(truncated(field))? as usize)
}

fn write_layers<W: Write>(w: &mut W, layers: &[ConvLayer]) -> Result<()> {
    put_u32(w, "layers", layers.len())?;
    for l in layers {
        for v in [
            l.out_channels,
            l.kernel[0],
            l.kernel[1],
            l.stride,
            l.padding,
        ] {
            put_u32(w, "layers", v)?;
        }
    }
    Ok(())
}

fn read_layers<R: Read>(r: &mut R) -> Result<Vec<ConvLayer>> {
    let n = get_u32(r, "layers")?;
    if n == 0 || n > MAX_LAYERS {
        return Err(Error::format(
            "layers",
            format!("implausible layer count {n}"),
        ));
    }
    (0..n)
        .map(|_| {
            let mut v = [0usize; 5];
            for x in &mut v {
                *x = get_u32(r, "layers")?;
            }
            Ok(ConvLayer {
                out_channels: v[0],
                kernel: [v[1], v[2]],
                stride: v[3],
                padding: v[4],
            })
        })
        .collect()
}

pub fn write_model<T: Real, W: Write>(model: &ModelBundle<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    w.write_u8(model.kind.id())?;
    let a = &model.arch;
    for v in a.input {
        put_u32(&mut w, "input", v)?;
    }
    put_u32(&mut w, "output_channels", a.output_channels)?;
    put_u32(&mut w, "latent_dim", a.latent_dim)?;
    put_u32(&mut w, "codebook_size", a.codebook_size)?;
    write_layers(&mut w, &a.encoder)?;
    write_layers(&mut w, &a.decoder)?;
    put_u32(&mut w, "tensors", model.params.len())?;
    for (name, t) in model.params.iter() {
        let len = u16::try_from(name.len()).map_err(|_| Error::format("name", "name too long"))?;
        w.write_u16::<LittleEndian>(len)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(t.shape().len() as u8)?;
        for &d in t.shape() {
            put_u32(&mut w, "dims", d)?;
        }
        for &v in t.data() {
            w.write_f64::<LittleEndian>(v.as_f64())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<T: Real, R: Read>(mut r: R) -> Result<ModelBundle<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated("magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(
            "magic",
            format!("expected MMDL, found {magic:?}"),
        ));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated("version"))?;
    if version != VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}"),
        ));
    }
    let kid = r.read_u8().map_err(truncated("kind"))?;
    let kind = ModelKind::from_id(kid)
        .ok_or_else(|| Error::format("kind", format!("unknown model kind {kid}")))?;
    let mut input = [0usize; 3];
    for x in &mut input {
        *x = get_u32(&mut r, "input")?;
    }
    let output_channels = get_u32(&mut r, "output_channels")?;
    let latent_dim = get_u32(&mut r, "latent_dim")?;
    let codebook_size = get_u32(&mut r, "codebook_size")?;
    let encoder = read_layers(&mut r)?;
    let decoder = read_layers(&mut r)?;
    let arch = ArchitectureSpec {
        input,
        output_channels,
        latent_dim,
        codebook_size,
        encoder,
        decoder,
    };
    let layout =
        param_layout(kind, &arch).map_err(|e| Error::format("architecture", e.to_string()))?;

    let n = get_u32(&mut r, "tensors")?;
    if n != layout.len() {
        return Err(Error::format(
            "tensors",
            format!("{kind} expects {} tensors, file has {n}", layout.len()),
        ));
    }
    let mut params = ParamSet::new();
    for (want_name, want_shape) in layout {
        let len = r.read_u16::<LittleEndian>().map_err(truncated("name"))? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(truncated("name"))?;
        let name = String::from_utf8(name).map_err(|_| Error::format("name", "not UTF-8"))?;
        if name != want_name {
            return Err(Error::format(
                "name",
                format!("found `{name}` where `{want_name}` was expected"),
            ));
        }
        let rank = r.read_u8().map_err(truncated("rank"))? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::format("rank", format!("`{name}` has rank {rank}")));
        }
        let mut shape = vec![0usize; rank];
        for d in &mut shape {
            *d = get_u32(&mut r, "dims")?;
        }
        if shape != want_shape {
            return Err(Error::format(
                "dims",
                format!("`{name}` is {shape:?}, expected {want_shape:?}"),
            ));
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(T::lit(
                r.read_f64::<LittleEndian>().map_err(truncated("data"))?,
            ));
        }
        params.insert(name, Tensor::from_vec(&shape, data)?)?;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::format("data", "trailing bytes after last tensor"));
    }
    ModelBundle::from_params(kind, arch, params)
}

pub fn save_model<T: Real>(model: &ModelBundle<T>, path: impl AsRef<Path>) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<ModelBundle<T>> {
    read_model(BufReader::new(File::open(path)?))
}
