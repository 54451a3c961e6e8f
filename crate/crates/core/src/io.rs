//! Binary file formats, all little-endian.
//!
//! * `HSIC` cube: magic `HSIC`, u32 version = 1, u32 width, u32 height,
//!   u32 n_bands, u8 dtype (0 = f32, 1 = f64), 3 reserved zero bytes, then
//!   the samples band-sequential (all of band 0 row-major, then band 1, ...).
//! * `HSIM` mask: magic `HSIM`, u32 version = 1, u32 width, u32 height,
//!   u32 n_bands, then one bit per (pixel, band) flag ordered pixel-major
//!   within band and band-major overall, LSB-first within each byte,
//!   zero-padded to a byte boundary.
//! * `HSIE` basis: magic `HSIE`, u32 n_bands, u32 k, then the n_bands x k
//!   basis as f64 column-major.
//! * `HSIN` noise model: magic `HSIN`, u8 kind (0 = iid, 1 = diagonal,
//!   2 = full), then the payload: one f64 sigma, n_bands f64 variances, or
//!   n_bands^2 f64 covariance entries column-major. The band count is
//!   implied by the payload length.
//!
//! Loading and saving are bit-exact inverses on valid files: a cube loaded
//! from an f32 file remembers its dtype and is written back as f32.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::cube::{Dtype, HsiCube, ObservationMask};
use crate::error::{Error, Result};
use crate::subspace::{NoiseModel, SubspaceBasis};

const CUBE_MAGIC: &[u8; 4] = b"HSIC";
const MASK_MAGIC: &[u8; 4] = b"HSIM";
const BASIS_MAGIC: &[u8; 4] = b"HSIE";
const NOISE_MAGIC: &[u8; 4] = b"HSIN";

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn read_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

fn check_header(buf: &[u8], path: &Path, magic: &[u8; 4], header_len: usize) -> Result<()> {
    if buf.len() < header_len {
        return Err(format_err(path, "file shorter than header"));
    }
    if &buf[0..4] != magic {
        return Err(format_err(
            path,
            format!("bad magic {:?}", &buf[0..4.min(buf.len())]),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// HSIC cubes
// ---------------------------------------------------------------------------

pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h, nb) = (cube.width(), cube.height(), cube.n_bands());
    let mut buf = Vec::with_capacity(24 + cube.values().len() * 8);
    buf.extend_from_slice(CUBE_MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(w as u32).to_le_bytes());
    buf.extend_from_slice(&(h as u32).to_le_bytes());
    buf.extend_from_slice(&(nb as u32).to_le_bytes());
    match cube.dtype {
        Dtype::F32 => {
            buf.push(0);
            buf.extend_from_slice(&[0, 0, 0]);
            for &v in cube.values() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            buf.push(1);
            buf.extend_from_slice(&[0, 0, 0]);
            for &v in cube.values() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    check_header(&buf, path, CUBE_MAGIC, 24)?;
    let version = read_u32(&buf, 4);
    if version != 1 {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let w = read_u32(&buf, 8) as usize;
    let h = read_u32(&buf, 12) as usize;
    let nb = read_u32(&buf, 16) as usize;
    let dtype = match buf[20] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        other => return Err(format_err(path, format!("unknown dtype byte {other}"))),
    };
    if buf[21..24] != [0, 0, 0] {
        return Err(format_err(path, "reserved bytes not zero"));
    }
    if w == 0 || h == 0 || nb == 0 {
        return Err(format_err(path, "zero dimension in header"));
    }
    let count = w * h * nb;
    let elem = match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    };
    let payload = &buf[24..];
    if payload.len() != count * elem {
        return Err(Error::Length {
            path: path.display().to_string(),
            expected: count * elem,
            found: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(count);
    match dtype {
        Dtype::F32 => {
            for chunk in payload.chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::F64 => {
            for chunk in payload.chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite value at flat index {pos} in {}",
            path.display()
        )));
    }
    let mut cube = HsiCube::new(w, h, nb, values)?;
    cube.dtype = dtype;
    Ok(cube)
}

// ---------------------------------------------------------------------------
// HSIM masks
// ---------------------------------------------------------------------------

pub fn save_mask(mask: &ObservationMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bits = mask.bits();
    let mut buf = Vec::with_capacity(20 + bits.len() / 8 + 1);
    buf.extend_from_slice(MASK_MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(mask.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(mask.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(mask.n_bands() as u32).to_le_bytes());
    let mut byte = 0u8;
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            byte |= 1 << (i % 8);
        }
        if i % 8 == 7 {
            buf.push(byte);
            byte = 0;
        }
    }
    if !bits.len().is_multiple_of(8) {
        buf.push(byte);
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<ObservationMask> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    check_header(&buf, path, MASK_MAGIC, 20)?;
    let version = read_u32(&buf, 4);
    if version != 1 {
        return Err(format_err(path, format!("unsupported version {version}")));
    }
    let w = read_u32(&buf, 8) as usize;
    let h = read_u32(&buf, 12) as usize;
    let nb = read_u32(&buf, 16) as usize;
    if w == 0 || h == 0 || nb == 0 {
        return Err(format_err(path, "zero dimension in header"));
    }
    let n_bits = w * h * nb;
    let n_bytes = n_bits.div_ceil(8);
    let payload = &buf[20..];
    if payload.len() != n_bytes {
        return Err(Error::Length {
            path: path.display().to_string(),
            expected: n_bytes,
            found: payload.len(),
        });
    }
    let mut bits = Vec::with_capacity(n_bits);
    for i in 0..n_bits {
        bits.push(payload[i / 8] & (1 << (i % 8)) != 0);
    }
    // Padding bits must be zero, or save(load(f)) would not reproduce f.
    for i in n_bits..n_bytes * 8 {
        if payload[i / 8] & (1 << (i % 8)) != 0 {
            return Err(format_err(path, "nonzero padding bits"));
        }
    }
    ObservationMask::new(w, h, nb, bits)
}

// ---------------------------------------------------------------------------
// HSIE basis and HSIN noise models
// ---------------------------------------------------------------------------

pub fn save_basis(basis: &SubspaceBasis, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let e = basis.matrix();
    let (nb, k) = (e.nrows(), e.ncols());
    let mut buf = Vec::with_capacity(12 + nb * k * 8);
    buf.extend_from_slice(BASIS_MAGIC);
    buf.extend_from_slice(&(nb as u32).to_le_bytes());
    buf.extend_from_slice(&(k as u32).to_le_bytes());
    for j in 0..k {
        for i in 0..nb {
            buf.extend_from_slice(&e[[i, j]].to_le_bytes());
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_basis(path: impl AsRef<Path>) -> Result<SubspaceBasis> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    check_header(&buf, path, BASIS_MAGIC, 12)?;
    let nb = read_u32(&buf, 4) as usize;
    let k = read_u32(&buf, 8) as usize;
    let payload = &buf[12..];
    if payload.len() != nb * k * 8 {
        return Err(Error::Length {
            path: path.display().to_string(),
            expected: nb * k * 8,
            found: payload.len(),
        });
    }
    let mut e = Array2::<f64>::zeros((nb, k));
    let mut it = payload.chunks_exact(8);
    for j in 0..k {
        for i in 0..nb {
            e[[i, j]] = f64::from_le_bytes(it.next().unwrap().try_into().unwrap());
        }
    }
    SubspaceBasis::new(e)
}

pub fn save_noise_model(model: &NoiseModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(NOISE_MAGIC);
    match model {
        NoiseModel::Iid { sigma } => {
            buf.push(0);
            buf.extend_from_slice(&sigma.to_le_bytes());
        }
        NoiseModel::Diagonal { variances } => {
            buf.push(1);
            for v in variances {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        NoiseModel::Full { covariance } => {
            buf.push(2);
            let nb = covariance.nrows();
            for j in 0..nb {
                for i in 0..nb {
                    buf.extend_from_slice(&covariance[[i, j]].to_le_bytes());
                }
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_noise_model(path: impl AsRef<Path>) -> Result<NoiseModel> {
    let path = path.as_ref();
    let buf = fs::read(path)?;
    check_header(&buf, path, NOISE_MAGIC, 5)?;
    let kind = buf[4];
    let payload = &buf[5..];
    if payload.len() % 8 != 0 {
        return Err(format_err(path, "payload not a whole number of f64s"));
    }
    let vals: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    match kind {
        0 => {
            if vals.len() != 1 {
                return Err(format_err(path, "iid payload must be one f64"));
            }
            NoiseModel::iid(vals[0])
        }
        1 => {
            if vals.is_empty() {
                return Err(format_err(path, "empty diagonal payload"));
            }
            NoiseModel::diagonal(vals)
        }
        2 => {
            let nb = (vals.len() as f64).sqrt().round() as usize;
            if nb * nb != vals.len() || nb == 0 {
                return Err(format_err(path, "full payload is not square"));
            }
            let mut c = Array2::<f64>::zeros((nb, nb));
            let mut it = vals.into_iter();
            for j in 0..nb {
                for i in 0..nb {
                    c[[i, j]] = it.next().unwrap();
                }
            }
            NoiseModel::full(c)
        }
        other => Err(format_err(path, format!("unknown noise kind {other}"))),
    }
}
