//! `FWIT` binary tensor files.
//!
//! A tensor record is
//!
//! ```text
//! b"FWIT" | u32 version = 1 | u8 dtype (0 = f32) | u8 ndim | ndim × u64 extents | payload
//! ```
//!
//! with every integer and float little-endian and the payload row-major.
//! Containers (checkpoints) prefix a sequence of tensor records with one
//! index record that uses dtype [`DTYPE_JSON`]: a single u64 extent giving
//! the byte length of a UTF-8 JSON document that follows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FWIT";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_JSON: u8 = 0xFF;

/// One record read from an `FWIT` stream.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Tensor(Tensor<f32>),
    Json(String),
}

fn header<W: Write>(w: &mut W, dtype: u8, extents: &[u64]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[dtype, extents.len() as u8])?;
    for e in extents {
        w.write_all(&e.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor<f32>) -> std::io::Result<()> {
    let extents: Vec<u64> = t.shape().iter().map(|&d| d as u64).collect();
    header(w, DTYPE_F32, &extents)?;
    let mut buf = Vec::with_capacity(t.numel() * 4);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn write_json<W: Write>(w: &mut W, json: &str) -> std::io::Result<()> {
    header(w, DTYPE_JSON, &[json.len() as u64])?;
    w.write_all(json.as_bytes())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated FWIT record: {e}")))
}

/// Reads the next record, or `None` at a clean end of stream.
pub fn read_record<R: Read>(r: &mut R) -> Result<Option<Record>> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r
            .read(&mut magic[got..])
            .map_err(|e| Error::Format(e.to_string()))?;
        if n == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::Format("truncated FWIT magic".into()));
        }
        got += n;
    }
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    read_exact(r, &mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported FWIT version {version}")));
    }
    let mut codes = [0u8; 2];
    read_exact(r, &mut codes)?;
    let (dtype, ndim) = (codes[0], codes[1] as usize);
    let mut extents = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut e = [0u8; 8];
        read_exact(r, &mut e)?;
        extents.push(u64::from_le_bytes(e) as usize);
    }
    match dtype {
        DTYPE_F32 => {
            if ndim == 0 || extents.contains(&0) {
                return Err(Error::Format(format!("invalid extents {extents:?}")));
            }
            let numel = extents
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Format("extent overflow".into()))?;
            let mut bytes = vec![0u8; numel * 4];
            read_exact(r, &mut bytes)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(Some(Record::Tensor(Tensor::new(extents, data)?)))
        }
        DTYPE_JSON => {
            if ndim != 1 {
                return Err(Error::Format("JSON record must have one extent".into()));
            }
            let mut bytes = vec![0u8; extents[0]];
            read_exact(r, &mut bytes)?;
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::Format(format!("JSON record is not UTF-8: {e}")))?;
            Ok(Some(Record::Json(text)))
        }
        other => Err(Error::Format(format!("unknown dtype code {other}"))),
    }
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor<f32>> {
    match read_record(r)? {
        Some(Record::Tensor(t)) => Ok(t),
        Some(Record::Json(_)) => Err(Error::Format(
            "expected a tensor, found a JSON index".into(),
        )),
        None => Err(Error::Format("empty FWIT stream".into())),
    }
}

pub fn save(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor(&mut w, t)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor(&mut BufReader::new(file))
}

/// All records of a file, in order.
pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut out = Vec::new();
    while let Some(rec) = read_record(&mut r)? {
        out.push(rec);
    }
    Ok(out)
}
