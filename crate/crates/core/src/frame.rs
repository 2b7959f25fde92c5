//! Binary container shared by the cache and checkpoint formats:
//! 4-byte magic, little-endian u32 version, little-endian u32 header length,
//! a JSON header, then a format-specific payload.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub(crate) fn write_header<W: Write, H: Serialize>(w: &mut W, magic: &[u8; 4], version: u32, header: &H) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    w.write_all(magic)?;
    w.write_all(&version.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

/// Read and check magic/version, returning the decoded header and the number
/// of bytes consumed.
pub(crate) fn read_header<R: Read, H: DeserializeOwned>(r: &mut R, magic: &[u8; 4], version: u32) -> Result<(H, u64)> {
    let mut got = [0u8; 4];
    read_exact(r, &mut got, 0, "magic")?;
    if &got != magic {
        return Err(Error::parse(0, format!("bad magic {got:?}, expected {magic:?}")));
    }
    let v = read_u32(r, 4, "version")?;
    if v != version {
        return Err(Error::parse(4, format!("unsupported version {v}, expected {version}")));
    }
    let len = read_u32(r, 8, "header length")? as usize;
    let mut json = vec![0u8; len];
    read_exact(r, &mut json, 12, "header")?;
    let header = serde_json::from_slice(&json)?;
    Ok((header, 12 + len as u64))
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], offset: u64, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::parse(offset, format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, offset: u64, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, offset, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R, offset: u64, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, offset, what)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize, offset: u64, what: &str) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    read_exact(r, &mut buf, offset, what)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}
