//! Binary container for named `f64` arrays.
//!
//! Layout, all integers little endian: magic `SGCK`, `u32` version, `u32`
//! array count, then per array a `u32` name length, the UTF-8 name, a `u64`
//! value count and the values as `f64`.

use std::io::{Read, Write};

use super::DdpgError;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SGCK";

fn io_err(e: std::io::Error) -> DdpgError {
    DdpgError::Checkpoint(e.to_string())
}

pub fn write_checkpoint<W: Write>(mut w: W, arrays: &[(String, Vec<f64>)]) -> Result<(), DdpgError> {
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(arrays.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, values) in arrays {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(values.len() as u64).to_le_bytes()).map_err(io_err)?;
        for v in values {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N], DdpgError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(io_err)?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Vec<f64>)>, DdpgError> {
    if &read_exact::<_, 4>(&mut r)? != MAGIC {
        return Err(DdpgError::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(DdpgError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(read_exact(&mut r)?);
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io_err)?;
        let name = String::from_utf8(name).map_err(|_| DdpgError::Checkpoint("array name is not UTF-8".into()))?;
        let n = u64::from_le_bytes(read_exact(&mut r)?) as usize;
        let mut values = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            values.push(f64::from_le_bytes(read_exact(&mut r)?));
        }
        out.push((name, values));
    }
    Ok(out)
}
