//! Binary weights sidecar: a 16-byte header (`OESNNWTS`, version `u32`,
//! value count `u32`, little-endian) followed by the values as
//! little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"OESNNWTS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn write_weights<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    let count = u32::try_from(values.len()).map_err(|_| {
        Error::WeightsFormat(format!(
            "{} values exceed the u32 count field",
            values.len()
        ))
    })?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&count.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::WeightsFormat(format!(
            "truncated header: {} of {HEADER_LEN} bytes",
            bytes.len()
        )));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::WeightsFormat("bad magic at byte 0".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::WeightsFormat(format!(
            "unsupported version {version} at byte 8"
        )));
    }
    let count = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count * 8 {
        return Err(Error::WeightsFormat(format!(
            "header declares {count} values ({} bytes) but {} bytes follow",
            count * 8,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save(path: &Path, values: &[f64]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_weights(&mut w, values)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<f64>> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let vals = [0.0, -1.5, f64::MIN_POSITIVE, 1e300, 0.1 + 0.2];
        let mut buf = Vec::new();
        write_weights(&mut buf, &vals).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 8 * vals.len());
        assert_eq!(&buf[..8], b"OESNNWTS");
        assert_eq!(&buf[8..12], &[1, 0, 0, 0]);
        assert_eq!(&buf[12..16], &[5, 0, 0, 0]);
        let back = decode(&buf).unwrap();
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_weights(&mut buf, &[1.0, 2.0]).unwrap();
        assert!(decode(&buf[..10]).is_err());
        assert!(decode(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = buf;
        bad[8] = 9;
        assert!(decode(&bad).is_err());
    }
}
