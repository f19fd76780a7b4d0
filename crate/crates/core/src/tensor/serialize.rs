//! Binary container for named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   b"XRTDTENS"
//! version  u32       currently 1
//! dtype    u8        4 = f32, 8 = f64
//! count    u32       number of records
//! record*  name_len u32, name (utf-8), ndim u32, dims u64 x ndim,
//!          values (dtype) x prod(dims)
//! ```
//!
//! Records keep the order in which they were written. Loading casts values
//! to the requested element type.

use super::{Float, Tensor};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"XRTDTENS";
pub const VERSION: u32 = 1;

pub fn write_tensors<T: Float, W: Write>(mut w: W, records: &[(&str, &Tensor<T>)]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[T::DTYPE_TAG])?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for (name, t) in records {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in t.data() {
            if T::DTYPE_TAG == 4 {
                w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
            } else {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
    }
    w.flush()
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads every record; `origin` names the source in error messages.
pub fn read_tensors<T: Float, R: Read>(mut r: R, origin: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let bad = |msg: String| Error::format(origin, msg);
    let io = |e: std::io::Error| Error::format(origin, format!("truncated: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a tensor container (bad magic)".into()));
    }
    let version = read_u32(&mut r).map_err(io)?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype).map_err(io)?;
    if dtype[0] != 4 && dtype[0] != 8 {
        return Err(bad(format!("unknown dtype tag {}", dtype[0])));
    }
    let count = read_u32(&mut r).map_err(io)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r).map_err(io)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|_| bad("record name is not utf-8".into()))?;
        let ndim = read_u32(&mut r).map_err(io)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u64(&mut r).map_err(io)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = if dtype[0] == 4 {
                let mut b = [0u8; 4];
                r.read_exact(&mut b).map_err(io)?;
                f32::from_le_bytes(b) as f64
            } else {
                f64::from_bits(read_u64(&mut r).map_err(io)?)
            };
            data.push(T::of(v));
        }
        let t = Tensor::new(shape, data).map_err(|e| bad(format!("record `{name}`: {e}")))?;
        out.push((name, t));
    }
    Ok(out)
}

pub fn save_tensors<T: Float>(path: &Path, records: &[(&str, &Tensor<T>)]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensors(BufWriter::new(f), records).map_err(|e| Error::io(path, e))
}

pub fn load_tensors<T: Float>(path: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensors(BufReader::new(f), path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_preserves_f64_bits(
            shape in prop::collection::vec(1usize..4, 1..4),
            seed in any::<u64>(),
        ) {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|i| ((seed ^ i as u64) as f64).sin() * 1e3).collect();
            let t = Tensor::<f64>::new(shape, data).unwrap();
            let mut buf = Vec::new();
            write_tensors(&mut buf, &[("w", &t), ("w2", &t)]).unwrap();
            let back = read_tensors::<f64, _>(&buf[..], Path::new("mem")).unwrap();
            prop_assert_eq!(back.len(), 2);
            prop_assert_eq!(&back[0].0, "w");
            prop_assert_eq!(&back[1].1, &t);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let t = Tensor::<f32>::zeros(&[2, 2]);
        let mut buf = Vec::new();
        write_tensors(&mut buf, &[("a", &t)]).unwrap();
        let err = read_tensors::<f32, _>(&buf[..buf.len() - 1], Path::new("x")).unwrap_err();
        assert_eq!(err.code(), "E_FORMAT");
        buf[0] = b'Y';
        assert!(read_tensors::<f32, _>(&buf[..], Path::new("x")).is_err());
    }
}
