//! DXT1 binary tensor container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                              |
//! |--------------|--------------------------------------|
//! | 4            | magic `b"DXT1"`                      |
//! | 1            | dtype: `0` = f32, `1` = f64          |
//! | 1            | rank                                 |
//! | 4 × rank     | extents, `u32`                       |
//! | rest         | row-major payload in the stated dtype |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DXT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DType {
    F32,
    #[default]
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }
}

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor, dtype: DType) -> Result<()> {
    let rank = u8::try_from(t.rank())
        .map_err(|_| Error::Format(format!("rank {} does not fit in a byte", t.rank())))?;
    w.write_all(MAGIC)?;
    w.write_all(&[dtype.code(), rank])?;
    for &n in t.shape() {
        let n = u32::try_from(n)
            .map_err(|_| Error::Format(format!("extent {n} does not fit in u32")))?;
        w.write_all(&n.to_le_bytes())?;
    }
    match dtype {
        DType::F32 => {
            for &x in t.data() {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        DType::F64 => {
            for &x in t.data() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads one tensor. The payload is widened to `f64`; the stored dtype is
/// returned alongside.
pub fn read_tensor<R: Read>(mut r: R) -> Result<(Tensor, DType)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated header".into()))?;
    let dtype = DType::from_code(head[0])?;
    let rank = head[1] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)
            .map_err(|_| Error::Format("truncated shape".into()))?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let width = match dtype {
        DType::F32 => 4,
        DType::F64 => 8,
    };
    if payload.len() % width != 0 {
        return Err(Error::Format(
            "payload is not a whole number of scalars".into(),
        ));
    }
    let data: Vec<f64> = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((tensor, dtype))
}

pub fn save(path: impl AsRef<Path>, t: &Tensor, dtype: DType) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(&mut w, t, dtype)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(read_tensor(BufReader::new(File::open(path)?))?.0)
}
