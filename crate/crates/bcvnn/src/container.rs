//! Binary tensor container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes            | content                           |
//! |------------------|-----------------------------------|
//! | 4                | magic `BCVT`                      |
//! | 1                | version (`1`)                     |
//! | 1                | rank `r`                          |
//! | 4 * r            | extents as `u32`                  |
//! | 8 * n            | real part as `f64`, row-major     |
//! | 8 * n            | imaginary part as `f64`           |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ComplexTensor;

pub const MAGIC: &[u8; 4] = b"BCVT";
pub const VERSION: u8 = 1;

pub fn write_tensor<T: Scalar, W: Write>(tensor: &ComplexTensor<T>, mut out: W) -> Result<()> {
    let rank = u8::try_from(tensor.shape().len())
        .map_err(|_| Error::Format("rank does not fit in u8".into()))?;
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION, rank])?;
    for &e in tensor.shape() {
        let e = u32::try_from(e).map_err(|_| Error::Format(format!("extent {e} exceeds u32")))?;
        out.write_all(&e.to_le_bytes())?;
    }
    for part in [tensor.real(), tensor.imag()] {
        for v in part {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_tensor<T: Scalar, R: Read>(mut input: R) -> Result<ComplexTensor<T>> {
    let mut head = [0u8; 6];
    read_exact(&mut input, &mut head, "header")?;
    if &head[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &head[..4])));
    }
    if head[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", head[4])));
    }
    let rank = head[5] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 4];
        read_exact(&mut input, &mut b, "extents")?;
        shape.push(u32::from_le_bytes(b) as usize);
    }
    let n: usize = shape.iter().product();
    let mut read_part = |what| -> Result<Vec<T>> {
        let mut bytes = vec![0u8; n * 8];
        read_exact(&mut input, &mut bytes, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| T::from_f64_lossy(f64::from_le_bytes(c.try_into().unwrap())))
            .collect())
    };
    let real = read_part("real part")?;
    let imag = read_part("imaginary part")?;
    ComplexTensor::from_parts(real, imag, &shape)
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated container ({what})")),
        _ => Error::Io(e),
    })
}

pub fn save<T: Scalar>(tensor: &ComplexTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(tensor, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<ComplexTensor<T>> {
    read_tensor(BufReader::new(File::open(path)?))
}
