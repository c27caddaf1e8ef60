//! Reader and writer for IDX tensor files, the big-endian container format
//! used by the MNIST distribution.
//!
//! Layout: a four-byte magic (two zero bytes, an element-type byte, a rank
//! byte), one big-endian u32 per dimension, then the payload in row-major
//! order. Only unsigned-byte tensors (type 0x08) are supported, which covers
//! image files (magic 0x00000803) and label files (magic 0x00000801).

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Magic for a rank-1 unsigned-byte tensor (label files).
pub const MAGIC_U8_LABELS: u32 = 0x0000_0801;
/// Magic for a rank-3 unsigned-byte tensor (image files).
pub const MAGIC_U8_IMAGES: u32 = 0x0000_0803;

/// A decoded unsigned-byte tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxTensor {
    pub magic: u32,
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() || dims.len() > 0xFF {
            return Err(Error::IdxFormat(format!(
                "unsupported rank {}",
                dims.len()
            )));
        }
        if data.len() != expected {
            return Err(Error::IdxFormat(format!(
                "payload of {} bytes does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        let magic = 0x0800 | dims.len() as u32;
        Ok(IdxTensor { magic, dims, data })
    }
}

/// Reads an IDX tensor from a file.
pub fn read_idx(path: &Path) -> Result<IdxTensor> {
    let file = File::open(path)?;
    read_idx_from(BufReader::new(file))
}

/// Reads an IDX tensor from any byte source.
pub fn read_idx_from(mut r: impl Read) -> Result<IdxTensor> {
    let magic = r
        .read_u32::<BigEndian>()
        .map_err(|_| Error::IdxFormat("file shorter than the 4-byte magic".into()))?;
    if magic >> 16 != 0 {
        return Err(Error::IdxFormat(format!(
            "bad magic 0x{magic:08x}: first two bytes must be zero"
        )));
    }
    let elem_type = (magic >> 8) & 0xFF;
    if elem_type != 0x08 {
        return Err(Error::IdxFormat(format!(
            "bad magic 0x{magic:08x}: element type 0x{elem_type:02x} is not unsigned byte"
        )));
    }
    let rank = (magic & 0xFF) as usize;
    if rank == 0 {
        return Err(Error::IdxFormat(format!("bad magic 0x{magic:08x}: rank 0")));
    }
    let mut dims = Vec::with_capacity(rank);
    for axis in 0..rank {
        let d = r.read_u32::<BigEndian>().map_err(|_| {
            Error::IdxFormat(format!("truncated header: missing size of axis {axis}"))
        })?;
        dims.push(d as usize);
    }
    let expected: usize = dims.iter().product();
    let mut data = vec![0u8; expected];
    r.read_exact(&mut data).map_err(|_| {
        Error::IdxFormat(format!(
            "truncated payload: expected {expected} bytes for dims {dims:?}"
        ))
    })?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::IdxFormat(format!(
            "trailing bytes after {expected}-byte payload"
        )));
    }
    Ok(IdxTensor { magic, dims, data })
}

/// Writes a tensor in IDX layout. Round-trips through [`read_idx`].
pub fn write_idx(path: &Path, tensor: &IdxTensor) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_u32::<BigEndian>(tensor.magic)?;
    for &d in &tensor.dims {
        w.write_u32::<BigEndian>(d as u32)?;
    }
    w.write_all(&tensor.data)?;
    w.flush()?;
    Ok(())
}

/// Reads an image file, insisting on the rank-3 image magic.
pub fn read_idx_images(path: &Path) -> Result<IdxTensor> {
    let t = read_idx(path)?;
    if t.magic != MAGIC_U8_IMAGES || t.dims.len() != 3 {
        return Err(Error::IdxFormat(format!(
            "bad magic 0x{:08x}: expected image tensor 0x{MAGIC_U8_IMAGES:08x} with 3 axes",
            t.magic
        )));
    }
    Ok(t)
}

/// Reads a label file, insisting on the rank-1 label magic.
pub fn read_idx_labels(path: &Path) -> Result<IdxTensor> {
    let t = read_idx(path)?;
    if t.magic != MAGIC_U8_LABELS || t.dims.len() != 1 {
        return Err(Error::IdxFormat(format!(
            "bad magic 0x{:08x}: expected label tensor 0x{MAGIC_U8_LABELS:08x} with 1 axis",
            t.magic
        )));
    }
    Ok(t)
}
