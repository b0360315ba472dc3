//! Binary checkpoint format for network parameters.
//!
//! Layout: a magic tag, the KGE width the network was built for, a tensor
//! manifest (name, shape, byte offset into the data section), then all
//! values as little-endian f32. Saving and loading round-trip f32 values
//! bit-exactly; loading rejects files whose KGE width disagrees with the
//! network being restored.

use crate::real::Real;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"KGA3C\x01";

#[derive(Debug, Error)]
pub enum CkptError {
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint file: {0}")]
    Format(String),
    #[error("checkpoint was trained with kge_dim {file}, this network expects {expected}")]
    KgeDim { file: u32, expected: u32 },
    #[error("checkpoint tensor {index} is {got}, expected {want}")]
    TensorMismatch {
        index: usize,
        got: String,
        want: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CkptTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kge_dim: u32,
    pub tensors: Vec<CkptTensor>,
}

fn io_err(path: &Path, source: std::io::Error) -> CkptError {
    CkptError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_checkpoint(path: &Path, kge_dim: usize, tensors: &[CkptTensor]) -> Result<(), CkptError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(kge_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for t in tensors {
        let name = t.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(t.shape.len() as u8);
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        buf.extend_from_slice(&offset.to_le_bytes());
        let count: usize = t.shape.iter().product();
        assert_eq!(count, t.values.len(), "tensor {} shape vs data", t.name);
        offset += 4 * t.values.len() as u64;
    }
    for t in tensors {
        for &v in &t.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    // Write-then-rename so a crash mid-save never leaves a truncated file
    // under the final name.
    let tmp = path.with_extension("tmp");
    let mut file = std::fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    file.write_all(&buf).map_err(|e| io_err(&tmp, e))?;
    drop(file);
    std::fs::rename(&tmp, path).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads a checkpoint. When `expected_kge_dim` is given, a file recorded
/// with a different KGE width is rejected before any tensor is touched.
pub fn load_checkpoint(path: &Path, expected_kge_dim: Option<usize>) -> Result<Checkpoint, CkptError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    let magic = cur.take(6)?;
    if magic != MAGIC {
        return Err(CkptError::Format("bad magic".into()));
    }
    let kge_dim = cur.u32()?;
    if let Some(expected) = expected_kge_dim {
        if kge_dim != expected as u32 {
            return Err(CkptError::KgeDim {
                file: kge_dim,
                expected: expected as u32,
            });
        }
    }
    let n_tensors = cur.u32()? as usize;
    let mut manifest = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| CkptError::Format("tensor name is not utf-8".into()))?
            .to_string();
        let ndim = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        let offset = cur.u64()?;
        manifest.push((name, shape, offset));
    }
    let data_start = cur.pos;
    let mut tensors = Vec::with_capacity(n_tensors);
    for (name, shape, offset) in manifest {
        let count: usize = shape.iter().product();
        let lo = data_start + offset as usize;
        let hi = lo + 4 * count;
        if hi > bytes.len() {
            return Err(CkptError::Format(format!(
                "tensor {name} data runs past end of file"
            )));
        }
        let values = bytes[lo..hi]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push(CkptTensor { name, shape, values });
    }
    Ok(Checkpoint { kge_dim, tensors })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CkptError> {
        if self.pos + n > self.bytes.len() {
            return Err(CkptError::Format("file truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, CkptError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, CkptError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64, CkptError> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

/// Splits a flat parameter vector into named checkpoint tensors following
/// a layout, casting values to f32.
pub fn tensors_from_flat<T: Real>(layout: &[(String, Vec<usize>)], flat: &[T]) -> Vec<CkptTensor> {
    let mut out = Vec::with_capacity(layout.len());
    let mut pos = 0;
    for (name, shape) in layout {
        let count: usize = shape.iter().product();
        out.push(CkptTensor {
            name: name.clone(),
            shape: shape.clone(),
            values: flat[pos..pos + count]
                .iter()
                .map(|v| v.to_f64() as f32)
                .collect(),
        });
        pos += count;
    }
    assert_eq!(pos, flat.len(), "layout covers the whole flat vector");
    out
}

/// Reassembles the flat parameter vector for a layout, verifying that the
/// checkpoint's tensor names and shapes match position by position.
pub fn flat_from_tensors<T: Real>(
    layout: &[(String, Vec<usize>)],
    ckpt: &Checkpoint,
) -> Result<Vec<T>, CkptError> {
    if ckpt.tensors.len() != layout.len() {
        return Err(CkptError::Format(format!(
            "checkpoint has {} tensors, layout expects {}",
            ckpt.tensors.len(),
            layout.len()
        )));
    }
    let mut flat = Vec::new();
    for (i, ((name, shape), tensor)) in layout.iter().zip(&ckpt.tensors).enumerate() {
        if &tensor.name != name || &tensor.shape != shape {
            return Err(CkptError::TensorMismatch {
                index: i,
                got: format!("{} {:?}", tensor.name, tensor.shape),
                want: format!("{name} {shape:?}"),
            });
        }
        flat.extend(tensor.values.iter().map(|&v| T::of(v as f64)));
    }
    Ok(flat)
}
