//! BMCK checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      b"BMCK"
//! version    u32
//! count      u32
//! count x {
//!     name   u32 length + UTF-8 bytes
//!     rank   u32
//!     dims   rank x u32
//!     values f64 x product(dims)
//! }
//! metadata   u32 length + UTF-8 text
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::params::Parameters;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"BMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
    pub metadata: String,
}

impl Checkpoint {
    pub fn new(metadata: impl Into<String>) -> Self {
        Self { tensors: Vec::new(), metadata: metadata.into() }
    }

    /// Appends every tensor of `params`, with names prefixed by `prefix.`
    /// unless `prefix` is empty.
    pub fn push_params<T: Scalar, P: Parameters<T>>(&mut self, prefix: &str, params: &P) {
        for (name, t) in params.tensors() {
            self.tensors.push(Tensor {
                name: join(prefix, &name),
                shape: t.shape().to_vec(),
                values: t.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copies the tensors stored under `prefix` into `params`, which must
    /// already have the stored shapes.
    pub fn restore<T: Scalar, P: Parameters<T>>(&self, prefix: &str, params: &mut P) -> Result<()> {
        for (name, mut t) in params.tensors_mut() {
            let full = join(prefix, &name);
            let stored = self.get(&full).ok_or_else(|| NnError::Checkpoint(format!("missing tensor {full}")))?;
            if stored.shape != t.shape() {
                return Err(NnError::ShapeMismatch { context: full, expected: t.shape().to_vec(), actual: stored.shape.clone() });
            }
            for (dst, &src) in t.iter_mut().zip(&stored.values) {
                *dst = T::of(src);
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, VERSION)?;
        put_u32(w, self.tensors.len() as u32)?;
        for t in &self.tensors {
            put_bytes(w, t.name.as_bytes())?;
            put_u32(w, t.shape.len() as u32)?;
            for &d in &t.shape {
                put_u32(w, d as u32)?;
            }
            for v in &t.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        put_bytes(w, self.metadata.as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint(format!("bad magic {magic:?}")));
        }
        let version = get_u32(r)?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = get_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = get_string(r)?;
            let rank = get_u32(r)? as usize;
            if rank > 8 {
                return Err(NnError::Checkpoint(format!("tensor {name} has implausible rank {rank}")));
            }
            let shape = (0..rank).map(|_| get_u32(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            if len > 1 << 28 {
                return Err(NnError::Checkpoint(format!("tensor {name} is implausibly large")));
            }
            let mut raw = vec![0u8; len * 8];
            read_exact(r, &mut raw)?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push(Tensor { name, shape, values });
        }
        let metadata = get_string(r)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NnError::Checkpoint("trailing bytes after metadata".into()));
        }
        Ok(Self { tensors, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_bytes<W: Write>(w: &mut W, b: &[u8]) -> Result<()> {
    put_u32(w, b.len() as u32)?;
    w.write_all(b)?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NnError::Checkpoint("truncated file".into()),
        _ => NnError::Io(e),
    })
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_string<R: Read>(r: &mut R) -> Result<String> {
    let len = get_u32(r)? as usize;
    if len > 1 << 24 {
        return Err(NnError::Checkpoint(format!("implausible string length {len}")));
    }
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| NnError::Checkpoint("invalid UTF-8".into()))
}
