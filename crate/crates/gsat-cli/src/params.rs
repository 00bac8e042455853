//! Binary on-disk format for trained parameters.
//!
//! Layout (all integers and floats little-endian):
//! - magic bytes `GSATPRMS`
//! - format version: u32 (currently 1)
//! - layer count: u32
//! - per layer: head count u32, then per head:
//!   - projection matrix
//!   - attention matrix count u32, then that many matrices
//! - matrix encoding: rows u32, cols u32, `rows * cols` f32 values in
//!   row-major order
//!
//! Values are stored as 32-bit floats; loading therefore reproduces the
//! saved parameters to f32 precision.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gsat_core::model::{HeadParams, ModelParams};
use gsat_core::DenseMatrix;

const MAGIC: &[u8; 8] = b"GSATPRMS";
const VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).context("value does not fit the u32 field")?;
        self.buf.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn matrix(&mut self, m: &DenseMatrix) -> Result<()> {
        self.u32(m.rows())?;
        self.u32(m.cols())?;
        for &v in m.data() {
            self.buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            bail!("{}: truncated parameter file", self.path.display());
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn matrix(&mut self) -> Result<DenseMatrix> {
        let rows = self.u32()?;
        let cols = self.u32()?;
        let raw = self.take(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Ok(DenseMatrix::from_vec(rows, cols, data)?)
    }
}

pub fn save_params(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.buf.extend_from_slice(&VERSION.to_le_bytes());
    w.u32(params.layers.len())?;
    for heads in &params.layers {
        w.u32(heads.len())?;
        for head in heads {
            w.matrix(&head.w)?;
            w.u32(head.thetas.len())?;
            for theta in &head.thetas {
                w.matrix(theta)?;
            }
        }
    }
    fs::write(path, &w.buf).with_context(|| format!("writing {}", path.display()))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != MAGIC {
        bail!("{}: not a parameter file (bad magic)", path.display());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        bail!(
            "{}: unsupported format version {version} (expected {VERSION})",
            path.display()
        );
    }
    let num_layers = r.u32()?;
    let mut layers = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let num_heads = r.u32()?;
        let mut heads = Vec::with_capacity(num_heads);
        for _ in 0..num_heads {
            let w = r.matrix()?;
            let num_thetas = r.u32()?;
            let thetas = (0..num_thetas)
                .map(|_| r.matrix())
                .collect::<Result<Vec<_>>>()?;
            heads.push(HeadParams { w, thetas });
        }
        layers.push(heads);
    }
    if r.pos != bytes.len() {
        bail!("{}: trailing bytes after parameter data", path.display());
    }
    Ok(ModelParams { layers })
}
