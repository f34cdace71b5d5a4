//! Binary dataset files.
//!
//! Little-endian layout: magic `SEMIPERC`, `u32` format version, `u64` N,
//! L and U, `f64` g, `u64` seed, L `i8` labels, `(L + U) N` `f64` features
//! row-major with labelled rows first, then the N teacher weights.

use std::path::Path;

use semiperc_core::synthdata::Matrix;
use semiperc_core::{Dataset, Teacher};

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 8] = b"SEMIPERC";
pub const FORMAT_VERSION: u32 = 1;

/// Header fields of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Header {
    pub n: usize,
    pub l: usize,
    pub u: usize,
    pub g: f64,
    pub seed: u64,
}

impl Header {
    pub fn of(d: &Dataset) -> Self {
        Self { n: d.n(), l: d.l_count(), u: d.u_count(), g: d.margin_g(), seed: d.seed() }
    }
}

pub fn encode(d: &Dataset) -> Vec<u8> {
    let h = Header::of(d);
    let mut out = Vec::with_capacity(52 + h.l + 8 * (h.l + h.u + 1) * h.n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [h.n as u64, h.l as u64, h.u as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&h.g.to_le_bytes());
    out.extend_from_slice(&h.seed.to_le_bytes());
    out.extend(d.labels().iter().map(|&y| y as u8));
    for x in d.labeled().as_slice().iter().chain(d.unlabeled().as_slice()).chain(d.teacher().weights()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.at.checked_add(k).filter(|&e| e <= self.buf.len()).ok_or("file is truncated")?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    fn f64s(&mut self, count: usize) -> std::result::Result<Vec<f64>, String> {
        let bytes = self.take(count.checked_mul(8).ok_or("size overflow")?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes"))).collect())
    }
}

pub fn decode(buf: &[u8]) -> std::result::Result<Dataset, String> {
    let mut c = Cursor { buf, at: 0 };
    if c.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("four bytes"));
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let to_usize = |v: u64| usize::try_from(v).map_err(|_| "size overflow".to_string());
    let n = to_usize(c.u64()?)?;
    let l = to_usize(c.u64()?)?;
    let u = to_usize(c.u64()?)?;
    let g = f64::from_bits(c.u64()?);
    let seed = c.u64()?;
    let labels: Vec<i8> = c.take(l)?.iter().map(|&b| b as i8).collect();
    let lab = c.f64s(l.checked_mul(n).ok_or("size overflow")?)?;
    let unl = c.f64s(u.checked_mul(n).ok_or("size overflow")?)?;
    let w0 = c.f64s(n)?;
    if c.at != buf.len() {
        return Err("trailing bytes after teacher".into());
    }
    let teacher = Teacher::from_normalized(w0).map_err(|e| e.to_string())?;
    let labeled = Matrix::from_row_major(l, n, lab).map_err(|e| e.to_string())?;
    let unlabeled = Matrix::from_row_major(u, n, unl).map_err(|e| e.to_string())?;
    Dataset::from_parts(labeled, labels, unlabeled, g, teacher, seed).map_err(|e| e.to_string())
}

pub fn write(path: &Path, d: &Dataset) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, encode(d)).map_err(|e| HarnessError::io(path, e))
}

/// Reads a dataset and audits its margin constraint.
pub fn read(path: &Path) -> Result<Dataset> {
    let buf = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let d = decode(&buf).map_err(|reason| HarnessError::Format { path: path.to_path_buf(), reason })?;
    let bad = d.margin_violations();
    if bad > 0 {
        return Err(HarnessError::Format { path: path.to_path_buf(), reason: format!("{bad} data violate the margin") });
    }
    Ok(d)
}
