//! Binary save/load for assembled matrices and LU factors.
//!
//! Layout (all integers and floats little-endian):
//! magic `HMAT`, u16 version, u8 kind (0 matrix, 1 factors), u8 reserved,
//! matrix header, block trees, then a CRC32 of everything before it.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use faer::{c64, Mat};

use super::lu::DiagLu;
use super::{Block, BlockData, HMatrix, LuFactors};
use crate::error::{HmatError, Result};
use crate::lowrank::LowRankFactor;

pub const MAGIC: &[u8; 4] = b"HMAT";
pub const VERSION: u16 = 1;

const KIND_MATRIX: u8 = 0;
const KIND_FACTORS: u8 = 1;

const TAG_DENSE: u8 = 0;
const TAG_LOWRANK: u8 = 1;
const TAG_HIER: u8 = 2;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn mat(&mut self, m: &Mat<c64>) {
        self.u64(m.nrows());
        self.u64(m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                self.f64(m[(i, j)].re);
                self.f64(m[(i, j)].im);
            }
        }
    }
    fn usizes(&mut self, v: &[usize]) {
        self.u64(v.len());
        v.iter().for_each(|&x| self.u64(x));
    }
    fn block(&mut self, b: &Block) {
        let tag = match b.data {
            BlockData::Dense(_) => TAG_DENSE,
            BlockData::LowRank(_) => TAG_LOWRANK,
            BlockData::Hier { .. } => TAG_HIER,
        };
        self.u8(tag);
        for v in [b.rows.start, b.rows.end, b.cols.start, b.cols.end] {
            self.u64(v);
        }
        match &b.data {
            BlockData::Dense(m) => self.mat(m),
            BlockData::LowRank(f) => {
                self.mat(&f.u);
                self.mat(&f.v);
            }
            BlockData::Hier { nr, nc, children } => {
                self.u64(*nr);
                self.u64(*nc);
                children.iter().for_each(|c| self.block(c));
            }
        }
    }
    fn matrix(&mut self, h: &HMatrix) {
        self.u64(h.d);
        self.u64(h.n_leaf);
        self.u64(h.c_sp);
        self.u64(h.max_rank_before);
        self.u64(h.n_fallbacks);
        self.u64(h.n_unconverged);
        self.usizes(&h.perm);
        self.block(&h.root);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(HmatError::Format("truncated snapshot".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes(1)?[0])
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| HmatError::Format("integer overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
    fn mat(&mut self) -> Result<Mat<c64>> {
        let (m, n) = (self.u64()?, self.u64()?);
        let len = m
            .checked_mul(n)
            .and_then(|x| x.checked_mul(16))
            .ok_or_else(|| HmatError::Format("matrix too large".into()))?;
        if self.pos + len > self.buf.len() {
            return Err(HmatError::Format("truncated matrix payload".into()));
        }
        let mut out = Mat::zeros(m, n);
        for j in 0..n {
            for i in 0..m {
                out[(i, j)] = c64::new(self.f64()?, self.f64()?);
            }
        }
        Ok(out)
    }
    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.u64()?;
        if n > self.buf.len() / 8 {
            return Err(HmatError::Format("index list too long".into()));
        }
        (0..n).map(|_| self.u64()).collect()
    }
    fn block(&mut self) -> Result<Block> {
        let tag = self.u8()?;
        let (r0, r1, c0, c1) = (self.u64()?, self.u64()?, self.u64()?, self.u64()?);
        if r1 < r0 || c1 < c0 {
            return Err(HmatError::Format("invalid block range".into()));
        }
        let (rows, cols) = (r0..r1, c0..c1);
        let data = match tag {
            TAG_DENSE => {
                let m = self.mat()?;
                if m.nrows() != rows.len() || m.ncols() != cols.len() {
                    return Err(HmatError::Format("dense payload shape mismatch".into()));
                }
                BlockData::Dense(m)
            }
            TAG_LOWRANK => {
                let (u, v) = (self.mat()?, self.mat()?);
                if u.nrows() != rows.len() || v.nrows() != cols.len() || u.ncols() != v.ncols() {
                    return Err(HmatError::Format("low-rank payload shape mismatch".into()));
                }
                BlockData::LowRank(LowRankFactor { u, v })
            }
            TAG_HIER => {
                let (nr, nc) = (self.u64()?, self.u64()?);
                if nr == 0 || nc == 0 || nr > 2 || nc > 2 {
                    return Err(HmatError::Format(format!("invalid child grid {nr}x{nc}")));
                }
                let children = (0..nr * nc).map(|_| self.block()).collect::<Result<Vec<_>>>()?;
                BlockData::Hier { nr, nc, children }
            }
            t => return Err(HmatError::Format(format!("unknown block tag {t}"))),
        };
        Ok(Block { rows, cols, data })
    }
    fn matrix(&mut self) -> Result<HMatrix> {
        let d = self.u64()?;
        let n_leaf = self.u64()?;
        let c_sp = self.u64()?;
        let max_rank_before = self.u64()?;
        let n_fallbacks = self.u64()?;
        let n_unconverged = self.u64()?;
        let perm = self.usizes()?;
        let root = self.block()?;
        if d == 0 || root.rows != (0..d * perm.len()) || root.cols != root.rows {
            return Err(HmatError::Format("root block does not match the permutation".into()));
        }
        Ok(HMatrix { root, perm, d, n_leaf, c_sp, max_rank_before, n_fallbacks, n_unconverged })
    }
}

fn frame(kind: u8, body: impl FnOnce(&mut Writer)) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.extend_from_slice(MAGIC);
    w.u16(VERSION);
    w.u8(kind);
    w.u8(0);
    body(&mut w);
    let crc = crc32fast::hash(&w.buf);
    w.buf.extend_from_slice(&crc.to_le_bytes());
    w.buf
}

fn unframe(bytes: &[u8], kind: u8) -> Result<Reader<'_>> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(HmatError::Format("not a snapshot file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(HmatError::Version { found: version, expected: VERSION });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(HmatError::Checksum);
    }
    if body[6] != kind {
        return Err(HmatError::Format(format!("snapshot holds kind {}, expected {kind}", body[6])));
    }
    Ok(Reader { buf: body, pos: 8 })
}

fn finish<T>(r: Reader<'_>, v: T) -> Result<T> {
    if r.pos != r.buf.len() {
        return Err(HmatError::Format("trailing bytes in snapshot".into()));
    }
    Ok(v)
}

pub fn matrix_to_bytes(h: &HMatrix) -> Vec<u8> {
    frame(KIND_MATRIX, |w| w.matrix(h))
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<HMatrix> {
    let mut r = unframe(bytes, KIND_MATRIX)?;
    let h = r.matrix()?;
    finish(r, h)
}

pub fn factors_to_bytes(f: &LuFactors) -> Vec<u8> {
    frame(KIND_FACTORS, |w| {
        w.f64(f.eps_lu);
        w.matrix(&f.lower);
        w.matrix(&f.upper);
        w.u64(f.diag.len());
        for (start, dl) in &f.diag {
            w.u64(*start);
            w.usizes(&dl.fwd);
            w.mat(&dl.l);
        }
    })
}

pub fn factors_from_bytes(bytes: &[u8]) -> Result<LuFactors> {
    let mut r = unframe(bytes, KIND_FACTORS)?;
    let eps_lu = r.f64()?;
    let lower = r.matrix()?;
    let upper = r.matrix()?;
    let n = r.u64()?;
    let mut diag = BTreeMap::new();
    for _ in 0..n {
        let start = r.u64()?;
        let fwd = r.usizes()?;
        let l = r.mat()?;
        if l.nrows() != fwd.len() || l.ncols() != fwd.len() || fwd.iter().any(|&i| i >= fwd.len()) {
            return Err(HmatError::Format("invalid pivot record".into()));
        }
        diag.insert(start, DiagLu { fwd, l });
    }
    finish(r, LuFactors { lower, upper, diag, eps_lu })
}

pub fn save_matrix(h: &HMatrix, path: impl AsRef<Path>) -> Result<()> {
    std::fs::File::create(path)?.write_all(&matrix_to_bytes(h))?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<HMatrix> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    matrix_from_bytes(&buf)
}

pub fn save_factors(f: &LuFactors, path: impl AsRef<Path>) -> Result<()> {
    std::fs::File::create(path)?.write_all(&factors_to_bytes(f))?;
    Ok(())
}

pub fn load_factors(path: impl AsRef<Path>) -> Result<LuFactors> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    factors_from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_geometry, GeometrySpec};
    use crate::hmatrix::{hlu, AssemblyConfig};
    use crate::kernels::{Kernel, SelfBlockRule};

    fn sample() -> HMatrix {
        let cloud = make_geometry(GeometrySpec::Plate { n_per_axis: 12, half_width: 1.0 }).unwrap();
        let cfg = AssemblyConfig { n_leaf: 16, self_rule: SelfBlockRule::Shift(144.0), ..Default::default() };
        HMatrix::from_cloud(&Kernel::Helmholtz { kappa: 3.0 }, &cloud, &cfg).unwrap().0
    }

    #[test]
    fn matrix_round_trip() {
        let h = sample();
        let g = matrix_from_bytes(&matrix_to_bytes(&h)).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn factors_round_trip() {
        let f = hlu(&sample(), 1e-6).unwrap();
        let g = factors_from_bytes(&factors_to_bytes(&f)).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn rejects_bad_version_and_corruption() {
        let mut bytes = matrix_to_bytes(&sample());
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(matches!(matrix_from_bytes(&v), Err(HmatError::Version { found: 9, .. })));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        assert!(matches!(matrix_from_bytes(&bytes), Err(HmatError::Checksum)));
        assert!(matrix_from_bytes(b"nope").is_err());
    }

    #[test]
    fn kind_is_checked() {
        let bytes = matrix_to_bytes(&sample());
        assert!(matches!(factors_from_bytes(&bytes), Err(HmatError::Format(_))));
    }
}
