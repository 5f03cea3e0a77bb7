//! Formatted arithmetic: `target += alpha * a * b` with truncation.

use std::ops::Range;

use faer::{c64, Mat, MatRef};

use super::{Block, BlockData};
use crate::error::{HmatError, Result};
use crate::linalg::{self, ONE};
use crate::lowrank::{self, AcaConfig, LowRankFactor};

#[derive(Clone, Copy)]
enum Kind<'a> {
    Dense(MatRef<'a, c64>),
    LowRank(MatRef<'a, c64>, MatRef<'a, c64>),
    Hier(&'a Block),
}

/// Read-only operand: a block or a rectangular piece of a dense/low-rank block.
#[derive(Clone)]
pub struct BlockOp<'a> {
    rows: Range<usize>,
    cols: Range<usize>,
    kind: Kind<'a>,
}

impl<'a> BlockOp<'a> {
    pub fn of(b: &'a Block) -> Self {
        let kind = match &b.data {
            BlockData::Dense(m) => Kind::Dense(m.as_ref()),
            BlockData::LowRank(f) => Kind::LowRank(f.u.as_ref(), f.v.as_ref()),
            BlockData::Hier { .. } => Kind::Hier(b),
        };
        BlockOp { rows: b.rows.clone(), cols: b.cols.clone(), kind }
    }

    fn nrows(&self) -> usize {
        self.rows.len()
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn sub(&self, rows: &Range<usize>, cols: &Range<usize>) -> Result<BlockOp<'a>> {
        if *rows == self.rows && *cols == self.cols {
            return Ok(self.clone());
        }
        let (r0, c0) = (rows.start - self.rows.start, cols.start - self.cols.start);
        let kind = match self.kind {
            Kind::Dense(m) => Kind::Dense(m.submatrix(r0, c0, rows.len(), cols.len())),
            Kind::LowRank(u, v) => Kind::LowRank(u.subrows(r0, rows.len()), v.subrows(c0, cols.len())),
            Kind::Hier(b) => {
                let BlockData::Hier { children, .. } = &b.data else { unreachable!() };
                let c = children.iter().find(|c| c.rows == *rows && c.cols == *cols).ok_or_else(|| {
                    HmatError::NonConformal(format!("no child {rows:?} x {cols:?} in {:?} x {:?}", b.rows, b.cols))
                })?;
                return Ok(BlockOp::of(c));
            }
        };
        Ok(BlockOp { rows: rows.clone(), cols: cols.clone(), kind })
    }

    fn row_parts(&self) -> Vec<Range<usize>> {
        match self.kind {
            Kind::Hier(b) => {
                let BlockData::Hier { nr, nc, children } = &b.data else { unreachable!() };
                (0..*nr).map(|i| children[i * nc].rows.clone()).collect()
            }
            _ => vec![self.rows.clone()],
        }
    }

    fn col_parts(&self) -> Vec<Range<usize>> {
        match self.kind {
            Kind::Hier(b) => {
                let BlockData::Hier { nc, children, .. } = &b.data else { unreachable!() };
                (0..*nc).map(|j| children[j].cols.clone()).collect()
            }
            _ => vec![self.cols.clone()],
        }
    }

    /// `op * x`
    fn mul(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let mut y = Mat::zeros(self.nrows(), x.ncols());
        match self.kind {
            Kind::Dense(m) => linalg::gemm_acc(y.as_mut(), ONE, m, x),
            Kind::LowRank(u, v) => {
                let t = linalg::adj_mul(v, x);
                linalg::gemm_acc(y.as_mut(), ONE, u, t.as_ref());
            }
            Kind::Hier(b) => b.mul_acc(ONE, x, y.as_mut()),
        }
        y
    }

    /// `op^* * x`
    fn adj_mul(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let mut y = Mat::zeros(self.ncols(), x.ncols());
        match self.kind {
            Kind::Dense(m) => linalg::gemm_adj_acc(y.as_mut(), ONE, m, x),
            Kind::LowRank(u, v) => {
                let t = linalg::adj_mul(u, x);
                linalg::gemm_acc(y.as_mut(), ONE, v, t.as_ref());
            }
            Kind::Hier(b) => b.adj_mul_acc(ONE, x, y.as_mut()),
        }
        y
    }

    fn to_dense(&self) -> Mat<c64> {
        match self.kind {
            Kind::Dense(m) => m.to_owned(),
            Kind::LowRank(u, v) => linalg::mul_adj(u, v),
            Kind::Hier(b) => b.to_dense(),
        }
    }
}

fn inner_parts(a: &BlockOp<'_>, b: &BlockOp<'_>) -> Result<Vec<Range<usize>>> {
    let (ka, kb) = (a.col_parts(), b.row_parts());
    match (matches!(a.kind, Kind::Hier(_)), matches!(b.kind, Kind::Hier(_))) {
        (true, true) if ka != kb => Err(HmatError::NonConformal(format!("inner partitions {ka:?} vs {kb:?}"))),
        (true, _) => Ok(ka),
        _ => Ok(kb),
    }
}

fn scaled(alpha: c64, m: Mat<c64>) -> Mat<c64> {
    if alpha == ONE {
        return m;
    }
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| alpha * m[(i, j)])
}

/// `target += alpha * a * b`, truncating low-rank results with `eps`.
pub fn addmul(target: &mut Block, alpha: c64, a: &BlockOp<'_>, b: &BlockOp<'_>, eps: f64) -> Result<()> {
    if a.rows != target.rows || b.cols != target.cols || a.cols != b.rows {
        return Err(HmatError::NonConformal(format!(
            "{:?}x{:?} += {:?}x{:?} * {:?}x{:?}",
            target.rows, target.cols, a.rows, a.cols, b.rows, b.cols
        )));
    }
    if let Kind::LowRank(u, v) = a.kind {
        // (u v^*) b = u (b^* v)^*
        let w = b.adj_mul(v);
        return add_lowrank(target, scaled(alpha, u.to_owned()).as_ref(), w.as_ref(), eps);
    }
    if let Kind::LowRank(u, v) = b.kind {
        let x = a.mul(u);
        return add_lowrank(target, scaled(alpha, x).as_ref(), v, eps);
    }
    match &mut target.data {
        BlockData::Hier { children, .. } => {
            let kparts = inner_parts(a, b)?;
            for c in children.iter_mut() {
                for k in &kparts {
                    let (ra, rb) = (a.sub(&c.rows, k)?, b.sub(k, &c.cols)?);
                    addmul(c, alpha, &ra, &rb, eps)?;
                }
            }
            Ok(())
        }
        BlockData::Dense(t) => {
            let p = product_dense(a, b);
            let p = scaled(alpha, p);
            *t += &p;
            Ok(())
        }
        BlockData::LowRank(_) => {
            let f = product_lowrank(a, b, eps)?;
            add_lowrank(target, scaled(alpha, f.u).as_ref(), f.v.as_ref(), eps)
        }
    }
}

fn product_dense(a: &BlockOp<'_>, b: &BlockOp<'_>) -> Mat<c64> {
    match (a.kind, b.kind) {
        (Kind::Dense(x), Kind::Dense(y)) => linalg::mul(x, y),
        (Kind::Dense(x), _) => linalg::adjoint(b.adj_mul(x.adjoint().to_owned().as_ref()).as_ref()),
        (_, Kind::Dense(y)) => a.mul(y),
        _ => a.mul(b.to_dense().as_ref()),
    }
}

/// Low-rank form of `a * b`; children are agglomerated then recompressed.
fn product_lowrank(a: &BlockOp<'_>, b: &BlockOp<'_>, eps: f64) -> Result<LowRankFactor> {
    match (a.kind, b.kind) {
        (Kind::LowRank(u, v), _) => return Ok(LowRankFactor { u: u.to_owned(), v: b.adj_mul(v) }),
        (_, Kind::LowRank(u, v)) => return Ok(LowRankFactor { u: a.mul(u), v: v.to_owned() }),
        (Kind::Dense(_), Kind::Dense(_)) => {
            let p = product_dense(a, b);
            return Ok(lowrank::aca_full(p.as_ref(), &AcaConfig::with_eps(eps)).factor);
        }
        _ => {}
    }
    let (rparts, cparts, kparts) = (a.row_parts(), b.col_parts(), inner_parts(a, b)?);
    let (m, n) = (a.nrows(), b.ncols());
    let mut acc = LowRankFactor::zeros(m, n);
    for ri in &rparts {
        for cj in &cparts {
            let mut part = LowRankFactor::zeros(ri.len(), cj.len());
            for k in &kparts {
                let f = product_lowrank(&a.sub(ri, k)?, &b.sub(k, cj)?, eps)?;
                part = concat(&part, &f);
            }
            let part = lowrank::recompress(&part, eps);
            let r = part.rank();
            let mut u = Mat::zeros(m, r);
            let mut v = Mat::zeros(n, r);
            u.as_mut().submatrix_mut(ri.start - a.rows.start, 0, ri.len(), r).copy_from(&part.u);
            v.as_mut().submatrix_mut(cj.start - b.cols.start, 0, cj.len(), r).copy_from(&part.v);
            acc = concat(&acc, &LowRankFactor { u, v });
        }
    }
    Ok(lowrank::recompress(&acc, eps))
}

fn concat(f: &LowRankFactor, g: &LowRankFactor) -> LowRankFactor {
    LowRankFactor { u: linalg::hcat(f.u.as_ref(), g.u.as_ref()), v: linalg::hcat(f.v.as_ref(), g.v.as_ref()) }
}

/// `target += x y^*`.
pub(crate) fn add_lowrank(target: &mut Block, x: MatRef<'_, c64>, y: MatRef<'_, c64>, eps: f64) -> Result<()> {
    if x.ncols() == 0 {
        return Ok(());
    }
    let (r0, c0) = (target.rows.start, target.cols.start);
    match &mut target.data {
        BlockData::Dense(t) => {
            linalg::gemm_acc(t.as_mut(), ONE, x, y.adjoint().to_owned().as_ref());
            Ok(())
        }
        BlockData::LowRank(f) => {
            let g = LowRankFactor { u: linalg::hcat(f.u.as_ref(), x), v: linalg::hcat(f.v.as_ref(), y) };
            *f = lowrank::recompress(&g, eps);
            Ok(())
        }
        BlockData::Hier { children, .. } => {
            for c in children.iter_mut() {
                let xs = x.subrows(c.rows.start - r0, c.nrows());
                let ys = y.subrows(c.cols.start - c0, c.ncols());
                add_lowrank(c, xs, ys, eps)?;
            }
            Ok(())
        }
    }
}
