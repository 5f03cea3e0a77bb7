//! Recursive H-LU factorization and block triangular solves.

use std::collections::BTreeMap;

use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_unit_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::prelude::*;
use faer::{c64, Mat, MatMut};

use super::arith::{addmul, BlockOp};
use super::{Block, BlockData, HMatrix};
use crate::error::{HmatError, Result};
use crate::linalg::{self, ONE};
use crate::lowrank::LowRankFactor;

/// Pivoted LU of one diagonal dense leaf: `A[fwd[i], :] = (L U)[i, :]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagLu {
    pub fwd: Vec<usize>,
    pub l: Mat<c64>,
}

/// `A_H ~ L_H U_H`. Diagonal leaves of `lower` hold `P^T L`; the unit lower
/// factor and pivots of each are kept in `diag`, keyed by the leaf's first row.
#[derive(Debug, Clone, PartialEq)]
pub struct LuFactors {
    pub lower: HMatrix,
    pub upper: HMatrix,
    pub diag: BTreeMap<usize, DiagLu>,
    pub eps_lu: f64,
}

struct Ctx {
    eps: f64,
    diag: BTreeMap<usize, DiagLu>,
}

fn take(b: &mut Block) -> Block {
    let rows = b.rows.clone();
    let cols = b.cols.clone();
    std::mem::replace(b, Block::zero(rows, cols))
}

pub fn hlu(h: &HMatrix, eps_lu: f64) -> Result<LuFactors> {
    if !(eps_lu > 0.0 && eps_lu < 1.0) {
        return Err(HmatError::InvalidArgument(format!("eps_lu must lie in (0, 1), got {eps_lu}")));
    }
    let mut ctx = Ctx { eps: eps_lu, diag: BTreeMap::new() };
    let (l, u) = lu_block(h.root.clone(), &mut ctx)?;
    let wrap = |root: Block| HMatrix { root, ..h.clone_shell() };
    Ok(LuFactors { lower: wrap(l), upper: wrap(u), diag: ctx.diag, eps_lu })
}

impl HMatrix {
    fn clone_shell(&self) -> HMatrix {
        HMatrix {
            root: Block::zero(0..0, 0..0),
            perm: self.perm.clone(),
            d: self.d,
            n_leaf: self.n_leaf,
            c_sp: self.c_sp,
            max_rank_before: 0,
            n_fallbacks: 0,
            n_unconverged: 0,
        }
    }
}

fn lu_block(a: Block, ctx: &mut Ctx) -> Result<(Block, Block)> {
    let (rows, cols) = (a.rows.clone(), a.cols.clone());
    match a.data {
        BlockData::Dense(m) => {
            let n = m.nrows();
            if m.ncols() != n {
                return Err(HmatError::NonConformal(format!("non-square diagonal leaf {rows:?} x {cols:?}")));
            }
            let lu = m.partial_piv_lu();
            let scale = m.norm_max();
            let u = Mat::from_fn(n, n, |i, j| if i <= j { lu.U()[(i, j)] } else { c64::new(0.0, 0.0) });
            for i in 0..n {
                let p = u[(i, i)].norm();
                if !p.is_finite() || p <= f64::EPSILON * scale {
                    return Err(HmatError::SingularPivot { rows });
                }
            }
            let l = Mat::from_fn(n, n, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Greater => lu.L()[(i, j)],
                std::cmp::Ordering::Equal => ONE,
                std::cmp::Ordering::Less => c64::new(0.0, 0.0),
            });
            let fwd = lu.P().arrays().0.to_vec();
            let mut pl = Mat::zeros(n, n);
            for i in 0..n {
                pl.as_mut().row_mut(fwd[i]).copy_from(l.row(i));
            }
            ctx.diag.insert(rows.start, DiagLu { fwd, l });
            Ok((
                Block { rows: rows.clone(), cols: cols.clone(), data: BlockData::Dense(pl) },
                Block { rows, cols, data: BlockData::Dense(u) },
            ))
        }
        BlockData::LowRank(_) => Err(HmatError::NonConformal(format!("low-rank diagonal block {rows:?}"))),
        BlockData::Hier { nr, nc, mut children } => {
            if nr != nc {
                return Err(HmatError::NonConformal(format!("{nr}x{nc} diagonal block {rows:?}")));
            }
            let n = nr;
            let mut ls: Vec<Block> = children.iter().map(|c| Block::zero(c.rows.clone(), c.cols.clone())).collect();
            let mut us: Vec<Block> = ls.clone();
            for i in 0..n {
                let (l_ii, u_ii) = lu_block(take(&mut children[i * n + i]), ctx)?;
                for j in i + 1..n {
                    us[i * n + j] = solve_lower_block(&l_ii, take(&mut children[i * n + j]), ctx)?;
                    ls[j * n + i] = solve_upper_right_block(&u_ii, take(&mut children[j * n + i]), ctx)?;
                }
                for j in i + 1..n {
                    for k in i + 1..n {
                        let (lji, uik) = (BlockOp::of(&ls[j * n + i]), BlockOp::of(&us[i * n + k]));
                        addmul(&mut children[j * n + k], -ONE, &lji, &uik, ctx.eps)?;
                    }
                }
                ls[i * n + i] = l_ii;
                us[i * n + i] = u_ii;
            }
            Ok((
                Block { rows: rows.clone(), cols: cols.clone(), data: BlockData::Hier { nr: n, nc: n, children: ls } },
                Block { rows, cols, data: BlockData::Hier { nr: n, nc: n, children: us } },
            ))
        }
    }
}

/// Solves `L X = B` for a block `B` sharing the rows of `L`.
fn solve_lower_block(l: &Block, b: Block, ctx: &Ctx) -> Result<Block> {
    let (rows, cols) = (b.rows.clone(), b.cols.clone());
    let data = match b.data {
        BlockData::LowRank(f) => {
            let mut u = f.u;
            lower_solve(l, u.as_mut(), &ctx.diag)?;
            BlockData::LowRank(LowRankFactor { u, v: f.v })
        }
        BlockData::Dense(mut m) => {
            lower_solve(l, m.as_mut(), &ctx.diag)?;
            BlockData::Dense(m)
        }
        BlockData::Hier { nr, nc, mut children } => {
            if let BlockData::Hier { nr: ln, .. } = &l.data {
                if *ln != nr {
                    return Err(HmatError::NonConformal(format!("lower solve over {rows:?}")));
                }
                for i in 0..nr {
                    for j in 0..nc {
                        let mut bij = take(&mut children[i * nc + j]);
                        for k in 0..i {
                            let (lik, xkj) = (BlockOp::of(l.child(i, k)), BlockOp::of(&children[k * nc + j]));
                            addmul(&mut bij, -ONE, &lik, &xkj, ctx.eps)?;
                        }
                        children[i * nc + j] = solve_lower_block(l.child(i, i), bij, ctx)?;
                    }
                }
            } else {
                for c in children.iter_mut() {
                    *c = solve_lower_block(l, take(c), ctx)?;
                }
            }
            BlockData::Hier { nr, nc, children }
        }
    };
    Ok(Block { rows, cols, data })
}

/// Solves `X U = B` for a block `B` sharing the columns of `U`.
fn solve_upper_right_block(u: &Block, b: Block, ctx: &Ctx) -> Result<Block> {
    let (rows, cols) = (b.rows.clone(), b.cols.clone());
    let data = match b.data {
        BlockData::LowRank(f) => {
            // X = p w^* with U^* w = q
            let mut w = f.v;
            upper_adj_solve(u, w.as_mut())?;
            BlockData::LowRank(LowRankFactor { u: f.u, v: w })
        }
        BlockData::Dense(m) => {
            let mut w = linalg::adjoint(m.as_ref());
            upper_adj_solve(u, w.as_mut())?;
            BlockData::Dense(linalg::adjoint(w.as_ref()))
        }
        BlockData::Hier { nr, nc, mut children } => {
            if let BlockData::Hier { nc: un, .. } = &u.data {
                if *un != nc {
                    return Err(HmatError::NonConformal(format!("upper solve over {cols:?}")));
                }
                for j in 0..nc {
                    for i in 0..nr {
                        let mut bij = take(&mut children[i * nc + j]);
                        for k in 0..j {
                            let (xik, ukj) = (BlockOp::of(&children[i * nc + k]), BlockOp::of(u.child(k, j)));
                            addmul(&mut bij, -ONE, &xik, &ukj, ctx.eps)?;
                        }
                        children[i * nc + j] = solve_upper_right_block(u.child(j, j), bij, ctx)?;
                    }
                }
            } else {
                for c in children.iter_mut() {
                    *c = solve_upper_right_block(u, take(c), ctx)?;
                }
            }
            BlockData::Hier { nr, nc, children }
        }
    };
    Ok(Block { rows, cols, data })
}

fn diag_n(b: &Block) -> Result<usize> {
    match &b.data {
        BlockData::Hier { nr, nc, .. } if nr == nc => Ok(*nr),
        BlockData::Hier { .. } => Err(HmatError::NonConformal(format!("non-square diagonal {:?}", b.rows))),
        _ => Ok(1),
    }
}

fn offsets(b: &Block, i: usize) -> (usize, usize) {
    let c = b.child(i, i);
    (c.rows.start - b.rows.start, c.nrows())
}

/// In-place `X <- L^{-1} X` for a lower factor block.
fn lower_solve(l: &Block, mut x: MatMut<'_, c64>, diag: &BTreeMap<usize, DiagLu>) -> Result<()> {
    match &l.data {
        BlockData::Dense(_) => {
            let f = diag
                .get(&l.rows.start)
                .ok_or_else(|| HmatError::NonConformal(format!("no pivots for leaf {:?}", l.rows)))?;
            let mut t = Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(f.fwd[i], j)]);
            solve_unit_lower_triangular_in_place(f.l.as_ref(), t.as_mut(), linalg::par());
            x.copy_from(&t);
            Ok(())
        }
        BlockData::LowRank(_) => Err(HmatError::NonConformal("low-rank diagonal in lower factor".into())),
        BlockData::Hier { .. } => {
            let n = diag_n(l)?;
            for i in 0..n {
                let (oi, li) = offsets(l, i);
                for k in 0..i {
                    let (ok, lk) = offsets(l, k);
                    let xk = x.rb().subrows(ok, lk).to_owned();
                    l.child(i, k).mul_acc(-ONE, xk.as_ref(), x.rb_mut().subrows_mut(oi, li));
                }
                lower_solve(l.child(i, i), x.rb_mut().subrows_mut(oi, li), diag)?;
            }
            Ok(())
        }
    }
}

/// In-place `X <- U^{-1} X`.
fn upper_solve(u: &Block, mut x: MatMut<'_, c64>) -> Result<()> {
    match &u.data {
        BlockData::Dense(m) => {
            solve_upper_triangular_in_place(m.as_ref(), x, linalg::par());
            Ok(())
        }
        BlockData::LowRank(_) => Err(HmatError::NonConformal("low-rank diagonal in upper factor".into())),
        BlockData::Hier { .. } => {
            let n = diag_n(u)?;
            for i in (0..n).rev() {
                let (oi, li) = offsets(u, i);
                for k in i + 1..n {
                    let (ok, lk) = offsets(u, k);
                    let xk = x.rb().subrows(ok, lk).to_owned();
                    u.child(i, k).mul_acc(-ONE, xk.as_ref(), x.rb_mut().subrows_mut(oi, li));
                }
                upper_solve(u.child(i, i), x.rb_mut().subrows_mut(oi, li))?;
            }
            Ok(())
        }
    }
}

/// In-place `X <- U^{-*} X`.
fn upper_adj_solve(u: &Block, mut x: MatMut<'_, c64>) -> Result<()> {
    match &u.data {
        BlockData::Dense(m) => {
            solve_lower_triangular_in_place(m.adjoint(), x, linalg::par());
            Ok(())
        }
        BlockData::LowRank(_) => Err(HmatError::NonConformal("low-rank diagonal in upper factor".into())),
        BlockData::Hier { .. } => {
            let n = diag_n(u)?;
            for i in 0..n {
                let (oi, li) = offsets(u, i);
                for k in 0..i {
                    let (ok, lk) = offsets(u, k);
                    let xk = x.rb().subrows(ok, lk).to_owned();
                    u.child(k, i).adj_mul_acc(-ONE, xk.as_ref(), x.rb_mut().subrows_mut(oi, li));
                }
                upper_adj_solve(u.child(i, i), x.rb_mut().subrows_mut(oi, li))?;
            }
            Ok(())
        }
    }
}

impl LuFactors {
    pub fn dim(&self) -> usize {
        self.lower.dim()
    }

    /// Solves `L_H U_H X = B` for tree-ordered right-hand sides in place.
    pub fn solve_tree_order(&self, x: MatMut<'_, c64>) -> Result<()> {
        let mut x = x;
        lower_solve(&self.lower.root, x.rb_mut(), &self.diag)?;
        upper_solve(&self.upper.root, x)
    }

    /// `x0` with `L_H U_H x0 = b`, both in the original ordering.
    pub fn solve(&self, b: &[c64]) -> Result<Vec<c64>> {
        if b.len() != self.dim() {
            return Err(HmatError::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        let mut t = self.lower.to_tree_order(b);
        let n = t.len();
        self.solve_tree_order(MatMut::from_column_major_slice_mut(&mut t, n, 1))?;
        Ok(self.lower.from_tree_order(&t))
    }

    /// `L_H U_H x` in the original ordering.
    pub fn apply(&self, x: &[c64]) -> Result<Vec<c64>> {
        let y = self.upper.matvec(x)?;
        self.lower.matvec(&y)
    }
}

pub fn triangular_solve(f: &LuFactors, b: &[c64]) -> Result<Vec<c64>> {
    f.solve(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_geometry, GeometrySpec};
    use crate::hmatrix::AssemblyConfig;
    use crate::kernels::{Kernel, Material, SelfBlockRule};

    fn vec_norm(x: &[c64]) -> f64 {
        x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn test_x(n: usize) -> Vec<c64> {
        (0..n).map(|i| c64::new((1.3 * i as f64).sin(), (0.7 * i as f64).cos())).collect()
    }

    #[test]
    fn dense_lu_permutation_convention() {
        let a = Mat::from_fn(4, 4, |i, j| {
            c64::new(((i * 7 + j * 3) % 5) as f64 + (i == j) as usize as f64, j as f64 * 0.1)
        });
        let lu = a.partial_piv_lu();
        let fwd = lu.P().arrays().0;
        let lu_prod = linalg::mul(lu.L(), lu.U());
        for i in 0..4 {
            for j in 0..4 {
                assert!((a[(fwd[i], j)] - lu_prod[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_leaf_lu_is_dense_lu() {
        let cloud = make_geometry(GeometrySpec::Plate { n_per_axis: 6, half_width: 1.0 }).unwrap();
        let cfg = AssemblyConfig { self_rule: SelfBlockRule::Shift(36.0), ..Default::default() };
        let (h, _, _) = HMatrix::from_cloud(&Kernel::Helmholtz { kappa: 1.0 }, &cloud, &cfg).unwrap();
        let f = hlu(&h, 1e-8).unwrap();
        let x = test_x(h.dim());
        let b = h.matvec(&x).unwrap();
        let x0 = f.solve(&b).unwrap();
        let err: Vec<c64> = x0.iter().zip(&x).map(|(a, b)| a - b).collect();
        assert!(vec_norm(&err) < 1e-12 * vec_norm(&x));
    }

    #[test]
    fn elasto_lu_consistency() {
        let cloud = make_geometry(GeometrySpec::Plate { n_per_axis: 16, half_width: 1.0 }).unwrap();
        let m = Material::new(1.0, 1.0, 1.0 / 3.0, 2.0).unwrap();
        let cfg = AssemblyConfig { n_leaf: 16, self_rule: SelfBlockRule::Shift(256.0), ..Default::default() };
        let (h, _, _) = HMatrix::from_cloud(&Kernel::ElastoU(m), &cloud, &cfg).unwrap();
        let eps = 1e-6;
        let f = hlu(&h, eps).unwrap();
        let x = test_x(h.dim());
        let ax = h.matvec(&x).unwrap();
        let lux = f.apply(&x).unwrap();
        let d: Vec<c64> = ax.iter().zip(&lux).map(|(a, b)| a - b).collect();
        assert!(vec_norm(&d) <= 10.0 * eps * vec_norm(&ax), "{}", vec_norm(&d) / vec_norm(&ax));
        // the factors solve their own product
        let x0 = f.solve(&ax).unwrap();
        let r = f.apply(&x0).unwrap();
        let d: Vec<c64> = r.iter().zip(&ax).map(|(a, b)| a - b).collect();
        assert!(vec_norm(&d) <= 1e-10 * vec_norm(&ax));
    }

    #[test]
    fn singular_leaf_reports_rows() {
        let cloud = make_geometry(GeometrySpec::Plate { n_per_axis: 3, half_width: 1.0 }).unwrap();
        let cfg = AssemblyConfig { self_rule: SelfBlockRule::Shift(0.0), ..Default::default() };
        let (mut h, _, _) = HMatrix::from_cloud(&Kernel::Laplace, &cloud, &cfg).unwrap();
        if let BlockData::Dense(m) = &mut h.root.data {
            for j in 0..9 {
                m[(1, j)] = m[(0, j)];
            }
        }
        assert!(matches!(hlu(&h, 1e-6), Err(HmatError::SingularPivot { .. })));
    }
}
