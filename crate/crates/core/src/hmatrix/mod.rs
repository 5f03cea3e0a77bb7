//! The H-matrix container: assembly from a kernel, products, storage
//! accounting, formatted arithmetic and H-LU.

mod arith;
mod lu;
pub mod snapshot;

use std::ops::Range;

use faer::prelude::*;
use faer::{c64, Mat, MatMut, MatRef};
use rayon::prelude::*;

use crate::error::{HmatError, Result};
use crate::geometry::{BlockKind, BlockTree, ClusterTree, PointCloud};
use crate::kernels::{Kernel, KernelBlock, SelfBlockRule};
use crate::linalg::{self, ONE};
use crate::lowrank::{self, AcaConfig, BlockGenerator, LowRankFactor};

pub use arith::{addmul, BlockOp};
pub use lu::{hlu, triangular_solve, DiagLu, LuFactors};

#[derive(Debug, Clone, PartialEq)]
pub enum BlockData {
    Dense(Mat<c64>),
    LowRank(LowRankFactor),
    /// Row-major `nr x nc` grid of children.
    Hier {
        nr: usize,
        nc: usize,
        children: Vec<Block>,
    },
}

/// A block over absolute tree-order scalar index ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    pub data: BlockData,
}

impl Block {
    pub fn zero(rows: Range<usize>, cols: Range<usize>) -> Self {
        let data = BlockData::LowRank(LowRankFactor::zeros(rows.len(), cols.len()));
        Block { rows, cols, data }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn child(&self, i: usize, j: usize) -> &Block {
        match &self.data {
            BlockData::Hier { nc, children, .. } => &children[i * nc + j],
            _ => panic!("child of a leaf block"),
        }
    }

    /// `y += alpha * B x`, with `x` indexed by the block columns.
    pub fn mul_acc(&self, alpha: c64, x: MatRef<'_, c64>, mut y: MatMut<'_, c64>) {
        match &self.data {
            BlockData::Dense(m) => linalg::gemm_acc(y, alpha, m.as_ref(), x),
            BlockData::LowRank(f) => {
                if f.rank() > 0 {
                    let t = linalg::adj_mul(f.v.as_ref(), x);
                    linalg::gemm_acc(y, alpha, f.u.as_ref(), t.as_ref());
                }
            }
            BlockData::Hier { children, .. } => {
                for c in children {
                    let xs = x.subrows(c.cols.start - self.cols.start, c.ncols());
                    let ys = y.rb_mut().subrows_mut(c.rows.start - self.rows.start, c.nrows());
                    c.mul_acc(alpha, xs, ys);
                }
            }
        }
    }

    /// `y += alpha * B^* x`, with `x` indexed by the block rows.
    pub fn adj_mul_acc(&self, alpha: c64, x: MatRef<'_, c64>, mut y: MatMut<'_, c64>) {
        match &self.data {
            BlockData::Dense(m) => {
                linalg::gemm_adj_acc(y, alpha, m.as_ref(), x);
            }
            BlockData::LowRank(f) => {
                if f.rank() > 0 {
                    let t = linalg::adj_mul(f.u.as_ref(), x);
                    linalg::gemm_acc(y, alpha, f.v.as_ref(), t.as_ref());
                }
            }
            BlockData::Hier { children, .. } => {
                for c in children {
                    let xs = x.subrows(c.rows.start - self.rows.start, c.nrows());
                    let ys = y.rb_mut().subrows_mut(c.cols.start - self.cols.start, c.ncols());
                    c.adj_mul_acc(alpha, xs, ys);
                }
            }
        }
    }

    pub fn to_dense(&self) -> Mat<c64> {
        match &self.data {
            BlockData::Dense(m) => m.clone(),
            BlockData::LowRank(f) => f.to_dense(),
            BlockData::Hier { children, .. } => {
                let mut out = Mat::zeros(self.nrows(), self.ncols());
                for c in children {
                    out.as_mut()
                        .submatrix_mut(
                            c.rows.start - self.rows.start,
                            c.cols.start - self.cols.start,
                            c.nrows(),
                            c.ncols(),
                        )
                        .copy_from(c.to_dense());
                }
                out
            }
        }
    }

    pub fn stored_entries(&self) -> usize {
        match &self.data {
            BlockData::Dense(m) => m.nrows() * m.ncols(),
            BlockData::LowRank(f) => f.rank() * (f.nrows() + f.ncols()),
            BlockData::Hier { children, .. } => children.iter().map(Block::stored_entries).sum(),
        }
    }

    pub fn max_rank(&self) -> usize {
        match &self.data {
            BlockData::Dense(_) => 0,
            BlockData::LowRank(f) => f.rank(),
            BlockData::Hier { children, .. } => children.iter().map(Block::max_rank).max().unwrap_or(0),
        }
    }

    /// Visits all leaves depth-first.
    pub fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&'a Block)) {
        match &self.data {
            BlockData::Hier { children, .. } => children.iter().for_each(|c| c.for_each_leaf(f)),
            _ => f(self),
        }
    }

    pub fn leaves(&self) -> Vec<&Block> {
        let mut out = Vec::new();
        self.for_each_leaf(&mut |b| out.push(b));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyConfig {
    pub aca: AcaConfig,
    pub eta: f64,
    pub n_leaf: usize,
    pub self_rule: SelfBlockRule,
    pub rsvd_oversample: usize,
    pub seed: u64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            aca: AcaConfig::default(),
            eta: 3.0,
            n_leaf: 100,
            self_rule: SelfBlockRule::Reject,
            rsvd_oversample: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StorageReport {
    /// Stored complex entries N_s.
    pub n_stored: usize,
    /// `(d N_c)^2`.
    pub n_dense_equiv: usize,
    pub tau: f64,
    pub max_rank_before: usize,
    pub max_rank_after: usize,
    pub n_dense_leaves: usize,
    pub n_lowrank_leaves: usize,
    /// Analytic storage bound `2 C_sp max(r, d N_leaf) d N_c max(1, log2 N_c - log2 N_leaf + 1)`.
    pub bound: f64,
    pub c_sp: usize,
    /// Admissible leaves that needed the randomized SVD.
    pub n_fallbacks: usize,
    /// Admissible leaves whose approximation hit the rank cap.
    pub n_unconverged: usize,
}

/// Square H-matrix over one point cloud, stored in cluster-tree order.
#[derive(Debug, Clone, PartialEq)]
pub struct HMatrix {
    pub root: Block,
    /// `perm[t]` is the original index of the point at tree position `t`.
    pub perm: Vec<usize>,
    pub d: usize,
    pub n_leaf: usize,
    pub c_sp: usize,
    pub max_rank_before: usize,
    pub n_fallbacks: usize,
    pub n_unconverged: usize,
}

#[derive(Default, Clone, Copy)]
struct LeafStats {
    rank_before: usize,
    fallbacks: usize,
    unconverged: usize,
}

impl LeafStats {
    fn merge(self, o: LeafStats) -> LeafStats {
        LeafStats {
            rank_before: self.rank_before.max(o.rank_before),
            fallbacks: self.fallbacks + o.fallbacks,
            unconverged: self.unconverged + o.unconverged,
        }
    }
}

struct Assembler<'a> {
    kernel: &'a Kernel,
    cloud: &'a PointCloud,
    tree: &'a ClusterTree,
    bt: &'a BlockTree,
    cfg: &'a AssemblyConfig,
}

impl Assembler<'_> {
    fn build(&self, id: usize) -> Result<(Block, LeafStats)> {
        let node = &self.bt.nodes[id];
        let d = self.kernel.d();
        let rc = &self.tree.nodes[node.row];
        let cc = &self.tree.nodes[node.col];
        let rows = d * rc.range.start..d * rc.range.end;
        let cols = d * cc.range.start..d * cc.range.end;
        let gen = KernelBlock::new(
            self.kernel,
            self.cloud,
            self.cloud,
            &self.tree.perm[rc.range.clone()],
            &self.tree.perm[cc.range.clone()],
            self.cfg.self_rule,
        )?;
        match node.kind {
            BlockKind::Dense => {
                let m = gen.try_to_dense()?;
                Ok((Block { rows, cols, data: BlockData::Dense(m) }, LeafStats::default()))
            }
            BlockKind::Admissible => {
                let (f, stats) = compress(&gen, &self.cfg.aca, self.cfg.rsvd_oversample, self.cfg.seed ^ id as u64);
                Ok((Block { rows, cols, data: BlockData::LowRank(f) }, stats))
            }
            BlockKind::Subdivided => {
                let built: Vec<(Block, LeafStats)> =
                    node.children.par_iter().map(|&c| self.build(c)).collect::<Result<_>>()?;
                let stats = built.iter().fold(LeafStats::default(), |s, (_, t)| s.merge(*t));
                let children = built.into_iter().map(|(b, _)| b).collect();
                Ok((
                    Block { rows, cols, data: BlockData::Hier { nr: node.n_row_sons, nc: node.n_col_sons, children } },
                    stats,
                ))
            }
        }
    }
}

/// Cross approximation of one admissible block followed by recompression,
/// with the randomized SVD as fallback.
fn compress(gen: &dyn BlockGenerator, aca: &AcaConfig, oversample: usize, seed: u64) -> (LowRankFactor, LeafStats) {
    let first = if gen.d() == 1 { lowrank::aca_partial(gen, aca) } else { lowrank::aca_vector(gen, aca) };
    let mut stats = LeafStats::default();
    let approx = match first {
        Ok(a) if a.converged => a,
        _ => {
            stats.fallbacks = 1;
            let dense = gen.to_dense();
            lowrank::randomized_svd(dense.as_ref(), aca.eps, oversample, aca.max_rank, seed)
        }
    };
    if !approx.converged {
        stats.unconverged = 1;
    }
    stats.rank_before = approx.factor.rank();
    (lowrank::recompress(&approx.factor, aca.eps), stats)
}

impl HMatrix {
    pub fn assemble(
        kernel: &Kernel,
        cloud: &PointCloud,
        tree: &ClusterTree,
        bt: &BlockTree,
        cfg: &AssemblyConfig,
    ) -> Result<Self> {
        kernel.validate()?;
        cfg.aca.validate()?;
        if tree.perm.len() != cloud.len() {
            return Err(HmatError::DimensionMismatch { expected: cloud.len(), got: tree.perm.len() });
        }
        if kernel.needs_normals() && cloud.normals.is_none() {
            return Err(HmatError::MissingNormals);
        }
        let asm = Assembler { kernel, cloud, tree, bt, cfg };
        let (root, stats) = asm.build(0)?;
        Ok(HMatrix {
            root,
            perm: tree.perm.clone(),
            d: kernel.d(),
            n_leaf: tree.n_leaf,
            c_sp: bt.sparsity_constant(tree, tree),
            max_rank_before: stats.rank_before,
            n_fallbacks: stats.fallbacks,
            n_unconverged: stats.unconverged,
        })
    }

    /// Builds the cluster and block trees from `cfg` and assembles.
    pub fn from_cloud(
        kernel: &Kernel,
        cloud: &PointCloud,
        cfg: &AssemblyConfig,
    ) -> Result<(Self, ClusterTree, BlockTree)> {
        let tree = ClusterTree::build(cloud, cfg.n_leaf)?;
        let bt = BlockTree::build(&tree, &tree, cfg.eta)?;
        let h = HMatrix::assemble(kernel, cloud, &tree, &bt, cfg)?;
        Ok((h, tree, bt))
    }

    pub fn dim(&self) -> usize {
        self.d * self.perm.len()
    }

    pub fn n_points(&self) -> usize {
        self.perm.len()
    }

    /// Scalar index of tree position `t` in the original ordering.
    pub fn original_index(&self, t: usize) -> usize {
        self.d * self.perm[t / self.d] + t % self.d
    }

    pub fn to_tree_order(&self, x: &[c64]) -> Vec<c64> {
        (0..self.dim()).map(|t| x[self.original_index(t)]).collect()
    }

    pub fn from_tree_order(&self, y: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.dim()];
        for (t, v) in y.iter().enumerate() {
            out[self.original_index(t)] = *v;
        }
        out
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(HmatError::DimensionMismatch { expected: self.dim(), got: n });
        }
        Ok(())
    }

    /// `y = A_H x` in the original ordering.
    pub fn matvec(&self, x: &[c64]) -> Result<Vec<c64>> {
        self.check_len(x.len())?;
        let xt = self.to_tree_order(x);
        let mut yt = vec![c64::new(0.0, 0.0); self.dim()];
        self.root.mul_acc(
            ONE,
            MatRef::from_column_major_slice(&xt, self.dim(), 1),
            MatMut::from_column_major_slice_mut(&mut yt, self.dim(), 1),
        );
        Ok(self.from_tree_order(&yt))
    }

    /// Dense matrix in the original ordering.
    pub fn to_dense(&self) -> Mat<c64> {
        let t = self.root.to_dense();
        let n = self.dim();
        let mut out = Mat::zeros(n, n);
        for j in 0..n {
            let oj = self.original_index(j);
            for i in 0..n {
                out[(self.original_index(i), oj)] = t[(i, j)];
            }
        }
        out
    }

    pub fn storage_report(&self) -> StorageReport {
        let mut n_dense = 0;
        let mut n_lr = 0;
        self.root.for_each_leaf(&mut |b| match b.data {
            BlockData::Dense(_) => n_dense += 1,
            _ => n_lr += 1,
        });
        let n_stored = self.root.stored_entries();
        let n = self.dim();
        let max_rank_after = self.root.max_rank();
        let nc = self.n_points() as f64;
        let levels = (nc.log2() - (self.n_leaf as f64).log2() + 1.0).max(1.0);
        let width = (max_rank_after.max(self.d * self.n_leaf)) as f64;
        StorageReport {
            n_stored,
            n_dense_equiv: n * n,
            tau: n_stored as f64 / (n as f64 * n as f64),
            max_rank_before: self.max_rank_before,
            max_rank_after,
            n_dense_leaves: n_dense,
            n_lowrank_leaves: n_lr,
            bound: 2.0 * self.c_sp as f64 * width * (self.d as f64 * nc) * levels,
            c_sp: self.c_sp,
            n_fallbacks: self.n_fallbacks,
            n_unconverged: self.n_unconverged,
        }
    }
}
