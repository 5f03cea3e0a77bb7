//! Direct and iterative solvers and the a posteriori residual estimator.

use faer::{c64, Mat};
use rayon::prelude::*;

use crate::error::{HmatError, Result};
use crate::geometry::PointCloud;
use crate::hmatrix::{hlu, BlockData, HMatrix, LuFactors};
use crate::kernels::{Kernel, KernelBlock, SelfBlockRule};
use crate::linalg;
use crate::lowrank::BlockGenerator;

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn axpy(alpha: c64, x: &[c64], y: &mut [c64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Factorizes once and solves; the factors can be reused for further right-hand sides.
pub fn solve_direct(h: &HMatrix, b: &[c64], eps_lu: f64) -> Result<(Vec<c64>, LuFactors)> {
    if b.len() != h.dim() {
        return Err(HmatError::DimensionMismatch { expected: h.dim(), got: b.len() });
    }
    let f = hlu(h, eps_lu)?;
    let x = f.solve(b)?;
    Ok((x, f))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    pub tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig { tol: 1e-8, restart: 50, max_iters: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: Vec<c64>,
    pub iterations: usize,
    /// Relative residual after each iteration; entry 0 is the initial residual.
    pub history: Vec<f64>,
    /// Iteration indices (into `history`) at which a restart cycle began.
    pub restarts: Vec<usize>,
    pub converged: bool,
}

/// Restarted GMRES with modified Gram-Schmidt and Givens rotations.
pub fn gmres(apply: impl Fn(&[c64]) -> Result<Vec<c64>>, b: &[c64], cfg: &GmresConfig) -> Result<GmresResult> {
    if !(cfg.tol > 0.0) || cfg.restart == 0 {
        return Err(HmatError::InvalidArgument("GMRES needs tol > 0 and restart >= 1".into()));
    }
    let n = b.len();
    let zero = c64::new(0.0, 0.0);
    let nb = norm(b);
    let mut x = vec![zero; n];
    if nb == 0.0 {
        return Ok(GmresResult { x, iterations: 0, history: vec![0.0], restarts: vec![0], converged: true });
    }
    let m = cfg.restart;
    let mut history = Vec::new();
    let mut restarts = Vec::new();
    let mut iters = 0;
    loop {
        let ax = apply(&x)?;
        let r: Vec<c64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        restarts.push(history.len());
        history.push(beta / nb);
        if beta / nb <= cfg.tol {
            return Ok(GmresResult { x, iterations: iters, history, restarts, converged: true });
        }
        if iters >= cfg.max_iters {
            return Ok(GmresResult { x, iterations: iters, history, restarts, converged: false });
        }
        let mut basis: Vec<Vec<c64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut hess = vec![vec![zero; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0f64; m], vec![zero; m]);
        let mut g = vec![zero; m + 1];
        g[0] = c64::new(beta, 0.0);
        let mut k = 0;
        for j in 0..m {
            let mut w = apply(&basis[j])?;
            iters += 1;
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                hess[i][j] = hij;
                axpy(-hij, v, &mut w);
            }
            let hn = norm(&w);
            hess[j + 1][j] = c64::new(hn, 0.0);
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i].conj() * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let a = hess[j][j];
            let den = (a.norm_sqr() + hn * hn).sqrt();
            if a.norm() == 0.0 {
                cs[j] = 0.0;
                sn[j] = c64::new(1.0, 0.0);
            } else {
                cs[j] = a.norm() / den;
                sn[j] = a / a.norm() * (hn / den);
            }
            hess[j][j] = cs[j] * a + sn[j] * hn;
            hess[j + 1][j] = zero;
            g[j + 1] = -sn[j].conj() * g[j];
            g[j] = cs[j] * g[j];
            k = j + 1;
            let rel = g[j + 1].norm() / nb;
            history.push(rel);
            let breakdown = hn <= 1e-14 * den;
            if !breakdown {
                basis.push(w.iter().map(|z| z / hn).collect());
            }
            if rel <= cfg.tol || iters >= cfg.max_iters || breakdown {
                break;
            }
        }
        let mut y = vec![zero; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for l in i + 1..k {
                s -= hess[i][l] * y[l];
            }
            y[i] = s / hess[i][i];
        }
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &basis[i], &mut x);
        }
    }
}

pub fn solve_gmres(h: &HMatrix, b: &[c64], cfg: &GmresConfig) -> Result<GmresResult> {
    if b.len() != h.dim() {
        return Err(HmatError::DimensionMismatch { expected: h.dim(), got: b.len() });
    }
    gmres(|v| h.matvec(v), b, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorOptions {
    /// Computes `||b - A x0|| / ||b||` with the exact kernel matrix, row by row.
    pub dense_oracle: bool,
    /// Also computes `||A_H - A||_2` by a full SVD (small problems only).
    pub two_norm: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorReport {
    pub delta: f64,
    pub delta_h_frob: f64,
    pub norm_a_frob: f64,
    pub norm_b: f64,
    pub norm_x0: f64,
    /// `(delta + delta_h_frob ||x0||) / ||b||`
    pub bound: f64,
    pub true_residual: Option<f64>,
    pub delta_h_two: Option<f64>,
    pub bound_two: Option<f64>,
}

/// Exact kernel matrix for the H-matrix's point order (tree order).
fn tree_generator<'a>(
    h: &'a HMatrix,
    kernel: &'a Kernel,
    cloud: &'a PointCloud,
    self_rule: SelfBlockRule,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> Result<KernelBlock<'a>> {
    let d = h.d;
    KernelBlock::new(
        kernel,
        cloud,
        cloud,
        &h.perm[rows.start / d..rows.end / d],
        &h.perm[cols.start / d..cols.end / d],
        self_rule,
    )
}

/// `(||A_H - A||_F^2, ||A||_F^2)` by regenerating every admissible block.
pub fn compression_error(
    h: &HMatrix,
    kernel: &Kernel,
    cloud: &PointCloud,
    self_rule: SelfBlockRule,
) -> Result<(f64, f64)> {
    if kernel.d() != h.d || cloud.len() != h.n_points() {
        return Err(HmatError::DimensionMismatch { expected: h.dim(), got: kernel.d() * cloud.len() });
    }
    let leaves = h.root.leaves();
    leaves
        .par_iter()
        .map(|b| -> Result<(f64, f64)> {
            match &b.data {
                BlockData::Dense(m) => Ok((0.0, linalg::frob(m.as_ref()).powi(2))),
                BlockData::LowRank(f) => {
                    let gen = tree_generator(h, kernel, cloud, self_rule, b.rows.clone(), b.cols.clone())?;
                    let mut a = gen.to_dense();
                    let na = linalg::frob(a.as_ref()).powi(2);
                    if f.rank() > 0 {
                        linalg::gemm_acc(a.as_mut(), -linalg::ONE, f.u.as_ref(), f.v.adjoint().to_owned().as_ref());
                    }
                    Ok((linalg::frob(a.as_ref()).powi(2), na))
                }
                BlockData::Hier { .. } => unreachable!(),
            }
        })
        .try_reduce(|| (0.0, 0.0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
}

/// `A x` with the exact kernel matrix in the original ordering, one point row at a time.
pub fn dense_apply(kernel: &Kernel, cloud: &PointCloud, self_rule: SelfBlockRule, x: &[c64]) -> Result<Vec<c64>> {
    let d = kernel.d();
    if x.len() != d * cloud.len() {
        return Err(HmatError::DimensionMismatch { expected: d * cloud.len(), got: x.len() });
    }
    let ids: Vec<usize> = (0..cloud.len()).collect();
    let rows: Vec<Vec<c64>> = (0..cloud.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<c64>> {
            let gen = KernelBlock::new(kernel, cloud, cloud, &ids[i..i + 1], &ids, self_rule)?;
            let mut buf = Mat::zeros(d, x.len());
            gen.point_rows(0, buf.as_mut());
            if buf.col_iter().any(|c| c.iter().any(|z| z.re.is_nan())) {
                return Err(HmatError::CoincidentPoints(i, i));
            }
            Ok((0..d).map(|a| (0..x.len()).map(|j| buf[(a, j)] * x[j]).sum()).collect())
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

pub fn estimate(
    h: &HMatrix,
    kernel: &Kernel,
    cloud: &PointCloud,
    self_rule: SelfBlockRule,
    b: &[c64],
    x0: &[c64],
    opts: EstimatorOptions,
) -> Result<EstimatorReport> {
    let ax = h.matvec(x0)?;
    if b.len() != ax.len() {
        return Err(HmatError::DimensionMismatch { expected: ax.len(), got: b.len() });
    }
    let r: Vec<c64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let delta = norm(&r);
    let (e2, a2) = compression_error(h, kernel, cloud, self_rule)?;
    let (norm_b, norm_x0) = (norm(b), norm(x0));
    let delta_h_frob = e2.sqrt();
    let bound = (delta + delta_h_frob * norm_x0) / norm_b;
    let true_residual = if opts.dense_oracle {
        let ax = dense_apply(kernel, cloud, self_rule, x0)?;
        let r: Vec<c64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        Some(norm(&r) / norm_b)
    } else {
        None
    };
    let delta_h_two = if opts.two_norm {
        let mut diff = crate::kernels::assemble_dense(kernel, cloud, cloud, self_rule)?;
        diff -= h.to_dense();
        Some(linalg::singular_values(diff.as_ref()).first().copied().unwrap_or(0.0))
    } else {
        None
    };
    Ok(EstimatorReport {
        delta,
        delta_h_frob,
        norm_a_frob: a2.sqrt(),
        norm_b,
        norm_x0,
        bound,
        true_residual,
        delta_h_two,
        bound_two: delta_h_two.map(|t| (delta + t * norm_x0) / norm_b),
    })
}
