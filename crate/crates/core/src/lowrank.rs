//! Low-rank approximation of matrix blocks: SVD rank, cross approximation
//! (fully pivoted, partially pivoted, 3x3-vector), randomized SVD and
//! QR+SVD recompression.

use faer::{c64, Mat, MatMut, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HmatError, Result};
use crate::linalg::{self, frob, ZERO};

/// Block `u v^*` with `u: m x r`, `v: n x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactor {
    pub u: Mat<c64>,
    pub v: Mat<c64>,
}

impl LowRankFactor {
    pub fn new(u: Mat<c64>, v: Mat<c64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(HmatError::DimensionMismatch { expected: u.ncols(), got: v.ncols() });
        }
        Ok(LowRankFactor { u, v })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        LowRankFactor { u: Mat::zeros(m, 0), v: Mat::zeros(n, 0) }
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    pub fn to_dense(&self) -> Mat<c64> {
        linalg::mul_adj(self.u.as_ref(), self.v.as_ref())
    }

    /// `||u v^*||_F` from the two Gram matrices.
    pub fn frob_norm(&self) -> f64 {
        if self.rank() == 0 {
            return 0.0;
        }
        let gu = linalg::adj_mul(self.u.as_ref(), self.u.as_ref());
        let gv = linalg::adj_mul(self.v.as_ref(), self.v.as_ref());
        let mut s = 0.0;
        for i in 0..gu.nrows() {
            for j in 0..gu.ncols() {
                s += (gu[(i, j)] * gv[(j, i)]).re;
            }
        }
        s.max(0.0).sqrt()
    }
}

/// On-demand entry access to a block of scalar size `nrows x ncols`, made of
/// `d x d` point blocks.
pub trait BlockGenerator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn d(&self) -> usize;

    /// The `d` scalar rows of row point `i`, written into a `d x ncols` matrix.
    fn point_rows(&self, i: usize, out: MatMut<'_, c64>);

    /// The `d` scalar columns of column point `j`, written into an `nrows x d` matrix.
    fn point_cols(&self, j: usize, out: MatMut<'_, c64>);

    fn to_dense(&self) -> Mat<c64>;

    fn row(&self, i: usize) -> Vec<c64> {
        let d = self.d();
        let mut buf = Mat::zeros(d, self.ncols());
        self.point_rows(i / d, buf.as_mut());
        (0..self.ncols()).map(|j| buf[(i % d, j)]).collect()
    }

    fn col(&self, j: usize) -> Vec<c64> {
        let d = self.d();
        let mut buf = Mat::zeros(self.nrows(), d);
        self.point_cols(j / d, buf.as_mut());
        buf.col(j % d).iter().copied().collect()
    }
}

/// A dense matrix viewed as a generator with point blocks of size `d`.
pub struct DenseGenerator<'a> {
    pub a: MatRef<'a, c64>,
    pub d: usize,
}

impl BlockGenerator for DenseGenerator<'_> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn d(&self) -> usize {
        self.d
    }

    fn point_rows(&self, i: usize, mut out: MatMut<'_, c64>) {
        out.copy_from(self.a.subrows(self.d * i, self.d));
    }

    fn point_cols(&self, j: usize, mut out: MatMut<'_, c64>) {
        out.copy_from(self.a.subcols(self.d * j, self.d));
    }

    fn to_dense(&self) -> Mat<c64> {
        self.a.to_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcaConfig {
    pub eps: f64,
    /// Scalar rank cap; `None` means `min(m, n)`.
    pub max_rank: Option<usize>,
    pub sigma3_floor: f64,
}

impl Default for AcaConfig {
    fn default() -> Self {
        AcaConfig { eps: 1e-4, max_rank: None, sigma3_floor: 1e-12 }
    }
}

impl AcaConfig {
    pub fn with_eps(eps: f64) -> Self {
        AcaConfig { eps, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(HmatError::InvalidArgument(format!("eps_aca must lie in (0, 1), got {}", self.eps)));
        }
        if self.max_rank == Some(0) {
            return Err(HmatError::InvalidArgument("max_rank must be at least 1".into()));
        }
        Ok(())
    }

    fn cap(&self, m: usize, n: usize) -> usize {
        self.max_rank.unwrap_or(usize::MAX).min(m.min(n))
    }
}

#[derive(Debug, Clone)]
pub struct Approximation {
    pub factor: LowRankFactor,
    /// False when the rank cap was hit before the tolerance was met.
    pub converged: bool,
}

/// Smallest `r` with `sigma_{r+1} <= eps * sigma_1`.
pub fn numerical_rank(a: MatRef<'_, c64>, eps: f64) -> usize {
    let s = linalg::singular_values(a);
    match s.first() {
        Some(&s0) if s0 > 0.0 => s.iter().filter(|&&x| x > eps * s0).count(),
        _ => 0,
    }
}

/// Fully pivoted ACA on an explicitly stored residual.
pub fn aca_full(a: MatRef<'_, c64>, cfg: &AcaConfig) -> Approximation {
    let (m, n) = a.shape();
    let mut r = a.to_owned();
    let norm_a = frob(a);
    let cap = cfg.cap(m, n);
    let mut us: Vec<Vec<c64>> = Vec::new();
    let mut vs: Vec<Vec<c64>> = Vec::new();
    let mut converged = true;
    if norm_a > 0.0 {
        loop {
            if frob(r.as_ref()) <= cfg.eps * norm_a {
                break;
            }
            if us.len() >= cap {
                converged = false;
                break;
            }
            let (mut pi, mut pj, mut best) = (0, 0, -1.0);
            for j in 0..n {
                for i in 0..m {
                    let v = r[(i, j)].norm_sqr();
                    if v > best {
                        best = v;
                        pi = i;
                        pj = j;
                    }
                }
            }
            if best == 0.0 {
                break;
            }
            let gamma = r[(pi, pj)].inv();
            let u: Vec<c64> = (0..m).map(|i| r[(i, pj)]).collect();
            let v: Vec<c64> = (0..n).map(|j| (r[(pi, j)] * gamma).conj()).collect();
            for j in 0..n {
                let vj = v[j].conj();
                for i in 0..m {
                    r[(i, j)] -= u[i] * vj;
                }
            }
            us.push(u);
            vs.push(v);
        }
    }
    Approximation { factor: from_columns(m, n, &us, &vs), converged }
}

fn from_columns(m: usize, n: usize, us: &[Vec<c64>], vs: &[Vec<c64>]) -> LowRankFactor {
    let k = us.len();
    LowRankFactor { u: Mat::from_fn(m, k, |i, l| us[l][i]), v: Mat::from_fn(n, k, |j, l| vs[l][j]) }
}

fn argmax_abs(x: &[c64], skip: &[bool]) -> Option<usize> {
    let mut best = None;
    let mut bv = -1.0;
    for (i, z) in x.iter().enumerate() {
        if !skip[i] && z.norm_sqr() > bv {
            bv = z.norm_sqr();
            best = Some(i);
        }
    }
    best
}

// Relative threshold under which a residual strip counts as numerically zero.
const NEGLIGIBLE: f64 = 1e-14;

/// Partially pivoted ACA treating the generator as scalar (d is ignored).
///
/// Starts from row 0. The norm of the approximant is tracked through factor
/// inner products so that the stopping test never touches the full block.
pub fn aca_partial(gen: &dyn BlockGenerator, cfg: &AcaConfig) -> Result<Approximation> {
    let (m, n) = (gen.nrows(), gen.ncols());
    let cap = cfg.cap(m, n);
    let mut us: Vec<Vec<c64>> = Vec::new();
    let mut vs: Vec<Vec<c64>> = Vec::new();
    let mut used_rows = vec![false; m];
    let no_skip = vec![false; n];
    let mut norm2 = 0.0f64;
    let mut i = 0usize;
    let mut converged = false;
    if m == 0 || n == 0 {
        return Ok(Approximation { factor: LowRankFactor::zeros(m, n), converged: true });
    }
    while us.len() < cap {
        let k = us.len();
        used_rows[i] = true;
        let raw = gen.row(i);
        let scale = raw.iter().fold(0.0f64, |s, z| s.max(z.norm()));
        let mut row = raw;
        for (u, v) in us.iter().zip(&vs) {
            let ui = u[i];
            for j in 0..n {
                row[j] -= ui * v[j].conj();
            }
        }
        let j = argmax_abs(&row, &no_skip).unwrap();
        let pivot = row[j];
        if pivot.norm() <= NEGLIGIBLE * scale || pivot.norm() == 0.0 {
            if k >= 1 {
                converged = true;
                break;
            }
            if used_rows.iter().all(|&b| b) {
                converged = true;
                break;
            }
            return Err(HmatError::PivotExhaustion { step: k });
        }
        let gamma = pivot.inv();
        let mut col = gen.col(j);
        for (u, v) in us.iter().zip(&vs) {
            let vj = v[j].conj();
            for r in 0..m {
                col[r] -= u[r] * vj;
            }
        }
        let v_new: Vec<c64> = row.iter().map(|z| (z * gamma).conj()).collect();
        let nu2: f64 = col.iter().map(|z| z.norm_sqr()).sum();
        let nv2: f64 = v_new.iter().map(|z| z.norm_sqr()).sum();
        let mut cross = 0.0;
        for (u, v) in us.iter().zip(&vs) {
            let uu: c64 = u.iter().zip(&col).map(|(a, b)| a.conj() * b).sum();
            let vv: c64 = v_new.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
            cross += (uu * vv).re;
        }
        norm2 = (norm2 + 2.0 * cross + nu2 * nv2).max(0.0);
        let next = argmax_abs(&col, &used_rows);
        us.push(col);
        vs.push(v_new);
        if (nu2 * nv2).sqrt() <= cfg.eps * norm2.sqrt() {
            converged = true;
            break;
        }
        match next {
            Some(r) => i = r,
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(Approximation { factor: from_columns(m, n, &us, &vs), converged })
}

/// Largest and smallest singular values of a 3x3 complex matrix (row-major).
pub fn sv3(a: &[c64; 9]) -> (f64, f64) {
    let at = |i: usize, j: usize| a[3 * i + j];
    let c2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    if c2 == 0.0 {
        return (0.0, 0.0);
    }
    let mut c1 = 0.0;
    for (r0, r1) in [(0, 1), (0, 2), (1, 2)] {
        for (k0, k1) in [(0, 1), (0, 2), (1, 2)] {
            c1 += (at(r0, k0) * at(r1, k1) - at(r0, k1) * at(r1, k0)).norm_sqr();
        }
    }
    let det = at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1))
        - at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0))
        + at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
    let c0 = det.norm_sqr();
    // eigenvalues of A^*A are the roots of l^3 - c2 l^2 + c1 l - c0
    let s = c2 / 3.0;
    let p = c1 - 3.0 * s * s;
    let q = -2.0 * s * s * s + c1 * s - c0;
    let l1 = if p < 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        s + m * (arg.acos() / 3.0).cos()
    } else {
        s
    };
    let l1 = l1.clamp(s, c2);
    // remaining pair: l2 + l3 = c2 - l1, l2 * l3 = c0 / l1
    let sum = (c2 - l1).max(0.0);
    let prod = c0 / l1;
    let disc = (sum * sum - 4.0 * prod).max(0.0).sqrt();
    let l2 = 0.5 * (sum + disc);
    let l3 = if l2 > 0.0 { prod / l2 } else { 0.0 };
    (l1.sqrt(), l3.max(0.0).sqrt())
}

fn inv3(a: &[c64; 9]) -> [c64; 9] {
    let at = |i: usize, j: usize| a[3 * i + j];
    let cof = |i: usize, j: usize| {
        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
        let (k0, k1) = ((j + 1) % 3, (j + 2) % 3);
        at(r0, k0) * at(r1, k1) - at(r0, k1) * at(r1, k0)
    };
    let det = at(0, 0) * cof(0, 0) + at(0, 1) * cof(0, 1) + at(0, 2) * cof(0, 2);
    let inv_det = det.inv();
    let mut out = [ZERO; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = cof(j, i) * inv_det;
        }
    }
    out
}

/// Cross approximation with rank-3 steps over 3x3 point blocks, pivoting on
/// the subblock with the largest smallest singular value.
pub fn aca_vector(gen: &dyn BlockGenerator, cfg: &AcaConfig) -> Result<Approximation> {
    if gen.d() != 3 {
        return Err(HmatError::InvalidArgument("aca_vector needs a generator with d = 3".into()));
    }
    let (m, n) = (gen.nrows(), gen.ncols());
    let (mp, np) = (m / 3, n / 3);
    let cap = cfg.cap(m, n);
    let mut u = Mat::<c64>::zeros(m, 0);
    let mut v = Mat::<c64>::zeros(n, 0);
    let mut used_rows = vec![false; mp];
    let mut used_cols = vec![false; np];
    let mut norm2 = 0.0f64;
    let mut sigma1_max = 0.0f64;
    let mut i = 0usize;
    let mut converged = false;
    if mp == 0 || np == 0 {
        return Ok(Approximation { factor: LowRankFactor::zeros(m, n), converged: true });
    }
    let mut strip = Mat::<c64>::zeros(3, n);
    let mut cstrip = Mat::<c64>::zeros(m, 3);
    while u.ncols() + 3 <= cap {
        let k = u.ncols();
        used_rows[i] = true;
        gen.point_rows(i, strip.as_mut());
        let raw_norm = frob(strip.as_ref());
        if k > 0 {
            linalg::gemm_acc(
                strip.as_mut(),
                -linalg::ONE,
                u.as_ref().subrows(3 * i, 3),
                v.as_ref().adjoint().to_owned().as_ref(),
            );
        }
        let res_norm = frob(strip.as_ref());
        if res_norm <= NEGLIGIBLE * raw_norm || res_norm == 0.0 {
            if k >= 1 || used_rows.iter().all(|&b| b) {
                converged = true;
                break;
            }
            return Err(HmatError::PivotExhaustion { step: 0 });
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..np {
            if used_cols[j] {
                continue;
            }
            let blk = block3(strip.as_ref(), 0, 3 * j);
            let (s1, s3) = sv3(&blk);
            sigma1_max = sigma1_max.max(s1);
            if best.map_or(true, |(_, b)| s3 > b) {
                best = Some((j, s3));
            }
        }
        let Some((j, s3)) = best else {
            converged = true;
            break;
        };
        if s3 <= cfg.sigma3_floor * sigma1_max {
            return Err(HmatError::FallbackRequired);
        }
        used_cols[j] = true;
        gen.point_cols(j, cstrip.as_mut());
        if k > 0 {
            let vj = v.as_ref().subrows(3 * j, 3).adjoint().to_owned();
            linalg::gemm_acc(cstrip.as_mut(), -linalg::ONE, u.as_ref(), vj.as_ref());
        }
        let pinv = inv3(&block3(cstrip.as_ref(), 3 * i, 0));
        let pinv = Mat::from_fn(3, 3, |a, b| pinv[3 * a + b]);
        let u_new = linalg::mul(cstrip.as_ref(), pinv.as_ref());
        let v_new = linalg::adjoint(strip.as_ref());
        let gu = linalg::adj_mul(u_new.as_ref(), u_new.as_ref());
        let gv = linalg::adj_mul(v_new.as_ref(), v_new.as_ref());
        let mut self_term = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                self_term += (gu[(a, b)] * gv[(b, a)]).re;
            }
        }
        let mut cross = 0.0;
        if k > 0 {
            let x = linalg::adj_mul(u.as_ref(), u_new.as_ref());
            let y = linalg::adj_mul(v_new.as_ref(), v.as_ref());
            for a in 0..k {
                for b in 0..3 {
                    cross += (x[(a, b)] * y[(b, a)]).re;
                }
            }
        }
        norm2 = (norm2 + 2.0 * cross + self_term).max(0.0);
        let nu = frob(u_new.as_ref());
        let nv = frob(v_new.as_ref());
        u = linalg::hcat(u.as_ref(), u_new.as_ref());
        v = linalg::hcat(v.as_ref(), v_new.as_ref());
        if nu * nv <= cfg.eps * norm2.sqrt() {
            converged = true;
            break;
        }
        // next reference row: largest sigma_3 in the column strip
        let mut next: Option<(usize, f64, f64)> = None;
        for r in 0..mp {
            if used_rows[r] {
                continue;
            }
            let blk = block3(cstrip.as_ref(), 3 * r, 0);
            let (_, s3r) = sv3(&blk);
            let fr: f64 = blk.iter().map(|z| z.norm_sqr()).sum();
            if next.map_or(true, |(_, bs, bf)| s3r > bs || (s3r == bs && fr > bf)) {
                next = Some((r, s3r, fr));
            }
        }
        match next {
            Some((r, _, _)) => i = r,
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(Approximation { factor: LowRankFactor { u, v }, converged })
}

fn block3(a: MatRef<'_, c64>, r0: usize, c0: usize) -> [c64; 9] {
    let mut b = [ZERO; 9];
    for i in 0..3 {
        for j in 0..3 {
            b[3 * i + j] = a[(r0 + i, c0 + j)];
        }
    }
    b
}

fn gaussian(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Mat<c64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Mat::from_fn(m, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64::new(s * re, s * im)
    })
}

/// Randomized range finder with rank doubling until
/// `||A - Q Q^* A||_F <= target_eps ||A||_F`.
pub fn randomized_svd(
    a: MatRef<'_, c64>,
    target_eps: f64,
    oversample: usize,
    max_rank: Option<usize>,
    seed: u64,
) -> Approximation {
    let (m, n) = a.shape();
    let norm_a = frob(a);
    if norm_a == 0.0 || m == 0 || n == 0 {
        return Approximation { factor: LowRankFactor::zeros(m, n), converged: true };
    }
    let full = m.min(n);
    let cap = max_rank.unwrap_or(full).min(full);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = 8.min(cap);
    loop {
        let l = (k + oversample).min(full);
        let omega = gaussian(&mut rng, n, l);
        let y = linalg::mul(a, omega.as_ref());
        let (q, _) = linalg::qr_thin(y.as_ref());
        let b = linalg::adj_mul(q.as_ref(), a);
        let mut r = a.to_owned();
        linalg::gemm_acc(r.as_mut(), -linalg::ONE, q.as_ref(), b.as_ref());
        let ok = frob(r.as_ref()) <= target_eps * norm_a;
        if ok || l >= full || k >= cap {
            let factor = LowRankFactor { u: q, v: linalg::adjoint(b.as_ref()) };
            let factor = if factor.rank() > cap { recompress_to_rank(&factor, cap) } else { factor };
            return Approximation { factor, converged: ok || l >= full };
        }
        k = (2 * k).min(cap);
    }
}

struct Core {
    qu: Mat<c64>,
    qv: Mat<c64>,
    p: Mat<c64>,
    s: Vec<f64>,
    l: Mat<c64>,
}

fn core_svd(f: &LowRankFactor) -> Core {
    let (qu, ru) = linalg::qr_thin(f.u.as_ref());
    let (qv, rv) = linalg::qr_thin(f.v.as_ref());
    let c = linalg::mul_adj(ru.as_ref(), rv.as_ref());
    let (p, s, l) = linalg::svd_thin(c.as_ref());
    Core { qu, qv, p, s, l }
}

fn assemble_truncated(c: &Core, r: usize) -> LowRankFactor {
    let sq: Vec<f64> = c.s[..r].iter().map(|x| x.sqrt()).collect();
    let ps = Mat::from_fn(c.p.nrows(), r, |i, j| c.p[(i, j)] * sq[j]);
    let ls = Mat::from_fn(c.l.nrows(), r, |i, j| c.l[(i, j)] * sq[j]);
    LowRankFactor { u: linalg::mul(c.qu.as_ref(), ps.as_ref()), v: linalg::mul(c.qv.as_ref(), ls.as_ref()) }
}

/// QR of both factors, SVD of the small core, then truncation so that
/// `||u v^* - u' v'^*||_F <= eps ||u v^*||_F`.
pub fn recompress(f: &LowRankFactor, eps: f64) -> LowRankFactor {
    if f.rank() == 0 {
        return f.clone();
    }
    let c = core_svd(f);
    let total: f64 = c.s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return LowRankFactor::zeros(f.nrows(), f.ncols());
    }
    let budget = eps * eps * total;
    let mut tail = 0.0;
    let mut r = c.s.len();
    while r > 0 && tail + c.s[r - 1] * c.s[r - 1] <= budget {
        tail += c.s[r - 1] * c.s[r - 1];
        r -= 1;
    }
    assemble_truncated(&c, r)
}

/// Best rank-`r` truncation of a factor.
pub fn recompress_to_rank(f: &LowRankFactor, r: usize) -> LowRankFactor {
    if f.rank() <= r {
        return f.clone();
    }
    let c = core_svd(f);
    assemble_truncated(&c, r.min(c.s.len()))
}
