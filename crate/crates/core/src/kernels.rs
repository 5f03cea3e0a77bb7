//! Scalar and elastodynamic Green's kernels.
//!
//! Vector kernels use interleaved indexing: scalar index `3 * point + component`.

use std::f64::consts::PI;

use faer::{c64, Mat, MatMut};

use crate::error::{HmatError, Result};
use crate::geometry::{norm, sub, Point, PointCloud};
use crate::lowrank::BlockGenerator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub rho: f64,
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavenumbers {
    pub kp: f64,
    pub ks: f64,
}

impl Material {
    pub fn new(rho: f64, mu: f64, nu: f64, omega: f64) -> Result<Self> {
        let m = Material { rho, mu, nu, omega };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.mu > 0.0
            && self.omega > 0.0
            && self.nu > -1.0
            && self.nu < 0.5
            && self.rho.is_finite()
            && self.mu.is_finite()
            && self.omega.is_finite();
        if ok {
            Ok(())
        } else {
            Err(HmatError::InvalidArgument(format!("invalid material {self:?}")))
        }
    }

    pub fn lambda(&self) -> f64 {
        2.0 * self.mu * self.nu / (1.0 - 2.0 * self.nu)
    }

    pub fn wavenumbers(&self) -> Wavenumbers {
        let rw2 = self.rho * self.omega * self.omega;
        Wavenumbers { kp: (rw2 / (self.lambda() + 2.0 * self.mu)).sqrt(), ks: (rw2 / self.mu).sqrt() }
    }

    /// S wavelength `2 pi / ks`.
    pub fn s_wavelength(&self) -> f64 {
        2.0 * PI / self.wavenumbers().ks
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Laplace,
    Helmholtz { kappa: f64 },
    ElastoU(Material),
    ElastoT(Material),
}

/// Treatment of coincident row and column points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SelfBlockRule {
    #[default]
    Reject,
    /// `zeta * I` on the d x d diagonal block.
    Shift(f64),
}

pub type Mat3 = [[c64; 3]; 3];

fn helmholtz(k: f64, r: f64) -> c64 {
    c64::cis(k * r) / (4.0 * PI * r)
}

// Radial coefficients of the Hessian of e^{ikr}/(4 pi r):
// d_a d_b G = G (f r_a r_b + g delta_ab).
fn fk(k: f64, r: f64) -> c64 {
    c64::new(3.0 / (r * r) - k * k, -3.0 * k / r)
}

fn gk(k: f64, r: f64) -> c64 {
    c64::new(-1.0 / (r * r), k / r)
}

fn dfk(k: f64, r: f64) -> c64 {
    c64::new(-6.0 / (r * r * r), 3.0 * k / (r * r))
}

fn dgk(k: f64, r: f64) -> c64 {
    c64::new(2.0 / (r * r * r), -k / (r * r))
}

// G'/G
fn dlog(k: f64, r: f64) -> c64 {
    c64::new(-1.0 / r, k)
}

/// `U = A(r) I + B(r) rhat rhat^T` and the radial derivatives of A and B.
struct Radial {
    a: c64,
    b: c64,
    da: c64,
    db: c64,
}

fn radial_u(m: &Material, r: f64, with_derivatives: bool) -> Radial {
    let Wavenumbers { kp, ks } = m.wavenumbers();
    let rw2 = m.rho * m.omega * m.omega;
    let (gs, gp) = (helmholtz(ks, r), helmholtz(kp, r));
    let (fs, fp, hs, hp) = (fk(ks, r), fk(kp, r), gk(ks, r), gk(kp, r));
    let a = gs / m.mu + (gs * hs - gp * hp) / rw2;
    let b = (gs * fs - gp * fp) / rw2;
    if !with_derivatives {
        return Radial { a, b, da: c64::new(0.0, 0.0), db: c64::new(0.0, 0.0) };
    }
    let (ls, lp) = (dlog(ks, r), dlog(kp, r));
    let d_gg = |g: c64, l: c64, h: c64, dh: c64| g * (l * h + dh);
    let da = gs * ls / m.mu + (d_gg(gs, ls, hs, dgk(ks, r)) - d_gg(gp, lp, hp, dgk(kp, r))) / rw2;
    let db = (d_gg(gs, ls, fs, dfk(ks, r)) - d_gg(gp, lp, fp, dfk(kp, r))) / rw2;
    Radial { a, b, da, db }
}

fn separation(x: Point, y: Point, i: usize, j: usize) -> Result<(f64, Point)> {
    let d = sub(x, y);
    let r = norm(d);
    if r == 0.0 {
        return Err(HmatError::CoincidentPoints(i, j));
    }
    Ok((r, [d[0] / r, d[1] / r, d[2] / r]))
}

pub fn eval_scalar(kernel: &Kernel, x: Point, y: Point) -> Result<c64> {
    let (r, _) = separation(x, y, 0, 0)?;
    match kernel {
        Kernel::Laplace => Ok(c64::new(1.0 / (4.0 * PI * r), 0.0)),
        Kernel::Helmholtz { kappa } => Ok(helmholtz(*kappa, r)),
        _ => Err(HmatError::InvalidArgument("eval_scalar needs a scalar kernel".into())),
    }
}

pub fn eval_elasto_u(m: &Material, x: Point, y: Point) -> Result<Mat3> {
    let (r, rh) = separation(x, y, 0, 0)?;
    Ok(elasto_u(m, r, rh))
}

pub fn eval_elasto_t(m: &Material, x: Point, y: Point, n_y: Point) -> Result<Mat3> {
    let (r, rh) = separation(x, y, 0, 0)?;
    Ok(elasto_t(m, r, rh, n_y))
}

fn elasto_u(m: &Material, r: f64, rh: Point) -> Mat3 {
    let Radial { a, b, .. } = radial_u(m, r, false);
    let mut u = [[c64::new(0.0, 0.0); 3]; 3];
    for al in 0..3 {
        for be in 0..3 {
            u[al][be] = b * (rh[al] * rh[be]);
            if al == be {
                u[al][be] += a;
            }
        }
    }
    u
}

fn elasto_t(m: &Material, r: f64, rh: Point, n: Point) -> Mat3 {
    let Radial { b, da, db, .. } = radial_u(m, r, true);
    let (lambda, mu) = (m.lambda(), m.mu);
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    // dy[g][a][b] = d/dy_g U_ab
    let mut dy = [[[c64::new(0.0, 0.0); 3]; 3]; 3];
    for g in 0..3 {
        for al in 0..3 {
            for be in 0..3 {
                let t = da * (rh[g] * delta(al, be))
                    + db * (rh[g] * rh[al] * rh[be])
                    + b / r * (delta(al, g) * rh[be] + delta(be, g) * rh[al] - 2.0 * rh[al] * rh[be] * rh[g]);
                dy[g][al][be] = -t;
            }
        }
    }
    let mut t = [[c64::new(0.0, 0.0); 3]; 3];
    for be in 0..3 {
        let div = dy[0][0][be] + dy[1][1][be] + dy[2][2][be];
        for al in 0..3 {
            let mut s = div * (lambda * n[al]);
            for g in 0..3 {
                s += (dy[g][al][be] + dy[al][g][be]) * (mu * n[g]);
            }
            t[al][be] = s;
        }
    }
    t
}

impl Kernel {
    pub fn d(&self) -> usize {
        match self {
            Kernel::Laplace | Kernel::Helmholtz { .. } => 1,
            Kernel::ElastoU(_) | Kernel::ElastoT(_) => 3,
        }
    }

    pub fn needs_normals(&self) -> bool {
        matches!(self, Kernel::ElastoT(_))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::Laplace => Ok(()),
            Kernel::Helmholtz { kappa } if kappa.is_finite() && *kappa >= 0.0 => Ok(()),
            Kernel::Helmholtz { kappa } => {
                Err(HmatError::InvalidArgument(format!("invalid Helmholtz wavenumber {kappa}")))
            }
            Kernel::ElastoU(m) | Kernel::ElastoT(m) => m.validate(),
        }
    }

    /// Writes the d x d kernel block at (x, y) row-major into `out`. `x != y` is assumed.
    #[inline]
    pub fn eval_into(&self, x: Point, y: Point, n_y: Option<Point>, out: &mut [c64]) {
        let d = sub(x, y);
        let r = norm(d);
        match self {
            Kernel::Laplace => out[0] = c64::new(1.0 / (4.0 * PI * r), 0.0),
            Kernel::Helmholtz { kappa } => out[0] = helmholtz(*kappa, r),
            Kernel::ElastoU(m) | Kernel::ElastoT(m) => {
                let rh = [d[0] / r, d[1] / r, d[2] / r];
                let k = match self {
                    Kernel::ElastoU(_) => elasto_u(m, r, rh),
                    _ => elasto_t(m, r, rh, n_y.expect("normals checked at construction")),
                };
                for al in 0..3 {
                    out[3 * al..3 * al + 3].copy_from_slice(&k[al]);
                }
            }
        }
    }
}

/// On-demand access to the kernel block `rows x cols` of two clouds.
///
/// `row_ids` / `col_ids` are original point indices. When both clouds are the
/// same object, equal ids are treated as coincident.
#[derive(Clone, Copy)]
pub struct KernelBlock<'a> {
    pub kernel: &'a Kernel,
    pub row_cloud: &'a PointCloud,
    pub col_cloud: &'a PointCloud,
    pub row_ids: &'a [usize],
    pub col_ids: &'a [usize],
    pub self_rule: SelfBlockRule,
}

impl<'a> KernelBlock<'a> {
    pub fn new(
        kernel: &'a Kernel,
        row_cloud: &'a PointCloud,
        col_cloud: &'a PointCloud,
        row_ids: &'a [usize],
        col_ids: &'a [usize],
        self_rule: SelfBlockRule,
    ) -> Result<Self> {
        if kernel.needs_normals() && col_cloud.normals.is_none() {
            return Err(HmatError::MissingNormals);
        }
        Ok(KernelBlock { kernel, row_cloud, col_cloud, row_ids, col_ids, self_rule })
    }

    /// Writes the d x d block for local point pair (i, j), row-major.
    #[inline]
    pub fn entry(&self, i: usize, j: usize, out: &mut [c64]) -> bool {
        let (gi, gj) = (self.row_ids[i], self.col_ids[j]);
        let x = self.row_cloud.points[gi];
        let y = self.col_cloud.points[gj];
        if x == y {
            let dd = self.kernel.d();
            match self.self_rule {
                SelfBlockRule::Shift(z) => {
                    for a in 0..dd {
                        for b in 0..dd {
                            out[a * dd + b] = c64::new(if a == b { z } else { 0.0 }, 0.0);
                        }
                    }
                    return true;
                }
                SelfBlockRule::Reject => {
                    out[..dd * dd].fill(c64::new(f64::NAN, f64::NAN));
                    return false;
                }
            }
        }
        self.kernel.eval_into(x, y, self.col_cloud.normal(gj), out);
        true
    }

    /// Dense block; coincident points without a self rule are an error.
    pub fn try_to_dense(&self) -> Result<Mat<c64>> {
        let d = self.kernel.d();
        let mut m = Mat::zeros(d * self.row_ids.len(), d * self.col_ids.len());
        let mut buf = [c64::new(0.0, 0.0); 9];
        for j in 0..self.col_ids.len() {
            for i in 0..self.row_ids.len() {
                if !self.entry(i, j, &mut buf) {
                    return Err(HmatError::CoincidentPoints(self.row_ids[i], self.col_ids[j]));
                }
                for a in 0..d {
                    for b in 0..d {
                        m[(d * i + a, d * j + b)] = buf[a * d + b];
                    }
                }
            }
        }
        Ok(m)
    }
}

impl BlockGenerator for KernelBlock<'_> {
    fn nrows(&self) -> usize {
        self.kernel.d() * self.row_ids.len()
    }

    fn ncols(&self) -> usize {
        self.kernel.d() * self.col_ids.len()
    }

    fn d(&self) -> usize {
        self.kernel.d()
    }

    fn point_rows(&self, i: usize, mut out: MatMut<'_, c64>) {
        let d = self.kernel.d();
        let mut buf = [c64::new(0.0, 0.0); 9];
        for j in 0..self.col_ids.len() {
            self.entry(i, j, &mut buf);
            for a in 0..d {
                for b in 0..d {
                    out[(a, d * j + b)] = buf[a * d + b];
                }
            }
        }
    }

    fn point_cols(&self, j: usize, mut out: MatMut<'_, c64>) {
        let d = self.kernel.d();
        let mut buf = [c64::new(0.0, 0.0); 9];
        for i in 0..self.row_ids.len() {
            self.entry(i, j, &mut buf);
            for a in 0..d {
                for b in 0..d {
                    out[(d * i + a, b)] = buf[a * d + b];
                }
            }
        }
    }

    fn to_dense(&self) -> Mat<c64> {
        let d = self.kernel.d();
        let mut m = Mat::zeros(self.nrows(), self.ncols());
        let mut buf = [c64::new(0.0, 0.0); 9];
        for j in 0..self.col_ids.len() {
            for i in 0..self.row_ids.len() {
                self.entry(i, j, &mut buf);
                for a in 0..d {
                    for b in 0..d {
                        m[(d * i + a, d * j + b)] = buf[a * d + b];
                    }
                }
            }
        }
        m
    }
}

/// Full kernel matrix `d N_r x d N_c` in original point order.
pub fn assemble_dense(
    kernel: &Kernel,
    rows: &PointCloud,
    cols: &PointCloud,
    self_rule: SelfBlockRule,
) -> Result<Mat<c64>> {
    kernel.validate()?;
    let ri: Vec<usize> = (0..rows.len()).collect();
    let ci: Vec<usize> = (0..cols.len()).collect();
    KernelBlock::new(kernel, rows, cols, &ri, &ci, self_rule)?.try_to_dense()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat() -> Material {
        Material::new(1.0, 1.0, 1.0 / 3.0, 3.0).unwrap()
    }

    #[test]
    fn scalar_values() {
        let l = eval_scalar(&Kernel::Laplace, [0.0; 3], [2.0, 0.0, 0.0]).unwrap();
        assert!((l.re - 1.0 / (8.0 * PI)).abs() < 1e-16 && l.im == 0.0);
        let h0 = eval_scalar(&Kernel::Helmholtz { kappa: 0.0 }, [0.0; 3], [1.0, 0.0, 0.0]).unwrap();
        assert!((h0.re - 0.0795775).abs() < 1e-7);
        let hp = eval_scalar(&Kernel::Helmholtz { kappa: PI }, [0.0; 3], [0.0, 1.0, 0.0]).unwrap();
        assert!((hp - c64::new(-1.0 / (4.0 * PI), 0.0)).norm() < 1e-15);
        assert!(matches!(eval_scalar(&Kernel::Laplace, [1.0; 3], [1.0; 3]), Err(HmatError::CoincidentPoints(..))));
    }

    #[test]
    fn wavenumber_relations() {
        let m = mat();
        let w = m.wavenumbers();
        assert!((w.kp - w.ks / 2.0).abs() < 1e-14 * w.ks);
        let rw2 = m.rho * m.omega * m.omega;
        assert!((w.ks * w.ks - rw2 / m.mu).abs() < 1e-12 * w.ks * w.ks);
        assert!((w.kp * w.kp - rw2 / (m.lambda() + 2.0 * m.mu)).abs() < 1e-12 * w.kp * w.kp);
        assert!(Material::new(1.0, 1.0, 0.5, 1.0).is_err());
        assert!(Material::new(1.0, 0.0, 0.25, 1.0).is_err());
    }

    #[test]
    fn u_is_symmetric_and_reciprocal() {
        let m = mat();
        let (x, y) = ([0.1, -0.3, 0.7], [0.9, 0.2, -0.4]);
        let u = eval_elasto_u(&m, x, y).unwrap();
        let v = eval_elasto_u(&m, y, x).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((u[a][b] - u[b][a]).norm() < 1e-15);
                assert!((u[a][b] - v[b][a]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn traction_flips_with_normal() {
        let m = mat();
        let (x, y) = ([0.1, -0.3, 0.7], [0.9, 0.2, -0.4]);
        let n = [0.0, 0.6, 0.8];
        let t = eval_elasto_t(&m, x, y, n).unwrap();
        let s = eval_elasto_t(&m, x, y, [0.0, -0.6, -0.8]).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                assert!((t[a][b] + s[a][b]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn two_point_dense_with_shift() {
        let cloud = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], None).unwrap();
        let a = assemble_dense(&Kernel::Laplace, &cloud, &cloud, SelfBlockRule::Shift(2.0)).unwrap();
        assert_eq!(a[(0, 0)], c64::new(2.0, 0.0));
        assert!((a[(0, 1)].re - 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert!(assemble_dense(&Kernel::Laplace, &cloud, &cloud, SelfBlockRule::Reject).is_err());
    }

    #[test]
    fn traction_needs_normals() {
        let cloud = PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], None).unwrap();
        let k = Kernel::ElastoT(mat());
        assert!(matches!(
            assemble_dense(&k, &cloud, &cloud, SelfBlockRule::Shift(1.0)),
            Err(HmatError::MissingNormals)
        ));
    }
}
