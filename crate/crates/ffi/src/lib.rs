//! C ABI over `hmat`.
//!
//! Matrices and factors are opaque handles owned by the caller and released
//! with the matching `*_free`. Every function returns an [`HmatStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`hmat_last_error`]. Complex vectors are interleaved `re, im` doubles in the
//! original point order, `d` scalar unknowns per point.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use hmat::hmatrix::{hlu, snapshot};
use hmat::lowrank::AcaConfig;
use hmat::solve::{solve_gmres, GmresConfig};
use hmat::{c64, AssemblyConfig, HMatrix, HmatError, Kernel, LuFactors, Material, PointCloud, SelfBlockRule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmatStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Format = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmatKernel {
    Laplace = 0,
    Helmholtz = 1,
    ElastoU = 2,
    ElastoT = 3,
}

/// Assembly parameters. Start from `hmat_params_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HmatParams {
    pub kernel: HmatKernel,
    /// Circular frequency; the wavenumber for Helmholtz.
    pub omega: f64,
    pub rho: f64,
    pub mu: f64,
    pub nu: f64,
    pub eps_aca: f64,
    pub eta: f64,
    pub n_leaf: usize,
    /// Diagonal value for coincident points; negative means the point count.
    pub shift: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HmatStorage {
    pub n_stored: usize,
    pub n_dense_equiv: usize,
    pub tau: f64,
    pub max_rank_before: usize,
    pub max_rank_after: usize,
    pub bound: f64,
    pub c_sp: usize,
    pub n_fallbacks: usize,
}

pub struct HmatMatrix {
    inner: HMatrix,
}

pub struct HmatFactors {
    inner: LuFactors,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &HmatError) -> HmatStatus {
    match e {
        _ if e.is_numerical() => HmatStatus::Numerical,
        HmatError::Io(_) => HmatStatus::Io,
        HmatError::Format(_) | HmatError::Version { .. } | HmatError::Checksum => HmatStatus::Format,
        _ => HmatStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    NotConverged(usize),
    Hmat(HmatError),
}

impl From<HmatError> for Failure {
    fn from(e: HmatError) -> Self {
        Failure::Hmat(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HmatStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HmatStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            HmatStatus::NullPointer
        }
        Ok(Err(Failure::NotConverged(its))) => {
            set_error(format!("GMRES did not converge in {its} iterations"));
            HmatStatus::Numerical
        }
        Ok(Err(Failure::Hmat(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            HmatStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn read_complex(p: *const f64, n: usize, what: &'static str) -> Result<Vec<c64>, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = std::slice::from_raw_parts(p, 2 * n);
    Ok(s.chunks_exact(2).map(|c| c64::new(c[0], c[1])).collect())
}

unsafe fn write_complex(p: *mut f64, v: &[c64], what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = std::slice::from_raw_parts_mut(p, 2 * v.len());
    for (c, z) in s.chunks_exact_mut(2).zip(v) {
        c[0] = z.re;
        c[1] = z.im;
    }
    Ok(())
}

unsafe fn read_path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Hmat(HmatError::InvalidArgument("path is not UTF-8".into())))
}

fn kernel_of(p: &HmatParams) -> Result<Kernel, HmatError> {
    let k = match p.kernel {
        HmatKernel::Laplace => Kernel::Laplace,
        HmatKernel::Helmholtz => Kernel::Helmholtz { kappa: p.omega },
        HmatKernel::ElastoU => Kernel::ElastoU(Material::new(p.rho, p.mu, p.nu, p.omega)?),
        HmatKernel::ElastoT => Kernel::ElastoT(Material::new(p.rho, p.mu, p.nu, p.omega)?),
    };
    k.validate()?;
    Ok(k)
}

/// Last error message on this thread; empty when none. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn hmat_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library defaults: elastodynamic U, omega 3, rho = mu = 1, nu = 1/3,
/// eps_aca 1e-4, eta 3, 100 points per leaf, shift = point count.
#[no_mangle]
pub unsafe extern "C" fn hmat_params_default(out: *mut HmatParams) -> HmatStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        *out = HmatParams {
            kernel: HmatKernel::ElastoU,
            omega: 3.0,
            rho: 1.0,
            mu: 1.0,
            nu: 1.0 / 3.0,
            eps_aca: 1e-4,
            eta: 3.0,
            n_leaf: 100,
            shift: -1.0,
            seed: 0,
        };
        Ok(())
    })
}

/// Assembles the kernel matrix of a point cloud.
///
/// `points` holds `3 * n_points` coordinates; `normals` is the same shape and may
/// be null unless the kernel is `ElastoT`.
#[no_mangle]
pub unsafe extern "C" fn hmat_assemble(
    points: *const f64,
    normals: *const f64,
    n_points: usize,
    params: *const HmatParams,
    out: *mut *mut HmatMatrix,
) -> HmatStatus {
    guard(|| {
        let p = as_ref(params, "params")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if points.is_null() {
            return Err(Failure::Null("points"));
        }
        let to_points = |ptr: *const f64| -> Vec<[f64; 3]> {
            std::slice::from_raw_parts(ptr, 3 * n_points).chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
        };
        let pts = to_points(points);
        let nrm = (!normals.is_null()).then(|| to_points(normals));
        let cloud = PointCloud::new(pts, nrm)?;
        let kernel = kernel_of(p)?;
        let shift = if p.shift < 0.0 { n_points as f64 } else { p.shift };
        let cfg = AssemblyConfig {
            aca: AcaConfig::with_eps(p.eps_aca),
            eta: p.eta,
            n_leaf: p.n_leaf,
            self_rule: SelfBlockRule::Shift(shift),
            seed: p.seed,
            ..Default::default()
        };
        cfg.aca.validate()?;
        let (h, _, _) = HMatrix::from_cloud(&kernel, &cloud, &cfg)?;
        *out = Box::into_raw(Box::new(HmatMatrix { inner: h }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hmat_matrix_dim(m: *const HmatMatrix, out: *mut usize) -> HmatStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        *out.as_mut().ok_or(Failure::Null("out"))? = m.inner.dim();
        Ok(())
    })
}

/// `y = A_H x`; both vectors have `dim` complex entries.
#[no_mangle]
pub unsafe extern "C" fn hmat_matvec(m: *const HmatMatrix, x: *const f64, y: *mut f64) -> HmatStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        let x = read_complex(x, m.inner.dim(), "x")?;
        let r = m.inner.matvec(&x)?;
        write_complex(y, &r, "y")
    })
}

#[no_mangle]
pub unsafe extern "C" fn hmat_storage(m: *const HmatMatrix, out: *mut HmatStorage) -> HmatStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        let out = out.as_mut().ok_or(Failure::Null("out"))?;
        let r = m.inner.storage_report();
        *out = HmatStorage {
            n_stored: r.n_stored,
            n_dense_equiv: r.n_dense_equiv,
            tau: r.tau,
            max_rank_before: r.max_rank_before,
            max_rank_after: r.max_rank_after,
            bound: r.bound,
            c_sp: r.c_sp,
            n_fallbacks: r.n_fallbacks,
        };
        Ok(())
    })
}

/// H-LU factorization with truncation tolerance `eps_lu`.
#[no_mangle]
pub unsafe extern "C" fn hmat_factorize(m: *const HmatMatrix, eps_lu: f64, out: *mut *mut HmatFactors) -> HmatStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let f = hlu(&m.inner, eps_lu)?;
        *out = Box::into_raw(Box::new(HmatFactors { inner: f }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hmat_factors_dim(f: *const HmatFactors, out: *mut usize) -> HmatStatus {
    guard(|| {
        let f = as_ref(f, "factors")?;
        *out.as_mut().ok_or(Failure::Null("out"))? = f.inner.dim();
        Ok(())
    })
}

/// Solves `L_H U_H x = b`.
#[no_mangle]
pub unsafe extern "C" fn hmat_factors_solve(f: *const HmatFactors, b: *const f64, x: *mut f64) -> HmatStatus {
    guard(|| {
        let f = as_ref(f, "factors")?;
        let b = read_complex(b, f.inner.dim(), "b")?;
        let r = f.inner.solve(&b)?;
        write_complex(x, &r, "x")
    })
}

/// Restarted GMRES on `A_H x = b` from a zero initial guess. A run that stops
/// at `max_iters` without reaching `tol` returns `Numerical` with `x` filled.
#[no_mangle]
pub unsafe extern "C" fn hmat_gmres(
    m: *const HmatMatrix,
    b: *const f64,
    tol: f64,
    restart: usize,
    max_iters: usize,
    x: *mut f64,
    iterations: *mut usize,
) -> HmatStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        let b = read_complex(b, m.inner.dim(), "b")?;
        let res = solve_gmres(&m.inner, &b, &GmresConfig { tol, restart, max_iters })?;
        write_complex(x, &res.x, "x")?;
        if let Some(it) = iterations.as_mut() {
            *it = res.iterations;
        }
        if res.converged {
            Ok(())
        } else {
            Err(Failure::NotConverged(res.iterations))
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn hmat_matrix_save(m: *const HmatMatrix, path: *const c_char) -> HmatStatus {
    guard(|| {
        let m = as_ref(m, "matrix")?;
        snapshot::save_matrix(&m.inner, read_path(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hmat_matrix_load(path: *const c_char, out: *mut *mut HmatMatrix) -> HmatStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let h = snapshot::load_matrix(read_path(path)?)?;
        *out = Box::into_raw(Box::new(HmatMatrix { inner: h }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hmat_factors_save(f: *const HmatFactors, path: *const c_char) -> HmatStatus {
    guard(|| {
        let f = as_ref(f, "factors")?;
        snapshot::save_factors(&f.inner, read_path(path)?)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn hmat_factors_load(path: *const c_char, out: *mut *mut HmatFactors) -> HmatStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let f = snapshot::load_factors(read_path(path)?)?;
        *out = Box::into_raw(Box::new(HmatFactors { inner: f }));
        Ok(())
    })
}

/// Releases a matrix; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hmat_matrix_free(m: *mut HmatMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Releases factors; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn hmat_factors_free(f: *mut HmatFactors) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}
