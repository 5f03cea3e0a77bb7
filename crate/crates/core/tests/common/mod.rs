//! Independent oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::f64::consts::PI;

use faer::{c64, Mat};
use hmat::geometry::Point;
use hmat::Material;

pub type M3 = [[c64; 3]; 3];

pub fn zero3() -> M3 {
    [[c64::new(0.0, 0.0); 3]; 3]
}

pub fn green(k: f64, x: Point, y: Point) -> c64 {
    let r = dist(x, y);
    c64::new(0.0, k * r).exp() / (4.0 * PI * r)
}

pub fn dist(x: Point, y: Point) -> f64 {
    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
}

fn shift(x: Point, axis: usize, h: f64) -> Point {
    let mut p = x;
    p[axis] += h;
    p
}

/// Fourth-order central first derivative along `axis`.
pub fn fd1<T>(f: &impl Fn(Point) -> T, x: Point, axis: usize, h: f64) -> T
where
    T: std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
{
    (f(shift(x, axis, -2.0 * h)) - f(shift(x, axis, 2.0 * h))) * (1.0 / (12.0 * h))
        + (f(shift(x, axis, h)) - f(shift(x, axis, -h))) * (8.0 / (12.0 * h))
}

/// Fourth-order finite-difference Hessian of a scalar field.
pub fn fd_hessian(f: &impl Fn(Point) -> c64, x: Point, h: f64) -> M3 {
    let mut out = zero3();
    for a in 0..3 {
        for b in 0..3 {
            out[a][b] = if a == b {
                let s = |t: f64| f(shift(x, a, t * h));
                (-s(2.0) + s(1.0) * 16.0 - s(0.0) * 30.0 + s(-1.0) * 16.0 - s(-2.0)) / (12.0 * h * h)
            } else {
                fd1(&|p: Point| fd1(f, p, b, h), x, a, h)
            };
        }
    }
    out
}

/// Analytic Hessian in x of e^{ik|x-y|} / (4 pi |x-y|).
pub fn green_hessian(k: f64, x: Point, y: Point) -> M3 {
    let r = dist(x, y);
    let rh = [(x[0] - y[0]) / r, (x[1] - y[1]) / r, (x[2] - y[2]) / r];
    let g = green(k, x, y);
    let l = c64::new(-1.0 / r, k);
    let g1 = g * l;
    let g2 = g * (l * l + 1.0 / (r * r));
    let mut out = zero3();
    for a in 0..3 {
        for b in 0..3 {
            let d = if a == b { 1.0 } else { 0.0 };
            out[a][b] = g2 * (rh[a] * rh[b]) + g1 * ((d - rh[a] * rh[b]) / r);
        }
    }
    out
}

/// `(curl curl [G_s I] - grad div [G_p I]) / (rho omega^2)` from Hessians of G.
fn u_from_hessians(m: &Material, hs: M3, hp: M3) -> M3 {
    let lap = hs[0][0] + hs[1][1] + hs[2][2];
    let s = 1.0 / (m.rho * m.omega * m.omega);
    let mut u = zero3();
    for a in 0..3 {
        for b in 0..3 {
            let d = if a == b { lap } else { c64::new(0.0, 0.0) };
            u[a][b] = (hs[a][b] - d - hp[a][b]) * s;
        }
    }
    u
}

pub fn u_fd(m: &Material, x: Point, y: Point) -> M3 {
    let w = m.wavenumbers();
    let h = 1e-3 * dist(x, y);
    let hs = fd_hessian(&|p| green(w.ks, p, y), x, h);
    let hp = fd_hessian(&|p| green(w.kp, p, y), x, h);
    u_from_hessians(m, hs, hp)
}

pub fn u_analytic(m: &Material, x: Point, y: Point) -> M3 {
    let w = m.wavenumbers();
    u_from_hessians(m, green_hessian(w.ks, x, y), green_hessian(w.kp, x, y))
}

#[derive(Clone, Copy)]
struct Col([c64; 3]);

impl std::ops::Add for Col {
    type Output = Col;
    fn add(self, o: Col) -> Col {
        Col([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl std::ops::Sub for Col {
    type Output = Col;
    fn sub(self, o: Col) -> Col {
        Col([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl std::ops::Mul<f64> for Col {
    type Output = Col;
    fn mul(self, s: f64) -> Col {
        Col([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

/// Traction `2 mu d/dn + lambda n div + mu n x curl`, applied in y to each
/// column of the analytic U, with finite differences for the y-derivatives.
pub fn t_fd(m: &Material, x: Point, y: Point, n: Point) -> M3 {
    let h = 1e-3 * dist(x, y);
    let (lambda, mu) = (m.lambda(), m.mu);
    let mut t = zero3();
    for b in 0..3 {
        let col = |p: Point| {
            let u = u_analytic(m, x, p);
            Col([u[0][b], u[1][b], u[2][b]])
        };
        // grad[g][a] = d u_a / d y_g
        let grad: Vec<[c64; 3]> = (0..3).map(|g| fd1(&col, y, g, h).0).collect();
        let div = grad[0][0] + grad[1][1] + grad[2][2];
        let curl = [grad[1][2] - grad[2][1], grad[2][0] - grad[0][2], grad[0][1] - grad[1][0]];
        let ncurl = [curl[2] * n[1] - curl[1] * n[2], curl[0] * n[2] - curl[2] * n[0], curl[1] * n[0] - curl[0] * n[1]];
        for a in 0..3 {
            let dn = grad[0][a] * n[0] + grad[1][a] * n[1] + grad[2][a] * n[2];
            t[a][b] = dn * (2.0 * mu) + div * (lambda * n[a]) + ncurl[a] * mu;
        }
    }
    t
}

pub fn rel_err3(a: &M3, b: &M3) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            num += (a[i][j] - b[i][j]).norm_sqr();
            den += b[i][j].norm_sqr();
        }
    }
    (num / den).sqrt()
}

pub fn frob(a: &Mat<c64>) -> f64 {
    a.norm_l2()
}

pub fn rel_frob(approx: &Mat<c64>, exact: &Mat<c64>) -> f64 {
    (approx - exact).norm_l2() / exact.norm_l2()
}

/// Spectral numerical rank from singular values in decreasing order.
pub fn spectral_rank(s: &[f64], eps: f64) -> usize {
    let s0 = s.first().copied().unwrap_or(0.0);
    s.iter().position(|&v| v <= eps * s0).unwrap_or(s.len())
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Deterministic xorshift stream in [0, 1) for test data.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn point(&mut self) -> Point {
        [2.0 * self.next() - 1.0, 2.0 * self.next() - 1.0, 2.0 * self.next() - 1.0]
    }

    pub fn unit(&mut self) -> Point {
        loop {
            let p = self.point();
            let r = dist(p, [0.0; 3]);
            if r > 0.1 && r <= 1.0 {
                return [p[0] / r, p[1] / r, p[2] / r];
            }
        }
    }

    pub fn complex_vec(&mut self, n: usize) -> Vec<c64> {
        (0..n).map(|_| c64::new(self.next() - 0.5, self.next() - 0.5)).collect()
    }
}
