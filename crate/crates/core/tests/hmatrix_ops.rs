mod common;

use common::*;
use faer::linalg::solvers::Solve;
use faer::{c64, Mat};
use hmat::hmatrix::{addmul, hlu, BlockOp};
use hmat::kernels::assemble_dense;
use hmat::lowrank::AcaConfig;
use hmat::solve::{estimate, EstimatorOptions};
use hmat::{make_geometry, AssemblyConfig, GeometrySpec, HMatrix, Kernel, Material, PointCloud, SelfBlockRule};

fn sphere(n: usize) -> PointCloud {
    make_geometry(GeometrySpec::Sphere { count: n, radius: 1.0 }).unwrap()
}

fn cfg(eps: f64, n: usize) -> AssemblyConfig {
    AssemblyConfig {
        aca: AcaConfig::with_eps(eps),
        n_leaf: 30,
        self_rule: SelfBlockRule::Shift(n as f64),
        ..Default::default()
    }
}

fn elasto(omega: f64) -> Material {
    Material::new(1.0, 1.0, 1.0 / 3.0, omega).unwrap()
}

fn dense_vec(a: &Mat<c64>, x: &[c64]) -> Vec<c64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

fn rel(a: &[c64], b: &[c64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn matvec_matches_kernel_matrix_for_all_kernels() {
    let cloud = sphere(400);
    let kernels =
        [Kernel::Laplace, Kernel::Helmholtz { kappa: 4.0 }, Kernel::ElastoU(elasto(3.0)), Kernel::ElastoT(elasto(3.0))];
    let mut rng = Lcg(7);
    for k in kernels {
        let c = cfg(1e-6, 0);
        let c = AssemblyConfig { self_rule: SelfBlockRule::Shift(1.0), ..c };
        let (h, _, _) = HMatrix::from_cloud(&k, &cloud, &c).unwrap();
        let a = assemble_dense(&k, &cloud, &cloud, c.self_rule).unwrap();
        let x = rng.complex_vec(h.dim());
        let e = rel(&h.matvec(&x).unwrap(), &dense_vec(&a, &x));
        assert!(e < 1e-5, "{k:?}: {e}");
        assert!(rel_frob(&h.to_dense(), &a) < 3e-6);
    }
}

#[test]
fn formatted_product_on_hierarchical_blocks() {
    let cloud = sphere(350);
    let k = Kernel::ElastoU(elasto(2.0));
    let (h, _, _) = HMatrix::from_cloud(&k, &cloud, &cfg(1e-8, 350)).unwrap();
    let a = h.root.to_dense();
    let mut target = h.root.clone();
    let op = BlockOp::of(&h.root);
    addmul(&mut target, c64::new(0.5, -0.25), &op, &op, 1e-10).unwrap();
    let mut expected = a.clone();
    expected += faer::Scale(c64::new(0.5, -0.25)) * (&a * &a);
    let e = rel_frob(&target.to_dense(), &expected);
    assert!(e < 1e-7, "{e}");
}

#[test]
fn lu_solves_the_compressed_system() {
    let cloud = sphere(500);
    let k = Kernel::ElastoU(elasto(3.0));
    let (h, _, _) = HMatrix::from_cloud(&k, &cloud, &cfg(1e-6, 500)).unwrap();
    let f = hlu(&h, 1e-8).unwrap();
    let b = Lcg(3).complex_vec(h.dim());
    let x = f.solve(&b).unwrap();
    let a = h.to_dense();
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let xd = a.partial_piv_lu().solve(&rhs);
    let xd: Vec<c64> = (0..b.len()).map(|i| xd[(i, 0)]).collect();
    assert!(rel(&x, &xd) < 1e-6);
    assert!(rel(&f.apply(&x).unwrap(), &b) < 1e-6);
}

#[test]
fn estimator_bounds_true_residual() {
    let cloud = sphere(600);
    let k = Kernel::ElastoU(elasto(3.0));
    let c = cfg(1e-3, 600);
    let (h, _, _) = HMatrix::from_cloud(&k, &cloud, &c).unwrap();
    let b = Lcg(11).complex_vec(h.dim());
    let x0 = hlu(&h, 1e-3).unwrap().solve(&b).unwrap();
    let rep = estimate(&h, &k, &cloud, c.self_rule, &b, &x0, EstimatorOptions { dense_oracle: true, two_norm: true })
        .unwrap();
    let t = rep.true_residual.unwrap();
    assert!(rep.bound >= t && rep.bound_two.unwrap() >= t * (1.0 - 1e-12));
    assert!(rep.delta_h_two.unwrap() <= rep.delta_h_frob * (1.0 + 1e-12));
    assert!(rep.delta_h_frob <= 3e-3 * rep.norm_a_frob);
}

#[test]
fn traction_kernel_assembles_and_solves() {
    let cloud = make_geometry(GeometrySpec::Plate { n_per_axis: 20, half_width: 1.0 }).unwrap();
    let k = Kernel::ElastoT(elasto(4.0));
    let (h, _, _) = HMatrix::from_cloud(&k, &cloud, &cfg(1e-6, 400)).unwrap();
    let report = h.storage_report();
    assert!(report.n_stored as f64 <= report.bound);
    let b = Lcg(5).complex_vec(h.dim());
    let x = hlu(&h, 1e-8).unwrap().solve(&b).unwrap();
    assert!(rel(&h.matvec(&x).unwrap(), &b) < 1e-6);
}
