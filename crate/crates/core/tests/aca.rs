mod common;

use common::*;
use hmat::geometry::BlockKind;
use hmat::kernels::KernelBlock;
use hmat::lowrank::{aca_partial, aca_vector, randomized_svd, recompress, AcaConfig, BlockGenerator};
use hmat::{make_geometry, BlockTree, ClusterTree, GeometrySpec, HmatError, Kernel, Material, SelfBlockRule};

#[test]
fn aca_on_sphere_blocks_meets_tolerance() {
    let cloud = make_geometry(GeometrySpec::Sphere { count: 900, radius: 1.0 }).unwrap();
    let tree = ClusterTree::build(&cloud, 60).unwrap();
    let bt = BlockTree::build(&tree, &tree, 3.0).unwrap();
    let m = Material::new(1.0, 1.0, 1.0 / 3.0, 4.0).unwrap();
    let kernels = [Kernel::Helmholtz { kappa: 4.0 }, Kernel::ElastoU(m), Kernel::ElastoT(m)];
    let blocks: Vec<_> = bt.leaves().filter(|b| b.kind == BlockKind::Admissible).step_by(7).take(6).collect();
    assert!(!blocks.is_empty());
    for k in &kernels {
        for b in &blocks {
            let (r, c) = (&tree.nodes[b.row], &tree.nodes[b.col]);
            let gen = KernelBlock::new(
                k,
                &cloud,
                &cloud,
                &tree.perm[r.range.clone()],
                &tree.perm[c.range.clone()],
                SelfBlockRule::Reject,
            )
            .unwrap();
            let exact = gen.to_dense();
            let cfg = AcaConfig::with_eps(1e-6);
            let approx = if k.d() == 1 { aca_partial(&gen, &cfg) } else { aca_vector(&gen, &cfg) }.unwrap();
            assert!(approx.converged);
            let f = recompress(&approx.factor, cfg.eps);
            assert!(f.rank() <= approx.factor.rank());
            let e = rel_frob(&f.to_dense(), &exact);
            assert!(e <= 3e-6, "{k:?} {e}");
        }
    }
}

#[test]
fn randomized_svd_on_kernel_block() {
    let cloud = make_geometry(GeometrySpec::Sphere { count: 400, radius: 1.0 }).unwrap();
    let rows: Vec<usize> = (0..100).collect();
    let cols: Vec<usize> = (300..400).collect();
    let k = Kernel::Helmholtz { kappa: 2.0 };
    let gen = KernelBlock::new(&k, &cloud, &cloud, &rows, &cols, SelfBlockRule::Reject).unwrap();
    let a = gen.to_dense();
    let r = randomized_svd(a.as_ref(), 1e-8, 10, None, 42);
    assert!(r.converged);
    assert!(rel_frob(&r.factor.to_dense(), &a) <= 1e-8);
    let again = randomized_svd(a.as_ref(), 1e-8, 10, None, 42);
    assert_eq!(r.factor.u, again.factor.u);
}

#[test]
fn coincident_points_in_a_block_are_rejected() {
    let cloud = make_geometry(GeometrySpec::Sphere { count: 10, radius: 1.0 }).unwrap();
    let ids: Vec<usize> = (0..10).collect();
    let gen = KernelBlock::new(&Kernel::Laplace, &cloud, &cloud, &ids, &ids, SelfBlockRule::Reject).unwrap();
    assert!(matches!(gen.try_to_dense(), Err(HmatError::CoincidentPoints(0, 0))));
}

#[test]
fn traction_requires_normals() {
    let cloud = hmat::PointCloud::new(vec![[0.0; 3], [1.0, 0.0, 0.0]], None).unwrap();
    let m = Material::new(1.0, 1.0, 0.3, 1.0).unwrap();
    let ids = [0usize];
    let cols = [1usize];
    let k = Kernel::ElastoT(m);
    assert!(matches!(
        KernelBlock::new(&k, &cloud, &cloud, &ids, &cols, SelfBlockRule::Reject),
        Err(HmatError::MissingNormals)
    ));
}
