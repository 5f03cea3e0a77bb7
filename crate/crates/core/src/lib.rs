//! Hierarchical matrices for boundary-type kernel matrices on 3D point clouds.
//!
//! The crate builds a cluster tree by geometric bisection, partitions the
//! kernel matrix into admissible (low-rank) and dense blocks, compresses the
//! admissible blocks with adaptive cross approximation and offers H-LU
//! factorization, GMRES and an a posteriori residual estimator on top.

pub mod error;
pub mod experiment;
pub mod geometry;
pub mod hmatrix;
pub mod kernels;
pub mod linalg;
pub mod lowrank;
pub mod solve;

pub use error::{HmatError, Result};
pub use faer::c64;
pub use geometry::{make_geometry, Aabb, BlockNode, BlockTree, ClusterTree, GeometrySpec, PointCloud};
pub use hmatrix::{AssemblyConfig, HMatrix, LuFactors, StorageReport};
pub use kernels::{Kernel, Material, SelfBlockRule};
pub use lowrank::LowRankFactor;
