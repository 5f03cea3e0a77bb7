//! Point clouds, bounding boxes, the cluster tree and the block tree.

use std::ops::Range;

use crate::error::{HmatError, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub normals: Option<Vec<Point>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, normals: Option<Vec<Point>>) -> Result<Self> {
        if points.is_empty() {
            return Err(HmatError::EmptyInput("point cloud"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(HmatError::InvalidArgument("non-finite point coordinate".into()));
        }
        if let Some(n) = &normals {
            if n.len() != points.len() {
                return Err(HmatError::DimensionMismatch { expected: points.len(), got: n.len() });
            }
            for v in n {
                let len = norm(*v);
                if !len.is_finite() || (len - 1.0).abs() > 1e-8 {
                    return Err(HmatError::InvalidArgument(format!("normal {v:?} is not a unit vector")));
                }
            }
        }
        Ok(PointCloud { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn normal(&self, i: usize) -> Option<Point> {
        self.normals.as_ref().map(|n| n[i])
    }

    /// Mean distance from each point to its nearest neighbour (brute force).
    pub fn mean_spacing(&self) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        let total: f64 = (0..n)
            .map(|i| {
                let p = self.points[i];
                let mut best = f64::INFINITY;
                for (j, q) in self.points.iter().enumerate() {
                    if j != i {
                        best = best.min(dist2(p, *q));
                    }
                }
                best.sqrt()
            })
            .sum();
        total / n as f64
    }
}

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

#[inline]
fn dist2(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub lo: Point,
    pub hi: Point,
}

impl Aabb {
    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in pts {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Aabb { lo, hi }
    }

    pub fn diam(&self) -> f64 {
        norm(sub(self.hi, self.lo))
    }

    pub fn dist(&self, other: &Aabb) -> f64 {
        let mut s = 0.0;
        for k in 0..3 {
            let a = (self.lo[k] - other.hi[k]).max(0.0);
            let b = (other.lo[k] - self.hi[k]).max(0.0);
            s += a * a + b * b;
        }
        s.sqrt()
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|k| self.lo[k] <= p[k] && p[k] <= self.hi[k])
    }

    fn longest_axis(&self) -> usize {
        let e = sub(self.hi, self.lo);
        let mut axis = 0;
        for k in 1..3 {
            if e[k] > e[axis] {
                axis = k;
            }
        }
        axis
    }
}

pub fn diam_box(b: &Aabb) -> f64 {
    b.diam()
}

pub fn dist_box(a: &Aabb, b: &Aabb) -> f64 {
    a.dist(b)
}

/// `min(diam a, diam b) < eta * dist(a, b)`.
pub fn is_admissible(a: &Aabb, b: &Aabb, eta: f64) -> bool {
    a.diam().min(b.diam()) < eta * a.dist(b)
}

#[derive(Debug, Clone)]
pub struct ClusterNode {
    /// Index range into the tree-order permutation.
    pub range: Range<usize>,
    pub bbox: Aabb,
    pub level: usize,
    pub children: Option<[usize; 2]>,
}

impl ClusterNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Binary cluster tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    /// `perm[t]` is the original index of the point at tree position `t`.
    pub perm: Vec<usize>,
    pub nodes: Vec<ClusterNode>,
    pub n_leaf: usize,
}

impl ClusterTree {
    pub fn build(cloud: &PointCloud, n_leaf: usize) -> Result<Self> {
        if n_leaf == 0 {
            return Err(HmatError::InvalidArgument("n_leaf must be positive".into()));
        }
        if cloud.is_empty() {
            return Err(HmatError::EmptyInput("point cloud"));
        }
        let mut tree = ClusterTree { perm: (0..cloud.len()).collect(), nodes: Vec::new(), n_leaf };
        tree.split(cloud, 0..cloud.len(), 0);
        Ok(tree)
    }

    fn split(&mut self, cloud: &PointCloud, range: Range<usize>, level: usize) -> usize {
        let bbox = Aabb::from_points(self.perm[range.clone()].iter().map(|&i| &cloud.points[i]));
        let id = self.nodes.len();
        self.nodes.push(ClusterNode { range: range.clone(), bbox, level, children: None });
        if range.len() <= self.n_leaf {
            return id;
        }
        let axis = bbox.longest_axis();
        let mid = 0.5 * (bbox.lo[axis] + bbox.hi[axis]);
        let idx = &mut self.perm[range.clone()];
        let (mut lower, upper): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| cloud.points[i][axis] <= mid);
        let cut = if lower.is_empty() || upper.is_empty() {
            // degenerate midpoint split; fall back to the median
            let mut all = idx.to_vec();
            all.sort_by(|&a, &b| cloud.points[a][axis].total_cmp(&cloud.points[b][axis]).then(a.cmp(&b)));
            idx.copy_from_slice(&all);
            idx.len() / 2
        } else {
            let cut = lower.len();
            lower.extend_from_slice(&upper);
            idx.copy_from_slice(&lower);
            cut
        };
        let c0 = self.split(cloud, range.start..range.start + cut, level + 1);
        let c1 = self.split(cloud, range.start + cut..range.end, level + 1);
        self.nodes[id].children = Some([c0, c1]);
        id
    }

    pub fn root(&self) -> &ClusterNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ClusterNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Child ids of `id`, or `[id]` itself for a leaf.
    pub fn sons(&self, id: usize) -> Vec<usize> {
        match self.nodes[id].children {
            Some(c) => c.to_vec(),
            None => vec![id],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Admissible,
    Dense,
    Subdivided,
}

#[derive(Debug, Clone)]
pub struct BlockNode {
    pub row: usize,
    pub col: usize,
    pub kind: BlockKind,
    /// Row-major grid of child block ids, `n_row_sons x n_col_sons`.
    pub children: Vec<usize>,
    pub n_row_sons: usize,
    pub n_col_sons: usize,
}

/// Block cluster tree over a row tree and a column tree; node 0 is the root.
#[derive(Debug, Clone)]
pub struct BlockTree {
    pub nodes: Vec<BlockNode>,
    pub eta: f64,
}

impl BlockTree {
    pub fn build(rows: &ClusterTree, cols: &ClusterTree, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(HmatError::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        let mut bt = BlockTree { nodes: Vec::new(), eta };
        bt.subdivide(rows, cols, 0, 0);
        Ok(bt)
    }

    fn subdivide(&mut self, rows: &ClusterTree, cols: &ClusterTree, r: usize, c: usize) -> usize {
        let id = self.nodes.len();
        let (rn, cn) = (&rows.nodes[r], &cols.nodes[c]);
        let kind = if is_admissible(&rn.bbox, &cn.bbox, self.eta) {
            BlockKind::Admissible
        } else if rn.is_leaf() && cn.is_leaf() {
            BlockKind::Dense
        } else {
            BlockKind::Subdivided
        };
        self.nodes.push(BlockNode { row: r, col: c, kind, children: Vec::new(), n_row_sons: 0, n_col_sons: 0 });
        if kind == BlockKind::Subdivided {
            let rs = rows.sons(r);
            let cs = cols.sons(c);
            let mut children = Vec::with_capacity(rs.len() * cs.len());
            for &ri in &rs {
                for &ci in &cs {
                    children.push(self.subdivide(rows, cols, ri, ci));
                }
            }
            let node = &mut self.nodes[id];
            node.children = children;
            node.n_row_sons = rs.len();
            node.n_col_sons = cs.len();
        }
        id
    }

    pub fn leaves(&self) -> impl Iterator<Item = &BlockNode> {
        self.nodes.iter().filter(|n| n.kind != BlockKind::Subdivided)
    }

    pub fn count(&self, kind: BlockKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Largest number of partition blocks sharing a row or a column cluster.
    pub fn sparsity_constant(&self, rows: &ClusterTree, cols: &ClusterTree) -> usize {
        let mut per_row = vec![0usize; rows.nodes.len()];
        let mut per_col = vec![0usize; cols.nodes.len()];
        for b in self.leaves() {
            per_row[b.row] += 1;
            per_col[b.col] += 1;
        }
        per_row.into_iter().chain(per_col).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometrySpec {
    /// `n_per_axis^2` grid on `[-half_width, half_width]^2` in the plane z = 0.
    Plate { n_per_axis: usize, half_width: f64 },
    /// `count` quasi-uniform points on the sphere of radius `radius`.
    Sphere { count: usize, radius: f64 },
}

pub fn make_geometry(spec: GeometrySpec) -> Result<PointCloud> {
    match spec {
        GeometrySpec::Plate { n_per_axis, half_width } => {
            if n_per_axis == 0 {
                return Err(HmatError::EmptyInput("plate grid"));
            }
            if !(half_width > 0.0) {
                return Err(HmatError::InvalidArgument("plate half width must be positive".into()));
            }
            let coord = |i: usize| {
                if n_per_axis == 1 {
                    0.0
                } else {
                    -half_width + 2.0 * half_width * i as f64 / (n_per_axis - 1) as f64
                }
            };
            let mut points = Vec::with_capacity(n_per_axis * n_per_axis);
            for j in 0..n_per_axis {
                for i in 0..n_per_axis {
                    points.push([coord(i), coord(j), 0.0]);
                }
            }
            let normals = vec![[0.0, 0.0, 1.0]; points.len()];
            PointCloud::new(points, Some(normals))
        }
        GeometrySpec::Sphere { count, radius } => {
            if count == 0 {
                return Err(HmatError::EmptyInput("sphere point count"));
            }
            if !(radius > 0.0) {
                return Err(HmatError::InvalidArgument("sphere radius must be positive".into()));
            }
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            let mut points = Vec::with_capacity(count);
            let mut normals = Vec::with_capacity(count);
            for i in 0..count {
                let z = if count == 1 { 1.0 } else { 1.0 - 2.0 * i as f64 / (count - 1) as f64 };
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * i as f64;
                let u = [rho * phi.cos(), rho * phi.sin(), z];
                let len = norm(u);
                let u = [u[0] / len, u[1] / len, u[2] / len];
                points.push([radius * u[0], radius * u[1], radius * u[2]]);
                normals.push(u);
            }
            PointCloud::new(points, Some(normals))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plate(n: usize) -> PointCloud {
        make_geometry(GeometrySpec::Plate { n_per_axis: n, half_width: 1.0 }).unwrap()
    }

    #[test]
    fn box_metrics() {
        let a = Aabb { lo: [0.0; 3], hi: [1.0, 1.0, 0.0] };
        let b = Aabb { lo: [3.0, 0.0, 0.0], hi: [4.0, 1.0, 0.0] };
        assert!((a.diam() - 2f64.sqrt()).abs() < 1e-15);
        assert!((a.dist(&b) - 2.0).abs() < 1e-15);
        assert_eq!(a.dist(&a), 0.0);
        assert!(is_admissible(&a, &b, 3.0));
        assert!(!is_admissible(&a, &b, 0.5));
    }

    #[test]
    fn diagonal_box_distance() {
        let a = Aabb { lo: [0.0; 3], hi: [1.0; 3] };
        let b = Aabb { lo: [2.0; 3], hi: [3.0; 3] };
        assert!((a.dist(&b) - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn plate_tree_levels() {
        let tree = ClusterTree::build(&plate(50), 100).unwrap();
        assert_eq!(tree.depth(), 5);
        for leaf in tree.leaves() {
            assert!(leaf.len() <= 100 && !leaf.is_empty());
        }
    }

    #[test]
    fn permutation_is_bijection() {
        let tree = ClusterTree::build(&plate(17), 10).unwrap();
        let mut seen = tree.perm.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..289).collect::<Vec<_>>());
    }

    #[test]
    fn identical_points_split_by_median() {
        let cloud = PointCloud::new(vec![[0.5; 3]; 9], None).unwrap();
        let tree = ClusterTree::build(&cloud, 2).unwrap();
        for leaf in tree.leaves() {
            assert!(leaf.len() <= 2);
        }
    }

    #[test]
    fn single_point_geometries() {
        let p = plate(1);
        assert_eq!(p.points, vec![[0.0; 3]]);
        let s = make_geometry(GeometrySpec::Sphere { count: 1, radius: 2.0 }).unwrap();
        assert_eq!(s.points, vec![[0.0, 0.0, 2.0]]);
        let tree = ClusterTree::build(&s, 100).unwrap();
        assert_eq!(tree.nodes.len(), 1);
    }

    #[test]
    fn sphere_points_on_surface() {
        let s = make_geometry(GeometrySpec::Sphere { count: 500, radius: 1.5 }).unwrap();
        for (p, n) in s.points.iter().zip(s.normals.as_ref().unwrap()) {
            assert!((norm(*p) - 1.5).abs() < 1e-12);
            assert!((norm(*n) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(PointCloud::new(vec![], None).is_err());
        assert!(PointCloud::new(vec![[f64::NAN, 0.0, 0.0]], None).is_err());
        assert!(PointCloud::new(vec![[0.0; 3]], Some(vec![[2.0, 0.0, 0.0]])).is_err());
        assert!(ClusterTree::build(&plate(3), 0).is_err());
        assert!(make_geometry(GeometrySpec::Plate { n_per_axis: 0, half_width: 1.0 }).is_err());
    }

    #[test]
    fn two_by_two_partition_sparsity() {
        // two separated pairs: the root splits into two leaves of two points
        let cloud =
            PointCloud::new(vec![[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [10.0, 0.0, 0.0], [10.1, 0.0, 0.0]], None).unwrap();
        let tree = ClusterTree::build(&cloud, 2).unwrap();
        let bt = BlockTree::build(&tree, &tree, 3.0).unwrap();
        assert_eq!(bt.count(BlockKind::Dense), 2);
        assert_eq!(bt.count(BlockKind::Admissible), 2);
        assert_eq!(bt.sparsity_constant(&tree, &tree), 2);
    }
}
