//! Point clouds as graphs: radius graphs with offset labels, VoxelGrid
//! downsampling, pyramids and augmentation.

pub mod io;
pub mod mesh;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{EccError, Result};
use crate::graph::{GraphPyramid, LabeledGraph, PoolingMap};
use crate::tensor::Tensor;

pub type Point = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    features: Option<Tensor>,
}

impl PointCloud {
    /// `features`, if present, is `[n x f]`.
    pub fn new(points: Vec<Point>, features: Option<Tensor>) -> Result<Self> {
        if points.is_empty() {
            return Err(EccError::contract("point cloud must contain at least one point"));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(EccError::contract("point coordinates must be finite"));
        }
        if let Some(f) = &features {
            if f.shape().len() != 2 || f.rows() != points.len() {
                return Err(EccError::dim("point features", f.shape(), &[points.len()]));
            }
        }
        Ok(PointCloud { points, features })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn features(&self) -> Option<&Tensor> {
        self.features.as_ref()
    }

    /// Vertex signal: the features, or a single zero channel without them.
    pub fn signal(&self) -> Tensor {
        self.features.clone().unwrap_or_else(|| Tensor::zeros(&[self.len(), 1]))
    }

    pub fn signal_width(&self) -> usize {
        self.features.as_ref().map_or(1, Tensor::cols)
    }

    fn subset(&self, keep: &[usize]) -> PointCloud {
        let points = keep.iter().map(|&i| self.points[i]).collect();
        let features = self.features.as_ref().map(|f| {
            let c = f.cols();
            let data = keep.iter().flat_map(|&i| f.row(i).iter().copied()).collect();
            Tensor::new(&[keep.len(), c], data).expect("sized")
        });
        PointCloud { points, features }
    }
}

/// Edge-label definitions for offsets `delta = p_j - p_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LabelScheme {
    /// `(dx, dy, dz, |d|, polar, azimuth)`
    #[default]
    Full6d,
    /// `(dx, dy, dz)`
    Cartesian3d,
    /// `(|d|, polar, azimuth)`
    Spherical3d,
    /// `(|d_xy|, dz, |d|, polar)`
    Cyl4d,
    /// `(|d_xy|, dz)`
    Cyl2d,
    /// `(|d|, polar)`
    Sph2d,
    /// `(|d|)`
    Iso1d,
    /// `(0)`
    None,
}

impl LabelScheme {
    pub const ALL: [LabelScheme; 8] = [
        LabelScheme::Full6d,
        LabelScheme::Cartesian3d,
        LabelScheme::Spherical3d,
        LabelScheme::Cyl4d,
        LabelScheme::Cyl2d,
        LabelScheme::Sph2d,
        LabelScheme::Iso1d,
        LabelScheme::None,
    ];

    pub fn width(self) -> usize {
        match self {
            LabelScheme::Full6d => 6,
            LabelScheme::Cartesian3d | LabelScheme::Spherical3d => 3,
            LabelScheme::Cyl4d => 4,
            LabelScheme::Cyl2d | LabelScheme::Sph2d => 2,
            LabelScheme::Iso1d | LabelScheme::None => 1,
        }
    }

    /// Whether labels are unchanged by rotations about the z axis.
    pub fn rotation_invariant_z(self) -> bool {
        matches!(
            self,
            LabelScheme::Cyl4d | LabelScheme::Cyl2d | LabelScheme::Sph2d | LabelScheme::Iso1d | LabelScheme::None
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelScheme::Full6d => "full6d",
            LabelScheme::Cartesian3d => "cartesian3d",
            LabelScheme::Spherical3d => "spherical3d",
            LabelScheme::Cyl4d => "cyl4d",
            LabelScheme::Cyl2d => "cyl2d",
            LabelScheme::Sph2d => "sph2d",
            LabelScheme::Iso1d => "iso1d",
            LabelScheme::None => "none",
        }
    }

    /// Label of a nonzero offset, appended to `out`.
    pub fn label(self, d: Point, out: &mut Vec<f64>) {
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let polar = || (d[2] / norm).clamp(-1.0, 1.0).acos();
        let azimuth = || d[1].atan2(d[0]);
        let xy = || d[0].hypot(d[1]);
        match self {
            LabelScheme::Full6d => out.extend([d[0], d[1], d[2], norm, polar(), azimuth()]),
            LabelScheme::Cartesian3d => out.extend(d),
            LabelScheme::Spherical3d => out.extend([norm, polar(), azimuth()]),
            LabelScheme::Cyl4d => out.extend([xy(), d[2], norm, polar()]),
            LabelScheme::Cyl2d => out.extend([xy(), d[2]]),
            LabelScheme::Sph2d => out.extend([norm, polar()]),
            LabelScheme::Iso1d => out.push(norm),
            LabelScheme::None => out.push(0.0),
        }
    }
}

impl FromStr for LabelScheme {
    type Err = EccError;

    fn from_str(s: &str) -> Result<Self> {
        LabelScheme::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = LabelScheme::ALL.iter().map(|l| l.name()).collect();
                EccError::Configuration(format!("unknown label scheme {s:?}, expected one of {}", names.join(", ")))
            })
    }
}

type Cell = [i64; 3];

fn cell_of(p: &Point, size: f64) -> Cell {
    [
        (p[0] / size).floor() as i64,
        (p[1] / size).floor() as i64,
        (p[2] / size).floor() as i64,
    ]
}

fn hash_grid(points: &[Point], size: f64) -> HashMap<Cell, Vec<usize>> {
    let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell_of(p, size)).or_default().push(i);
    }
    grid
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist(a: &Point, b: &Point) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Radius graph: edge `j -> i` iff `0 < |p_j - p_i| <= rho`, labeled from
/// `p_j - p_i`; self-loops carry all-zero labels.
pub fn build_graph(pc: &PointCloud, rho: f64, scheme: LabelScheme) -> Result<LabeledGraph> {
    if !(rho > 0.0) {
        return Err(EccError::contract(format!("radius must be positive, got {rho}")));
    }
    let pts = &pc.points;
    let grid = hash_grid(pts, rho);
    let mut edges = Vec::new();
    let mut labels = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let c = cell_of(p, rho);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(members) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &j in members {
                        let d = dist(&pts[j], p);
                        if d > 0.0 && d <= rho {
                            edges.push((j, i));
                            scheme.label(sub(&pts[j], p), &mut labels);
                        }
                    }
                }
            }
        }
    }
    let s = scheme.width();
    let labels = Tensor::new(&[edges.len(), s], labels)?;
    LabeledGraph::new(pc.len(), &edges, labels, pc.signal())?.finalize(&vec![0.0; s])
}

/// Result of a VoxelGrid pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Voxelized {
    pub cloud: PointCloud,
    /// Output point index for every input point.
    pub membership: Vec<usize>,
    /// Integer voxel coordinates of every output point.
    pub voxels: Vec<Cell>,
}

/// Replaces the points of every occupied voxel of size `r` by their centroid,
/// averaging features. Output points are ordered by voxel coordinates.
pub fn voxelgrid(pc: &PointCloud, r: f64) -> Result<Voxelized> {
    if !(r > 0.0) {
        return Err(EccError::contract(format!("voxel size must be positive, got {r}")));
    }
    let cells: Vec<Cell> = pc.points.iter().map(|p| cell_of(p, r)).collect();
    let mut voxels = cells.clone();
    voxels.sort_unstable();
    voxels.dedup();
    let index: HashMap<Cell, usize> = voxels.iter().enumerate().map(|(k, c)| (*c, k)).collect();
    let membership: Vec<usize> = cells.iter().map(|c| index[c]).collect();
    let k = voxels.len();
    let mut sum = vec![[0.0; 3]; k];
    let mut lo = vec![[f64::INFINITY; 3]; k];
    let mut hi = vec![[f64::NEG_INFINITY; 3]; k];
    let mut count = vec![0usize; k];
    for (p, &v) in pc.points.iter().zip(&membership) {
        count[v] += 1;
        for a in 0..3 {
            sum[v][a] += p[a];
            lo[v][a] = lo[v][a].min(p[a]);
            hi[v][a] = hi[v][a].max(p[a]);
        }
    }
    // The clamp only absorbs rounding: it keeps every centroid inside the
    // bounding box of its members and hence inside its own voxel.
    let points: Vec<Point> = (0..k)
        .map(|v| std::array::from_fn(|a| (sum[v][a] / count[v] as f64).clamp(lo[v][a], hi[v][a])))
        .collect();
    let features = pc.features.as_ref().map(|f| {
        let c = f.cols();
        let mut data = vec![0.0; k * c];
        for (i, &v) in membership.iter().enumerate() {
            for (o, x) in data[v * c..(v + 1) * c].iter_mut().zip(f.row(i)) {
                *o += x;
            }
        }
        for v in 0..k {
            data[v * c..(v + 1) * c].iter_mut().for_each(|o| *o /= count[v] as f64);
        }
        Tensor::new(&[k, c], data).expect("sized")
    });
    Ok(Voxelized {
        cloud: PointCloud { points, features },
        membership,
        voxels,
    })
}

/// Index of the nearest point of `coarse` (voxelized with size `r`, so every
/// fine point has a coarse point in its own voxel) for every fine point.
/// Ties go to the lowest coarse index.
pub fn nearest_point_map(fine: &[Point], coarse: &[Point], r: f64) -> Vec<usize> {
    let grid = hash_grid(coarse, r);
    fine.iter()
        .map(|p| {
            let c = cell_of(p, r);
            let mut best: Option<(f64, usize)> = None;
            // The own-voxel centroid is at most sqrt(3) r away, so two rings
            // of cells contain every candidate that can beat it.
            for dx in -2..=2 {
                for dy in -2..=2 {
                    for dz in -2..=2 {
                        for &j in grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]).into_iter().flatten() {
                            let d = sq_dist(p, &coarse[j]);
                            if best.is_none_or(|(bd, bj)| d < bd || (d == bd && j < bj)) {
                                best = Some((d, j));
                            }
                        }
                    }
                }
            }
            best.expect("own voxel is occupied").1
        })
        .collect()
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    let d = sub(a, b);
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Pyramid for `levels = [(r0, rho0), (r1, rho1), ...]`.
///
/// Level 0 is the input voxelized with `r0`; level `h` voxelizes level
/// `h - 1` with `r_h`. Each level is a radius graph with `rho_h`, and each
/// fine point pools into its nearest coarse point. Returns the clouds too.
pub fn build_pyramid(pc: &PointCloud, levels: &[(f64, f64)], scheme: LabelScheme) -> Result<(GraphPyramid, Vec<PointCloud>)> {
    if levels.is_empty() {
        return Err(EccError::Configuration("a point-cloud pyramid needs at least one level".into()));
    }
    for w in levels.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(EccError::Configuration(format!(
                "voxel sizes must increase strictly, got {} then {}",
                w[0].0, w[1].0
            )));
        }
    }
    let mut clouds = Vec::with_capacity(levels.len());
    let mut graphs = Vec::with_capacity(levels.len());
    let mut maps = Vec::with_capacity(levels.len() - 1);
    let mut current = voxelgrid(pc, levels[0].0)?.cloud;
    for (h, &(r, rho)) in levels.iter().enumerate() {
        if h > 0 {
            let next = voxelgrid(&current, r)?.cloud;
            let assign = nearest_point_map(&current.points, &next.points, r);
            maps.push(PoolingMap::new(assign, next.len())?);
            clouds.push(std::mem::replace(&mut current, next));
        }
        graphs.push(build_graph(&current, rho, scheme)?);
    }
    clouds.push(current);
    Ok((GraphPyramid::new(graphs, maps)?, clouds))
}

/// Random transformations, applied in field order.
#[derive(Clone, Debug, PartialEq)]
pub struct Augment {
    pub rotate_z: bool,
    /// Uniform scale bounds.
    pub scale: Option<(f64, f64)>,
    /// Probability of negating x.
    pub mirror: Option<f64>,
    /// Independent deletion probability per point.
    pub delete: Option<f64>,
    /// Standard deviation of additive Gaussian noise per coordinate.
    pub noise: Option<f64>,
}

impl Augment {
    pub const NONE: Augment = Augment {
        rotate_z: false,
        scale: None,
        mirror: None,
        delete: None,
        noise: None,
    };

    /// Rotation, scale in `[0.9, 1.1]` and mirroring with probability 0.5.
    pub fn standard() -> Self {
        Augment {
            rotate_z: true,
            scale: Some((0.9, 1.1)),
            mirror: Some(0.5),
            ..Augment::NONE
        }
    }
}

pub fn augment<R: Rng + ?Sized>(pc: &PointCloud, ops: &Augment, rng: &mut R) -> Result<PointCloud> {
    let mut points = pc.points.clone();
    if ops.rotate_z {
        let (s, c) = rng.random_range(0.0..2.0 * PI).sin_cos();
        for p in &mut points {
            *p = [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]];
        }
    }
    if let Some((lo, hi)) = ops.scale {
        let k = rng.random_range(lo..=hi);
        points.iter_mut().flatten().for_each(|v| *v *= k);
    }
    if let Some(p) = ops.mirror {
        if rng.random_bool(p) {
            points.iter_mut().for_each(|q| q[0] = -q[0]);
        }
    }
    let mut out = PointCloud {
        points,
        features: pc.features.clone(),
    };
    if let Some(p) = ops.delete {
        if !(0.0..1.0).contains(&p) {
            return Err(EccError::contract(format!("deletion probability must be in [0, 1), got {p}")));
        }
        let keep = loop {
            let keep: Vec<usize> = (0..out.len()).filter(|_| !rng.random_bool(p)).collect();
            if !keep.is_empty() {
                break keep;
            }
        };
        out = out.subset(&keep);
    }
    if let Some(sigma) = ops.noise {
        let normal = Normal::new(0.0, sigma).map_err(|e| EccError::Configuration(e.to_string()))?;
        out.points.iter_mut().flatten().for_each(|v| *v += normal.sample(rng));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(points: &[Point]) -> PointCloud {
        PointCloud::new(points.to_vec(), None).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        cloud(&(0..n).map(|_| [r.random(), r.random(), r.random()]).collect::<Vec<_>>())
    }

    #[test]
    fn far_points_only_self_loops() {
        let g = build_graph(&cloud(&[[0.0; 3], [3.0, 0.0, 0.0]]), 2.0, LabelScheme::Full6d).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert!(g.sources().iter().zip(g.targets()).all(|(a, b)| a == b));
    }

    #[test]
    fn hand_label() {
        let g = build_graph(&cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]), 1.5, LabelScheme::Full6d).unwrap();
        // Edge 0 -> 1 carries p_0 - p_1.
        let (_, e) = g.neighborhood(1).unwrap().into_iter().find(|&(j, _)| j == 0).unwrap();
        let l = g.edge_labels().row(e);
        assert_eq!(&l[..4], &[-1.0, 0.0, 0.0, 1.0]);
        assert!((l[4] - PI / 2.0).abs() < 1e-15);
        assert!((l[5] - PI).abs() < 1e-15);
        let (_, s) = g.neighborhood(0).unwrap().into_iter().find(|&(j, _)| j == 0).unwrap();
        assert_eq!(g.edge_labels().row(s), &[0.0; 6]);
    }

    #[test]
    fn closed_ball() {
        let g = build_graph(&cloud(&[[0.0; 3], [0.5, 0.0, 0.0]]), 0.5, LabelScheme::Iso1d).unwrap();
        assert_eq!(g.num_edges(), 4);
    }

    #[test]
    fn radius_graph_matches_all_pairs() {
        let pc = random_cloud(200, 1);
        let g = build_graph(&pc, 0.2, LabelScheme::Cartesian3d).unwrap();
        let mut expect = Vec::new();
        for i in 0..200 {
            for j in 0..200 {
                let d = dist(&pc.points[j], &pc.points[i]);
                if i == j || (d > 0.0 && d <= 0.2) {
                    expect.push((j, i));
                }
            }
        }
        expect.sort_by_key(|&(j, i)| (i, j));
        let got: Vec<(usize, usize)> = g.sources().iter().copied().zip(g.targets().iter().copied()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn bad_radius() {
        assert!(build_graph(&random_cloud(3, 0), 0.0, LabelScheme::Full6d).is_err());
        assert!(voxelgrid(&random_cloud(3, 0), -1.0).is_err());
    }

    #[test]
    fn voxel_examples() {
        let one = voxelgrid(&cloud(&[[0.1, 0.2, 0.3], [0.2, 0.3, 0.1]]), 1.0).unwrap();
        assert_eq!(one.cloud.len(), 1);
        let two = voxelgrid(&cloud(&[[0.05, 0.0, 0.0], [0.15, 0.0, 0.0]]), 0.1).unwrap();
        assert_eq!(two.cloud.points(), &[[0.05, 0.0, 0.0], [0.15, 0.0, 0.0]]);
    }

    #[test]
    fn voxel_features_averaged() {
        let f = Tensor::new(&[2, 1], vec![2.0, 4.0]).unwrap();
        let pc = PointCloud::new(vec![[0.1; 3], [0.2; 3]], Some(f)).unwrap();
        let v = voxelgrid(&pc, 1.0).unwrap();
        assert_eq!(v.cloud.features().unwrap().data(), &[3.0]);
    }

    #[test]
    fn scheme_widths() {
        let w: Vec<usize> = LabelScheme::ALL.iter().map(|s| s.width()).collect();
        assert_eq!(w, vec![6, 3, 3, 4, 2, 2, 1, 1]);
        for s in LabelScheme::ALL {
            let mut out = Vec::new();
            s.label([0.3, -0.2, 0.5], &mut out);
            assert_eq!(out.len(), s.width());
            assert_eq!(s.name().parse::<LabelScheme>().unwrap(), s);
        }
    }

    #[test]
    fn single_point_pyramid() {
        let (p, _) = build_pyramid(&cloud(&[[0.3; 3]]), &[(0.1, 0.2), (0.5, 1.0)], LabelScheme::Full6d).unwrap();
        assert_eq!(p.depth(), 1);
        assert_eq!(p.maps()[0], PoolingMap::identity(1));
    }

    #[test]
    fn non_increasing_levels_rejected() {
        let r = build_pyramid(&random_cloud(5, 2), &[(0.2, 0.4), (0.2, 0.6)], LabelScheme::Full6d);
        assert!(matches!(r, Err(EccError::Configuration(_))));
    }

    #[test]
    fn nearest_map_matches_scan() {
        let pc = random_cloud(300, 3);
        let coarse = voxelgrid(&pc, 0.3).unwrap().cloud;
        let map = nearest_point_map(&pc.points, &coarse.points, 0.3);
        for (i, p) in pc.points.iter().enumerate() {
            let mut best = 0;
            for j in 1..coarse.len() {
                if sq_dist(p, &coarse.points[j]) < sq_dist(p, &coarse.points[best]) {
                    best = j;
                }
            }
            assert_eq!(map[i], best);
        }
    }

    #[test]
    fn rotation_preserves_distances() {
        let pc = random_cloud(20, 4);
        let ops = Augment {
            rotate_z: true,
            ..Augment::NONE
        };
        let out = augment(&pc, &ops, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert!((dist(&pc.points[i], &pc.points[j]) - dist(&out.points[i], &out.points[j])).abs() < 1e-12);
            }
        }
        assert_eq!(augment(&pc, &Augment::NONE, &mut ChaCha8Rng::seed_from_u64(9)).unwrap(), pc);
    }

    #[test]
    fn deletion_rate() {
        let pc = cloud(&vec![[0.0; 3]; 100_000]);
        let ops = Augment {
            delete: Some(0.3),
            ..Augment::NONE
        };
        let out = augment(&pc, &ops, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let removed = 1.0 - out.len() as f64 / 1e5;
        assert!((removed - 0.3).abs() < 0.01);
    }

    #[test]
    fn heavy_deletion_never_empties() {
        let pc = cloud(&[[0.0; 3]; 2]);
        let ops = Augment {
            delete: Some(0.9),
            ..Augment::NONE
        };
        let mut r = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            assert!(!augment(&pc, &ops, &mut r).unwrap().is_empty());
        }
    }

    #[test]
    fn invariant_schemes_ignore_z_rotation() {
        let pc = random_cloud(60, 6);
        let ops = Augment {
            rotate_z: true,
            ..Augment::NONE
        };
        let rot = augment(&pc, &ops, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for s in LabelScheme::ALL.into_iter().filter(|s| s.rotation_invariant_z()) {
            let a = build_graph(&pc, 0.3, s).unwrap();
            let b = build_graph(&rot, 0.3, s).unwrap();
            // Rotation can move pairs across the radius boundary only by rounding.
            assert_eq!(a.num_edges(), b.num_edges());
            assert!(a.edge_labels().max_abs_diff(b.edge_labels()) < 1e-9);
        }
    }
}
