//! Integer point clouds, occupancy blocks, the block octree, mesh sampling
//! and voxelization.

pub mod archive;
pub mod mesh;
pub mod octree;
pub mod ply;
pub mod synthetic;

pub use archive::{read_block_archive, write_block_archive};
pub use mesh::{load_off, parse_off, sample_mesh_surface, Mesh};
pub use octree::{partition_octree, reassemble, Octree};
pub use ply::{load_point_cloud, parse_ply, write_ply, PlyFormat};

use crate::error::{Error, Result};

/// Integer-coordinate geometry on a `resolution^3` grid. Points are kept
/// sorted in x-major order and free of duplicates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PointCloud {
    points: Vec<[u32; 3]>,
    resolution: u32,
}

impl PointCloud {
    /// Validates the range, then sorts and deduplicates.
    pub fn new(mut points: Vec<[u32; 3]>, resolution: u32) -> Result<Self> {
        if !resolution.is_power_of_two() {
            return Err(Error::Invalid(format!("resolution {resolution} is not a power of two")));
        }
        if let Some(p) = points.iter().find(|p| p.iter().any(|&c| c >= resolution)) {
            return Err(Error::OutOfRange { coord: p.map(|c| c as i64), resolution });
        }
        points.sort_unstable();
        points.dedup();
        Ok(PointCloud { points, resolution })
    }

    pub fn points(&self) -> &[[u32; 3]] {
        &self.points
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Peak value `p = resolution - 1` used by the PSNR metrics.
    pub fn peak(&self) -> f64 {
        (self.resolution - 1) as f64
    }

    pub fn as_f64(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| p.map(|c| c as f64)).collect()
    }
}

/// Dense binary occupancy of one `block_size^3` cube, x-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelBlock {
    pub origin: [u32; 3],
    pub block_size: usize,
    pub occupancy: Vec<u8>,
}

impl VoxelBlock {
    pub fn empty(origin: [u32; 3], block_size: usize) -> Self {
        VoxelBlock { origin, block_size, occupancy: vec![0; block_size.pow(3)] }
    }

    pub fn from_occupancy(origin: [u32; 3], block_size: usize, occupancy: Vec<u8>) -> Result<Self> {
        if occupancy.len() != block_size.pow(3) {
            return Err(Error::Shape(format!(
                "{} occupancy values for block size {block_size}",
                occupancy.len()
            )));
        }
        if occupancy.iter().any(|&v| v > 1) {
            return Err(Error::Invalid("occupancy values must be 0 or 1".into()));
        }
        Ok(VoxelBlock { origin, block_size, occupancy })
    }

    #[inline]
    pub fn index(&self, local: [usize; 3]) -> usize {
        (local[0] * self.block_size + local[1]) * self.block_size + local[2]
    }

    pub fn local_coords(&self, index: usize) -> [usize; 3] {
        let b = self.block_size;
        [index / (b * b), (index / b) % b, index % b]
    }

    pub fn set(&mut self, local: [usize; 3]) {
        let i = self.index(local);
        self.occupancy[i] = 1;
    }

    pub fn point_count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v == 1).count()
    }

    /// Occupied voxels in global coordinates, x-major order.
    pub fn global_points(&self) -> Vec<[u32; 3]> {
        self.occupancy
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(i, _)| {
                let l = self.local_coords(i);
                [0, 1, 2].map(|a| self.origin[a] + l[a] as u32)
            })
            .collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.occupancy.iter().map(|&v| v as f64).collect()
    }
}

/// Sets exactly `k` voxels: the `k` largest probabilities, ties broken by
/// ascending linear index.
pub fn threshold_topk(probabilities: &[f64], k: usize) -> Result<Vec<u8>> {
    if k > probabilities.len() {
        return Err(Error::Invalid(format!("k = {k} exceeds {} voxels", probabilities.len())));
    }
    let mut out = vec![0u8; probabilities.len()];
    if k == 0 {
        return Ok(out);
    }
    let mut order: Vec<usize> = (0..probabilities.len()).collect();
    let cmp = |a: &usize, b: &usize| probabilities[*b].total_cmp(&probabilities[*a]).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
    }
    for &i in &order[..k] {
        out[i] = 1;
    }
    Ok(out)
}

/// Scales real points from their bounding cube (anchored at the minimum
/// corner, longest axis mapped onto `[0, resolution - 1]`), floors and
/// deduplicates.
pub fn voxelize(points: &[[f64; 3]], resolution: u32) -> Result<PointCloud> {
    if points.is_empty() {
        return Err(Error::Invalid("cannot voxelize an empty point set".into()));
    }
    if !resolution.is_power_of_two() {
        return Err(Error::Invalid(format!("resolution {resolution} is not a power of two")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("voxelize input".into()));
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if extent <= 0.0 {
        return Err(Error::Invalid("degenerate bounding box".into()));
    }
    let top = (resolution - 1) as f64;
    let scale = top / extent;
    let q = points
        .iter()
        .map(|p| [0, 1, 2].map(|a| ((p[a] - lo[a]) * scale + 1e-9).floor().clamp(0.0, top) as u32))
        .collect();
    PointCloud::new(q, resolution)
}

/// Keeps the `keep` blocks with the most points, in descending point-count
/// order (stable with respect to input order on ties).
pub fn select_densest_blocks(mut blocks: Vec<VoxelBlock>, keep: usize) -> Vec<VoxelBlock> {
    let mut counts: Vec<(usize, usize)> = blocks.iter().map(|b| b.point_count()).enumerate().collect();
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    counts.truncate(keep);
    let mut slots: Vec<Option<VoxelBlock>> = blocks.drain(..).map(Some).collect();
    counts.iter().map(|&(i, _)| slots[i].take().expect("indices are unique")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_dedups_and_checks_range() {
        let c = PointCloud::new(vec![[1, 1, 1], [0, 0, 0], [1, 1, 1]], 64).unwrap();
        assert_eq!(c.points(), &[[0, 0, 0], [1, 1, 1]]);
        assert!(matches!(PointCloud::new(vec![[64, 0, 0]], 64), Err(Error::OutOfRange { .. })));
        assert!(PointCloud::new(vec![], 48).is_err());
    }

    #[test]
    fn topk_tie_break_and_edges() {
        assert_eq!(threshold_topk(&[0.9, 0.8, 0.8, 0.1], 2).unwrap(), vec![1, 1, 0, 0]);
        assert_eq!(threshold_topk(&[0.9, 0.8, 0.8, 0.1], 0).unwrap(), vec![0; 4]);
        assert_eq!(threshold_topk(&[0.5, 0.5, 0.5], 1).unwrap(), vec![1, 0, 0]);
        assert_eq!(threshold_topk(&[0.0, 0.3, 0.0, 0.2], 2).unwrap(), vec![0, 1, 0, 1]);
        assert_eq!(threshold_topk(&[0.1, 0.2], 2).unwrap(), vec![1, 1]);
        assert!(threshold_topk(&[0.1], 2).is_err());
    }

    #[test]
    fn voxelize_corner_anchored() {
        let c = voxelize(&[[0.0; 3], [1.0; 3]], 8).unwrap();
        assert_eq!(c.points(), &[[0, 0, 0], [7, 7, 7]]);
        let c = voxelize(&[[2.0, 5.0, 1.0], [4.0, 5.0, 1.0]], 4).unwrap();
        assert_eq!(c.points(), &[[0, 0, 0], [3, 0, 0]]);
        assert!(voxelize(&[[1.0; 3], [1.0; 3]], 8).is_err());
        assert!(voxelize(&[], 8).is_err());
    }

    #[test]
    fn block_coordinates_round_trip() {
        let mut b = VoxelBlock::empty([64, 0, 0], 4);
        b.set([1, 2, 3]);
        assert_eq!(b.local_coords(b.index([1, 2, 3])), [1, 2, 3]);
        assert_eq!(b.global_points(), vec![[65, 2, 3]]);
        assert_eq!(b.point_count(), 1);
    }

    #[test]
    fn densest_selection_is_stable() {
        let mk = |n: usize| {
            let mut b = VoxelBlock::empty([0; 3], 2);
            b.occupancy[..n].iter_mut().for_each(|v| *v = 1);
            b
        };
        let out = select_densest_blocks(vec![mk(1), mk(3), mk(2), mk(3)], 3);
        assert_eq!(out.iter().map(|b| b.point_count()).collect::<Vec<_>>(), vec![3, 3, 2]);
    }
}
