//! Synthetic surface clouds (sphere shells, tori and plane patches) used as
//! a small stand-in dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{partition_octree, select_densest_blocks, PointCloud, VoxelBlock};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Torus with its symmetry axis along `axis`.
    Torus { center: [f64; 3], major: f64, minor: f64, axis: usize },
    /// Square patch of the plane through `center` with unit `normal`.
    Plane { center: [f64; 3], normal: [f64; 3], half_extent: f64 },
}

impl Shape {
    /// Signed-ish distance from the surface; a voxel is on the surface when
    /// its magnitude is at most one half.
    fn distance(&self, p: [f64; 3]) -> f64 {
        match *self {
            Shape::Sphere { center, radius } => norm(sub(p, center)) - radius,
            Shape::Torus { center, major, minor, axis } => {
                let d = sub(p, center);
                let h = d[axis];
                let r = (0..3).filter(|&a| a != axis).map(|a| d[a] * d[a]).sum::<f64>().sqrt();
                ((r - major).powi(2) + h * h).sqrt() - minor
            }
            Shape::Plane { center, normal, half_extent } => {
                let d = sub(p, center);
                let along = dot(d, normal);
                let inplane = sub(d, normal.map(|n| n * along));
                if inplane.iter().any(|v| v.abs() > half_extent) {
                    f64::INFINITY
                } else {
                    along
                }
            }
        }
    }

    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let (c, r) = match *self {
            Shape::Sphere { center, radius } => (center, radius),
            Shape::Torus { center, major, minor, .. } => (center, major + minor),
            Shape::Plane { center, half_extent, .. } => (center, half_extent * 3f64.sqrt()),
        };
        (c.map(|v| v - r - 1.0), c.map(|v| v + r + 1.0))
    }

    fn random<R: Rng>(rng: &mut R, resolution: u32) -> Shape {
        let n = resolution as f64;
        let center = [0; 3].map(|_| rng.gen_range(0.2 * n..0.8 * n));
        match rng.gen_range(0..3) {
            0 => Shape::Sphere { center, radius: rng.gen_range(0.1 * n..0.35 * n) },
            1 => {
                let major = rng.gen_range(0.12 * n..0.3 * n);
                Shape::Torus { center, major, minor: rng.gen_range(0.04 * n..0.1 * n).min(0.8 * major), axis: rng.gen_range(0..3) }
            }
            _ => {
                let v = [0; 3].map(|_| rng.gen_range(-1.0..1.0f64));
                let len = norm(v).max(1e-3);
                Shape::Plane { center, normal: v.map(|x| x / len), half_extent: rng.gen_range(0.15 * n..0.4 * n) }
            }
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Rasterizes the surfaces of `shapes` to voxels inside the grid.
pub fn rasterize(shapes: &[Shape], resolution: u32) -> Result<PointCloud> {
    let top = resolution as i64 - 1;
    let mut pts = Vec::new();
    for s in shapes {
        let (lo, hi) = s.bounds();
        let lo = lo.map(|v| (v.floor() as i64).clamp(0, top));
        let hi = hi.map(|v| (v.ceil() as i64).clamp(0, top));
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if s.distance([x as f64, y as f64, z as f64]).abs() <= 0.5 {
                        pts.push([x as u32, y as u32, z as u32]);
                    }
                }
            }
        }
    }
    if pts.is_empty() {
        return Err(Error::Invalid("synthetic shapes produced no voxels".into()));
    }
    PointCloud::new(pts, resolution)
}

/// A cloud of `shapes` random surfaces, deterministic given `seed`.
pub fn synthetic_cloud(resolution: u32, shapes: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let list: Vec<Shape> = (0..shapes.max(1)).map(|_| Shape::random(&mut rng, resolution)).collect();
    rasterize(&list, resolution)
}

/// The `count` densest blocks cut from synthetic clouds at resolution
/// `4 * block_size`.
pub fn synthetic_blocks(count: usize, block_size: usize, seed: u64) -> Result<Vec<VoxelBlock>> {
    let resolution = (4 * block_size) as u32;
    let mut candidates = Vec::new();
    let mut i = 0u64;
    while candidates.len() < 2 * count.max(1) {
        let cloud = synthetic_cloud(resolution, 3, seed.wrapping_add(i))?;
        let (_, mut blocks) = partition_octree(&cloud, block_size)?;
        for b in &mut blocks {
            b.origin = [0; 3];
        }
        candidates.extend(blocks);
        i += 1;
    }
    Ok(select_densest_blocks(candidates, count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_shell_is_thin_and_nonempty() {
        let c = rasterize(&[Shape::Sphere { center: [16.0; 3], radius: 8.0 }], 32).unwrap();
        assert!(c.len() > 300);
        for p in c.points() {
            let d = norm(sub(p.map(|v| v as f64), [16.0; 3]));
            assert!((d - 8.0).abs() <= 0.5);
        }
    }

    #[test]
    fn blocks_are_deterministic_and_sorted() {
        let a = synthetic_blocks(6, 8, 5).unwrap();
        assert_eq!(a, synthetic_blocks(6, 8, 5).unwrap());
        assert_eq!(a.len(), 6);
        assert!(a.windows(2).all(|w| w[0].point_count() >= w[1].point_count()));
        assert!(a[5].point_count() > 0);
    }
}
