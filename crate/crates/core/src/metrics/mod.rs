//! Geometry distortion metrics (D1 point-to-point, D2 point-to-plane) and
//! Bjøntegaard deltas.

pub mod bd;
pub mod kdtree;

pub use bd::{bd_psnr, bd_rate, RdCurve};
pub use kdtree::KdTree;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Neighbours used for normal estimation.
pub const NORMAL_NEIGHBORS: usize = 12;
/// PSNR numerator is `PEAK_FACTOR * p^2`.
pub const PEAK_FACTOR: f64 = 3.0;

/// Per-point unit normals of a reference cloud, in the cloud's point order.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalField {
    pub normals: Vec<[f64; 3]>,
}

/// Nearest point of `cloud` to `query` and its squared distance; ties go to
/// the smallest index in the cloud's point order.
pub fn nearest_neighbor(query: [f64; 3], cloud: &PointCloud) -> Result<([u32; 3], f64)> {
    let tree = KdTree::new(cloud.as_f64());
    let (i, d2) = tree.nearest(&query).ok_or_else(|| Error::Invalid("nearest neighbour in an empty cloud".into()))?;
    Ok((cloud.points()[i], d2))
}

/// Smallest-eigenvalue eigenvector of the covariance of each point and its
/// `k` nearest other points.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<NormalField> {
    if cloud.len() < k + 1 {
        return Err(Error::Invalid(format!("normals with k={k} need at least {} points, got {}", k + 1, cloud.len())));
    }
    let pts = cloud.as_f64();
    let tree = KdTree::new(pts.clone());
    let normals = pts
        .par_iter()
        .map(|p| {
            let nbrs = tree.knn(p, k + 1);
            let n = nbrs.len() as f64;
            let mean = nbrs.iter().fold(Vector3::zeros(), |m, &(i, _)| m + Vector3::from(pts[i])) / n;
            let cov = nbrs.iter().fold(Matrix3::zeros(), |c, &(i, _)| {
                let d = Vector3::from(pts[i]) - mean;
                c + d * d.transpose()
            }) / n;
            let eig = SymmetricEigen::new(cov);
            let j = eig.eigenvalues.imin();
            let v = eig.eigenvectors.column(j).normalize();
            [v[0], v[1], v[2]]
        })
        .collect();
    Ok(NormalField { normals })
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + c
}

/// Mean squared distance from each point of `from` to its nearest point in
/// `to`, optionally projected onto the normal of that nearest point.
fn directional_mse(from: &[[f64; 3]], to: &KdTree, to_normals: Option<&NormalField>) -> f64 {
    let errs: Vec<f64> = from
        .par_iter()
        .map(|q| {
            let (i, d2) = to.nearest(q).expect("reference cloud is nonempty");
            match to_normals {
                None => d2,
                Some(nf) => {
                    let p = &to.points()[i];
                    let n = &nf.normals[i];
                    (0..3).map(|a| (q[a] - p[a]) * n[a]).sum::<f64>().powi(2)
                }
            }
        })
        .collect();
    compensated_sum(errs) / from.len() as f64
}

/// `10 log10(3 p^2 / d)`, or `+inf` when `d = 0`.
pub fn psnr(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK_FACTOR * peak * peak / mse).log10()
    }
}

fn check_nonempty(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("distortion metrics need nonempty clouds".into()));
    }
    Ok(())
}

/// Symmetric point-to-point error `max(MSE(A→B), MSE(B→A))`.
pub fn d1_mse(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_nonempty(a, b)?;
    let (pa, pb) = (a.as_f64(), b.as_f64());
    let (ta, tb) = (KdTree::new(pa.clone()), KdTree::new(pb.clone()));
    Ok(directional_mse(&pa, &tb, None).max(directional_mse(&pb, &ta, None)))
}

pub fn d1_psnr(a: &PointCloud, b: &PointCloud, peak: f64) -> Result<f64> {
    Ok(psnr(d1_mse(a, b)?, peak))
}

/// Symmetric point-to-plane error. Each directional term projects onto the
/// normal of the nearest point on its reference side.
pub fn d2_mse(a: &PointCloud, b: &PointCloud, normals_a: &NormalField, normals_b: &NormalField) -> Result<f64> {
    check_nonempty(a, b)?;
    if normals_a.normals.len() != a.len() || normals_b.normals.len() != b.len() {
        return Err(Error::Invalid("normal field does not cover its cloud".into()));
    }
    let (pa, pb) = (a.as_f64(), b.as_f64());
    let (ta, tb) = (KdTree::new(pa.clone()), KdTree::new(pb.clone()));
    Ok(directional_mse(&pb, &ta, Some(normals_a)).max(directional_mse(&pa, &tb, Some(normals_b))))
}

pub fn d2_psnr(a: &PointCloud, b: &PointCloud, normals_a: &NormalField, normals_b: &NormalField, peak: f64) -> Result<f64> {
    Ok(psnr(d2_mse(a, b, normals_a, normals_b)?, peak))
}

/// D1 and D2 PSNR with normals estimated on both clouds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub d1_mse: f64,
    pub d2_mse: f64,
    pub d1_psnr: f64,
    pub d2_psnr: f64,
    pub peak: f64,
    pub peak_factor: f64,
    pub normal_neighbors: usize,
}

pub fn distortion(reference: &PointCloud, reconstruction: &PointCloud, peak: f64) -> Result<DistortionReport> {
    let k = NORMAL_NEIGHBORS;
    let d1 = d1_mse(reference, reconstruction)?;
    // Clouds too small for k-NN normals fall back to fewer neighbours.
    let normals = |c: &PointCloud| estimate_normals(c, k.min(c.len().saturating_sub(1)).max(1));
    let d2 = if reference.len() >= 2 && reconstruction.len() >= 2 {
        d2_mse(reference, reconstruction, &normals(reference)?, &normals(reconstruction)?)?
    } else {
        d1
    };
    Ok(DistortionReport {
        d1_mse: d1,
        d2_mse: d2,
        d1_psnr: psnr(d1, peak),
        d2_psnr: psnr(d2, peak),
        peak,
        peak_factor: PEAK_FACTOR,
        normal_neighbors: k,
    })
}
