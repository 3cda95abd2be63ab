//! Triangle meshes: OFF ingestion and area-weighted surface sampling.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl Mesh {
    /// Checks face indices and drops zero-area faces.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= vertices.len())) {
            return Err(Error::Invalid(format!("face {f:?} indexes past {} vertices", vertices.len())));
        }
        let faces = faces
            .into_iter()
            .filter(|f| {
                let a = f.map(|i| vertices[i]);
                cross(sub(a[1], a[0]), sub(a[2], a[0])).iter().any(|v| *v != 0.0)
            })
            .collect();
        Ok(Mesh { vertices, faces })
    }

    fn triangle(&self, f: [usize; 3]) -> [[f64; 3]; 3] {
        f.map(|i| self.vertices[i])
    }

    pub fn face_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangle(self.faces[i]);
        let n = cross(sub(b, a), sub(c, a));
        0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
    }
}

/// Parses the OFF format; polygons are fan-triangulated.
pub fn parse_off(text: &str) -> Result<Mesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let perr = |line: usize, msg: &str| Error::Parse { line, msg: msg.to_string() };
    let (l0, first) = lines.next().ok_or_else(|| perr(1, "empty OFF file"))?;
    // Some exports glue the counts onto the magic line ("OFF490 518 0").
    let counts_inline = first.strip_prefix("OFF").ok_or_else(|| perr(l0, "missing OFF magic"))?.trim().to_string();
    let (lc, counts) = if counts_inline.is_empty() {
        lines.next().map(|(i, l)| (i, l.to_string())).ok_or_else(|| perr(l0 + 1, "missing counts"))?
    } else {
        (l0, counts_inline)
    };
    let nums: Vec<usize> = counts
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(lc, "bad count")))
        .collect::<Result<_>>()?;
    if nums.len() < 2 {
        return Err(perr(lc, "expected vertex and face counts"));
    }
    let mut vertices = Vec::with_capacity(nums[0]);
    for _ in 0..nums[0] {
        let (i, l) = lines.next().ok_or_else(|| perr(lc, "vertex list truncated"))?;
        let v: Vec<f64> = l
            .split_whitespace()
            .take(3)
            .map(|t| t.parse().map_err(|_| perr(i, "bad vertex coordinate")))
            .collect::<Result<_>>()?;
        if v.len() != 3 {
            return Err(perr(i, "vertex needs three coordinates"));
        }
        vertices.push([v[0], v[1], v[2]]);
    }
    let mut faces = Vec::new();
    for _ in 0..nums[1] {
        let (i, l) = lines.next().ok_or_else(|| perr(lc, "face list truncated"))?;
        let idx: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(i, "bad face index")))
            .collect::<Result<_>>()?;
        let n = *idx.first().ok_or_else(|| perr(i, "empty face"))?;
        if n < 3 || idx.len() < n + 1 {
            return Err(perr(i, "face needs at least three indices"));
        }
        for k in 1..n - 1 {
            faces.push([idx[1], idx[1 + k], idx[2 + k]]);
        }
    }
    Mesh::new(vertices, faces)
}

pub fn load_off(path: &Path) -> Result<Mesh> {
    parse_off(&fs::read_to_string(path)?)
}

/// Draws `n` points uniformly over the surface (area-weighted face choice,
/// uniform barycentric position), deterministic given `seed`.
pub fn sample_mesh_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    if n == 0 || mesh.faces.is_empty() {
        return Err(Error::Invalid("sampling needs n > 0 and a non-empty mesh".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for i in 0..mesh.faces.len() {
        total += mesh.face_area(i);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Invalid("mesh has zero total area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let t = rng.gen::<f64>() * total;
            let f = cumulative.partition_point(|&c| c <= t).min(cumulative.len() - 1);
            let [a, b, c] = mesh.triangle(mesh.faces[f]);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            let (u, v, w) = (1.0 - s, s * (1.0 - r2), s * r2);
            [0, 1, 2].map(|k| u * a[k] + v * b[k] + w * c[k])
        })
        .collect())
}
