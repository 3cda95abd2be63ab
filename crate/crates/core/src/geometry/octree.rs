//! Breadth-first octree over non-empty blocks.
//!
//! Each internal node emits one byte whose bit `i` marks child
//! `i = 4*dx + 2*dy + dz` (dx, dy, dz in {0, 1}) as occupied. Nodes at the
//! last level are blocks; they appear in breadth-first leaf order. Depth 0
//! means the whole grid is one block and no bytes are emitted.

use std::collections::{BTreeMap, HashSet};

use super::{PointCloud, VoxelBlock};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Octree {
    pub depth: u32,
    pub occupancy_bytes: Vec<u8>,
}

fn child_offset(bit: u32) -> [u32; 3] {
    [(bit >> 2) & 1, (bit >> 1) & 1, bit & 1]
}

impl Octree {
    /// Block indices (origin / block_size) of every occupied leaf, in
    /// breadth-first order, decoded from the bytes alone.
    pub fn leaf_cells(&self) -> Result<Vec<[u32; 3]>> {
        let mut level = vec![[0u32; 3]];
        let mut cursor = 0usize;
        for _ in 0..self.depth {
            let mut next = Vec::new();
            for node in &level {
                let mask = *self
                    .occupancy_bytes
                    .get(cursor)
                    .ok_or_else(|| Error::Structure("octree bytes truncated".into()))?;
                cursor += 1;
                if mask == 0 {
                    return Err(Error::Structure("octree node with no occupied child".into()));
                }
                for bit in 0..8 {
                    if mask & (1 << bit) != 0 {
                        let o = child_offset(bit);
                        next.push([0, 1, 2].map(|a| node[a] * 2 + o[a]));
                    }
                }
            }
            level = next;
        }
        if cursor != self.occupancy_bytes.len() {
            return Err(Error::Structure(format!(
                "{} unused octree bytes",
                self.occupancy_bytes.len() - cursor
            )));
        }
        Ok(level)
    }

    pub fn block_origins(&self, block_size: usize) -> Result<Vec<[u32; 3]>> {
        Ok(self.leaf_cells()?.into_iter().map(|c| c.map(|v| v * block_size as u32)).collect())
    }

    pub fn resolution(&self, block_size: usize) -> u32 {
        (block_size as u32) << self.depth
    }
}

/// Splits a cloud into one block per non-empty cell, plus the octree
/// locating them. Blocks follow breadth-first leaf order.
pub fn partition_octree(cloud: &PointCloud, block_size: usize) -> Result<(Octree, Vec<VoxelBlock>)> {
    if cloud.is_empty() {
        return Err(Error::Invalid("cannot partition an empty cloud".into()));
    }
    let res = cloud.resolution() as usize;
    if !block_size.is_power_of_two() || block_size > res {
        return Err(Error::Invalid(format!("block size {block_size} does not divide resolution {res}")));
    }
    let depth = (res / block_size).trailing_zeros();
    let bs = block_size as u32;
    let mut cells: BTreeMap<[u32; 3], Vec<[u32; 3]>> = BTreeMap::new();
    for p in cloud.points() {
        cells.entry(p.map(|c| c / bs)).or_default().push(*p);
    }
    // Occupied prefixes per level, level 0 = root.
    let prefixes: Vec<HashSet<[u32; 3]>> =
        (0..=depth).map(|l| cells.keys().map(|c| c.map(|v| v >> (depth - l))).collect()).collect();
    let mut bytes = Vec::new();
    let mut level = vec![[0u32; 3]];
    for l in 0..depth as usize {
        let mut next = Vec::new();
        for node in &level {
            let mut mask = 0u8;
            for bit in 0..8 {
                let o = child_offset(bit);
                let child = [0, 1, 2].map(|a| node[a] * 2 + o[a]);
                if prefixes[l + 1].contains(&child) {
                    mask |= 1 << bit;
                    next.push(child);
                }
            }
            bytes.push(mask);
        }
        level = next;
    }
    let blocks = level
        .iter()
        .map(|cell| {
            let origin = cell.map(|v| v * bs);
            let mut b = VoxelBlock::empty(origin, block_size);
            for p in &cells[cell] {
                b.set([0, 1, 2].map(|a| (p[a] - origin[a]) as usize));
            }
            b
        })
        .collect();
    Ok((Octree { depth, occupancy_bytes: bytes }, blocks))
}

/// Union of block points at the origins the octree assigns them.
pub fn reassemble(octree: &Octree, blocks: &[VoxelBlock]) -> Result<PointCloud> {
    let block_size = blocks.first().map(|b| b.block_size).unwrap_or(1);
    let origins = octree.block_origins(block_size)?;
    if origins.len() != blocks.len() {
        return Err(Error::Structure(format!(
            "octree has {} occupied leaves but {} blocks were given",
            origins.len(),
            blocks.len()
        )));
    }
    let mut points = Vec::new();
    for (b, o) in blocks.iter().zip(&origins) {
        if b.block_size != block_size || b.origin != *o {
            return Err(Error::Structure(format!("block at {:?} does not match octree leaf {:?}", b.origin, o)));
        }
        points.extend(b.global_points());
    }
    PointCloud::new(points, octree.resolution(block_size))
}
