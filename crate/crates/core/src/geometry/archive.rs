//! Block archive: a flat file of occupancy blocks.
//!
//! Little-endian layout: magic `PCGCBLKS`, u32 version (1), u32 block size,
//! u32 block count, then per block three u32 origin coordinates, a u32 point
//! count and the occupancy packed eight voxels per byte (x-major, least
//! significant bit first).

use std::io::Read;

use super::VoxelBlock;
use crate::error::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"PCGCBLKS";

pub fn write_block_archive(blocks: &[VoxelBlock], block_size: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(block_size as u32).to_le_bytes());
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for b in blocks {
        if b.block_size != block_size {
            return Err(Error::Shape(format!("block of size {} in a {block_size} archive", b.block_size)));
        }
        for c in b.origin {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&(b.point_count() as u32).to_le_bytes());
        for chunk in b.occupancy.chunks(8) {
            out.push(chunk.iter().enumerate().fold(0u8, |acc, (i, &v)| acc | (v << i)));
        }
    }
    Ok(out)
}

fn u32_at(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Corrupt("block archive truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_block_archive(mut bytes: &[u8]) -> Result<(usize, Vec<VoxelBlock>)> {
    let r = &mut bytes;
    if r.len() < 8 || &r[..8] != ARCHIVE_MAGIC {
        return Err(Error::Corrupt("not a block archive".into()));
    }
    *r = &r[8..];
    if u32_at(r)? != 1 {
        return Err(Error::Corrupt("unsupported block archive version".into()));
    }
    let bs = u32_at(r)? as usize;
    let count = u32_at(r)? as usize;
    let nbytes = bs.pow(3).div_ceil(8);
    let mut blocks = Vec::with_capacity(count);
    for _ in 0..count {
        let origin = [u32_at(r)?, u32_at(r)?, u32_at(r)?];
        let expected = u32_at(r)? as usize;
        if r.len() < nbytes {
            return Err(Error::Corrupt("block archive truncated".into()));
        }
        let occupancy = (0..bs.pow(3)).map(|i| (r[i / 8] >> (i % 8)) & 1).collect();
        *r = &r[nbytes..];
        let b = VoxelBlock::from_occupancy(origin, bs, occupancy)?;
        if b.point_count() != expected {
            return Err(Error::Corrupt("block point count does not match occupancy".into()));
        }
        blocks.push(b);
    }
    if !r.is_empty() {
        return Err(Error::Corrupt("trailing bytes after block archive".into()));
    }
    Ok((bs, blocks))
}
