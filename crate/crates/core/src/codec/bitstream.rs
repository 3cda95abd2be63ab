//! Bitstream container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes "PCGB"
//! version      u8      1
//! resolution   u32     grid side of the coded cloud
//! block_size   u32
//! variant id   u8      architecture variant of the checkpoint
//! lambda id    u64     content id of the checkpoint (first 8 bytes of its SHA-256)
//! block count  u32
//! octree depth u8
//! octree len   u32, octree occupancy bytes (breadth-first)
//! block count x {
//!     point_count u32
//!     z-stream    [u32 length][u32 crc32][range-coded payload]
//!     y-stream    [u32 length][u32 crc32][range-coded payload]
//! }
//! ```

use crate::entropy::{read_stream, write_stream};
use crate::error::{Error, Result};
use crate::geometry::octree::Octree;

pub const BITSTREAM_MAGIC: &[u8; 4] = b"PCGB";
pub const BITSTREAM_VERSION: u8 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub resolution: u32,
    pub block_size: u32,
    pub variant_id: u8,
    pub lambda_id: u64,
    pub block_count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockRecord {
    pub point_count: u32,
    pub z_stream: Vec<u8>,
    pub y_stream: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    pub octree: Octree,
    pub blocks: Vec<BlockRecord>,
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Corrupt("bitstream truncated".into()));
        }
        let (a, b) = self.bytes.split_at(n);
        self.bytes = b;
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn stream(&mut self) -> Result<Vec<u8>> {
        let (payload, rest) = read_stream(self.bytes)?;
        self.bytes = rest;
        Ok(payload.to_vec())
    }
}

impl Bitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut out = Vec::new();
        out.extend_from_slice(BITSTREAM_MAGIC);
        out.push(BITSTREAM_VERSION);
        out.extend_from_slice(&h.resolution.to_le_bytes());
        out.extend_from_slice(&h.block_size.to_le_bytes());
        out.push(h.variant_id);
        out.extend_from_slice(&h.lambda_id.to_le_bytes());
        out.extend_from_slice(&h.block_count.to_le_bytes());
        out.push(self.octree.depth as u8);
        out.extend_from_slice(&(self.octree.occupancy_bytes.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.octree.occupancy_bytes);
        for b in &self.blocks {
            out.extend_from_slice(&b.point_count.to_le_bytes());
            write_stream(&b.z_stream, &mut out);
            write_stream(&b.y_stream, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        if r.take(4)? != BITSTREAM_MAGIC {
            return Err(Error::Corrupt("not a PCGB bitstream".into()));
        }
        let version = r.u8()?;
        if version != BITSTREAM_VERSION {
            return Err(Error::Corrupt(format!("unsupported bitstream version {version}")));
        }
        let header = Header {
            resolution: r.u32()?,
            block_size: r.u32()?,
            variant_id: r.u8()?,
            lambda_id: r.u64()?,
            block_count: r.u32()?,
        };
        let depth = r.u8()? as u32;
        let len = r.u32()? as usize;
        let octree = Octree { depth, occupancy_bytes: r.take(len)?.to_vec() };
        if header.block_size.checked_shl(depth) != Some(header.resolution) {
            return Err(Error::Corrupt(format!(
                "octree depth {depth} with block size {} does not give resolution {}",
                header.block_size, header.resolution
            )));
        }
        let mut blocks = Vec::with_capacity(header.block_count.min(1 << 20) as usize);
        for _ in 0..header.block_count {
            let point_count = r.u32()?;
            let z_stream = r.stream()?;
            let y_stream = r.stream()?;
            blocks.push(BlockRecord { point_count, z_stream, y_stream });
        }
        if !r.bytes.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing bytes after the last block", r.bytes.len())));
        }
        Ok(Bitstream { header, octree, blocks })
    }

    pub fn total_points(&self) -> u64 {
        self.blocks.iter().map(|b| b.point_count as u64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Bitstream {
        Bitstream {
            header: Header { resolution: 64, block_size: 16, variant_id: 2, lambda_id: 0xdead_beef, block_count: 2 },
            octree: Octree { depth: 2, occupancy_bytes: vec![0b1000_0001, 0b1, 0b1000_0000] },
            blocks: vec![
                BlockRecord { point_count: 5, z_stream: vec![1, 2], y_stream: vec![3] },
                BlockRecord { point_count: 9, z_stream: vec![], y_stream: vec![4, 5, 6] },
            ],
        }
    }

    #[test]
    fn round_trip_and_layout() {
        let b = sample();
        let bytes = b.to_bytes();
        assert_eq!(&bytes[..5], b"PCGB\x01");
        assert_eq!(Bitstream::from_bytes(&bytes).unwrap(), b);
        assert_eq!(b.total_points(), 14);
    }

    #[test]
    fn rejects_truncation_and_corruption() {
        let bytes = sample().to_bytes();
        for cut in [3, 20, bytes.len() - 1] {
            assert!(Bitstream::from_bytes(&bytes[..cut]).is_err());
        }
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0xff;
        assert!(matches!(Bitstream::from_bytes(&bad), Err(Error::Corrupt(_))));
    }
}
