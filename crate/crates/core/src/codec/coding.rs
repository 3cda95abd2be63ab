//! Encoding and decoding of whole point clouds with a trained model.

use serde::{Deserialize, Serialize};

use super::bitstream::{Bitstream, BlockRecord, Header};
use super::model::{block_tensor, CompressionModel};
use crate::architecture::ModelConfig;
use crate::entropy::{
    gaussian_bin, gaussian_tables, range_decode, range_encode, scale_bin, CdfTable, LIKELIHOOD_FLOOR,
};
use crate::error::{Error, Result};
use crate::geometry::octree::{partition_octree, reassemble};
use crate::geometry::{threshold_topk, PointCloud, VoxelBlock};
use crate::metrics::{distortion, DistortionReport};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::tensor::{Shape, Tensor};

/// Per-block comparison of the rate estimate with the coded size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub point_count: u32,
    /// `-sum log2 p` of the coded symbols under the continuous models.
    pub estimated_bits: f64,
    pub z_bytes: usize,
    pub y_bytes: usize,
}

impl BlockStats {
    /// Range-coded payload bytes (framing excluded).
    pub fn coded_bytes(&self) -> usize {
        self.z_bytes + self.y_bytes
    }
}

/// A model bound to the checkpoint that identifies its bitstreams.
pub struct Codec {
    pub model: CompressionModel,
    pub lambda_id: u64,
    z_tables: Vec<CdfTable>,
}

impl Codec {
    pub fn new(config: &ModelConfig, checkpoint: &Checkpoint) -> Result<Self> {
        let model = CompressionModel::from_checkpoint(config, checkpoint)?;
        let z_tables = model.prior.cdf_tables()?;
        Ok(Codec { model, lambda_id: checkpoint.content_id(), z_tables })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    fn z_shape(&self) -> Shape {
        Shape::new(self.config().hyper_channels, self.config().hyper_dims())
    }


    fn y_tables(sigma: &Tensor) -> Vec<&'static CdfTable> {
        let tables = gaussian_tables();
        sigma.data().iter().map(|&s| &tables[scale_bin(s)]).collect()
    }

    /// Codes one block; returns its record and statistics.
    pub fn encode_block(&mut self, block: &VoxelBlock) -> Result<(BlockRecord, BlockStats)> {
        let x = block_tensor(block);
        let y = self.model.analysis.forward(&x)?;
        let z = self.model.hyper_analysis.forward(&y)?;
        if !y.all_finite() || !z.all_finite() {
            return Err(Error::NonFinite("latents".into()));
        }
        let per = self.z_shape().voxels();
        let z_refs: Vec<&CdfTable> = (0..z.data().len()).map(|i| &self.z_tables[i / per]).collect();
        let z_sym: Vec<i32> = z.data().iter().zip(&z_refs).map(|(v, t)| t.clamp(v.round() as i32)).collect();
        let z_hat = Tensor::from_vec(z.shape(), z_sym.iter().map(|&s| s as f64).collect())?;
        let sigma = self.model.hyper_synthesis.forward(&z_hat)?;
        let y_refs = Self::y_tables(&sigma);
        let y_sym: Vec<i32> = y.data().iter().zip(&y_refs).map(|(v, t)| t.clamp(v.round() as i32)).collect();
        let z_stream = range_encode(&z_sym, &z_refs)?;
        let y_stream = range_encode(&y_sym, &y_refs)?;

        let z_bits: f64 = self.model.prior.likelihood(&z_hat)?.data().iter().map(|p| -p.log2()).sum();
        let y_bits: f64 = y_sym
            .iter()
            .zip(sigma.data())
            .map(|(&s, &sg)| -gaussian_bin(s as f64, sg).0.max(LIKELIHOOD_FLOOR).log2())
            .sum();
        let point_count = block.point_count() as u32;
        let stats = BlockStats {
            point_count,
            estimated_bits: z_bits + y_bits,
            z_bytes: z_stream.len(),
            y_bytes: y_stream.len(),
        };
        Ok((BlockRecord { point_count, z_stream, y_stream }, stats))
    }

    /// Reconstructs one block's occupancy at `origin`.
    pub fn decode_block(&mut self, record: &BlockRecord, origin: [u32; 3]) -> Result<VoxelBlock> {
        let cfg = self.config().clone();
        let z_shape = self.z_shape();
        let z_refs: Vec<&CdfTable> = (0..z_shape.len()).map(|i| &self.z_tables[i / z_shape.voxels()]).collect();
        let z_sym = range_decode(&record.z_stream, &z_refs)?;
        let z_hat = Tensor::from_vec(z_shape, z_sym.iter().map(|&s| s as f64).collect())?;
        let sigma = self.model.hyper_synthesis.forward(&z_hat)?;
        let y_refs = Self::y_tables(&sigma);
        let y_sym = range_decode(&record.y_stream, &y_refs)?;
        let y_hat = Tensor::from_vec(sigma.shape(), y_sym.iter().map(|&s| s as f64).collect())?;
        let x_hat = self.model.synthesis.forward(&y_hat)?;
        let voxels = cfg.block_size.pow(3);
        if record.point_count as usize > voxels {
            return Err(Error::Corrupt(format!("block claims {} points in {voxels} voxels", record.point_count)));
        }
        let occupancy = threshold_topk(x_hat.data(), record.point_count as usize)?;
        VoxelBlock::from_occupancy(origin, cfg.block_size, occupancy)
    }

    pub fn encode(&mut self, cloud: &PointCloud) -> Result<(Bitstream, Vec<BlockStats>)> {
        let cfg = self.config().clone();
        if (cloud.resolution() as usize) < cfg.block_size {
            return Err(Error::Config(format!(
                "cloud resolution {} is smaller than block size {}",
                cloud.resolution(),
                cfg.block_size
            )));
        }
        let (octree, blocks) = partition_octree(cloud, cfg.block_size)?;
        let mut records = Vec::with_capacity(blocks.len());
        let mut stats = Vec::with_capacity(blocks.len());
        for b in &blocks {
            let (r, s) = self.encode_block(b)?;
            records.push(r);
            stats.push(s);
        }
        let header = Header {
            resolution: cloud.resolution(),
            block_size: cfg.block_size as u32,
            variant_id: cfg.variant.id(),
            lambda_id: self.lambda_id,
            block_count: records.len() as u32,
        };
        Ok((Bitstream { header, octree, blocks: records }, stats))
    }

    pub fn decode(&mut self, stream: &Bitstream) -> Result<PointCloud> {
        let h = &stream.header;
        let cfg = self.config();
        if h.variant_id != cfg.variant.id() || h.block_size as usize != cfg.block_size {
            return Err(Error::Config(format!(
                "bitstream was coded with variant id {} and block size {}, model is {} with block size {}",
                h.variant_id,
                h.block_size,
                cfg.variant.name(),
                cfg.block_size
            )));
        }
        if h.lambda_id != self.lambda_id {
            return Err(Error::Config(format!(
                "bitstream references checkpoint {:016x}, loaded checkpoint is {:016x}",
                h.lambda_id, self.lambda_id
            )));
        }
        let origins = stream.octree.block_origins(cfg.block_size)?;
        if origins.len() != stream.blocks.len() {
            return Err(Error::Structure(format!(
                "octree has {} leaves but the stream has {} blocks",
                origins.len(),
                stream.blocks.len()
            )));
        }
        let mut blocks = Vec::with_capacity(origins.len());
        for (r, o) in stream.blocks.iter().zip(origins) {
            blocks.push(self.decode_block(r, o)?);
        }
        let cloud = reassemble(&stream.octree, &blocks)?;
        if cloud.resolution() != h.resolution {
            return Err(Error::Corrupt("octree resolution disagrees with header".into()));
        }
        Ok(cloud)
    }
}

/// Convenience wrappers matching the module operations.
pub fn encode_point_cloud(cloud: &PointCloud, checkpoint: &Checkpoint, config: &ModelConfig) -> Result<Bitstream> {
    Ok(Codec::new(config, checkpoint)?.encode(cloud)?.0)
}

pub fn decode_point_cloud(stream: &Bitstream, checkpoint: &Checkpoint, config: &ModelConfig) -> Result<PointCloud> {
    Codec::new(config, checkpoint)?.decode(stream)
}

/// One rate-distortion measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub lambda: f64,
    pub bpp: f64,
    pub d1_psnr: f64,
    pub d2_psnr: f64,
}

/// Bits per input point and D1/D2 PSNR of a coded stream.
pub fn measure(reference: &PointCloud, stream_bytes: usize, decoded: &PointCloud, lambda: f64) -> Result<(RdPoint, DistortionReport)> {
    if reference.is_empty() {
        return Err(Error::Invalid("reference cloud is empty".into()));
    }
    let report = distortion(reference, decoded, reference.peak())?;
    let bpp = 8.0 * stream_bytes as f64 / reference.len() as f64;
    Ok((RdPoint { lambda, bpp, d1_psnr: report.d1_psnr, d2_psnr: report.d2_psnr }, report))
}

/// Encodes and decodes `cloud` with each `(λ, checkpoint)`, sorted by λ.
pub fn evaluate_rd(cloud: &PointCloud, checkpoints: &[(f64, Checkpoint)], config: &ModelConfig) -> Result<Vec<RdPoint>> {
    if checkpoints.len() < 4 {
        return Err(Error::Invalid(format!("RD evaluation needs at least 4 checkpoints, got {}", checkpoints.len())));
    }
    let mut sorted: Vec<&(f64, Checkpoint)> = checkpoints.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    sorted
        .into_iter()
        .map(|(lambda, ck)| {
            let mut codec = Codec::new(config, ck)?;
            let (stream, _) = codec.encode(cloud)?;
            let bytes = stream.to_bytes();
            let decoded = codec.decode(&Bitstream::from_bytes(&bytes)?)?;
            Ok(measure(cloud, bytes.len(), &decoded, *lambda)?.0)
        })
        .collect()
}

pub fn write_rd_csv(points: &[RdPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in points {
        w.serialize(p).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_rd_csv(text: &str) -> Result<Vec<RdPoint>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    if headers.iter().collect::<Vec<_>>() != ["lambda", "bpp", "d1_psnr", "d2_psnr"] {
        return Err(Error::Parse { line: 1, msg: format!("expected header lambda,bpp,d1_psnr,d2_psnr, got {headers:?}") });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() }))
        .collect()
}
