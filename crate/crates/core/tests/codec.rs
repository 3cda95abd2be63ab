use pcgc_core::architecture::{ModelConfig, Variant};
use pcgc_core::codec::{decode_point_cloud, Bitstream, Codec, CompressionModel};
use pcgc_core::geometry::synthetic::synthetic_cloud;
use pcgc_core::geometry::{partition_octree, PointCloud};
use pcgc_core::Error;

fn small(variant: Variant) -> ModelConfig {
    ModelConfig { channels: [4, 8, 8], latent_channels: 8, hyper_channels: 4, ..ModelConfig::desk(variant) }
}

#[test]
fn round_trip_preserves_counts_and_octree() {
    let cloud = synthetic_cloud(64, 2, 4).unwrap();
    for variant in [Variant::Baseline, Variant::Proposed] {
        let cfg = small(variant);
        let ck = CompressionModel::new(&cfg).unwrap().checkpoint();
        let mut codec = Codec::new(&cfg, &ck).unwrap();
        let (stream, stats) = codec.encode(&cloud).unwrap();
        let bytes = stream.to_bytes();
        let parsed = Bitstream::from_bytes(&bytes).unwrap();
        assert_eq!(parsed, stream);
        assert_eq!(parsed.header.lambda_id, ck.content_id());
        assert_eq!(parsed.header.variant_id, variant.id());
        assert_eq!(parsed.total_points(), cloud.len() as u64);

        let (octree, blocks) = partition_octree(&cloud, cfg.block_size).unwrap();
        assert_eq!(parsed.octree, octree);
        assert_eq!(stats.len(), blocks.len());

        let decoded = decode_point_cloud(&parsed, &ck, &cfg).unwrap();
        assert_eq!(decoded.len(), cloud.len());
        assert_eq!(decoded.resolution(), cloud.resolution());
        // Every decoded point lies in an occupied block of the original.
        let (_, dblocks) = partition_octree(&decoded, cfg.block_size).unwrap();
        for (d, b) in dblocks.iter().zip(&blocks) {
            assert_eq!((d.origin, d.point_count()), (b.origin, b.point_count()));
        }
        // Re-encoding is byte-identical.
        assert_eq!(Codec::new(&cfg, &ck).unwrap().encode(&cloud).unwrap().0.to_bytes(), bytes);
    }
}

#[test]
fn coded_length_tracks_the_rate_estimate() {
    let cloud = synthetic_cloud(64, 3, 8).unwrap();
    let cfg = small(Variant::Baseline);
    let ck = CompressionModel::new(&cfg).unwrap().checkpoint();
    let (_, stats) = Codec::new(&cfg, &ck).unwrap().encode(&cloud).unwrap();
    for s in &stats {
        // Payload bytes within 1% + 32 bytes of the estimate, either way.
        let (coded, est) = (s.coded_bytes() as f64, s.estimated_bits / 8.0);
        assert!((coded - est).abs() <= 0.01 * est + 32.0, "{s:?}");
    }
}

#[test]
fn decoding_rejects_mismatched_checkpoints_and_corruption() {
    let cloud = synthetic_cloud(32, 1, 2).unwrap();
    let cfg = small(Variant::Baseline);
    let ck = CompressionModel::new(&cfg).unwrap().checkpoint();
    let stream = Codec::new(&cfg, &ck).unwrap().encode(&cloud).unwrap().0;
    let other_cfg = ModelConfig { seed: 9, ..cfg.clone() };
    let other = CompressionModel::new(&other_cfg).unwrap().checkpoint();
    assert!(matches!(decode_point_cloud(&stream, &other, &cfg), Err(Error::Config(_))));

    let bytes = stream.to_bytes();
    assert!(matches!(Bitstream::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Corrupt(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(Bitstream::from_bytes(&bad).is_err());
    let mut flipped = bytes.clone();
    let last = flipped.len() - 1;
    flipped[last] ^= 0x5a;
    assert!(Bitstream::from_bytes(&flipped).is_err());
    assert!(Codec::new(&cfg, &ck).unwrap().encode(&PointCloud::new(vec![[0; 3]], 8).unwrap()).is_err());
}
