//! End-to-end point-cloud coding and training.

pub mod bitstream;
pub mod coding;
pub mod model;
pub mod train;

pub use bitstream::{Bitstream, BlockRecord, Header};
pub use coding::{
    decode_point_cloud, encode_point_cloud, evaluate_rd, measure, read_rd_csv, write_rd_csv, BlockStats, Codec, RdPoint,
};
pub use model::{CompressionModel, LossTerms, Objective};
pub use train::{evaluate_loss, train, train_lambda, LambdaRun, Progress, TrainSchedule};
