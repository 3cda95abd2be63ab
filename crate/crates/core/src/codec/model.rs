//! The four transforms plus the hyper-latent prior, with one training step
//! (forward, loss, backward) per block.

use serde::{Deserialize, Serialize};

use crate::architecture::{build_analysis, build_hyper_networks, build_synthesis, ModelConfig, Network};
use crate::entropy::{gaussian_rate, quantize, FactorizedPrior, QuantMode};
use crate::error::{Error, Result};
use crate::geometry::VoxelBlock;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::{focal_loss, FocalLossParams};
use crate::nn::tensor::{Param, Shape, Tensor};

/// Loss terms for one block or averaged over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// `rate_bits + lambda * distortion_scale * distortion`.
    pub loss: f64,
    /// Estimated bits for `y` and `z` together.
    pub rate_bits: f64,
    /// Mean focal loss over the block's voxels.
    pub distortion: f64,
}

impl LossTerms {
    pub fn scaled(self, w: f64) -> Self {
        LossTerms { loss: self.loss * w, rate_bits: self.rate_bits * w, distortion: self.distortion * w }
    }

    pub fn add(self, o: Self) -> Self {
        LossTerms { loss: self.loss + o.loss, rate_bits: self.rate_bits + o.rate_bits, distortion: self.distortion + o.distortion }
    }
}

/// Weighting of the loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub lambda: f64,
    pub distortion_scale: f64,
    pub focal: FocalLossParams,
}

pub struct CompressionModel {
    pub config: ModelConfig,
    pub analysis: Network,
    pub synthesis: Network,
    pub hyper_analysis: Network,
    pub hyper_synthesis: Network,
    pub prior: FactorizedPrior,
}

pub fn block_tensor(block: &VoxelBlock) -> Tensor {
    Tensor::from_vec(Shape::cube(1, block.block_size), block.to_f64()).expect("block occupancy has block_size^3 entries")
}

impl CompressionModel {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        let analysis = build_analysis(config)?;
        let synthesis = build_synthesis(config)?;
        let (hyper_analysis, hyper_synthesis) = build_hyper_networks(config)?;
        let prior = FactorizedPrior::new(config.hyper_channels, config.seed);
        Ok(CompressionModel { config: config.clone(), analysis, synthesis, hyper_analysis, hyper_synthesis, prior })
    }

    pub fn from_checkpoint(config: &ModelConfig, checkpoint: &Checkpoint) -> Result<Self> {
        let mut m = CompressionModel::new(config)?;
        m.restore(checkpoint)?;
        Ok(m)
    }

    pub fn restore(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        checkpoint.restore(self.all_params_mut())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(self.all_params())
    }

    /// Parameters of the four transforms.
    pub fn main_params(&self) -> Vec<&Param> {
        let mut v = self.analysis.params();
        v.extend(self.synthesis.params());
        v.extend(self.hyper_analysis.params());
        v.extend(self.hyper_synthesis.params());
        v
    }

    pub fn main_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.analysis.params_mut();
        v.extend(self.synthesis.params_mut());
        v.extend(self.hyper_analysis.params_mut());
        v.extend(self.hyper_synthesis.params_mut());
        v
    }

    pub fn all_params(&self) -> Vec<&Param> {
        let mut v = self.main_params();
        v.extend(self.prior.params());
        v
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Param> {
        let CompressionModel { analysis, synthesis, hyper_analysis, hyper_synthesis, prior, .. } = self;
        let mut v = analysis.params_mut();
        v.extend(synthesis.params_mut());
        v.extend(hyper_analysis.params_mut());
        v.extend(hyper_synthesis.params_mut());
        v.extend(prior.params_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        self.all_params_mut().into_iter().for_each(Param::zero_grad);
    }

    /// Re-applies parameter constraints (GDN positivity) after an update.
    pub fn project(&mut self) {
        self.analysis.layers.project();
        self.synthesis.layers.project();
        self.hyper_analysis.layers.project();
        self.hyper_synthesis.layers.project();
    }

    fn check_block(&self, block: &VoxelBlock) -> Result<()> {
        if block.block_size != self.config.block_size {
            return Err(Error::Config(format!(
                "block size {} does not match model block size {}",
                block.block_size, self.config.block_size
            )));
        }
        Ok(())
    }

    /// Forward pass with noisy quantization, then backward; gradients of
    /// `weight * loss` accumulate into every parameter.
    pub fn train_step(&mut self, block: &VoxelBlock, obj: &Objective, seed: u64, weight: f64) -> Result<LossTerms> {
        self.check_block(block)?;
        let x = block_tensor(block);
        let y = self.analysis.forward(&x)?;
        let y_tilde = quantize(&y, QuantMode::Train, seed)?;
        let z = self.hyper_analysis.forward(&y)?;
        let z_tilde = quantize(&z, QuantMode::Train, seed ^ 0x9e37_79b9_7f4a_7c15)?;
        let sigma = self.hyper_synthesis.forward(&z_tilde)?;
        let x_hat = self.synthesis.forward(&y_tilde)?;

        let (dist, mut g_xhat) = focal_loss(&x, &x_hat, &obj.focal)?;
        let gy_rate = gaussian_rate(&y_tilde, &sigma)?;
        // The prior accumulates its own parameter gradients unweighted, so
        // scale its input gradient and parameter gradients afterwards.
        let before: Vec<Vec<f64>> = self.prior.params().iter().map(|p| p.grad.clone()).collect();
        let (z_bits, mut g_z_prior) = self.prior.rate_and_grad(&z_tilde)?;
        for (p, old) in self.prior.params_mut().into_iter().zip(before) {
            for (g, o) in p.grad.iter_mut().zip(old) {
                *g = o + (*g - o) * weight;
            }
        }
        let rate = gy_rate.bits + z_bits;
        let dscale = obj.lambda * obj.distortion_scale;
        let loss = rate + dscale * dist;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss {loss}")));
        }

        g_xhat.data_mut().iter_mut().for_each(|g| *g *= dscale * weight);
        let mut g_y = self.synthesis.backward(&g_xhat)?;
        let mut g_sigma = gy_rate.grad_sigma;
        g_sigma.data_mut().iter_mut().for_each(|g| *g *= weight);
        let mut g_z = self.hyper_synthesis.backward(&g_sigma)?;
        g_z_prior.data_mut().iter_mut().for_each(|g| *g *= weight);
        g_z.add_assign(&g_z_prior)?;
        let g_y_hyper = self.hyper_analysis.backward(&g_z)?;
        let mut g_y_rate = gy_rate.grad_y;
        g_y_rate.data_mut().iter_mut().for_each(|g| *g *= weight);
        g_y.add_assign(&g_y_rate)?;
        g_y.add_assign(&g_y_hyper)?;
        self.analysis.backward(&g_y)?;
        Ok(LossTerms { loss, rate_bits: rate, distortion: dist })
    }

    /// Loss terms with test-time rounding; no gradients.
    pub fn evaluate_block(&mut self, block: &VoxelBlock, obj: &Objective) -> Result<LossTerms> {
        self.check_block(block)?;
        let x = block_tensor(block);
        let y = self.analysis.forward(&x)?;
        let y_hat = quantize(&y, QuantMode::Test, 0)?;
        let z = self.hyper_analysis.forward(&y)?;
        let z_hat = quantize(&z, QuantMode::Test, 0)?;
        let sigma = self.hyper_synthesis.forward(&z_hat)?;
        let x_hat = self.synthesis.forward(&y_hat)?;
        let (dist, _) = focal_loss(&x, &x_hat, &obj.focal)?;
        let rate = gaussian_rate(&y_hat, &sigma)?.bits + crate::entropy::rate_bits(&[&self.prior.likelihood(&z_hat)?]);
        let loss = rate + obj.lambda * obj.distortion_scale * dist;
        Ok(LossTerms { loss, rate_bits: rate, distortion: dist })
    }
}
