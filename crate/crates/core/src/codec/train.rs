//! λ sweep with warm start, separate optimizers for the transforms and the
//! prior, and early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{CompressionModel, LossTerms, Objective};
use crate::architecture::ModelConfig;
use crate::error::{Error, Result};
use crate::geometry::VoxelBlock;
use crate::nn::adam::AdamState;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::FocalLossParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    /// Positive, ascending.
    pub lambdas: Vec<f64>,
    pub lr_main: f64,
    pub lr_entropy: f64,
    pub batch: usize,
    /// Minibatches averaged per validation.
    pub validation_batches: usize,
    /// Training steps between validations.
    pub validate_every: usize,
    /// Validations without improvement before stopping.
    pub patience: usize,
    /// Hard cap on steps per λ (0 = none).
    #[serde(default)]
    pub max_steps: usize,
    /// Multiplier on the mean focal loss in `L = R + λ·scale·D`.
    pub distortion_scale: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub seed: u64,
}

impl TrainSchedule {
    /// Paper profile: batch 32, ten validation minibatches, mean focal loss
    /// scaled by the voxels of a 64^3 block.
    pub fn paper() -> Self {
        TrainSchedule {
            lambdas: vec![5e-5, 1e-4, 2e-4, 3e-4],
            lr_main: 1e-4,
            lr_entropy: 1e-3,
            batch: 32,
            validation_batches: 10,
            validate_every: 50,
            patience: 3,
            max_steps: 0,
            distortion_scale: 64f64.powi(3),
            focal_alpha: 0.75,
            focal_gamma: 2.0,
            seed: 0,
        }
    }

    /// Desk profile for 16^3 synthetic blocks on one core: a larger
    /// learning rate and distortion weight so that 400 steps per λ reach a
    /// usable operating point.
    pub fn desk() -> Self {
        TrainSchedule { batch: 8, max_steps: 400, lr_main: 1e-3, distortion_scale: 3e9, ..TrainSchedule::paper() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config("lambdas must be positive and finite".into()));
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("lambdas must be strictly ascending".into()));
        }
        if self.batch == 0 || self.validation_batches == 0 || self.validate_every == 0 || self.patience == 0 {
            return Err(Error::Config("batch, validation_batches, validate_every and patience must be positive".into()));
        }
        if !(self.lr_main > 0.0 && self.lr_entropy > 0.0 && self.distortion_scale > 0.0) {
            return Err(Error::Config("learning rates and distortion scale must be positive".into()));
        }
        self.focal().validate()
    }

    pub fn focal(&self) -> FocalLossParams {
        FocalLossParams { alpha: self.focal_alpha, gamma_focus: self.focal_gamma }
    }

    pub fn objective(&self, lambda: f64) -> Objective {
        Objective { lambda, distortion_scale: self.distortion_scale, focal: self.focal() }
    }
}

/// One validation measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub step: usize,
    pub terms: LossTerms,
}

/// Result of training at one λ.
#[derive(Clone, Debug)]
pub struct LambdaRun {
    pub lambda: f64,
    pub steps: usize,
    /// Mean minibatch loss per training step.
    pub train_losses: Vec<f64>,
    pub validations: Vec<Validation>,
    /// Parameters at the best validation.
    pub checkpoint: Checkpoint,
    /// Parameters the run started from.
    pub initial: Checkpoint,
}

/// Progress notifications for logging.
#[derive(Clone, Copy, Debug)]
pub enum Progress {
    Step { lambda: f64, step: usize, terms: LossTerms },
    Validation { lambda: f64, step: usize, terms: LossTerms, best: bool },
    Finished { lambda: f64, steps: usize },
}

fn mean_terms(model: &mut CompressionModel, blocks: &[VoxelBlock], obj: &Objective) -> Result<LossTerms> {
    let mut sum = LossTerms::default();
    for b in blocks {
        sum = sum.add(model.evaluate_block(b, obj)?);
    }
    Ok(sum.scaled(1.0 / blocks.len() as f64))
}

/// Mean test-quantized loss terms over `blocks`.
pub fn evaluate_loss(model: &mut CompressionModel, blocks: &[VoxelBlock], obj: &Objective) -> Result<LossTerms> {
    if blocks.is_empty() {
        return Err(Error::Invalid("no blocks to evaluate".into()));
    }
    mean_terms(model, blocks, obj)
}

/// Trains `model` at one λ until validation stops improving.
pub fn train_lambda(
    model: &mut CompressionModel,
    schedule: &TrainSchedule,
    lambda_index: usize,
    train: &[VoxelBlock],
    validation: &[VoxelBlock],
    progress: &mut dyn FnMut(Progress),
) -> Result<LambdaRun> {
    schedule.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Invalid("training and validation sets must be nonempty".into()));
    }
    let lambda = schedule.lambdas[lambda_index];
    let obj = schedule.objective(lambda);
    let val_len = (schedule.validation_batches * schedule.batch).min(validation.len());
    let val = &validation[..val_len];
    let initial = model.checkpoint();
    let mut adam_main = AdamState::new(0.9, 0.999, 1e-8);
    let mut adam_prior = AdamState::new(0.9, 0.999, 1e-8);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ (lambda_index as u64).wrapping_mul(0x1000_0000_01b3));
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut train_losses = Vec::new();
    let mut validations = Vec::new();
    let mut best = (f64::INFINITY, initial.clone());
    let mut stale = 0;
    let mut step = 0;
    let weight = 1.0 / schedule.batch as f64;
    loop {
        if schedule.max_steps > 0 && step >= schedule.max_steps {
            break;
        }
        model.zero_grad();
        let mut terms = LossTerms::default();
        for _ in 0..schedule.batch {
            if cursor == order.len() {
                order = (0..train.len()).collect();
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let seed = schedule.seed ^ ((lambda_index as u64) << 48) ^ ((step as u64) << 16) ^ cursor as u64;
            let t = match model.train_step(&train[order[cursor]], &obj, seed, weight) {
                Ok(t) => t,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { lambda, step, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            terms = terms.add(t.scaled(weight));
            cursor += 1;
        }
        if !terms.loss.is_finite() {
            return Err(Error::Diverged { lambda, step, loss: terms.loss });
        }
        {
            let mut main = model.main_params_mut();
            if main.iter().any(|p| p.grad.iter().any(|g| !g.is_finite())) {
                return Err(Error::Diverged { lambda, step, loss: terms.loss });
            }
            adam_main.step(&mut main, schedule.lr_main)?;
        }
        adam_prior.step(&mut model.prior.params_mut(), schedule.lr_entropy)?;
        model.project();
        step += 1;
        train_losses.push(terms.loss);
        progress(Progress::Step { lambda, step, terms });

        if step % schedule.validate_every == 0 {
            let v = mean_terms(model, val, &obj)?;
            if !v.loss.is_finite() {
                return Err(Error::Diverged { lambda, step, loss: v.loss });
            }
            let improved = v.loss < best.0;
            if improved {
                best = (v.loss, model.checkpoint());
                stale = 0;
            } else {
                stale += 1;
            }
            validations.push(Validation { step, terms: v });
            progress(Progress::Validation { lambda, step, terms: v, best: improved });
            if stale >= schedule.patience {
                break;
            }
        }
    }
    // A run shorter than one validation interval keeps its final state.
    let checkpoint = if validations.is_empty() { model.checkpoint() } else { best.1 };
    model.restore(&checkpoint)?;
    progress(Progress::Finished { lambda, steps: step });
    Ok(LambdaRun { lambda, steps: step, train_losses, validations, checkpoint, initial })
}

/// Full sweep: λ values in ascending order, each warm-started from the
/// previous λ's emitted checkpoint (the first from the seeded
/// initialization). Optimizer state restarts at every λ.
pub fn train(
    config: &ModelConfig,
    schedule: &TrainSchedule,
    train_blocks: &[VoxelBlock],
    validation: &[VoxelBlock],
    progress: &mut dyn FnMut(Progress),
) -> Result<Vec<LambdaRun>> {
    schedule.validate()?;
    let mut model = CompressionModel::new(config)?;
    let mut runs = Vec::new();
    for i in 0..schedule.lambdas.len() {
        runs.push(train_lambda(&mut model, schedule, i, train_blocks, validation, progress)?);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architecture::Variant;
    use crate::geometry::synthetic::synthetic_blocks;

    fn tiny() -> (ModelConfig, TrainSchedule, Vec<VoxelBlock>) {
        let cfg = ModelConfig { channels: [4, 8, 8], latent_channels: 8, hyper_channels: 4, ..ModelConfig::desk(Variant::Baseline) };
        let sched = TrainSchedule {
            lambdas: vec![1e-4, 2e-4],
            batch: 2,
            validation_batches: 1,
            validate_every: 2,
            max_steps: 4,
            ..TrainSchedule::desk()
        };
        (cfg, sched, synthetic_blocks(6, 16, 1).unwrap())
    }

    #[test]
    fn warm_start_and_determinism() {
        let (cfg, sched, blocks) = tiny();
        let runs = train(&cfg, &sched, &blocks[..4], &blocks[4..], &mut |_| {}).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].initial, runs[0].checkpoint);
        let again = train(&cfg, &sched, &blocks[..4], &blocks[4..], &mut |_| {}).unwrap();
        assert_eq!(again[1].validations, runs[1].validations);
        assert_eq!(again[1].checkpoint, runs[1].checkpoint);
    }

    #[test]
    fn schedule_validation() {
        let bad = TrainSchedule { lambdas: vec![2e-4, 1e-4], ..TrainSchedule::desk() };
        assert!(bad.validate().is_err());
        assert!(TrainSchedule::paper().validate().is_ok());
        let s = toml::to_string(&TrainSchedule::desk()).unwrap();
        assert_eq!(toml::from_str::<TrainSchedule>(&s).unwrap(), TrainSchedule::desk());
    }

    #[test]
    fn divergence_reports_lambda_and_step() {
        let (cfg, sched, blocks) = tiny();
        let sched = TrainSchedule { lr_main: 1e300, max_steps: 3, ..sched };
        let err = train(&cfg, &sched, &blocks[..4], &blocks[4..], &mut |_| {});
        match err {
            Err(Error::Diverged { lambda, .. }) => assert_eq!(lambda, 1e-4),
            other => panic!("expected divergence, got {:?}", other.map(|r| r.len())),
        }
    }
}
