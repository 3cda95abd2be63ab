use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FocalLossParams {
    /// Weight on occupied voxels; empty voxels get `1 - alpha`.
    pub alpha: f64,
    pub gamma_focus: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        FocalLossParams { alpha: 0.75, gamma_focus: 2.0 }
    }
}

impl FocalLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.gamma_focus >= 0.0) {
            return Err(Error::Config(format!("focal loss parameters {self:?}")));
        }
        Ok(())
    }
}

/// Mean over voxels of `-a_t (1 - p_t)^gamma ln p_t` where `p_t` is the
/// predicted probability of the true label. Returns the loss and its
/// gradient with respect to `probs`.
pub fn focal_loss(target: &Tensor, probs: &Tensor, params: &FocalLossParams) -> Result<(f64, Tensor)> {
    params.validate()?;
    target.expect_shape(probs.shape(), "focal loss")?;
    let n = target.shape().len() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    let mut total = 0.0;
    for (k, (&t, &p_raw)) in target.data().iter().zip(probs.data()).enumerate() {
        let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p_raw);
        let p = p_raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let (pt, at, sign) = if t >= 0.5 { (p, params.alpha, 1.0) } else { (1.0 - p, 1.0 - params.alpha, -1.0) };
        let q = 1.0 - pt;
        let lp = pt.ln();
        total += -at * q.powf(params.gamma_focus) * lp;
        if !clamped {
            // d/dpt of -at q^g ln pt
            let qg1 = if params.gamma_focus == 0.0 { 0.0 } else { params.gamma_focus * q.powf(params.gamma_focus - 1.0) };
            let d = at * (qg1 * lp - q.powf(params.gamma_focus) / pt);
            grad[k] = sign * d / n;
        }
    }
    Ok((total / n, grad))
}
