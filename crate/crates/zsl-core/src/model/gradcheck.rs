//! Finite-difference gradient checking for the hand-derived backward passes.

use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::{
    batch_loss_head, batch_loss_shallow, forward_backward, forward_backward_shallow, HeadParams,
    ParamBlocks, ShallowParams,
};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error per entry.
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-6,
            tolerance: 1e-5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BlockReport {
    pub block: &'static str,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn failing_blocks(&self) -> Vec<&BlockReport> {
        self.blocks
            .iter()
            .filter(|b| b.max_rel_error >= self.tolerance)
            .collect()
    }
}

const MAX_CHECKED_PARAMS: usize = 10_000;

/// Guarded relative error: tiny gradients are compared against a floor so a
/// zero analytic gradient with finite-difference noise of ~1e-10 reports an
/// error of ~1e-7 instead of dividing by zero.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-3);
    (analytic - numeric).abs() / scale
}

/// Compare analytic gradients against central finite differences of `loss`.
/// Generic over the parameter container so the same engine serves both
/// model types and any training-step loss.
pub fn check_gradients<P, F>(
    params: &P,
    analytic: &P,
    mut loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    P: ParamBlocks,
    F: FnMut(&P) -> Result<f64>,
{
    if params.param_count() > MAX_CHECKED_PARAMS {
        return Err(Error::contract(format!(
            "gradient check limited to {MAX_CHECKED_PARAMS} parameters, got {}",
            params.param_count()
        )));
    }
    let mut work = params.clone();
    let mut blocks = Vec::with_capacity(params.n_blocks());
    for b in 0..params.n_blocks() {
        let mut max_err: f64 = 0.0;
        for i in 0..params.block(b).data().len() {
            let original = work.block(b).data()[i];
            work.block_mut(b).data_mut()[i] = original + cfg.step;
            let plus = loss(&work)?;
            work.block_mut(b).data_mut()[i] = original - cfg.step;
            let minus = loss(&work)?;
            work.block_mut(b).data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            max_err = max_err.max(rel_error(analytic.block(b).data()[i], numeric));
        }
        blocks.push(BlockReport {
            block: P::block_names()[b],
            max_rel_error: max_err,
        });
    }
    Ok(GradCheckReport {
        blocks,
        tolerance: cfg.tolerance,
    })
}

/// Check the attention head's hand-derived gradients on a batch.
pub fn grad_check_head(
    params: &HeadParams,
    features: &[Mat],
    labels: &[usize],
    classifiers: &Mat,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (_, grads) = forward_backward(features, labels, classifiers, params)?;
    check_gradients(
        params,
        &grads,
        |p| batch_loss_head(features, labels, classifiers, p),
        cfg,
    )
}

/// Check the shallow scorer's hand-derived gradients on a batch.
pub fn grad_check_shallow(
    params: &ShallowParams,
    inputs: &[Vec<f64>],
    labels: &[usize],
    classifiers: &Mat,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (_, grads) = forward_backward_shallow(inputs, labels, classifiers, params)?;
    check_gradients(
        params,
        &grads,
        |p| batch_loss_shallow(inputs, labels, classifiers, p),
        cfg,
    )
}
