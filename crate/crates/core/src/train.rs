//! The per-image training loop: forward, pseudo-label, loss, backward,
//! update, until the iteration cap or the cluster floor is reached.

use alloc::vec::Vec;

use crate::loss::{total_loss, LossBreakdown};
use crate::net::{
    assign_labels, backward, count_unique, forward_with_cache, init_params, sgd_momentum_step,
    LabelMap, TrainConfig,
};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum StopReason {
    IterationCap,
    ClusterFloor,
    NumericFailure,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::IterationCap => "iteration_cap",
            StopReason::ClusterFloor => "cluster_floor",
            StopReason::NumericFailure => "numeric_failure",
        }
    }
}

impl core::fmt::Display for StopReason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub final_labels: LabelMap,
    pub loss_history: Vec<LossBreakdown>,
    pub iterations_run: usize,
    pub unique_clusters_final: usize,
    pub stop_reason: StopReason,
}

/// Per-iteration progress, handed to the observer of [`train_with_observer`].
#[derive(Debug, Clone, Copy)]
pub struct Progress<'a> {
    /// 1-based.
    pub iteration: usize,
    pub loss: &'a LossBreakdown,
    pub unique_clusters: usize,
}

/// Segments a `1 × H × W` image with values in `[0, 1]`.
pub fn train(image: &Tensor, config: &TrainConfig) -> Result<SegmentationResult> {
    train_with_observer(image, config, |_| {})
}

/// As [`train`], reporting each iteration to `observer`.
///
/// Configuration and shape problems are errors. A non-finite loss or
/// gradient ends the run with [`StopReason::NumericFailure`] and whatever
/// history was recorded before it.
pub fn train_with_observer<F>(
    image: &Tensor,
    config: &TrainConfig,
    mut observer: F,
) -> Result<SegmentationResult>
where
    F: FnMut(Progress<'_>),
{
    config.validate()?;
    let mut params = init_params(config)?;
    let mut history = Vec::with_capacity(config.max_iterations);
    let mut labels = None;

    let stop_reason = loop {
        let (response, cache) = forward_with_cache(&params, image, config.eps)?;
        let current = assign_labels(response.tensor());
        let unique = count_unique(&current);
        let (loss, grad) = total_loss(response.tensor(), &current, config.alpha, config.reduction)?;
        drop(response);
        if labels.is_none() {
            // Keep a label map even if the very first loss is unusable.
            labels = Some(current.clone());
        }
        if !loss.is_finite() || !grad.is_finite() {
            break StopReason::NumericFailure;
        }
        history.push(loss);
        labels = Some(current);
        observer(Progress {
            iteration: history.len(),
            loss: &loss,
            unique_clusters: unique,
        });
        if unique <= config.q_min {
            break StopReason::ClusterFloor;
        }
        if history.len() >= config.max_iterations {
            break StopReason::IterationCap;
        }
        let grads = backward(&params, &cache, &grad)?;
        drop(cache);
        match sgd_momentum_step(&mut params, &grads, config) {
            Ok(()) => {}
            Err(Error::NumericFailure(_)) => break StopReason::NumericFailure,
            Err(e) => return Err(e),
        }
    };

    let final_labels = labels.expect("at least one forward pass ran");
    Ok(SegmentationResult {
        unique_clusters_final: count_unique(&final_labels),
        final_labels,
        iterations_run: history.len(),
        loss_history: history,
        stop_reason,
    })
}

/// Trains once per α with otherwise identical configuration (same seed,
/// fresh parameters and momentum each time). Results keep input order; a
/// failing entry does not stop the others.
pub fn alpha_sweep(
    image: &Tensor,
    config: &TrainConfig,
    alphas: &[f64],
) -> Result<Vec<(f64, Result<SegmentationResult>)>> {
    if alphas.is_empty() {
        return Err(Error::Precondition(
            "alpha sweep needs at least one alpha".into(),
        ));
    }
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let cfg = TrainConfig {
                alpha,
                ..config.clone()
            };
            (alpha, train(image, &cfg))
        })
        .collect())
}
