//! Central-difference verification of [`AttentionClassifier`] gradients.

use super::model::AttentionClassifier;
use crate::data::Sample;
use crate::error::Result;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|a - n| / max(1, |a|, |n|)` over checked coordinates.
    pub max_error: f64,
    /// Worst `|a - n| / max(|a|, |n|)` over coordinates with `|a| > 1e-2`.
    pub max_relative_error: f64,
    /// Coordinates skipped because a perturbation moved a max-pool argmax
    /// or flipped a rectifier, where the loss is not differentiable.
    pub skipped: usize,
    pub total: usize,
}

fn kink_signature(model: &AttentionClassifier, batch: &[Sample]) -> Result<Vec<Vec<usize>>> {
    batch
        .iter()
        .map(|s| {
            let (_, cache) = model.forward(&s.features)?;
            let mut sig = cache.attention().argmax_channels().to_vec();
            sig.extend(cache.head().active_units().iter().map(|&b| usize::from(b)));
            Ok(sig)
        })
        .collect()
}

/// Perturbs every parameter by `±step` and compares the difference quotient
/// of the mean batch loss against the analytic gradient.
pub fn check_gradients(model: &AttentionClassifier, batch: &[Sample], step: f32) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grads(batch)?;
    let analytic = grads.flatten();
    let base = model.parameters();
    let signature = kink_signature(model, batch)?;
    let mut report = GradCheckReport {
        max_error: 0.0,
        max_relative_error: 0.0,
        skipped: 0,
        total: base.len(),
    };
    for i in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[i] += step;
        minus[i] -= step;
        let width = f64::from(plus[i]) - f64::from(minus[i]);
        let mut mp = model.clone();
        mp.set_parameters(&plus)?;
        let mut mm = model.clone();
        mm.set_parameters(&minus)?;
        if kink_signature(&mp, batch)? != signature || kink_signature(&mm, batch)? != signature {
            report.skipped += 1;
            continue;
        }
        let numeric = (mp.loss(batch)? - mm.loss(batch)?) / width;
        let a = f64::from(analytic[i]);
        let diff = (a - numeric).abs();
        report.max_error = report.max_error.max(diff / a.abs().max(numeric.abs()).max(1.0));
        if a.abs() > 1e-2 {
            report.max_relative_error = report.max_relative_error.max(diff / a.abs().max(numeric.abs()));
        }
    }
    Ok(report)
}
