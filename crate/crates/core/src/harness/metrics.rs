//! Attack and accuracy metrics.

use crate::attacks::AttackOutcome;
use crate::defense::{DefendedOracle, DefenseConfig, OutputMode};
use crate::error::{Error, Result};
use crate::model::{Classifier, Dataset};

/// Anything with a success flag and a normalized distortion.
pub trait Scored {
    fn success(&self) -> bool;
    fn distortion(&self) -> f64;
}

impl Scored for AttackOutcome {
    fn success(&self) -> bool {
        self.success
    }

    fn distortion(&self) -> f64 {
        self.l2_distortion
    }
}

impl<T: Scored> Scored for &T {
    fn success(&self) -> bool {
        (*self).success()
    }

    fn distortion(&self) -> f64 {
        (*self).distortion()
    }
}

/// Fraction of successful outcomes.
pub fn compute_asr<T: Scored>(outcomes: &[T]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("outcomes"));
    }
    let hits = outcomes.iter().filter(|o| o.success()).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

/// Fraction of outcomes that succeed with distortion strictly below `l`.
pub fn compute_asr2<T: Scored>(outcomes: &[T], l: f64) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("outcomes"));
    }
    if !(l >= 0.0) {
        return Err(Error::invalid("distortion threshold must be >= 0"));
    }
    let hits = outcomes.iter().filter(|o| o.success() && o.distortion() < l).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

/// Median distortion, `None` for an empty selection.
pub fn median_l2<T: Scored>(outcomes: &[T], successes_only: bool) -> Option<f64> {
    let mut d: Vec<f64> = outcomes
        .iter()
        .filter(|o| !successes_only || o.success())
        .map(|o| o.distortion())
        .collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Some(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}

/// Ten times the smallest `L` with `ASR2(L) >= 0.95`, from undefended
/// outcomes.
///
/// Fails when the undefended ASR is below 0.9. When the ASR lies in
/// `[0.9, 0.95)`, no `L` reaches 0.95 and the threshold that admits every
/// success is used instead.
pub fn calibrate_l_from<T: Scored>(outcomes: &[T]) -> Result<f64> {
    let asr = compute_asr(outcomes)?;
    if asr < 0.9 {
        return Err(Error::CalibrationFailed { asr });
    }
    let mut d: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.success())
        .map(|o| o.distortion())
        .collect();
    d.sort_by(f64::total_cmp);
    let needed = (95 * outcomes.len()).div_ceil(100).min(d.len());
    let l = d[needed - 1].next_up();
    Ok(10.0 * l)
}

/// Defended accuracy: one hard-label query per test sample.
pub fn measure_acc(classifier: &Classifier, defense: DefenseConfig, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyInput("test set"));
    }
    let mut oracle = DefendedOracle::new(
        classifier,
        DefenseConfig {
            mode: OutputMode::Hard,
            ..defense
        },
    )?;
    let mut correct = 0usize;
    for s in &test.samples {
        if oracle.query_hard(&s.features)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}
