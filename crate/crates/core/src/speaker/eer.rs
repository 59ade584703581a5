//! Equal error rate for verification trials: the operating point where the
//! false-accept and false-reject rates cross under a threshold sweep, with
//! linear interpolation between straddling thresholds.

use crate::error::{Error, Result};

/// One verification trial: a similarity score and whether the trial pair is
/// a genuine (target) match.
pub type Trial = (f32, bool);

/// Computes the equal error rate of `trials`. Accept rule: `score >=
/// threshold`. The rate is exact when some threshold makes FAR equal FRR and
/// linearly interpolated between the two straddling thresholds otherwise.
pub fn equal_error_rate(trials: &[Trial]) -> Result<f32> {
    let n_target = trials.iter().filter(|(_, t)| *t).count();
    let n_nontarget = trials.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(Error::DegenerateTrials);
    }

    // Sweep thresholds downward from above the max score. Sorting once and
    // walking the list gives every distinct operating point.
    let mut sorted: Vec<Trial> = trials.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    // Start above all scores: accept nothing -> FAR 0, FRR 1.
    let mut accepted_targets = 0usize;
    let mut accepted_nontargets = 0usize;
    let mut prev_far = 0.0f64;
    let mut prev_frr = 1.0f64;

    let mut i = 0;
    while i < sorted.len() {
        // Admit every trial tied at this score before evaluating the point.
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                accepted_targets += 1;
            } else {
                accepted_nontargets += 1;
            }
            i += 1;
        }
        let far = accepted_nontargets as f64 / n_nontarget as f64;
        let frr = (n_target - accepted_targets) as f64 / n_target as f64;
        if far >= frr {
            if (far - frr).abs() < 1e-12 {
                return Ok(far as f32);
            }
            // Crossing happened between the previous point (far <= frr) and
            // this one; interpolate linearly along the segment.
            let d_prev = prev_frr - prev_far; // >= 0
            let d_here = far - frr; // > 0
            let t = d_prev / (d_prev + d_here);
            let eer = prev_far + t * (far - prev_far);
            return Ok(eer as f32);
        }
        prev_far = far;
        prev_frr = frr;
    }
    // Accept everything: FAR 1, FRR 0 -> crossing against the last point.
    let d_prev = prev_frr - prev_far;
    let d_here = 1.0;
    let t = d_prev / (d_prev + d_here);
    Ok((prev_far + t * (1.0 - prev_far)) as f32)
}
