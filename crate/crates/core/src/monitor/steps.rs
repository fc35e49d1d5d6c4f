//! Windowed step detection on longitudinal power profiles.

use serde::{Deserialize, Serialize};

use super::MonitorError;
use crate::linetwin::PowerProfile;

/// Samples averaged on each side of a candidate step.
pub const STEP_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossEvent {
    pub distance_km: f64,
    /// Size of the drop, positive dB.
    pub magnitude_db: f64,
    pub confidence: f64,
}

/// A step found in a sample sequence: index of the first sample after the
/// step, signed size and a [0, 1] confidence.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Step {
    index: usize,
    size: f64,
    confidence: f64,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1).max(1) as f64
}

/// Difference of the means of the `w` samples after and before boundary `i`.
fn window_diff(v: &[f64], i: usize, w: usize) -> f64 {
    mean(&v[i..i + w]) - mean(&v[i - w..i])
}

/// Boundary in `[lo, hi]` that best separates the samples around `p` into a
/// before-level and an after-level split at their midpoint.
fn half_crossing(v: &[f64], p: usize, w: usize, sign: f64) -> usize {
    let before = mean(&v[p - w..p]);
    let after = mean(&v[p..p + w]);
    let mid = 0.5 * (before + after);
    let lo = p - w / 2;
    let hi = (p + w / 2).min(v.len() - w);
    let wrong = |j: usize| -> usize {
        (p - w..p + w)
            .filter(|&i| {
                let above = sign * (v[i] - mid) > 0.0;
                if i < j {
                    above
                } else {
                    !above
                }
            })
            .count()
    };
    (lo.max(w)..=hi)
        .min_by_key(|&j| (wrong(j), j.abs_diff(p)))
        .unwrap_or(p)
}

/// Persistent steps of sign `sign` (±1) and size at least `min_step` in `v`.
fn find_steps(v: &[f64], min_step: f64, sign: f64) -> Vec<Step> {
    let w = STEP_WINDOW;
    if v.len() < 2 * w {
        return Vec::new();
    }
    let score: Vec<(usize, f64)> = (w..=v.len() - w).map(|i| (i, sign * window_diff(v, i, w))).collect();
    let mut steps = Vec::new();
    let mut k = 0;
    while k < score.len() {
        if score[k].1 < min_step {
            k += 1;
            continue;
        }
        let start = k;
        while k < score.len() && score[k].1 >= min_step {
            k += 1;
        }
        let region = &score[start..k];
        let peak = region
            .iter()
            .copied()
            .fold(region[0], |best, c| if c.1 > best.1 { c } else { best })
            .0;
        let j = half_crossing(v, peak, w, sign);
        let size = window_diff(v, j, w);
        if sign * size < min_step {
            continue;
        }
        let se = ((var(&v[j - w..j]) + var(&v[j..j + w])) / w as f64).sqrt();
        let confidence = if se > 0.0 {
            size.abs() / (size.abs() + 3.0 * se)
        } else {
            1.0
        };
        steps.push(Step {
            index: j,
            size,
            confidence,
        });
    }
    steps
}

fn same_grid(a: &PowerProfile, b: &PowerProfile) -> bool {
    a.samples.len() == b.samples.len()
        && a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| (x.distance_km - y.distance_km).abs() < 1e-9)
}

/// Downward steps of at least `min_step_db` in `current − baseline`.
pub fn localize_step_loss(
    baseline: &PowerProfile,
    current: &PowerProfile,
    min_step_db: f64,
) -> Result<Vec<LossEvent>, MonitorError> {
    if !same_grid(baseline, current) {
        return Err(MonitorError::GridMismatch {
            baseline: baseline.samples.len(),
            current: current.samples.len(),
        });
    }
    let d = current.difference(baseline);
    let v = d.values();
    Ok(find_steps(&v, min_step_db, -1.0)
        .into_iter()
        .map(|s| LossEvent {
            distance_km: d.samples[s.index].distance_km,
            magnitude_db: -s.size,
            confidence: s.confidence,
        })
        .collect())
}

/// Distances of upward steps of at least `min_jump_db` in `p`.
pub fn detect_amplifier_positions(p: &PowerProfile, min_jump_db: f64) -> Vec<f64> {
    find_steps(&p.values(), min_jump_db, 1.0)
        .into_iter()
        .map(|s| p.samples[s.index].distance_km)
        .collect()
}
