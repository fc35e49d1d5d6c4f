//! Piecewise-linear change-point fit of a power profile.

use serde::{Deserialize, Serialize};

use super::MonitorError;
use crate::linetwin::{PowerProfile, ProfileSample};

/// Shortest segment the fit will create, in samples.
pub const MIN_SEGMENT: usize = 5;
pub const MIN_DENOISE_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedSegment {
    pub start_km: f64,
    pub end_km: f64,
    /// dB/km; ≈ −α inside a span.
    pub slope_db_per_km: f64,
    pub intercept_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoisedProfile {
    pub profile: PowerProfile,
    pub segments: Vec<FittedSegment>,
    /// Distances of the first sample of every segment after the first.
    pub change_points_km: Vec<f64>,
    pub noise_sigma_db: f64,
}

impl DenoisedProfile {
    /// Slope of the longest segment.
    pub fn dominant_slope(&self) -> f64 {
        self.segments
            .iter()
            .max_by(|a, b| (a.end_km - a.start_km).total_cmp(&(b.end_km - b.start_km)))
            .map(|s| s.slope_db_per_km)
            .unwrap_or(0.0)
    }
}

/// Prefix sums for O(1) least-squares line fits on any sample range.
struct Sums {
    x: Vec<f64>,
    xx: Vec<f64>,
    y: Vec<f64>,
    yy: Vec<f64>,
    xy: Vec<f64>,
}

impl Sums {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let mut s = Sums {
            x: vec![0.0],
            xx: vec![0.0],
            y: vec![0.0],
            yy: vec![0.0],
            xy: vec![0.0],
        };
        for (&x, &y) in xs.iter().zip(ys) {
            s.x.push(s.x.last().unwrap() + x);
            s.xx.push(s.xx.last().unwrap() + x * x);
            s.y.push(s.y.last().unwrap() + y);
            s.yy.push(s.yy.last().unwrap() + y * y);
            s.xy.push(s.xy.last().unwrap() + x * y);
        }
        s
    }

    /// `(slope, intercept, rss)` of the fit on samples `a..b`.
    fn fit(&self, a: usize, b: usize) -> (f64, f64, f64) {
        let n = (b - a) as f64;
        let sx = self.x[b] - self.x[a];
        let sxx = self.xx[b] - self.xx[a];
        let sy = self.y[b] - self.y[a];
        let syy = self.yy[b] - self.yy[a];
        let sxy = self.xy[b] - self.xy[a];
        let cxx = sxx - sx * sx / n;
        let cxy = sxy - sx * sy / n;
        let cyy = syy - sy * sy / n;
        if cxx <= 0.0 {
            return (0.0, sy / n, cyy.max(0.0));
        }
        let slope = cxy / cxx;
        let intercept = (sy - slope * sx) / n;
        (slope, intercept, (cyy - slope * cxy).max(0.0))
    }
}

/// Robust white-noise level from second differences.
fn noise_sigma(v: &[f64]) -> f64 {
    let mut d2: Vec<f64> = v.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).collect();
    if d2.is_empty() {
        return 0.0;
    }
    d2.sort_by(f64::total_cmp);
    let med = d2[d2.len() / 2];
    1.4826 * med / 6f64.sqrt()
}

/// Greedy binary segmentation: keep splitting the segment whose best split
/// lowers the residual sum of squares most, while the gain beats a
/// BIC-style penalty.
pub fn denoise_profile(p: &PowerProfile) -> Result<DenoisedProfile, MonitorError> {
    let n = p.samples.len();
    if n < MIN_DENOISE_SAMPLES {
        return Err(MonitorError::TooFewSamples(n));
    }
    let xs = p.distances();
    let ys = p.values();
    let sums = Sums::new(&xs, &ys);
    let sigma = noise_sigma(&ys);
    let penalty = (8.0 * (n as f64).ln() * sigma * sigma).max(1e-9);

    let best_split = |a: usize, b: usize| -> Option<(usize, f64)> {
        let whole = sums.fit(a, b).2;
        (a + MIN_SEGMENT..=b.saturating_sub(MIN_SEGMENT))
            .map(|t| (t, whole - sums.fit(a, t).2 - sums.fit(t, b).2))
            .max_by(|x, y| x.1.total_cmp(&y.1))
    };

    let mut bounds = vec![0, n];
    loop {
        let cand = bounds
            .windows(2)
            .filter_map(|w| best_split(w[0], w[1]))
            .max_by(|x, y| x.1.total_cmp(&y.1));
        match cand {
            Some((t, gain)) if gain > penalty => {
                let at = bounds.partition_point(|&b| b < t);
                bounds.insert(at, t);
            }
            _ => break,
        }
    }

    let mut fitted = Vec::with_capacity(n);
    let mut segments = Vec::new();
    for w in bounds.windows(2) {
        let (slope, intercept, _) = sums.fit(w[0], w[1]);
        for i in w[0]..w[1] {
            fitted.push(ProfileSample {
                distance_km: xs[i],
                relative_power_db: intercept + slope * xs[i],
            });
        }
        segments.push(FittedSegment {
            start_km: xs[w[0]],
            end_km: xs[w[1] - 1],
            slope_db_per_km: slope,
            intercept_db: intercept,
        });
    }
    let change_points_km = bounds[1..bounds.len() - 1].iter().map(|&b| xs[b]).collect();
    Ok(DenoisedProfile {
        profile: PowerProfile {
            samples: fitted,
            ..p.clone()
        },
        segments,
        change_points_km,
        noise_sigma_db: sigma,
    })
}
