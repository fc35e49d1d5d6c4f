//! Synthetic longitudinal power profiles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LineState, TwinError};
use crate::qot::StageKind;
use crate::units::{dbm_to_mw, lin_to_db};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub distance_km: f64,
    pub relative_power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub samples: Vec<ProfileSample>,
    pub resolution_km: f64,
    /// `None` for the aggregate over all channels.
    pub channel: Option<usize>,
    pub noise_sigma_db: f64,
}

impl PowerProfile {
    pub fn distances(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.distance_km).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.relative_power_db).collect()
    }

    /// Sample-wise `self − baseline`; both profiles must share a grid.
    pub fn difference(&self, baseline: &PowerProfile) -> PowerProfile {
        PowerProfile {
            samples: self
                .samples
                .iter()
                .zip(&baseline.samples)
                .map(|(a, b)| ProfileSample {
                    distance_km: a.distance_km,
                    relative_power_db: a.relative_power_db - b.relative_power_db,
                })
                .collect(),
            ..self.clone()
        }
    }

    /// `distance_km,relative_power_db` table with one header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("distance_km,relative_power_db\n");
        for s in &self.samples {
            out.push_str(&format!("{:.3},{:.6}\n", s.distance_km, s.relative_power_db));
        }
        out
    }
}

/// Sample grid `0, r, 2r, …` plus the link end if it is off the grid.
fn sample_points(length_km: f64, resolution_km: f64) -> Vec<f64> {
    let n = (length_km / resolution_km + 1e-9).floor() as usize;
    let mut xs: Vec<f64> = (0..=n).map(|k| k as f64 * resolution_km).collect();
    if length_km - xs[n] > 1e-9 {
        xs.push(length_km);
    }
    xs
}

/// Signal power (mW, per channel) at distance `x`. Lumped elements at
/// positions `≤ x` are included for `x > 0`; `x = 0` is the launch.
fn signal_at(state: &LineState, x: f64) -> Vec<f64> {
    let launch: Vec<f64> = state.launch_dbm.iter().map(|&p| dbm_to_mw(p)).collect();
    if x <= 0.0 {
        return launch;
    }
    let mut current = &launch;
    for (st, rec) in state.stages.iter().zip(&state.records) {
        match &st.kind {
            StageKind::Fiber { .. } => {
                let (start, end) = (st.position_km, st.position_km + st.length_km());
                if end <= x {
                    current = &rec.signal_mw;
                    continue;
                }
                if start < x {
                    // exponential decay is linear in dB
                    let t = (x - start) / (end - start);
                    return current
                        .iter()
                        .zip(&rec.signal_mw)
                        .map(|(a, b)| 10f64.powf((1.0 - t) * a.log10() + t * b.log10()))
                        .collect();
                }
                return current.clone();
            }
            _ => {
                if st.position_km <= x {
                    current = &rec.signal_mw;
                } else {
                    return current.clone();
                }
            }
        }
    }
    current.clone()
}

/// Samples the ground-truth longitudinal signal power relative to launch and
/// adds independent Gaussian noise of `noise_sigma_db` per sample.
pub fn synthesize_profile(
    state: &LineState,
    resolution_km: f64,
    noise_sigma_db: f64,
    seed: u64,
    channel: Option<usize>,
) -> Result<PowerProfile, TwinError> {
    if !(0.1..=5.0).contains(&resolution_km) {
        return Err(TwinError::InvalidResolution(resolution_km));
    }
    let power = |p: &[f64]| -> f64 {
        match channel {
            Some(i) => p[i],
            None => p.iter().sum(),
        }
    };
    let launch: Vec<f64> = state.launch_dbm.iter().map(|&p| dbm_to_mw(p)).collect();
    let reference = lin_to_db(power(&launch));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma_db.max(0.0)).expect("finite sigma");
    let samples = sample_points(state.length_km, resolution_km)
        .into_iter()
        .map(|x| {
            let truth = lin_to_db(power(&signal_at(state, x))) - reference;
            let noise = if noise_sigma_db > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            ProfileSample {
                distance_km: x,
                relative_power_db: truth + noise,
            }
        })
        .collect();
    Ok(PowerProfile {
        samples,
        resolution_km,
        channel,
        noise_sigma_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::linetwin::{propagate, FaultKind, FaultSet};

    fn state() -> LineState {
        let link = fixtures::four_span_link();
        let g = fixtures::reference_grid();
        propagate(&link, &g, &vec![0.0; g.count], &[]).unwrap()
    }

    #[test]
    fn noiseless_profile_matches_ground_truth() {
        let s = state();
        let p = synthesize_profile(&s, 0.5, 0.0, 1, None).unwrap();
        assert_eq!(p.samples.len(), 641);
        assert_eq!(p.samples[0].relative_power_db, 0.0);
        // 40 km into the first span: 0.2 dB/km
        assert!((p.samples[80].relative_power_db + 8.0).abs() < 1e-9);
        let out: f64 = s.output_record().unwrap().signal_mw.iter().sum();
        let last = p.samples.last().unwrap();
        assert!((last.relative_power_db - (lin_to_db(out) - lin_to_db(s.launch_total_mw()))).abs() < 1e-9);
        assert!(p.samples.windows(2).all(|w| w[1].distance_km > w[0].distance_km));
    }

    #[test]
    fn amplifiers_appear_as_gain_jumps() {
        let p = synthesize_profile(&state(), 0.5, 0.0, 1, None).unwrap();
        let v = p.values();
        // sample 160 is at 80 km, right after the first amplifier
        assert!(v[160] - v[159] > 10.0);
    }

    #[test]
    fn same_seed_same_profile() {
        let s = state();
        let a = synthesize_profile(&s, 0.5, 0.1, 42, None).unwrap();
        let b = synthesize_profile(&s, 0.5, 0.1, 42, None).unwrap();
        let c = synthesize_profile(&s, 0.5, 0.1, 43, None).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(synthesize_profile(&s, 0.05, 0.0, 1, None).is_err());
    }

    #[test]
    fn step_fault_lowers_downstream_samples_exactly() {
        let link = fixtures::four_span_link();
        let t = fixtures::single_link_topology(link.clone());
        let g = fixtures::reference_grid();
        let mut faults = FaultSet::default();
        faults
            .set_fault(
                &t,
                FaultKind::StepLoss {
                    link_id: link.id.clone(),
                    distance_km: 160.0,
                },
                2.0,
            )
            .unwrap();
        let clean = synthesize_profile(&state(), 0.5, 0.0, 1, None).unwrap();
        let s = propagate(&link, &g, &vec![0.0; g.count], &faults.active()).unwrap();
        let faulty = synthesize_profile(&s, 0.5, 0.0, 1, None).unwrap();
        let d = faulty.difference(&clean);
        for smp in &d.samples {
            let expect = if smp.distance_km >= 160.0 { -2.0 } else { 0.0 };
            assert!((smp.relative_power_db - expect).abs() < 1e-9, "{smp:?}");
        }
        assert!(d.to_csv().starts_with("distance_km,relative_power_db\n0.000,"));
    }

    #[test]
    fn off_grid_length_adds_end_sample() {
        assert_eq!(sample_points(1.2, 0.5), vec![0.0, 0.5, 1.0, 1.2]);
        assert_eq!(sample_points(1.0, 0.5).len(), 3);
    }
}
