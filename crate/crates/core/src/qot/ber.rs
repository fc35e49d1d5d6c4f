//! Pre-FEC BER ↔ SNR ↔ Q conversions.
//!
//! `BER = κ₁·erfc(√(κ₂·SNR))` with SNR the per-symbol linear ratio.

use libm::erfc;
use serde::{Deserialize, Serialize};

use super::QotError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "16QAM")]
    Qam16,
}

impl Modulation {
    pub fn constants(self) -> ModulationConstants {
        match self {
            // Gray-coded QPSK, same SNR convention as the 16QAM pair.
            Modulation::Qpsk => ModulationConstants {
                modulation: self,
                kappa1: 0.5,
                kappa2: 0.5,
            },
            Modulation::Qam16 => ModulationConstants {
                modulation: self,
                kappa1: 3.0 / 8.0,
                kappa2: 1.0 / 10.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationConstants {
    pub modulation: Modulation,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl From<Modulation> for ModulationConstants {
    fn from(m: Modulation) -> Self {
        m.constants()
    }
}

/// `κ₁·erfc(√(κ₂·snr))`; strictly decreasing in `snr`.
pub fn ber_from_snr(snr: f64, m: impl Into<ModulationConstants>) -> f64 {
    let m = m.into();
    m.kappa1 * erfc((m.kappa2 * snr.max(0.0)).sqrt())
}

const BISECTION_HI: f64 = 1e6;
const BISECTION_MAX_ITER: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-12;

/// Inverts [`ber_from_snr`] by bisection on `[0, 1e6]`.
pub fn snr_from_ber(ber: f64, m: impl Into<ModulationConstants>) -> Result<f64, QotError> {
    let m = m.into();
    if !(ber > 0.0 && ber < m.kappa1) {
        return Err(QotError::OutOfRange {
            what: "ber",
            value: ber,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, BISECTION_HI);
    if ber_from_snr(hi, m) > ber {
        return Err(QotError::OutOfRange {
            what: "ber",
            value: ber,
        });
    }
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = ber_from_snr(mid, m);
        if ((f - ber) / ber).abs() <= BISECTION_REL_TOL {
            return Ok(mid);
        }
        if f > ber {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `erfc⁻¹(y)` for `y ∈ (0, 2)`: library estimate polished by Newton steps
/// against [`erfc`].
pub fn erfc_inv(y: f64) -> f64 {
    let mut x = statrs::function::erf::erfc_inv(y);
    for _ in 0..3 {
        let slope = -2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
        if slope == 0.0 {
            break;
        }
        let step = (erfc(x) - y) / slope;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Q-factor in dB: `20·log10(√2·erfc⁻¹(2·ber))`.
pub fn q_from_ber(ber: f64) -> Result<f64, QotError> {
    if !(ber > 0.0 && ber < 0.5) {
        return Err(QotError::OutOfRange {
            what: "ber",
            value: ber,
        });
    }
    let q = std::f64::consts::SQRT_2 * erfc_inv(2.0 * ber);
    if !(q >= 1e-6) {
        return Err(QotError::OutOfRange {
            what: "q",
            value: q,
        });
    }
    Ok(20.0 * q.log10())
}

/// Inverse of [`q_from_ber`]: `ber = ½·erfc(q/√2)`.
pub fn ber_from_q(q_db: f64) -> f64 {
    let q = 10f64.powf(q_db / 20.0);
    0.5 * erfc(q / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Maclaurin series for erf, summed until terms vanish; accurate to
    /// ~1e-15 on [0, 3]. Independent of the library implementation.
    fn erfc_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn erfc_matches_series_oracle() {
        for i in 0..=60 {
            let x = i as f64 * 0.05;
            assert!((erfc(x) - erfc_series(x)).abs() < 1e-12, "x={x} lib={:e} series={:e}", erfc(x), erfc_series(x));
        }
    }

    #[test]
    fn ber_examples() {
        assert_eq!(ber_from_snr(0.0, Modulation::Qam16), 0.375);
        assert!((ber_from_snr(10.0, Modulation::Qam16) - 0.0589872).abs() < 1e-7);
        assert!((ber_from_snr(10.0, Modulation::Qam16) - 0.375 * erfc_series(1.0)).abs() < 1e-14);
        assert!((ber_from_snr(4.0, Modulation::Qpsk) - 0.0227501).abs() < 1e-7);
    }

    #[test]
    fn snr_from_ber_examples() {
        let s = snr_from_ber(0.058_987_202_643_856_92, Modulation::Qam16).unwrap();
        assert!((s - 10.0).abs() < 1e-9);
        // frozen from an mpmath root solve: 18.667217838457
        let s = snr_from_ber(2.0e-2, Modulation::Qam16).unwrap();
        assert!((s - 18.667_217_838_457).abs() < 1e-8);
        assert!((10.0 * s.log10() - 12.71).abs() < 0.005);
        let s = snr_from_ber(2.0e-2, Modulation::Qpsk).unwrap();
        assert!((s - 4.217_884_587_921_4).abs() < 1e-8);
        assert!(matches!(
            snr_from_ber(0.4, Modulation::Qam16),
            Err(QotError::OutOfRange { .. })
        ));
        assert!(snr_from_ber(0.0, Modulation::Qam16).is_err());
    }

    #[test]
    fn q_examples() {
        // 20·log10(3.090232306) = 9.7998 dB
        let q = q_from_ber(1e-3).unwrap();
        assert!((q - 9.799_822_569).abs() < 1e-6);
        for b in [1e-2, 1e-3, 1e-4] {
            let back = ber_from_q(q_from_ber(b).unwrap());
            assert!(((back - b) / b).abs() < 1e-9);
        }
        assert!(q_from_ber(0.5 - 1e-15).is_err());
        assert!(q_from_ber(0.6).is_err());
    }

    #[test]
    fn roundtrip_sweep() {
        for m in [Modulation::Qpsk, Modulation::Qam16] {
            let k1 = m.constants().kappa1;
            let mut ber = 1e-6;
            while ber < k1 - 1e-6 {
                let s = snr_from_ber(ber, m).unwrap();
                let back = ber_from_snr(s, m);
                assert!(((back - ber) / ber).abs() < 1e-9, "{m:?} ber={ber}");
                ber *= 1.07;
            }
        }
    }

    #[test]
    fn strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..500 {
            let b = ber_from_snr(i as f64 * 0.2, Modulation::Qam16);
            assert!(b < prev);
            prev = b;
        }
    }
}
