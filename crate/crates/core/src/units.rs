//! Physical constants and dB helpers shared by the physics modules.

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Speed of light in vacuum, m/s.
pub const C_M_PER_S: f64 = 299_792_458.0;
/// Speed of light in vacuum, km/s.
pub const C_KM_PER_S: f64 = 299_792.458;
/// OSNR reference bandwidth, Hz.
pub const OSNR_REF_BW_HZ: f64 = 12.5e9;

#[inline]
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `10·log10(x)`; `+inf` for `x = inf`, `-inf` for `x = 0`.
#[inline]
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

#[inline]
pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_lin(dbm)
}

#[inline]
pub fn mw_to_dbm(mw: f64) -> f64 {
    lin_to_db(mw)
}

/// Inverse of a linear SNR term, treating an absent (infinite) term as zero noise.
#[inline]
pub fn inv(snr: f64) -> f64 {
    if snr.is_infinite() {
        0.0
    } else {
        1.0 / snr
    }
}

/// Inverse of an inverse-sum; zero noise maps to an infinite SNR.
#[inline]
pub fn from_inv(noise: f64) -> f64 {
    if noise == 0.0 {
        f64::INFINITY
    } else {
        1.0 / noise
    }
}
