use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Delay of the source wavelet, in periods of its peak frequency.
pub const RICKER_DELAY_PERIODS: f64 = 1.2;

/// Ricker (Mexican-hat) wavelet with peak frequency `f`, sampled at `dt`
/// for `nt` samples and centered at `t0`:
/// `w(t) = (1 - 2π²f²(t-t0)²)·exp(-π²f²(t-t0)²)`.
pub fn ricker_wavelet(f: f64, dt: f64, nt: usize, t0: f64) -> Result<Vec<f64>> {
    if !(f > 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ricker wavelet needs positive frequency and step, got f={f}, dt={dt}"
        )));
    }
    if t0 < 1.0 / f - 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "delay t0={t0} s is shorter than one period 1/f={} s",
            1.0 / f
        )));
    }
    if (nt as f64) * dt < t0 {
        log::warn!("ricker wavelet truncated: {nt} samples of {dt} s end before t0={t0} s");
    }
    Ok((0..nt).map(|i| ricker_at(f, i as f64 * dt - t0)).collect())
}

/// Closed form at offset `tau = t - t0`.
pub fn ricker_at(f: f64, tau: f64) -> f64 {
    let a = (PI * f * tau).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Delay used for a source of peak frequency `f`.
pub fn default_delay(f: f64) -> f64 {
    RICKER_DELAY_PERIODS / f
}
