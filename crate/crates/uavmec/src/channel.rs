//! Line-of-sight transmission rate model, latency cost, and its analytic
//! spatial gradient.
//!
//! The rate between an MCA at `u` and an MSA at `w` is
//! `B * log2(1 + beta*P / (sigma^2 * ||u - w||^2))`; the latency cost is its
//! reciprocal (seconds per bit).

use thiserror::Error;

use crate::{Vec2, Vec3};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel parameter {0} must be strictly positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("zero distance between transmitter and receiver")]
    ZeroDistance,
}

/// Wideband LoS channel parameters, stored in linear units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Bandwidth allocated to each MSA, Hz.
    pub bandwidth: f64,
    /// MSA transmit power, watts.
    pub tx_power: f64,
    /// Channel gain at the 1 m reference distance, linear.
    pub ref_gain: f64,
    /// White Gaussian noise power, watts.
    pub noise: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ChannelParams {
    pub fn new(bandwidth: f64, tx_power: f64, ref_gain: f64, noise: f64) -> Result<Self, ChannelError> {
        for (name, v) in [
            ("bandwidth", bandwidth),
            ("tx_power", tx_power),
            ("ref_gain", ref_gain),
            ("noise", noise),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::NonPositive(name, v));
            }
        }
        Ok(Self { bandwidth, tx_power, ref_gain, noise })
    }

    /// Build from the config-file units: bandwidth in Hz, power in dBm,
    /// reference gain in dB, noise in dBm.
    pub fn from_db(bandwidth_hz: f64, tx_power_dbm: f64, ref_gain_db: f64, noise_dbm: f64) -> Result<Self, ChannelError> {
        Self::new(
            bandwidth_hz,
            dbm_to_watts(tx_power_dbm),
            db_to_linear(ref_gain_db),
            dbm_to_watts(noise_dbm),
        )
    }

    /// Combined SNR numerator `beta * P / sigma^2` (units m^2 when divided by d^2).
    fn snr_scale(&self) -> f64 {
        self.ref_gain * self.tx_power / self.noise
    }

    /// Maximum transmission rate in bits/s between two 3-D points.
    pub fn max_rate(&self, u: Vec3, w: Vec3) -> Result<f64, ChannelError> {
        let d2 = (u - w).norm_squared();
        if d2 == 0.0 {
            return Err(ChannelError::ZeroDistance);
        }
        Ok(self.bandwidth * (1.0 + self.snr_scale() / d2).log2())
    }

    /// Cost of offloading one bit, s/bit: the reciprocal rate.
    pub fn latency_cost(&self, x: Vec3, y: Vec3) -> Result<f64, ChannelError> {
        Ok(1.0 / self.max_rate(x, y)?)
    }

    /// Rate between a compute-plane point and a sensing-plane point given the
    /// altitude gap between the planes.
    pub fn rate_planar(&self, u: Vec2, x: Vec2, altitude_gap: f64) -> f64 {
        let d2 = (u - x).norm_squared() + altitude_gap * altitude_gap;
        debug_assert!(d2 > 0.0);
        self.bandwidth * (1.0 + self.snr_scale() / d2).log2()
    }

    /// Latency cost between planar points separated vertically by `altitude_gap`.
    pub fn latency_planar(&self, u: Vec2, x: Vec2, altitude_gap: f64) -> f64 {
        1.0 / self.rate_planar(u, x, altitude_gap)
    }

    /// Gradient of the latency cost with respect to the horizontal coordinates
    /// of `u`, for an MCA at `u` (compute plane) and a field point `x`
    /// (sensing plane). The altitude gap keeps the 3-D distance bounded away
    /// from zero. The result points away from `x`: cost grows with distance.
    pub fn latency_gradient(&self, u: Vec2, x: Vec2, altitude_gap: f64) -> Vec2 {
        let diff = u - x;
        let s = diff.norm_squared() + altitude_gap * altitude_gap;
        let a = self.snr_scale();
        let rate = self.bandwidth * (1.0 + a / s).log2();
        // d(omega)/ds = -(1/r^2) dr/ds, dr/ds = -B a / (ln2 * s * (s + a)),
        // ds/du = 2 (u - x).
        let coeff = 2.0 * self.bandwidth * a
            / (std::f64::consts::LN_2 * s * (s + a) * rate * rate);
        diff * coeff
    }
}
