//! Unit conversions at the I/O boundary.
//!
//! Everything inside the crate is in SI angular units (rad/s, s). Frequencies
//! on the command line and in config files are given in units of 2π × kHz.

use std::f64::consts::TAU;

/// One "2π × kHz" expressed in rad/s.
pub const TWO_PI_KHZ: f64 = TAU * 1.0e3;

#[inline]
pub fn from_two_pi_khz(x: f64) -> f64 {
    x * TWO_PI_KHZ
}

#[inline]
pub fn to_two_pi_khz(rad_per_s: f64) -> f64 {
    rad_per_s / TWO_PI_KHZ
}

#[inline]
pub fn from_micros(us: f64) -> f64 {
    us * 1.0e-6
}

#[inline]
pub fn from_millis(ms: f64) -> f64 {
    ms * 1.0e-3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pi_khz_round_trip() {
        let x = 4.2;
        assert!((to_two_pi_khz(from_two_pi_khz(x)) - x).abs() < 1e-15);
        assert!((from_two_pi_khz(1.0) - 6283.185307179586).abs() < 1e-9);
    }
}
