//! Unit conventions.
//!
//! Inputs follow the "X/2π" habit of quoting angular rates as ordinary
//! frequencies in Hz. Internally the dynamics run with time in µs and angular
//! frequencies in rad/µs, which keeps GHz-scale detunings at O(10³).

use std::f64::consts::PI;

/// Boltzmann constant, J/K (exact, SI 2019).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant, J·s (exact, SI 2019).
pub const HBAR: f64 = 1.054_571_817e-34;

/// `X/2π` in Hz → `X` in rad/µs.
pub fn hz_to_rad_per_us(hz: f64) -> f64 {
    2.0 * PI * hz * 1e-6
}

/// `X` in rad/µs → `X/2π` in Hz.
pub fn rad_per_us_to_hz(w: f64) -> f64 {
    w * 1e6 / (2.0 * PI)
}

/// `X/2π` in Hz → `X` in rad/s.
pub fn hz_to_rad_per_s(hz: f64) -> f64 {
    2.0 * PI * hz
}
