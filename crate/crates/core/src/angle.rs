//! Helpers for angles on the circle `[0, 2π)`.

use std::f64::consts::{PI, TAU};

/// Wraps any finite angle into `[0, 2π)`.
pub fn normalize(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    // rem_euclid can round up to TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Shortest angular separation between two directions, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = normalize(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Counterclockwise arc length travelled from `from` to reach `to`, in `[0, 2π)`.
pub fn ccw_arc(from: f64, to: f64) -> f64 {
    normalize(to - from)
}

pub fn is_valid_direction(phi: f64) -> bool {
    phi.is_finite() && (0.0..TAU).contains(&phi)
}
