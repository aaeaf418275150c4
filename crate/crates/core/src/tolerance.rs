//! Floating-point comparison policy shared by the engine and its tests.

pub const RELATIVE: f64 = 1e-9;
pub const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Largest difference from `reference` still treated as equal.
pub fn slack(reference: f64) -> f64 {
    (RELATIVE * reference.abs()).max(ABSOLUTE_FLOOR)
}

pub fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= slack(a.abs().max(b.abs()))
}

/// `a < b` by more than the tolerance.
pub fn definitely_less(a: f64, b: f64) -> bool {
    b - a > slack(a.abs().max(b.abs()))
}
