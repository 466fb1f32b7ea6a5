//! Conversions between SI seconds and the integer picosecond timebase.

/// Picoseconds per second.
pub const PS_PER_S: f64 = 1e12;

/// Converts seconds to picoseconds, rounding half to even.
pub fn seconds_to_ps(seconds: f64) -> i64 {
    round_ps(seconds * PS_PER_S)
}

/// Quantizes a fractional picosecond value, rounding half to even.
pub fn round_ps(ps: f64) -> i64 {
    ps.round_ties_even() as i64
}

pub fn ps_to_seconds(ps: i64) -> f64 {
    ps as f64 / PS_PER_S
}

/// Converts a period in seconds to whole picoseconds, failing when the value
/// is not representable to within 1e-3 ps.
pub fn exact_period_ps(what: &str, seconds: f64) -> crate::Result<u64> {
    crate::error::require_positive(what, seconds)?;
    let ps = seconds * PS_PER_S;
    let rounded = ps.round();
    if (ps - rounded).abs() > 1e-3 || rounded < 1.0 {
        return Err(crate::Error::config(format!(
            "{what} = {seconds} s is not an integer number of picoseconds"
        )));
    }
    Ok(rounded as u64)
}
