//! Thin wrappers over `libm` so that every build (std or not) uses the same
//! floating point routines.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn tan(x: f64) -> f64 {
    libm::tan(x)
}

#[inline]
pub fn atan(x: f64) -> f64 {
    libm::atan(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

#[inline]
pub fn deg_to_rad(d: f64) -> f64 {
    d * core::f64::consts::PI / 180.0
}

#[inline]
pub fn rad_to_deg(r: f64) -> f64 {
    r * 180.0 / core::f64::consts::PI
}

/// Nearest-rank percentile of `values` (1-based rank `ceil(p/100 * n)`),
/// with `p` given in whole percent so the rank is computed in integers.
///
/// Returns `None` for an empty slice or when any value is NaN.
pub fn nearest_rank_percentile(values: &[f64], percent: u32) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let n = values.len();
    let percent = percent.clamp(1, 100) as usize;
    let rank = (percent * n).div_ceil(100).max(1);
    let mut sorted = alloc::vec::Vec::from(values);
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    Some(sorted[rank - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_rank_is_integer_exact() {
        let mut v = [1.0; 20];
        v[7] = 50.0;
        assert_eq!(nearest_rank_percentile(&v, 95), Some(1.0));
        let w: alloc::vec::Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&w, 95), Some(95.0));
        assert_eq!(nearest_rank_percentile(&[3.0], 95), Some(3.0));
        assert_eq!(nearest_rank_percentile(&[], 95), None);
        assert_eq!(nearest_rank_percentile(&[f64::NAN, 1.0], 95), None);
    }
}
