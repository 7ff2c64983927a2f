//! Float helpers, routed through libm when building without std.

/// Euclidean distance between equal-length vectors.
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

#[cfg(any(feature = "std", test))]
#[inline]
pub(crate) fn round(x: f64) -> f64 {
    x.round()
}

#[cfg(not(any(feature = "std", test)))]
#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[cfg(any(feature = "std", test))]
#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(not(any(feature = "std", test)))]
#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[cfg(any(feature = "std", test))]
#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    x.abs()
}

#[cfg(not(any(feature = "std", test)))]
#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}
