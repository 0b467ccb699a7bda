//! Scalar math helpers. Transcendentals go through `libm` so results are
//! identical with and without the `std` feature.

/// Probabilities are kept inside [PROB_EPS, 1 - PROB_EPS] before any log.
pub(crate) const PROB_EPS: f64 = 1e-7;

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// ln of a clamped probability; never -inf.
#[inline]
pub(crate) fn ln_prob(p: f64) -> f64 {
    ln(clamp_prob(p))
}

/// Numerically stable sigmoid, clamped away from 0 and 1 so downstream
/// logs and ratios stay finite.
#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    };
    clamp_prob(s)
}
