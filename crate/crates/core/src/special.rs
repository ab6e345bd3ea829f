//! Small special-function helpers not covered by `statrs`.

/// Trigamma function ψ'(x) for x > 0.
///
/// Upward recurrence ψ'(x) = ψ'(x+1) + 1/x² into the asymptotic region,
/// then the Bernoulli-number expansion through the z⁻¹¹ term. Absolute
/// accuracy is better than 1e-13 over the positive axis.
pub(crate) fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "trigamma requires x > 0");
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    // 1/z + 1/(2z^2) + 1/(6z^3) - 1/(30z^5) + 1/(42z^7) - 1/(30z^9) + 5/(66z^11)
    let tail = 1.0 / 6.0
        + inv2
            * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0))));
    acc + inv * (1.0 + inv * (0.5 + inv * tail))
}
