//! Log-gamma, digamma and trigamma for positive real arguments.
//!
//! All three use the same scheme: shift the argument upward with the
//! recurrence until it reaches [`ASYMPTOTIC_THRESHOLD`], then evaluate the
//! Stirling-type asymptotic series. With the threshold at 10 the first
//! omitted term is below 1e-16 relative, so the error is dominated by the
//! rounding in the recurrence sum.

use crate::error::{Error, Result};

const ASYMPTOTIC_THRESHOLD: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// B_{2k} / (2k (2k - 1)) for k = 1..7, the Stirling series for ln Γ.
const LGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
];

/// B_{2k} / (2k) for k = 1..7.
const DIGAMMA_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

/// B_{2k} for k = 1..7.
const TRIGAMMA_SERIES: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

fn check_domain(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} requires a finite positive argument, got {x}")))
    }
}

/// Natural logarithm of the gamma function, `ln Γ(x)`, for `x > 0`.
pub fn lgamma(x: f64) -> Result<f64> {
    check_domain("lgamma", x)?;
    // Γ(1) = Γ(2) = 1; the recurrence would leave a rounding residue here.
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < ASYMPTOTIC_THRESHOLD {
        product *= shifted;
        shifted += 1.0;
    }
    let inv = 1.0 / shifted;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut power = inv;
    for c in LGAMMA_SERIES {
        series += c * power;
        power *= inv2;
    }
    let stirling = (shifted - 0.5) * shifted.ln() - shifted + HALF_LN_2PI + series;
    Ok(stirling - product.ln())
}

/// Digamma function `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_domain("digamma", x)?;
    let mut shifted = x;
    let mut acc = 0.0;
    while shifted < ASYMPTOTIC_THRESHOLD {
        acc -= 1.0 / shifted;
        shifted += 1.0;
    }
    let inv2 = 1.0 / (shifted * shifted);
    let mut series = 0.0;
    let mut power = inv2;
    for c in DIGAMMA_SERIES {
        series += c * power;
        power *= inv2;
    }
    Ok(acc + shifted.ln() - 0.5 / shifted - series)
}

/// Trigamma function `ψ'(x)` for `x > 0`. Only the KL gradient needs it.
pub fn trigamma(x: f64) -> Result<f64> {
    check_domain("trigamma", x)?;
    let mut shifted = x;
    let mut acc = 0.0;
    while shifted < ASYMPTOTIC_THRESHOLD {
        acc += 1.0 / (shifted * shifted);
        shifted += 1.0;
    }
    let inv = 1.0 / shifted;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut power = inv2 * inv;
    for c in TRIGAMMA_SERIES {
        series += c * power;
        power *= inv2;
    }
    Ok(acc + inv + 0.5 * inv2 + series)
}
