//! Scalar special functions used by the activation zoo.
//!
//! `erf` uses the all-positive-term series `erf(x) = 2/sqrt(pi) * exp(-x^2) * sum (2x^2)^n x / (2n+1)!!`
//! below [`ERF_SWITCH`] and the Laplace continued fraction for `erfc` above it, so neither branch
//! suffers from cancellation. `digamma`/`trigamma` shift the argument upward with the recurrence and
//! finish with the asymptotic expansion.

use rand::Rng;
use std::f64::consts::PI;

/// Crossover between the series (below) and the continued fraction (above).
const ERF_SWITCH: f64 = 2.0;

/// Beyond this magnitude `erf` saturates to exactly +-1.
const ERF_SATURATION: f64 = 6.0;

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Uniform clamp used by [`sample_gumbel`].
pub const GUMBEL_EPS: f64 = 1e-12;

/// Error function.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let magnitude = if ax >= ERF_SATURATION {
        1.0
    } else if ax < ERF_SWITCH {
        erf_series(ax)
    } else {
        1.0 - erfc_continued_fraction(ax)
    };
    if x < 0.0 {
        -magnitude
    } else {
        magnitude
    }
}

/// Complementary error function, `1 - erf(x)`.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x >= ERF_SWITCH {
        erfc_continued_fraction(x)
    } else if x <= -ERF_SWITCH {
        2.0 - erfc_continued_fraction(-x)
    } else {
        1.0 - erf(x)
    }
}

fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 || n > 200.0 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

/// erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))) for x > 0,
/// evaluated with the modified Lentz method.
fn erfc_continued_fraction(x: f64) -> f64 {
    if x > 27.3 {
        return 0.0;
    }
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * PI.sqrt())
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Digamma function psi(x). Poles (non-positive integers) give NaN.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY || is_pole(x) {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return f64::INFINITY;
    }
    if x < 0.0 {
        // psi(1 - x) - psi(x) = pi * cot(pi x)
        return digamma(1.0 - x) - PI / (PI * x).tan();
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: -sum B_2k / (2k x^2k)
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - tail
}

/// Trigamma function psi'(x), the derivative of [`digamma`]. Poles give NaN.
pub fn trigamma(x: f64) -> f64 {
    if x.is_nan() || x == f64::NEG_INFINITY || is_pole(x) {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < 0.0 {
        // psi1(1 - x) + psi1(x) = pi^2 / sin^2(pi x)
        let s = (PI * x).sin();
        return PI * PI / (s * s) - trigamma(1.0 - x);
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2
                            * (1.0 / 42.0
                                - inv2
                                    * (1.0 / 30.0
                                        - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    acc + series
}

/// Maps a uniform variate to a standard Gumbel variate, `-ln(-ln u)`, after clamping
/// `u` into `[GUMBEL_EPS, 1 - GUMBEL_EPS]`.
pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
    -(-u.ln()).ln()
}

/// Draws one standard Gumbel variate.
pub fn sample_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    gumbel_from_uniform(rng.random::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn erf_basic_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-14);
        assert_eq!(erf(-1.0), -erf(1.0));
        assert_eq!(erf(7.0), 1.0);
        assert_eq!(erf(-7.0), -1.0);
        assert!(erf(f64::NAN).is_nan());
    }

    #[test]
    fn erfc_tail() {
        assert_eq!(erfc(0.0), 1.0);
        assert!((erfc(1.0) - 0.157_299_207_050_285_1).abs() < 1e-14);
        assert!((erfc(5.0) - 1.537_459_794_428_034_8e-12).abs() < 1e-14);
        assert!((erfc(-5.0) - (2.0 - 1.537_459_794_428_034_8e-12)).abs() < 1e-15);
    }

    #[test]
    fn erf_switch_is_continuous() {
        let below = erf(ERF_SWITCH - 1e-12);
        let above = erf(ERF_SWITCH + 1e-12);
        assert!((below - above).abs() < 1e-13);
    }

    #[test]
    fn digamma_known_constants() {
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0) + euler).abs() < 1e-12);
        assert!((digamma(2.0) - (1.0 - euler)).abs() < 1e-12);
        assert!((digamma(0.5) - (-euler - 2.0 * 2f64.ln())).abs() < 1e-12);
        assert!(digamma(0.0).is_nan());
        assert!(digamma(-3.0).is_nan());
        // psi(-0.5) = psi(0.5) + 2
        assert!((digamma(-0.5) - (digamma(0.5) + 2.0)).abs() < 1e-10);
    }

    #[test]
    fn trigamma_known_constants() {
        assert!((trigamma(1.0) - PI * PI / 6.0).abs() < 1e-12);
        assert!((trigamma(0.5) - PI * PI / 2.0).abs() < 1e-11);
        assert!(trigamma(-2.0).is_nan());
    }

    #[test]
    fn gumbel_fixed_point_and_clamp() {
        assert_eq!(gumbel_from_uniform((-1.0f64).exp()), 0.0);
        assert!(gumbel_from_uniform(0.0).is_finite());
        assert!(gumbel_from_uniform(1.0).is_finite());
    }

    #[test]
    fn gumbel_stream_is_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(sample_gumbel(&mut a).to_bits(), sample_gumbel(&mut b).to_bits());
        }
    }
}
