//! Gamma-family special functions.
//!
//! The gamma function uses the Lanczos approximation with `g = 7` and nine
//! coefficients, together with the reflection formula for arguments left of
//! one half. At the poles (non-positive integers) `gamma` returns a signed
//! infinity and `rgamma` returns exactly zero.

use num_complex::Complex64;
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// True when `x` is a non-positive integer.
pub fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

/// `sin(pi x)`, exact at integers and accurate near them.
pub fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).floor(); // [0, 2)
    let (r, sign) = if r >= 1.0 { (r - 1.0, -1.0) } else { (r, 1.0) };
    if r == 0.0 {
        return 0.0;
    }
    let v = if r <= 0.25 {
        (PI * r).sin()
    } else if r <= 0.75 {
        (PI * (0.5 - r)).cos()
    } else {
        (PI * (1.0 - r)).sin()
    };
    sign * v
}

fn lanczos_sum(z: f64) -> f64 {
    LANCZOS
        .iter()
        .enumerate()
        .skip(1)
        .fold(LANCZOS[0], |acc, (i, &c)| acc + c / (z + i as f64))
}

/// Gamma function on the real line.
pub fn gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if is_pole(x) {
        // sign of the limit from the right
        let k = (-x) as i64;
        return if k % 2 == 0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
    }
    if x < 0.5 {
        return PI / (sin_pi(x) * gamma(1.0 - x));
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

/// Reciprocal gamma, zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    if is_pole(x) {
        return 0.0;
    }
    if x < 0.5 {
        return sin_pi(x) * gamma(1.0 - x) / PI;
    }
    1.0 / gamma(x)
}

/// Digamma function psi(x) = Gamma'(x)/Gamma(x).
pub fn digamma(x: f64) -> f64 {
    if is_pole(x) {
        return f64::NAN;
    }
    if x < 0.0 {
        return digamma(1.0 - x) - PI * sin_pi(x + 0.5) / sin_pi(x);
    }
    let mut acc = 0.0;
    let mut x = x;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli tail: 1/12, 1/120, 1/252, 1/240, 1/132, 691/32760, 1/12
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32760.0)))));
    acc + x.ln() - 0.5 / x - tail
}

/// Gamma function for complex arguments.
pub fn gamma_complex(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        return Complex64::new(gamma(z.re), 0.0);
    }
    if z.re < 0.5 {
        let s = (z * PI).sin();
        return Complex64::new(PI, 0.0) / (s * gamma_complex(Complex64::new(1.0, 0.0) - z));
    }
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

/// Reciprocal gamma for complex arguments, zero at the real poles.
pub fn rgamma_complex(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        return Complex64::new(rgamma(z.re), 0.0);
    }
    Complex64::new(1.0, 0.0) / gamma_complex(z)
}

/// Generalized binomial coefficient C(q, s) for whole `s`.
///
/// Equal to Gamma(q+1)/(Gamma(s+1)Gamma(q-s+1)) with the reciprocal-gamma
/// pole convention, so C(q, s) = 0 for whole q < s.
pub fn binomial(q: f64, s: u32) -> f64 {
    (0..s).fold(1.0, |acc, i| acc * (q - i as f64) / (i as f64 + 1.0))
}

pub fn binomial_complex(q: Complex64, s: u32) -> Complex64 {
    (0..s).fold(Complex64::new(1.0, 0.0), |acc, i| {
        acc * (q - i as f64) / (i as f64 + 1.0)
    })
}

/// Ordinary binomial coefficient as an integer.
pub fn choose(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_known_values() {
        assert!((gamma(1.0) - 1.0).abs() < 1e-14);
        assert!((gamma(5.0) - 24.0).abs() < 1e-12);
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(2.5) - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-13);
        assert!((gamma(-1.5) - 4.0 * PI.sqrt() / 3.0).abs() < 1e-13);
    }

    #[test]
    fn poles() {
        assert_eq!(rgamma(0.0), 0.0);
        assert_eq!(rgamma(-3.0), 0.0);
        assert_eq!(gamma(0.0), f64::INFINITY);
        assert_eq!(gamma(-1.0), f64::NEG_INFINITY);
        assert!(rgamma(-2.5).is_finite());
    }

    #[test]
    fn digamma_values() {
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0) + euler).abs() < 1e-14);
        assert!((digamma(3.0) - (1.5 - euler)).abs() < 1e-14);
        assert!((digamma(0.5) - (-euler - 2.0 * 2f64.ln())).abs() < 1e-13);
        // psi(1-x) - psi(x) = pi cot(pi x)
        let x = -0.3;
        assert!((digamma(1.0 - x) - digamma(x) - PI / (PI * x).tan()).abs() < 1e-12);
    }

    #[test]
    fn complex_gamma_matches_real_and_recurrence() {
        let z = Complex64::new(0.7, 1.3);
        let lhs = gamma_complex(z + 1.0);
        let rhs = z * gamma_complex(z);
        assert!((lhs - rhs).norm() < 1e-13);
        let w = Complex64::new(-1.2, 0.4);
        let lhs = gamma_complex(w + 1.0);
        let rhs = w * gamma_complex(w);
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn binomial_pole_convention() {
        assert_eq!(binomial(2.0, 3), 0.0);
        assert_eq!(binomial(3.0, 2), 3.0);
        assert!((binomial(0.5, 2) + 0.125).abs() < 1e-16);
        assert_eq!(choose(5, 2), 10);
    }
}
