//! Two-sided Welch t-test.

use thiserror::Error;

use crate::stats::{mean, sample_variance};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum WelchError {
    #[error("each sample needs at least two values (got {0} and {1})")]
    InsufficientData(usize, usize),
}

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Welch statistic, Welch–Satterthwaite degrees of freedom and two-sided p-value.
/// Two constant samples give p = 1 when equal and p = 0 otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<f64, WelchError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(WelchError::InsufficientData(a.len(), b.len()));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a) / a.len() as f64, sample_variance(b) / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    Ok(student_t_two_sided(t, df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};
    use statrs::function::beta::beta_reg;
    use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

    #[test]
    fn identical_samples_give_one() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(welch_t_test(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn constant_samples() {
        assert_eq!(welch_t_test(&[1.0; 3], &[2.0; 3]).unwrap(), 0.0);
        assert_eq!(welch_t_test(&[2.0; 3], &[2.0; 4]).unwrap(), 1.0);
    }

    #[test]
    fn too_few_values() {
        assert_eq!(welch_t_test(&[1.0], &[1.0, 2.0]), Err(WelchError::InsufficientData(1, 2)));
    }

    #[test]
    fn frozen_reference_value() {
        // Reference computed once with an independent statistics package.
        let a = [14.2, 13.9, 14.5, 14.1];
        let b = [15.0, 15.3, 14.8, 15.1];
        let p = welch_t_test(&a, &b).unwrap();
        assert!((p - 0.001_879_392_013_544_107_4).abs() < 1e-6, "p = {p}");
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ln_gamma_matches_statrs(x in 0.01f64..200.0) {
            let d = (ln_gamma(x) - statrs_ln_gamma(x)).abs();
            prop_assert!(d < 1e-9 * (1.0 + statrs_ln_gamma(x).abs()));
        }

        #[test]
        fn incomplete_beta_matches_statrs(a in 0.1f64..60.0, b in 0.1f64..60.0, x in 0.0f64..1.0) {
            let d = (regularized_incomplete_beta(a, b, x) - beta_reg(a, b, x)).abs();
            prop_assert!(d < 1e-9, "a={} b={} x={} diff={}", a, b, x, d);
        }

        #[test]
        fn t_tail_matches_statrs(t in -20.0f64..20.0, df in 1.0f64..200.0) {
            let dist = StudentsT::new(0.0, 1.0, df).unwrap();
            let reference = 2.0 * (1.0 - dist.cdf(t.abs()));
            prop_assert!((student_t_two_sided(t, df) - reference).abs() < 1e-8);
        }

        #[test]
        fn p_value_is_symmetric_and_bounded(
            a in prop::collection::vec(-100.0f64..100.0, 2..30),
            b in prop::collection::vec(-100.0f64..100.0, 2..30),
        ) {
            let p = welch_t_test(&a, &b).unwrap();
            let q = welch_t_test(&b, &a).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}
