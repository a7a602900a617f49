//! Two-sample t-tests and the distribution functions behind them.

use serde::{Deserialize, Serialize};

use super::MetricsError;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance (n - 1 denominator); 0 for fewer than two values.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta function I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b)
        + a * x.ln()
        + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value of a t statistic.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TTestVariant {
    /// Unequal variances.
    #[default]
    Welch,
    /// Pooled variance.
    Student,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub variant: TTestVariant,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// p < 0.05.
    pub significant: bool,
    /// Both samples had zero variance, so the statistic is set by convention.
    pub degenerate: bool,
}

fn check(xs: &[f64]) -> Result<(), MetricsError> {
    if xs.len() < 2 {
        return Err(MetricsError::SampleTooSmall(xs.len()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    Ok(())
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    t_test(a, b, TTestVariant::Welch)
}

pub fn student_t_test(a: &[f64], b: &[f64]) -> Result<TTest, MetricsError> {
    t_test(a, b, TTestVariant::Student)
}

pub fn t_test(a: &[f64], b: &[f64], variant: TTestVariant) -> Result<TTest, MetricsError> {
    check(a)?;
    check(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (variance(a), variance(b));
    let (se, df) = match variant {
        TTestVariant::Welch => {
            let (sa, sb) = (va / na, vb / nb);
            let se2 = sa + sb;
            let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
            (se2.sqrt(), if df.is_finite() { df } else { na + nb - 2.0 })
        }
        TTestVariant::Student => {
            let df = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
            ((pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
        }
    };
    if se == 0.0 {
        let (t, p) = if ma == mb { (0.0, 1.0) } else { ((ma - mb).signum() * f64::INFINITY, 0.0) };
        return Ok(TTest { variant, t, df, p, significant: p < 0.05, degenerate: true });
    }
    let t = (ma - mb) / se;
    let p = two_sided_p(t, df);
    Ok(TTest { variant, t, df, p, significant: p < 0.05, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn textbook_welch_example() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [6.0, 7.0, 8.0, 9.0, 10.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t + 5.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p - 0.00104).abs() < 1e-4);
        assert!(r.significant);
    }

    #[test]
    fn identical_samples() {
        let a = [3.0, 3.0, 3.0];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        assert!(r.degenerate);
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_samples() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn published_critical_values() {
        // two-sided 5% critical values from standard t tables
        for (df, crit) in [(1.0, 12.706), (5.0, 2.571), (10.0, 2.228), (30.0, 2.042)] {
            assert!((two_sided_p(crit, df) - 0.05).abs() < 5e-4, "df={df}");
        }
    }

    proptest! {
        #[test]
        fn cdf_matches_reference(t in -30.0f64..30.0, df in 0.5f64..200.0) {
            let reference = StudentsT::new(0.0, 1.0, df).unwrap().cdf(t);
            prop_assert!((student_t_cdf(t, df) - reference).abs() < 1e-10);
        }

        #[test]
        fn swapping_samples_negates_t(
            a in proptest::collection::vec(-50.0f64..50.0, 2..12),
            b in proptest::collection::vec(-50.0f64..50.0, 2..12),
        ) {
            let ab = welch_t_test(&a, &b).unwrap();
            let ba = welch_t_test(&b, &a).unwrap();
            prop_assert!((ab.t + ba.t).abs() < 1e-9 || (ab.t.is_infinite() && ba.t == -ab.t));
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }
}
