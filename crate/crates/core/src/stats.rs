//! Correlation and group-difference statistics, with the Student-t
//! tail probabilities computed through a regularized incomplete beta.
//!
//! Two conventions coexist deliberately: group summaries report the
//! sample (n-1) standard deviation, while the VAD baseline features in
//! [`crate::baseline`] use the population form. Both are documented at
//! their definition sites.

use thiserror::Error;

use crate::interaction::ParticipantProfile;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {required} points, found {found}")]
    TooFewPoints { required: usize, found: usize },
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("{0} input is constant; correlation undefined")]
    ConstantInput(&'static str),
    #[error("both samples are constant with equal means; t undefined")]
    BothConstantEqual,
}

/// Pearson correlation with a two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_two_sided: f64,
    pub n: usize,
}

/// Welch two-sample t-test result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t: f64,
    pub p_two_sided: f64,
    pub df: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub std_a: f64,
    pub std_b: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_variance(values: &[f64], m: f64) -> f64 {
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// Pearson's r between paired samples, with the p-value from a
/// Student-t transform of r on n-2 degrees of freedom. Perfectly
/// collinear inputs give p = 0.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewPoints {
            required: 3,
            found: n,
        });
    }
    let mx = mean(x);
    let my = mean(y);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ConstantInput("x"));
    }
    if syy == 0.0 {
        return Err(StatsError::ConstantInput("y"));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_p_two_sided(t, df)
    };
    Ok(CorrelationResult {
        r,
        p_two_sided: p,
        n,
    })
}

/// Welch's unequal-variance t-test with the Welch-Satterthwaite
/// degrees of freedom and a two-sided p-value.
pub fn t_test_welch(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewPoints {
            required: 2,
            found: a.len().min(b.len()),
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a, ma), sample_variance(b, mb));
    let sea = va / na;
    let seb = vb / nb;
    let se2 = sea + seb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(StatsError::BothConstantEqual);
        }
        // Zero variance but distinct means: infinitely significant.
        return Ok(TTestResult {
            t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
            p_two_sided: 0.0,
            df: na + nb - 2.0,
            mean_a: ma,
            mean_b: mb,
            std_a: va.sqrt(),
            std_b: vb.sqrt(),
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sea * sea / (na - 1.0) + seb * seb / (nb - 1.0));
    Ok(TTestResult {
        t,
        p_two_sided: student_t_p_two_sided(t, df),
        df,
        mean_a: ma,
        mean_b: mb,
        std_a: va.sqrt(),
        std_b: vb.sqrt(),
    })
}

/// Mean and sample (n-1) standard deviation, the reporting convention
/// for group summaries.
pub fn group_summary(values: &[f64]) -> Result<(f64, f64), StatsError> {
    if values.len() < 2 {
        return Err(StatsError::TooFewPoints {
            required: 2,
            found: values.len(),
        });
    }
    let m = mean(values);
    Ok((m, sample_variance(values, m).sqrt()))
}

/// Severity cut separating the no-or-mild band from moderate-or-worse.
pub const DEFAULT_SEVERITY_CUT: u32 = 10;

/// Correlates severity with dyadic ratio separately below and at/above
/// the severity cut. Either side may fail its own preconditions (too
/// few participants on that side), reported as that side's error.
pub fn split_correlation(
    profiles: &[ParticipantProfile],
    cut: u32,
) -> (
    Result<CorrelationResult, StatsError>,
    Result<CorrelationResult, StatsError>,
) {
    let side = |below: bool| {
        let (mut sev, mut ratio) = (Vec::new(), Vec::new());
        for p in profiles {
            if (p.severity_score < cut) == below {
                sev.push(p.severity_score as f64);
                ratio.push(p.dyadic_ratio);
            }
        }
        pearson(&sev, &ratio)
    };
    (side(true), side(false))
}

/// Two-sided tail probability of Student's t: P(|T| >= |t|) on df
/// degrees of freedom, via I_{df/(df+t^2)}(df/2, 1/2).
pub fn student_t_p_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    incomplete_beta_reg(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

/// Student-t CDF. Exactly 0.5 at t = 0.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        0.5
    } else if t > 0.0 {
        1.0 - 0.5 * student_t_p_two_sided(t, df)
    } else {
        0.5 * student_t_p_two_sided(t, df)
    }
}

/// ln Γ(z) for z > 0 (Lanczos approximation, g = 5, 6 coefficients).
pub fn ln_gamma(z: f64) -> f64 {
    assert!(z > 0.0, "ln_gamma requires a positive argument");
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut series = 1.000000000190015;
    for (i, c) in COEFFS.iter().enumerate() {
        series += c / (z + i as f64 + 1.0);
    }
    let tmp = z + 5.5;
    (z + 0.5) * tmp.ln() - tmp + (2.5066282746310005 * series / z).ln()
}

const BETA_EPS: f64 = 1e-12;
const BETA_MAX_ITER: usize = 500;

/// Regularized incomplete beta I_x(a, b), evaluated through the Lentz
/// continued fraction to 1e-12 relative convergence.
pub fn incomplete_beta_reg(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta shape parameters must be positive");
    assert!((0.0..=1.0).contains(&x), "x must lie in [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The continued fraction converges fastest below the mean; use the
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other side.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cont_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cont_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_cont_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-30;
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
    for m in 1..=BETA_MAX_ITER {
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
        if (delta - 1.0).abs() < BETA_EPS {
            break;
        }
    }
    h
}
