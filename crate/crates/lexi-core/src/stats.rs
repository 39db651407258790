//! Keyness statistics: percent change and the 2x2 Pearson chi-square
//! contingency test, with the chi-square(1) survival function computed via
//! the regularized upper incomplete gamma function.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("degenerate table: zero row or column sum")]
    DegenerateTable,
    #[error("cell count exceeds its slice total")]
    CellExceedsTotal,
}

/// Counts for one key across two slices (or two corpora):
/// row 1 = (target a, other tokens b) in the "from" slice,
/// row 2 = (target c, other tokens d) in the "to" slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> ContingencyTable2x2 {
        ContingencyTable2x2 { a, b, c, d }
    }

    /// Build the disjoint-cell table from per-slice target counts and token
    /// totals: b and d are the non-target remainders.
    pub fn from_counts(
        count_from: u64,
        total_from: u64,
        count_to: u64,
        total_to: u64,
    ) -> Result<ContingencyTable2x2, StatsError> {
        if count_from > total_from || count_to > total_to {
            return Err(StatsError::CellExceedsTotal);
        }
        Ok(ContingencyTable2x2 {
            a: count_from,
            b: total_from - count_from,
            c: count_to,
            d: total_to - count_to,
        })
    }
}

/// Chi-square statistic with its upper-tail p-value at 1 degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquare {
    pub chi2: f64,
    pub p: f64,
}

/// Pearson chi-square on a 2x2 table: `N (ad - bc)^2 / ((a+b)(c+d)(a+c)(b+d))`.
/// With the continuity correction, `|ad - bc|` is replaced by
/// `max(0, |ad - bc| - N/2)` before squaring.
pub fn chi_square_2x2(
    t: &ContingencyTable2x2,
    continuity_correction: bool,
) -> Result<ChiSquare, StatsError> {
    let (a, b, c, d) = (t.a, t.b, t.c, t.d);
    let r1 = a + b;
    let r2 = c + d;
    let c1 = a + c;
    let c2 = b + d;
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(StatsError::DegenerateTable);
    }
    let n = r1 + r2;

    // exact integer cross-product difference before any rounding
    let ad = a as u128 * d as u128;
    let bc = b as u128 * c as u128;
    let mut diff = ad.abs_diff(bc) as f64;
    if continuity_correction {
        diff = (diff - n as f64 / 2.0).max(0.0);
    }
    let denom = r1 as f64 * r2 as f64 * c1 as f64 * c2 as f64;
    let chi2 = n as f64 * diff * diff / denom;
    let p = chi2_sf1(chi2).max(f64::MIN_POSITIVE);
    Ok(ChiSquare { chi2, p })
}

/// Signed percent change `100 (to - from) / from`, with +inf when the
/// baseline is zero and the target is not, and 0 when both are zero.
pub fn percent_change(opm_from: f64, opm_to: f64) -> f64 {
    if opm_from == 0.0 {
        if opm_to == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        100.0 * (opm_to - opm_from) / opm_from
    }
}

/// Survival function of the chi-square distribution with 1 degree of
/// freedom: `Q(1/2, x/2)`.
pub fn chi2_sf1(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(0.5, x / 2.0)
}

/// Regularized upper incomplete gamma function Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_contfrac(a, x)
    }
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    1.0 - gamma_q(a, x)
}

const GAMMA_EPS: f64 = 1e-16;
const GAMMA_MAX_ITER: usize = 500;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

// modified Lentz continued fraction
fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = f64::MIN_POSITIVE / GAMMA_EPS;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Natural log of the gamma function (Lanczos approximation, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
