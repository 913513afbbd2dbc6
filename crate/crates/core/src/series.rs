//! Power sums of the Poisson probability mass function.
//!
//! The Poisson kernel needs `S = Σ_y f(y|μ)^{1+γ}` and
//! `W = Σ_y (y - y_obs) f(y|μ)^{1+γ}`. Neither has a closed form for
//! `γ > 0`, so both are summed outward from the mode `⌊μ⌋`. Terms are
//! produced by the ratio recurrence `t(y+1) = t(y) · (μ/(y+1))^{1+γ}`, which
//! never forms a factorial. Each side stops once a geometric bound on the
//! remaining tail drops below half of the relative tolerance; past the mode
//! the ratios shrink monotonically, so the bound is rigorous.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::sum::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTolerance {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesTolerance {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_terms: 10_000,
        }
    }
}

impl SeriesTolerance {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::InvalidInput(format!(
                "series rel_tol must lie in (0, 1), got {rel_tol}"
            )));
        }
        if max_terms < 10 {
            return Err(Error::InvalidInput(format!(
                "series max_terms must be at least 10, got {max_terms}"
            )));
        }
        Ok(Self { rel_tol, max_terms })
    }
}

/// Both power sums for one `(μ, γ)` pair, plus bookkeeping about where the
/// summation stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesSums {
    /// `Σ_y f(y)^{1+γ}`
    pub normalizer: f64,
    /// `Σ_y y · f(y)^{1+γ}`
    pub first_moment: f64,
    /// Smallest and largest `y` included in the sums.
    pub lowest: u64,
    pub highest: u64,
    /// Term ratio `t(highest+1) / t(highest)` at the point the upward sweep
    /// stopped.
    pub final_ratio: f64,
    pub terms: usize,
}

impl SeriesSums {
    /// `Σ_y (y - y_obs) f(y)^{1+γ}`
    pub fn weighted(&self, y_obs: f64) -> f64 {
        self.first_moment - y_obs * self.normalizer
    }
}

const LN_FACTORIAL_TABLE: usize = 128;

fn ln_factorial_table() -> &'static [f64; LN_FACTORIAL_TABLE] {
    static TABLE: OnceLock<[f64; LN_FACTORIAL_TABLE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [0.0; LN_FACTORIAL_TABLE];
        let mut acc = CompensatedSum::new();
        for (k, slot) in table.iter_mut().enumerate().skip(1) {
            acc.add((k as f64).ln());
            *slot = acc.value();
        }
        table
    })
}

/// `ln P(Y = k)` for `Y ~ Poisson(μ)`.
///
/// For large `k` the Stirling series is folded into the expression so that
/// `k ln(μ/k) + (k - μ)` is formed directly; this avoids the cancellation
/// between two huge `lnΓ` and `k ln μ` values near the mode.
pub fn ln_poisson_pmf(k: u64, mu: f64) -> f64 {
    if k == 0 {
        return -mu;
    }
    if mu == 0.0 {
        return f64::NEG_INFINITY;
    }
    let kf = k as f64;
    if (k as usize) < LN_FACTORIAL_TABLE {
        return -mu + kf * mu.ln() - ln_factorial_table()[k as usize];
    }
    let inv = 1.0 / kf;
    let inv2 = inv * inv;
    let stirling_tail = inv / 12.0 - inv * inv2 / 360.0 + inv * inv2 * inv2 / 1260.0;
    let ratio_term = kf * ((mu - kf) / kf).ln_1p();
    (kf - mu) + ratio_term - 0.5 * (2.0 * std::f64::consts::PI * kf).ln() - stirling_tail
}

/// Evaluate both power sums.
pub fn power_sums(mu: f64, gamma: f64, tol: &SeriesTolerance) -> Result<SeriesSums> {
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "poisson mean must be finite and nonnegative, got {mu}"
        )));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "gamma must be finite and nonnegative, got {gamma}"
        )));
    }
    if mu == 0.0 {
        return Ok(SeriesSums {
            normalizer: 1.0,
            first_moment: 0.0,
            lowest: 0,
            highest: 0,
            final_ratio: 0.0,
            terms: 1,
        });
    }

    let power = 1.0 + gamma;
    let half_tol = 0.5 * tol.rel_tol;
    let mode = mu.floor() as u64;
    let ln_mu = mu.ln();

    // Sums are taken relative to the mode term; s(mode) = 1.
    let mut s_sum = CompensatedSum::new();
    let mut m_sum = CompensatedSum::new();
    s_sum.add(1.0);
    m_sum.add(mode as f64);
    let mut terms = 1usize;

    let ratio_up = |k: u64| (power * (ln_mu - ((k + 1) as f64).ln())).exp();

    // Upward sweep: s(k+1) = s(k) (μ/(k+1))^{1+γ}
    let mut k = mode;
    let mut s = 1.0;
    let final_ratio;
    loop {
        let r1 = ratio_up(k);
        if (k as f64) > mu && r1 < 1.0 {
            let kf = k as f64;
            let tail_s = s * r1 / (1.0 - r1);
            let r2 = ratio_up(k + 1);
            let q_m = (kf + 2.0) / (kf + 1.0) * r2;
            let tail_m = if q_m < 1.0 {
                (kf + 1.0) * s * r1 / (1.0 - q_m)
            } else {
                f64::INFINITY
            };
            if tail_s <= half_tol * s_sum.value() && tail_m <= half_tol * m_sum.value() {
                final_ratio = r1;
                break;
            }
        }
        s *= r1;
        k += 1;
        s_sum.add(s);
        m_sum.add(k as f64 * s);
        terms += 1;
        if terms > tol.max_terms {
            return Err(Error::Truncation {
                mu,
                gamma,
                max_terms: tol.max_terms,
            });
        }
    }
    let highest = k;

    // Downward sweep: s(k-1) = s(k) (k/μ)^{1+γ}
    let mut k = mode;
    let mut s = 1.0;
    while k > 0 {
        let r = (power * ((k as f64).ln() - ln_mu)).exp();
        let tail_s = s * r / (1.0 - r).max(f64::MIN_POSITIVE);
        let tail_m = k as f64 * tail_s;
        if r < 1.0
            && tail_s <= half_tol * s_sum.value()
            && tail_m <= half_tol * m_sum.value().max(f64::MIN_POSITIVE)
        {
            break;
        }
        s *= r;
        k -= 1;
        s_sum.add(s);
        m_sum.add(k as f64 * s);
        terms += 1;
        if terms > tol.max_terms {
            return Err(Error::Truncation {
                mu,
                gamma,
                max_terms: tol.max_terms,
            });
        }
    }
    let lowest = k;

    let scale = (power * ln_poisson_pmf(mode, mu)).exp();
    Ok(SeriesSums {
        normalizer: scale * s_sum.value(),
        first_moment: scale * m_sum.value(),
        lowest,
        highest,
        final_ratio,
        terms,
    })
}

/// `Σ_{y≥0} f(y|μ)^{1+γ}`
pub fn power_normalizer(mu: f64, gamma: f64, tol: &SeriesTolerance) -> Result<f64> {
    power_sums(mu, gamma, tol).map(|s| s.normalizer)
}

/// `Σ_{y≥0} (y - y_obs) f(y|μ)^{1+γ}`
pub fn weighted_sum(mu: f64, y_obs: f64, gamma: f64, tol: &SeriesTolerance) -> Result<f64> {
    if !(y_obs >= 0.0 && y_obs.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "observed count must be finite and nonnegative, got {y_obs}"
        )));
    }
    power_sums(mu, gamma, tol).map(|s| s.weighted(y_obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tol() -> SeriesTolerance {
        SeriesTolerance::default()
    }

    #[test]
    fn degenerate_mean_is_a_point_mass() {
        assert_eq!(power_normalizer(0.0, 0.7, &tol()).unwrap(), 1.0);
        assert_eq!(weighted_sum(0.0, 0.0, 0.7, &tol()).unwrap(), 0.0);
    }

    #[test]
    fn gamma_zero_sums_the_pmf() {
        for mu in [0.3, 1.0, 4.5, 17.0, 250.0] {
            assert_relative_eq!(
                power_normalizer(mu, 0.0, &tol()).unwrap(),
                1.0,
                max_relative = 1e-12
            );
            assert_relative_eq!(
                weighted_sum(mu, 2.0, 0.0, &tol()).unwrap(),
                mu - 2.0,
                epsilon = 1e-10 * mu.max(1.0)
            );
        }
    }

    #[test]
    fn matches_mpmath_reference_values() {
        // 50-digit partial sums with 500-800 terms
        let cases = [
            (1.0, 1.0, 0.308_508_322_553_671_04, None),
            (2.0, 0.3, f64::NAN, Some((5.0, -1.906_483_065_350_939_3))),
            (0.5, 0.1, 0.913_745_574_849_174_1, Some((3.0, -2.326_767_114_957_988_8))),
            (7.0, 2.0, 0.013_342_100_966_583_769, Some((3.0, 0.048_846_929_260_437_145))),
            (40.0, 0.1, 0.723_400_893_056_609_4, Some((3.0, 26.732_817_296_341_346))),
        ];
        for (mu, gamma, s, w) in cases {
            if !s.is_nan() {
                assert_relative_eq!(
                    power_normalizer(mu, gamma, &tol()).unwrap(),
                    s,
                    max_relative = 1e-12
                );
            }
            if let Some((y, w)) = w {
                assert_relative_eq!(
                    weighted_sum(mu, y, gamma, &tol()).unwrap(),
                    w,
                    max_relative = 1e-10
                );
            }
        }
    }

    #[test]
    fn large_means_are_summed_from_the_mode() {
        let sums = power_sums(1e6, 0.0, &SeriesTolerance::new(1e-12, 100_000).unwrap()).unwrap();
        assert_relative_eq!(sums.normalizer, 1.0, max_relative = 1e-9);
        assert_relative_eq!(sums.first_moment, 1e6, max_relative = 1e-9);
        assert!(sums.lowest > 990_000 && sums.highest < 1_010_000);
    }

    #[test]
    fn budget_exhaustion_is_a_truncation_error() {
        let tight = SeriesTolerance::new(1e-12, 10).unwrap();
        let err = power_normalizer(1e4, 0.5, &tight).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
    }

    #[test]
    fn stirling_branch_agrees_with_table_branch() {
        // ln P(k) at the table edge, computed both ways
        let mu = 130.0;
        let k = 127u64;
        let direct = -mu + k as f64 * f64::ln(mu) - ln_factorial_table()[127];
        let inv = 1.0 / 127.0_f64;
        let stirling = {
            let kf = 127.0_f64;
            (kf - mu) + kf * ((mu - kf) / kf).ln_1p()
                - 0.5 * (2.0 * std::f64::consts::PI * kf).ln()
                - (inv / 12.0 - inv.powi(3) / 360.0 + inv.powi(5) / 1260.0)
        };
        assert_relative_eq!(direct, stirling, max_relative = 1e-13);
        assert_relative_eq!(ln_poisson_pmf(128, mu), ln_poisson_pmf(127, mu) + (mu / 128.0).ln(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_tolerances() {
        assert!(SeriesTolerance::new(1.0, 100).is_err());
        assert!(SeriesTolerance::new(1e-6, 9).is_err());
    }
}
