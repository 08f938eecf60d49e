//! Closed-form holding-delay predictions for minimum-headway holding with
//! `η = 1`, and a Monte Carlo oracle for the order statistic they approximate.
//!
//! Under `η = 1` the release of bus `j` is the largest of the first `j`
//! arrival deviations, so its expected hold is `C·H·E[max of j normals]`. The
//! expectation is approximated by `Φ⁻¹((j − π/8)/(j − π/4 + 1))`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::normal::inverse_cdf;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldingDelayPrediction {
    pub j: usize,
    pub coefficient: f64,
    /// Seconds.
    pub expected_delay: f64,
}

/// `Φ⁻¹((j − π/8)/(j − π/4 + 1))`.
pub fn coefficient(j: usize) -> Result<f64> {
    if j < 1 {
        return Err(Error::invalid("bus index j must be >= 1"));
    }
    if j == 1 {
        // the argument is exactly 1/2; skip the rounding in the quotient
        return Ok(0.0);
    }
    let j = j as f64;
    Ok(inverse_cdf((j - PI / 8.0) / (j - PI / 4.0 + 1.0)))
}

/// Expected holding delay of the `j`-th bus, seconds.
pub fn expected_holding_delay(j: usize, cv: f64, headway: f64) -> Result<f64> {
    Ok(cv * headway * coefficient(j)?)
}

pub fn predict(j: usize, cv: f64, headway: f64) -> Result<HoldingDelayPrediction> {
    let coefficient = coefficient(j)?;
    Ok(HoldingDelayPrediction {
        j,
        coefficient,
        expected_delay: cv * headway * coefficient,
    })
}

/// Mean expected holding delay over buses `1..=m`, seconds.
pub fn avg_holding_delay(m: usize, cv: f64, headway: f64) -> Result<f64> {
    if m < 1 {
        return Err(Error::invalid("bus count m must be >= 1"));
    }
    let sum: f64 = (1..=m).map(|j| coefficient(j).expect("j >= 1")).sum();
    Ok(cv * headway * sum / m as f64)
}

/// Smallest `m ≤ limit` whose cumulative mean coefficient exceeds `bound`.
pub fn first_m_exceeding(bound: f64, limit: usize) -> Option<usize> {
    let mut sum = 0.0;
    for m in 1..=limit {
        sum += coefficient(m).expect("m >= 1");
        if sum / m as f64 > bound {
            return Some(m);
        }
    }
    None
}

/// Monte Carlo estimate of `E[max of j i.i.d. standard normals]`.
pub fn mc_max_mean<R: Rng + ?Sized>(j: usize, draws: usize, rng: &mut R) -> f64 {
    assert!(j >= 1 && draws >= 1);
    let mut total = 0.0;
    for _ in 0..draws {
        let mut best = f64::NEG_INFINITY;
        for _ in 0..j {
            let z: f64 = rng.sample(StandardNormal);
            best = best.max(z);
        }
        total += best;
    }
    total / draws as f64
}

/// Row of the prediction-versus-simulation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub j: usize,
    pub coefficient: f64,
    pub monte_carlo: f64,
    pub relative_error: f64,
}

pub fn oracle_table<R: Rng + ?Sized>(js: &[usize], draws: usize, rng: &mut R) -> Result<Vec<OracleRow>> {
    js.iter()
        .map(|&j| {
            let coefficient = coefficient(j)?;
            let monte_carlo = mc_max_mean(j, draws, rng);
            Ok(OracleRow {
                j,
                coefficient,
                monte_carlo,
                relative_error: (coefficient - monte_carlo).abs() / monte_carlo.abs(),
            })
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // reference values from 30-digit evaluation of the same expression
    const COEF: [(usize, f64); 6] = [
        (2, 0.600_082_038_954_754_21),
        (3, 0.881_885_060_402_329_21),
        (10, 1.559_371_880_117_403_8),
        (50, 2.254_126_356_660_712_8),
        (100, 2.508_630_803_448_212_8),
        (300, 2.874_570_162_518_449_6),
    ];

    #[test]
    fn first_bus_is_never_held() {
        assert_eq!(coefficient(1).unwrap(), 0.0);
        assert_eq!(expected_holding_delay(1, 1.1, 200.0).unwrap(), 0.0);
        assert_eq!(avg_holding_delay(1, 1.1, 200.0).unwrap(), 0.0);
    }

    #[test]
    fn coefficients_match_reference() {
        for (j, want) in COEF {
            assert_relative_eq!(coefficient(j).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_index_rejected() {
        assert!(coefficient(0).is_err());
        assert!(avg_holding_delay(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn cumulative_means_match_reference() {
        for (m, want) in [
            (2, 0.300_041_019_477_377_11),
            (10, 1.092_259_003_608_281_1),
            (50, 1.833_174_265_019_892_2),
            (90, 2.074_987_057_500_622_9),
            (300, 2.524_670_995_673_325_4),
        ] {
            assert_relative_eq!(avg_holding_delay(m, 1.0, 1.0).unwrap(), want, max_relative = 1e-12);
        }
    }

    #[test]
    fn cumulative_mean_passes_two_and_three() {
        let m2 = first_m_exceeding(2.0, 100_000).unwrap();
        let m3 = first_m_exceeding(3.0, 100_000).unwrap();
        assert!(m2 < m3);
        assert!(avg_holding_delay(m2, 1.0, 1.0).unwrap() > 2.0);
        assert!(avg_holding_delay(m2 - 1, 1.0, 1.0).unwrap() <= 2.0);
        assert!(avg_holding_delay(m3, 1.0, 1.0).unwrap() > 3.0);
    }

    #[test]
    fn monte_carlo_single_normal_has_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 100_000;
        let m = mc_max_mean(1, draws, &mut rng);
        assert!(m.abs() < 3.0 / (draws as f64).sqrt());
    }
}
