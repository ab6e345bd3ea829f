//! Moment-matched Gamma null distribution for the test statistic, with
//! upper-tail p-values and the probit transform.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

/// P-values are clamped into [PROBIT_EPS, 1 - PROBIT_EPS] before the
/// normal quantile is taken; callers count clamp events.
pub const PROBIT_EPS: f64 = 1e-15;

/// Gamma(shape, scale) null fitted by moment matching:
/// shape = mean²/variance, scale = variance/mean.
#[derive(Debug, Clone, Copy)]
pub struct GammaNull {
    shape: f64,
    scale: f64,
    source_mean: f64,
    source_variance: f64,
}

impl GammaNull {
    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// (mean, variance) of the statistics the fit was based on.
    pub fn source_moments(&self) -> (f64, f64) {
        (self.source_mean, self.source_variance)
    }
}

/// Fit the Gamma null from the observed statistics (sample mean and
/// unbiased sample variance).
pub fn fit_gamma_null(stats: &[f64]) -> Result<GammaNull> {
    if stats.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 statistics to fit a null, got {}",
            stats.len()
        )));
    }
    if stats.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite statistic".into()));
    }
    let n = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / n;
    let variance = stats.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0);
    if mean <= 0.0 {
        return Err(Error::Degenerate(format!(
            "statistics have nonpositive mean {mean}"
        )));
    }
    if variance <= 0.0 {
        return Err(Error::Degenerate(
            "statistics have zero variance".into(),
        ));
    }
    Ok(GammaNull {
        shape: mean * mean / variance,
        scale: variance / mean,
        source_mean: mean,
        source_variance: variance,
    })
}

/// Upper-tail probability of the fitted Gamma at `t`, via the
/// regularized incomplete gamma function.
pub fn gamma_pvalue(null: &GammaNull, t: f64) -> Result<f64> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(format!(
            "statistic must be nonnegative, got {t}"
        )));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(gamma_ur(null.shape, t / null.scale))
}

/// Probit transform of a p-value; `clamped` reports whether the input
/// was pulled into the open interval first.
#[derive(Debug, Clone, Copy)]
pub struct Probit {
    pub z: f64,
    pub clamped: bool,
}

pub fn probit_transform(p: f64) -> Probit {
    let clamped = !(PROBIT_EPS..=1.0 - PROBIT_EPS).contains(&p);
    let p = p.clamp(PROBIT_EPS, 1.0 - PROBIT_EPS);
    let standard_normal = Normal::new(0.0, 1.0).expect("unit normal");
    Probit {
        z: standard_normal.inverse_cdf(p),
        clamped,
    }
}

/// Transform a batch of p-values, returning the z-scores and the number
/// of clamp events.
pub fn probit_all(pvalues: &[f64]) -> (Vec<f64>, usize) {
    let mut clamps = 0;
    let z = pvalues
        .iter()
        .map(|&p| {
            let r = probit_transform(p);
            if r.clamped {
                clamps += 1;
            }
            r.z
        })
        .collect();
    (z, clamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distributions::Distribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moment_matching_identities() {
        // sample mean 1, sample variance 1 -> shape 1, scale 1
        let null = fit_gamma_null(&[0.0, 1.0, 2.0]).unwrap();
        assert!((null.shape() - 1.0).abs() < 1e-15);
        assert!((null.scale() - 1.0).abs() < 1e-15);

        // sample mean 2, sample variance 2 -> shape 2, scale 1
        let null = fit_gamma_null(&[0.0, 2.0, 4.0, 2.0, 2.0]).unwrap();
        assert!((null.shape() - 2.0).abs() < 1e-12);
        assert!((null.scale() - 1.0).abs() < 1e-12);

        // implied mean shape*scale equals the source mean
        let null = fit_gamma_null(&[0.3, 1.9, 0.7, 2.2, 1.4]).unwrap();
        let (mean, _) = null.source_moments();
        assert!(((null.shape() * null.scale() - mean) / mean).abs() < 1e-12);
    }

    #[test]
    fn degenerate_moment_inputs_error() {
        assert!(fit_gamma_null(&[1.0, 1.0, 1.0]).is_err());
        assert!(fit_gamma_null(&[0.5]).is_err());
        assert!(fit_gamma_null(&[-3.0, 1.0]).is_err());
    }

    #[test]
    fn pvalue_boundaries_and_exponential_case() {
        let null = fit_gamma_null(&[0.0, 1.0, 2.0]).unwrap(); // shape 1, scale 1
        assert_eq!(gamma_pvalue(&null, 0.0).unwrap(), 1.0);
        // exponential closed form: p(t) = e^-t
        let p = gamma_pvalue(&null, 1.0).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-12);
        // deep tail stays positive without underflow artifacts
        let tail = gamma_pvalue(&null, 100.0).unwrap();
        assert!(tail > 0.0 && tail < 1e-40);
        assert!(((tail.ln() + 100.0) / 100.0).abs() < 1e-10);
        assert!(gamma_pvalue(&null, -0.1).is_err());
    }

    #[test]
    fn pvalue_is_strictly_decreasing() {
        let null = fit_gamma_null(&[0.2, 0.9, 1.7, 2.8, 1.1]).unwrap();
        let mut prev = gamma_pvalue(&null, 0.0).unwrap();
        for k in 1..200 {
            let p = gamma_pvalue(&null, k as f64 * 0.05).unwrap();
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn probit_known_points() {
        assert_eq!(probit_transform(0.5).z, 0.0);
        let q = probit_transform(0.025);
        assert!((q.z + 1.95996).abs() < 1e-4);
        assert!(!q.clamped);

        let tiny = probit_transform(1e-300);
        assert!(tiny.clamped);
        assert!((tiny.z + 7.94).abs() < 0.01);

        let (z, clamps) = probit_all(&[0.5, 1e-300, 1.0]);
        assert_eq!(clamps, 2);
        assert_eq!(z.len(), 3);
    }

    #[test]
    fn calibration_on_its_own_distribution() {
        // p-values of Gamma(shape a, scale b) draws under the same null
        // are uniform: check the empirical CDF on a grid
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gamma = rand_distr::Gamma::new(1.4, 0.8).unwrap();
        let draws = 10_000;
        let null = GammaNull {
            shape: 1.4,
            scale: 0.8,
            source_mean: 1.4 * 0.8,
            source_variance: 1.4 * 0.8 * 0.8,
        };
        let ps: Vec<f64> = (0..draws)
            .map(|_| gamma_pvalue(&null, gamma.sample(&mut rng)).unwrap())
            .collect();
        for step in 1..=9 {
            let u = step as f64 / 10.0;
            let frac = ps.iter().filter(|&&p| p <= u).count() as f64 / draws as f64;
            let sigma = (u * (1.0 - u) / draws as f64).sqrt();
            assert!(
                (frac - u).abs() < 3.0 * sigma + 1e-9,
                "u={u} frac={frac} sigma={sigma}"
            );
        }
    }

    #[test]
    fn probit_of_null_pvalues_is_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let gamma = rand_distr::Gamma::new(0.9, 1.3).unwrap();
        let null = GammaNull {
            shape: 0.9,
            scale: 1.3,
            source_mean: 0.9 * 1.3,
            source_variance: 0.9 * 1.3 * 1.3,
        };
        let draws = 10_000;
        let zs: Vec<f64> = (0..draws)
            .map(|_| probit_transform(gamma_pvalue(&null, gamma.sample(&mut rng)).unwrap()).z)
            .collect();
        let mean = zs.iter().sum::<f64>() / draws as f64;
        let sd = (zs.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / (draws - 1) as f64)
            .sqrt();
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((sd - 1.0).abs() < 0.05, "sd {sd}");
    }
}
