//! Storey's null-proportion estimate and q-values.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// How the null proportion feeding the q-value step is chosen.
/// `Fixed(1.0)` reduces the procedure to Benjamini-Hochberg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pi0Mode {
    Storey,
    Fixed(f64),
}

/// λ ∈ {0.05, 0.10, ..., 0.95}.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

/// Smoother estimate of the null proportion: π̂₀(λ) =
/// #{p > λ} / (m(1−λ)) on the grid, smoothed by a natural cubic
/// smoothing spline (3 effective degrees of freedom) and read off at the
/// largest λ.
///
/// Guards: when no p-value exceeds any grid point (everything looks
/// significant) the estimate is the floor 1/m; when the smoothed value
/// falls below 0.1 even though small-λ estimates are substantial, the
/// p-values are incompatible with a uniform null and the conservative
/// value 1 is returned instead of an anti-conservative near-zero
/// estimate.
pub fn estimate_pi0(pvalues: &[f64], lambda_grid: &[f64]) -> Result<f64> {
    if pvalues.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 p-values, got {}",
            pvalues.len()
        )));
    }
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("p-value {p} outside [0,1]")));
        }
    }
    if lambda_grid.len() < 4 {
        return Err(Error::Config(
            "lambda grid needs at least 4 points".into(),
        ));
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid.first().copied().unwrap() <= 0.0 || grid.last().copied().unwrap() >= 1.0 {
        return Err(Error::Config("lambda grid must lie inside (0,1)".into()));
    }

    let m = pvalues.len() as f64;
    let raw: Vec<f64> = grid
        .iter()
        .map(|&lambda| {
            let exceed = pvalues.iter().filter(|&&p| p > lambda).count() as f64;
            exceed / (m * (1.0 - lambda))
        })
        .collect();

    if raw.iter().all(|&v| v == 0.0) {
        return Ok(1.0 / m);
    }

    let smoothed = smoothing_spline_fit(&grid, &raw, 3.0);
    let at_max = *smoothed.last().unwrap();
    if at_max < 0.1 {
        // smoother collapsed despite non-trivial mass at small λ
        return Ok(1.0);
    }
    Ok(at_max.min(1.0))
}

/// Step-up q-values: q_(i) = min_{j ≥ i} π₀ m p_(j) / j on sorted
/// p-values, clamped to [0,1], mapped back to input order.
pub fn qvalues(pvalues: &[f64], pi0: f64) -> Result<Vec<f64>> {
    if pvalues.is_empty() {
        return Err(Error::InvalidInput("no p-values".into()));
    }
    for &p in pvalues {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("p-value {p} outside [0,1]")));
        }
    }
    let m = pvalues.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));

    let mut q = vec![0.0; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let raw = pi0 * m as f64 * pvalues[idx] / (rank + 1) as f64;
        running_min = running_min.min(raw);
        q[idx] = running_min;
    }
    Ok(q)
}

/// Natural cubic smoothing spline fitted values at the knots, with the
/// penalty chosen so the smoother matrix has the requested effective
/// degrees of freedom (Reinsch form, solved densely; the grids here are
/// tiny).
fn smoothing_spline_fit(x: &[f64], y: &[f64], target_df: f64) -> Vec<f64> {
    let n = x.len();
    debug_assert!(n >= 4);
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();

    // Q: n×(n−2), R: (n−2)×(n−2) tridiagonal; K = Q R⁻¹ Qᵀ
    let mut q = DMatrix::<f64>::zeros(n, n - 2);
    let mut r = DMatrix::<f64>::zeros(n - 2, n - 2);
    for j in 0..n - 2 {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < n - 2 {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    let r_inv_qt = r
        .lu()
        .solve(&q.transpose())
        .expect("R is positive definite");
    let k = &q * r_inv_qt;

    let df = |log_penalty: f64| -> f64 {
        let m = DMatrix::<f64>::identity(n, n) + &k * log_penalty.exp();
        m.lu().try_inverse().expect("I + pK is invertible").trace()
    };

    // df is monotone decreasing in the penalty: bisect on log penalty
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if df(mid) > target_df {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let penalty = (0.5 * (lo + hi)).exp();

    let ym = DMatrix::<f64>::from_column_slice(n, 1, y);
    let fitted = (DMatrix::<f64>::identity(n, n) + &k * penalty)
        .lu()
        .solve(&ym)
        .expect("I + pK is invertible");
    fitted.column(0).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distributions::Distribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn spline_reproduces_constants_and_smooths_lines() {
        let x = default_lambda_grid();
        let y = vec![0.7; x.len()];
        let fit = smoothing_spline_fit(&x, &y, 3.0);
        for v in &fit {
            assert!((v - 0.7).abs() < 1e-9);
        }
        // straight lines are in the null space of the penalty
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 0.1).collect();
        let fit = smoothing_spline_fit(&x, &y, 3.0);
        for (f, t) in fit.iter().zip(&y) {
            assert!((f - t).abs() < 1e-8);
        }
    }

    #[test]
    fn uniform_pvalues_give_pi0_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let uni = rand::distributions::Uniform::new(0.0f64, 1.0);
        let p: Vec<f64> = (0..10_000).map(|_| uni.sample(&mut rng)).collect();
        let pi0 = estimate_pi0(&p, &default_lambda_grid()).unwrap();
        assert!((pi0 - 1.0).abs() < 0.05, "pi0 = {pi0}");
    }

    #[test]
    fn all_tiny_pvalues_hit_the_floor() {
        let p: Vec<f64> = (0..500).map(|i| 0.009 * (i as f64 + 1.0) / 500.0).collect();
        let pi0 = estimate_pi0(&p, &default_lambda_grid()).unwrap();
        assert_eq!(pi0, 1.0 / 500.0);
    }

    #[test]
    fn half_null_mixture_recovers_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let uni = rand::distributions::Uniform::new(0.0f64, 1.0);
        let mut p: Vec<f64> = (0..5_000).map(|_| uni.sample(&mut rng)).collect();
        p.extend((0..5_000).map(|_| uni.sample(&mut rng) * 1e-4));
        let pi0 = estimate_pi0(&p, &default_lambda_grid()).unwrap();
        assert!((pi0 - 0.5).abs() < 0.07, "pi0 = {pi0}");
    }

    #[test]
    fn midrange_degenerate_pvalues_fall_back_to_one() {
        // p-values capped below ~0.6: the smoother collapses at the right
        // edge, which must not produce a near-zero estimate
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let uni = rand::distributions::Uniform::new(0.2f64, 0.6);
        let p: Vec<f64> = (0..2_000).map(|_| uni.sample(&mut rng)).collect();
        let pi0 = estimate_pi0(&p, &default_lambda_grid()).unwrap();
        assert_eq!(pi0, 1.0);
    }

    #[test]
    fn qvalues_monotone_in_pvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let uni = rand::distributions::Uniform::new(0.0f64, 1.0);
        let p: Vec<f64> = (0..300).map(|_| uni.sample(&mut rng)).collect();
        let q = qvalues(&p, 0.9).unwrap();
        let mut pairs: Vec<(f64, f64)> = p.iter().copied().zip(q.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in pairs.windows(2) {
            assert!(w[0].1 <= w[1].1 + 1e-15);
        }
        for (_, qv) in pairs {
            assert!((0.0..=1.0).contains(&qv));
        }
    }

    #[test]
    fn input_validation() {
        assert!(estimate_pi0(&[0.5; 5], &default_lambda_grid()).is_err());
        assert!(estimate_pi0(&[1.5; 50], &default_lambda_grid()).is_err());
        assert!(qvalues(&[], 1.0).is_err());
    }
}
