#![allow(dead_code)] // each test binary uses a subset

//! Shared helpers for integration tests: an independently coded
//! textbook distance-covariance implementation used as an oracle, plus
//! random instance generators.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Textbook sample distance covariance for complete data, written
/// directly from the double-centering definition with its own loops so
/// it shares nothing with the production code path.
pub fn naive_dcov(x: &Array2<f64>, y: &Array2<f64>) -> (f64, f64, f64) {
    let n = x.nrows();
    assert_eq!(n, y.nrows());

    let dist = |m: &Array2<f64>, i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for k in 0..m.ncols() {
            let d = m[[i, k]] - m[[j, k]];
            s += d * d;
        }
        s.sqrt()
    };

    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = dist(x, i, j);
            b[i][j] = dist(y, i, j);
        }
    }

    let center = |m: &[Vec<f64>]| -> (Vec<Vec<f64>>, f64) {
        let n = m.len();
        let mut row_mean = vec![0.0; n];
        let mut col_mean = vec![0.0; n];
        let mut grand = 0.0;
        for i in 0..n {
            for j in 0..n {
                row_mean[i] += m[i][j];
                col_mean[j] += m[i][j];
                grand += m[i][j];
            }
        }
        for v in row_mean.iter_mut().chain(col_mean.iter_mut()) {
            *v /= n as f64;
        }
        grand /= (n * n) as f64;
        let mut centered = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                centered[i][j] = m[i][j] - row_mean[i] - col_mean[j] + grand;
            }
        }
        (centered, grand)
    };

    let (ac, a_grand) = center(&a);
    let (bc, b_grand) = center(&b);

    let mut dcov_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            dcov_sq += ac[i][j] * bc[i][j];
        }
    }
    dcov_sq /= (n * n) as f64;
    if dcov_sq < 0.0 {
        dcov_sq = 0.0;
    }
    let t2 = a_grand * b_grand;
    (dcov_sq, t2, n as f64 * dcov_sq / t2)
}

/// Random complete-data instance with n rows and the given dimensions.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    q: usize,
) -> (Array2<f64>, Array2<f64>) {
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array2::from_shape_fn((n, q), |_| rng.sample::<f64, _>(StandardNormal));
    (x, y)
}
