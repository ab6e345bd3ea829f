//! Two-component mixture models fitted by EM, yielding per-point local
//! false discovery rates.
//!
//! Gaussian mixtures are fitted to probit-scale z-scores (alternatives
//! sit in the left tail); Gamma mixtures are fitted to the raw test
//! statistics (alternatives sit in the right tail). Both use a
//! deterministic quantile-split initialization, so identical inputs give
//! bit-identical fits.
//!
//! A two-component Gaussian or Gamma likelihood has spurious local maxima
//! on data that is effectively single-population, which would bias the
//! null component and leave a phantom alternative. After the EM run the
//! fit is therefore compared against the single-component maximum
//! likelihood fit with a BIC test; when the second component is not
//! supported, the model collapses to the single component with the
//! alternative weight at the floor, and local fdr is ≈ 1 everywhere.

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::special::trigamma;

pub const GAMMA_LOG_SHIFT: f64 = 1e-12;

/// EM settings. Defaults: 1000 iterations, 1e-8 relative log-likelihood
/// tolerance, mixing-weight floor 1e-4, standard-deviation floor 1e-6.
#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub weight_floor: f64,
    pub sd_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            rel_tolerance: 1e-8,
            weight_floor: 1e-4,
            sd_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureFamily {
    Gaussian,
    Gamma,
}

impl MixtureFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            MixtureFamily::Gaussian => "gaussian",
            MixtureFamily::Gamma => "gamma",
        }
    }
}

/// Parameters of one mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ComponentParams {
    Gaussian { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl ComponentParams {
    pub fn mean(&self) -> f64 {
        match *self {
            ComponentParams::Gaussian { mean, .. } => mean,
            ComponentParams::Gamma { shape, scale } => shape * scale,
        }
    }

    fn log_density(&self, v: f64) -> f64 {
        match *self {
            ComponentParams::Gaussian { mean, sd } => {
                let q = (v - mean) / sd;
                -0.5 * q * q - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            ComponentParams::Gamma { shape, scale } => {
                let v = v.max(GAMMA_LOG_SHIFT);
                (shape - 1.0) * v.ln() - v / scale - ln_gamma(shape) - shape * scale.ln()
            }
        }
    }
}

/// Fitted two-component mixture with the null component designated.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub family: MixtureFamily,
    /// Weight of the null component, within [floor, 1 - floor].
    pub pi0: f64,
    pub null: ComponentParams,
    pub alt: ComponentParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when the BIC comparison rejected the second component and the
    /// model collapsed to the single-component fit.
    pub collapsed: bool,
    /// Log-likelihood at the start of each EM iteration; non-decreasing.
    pub log_likelihood_trace: Vec<f64>,
}

impl MixtureModel {
    pub fn pi1(&self) -> f64 {
        1.0 - self.pi0
    }

    /// Posterior null probability π₀f₀(v) / (π₀f₀(v) + π₁f₁(v)), computed
    /// in log space.
    pub fn local_fdr(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value {v}")));
        }
        if self.family == MixtureFamily::Gamma && v < 0.0 {
            return Err(Error::InvalidInput(format!(
                "value {v} is outside the Gamma support"
            )));
        }
        let l0 = self.pi0.ln() + self.null.log_density(v);
        let l1 = self.pi1().ln() + self.alt.log_density(v);
        if l0 == f64::NEG_INFINITY && l1 == f64::NEG_INFINITY {
            // both densities vanished; treat as null
            return Ok(1.0);
        }
        Ok(1.0 / (1.0 + (l1 - l0).exp()))
    }

    pub fn local_fdr_all(&self, values: &[f64]) -> Result<Vec<f64>> {
        values.iter().map(|&v| self.local_fdr(v)).collect()
    }

    /// Plain-text key=value block for reproducibility reports.
    pub fn to_key_value_block(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("family={}\n", self.family.as_str()));
        out.push_str(&format!("pi0={}\n", self.pi0));
        for (tag, comp) in [("null", &self.null), ("alt", &self.alt)] {
            match *comp {
                ComponentParams::Gaussian { mean, sd } => {
                    out.push_str(&format!("{tag}_mean={mean}\n{tag}_sd={sd}\n"));
                }
                ComponentParams::Gamma { shape, scale } => {
                    out.push_str(&format!("{tag}_shape={shape}\n{tag}_scale={scale}\n"));
                }
            }
        }
        out.push_str(&format!("log_likelihood={}\n", self.log_likelihood));
        out.push_str(&format!("iterations={}\n", self.iterations));
        out.push_str(&format!("converged={}\n", self.converged));
        out.push_str(&format!("collapsed={}\n", self.collapsed));
        out
    }
}

/// Per-point local fdr for a fitted model (free-function form).
pub fn local_fdr(model: &MixtureModel, v: f64) -> Result<f64> {
    model.local_fdr(v)
}

/// Fit a two-component Gaussian mixture to z-scores. Initialization
/// splits at the 10th percentile (alternatives are negative).
pub fn fit_gaussian_mixture(values: &[f64], config: &EmConfig) -> Result<MixtureModel> {
    validate_input(values, MixtureFamily::Gaussian)?;
    fit(values, MixtureFamily::Gaussian, config)
}

/// Fit a two-component Gamma mixture to nonnegative statistics.
/// Initialization splits at the 90th percentile (alternatives are large).
pub fn fit_gamma_mixture(values: &[f64], config: &EmConfig) -> Result<MixtureModel> {
    validate_input(values, MixtureFamily::Gamma)?;
    fit(values, MixtureFamily::Gamma, config)
}

fn validate_input(values: &[f64], family: MixtureFamily) -> Result<()> {
    if values.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "need at least 10 values to fit a mixture, got {}",
            values.len()
        )));
    }
    for &v in values {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite value {v}")));
        }
        if family == MixtureFamily::Gamma && v < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative value {v} in Gamma mixture input"
            )));
        }
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::Degenerate("all values are identical".into()));
    }
    Ok(())
}

fn fit(values: &[f64], family: MixtureFamily, config: &EmConfig) -> Result<MixtureModel> {
    let n = values.len();
    let single = single_component_fit(values, family, config)?;
    let single_ll: f64 = values.iter().map(|&v| single.log_density(v)).sum();

    let (mut comps, mut w1) = initial_components(values, family, config)?;
    let mut trace = Vec::new();
    let mut resp1 = vec![0.0; n];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..=config.max_iterations {
        // E-step: responsibilities and log-likelihood at current params
        let mut ll = 0.0;
        for (i, &v) in values.iter().enumerate() {
            let l0 = (1.0 - w1).ln() + comps[0].log_density(v);
            let l1 = w1.ln() + comps[1].log_density(v);
            let m = l0.max(l1);
            if m == f64::NEG_INFINITY {
                resp1[i] = 0.5;
                ll = f64::NEG_INFINITY;
                continue;
            }
            ll += m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            resp1[i] = 1.0 / (1.0 + (l0 - l1).exp());
        }
        trace.push(ll);
        if iter > 0 && (ll - prev_ll).abs() / prev_ll.abs().max(1.0) < config.rel_tolerance {
            converged = true;
            break;
        }
        if iter == config.max_iterations {
            break;
        }
        prev_ll = ll;

        // M-step
        for (k, comp) in comps.iter_mut().enumerate() {
            let weighted: Vec<f64> = resp1
                .iter()
                .map(|&r| if k == 1 { r } else { 1.0 - r })
                .collect();
            let sw: f64 = weighted.iter().sum();
            if sw <= 1e-300 {
                continue; // starved component keeps its parameters
            }
            *comp = m_step(values, &weighted, sw, family, config, k)?;
        }
        let mean_resp = resp1.iter().sum::<f64>() / n as f64;
        w1 = mean_resp.clamp(config.weight_floor, 1.0 - config.weight_floor);
        iterations = iter + 1;
    }
    let two_ll = *trace.last().expect("at least one EM evaluation");

    // BIC comparison against the single-component fit (3 extra
    // parameters); an unsupported second component collapses the model.
    if 2.0 * (two_ll - single_ll) <= 3.0 * (n as f64).ln() {
        return Ok(MixtureModel {
            family,
            pi0: 1.0 - config.weight_floor,
            null: single,
            alt: single,
            log_likelihood: single_ll,
            iterations: 0,
            converged: true,
            collapsed: true,
            log_likelihood_trace: vec![single_ll],
        });
    }

    // designate the null component: Gaussian → mean closer to zero,
    // Gamma → smaller mean; ties broken toward the larger weight
    let weights = [1.0 - w1, w1];
    let key = |k: usize| match family {
        MixtureFamily::Gaussian => comps[k].mean().abs(),
        MixtureFamily::Gamma => comps[k].mean(),
    };
    let null_idx = match key(0).partial_cmp(&key(1)) {
        Some(std::cmp::Ordering::Less) => 0,
        Some(std::cmp::Ordering::Greater) => 1,
        _ => {
            if weights[0] >= weights[1] {
                0
            } else {
                1
            }
        }
    };

    Ok(MixtureModel {
        family,
        pi0: weights[null_idx],
        null: comps[null_idx],
        alt: comps[1 - null_idx],
        log_likelihood: two_ll,
        iterations,
        converged,
        collapsed: false,
        log_likelihood_trace: trace,
    })
}

/// Maximum-likelihood fit of a single component (one weighted M-step
/// with unit weights).
fn single_component_fit(
    values: &[f64],
    family: MixtureFamily,
    config: &EmConfig,
) -> Result<ComponentParams> {
    let weights = vec![1.0; values.len()];
    m_step(values, &weights, values.len() as f64, family, config, 0)
}

fn m_step(
    values: &[f64],
    weights: &[f64],
    weight_sum: f64,
    family: MixtureFamily,
    config: &EmConfig,
    component: usize,
) -> Result<ComponentParams> {
    match family {
        MixtureFamily::Gaussian => {
            let mean = values
                .iter()
                .zip(weights)
                .map(|(&v, &w)| w * v)
                .sum::<f64>()
                / weight_sum;
            let var = values
                .iter()
                .zip(weights)
                .map(|(&v, &w)| w * (v - mean) * (v - mean))
                .sum::<f64>()
                / weight_sum;
            Ok(ComponentParams::Gaussian {
                mean,
                sd: var.sqrt().max(config.sd_floor),
            })
        }
        MixtureFamily::Gamma => {
            let mut mean = 0.0;
            let mut log_mean = 0.0;
            for (&v, &w) in values.iter().zip(weights) {
                let v = v.max(GAMMA_LOG_SHIFT);
                mean += w * v;
                log_mean += w * v.ln();
            }
            mean /= weight_sum;
            log_mean /= weight_sum;
            let shape = solve_gamma_shape(mean.ln() - log_mean, component)?;
            Ok(ComponentParams::Gamma {
                shape,
                scale: mean / shape,
            })
        }
    }
}

/// Solve ln(α) − ψ(α) = s for the Gamma shape by Newton iteration,
/// starting from the standard rational approximation.
fn solve_gamma_shape(s: f64, component: usize) -> Result<f64> {
    let s = s.max(1e-12);
    let mut alpha = (3.0 - s + ((s - 3.0) * (s - 3.0) + 24.0 * s).sqrt()) / (12.0 * s);
    if !alpha.is_finite() || alpha <= 0.0 {
        alpha = 1.0;
    }
    for _ in 0..100 {
        let f = score_gap(alpha) - s;
        if f.abs() < 1e-12 {
            return Ok(alpha);
        }
        let df = 1.0 / alpha - trigamma(alpha);
        let mut next = alpha - f / df;
        if !next.is_finite() {
            break;
        }
        if next <= 0.0 {
            next = alpha / 2.0;
        }
        alpha = next;
    }
    if (score_gap(alpha) - s).abs() < 1e-10 {
        Ok(alpha)
    } else {
        Err(Error::NewtonFailure {
            component,
            iterations: 100,
        })
    }
}

/// ln(α) − ψ(α), switching to its asymptotic series for very large α
/// where direct subtraction cancels.
fn score_gap(alpha: f64) -> f64 {
    if alpha > 1e8 {
        let inv = 1.0 / alpha;
        0.5 * inv + inv * inv / 12.0
    } else {
        alpha.ln() - digamma(alpha)
    }
}

/// Deterministic quantile-split initialization: the tail side of the
/// split seeds the alternative-like component by method of moments.
fn initial_components(
    values: &[f64],
    family: MixtureFamily,
    config: &EmConfig,
) -> Result<([ComponentParams; 2], f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let split_q = match family {
        MixtureFamily::Gaussian => 0.10,
        MixtureFamily::Gamma => 0.90,
    };
    let mut cut = ((n as f64 - 1.0) * split_q).floor() as usize;
    // both sides need at least 2 points with some spread
    cut = cut.clamp(1, n - 3);
    let (lower, upper) = sorted.split_at(cut + 1);

    let moments = |group: &[f64]| -> ComponentParams {
        let gn = group.len() as f64;
        let mean = group.iter().sum::<f64>() / gn;
        let var = group.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / gn;
        match family {
            MixtureFamily::Gaussian => ComponentParams::Gaussian {
                mean,
                sd: var.sqrt().max(config.sd_floor),
            },
            MixtureFamily::Gamma => {
                let mean = mean.max(GAMMA_LOG_SHIFT);
                if var <= 0.0 {
                    ComponentParams::Gamma {
                        shape: 1.0,
                        scale: mean,
                    }
                } else {
                    ComponentParams::Gamma {
                        shape: (mean * mean / var).clamp(1e-3, 1e6),
                        scale: var / mean,
                    }
                }
            }
        }
    };

    // component 1 is the tail side for each family
    let (comp0, comp1, w1_count) = match family {
        MixtureFamily::Gaussian => (moments(upper), moments(lower), lower.len()),
        MixtureFamily::Gamma => (moments(lower), moments(upper), upper.len()),
    };
    let w1 = (w1_count as f64 / n as f64).clamp(config.weight_floor, 1.0 - config.weight_floor);
    Ok(([comp0, comp1], w1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distributions::Distribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Gamma, Normal};

    fn is_monotone(trace: &[f64]) -> bool {
        trace.windows(2).all(|w| w[1] >= w[0] - 1e-10)
    }

    #[test]
    fn pure_null_gaussian_recovers_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let z: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let model = fit_gaussian_mixture(&z, &EmConfig::default()).unwrap();
        assert!(model.pi0 >= 0.95, "pi0 = {}", model.pi0);
        match model.null {
            ComponentParams::Gaussian { mean, sd } => {
                assert!(mean.abs() < 0.05, "null mean {mean}");
                assert!((sd - 1.0).abs() < 0.05, "null sd {sd}");
            }
            _ => unreachable!(),
        }
        assert!(is_monotone(&model.log_likelihood_trace));
    }

    #[test]
    fn contaminated_gaussian_recovers_both_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let null = Normal::new(0.0, 1.0).unwrap();
        let alt = Normal::new(-5.0, 1.0).unwrap();
        let mut z: Vec<f64> = (0..9_000).map(|_| null.sample(&mut rng)).collect();
        z.extend((0..1_000).map(|_| alt.sample(&mut rng)));
        let model = fit_gaussian_mixture(&z, &EmConfig::default()).unwrap();
        assert!((model.pi0 - 0.9).abs() < 0.03, "pi0 = {}", model.pi0);
        assert!(model.null.mean().abs() < 0.15);
        assert!((model.alt.mean() + 5.0).abs() < 0.15);
        assert!(!model.collapsed);
        assert!(is_monotone(&model.log_likelihood_trace));
    }

    #[test]
    fn pure_gamma_recovers_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gamma = Gamma::new(1.0, 1.0).unwrap();
        let t: Vec<f64> = (0..10_000).map(|_| gamma.sample(&mut rng)).collect();
        let model = fit_gamma_mixture(&t, &EmConfig::default()).unwrap();
        match model.null {
            ComponentParams::Gamma { shape, scale } => {
                assert!((shape - 1.0).abs() < 0.1, "shape {shape}");
                assert!((scale - 1.0).abs() < 0.1, "scale {scale}");
            }
            _ => unreachable!(),
        }
        assert!(is_monotone(&model.log_likelihood_trace));
    }

    #[test]
    fn contaminated_gamma_recovers_weights_and_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let null = Gamma::new(1.0, 1.0).unwrap();
        let alt = Gamma::new(20.0, 1.0).unwrap();
        let mut t: Vec<f64> = (0..9_500).map(|_| null.sample(&mut rng)).collect();
        t.extend((0..500).map(|_| alt.sample(&mut rng)));
        let model = fit_gamma_mixture(&t, &EmConfig::default()).unwrap();
        assert!((model.pi0 - 0.95).abs() < 0.02, "pi0 = {}", model.pi0);
        assert!((model.null.mean() - 1.0).abs() < 0.1, "null mean {}", model.null.mean());
        assert!((model.alt.mean() - 20.0).abs() < 2.0, "alt mean {}", model.alt.mean());
        assert!(!model.collapsed);
    }

    #[test]
    fn input_validation() {
        assert!(fit_gaussian_mixture(&[], &EmConfig::default()).is_err());
        assert!(fit_gaussian_mixture(&[1.0; 9], &EmConfig::default()).is_err());
        assert!(fit_gaussian_mixture(&[2.0; 50], &EmConfig::default()).is_err());
        let mut t = vec![0.5; 20];
        t[3] = -0.1;
        assert!(fit_gamma_mixture(&t, &EmConfig::default()).is_err());
    }

    #[test]
    fn fits_are_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gamma = Gamma::new(1.3, 0.9).unwrap();
        let t: Vec<f64> = (0..2_000).map(|_| gamma.sample(&mut rng)).collect();
        let a = fit_gamma_mixture(&t, &EmConfig::default()).unwrap();
        let b = fit_gamma_mixture(&t, &EmConfig::default()).unwrap();
        assert_eq!(a.pi0.to_bits(), b.pi0.to_bits());
        assert_eq!(a.null, b.null);
        assert_eq!(a.alt, b.alt);
        assert_eq!(a.log_likelihood.to_bits(), b.log_likelihood.to_bits());
    }

    #[test]
    fn newton_satisfies_score_equation() {
        for &s in &[1e-9, 1e-4, 0.01, 0.1, 0.5, 1.0, 3.0, 10.0] {
            let alpha = solve_gamma_shape(s, 0).unwrap();
            let target = alpha.ln() - s;
            assert!(
                (digamma(alpha) - target).abs() < 1e-10,
                "s={s} alpha={alpha}"
            );
        }
    }

    #[test]
    fn local_fdr_degenerate_and_symmetric_cases() {
        // pi1 = 0: fdr = 1 everywhere
        let all_null = MixtureModel {
            family: MixtureFamily::Gaussian,
            pi0: 1.0,
            null: ComponentParams::Gaussian { mean: 0.0, sd: 1.0 },
            alt: ComponentParams::Gaussian { mean: -3.0, sd: 1.0 },
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            collapsed: false,
            log_likelihood_trace: vec![0.0],
        };
        for v in [-10.0, -1.0, 0.0, 4.0] {
            assert_eq!(all_null.local_fdr(v).unwrap(), 1.0);
        }

        // symmetric equal-weight components: fdr = 0.5 at the midpoint
        let symmetric = MixtureModel {
            pi0: 0.5,
            ..all_null.clone()
        };
        assert!((symmetric.local_fdr(-1.5).unwrap() - 0.5).abs() < 1e-12);

        // well separated gamma components, far alternative tail
        let gamma_model = MixtureModel {
            family: MixtureFamily::Gamma,
            pi0: 0.95,
            null: ComponentParams::Gamma { shape: 1.0, scale: 1.0 },
            alt: ComponentParams::Gamma { shape: 20.0, scale: 1.0 },
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            collapsed: false,
            log_likelihood_trace: vec![0.0],
        };
        let fdr = gamma_model.local_fdr(25.0).unwrap();
        assert!(fdr < 1e-3, "fdr {fdr}");
        assert!(gamma_model.local_fdr(-0.5).is_err());
    }

    #[test]
    fn local_fdr_stays_in_unit_interval_under_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let uniform = rand::distributions::Uniform::new(-1e6, 1e6);
        let gauss = MixtureModel {
            family: MixtureFamily::Gaussian,
            pi0: 0.97,
            null: ComponentParams::Gaussian { mean: 0.0, sd: 1.0 },
            alt: ComponentParams::Gaussian { mean: -4.0, sd: 0.5 },
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
            collapsed: false,
            log_likelihood_trace: vec![0.0],
        };
        for _ in 0..10_000 {
            let v: f64 = uniform.sample(&mut rng);
            let fdr = gauss.local_fdr(v).unwrap();
            assert!((0.0..=1.0).contains(&fdr));
        }
    }

    #[test]
    fn key_value_block_round_trips_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let gamma = Gamma::new(1.0, 1.0).unwrap();
        let t: Vec<f64> = (0..500).map(|_| gamma.sample(&mut rng)).collect();
        let model = fit_gamma_mixture(&t, &EmConfig::default()).unwrap();
        let block = model.to_key_value_block();
        assert!(block.contains("family=gamma"));
        assert!(block.contains("null_shape="));
        assert!(block.contains("converged="));
    }
}
