//! Selection procedures under positive false discovery rate control.
//!
//! Four procedures share one report shape: Storey q-values on Gamma
//! p-values, probit-scale Gaussian-mixture local fdr, Gamma-mixture
//! local fdr modeling of the raw statistics, and a per-region simple
//! linear regression baseline. Reject sets are nested across increasing
//! α for a fixed procedure, and the pFDR estimate at a chosen threshold
//! is the arithmetic mean of the local fdrs over the rejected set.

mod pi0;
mod report;
mod slr;

pub use pi0::{default_lambda_grid, estimate_pi0, qvalues, Pi0Mode};
pub use report::{AlphaDecision, RejectionReport, TestRecord};
pub use slr::{run_slr_baseline, RegionSelect, SlrOptions};

use crate::error::{Error, Result};
use crate::mixture::{fit_gamma_mixture, fit_gaussian_mixture, EmConfig, MixtureModel};
use crate::null::{fit_gamma_null, gamma_pvalue, probit_all};

/// The four selection procedures, numbered as exposed on the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmId {
    /// 1: Gamma p-values + q-values.
    QValue,
    /// 2: Gamma p-values, probit transform, Gaussian-mixture local fdr.
    LocfdrZ,
    /// 3: Gamma-mixture local fdr modeling of the raw statistics.
    LocfdrT,
    /// 4: per-region simple linear regression baseline.
    SlrBaseline,
}

impl AlgorithmId {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(AlgorithmId::QValue),
            2 => Ok(AlgorithmId::LocfdrZ),
            3 => Ok(AlgorithmId::LocfdrT),
            4 => Ok(AlgorithmId::SlrBaseline),
            other => Err(Error::Config(format!(
                "algorithm must be 1, 2, 3, or 4, got {other}"
            ))),
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            AlgorithmId::QValue => 1,
            AlgorithmId::LocfdrZ => 2,
            AlgorithmId::LocfdrT => 3,
            AlgorithmId::SlrBaseline => 4,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmId::QValue => "qvalue",
            AlgorithmId::LocfdrZ => "locfdr_z",
            AlgorithmId::LocfdrT => "locfdr_t",
            AlgorithmId::SlrBaseline => "slr_locfdr",
        }
    }
}

/// Which tail of the score scale counts as extreme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Left,
    Right,
}

/// Result of one threshold search.
#[derive(Debug, Clone)]
pub struct ThresholdDecision {
    /// Value of the least extreme rejected score; None when nothing is
    /// rejected.
    pub threshold: Option<f64>,
    /// Indices of rejected tests, in the input order of `values`.
    pub rejected: Vec<usize>,
    /// Mean local fdr over the rejected set.
    pub pfdr: Option<f64>,
}

/// Most inclusive cutoff whose running mean of local fdr stays at or
/// below α. Cutoffs are scanned at the observed values from most to
/// least extreme; ties are treated as one block so equal scores are
/// rejected together.
pub fn pfdr_threshold(
    values: &[f64],
    local_fdrs: &[f64],
    alpha: f64,
    tail: Tail,
) -> Result<ThresholdDecision> {
    if values.len() != local_fdrs.len() {
        return Err(Error::InvalidInput(format!(
            "{} values but {} local fdrs",
            values.len(),
            local_fdrs.len()
        )));
    }
    if values.iter().chain(local_fdrs).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "non-finite value or local fdr".into(),
        ));
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    match tail {
        Tail::Left => order.sort_by(|&a, &b| values[a].total_cmp(&values[b])),
        Tail::Right => order.sort_by(|&a, &b| values[b].total_cmp(&values[a])),
    }

    let mut best: Option<usize> = None; // index into `order`, inclusive
    let mut running_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        // extend over the tie block
        let mut j = k;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[k]] {
            j += 1;
        }
        for &idx in &order[k..=j] {
            running_sum += local_fdrs[idx];
        }
        if running_sum / (j + 1) as f64 <= alpha {
            best = Some(j);
        }
        k = j + 1;
    }

    match best {
        None => Ok(ThresholdDecision {
            threshold: None,
            rejected: Vec::new(),
            pfdr: None,
        }),
        Some(last) => {
            let rejected: Vec<usize> = order[..=last].to_vec();
            let mean =
                rejected.iter().map(|&i| local_fdrs[i]).sum::<f64>() / rejected.len() as f64;
            Ok(ThresholdDecision {
                threshold: Some(values[order[last]]),
                rejected,
                pfdr: Some(mean),
            })
        }
    }
}

/// Procedure 1: Gamma p-values and Storey q-values; rejects q ≤ α.
pub fn run_qvalue(
    ids: &[String],
    stats: &[f64],
    alphas: &[f64],
    pi0_mode: Pi0Mode,
) -> Result<RejectionReport> {
    let null = fit_gamma_null(stats)?;
    let pvalues = stats
        .iter()
        .map(|&t| gamma_pvalue(&null, t))
        .collect::<Result<Vec<_>>>()?;
    run_qvalue_from_pvalues(ids, Some(stats), &pvalues, alphas, pi0_mode)
}

/// Procedure 1 on externally supplied p-values (permutation null).
pub fn run_qvalue_from_pvalues(
    ids: &[String],
    stats: Option<&[f64]>,
    pvalues: &[f64],
    alphas: &[f64],
    pi0_mode: Pi0Mode,
) -> Result<RejectionReport> {
    check_test_inputs(ids, stats, pvalues.len())?;
    validate_alphas(alphas)?;
    let pi0 = match pi0_mode {
        Pi0Mode::Storey => estimate_pi0(pvalues, &default_lambda_grid())?,
        Pi0Mode::Fixed(v) => {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("fixed pi0 must lie in (0,1], got {v}")));
            }
            v
        }
    };
    let q = qvalues(pvalues, pi0)?;

    let mut records: Vec<TestRecord> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| TestRecord {
            id: id.clone(),
            statistic: stats.map(|s| s[i]),
            p: Some(pvalues[i]),
            q: Some(q[i]),
            z: None,
            locfdr_z: None,
            locfdr_t: None,
            reject: vec![false; alphas.len()],
        })
        .collect();

    let mut decisions = Vec::with_capacity(alphas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        // q̃ = largest q at or below α; reject all q ≤ q̃
        let q_tilde = q
            .iter()
            .copied()
            .filter(|&v| v <= alpha)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut n_rejected = 0;
        if q_tilde.is_finite() {
            for (i, record) in records.iter_mut().enumerate() {
                if q[i] <= q_tilde {
                    record.reject[ai] = true;
                    n_rejected += 1;
                }
            }
        }
        decisions.push(AlphaDecision {
            alpha,
            threshold: q_tilde.is_finite().then_some(q_tilde),
            pfdr: q_tilde.is_finite().then_some(q_tilde),
            n_rejected,
        });
    }

    Ok(RejectionReport {
        algorithm: AlgorithmId::QValue,
        alphas: alphas.to_vec(),
        records,
        decisions,
        m: ids.len(),
        pi0: Some(pi0),
        model_block: None,
        excluded: Vec::new(),
        clamp_count: 0,
    })
}

/// Procedure 2: probit z-scores from Gamma p-values, Gaussian-mixture
/// local fdr, left-tail pFDR threshold.
pub fn run_locfdr_z(
    ids: &[String],
    stats: &[f64],
    alphas: &[f64],
    em: &EmConfig,
) -> Result<RejectionReport> {
    let null = fit_gamma_null(stats)?;
    let pvalues = stats
        .iter()
        .map(|&t| gamma_pvalue(&null, t))
        .collect::<Result<Vec<_>>>()?;
    run_locfdr_z_from_pvalues(ids, Some(stats), &pvalues, alphas, em)
}

/// Procedure 2 on externally supplied p-values (permutation null).
pub fn run_locfdr_z_from_pvalues(
    ids: &[String],
    stats: Option<&[f64]>,
    pvalues: &[f64],
    alphas: &[f64],
    em: &EmConfig,
) -> Result<RejectionReport> {
    check_test_inputs(ids, stats, pvalues.len())?;
    validate_alphas(alphas)?;
    let (z, clamp_count) = probit_all(pvalues);
    let model = fit_gaussian_mixture(&z, em)?;
    let fdrs = model.local_fdr_all(&z)?;
    let mut report = threshold_report(
        AlgorithmId::LocfdrZ,
        ids,
        alphas,
        &z,
        &fdrs,
        Tail::Left,
        &model,
    )?;
    for (i, record) in report.records.iter_mut().enumerate() {
        record.statistic = stats.map(|s| s[i]);
        record.p = Some(pvalues[i]);
        record.z = Some(z[i]);
        record.locfdr_z = Some(fdrs[i]);
    }
    report.clamp_count = clamp_count;
    Ok(report)
}

/// Procedure 3: Gamma-mixture local fdr on the raw statistics,
/// right-tail pFDR threshold. No p-values are involved.
pub fn run_locfdr_t(
    ids: &[String],
    stats: &[f64],
    alphas: &[f64],
    em: &EmConfig,
) -> Result<RejectionReport> {
    check_test_inputs(ids, Some(stats), stats.len())?;
    validate_alphas(alphas)?;
    let model = fit_gamma_mixture(stats, em)?;
    let fdrs = model.local_fdr_all(stats)?;
    let mut report = threshold_report(
        AlgorithmId::LocfdrT,
        ids,
        alphas,
        stats,
        &fdrs,
        Tail::Right,
        &model,
    )?;
    for (i, record) in report.records.iter_mut().enumerate() {
        record.statistic = Some(stats[i]);
        record.locfdr_t = Some(fdrs[i]);
    }
    Ok(report)
}

fn threshold_report(
    algorithm: AlgorithmId,
    ids: &[String],
    alphas: &[f64],
    scores: &[f64],
    fdrs: &[f64],
    tail: Tail,
    model: &MixtureModel,
) -> Result<RejectionReport> {
    let mut records: Vec<TestRecord> = ids
        .iter()
        .map(|id| TestRecord {
            id: id.clone(),
            statistic: None,
            p: None,
            q: None,
            z: None,
            locfdr_z: None,
            locfdr_t: None,
            reject: vec![false; alphas.len()],
        })
        .collect();

    let mut decisions = Vec::with_capacity(alphas.len());
    for (ai, &alpha) in alphas.iter().enumerate() {
        let decision = pfdr_threshold(scores, fdrs, alpha, tail)?;
        for &idx in &decision.rejected {
            records[idx].reject[ai] = true;
        }
        decisions.push(AlphaDecision {
            alpha,
            threshold: decision.threshold,
            pfdr: decision.pfdr,
            n_rejected: decision.rejected.len(),
        });
    }

    Ok(RejectionReport {
        algorithm,
        alphas: alphas.to_vec(),
        records,
        decisions,
        m: ids.len(),
        pi0: None,
        model_block: Some(model.to_key_value_block()),
        excluded: Vec::new(),
        clamp_count: 0,
    })
}

fn check_test_inputs(ids: &[String], stats: Option<&[f64]>, n: usize) -> Result<()> {
    if ids.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} ids for {n} tests",
            ids.len()
        )));
    }
    if let Some(stats) = stats {
        if stats.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} statistics for {n} tests",
                stats.len()
            )));
        }
        if stats.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("non-finite statistic".into()));
        }
    }
    Ok(())
}

fn validate_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(Error::Config("at least one alpha level is required".into()));
    }
    for &a in alphas {
        if !(0.0..1.0).contains(&a) {
            return Err(Error::Config(format!("alpha must lie in [0,1), got {a}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::distributions::Distribution;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Gamma;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i:04}")).collect()
    }

    #[test]
    fn pfdr_threshold_running_mean_example() {
        // right tail at stats (9,8,7): running means 0.01, 0.015, 0.0767
        let d = pfdr_threshold(&[9.0, 8.0, 7.0], &[0.01, 0.02, 0.20], 0.05, Tail::Right).unwrap();
        assert_eq!(d.rejected, vec![0, 1]);
        assert_eq!(d.threshold, Some(8.0));
        assert!((d.pfdr.unwrap() - 0.015).abs() < 1e-15);
    }

    #[test]
    fn pfdr_threshold_singleton_and_zero_alpha() {
        let d = pfdr_threshold(&[3.0], &[0.04], 0.05, Tail::Right).unwrap();
        assert_eq!(d.rejected, vec![0]);
        assert_eq!(d.pfdr, Some(0.04));

        let d = pfdr_threshold(&[3.0, 1.0], &[0.04, 0.9], 0.0, Tail::Right).unwrap();
        assert!(d.rejected.is_empty());
        assert!(d.threshold.is_none());

        assert!(pfdr_threshold(&[1.0], &[0.1, 0.2], 0.05, Tail::Left).is_err());
    }

    #[test]
    fn pfdr_threshold_two_point_running_mean() {
        // local fdrs (0.01, 0.99) at stats (10, 1): means 0.01 then 0.50
        let d = pfdr_threshold(&[10.0, 1.0], &[0.01, 0.99], 0.05, Tail::Right).unwrap();
        assert_eq!(d.rejected, vec![0]);
    }

    #[test]
    fn pfdr_threshold_rejects_ties_together() {
        // tied scores must enter as a block or not at all
        let d = pfdr_threshold(
            &[5.0, 5.0, 4.0],
            &[0.01, 0.2, 0.9],
            0.15,
            Tail::Right,
        )
        .unwrap();
        assert_eq!(d.rejected.len(), 2);
        assert!((d.pfdr.unwrap() - 0.105).abs() < 1e-15);
    }

    #[test]
    fn pfdr_estimate_matches_mean_over_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let uni = rand::distributions::Uniform::new(0.0, 1.0);
        let values: Vec<f64> = (0..200).map(|_| uni.sample(&mut rng) * 10.0).collect();
        let fdrs: Vec<f64> = (0..200).map(|_| uni.sample(&mut rng)).collect();
        for &alpha in &[0.05, 0.2, 0.5, 0.9] {
            let d = pfdr_threshold(&values, &fdrs, alpha, Tail::Right).unwrap();
            if let Some(pfdr) = d.pfdr {
                let mean =
                    d.rejected.iter().map(|&i| fdrs[i]).sum::<f64>() / d.rejected.len() as f64;
                assert_eq!(pfdr, mean);
                assert!(pfdr <= alpha);
            }
        }
    }

    #[test]
    fn qvalue_single_test_reduction() {
        let report = run_qvalue_from_pvalues(
            &ids(1),
            None,
            &[0.01],
            &[0.05],
            Pi0Mode::Fixed(1.0),
        )
        .unwrap();
        assert_eq!(report.records[0].q, Some(0.01));
        assert!(report.records[0].reject[0]);
    }

    #[test]
    fn qvalue_step_up_example() {
        // p = (0.001, 0.4, 0.9), pi0 = 1 -> q = (0.003, 0.6, 0.9)
        let report = run_qvalue_from_pvalues(
            &ids(3),
            None,
            &[0.001, 0.4, 0.9],
            &[0.05],
            Pi0Mode::Fixed(1.0),
        )
        .unwrap();
        let q: Vec<f64> = report.records.iter().map(|r| r.q.unwrap()).collect();
        assert!((q[0] - 0.003).abs() < 1e-15);
        assert!((q[1] - 0.6).abs() < 1e-15);
        assert!((q[2] - 0.9).abs() < 1e-15);
        let rejected: Vec<bool> = report.records.iter().map(|r| r.reject[0]).collect();
        assert_eq!(rejected, vec![true, false, false]);
    }

    #[test]
    fn reject_sets_nest_across_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gamma = Gamma::new(1.0, 1.0).unwrap();
        let mut stats: Vec<f64> = (0..400).map(|_| gamma.sample(&mut rng)).collect();
        let strong = Gamma::new(15.0, 1.0).unwrap();
        stats.extend((0..40).map(|_| strong.sample(&mut rng)));
        let alphas = [0.05, 0.10, 0.15, 0.20];
        let em = EmConfig::default();
        let the_ids = ids(stats.len());

        for report in [
            run_qvalue(&the_ids, &stats, &alphas, Pi0Mode::Storey).unwrap(),
            run_locfdr_z(&the_ids, &stats, &alphas, &em).unwrap(),
            run_locfdr_t(&the_ids, &stats, &alphas, &em).unwrap(),
        ] {
            for record in &report.records {
                for w in record.reject.windows(2) {
                    assert!(!w[0] || w[1], "reject sets must nest in alpha");
                }
            }
            for (d, a) in report.decisions.iter().zip(alphas) {
                assert_eq!(d.alpha, a);
                if d.n_rejected > 0 {
                    assert!(d.pfdr.unwrap() <= a);
                }
            }
        }
    }

    #[test]
    fn locfdr_t_degenerate_all_null_rejects_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let gamma = Gamma::new(1.0, 1.0).unwrap();
        let stats: Vec<f64> = (0..500).map(|_| gamma.sample(&mut rng)).collect();
        let report = run_locfdr_t(&ids(500), &stats, &[0.05], &EmConfig::default()).unwrap();
        assert_eq!(report.decisions[0].n_rejected, 0);
    }

    #[test]
    fn locfdr_z_boundary_cases() {
        // all local fdrs above alpha -> empty; all below -> everything
        let d = pfdr_threshold(
            &[-3.0, -2.0, -1.0],
            &[0.4, 0.5, 0.6],
            0.05,
            Tail::Left,
        )
        .unwrap();
        assert!(d.rejected.is_empty());

        let d = pfdr_threshold(
            &[-3.0, -2.0, -1.0],
            &[0.01, 0.02, 0.03],
            0.05,
            Tail::Left,
        )
        .unwrap();
        assert_eq!(d.rejected.len(), 3);
        assert!((d.pfdr.unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn scale_equivariance_of_gamma_modeling() {
        // scaling the statistics scales the fitted Gamma scale but leaves
        // the reject set unchanged
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let gamma = Gamma::new(1.0, 1.0).unwrap();
        let strong = Gamma::new(12.0, 1.0).unwrap();
        let mut stats: Vec<f64> = (0..600).map(|_| gamma.sample(&mut rng)).collect();
        stats.extend((0..30).map(|_| strong.sample(&mut rng)));
        let the_ids = ids(stats.len());
        let em = EmConfig::default();
        let alphas = [0.05, 0.2];

        let base = run_locfdr_t(&the_ids, &stats, &alphas, &em).unwrap();
        for &factor in &[0.5, 2.0] {
            let scaled: Vec<f64> = stats.iter().map(|t| t * factor).collect();
            let run = run_locfdr_t(&the_ids, &scaled, &alphas, &em).unwrap();
            for (a, b) in base.records.iter().zip(&run.records) {
                assert_eq!(a.reject, b.reject, "factor {factor}");
            }
        }
    }
}
