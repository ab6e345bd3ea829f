//! Baseline procedure: per-region simple linear regression with local
//! fdr adjustment on the per-predictor selected p-values.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{threshold_report, AlgorithmId, RejectionReport, Tail};
use crate::data::{GenotypeMatrix, PhenotypeMatrix};
use crate::error::{Error, Result};
use crate::mixture::{fit_gaussian_mixture, EmConfig};
use crate::null::probit_all;

/// Which region's p-value represents a predictor. The intended screen is
/// the most significant region (`MinP`); `MaxP` is the literal
/// least-significant reading, kept selectable for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSelect {
    MinP,
    MaxP,
}

#[derive(Debug, Clone)]
pub struct SlrOptions {
    pub region_select: RegionSelect,
    pub em: EmConfig,
}

impl Default for SlrOptions {
    fn default() -> Self {
        Self {
            region_select: RegionSelect::MinP,
            em: EmConfig::default(),
        }
    }
}

/// Two-sided slope t-test p-value of the regression y ~ g.
/// Returns None when the test is not defined (fewer than 3 points or a
/// constant predictor).
fn slope_pvalue(g: &[f64], y: &[f64]) -> Option<f64> {
    let n = g.len();
    if n < 3 {
        return None;
    }
    let nf = n as f64;
    let mean_g = g.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&gi, &yi) in g.iter().zip(y) {
        let dg = gi - mean_g;
        let dy = yi - mean_y;
        sxx += dg * dg;
        sxy += dg * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let rss = (syy - slope * sxy).max(0.0);
    let df = nf - 2.0;
    let se = (rss / df / sxx).sqrt();
    if se == 0.0 {
        // exact fit
        return Some(if slope == 0.0 { 1.0 } else { 0.0 });
    }
    let t = (slope / se).abs();
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    Some((2.0 * dist.sf(t)).min(1.0))
}

/// Procedure 4: regress every region on every predictor over
/// pairwise-complete subjects, keep one p-value per predictor, and run
/// the probit + Gaussian-mixture local fdr path on the selected
/// p-values. Constant or too-sparse predictors are excluded and counted.
pub fn run_slr_baseline(
    genotypes: &GenotypeMatrix,
    phenotypes: &PhenotypeMatrix,
    alphas: &[f64],
    options: &SlrOptions,
) -> Result<RejectionReport> {
    if genotypes.n_subjects() != phenotypes.n_subjects() {
        return Err(Error::InvalidInput(
            "genotype and phenotype matrices are not aligned".into(),
        ));
    }
    super::validate_alphas(alphas)?;
    let n = genotypes.n_subjects();
    let q = phenotypes.n_regions();

    let mut ids = Vec::new();
    let mut selected = Vec::new();
    let mut excluded = Vec::new();
    for snp in 0..genotypes.n_snps() {
        let column = genotypes.values().column(snp);
        let used: Vec<usize> = (0..n).filter(|&i| !column[i].is_nan()).collect();
        let g: Vec<f64> = used.iter().map(|&i| column[i]).collect();

        let mut best: Option<f64> = None;
        for region in 0..q {
            let y: Vec<f64> = used.iter().map(|&i| phenotypes.values()[[i, region]]).collect();
            match slope_pvalue(&g, &y) {
                Some(p) => {
                    best = Some(match (best, options.region_select) {
                        (None, _) => p,
                        (Some(b), RegionSelect::MinP) => b.min(p),
                        (Some(b), RegionSelect::MaxP) => b.max(p),
                    });
                }
                None => {
                    best = None;
                    break; // constant predictor: no region is testable
                }
            }
        }
        match best {
            Some(p) => {
                ids.push(genotypes.snp_ids()[snp].clone());
                selected.push(p);
            }
            None => excluded.push(genotypes.snp_ids()[snp].clone()),
        }
    }

    if selected.len() < 10 {
        return Err(Error::Degenerate(format!(
            "only {} testable predictors after exclusions",
            selected.len()
        )));
    }

    let (z, clamp_count) = probit_all(&selected);
    let model = fit_gaussian_mixture(&z, &options.em)?;
    let fdrs = model.local_fdr_all(&z)?;
    let mut report = threshold_report(
        AlgorithmId::SlrBaseline,
        &ids,
        alphas,
        &z,
        &fdrs,
        Tail::Left,
        &model,
    )?;
    for (i, record) in report.records.iter_mut().enumerate() {
        record.p = Some(selected[i]);
        record.z = Some(z[i]);
        record.locfdr_z = Some(fdrs[i]);
    }
    report.clamp_count = clamp_count;
    report.excluded = excluded;
    Ok(report)
}
