//! Monte Carlo harness: synthetic study generators, replicate
//! evaluation, and size/power studies over many replicates.
//!
//! Replicate r draws its randomness from a seed derived from
//! (study seed, r), so results are identical regardless of execution
//! order or worker count.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::MissingnessMask;
use crate::dcov::dcov_statistic;
use crate::error::{Error, Result};
use crate::fdr::{
    run_locfdr_t, run_locfdr_z, run_qvalue, AlgorithmId, Pi0Mode, RejectionReport,
};
use crate::mixture::EmConfig;
use crate::null::{fit_gamma_null, gamma_pvalue};

/// The three synthetic study designs.
///
/// Design 1: univariate pairs, n = 50, bivariate normal with ρ = 0.8
/// under the alternative and ρ = 0 under the null.
/// Designs 2 and 3: n = 100, standard normal predictor, 30-dimensional
/// response; alternatives stack 10 copies, 10 exponentials, and
/// 10 squares of the predictor; nulls draw the response from a
/// multivariate normal with identity covariance (design 2) or constant
/// 0.5 off-diagonal correlation (design 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignId {
    One,
    Two,
    Three,
}

impl DesignId {
    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(DesignId::One),
            2 => Ok(DesignId::Two),
            3 => Ok(DesignId::Three),
            other => Err(Error::Config(format!(
                "design must be 1, 2, or 3, got {other}"
            ))),
        }
    }

    pub fn number(&self) -> u8 {
        match self {
            DesignId::One => 1,
            DesignId::Two => 2,
            DesignId::Three => 3,
        }
    }
}

/// Fully specified simulation design. The canonical designs come from
/// [`SimDesign::new`]; `all_null` switches every test to the null
/// generator for size analysis.
#[derive(Debug, Clone)]
pub struct SimDesign {
    pub design: DesignId,
    pub n_subjects: usize,
    pub n_tests: usize,
    pub n_alt: usize,
    pub phenotype_dim: usize,
    pub rho: f64,
    pub off_diagonal: f64,
    pub all_null: bool,
}

impl SimDesign {
    pub fn new(design: DesignId) -> Self {
        let (n_subjects, phenotype_dim, off_diagonal) = match design {
            DesignId::One => (50, 1, 0.0),
            DesignId::Two => (100, 30, 0.0),
            DesignId::Three => (100, 30, 0.5),
        };
        // 19:1 null to alternative ratio over 1000 tests
        Self {
            design,
            n_subjects,
            n_tests: 1000,
            n_alt: 50,
            phenotype_dim,
            rho: 0.8,
            off_diagonal,
            all_null: false,
        }
    }

    /// Same design with every test drawn from the null population.
    pub fn all_null(mut self) -> Self {
        self.all_null = true;
        self.n_alt = 0;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_tests == 0 || self.n_subjects < 2 {
            return Err(Error::Config("empty simulation design".into()));
        }
        if self.n_alt > self.n_tests {
            return Err(Error::Config(
                "more alternatives than tests in the design".into(),
            ));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (-1,1), got {}", self.rho)));
        }
        Ok(())
    }
}

/// One synthetic study: per-test predictor/response samples plus truth
/// labels.
#[derive(Debug, Clone)]
pub struct StudyData {
    pub ids: Vec<String>,
    /// (n×1 predictor, n×q response) per test.
    pub tests: Vec<(Array2<f64>, Array2<f64>)>,
    pub is_alt: Vec<bool>,
}

/// Deterministic per-index seed stream (splitmix64 over the pair).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate one study. Alternative positions are shuffled by the seed;
/// the same (design, seed) pair always produces bit-identical output.
pub fn simulate_study(design: &SimDesign, seed: u64) -> Result<StudyData> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = design.n_subjects;
    let q = design.phenotype_dim;

    let mut is_alt = vec![false; design.n_tests];
    for flag in is_alt.iter_mut().take(design.n_alt) {
        *flag = true;
    }
    is_alt.shuffle(&mut rng);

    // Cholesky factor of the null response covariance (designs 2/3)
    let chol = if design.design != DesignId::One && design.off_diagonal != 0.0 {
        let sigma = DMatrix::from_fn(q, q, |i, j| {
            if i == j {
                1.0
            } else {
                design.off_diagonal
            }
        });
        let factor = nalgebra::Cholesky::new(sigma).ok_or_else(|| {
            Error::Config("null covariance matrix is not positive definite".into())
        })?;
        Some(factor.unpack())
    } else {
        None
    };

    let mut tests = Vec::with_capacity(design.n_tests);
    for &alt in &is_alt {
        let mut x = Array2::zeros((n, 1));
        let mut y = Array2::zeros((n, q));
        match design.design {
            DesignId::One => {
                let rho = if alt { design.rho } else { 0.0 };
                let noise_scale = (1.0 - rho * rho).sqrt();
                for i in 0..n {
                    let g: f64 = rng.sample(StandardNormal);
                    let e: f64 = rng.sample(StandardNormal);
                    x[[i, 0]] = g;
                    y[[i, 0]] = rho * g + noise_scale * e;
                }
            }
            DesignId::Two | DesignId::Three => {
                for i in 0..n {
                    x[[i, 0]] = rng.sample::<f64, _>(StandardNormal);
                }
                if alt {
                    // 10 copies | 10 exponentials | 10 squares
                    for i in 0..n {
                        let g = x[[i, 0]];
                        for k in 0..10 {
                            y[[i, k]] = g;
                            y[[i, 10 + k]] = g.exp();
                            y[[i, 20 + k]] = g * g;
                        }
                    }
                } else {
                    let mut z = vec![0.0; q];
                    for i in 0..n {
                        for zk in z.iter_mut() {
                            *zk = rng.sample(StandardNormal);
                        }
                        match &chol {
                            None => {
                                for (k, &zk) in z.iter().enumerate() {
                                    y[[i, k]] = zk;
                                }
                            }
                            Some(l) => {
                                for k in 0..q {
                                    let mut acc = 0.0;
                                    for (j, &zj) in z.iter().enumerate().take(k + 1) {
                                        acc += l[(k, j)] * zj;
                                    }
                                    y[[i, k]] = acc;
                                }
                            }
                        }
                    }
                }
            }
        }
        tests.push((x, y));
    }

    Ok(StudyData {
        ids: (0..design.n_tests).map(|i| format!("t{i:04}")).collect(),
        tests,
        is_alt,
    })
}

/// Distance covariance statistic for every test in a study.
pub fn study_statistics(study: &StudyData) -> Result<Vec<f64>> {
    study
        .tests
        .iter()
        .map(|(x, y)| {
            let mask = MissingnessMask::complete(x.nrows());
            Ok(dcov_statistic(x.view(), y.view(), &mask, &mask)?.statistic)
        })
        .collect()
}

/// Synthetic matrix-shaped study for exercising the file pipeline: one
/// shared multivariate phenotype and a genotype matrix in which the
/// first `n_assoc` SNPs shift the first phenotype column and the rest
/// are independent. A small fraction of genotype entries is missing.
pub fn synthetic_scan_study(
    n_subjects: usize,
    n_snps: usize,
    n_assoc: usize,
    n_regions: usize,
    missing_rate: f64,
    seed: u64,
) -> Result<(crate::data::GenotypeMatrix, crate::data::PhenotypeMatrix)> {
    if n_assoc > n_snps || n_subjects < 4 {
        return Err(Error::Config("invalid synthetic study shape".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subject_ids: Vec<String> = (0..n_subjects).map(|i| format!("s{i:04}")).collect();

    let mut phenotypes = Array2::zeros((n_subjects, n_regions));
    for v in phenotypes.iter_mut() {
        *v = rng.sample(StandardNormal);
    }

    let mut genotypes = Array2::zeros((n_subjects, n_snps));
    for snp in 0..n_snps {
        let maf = 0.15 + 0.35 * rng.gen::<f64>();
        for subject in 0..n_subjects {
            let mut count = f64::from(u8::from(rng.gen::<f64>() < maf))
                + f64::from(u8::from(rng.gen::<f64>() < maf));
            if snp < n_assoc {
                // associated SNPs track the first phenotype column
                let lift = phenotypes[[subject, 0]];
                if lift > 0.4 && count < 2.0 {
                    count += 1.0;
                } else if lift < -0.4 && count > 0.0 {
                    count -= 1.0;
                }
            }
            genotypes[[subject, snp]] = if rng.gen::<f64>() < missing_rate {
                f64::NAN
            } else {
                count
            };
        }
    }

    Ok((
        crate::data::GenotypeMatrix::new(
            subject_ids.clone(),
            (0..n_snps).map(|j| format!("snp{j:04}")).collect(),
            genotypes,
        )?,
        crate::data::PhenotypeMatrix::new(
            subject_ids,
            (0..n_regions).map(|r| format!("r{r:03}")).collect(),
            phenotypes,
        )?,
    ))
}

/// Confusion counts of one replicate at one alpha level.
/// FDP = V / max(R, 1); power = S / m₁ (0 when m₁ = 0).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReplicateOutcome {
    pub r: usize,
    pub v: usize,
    pub s: usize,
    pub fdp: f64,
    pub power: f64,
}

/// Score a report against truth labels; one outcome per alpha level.
pub fn evaluate_replicate(
    report: &RejectionReport,
    ids: &[String],
    is_alt: &[bool],
) -> Result<Vec<ReplicateOutcome>> {
    if ids.len() != is_alt.len() {
        return Err(Error::InvalidInput("truth labels do not match ids".into()));
    }
    let by_id: HashMap<&str, usize> = report
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let m1 = is_alt.iter().filter(|&&a| a).count();

    let mut outcomes = Vec::with_capacity(report.alphas.len());
    for ai in 0..report.alphas.len() {
        let mut r = 0;
        let mut v = 0;
        let mut s = 0;
        for (id, &alt) in ids.iter().zip(is_alt) {
            let record = by_id
                .get(id.as_str())
                .map(|&i| &report.records[i])
                .ok_or_else(|| {
                    Error::InvalidInput(format!("report is missing test {id}"))
                })?;
            if record.reject[ai] {
                r += 1;
                if alt {
                    s += 1;
                } else {
                    v += 1;
                }
            }
        }
        outcomes.push(ReplicateOutcome {
            r,
            v,
            s,
            fdp: v as f64 / r.max(1) as f64,
            power: if m1 == 0 { 0.0 } else { s as f64 / m1 as f64 },
        });
    }
    Ok(outcomes)
}

/// Empirical size at the nominal levels {0.1, ..., 1.0}, averaged over
/// runs of an all-null study: the fraction of Gamma p-values at or below
/// each level.
#[derive(Debug, Clone)]
pub struct SizeTable {
    pub design: DesignId,
    pub runs: usize,
    pub nominal: Vec<f64>,
    pub size: Vec<f64>,
}

impl SizeTable {
    pub fn size_at(&self, nominal: f64) -> Option<f64> {
        self.nominal
            .iter()
            .position(|&u| (u - nominal).abs() < 1e-9)
            .map(|i| self.size[i])
    }

    pub fn write_tsv<W: Write>(&self, writer: &mut W) -> Result<()> {
        writeln!(writer, "nominal\tsize")?;
        for (u, s) in self.nominal.iter().zip(&self.size) {
            writeln!(writer, "{u}\t{s}")?;
        }
        writeln!(writer, "# design={}", self.design.number())?;
        writeln!(writer, "# runs={}", self.runs)?;
        Ok(())
    }
}

/// Size analysis over repeated all-null studies. The Gamma null is
/// refitted within each run, mirroring the analysis pipeline.
pub fn size_analysis(design: &SimDesign, runs: usize, seed: u64) -> Result<SizeTable> {
    if runs == 0 {
        return Err(Error::Config("size analysis needs at least 1 run".into()));
    }
    if !design.all_null {
        return Err(Error::Config(
            "size analysis requires the all-null variant of the design".into(),
        ));
    }
    let nominal: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();

    let per_run: Vec<Vec<f64>> = (0..runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<f64>> {
            let study = simulate_study(design, derive_seed(seed, run as u64))?;
            let stats = study_statistics(&study)?;
            let null = fit_gamma_null(&stats)?;
            let pvalues = stats
                .iter()
                .map(|&t| gamma_pvalue(&null, t))
                .collect::<Result<Vec<_>>>()?;
            Ok(nominal
                .iter()
                .map(|&u| {
                    pvalues.iter().filter(|&&p| p <= u).count() as f64 / pvalues.len() as f64
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;

    let size = (0..nominal.len())
        .map(|i| per_run.iter().map(|row| row[i]).sum::<f64>() / runs as f64)
        .collect();
    Ok(SizeTable {
        design: design.design,
        runs,
        nominal,
        size,
    })
}

/// Mean and standard deviation of FDP and power for one
/// (algorithm, alpha) cell.
#[derive(Debug, Clone, Copy)]
pub struct PowerCell {
    pub algorithm: AlgorithmId,
    pub alpha: f64,
    pub mean_fdr: f64,
    pub sd_fdr: f64,
    pub mean_power: f64,
    pub sd_power: f64,
}

/// One replicate's outcome for the JSON-lines log.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub algorithm: u8,
    pub alpha: f64,
    #[serde(flatten)]
    pub outcome: ReplicateOutcome,
}

/// Replicated power study for a set of procedures and alpha levels.
#[derive(Debug, Clone)]
pub struct PowerStudyReport {
    pub design: DesignId,
    pub replicates: usize,
    pub alphas: Vec<f64>,
    pub algorithms: Vec<AlgorithmId>,
    pub cells: Vec<PowerCell>,
    pub per_replicate: Vec<ReplicateRecord>,
}

impl PowerStudyReport {
    pub fn cell(&self, algorithm: AlgorithmId, alpha: f64) -> Option<&PowerCell> {
        self.cells
            .iter()
            .find(|c| c.algorithm == algorithm && (c.alpha - alpha).abs() < 1e-9)
    }

    /// Wide table, one row per alpha: FDR (sd) and power (sd) per
    /// procedure.
    pub fn write_tsv<W: Write>(&self, writer: &mut W) -> Result<()> {
        write!(writer, "alpha")?;
        for alg in &self.algorithms {
            let label = alg.label();
            write!(
                writer,
                "\t{label}_fdr\t{label}_fdr_sd\t{label}_power\t{label}_power_sd"
            )?;
        }
        writeln!(writer)?;
        for &alpha in &self.alphas {
            write!(writer, "{alpha}")?;
            for &alg in &self.algorithms {
                let c = self.cell(alg, alpha).expect("cell exists");
                write!(
                    writer,
                    "\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                    c.mean_fdr, c.sd_fdr, c.mean_power, c.sd_power
                )?;
            }
            writeln!(writer)?;
        }
        writeln!(writer, "# design={}", self.design.number())?;
        writeln!(writer, "# replicates={}", self.replicates)?;
        Ok(())
    }

    /// Machine-readable per-replicate outcomes, one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, writer: &mut W) -> Result<()> {
        for record in &self.per_replicate {
            let line = serde_json::to_string(record)
                .map_err(|e| Error::InvalidInput(format!("jsonl serialization: {e}")))?;
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }
}

/// Run `replicates` independent studies and score the chosen procedures
/// at every alpha. Replicates are processed in parallel; the aggregation
/// order is fixed by replicate index.
pub fn power_study(
    design: &SimDesign,
    algorithms: &[AlgorithmId],
    alphas: &[f64],
    replicates: usize,
    seed: u64,
    em: &EmConfig,
) -> Result<PowerStudyReport> {
    if replicates == 0 {
        return Err(Error::Config("power study needs at least 1 replicate".into()));
    }
    if design.all_null {
        return Err(Error::Config(
            "power study requires the design's alternative fraction".into(),
        ));
    }
    if algorithms.is_empty() {
        return Err(Error::Config("no algorithms selected".into()));
    }
    if algorithms.contains(&AlgorithmId::SlrBaseline) {
        return Err(Error::Config(
            "the regression baseline runs on matrix studies, not the replicate harness".into(),
        ));
    }

    let per_rep: Vec<Vec<ReplicateRecord>> = (0..replicates)
        .into_par_iter()
        .map(|rep| -> Result<Vec<ReplicateRecord>> {
            let study = simulate_study(design, derive_seed(seed, rep as u64))?;
            let stats = study_statistics(&study)?;
            let mut records = Vec::with_capacity(algorithms.len() * alphas.len());
            for &alg in algorithms {
                let report = match alg {
                    AlgorithmId::QValue => {
                        run_qvalue(&study.ids, &stats, alphas, Pi0Mode::Storey)?
                    }
                    AlgorithmId::LocfdrZ => run_locfdr_z(&study.ids, &stats, alphas, em)?,
                    AlgorithmId::LocfdrT => run_locfdr_t(&study.ids, &stats, alphas, em)?,
                    AlgorithmId::SlrBaseline => unreachable!("rejected above"),
                };
                let outcomes = evaluate_replicate(&report, &study.ids, &study.is_alt)?;
                for (outcome, &alpha) in outcomes.iter().zip(alphas) {
                    records.push(ReplicateRecord {
                        replicate: rep,
                        algorithm: alg.number(),
                        alpha,
                        outcome: *outcome,
                    });
                }
            }
            Ok(records)
        })
        .collect::<Result<Vec<_>>>()?;

    let per_replicate: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();

    let mut cells = Vec::new();
    for &alg in algorithms {
        for &alpha in alphas {
            let rows: Vec<&ReplicateRecord> = per_replicate
                .iter()
                .filter(|r| r.algorithm == alg.number() && (r.alpha - alpha).abs() < 1e-12)
                .collect();
            let nf = rows.len() as f64;
            let mean_fdr = rows.iter().map(|r| r.outcome.fdp).sum::<f64>() / nf;
            let mean_power = rows.iter().map(|r| r.outcome.power).sum::<f64>() / nf;
            let (sd_fdr, sd_power) = if rows.len() > 1 {
                let vf = rows
                    .iter()
                    .map(|r| (r.outcome.fdp - mean_fdr).powi(2))
                    .sum::<f64>()
                    / (nf - 1.0);
                let vp = rows
                    .iter()
                    .map(|r| (r.outcome.power - mean_power).powi(2))
                    .sum::<f64>()
                    / (nf - 1.0);
                (vf.sqrt(), vp.sqrt())
            } else {
                (0.0, 0.0)
            };
            cells.push(PowerCell {
                algorithm: alg,
                alpha,
                mean_fdr,
                sd_fdr,
                mean_power,
                sd_power,
            });
        }
    }

    Ok(PowerStudyReport {
        design: design.design,
        replicates,
        alphas: alphas.to_vec(),
        algorithms: algorithms.to_vec(),
        cells,
        per_replicate,
    })
}
