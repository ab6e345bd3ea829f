//! End-to-end orchestration: ingest matrices, scan every predictor
//! against the shared multivariate response, apply one selection
//! procedure, and write reports.
//!
//! The response-side centered distance matrix is computed exactly once
//! per run and shared read-only by all predictor tests. Workers map over
//! predictor columns and results are gathered by column index, so output
//! is byte-identical for any worker count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::data::{
    align_subjects, parse_genotype_matrix, parse_phenotype_matrix, parse_region_map,
    roi_aggregate, GenotypeMatrix, MatrixFormat, PhenotypeMatrix,
};
use crate::dcov::{dcov_from_parts, permutation_pvalue_from_parts, weighted_centered_distances};
use crate::error::{Error, Result};
use crate::fdr::{
    run_locfdr_t, run_locfdr_z_from_pvalues, run_qvalue_from_pvalues, run_slr_baseline,
    AlgorithmId, Pi0Mode, RegionSelect, RejectionReport, SlrOptions,
};
use crate::mixture::EmConfig;
use crate::null::{fit_gamma_null, gamma_pvalue};
use crate::sim::derive_seed;

/// How per-test p-values are obtained for the procedures that need them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullMethod {
    /// Moment-matched Gamma fitted to the observed statistics.
    Gamma,
    /// Seeded permutation test with the given permutation count.
    Permutation { permutations: usize },
}

/// Everything a pipeline run needs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub genotype_path: PathBuf,
    pub phenotype_path: PathBuf,
    /// When set, the phenotype file is read as a voxel matrix and
    /// aggregated to region means through this map.
    pub region_map_path: Option<PathBuf>,
    pub algorithm: AlgorithmId,
    pub alphas: Vec<f64>,
    pub null_method: NullMethod,
    pub seed: u64,
    /// 0 = use all available cores.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub format: MatrixFormat,
    pub pi0_mode: Pi0Mode,
    pub region_select: RegionSelect,
    pub em: EmConfig,
}

impl PipelineConfig {
    pub fn new(
        genotype_path: impl Into<PathBuf>,
        phenotype_path: impl Into<PathBuf>,
        out_dir: impl Into<PathBuf>,
    ) -> Self {
        Self {
            genotype_path: genotype_path.into(),
            phenotype_path: phenotype_path.into(),
            region_map_path: None,
            algorithm: AlgorithmId::LocfdrT,
            alphas: vec![0.05, 0.10, 0.15, 0.20],
            null_method: NullMethod::Gamma,
            seed: 0,
            workers: 0,
            out_dir: out_dir.into(),
            format: MatrixFormat::default(),
            pi0_mode: Pi0Mode::Storey,
            region_select: RegionSelect::MinP,
            em: EmConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::Config("at least one alpha level is required".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("alpha must lie in (0,1), got {a}")));
            }
        }
        if let NullMethod::Permutation { permutations } = self.null_method {
            if permutations < 99 {
                return Err(Error::Config(format!(
                    "permutation null needs at least 99 permutations, got {permutations}"
                )));
            }
        }
        Ok(())
    }
}

/// Files written by a successful run.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub report_path: PathBuf,
    pub plot_path: PathBuf,
    pub manifest_path: PathBuf,
    pub n_subjects: usize,
    pub n_predictors: usize,
    pub n_tested: usize,
    pub rejections: Vec<(f64, usize)>,
}

/// Scan outcome before any files are written.
#[derive(Debug)]
pub struct ScanOutcome {
    pub report: RejectionReport,
    pub n_subjects: usize,
    pub n_predictors: usize,
}

/// Run the scan on already-ingested, aligned matrices.
pub fn run_scan(
    genotypes: &GenotypeMatrix,
    phenotypes: &PhenotypeMatrix,
    config: &PipelineConfig,
) -> Result<ScanOutcome> {
    config.validate()?;
    if genotypes.n_subjects() != phenotypes.n_subjects() {
        return Err(Error::InvalidInput(
            "genotype and phenotype matrices are not aligned".into(),
        ));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let report = if config.algorithm == AlgorithmId::SlrBaseline {
        let options = SlrOptions {
            region_select: config.region_select,
            em: config.em.clone(),
        };
        pool.install(|| run_slr_baseline(genotypes, phenotypes, &config.alphas, &options))?
    } else {
        scan_dcov(genotypes, phenotypes, config, &pool)?
    };

    Ok(ScanOutcome {
        n_subjects: genotypes.n_subjects(),
        n_predictors: genotypes.n_snps(),
        report,
    })
}

fn scan_dcov(
    genotypes: &GenotypeMatrix,
    phenotypes: &PhenotypeMatrix,
    config: &PipelineConfig,
    pool: &rayon::ThreadPool,
) -> Result<RejectionReport> {
    // response side: computed once, shared by every predictor
    let response_mask = crate::data::MissingnessMask::complete(phenotypes.n_subjects());
    let response = weighted_centered_distances(phenotypes.values().view(), &response_mask)?;

    let need_pvalues = matches!(
        (config.algorithm, config.null_method),
        (AlgorithmId::QValue | AlgorithmId::LocfdrZ, NullMethod::Permutation { .. })
    );

    struct SnpResult {
        statistic: f64,
        perm_p: Option<f64>,
    }

    let per_snp: Vec<Result<SnpResult>> = pool.install(|| {
        (0..genotypes.n_snps())
            .into_par_iter()
            .map(|snp| {
                let (column, mask) = genotypes.snp_column(snp)?;
                let samples = column.insert_axis(ndarray::Axis(1));
                let predictor = weighted_centered_distances(samples.view(), &mask)?;
                let result = dcov_from_parts(&predictor, &response)?;
                let perm_p = match (need_pvalues, config.null_method) {
                    (true, NullMethod::Permutation { permutations }) => {
                        Some(permutation_pvalue_from_parts(
                            &predictor,
                            &response,
                            permutations,
                            derive_seed(config.seed, snp as u64),
                        )?)
                    }
                    _ => None,
                };
                Ok(SnpResult {
                    statistic: result.statistic,
                    perm_p,
                })
            })
            .collect()
    });

    let mut ids = Vec::new();
    let mut stats = Vec::new();
    let mut perm_pvalues = Vec::new();
    let mut excluded = Vec::new();
    for (snp, outcome) in per_snp.into_iter().enumerate() {
        match outcome {
            Ok(r) => {
                ids.push(genotypes.snp_ids()[snp].clone());
                stats.push(r.statistic);
                if let Some(p) = r.perm_p {
                    perm_pvalues.push(p);
                }
            }
            // statistically unusable predictors are excluded, not fatal
            Err(Error::Degenerate(_)) => excluded.push(genotypes.snp_ids()[snp].clone()),
            Err(other) => return Err(other),
        }
    }
    if stats.is_empty() {
        return Err(Error::Degenerate(
            "every predictor was excluded as untestable".into(),
        ));
    }

    let pvalues: Vec<f64> = match config.null_method {
        NullMethod::Permutation { .. } if need_pvalues => perm_pvalues,
        _ => {
            let null = fit_gamma_null(&stats)?;
            stats
                .iter()
                .map(|&t| gamma_pvalue(&null, t))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut report = match config.algorithm {
        AlgorithmId::QValue => run_qvalue_from_pvalues(
            &ids,
            Some(&stats),
            &pvalues,
            &config.alphas,
            config.pi0_mode,
        )?,
        AlgorithmId::LocfdrZ => run_locfdr_z_from_pvalues(
            &ids,
            Some(&stats),
            &pvalues,
            &config.alphas,
            &config.em,
        )?,
        AlgorithmId::LocfdrT => run_locfdr_t(&ids, &stats, &config.alphas, &config.em)?,
        AlgorithmId::SlrBaseline => unreachable!("handled by run_scan"),
    };
    report.excluded = excluded;
    Ok(report)
}

/// Full pipeline: parse inputs, align subjects, scan, write the report
/// TSV, plot CSV, and run manifest into the output directory.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineSummary> {
    config.validate().map_err(Error::in_stage("config"))?;

    let genotypes = parse_file(&config.genotype_path, |r| {
        parse_genotype_matrix(r, &config.format)
    })
    .map_err(Error::in_stage("genotype-parse"))?;

    let phenotypes = match &config.region_map_path {
        None => parse_file(&config.phenotype_path, |r| {
            parse_phenotype_matrix(r, &config.format)
        })
        .map_err(Error::in_stage("phenotype-parse"))?,
        Some(map_path) => {
            let voxels = parse_file(&config.phenotype_path, |r| {
                parse_phenotype_matrix(r, &config.format)
            })
            .map_err(Error::in_stage("phenotype-parse"))?;
            let map = parse_file(map_path, |r| parse_region_map(r, &config.format))
                .map_err(Error::in_stage("region-map-parse"))?;
            roi_aggregate(&voxels, &map).map_err(Error::in_stage("roi-aggregate"))?
        }
    };

    let (genotypes, phenotypes) =
        align_subjects(&genotypes, &phenotypes).map_err(Error::in_stage("align"))?;

    let outcome = run_scan(&genotypes, &phenotypes, config).map_err(Error::in_stage("scan"))?;

    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::File {
        path: config.out_dir.clone(),
        source: e,
    })?;
    let (report_path, plot_path) =
        emit_report(&outcome.report, &config.out_dir).map_err(Error::in_stage("report"))?;
    let manifest_path = config.out_dir.join("manifest.txt");
    write_manifest(&manifest_path, config, &outcome).map_err(Error::in_stage("report"))?;

    Ok(PipelineSummary {
        report_path,
        plot_path,
        manifest_path,
        n_subjects: outcome.n_subjects,
        n_predictors: outcome.n_predictors,
        n_tested: outcome.report.m,
        rejections: outcome
            .report
            .decisions
            .iter()
            .map(|d| (d.alpha, d.n_rejected))
            .collect(),
    })
}

/// Write the per-test TSV and the plot-data CSV; returns their paths.
pub fn emit_report(report: &RejectionReport, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let report_path = out_dir.join("report.tsv");
    let mut w = BufWriter::new(File::create(&report_path).map_err(|e| Error::File {
        path: report_path.clone(),
        source: e,
    })?);
    report.write_tsv(&mut w)?;
    w.flush()?;

    let plot_path = out_dir.join("plotdata.csv");
    let mut w = BufWriter::new(File::create(&plot_path).map_err(|e| Error::File {
        path: plot_path.clone(),
        source: e,
    })?);
    report.write_plot_csv(&mut w)?;
    w.flush()?;

    Ok((report_path, plot_path))
}

fn write_manifest(path: &Path, config: &PipelineConfig, outcome: &ScanOutcome) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?);
    writeln!(w, "tool=dcovscan {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "genotype={}", config.genotype_path.display())?;
    writeln!(w, "phenotype={}", config.phenotype_path.display())?;
    match &config.region_map_path {
        Some(p) => writeln!(w, "region_map={}", p.display())?,
        None => writeln!(w, "region_map=none")?,
    }
    writeln!(w, "algorithm={}", config.algorithm.number())?;
    writeln!(
        w,
        "alphas={}",
        config
            .alphas
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",")
    )?;
    match config.null_method {
        NullMethod::Gamma => writeln!(w, "null=gamma")?,
        NullMethod::Permutation { permutations } => {
            writeln!(w, "null=permutation")?;
            writeln!(w, "permutations={permutations}")?;
        }
    }
    writeln!(w, "seed={}", config.seed)?;
    writeln!(w, "workers={}", config.workers)?;
    writeln!(w, "missing_sentinel={}", config.format.missing_sentinel)?;
    match config.format.delimiter {
        Some(d) => writeln!(w, "delimiter={}", d.escape_default())?,
        None => writeln!(w, "delimiter=auto")?,
    }
    match config.pi0_mode {
        Pi0Mode::Storey => writeln!(w, "pi0_mode=storey")?,
        Pi0Mode::Fixed(v) => writeln!(w, "pi0_mode=fixed:{v}")?,
    }
    writeln!(
        w,
        "region_select={}",
        match config.region_select {
            RegionSelect::MinP => "min_p",
            RegionSelect::MaxP => "max_p",
        }
    )?;
    writeln!(w, "n_subjects={}", outcome.n_subjects)?;
    writeln!(w, "n_predictors={}", outcome.n_predictors)?;
    writeln!(w, "n_tested={}", outcome.report.m)?;
    writeln!(w, "n_excluded={}", outcome.report.excluded.len())?;
    for id in &outcome.report.excluded {
        writeln!(w, "excluded={id}")?;
    }
    writeln!(w, "clamped_pvalues={}", outcome.report.clamp_count)?;
    if let Some(pi0) = outcome.report.pi0 {
        writeln!(w, "pi0_estimate={pi0}")?;
    }
    for d in &outcome.report.decisions {
        writeln!(
            w,
            "rejections@{}={} threshold={} pfdr={}",
            d.alpha,
            d.n_rejected,
            d.threshold.map_or("none".into(), |t| t.to_string()),
            d.pfdr.map_or("none".into(), |p| p.to_string()),
        )?;
    }
    if let Some(block) = &outcome.report.model_block {
        for line in block.lines() {
            writeln!(w, "model_{line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_file<T>(
    path: &Path,
    parse: impl FnOnce(BufReader<File>) -> Result<T>,
) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::File {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse(BufReader::new(file))
}
