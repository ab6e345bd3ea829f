use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcovscan_core::data::MatrixFormat;
use dcovscan_core::fdr::{AlgorithmId, Pi0Mode, RegionSelect};
use dcovscan_core::mixture::EmConfig;
use dcovscan_core::pipeline::{run_pipeline, NullMethod, PipelineConfig};
use dcovscan_core::sim::{power_study, size_analysis, DesignId, SimDesign};
use dcovscan_core::Error;

/// Multivariate association scanning with distance covariance and
/// positive-FDR multiple testing control.
#[derive(Debug, Parser)]
#[command(name = "dcovscan", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan every SNP column against the shared multivariate phenotype
    /// and select significant SNPs with the chosen procedure.
    Scan(ScanArgs),
    /// Monte Carlo studies over the built-in simulation designs.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Genotype matrix (header of SNP ids, first column subject id,
    /// cells 0/1/2 or the missing sentinel)
    #[arg(long)]
    genotype: PathBuf,

    /// Phenotype matrix (header of region ids, numeric cells); treated
    /// as a voxel matrix when --region-map is given
    #[arg(long)]
    phenotype: PathBuf,

    /// Optional two-column (voxel_index, region_label) map; phenotype
    /// columns are averaged per region before scanning
    #[arg(long)]
    region_map: Option<PathBuf>,

    /// Selection procedure: 1 = q-value, 2 = probit local fdr,
    /// 3 = statistic-scale local fdr, 4 = regression baseline
    #[arg(long, default_value_t = 3)]
    algorithm: u8,

    /// Nominal pFDR levels (repeatable or comma-separated)
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = vec![0.05, 0.10, 0.15, 0.20])]
    alpha: Vec<f64>,

    /// Null model for p-values: gamma | permutation
    #[arg(long, default_value = "gamma")]
    null: String,

    /// Permutation count when --null permutation (at least 99)
    #[arg(long, default_value_t = 999)]
    permutations: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = all cores); DCOVSCAN_WORKERS overrides
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Cell value marking a missing genotype
    #[arg(long, default_value = "NA")]
    missing_sentinel: String,

    /// Field delimiter: tab | comma (default: auto-detect per file)
    #[arg(long)]
    delimiter: Option<String>,

    /// Null-proportion mode for the q-value procedure:
    /// storey | fixed:<value> (fixed:1 = Benjamini-Hochberg)
    #[arg(long, default_value = "storey")]
    pi0: String,

    /// Region screen for the regression baseline: min-p | max-p
    #[arg(long, default_value = "min-p")]
    region_select: String,

    /// Output directory for report.tsv, plotdata.csv, manifest.txt
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum SimCommand {
    /// All-null size analysis: empirical rejection rates at nominal
    /// p-value cutoffs
    Size(SimSizeArgs),
    /// Replicated FDR/power study of the selection procedures
    Power(SimPowerArgs),
}

#[derive(Debug, Args)]
struct SimSizeArgs {
    /// Simulation design (1, 2, or 3)
    #[arg(long)]
    design: u8,

    #[arg(long, default_value_t = 50)]
    runs: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = all cores); DCOVSCAN_WORKERS overrides
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Output TSV path (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimPowerArgs {
    /// Simulation design (1, 2, or 3)
    #[arg(long)]
    design: u8,

    /// Procedures to run (1, 2, 3; repeatable or comma-separated)
    #[arg(long = "algorithm", value_delimiter = ',', default_values_t = vec![1, 2, 3])]
    algorithm: Vec<u8>,

    #[arg(long = "alpha", value_delimiter = ',', default_values_t = vec![0.05, 0.10, 0.15, 0.20])]
    alpha: Vec<f64>,

    #[arg(long, default_value_t = 200)]
    replicates: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Worker threads (0 = all cores); DCOVSCAN_WORKERS overrides
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// Output directory for power.tsv and replicates.jsonl
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version on stdout with success status
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(RunError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

enum RunError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => RunError::Usage(msg),
            Error::Stage {
                stage: "config",
                source,
            } => RunError::Usage(source.to_string()),
            other => RunError::Runtime(other),
        }
    }
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Scan(args) => scan(args),
        Command::Sim(SimCommand::Size(args)) => sim_size(args),
        Command::Sim(SimCommand::Power(args)) => sim_power(args),
    }
}

fn effective_workers(flag: usize) -> Result<usize, RunError> {
    match std::env::var("DCOVSCAN_WORKERS") {
        Ok(value) => value.parse::<usize>().map_err(|_| {
            RunError::Usage(format!("DCOVSCAN_WORKERS must be a number, got {value:?}"))
        }),
        Err(_) => Ok(flag),
    }
}

fn scan(args: ScanArgs) -> Result<(), RunError> {
    let algorithm = AlgorithmId::from_number(args.algorithm)?;
    let null_method = match args.null.as_str() {
        "gamma" => NullMethod::Gamma,
        "permutation" => NullMethod::Permutation {
            permutations: args.permutations,
        },
        other => {
            return Err(RunError::Usage(format!(
                "--null must be gamma or permutation, got {other}"
            )))
        }
    };
    let delimiter = match args.delimiter.as_deref() {
        None => None,
        Some("tab") | Some("\t") => Some('\t'),
        Some("comma") | Some(",") => Some(','),
        Some(other) => {
            return Err(RunError::Usage(format!(
                "--delimiter must be tab or comma, got {other}"
            )))
        }
    };
    let pi0_mode = match args.pi0.as_str() {
        "storey" => Pi0Mode::Storey,
        other => match other
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
        {
            Some(v) => Pi0Mode::Fixed(v),
            None => {
                return Err(RunError::Usage(format!(
                    "--pi0 must be storey or fixed:<value>, got {other}"
                )))
            }
        },
    };
    let region_select = match args.region_select.as_str() {
        "min-p" => RegionSelect::MinP,
        "max-p" => RegionSelect::MaxP,
        other => {
            return Err(RunError::Usage(format!(
                "--region-select must be min-p or max-p, got {other}"
            )))
        }
    };

    let config = PipelineConfig {
        genotype_path: args.genotype,
        phenotype_path: args.phenotype,
        region_map_path: args.region_map,
        algorithm,
        alphas: args.alpha,
        null_method,
        seed: args.seed,
        workers: effective_workers(args.workers)?,
        out_dir: args.out,
        format: MatrixFormat {
            delimiter,
            missing_sentinel: args.missing_sentinel,
        },
        pi0_mode,
        region_select,
        em: EmConfig::default(),
    };

    let summary = run_pipeline(&config)?;
    println!(
        "scanned {} predictors over {} subjects ({} tested)",
        summary.n_predictors, summary.n_subjects, summary.n_tested
    );
    for (alpha, count) in &summary.rejections {
        println!("alpha={alpha}: {count} significant");
    }
    println!("report: {}", summary.report_path.display());
    println!("plot data: {}", summary.plot_path.display());
    println!("manifest: {}", summary.manifest_path.display());
    Ok(())
}

fn install_pool(workers: usize) -> Result<(), RunError> {
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| RunError::Usage(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn sim_size(args: SimSizeArgs) -> Result<(), RunError> {
    install_pool(effective_workers(args.workers)?)?;
    let design = SimDesign::new(DesignId::from_number(args.design)?).all_null();
    let table = size_analysis(&design, args.runs, args.seed)?;
    match args.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(&path).map_err(|e| {
                RunError::Runtime(Error::File {
                    path: path.clone(),
                    source: e,
                })
            })?);
            table.write_tsv(&mut w).map_err(RunError::Runtime)?;
            println!("size table: {}", path.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            table.write_tsv(&mut out).map_err(RunError::Runtime)?;
        }
    }
    Ok(())
}

fn sim_power(args: SimPowerArgs) -> Result<(), RunError> {
    install_pool(effective_workers(args.workers)?)?;
    let design = SimDesign::new(DesignId::from_number(args.design)?);
    let algorithms = args
        .algorithm
        .iter()
        .map(|&n| AlgorithmId::from_number(n))
        .collect::<Result<Vec<_>, _>>()?;
    let report = power_study(
        &design,
        &algorithms,
        &args.alpha,
        args.replicates,
        args.seed,
        &EmConfig::default(),
    )?;

    std::fs::create_dir_all(&args.out).map_err(|e| {
        RunError::Runtime(Error::File {
            path: args.out.clone(),
            source: e,
        })
    })?;
    let tsv_path = args.out.join("power.tsv");
    let mut w = BufWriter::new(File::create(&tsv_path).map_err(|e| {
        RunError::Runtime(Error::File {
            path: tsv_path.clone(),
            source: e,
        })
    })?);
    report.write_tsv(&mut w).map_err(RunError::Runtime)?;

    let jsonl_path = args.out.join("replicates.jsonl");
    let mut w = BufWriter::new(File::create(&jsonl_path).map_err(|e| {
        RunError::Runtime(Error::File {
            path: jsonl_path.clone(),
            source: e,
        })
    })?);
    report.write_jsonl(&mut w).map_err(RunError::Runtime)?;

    println!("power table: {}", tsv_path.display());
    println!("replicate log: {}", jsonl_path.display());
    Ok(())
}
