//! Per-test rejection report and its TSV serialization.

use std::io::Write;

use super::AlgorithmId;
use crate::error::Result;

/// One row of the report. Columns not produced by the chosen procedure
/// stay empty.
#[derive(Debug, Clone)]
pub struct TestRecord {
    pub id: String,
    pub statistic: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub z: Option<f64>,
    pub locfdr_z: Option<f64>,
    pub locfdr_t: Option<f64>,
    /// Reject flags aligned to the report's alpha list.
    pub reject: Vec<bool>,
}

/// Threshold and rejection count at one alpha level.
#[derive(Debug, Clone, Copy)]
pub struct AlphaDecision {
    pub alpha: f64,
    /// Cutoff on the procedure's score scale (q, z, or T); None when the
    /// reject set is empty.
    pub threshold: Option<f64>,
    /// Estimated pFDR over the reject set; at most alpha when nonempty.
    pub pfdr: Option<f64>,
    pub n_rejected: usize,
}

/// Full outcome of one selection procedure over m tests.
#[derive(Debug, Clone)]
pub struct RejectionReport {
    pub algorithm: AlgorithmId,
    pub alphas: Vec<f64>,
    pub records: Vec<TestRecord>,
    pub decisions: Vec<AlphaDecision>,
    /// Number of tests the procedure ran on.
    pub m: usize,
    /// Estimated null proportion (q-value procedure only).
    pub pi0: Option<f64>,
    /// Fitted mixture parameters as a key=value block, when a mixture
    /// was involved.
    pub model_block: Option<String>,
    /// Ids excluded before testing (untestable predictors), with a count
    /// echoed in the footer.
    pub excluded: Vec<String>,
    /// Number of p-values clamped before the probit transform.
    pub clamp_count: usize,
}

impl RejectionReport {
    pub fn n_rejected(&self, alpha_index: usize) -> usize {
        self.decisions[alpha_index].n_rejected
    }

    /// Tab-separated report: one row per test, then a `#`-prefixed
    /// key=value footer with thresholds and model parameters.
    pub fn write_tsv<W: Write>(&self, writer: &mut W) -> Result<()> {
        write!(writer, "test_id\tstatistic\tp\tq\tz\tlocfdr_z\tlocfdr_t")?;
        for alpha in &self.alphas {
            write!(writer, "\treject@{alpha}")?;
        }
        writeln!(writer)?;

        for record in &self.records {
            write!(writer, "{}", record.id)?;
            for value in [
                record.statistic,
                record.p,
                record.q,
                record.z,
                record.locfdr_z,
                record.locfdr_t,
            ] {
                match value {
                    Some(v) => write!(writer, "\t{v}")?,
                    None => write!(writer, "\t")?,
                }
            }
            for &flag in &record.reject {
                write!(writer, "\t{}", if flag { 1 } else { 0 })?;
            }
            writeln!(writer)?;
        }

        writeln!(writer, "# algorithm={}", self.algorithm.label())?;
        writeln!(writer, "# m={}", self.m)?;
        writeln!(writer, "# excluded={}", self.excluded.len())?;
        writeln!(writer, "# clamped_pvalues={}", self.clamp_count)?;
        if let Some(pi0) = self.pi0 {
            writeln!(writer, "# pi0={pi0}")?;
        }
        for d in &self.decisions {
            write!(writer, "# alpha={} rejected={}", d.alpha, d.n_rejected)?;
            match d.threshold {
                Some(t) => write!(writer, " threshold={t}")?,
                None => write!(writer, " threshold=none")?,
            }
            match d.pfdr {
                Some(p) => writeln!(writer, " pfdr={p}")?,
                None => writeln!(writer, " pfdr=none")?,
            }
        }
        if let Some(block) = &self.model_block {
            for line in block.lines() {
                writeln!(writer, "# model_{line}")?;
            }
        }
        Ok(())
    }

    /// Plot-ready CSV of the score curve: rows sorted by statistic
    /// descending (procedures without a dCov statistic sort by their own
    /// score, most significant first).
    pub fn write_plot_csv<W: Write>(&self, writer: &mut W) -> Result<()> {
        let score_header = match self.algorithm {
            AlgorithmId::QValue => "q_value",
            AlgorithmId::LocfdrZ | AlgorithmId::SlrBaseline => "local_fdr",
            AlgorithmId::LocfdrT => "local_fdr",
        };
        writeln!(writer, "test_id,statistic,{score_header}")?;

        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = &self.records[a];
            let rb = &self.records[b];
            match (ra.statistic, rb.statistic) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                // fall back to the z scale, most negative first
                _ => ra
                    .z
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&rb.z.unwrap_or(f64::INFINITY)),
            }
        });
        for idx in order {
            let r = &self.records[idx];
            let score = match self.algorithm {
                AlgorithmId::QValue => r.q,
                AlgorithmId::LocfdrZ | AlgorithmId::SlrBaseline => r.locfdr_z,
                AlgorithmId::LocfdrT => r.locfdr_t,
            };
            let stat = r
                .statistic
                .or(r.z)
                .map_or(String::new(), |v| v.to_string());
            let score = score.map_or(String::new(), |v| v.to_string());
            writeln!(writer, "{},{},{}", r.id, stat, score)?;
        }
        Ok(())
    }
}
