//! Delimited-text ingestion and serialization for the matrix types.
//!
//! Layout for both matrices: a header row whose first cell is a corner
//! label and whose remaining cells are column ids; each data row starts
//! with the subject id. The region map is a headerless two-column file of
//! (voxel_index, region_label) pairs.

use std::io::{BufRead, Write};

use ndarray::Array2;

use super::{GenotypeMatrix, PhenotypeMatrix, RegionMap};
use crate::error::{Error, Result};

/// Delimiter and missing-value conventions for the text formats.
#[derive(Debug, Clone)]
pub struct MatrixFormat {
    /// None = auto-detect from the header (tab when present, else comma).
    pub delimiter: Option<char>,
    pub missing_sentinel: String,
}

impl Default for MatrixFormat {
    fn default() -> Self {
        Self {
            delimiter: None,
            missing_sentinel: "NA".into(),
        }
    }
}

impl MatrixFormat {
    fn detect(&self, header: &str) -> char {
        self.delimiter
            .unwrap_or(if header.contains('\t') { '\t' } else { ',' })
    }
}

struct RawTable {
    column_ids: Vec<String>,
    row_ids: Vec<String>,
    cells: Vec<Vec<String>>,
    /// 1-based source line of each data row, for error reporting.
    row_lines: Vec<usize>,
}

fn read_table<R: BufRead>(reader: R, format: &MatrixFormat) -> Result<RawTable> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (idx + 1, line);
                }
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    message: "file is empty".into(),
                })
            }
        }
    };
    let delimiter = format.detect(&header.1);
    let header_cells: Vec<String> = header
        .1
        .split(delimiter)
        .map(|c| c.trim().to_string())
        .collect();
    if header_cells.len() < 2 {
        return Err(Error::Parse {
            line: header.0,
            column: 1,
            message: "header must contain at least one column id".into(),
        });
    }
    let column_ids = header_cells[1..].to_vec();

    let mut row_ids = Vec::new();
    let mut cells = Vec::new();
    let mut row_lines = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<String> = line.split(delimiter).map(|c| c.trim().to_string()).collect();
        if parts.len() != column_ids.len() + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                column: parts.len(),
                message: format!(
                    "row has {} cells, expected {}",
                    parts.len(),
                    column_ids.len() + 1
                ),
            });
        }
        row_ids.push(parts[0].clone());
        cells.push(parts[1..].to_vec());
        row_lines.push(idx + 1);
    }
    if cells.is_empty() {
        return Err(Error::Parse {
            line: header.0 + 1,
            column: 1,
            message: "no data rows".into(),
        });
    }
    Ok(RawTable {
        column_ids,
        row_ids,
        cells,
        row_lines,
    })
}

/// Parse a genotype matrix: header of SNP ids, first column subject id,
/// cells in {0,1,2} or the missing sentinel.
pub fn parse_genotype_matrix<R: BufRead>(
    reader: R,
    format: &MatrixFormat,
) -> Result<GenotypeMatrix> {
    let table = read_table(reader, format)?;
    let n = table.row_ids.len();
    let m = table.column_ids.len();
    let mut values = Array2::zeros((n, m));
    for (i, row) in table.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            // column j+2 accounts for the id column
            let value = if cell == &format.missing_sentinel {
                f64::NAN
            } else {
                match cell.parse::<i64>() {
                    Ok(v @ 0..=2) => v as f64,
                    Ok(v) => {
                        return Err(Error::Parse {
                            line: table.row_lines[i],
                            column: j + 2,
                            message: format!("genotype value {v} is outside {{0,1,2}}"),
                        })
                    }
                    Err(_) => {
                        return Err(Error::Parse {
                            line: table.row_lines[i],
                            column: j + 2,
                            message: format!("expected 0, 1, 2 or {:?}, got {cell:?}", format.missing_sentinel),
                        })
                    }
                }
            };
            values[[i, j]] = value;
        }
    }
    GenotypeMatrix::new(table.row_ids, table.column_ids, values)
}

/// Parse a phenotype (or voxel) matrix: header of column ids, numeric
/// cells, no missing values allowed.
pub fn parse_phenotype_matrix<R: BufRead>(
    reader: R,
    format: &MatrixFormat,
) -> Result<PhenotypeMatrix> {
    let table = read_table(reader, format)?;
    let n = table.row_ids.len();
    let m = table.column_ids.len();
    let mut values = Array2::zeros((n, m));
    for (i, row) in table.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if cell == &format.missing_sentinel {
                return Err(Error::Parse {
                    line: table.row_lines[i],
                    column: j + 2,
                    message: "phenotypes must be complete (missing sentinel found)".into(),
                });
            }
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                line: table.row_lines[i],
                column: j + 2,
                message: format!("expected a number, got {cell:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line: table.row_lines[i],
                    column: j + 2,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values[[i, j]] = value;
        }
    }
    PhenotypeMatrix::new(table.row_ids, table.column_ids, values)
}

/// Parse a two-column (voxel_index, region_label) map; headerless.
pub fn parse_region_map<R: BufRead>(reader: R, format: &MatrixFormat) -> Result<RegionMap> {
    let mut pairs = Vec::new();
    let mut delimiter = format.delimiter;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d = *delimiter.get_or_insert(if line.contains('\t') { '\t' } else { ',' });
        let parts: Vec<&str> = line.split(d).map(str::trim).collect();
        if parts.len() != 2 || parts[0].is_empty() || parts[1].is_empty() {
            return Err(Error::Parse {
                line: idx + 1,
                column: parts.len(),
                message: "expected exactly two cells (voxel_index, region_label)".into(),
            });
        }
        pairs.push((parts[0].to_string(), parts[1].to_string()));
    }
    RegionMap::new(pairs)
}

/// Serialize a genotype matrix; inverse of [`parse_genotype_matrix`].
pub fn write_genotype_matrix<W: Write>(
    writer: &mut W,
    genotypes: &GenotypeMatrix,
    format: &MatrixFormat,
) -> Result<()> {
    let d = format.delimiter.unwrap_or('\t');
    write!(writer, "subject_id")?;
    for id in genotypes.snp_ids() {
        write!(writer, "{d}{id}")?;
    }
    writeln!(writer)?;
    for (i, id) in genotypes.subject_ids().iter().enumerate() {
        write!(writer, "{id}")?;
        for j in 0..genotypes.n_snps() {
            let v = genotypes.values()[[i, j]];
            if v.is_nan() {
                write!(writer, "{d}{}", format.missing_sentinel)?;
            } else {
                write!(writer, "{d}{}", v as i64)?;
            }
        }
        writeln!(writer)?;
    }
    Ok(())
}

/// Serialize a phenotype matrix; inverse of [`parse_phenotype_matrix`].
/// Values are written in shortest round-trip form, so parse → write →
/// parse is bit-identical.
pub fn write_phenotype_matrix<W: Write>(
    writer: &mut W,
    phenotypes: &PhenotypeMatrix,
    format: &MatrixFormat,
) -> Result<()> {
    let d = format.delimiter.unwrap_or('\t');
    write!(writer, "subject_id")?;
    for id in phenotypes.region_ids() {
        write!(writer, "{d}{id}")?;
    }
    writeln!(writer)?;
    for (i, id) in phenotypes.subject_ids().iter().enumerate() {
        write!(writer, "{id}")?;
        for j in 0..phenotypes.n_regions() {
            write!(writer, "{d}{}", phenotypes.values()[[i, j]])?;
        }
        writeln!(writer)?;
    }
    Ok(())
}
