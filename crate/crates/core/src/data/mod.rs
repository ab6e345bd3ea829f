//! Data model for genotype, phenotype, and region-map inputs.
//!
//! Genotypes are minor-allele counts in {0, 1, 2} with explicit
//! missingness; phenotypes are complete real-valued per-region scores.
//! Parsed matrices are immutable and safe to share read-only across
//! workers.

mod io;

pub use io::{
    parse_genotype_matrix, parse_phenotype_matrix, parse_region_map, write_genotype_matrix,
    write_phenotype_matrix, MatrixFormat,
};

use std::collections::{BTreeMap, HashMap, HashSet};

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Subjects × SNPs minor-allele counts. Missing entries are stored as NaN;
/// every non-missing entry is 0, 1, or 2.
#[derive(Debug, Clone)]
pub struct GenotypeMatrix {
    subject_ids: Vec<String>,
    snp_ids: Vec<String>,
    values: Array2<f64>,
}

impl GenotypeMatrix {
    pub fn new(
        subject_ids: Vec<String>,
        snp_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != subject_ids.len() || values.ncols() != snp_ids.len() {
            return Err(Error::InvalidInput(format!(
                "genotype matrix is {}x{} but {} subject ids and {} snp ids were given",
                values.nrows(),
                values.ncols(),
                subject_ids.len(),
                snp_ids.len()
            )));
        }
        check_unique(&subject_ids, "subject id")?;
        check_unique(&snp_ids, "snp id")?;
        for ((i, j), &v) in values.indexed_iter() {
            if !v.is_nan() && v != 0.0 && v != 1.0 && v != 2.0 {
                return Err(Error::InvalidInput(format!(
                    "genotype value {v} at subject {} / snp {} is outside {{0,1,2}}",
                    subject_ids[i], snp_ids[j]
                )));
            }
        }
        Ok(Self {
            subject_ids,
            snp_ids,
            values,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_snps(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Genotype column as a dense vector (missing entries set to 0, which
    /// the zero-weighting of the distance statistic never reads) plus its
    /// missingness mask. Fails when the SNP is missing for every subject.
    pub fn snp_column(&self, snp: usize) -> Result<(Array1<f64>, MissingnessMask)> {
        let col = self.values.column(snp);
        let present: Vec<bool> = col.iter().map(|v| !v.is_nan()).collect();
        let mask = MissingnessMask::estimated(present).map_err(|_| {
            Error::Degenerate(format!("snp {} is missing for every subject", self.snp_ids[snp]))
        })?;
        let dense = col.mapv(|v| if v.is_nan() { 0.0 } else { v });
        Ok((dense, mask))
    }

    /// Restrict to the given subject rows, in the given order.
    fn select_subjects(&self, rows: &[usize]) -> Self {
        let subject_ids = rows.iter().map(|&r| self.subject_ids[r].clone()).collect();
        let mut values = Array2::zeros((rows.len(), self.n_snps()));
        for (out, &r) in rows.iter().enumerate() {
            values.row_mut(out).assign(&self.values.row(r));
        }
        Self {
            subject_ids,
            snp_ids: self.snp_ids.clone(),
            values,
        }
    }
}

/// Subjects × regions real-valued scores; complete (no missing values).
#[derive(Debug, Clone)]
pub struct PhenotypeMatrix {
    subject_ids: Vec<String>,
    region_ids: Vec<String>,
    values: Array2<f64>,
}

impl PhenotypeMatrix {
    pub fn new(
        subject_ids: Vec<String>,
        region_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != subject_ids.len() || values.ncols() != region_ids.len() {
            return Err(Error::InvalidInput(format!(
                "phenotype matrix is {}x{} but {} subject ids and {} region ids were given",
                values.nrows(),
                values.ncols(),
                subject_ids.len(),
                region_ids.len()
            )));
        }
        check_unique(&subject_ids, "subject id")?;
        check_unique(&region_ids, "region id")?;
        for ((i, j), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite phenotype value at subject {} / column {}",
                    subject_ids[i], region_ids[j]
                )));
            }
        }
        Ok(Self {
            subject_ids,
            region_ids,
            values,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    fn select_subjects(&self, rows: &[usize]) -> Self {
        let subject_ids = rows.iter().map(|&r| self.subject_ids[r].clone()).collect();
        let mut values = Array2::zeros((rows.len(), self.n_regions()));
        for (out, &r) in rows.iter().enumerate() {
            values.row_mut(out).assign(&self.values.row(r));
        }
        Self {
            subject_ids,
            region_ids: self.region_ids.clone(),
            values,
        }
    }
}

/// Voxel → region assignment. Every mapped voxel belongs to exactly one
/// region.
#[derive(Debug, Clone)]
pub struct RegionMap {
    by_voxel: BTreeMap<String, String>,
}

impl RegionMap {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut by_voxel = BTreeMap::new();
        for (voxel, region) in pairs {
            if let Some(previous) = by_voxel.insert(voxel.clone(), region.clone()) {
                if previous != region {
                    return Err(Error::InvalidInput(format!(
                        "voxel {voxel} is mapped to both {previous} and {region}"
                    )));
                }
            }
        }
        if by_voxel.is_empty() {
            return Err(Error::InvalidInput("region map is empty".into()));
        }
        Ok(Self { by_voxel })
    }

    pub fn n_voxels(&self) -> usize {
        self.by_voxel.len()
    }

    pub fn region_of(&self, voxel: &str) -> Option<&str> {
        self.by_voxel.get(voxel).map(String::as_str)
    }

    /// Region labels in sorted (canonical) order.
    pub fn regions(&self) -> Vec<&str> {
        let set: HashSet<&str> = self.by_voxel.values().map(String::as_str).collect();
        let mut regions: Vec<&str> = set.into_iter().collect();
        regions.sort_unstable();
        regions
    }
}

/// Per-subject presence indicators for one variable, with the estimated
/// presence probability P(δ = 1) used by the distance weighting.
#[derive(Debug, Clone)]
pub struct MissingnessMask {
    present: Vec<bool>,
    presence_prob: f64,
}

impl MissingnessMask {
    /// Empirical estimate: presence probability = non-missing fraction.
    pub fn estimated(present: Vec<bool>) -> Result<Self> {
        let count = present.iter().filter(|&&p| p).count();
        if count == 0 {
            return Err(Error::Degenerate(
                "variable is missing for every subject".into(),
            ));
        }
        let presence_prob = count as f64 / present.len() as f64;
        Ok(Self {
            present,
            presence_prob,
        })
    }

    /// Mask with an externally known presence probability.
    pub fn with_presence_prob(present: Vec<bool>, presence_prob: f64) -> Result<Self> {
        if !(presence_prob > 0.0 && presence_prob <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "presence probability must lie in (0, 1], got {presence_prob}"
            )));
        }
        Ok(Self {
            present,
            presence_prob,
        })
    }

    /// All-present mask with presence probability 1.
    pub fn complete(n: usize) -> Self {
        Self {
            present: vec![true; n],
            presence_prob: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.present[i]
    }

    pub fn presence_prob(&self) -> f64 {
        self.presence_prob
    }

    pub fn n_present(&self) -> usize {
        self.present.iter().filter(|&&p| p).count()
    }
}

/// Restrict both matrices to the intersection of their subject ids, in
/// sorted order, so downstream rows line up across the two inputs.
pub fn align_subjects(
    genotypes: &GenotypeMatrix,
    phenotypes: &PhenotypeMatrix,
) -> Result<(GenotypeMatrix, PhenotypeMatrix)> {
    let geno_index: HashMap<&str, usize> = genotypes
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let pheno_index: HashMap<&str, usize> = phenotypes
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut shared: Vec<&str> = geno_index
        .keys()
        .copied()
        .filter(|id| pheno_index.contains_key(id))
        .collect();
    if shared.is_empty() {
        return Err(Error::InvalidInput(
            "genotype and phenotype files share no subject ids".into(),
        ));
    }
    shared.sort_unstable();

    let geno_rows: Vec<usize> = shared.iter().map(|id| geno_index[id]).collect();
    let pheno_rows: Vec<usize> = shared.iter().map(|id| pheno_index[id]).collect();
    Ok((
        genotypes.select_subjects(&geno_rows),
        phenotypes.select_subjects(&pheno_rows),
    ))
}

/// Average voxel columns per region. Output columns are the map's regions
/// in sorted order; voxel columns not covered by the map are ignored.
pub fn roi_aggregate(voxels: &PhenotypeMatrix, map: &RegionMap) -> Result<PhenotypeMatrix> {
    let regions = map.regions();
    let region_index: HashMap<&str, usize> =
        regions.iter().enumerate().map(|(i, &r)| (r, i)).collect();

    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); regions.len()];
    for (j, voxel) in voxels.region_ids.iter().enumerate() {
        if let Some(region) = map.region_of(voxel) {
            columns[region_index[region]].push(j);
        }
    }
    for (region, cols) in regions.iter().zip(&columns) {
        if cols.is_empty() {
            return Err(Error::InvalidInput(format!(
                "region {region} has no voxel columns in the input matrix"
            )));
        }
    }

    let n = voxels.n_subjects();
    let mut values = Array2::zeros((n, regions.len()));
    for (r, cols) in columns.iter().enumerate() {
        let inv = 1.0 / cols.len() as f64;
        for i in 0..n {
            let sum: f64 = cols.iter().map(|&j| voxels.values[[i, j]]).sum();
            values[[i, r]] = sum * inv;
        }
    }
    PhenotypeMatrix::new(
        voxels.subject_ids.clone(),
        regions.into_iter().map(str::to_owned).collect(),
        values,
    )
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate {what}: {id}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn genotypes(ids: &[&str], snps: &[&str], values: Array2<f64>) -> GenotypeMatrix {
        GenotypeMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            snps.iter().map(|s| s.to_string()).collect(),
            values,
        )
        .unwrap()
    }

    fn phenotypes(ids: &[&str], regions: &[&str], values: Array2<f64>) -> PhenotypeMatrix {
        PhenotypeMatrix::new(
            ids.iter().map(|s| s.to_string()).collect(),
            regions.iter().map(|s| s.to_string()).collect(),
            values,
        )
        .unwrap()
    }

    #[test]
    fn genotype_rejects_out_of_domain() {
        let err = GenotypeMatrix::new(
            vec!["a".into()],
            vec!["s".into()],
            array![[3.0]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("outside"));
    }

    #[test]
    fn genotype_rejects_duplicate_ids() {
        let err = GenotypeMatrix::new(
            vec!["a".into(), "a".into()],
            vec!["s".into()],
            array![[0.0], [1.0]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn phenotype_rejects_non_finite() {
        assert!(PhenotypeMatrix::new(
            vec!["a".into()],
            vec!["r".into()],
            array![[f64::NAN]],
        )
        .is_err());
    }

    #[test]
    fn mask_estimates_presence_fraction() {
        let mask = MissingnessMask::estimated(vec![true, false]).unwrap();
        assert_eq!(mask.presence_prob(), 0.5);
        assert!(MissingnessMask::estimated(vec![false, false]).is_err());
    }

    #[test]
    fn align_restricts_to_sorted_intersection() {
        let g = genotypes(
            &["A", "B", "C"],
            &["s1"],
            array![[0.0], [1.0], [2.0]],
        );
        let p = phenotypes(&["C", "B", "D"], &["r1"], array![[3.0], [2.0], [9.0]]);
        let (ga, pa) = align_subjects(&g, &p).unwrap();
        assert_eq!(ga.subject_ids(), &["B".to_string(), "C".to_string()]);
        assert_eq!(pa.subject_ids(), ga.subject_ids());
        assert_eq!(ga.values()[[0, 0]], 1.0);
        assert_eq!(pa.values()[[0, 0]], 2.0);
        assert_eq!(pa.values()[[1, 0]], 3.0);
    }

    #[test]
    fn align_identical_sets_keeps_content() {
        let g = genotypes(&["a", "b"], &["s1"], array![[0.0], [2.0]]);
        let p = phenotypes(&["a", "b"], &["r1"], array![[1.5], [2.5]]);
        let (ga, pa) = align_subjects(&g, &p).unwrap();
        assert_eq!(ga.values(), g.values());
        assert_eq!(pa.values(), p.values());
    }

    #[test]
    fn align_disjoint_sets_errors() {
        let g = genotypes(&["a"], &["s1"], array![[0.0]]);
        let p = phenotypes(&["b"], &["r1"], array![[1.0]]);
        assert!(align_subjects(&g, &p).is_err());
    }

    #[test]
    fn roi_aggregate_means_mapped_columns() {
        let voxels = phenotypes(&["s1"], &["v1", "v2", "v3"], array![[1.0, 3.0, 7.0]]);
        let map = RegionMap::new([
            ("v1".to_string(), "X".to_string()),
            ("v2".to_string(), "X".to_string()),
            ("v3".to_string(), "Y".to_string()),
        ])
        .unwrap();
        let regions = roi_aggregate(&voxels, &map).unwrap();
        assert_eq!(regions.region_ids(), &["X".to_string(), "Y".to_string()]);
        assert_eq!(regions.values()[[0, 0]], 2.0);
        // single-voxel region passes through
        assert_eq!(regions.values()[[0, 1]], 7.0);
    }

    #[test]
    fn roi_aggregate_errors_on_uncovered_region() {
        let voxels = phenotypes(&["s1"], &["v1"], array![[1.0]]);
        let map = RegionMap::new([
            ("v1".to_string(), "X".to_string()),
            ("v9".to_string(), "Y".to_string()),
        ])
        .unwrap();
        assert!(roi_aggregate(&voxels, &map).is_err());
    }

    #[test]
    fn roi_aggregate_commutes_with_subject_permutation() {
        let voxels = phenotypes(
            &["s1", "s2", "s3"],
            &["v1", "v2"],
            array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
        );
        let permuted = voxels.select_subjects(&[2, 0, 1]);
        let map = RegionMap::new([
            ("v1".to_string(), "X".to_string()),
            ("v2".to_string(), "X".to_string()),
        ])
        .unwrap();
        let direct = roi_aggregate(&voxels, &map).unwrap().select_subjects(&[2, 0, 1]);
        let swapped = roi_aggregate(&permuted, &map).unwrap();
        assert_eq!(direct.values(), swapped.values());
        assert_eq!(direct.subject_ids(), swapped.subject_ids());
    }

    #[test]
    fn atlas_scale_region_count_is_preserved() {
        // 119 regions over 3 voxels each: output has one column per region
        let n_regions = 119;
        let voxel_ids: Vec<String> = (0..3 * n_regions).map(|v| format!("v{v:04}")).collect();
        let map = RegionMap::new(
            voxel_ids
                .iter()
                .enumerate()
                .map(|(v, id)| (id.clone(), format!("region{:03}", v % n_regions))),
        )
        .unwrap();
        let values = Array2::from_shape_fn((4, 3 * n_regions), |(i, j)| (i * j) as f64 * 0.25);
        let voxels = PhenotypeMatrix::new(
            (0..4).map(|i| format!("s{i}")).collect(),
            voxel_ids,
            values,
        )
        .unwrap();
        let regions = roi_aggregate(&voxels, &map).unwrap();
        assert_eq!(regions.n_regions(), n_regions);
    }

    #[test]
    fn region_map_rejects_conflicting_assignment() {
        assert!(RegionMap::new([
            ("v1".to_string(), "X".to_string()),
            ("v1".to_string(), "Y".to_string()),
        ])
        .is_err());
    }
}
