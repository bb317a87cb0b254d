use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PatientSeries;
use crate::schema::FeatureSchema;

#[derive(Debug, Error, PartialEq)]
pub enum CohortError {
    #[error("cohort is empty")]
    Empty,
    #[error("no patient has a missing ratio below {0}")]
    EmptyResult(f64),
    #[error("need at least {needed} patients, have {have}")]
    TooFewPatients { needed: usize, have: usize },
    #[error("fraction {0} outside (0, 1]")]
    BadFraction(f64),
}

/// A set of patients sharing one schema, with per-feature means over
/// observed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub schema: FeatureSchema,
    pub patients: Vec<PatientSeries>,
    pub feature_means: Vec<f64>,
}

impl Cohort {
    pub fn new(schema: FeatureSchema, patients: Vec<PatientSeries>) -> Self {
        let feature_means = observed_means(&schema, &patients);
        Self {
            schema,
            patients,
            feature_means,
        }
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    fn select(&self, keep: impl Fn(usize) -> bool) -> Cohort {
        let patients = self
            .patients
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, p)| p.clone())
            .collect();
        Cohort::new(self.schema.clone(), patients)
    }

    pub fn manifest(&self) -> CohortManifest {
        CohortManifest {
            schema_hash: self.schema.schema_hash().to_string(),
            n_patients: self.patients.len(),
            patients: self
                .patients
                .iter()
                .map(|p| ManifestEntry {
                    patient_id: p.patient_id.clone(),
                    m: p.m(),
                    onset_hour: p.onset_hour(),
                    missing_ratio: missing_ratio(p, &self.schema),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub patient_id: String,
    pub m: usize,
    pub onset_hour: Option<usize>,
    pub missing_ratio: f64,
}

/// JSON summary of an ingested cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub schema_hash: String,
    pub n_patients: usize,
    pub patients: Vec<ManifestEntry>,
}

fn observed_means(schema: &FeatureSchema, patients: &[PatientSeries]) -> Vec<f64> {
    let f = schema.len();
    let mut sum = vec![0.0; f];
    let mut count = vec![0usize; f];
    for p in patients {
        for row in p.cells().chunks_exact(f) {
            for (j, cell) in row.iter().enumerate() {
                if let Some(v) = cell {
                    sum[j] += v;
                    count[j] += 1;
                }
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Fraction of missing cells among vital and laboratory columns.
pub fn missing_ratio(series: &PatientSeries, schema: &FeatureSchema) -> f64 {
    let f = schema.len();
    let clinical: Vec<usize> = (0..f).filter(|&j| schema.is_clinical(j)).collect();
    let total = clinical.len() * series.m();
    if total == 0 {
        return 0.0;
    }
    let missing = series
        .cells()
        .chunks_exact(f)
        .map(|row| clinical.iter().filter(|&&j| row[j].is_none()).count())
        .sum::<usize>();
    missing as f64 / total as f64
}

/// Keeps patients whose missing ratio is strictly below `max_missing`.
pub fn screen_cohort(cohort: &Cohort, max_missing: f64) -> Result<Cohort, CohortError> {
    if cohort.is_empty() {
        return Err(CohortError::Empty);
    }
    let keep: Vec<bool> = cohort
        .patients
        .iter()
        .map(|p| missing_ratio(p, &cohort.schema) < max_missing)
        .collect();
    let out = cohort.select(|i| keep[i]);
    if out.is_empty() {
        return Err(CohortError::EmptyResult(max_missing));
    }
    Ok(out)
}

/// Forward-fills each column; hour-0 gaps take `feature_means`.
pub fn impute(series: &PatientSeries, feature_means: &[f64]) -> PatientSeries {
    let f = series.n_features();
    assert_eq!(feature_means.len(), f, "feature_means length must equal F");
    let mut cells = Vec::with_capacity(series.cells().len());
    let mut last: Vec<f64> = feature_means.to_vec();
    for row in series.cells().chunks_exact(f) {
        for (j, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                last[j] = *v;
            }
            cells.push(Some(last[j]));
        }
    }
    PatientSeries::new(series.patient_id.clone(), f, cells, series.onset_hour())
        .expect("shape preserved")
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Patient-level `(train, test)` split; test size is `round(test_frac · n)`
/// clamped to `[1, n − 1]`. Both halves keep the input order.
pub fn split_patients(
    cohort: &Cohort,
    test_frac: f64,
    seed: u64,
) -> Result<(Cohort, Cohort), CohortError> {
    let n = cohort.len();
    if n < 2 {
        return Err(CohortError::TooFewPatients { needed: 2, have: n });
    }
    if !(0.0..=1.0).contains(&test_frac) {
        return Err(CohortError::BadFraction(test_frac));
    }
    let n_test = ((test_frac * n as f64).round() as usize).clamp(1, n - 1);
    let mut is_test = vec![false; n];
    for &i in &shuffled_indices(n, seed)[..n_test] {
        is_test[i] = true;
    }
    Ok((
        cohort.select(|i| !is_test[i]),
        cohort.select(|i| is_test[i]),
    ))
}

/// Deterministic patient subsample of size `max(1, round(frac · n))`.
pub fn subsample_patients(cohort: &Cohort, frac: f64, seed: u64) -> Result<Cohort, CohortError> {
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(CohortError::BadFraction(frac));
    }
    let n = cohort.len();
    if n == 0 {
        return Err(CohortError::Empty);
    }
    let k = ((frac * n as f64).round() as usize).clamp(1, n);
    if k == n {
        return Ok(cohort.clone());
    }
    let mut keep = vec![false; n];
    for &i in &shuffled_indices(n, seed)[..k] {
        keep[i] = true;
    }
    Ok(cohort.select(|i| keep[i]))
}
