//! Cohort ingestion and window construction.

mod cohort;
mod dataset;
mod psv;
mod window;

pub use cohort::{
    impute, missing_ratio, screen_cohort, split_patients, subsample_patients, Cohort, CohortError,
    CohortManifest, ManifestEntry,
};
pub use dataset::{EncodedSet, FeatureScaler};
pub use psv::{parse_psv, read_cohort_dir, write_psv, ParsedPsv, PsvError};
pub use window::{
    differential, label_for_start, make_windows, windows_for_cohort, WindowError, WindowSample,
    HORIZON, WINDOW,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SeriesError {
    #[error("cell count {cells} is not a multiple of feature count {features}")]
    Shape { cells: usize, features: usize },
    #[error("onset hour {onset} outside stay of {m} hours")]
    OnsetOutOfRange { onset: usize, m: usize },
}

/// One patient's hourly feature matrix, row-major `m × F`, `None` marking a
/// missing cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSeries {
    pub patient_id: String,
    n_features: usize,
    cells: Vec<Option<f64>>,
    onset_hour: Option<usize>,
}

impl PatientSeries {
    pub fn new(
        patient_id: impl Into<String>,
        n_features: usize,
        cells: Vec<Option<f64>>,
        onset_hour: Option<usize>,
    ) -> Result<Self, SeriesError> {
        if n_features == 0 || !cells.len().is_multiple_of(n_features) {
            return Err(SeriesError::Shape {
                cells: cells.len(),
                features: n_features,
            });
        }
        let m = cells.len() / n_features;
        if let Some(onset) = onset_hour {
            if onset >= m {
                return Err(SeriesError::OnsetOutOfRange { onset, m });
            }
        }
        Ok(Self {
            patient_id: patient_id.into(),
            n_features,
            cells,
            onset_hour,
        })
    }

    /// Stay length in hours.
    pub fn m(&self) -> usize {
        self.cells.len() / self.n_features
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn onset_hour(&self) -> Option<usize> {
        self.onset_hour
    }

    pub fn get(&self, hour: usize, feature: usize) -> Option<f64> {
        self.cells[hour * self.n_features + feature]
    }

    pub fn row(&self, hour: usize) -> &[Option<f64>] {
        &self.cells[hour * self.n_features..(hour + 1) * self.n_features]
    }

    pub fn cells(&self) -> &[Option<f64>] {
        &self.cells
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Dense row-major copy; `None` when any cell is missing.
    pub fn dense(&self) -> Option<ndarray::Array2<f64>> {
        let values: Option<Vec<f64>> = self.cells.iter().copied().collect();
        values.map(|v| {
            ndarray::Array2::from_shape_vec((self.m(), self.n_features), v)
                .expect("shape checked at construction")
        })
    }
}
