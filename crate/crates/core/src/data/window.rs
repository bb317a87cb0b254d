use ndarray::{s, Array2, ArrayView2};
use thiserror::Error;

use super::{impute, Cohort, PatientSeries};
use crate::sofa::{score_series, SofaError, SystemScores};

/// Hours of history per sample.
pub const WINDOW: usize = 6;
/// Prediction horizon in hours after the window.
pub const HORIZON: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("series of {m} hours is shorter than the {window}-hour window")]
    SeriesTooShort { m: usize, window: usize },
    #[error("series has missing cells; impute first")]
    NotImputed,
    #[error("{scores} SOFA rows for a {m}-hour series")]
    SofaLength { scores: usize, m: usize },
    #[error(transparent)]
    Sofa(#[from] SofaError),
}

/// A labeled slice of `WINDOW` consecutive hours.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub patient_id: String,
    pub start: usize,
    pub x: Array2<f64>,
    pub dx: Array2<f64>,
    pub sepsis_label: u8,
    /// Coagulation, liver, cardiovascular, renal.
    pub sofa_labels: [u8; 4],
}

/// First differences along time with a zero first row.
pub fn differential(x: ArrayView2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(x.raw_dim());
    for t in 1..x.nrows() {
        let d = &x.row(t) - &x.row(t - 1);
        dx.row_mut(t).assign(&d);
    }
    dx
}

/// 1 iff onset falls in `[start + window, start + window + horizon − 1]`.
pub fn label_for_start(start: usize, onset: Option<usize>, window: usize, horizon: usize) -> u8 {
    match onset {
        Some(o) if o >= start + window && o < start + window + horizon => 1,
        _ => 0,
    }
}

/// One sample per start hour `k ∈ [0, m − window]` with `k` before onset.
/// SOFA labels come from the window's last hour.
pub fn make_windows(
    series: &PatientSeries,
    sofa: &[SystemScores],
    window: usize,
    horizon: usize,
) -> Result<Vec<WindowSample>, WindowError> {
    let m = series.m();
    if m < window || window == 0 {
        return Err(WindowError::SeriesTooShort { m, window });
    }
    if sofa.len() != m {
        return Err(WindowError::SofaLength {
            scores: sofa.len(),
            m,
        });
    }
    let dense = series.dense().ok_or(WindowError::NotImputed)?;
    let onset = series.onset_hour();
    let last_start = match onset {
        Some(o) => (m - window).min(o.saturating_sub(1)),
        None => m - window,
    };
    if onset == Some(0) {
        return Ok(Vec::new());
    }
    Ok((0..=last_start)
        .map(|k| {
            let x = dense.slice(s![k..k + window, ..]).to_owned();
            let dx = differential(x.view());
            WindowSample {
                patient_id: series.patient_id.clone(),
                start: k,
                x,
                dx,
                sepsis_label: label_for_start(k, onset, window, horizon),
                sofa_labels: sofa[k + window - 1].four(),
            }
        })
        .collect())
}

/// Imputes each patient with `feature_means`, scores it and cuts windows.
/// Stays shorter than the window are skipped.
pub fn windows_for_cohort(
    cohort: &Cohort,
    feature_means: &[f64],
) -> Result<Vec<WindowSample>, WindowError> {
    let mut out = Vec::new();
    for p in &cohort.patients {
        if p.m() < WINDOW {
            log::debug!("{}: {} hours, skipped", p.patient_id, p.m());
            continue;
        }
        let filled = impute(p, feature_means);
        let scores = score_series(&filled, &cohort.schema)?;
        out.extend(make_windows(&filled, &scores, WINDOW, HORIZON)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn series(m: usize, onset: Option<usize>) -> PatientSeries {
        let cells = (0..m).map(|t| Some(t as f64)).collect();
        PatientSeries::new("p", 1, cells, onset).unwrap()
    }

    fn healthy(m: usize) -> Vec<SystemScores> {
        vec![SystemScores::default(); m]
    }

    #[test]
    fn differential_definition() {
        let x = array![[1.0], [2.0], [4.0], [4.0], [7.0], [7.0]];
        assert_eq!(
            differential(x.view()),
            array![[0.0], [1.0], [2.0], [0.0], [3.0], [0.0]]
        );
        let c = Array2::from_elem((6, 2), 3.5);
        assert!(differential(c.view()).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn onset_labels_and_exclusion() {
        let w = make_windows(&series(12, Some(10)), &healthy(12), 6, 6).unwrap();
        let starts: Vec<usize> = w.iter().map(|s| s.start).collect();
        // starts at or after onset are dropped, and k ≤ m − 6 = 6 anyway
        assert_eq!(starts, (0..=6).collect::<Vec<_>>());
        for s in &w {
            let oracle = (s.start + 6..=s.start + 11).contains(&10);
            assert_eq!(s.sepsis_label == 1, oracle, "k={}", s.start);
        }
        assert_eq!(w[0].sepsis_label, 1);
        assert_eq!(w[4].sepsis_label, 1);
        assert_eq!(w[5].sepsis_label, 0);
    }

    #[test]
    fn no_onset_gives_m_minus_five() {
        let w = make_windows(&series(12, None), &healthy(12), 6, 6).unwrap();
        assert_eq!(w.len(), 7);
        assert!(w.iter().all(|s| s.sepsis_label == 0));
    }

    #[test]
    fn too_short() {
        assert_eq!(
            make_windows(&series(5, None), &healthy(5), 6, 6),
            Err(WindowError::SeriesTooShort { m: 5, window: 6 })
        );
    }

    #[test]
    fn early_onset_drops_everything_after() {
        let w = make_windows(&series(20, Some(3)), &healthy(20), 6, 6).unwrap();
        assert_eq!(w.iter().map(|s| s.start).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(make_windows(&series(20, Some(0)), &healthy(20), 6, 6)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sofa_label_from_last_hour() {
        let mut scores = healthy(8);
        scores[5].coagulation = 3;
        scores[6].renal = 2;
        let w = make_windows(&series(8, None), &scores, 6, 6).unwrap();
        assert_eq!(w[0].sofa_labels, [3, 0, 0, 0]);
        assert_eq!(w[1].sofa_labels, [0, 0, 0, 2]);
    }

    #[test]
    fn rejects_missing_cells() {
        let p = PatientSeries::new("p", 1, vec![None; 6], None).unwrap();
        assert_eq!(
            make_windows(&p, &healthy(6), 6, 6),
            Err(WindowError::NotImputed)
        );
    }
}
