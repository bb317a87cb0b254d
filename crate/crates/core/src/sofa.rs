//! Per-system SOFA scoring (0–4).
//!
//! Intervals are half-open `[low, next_low)`, so every non-negative input
//! lands in exactly one band. Units: platelets ×10³/µL, bilirubin and
//! creatinine mg/dL, MAP and PaO2/FiO2 mmHg, vasopressors µg/kg/min, urine
//! mL/day.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PatientSeries;
use crate::schema::FeatureSchema;

#[derive(Debug, Error, PartialEq)]
pub enum SofaError {
    #[error("{variable}: negative or non-finite input {value}")]
    NegativeInput { variable: &'static str, value: f64 },
    #[error("GCS {0} outside [3, 15]")]
    OutOfRange(i32),
    #[error("schema lacks mandatory SOFA variable `{0}`")]
    MissingFeature(&'static str),
    #[error("hour {hour}: `{variable}` is missing; impute first")]
    MissingValue { hour: usize, variable: &'static str },
}

fn check(variable: &'static str, value: f64) -> Result<f64, SofaError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(SofaError::NegativeInput { variable, value })
    }
}

/// Scores for one hour. The four systems the model supervises are always
/// present; respiration and CNS only when their inputs exist.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemScores {
    pub coagulation: u8,
    pub liver: u8,
    pub cardiovascular: u8,
    pub renal: u8,
    pub respiration: Option<u8>,
    pub cns: Option<u8>,
}

impl SystemScores {
    /// Coagulation, liver, cardiovascular, renal.
    pub fn four(&self) -> [u8; 4] {
        [
            self.coagulation,
            self.liver,
            self.cardiovascular,
            self.renal,
        ]
    }

    pub fn four_sum(&self) -> u8 {
        self.four().iter().sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vasopressors {
    pub dopamine: Option<f64>,
    pub dobutamine: Option<f64>,
    pub epinephrine: Option<f64>,
    pub norepinephrine: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SofaInputs {
    pub platelets: f64,
    pub total_bilirubin: f64,
    pub map: f64,
    pub creatinine: f64,
    pub pf_ratio: Option<f64>,
    pub respiratory_support: Option<bool>,
    pub gcs: Option<i32>,
    pub urine_output: Option<f64>,
    pub doses: Option<Vasopressors>,
}

pub fn score_coagulation(platelets: f64) -> Result<u8, SofaError> {
    let p = check("platelets", platelets)?;
    Ok(if p >= 150.0 {
        0
    } else if p >= 100.0 {
        1
    } else if p >= 50.0 {
        2
    } else if p >= 20.0 {
        3
    } else {
        4
    })
}

pub fn score_liver(total_bilirubin: f64) -> Result<u8, SofaError> {
    let b = check("total_bilirubin", total_bilirubin)?;
    Ok(if b < 1.2 {
        0
    } else if b < 2.0 {
        1
    } else if b < 6.0 {
        2
    } else if b < 12.0 {
        3
    } else {
        4
    })
}

/// Without vasopressor data the score is capped at 1 (MAP only).
pub fn score_cardiovascular(map: f64, doses: Option<&Vasopressors>) -> Result<u8, SofaError> {
    let map = check("map", map)?;
    if let Some(d) = doses {
        let dose = |name, v: Option<f64>| v.map_or(Ok(0.0), |v| check(name, v));
        let dopamine = dose("dopamine", d.dopamine)?;
        let dobutamine = dose("dobutamine", d.dobutamine)?;
        let epinephrine = dose("epinephrine", d.epinephrine)?;
        let norepinephrine = dose("norepinephrine", d.norepinephrine)?;
        if dopamine > 15.0 || epinephrine > 0.1 || norepinephrine > 0.1 {
            return Ok(4);
        }
        if dopamine > 5.0 || epinephrine > 0.0 || norepinephrine > 0.0 {
            return Ok(3);
        }
        if dopamine > 0.0 || dobutamine > 0.0 {
            return Ok(2);
        }
    }
    Ok(if map < 70.0 { 1 } else { 0 })
}

/// Max of the creatinine band and, when given, the urine-output band.
pub fn score_renal(creatinine: f64, urine_output: Option<f64>) -> Result<u8, SofaError> {
    let c = check("creatinine", creatinine)?;
    let by_creatinine = if c < 1.2 {
        0
    } else if c < 2.0 {
        1
    } else if c < 3.5 {
        2
    } else if c < 5.0 {
        3
    } else {
        4
    };
    let by_urine = match urine_output {
        None => 0,
        Some(u) => {
            let u = check("urine_output", u)?;
            if u < 200.0 {
                4
            } else if u < 500.0 {
                3
            } else {
                0
            }
        }
    };
    Ok(by_creatinine.max(by_urine))
}

/// Scores 3 and 4 require respiratory support; without it the score caps at 2.
pub fn score_respiration(pf_ratio: f64, respiratory_support: bool) -> Result<u8, SofaError> {
    let pf = check("pf_ratio", pf_ratio)?;
    Ok(if pf >= 400.0 {
        0
    } else if pf >= 300.0 {
        1
    } else if pf >= 200.0 || !respiratory_support {
        2
    } else if pf >= 100.0 {
        3
    } else {
        4
    })
}

pub fn score_cns(gcs: i32) -> Result<u8, SofaError> {
    Ok(match gcs {
        15 => 0,
        13..=14 => 1,
        10..=12 => 2,
        6..=9 => 3,
        3..=5 => 4,
        _ => return Err(SofaError::OutOfRange(gcs)),
    })
}

pub fn score_inputs(inputs: &SofaInputs) -> Result<SystemScores, SofaError> {
    Ok(SystemScores {
        coagulation: score_coagulation(inputs.platelets)?,
        liver: score_liver(inputs.total_bilirubin)?,
        cardiovascular: score_cardiovascular(inputs.map, inputs.doses.as_ref())?,
        renal: score_renal(inputs.creatinine, inputs.urine_output)?,
        respiration: inputs
            .pf_ratio
            .map(|pf| score_respiration(pf, inputs.respiratory_support.unwrap_or(false)))
            .transpose()?,
        cns: inputs.gcs.map(score_cns).transpose()?,
    })
}

/// Schema column names read by [`score_series`].
pub mod columns {
    pub const PLATELETS: &str = "Platelets";
    pub const BILIRUBIN: &str = "TotalBilirubin";
    pub const MAP: &str = "MAP";
    pub const CREATININE: &str = "Creatinine";
    pub const PF_RATIO: &str = "PaO2_FiO2";
    pub const RESP_SUPPORT: &str = "RespiratorySupport";
    pub const GCS: &str = "GCS";
    pub const URINE: &str = "UrineOutput";
    pub const DOPAMINE: &str = "Dopamine";
    pub const DOBUTAMINE: &str = "Dobutamine";
    pub const EPINEPHRINE: &str = "Epinephrine";
    pub const NOREPINEPHRINE: &str = "Norepinephrine";
}

struct Columns {
    platelets: usize,
    bilirubin: usize,
    map: usize,
    creatinine: usize,
    pf: Option<usize>,
    support: Option<usize>,
    gcs: Option<usize>,
    urine: Option<usize>,
    doses: [Option<usize>; 4],
}

impl Columns {
    fn resolve(schema: &FeatureSchema) -> Result<Self, SofaError> {
        let need =
            |name: &'static str| schema.index_of(name).ok_or(SofaError::MissingFeature(name));
        Ok(Self {
            platelets: need(columns::PLATELETS)?,
            bilirubin: need(columns::BILIRUBIN)?,
            map: need(columns::MAP)?,
            creatinine: need(columns::CREATININE)?,
            pf: schema.index_of(columns::PF_RATIO),
            support: schema.index_of(columns::RESP_SUPPORT),
            gcs: schema.index_of(columns::GCS),
            urine: schema.index_of(columns::URINE),
            doses: [
                schema.index_of(columns::DOPAMINE),
                schema.index_of(columns::DOBUTAMINE),
                schema.index_of(columns::EPINEPHRINE),
                schema.index_of(columns::NOREPINEPHRINE),
            ],
        })
    }
}

/// One [`SystemScores`] per hour of an imputed series.
pub fn score_series(
    series: &PatientSeries,
    schema: &FeatureSchema,
) -> Result<Vec<SystemScores>, SofaError> {
    let cols = Columns::resolve(schema)?;
    let has_doses = cols.doses.iter().any(Option::is_some);
    (0..series.m())
        .map(|hour| {
            let row = series.row(hour);
            let need = |j: usize, variable: &'static str| {
                row[j].ok_or(SofaError::MissingValue { hour, variable })
            };
            let opt = |j: Option<usize>| j.and_then(|j| row[j]);
            let inputs = SofaInputs {
                platelets: need(cols.platelets, columns::PLATELETS)?,
                total_bilirubin: need(cols.bilirubin, columns::BILIRUBIN)?,
                map: need(cols.map, columns::MAP)?,
                creatinine: need(cols.creatinine, columns::CREATININE)?,
                pf_ratio: opt(cols.pf),
                respiratory_support: opt(cols.support).map(|v| v > 0.5),
                gcs: opt(cols.gcs).map(|v| v.round() as i32),
                urine_output: opt(cols.urine),
                doses: has_doses.then(|| Vasopressors {
                    dopamine: opt(cols.doses[0]),
                    dobutamine: opt(cols.doses[1]),
                    epinephrine: opt(cols.doses[2]),
                    norepinephrine: opt(cols.doses[3]),
                }),
            };
            score_inputs(&inputs)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn printed_examples() {
        assert_eq!(score_coagulation(160.0), Ok(0));
        assert_eq!(score_coagulation(90.0), Ok(2));
        assert_eq!(score_coagulation(15.0), Ok(4));
        assert_eq!(score_liver(1.0), Ok(0));
        assert_eq!(score_liver(3.0), Ok(2));
        assert_eq!(score_liver(13.0), Ok(4));
        assert_eq!(score_cardiovascular(75.0, None), Ok(0));
        assert_eq!(score_cardiovascular(65.0, None), Ok(1));
        let ne = Vasopressors {
            norepinephrine: Some(0.2),
            ..Default::default()
        };
        assert_eq!(score_cardiovascular(65.0, Some(&ne)), Ok(4));
        assert_eq!(score_renal(1.0, None), Ok(0));
        assert_eq!(score_renal(2.5, None), Ok(2));
        assert_eq!(score_renal(1.0, Some(150.0)), Ok(4));
        assert_eq!(score_respiration(450.0, false), Ok(0));
        assert_eq!(score_respiration(250.0, false), Ok(2));
        assert_eq!(score_respiration(90.0, true), Ok(4));
        assert_eq!(score_cns(15), Ok(0));
        assert_eq!(score_cns(11), Ok(2));
        assert_eq!(score_cns(4), Ok(4));
    }

    #[test]
    fn gap_values_are_assigned() {
        assert_eq!(score_liver(1.95), Ok(1));
        assert_eq!(score_liver(12.0), Ok(4));
        assert_eq!(score_renal(3.45, None), Ok(2));
        assert_eq!(score_renal(5.0, None), Ok(4));
    }

    #[test]
    fn vasopressor_bands() {
        let d = |dop, dob| Vasopressors {
            dopamine: Some(dop),
            dobutamine: Some(dob),
            ..Default::default()
        };
        assert_eq!(score_cardiovascular(80.0, Some(&d(5.0, 0.0))), Ok(2));
        assert_eq!(score_cardiovascular(80.0, Some(&d(5.1, 0.0))), Ok(3));
        assert_eq!(score_cardiovascular(80.0, Some(&d(15.0, 0.0))), Ok(3));
        assert_eq!(score_cardiovascular(80.0, Some(&d(15.01, 0.0))), Ok(4));
        assert_eq!(score_cardiovascular(80.0, Some(&d(0.0, 1.0))), Ok(2));
        assert_eq!(score_cardiovascular(65.0, Some(&d(0.0, 0.0))), Ok(1));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            score_coagulation(-1.0),
            Err(SofaError::NegativeInput { .. })
        ));
        assert!(matches!(
            score_liver(f64::NAN),
            Err(SofaError::NegativeInput { .. })
        ));
        assert_eq!(score_cns(2), Err(SofaError::OutOfRange(2)));
        assert_eq!(score_cns(16), Err(SofaError::OutOfRange(16)));
    }

    #[test]
    fn series_requires_mandatory_columns() {
        use crate::schema::{Feature, FeatureGroup};
        let s = FeatureSchema::new(vec![Feature {
            name: "MAP".into(),
            unit: "mmHg".into(),
            group: FeatureGroup::Vital,
        }])
        .unwrap();
        let p = PatientSeries::new("p", 1, vec![Some(70.0)], None).unwrap();
        assert_eq!(
            score_series(&p, &s),
            Err(SofaError::MissingFeature(columns::PLATELETS))
        );
    }

    proptest! {
        #[test]
        fn monotone(a in 0.0f64..500.0, b in 0.0f64..500.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(score_coagulation(lo).unwrap() >= score_coagulation(hi).unwrap());
            prop_assert!(score_cardiovascular(lo, None).unwrap() >= score_cardiovascular(hi, None).unwrap());
            let (l, h) = (lo / 20.0, hi / 20.0);
            prop_assert!(score_liver(l).unwrap() <= score_liver(h).unwrap());
            prop_assert!(score_renal(l, None).unwrap() <= score_renal(h, None).unwrap());
        }

        #[test]
        fn cns_monotone_in_deficit(a in 3i32..=15, b in 3i32..=15) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(score_cns(lo).unwrap() >= score_cns(hi).unwrap());
        }
    }
}
