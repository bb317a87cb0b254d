//! Pipe-separated per-patient files: one header line, one line per hour.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{Cohort, PatientSeries};
use crate::schema::FeatureSchema;

const LABEL_COLUMN: &str = "SepsisLabel";

#[derive(Debug, Error)]
pub enum PsvError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} cells, found {found}")]
    RowArity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column `{column}`: non-numeric cell `{value}`")]
    NonNumericCell {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}: sepsis label must be 0 or 1, found `{value}`")]
    InvalidLabel { line: usize, value: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPsv {
    pub series: PatientSeries,
    /// Header columns that are neither schema features nor the label.
    pub ignored_columns: Vec<String>,
}

enum Slot {
    Feature(usize),
    Label,
    Ignored,
}

fn parse_cell(raw: &str) -> Result<Option<f64>, ()> {
    let cell = raw.trim();
    if cell.is_empty() || cell == "NaN" {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

/// Parses one patient file into schema column order.
///
/// Schema features absent from the header are entirely missing. The onset
/// hour is the first hour whose `SepsisLabel` is 1.
pub fn parse_psv(
    text: &str,
    schema: &FeatureSchema,
    patient_id: &str,
) -> Result<ParsedPsv, PsvError> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l.trim_end_matches('\r'),
            None => return Err(PsvError::MalformedHeader("empty input".into())),
        }
    };
    let columns: Vec<&str> = header.split('|').map(str::trim).collect();
    let mut slots = Vec::with_capacity(columns.len());
    let mut ignored_columns = Vec::new();
    let mut taken = vec![false; schema.len()];
    let mut has_label = false;
    for col in &columns {
        if col.is_empty() {
            return Err(PsvError::MalformedHeader("empty column name".into()));
        }
        if *col == LABEL_COLUMN {
            if has_label {
                return Err(PsvError::MalformedHeader("duplicate SepsisLabel".into()));
            }
            has_label = true;
            slots.push(Slot::Label);
        } else if let Some(j) = schema.resolve_column(col) {
            if taken[j] {
                return Err(PsvError::MalformedHeader(format!(
                    "duplicate column `{col}`"
                )));
            }
            taken[j] = true;
            slots.push(Slot::Feature(j));
        } else {
            ignored_columns.push(col.to_string());
            slots.push(Slot::Ignored);
        }
    }

    let f = schema.len();
    let mut cells = Vec::new();
    let mut onset = None;
    let mut hour = 0usize;
    for (idx, raw_line) in lines {
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let parts: Vec<&str> = line.split('|').collect();
        if parts.len() != columns.len() {
            return Err(PsvError::RowArity {
                line: line_no,
                expected: columns.len(),
                found: parts.len(),
            });
        }
        let mut row = vec![None; f];
        for ((part, slot), col) in parts.iter().zip(&slots).zip(&columns) {
            match slot {
                Slot::Feature(j) => {
                    row[*j] = parse_cell(part).map_err(|_| PsvError::NonNumericCell {
                        line: line_no,
                        column: col.to_string(),
                        value: part.to_string(),
                    })?;
                }
                Slot::Label => match parse_cell(part) {
                    Ok(None) => {}
                    Ok(Some(0.0)) => {}
                    Ok(Some(1.0)) => {
                        onset.get_or_insert(hour);
                    }
                    _ => {
                        return Err(PsvError::InvalidLabel {
                            line: line_no,
                            value: part.to_string(),
                        })
                    }
                },
                Slot::Ignored => {}
            }
        }
        cells.extend(row);
        hour += 1;
    }
    for col in &ignored_columns {
        log::debug!("{patient_id}: ignoring unknown column `{col}`");
    }
    let series =
        PatientSeries::new(patient_id, f, cells, onset).expect("rows built with schema width");
    Ok(ParsedPsv {
        series,
        ignored_columns,
    })
}

/// Renders a series in schema column order. Missing cells are written as
/// `NaN`; the label column is 1 from the onset hour onward.
pub fn render_psv(series: &PatientSeries, schema: &FeatureSchema) -> String {
    let mut out = String::new();
    for name in schema.names() {
        out.push_str(name);
        out.push('|');
    }
    out.push_str(LABEL_COLUMN);
    out.push('\n');
    for t in 0..series.m() {
        for cell in series.row(t) {
            match cell {
                Some(v) => out.push_str(&v.to_string()),
                None => out.push_str("NaN"),
            }
            out.push('|');
        }
        let label = matches!(series.onset_hour(), Some(o) if t >= o);
        out.push(if label { '1' } else { '0' });
        out.push('\n');
    }
    out
}

/// Writes one `<patient_id>.psv` per patient; returns the file count.
pub fn write_psv(cohort: &Cohort, dir: &Path) -> Result<usize, PsvError> {
    let io_err = |source| PsvError::Io {
        path: dir.display().to_string(),
        source,
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    for p in &cohort.patients {
        let path = dir.join(format!("{}.psv", p.patient_id));
        fs::write(&path, render_psv(p, &cohort.schema)).map_err(|source| PsvError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(cohort.patients.len())
}

/// Reads every `*.psv` file in `dir` (sorted by file name) into a cohort.
pub fn read_cohort_dir(dir: &Path, schema: &FeatureSchema) -> Result<Cohort, PsvError> {
    let io_err = |source| PsvError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "psv"))
        .collect();
    paths.sort();
    let mut patients = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|source| PsvError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        patients.push(parse_psv(&text, schema, &id)?.series);
    }
    Ok(Cohort::new(schema.clone(), patients))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Feature, FeatureGroup};

    fn hr_map_schema() -> FeatureSchema {
        let f = |n: &str| Feature {
            name: n.into(),
            unit: "u".into(),
            group: FeatureGroup::Vital,
        };
        FeatureSchema::new(vec![f("HR"), f("MAP")]).unwrap()
    }

    #[test]
    fn maps_fields_and_onset() {
        let s = hr_map_schema();
        let p = parse_psv("HR|MAP|SepsisLabel\n80|75|0\n82|68|1\n", &s, "p1").unwrap();
        assert_eq!(p.series.m(), 2);
        assert_eq!(p.series.onset_hour(), Some(1));
        assert_eq!(p.series.get(0, 0), Some(80.0));
        assert_eq!(p.series.get(1, 0), Some(82.0));
        assert!(p.ignored_columns.is_empty());
    }

    #[test]
    fn empty_and_nan_cells_are_missing() {
        let s = hr_map_schema();
        let p = parse_psv("HR|MAP|SepsisLabel\n80||0\nNaN|70|0", &s, "p").unwrap();
        assert_eq!(p.series.get(0, 1), None);
        assert_eq!(p.series.get(1, 0), None);
        assert_eq!(p.series.onset_hour(), None);
    }

    #[test]
    fn rejects_non_numeric() {
        let s = hr_map_schema();
        let err = parse_psv("HR|MAP|SepsisLabel\n80|abc|0\n", &s, "p").unwrap_err();
        assert!(
            matches!(err, PsvError::NonNumericCell { line: 2, .. }),
            "{err:?}"
        );
    }

    #[test]
    fn rejects_bad_arity_and_header() {
        let s = hr_map_schema();
        assert!(matches!(
            parse_psv("HR|MAP\n1|2|3\n", &s, "p"),
            Err(PsvError::RowArity {
                expected: 2,
                found: 3,
                ..
            })
        ));
        assert!(matches!(
            parse_psv("", &s, "p"),
            Err(PsvError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_psv("HR||MAP\n", &s, "p"),
            Err(PsvError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_psv("HR|HR\n", &s, "p"),
            Err(PsvError::MalformedHeader(_))
        ));
    }

    #[test]
    fn reorders_columns_and_ignores_unknown() {
        let s = hr_map_schema();
        let p = parse_psv("MAP|EtCO2|HR\n70|33|90\n", &s, "p").unwrap();
        assert_eq!(p.series.row(0), &[Some(90.0), Some(70.0)]);
        assert_eq!(p.ignored_columns, vec!["EtCO2".to_string()]);
    }

    #[test]
    fn rejects_non_binary_label() {
        let s = hr_map_schema();
        assert!(matches!(
            parse_psv("HR|SepsisLabel\n1|2\n", &s, "p"),
            Err(PsvError::InvalidLabel { .. })
        ));
    }

    #[test]
    fn render_round_trips() {
        let s = hr_map_schema();
        let series = PatientSeries::new(
            "x",
            2,
            vec![Some(0.1), None, Some(1e-300), Some(-3.5), None, None],
            Some(1),
        )
        .unwrap();
        let text = render_psv(&series, &s);
        assert!(text.contains("NaN"));
        let back = parse_psv(&text, &s, "x").unwrap().series;
        assert_eq!(back, series);
    }
}
