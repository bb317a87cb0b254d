//! Transcript audit: only permitted frames, hidden batches of the expected
//! width, and no payload that reproduces a raw input window.

use std::collections::HashMap;

use serde::Serialize;

use super::frame::{decode_matrix, Frame, FrameError, Kind, TapRecord};
use crate::data::{EncodedSet, WindowSample};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Violation {
    Undecodable { error: String },
    HiddenWidth { expected: usize, found: usize },
    MalformedMatrix { error: String },
    RawWindow { window: usize, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub frame_index: usize,
    pub kind: Option<&'static str>,
    pub violation: Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub frames: usize,
    pub findings: Vec<Finding>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Raw windows to search for, keyed by the bit pattern of their first value.
#[derive(Debug, Clone, Default)]
pub struct RawWindowIndex {
    windows: Vec<Vec<u64>>,
    by_first: HashMap<u64, Vec<usize>>,
}

impl RawWindowIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn add(&mut self, values: impl IntoIterator<Item = f64>) {
        let bits: Vec<u64> = values.into_iter().map(f64::to_bits).collect();
        if let Some(&first) = bits.first() {
            self.by_first
                .entry(first)
                .or_default()
                .push(self.windows.len());
            self.windows.push(bits);
        }
    }

    /// Adds each window as `6 × F` and as `6 × 2F` (original beside
    /// differential), both row-major.
    pub fn add_windows(&mut self, windows: &[WindowSample]) {
        for w in windows {
            self.add(w.x.iter().copied());
            let joined =
                w.x.rows()
                    .into_iter()
                    .zip(w.dx.rows())
                    .flat_map(|(x, d)| x.to_vec().into_iter().chain(d.to_vec()));
            self.add(joined);
        }
    }

    /// Adds the encoded `6 × 2F` model inputs.
    pub fn add_encoded(&mut self, set: &EncodedSet) {
        for i in 0..set.len() {
            self.add(set.flat_row(i).iter().copied());
        }
    }

    /// First raw window found verbatim at any byte offset of `payload`.
    pub fn find_in(&self, payload: &[u8]) -> Option<(usize, usize)> {
        if payload.len() < 8 {
            return None;
        }
        let read = |o: usize| u64::from_le_bytes(payload[o..o + 8].try_into().expect("8 bytes"));
        for offset in 0..=payload.len() - 8 {
            let Some(candidates) = self.by_first.get(&read(offset)) else {
                continue;
            };
            for &w in candidates {
                let bits = &self.windows[w];
                let end = offset + 8 * bits.len();
                if end <= payload.len()
                    && bits
                        .iter()
                        .enumerate()
                        .all(|(k, &b)| read(offset + 8 * k) == b)
                {
                    return Some((w, offset));
                }
            }
        }
        None
    }
}

fn audit_frame(frame: &Frame, hidden_width: usize, raw: &RawWindowIndex) -> Option<Violation> {
    if matches!(frame.kind, Kind::HiddenBatch | Kind::HiddenGrad) {
        match decode_matrix(&frame.payload) {
            Ok(z) if z.ncols() != hidden_width => {
                return Some(Violation::HiddenWidth {
                    expected: hidden_width,
                    found: z.ncols(),
                })
            }
            Ok(_) => {}
            Err(e) => {
                return Some(Violation::MalformedMatrix {
                    error: e.to_string(),
                })
            }
        }
    }
    raw.find_in(&frame.payload)
        .map(|(window, offset)| Violation::RawWindow { window, offset })
}

/// Audits decoded frames in transcript order.
pub fn privacy_audit(
    records: &[TapRecord],
    hidden_width: usize,
    raw: &RawWindowIndex,
) -> AuditReport {
    let findings = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            audit_frame(&r.frame, hidden_width, raw).map(|violation| Finding {
                frame_index: i,
                kind: Some(r.frame.kind.name()),
                violation,
            })
        })
        .collect();
    AuditReport {
        frames: records.len(),
        findings,
    }
}

/// Audits a transcript file; a frame that fails to decode (unknown kind,
/// truncation) is reported at its index and ends the scan.
pub fn privacy_audit_bytes(
    mut bytes: &[u8],
    hidden_width: usize,
    raw: &RawWindowIndex,
) -> AuditReport {
    let mut findings = Vec::new();
    let mut index = 0;
    while !bytes.is_empty() {
        let decoded = match bytes[0] {
            0 | 1 => Frame::decode_prefix(&bytes[1..]),
            other => Err(FrameError::BadDirection(other)),
        };
        match decoded {
            Ok((frame, used)) => {
                if let Some(violation) = audit_frame(&frame, hidden_width, raw) {
                    findings.push(Finding {
                        frame_index: index,
                        kind: Some(frame.kind.name()),
                        violation,
                    });
                }
                bytes = &bytes[1 + used..];
                index += 1;
            }
            Err(e) => {
                findings.push(Finding {
                    frame_index: index,
                    kind: None,
                    violation: Violation::Undecodable {
                        error: e.to_string(),
                    },
                });
                index += 1;
                break;
            }
        }
    }
    AuditReport {
        frames: index,
        findings,
    }
}
