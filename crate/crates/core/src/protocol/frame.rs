//! Wire frames: `kind (1) | round (4, BE) | length (4, BE) | payload`.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

pub const HEADER_LEN: usize = 9;
/// Upper bound on a single payload; larger length fields are rejected
/// before any allocation.
pub const MAX_PAYLOAD: usize = 1 << 28;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("truncated frame: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("payload length {0} exceeds limit")]
    TooLarge(usize),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("malformed matrix payload: {0}")]
    BadMatrix(String),
    #[error("unknown tap direction byte {0}")]
    BadDirection(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Kind {
    Hello = 1,
    HiddenBatch = 2,
    HiddenGrad = 3,
    Params = 4,
    Metrics = 5,
    Bye = 6,
}

impl Kind {
    pub fn from_byte(b: u8) -> Result<Self, FrameError> {
        Ok(match b {
            1 => Kind::Hello,
            2 => Kind::HiddenBatch,
            3 => Kind::HiddenGrad,
            4 => Kind::Params,
            5 => Kind::Metrics,
            6 => Kind::Bye,
            other => return Err(FrameError::UnknownKind(other)),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Kind::Hello => "HELLO",
            Kind::HiddenBatch => "HIDDEN_BATCH",
            Kind::HiddenGrad => "HIDDEN_GRAD",
            Kind::Params => "PARAMS",
            Kind::Metrics => "METRICS",
            Kind::Bye => "BYE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: Kind,
    pub round: u32,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: Kind, round: u32, payload: Vec<u8>) -> Self {
        Self {
            kind,
            round,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.kind as u8);
        out.extend_from_slice(&self.round.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        out
    }

    /// Decodes one frame from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
        let header: &[u8; HEADER_LEN] = bytes
            .get(..HEADER_LEN)
            .and_then(|h| h.try_into().ok())
            .ok_or(FrameError::Truncated {
                needed: HEADER_LEN,
                have: bytes.len(),
            })?;
        let (kind, round, len) = decode_header(header)?;
        let end = HEADER_LEN + len;
        if bytes.len() < end {
            return Err(FrameError::Truncated {
                needed: end,
                have: bytes.len(),
            });
        }
        Ok((
            Frame::new(kind, round, bytes[HEADER_LEN..end].to_vec()),
            end,
        ))
    }

    /// Decodes exactly one frame.
    pub fn decode(bytes: &[u8]) -> Result<Frame, FrameError> {
        let (frame, used) = Frame::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(FrameError::TrailingBytes(bytes.len() - used));
        }
        Ok(frame)
    }
}

pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<(Kind, u32, usize), FrameError> {
    let kind = Kind::from_byte(h[0])?;
    let round = u32::from_be_bytes([h[1], h[2], h[3], h[4]]);
    let len = u32::from_be_bytes([h[5], h[6], h[7], h[8]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::TooLarge(len));
    }
    Ok((kind, round, len))
}

/// `n (u32 LE) | d (u32 LE) | n·d f64 LE`, row-major.
pub fn encode_matrix(z: ArrayView2<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * z.len());
    out.extend_from_slice(&(z.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(z.ncols() as u32).to_le_bytes());
    for v in z.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>, FrameError> {
    let bad = |m: String| FrameError::BadMatrix(m);
    if bytes.len() < 8 {
        return Err(bad("missing dimensions".into()));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let want = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| bad(format!("{n} x {d} overflows")))?;
    if bytes.len() - 8 != want {
        return Err(bad(format!(
            "{n} x {d} needs {want} value bytes, found {}",
            bytes.len() - 8
        )));
    }
    let values = bytes[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Array2::from_shape_vec((n, d), values).map_err(|e| bad(e.to_string()))
}

/// Which way a tapped frame travelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent = 0,
    Received = 1,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TapRecord {
    pub direction: Direction,
    pub frame: Frame,
}

/// Transcript file: per record one direction byte then the wire frame.
pub fn encode_transcript(records: &[TapRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        out.push(r.direction as u8);
        r.frame.encode_into(&mut out);
    }
    out
}

pub fn decode_transcript(mut bytes: &[u8]) -> Result<Vec<TapRecord>, FrameError> {
    let mut out = Vec::new();
    while let Some((&d, rest)) = bytes.split_first() {
        let direction = match d {
            0 => Direction::Sent,
            1 => Direction::Received,
            other => return Err(FrameError::BadDirection(other)),
        };
        let (frame, used) = Frame::decode_prefix(rest)?;
        out.push(TapRecord { direction, frame });
        bytes = &rest[used..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let f = Frame::new(Kind::Params, 0x0102_0304, vec![9, 8, 7]);
        assert_eq!(f.encode(), vec![4, 1, 2, 3, 4, 0, 0, 0, 3, 9, 8, 7]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            Frame::decode(&[7, 0, 0, 0, 0, 0, 0, 0, 0]),
            Err(FrameError::UnknownKind(7))
        );
        assert_eq!(
            Frame::decode(&[1, 0, 0]),
            Err(FrameError::Truncated { needed: 9, have: 3 })
        );
        assert_eq!(
            Frame::decode(&[1, 0, 0, 0, 0, 0, 0, 0, 2, 5]),
            Err(FrameError::Truncated {
                needed: 11,
                have: 10
            })
        );
        assert_eq!(
            Frame::decode(&[6, 0, 0, 0, 0, 0xff, 0xff, 0xff, 0xff]),
            Err(FrameError::TooLarge(u32::MAX as usize))
        );
        assert_eq!(
            Frame::decode(&[6, 0, 0, 0, 0, 0, 0, 0, 0, 1]),
            Err(FrameError::TrailingBytes(1))
        );
    }

    #[test]
    fn matrix_round_trip() {
        let z = array![[1.5, -2.0, 0.0], [f64::MIN_POSITIVE, 3.25, -0.0]];
        let back = decode_matrix(&encode_matrix(z.view())).unwrap();
        assert_eq!(back.dim(), (2, 3));
        for (a, b) in z.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(decode_matrix(&[1, 0, 0, 0, 2, 0, 0, 0]).is_err());
        assert!(decode_matrix(&[0xff; 8]).is_err());
    }

    proptest! {
        #[test]
        fn frame_round_trip(kind in 1u8..=6, round in any::<u32>(), payload in proptest::collection::vec(any::<u8>(), 0..64)) {
            let f = Frame::new(Kind::from_byte(kind).unwrap(), round, payload);
            prop_assert_eq!(Frame::decode(&f.encode()), Ok(f));
        }

        #[test]
        fn transcript_round_trip(frames in proptest::collection::vec((1u8..=6, any::<u32>(), any::<bool>(), proptest::collection::vec(any::<u8>(), 0..16)), 0..8)) {
            let records: Vec<TapRecord> = frames
                .into_iter()
                .map(|(k, r, sent, p)| TapRecord {
                    direction: if sent { Direction::Sent } else { Direction::Received },
                    frame: Frame::new(Kind::from_byte(k).unwrap(), r, p),
                })
                .collect();
            prop_assert_eq!(decode_transcript(&encode_transcript(&records)), Ok(records));
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = Frame::decode(&bytes);
            let _ = decode_transcript(&bytes);
            let _ = decode_matrix(&bytes);
        }
    }
}
