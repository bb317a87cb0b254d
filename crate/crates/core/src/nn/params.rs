//! Named parameter tensors and their wire/checkpoint byte format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SNPS" | u32 version=1 | u32 tensor count
//! per tensor: u16 name length | name (UTF-8) | u8 rank | rank × u32 dims
//! values: every tensor's f64 values in manifest order, IEEE-754 LE
//! ```

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"SNPS";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("bad magic or version")]
    BadHeader,
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("payload truncated")]
    TruncatedPayload,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("tensor name is not valid UTF-8")]
    InvalidName,
}

/// Row-major f64 tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBuffer {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl TensorBuffer {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Option<Self> {
        (shape.iter().product::<usize>() == values.len()).then(|| Self {
            shape: shape.to_vec(),
            values,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn view2(&self) -> ArrayView2<'_, f64> {
        let (r, c) = self.dims2();
        ArrayView2::from_shape((r, c), &self.values).expect("rank-2 tensor")
    }

    pub fn view2_mut(&mut self) -> ArrayViewMut2<'_, f64> {
        let (r, c) = self.dims2();
        ArrayViewMut2::from_shape((r, c), &mut self.values).expect("rank-2 tensor")
    }

    pub fn view1(&self) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.values[..])
    }

    pub fn view1_mut(&mut self) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.values[..])
    }

    fn dims2(&self) -> (usize, usize) {
        match self.shape[..] {
            [r, c] => (r, c),
            _ => panic!("expected rank-2 tensor, got shape {:?}", self.shape),
        }
    }
}

/// Ordered `(name, tensor)` list; the unit of averaging and transfer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    entries: Vec<(String, TensorBuffer)>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; panics on a duplicate name.
    pub fn push(&mut self, name: impl Into<String>, tensor: TensorBuffer) -> usize {
        let name = name.into();
        assert!(
            self.index_of(&name).is_none(),
            "duplicate parameter name `{name}`"
        );
        self.entries.push((name, tensor));
        self.entries.len() - 1
    }

    pub fn n_tensors(&self) -> usize {
        self.entries.len()
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    pub fn get(&self, i: usize) -> &TensorBuffer {
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, i: usize) -> &mut TensorBuffer {
        &mut self.entries[i].1
    }

    pub fn by_name(&self, name: &str) -> Option<&TensorBuffer> {
        self.index_of(name).map(|i| self.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TensorBuffer)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut TensorBuffer)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), TensorBuffer::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn same_manifest(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, ta), (nb, tb))| na == nb && ta.shape() == tb.shape())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.values());
        }
        out
    }

    /// Overwrites all values from a flat vector in manifest order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), CodecError> {
        if flat.len() != self.len() {
            return Err(CodecError::ManifestMismatch(format!(
                "flat length {} vs {}",
                flat.len(),
                self.len()
            )));
        }
        let mut off = 0;
        for (_, t) in &mut self.entries {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn unflatten(template: &Self, flat: &[f64]) -> Result<Self, CodecError> {
        let mut out = template.clone();
        out.assign_flat(flat)?;
        Ok(out)
    }

    /// Visits every scalar value in manifest order.
    pub fn for_each_value_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut k = 0;
        for (_, t) in &mut self.entries {
            for v in t.values_mut() {
                f(k, v);
                k += 1;
            }
        }
    }
}

/// Elementwise `(a + b) / 2`. Commutative bit-for-bit, so both parties of a
/// round obtain identical bytes.
pub fn param_average(a: &ParamSet, b: &ParamSet) -> Result<ParamSet, CodecError> {
    if !a.same_manifest(b) {
        return Err(CodecError::ManifestMismatch(
            "averaging operands differ".into(),
        ));
    }
    let mut out = a.clone();
    for ((_, ta), (_, tb)) in out.entries.iter_mut().zip(&b.entries) {
        for (x, y) in ta.values_mut().iter_mut().zip(tb.values()) {
            *x = 0.5 * (*x + *y);
        }
    }
    Ok(out)
}

pub fn serialize_params(p: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + p.len() * 8 + p.n_tensors() * 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.n_tensors() as u32).to_le_bytes());
    for (name, t) in p.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, t) in p.iter() {
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(CodecError::TruncatedPayload)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(CodecError::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

fn read_manifest(r: &mut Reader<'_>) -> Result<Vec<(String, Vec<usize>)>, CodecError> {
    if r.take(4)? != MAGIC || r.u32()? != VERSION {
        return Err(CodecError::BadHeader);
    }
    let count = r.u32()? as usize;
    // each manifest entry needs at least 3 bytes
    if count > r.remaining() / 3 {
        return Err(CodecError::TruncatedPayload);
    }
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| CodecError::InvalidName)?
            .to_string();
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        manifest.push((name, shape));
    }
    Ok(manifest)
}

fn read_values(r: &mut Reader<'_>, n: usize) -> Result<Vec<f64>, CodecError> {
    let bytes = n.checked_mul(8).ok_or(CodecError::TruncatedPayload)?;
    let raw = r.take(bytes)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Decodes against a template whose names and shapes must match exactly.
pub fn deserialize_params(bytes: &[u8], template: &ParamSet) -> Result<ParamSet, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let manifest = read_manifest(&mut r)?;
    if manifest.len() != template.n_tensors() {
        return Err(CodecError::ManifestMismatch(format!(
            "{} tensors, expected {}",
            manifest.len(),
            template.n_tensors()
        )));
    }
    for ((name, shape), (tn, tt)) in manifest.iter().zip(template.iter()) {
        if name != tn || shape[..] != *tt.shape() {
            return Err(CodecError::ManifestMismatch(format!(
                "`{name}` {shape:?} vs `{tn}` {:?}",
                tt.shape()
            )));
        }
    }
    let values = read_values(&mut r, template.len())?;
    if r.remaining() != 0 {
        return Err(CodecError::TrailingBytes(r.remaining()));
    }
    ParamSet::unflatten(template, &values)
}

/// Decodes a self-describing payload without a template.
pub fn decode_params(bytes: &[u8]) -> Result<ParamSet, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let manifest = read_manifest(&mut r)?;
    let mut out = ParamSet::new();
    for (name, shape) in manifest {
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(CodecError::TruncatedPayload)?;
        if n > r.remaining() / 8 {
            return Err(CodecError::TruncatedPayload);
        }
        let values = read_values(&mut r, n)?;
        if out.index_of(&name).is_some() {
            return Err(CodecError::ManifestMismatch(format!("duplicate `{name}`")));
        }
        out.push(
            name,
            TensorBuffer::from_vec(&shape, values).expect("length checked"),
        );
    }
    if r.remaining() != 0 {
        return Err(CodecError::TrailingBytes(r.remaining()));
    }
    Ok(out)
}
