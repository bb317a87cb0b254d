//! Maximum mean discrepancy between two batches of hidden representations.
//!
//! Two estimators: the linear mean-embedding distance `‖μ₁ − μ₂‖²` and the
//! biased (diagonal-inclusive) RBF V-statistic averaged over several
//! bandwidths. Both are exactly symmetric in their arguments: cross-kernel
//! sums are accumulated in sorted order so swapping the batches cannot change
//! a single bit of the result.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MmdError {
    #[error("batch widths differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("bandwidth {0} is not positive")]
    NonpositiveBandwidth(f64),
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdKind {
    Linear,
    Rbf,
}

/// A concrete estimator with its bandwidths fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Linear,
    Rbf(Vec<f64>),
}

impl Estimator {
    /// Linear, or RBF with the five-bandwidth ladder around the pooled median
    /// heuristic.
    pub fn for_batches(kind: MmdKind, z1: ArrayView2<f64>, z2: ArrayView2<f64>) -> Self {
        match kind {
            MmdKind::Linear => Estimator::Linear,
            MmdKind::Rbf => Estimator::Rbf(bandwidth_ladder(median_heuristic(z1, z2)).to_vec()),
        }
    }
}

fn check(z1: ArrayView2<f64>, z2: ArrayView2<f64>) -> Result<(), MmdError> {
    if z1.nrows() == 0 || z2.nrows() == 0 {
        return Err(MmdError::EmptyBatch);
    }
    if z1.ncols() != z2.ncols() {
        return Err(MmdError::DimMismatch(z1.ncols(), z2.ncols()));
    }
    Ok(())
}

fn check_bandwidths(bandwidths: &[f64]) -> Result<(), MmdError> {
    match bandwidths.iter().find(|&&g| !(g > 0.0 && g.is_finite())) {
        Some(&g) => Err(MmdError::NonpositiveBandwidth(g)),
        None if bandwidths.is_empty() => Err(MmdError::NonpositiveBandwidth(0.0)),
        None => Ok(()),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row slices of a standard-layout batch.
fn rows_of<'a>(z: ArrayView2<'a, f64>) -> Vec<&'a [f64]> {
    let (n, d) = z.dim();
    let flat = z.to_slice().expect("standard layout");
    (0..n).map(|i| &flat[i * d..(i + 1) * d]).collect()
}

fn standard(z: ArrayView2<f64>) -> Array2<f64> {
    z.as_standard_layout().into_owned()
}

/// `n₁ × n₂` squared distances, row-major.
fn pair_sq(a: &[&[f64]], b: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(sq_dist(x, y));
        }
    }
    out
}

fn column_means(z: ArrayView2<f64>) -> Vec<f64> {
    let n = z.nrows() as f64;
    (0..z.ncols()).map(|j| z.column(j).sum() / n).collect()
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

pub fn mmd_linear(z1: ArrayView2<f64>, z2: ArrayView2<f64>) -> Result<f64, MmdError> {
    check(z1, z2)?;
    let (m1, m2) = (column_means(z1), column_means(z2));
    Ok(m1.iter().zip(&m2).map(|(a, b)| (a - b) * (a - b)).sum())
}

fn kernel_sorted_sum(d: &[f64], gamma: f64) -> f64 {
    let inv = 1.0 / (2.0 * gamma * gamma);
    sorted_sum(d.iter().map(|&v| (-v * inv).exp()).collect())
}

pub fn mmd_rbf(
    z1: ArrayView2<f64>,
    z2: ArrayView2<f64>,
    bandwidths: &[f64],
) -> Result<f64, MmdError> {
    check(z1, z2)?;
    check_bandwidths(bandwidths)?;
    let (s1, s2) = (standard(z1), standard(z2));
    let (r1, r2) = (rows_of(s1.view()), rows_of(s2.view()));
    let (d11, d22, d12) = (pair_sq(&r1, &r1), pair_sq(&r2, &r2), pair_sq(&r1, &r2));
    let (n1, n2) = (r1.len() as f64, r2.len() as f64);
    let mut total = 0.0;
    for &g in bandwidths {
        let k11 = kernel_sorted_sum(&d11, g) / (n1 * n1);
        let k22 = kernel_sorted_sum(&d22, g) / (n2 * n2);
        let k12 = kernel_sorted_sum(&d12, g) / (n1 * n2);
        total += (k11 + k22) - 2.0 * k12;
    }
    Ok(total / bandwidths.len() as f64)
}

pub fn mmd(z1: ArrayView2<f64>, z2: ArrayView2<f64>, est: &Estimator) -> Result<f64, MmdError> {
    match est {
        Estimator::Linear => mmd_linear(z1, z2),
        Estimator::Rbf(bw) => mmd_rbf(z1, z2, bw),
    }
}

/// `√(median pairwise squared distance / 2)` over the pooled rows, or 1.0
/// when the median is zero or fewer than two rows exist.
pub fn median_heuristic(z1: ArrayView2<f64>, z2: ArrayView2<f64>) -> f64 {
    let (s1, s2) = (standard(z1), standard(z2));
    let rows: Vec<&[f64]> = rows_of(s1.view())
        .into_iter()
        .chain(rows_of(s2.view()))
        .collect();
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for k in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[k]));
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    if median > 0.0 && median.is_finite() {
        (median / 2.0).sqrt()
    } else {
        1.0
    }
}

pub fn bandwidth_ladder(gamma: f64) -> [f64; 5] {
    [gamma / 4.0, gamma / 2.0, gamma, 2.0 * gamma, 4.0 * gamma]
}

fn linear_grad_side(own: ArrayView2<f64>, other: ArrayView2<f64>) -> Array2<f64> {
    let (m_own, m_other) = (column_means(own), column_means(other));
    let n = own.nrows() as f64;
    let row: Vec<f64> = m_own
        .iter()
        .zip(&m_other)
        .map(|(a, b)| 2.0 * (a - b) / n)
        .collect();
    Array2::from_shape_fn(own.raw_dim(), |(_, j)| row[j])
}

fn rbf_grad_side(own: ArrayView2<f64>, other: ArrayView2<f64>, bandwidths: &[f64]) -> Array2<f64> {
    let (so, sx) = (standard(own), standard(other));
    let (ro, rx) = (rows_of(so.view()), rows_of(sx.view()));
    let (n_own, n_other) = (ro.len(), rx.len());
    let (d_own, d_cross) = (pair_sq(&ro, &ro), pair_sq(&ro, &rx));
    // coefficients c such that grad_i = Σ_b c_ib (a_i − b)
    let scale = 1.0 / bandwidths.len() as f64;
    let mut c_own = vec![0.0; d_own.len()];
    let mut c_cross = vec![0.0; d_cross.len()];
    for &g in bandwidths {
        let inv = 1.0 / (2.0 * g * g);
        let g2 = g * g;
        let w_own = -scale * 2.0 / (n_own * n_own) as f64 / g2;
        let w_cross = scale * 2.0 / (n_own * n_other) as f64 / g2;
        for (c, &d) in c_own.iter_mut().zip(&d_own) {
            *c += w_own * (-d * inv).exp();
        }
        for (c, &d) in c_cross.iter_mut().zip(&d_cross) {
            *c += w_cross * (-d * inv).exp();
        }
    }
    let dim = own.ncols();
    let mut grad = Array2::zeros((n_own, dim));
    for (i, a) in ro.iter().enumerate() {
        let mut gi = vec![0.0; dim];
        for (b, &c) in ro.iter().zip(&c_own[i * n_own..(i + 1) * n_own]) {
            for j in 0..dim {
                gi[j] += c * (a[j] - b[j]);
            }
        }
        for (b, &c) in rx.iter().zip(&c_cross[i * n_other..(i + 1) * n_other]) {
            for j in 0..dim {
                gi[j] += c * (a[j] - b[j]);
            }
        }
        grad.row_mut(i).assign(&ndarray::ArrayView1::from(&gi));
    }
    grad
}

/// Gradients of the chosen estimator with respect to every entry of both
/// batches; bandwidths are held constant.
pub fn mmd_backward(
    z1: ArrayView2<f64>,
    z2: ArrayView2<f64>,
    est: &Estimator,
) -> Result<(Array2<f64>, Array2<f64>), MmdError> {
    check(z1, z2)?;
    match est {
        Estimator::Linear => Ok((linear_grad_side(z1, z2), linear_grad_side(z2, z1))),
        Estimator::Rbf(bw) => {
            check_bandwidths(bw)?;
            Ok((rbf_grad_side(z1, z2, bw), rbf_grad_side(z2, z1, bw)))
        }
    }
}
