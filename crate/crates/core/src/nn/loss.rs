use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::NnError;

pub fn softmax(logits: ArrayView1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    e / z
}

/// `−log softmax(logits)[label]` via max-subtraction, and its gradient
/// `softmax − onehot(label)`.
pub fn softmax_cross_entropy(
    logits: ArrayView1<f64>,
    label: usize,
) -> Result<(f64, Array1<f64>), NnError> {
    let k = logits.len();
    if label >= k {
        return Err(NnError::LabelOutOfRange { label, classes: k });
    }
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = logits.mapv(|v| (v - max).exp());
    let z = e.sum();
    let loss = z.ln() - (logits[label] - max);
    let mut grad = e / z;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over rows and its gradient (already divided by `n`).
pub fn softmax_cross_entropy_batch(
    logits: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), NnError> {
    let n = logits.nrows();
    if labels.len() != n {
        return Err(NnError::LengthMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut total = 0.0;
    let scale = 1.0 / n as f64;
    for (i, &label) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(i), label)?;
        total += l;
        grad.row_mut(i).assign(&(g * scale));
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn uniform_logits() {
        for k in 2..7 {
            let (l, _) = softmax_cross_entropy(Array1::from_elem(k, 0.3).view(), 1).unwrap();
            assert!((l - (k as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn stable_for_large_logits() {
        let (l, g) = softmax_cross_entropy(array![1000.0, 0.0].view(), 0).unwrap();
        assert!(l.abs() < 1e-300 && l >= 0.0);
        assert!(g.iter().all(|v| v.is_finite()));
        let (l, _) = softmax_cross_entropy(array![1000.0, 0.0].view(), 1).unwrap();
        assert_eq!(l, 1000.0);
    }

    #[test]
    fn label_out_of_range() {
        assert_eq!(
            softmax_cross_entropy(array![0.0, 1.0].view(), 2).unwrap_err(),
            NnError::LabelOutOfRange {
                label: 2,
                classes: 2
            }
        );
    }

    /// Reference values from 50-digit arithmetic (mpmath).
    #[test]
    #[allow(clippy::excessive_precision)]
    fn matches_high_precision_reference() {
        let logits = array![0.37, -1.2, 2.05, 0.0, -0.61];
        let (l, g) = softmax_cross_entropy(logits.view(), 2).unwrap();
        assert!((l - 0.353_351_343_334_604_261_5).abs() < 1e-14);
        let probs = [
            0.130_896_107_449_453_918,
            0.027_232_304_544_145_786,
            0.702_330_390_922_041_075,
            0.090_414_435_162_133_805,
            0.049_126_761_922_225_415,
        ];
        for (i, p) in probs.iter().enumerate() {
            let expect = if i == 2 { p - 1.0 } else { *p };
            assert!((g[i] - expect).abs() < 1e-15);
        }
    }
}
