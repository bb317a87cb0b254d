use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{PatientSeries, WindowSample};

/// Per-feature standardization fitted on a party's own imputed training rows.
/// Differential features share the original feature's scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(n_features: usize) -> Self {
        Self {
            mean: vec![0.0; n_features],
            std: vec![1.0; n_features],
        }
    }

    /// Fits on complete (imputed) series; features with near-zero spread keep
    /// unit scale.
    pub fn fit<'a>(series: impl IntoIterator<Item = &'a PatientSeries>, n_features: usize) -> Self {
        let mut sum = vec![0.0; n_features];
        let mut sq = vec![0.0; n_features];
        let mut n = 0usize;
        for p in series {
            for row in p.cells().chunks_exact(n_features) {
                for (j, c) in row.iter().enumerate() {
                    let v = c.expect("scaler fitted on imputed series");
                    sum[j] += v;
                    sq[j] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::identity(n_features);
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / nf - m * m).max(0.0);
                if var.sqrt() < 1e-8 {
                    1.0
                } else {
                    var.sqrt()
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Writes the `T × 2F` model input (`[(x − μ)/σ, Δx/σ]` per hour) into `out`.
    pub fn encode_into(&self, x: ArrayView2<f64>, dx: ArrayView2<f64>, out: &mut [f64]) {
        let f = self.n_features();
        debug_assert_eq!(out.len(), x.nrows() * 2 * f);
        for t in 0..x.nrows() {
            let row = &mut out[t * 2 * f..(t + 1) * 2 * f];
            for j in 0..f {
                row[j] = (x[[t, j]] - self.mean[j]) / self.std[j];
                row[f + j] = dx[[t, j]] / self.std[j];
            }
        }
    }
}

/// Windows encoded for the network: contiguous `n × T × 2F` inputs plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub steps: usize,
    pub input_dim: usize,
    pub inputs: Vec<f64>,
    pub sepsis: Vec<u8>,
    pub sofa: Vec<[u8; 4]>,
}

impl EncodedSet {
    pub fn encode(windows: &[WindowSample], scaler: &FeatureScaler) -> Self {
        let steps = windows.first().map_or(super::WINDOW, |w| w.x.nrows());
        let input_dim = 2 * scaler.n_features();
        let per = steps * input_dim;
        let mut inputs = vec![0.0; windows.len() * per];
        for (w, out) in windows.iter().zip(inputs.chunks_exact_mut(per)) {
            scaler.encode_into(w.x.view(), w.dx.view(), out);
        }
        Self {
            steps,
            input_dim,
            inputs,
            sepsis: windows.iter().map(|w| w.sepsis_label).collect(),
            sofa: windows.iter().map(|w| w.sofa_labels).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sepsis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sepsis.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.sepsis.iter().filter(|&&l| l == 1).count()
    }

    /// Sample `i` as a `T × 2F` matrix.
    pub fn sample(&self, i: usize) -> ArrayView2<'_, f64> {
        let per = self.steps * self.input_dim;
        ArrayView2::from_shape(
            (self.steps, self.input_dim),
            &self.inputs[i * per..(i + 1) * per],
        )
        .expect("contiguous sample")
    }

    /// Per-time-step batch matrices (`n × 2F` each) for the given rows.
    pub fn gather(&self, rows: &[usize]) -> Vec<Array2<f64>> {
        let mut steps = vec![Array2::zeros((rows.len(), self.input_dim)); self.steps];
        for (b, &i) in rows.iter().enumerate() {
            let s = self.sample(i);
            for (t, m) in steps.iter_mut().enumerate() {
                m.row_mut(b).assign(&s.row(t));
            }
        }
        steps
    }

    /// Flattened `T·2F` feature rows for the flat baselines.
    pub fn flat_row(&self, i: usize) -> &[f64] {
        let per = self.steps * self.input_dim;
        &self.inputs[i * per..(i + 1) * per]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn encoding_layout() {
        let scaler = FeatureScaler {
            mean: vec![1.0, 10.0],
            std: vec![2.0, 5.0],
        };
        let x = array![[3.0, 10.0], [5.0, 20.0]];
        let dx = array![[0.0, 0.0], [2.0, 10.0]];
        let mut out = vec![0.0; 8];
        scaler.encode_into(x.view(), dx.view(), &mut out);
        assert_eq!(out, vec![1.0, 0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn constant_feature_keeps_unit_scale() {
        let p = PatientSeries::new(
            "p",
            2,
            vec![Some(1.0), Some(4.0), Some(1.0), Some(6.0)],
            None,
        )
        .unwrap();
        let s = FeatureScaler::fit([&p], 2);
        assert_eq!(s.mean, vec![1.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
    }
}
