//! Affine layer `y = x Wᵀ + b` over row batches; `W` is `out × in`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{shape_err, NnError};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LinearGrads {
    pub fn zeros(out: usize, input: usize) -> Self {
        Self {
            w: Array2::zeros((out, input)),
            b: Array1::zeros(out),
        }
    }
}

pub fn linear_forward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> Result<Array2<f64>, NnError> {
    if x.ncols() != w.ncols() || b.len() != w.nrows() {
        return Err(shape_err(format!(
            "linear x {:?}, W {:?}, b {}",
            x.shape(),
            w.shape(),
            b.len()
        )));
    }
    let mut y = Array2::zeros((x.nrows(), w.nrows()));
    y.assign(&b.broadcast((x.nrows(), w.nrows())).expect("bias broadcast"));
    general_mat_mul(1.0, &x, &w.t(), 1.0, &mut y);
    Ok(y)
}

/// Accumulates `dW += dyᵀ x`, `db += Σ_rows dy`; returns `dx = dy W`.
pub fn linear_backward(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    dy: ArrayView2<f64>,
    grads: &mut LinearGrads,
) -> Result<Array2<f64>, NnError> {
    if dy.nrows() != x.nrows() || dy.ncols() != w.nrows() || grads.w.dim() != w.dim() {
        return Err(shape_err(format!(
            "linear backward x {:?}, W {:?}, dy {:?}",
            x.shape(),
            w.shape(),
            dy.shape()
        )));
    }
    general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut grads.w);
    grads.b += &dy.sum_axis(Axis(0));
    Ok(dy.dot(&w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradient;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights() {
        let x = array![[1.0, -2.0, 3.0]];
        let y = linear_forward(x.view(), Array2::eye(3).view(), Array1::zeros(3).view()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn bias_grad_sums_upstream() {
        let x = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let w = array![[0.1, 0.2]];
        let dy = array![[1.0], [2.0], [-0.5]];
        let mut g = LinearGrads::zeros(1, 2);
        linear_backward(x.view(), w.view(), dy.view(), &mut g).unwrap();
        assert_eq!(g.b, array![2.5]);
    }

    #[test]
    fn shape_mismatch() {
        let r = linear_forward(
            Array2::zeros((1, 2)).view(),
            Array2::zeros((3, 4)).view(),
            Array1::zeros(3).view(),
        );
        assert!(matches!(r, Err(NnError::ShapeMismatch(_))));
    }

    #[test]
    fn finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, i, o) = (3, 4, 2);
        let mut theta: Vec<f64> = (0..n * i + o * i + o)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let probe: Vec<f64> = (0..n * o).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe_m = Array2::from_shape_vec((n, o), probe).unwrap();
        let split = |th: &[f64]| {
            (
                Array2::from_shape_vec((n, i), th[..n * i].to_vec()).unwrap(),
                Array2::from_shape_vec((o, i), th[n * i..n * i + o * i].to_vec()).unwrap(),
                Array1::from(th[n * i + o * i..].to_vec()),
            )
        };
        let f = |th: &[f64]| {
            let (x, w, b) = split(th);
            (linear_forward(x.view(), w.view(), b.view()).unwrap() * &probe_m).sum()
        };
        let (x, w, _) = split(&theta);
        let mut g = LinearGrads::zeros(o, i);
        let dx = linear_backward(x.view(), w.view(), probe_m.view(), &mut g).unwrap();
        let analytic: Vec<f64> = dx
            .iter()
            .chain(g.w.iter())
            .chain(g.b.iter())
            .copied()
            .collect();
        let worst = check_gradient(f, &mut theta, &analytic, 1e-6);
        assert!(worst < 1e-8, "{worst}");
    }
}
