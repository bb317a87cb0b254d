//! GRU cell, sequence unroll and backpropagation through time.
//!
//! ```text
//! u = σ(W_u x + U_u h + b_u)
//! r = σ(W_r x + U_r h + b_r)
//! c = tanh(W_c x + U_c (r ⊙ h) + b_c)
//! h' = (1 − u) ⊙ h + u ⊙ c
//! ```
//!
//! Gate blocks are stacked `[u; r; c]` along the first axis of the input
//! weight (`3H × in`), hidden weight (`3H × H`) and bias (`3H`).

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::{shape_err, sigmoid, NnError};

#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w_input: ArrayView2<'a, f64>,
    pub w_hidden: ArrayView2<'a, f64>,
    pub bias: ArrayView1<'a, f64>,
}

impl GruWeights<'_> {
    pub fn hidden(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_input.ncols()
    }

    fn validate(&self) -> Result<(), NnError> {
        let h = self.hidden();
        if self.w_hidden.nrows() != 3 * h
            || self.w_input.nrows() != 3 * h
            || self.bias.len() != 3 * h
        {
            return Err(shape_err(format!(
                "GRU weights {:?}/{:?}/{} inconsistent with hidden {h}",
                self.w_input.shape(),
                self.w_hidden.shape(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruGrads {
    pub w_input: Array2<f64>,
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
}

impl GruGrads {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w_input: Array2::zeros((3 * hidden, input)),
            w_hidden: Array2::zeros((3 * hidden, hidden)),
            bias: Array1::zeros(3 * hidden),
        }
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruStep {
    pub h_prev: Array2<f64>,
    pub u: Array2<f64>,
    pub r: Array2<f64>,
    pub c: Array2<f64>,
    pub rh: Array2<f64>,
    pub h: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    pub steps: Vec<GruStep>,
}

impl GruCache {
    pub fn last_hidden(&self) -> &Array2<f64> {
        &self.steps.last().expect("non-empty sequence").h
    }

    pub fn hidden(&self, t: usize) -> &Array2<f64> {
        &self.steps[t].h
    }
}

/// One step for a batch: `x` is `n × in`, `h_prev` is `n × H`.
pub fn gru_cell_forward(
    x: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    w: &GruWeights<'_>,
) -> Result<GruStep, NnError> {
    w.validate()?;
    let h = w.hidden();
    let n = x.nrows();
    if x.ncols() != w.input() || h_prev.nrows() != n || h_prev.ncols() != h {
        return Err(shape_err(format!(
            "GRU step input {:?}, state {:?}, weights in={} H={h}",
            x.shape(),
            h_prev.shape(),
            w.input()
        )));
    }
    let mut gx = Array2::zeros((n, 3 * h));
    gx.assign(&w.bias.broadcast((n, 3 * h)).expect("bias broadcast"));
    general_mat_mul(1.0, &x, &w.w_input.t(), 1.0, &mut gx);
    let mut gh = Array2::zeros((n, 2 * h));
    general_mat_mul(
        1.0,
        &h_prev,
        &w.w_hidden.slice(s![..2 * h, ..]).t(),
        0.0,
        &mut gh,
    );

    let mut u = Array2::zeros((n, h));
    Zip::from(&mut u)
        .and(gx.slice(s![.., ..h]))
        .and(gh.slice(s![.., ..h]))
        .for_each(|o, &a, &b| *o = sigmoid(a + b));
    let mut r = Array2::zeros((n, h));
    Zip::from(&mut r)
        .and(gx.slice(s![.., h..2 * h]))
        .and(gh.slice(s![.., h..]))
        .for_each(|o, &a, &b| *o = sigmoid(a + b));
    let rh = &r * &h_prev;
    let mut c = gx.slice(s![.., 2 * h..]).to_owned();
    general_mat_mul(
        1.0,
        &rh,
        &w.w_hidden.slice(s![2 * h.., ..]).t(),
        1.0,
        &mut c,
    );
    c.mapv_inplace(f64::tanh);
    let mut hn = Array2::zeros((n, h));
    Zip::from(&mut hn)
        .and(&u)
        .and(&h_prev)
        .and(&c)
        .for_each(|o, &u, &hp, &c| *o = (1.0 - u) * hp + u * c);
    Ok(GruStep {
        h_prev: h_prev.to_owned(),
        u,
        r,
        c,
        rh,
        h: hn,
    })
}

/// Unrolls over `xs` (one `n × in` matrix per step) from `h0` (zeros if `None`).
pub fn gru_forward_seq(
    xs: &[Array2<f64>],
    h0: Option<ArrayView2<f64>>,
    w: &GruWeights<'_>,
) -> Result<GruCache, NnError> {
    let first = xs.first().ok_or_else(|| shape_err("empty sequence"))?;
    let mut h = match h0 {
        Some(h0) => h0.to_owned(),
        None => Array2::zeros((first.nrows(), w.hidden())),
    };
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let step = gru_cell_forward(x.view(), h.view(), w)?;
        h = step.h.clone();
        steps.push(step);
    }
    Ok(GruCache { steps })
}

/// Reverse-mode pass. `dh[t]` is the upstream gradient on `h_t` (`None` for
/// zero). Parameter gradients accumulate into `grads`; input gradients are
/// returned when `want_dx`.
pub fn gru_backward(
    cache: &GruCache,
    xs: &[Array2<f64>],
    dh: &[Option<Array2<f64>>],
    w: &GruWeights<'_>,
    grads: &mut GruGrads,
    want_dx: bool,
) -> Result<Option<Vec<Array2<f64>>>, NnError> {
    w.validate()?;
    let t_len = cache.steps.len();
    if xs.len() != t_len || dh.len() != t_len {
        return Err(shape_err(format!(
            "backward over {t_len} steps with {} inputs and {} upstream grads",
            xs.len(),
            dh.len()
        )));
    }
    let h = w.hidden();
    if grads.w_input.dim() != w.w_input.dim() || grads.w_hidden.dim() != w.w_hidden.dim() {
        return Err(shape_err("gradient buffers do not match weights"));
    }
    let n = cache.steps[0].h.nrows();
    let mut carry = Array2::<f64>::zeros((n, h));
    let mut dxs = want_dx.then(|| vec![Array2::zeros((0, 0)); t_len]);
    let wh_ur = w.w_hidden.slice(s![..2 * h, ..]);
    let wh_c = w.w_hidden.slice(s![2 * h.., ..]);
    let mut da = Array2::<f64>::zeros((n, 3 * h));

    for t in (0..t_len).rev() {
        let st = &cache.steps[t];
        let mut dht = carry;
        if let Some(up) = &dh[t] {
            if up.dim() != (n, h) {
                return Err(shape_err(format!(
                    "upstream grad {:?} at step {t}",
                    up.shape()
                )));
            }
            dht += up;
        }
        // gate pre-activation grads into da = [dau | dar | dac]
        let mut dh_prev = Array2::zeros((n, h));
        {
            let (mut dau, mut rest) = da.view_mut().split_at(Axis(1), h);
            let (_, mut dac) = rest.view_mut().split_at(Axis(1), h);
            Zip::from(&mut dac)
                .and(&dht)
                .and(&st.u)
                .and(&st.c)
                .for_each(|o, &d, &u, &c| *o = d * u * (1.0 - c * c));
            Zip::from(&mut dau)
                .and(&dht)
                .and(&st.u)
                .and(&st.c)
                .and(&st.h_prev)
                .for_each(|o, &d, &u, &c, &hp| *o = d * (c - hp) * u * (1.0 - u));
            Zip::from(&mut dh_prev)
                .and(&dht)
                .and(&st.u)
                .for_each(|o, &d, &u| *o = d * (1.0 - u));
        }
        let dac = da.slice(s![.., 2 * h..]).to_owned();
        let mut d_rh = Array2::zeros((n, h));
        general_mat_mul(1.0, &dac, &wh_c, 0.0, &mut d_rh);
        general_mat_mul(
            1.0,
            &dac.t(),
            &st.rh,
            1.0,
            &mut grads.w_hidden.slice_mut(s![2 * h.., ..]),
        );
        {
            let mut dar = da.slice_mut(s![.., h..2 * h]);
            Zip::from(&mut dar)
                .and(&d_rh)
                .and(&st.h_prev)
                .and(&st.r)
                .for_each(|o, &g, &hp, &r| *o = g * hp * r * (1.0 - r));
        }
        Zip::from(&mut dh_prev)
            .and(&d_rh)
            .and(&st.r)
            .for_each(|o, &g, &r| *o += g * r);
        let da_ur = da.slice(s![.., ..2 * h]);
        general_mat_mul(
            1.0,
            &da_ur.t(),
            &st.h_prev,
            1.0,
            &mut grads.w_hidden.slice_mut(s![..2 * h, ..]),
        );
        general_mat_mul(1.0, &da_ur, &wh_ur, 1.0, &mut dh_prev);
        general_mat_mul(1.0, &da.t(), &xs[t], 1.0, &mut grads.w_input);
        grads.bias += &da.sum_axis(Axis(0));
        if let Some(dxs) = dxs.as_mut() {
            dxs[t] = da.dot(&w.w_input);
        }
        carry = dh_prev;
    }
    Ok(dxs)
}
