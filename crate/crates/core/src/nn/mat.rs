//! Row-major dense matrices and the handful of kernels the model needs.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    /// Column means.
    pub fn mean_rows(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            axpy(1.0, self.row(r), &mut out);
        }
        let inv = 1.0 / self.rows as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        out
    }
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * x;
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x W + b` for `x` of `rows x n_in` stored flat, `W` of `n_in x n_out`.
pub fn linear(x: &[f64], rows: usize, w: &[f64], b: &[f64]) -> Mat {
    let n_out = b.len();
    let n_in = w.len() / n_out;
    debug_assert_eq!(x.len(), rows * n_in);
    let mut y = Mat::zeros(rows, n_out);
    for r in 0..rows {
        let yr = y.row_mut(r);
        yr.copy_from_slice(b);
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &w[i * n_out..(i + 1) * n_out], yr);
            }
        }
    }
    y
}

/// Backward of [`linear`]: accumulates `dW += x^T dy` and `db += sum dy`
/// when given, and returns `dx = dy W^T` when `need_dx`.
pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &Mat,
    grads: Option<(&mut [f64], &mut [f64])>,
    need_dx: bool,
) -> Option<Mat> {
    let n_out = dy.cols;
    let n_in = w.len() / n_out;
    if let Some((dw, db)) = grads {
        for r in 0..dy.rows {
            let g = dy.row(r);
            axpy(1.0, g, db);
            for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, g, &mut dw[i * n_out..(i + 1) * n_out]);
                }
            }
        }
    }
    need_dx.then(|| {
        let mut dx = Mat::zeros(dy.rows, n_in);
        for r in 0..dy.rows {
            let g = dy.row(r);
            for (i, d) in dx.row_mut(r).iter_mut().enumerate() {
                *d = dot(&w[i * n_out..(i + 1) * n_out], g);
            }
        }
        dx
    })
}

pub const LN_EPS: f64 = 1e-5;

/// Per-row layer normalization. Returns `(y, xhat, rstd)`.
pub fn layer_norm(x: &Mat, gamma: &[f64], beta: &[f64]) -> (Mat, Mat, Vec<f64>) {
    let d = x.cols as f64;
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut rstd = Vec::with_capacity(x.rows);
    for r in 0..x.rows {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(s);
        let (xh, yr) = (xhat.row_mut(r), y.row_mut(r));
        for j in 0..row.len() {
            xh[j] = (row[j] - mean) * s;
            yr[j] = xh[j] * gamma[j] + beta[j];
        }
    }
    (y, xhat, rstd)
}

/// Backward of [`layer_norm`]:
/// `dx = rstd / D (D dxhat - sum dxhat - xhat sum(dxhat xhat))`, `dxhat = dy gamma`.
pub fn layer_norm_backward(
    dy: &Mat,
    xhat: &Mat,
    rstd: &[f64],
    gamma: &[f64],
    grads: Option<(&mut [f64], &mut [f64])>,
) -> Mat {
    let d = dy.cols as f64;
    if let Some((dg, db)) = grads {
        for r in 0..dy.rows {
            for (j, (g, h)) in dy.row(r).iter().zip(xhat.row(r)).enumerate() {
                dg[j] += g * h;
                db[j] += g;
            }
        }
    }
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    let mut dxhat = vec![0.0; dy.cols];
    for r in 0..dy.rows {
        for ((o, g), gm) in dxhat.iter_mut().zip(dy.row(r)).zip(gamma) {
            *o = g * gm;
        }
        let sum: f64 = dxhat.iter().sum();
        let sum_x: f64 = dot(&dxhat, xhat.row(r));
        let s = rstd[r] / d;
        for ((o, g), h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r)) {
            *o = s * (d * g - sum - h * sum_x);
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

/// `0.5 u (1 + tanh(sqrt(2/pi) (u + 0.044715 u^3)))`.
#[inline]
pub fn gelu(u: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * u * (1.0 + (k * (u + GELU_C * u * u * u)).tanh())
}

#[inline]
pub fn gelu_grad(u: f64) -> f64 {
    let k = (2.0 / std::f64::consts::PI).sqrt();
    let t = (k * (u + GELU_C * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * k * (1.0 + 3.0 * GELU_C * u * u)
}

/// In-place stable softmax.
pub fn softmax(xs: &mut [f64]) {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    xs.iter_mut().for_each(|x| *x /= sum);
}
