//! FFT helpers on top of `rustfft`.

use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// In-place 2D transform. The inverse is normalized by `1/(M·N)`.
pub fn fft2(data: &mut Array2<Complex64>, inverse: bool) {
    let (m, n) = data.dim();
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(n), planner.plan_fft_inverse(m))
    } else {
        (planner.plan_fft_forward(n), planner.plan_fft_forward(m))
    };
    for mut row in data.axis_iter_mut(Axis(0)) {
        match row.as_slice_mut() {
            Some(s) => row_fft.process(s),
            None => {
                let mut buf = row.to_vec();
                row_fft.process(&mut buf);
                row.iter_mut().zip(buf).for_each(|(d, v)| *d = v);
            }
        }
    }
    let mut buf = vec![Complex64::default(); m];
    for mut col in data.axis_iter_mut(Axis(1)) {
        buf.iter_mut().zip(col.iter()).for_each(|(b, &v)| *b = v);
        col_fft.process(&mut buf);
        col.iter_mut().zip(&buf).for_each(|(d, &v)| *d = v);
    }
    if inverse {
        let k = 1.0 / (m * n) as f64;
        data.mapv_inplace(|v| v * k);
    }
}

pub fn fft2_real(img: &Array2<f64>) -> Array2<Complex64> {
    let mut c = img.mapv(|v| Complex64::new(v, 0.0));
    fft2(&mut c, false);
    c
}

/// Moves the zero-frequency (or zero-lag) cell to `(M/2, N/2)`.
pub fn fftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (m, n) = a.dim();
    Array2::from_shape_fn((m, n), |(r, c)| a[[(r + m - m / 2) % m, (c + n - n / 2) % n]].clone())
}

/// Inverse of [`fftshift`].
pub fn ifftshift<T: Clone>(a: &Array2<T>) -> Array2<T> {
    let (m, n) = a.dim();
    Array2::from_shape_fn((m, n), |(r, c)| a[[(r + m / 2) % m, (c + n / 2) % n]].clone())
}

/// Linear convolution of rows with a fixed kernel through zero-padded FFTs.
pub struct RowConvolver {
    len: usize,
    half: usize,
    size: usize,
    kernel_hat: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl RowConvolver {
    /// `kernel[k]` is the tap at offset `k - half`, where `kernel.len() = 2·half + 1`.
    /// Rows of length `len` are convolved and the centred `len` outputs kept.
    pub fn new(kernel: &[f64], len: usize) -> Self {
        assert!(kernel.len() % 2 == 1, "kernel length must be odd");
        let half = kernel.len() / 2;
        let size = (len + kernel.len() - 1).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        let mut kernel_hat = vec![Complex64::default(); size];
        for (k, &v) in kernel.iter().enumerate() {
            kernel_hat[k] = Complex64::new(v, 0.0);
        }
        fwd.process(&mut kernel_hat);
        RowConvolver {
            len,
            half,
            size,
            kernel_hat,
            fwd,
            inv,
        }
    }

    /// `out[j] = Σ_m row[m]·kernel(j - m)`.
    pub fn apply(&self, row: &[f64], out: &mut [f64]) {
        debug_assert_eq!(row.len(), self.len);
        let mut buf = vec![Complex64::default(); self.size];
        for (b, &v) in buf.iter_mut().zip(row) {
            *b = Complex64::new(v, 0.0);
        }
        self.fwd.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b *= k;
        }
        self.inv.process(&mut buf);
        let norm = 1.0 / self.size as f64;
        for (j, o) in out.iter_mut().enumerate().take(self.len) {
            *o = buf[j + self.half].re * norm;
        }
    }
}
