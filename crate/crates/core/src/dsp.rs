//! Windowing, FFT plans and index helpers shared by the processing stages.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Taper applied before a transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    /// `w[n] = 0.5 (1 - cos(2 pi n / N))` over the transform input length N.
    #[default]
    Hann,
    /// No taper.
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Hann => hann(len),
            Window::Rectangular => vec![1.0; len],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "hann" => Some(Window::Hann),
            "rectangular" | "none" => Some(Window::Rectangular),
            _ => None,
        }
    }
}

/// Periodic Hann window `0.5 (1 - cos(2 pi n / len))`, `n = 0..len`.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()))
        .collect()
}

/// Forward/inverse plan pair for one transform length.
#[derive(Clone)]
pub struct FftPair {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward DFT, `X[k] = sum x[n] exp(-j 2 pi k n / N)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Inverse DFT including the `1/N` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.len as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

impl std::fmt::Debug for FftPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPair").field("len", &self.len).finish()
    }
}

/// Position of natural-order bin `k` after an fftshift of length `n`.
pub fn shift_index(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}

/// Natural-order bin of fftshifted position `s`.
pub fn unshift_index(s: usize, n: usize) -> usize {
    (s + n - n / 2) % n
}

/// Signed frequency index of natural-order bin `k`: `k` for `k < ceil(n/2)`,
/// `k - n` otherwise.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Shortest signed distance from `b` to `a` on a circle of length `n`.
pub fn circular_diff(a: usize, b: usize, n: usize) -> i64 {
    let d = (a as i64 - b as i64).rem_euclid(n as i64);
    if d > n as i64 / 2 {
        d - n as i64
    } else {
        d
    }
}
