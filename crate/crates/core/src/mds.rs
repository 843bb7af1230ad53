//! Micro-Doppler spectrograms of cropped target cubes.
//!
//! Every `(range, angle)` cell of a [`BboxCube`] carries a slow-time series
//! of `M_c * K_frame` samples. Its STFT with window `w[n] = 0.5 (1 - cos(2 pi
//! n / L))`, hop `H = L - N_overlap` and DFT length `N_fft` is
//!
//! ```text
//! S[k, f] = sum_{n < L} x[f H + n] w[n] exp(-j 2 pi k n / N_fft)
//! ```
//!
//! Frames run while the window fits and are capped at `N_fft`, which gives a
//! square `N_fft x N_fft` spectrogram for the default parameters.

use std::fmt;

use ndarray::{s, Array2, Array3, Array4};
use num_complex::{Complex32, Complex64};

use crate::dsp::{FftPair, Window};
use crate::error::{Error, Result};
use crate::io::container::{TensorContainer, TensorData};
use crate::rva::BboxCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftParams {
    pub window_len: usize,
    pub overlap: usize,
    pub n_fft: usize,
    pub window: Window,
}

impl StftParams {
    /// Window length and DFT length both equal to `chirps`.
    pub fn for_chirps(chirps: usize, overlap: usize) -> Self {
        Self {
            window_len: chirps,
            overlap,
            n_fft: chirps,
            window: Window::Hann,
        }
    }

    pub fn hop(&self) -> Result<usize> {
        if self.overlap >= self.window_len {
            return Err(Error::invalid(format!(
                "hop must be positive: overlap {} >= window {}",
                self.overlap, self.window_len
            )));
        }
        Ok(self.window_len - self.overlap)
    }

    fn validate(&self) -> Result<usize> {
        if self.window_len == 0 || self.window_len > self.n_fft {
            return Err(Error::invalid(format!(
                "window length {} must be in 1..={}",
                self.window_len, self.n_fft
            )));
        }
        self.hop()
    }

    /// Frames produced for a series of `n_time` samples.
    pub fn n_frames(&self, n_time: usize) -> Result<usize> {
        let hop = self.validate()?;
        if n_time < self.window_len {
            return Err(Error::invalid(format!(
                "series of {n_time} samples is shorter than the {}-sample window",
                self.window_len
            )));
        }
        Ok(((n_time - self.window_len) / hop + 1).min(self.n_fft))
    }
}

/// STFT of one series, `[frequency, frame]`.
pub fn stft_cell(series: &[Complex64], params: &StftParams) -> Result<Array2<Complex64>> {
    let frames = params.n_frames(series.len())?;
    let hop = params.hop()?;
    let w = params.window.coefficients(params.window_len);
    let fft = FftPair::new(params.n_fft);
    let mut out = Array2::zeros((params.n_fft, frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); params.n_fft];
    for f in 0..frames {
        buf.fill(Complex64::new(0.0, 0.0));
        let seg = &series[f * hop..f * hop + params.window_len];
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&w) {
            *b = x * w;
        }
        fft.forward(&mut buf);
        out.column_mut(f).iter_mut().zip(&buf).for_each(|(o, b)| *o = *b);
    }
    Ok(out)
}

/// Complex spectrogram per cell, `[range, angle, frequency, frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MdsTensor {
    pub data: Array4<Complex64>,
    pub params: StftParams,
}

impl MdsTensor {
    pub fn to_container(&self) -> Result<TensorContainer> {
        let (a, b, c, d) = self.data.dim();
        let data = self
            .data
            .iter()
            .map(|z| Complex32::new(z.re as f32, z.im as f32))
            .collect();
        Ok(TensorContainer::new(
            vec![a, b, c, d],
            vec!["range", "angle", "frequency", "frame"],
            TensorData::C64(data),
        )?
        .with_attr("stft.window_len", self.params.window_len)
        .with_attr("stft.overlap", self.params.overlap)
        .with_attr("stft.n_fft", self.params.n_fft))
    }
}

/// Applies [`stft_cell`] to every `(range, angle)` cell.
pub fn build_mds(bbox: &BboxCube, params: &StftParams) -> Result<MdsTensor> {
    let (ns, na, nt) = bbox.dims();
    let frames = params.n_frames(nt)?;
    let mut data = Array4::zeros((ns, na, params.n_fft, frames));
    let mut series = vec![Complex64::new(0.0, 0.0); nt];
    for r in 0..ns {
        for a in 0..na {
            series
                .iter_mut()
                .zip(bbox.data.slice(s![r, a, ..]))
                .for_each(|(d, x)| *d = *x);
            let spec = stft_cell(&series, params).map_err(|e| Error::Cell {
                range: r,
                angle: a,
                source: Box::new(e),
            })?;
            data.slice_mut(s![r, a, .., ..]).assign(&spec);
        }
    }
    Ok(MdsTensor {
        data,
        params: *params,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormMode {
    /// `|S|` unchanged.
    Linear,
    /// `ln(1 + |S|)`.
    Log1p,
    /// Per-sample min-max scaling of `|S|` to `[0, 1]`.
    MinMax,
    /// `ln(1 + |S|)`, then per-sample min-max.
    #[default]
    Log1pMinMax,
}

impl NormMode {
    pub fn name(self) -> &'static str {
        match self {
            NormMode::Linear => "linear",
            NormMode::Log1p => "log1p",
            NormMode::MinMax => "minmax",
            NormMode::Log1pMinMax => "log1p-minmax",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            NormMode::Linear,
            NormMode::Log1p,
            NormMode::MinMax,
            NormMode::Log1pMinMax,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Real model input, `[bin, frequency, frame]`. Bin `i * N_res_theta + j`
/// holds cell `(range i, angle j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMds {
    pub data: Array3<f64>,
    pub n_res_s: usize,
    pub n_res_theta: usize,
    pub norm: NormMode,
}

impl ReducedMds {
    pub fn n_bins(&self) -> usize {
        self.data.dim().0
    }

    /// Flat row-major view, one token per bin.
    pub fn as_slice(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("reduced tensors are always in standard layout")
    }

    pub fn bin_of(&self, range: usize, angle: usize) -> usize {
        range * self.n_res_theta + angle
    }

    pub fn cell_of(&self, bin: usize) -> (usize, usize) {
        (bin / self.n_res_theta, bin % self.n_res_theta)
    }

    /// Sum of squares of each bin.
    pub fn token_energy(&self) -> Vec<f64> {
        self.data
            .outer_iter()
            .map(|b| b.iter().map(|x| x * x).sum())
            .collect()
    }

    pub fn to_container(&self) -> Result<TensorContainer> {
        let (a, b, c) = self.data.dim();
        Ok(TensorContainer::new(
            vec![a, b, c],
            vec!["bin", "frequency", "frame"],
            TensorData::F64(self.as_slice().to_vec()),
        )?
        .with_attr("n_res_s", self.n_res_s)
        .with_attr("n_res_theta", self.n_res_theta)
        .with_attr("norm", self.norm))
    }

    pub fn from_container(t: &TensorContainer) -> Result<Self> {
        let TensorData::F64(v) = &t.data else {
            return Err(Error::shape("reduced MDS must be f64"));
        };
        let [a, b, c] = t.shape[..] else {
            return Err(Error::shape("reduced MDS must be rank 3"));
        };
        let attr = |k: &str| -> Result<&str> {
            t.attr(k)
                .ok_or_else(|| Error::shape(format!("reduced MDS lacks attribute `{k}`")))
        };
        let n_res_s: usize = attr("n_res_s")?
            .parse()
            .map_err(|_| Error::shape("bad n_res_s"))?;
        let n_res_theta: usize = attr("n_res_theta")?
            .parse()
            .map_err(|_| Error::shape("bad n_res_theta"))?;
        let norm = NormMode::from_name(attr("norm")?).ok_or_else(|| Error::shape("bad norm"))?;
        if n_res_s.checked_mul(n_res_theta) != Some(a) {
            return Err(Error::shape(format!(
                "{a} bins do not match a {n_res_s}x{n_res_theta} crop"
            )));
        }
        Ok(Self {
            data: Array3::from_shape_vec((a, b, c), v.clone())
                .map_err(|e| Error::shape(e.to_string()))?,
            n_res_s,
            n_res_theta,
            norm,
        })
    }
}

/// Magnitude, cell flattening (range-major) and normalization.
pub fn reduce_dim(mds: &MdsTensor, norm: NormMode) -> Result<ReducedMds> {
    if mds.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("spectrogram".into()));
    }
    let (ns, na, nf, nt) = mds.data.dim();
    let mut mag: Vec<f64> = mds.data.iter().map(|z| z.norm()).collect();
    if matches!(norm, NormMode::Log1p | NormMode::Log1pMinMax) {
        mag.iter_mut().for_each(|x| *x = x.ln_1p());
    }
    if matches!(norm, NormMode::MinMax | NormMode::Log1pMinMax) {
        let lo = mag.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            mag.iter_mut().for_each(|x| *x = (*x - lo) / (hi - lo));
        } else {
            mag.fill(0.0);
        }
    }
    Ok(ReducedMds {
        data: Array3::from_shape_vec((ns * na, nf, nt), mag).expect("element count is preserved"),
        n_res_s: ns,
        n_res_theta: na,
        norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(k: f64, n: usize, m: usize) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * k * i as f64 / m as f64))
            .collect()
    }

    #[test]
    fn default_frame_bookkeeping() {
        let p = StftParams::for_chirps(128, 125);
        assert_eq!(p.hop().unwrap(), 3);
        assert_eq!(p.n_frames(512).unwrap(), 128);
        assert!(StftParams::for_chirps(128, 128).hop().is_err());
        assert!(p.n_frames(100).is_err());
    }

    #[test]
    fn zero_series_gives_zero_spectrogram() {
        let p = StftParams::for_chirps(16, 12);
        let s = stft_cell(&vec![Complex64::new(0.0, 0.0); 64], &p).unwrap();
        assert!(s.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn tone_peaks_at_its_bin() {
        let p = StftParams::for_chirps(32, 24);
        let s = stft_cell(&tone(5.0, 128, 32), &p).unwrap();
        for col in s.columns() {
            let k = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .unwrap()
                .0;
            assert_eq!(k, 5);
        }
    }

    #[test]
    fn bin_ordering_is_range_major() {
        let mut data = Array4::zeros((2, 3, 1, 1));
        for ((r, a, _, _), z) in data.indexed_iter_mut() {
            *z = Complex64::new((10 * r + a) as f64, 0.0);
        }
        let mds = MdsTensor {
            data,
            params: StftParams::for_chirps(1, 0),
        };
        let red = reduce_dim(&mds, NormMode::Linear).unwrap();
        let got: Vec<f64> = red.as_slice().to_vec();
        assert_eq!(got, vec![0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        assert_eq!(red.cell_of(4), (1, 1));
        assert_eq!(red.bin_of(1, 2), 5);
    }

    #[test]
    fn degenerate_minmax_is_zero() {
        let mds = MdsTensor {
            data: Array4::from_elem((2, 2, 3, 3), Complex64::new(0.6, 0.8)),
            params: StftParams::for_chirps(3, 0),
        };
        for norm in [NormMode::MinMax, NormMode::Log1pMinMax] {
            assert!(reduce_dim(&mds, norm).unwrap().as_slice().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut data = Array4::zeros((1, 1, 2, 2));
        data[[0, 0, 1, 1]] = Complex64::new(f64::NAN, 0.0);
        let mds = MdsTensor {
            data,
            params: StftParams::for_chirps(2, 0),
        };
        assert!(matches!(reduce_dim(&mds, NormMode::Linear), Err(Error::NonFinite(_))));
    }

    #[test]
    fn reduced_container_roundtrip_is_exact() {
        let mut data = Array4::zeros((2, 2, 4, 4));
        for (i, z) in data.iter_mut().enumerate() {
            *z = Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos());
        }
        let red = reduce_dim(
            &MdsTensor {
                data,
                params: StftParams::for_chirps(4, 1),
            },
            NormMode::Log1pMinMax,
        )
        .unwrap();
        let bytes = red.to_container().unwrap().to_bytes().unwrap();
        let back = ReducedMds::from_container(&TensorContainer::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, red);
    }
}
