use std::ops::Range;

use ndarray::{s, Array2, Array3};
use num_complex::{Complex32, Complex64};

use super::{angle_spectrum, Centroid, RdCube, Stage};
use crate::dsp::{shift_index, FftPair, Window};
use crate::error::{Error, Result};
use crate::io::container::{TensorContainer, TensorData};

/// Range x angle x slow-time cube for a band of range rows of one frame.
/// The angle axis is fftshifted.
#[derive(Debug, Clone, PartialEq)]
pub struct RatCube {
    /// First range bin held in `data`.
    pub row_start: usize,
    /// `N_s` of the full range axis.
    pub n_range: usize,
    /// `[row, angle, chirp]`.
    pub data: Array3<Complex64>,
}

impl RatCube {
    pub fn rows(&self) -> Range<usize> {
        self.row_start..self.row_start + self.data.dim().0
    }

    pub fn n_angle(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_time(&self) -> usize {
        self.data.dim().2
    }
}

/// Angle FFT of every `(k_r, k_v)` cell in `rows`, then an inverse DFT over
/// Doppler to return each `(k_r, angle)` cell to slow time.
pub fn range_angle_time(
    rd: &RdCube,
    rows: Range<usize>,
    window: Window,
    n_theta: usize,
) -> Result<RatCube> {
    if rd.stage() != Stage::Compensated {
        return Err(Error::WrongStage {
            expected: Stage::Compensated.name(),
            found: rd.stage().name(),
        });
    }
    let (nr, nv, _, _) = rd.data.dim();
    if rows.start > rows.end || rows.end > nr {
        return Err(Error::invalid(format!("rows {rows:?} outside 0..{nr}")));
    }
    let ifft = FftPair::new(nv);
    let mut data = Array3::zeros((rows.len(), n_theta, nv));
    let mut spectra = Array2::<Complex64>::zeros((n_theta, nv));
    let mut buf = vec![Complex64::new(0.0, 0.0); nv];
    for (i, k_r) in rows.clone().enumerate() {
        for k_v in 0..nv {
            let spec = angle_spectrum(&rd.snapshot(k_r, k_v)?, window, n_theta)?;
            for (k, x) in spec.into_iter().enumerate() {
                spectra[[shift_index(k, n_theta), k_v]] = x;
            }
        }
        for a in 0..n_theta {
            buf.iter_mut()
                .zip(spectra.row(a))
                .for_each(|(b, x)| *b = *x);
            ifft.inverse(&mut buf);
            data.slice_mut(s![i, a, ..])
                .iter_mut()
                .zip(&buf)
                .for_each(|(d, b)| *d = *b);
        }
    }
    Ok(RatCube {
        row_start: rows.start,
        n_range: nr,
        data,
    })
}

/// Cropped, frame-stacked region around one target.
#[derive(Debug, Clone, PartialEq)]
pub struct BboxCube {
    /// `[range, angle, time]` with `time = M_c * K_frame`.
    pub data: Array3<Complex64>,
    pub centroid: Centroid,
    /// Range bin of row 0 (may be negative near the edge).
    pub range_start: i64,
    /// Shifted angle position of column 0.
    pub angle_start: i64,
}

impl BboxCube {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.data.dim()
    }
}

/// Range rows a crop of `n_res_s` bins around `k_r` touches inside `0..n_range`.
pub fn crop_rows(k_r: usize, n_res_s: usize, n_range: usize) -> Range<usize> {
    let start = k_r as i64 - (n_res_s / 2) as i64;
    let lo = start.clamp(0, n_range as i64) as usize;
    let hi = (start + n_res_s as i64).clamp(0, n_range as i64) as usize;
    lo..hi
}

/// Crops an `n_res_s x n_res_theta` window centred on the centroid from every
/// frame and concatenates the frames along slow time. Cells outside the
/// axes are zero.
pub fn crop_and_stack(
    frames: &[RatCube],
    centroid: &Centroid,
    n_res_s: usize,
    n_res_theta: usize,
    k_frame: usize,
) -> Result<BboxCube> {
    if frames.len() != k_frame {
        return Err(Error::shape(format!(
            "expected {k_frame} frames, got {}",
            frames.len()
        )));
    }
    let first = &frames[0];
    let (n_range, n_theta, m_c) = (first.n_range, first.n_angle(), first.n_time());
    if n_res_s == 0 || n_res_s > n_range || n_res_theta == 0 || n_res_theta > n_theta {
        return Err(Error::invalid(format!(
            "crop {n_res_s}x{n_res_theta} does not fit {n_range}x{n_theta}"
        )));
    }
    if centroid.k_r >= n_range || centroid.k_theta >= n_theta {
        return Err(Error::invalid("centroid outside the cube"));
    }
    let range_start = centroid.k_r as i64 - (n_res_s / 2) as i64;
    let angle_start = shift_index(centroid.k_theta, n_theta) as i64 - (n_res_theta / 2) as i64;
    let needed = crop_rows(centroid.k_r, n_res_s, n_range);
    let mut data = Array3::zeros((n_res_s, n_res_theta, m_c * k_frame));
    for (f, frame) in frames.iter().enumerate() {
        if frame.n_range != n_range || frame.n_angle() != n_theta || frame.n_time() != m_c {
            return Err(Error::shape(format!("frame {f} differs in shape from frame 0")));
        }
        let held = frame.rows();
        if needed.start < held.start || needed.end > held.end {
            return Err(Error::shape(format!(
                "frame {f} holds rows {held:?}, crop needs {needed:?}"
            )));
        }
        for i in 0..n_res_s {
            let r = range_start + i as i64;
            if r < 0 || r >= n_range as i64 {
                continue;
            }
            let row = r as usize - held.start;
            for j in 0..n_res_theta {
                let a = angle_start + j as i64;
                if a < 0 || a >= n_theta as i64 {
                    continue;
                }
                data.slice_mut(s![i, j, f * m_c..(f + 1) * m_c])
                    .assign(&frame.data.slice(s![row, a as usize, ..]));
            }
        }
    }
    Ok(BboxCube {
        data,
        centroid: *centroid,
        range_start,
        angle_start,
    })
}

impl BboxCube {
    /// `c64 [range, angle, time]` with the centroid and crop origin as
    /// attributes.
    pub fn to_container(&self) -> Result<TensorContainer> {
        let (a, b, c) = self.dims();
        let data = self
            .data
            .iter()
            .map(|z| Complex32::new(z.re as f32, z.im as f32))
            .collect();
        let ct = &self.centroid;
        Ok(TensorContainer::new(vec![a, b, c], vec!["range", "angle", "time"], TensorData::C64(data))?
            .with_attr("kind", "bbox")
            .with_attr("centroid.k_r", ct.k_r)
            .with_attr("centroid.k_v", ct.k_v)
            .with_attr("centroid.k_theta", ct.k_theta)
            .with_attr("centroid.members", ct.members)
            .with_attr("centroid.mean_power", ct.mean_power)
            .with_attr("centroid.peak_power", ct.peak_power)
            .with_attr("range_start", self.range_start)
            .with_attr("angle_start", self.angle_start))
    }

    pub fn from_container(t: &TensorContainer) -> Result<Self> {
        let TensorData::C64(values) = &t.data else {
            return Err(Error::shape("bbox cube must be c64"));
        };
        let [a, b, c] = t.shape[..] else {
            return Err(Error::shape("bbox cube must be rank 3"));
        };
        fn get<T: std::str::FromStr>(t: &TensorContainer, key: &str) -> Result<T> {
            t.attr(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::shape(format!("bbox cube lacks a valid `{key}`")))
        }
        let data = values.iter().map(|z| Complex64::new(z.re as f64, z.im as f64)).collect();
        Ok(Self {
            data: Array3::from_shape_vec((a, b, c), data).map_err(|e| Error::shape(e.to_string()))?,
            centroid: Centroid {
                k_r: get(t, "centroid.k_r")?,
                k_v: get(t, "centroid.k_v")?,
                k_theta: get(t, "centroid.k_theta")?,
                members: get(t, "centroid.members")?,
                mean_power: get(t, "centroid.mean_power")?,
                peak_power: get(t, "centroid.peak_power")?,
            },
            range_start: get(t, "range_start")?,
            angle_start: get(t, "angle_start")?,
        })
    }
}
