//! Range, Doppler and angle processing of ADC cubes.
//!
//! ```text
//! AdcCube --range_fft--> RdCube(Range) --doppler_fft--> RdCube(Doppler)
//!         --compensate--> RdCube(Compensated) --power_map--> P_rd --ca_cfar--> DetectionSet
//!         --group_detections--> groups --angle_of--> (k_r, k_v, k_theta) --cluster_centroids--> Centroid
//! ```
//!
//! All bins are natural FFT order unless stated otherwise. The angle axis of
//! [`RatCube`] and [`BboxCube`] is fftshifted so that broadside sits at
//! `N_theta / 2`.

mod cfar;
mod cluster;
mod crop;

pub use cfar::{alpha_for_pfa, ca_cfar, CfarParams, DetectionSet};
pub use cluster::{cluster_centroids, group_detections, Centroid, ClusterGaps, Detection, Group};
pub use crop::{crop_and_stack, crop_rows, range_angle_time, BboxCube, RatCube};

use std::f64::consts::PI;

use ndarray::{Array2, Array4, ArrayView4, Axis};
use num_complex::Complex64;

use crate::dsp::{signed_bin, FftPair, Window};
use crate::error::{Error, Result};
use crate::radar::RadarConfig;
use crate::scene::AdcCube;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Range FFT only; axis 1 is still chirp index.
    Range,
    /// Doppler FFT done, slot offsets not yet corrected.
    Doppler,
    Compensated,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Range => "range",
            Stage::Doppler => "doppler",
            Stage::Compensated => "compensated",
        }
    }
}

/// `[k_r, k_v, tx, rx]` cube. Axis 1 holds chirps until the Doppler FFT.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCube {
    pub data: Array4<Complex64>,
    stage: Stage,
}

impl RdCube {
    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn is_compensated(&self) -> bool {
        self.stage == Stage::Compensated
    }

    pub fn n_range(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_doppler(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_virtual(&self) -> usize {
        let (_, _, t, r) = self.data.dim();
        t * r
    }

    /// Virtual-array snapshot at one range-Doppler cell, tx-major.
    pub fn snapshot(&self, k_r: usize, k_v: usize) -> Result<Vec<Complex64>> {
        let (nr, nv, _, _) = self.data.dim();
        if k_r >= nr || k_v >= nv {
            return Err(Error::invalid(format!(
                "cell ({k_r}, {k_v}) outside the {nr}x{nv} map"
            )));
        }
        Ok(self
            .data
            .slice(ndarray::s![k_r, k_v, .., ..])
            .iter()
            .copied()
            .collect())
    }

    fn require(&self, stage: Stage) -> Result<()> {
        if self.stage == stage {
            Ok(())
        } else {
            Err(Error::WrongStage {
                expected: stage.name(),
                found: self.stage.name(),
            })
        }
    }
}

fn transform_axis(data: &mut Array4<Complex64>, axis: usize, window: &[f64]) {
    let n = data.len_of(Axis(axis));
    let fft = FftPair::new(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for mut lane in data.lanes_mut(Axis(axis)) {
        for ((b, x), w) in buf.iter_mut().zip(lane.iter()).zip(window) {
            *b = x * w;
        }
        fft.forward(&mut buf);
        for (x, b) in lane.iter_mut().zip(&buf) {
            *x = *b;
        }
    }
}

/// Windowed DFT over fast time for every (chirp, tx, rx).
pub fn range_fft(cube: &AdcCube, window: Window) -> Result<RdCube> {
    let shape = cube.shape();
    let view = ArrayView4::from_shape(shape, &cube.data)
        .map_err(|_| Error::shape(format!("ADC data does not fill {shape:?}")))?;
    let mut data = view.to_owned();
    transform_axis(&mut data, 0, &window.coefficients(shape[0]));
    Ok(RdCube {
        data,
        stage: Stage::Range,
    })
}

/// Unwindowed DFT over slow time.
pub fn doppler_fft(mut rd: RdCube) -> Result<RdCube> {
    match rd.stage {
        Stage::Range => {}
        Stage::Compensated => return Err(Error::AlreadyCompensated),
        Stage::Doppler => rd.require(Stage::Range)?,
    }
    let n = rd.n_doppler();
    transform_axis(&mut rd.data, 1, &vec![1.0; n]);
    rd.stage = Stage::Doppler;
    Ok(rd)
}

/// Undoes the transmitter slot delay: bin `(k_r, k_v, tx, rx)` is multiplied
/// by `exp(j 2 pi k_v' dt_tx / (M_c T_r))` with `k_v'` the signed Doppler bin.
pub fn compensate(mut rd: RdCube, config: &RadarConfig) -> Result<RdCube> {
    match rd.stage {
        Stage::Doppler => {}
        Stage::Compensated => return Err(Error::AlreadyCompensated),
        Stage::Range => rd.require(Stage::Doppler)?,
    }
    let (_, nv, nt, _) = rd.data.dim();
    if nt != config.n_tx || nv != config.chirps {
        return Err(Error::shape(format!(
            "cube has {nv} Doppler bins and {nt} transmitters, config has {} and {}",
            config.chirps, config.n_tx
        )));
    }
    let df = config.doppler_bin_hz();
    let factors: Vec<Complex64> = (0..nv)
        .flat_map(|kv| {
            let f = signed_bin(kv, nv) as f64 * df;
            (0..nt).map(move |tx| Complex64::from_polar(1.0, 2.0 * PI * f * config.tx_offset(tx)))
        })
        .collect();
    for mut plane in rd.data.outer_iter_mut() {
        for ((kv, tx, _), x) in plane.indexed_iter_mut() {
            *x *= factors[kv * nt + tx];
        }
    }
    rd.stage = Stage::Compensated;
    Ok(rd)
}

/// Doppler FFT followed by slot compensation.
pub fn doppler_process(rd: RdCube, config: &RadarConfig) -> Result<RdCube> {
    compensate(doppler_fft(rd)?, config)
}

/// `P[k_r, k_v] = sum over (tx, rx) of |Y|^2`.
pub fn power_map(rd: &RdCube) -> Result<Array2<f64>> {
    rd.require(Stage::Compensated)?;
    let (nr, nv, _, _) = rd.data.dim();
    let mut p = Array2::zeros((nr, nv));
    for ((r, v, _, _), x) in rd.data.indexed_iter() {
        p[[r, v]] += x.norm_sqr();
    }
    Ok(p)
}

/// Windowed, zero-padded DFT of a virtual-array snapshot. The window is
/// evaluated over the `N_a` elements.
pub fn angle_spectrum(snapshot: &[Complex64], window: Window, n_theta: usize) -> Result<Vec<Complex64>> {
    if snapshot.len() > n_theta {
        return Err(Error::invalid(format!(
            "{} virtual elements exceed {n_theta} angle bins",
            snapshot.len()
        )));
    }
    let w = window.coefficients(snapshot.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); n_theta];
    for ((b, x), w) in buf.iter_mut().zip(snapshot).zip(&w) {
        *b = x * w;
    }
    FftPair::new(n_theta).forward(&mut buf);
    Ok(buf)
}

/// Angle spectrum at a range-Doppler cell and its peak bin (natural order).
pub fn angle_of(
    rd: &RdCube,
    k_r: usize,
    k_v: usize,
    window: Window,
    n_theta: usize,
) -> Result<(Vec<Complex64>, usize)> {
    let spectrum = angle_spectrum(&rd.snapshot(k_r, k_v)?, window, n_theta)?;
    let peak = argmax_norm(&spectrum);
    Ok((spectrum, peak))
}

/// Index of the largest magnitude, first on ties.
pub fn argmax_norm(xs: &[Complex64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, x) in xs.iter().enumerate() {
        let v = x.norm_sqr();
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
