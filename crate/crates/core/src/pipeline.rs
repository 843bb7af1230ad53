//! The full chain from ADC frames to a reduced micro-Doppler spectrogram.

use rayon::prelude::*;

use crate::dsp::Window;
use crate::error::{Error, Result};
use crate::mds::{build_mds, reduce_dim, NormMode, ReducedMds, StftParams};
use crate::radar::RadarConfig;
use crate::rva::{
    angle_of, ca_cfar, cluster_centroids, crop_and_stack, crop_rows, doppler_process, group_detections,
    power_map, range_angle_time, range_fft, BboxCube, CfarParams, Centroid, ClusterGaps, Detection, RdCube,
};
use crate::scene::AdcCube;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessingParams {
    pub range_window: Window,
    pub angle_window: Window,
    pub cfar: CfarParams,
    pub gaps: ClusterGaps,
    pub n_res_s: usize,
    pub n_res_theta: usize,
}

pub const DEFAULT_TRAIN: usize = 4;
pub const DEFAULT_GUARD: usize = 2;
pub const DEFAULT_PFA: f64 = 1e-4;

impl Default for ProcessingParams {
    fn default() -> Self {
        Self {
            range_window: Window::Hann,
            angle_window: Window::Hann,
            cfar: CfarParams::with_pfa(DEFAULT_TRAIN, DEFAULT_GUARD, DEFAULT_PFA).expect("valid defaults"),
            gaps: ClusterGaps::default(),
            n_res_s: 4,
            n_res_theta: 4,
        }
    }
}

/// Range FFT, Doppler FFT and slot compensation of one frame.
pub fn rd_frame(frame: &AdcCube, config: &RadarConfig, params: &ProcessingParams) -> Result<RdCube> {
    doppler_process(range_fft(frame, params.range_window)?, config)
}

/// Detected targets in one compensated cube, strongest first.
pub fn detect_in(rd: &RdCube, config: &RadarConfig, params: &ProcessingParams) -> Result<Vec<Centroid>> {
    let power = power_map(rd)?;
    let hits = ca_cfar(&power, &params.cfar)?;
    let detections = group_detections(&hits, &power)
        .into_iter()
        .map(|g| {
            let (k_r, k_v) = g.peak;
            let (_, k_theta) = angle_of(rd, k_r, k_v, params.angle_window, config.angle_bins)?;
            Ok(Detection {
                k_r,
                k_v,
                k_theta,
                power: g.peak_power,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dims = (rd.n_range(), rd.n_doppler(), config.angle_bins);
    Ok(cluster_centroids(&detections, &params.gaps, dims))
}

/// Targets of the first frame, strongest first.
pub fn detect(frames: &[AdcCube], config: &RadarConfig, params: &ProcessingParams) -> Result<Vec<Centroid>> {
    let first = frames.first().ok_or_else(|| Error::shape("no frames"))?;
    let centroids = detect_in(&rd_frame(first, config, params)?, config, params)?;
    if centroids.is_empty() {
        return Err(Error::NoTarget { frame: 0 });
    }
    Ok(centroids)
}

/// Crops every frame around `centroid` and stacks them along slow time.
pub fn process_frames(
    frames: &[AdcCube],
    centroid: &Centroid,
    config: &RadarConfig,
    params: &ProcessingParams,
) -> Result<BboxCube> {
    let n_range = config.samples_per_chirp();
    let rows = crop_rows(centroid.k_r, params.n_res_s, n_range);
    let rats = frames
        .par_iter()
        .map(|f| range_angle_time(&rd_frame(f, config, params)?, rows.clone(), params.angle_window, config.angle_bins))
        .collect::<Result<Vec<_>>>()?;
    crop_and_stack(&rats, centroid, params.n_res_s, params.n_res_theta, config.frames)
}

/// Detection, crop, STFT and reduction for the strongest target.
pub fn scene_to_mds(
    frames: &[AdcCube],
    config: &RadarConfig,
    params: &ProcessingParams,
    stft: &StftParams,
    norm: NormMode,
) -> Result<ReducedMds> {
    let centroid = detect(frames, config, params)?[0];
    let bbox = process_frames(frames, &centroid, config, params)?;
    reduce_dim(&build_mds(&bbox, stft)?, norm)
}

/// `k_r,k_v,k_theta,power` rows.
pub fn centroids_csv(centroids: &[Centroid]) -> String {
    let mut out = String::from("k_r,k_v,k_theta,power\n");
    for c in centroids {
        out.push_str(&format!("{},{},{},{}\n", c.k_r, c.k_v, c.k_theta, c.peak_power));
    }
    out
}
