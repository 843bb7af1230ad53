//! Waveform and array parameters and the axis resolutions they imply.

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FMCW waveform and TDM-MIMO array description.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    /// Carrier frequency `f_c` (Hz).
    pub carrier_hz: f64,
    /// Sweep bandwidth `B` (Hz).
    pub bandwidth_hz: f64,
    /// Chirp duration `T_c` (s).
    pub chirp_s: f64,
    /// ADC sample rate `F_s` (Hz).
    pub sample_rate_hz: f64,
    /// Chirp repetition interval `T_r` (s).
    pub chirp_interval_s: f64,
    /// Chirps per frame `M_c`.
    pub chirps: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Angle FFT size `N_theta`.
    pub angle_bins: usize,
    /// Frames per sample `K_frame`.
    pub frames: usize,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 77e9,
            bandwidth_hz: 768e6,
            chirp_s: 64e-6,
            sample_rate_hz: 4e6,
            chirp_interval_s: 72e-6,
            chirps: 128,
            n_tx: 2,
            n_rx: 4,
            angle_bins: 128,
            frames: 4,
        }
    }
}

impl RadarConfig {
    /// Chirp slope `S = B / T_c` (Hz/s).
    pub fn slope(&self) -> f64 {
        self.bandwidth_hz / self.chirp_s
    }

    /// Fast-time samples per chirp, `N_s = round(T_c F_s)`.
    pub fn samples_per_chirp(&self) -> usize {
        (self.chirp_s * self.sample_rate_hz).round() as usize
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Slot offset of transmitter `tx` (zero-based): `tx T_r / N_tx`.
    pub fn tx_offset(&self, tx: usize) -> f64 {
        tx as f64 * self.chirp_interval_s / self.n_tx as f64
    }

    pub fn virtual_elements(&self) -> usize {
        self.n_tx * self.n_rx
    }

    /// Doppler bin spacing of the slow-time FFT (Hz).
    pub fn doppler_bin_hz(&self) -> f64 {
        1.0 / (self.chirps as f64 * self.chirp_interval_s)
    }

    /// Fractional natural-order range bin of a beat tone from range `r` and
    /// radial velocity `v` (beat frequency `2 r S / c + 2 v / lambda`).
    pub fn range_bin(&self, range: f64, velocity: f64) -> f64 {
        let beat = 2.0 * range * self.slope() / SPEED_OF_LIGHT + 2.0 * velocity / self.wavelength();
        beat * self.samples_per_chirp() as f64 / self.sample_rate_hz
    }

    /// Fractional signed Doppler bin of radial velocity `v`.
    pub fn doppler_bin(&self, velocity: f64) -> f64 {
        2.0 * velocity / self.wavelength() / self.doppler_bin_hz()
    }

    /// Fractional signed angle bin of `sin(azimuth)` on the virtual ULA.
    pub fn angle_bin(&self, sin_azimuth: f64) -> f64 {
        sin_azimuth * self.angle_bins as f64 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("chirp_s", self.chirp_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("chirp_interval_s", self.chirp_interval_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("radar.{name} must be positive, got {v}")));
            }
        }
        let counts = [
            ("chirps", self.chirps),
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("angle_bins", self.angle_bins),
            ("frames", self.frames),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("radar.{name} must be at least 1")));
            }
        }
        if self.chirp_interval_s < self.chirp_s {
            return Err(Error::config(format!(
                "chirp interval {} s is shorter than the chirp {} s",
                self.chirp_interval_s, self.chirp_s
            )));
        }
        if self.samples_per_chirp() == 0 {
            return Err(Error::config("chirp_s * sample_rate_hz rounds to zero samples"));
        }
        if self.angle_bins < self.virtual_elements() {
            return Err(Error::config(format!(
                "angle FFT size {} is smaller than the {} virtual elements",
                self.angle_bins,
                self.virtual_elements()
            )));
        }
        Ok(())
    }
}

/// Range, velocity and angle resolutions and limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    /// `c F_s / (2 S N_s)` (m).
    pub range_res: f64,
    /// `c F_s / (2 S)` (m).
    pub range_max: f64,
    /// `lambda / (2 T_c M_c)` (m/s).
    pub velocity_res: f64,
    /// `lambda / (4 T_c)` (m/s).
    pub velocity_max: f64,
    /// `2 / N_theta` in sin-azimuth units.
    pub angle_res: f64,
}

/// Closed-form axis resolutions and unambiguous limits for `config`.
pub fn derive_axes(config: &RadarConfig) -> Result<AxisSpec> {
    let slope = config.slope();
    if !(slope.is_finite() && slope > 0.0) {
        return Err(Error::config(format!("chirp slope must be positive, got {slope}")));
    }
    if config.chirps == 0 {
        return Err(Error::config("chirps per frame must be positive"));
    }
    let n_s = config.samples_per_chirp();
    if n_s == 0 || config.angle_bins == 0 {
        return Err(Error::config("sample count and angle bins must be positive"));
    }
    let lambda = config.wavelength();
    let range_max = SPEED_OF_LIGHT * config.sample_rate_hz / (2.0 * slope);
    Ok(AxisSpec {
        range_res: range_max / n_s as f64,
        range_max,
        velocity_res: lambda / (2.0 * config.chirp_s * config.chirps as f64),
        velocity_max: lambda / (4.0 * config.chirp_s),
        angle_res: 2.0 / config.angle_bins as f64,
    })
}
