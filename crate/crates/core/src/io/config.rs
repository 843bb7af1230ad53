//! Run configuration: every knob of the pipeline in one key/value file.
//!
//! Keys are grouped by prefix (`radar.`, `pipeline.`, `stft.`, `mds.`,
//! `model.`, `train.`, `dataset.`) plus a top-level `seed`. Missing keys take
//! their default; unknown keys are an error.

use std::path::Path;
use std::str::FromStr;

use super::kv::{Document, Reader, Writer};
use crate::dsp::Window;
use crate::error::{Error, Result};
use crate::mds::{NormMode, StftParams};
use crate::nn::{ModelConfig, Pooling};
use crate::nn::AdamConfig;
use crate::pipeline::{ProcessingParams, DEFAULT_GUARD, DEFAULT_PFA, DEFAULT_TRAIN};
use crate::radar::RadarConfig;
use crate::rva::{CfarParams, ClusterGaps};
use crate::train::TrainHyper;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSection {
    pub range_window: Window,
    pub angle_window: Window,
    pub cfar_train: usize,
    pub cfar_guard: usize,
    pub cfar_pfa: f64,
    pub gaps: ClusterGaps,
    pub n_res_s: usize,
    pub n_res_theta: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            range_window: Window::Hann,
            angle_window: Window::Hann,
            cfar_train: DEFAULT_TRAIN,
            cfar_guard: DEFAULT_GUARD,
            cfar_pfa: DEFAULT_PFA,
            gaps: ClusterGaps::default(),
            n_res_s: 4,
            n_res_theta: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftSection {
    pub overlap: usize,
    pub n_fft: usize,
    pub window: Window,
}

impl Default for StftSection {
    fn default() -> Self {
        Self {
            overlap: 125,
            n_fft: 128,
            window: Window::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub mlp_ratio: usize,
    pub n_classes: usize,
    pub weight_decay: f64,
    pub decay_all: bool,
    pub pooling: Pooling,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_blocks: m.n_blocks,
            mlp_ratio: m.mlp_ratio,
            n_classes: m.n_classes,
            weight_decay: m.weight_decay,
            decay_all: m.decay_all,
            pooling: m.pooling,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub k_fold: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let h = TrainHyper::default();
        Self {
            adam: h.adam,
            batch_size: h.batch_size,
            epochs: h.epochs,
            k_fold: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSection {
    pub n_samples: usize,
    pub noise_sigma: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            n_samples: 60,
            noise_sigma: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub radar: RadarConfig,
    pub pipeline: PipelineSection,
    pub stft: StftSection,
    pub norm: NormMode,
    pub model: ModelSection,
    pub train: TrainSection,
    pub dataset: DatasetSection,
}

fn read<T: FromStr>(r: &mut Reader, key: &str, slot: &mut T) -> Result<()> {
    if let Some(v) = r.scalar(key)? {
        *slot = v;
    }
    Ok(())
}

fn read_named<T>(r: &mut Reader, key: &str, slot: &mut T, from: impl Fn(&str) -> Option<T>) -> Result<()> {
    if let Some(s) = r.scalar::<String>(key)? {
        *slot = from(&s).ok_or_else(|| Error::config(format!("unknown value `{s}` for `{key}`")))?;
    }
    Ok(())
}

impl RunConfig {
    /// `"default"` selects the built-in configuration; anything else is a path.
    pub fn load(source: &str) -> Result<Self> {
        if source == "default" {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(Path::new(source))
            .map_err(|e| Error::config(format!("cannot read {source}: {e}")))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        let mut r = Reader::new(&doc);
        let mut c = Self::default();
        read(&mut r, "seed", &mut c.seed)?;

        let rd = &mut c.radar;
        read(&mut r, "radar.carrier_hz", &mut rd.carrier_hz)?;
        read(&mut r, "radar.bandwidth_hz", &mut rd.bandwidth_hz)?;
        read(&mut r, "radar.chirp_s", &mut rd.chirp_s)?;
        read(&mut r, "radar.sample_rate_hz", &mut rd.sample_rate_hz)?;
        read(&mut r, "radar.chirp_interval_s", &mut rd.chirp_interval_s)?;
        read(&mut r, "radar.chirps", &mut rd.chirps)?;
        read(&mut r, "radar.n_tx", &mut rd.n_tx)?;
        read(&mut r, "radar.n_rx", &mut rd.n_rx)?;
        read(&mut r, "radar.angle_bins", &mut rd.angle_bins)?;
        read(&mut r, "radar.frames", &mut rd.frames)?;

        let p = &mut c.pipeline;
        read_named(&mut r, "pipeline.range_window", &mut p.range_window, Window::from_name)?;
        read_named(&mut r, "pipeline.angle_window", &mut p.angle_window, Window::from_name)?;
        read(&mut r, "pipeline.cfar_train", &mut p.cfar_train)?;
        read(&mut r, "pipeline.cfar_guard", &mut p.cfar_guard)?;
        read(&mut r, "pipeline.cfar_pfa", &mut p.cfar_pfa)?;
        read(&mut r, "pipeline.gap_range", &mut p.gaps.range)?;
        read(&mut r, "pipeline.gap_doppler", &mut p.gaps.doppler)?;
        read(&mut r, "pipeline.gap_angle", &mut p.gaps.angle)?;
        read(&mut r, "pipeline.n_res_s", &mut p.n_res_s)?;
        read(&mut r, "pipeline.n_res_theta", &mut p.n_res_theta)?;

        read(&mut r, "stft.overlap", &mut c.stft.overlap)?;
        read(&mut r, "stft.n_fft", &mut c.stft.n_fft)?;
        read_named(&mut r, "stft.window", &mut c.stft.window, Window::from_name)?;
        read_named(&mut r, "mds.norm", &mut c.norm, NormMode::from_name)?;

        let m = &mut c.model;
        read(&mut r, "model.d_model", &mut m.d_model)?;
        read(&mut r, "model.n_heads", &mut m.n_heads)?;
        read(&mut r, "model.n_blocks", &mut m.n_blocks)?;
        read(&mut r, "model.mlp_ratio", &mut m.mlp_ratio)?;
        read(&mut r, "model.n_classes", &mut m.n_classes)?;
        read(&mut r, "model.weight_decay", &mut m.weight_decay)?;
        read(&mut r, "model.decay_all", &mut m.decay_all)?;
        read_named(&mut r, "model.pooling", &mut m.pooling, Pooling::from_name)?;

        let t = &mut c.train;
        read(&mut r, "train.lr", &mut t.adam.lr)?;
        read(&mut r, "train.beta1", &mut t.adam.beta1)?;
        read(&mut r, "train.beta2", &mut t.adam.beta2)?;
        read(&mut r, "train.eps", &mut t.adam.eps)?;
        read(&mut r, "train.batch_size", &mut t.batch_size)?;
        read(&mut r, "train.epochs", &mut t.epochs)?;
        read(&mut r, "train.k_fold", &mut t.k_fold)?;

        read(&mut r, "dataset.n_samples", &mut c.dataset.n_samples)?;
        read(&mut r, "dataset.noise_sigma", &mut c.dataset.noise_sigma)?;
        r.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::new();
        w.scalar("seed", self.seed).blank();
        let rd = &self.radar;
        w.scalar("radar.carrier_hz", rd.carrier_hz)
            .scalar("radar.bandwidth_hz", rd.bandwidth_hz)
            .scalar("radar.chirp_s", rd.chirp_s)
            .scalar("radar.sample_rate_hz", rd.sample_rate_hz)
            .scalar("radar.chirp_interval_s", rd.chirp_interval_s)
            .scalar("radar.chirps", rd.chirps)
            .scalar("radar.n_tx", rd.n_tx)
            .scalar("radar.n_rx", rd.n_rx)
            .scalar("radar.angle_bins", rd.angle_bins)
            .scalar("radar.frames", rd.frames)
            .blank();
        let p = &self.pipeline;
        w.scalar("pipeline.range_window", p.range_window.name())
            .scalar("pipeline.angle_window", p.angle_window.name())
            .scalar("pipeline.cfar_train", p.cfar_train)
            .scalar("pipeline.cfar_guard", p.cfar_guard)
            .scalar("pipeline.cfar_pfa", p.cfar_pfa)
            .scalar("pipeline.gap_range", p.gaps.range)
            .scalar("pipeline.gap_doppler", p.gaps.doppler)
            .scalar("pipeline.gap_angle", p.gaps.angle)
            .scalar("pipeline.n_res_s", p.n_res_s)
            .scalar("pipeline.n_res_theta", p.n_res_theta)
            .blank();
        w.scalar("stft.overlap", self.stft.overlap)
            .scalar("stft.n_fft", self.stft.n_fft)
            .scalar("stft.window", self.stft.window.name())
            .scalar("mds.norm", self.norm.name())
            .blank();
        let m = &self.model;
        w.scalar("model.d_model", m.d_model)
            .scalar("model.n_heads", m.n_heads)
            .scalar("model.n_blocks", m.n_blocks)
            .scalar("model.mlp_ratio", m.mlp_ratio)
            .scalar("model.n_classes", m.n_classes)
            .scalar("model.weight_decay", m.weight_decay)
            .scalar("model.decay_all", m.decay_all)
            .scalar("model.pooling", m.pooling.name())
            .blank();
        let t = &self.train;
        w.scalar("train.lr", t.adam.lr)
            .scalar("train.beta1", t.adam.beta1)
            .scalar("train.beta2", t.adam.beta2)
            .scalar("train.eps", t.adam.eps)
            .scalar("train.batch_size", t.batch_size)
            .scalar("train.epochs", t.epochs)
            .scalar("train.k_fold", t.k_fold)
            .blank();
        w.scalar("dataset.n_samples", self.dataset.n_samples)
            .scalar("dataset.noise_sigma", self.dataset.noise_sigma);
        w.finish()
    }

    /// Cross-section checks: the STFT must span `M_c` samples and yield at
    /// least `N_fft` frames, crops must fit the axes, and the CFAR window
    /// must fit the range-Doppler map.
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        let rd = &self.radar;
        let p = &self.pipeline;
        if self.stft.n_fft != rd.chirps {
            return Err(Error::config(format!(
                "stft.n_fft ({}) must equal radar.chirps ({})",
                self.stft.n_fft, rd.chirps
            )));
        }
        let stft = self.stft_params();
        let n_time = rd.chirps * rd.frames;
        let frames = stft.n_frames(n_time).map_err(|e| Error::config(e.to_string()))?;
        if frames < self.stft.n_fft {
            return Err(Error::config(format!(
                "stft.overlap {} yields {frames} frames from {n_time} samples, need {}",
                self.stft.overlap, self.stft.n_fft
            )));
        }
        let n_s = rd.samples_per_chirp();
        if p.n_res_s == 0 || p.n_res_s > n_s || p.n_res_theta == 0 || p.n_res_theta > rd.angle_bins {
            return Err(Error::config(format!(
                "crop {}x{} must fit {n_s} range by {} angle bins",
                p.n_res_s, p.n_res_theta, rd.angle_bins
            )));
        }
        let cfar = self.cfar()?;
        let window = 2 * cfar.half_width() + 1;
        if window > n_s || window > rd.chirps {
            return Err(Error::CfarWindow {
                window,
                rows: n_s,
                cols: rd.chirps,
            });
        }
        self.model_config().validate()?;
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(Error::config("train.batch_size must be positive"));
        }
        if t.k_fold < 2 {
            return Err(Error::config("train.k_fold must be at least 2"));
        }
        if !(t.adam.lr > 0.0 && (0.0..1.0).contains(&t.adam.beta1) && (0.0..1.0).contains(&t.adam.beta2) && t.adam.eps > 0.0) {
            return Err(Error::config("Adam settings need lr > 0, betas in [0, 1), eps > 0"));
        }
        let d = &self.dataset;
        if d.n_samples < t.k_fold || d.n_samples < self.model.n_classes {
            return Err(Error::config(format!(
                "dataset.n_samples = {} cannot cover {} folds and {} classes",
                d.n_samples, t.k_fold, self.model.n_classes
            )));
        }
        if !(d.noise_sigma.is_finite() && d.noise_sigma >= 0.0) {
            return Err(Error::config("dataset.noise_sigma must be non-negative"));
        }
        Ok(())
    }

    pub fn cfar(&self) -> Result<CfarParams> {
        let p = &self.pipeline;
        if p.cfar_train == 0 {
            return Err(Error::config("pipeline.cfar_train must be at least 1"));
        }
        CfarParams::with_pfa(p.cfar_train, p.cfar_guard, p.cfar_pfa).map_err(|e| Error::config(e.to_string()))
    }

    pub fn processing(&self) -> Result<ProcessingParams> {
        let p = &self.pipeline;
        Ok(ProcessingParams {
            range_window: p.range_window,
            angle_window: p.angle_window,
            cfar: self.cfar()?,
            gaps: p.gaps,
            n_res_s: p.n_res_s,
            n_res_theta: p.n_res_theta,
        })
    }

    pub fn stft_params(&self) -> StftParams {
        StftParams {
            window_len: self.stft.n_fft,
            overlap: self.stft.overlap,
            n_fft: self.stft.n_fft,
            window: self.stft.window,
        }
    }

    /// Tokens are the `n_res_s * n_res_theta` crop bins, each an
    /// `N_fft x N_fft` spectrogram.
    pub fn model_config(&self) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            n_tokens: self.pipeline.n_res_s * self.pipeline.n_res_theta,
            d_in: self.stft.n_fft * self.stft.n_fft,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_blocks: m.n_blocks,
            mlp_ratio: m.mlp_ratio,
            n_classes: m.n_classes,
            weight_decay: m.weight_decay,
            decay_all: m.decay_all,
            pooling: m.pooling,
        }
    }

    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            adam: self.train.adam,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
        }
    }
}
