//! Synthetic multi-target scenes and their FMCW ADC cubes.
//!
//! Each scatterer of a track moves with radial displacement
//!
//! ```text
//! d(t) = v t + A / (2 pi f) (1 - cos(2 pi f t))       (velocity v + A sin(2 pi f t))
//! ```
//!
//! and contributes, for fast-time sample `n`, chirp `m` and transmitter slot
//! offset `dt`,
//!
//! ```text
//! a exp{ j 2 pi (S tau + f_D) n T_s  +  j 2 pi (2 / lambda) d(m T_r - dt)  +  j pi n_a sin(az) }
//! ```
//!
//! with `tau = 2 r(m T_r) / c`, `f_D = 2 v(m T_r) / lambda` and `n_a` the
//! tx-major virtual element index. For constant velocity the slow-time term
//! is exactly `f_D (m T_r - dt)`.

use std::f64::consts::PI;

use num_complex::{Complex32, Complex64};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::container::{TensorContainer, TensorData};
use crate::io::kv::{Document, Reader, Writer};
use crate::radar::{derive_axes, AxisSpec, RadarConfig, SPEED_OF_LIGHT};
use crate::seed::{self, tag};

/// A point scatterer attached to a track.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    /// Offset from the track range (m).
    pub range_offset: f64,
    /// Offset from the track sin-azimuth.
    pub angle_offset: f64,
    pub amplitude: f64,
    /// Micro-motion frequency (Hz); zero disables micro-motion.
    pub micro_freq: f64,
    /// Peak micro-motion radial velocity (m/s). The sign sets the phase.
    pub micro_amp: f64,
}

impl Scatterer {
    pub fn point(amplitude: f64) -> Self {
        Self {
            range_offset: 0.0,
            angle_offset: 0.0,
            amplitude,
            micro_freq: 0.0,
            micro_amp: 0.0,
        }
    }

    fn micro_velocity(&self, t: f64) -> f64 {
        if self.micro_freq > 0.0 {
            self.micro_amp * (2.0 * PI * self.micro_freq * t).sin()
        } else {
            0.0
        }
    }

    fn micro_displacement(&self, t: f64) -> f64 {
        if self.micro_freq > 0.0 {
            let w = 2.0 * PI * self.micro_freq;
            self.micro_amp / w * (1.0 - (w * t).cos())
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetTrack {
    pub class_id: usize,
    /// Initial range `r0` (m).
    pub range: f64,
    /// Bulk radial velocity (m/s), positive receding.
    pub velocity: f64,
    /// `sin(azimuth)` of the track centre.
    pub sin_azimuth: f64,
    pub scatterers: Vec<Scatterer>,
}

impl TargetTrack {
    /// Single scatterer without micro-motion.
    pub fn point(range: f64, velocity: f64, sin_azimuth: f64, amplitude: f64) -> Self {
        Self {
            class_id: 0,
            range,
            velocity,
            sin_azimuth,
            scatterers: vec![Scatterer::point(amplitude)],
        }
    }

    fn validate(&self, index: usize, axes: &AxisSpec) -> Result<()> {
        let fail = |reason: String| Err(Error::TrackOutOfBounds { index, reason });
        if !(self.range > 0.0 && self.range < axes.range_max) {
            return fail(format!(
                "range {} m outside (0, {:.3}) m",
                self.range, axes.range_max
            ));
        }
        if !self.velocity.is_finite() || !self.sin_azimuth.is_finite() {
            return fail("non-finite velocity or azimuth".into());
        }
        if self.scatterers.is_empty() {
            return fail("track has no scatterers".into());
        }
        for (j, s) in self.scatterers.iter().enumerate() {
            let vals = [s.range_offset, s.angle_offset, s.amplitude, s.micro_freq, s.micro_amp];
            if vals.iter().any(|v| !v.is_finite()) {
                return fail(format!("scatterer {j} has a non-finite parameter"));
            }
            if s.amplitude <= 0.0 {
                return fail(format!("scatterer {j} amplitude must be positive"));
            }
            if s.micro_freq < 0.0 {
                return fail(format!("scatterer {j} micro frequency must be non-negative"));
            }
            if self.velocity.abs() + s.micro_amp.abs() >= axes.velocity_max {
                return fail(format!(
                    "scatterer {j}: |v| + micro amplitude = {:.3} m/s exceeds {:.3} m/s",
                    self.velocity.abs() + s.micro_amp.abs(),
                    axes.velocity_max
                ));
            }
            let r = self.range + s.range_offset;
            if !(r > 0.0 && r < axes.range_max) {
                return fail(format!("scatterer {j} range {r} m outside the unambiguous range"));
            }
            let az = self.sin_azimuth + s.angle_offset;
            if !(-1.0..=1.0).contains(&az) {
                return fail(format!("scatterer {j} sin(azimuth) {az} outside [-1, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tracks: Vec<TargetTrack>,
    /// Standard deviation of the circular complex noise, `E|w|^2 = sigma^2`.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self, axes: &AxisSpec) -> Result<()> {
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        for (i, t) in self.tracks.iter().enumerate() {
            t.validate(i, axes)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut w = Writer::new();
        w.scalar("noise_sigma", self.noise_sigma)
            .scalar("seed", self.seed)
            .scalar("tracks", self.tracks.len());
        for (i, t) in self.tracks.iter().enumerate() {
            let p = format!("track.{i}");
            w.scalar(&format!("{p}.class_id"), t.class_id)
                .scalar(&format!("{p}.range"), t.range)
                .scalar(&format!("{p}.velocity"), t.velocity)
                .scalar(&format!("{p}.sin_azimuth"), t.sin_azimuth)
                .scalar(&format!("{p}.scatterers"), t.scatterers.len());
            for (j, s) in t.scatterers.iter().enumerate() {
                w.list(
                    &format!("{p}.scatterer.{j}"),
                    &[s.range_offset, s.angle_offset, s.amplitude, s.micro_freq, s.micro_amp],
                );
            }
        }
        w.finish()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        let mut r = Reader::new(&doc);
        let noise_sigma = r.require("noise_sigma")?;
        let seed = r.require("seed")?;
        let n_tracks: usize = r.require("tracks")?;
        let mut tracks = Vec::new();
        for i in 0..n_tracks {
            let p = format!("track.{i}");
            let class_id = r.require(&format!("{p}.class_id"))?;
            let range = r.require(&format!("{p}.range"))?;
            let velocity = r.require(&format!("{p}.velocity"))?;
            let sin_azimuth = r.require(&format!("{p}.sin_azimuth"))?;
            let n_scat: usize = r.require(&format!("{p}.scatterers"))?;
            let mut scatterers = Vec::new();
            for j in 0..n_scat {
                let key = format!("{p}.scatterer.{j}");
                let v: Vec<f64> = r.list(&key)?.ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("missing required key `{key}`"),
                })?;
                let [range_offset, angle_offset, amplitude, micro_freq, micro_amp] = v[..] else {
                    return Err(Error::Parse {
                        line: doc.get(&key).map_or(0, |e| e.line),
                        message: format!("`{key}` needs 5 values"),
                    });
                };
                scatterers.push(Scatterer {
                    range_offset,
                    angle_offset,
                    amplitude,
                    micro_freq,
                    micro_amp,
                });
            }
            tracks.push(TargetTrack {
                class_id,
                range,
                velocity,
                sin_azimuth,
                scatterers,
            });
        }
        r.finish()?;
        Ok(Scene {
            tracks,
            noise_sigma,
            seed,
        })
    }
}

/// One frame of complex baseband samples, row-major `[fast_time, chirp, tx, rx]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdcCube {
    pub n_samples: usize,
    pub chirps: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub data: Vec<Complex64>,
}

impl AdcCube {
    pub fn zeros(n_samples: usize, chirps: usize, n_tx: usize, n_rx: usize) -> Self {
        Self {
            n_samples,
            chirps,
            n_tx,
            n_rx,
            data: vec![Complex64::new(0.0, 0.0); n_samples * chirps * n_tx * n_rx],
        }
    }

    pub fn for_config(config: &RadarConfig) -> Self {
        Self::zeros(config.samples_per_chirp(), config.chirps, config.n_tx, config.n_rx)
    }

    #[inline]
    pub fn index(&self, n: usize, m: usize, tx: usize, rx: usize) -> usize {
        ((n * self.chirps + m) * self.n_tx + tx) * self.n_rx + rx
    }

    pub fn at(&self, n: usize, m: usize, tx: usize, rx: usize) -> Complex64 {
        self.data[self.index(n, m, tx, rx)]
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n_samples, self.chirps, self.n_tx, self.n_rx]
    }
}

/// Packs frames into a `c64` container of shape `[frame, fast_time, chirp, tx, rx]`.
pub fn frames_to_container(frames: &[AdcCube]) -> Result<TensorContainer> {
    let first = frames
        .first()
        .ok_or_else(|| Error::invalid("no frames to write"))?;
    if frames.iter().any(|f| f.shape() != first.shape()) {
        return Err(Error::shape("frames have differing shapes"));
    }
    let data = frames
        .iter()
        .flat_map(|f| f.data.iter().map(|c| Complex32::new(c.re as f32, c.im as f32)))
        .collect();
    let [n, m, t, r] = first.shape();
    Ok(TensorContainer::new(
        vec![frames.len(), n, m, t, r],
        vec!["frame", "fast_time", "chirp", "tx", "rx"],
        TensorData::C64(data),
    )?)
}

pub fn frames_from_container(t: &TensorContainer) -> Result<Vec<AdcCube>> {
    let TensorData::C64(data) = &t.data else {
        return Err(Error::shape("ADC container must be c64"));
    };
    let [k, n, m, tx, rx] = t.shape[..] else {
        return Err(Error::shape(format!("ADC container must be rank 5, got {:?}", t.shape)));
    };
    let per = n * m * tx * rx;
    Ok((0..k)
        .map(|f| AdcCube {
            n_samples: n,
            chirps: m,
            n_tx: tx,
            n_rx: rx,
            data: data[f * per..(f + 1) * per]
                .iter()
                .map(|c| Complex64::new(c.re as f64, c.im as f64))
                .collect(),
        })
        .collect())
}

/// Synthesizes frame `frame` of `scene`. Chirp times are continuous across
/// frames (`t = (frame M_c + m) T_r`).
pub fn synth_frame(config: &RadarConfig, scene: &Scene, frame: usize) -> Result<AdcCube> {
    config.validate()?;
    let axes = derive_axes(config)?;
    scene.validate(&axes)?;

    let mut cube = AdcCube::for_config(config);
    let ns = cube.n_samples;
    let n_virtual = config.virtual_elements();
    let lambda = config.wavelength();
    let slope = config.slope();
    let ts = config.sample_period();
    let mut fast = vec![Complex64::new(0.0, 0.0); ns];

    for track in &scene.tracks {
        for sc in &track.scatterers {
            let sin_az = track.sin_azimuth + sc.angle_offset;
            let steering: Vec<Complex64> = (0..n_virtual)
                .map(|na| Complex64::from_polar(1.0, PI * na as f64 * sin_az))
                .collect();
            let displacement = |t: f64| track.velocity * t + sc.micro_displacement(t);
            for m in 0..config.chirps {
                let t = (frame * config.chirps + m) as f64 * config.chirp_interval_s;
                let range = track.range + sc.range_offset + displacement(t);
                let velocity = track.velocity + sc.micro_velocity(t);
                let beat = slope * 2.0 * range / SPEED_OF_LIGHT + 2.0 * velocity / lambda;
                let step = 2.0 * PI * beat * ts;
                for (n, f) in fast.iter_mut().enumerate() {
                    *f = Complex64::from_polar(sc.amplitude, step * n as f64);
                }
                for tx in 0..config.n_tx {
                    let slow = 2.0 * PI * 2.0 / lambda * displacement(t - config.tx_offset(tx));
                    let slow = Complex64::from_polar(1.0, slow);
                    for rx in 0..config.n_rx {
                        let p = slow * steering[tx * config.n_rx + rx];
                        for (n, f) in fast.iter().enumerate() {
                            let i = cube.index(n, m, tx, rx);
                            cube.data[i] += f * p;
                        }
                    }
                }
            }
        }
    }

    if scene.noise_sigma > 0.0 {
        let mut rng = seed::rng(scene.seed, tag::NOISE, frame as u64);
        let s = scene.noise_sigma / std::f64::consts::SQRT_2;
        for v in cube.data.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re * s, im * s);
        }
    }
    Ok(cube)
}

/// All `K_frame` frames of `scene`.
pub fn synth_adc(config: &RadarConfig, scene: &Scene) -> Result<Vec<AdcCube>> {
    (0..config.frames)
        .map(|f| synth_frame(config, scene, f))
        .collect()
}

/// Uniform draw range; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..self.hi)
        } else {
            self.lo
        }
    }

    fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScattererTemplate {
    pub range_offset: Span,
    pub angle_offset: Span,
    pub amplitude: Span,
    pub micro_freq: Span,
    pub micro_amp: Span,
}

/// Per-class distribution over tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTemplate {
    pub name: String,
    /// Radial velocity (m/s).
    pub velocity: Span,
    /// Flip the drawn velocity sign with probability 1/2.
    pub mirror_velocity: bool,
    pub range: Span,
    pub sin_azimuth: Span,
    pub scatterers: Vec<ScattererTemplate>,
}

impl ClassTemplate {
    fn check(&self, axes: &AxisSpec) -> Result<()> {
        if self.scatterers.is_empty() {
            return Err(Error::config(format!("class `{}` has no scatterers", self.name)));
        }
        let micro = self
            .scatterers
            .iter()
            .map(|s| s.micro_amp.max_abs())
            .fold(0.0, f64::max);
        if self.velocity.max_abs() + micro >= axes.velocity_max {
            return Err(Error::config(format!(
                "class `{}` can exceed the unambiguous velocity {:.3} m/s",
                self.name, axes.velocity_max
            )));
        }
        Ok(())
    }

    fn sample(&self, class_id: usize, rng: &mut impl Rng) -> TargetTrack {
        let mut velocity = self.velocity.sample(rng);
        if self.mirror_velocity && rng.gen_bool(0.5) {
            velocity = -velocity;
        }
        let range = self.range.sample(rng);
        let sin_azimuth = self.sin_azimuth.sample(rng);
        let scatterers = self
            .scatterers
            .iter()
            .map(|s| Scatterer {
                range_offset: s.range_offset.sample(rng),
                angle_offset: s.angle_offset.sample(rng),
                amplitude: s.amplitude.sample(rng),
                micro_freq: s.micro_freq.sample(rng),
                micro_amp: s.micro_amp.sample(rng),
            })
            .collect();
        TargetTrack {
            class_id,
            range,
            velocity,
            sin_azimuth,
            scatterers,
        }
    }
}

fn scat(range_offset: (f64, f64), amplitude: (f64, f64), freq: (f64, f64), micro: (f64, f64)) -> ScattererTemplate {
    ScattererTemplate {
        range_offset: Span::new(range_offset.0, range_offset.1),
        angle_offset: Span::new(-0.01, 0.01),
        amplitude: Span::new(amplitude.0, amplitude.1),
        micro_freq: Span::new(freq.0, freq.1),
        micro_amp: Span::new(micro.0, micro.1),
    }
}

/// Car, pedestrian and cyclist templates sized for the default radar.
///
/// The observation window of the default radar is ~37 ms, so micro-motion
/// rates are set in the tens of Hz to show at least one cycle per sample.
pub fn default_templates() -> Vec<ClassTemplate> {
    vec![
        ClassTemplate {
            name: "car".into(),
            velocity: Span::new(6.0, 11.0),
            mirror_velocity: true,
            range: Span::new(8.0, 40.0),
            sin_azimuth: Span::new(-0.5, 0.5),
            scatterers: vec![
                scat((-1.2, -0.8), (0.8, 1.2), (0.0, 0.0), (0.0, 0.0)),
                scat((-0.2, 0.2), (0.6, 1.0), (8.0, 15.0), (0.05, 0.15)),
                scat((0.8, 1.2), (0.5, 0.9), (0.0, 0.0), (0.0, 0.0)),
            ],
        },
        ClassTemplate {
            name: "pedestrian".into(),
            velocity: Span::new(0.5, 2.0),
            mirror_velocity: true,
            range: Span::new(5.0, 30.0),
            sin_azimuth: Span::new(-0.5, 0.5),
            scatterers: vec![
                scat((-0.1, 0.1), (0.8, 1.0), (20.0, 30.0), (0.2, 0.4)),
                scat((-0.2, 0.2), (0.2, 0.35), (20.0, 30.0), (1.0, 2.0)),
                scat((-0.2, 0.2), (0.2, 0.35), (20.0, 30.0), (-2.0, -1.0)),
                scat((-0.2, 0.2), (0.3, 0.5), (20.0, 30.0), (2.0, 3.5)),
                scat((-0.2, 0.2), (0.3, 0.5), (20.0, 30.0), (-3.5, -2.0)),
            ],
        },
        ClassTemplate {
            name: "cyclist".into(),
            velocity: Span::new(3.0, 6.0),
            mirror_velocity: true,
            range: Span::new(5.0, 35.0),
            sin_azimuth: Span::new(-0.5, 0.5),
            scatterers: vec![
                scat((-0.1, 0.1), (0.8, 1.0), (10.0, 20.0), (0.1, 0.3)),
                scat((-0.3, 0.3), (0.3, 0.5), (10.0, 20.0), (0.8, 1.5)),
                scat((-0.3, 0.3), (0.3, 0.5), (10.0, 20.0), (-1.5, -0.8)),
                scat((-0.6, 0.6), (0.2, 0.3), (30.0, 40.0), (0.5, 1.0)),
            ],
        },
    ]
}

/// A generated scene and its label. ADC frames are synthesized on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScene {
    pub scene: Scene,
    pub class_id: usize,
}

impl LabeledScene {
    pub fn synthesize(&self, config: &RadarConfig) -> Result<Vec<AdcCube>> {
        synth_adc(config, &self.scene)
    }
}

/// Draws `n_samples` single-target scenes, cycling through the classes so
/// every class count is within one of the others. Sample `i` uses its own
/// derived RNG stream, so the result depends only on `seed`.
pub fn sample_dataset(
    config: &RadarConfig,
    templates: &[ClassTemplate],
    n_samples: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<LabeledScene>> {
    let k = templates.len();
    if k == 0 {
        return Err(Error::config("no class templates"));
    }
    if n_samples < k {
        return Err(Error::invalid(format!(
            "{n_samples} samples cannot cover {k} classes"
        )));
    }
    let axes = derive_axes(config)?;
    for t in templates {
        t.check(&axes)?;
    }
    (0..n_samples)
        .map(|i| {
            let class_id = i % k;
            let mut rng = seed::rng(seed, tag::SCENE, i as u64);
            let track = templates[class_id].sample(class_id, &mut rng);
            let scene = Scene {
                tracks: vec![track],
                noise_sigma,
                seed: seed::derive(seed, tag::NOISE, i as u64),
            };
            scene.validate(&axes)?;
            Ok(LabeledScene { scene, class_id })
        })
        .collect()
}
