//! Quick oracle checks plus a miniature end-to-end run. Everything written
//! is a function of the seed alone, so two runs produce identical trees.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use mdslab::dsp::Window;
use mdslab::io::{write_atomic, RunConfig, TensorContainer};
use mdslab::mds::{stft_cell, StftParams};
use mdslab::nn::{Model, ModelConfig, Pooling};
use mdslab::radar::{derive_axes, RadarConfig, SPEED_OF_LIGHT};
use mdslab::rva::{ca_cfar, range_fft, CfarParams};
use mdslab::scene::AdcCube;
use mdslab::seed;
use mdslab::{Complex64, Error, Result};
use ndarray::Array2;
use rand::Rng;

use crate::commands::{self, ExplainOptions};

const TAG_SELFTEST: u64 = 0x5345_4c46;

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Small radar so the whole chain runs in seconds: 64 range bins out to
/// 50 m, 32 chirps, two frames.
pub fn mini_config(seed: u64) -> RunConfig {
    let mut c = RunConfig {
        seed,
        ..RunConfig::default()
    };
    c.radar = RadarConfig {
        bandwidth_hz: 192e6,
        chirp_s: 16e-6,
        chirps: 32,
        angle_bins: 32,
        frames: 2,
        ..RadarConfig::default()
    };
    c.pipeline.n_res_s = 2;
    c.pipeline.n_res_theta = 2;
    c.stft.n_fft = 32;
    c.stft.overlap = 31;
    c.model.d_model = 16;
    c.model.n_heads = 2;
    c.model.n_blocks = 1;
    c.model.mlp_ratio = 2;
    c.train.epochs = 3;
    c.train.k_fold = 3;
    c.train.batch_size = 4;
    c.dataset.n_samples = 12;
    c.dataset.noise_sigma = 0.5;
    c
}

pub fn run(config: &RunConfig, out: &Path) -> Result<()> {
    let s = config.seed;
    let checks = vec![
        check_axes(s),
        check_range_dft(s),
        check_cfar(s),
        check_stft(),
        check_gradient(s),
        check_container(s),
    ];
    let mut report = String::new();
    for c in &checks {
        let _ = writeln!(report, "{} {} {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    print!("{report}");
    write_atomic(&out.join("checks.txt"), report.as_bytes())?;

    let mini = mini_config(s);
    let dir = out.join("pipeline");
    commands::simulate(&mini, &dir)?;
    commands::process(&mini, &dir, &dir)?;
    commands::mds(&mini, &dir, &dir, None)?;
    commands::train(&mini, &dir, &dir)?;
    let ckpt = dir.join(commands::CHECKPOINT_FILE);
    commands::eval(&dir, &ckpt, &dir)?;
    let opts = ExplainOptions {
        sample: 0,
        class: None,
        block: None,
        attention: true,
    };
    commands::explain(&dir, &ckpt, &dir, &opts)?;

    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("self-test checks {}", failed.join(", "))))
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn check_axes(s: u64) -> Check {
    let mut rng = seed::rng(s, TAG_SELFTEST, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cfg = RadarConfig {
            carrier_hz: rng.gen_range(20e9..100e9),
            bandwidth_hz: rng.gen_range(100e6..4e9),
            chirp_s: rng.gen_range(10e-6..100e-6),
            sample_rate_hz: rng.gen_range(1e6..20e6),
            chirps: rng.gen_range(8..256),
            angle_bins: rng.gen_range(8..256),
            ..RadarConfig::default()
        };
        let a = derive_axes(&cfg).expect("positive sweep");
        let lambda = SPEED_OF_LIGHT / cfg.carrier_hz;
        let r_max = SPEED_OF_LIGHT * cfg.sample_rate_hz * cfg.chirp_s / (2.0 * cfg.bandwidth_hz);
        let n_s = (cfg.chirp_s * cfg.sample_rate_hz).round();
        worst = worst
            .max(rel_err(a.range_max, r_max))
            .max(rel_err(a.range_res, r_max / n_s))
            .max(rel_err(a.velocity_max, lambda / (4.0 * cfg.chirp_s)))
            .max(rel_err(a.velocity_res, lambda / (2.0 * cfg.chirp_s * cfg.chirps as f64)))
            .max(rel_err(a.angle_res, 2.0 / cfg.angle_bins as f64));
    }
    Check {
        name: "axes",
        pass: worst < 1e-9,
        detail: format!("max_rel_err={worst:.3e}"),
    }
}

fn check_range_dft(s: u64) -> Check {
    let mut rng = seed::rng(s, TAG_SELFTEST, 1);
    let mut cube = AdcCube::zeros(24, 3, 2, 2);
    for z in cube.data.iter_mut() {
        *z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    }
    let rd = range_fft(&cube, Window::Rectangular).expect("valid cube");
    let n = cube.n_samples;
    let mut worst: f64 = 0.0;
    for m in 0..cube.chirps {
        for tx in 0..2 {
            for rx in 0..2 {
                for k in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        let ph = -2.0 * PI * (k * i) as f64 / n as f64;
                        acc += cube.at(i, m, tx, rx) * Complex64::from_polar(1.0, ph);
                    }
                    worst = worst.max((rd.data[[k, m, tx, rx]] - acc).norm() / acc.norm().max(1.0));
                }
            }
        }
    }
    Check {
        name: "range_dft",
        pass: worst < 1e-9,
        detail: format!("max_err={worst:.3e}"),
    }
}

fn check_cfar(s: u64) -> Check {
    let mut rng = seed::rng(s, TAG_SELFTEST, 2);
    let (rows, cols) = (20, 16);
    let p = Array2::from_shape_fn((rows, cols), |_| -rng.gen::<f64>().max(1e-12).ln());
    let params = CfarParams {
        train: 2,
        guard: 1,
        alpha: 3.0,
    };
    let got = ca_cfar(&p, &params).expect("window fits");
    let mut expect = Vec::new();
    for r in 0..rows {
        for v in 0..cols {
            let (mut sum, mut n) = (0.0, 0.0);
            for rr in 0..rows {
                for vv in 0..cols {
                    let dr = rr.abs_diff(r);
                    let dv = vv.abs_diff(v).min(cols - vv.abs_diff(v));
                    if dr <= 3 && dv <= 3 && (dr > 1 || dv > 1) {
                        sum += p[[rr, vv]];
                        n += 1.0;
                    }
                }
            }
            if p[[r, v]] > 3.0 * sum / n {
                expect.push((r, v));
            }
        }
    }
    Check {
        name: "cfar",
        pass: got.cells == expect,
        detail: format!("detections={}", got.cells.len()),
    }
}

fn check_stft() -> Check {
    let params = StftParams::for_chirps(16, 12);
    let tone = 5;
    let series: Vec<Complex64> = (0..64)
        .map(|m| Complex64::from_polar(1.0, 2.0 * PI * (tone * m) as f64 / 16.0))
        .collect();
    let spec = stft_cell(&series, &params).expect("valid params");
    let pass = spec.columns().into_iter().all(|col| {
        let best = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i);
        best == Some(tone)
    });
    Check {
        name: "stft_tone",
        pass,
        detail: format!("frames={}", spec.ncols()),
    }
}

fn check_gradient(s: u64) -> Check {
    let model = Model::new(ModelConfig {
        n_tokens: 3,
        d_in: 5,
        d_model: 8,
        n_heads: 2,
        n_blocks: 1,
        mlp_ratio: 2,
        n_classes: 3,
        weight_decay: 0.01,
        decay_all: true,
        pooling: Pooling::Mean,
    })
    .expect("valid model");
    let mut rng = seed::rng(s, TAG_SELFTEST, 3);
    let mut params = model.init(&mut rng);
    params.iter_mut().for_each(|p| *p += rng.gen_range(-0.3..0.3));
    let x: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |p: &[f64]| {
        let logits = model.forward(p, &x).expect("finite").logits;
        model.loss(p, &logits, 1)
    };
    let (_, grads) = model.batch_gradient(&params, &[(&x, 1)]).expect("finite");
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut q = params.clone();
        q[i] = params[i] + h;
        let up = loss(&q);
        q[i] = params[i] - h;
        let fd = (up - loss(&q)) / (2.0 * h);
        let err = (fd - grads[i]).abs() / fd.abs().max(grads[i].abs()).max(1e-3);
        worst = worst.max(err);
    }
    Check {
        name: "gradient",
        pass: worst < 1e-4,
        detail: format!("params={} max_rel_err={worst:.3e}", params.len()),
    }
}

fn check_container(s: u64) -> Check {
    let mut rng = seed::rng(s, TAG_SELFTEST, 4);
    let values: Vec<f64> = (0..60).map(|_| rng.gen::<f64>() * 1e3 - 5e2).collect();
    let t = TensorContainer::new(vec![3, 4, 5], vec!["a", "b", "c"], mdslab::io::TensorData::F64(values))
        .expect("consistent shape");
    let bytes = t.to_bytes().expect("encodable");
    let back = TensorContainer::from_bytes(&bytes).expect("decodable");
    let truncated = TensorContainer::from_bytes(&bytes[..bytes.len() - 1]).is_err();
    Check {
        name: "container",
        pass: back == t && truncated,
        detail: format!("bytes={}", bytes.len()),
    }
}
