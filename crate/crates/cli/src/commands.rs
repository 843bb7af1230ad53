use std::path::{Path, PathBuf};

use rayon::prelude::*;

use mdslab::io::labels::{format_labels, parse_labels, LabelRow};
use mdslab::io::{write_atomic, RunConfig, TensorContainer};
use mdslab::mds::{build_mds, reduce_dim, ReducedMds};
use mdslab::nn::{load_checkpoint, save_checkpoint, Model};
use mdslab::pipeline::{centroids_csv, detect, process_frames};
use mdslab::radar::derive_axes;
use mdslab::rva::BboxCube;
use mdslab::scene::{default_templates, frames_from_container, frames_to_container, sample_dataset, synth_adc};
use mdslab::train::{evaluate, run_cv_with, ConfusionMatrix, Example};
use mdslab::xai::{attention_received, bin_image, grad_cam, render_overlay, write_pgm};
use mdslab::{Error, Result};

use crate::{Cli, Command};

pub const CONFIG_FILE: &str = "run.cfg";
pub const LABELS_FILE: &str = "labels.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.tensor";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate => simulate(&resolve_config(cli, None)?, &cli.out),
        Command::Process { input } => {
            let input = input.as_deref().unwrap_or(&cli.out);
            process(&resolve_config(cli, Some(input))?, input, &cli.out)
        }
        Command::Mds { input, preview_bin } => {
            let input = input.as_deref().unwrap_or(&cli.out);
            mds(&resolve_config(cli, Some(input))?, input, &cli.out, *preview_bin)
        }
        Command::Train { input } => {
            let input = input.as_deref().unwrap_or(&cli.out);
            train(&resolve_config(cli, Some(input))?, input, &cli.out)
        }
        Command::Eval { input, checkpoint } => {
            let input = input.as_deref().unwrap_or(&cli.out);
            eval(input, &checkpoint_path(input, checkpoint), &cli.out)
        }
        Command::Explain {
            input,
            checkpoint,
            sample,
            class,
            block,
            attention,
        } => {
            let input = input.as_deref().unwrap_or(&cli.out);
            let opts = ExplainOptions {
                sample: *sample,
                class: *class,
                block: *block,
                attention: *attention,
            };
            explain(input, &checkpoint_path(input, checkpoint), &cli.out, &opts)
        }
        Command::Axes => axes(&resolve_config(cli, None)?),
        Command::Selftest => crate::selftest::run(&resolve_config(cli, None)?, &cli.out),
    }
}

/// `--config` wins, then `run.cfg` next to the input, then the defaults.
/// `--seed` overrides whichever was chosen.
fn resolve_config(cli: &Cli, input: Option<&Path>) -> Result<RunConfig> {
    let mut config = match (&cli.config, input) {
        (Some(src), _) => RunConfig::load(src)?,
        (None, Some(dir)) if dir.join(CONFIG_FILE).exists() => {
            RunConfig::load(&dir.join(CONFIG_FILE).to_string_lossy())?
        }
        _ => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn checkpoint_path(input: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| input.join(CHECKPOINT_FILE))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn read_labels(dir: &Path) -> Result<Vec<LabelRow>> {
    let path = dir.join(LABELS_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    let rows = parse_labels(&text)?;
    if rows.is_empty() {
        return Err(Error::invalid(format!("{} lists no samples", path.display())));
    }
    Ok(rows)
}

/// Writes the configuration and label table that let the next stage run
/// from `out` alone.
fn carry(config: &RunConfig, rows: &[LabelRow], out: &Path) -> Result<()> {
    write_text(&out.join(CONFIG_FILE), &config.to_text())?;
    write_text(&out.join(LABELS_FILE), &format_labels(rows))
}

pub fn simulate(config: &RunConfig, out: &Path) -> Result<()> {
    let scenes = sample_dataset(
        &config.radar,
        &default_templates(),
        config.dataset.n_samples,
        config.dataset.noise_sigma,
        config.seed,
    )?;
    let rows: Vec<LabelRow> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| LabelRow {
            index: i,
            class_id: s.class_id,
            file: format!("sample_{i:04}"),
        })
        .collect();
    scenes.par_iter().zip(&rows).try_for_each(|(s, row)| -> Result<()> {
        write_text(&out.join("scenes").join(format!("{}.scene", row.file)), &s.scene.to_text())?;
        let frames = synth_adc(&config.radar, &s.scene)?;
        frames_to_container(&frames)?.write(&out.join("adc").join(format!("{}.tensor", row.file)))
    })?;
    carry(config, &rows, out)?;
    eprintln!("wrote {} samples to {}", rows.len(), out.display());
    Ok(())
}

pub fn process(config: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let rows = read_labels(input)?;
    let params = config.processing()?;
    rows.par_iter().try_for_each(|row| -> Result<()> {
        let adc = TensorContainer::read(&input.join("adc").join(format!("{}.tensor", row.file)))?;
        let frames = frames_from_container(&adc)?;
        let centroids = detect(&frames, &config.radar, &params).map_err(|e| {
            eprintln!("sample {}: {e}", row.file);
            e
        })?;
        write_text(&out.join("centroids").join(format!("{}.csv", row.file)), &centroids_csv(&centroids))?;
        let bbox = process_frames(&frames, &centroids[0], &config.radar, &params)?;
        bbox.to_container()?
            .write(&out.join("bbox").join(format!("{}.tensor", row.file)))
    })?;
    carry(config, &rows, out)?;
    eprintln!("processed {} samples", rows.len());
    Ok(())
}

pub fn mds(config: &RunConfig, input: &Path, out: &Path, preview_bin: Option<usize>) -> Result<()> {
    let rows = read_labels(input)?;
    let stft = config.stft_params();
    rows.par_iter().try_for_each(|row| -> Result<()> {
        let bbox = BboxCube::from_container(&TensorContainer::read(
            &input.join("bbox").join(format!("{}.tensor", row.file)),
        )?)?;
        let x = reduce_dim(&build_mds(&bbox, &stft)?, config.norm)?;
        x.to_container()?
            .write(&out.join("mds").join(format!("{}.tensor", row.file)))?;
        let bin = match preview_bin {
            Some(b) => b,
            None => argmax(&x.token_energy()),
        };
        write_pgm(&out.join("preview").join(format!("{}.pgm", row.file)), &bin_image(&x, bin)?)
    })?;
    carry(config, &rows, out)?;
    eprintln!("wrote {} spectrograms", rows.len());
    Ok(())
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

fn load_examples(input: &Path) -> Result<(Vec<LabelRow>, Vec<ReducedMds>)> {
    let rows = read_labels(input)?;
    let xs = rows
        .iter()
        .map(|row| {
            ReducedMds::from_container(&TensorContainer::read(
                &input.join("mds").join(format!("{}.tensor", row.file)),
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, xs))
}

fn examples(rows: &[LabelRow], xs: &[ReducedMds]) -> Vec<Example> {
    rows.iter()
        .zip(xs)
        .map(|(r, x)| Example {
            input: x.as_slice().to_vec(),
            label: r.class_id,
        })
        .collect()
}

pub fn train(config: &RunConfig, input: &Path, out: &Path) -> Result<()> {
    let (rows, xs) = load_examples(input)?;
    let data = examples(&rows, &xs);
    let model = Model::new(config.model_config())?;
    eprintln!("training {} parameters on {} samples", model.param_count(), data.len());
    let report = run_cv_with(&model, &data, &config.hyper(), config.train.k_fold, config.seed, &mut |f, e, l| {
        eprintln!("fold {f} epoch {e} loss {l:.6}");
    })?;
    let mut confusion = ConfusionMatrix::new(model.config.n_classes);
    for f in &report.folds {
        for (c, n) in confusion.counts.iter_mut().zip(&f.confusion.counts) {
            *c += n;
        }
    }
    save_checkpoint(&model, &report.best_params)?.write(&out.join(CHECKPOINT_FILE))?;
    write_text(&out.join("report.txt"), &report.to_text())?;
    write_text(&out.join("loss.csv"), &report.loss_csv())?;
    write_text(&out.join("confusion.csv"), &confusion.to_csv())?;
    carry(config, &rows, out)?;
    println!("mean accuracy {:.4}, best {:.4} (fold {})", report.mean_accuracy, report.best_accuracy, report.best_fold);
    Ok(())
}

pub fn eval(input: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let (model, params) = load_checkpoint(&TensorContainer::read(checkpoint)?)?;
    let (rows, xs) = load_examples(input)?;
    let data = examples(&rows, &xs);
    let refs: Vec<&Example> = data.iter().collect();
    let e = evaluate(&model, &params, &refs)?;
    write_text(&out.join("metrics.csv"), &e.metrics_csv())?;
    write_text(&out.join("eval_confusion.csv"), &e.confusion.to_csv())?;
    println!("accuracy {:.4} on {} samples", e.accuracy, data.len());
    Ok(())
}

pub struct ExplainOptions {
    pub sample: usize,
    pub class: Option<usize>,
    /// One-based.
    pub block: Option<usize>,
    pub attention: bool,
}

pub fn explain(input: &Path, checkpoint: &Path, out: &Path, opts: &ExplainOptions) -> Result<()> {
    let (model, params) = load_checkpoint(&TensorContainer::read(checkpoint)?)?;
    let rows = read_labels(input)?;
    let row = rows
        .iter()
        .find(|r| r.index == opts.sample)
        .ok_or_else(|| Error::invalid(format!("no sample with index {}", opts.sample)))?;
    let x = ReducedMds::from_container(&TensorContainer::read(
        &input.join("mds").join(format!("{}.tensor", row.file)),
    )?)?;
    let n_blocks = model.config.n_blocks;
    let block = match opts.block {
        None => n_blocks - 1,
        Some(b) if (1..=n_blocks).contains(&b) => b - 1,
        Some(b) => return Err(Error::invalid(format!("block {b} outside 1..={n_blocks}"))),
    };
    let class = match opts.class {
        Some(c) => c,
        None => model.predict(&params, x.as_slice())?,
    };
    let map = grad_cam(&model, &params, &x, class, Some(block))?;
    let dir = out.join("explain");
    let prefix = format!("{}_", row.file);
    render_overlay(&x, &map, &dir, &prefix)?;
    write_text(&dir.join(format!("{prefix}relevance.csv")), &map.to_csv())?;
    if opts.attention {
        let att = attention_received(&model, &params, x.as_slice(), block)?;
        let mut csv = String::from("bin,range,angle,attention\n");
        for (b, a) in att.iter().enumerate() {
            let (r, t) = x.cell_of(b);
            csv.push_str(&format!("{b},{r},{t},{a}\n"));
        }
        write_text(&dir.join(format!("{prefix}attention.csv")), &csv)?;
    }
    println!(
        "sample {} (label {}) explained for class {class} at block {}",
        row.index,
        row.class_id,
        block + 1
    );
    Ok(())
}

pub fn axes(config: &RunConfig) -> Result<()> {
    let a = derive_axes(&config.radar)?;
    println!("range_res_m = {}", a.range_res);
    println!("range_max_m = {}", a.range_max);
    println!("velocity_res_mps = {}", a.velocity_res);
    println!("velocity_max_mps = {}", a.velocity_max);
    println!("angle_res = {}", a.angle_res);
    Ok(())
}
