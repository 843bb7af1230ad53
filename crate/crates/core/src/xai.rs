//! Grad-CAM relevance over transformer tokens and its rendering.
//!
//! For class logit `z_k` and block output `A` (`tokens x channels`):
//!
//! ```text
//! abar_j = mean_t dz_k / dA[t, j]
//! M_t    = max(0, sum_j abar_j A[t, j])
//! ```
//!
//! Tokens are MDS bins, so `M` reshapes to the `(range, angle)` crop grid.

use std::path::Path;

use ndarray::{Array2, Array3};

use crate::dsp::shift_index;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::mds::ReducedMds;
use crate::nn::mat::Mat;
use crate::nn::{Model, Pooling};

#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    /// `M_t >= 0`, one per MDS bin.
    pub values: Vec<f64>,
    /// Zero-based block index.
    pub block: usize,
    pub class: usize,
    pub n_res_s: usize,
    pub n_res_theta: usize,
}

impl RelevanceMap {
    /// `[range, angle]` grid; inverts the bin flattening of the MDS.
    pub fn spatial(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.n_res_s, self.n_res_theta), self.values.clone())
            .expect("one value per bin")
    }

    /// Values scaled so the maximum is 1 (all zeros stay zero).
    pub fn normalized(&self) -> Vec<f64> {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            self.values.iter().map(|v| v / max).collect()
        } else {
            vec![0.0; self.values.len()]
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,range,angle,relevance\n");
        for (b, v) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "{b},{},{},{v}\n",
                b / self.n_res_theta,
                b % self.n_res_theta
            ));
        }
        out
    }
}

/// `ReLU(sum_j abar_j A[t, j])` with `abar` the token-mean of `grad`. The
/// first `skip` rows (a class token) are left out of both steps.
pub fn relevance_from_activations(activations: &Mat, grad: &Mat, skip: usize) -> Vec<f64> {
    let rows = skip..activations.rows;
    let n = rows.len() as f64;
    let mut abar = vec![0.0; grad.cols];
    for t in rows.clone() {
        abar.iter_mut().zip(grad.row(t)).for_each(|(a, g)| *a += g / n);
    }
    rows.map(|t| crate::nn::mat::dot(&abar, activations.row(t)).max(0.0))
        .collect()
}

/// Per-token Grad-CAM relevance of `class` at `block` (zero-based).
pub fn token_relevance(model: &Model, params: &[f64], input: &[f64], class: usize, block: usize) -> Result<Vec<f64>> {
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("parameters".into()));
    }
    let cfg = &model.config;
    if class >= cfg.n_classes {
        return Err(Error::invalid(format!("class {class} out of range")));
    }
    if block >= cfg.n_blocks {
        return Err(Error::invalid(format!(
            "block {block} out of range for a {}-block model",
            cfg.n_blocks
        )));
    }
    let tape = model.forward(params, input)?;
    let mut dlogits = vec![0.0; cfg.n_classes];
    dlogits[class] = 1.0;
    let grads = model.backward(params, input, &tape, &dlogits, None);
    let skip = usize::from(cfg.pooling == Pooling::ClassToken);
    Ok(relevance_from_activations(tape.block_output(block), &grads[block], skip))
}

/// Grad-CAM map for one reduced MDS. `block = None` uses the last block.
pub fn grad_cam(model: &Model, params: &[f64], x: &ReducedMds, class: usize, block: Option<usize>) -> Result<RelevanceMap> {
    let block = block.unwrap_or(model.config.n_blocks.saturating_sub(1));
    let values = token_relevance(model, params, x.as_slice(), class, block)?;
    Ok(RelevanceMap {
        values,
        block,
        class,
        n_res_s: x.n_res_s,
        n_res_theta: x.n_res_theta,
    })
}

/// Attention each token receives at `block`, averaged over heads and queries.
pub fn attention_received(model: &Model, params: &[f64], input: &[f64], block: usize) -> Result<Vec<f64>> {
    if block >= model.config.n_blocks {
        return Err(Error::invalid(format!("block {block} out of range")));
    }
    let tape = model.forward(params, input)?;
    let skip = usize::from(model.config.pooling == Pooling::ClassToken);
    let heads = &tape.blocks[block].attention;
    let n = heads[0].rows;
    let mut out = vec![0.0; n - skip];
    let scale = 1.0 / (heads.len() * n) as f64;
    for a in heads {
        for i in 0..n {
            for (o, w) in out.iter_mut().zip(&a.row(i)[skip..]) {
                *o += w * scale;
            }
        }
    }
    Ok(out)
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    if da == 0.0 || db == 0.0 {
        0.0
    } else {
        num / (da * db).sqrt()
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// One bin's spectrogram with zero Doppler centred vertically, scaled to
/// `[0, 1]`.
pub fn bin_image(x: &ReducedMds, bin: usize) -> Result<Array2<f64>> {
    if bin >= x.n_bins() {
        return Err(Error::invalid(format!("bin {bin} out of range")));
    }
    let (_, nf, nt) = x.data.dim();
    let mut img = Array2::zeros((nf, nt));
    for k in 0..nf {
        for f in 0..nt {
            img[[shift_index(k, nf), f]] = x.data[[bin, k, f]];
        }
    }
    Ok(scale_unit(img))
}

/// All bins tiled on the `(range, angle)` grid: tile `(i, j)` is the
/// spectrogram of bin `(i, j)`, rows frequency and columns frame.
pub fn mds_mosaic(x: &ReducedMds) -> Array2<f64> {
    let (_, nf, nt) = x.data.dim();
    let mut img = Array2::zeros((x.n_res_s * nf, x.n_res_theta * nt));
    for b in 0..x.n_bins() {
        let (i, j) = x.cell_of(b);
        for k in 0..nf {
            for f in 0..nt {
                img[[i * nf + shift_index(k, nf), j * nt + f]] = x.data[[b, k, f]];
            }
        }
    }
    scale_unit(img)
}

fn scale_unit(mut img: Array2<f64>) -> Array2<f64> {
    let max = img.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        img.mapv_inplace(|v| (v / max).max(0.0));
    } else {
        img.fill(0.0);
    }
    img
}

/// Bilinear resize with pixel-centre alignment and edge clamping.
pub fn upsample_bilinear(src: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    let coord = |o: usize, n_out: usize, n_in: usize| {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = Array2::zeros((out_h, out_w));
    for y in 0..out_h {
        let (y0, y1, fy) = coord(y, out_h, h);
        for x in 0..out_w {
            let (x0, x1, fx) = coord(x, out_w, w);
            let top = src[[y0, x0]] * (1.0 - fx) + src[[y0, x1]] * fx;
            let bot = src[[y1, x0]] * (1.0 - fx) + src[[y1, x1]] * fx;
            out[[y, x]] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Black, red, yellow, white ramp.
pub fn hot(r: f64) -> [f64; 3] {
    let c = |v: f64| v.clamp(0.0, 1.0);
    [c(3.0 * r), c(3.0 * r - 1.0), c(3.0 * r - 2.0)]
}

/// `(1 - alpha r) gray + alpha r hot(r)` per channel.
pub fn blend(gray: &Array2<f64>, relevance: &Array2<f64>, alpha: f64) -> Array3<f64> {
    let (h, w) = gray.dim();
    let mut out = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let r = relevance[[y, x]];
            let color = hot(r);
            for (c, col) in color.iter().enumerate() {
                out[[y, x, c]] = (1.0 - alpha * r) * gray[[y, x]] + alpha * r * col;
            }
        }
    }
    out
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary greyscale PGM of values in `[0, 1]`.
pub fn pgm_bytes(img: &Array2<f64>) -> Vec<u8> {
    let (h, w) = img.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.iter().map(|&v| to_byte(v)));
    out
}

/// Binary colour PPM of `[h, w, 3]` values in `[0, 1]`.
pub fn ppm_bytes(img: &Array3<f64>) -> Vec<u8> {
    let (h, w, _) = img.dim();
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(img.iter().map(|&v| to_byte(v)));
    out
}

pub fn write_pgm(path: &Path, img: &Array2<f64>) -> Result<()> {
    write_atomic(path, &pgm_bytes(img))
}

pub fn write_ppm(path: &Path, img: &Array3<f64>) -> Result<()> {
    write_atomic(path, &ppm_bytes(img))
}

pub const OVERLAY_ALPHA: f64 = 0.5;

/// Images behind an overlay: the MDS mosaic, the relevance upsampled to the
/// same size and their blend.
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub mds: Array2<f64>,
    pub relevance: Array2<f64>,
    pub blended: Array3<f64>,
}

pub fn overlay(x: &ReducedMds, relevance: &RelevanceMap) -> Result<Overlay> {
    if (relevance.n_res_s, relevance.n_res_theta) != (x.n_res_s, x.n_res_theta) {
        return Err(Error::shape("relevance grid does not match the MDS crop"));
    }
    let mds = mds_mosaic(x);
    let (h, w) = mds.dim();
    let norm = RelevanceMap {
        values: relevance.normalized(),
        ..relevance.clone()
    };
    let rel = upsample_bilinear(&norm.spatial(), h, w);
    let blended = blend(&mds, &rel, OVERLAY_ALPHA);
    Ok(Overlay {
        mds,
        relevance: rel,
        blended,
    })
}

/// Writes `mds.pgm`, `relevance.pgm` and `overlay.ppm` under `dir` with the
/// given file-name prefix.
pub fn render_overlay(x: &ReducedMds, relevance: &RelevanceMap, dir: &Path, prefix: &str) -> Result<()> {
    let o = overlay(x, relevance)?;
    write_pgm(&dir.join(format!("{prefix}mds.pgm")), &o.mds)?;
    write_pgm(&dir.join(format!("{prefix}relevance.pgm")), &o.relevance)?;
    write_ppm(&dir.join(format!("{prefix}overlay.ppm")), &o.blended)
}
