use ndarray::Array2;

use crate::error::{Error, Result};

/// Cell-averaging CFAR window. `train` and `guard` are half-widths applied
/// to both axes, so the training region is the square annulus between
/// radius `guard` and `train + guard`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarParams {
    pub train: usize,
    pub guard: usize,
    pub alpha: f64,
}

impl CfarParams {
    pub fn with_pfa(train: usize, guard: usize, pfa: f64) -> Result<Self> {
        let p = Self {
            train,
            guard,
            alpha: 1.0,
        };
        Ok(Self {
            alpha: alpha_for_pfa(p.n_cells(), pfa)?,
            ..p
        })
    }

    pub fn half_width(&self) -> usize {
        self.train + self.guard
    }

    /// Training cells of an interior window.
    pub fn n_cells(&self) -> usize {
        let outer = 2 * self.half_width() + 1;
        let inner = 2 * self.guard + 1;
        outer * outer - inner * inner
    }

    fn validate(&self) -> Result<()> {
        if self.train == 0 {
            return Err(Error::invalid("CFAR needs at least one training cell"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("CFAR alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Threshold factor giving false-alarm probability `pfa` for exponentially
/// distributed cell powers averaged over `n_cells` training cells:
/// `alpha = N (pfa^(-1/N) - 1)`.
pub fn alpha_for_pfa(n_cells: usize, pfa: f64) -> Result<f64> {
    if n_cells == 0 || !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::invalid(format!(
            "need n_cells > 0 and 0 < pfa < 1, got {n_cells} and {pfa}"
        )));
    }
    let n = n_cells as f64;
    Ok(n * (pfa.powf(-1.0 / n) - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    /// `(k_r, k_v)` in row-major order.
    pub cells: Vec<(usize, usize)>,
    /// Threshold `alpha * P_avg` of every cell.
    pub threshold: Array2<f64>,
}

impl DetectionSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Two-dimensional CA-CFAR over a `[range, Doppler]` power map.
///
/// The Doppler axis wraps. Training cells that fall outside the range axis
/// are dropped and `P_avg` is taken over the cells that remain. A cell is
/// detected when `P > alpha * P_avg`.
pub fn ca_cfar(power: &Array2<f64>, params: &CfarParams) -> Result<DetectionSet> {
    params.validate()?;
    let (rows, cols) = power.dim();
    let h = params.half_width();
    let window = 2 * h + 1;
    if window > rows || window > cols {
        return Err(Error::CfarWindow { window, rows, cols });
    }
    let g = params.guard as isize;
    let h = h as isize;
    let mut threshold = Array2::zeros((rows, cols));
    let mut cells = Vec::new();
    for r in 0..rows {
        for v in 0..cols {
            let mut sum = 0.0;
            let mut count = 0usize;
            for dr in -h..=h {
                let rr = r as isize + dr;
                if rr < 0 || rr >= rows as isize {
                    continue;
                }
                for dv in -h..=h {
                    if dr.abs() <= g && dv.abs() <= g {
                        continue;
                    }
                    let vv = (v as isize + dv).rem_euclid(cols as isize) as usize;
                    sum += power[[rr as usize, vv]];
                    count += 1;
                }
            }
            let t = params.alpha * sum / count as f64;
            threshold[[r, v]] = t;
            if power[[r, v]] > t {
                cells.push((r, v));
            }
        }
    }
    Ok(DetectionSet { cells, threshold })
}
