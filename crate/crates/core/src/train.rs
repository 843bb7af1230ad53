//! K-fold cross-validated training and classification metrics.
//!
//! For each fold the model is re-initialized from a fold-derived seed and
//! trained with Adam on shuffled mini-batches for a fixed number of epochs,
//! then scored once on the held-out fold. The parameters of the fold with
//! the highest validation accuracy are kept.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, Model, OptState};
use crate::seed::{self, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    /// Flattened `[token, feature]` model input.
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn val(&self, j: usize) -> &[usize] {
        &self.folds[j]
    }

    pub fn train(&self, j: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

/// Shuffles `0..n` and cuts it into `k` contiguous folds; the first
/// `n % k` folds get one extra item.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} samples cannot fill {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed, tag::FOLDS, 0));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let len = base + usize::from(j < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan { folds, seed })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 8,
            epochs: 50,
        }
    }
}

/// `K x K` counts, rows are true classes and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.k + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, p: usize) -> u64 {
        (0..self.k).map(|q| self.get(p, q)).sum()
    }

    pub fn col_sum(&self, q: usize) -> u64 {
        (0..self.k).map(|p| self.get(p, q)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn class_counts(&self, c: usize) -> ClassCounts {
        let tp = self.get(c, c);
        let fp = self.col_sum(c) - tp;
        let fn_ = self.row_sum(c) - tp;
        ClassCounts {
            tp,
            fp,
            fn_,
            tn: self.total() - tp - fp - fn_,
        }
    }

    /// Header row of predicted classes, then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for q in 0..self.k {
            let _ = write!(out, ",{q}");
        }
        out.push('\n');
        for p in 0..self.k {
            let _ = write!(out, "{p}");
            for q in 0..self.k {
                let _ = write!(out, ",{}", self.get(p, q));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassCounts>,
}

impl Evaluation {
    /// `class,tp,fp,fn,tn` rows followed by the accuracy.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("class,tp,fp,fn,tn\n");
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "{c},{},{},{},{}", m.tp, m.fp, m.fn_, m.tn);
        }
        let _ = writeln!(out, "accuracy,{}", self.accuracy);
        out
    }
}

pub fn evaluate_predictions(predicted: &[usize], truth: &[usize], k: usize) -> Result<Evaluation> {
    if truth.is_empty() {
        return Err(Error::invalid("cannot evaluate an empty set"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::shape("prediction and label counts differ"));
    }
    let mut confusion = ConfusionMatrix::new(k);
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= k || t >= k {
            return Err(Error::invalid(format!("class index out of range 0..{k}")));
        }
        confusion.add(t, p);
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(Evaluation {
        accuracy: correct as f64 / truth.len() as f64,
        per_class: (0..k).map(|c| confusion.class_counts(c)).collect(),
        confusion,
    })
}

pub fn evaluate(model: &Model, params: &[f64], data: &[&Example]) -> Result<Evaluation> {
    let predicted = data
        .iter()
        .map(|e| model.predict(params, &e.input))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<usize> = data.iter().map(|e| e.label).collect();
    evaluate_predictions(&predicted, &truth, model.config.n_classes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Mean training loss of every epoch.
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub plan: FoldPlan,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub best_accuracy: f64,
    pub best_fold: usize,
    pub best_params: Vec<f64>,
    pub hyper: TrainHyper,
}

impl TrainReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let h = &self.hyper;
        let _ = writeln!(out, "folds = {}", self.folds.len());
        let _ = writeln!(out, "seed = {}", self.plan.seed);
        let _ = writeln!(out, "epochs = {}", h.epochs);
        let _ = writeln!(out, "batch_size = {}", h.batch_size);
        let _ = writeln!(out, "lr = {}", h.adam.lr);
        let _ = writeln!(out, "parameters = {}", self.best_params.len());
        for (j, f) in self.folds.iter().enumerate() {
            let _ = writeln!(out, "fold.{j}.size = {}", self.plan.val(j).len());
            let _ = writeln!(out, "fold.{j}.accuracy = {}", f.accuracy);
            if let Some(l) = f.epoch_loss.last() {
                let _ = writeln!(out, "fold.{j}.final_loss = {l}");
            }
        }
        let _ = writeln!(out, "accuracy.mean = {}", self.mean_accuracy);
        let _ = writeln!(out, "accuracy.best = {}", self.best_accuracy);
        let _ = writeln!(out, "best_fold = {}", self.best_fold);
        out
    }

    /// `fold,epoch,loss`.
    pub fn loss_csv(&self) -> String {
        let mut out = String::from("fold,epoch,loss\n");
        for (j, f) in self.folds.iter().enumerate() {
            for (e, l) in f.epoch_loss.iter().enumerate() {
                let _ = writeln!(out, "{j},{e},{l}");
            }
        }
        out
    }
}

/// Trains one fold from a fresh initialization. Returns the parameters and
/// the per-epoch mean loss. `progress` sees `(epoch, loss)`.
pub fn train_fold(
    model: &Model,
    data: &[Example],
    train: &[usize],
    hyper: &TrainHyper,
    fold: usize,
    seed: u64,
    progress: &mut dyn FnMut(usize, f64),
) -> Result<(Vec<f64>, Vec<f64>)> {
    if hyper.batch_size == 0 || hyper.batch_size > train.len() {
        return Err(Error::invalid(format!(
            "batch size {} must be in 1..={}",
            hyper.batch_size,
            train.len()
        )));
    }
    let mut params = model.init(&mut seed::rng(seed, tag::INIT, fold as u64));
    let mut opt = OptState::new(params.len(), hyper.adam);
    let mut shuffle = seed::rng(seed, tag::SHUFFLE, fold as u64);
    let mut order = train.to_vec();
    let mut losses = Vec::with_capacity(hyper.epochs);
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let batch: Vec<(&[f64], usize)> = chunk
                .iter()
                .map(|&i| (data[i].input.as_slice(), data[i].label))
                .collect();
            let (loss, grads) = model.batch_gradient(&params, &batch)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    fold,
                    epoch,
                    batch: b,
                    loss,
                });
            }
            opt.step(&mut params, &grads);
            total += loss * chunk.len() as f64;
        }
        let mean = total / order.len() as f64;
        progress(epoch, mean);
        losses.push(mean);
    }
    Ok((params, losses))
}

pub fn run_cv(model: &Model, data: &[Example], hyper: &TrainHyper, k_fold: usize, seed: u64) -> Result<TrainReport> {
    run_cv_with(model, data, hyper, k_fold, seed, &mut |_, _, _| {})
}

/// [`run_cv`] with a `(fold, epoch, loss)` progress callback.
pub fn run_cv_with(
    model: &Model,
    data: &[Example],
    hyper: &TrainHyper,
    k_fold: usize,
    seed: u64,
    progress: &mut dyn FnMut(usize, usize, f64),
) -> Result<TrainReport> {
    if let Some(e) = data.iter().find(|e| e.label >= model.config.n_classes) {
        return Err(Error::invalid(format!("label {} out of range", e.label)));
    }
    let plan = kfold_split(data.len(), k_fold, seed)?;
    let mut folds = Vec::with_capacity(k_fold);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    for j in 0..k_fold {
        let train = plan.train(j);
        let (params, epoch_loss) = train_fold(model, data, &train, hyper, j, seed, &mut |e, l| progress(j, e, l))?;
        let val: Vec<&Example> = plan.val(j).iter().map(|&i| &data[i]).collect();
        let eval = evaluate(model, &params, &val)?;
        if best.as_ref().map_or(true, |b| eval.accuracy > b.1) {
            best = Some((j, eval.accuracy, params));
        }
        folds.push(FoldResult {
            accuracy: eval.accuracy,
            confusion: eval.confusion,
            epoch_loss,
        });
    }
    let (best_fold, best_accuracy, best_params) = best.expect("at least two folds");
    let mean_accuracy = folds.iter().map(|f| f.accuracy).sum::<f64>() / k_fold as f64;
    Ok(TrainReport {
        plan,
        folds,
        mean_accuracy,
        best_accuracy,
        best_fold,
        best_params,
        hyper: *hyper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes() {
        let p = kfold_split(10, 5, 1).unwrap();
        assert!(p.folds.iter().all(|f| f.len() == 2));
        let p = kfold_split(11, 5, 1).unwrap();
        let sizes: Vec<usize> = p.folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
        assert!(kfold_split(3, 5, 1).is_err());
        assert!(kfold_split(3, 1, 1).is_err());
    }

    #[test]
    fn train_and_val_partition_the_data() {
        let p = kfold_split(23, 4, 9).unwrap();
        for j in 0..4 {
            let mut all = p.train(j);
            all.extend_from_slice(p.val(j));
            all.sort_unstable();
            assert_eq!(all, (0..23).collect::<Vec<_>>());
        }
    }

    #[test]
    fn perfect_predictor() {
        let truth = [0, 1, 2, 2, 1, 0];
        let e = evaluate_predictions(&truth, &truth, 3).unwrap();
        assert_eq!(e.accuracy, 1.0);
        for c in &e.per_class {
            assert_eq!((c.fp, c.fn_), (0, 0));
        }
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let e = evaluate_predictions(&[0; 30], &truth, 3).unwrap();
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((0..3).map(|p| e.confusion.get(p, 0)).collect::<Vec<_>>(), vec![10, 10, 10]);
        for c in &e.per_class {
            assert_eq!(c.tp + c.fp + c.fn_ + c.tn, 30);
        }
        assert!(evaluate_predictions(&[], &[], 3).is_err());
    }

    #[test]
    fn confusion_csv_layout() {
        let e = evaluate_predictions(&[1, 0], &[0, 0], 2).unwrap();
        assert_eq!(e.confusion.to_csv(), "true\\pred,0,1\n0,1,1\n1,0,0\n");
    }
}
