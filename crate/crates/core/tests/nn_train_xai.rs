mod common;

use std::f64::consts::PI;

use common::*;
use mdslab::mds::{stft_cell, NormMode, ReducedMds, StftParams};
use mdslab::nn::mat::Mat;
use mdslab::nn::{param_count, AdamConfig, Model, ModelConfig, Pooling};
use mdslab::train::*;
use mdslab::xai::*;
use mdslab::{seed, Complex64};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use rand::Rng;

fn cfg(d_model: usize, n_blocks: usize, pooling: Pooling) -> ModelConfig {
    ModelConfig {
        n_tokens: 4,
        d_in: 6,
        d_model,
        n_heads: 2,
        n_blocks,
        mlp_ratio: 2,
        n_classes: 3,
        weight_decay: 0.01,
        decay_all: true,
        pooling,
    }
}

fn jittered(model: &Model, s: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = seed::rng(s, 100, 0);
    let mut p = model.init(&mut rng);
    p.iter_mut().for_each(|x| *x += rng.gen_range(-0.2..0.2));
    let x = (0..model.config.n_tokens * model.config.d_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (p, x)
}

fn check_all_gradients(model: &Model, s: u64) {
    let (params, x) = jittered(model, s);
    let label = (s % 3) as usize;
    let (_, grads) = model.batch_gradient(&params, &[(&x, label)]).unwrap();
    let f = |p: &[f64]| {
        let logits = model.forward(p, &x).unwrap().logits;
        model.loss(p, &logits, label)
    };
    for i in 0..params.len() {
        let fd = central_diff(&f, &params, i, 1e-5);
        let err = grad_rel_err(grads[i], fd, 1e-4);
        assert!(err < 1e-4, "seed {s} param {i}: analytic {} numeric {fd}", grads[i]);
    }
}

#[test]
fn every_parameter_passes_finite_differences() {
    let model = Model::new(cfg(16, 1, Pooling::Mean)).unwrap();
    for s in 0..5 {
        check_all_gradients(&model, s);
    }
}

#[test]
fn class_token_and_deeper_models_pass_finite_differences() {
    check_all_gradients(&Model::new(cfg(8, 2, Pooling::ClassToken)).unwrap(), 7);
    let mut c = cfg(8, 2, Pooling::Mean);
    c.decay_all = false;
    check_all_gradients(&Model::new(c).unwrap(), 8);
}

#[test]
fn l2_term_contributes_two_lambda_phi() {
    let model = Model::new(cfg(8, 1, Pooling::Mean)).unwrap();
    let (params, x) = jittered(&model, 3);
    let (_, with) = model.batch_gradient(&params, &[(&x, 1)]).unwrap();
    let mut without = vec![0.0; params.len()];
    model.sample_gradient(&params, &x, 1, &mut without).unwrap();
    for i in 0..params.len() {
        assert!((with[i] - without[i] - 0.02 * params[i]).abs() < 1e-12);
    }
}

#[test]
fn parameter_count_matches_layout() {
    for c in [cfg(16, 1, Pooling::Mean), cfg(8, 3, Pooling::ClassToken), ModelConfig::default()] {
        let model = Model::new(c.clone()).unwrap();
        let d = c.d_model;
        let f = d * c.mlp_ratio;
        let block = 4 * d + 4 * (d * d + d) + (d * f + f) + (f * d + d);
        let cls = if c.pooling == Pooling::ClassToken { d } else { 0 };
        let want = (c.d_in * d + d) + c.n_tokens * d + cls + c.n_blocks * block + (d * c.n_classes + c.n_classes);
        assert_eq!(model.param_count(), want);
        assert_eq!(param_count(&c), Some(want));
    }
}

#[test]
fn mismatched_params_and_inputs_are_rejected() {
    let model = Model::new(cfg(8, 1, Pooling::Mean)).unwrap();
    let (params, x) = jittered(&model, 1);
    assert!(model.forward(&params[1..], &x).is_err());
    assert!(model.forward(&params, &x[1..]).is_err());
    let mut bad = params.clone();
    bad[0] = f64::NAN;
    assert!(token_relevance(&model, &bad, &x, 0, 0).is_err());
    assert!(token_relevance(&model, &params, &x, 3, 0).is_err());
    assert!(token_relevance(&model, &params, &x, 0, 1).is_err());
}

#[test]
fn logit_gradient_wrt_block_output_matches_finite_differences() {
    let model = Model::new(cfg(8, 2, Pooling::Mean)).unwrap();
    let (params, x) = jittered(&model, 4);
    let tape = model.forward(&params, &x).unwrap();
    for class in 0..3 {
        let mut dl = vec![0.0; 3];
        dl[class] = 1.0;
        let grads = model.backward(&params, &x, &tape, &dl, None);
        for block in 0..2 {
            let a = tape.block_output(block).clone();
            let f = |v: &[f64]| {
                let m = Mat::from_vec(a.rows, a.cols, v.to_vec());
                model.logits_from_block(&params, block, &m).unwrap()[class]
            };
            for i in 0..a.data.len() {
                let fd = central_diff(&f, &a.data, i, 1e-5);
                assert!(grad_rel_err(grads[block].data[i], fd, 1e-4) < 1e-4, "class {class} block {block} entry {i}");
            }
        }
    }
}

#[test]
fn relevance_matches_hand_computation() {
    let a = Mat::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0]);
    let g = Mat::from_vec(3, 2, vec![3.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
    // abar = (1, 1)
    assert_eq!(relevance_from_activations(&a, &g, 0), vec![1.0, 1.0, 0.0]);
    // skipping row 0 gives abar = (0, 1.5)
    assert_eq!(relevance_from_activations(&a, &g, 1), vec![1.5, 0.0]);
}

#[test]
fn relevance_depends_on_the_class() {
    let model = Model::new(cfg(16, 1, Pooling::Mean)).unwrap();
    let (params, x) = jittered(&model, 9);
    let maps: Vec<Vec<f64>> = (0..3).map(|c| token_relevance(&model, &params, &x, c, 0).unwrap()).collect();
    assert!(maps[0] != maps[1] || maps[1] != maps[2]);
}

#[test]
fn attention_received_sums_to_one() {
    for pooling in [Pooling::Mean, Pooling::ClassToken] {
        let model = Model::new(cfg(8, 2, pooling)).unwrap();
        let (params, x) = jittered(&model, 2);
        let a = attention_received(&model, &params, &x, 1).unwrap();
        assert_eq!(a.len(), 4);
        let total: f64 = a.iter().sum();
        if pooling == Pooling::Mean {
            assert!((total - 1.0).abs() < 1e-12);
        } else {
            assert!(total > 0.0 && total < 1.0);
        }
    }
}

#[test]
fn upsampling_keeps_the_hot_cell() {
    let mut src = Array2::zeros((3, 4));
    src[[1, 2]] = 1.0;
    let up = upsample_bilinear(&src, 30, 40);
    let (mut best, mut at) = (f64::MIN, (0, 0));
    for ((r, c), &v) in up.indexed_iter() {
        if v > best {
            (best, at) = ((v), (r, c));
        }
    }
    assert_eq!((at.0 / 10, at.1 / 10), (1, 2));
    assert!(up.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn hot_colormap_endpoints() {
    assert_eq!(hot(0.0), [0.0, 0.0, 0.0]);
    assert_eq!(hot(1.0), [1.0, 1.0, 1.0]);
    assert_eq!(hot(1.0 / 3.0), [1.0, 0.0, 0.0]);
}

#[test]
fn spearman_matches_oracle_with_ties() {
    let a = [1.0, 2.0, 2.0, 5.0, 3.0, 3.0, 3.0];
    let b = [0.5, 0.1, 0.9, 4.0, 2.0, 2.0, 7.0];
    assert!((spearman(&a, &b) - spearman_oracle(&a, &b)).abs() < 1e-12);
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 0.0);
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
}

fn tone_example(freq: f64, label: usize, n_tokens: usize, n_fft: usize, rng: &mut impl Rng) -> Example {
    let p = StftParams::for_chirps(n_fft, n_fft - 2);
    let len = n_fft + 2 * (n_fft - 1);
    let mut input = Vec::new();
    for _ in 0..n_tokens {
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        let series: Vec<Complex64> = (0..len)
            .map(|m| {
                Complex64::from_polar(1.0, 2.0 * PI * freq * m as f64 / n_fft as f64 + phase)
                    + Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1))
            })
            .collect();
        let s = stft_cell(&series, &p).unwrap();
        input.extend(s.iter().map(|z| z.norm().ln_1p()));
    }
    Example { input, label }
}

fn toy_set(n: usize, s: u64) -> Vec<Example> {
    let mut rng = seed::rng(s, 101, 0);
    (0..n).map(|i| tone_example(if i % 2 == 0 { 1.0 } else { 5.0 }, i % 2, 4, 8, &mut rng)).collect()
}

fn toy_model() -> Model {
    Model::new(ModelConfig {
        n_tokens: 4,
        d_in: 64,
        d_model: 16,
        n_heads: 2,
        n_blocks: 1,
        mlp_ratio: 2,
        n_classes: 2,
        weight_decay: 1e-3,
        decay_all: true,
        pooling: Pooling::Mean,
    })
    .unwrap()
}

fn toy_hyper(epochs: usize) -> TrainHyper {
    TrainHyper {
        adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
        batch_size: 4,
        epochs,
    }
}

#[test]
fn separable_tones_are_learned_perfectly() {
    let data = toy_set(24, 1);
    let report = run_cv(&toy_model(), &data, &toy_hyper(30), 3, 5).unwrap();
    assert_eq!(report.mean_accuracy, 1.0);
    for f in &report.folds {
        let lead: f64 = f.epoch_loss[..10].iter().sum::<f64>() / 10.0;
        let trail: f64 = f.epoch_loss[20..].iter().sum::<f64>() / 10.0;
        assert!(trail < lead);
    }
}

#[test]
fn training_is_deterministic() {
    let data = toy_set(12, 2);
    let a = run_cv(&toy_model(), &data, &toy_hyper(3), 3, 9).unwrap();
    let b = run_cv(&toy_model(), &data, &toy_hyper(3), 3, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_bookkeeping() {
    let data = toy_set(12, 3);
    let model = toy_model();
    let r = run_cv(&model, &data, &toy_hyper(2), 4, 1).unwrap();
    let best = r.folds.iter().map(|f| f.accuracy).fold(f64::MIN, f64::max);
    assert_eq!(r.best_accuracy, best);
    let mean = r.folds.iter().map(|f| f.accuracy).sum::<f64>() / 4.0;
    assert!((r.mean_accuracy - mean).abs() < 1e-15);
    // the first fold reaching the best accuracy is kept
    assert_eq!(r.best_fold, r.folds.iter().position(|f| f.accuracy == best).unwrap());
    let val: Vec<&Example> = r.plan.val(r.best_fold).iter().map(|&i| &data[i]).collect();
    assert_eq!(evaluate(&model, &r.best_params, &val).unwrap().accuracy, r.best_accuracy);
    assert!(r.folds.iter().all(|f| f.epoch_loss.len() == 2));
}

#[test]
fn untrained_models_sit_at_chance() {
    let model = Model::new(ModelConfig { n_classes: 3, ..cfg(8, 1, Pooling::Mean) }).unwrap();
    let mut rng = seed::rng(0, 102, 0);
    let data: Vec<Example> = (0..30)
        .map(|i| Example { input: (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect(), label: i % 3 })
        .collect();
    let mut accs = Vec::new();
    for s in 0..20 {
        let r = run_cv(&model, &data, &TrainHyper { epochs: 0, ..TrainHyper::default() }, 3, s).unwrap();
        assert!(r.folds.iter().all(|f| f.epoch_loss.is_empty()));
        accs.push(r.mean_accuracy);
    }
    let mean = accs.iter().sum::<f64>() / 20.0;
    // 600 predictions in total
    let half_width = 3.0 * (1.0 / 3.0 * 2.0 / 3.0 / 600.0f64).sqrt();
    assert!((mean - 1.0 / 3.0).abs() < half_width, "mean accuracy {mean}");
}

#[test]
fn kfold_examples() {
    let p = kfold_split(10, 5, 1).unwrap();
    assert!(p.folds.iter().all(|f| f.len() == 2));
    let p = kfold_split(11, 5, 1).unwrap();
    let mut sizes: Vec<usize> = p.folds.iter().map(Vec::len).collect();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    assert!(kfold_split(3, 5, 0).is_err());
    assert!(kfold_split(10, 1, 0).is_err());
}

#[test]
fn evaluation_examples() {
    let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let perfect = evaluate_predictions(&truth, &truth, 3).unwrap();
    assert_eq!(perfect.accuracy, 1.0);
    assert!(perfect.per_class.iter().all(|c| c.fp == 0 && c.fn_ == 0));
    let zeros = evaluate_predictions(&vec![0; 30], &truth, 3).unwrap();
    assert!((zeros.accuracy - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!((0..3).map(|p| zeros.confusion.get(p, 0)).collect::<Vec<_>>(), vec![10, 10, 10]);
    assert!(evaluate_predictions(&[], &[], 3).is_err());
}

fn reduced(values: Vec<f64>, ns: usize, na: usize, nf: usize) -> ReducedMds {
    ReducedMds { data: Array3::from_shape_vec((ns * na, nf, nf), values).unwrap(), n_res_s: ns, n_res_theta: na, norm: NormMode::Linear }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kfold_is_a_partition(n in 2usize..80, k in 2usize..10, s in any::<u64>()) {
        prop_assume!(n >= k);
        let p = kfold_split(n, k, s).unwrap();
        let mut all: Vec<usize> = p.folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = p.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn confusion_identities(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..100)) {
        let (pred, truth): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let e = evaluate_predictions(&pred, &truth, 4).unwrap();
        let n = pairs.len() as u64;
        prop_assert_eq!(e.confusion.total(), n);
        let correct = pairs.iter().filter(|(p, t)| p == t).count() as u64;
        prop_assert_eq!(e.confusion.trace(), correct);
        prop_assert!((e.accuracy - correct as f64 / n as f64).abs() < 1e-15);
        for c in 0..4 {
            let counts = e.per_class[c];
            prop_assert_eq!(counts.tp + counts.fp + counts.fn_ + counts.tn, n);
            prop_assert_eq!(e.confusion.row_sum(c), truth.iter().filter(|&&t| t == c).count() as u64);
            prop_assert_eq!(counts.tp + counts.fn_, e.confusion.row_sum(c));
            prop_assert_eq!(counts.tp + counts.fp, e.confusion.col_sum(c));
        }
    }

    #[test]
    fn relevance_is_never_negative(s in 0u64..10_000) {
        let model = Model::new(cfg(8, 2, Pooling::Mean)).unwrap();
        let (params, x) = jittered(&model, s);
        for class in 0..3 {
            for block in 0..2 {
                prop_assert!(token_relevance(&model, &params, &x, class, block).unwrap().iter().all(|&r| r >= 0.0));
            }
        }
    }

    #[test]
    fn overlay_stays_in_range(s in 0u64..1000) {
        let mut rng = seed::rng(s, 103, 0);
        let x = reduced((0..4 * 16).map(|_| rng.gen::<f64>()).collect(), 2, 2, 4);
        let rel = RelevanceMap { values: (0..4).map(|_| rng.gen::<f64>() * 3.0).collect(), block: 0, class: 0, n_res_s: 2, n_res_theta: 2 };
        let o = overlay(&x, &rel).unwrap();
        prop_assert!(o.blended.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(o.relevance.dim(), o.mds.dim());
    }
}
