use daedra_core::corpus::Report;
use daedra_core::labels::{ClassId, NUM_CLASSES};
use daedra_core::model::{
    argmax, forward, loss_and_grad, predict, train, train_with, FeatureVector, ModelParams, TrainConfig,
};
use daedra_core::synth::{class_lexicons, separable_corpus};
use daedra_core::tokenizer::{train_wordpiece, TokenId, Vocabulary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng, width: usize, scale: f64) -> ModelParams {
    let weights = (0..NUM_CLASSES * width)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let mut bias = [0.0; NUM_CLASSES];
    bias.iter_mut().for_each(|b| *b = rng.random_range(-scale..scale));
    ModelParams::from_parts(width, weights, bias).unwrap()
}

fn random_features(rng: &mut ChaCha8Rng, width: usize) -> FeatureVector {
    let mut entries = Vec::new();
    for j in 0..width {
        if rng.random_bool(0.4) {
            entries.push((TokenId(j as u32), rng.random_range(1..5) as f64));
        }
    }
    FeatureVector { entries }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn forward_is_on_the_simplex(seed in any::<u64>(), scale in 0.01f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, 12, scale);
        let x = random_features(&mut rng, 12);
        let probs = forward(&p, &x).unwrap();
        prop_assert!(probs.iter().all(|q| *q >= 0.0 && q.is_finite()));
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn argmax_ignores_constant_logit_shift(seed in any::<u64>(), shift in -1e3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, 6, 3.0);
        let x = random_features(&mut rng, 6);
        let mut shifted = p.clone();
        shifted.bias.iter_mut().for_each(|b| *b += shift);
        prop_assert_eq!(argmax(&forward(&p, &x).unwrap()), argmax(&forward(&shifted, &x).unwrap()));
    }

    // weights in +-0.5 keep every class probability well above round-off
    #[test]
    fn gradient_agrees_with_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = 10;
        let p = random_params(&mut rng, width, 0.5);
        let xs: Vec<FeatureVector> = (0..4).map(|_| random_features(&mut rng, width)).collect();
        let batch: Vec<(&FeatureVector, ClassId)> = xs
            .iter()
            .map(|x| (x, ClassId::new(rng.random_range(0..8)).unwrap()))
            .collect();
        let (_, g) = loss_and_grad(&p, &batch, None).unwrap();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for k in 0..NUM_CLASSES {
            for j in 0..width {
                let mut plus = p.clone();
                let mut minus = p.clone();
                *plus.weight_mut(k, j) += h;
                *minus.weight_mut(k, j) -= h;
                let numeric = (loss_and_grad(&plus, &batch, None).unwrap().0
                    - loss_and_grad(&minus, &batch, None).unwrap().0)
                    / (2.0 * h);
                let analytic = g.weight(k, j);
                worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6));
            }
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.bias[k] += h;
            minus.bias[k] -= h;
            let numeric = (loss_and_grad(&plus, &batch, None).unwrap().0
                - loss_and_grad(&minus, &batch, None).unwrap().0)
                / (2.0 * h);
            worst = worst.max((numeric - g.bias[k]).abs() / numeric.abs().max(g.bias[k].abs()).max(1e-6));
        }
        prop_assert!(worst < 1e-5, "max relative error {worst}");
    }
}

fn separable_setup(n: usize) -> (Vec<Report>, Vocabulary) {
    let reports = separable_corpus(n, 31);
    let texts: Vec<&str> = reports.iter().map(|r| r.text.as_str()).collect();
    let vocab = train_wordpiece(&texts, 600, 2).unwrap();
    (reports, vocab)
}

#[test]
fn evaluation_schedule_and_best_checkpoint() {
    let (reports, vocab) = separable_setup(200);
    let config = TrainConfig {
        batch_size: 16,
        epochs: 3,
        eval_every_steps: 5,
        ..TrainConfig::desk()
    };
    let mut seen = Vec::new();
    let out = train_with(&reports, &reports, &vocab, &config, |c| {
        seen.push(c.step);
        Ok(())
    })
    .unwrap();
    assert_eq!(out.total_steps, 3 * 13);
    let steps: Vec<u64> = out.history.iter().map(|h| h.step).collect();
    assert_eq!(steps, vec![5, 10, 15, 20, 25, 30, 35, 39]);
    assert_eq!(seen, steps);
    let best_f1 = out.history.iter().map(|h| h.f1).fold(f64::MIN, f64::max);
    assert_eq!(out.best.f1(), best_f1);
    let first_best = out.history.iter().find(|h| h.f1 == best_f1).unwrap().step;
    assert_eq!(out.best.step, first_best);
}

#[test]
fn eight_class_separable_corpus_is_learned() {
    let (reports, vocab) = separable_setup(1600);
    let (train_set, test_set) = reports.split_at(1200);
    let config = TrainConfig {
        epochs: 3,
        eval_every_steps: 20,
        ..TrainConfig::desk()
    };
    let out = train(train_set, test_set, &vocab, &config).unwrap();
    assert!(out.best.f1() >= 0.99, "f1 {}", out.best.f1());
    assert!(out.history.last().unwrap().loss < out.history.first().unwrap().loss);
}

#[test]
fn injected_marker_word_changes_prediction() {
    let (reports, vocab) = separable_setup(800);
    let config = TrainConfig {
        epochs: 3,
        ..TrainConfig::desk()
    };
    let out = train(&reports, &reports, &vocab, &config).unwrap();
    let model = &out.best.classifier;
    let lex = class_lexicons(31);
    let neutral = "patient received vaccine dose";
    let (base, _) = model.predict(&vocab, neutral).unwrap();
    let target = ClassId::new(if base.value() == 5 { 6 } else { 5 }).unwrap();
    let marked = format!("{neutral} {} {}", lex[target.index()][0], lex[target.index()][1]);
    let (c, _) = model.predict(&vocab, &marked).unwrap();
    assert_eq!(c, target);
    assert_ne!(c, base);
    let reordered = format!(
        "{} dose {} vaccine received patient",
        lex[target.index()][1],
        lex[target.index()][0]
    );
    assert_eq!(
        model.predict(&vocab, &reordered).unwrap(),
        model.predict(&vocab, &marked).unwrap()
    );
}

#[test]
fn empty_text_predicts_bias_argmax() {
    let vocab = Vocabulary::with_tokens(["a"]).unwrap();
    let mut p = ModelParams::zeros(vocab.len());
    p.bias[6] = 0.3;
    p.bias[2] = 0.2;
    let (c, probs) = predict(&p, &vocab, "").unwrap();
    assert_eq!(c, ClassId::new(6).unwrap());
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn same_seed_same_checkpoint_different_seed_different_path() {
    let (reports, vocab) = separable_setup(300);
    let config = TrainConfig {
        batch_size: 32,
        epochs: 2,
        eval_every_steps: 4,
        seed: 5,
        ..TrainConfig::desk()
    };
    let a = train(&reports, &reports, &vocab, &config).unwrap();
    let b = train(&reports, &reports, &vocab, &config).unwrap();
    assert_eq!(a.best, b.best);
    let c = train(&reports, &reports, &vocab, &TrainConfig { seed: 6, ..config }).unwrap();
    assert_ne!(a.best.classifier.params, c.best.classifier.params);
}

#[test]
fn rayon_pool_size_does_not_change_results() {
    let (reports, vocab) = separable_setup(300);
    let config = TrainConfig {
        batch_size: 64,
        epochs: 2,
        eval_every_steps: 3,
        ..TrainConfig::desk()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| train(&reports, &reports, &vocab, &config).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.best, four.best);
    assert_eq!(one.history, four.history);
}
