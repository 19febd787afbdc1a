use super::*;

fn relu_net(sizes: &[usize], policy: PrecisionPolicy, seed: u64) -> MlpModel {
    MlpModel::new(
        sizes,
        Activation::Relu,
        policy,
        &mut RandomSource::new(seed),
    )
    .unwrap()
}

fn random_batch(n: usize, width: usize, classes: usize, seed: u64) -> (Vec<f64>, Vec<usize>) {
    let mut rng = RandomSource::new(seed);
    let x = (0..n * width)
        .map(|_| rng.uniform_range(-2.0, 2.0))
        .collect();
    let y = (0..n).map(|_| rng.below(classes)).collect();
    (x, y)
}

fn fixed312() -> FixedFormat {
    FixedFormat::signed(3, 12).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn zero_model_loss_is_log_classes() {
    for c in [2usize, 3, 10] {
        let m = MlpModel::zeros(&[4, 5, c], Activation::Tanh, PrecisionPolicy::float32()).unwrap();
        let (x, _) = random_batch(c * 4, 4, c, 1);
        let y: Vec<usize> = (0..c * 4).map(|i| i % c).collect();
        let pass = m.forward(&x, &y, &mut RandomSource::new(0)).unwrap();
        assert!((pass.loss - (c as f64).ln()).abs() < 1e-6);
    }
}

#[test]
fn float32_forward_tracks_float64_reference() {
    for seed in 0..20 {
        for act in [Activation::Relu, Activation::Tanh] {
            let m = MlpModel::new(
                &[3, 6, 4],
                act,
                PrecisionPolicy::float32(),
                &mut RandomSource::new(seed),
            )
            .unwrap();
            let (x, y) = random_batch(8, 3, 4, seed + 100);
            let pass = m.forward(&x, &y, &mut RandomSource::new(0)).unwrap();
            let r = reference::forward(m.layers(), act, &pass.activations[0], &y);
            assert!(rel_err(pass.loss, r.loss) < 1e-3);
            for (a, b) in pass
                .activations
                .last()
                .unwrap()
                .iter()
                .zip(r.activations.last().unwrap())
            {
                assert!((a - b).abs() <= 1e-3 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn widened_accumulation_is_no_worse_in_aggregate() {
    let (mut plain_total, mut wide_total, mut wide_wins) = (0.0, 0.0, 0);
    for seed in 0..100 {
        let plain = relu_net(&[16, 32, 4], PrecisionPolicy::float16_plain(), seed);
        let wide = MlpModel::from_layers(
            plain.sizes(),
            Activation::Relu,
            PrecisionPolicy {
                accumulate_widened: true,
                ..PrecisionPolicy::float16_plain()
            },
            plain.layers().to_vec(),
        )
        .unwrap();
        let (x, y) = random_batch(16, 16, 4, seed + 1000);
        let mut rng = RandomSource::new(0);
        let pp = plain.forward(&x, &y, &mut rng).unwrap();
        let pw = wide.forward(&x, &y, &mut rng).unwrap();
        let r = reference::forward(plain.layers(), Activation::Relu, &pp.activations[0], &y);
        let err = |p: &ForwardPass| -> f64 {
            p.activations
                .last()
                .unwrap()
                .iter()
                .zip(r.activations.last().unwrap())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (ep, ew) = (err(&pp), err(&pw));
        plain_total += ep;
        wide_total += ew;
        wide_wins += (ew <= ep) as usize;
    }
    assert!(plain_total >= wide_total, "{plain_total} vs {wide_total}");
    assert!(wide_wins >= 70, "{wide_wins}");
}

#[test]
fn unscaled_float32_gradients_match_reference() {
    for seed in 0..10 {
        let m = relu_net(&[3, 5, 3], PrecisionPolicy::float32(), seed);
        let (x, y) = random_batch(10, 3, 3, seed + 7);
        let mut rng = RandomSource::new(0);
        let g = m
            .backward(&m.forward(&x, &y, &mut rng).unwrap(), &mut rng)
            .unwrap();
        let r = reference::gradients(
            m.layers(),
            Activation::Relu,
            &x.iter().map(|&v| v as f32 as f64).collect::<Vec<_>>(),
            &y,
            0,
        );
        for (a, b) in g
            .weights
            .iter()
            .chain(&g.biases)
            .flatten()
            .zip(r.weights.iter().chain(&r.biases).flatten())
        {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-2), "{a} vs {b}");
        }
    }
}

#[test]
fn reference_gradients_scale_by_exactly_two_to_the_k() {
    for seed in 0..10 {
        let m = relu_net(&[4, 6, 3], PrecisionPolicy::float32(), seed);
        let (x, y) = random_batch(12, 4, 3, seed + 50);
        let g0 = reference::gradients(m.layers(), Activation::Relu, &x, &y, 0);
        let g4 = reference::gradients(m.layers(), Activation::Relu, &x, &y, 4);
        for (a, b) in g0
            .weights
            .iter()
            .chain(&g0.biases)
            .flatten()
            .zip(g4.weights.iter().chain(&g4.biases).flatten())
        {
            assert_eq!(16.0 * a, *b);
        }
        let u0 = reference::sgd_step(m.layers(), &g0, 0.1, 0);
        let u4 = reference::sgd_step(m.layers(), &g4, 0.1, 4);
        for (a, b) in u0.iter().zip(&u4) {
            assert!(a
                .weights
                .iter()
                .zip(&b.weights)
                .all(|(p, q)| p.to_bits() == q.to_bits()));
            assert!(a
                .biases
                .iter()
                .zip(&b.biases)
                .all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}

#[test]
fn reference_gradients_match_finite_differences() {
    for (seed, act) in [
        (1, Activation::Tanh),
        (2, Activation::Tanh),
        (3, Activation::Relu),
    ] {
        let m = MlpModel::new(
            &[3, 4, 3],
            act,
            PrecisionPolicy::float32(),
            &mut RandomSource::new(seed),
        )
        .unwrap();
        let (x, y) = random_batch(6, 3, 3, seed + 9);
        let g = reference::gradients(m.layers(), act, &x, &y, 0);
        let h = 1e-6;
        for l in 0..m.layers().len() {
            for idx in 0..m.layers()[l].weights.len() {
                let probe = |d: f64| {
                    let mut layers = m.layers().to_vec();
                    layers[l].weights[idx] += d;
                    reference::forward(&layers, act, &x, &y).loss
                };
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let an = g.weights[l][idx];
                // ReLU kinks are not differentiable; skip the rare probe
                // that straddles one.
                if act == Activation::Relu && (fd - an).abs() > 1e-3 {
                    continue;
                }
                assert!(
                    (fd - an).abs() <= 1e-4 * an.abs().max(1e-3),
                    "fd {fd} vs {an}"
                );
            }
        }
    }
}

/// A confident float32-trained model viewed through float16 storage:
/// most output gradients fall below the float16 subnormal range.
fn tiny_gradient_flushes(k: u32) -> usize {
    let task = synthetic_task(4);
    let mut base = relu_net(&[2, 8, 3], PrecisionPolicy::float32(), 4);
    train(
        &mut base,
        &task,
        &TrainConfig::default(),
        &mut RandomSource::new(5),
    );
    let mut layers = base.layers().to_vec();
    let last = layers.last_mut().unwrap();
    last.weights.iter_mut().for_each(|w| *w *= 3.0);
    last.biases.iter_mut().for_each(|b| *b *= 3.0);
    let policy = PrecisionPolicy {
        loss_scale_exponent: k,
        ..PrecisionPolicy::float16_mixed()
    };
    let m = MlpModel::from_layers(&[2, 8, 3], Activation::Relu, policy, layers).unwrap();
    let mut rng = RandomSource::new(0);
    let pass = m
        .forward(&task.train.features, &task.train.labels, &mut rng)
        .unwrap();
    m.backward(&pass, &mut rng).unwrap().zero_flushed
}

#[test]
fn loss_scaling_reduces_flushes_monotonically() {
    let counts: Vec<usize> = (0..=8).map(tiny_gradient_flushes).collect();
    assert!(counts[4] < counts[0], "{counts:?}");
    assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{counts:?}");
}

#[test]
fn oversized_loss_scale_is_reported() {
    let m = relu_net(
        &[2, 4, 2],
        PrecisionPolicy {
            loss_scale_exponent: 40,
            ..PrecisionPolicy::float16_mixed()
        },
        1,
    );
    let (x, y) = random_batch(4, 2, 2, 2);
    let mut rng = RandomSource::new(0);
    let pass = m.forward(&x, &y, &mut rng).unwrap();
    assert_eq!(
        m.backward(&pass, &mut rng),
        Err(TrainError::ScaleTooLarge(40))
    );
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let policies = [
        PrecisionPolicy::float32(),
        PrecisionPolicy::float16_plain(),
        PrecisionPolicy::float16_mixed(),
        PrecisionPolicy::fixed(fixed312(), Rounding::Stochastic),
        PrecisionPolicy {
            master_copy: true,
            ..PrecisionPolicy::fixed(fixed312(), Rounding::Stochastic)
        },
    ];
    for policy in policies {
        let mut m = relu_net(&[2, 5, 3], policy, 3);
        let before = m.clone();
        let (x, y) = random_batch(8, 2, 3, 4);
        let mut rng = RandomSource::new(9);
        for _ in 0..5 {
            let g = m
                .backward(&m.forward(&x, &y, &mut rng).unwrap(), &mut rng)
                .unwrap();
            m.optimizer_step(&g, 0.0, &mut rng).unwrap();
        }
        assert_eq!(m, before, "{:?}", policy.storage);
    }
}

fn single_weight(policy: PrecisionPolicy, w: f64) -> MlpModel {
    let layer = Layer {
        inputs: 1,
        outputs: 1,
        weights: vec![w],
        biases: vec![0.0],
    };
    MlpModel::from_layers(&[1, 1], Activation::Relu, policy, vec![layer]).unwrap()
}

#[test]
fn master_copy_accumulates_updates_below_storage_resolution() {
    // A weight near 1e-3: float16 spacing there is about 1e-6, float32
    // spacing about 1e-10, so a 1e-9 step is lost in float16 but kept in the
    // master copy.
    let grads = Gradients {
        weights: vec![vec![-1e-9]],
        biases: vec![vec![0.0]],
        scale_exponent: 0,
        zero_flushed: 0,
    };
    let w0 = 1e-3;
    let mut rng = RandomSource::new(0);
    let mut with_master = single_weight(
        PrecisionPolicy {
            master_copy: true,
            ..PrecisionPolicy::float16_plain()
        },
        w0,
    );
    let mut without = single_weight(PrecisionPolicy::float16_plain(), w0);
    let stored0 = with_master.layers()[0].weights[0];
    for _ in 0..10_000 {
        with_master.optimizer_step(&grads, 1.0, &mut rng).unwrap();
        without.optimizer_step(&grads, 1.0, &mut rng).unwrap();
    }
    let master = with_master.master().unwrap()[0].weights[0];
    // Each float32 update is off by at most half a float32 spacing.
    let half_ulp = 2f64.powi(-10 - 24);
    assert!(
        (master - stored0 - 1e-5).abs() <= 1e4 * half_ulp,
        "{}",
        master - stored0
    );
    assert!(with_master.layers()[0].weights[0] > stored0);
    assert_eq!(without.layers()[0].weights[0], stored0);
}

#[test]
fn master_and_storage_agree_up_to_one_rounding() {
    let task = synthetic_task(1);
    let mut m = relu_net(&[2, 6, 3], PrecisionPolicy::float16_mixed(), 1);
    let mut rng = RandomSource::new(2);
    for chunk in (0..task.train.len())
        .collect::<Vec<_>>()
        .chunks(32)
        .take(10)
    {
        let b = task.train.subset(chunk);
        let g = m
            .backward(
                &m.forward(&b.features, &b.labels, &mut rng).unwrap(),
                &mut rng,
            )
            .unwrap();
        m.optimizer_step(&g, 0.1, &mut rng).unwrap();
        for (s, ms) in m.layers().iter().zip(m.master().unwrap()) {
            for (&a, &b) in s.weights.iter().zip(&ms.weights) {
                assert_eq!(
                    a,
                    kernel::round_to(b, &FloatFormat::HALF, RoundingMode::NearestEven)
                );
            }
        }
    }
}

#[test]
fn clipping_bounds_every_applied_gradient() {
    let t = 0.01;
    let policy = PrecisionPolicy {
        clip_threshold: Some(t),
        ..PrecisionPolicy::float32()
    };
    let mut m = relu_net(&[2, 4, 2], policy, 1);
    let before = m.clone();
    let (x, y) = random_batch(16, 2, 2, 3);
    let mut rng = RandomSource::new(0);
    let g = m
        .backward(&m.forward(&x, &y, &mut rng).unwrap(), &mut rng)
        .unwrap();
    let expected = g
        .weights
        .iter()
        .chain(&g.biases)
        .flatten()
        .filter(|v| v.abs() > t)
        .count();
    assert!(expected > 0);
    assert_eq!(m.optimizer_step(&g, 1.0, &mut rng).unwrap(), expected);
    for (a, b) in m.layers().iter().zip(before.layers()) {
        for (p, q) in a.weights.iter().zip(&b.weights) {
            assert!((p - q).abs() <= t * (1.0 + 1e-6));
        }
    }
}

#[test]
fn invalid_policies_and_shapes() {
    let bad = PrecisionPolicy {
        rounding: Rounding::Stochastic,
        ..PrecisionPolicy::float16_plain()
    };
    assert!(matches!(bad.validate(), Err(TrainError::InvalidPolicy(_))));
    let bad = PrecisionPolicy {
        clip_threshold: Some(-1.0),
        ..PrecisionPolicy::float32()
    };
    assert!(bad.validate().is_err());
    assert!(MlpModel::zeros(&[3], Activation::Relu, PrecisionPolicy::float32()).is_err());
    let m = MlpModel::zeros(&[3, 2], Activation::Relu, PrecisionPolicy::float32()).unwrap();
    assert!(matches!(
        m.forward(&[1.0; 5], &[0, 1], &mut RandomSource::new(0)),
        Err(TrainError::Shape(_))
    ));
    assert!(matches!(
        m.forward(&[1.0; 3], &[2], &mut RandomSource::new(0)),
        Err(TrainError::Shape(_))
    ));
}

#[test]
fn evaluate_edge_cases() {
    let mut rng = RandomSource::new(8);
    let c = 4;
    let n = 4000;
    let x: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let y: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
    let d = Dataset::new(x, y, 1, c).unwrap();
    let m = MlpModel::zeros(&[1, c], Activation::Relu, PrecisionPolicy::float32()).unwrap();
    let p = 1.0 / c as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((evaluate(&m, &d) - p).abs() <= 3.0 * sigma);

    // One-hot inputs mapped straight to their labels.
    let features: Vec<f64> = (0..9)
        .flat_map(|i| (0..3).map(move |j| (i % 3 == j) as u8 as f64))
        .collect();
    let labels: Vec<usize> = (0..9).map(|i| i % 3).collect();
    let d = Dataset::new(features, labels, 3, 3).unwrap();
    let identity = Layer {
        inputs: 3,
        outputs: 3,
        weights: (0..9).map(|i| (i % 4 == 0) as u8 as f64).collect(),
        biases: vec![0.0; 3],
    };
    let m = MlpModel::from_layers(
        &[3, 3],
        Activation::Relu,
        PrecisionPolicy::float32(),
        vec![identity],
    )
    .unwrap();
    assert_eq!(evaluate(&m, &d), 1.0);
}

fn run(policy: PrecisionPolicy, task: &Split, seed: u64) -> TrainingReport {
    let mut m = relu_net(&[2, 16, 3], policy, seed);
    train(
        &mut m,
        task,
        &TrainConfig::default(),
        &mut RandomSource::new(seed + 1),
    )
}

#[test]
fn float32_baseline_separates_two_blobs() {
    let mut rng = RandomSource::new(12);
    let task = blobs(150, 2, 2.5, 0.6, &mut rng).split(0.25, &mut rng);
    let mut m = relu_net(&[2, 8, 2], PrecisionPolicy::float32(), 3);
    let report = train(
        &mut m,
        &task,
        &TrainConfig::default(),
        &mut RandomSource::new(4),
    );
    assert_eq!(report.epochs.len(), 51);
    assert!(report.diverged.is_none());
    assert!(report.final_accuracy() >= 0.95);
    assert!(report.epochs.last().unwrap().loss < report.epochs[0].loss);
}

#[test]
fn fixed_stochastic_and_float16_mixed_match_baseline() {
    let task = synthetic_task(21);
    let base = run(PrecisionPolicy::float32(), &task, 21).final_accuracy();
    let fixed = run(
        PrecisionPolicy::fixed(fixed312(), Rounding::Stochastic),
        &task,
        21,
    )
    .final_accuracy();
    let half = run(PrecisionPolicy::float16_mixed(), &task, 21).final_accuracy();
    assert!(base >= 0.95, "{base}");
    assert!((fixed - base).abs() <= 0.02, "{fixed} vs {base}");
    assert!((half - base).abs() <= 0.02, "{half} vs {base}");
}

#[test]
fn nearest_rounding_deficit_dominates_stochastic() {
    // A short, low learning-rate schedule makes most updates smaller than
    // half a grid step, which nearest rounding discards.
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 32,
        learning_rate: 0.02,
    };
    let narrow = FixedFormat::signed(3, 8).unwrap();
    let mut dominated = 0;
    for seed in 0..20 {
        let task = synthetic_task(100 + seed);
        let go = |policy: PrecisionPolicy| {
            let mut m = relu_net(&[2, 16, 3], policy, seed);
            train(&mut m, &task, &cfg, &mut RandomSource::new(seed + 1)).final_accuracy()
        };
        let base = go(PrecisionPolicy::float32());
        let nearest = base - go(PrecisionPolicy::fixed(narrow, Rounding::Nearest));
        let stochastic = base - go(PrecisionPolicy::fixed(narrow, Rounding::Stochastic));
        dominated += (nearest >= stochastic) as usize;
    }
    assert!(dominated >= 14, "{dominated}/20");
}

#[test]
fn training_is_deterministic() {
    let task = synthetic_task(2);
    for policy in [
        PrecisionPolicy::float16_mixed(),
        PrecisionPolicy::fixed(fixed312(), Rounding::Stochastic),
    ] {
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let go = || {
            let mut m = relu_net(&[2, 8, 3], policy, 5);
            let r = train(&mut m, &task, &cfg, &mut RandomSource::new(6));
            (r, m)
        };
        assert_eq!(go(), go());
    }
}

#[test]
fn zero_epochs_gives_initial_row_only() {
    let task = synthetic_task(2);
    let mut m = relu_net(&[2, 8, 3], PrecisionPolicy::float32(), 5);
    let r = train(
        &mut m,
        &task,
        &TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        },
        &mut RandomSource::new(6),
    );
    assert_eq!(r.epochs.len(), 1);
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epoch,loss,test_accuracy,zero_flushed_count,clipped_count\n0,"));
}

#[test]
fn runaway_learning_rate_is_flagged() {
    let task = synthetic_task(3);
    let mut m = relu_net(&[2, 8, 3], PrecisionPolicy::float16_plain(), 5);
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 32,
        learning_rate: 1e4,
    };
    let r = train(&mut m, &task, &cfg, &mut RandomSource::new(6));
    assert!(r.diverged.is_some());
    assert!(r.epochs.iter().all(|e| e.loss.is_finite()));
}
