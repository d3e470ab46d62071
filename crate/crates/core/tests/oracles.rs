//! Numerical and statistical oracles for the network, memory and streams.

use lifelong_core::{
    evaluate, init_params, loss_and_grad, make_synthetic_stream, sgd_step, Batch, EpisodicMemory,
    Example, MemoryMode, NetworkSpec, ParamVector, StreamConfig, StreamKind, SyntheticParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, classes: usize, head: usize) -> Batch<f64> {
    let inputs = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Batch::new(inputs, labels, head)
}

/// Every parameter, biases included, drawn from `U(-1, 1)`. Zero biases can
/// put a pre-activation exactly on the ReLU kink when all inputs to a unit
/// are dead, where central differences see half the slope.
fn random_params(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> ParamVector<f64> {
    ParamVector((0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn loss_at(spec: &NetworkSpec, w: &[f64], batch: &Batch<f64>) -> f64 {
    loss_and_grad(spec, w, batch).unwrap().loss
}

/// Central differences, coordinate by coordinate.
fn numeric_grad(spec: &NetworkSpec, w: &[f64], batch: &Batch<f64>, h: f64) -> Vec<f64> {
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = loss_at(spec, &probe, batch);
            probe[i] = orig - h;
            let down = loss_at(spec, &probe, batch);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Per-coordinate relative error. Coordinates where both values are below
/// `floor` are compared absolutely against it instead: central differences
/// carry roughly `ε_mach · |loss| / h ≈ 1e-11` of rounding noise, which swamps
/// the relative error of near-zero coordinates.
fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[test]
fn gradient_matches_finite_differences() {
    let spec = NetworkSpec::new(6, vec![5, 4], 1, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let w = random_params(&spec, &mut rng);
        let batch = random_batch(&mut rng, 4, 6, 3, 0);
        let analytic = loss_and_grad(&spec, &w, &batch).unwrap().grad;
        let numeric = numeric_grad(&spec, &w, &batch, 1e-5);
        worst = worst.max(max_rel_err(&analytic, &numeric, 1e-4));
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn store_gradient_matches_finite_differences() {
    let spec = NetworkSpec::new(6, vec![5, 4], 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut mem = EpisodicMemory::new(5, MemoryMode::Reservoir);
    for task in 0..2 {
        for _ in 0..5 {
            let ex = Example {
                input: (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
                label: rng.random_range(0..3),
            };
            mem.offer(task, task, &ex, &mut rng);
        }
    }
    let w = random_params(&spec, &mut rng);
    let grads = mem.per_task_ref_grads(&spec, &w, 2).unwrap();
    assert_eq!(grads.len(), 2);
    for (task, g) in grads.iter().enumerate() {
        let batch = Batch::from_examples(mem.store(task), task);
        let numeric = numeric_grad(&spec, &w, &batch, 1e-5);
        let err = max_rel_err(&g.grad, &numeric, 1e-4);
        assert!(err < 1e-6, "task {task}: {err:e}");
    }
    assert!(mem.per_task_ref_grads(&spec, &w, 0).unwrap().is_empty());
}

#[test]
fn sequential_steps_differ_from_summed_step() {
    let spec = NetworkSpec::new(6, vec![5, 4], 1, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let w: ParamVector<f64> = init_params(&spec, 0);
    let (b1, b2) = (random_batch(&mut rng, 8, 6, 3, 0), random_batch(&mut rng, 8, 6, 3, 0));
    let g1 = loss_and_grad(&spec, &w, &b1).unwrap().grad;
    let w1 = sgd_step(&w, &g1, 0.5);
    let g2 = loss_and_grad(&spec, &w1, &b2).unwrap().grad;
    let two = sgd_step(&w1, &g2, 0.5);
    let g2_at_w = loss_and_grad(&spec, &w, &b2).unwrap().grad;
    let summed: Vec<f64> = g1.iter().zip(&g2_at_w).map(|(a, b)| a + b).collect();
    assert_ne!(two, sgd_step(&w, &summed, 0.5));
}

fn offer_sequence(capacity: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mem = EpisodicMemory::new(capacity, MemoryMode::Reservoir);
    for i in 0..n {
        let ex = Example {
            input: vec![i as f64],
            label: 0,
        };
        mem.offer(0, 0, &ex, &mut rng);
    }
    assert_eq!(mem.seen_count(0), n);
    mem.store(0).iter().map(|e| e.input[0] as usize).collect()
}

#[test]
fn reservoir_with_capacity_one_keeps_each_example_equally_often() {
    let (n, trials) = (5, 100_000);
    let mut counts = vec![0usize; n];
    for seed in 0..trials {
        for i in offer_sequence(1, n, seed) {
            counts[i] += 1;
        }
    }
    let expected = trials as f64 / n as f64;
    for &c in &counts {
        let freq = c as f64 / trials as f64;
        assert!((freq - 1.0 / n as f64).abs() < 0.01, "{counts:?}");
    }
    // Capacity one makes the kept index multinomial; χ² with n−1 = 4 degrees
    // of freedom has 13.277 as its 1% critical value.
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 13.277, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn reservoir_inclusion_probability_is_capacity_over_n() {
    let (cap, n, trials) = (3, 8, 100_000u64);
    let mut counts = vec![0usize; n];
    for seed in 0..trials {
        let kept = offer_sequence(cap, n, seed + 1_000_000);
        assert_eq!(kept.len(), cap);
        for i in kept {
            counts[i] += 1;
        }
    }
    let p = cap as f64 / n as f64;
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        let z = (c as f64 / trials as f64 - p) / sd;
        // Bonferroni-corrected two-sided 1% threshold over 8 examples.
        assert!(z.abs() < 3.23, "example {i}: z = {z}");
    }
}

#[test]
fn reference_draws_split_evenly_between_equal_stores() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut mem = EpisodicMemory::new(250, MemoryMode::Reservoir);
    for task in 0..2 {
        for i in 0..250 {
            let ex = Example {
                input: vec![i as f64],
                label: 0,
            };
            mem.offer(task, task, &ex, &mut rng);
        }
    }
    let mut per_task = [0usize; 2];
    for _ in 0..1000 {
        for (task, batch) in mem.sample_ref_batch(2, 100, &mut rng).unwrap() {
            per_task[task] += batch.len();
        }
    }
    let total = (per_task[0] + per_task[1]) as f64;
    assert_eq!(total, 100_000.0);
    assert!((per_task[0] as f64 / total - 0.5).abs() < 0.01, "{per_task:?}");
    assert!(mem.sample_ref_batch(0, 10, &mut rng).is_none());
}

#[test]
fn uniform_logits_score_chance_on_random_labels() {
    let spec = NetworkSpec::new(4, vec![3], 1, 10).unwrap();
    let w = ParamVector::<f64>::zeros(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 10_000;
    let batch = random_batch(&mut rng, n, 4, 10, 0);
    let acc = evaluate(&spec, &w, &[batch]).unwrap();
    // Four standard deviations of the binomial proportion.
    let sd = (0.1_f64 * 0.9 / n as f64).sqrt();
    assert!((acc - 0.1).abs() < 4.0 * sd, "{acc}");
}

#[test]
fn synthetic_tasks_are_linearly_separable() {
    let params = SyntheticParams::default();
    let cfg = StreamConfig {
        kind: StreamKind::Synthetic,
        num_tasks: 2,
        examples_per_task: 0,
        cv_tasks: 0,
        seed: 5,
    };
    let stream = make_synthetic_stream::<f64>(&cfg, &params).unwrap();
    assert_ne!(stream[0].test[0].input, stream[1].test[0].input);
    let spec = NetworkSpec::new(params.dim, vec![], 1, params.classes).unwrap();
    let task = &stream[0];
    let mut w: ParamVector<f64> = init_params(&spec, 0);
    for _ in 0..5 {
        for chunk in task.train.chunks(10) {
            let g = loss_and_grad(&spec, &w, &Batch::from_examples(chunk, 0)).unwrap().grad;
            w = sgd_step(&w, &g, 0.05);
        }
    }
    let acc = evaluate(&spec, &w, &[Batch::from_examples(&task.test, 0)]).unwrap();
    assert!(acc >= 0.99, "linear probe accuracy {acc}");
}
