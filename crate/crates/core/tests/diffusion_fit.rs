use acee_core::diffusion::{
    evaluate_loss, finetune_target, pretrain_source, sample_conditional, Architecture, FinetuneOptions, Schedule,
    LrSchedule, ScoreModel, TrainConfig, Weighting,
};
use acee_core::numerics::stats::{mean, variance};
use acee_core::numerics::{Matrix, Rng};
use acee_core::scm::{bench_model, shift_roots, BenchModel, Scm};

fn small_arch() -> Architecture {
    Architecture {
        embed_hidden: vec![64, 64],
        embed_dim: 16,
        head_hidden: vec![64, 64],
    }
}

fn cfg(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        max_steps: Some(steps),
        seed,
        ..TrainConfig::default()
    }
}

fn linear_data(n: usize, rng: &mut Rng) -> (Matrix, Vec<f64>) {
    let x: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let y = x.iter().map(|v| 2.0 * v + 0.5 * rng.normal()).collect();
    (Matrix::from_vec(n, 1, x).unwrap(), y)
}

#[test]
fn linear_conditional_means_are_recovered() {
    let mut rng = Rng::new(10, 0);
    let (c, y) = linear_data(2000, &mut rng);
    let (model, _) = pretrain_source(&c, &y, vec!["x".into()], small_arch(), Schedule::default(), &cfg(3000, 1)).unwrap();
    for x in [-1.0, 0.0, 1.0] {
        let draws = sample_conditional(&model, &[x], 500, &mut Rng::new(7, x.to_bits())).unwrap();
        let m = mean(&draws);
        assert!((m - 2.0 * x).abs() <= 0.15, "x = {x}: mean {m}");
        let sd = variance(&draws).sqrt();
        assert!((sd - 0.5).abs() <= 0.2, "x = {x}: sd {sd}");
    }
}

#[test]
fn unconditional_gaussian_is_recovered() {
    let mut rng = Rng::new(11, 0);
    let n = 2000;
    // The conditioning column is pure noise, independent of the outcome.
    let c = Matrix::from_fn(n, 1, |_, _| rng.normal());
    let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let (model, _) = pretrain_source(&c, &y, vec!["u".into()], small_arch(), Schedule::default(), &cfg(3000, 2)).unwrap();
    let draws = sample_conditional(&model, &[0.3], 1000, &mut Rng::new(8, 0)).unwrap();
    assert!(mean(&draws).abs() <= 0.1, "mean {}", mean(&draws));
    assert!((variance(&draws) - 1.0).abs() <= 0.15, "variance {}", variance(&draws));
}

#[test]
fn trained_score_matches_gaussian_marginal_score() {
    let mut rng = Rng::new(12, 0);
    let n = 4000;
    let c = Matrix::from_fn(n, 1, |_, _| rng.normal());
    let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let tcfg = TrainConfig {
        lr_schedule: LrSchedule::Cosine,
        ..cfg(4000, 3)
    };
    let (model, _) = pretrain_source(&c, &y, vec!["u".into()], small_arch(), Schedule::default(), &tcfg).unwrap();
    let tau = model.schedule.tau_max / 2.0;
    let a = Schedule::alpha(tau);
    let (my, sy) = (model.y_scale.mean[0], model.y_scale.sd[0]);
    // Population N(0, 1) in standardized units.
    let (mu0, s0) = (-my / sy, 1.0 / sy);
    let grid: Vec<f64> = (0..=20).map(|i| -2.0 + 0.2 * i as f64).collect();
    let z: Vec<f64> = grid.iter().map(|v| (v - my) / sy).collect();
    let got = model.score_standardized(&z, &[0.0], tau).unwrap();
    for (zi, g) in z.iter().zip(&got) {
        let analytic = -(zi - a * mu0) / (a * a * s0 * s0 + Schedule::sigma2(tau));
        assert!((g - analytic).abs() <= 0.1, "z = {zi}: {g} vs {analytic}");
    }
}

#[test]
fn training_and_sampling_are_reproducible() {
    let mut rng = Rng::new(13, 0);
    let (c, y) = linear_data(300, &mut rng);
    let run = || {
        let (m, rep) = pretrain_source(&c, &y, vec!["x".into()], small_arch(), Schedule::default(), &cfg(200, 5)).unwrap();
        let s = sample_conditional(&m, &[0.5], 20, &mut Rng::new(1, 1)).unwrap();
        (m, rep, s)
    };
    let (m1, r1, s1) = run();
    let (m2, r2, s2) = run();
    assert_eq!(m1, m2);
    assert_eq!(r1, r2);
    assert_eq!(s1, s2);
    let reloaded = ScoreModel::from_json(&m1.to_json()).unwrap();
    assert_eq!(sample_conditional(&reloaded, &[0.5], 20, &mut Rng::new(1, 1)).unwrap(), s1);
}

#[test]
fn finetuning_freezes_embedding_and_lowers_loss() {
    let mut rng = Rng::new(14, 0);
    let (c, y) = linear_data(600, &mut rng);
    let (src, _) = pretrain_source(&c, &y, vec!["x".into()], small_arch(), Schedule::default(), &cfg(300, 1)).unwrap();
    let (ct, yt) = {
        let x: Vec<f64> = (0..300).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| -v + 1.0 + 0.3 * rng.normal()).collect();
        (Matrix::from_vec(300, 1, x).unwrap(), y)
    };
    let tcfg = TrainConfig {
        epochs: 150,
        batch_size: 64,
        seed: 2,
        ..TrainConfig::default()
    };
    for warm_start in [true, false] {
        let (tuned, rep) = finetune_target(&src, &ct, &yt, &tcfg, FinetuneOptions { warm_start }).unwrap();
        assert_eq!(tuned.embed.params(), src.embed.params());
        assert_eq!(tuned.cond_scale, src.cond_scale);
        assert_ne!(tuned.head.params(), src.head.params());
        let first = rep.epoch_losses[0];
        let last = *rep.epoch_losses.last().unwrap();
        assert!(last < first, "epoch losses {first} -> {last}");
    }
}

/// Table-3-style setup on the NonlinSimpson template: generator of X4 given
/// (X1, X2, X3). Source shares the graph but has shifted, rescaled roots.
fn nonlin_pair(seed: u64, n_source: usize, n_target: usize) -> (Scm, Matrix, Vec<f64>, Matrix, Vec<f64>, Matrix, Vec<f64>) {
    let target = bench_model(&BenchModel::NonlinSimpson).unwrap();
    let source = shift_roots(&target, 0.5, 1.3).unwrap();
    let mut rng = Rng::new(seed, 99);
    let split = |sim: acee_core::scm::Simulation| {
        let v = &sim.values;
        (v.select_columns(&[0, 1, 2]), v.col(3))
    };
    let (cs, ys) = split(source.simulate(n_source, &mut rng).unwrap());
    let (ct, yt) = split(target.simulate(n_target, &mut rng).unwrap());
    let (cv, yv) = split(target.simulate(2000, &mut rng).unwrap());
    (target, cs, ys, ct, yt, cv, yv)
}

#[test]
fn source_pretraining_beats_random_embedding() {
    let layout: Vec<String> = ["X1", "X2", "X3"].iter().map(|s| s.to_string()).collect();
    let mut wins = 0;
    for seed in 0..10 {
        let (_, cs, ys, ct, yt, cv, yv) = nonlin_pair(seed, 2000, 200);
        let (src, _) = pretrain_source(&cs, &ys, layout.clone(), small_arch(), Schedule::default(), &cfg(1500, seed)).unwrap();
        let tcfg = cfg(600, seed + 100);
        let (with, _) = finetune_target(&src, &ct, &yt, &tcfg, FinetuneOptions::default()).unwrap();

        let mut init = Rng::new(seed, 5);
        let mut random = ScoreModel::new(small_arch(), layout.clone(), Schedule::default(), &mut init).unwrap();
        random.fit_standardization(&ct, &yt);
        let (without, _) = finetune_target(&random, &ct, &yt, &tcfg, FinetuneOptions::default()).unwrap();

        let eval = |m: &ScoreModel| {
            // Compare in the same units: both models standardize y on the target set.
            evaluate_loss(m, &cv, &yv, 4, Weighting::Epsilon, 77).unwrap()
        };
        if eval(&with) < eval(&without) {
            wins += 1;
        }
    }
    assert!(wins >= 8, "pretraining won {wins}/10");
}

#[test]
fn same_law_source_matches_joint_training() {
    let layout: Vec<String> = ["X1", "X2", "X3"].iter().map(|s| s.to_string()).collect();
    let target = bench_model(&BenchModel::NonlinSimpson).unwrap();
    let mut rng = Rng::new(21, 0);
    let take = |sim: acee_core::scm::Simulation| (sim.values.select_columns(&[0, 1, 2]), sim.values.col(3));
    let (cs, ys) = take(target.simulate(2000, &mut rng).unwrap());
    let (ct, yt) = take(target.simulate(2000, &mut rng).unwrap());
    let (cv, yv) = take(target.simulate(2000, &mut rng).unwrap());
    let (src, _) = pretrain_source(&cs, &ys, layout.clone(), small_arch(), Schedule::default(), &cfg(2000, 1)).unwrap();
    let (tuned, _) = finetune_target(&src, &ct, &yt, &cfg(2000, 2), FinetuneOptions::default()).unwrap();
    let (joint, _) = pretrain_source(&ct, &yt, layout, small_arch(), Schedule::default(), &cfg(2000, 3)).unwrap();
    let lt = evaluate_loss(&tuned, &cv, &yv, 4, Weighting::Epsilon, 5).unwrap();
    let lj = evaluate_loss(&joint, &cv, &yv, 4, Weighting::Epsilon, 5).unwrap();
    assert!((lt - lj).abs() <= 0.1 * lj, "fine-tuned {lt} vs joint {lj}");
}
