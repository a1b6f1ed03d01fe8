use acee_core::effects::{
    estimate_dag_total_effect, estimate_effects, estimate_mu, knn_query, ArmShift, ConditionalSampler, EffectSettings,
    EffectsError, ObservationalDataset, ScmSampler,
};
use acee_core::numerics::stats::{mean, variance};
use acee_core::numerics::{Matrix, Rng};
use acee_core::scm::{bench_model, BenchModel};
use proptest::prelude::*;

/// Point-mass generator `f(cond)`.
struct PointMass<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> ConditionalSampler for PointMass<F> {
    fn cond_dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, cond: &[f64], m: usize, _rng: &mut Rng) -> Result<Vec<f64>, EffectsError> {
        Ok(vec![(self.f)(cond); m])
    }
}

/// Point mass plus unit-variance noise, to exercise the random streams.
struct Noisy<F>(PointMass<F>);

impl<F: Fn(&[f64]) -> f64> ConditionalSampler for Noisy<F> {
    fn cond_dim(&self) -> usize {
        self.0.dim
    }

    fn sample(&self, cond: &[f64], m: usize, rng: &mut Rng) -> Result<Vec<f64>, EffectsError> {
        let c = (self.0.f)(cond);
        Ok((0..m).map(|_| c + rng.normal()).collect())
    }
}

fn empty_features(n: usize) -> Matrix {
    Matrix::zeros(n, 0)
}

#[test]
fn four_unit_hand_example() {
    let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0], vec![4.0]]).unwrap();
    let ds = ObservationalDataset::new(x, vec![1, 1, 0, 0], vec![3.0, 5.0, 1.0, 2.0]).unwrap();
    // mu_1(x) = 2 + x, mu_0(x) = x / 2.
    let s = PointMass {
        dim: 2,
        f: |c: &[f64]| if c[1] == 1.0 { 2.0 + c[0] } else { c[0] / 2.0 },
    };
    let settings = EffectSettings {
        m: 3,
        n_neighbors: Some(1),
        ..EffectSettings::default()
    };
    let r = estimate_effects(&ds, &empty_features(4), &s, &settings, None).unwrap();
    assert!((r.ate - 3.0).abs() < 1e-12);
    assert!((r.ate_bc - 5.125).abs() < 1e-12);
    assert!((r.ate_bc_closed - 5.125).abs() < 1e-12);
    let k: Vec<usize> = r.units.iter().map(|u| u.k_n).collect();
    assert_eq!(k, vec![1, 3, 3, 1]);
    let tc: Vec<f64> = r.units.iter().map(|u| u.tau_c).collect();
    assert_eq!(tc, vec![3.5, 5.0, 6.0, 6.0]);
}

fn random_instance(seed: u64) -> (ObservationalDataset, Matrix) {
    let mut rng = Rng::new(seed, 0);
    let n = 4 + rng.below(47);
    let p = 1 + rng.below(4);
    let q = rng.below(3);
    let x = Matrix::from_fn(n, p, |_, _| rng.normal());
    let mut d: Vec<u8> = (0..n).map(|_| (rng.uniform() < 0.4) as u8).collect();
    d[..4].copy_from_slice(&[0, 0, 1, 1]);
    let y = (0..n).map(|_| 3.0 * rng.normal()).collect();
    let f = Matrix::from_fn(n, q, |_, _| rng.normal());
    (ObservationalDataset::new(x, d, y).unwrap(), f)
}

#[test]
fn corrected_ate_identity_on_random_instances() {
    for seed in 0..100 {
        let (ds, f) = random_instance(seed);
        let dim = ds.p() + f.cols() + 1;
        let s = Noisy(PointMass {
            dim,
            f: |c: &[f64]| c.iter().sum::<f64>().sin() * 2.0 + c[c.len() - 1],
        });
        for include_self in [true, false] {
            let settings = EffectSettings {
                m: 5,
                n_neighbors: Some(1 + seed as usize % 6),
                include_self,
                seed,
            };
            let r = estimate_effects(&ds, &f, &s, &settings, None).unwrap();
            assert!((r.ate_bc - r.ate_bc_closed).abs() <= 1e-10, "seed {seed}");
            let mean_c = r.units.iter().map(|u| u.tau_c).sum::<f64>() / ds.n() as f64;
            assert!((mean_c - r.ate_bc).abs() <= 1e-12);
            if include_self && r.settings.n_neighbors[0] == r.settings.n_neighbors[1] {
                // Matching-count form K_N / N of the correction.
                let nn = r.settings.n_neighbors[0] as f64;
                let corr: f64 = r
                    .units
                    .iter()
                    .map(|u| (if u.d == 1 { 1.0 } else { -1.0 }) * u.k_n as f64 / nn * u.residual)
                    .sum();
                assert!((r.ate + corr / ds.n() as f64 - r.ate_bc).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn perfect_generator_needs_no_correction() {
    let (ds, f) = random_instance(3);
    let y = ds.y().to_vec();
    // Residuals vanish when the generator reproduces each observed outcome.
    let x0: Vec<f64> = ds.x().col(0);
    let lookup = move |c: &[f64]| {
        let i = x0.iter().position(|v| *v == c[0]).unwrap();
        y[i]
    };
    let s = PointMass {
        dim: ds.p() + f.cols() + 1,
        f: lookup,
    };
    let r = estimate_effects(&ds, &f, &s, &EffectSettings::default(), None).unwrap();
    assert!(r.units.iter().all(|u| u.residual.abs() < 1e-12));
    assert!((r.ate - r.ate_bc).abs() < 1e-12);
}

fn brute_knn(points: &Matrix, arms: &[u8], q: &[f64], arm: u8, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&i| arms[i] == arm)
        .map(|i| {
            let d: f64 = points.row(i).iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum();
            (d, i)
        })
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

#[test]
fn knn_matches_brute_force() {
    for seed in 0..200 {
        let mut rng = Rng::new(seed, 4);
        let n = 1 + rng.below(60);
        let dim = 1 + rng.below(4);
        // Coarse grid values create many exact ties.
        let pts = Matrix::from_fn(n, dim, |_, _| (rng.below(5) as f64) - 2.0);
        let arms: Vec<u8> = (0..n).map(|_| rng.below(2) as u8).collect();
        let q: Vec<f64> = (0..dim).map(|_| (rng.below(5) as f64) - 2.0).collect();
        let k = 1 + rng.below(8);
        for arm in 0..2u8 {
            let expect = brute_knn(&pts, &arms, &q, arm, k);
            match knn_query(&pts, &arms, &q, arm, k, None) {
                Ok(got) => assert_eq!(got, expect, "seed {seed}"),
                Err(EffectsError::EmptyArm { .. }) => assert!(expect.is_empty()),
                Err(e) => panic!("{e}"),
            }
        }
    }
}

#[test]
fn permuting_rows_permutes_units() {
    let (ds, f) = random_instance(17);
    let n = ds.n();
    let s = Noisy(PointMass {
        dim: ds.p() + f.cols() + 1,
        f: |c: &[f64]| c[0] * 2.0 + c[c.len() - 1],
    });
    let settings = EffectSettings {
        m: 10,
        seed: 4,
        ..EffectSettings::default()
    };
    let base = estimate_effects(&ds, &f, &s, &settings, None).unwrap();
    let perm = Rng::new(1, 1).permutation(n);
    let ids: Vec<u64> = perm.iter().map(|&i| i as u64).collect();
    let pr = estimate_effects(&ds.permute(&perm), &f.select_rows(&perm), &s, &settings, Some(&ids)).unwrap();
    for (pos, &orig) in perm.iter().enumerate() {
        assert_eq!(pr.units[pos], base.units[orig]);
    }
    assert!((pr.ate - base.ate).abs() <= 1e-12 * (1.0 + base.ate.abs()));
    assert!((pr.ate_bc - base.ate_bc).abs() <= 1e-12 * (1.0 + base.ate_bc.abs()));
}

fn m1_sampler() -> ScmSampler {
    let scm = bench_model(&BenchModel::M1).unwrap();
    ScmSampler::new(scm, 6, (0..6).map(Some).collect()).unwrap()
}

#[test]
fn oracle_mu_matches_closed_form() {
    let scm = bench_model(&BenchModel::M1).unwrap();
    let s = m1_sampler();
    let mut rng = Rng::new(2, 0);
    for _ in 0..10 {
        let mut cond: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        cond.push(rng.below(2) as f64);
        let truth = scm.mechanism(6).conditional_mean(&cond).unwrap();
        let est = estimate_mu(&s, &cond, 20_000, &mut rng).unwrap();
        assert!((est.mean - truth).abs() <= 3.5 * est.std_err, "{est:?} vs {truth}");
    }
    let point = PointMass { dim: 1, f: |_: &[f64]| 4.25 };
    assert_eq!(estimate_mu(&point, &[0.0], 7, &mut rng).unwrap().mean, 4.25);
    assert!(estimate_mu(&point, &[0.0], 0, &mut rng).is_err());
}

#[test]
fn monte_carlo_error_scales_with_root_m() {
    let s = m1_sampler();
    let cond = [0.3, -0.2, 0.1, 0.5, -0.4, 1.0];
    let spread = |m: usize| {
        let means: Vec<f64> = (0..100)
            .map(|r| estimate_mu(&s, &cond, m, &mut Rng::new(m as u64, r)).unwrap().mean)
            .collect();
        variance(&means).sqrt()
    };
    let ratio = spread(50) / spread(200);
    assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
}

#[test]
fn constant_treated_bias_is_removed() {
    let scm = bench_model(&BenchModel::M1).unwrap();
    let ds = scm.simulate(400, &mut Rng::new(5, 0)).unwrap().dataset(&scm).unwrap();
    let c = 1.5;
    let biased = ArmShift {
        inner: m1_sampler(),
        index: 5,
        shift: c,
    };
    let settings = EffectSettings {
        m: 50,
        seed: 9,
        ..EffectSettings::default()
    };
    let clean = estimate_effects(&ds, &empty_features(400), &m1_sampler(), &settings, None).unwrap();
    let r = estimate_effects(&ds, &empty_features(400), &biased, &settings, None).unwrap();
    assert!((r.ate - clean.ate - c).abs() < 1e-9);
    assert!((r.ate_bc - (r.ate - c)).abs() < 0.3, "{} vs {}", r.ate_bc, r.ate - c);
    // Per-unit corrected contrasts track the unbiased generator's contrasts.
    let gap: Vec<f64> = r.units.iter().zip(&clean.units).map(|(a, b)| a.tau_c - b.tau).collect();
    assert!(mean(&gap).abs() < 0.3);
}

#[test]
fn dag_effect_on_linear_example() {
    // V24 = 1, V23 = 0.5, V34 = 2 (1-based); total effect 2.
    let mut v = vec![vec![0.0; 4]; 4];
    v[1][3] = 1.0;
    v[1][2] = 0.5;
    v[2][3] = 2.0;
    v[0][1] = 0.7;
    let scm = bench_model(&BenchModel::LinearV(v)).unwrap();
    let x = scm.simulate(500, &mut Rng::new(1, 0)).unwrap().values;
    let order = [0, 1, 2, 3];
    // Generator of X4 given (X1, X2): do-clamping both predecessors of X2 and X2.
    let s = ScmSampler::new(scm, 3, vec![Some(0), Some(1)]).unwrap();
    let f = empty_features(500);
    let r = estimate_dag_total_effect(&x, &order, 1, 3, 1.0, 0.0, &f, &s, 50, 3).unwrap();
    let se = variance(&r.per_unit).sqrt() / (r.per_unit.len() as f64).sqrt();
    assert!((r.tau_hat - 2.0).abs() <= 3.0 * se.max(1e-3), "{} (se {se})", r.tau_hat);
    let zero = estimate_dag_total_effect(&x, &order, 1, 3, 0.4, 0.4, &f, &s, 50, 3).unwrap();
    assert_eq!(zero.tau_hat, 0.0);
    assert!(estimate_dag_total_effect(&x, &order, 3, 1, 1.0, 0.0, &f, &s, 50, 3).is_err());
}

#[test]
fn report_exports() {
    let (ds, f) = random_instance(2);
    let s = PointMass {
        dim: ds.p() + f.cols() + 1,
        f: |c: &[f64]| c[0],
    };
    let r = estimate_effects(&ds, &f, &s, &EffectSettings::default(), None).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "unit_id,d,y,mu0,mu1,mu0_se,mu1_se,mu0_c,mu1_c,tau,tau_c,k_n,residual");
    assert_eq!(text.lines().count(), ds.n() + 1);
    let json: serde_json::Value = serde_json::from_str(&r.summary_json()).unwrap();
    assert_eq!(json["ate_bc"].as_f64().unwrap(), r.ate_bc);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matching_counts_are_conserved(seed in 0u64..10_000, k in 1usize..6) {
        let (ds, f) = random_instance(seed);
        let pts = ds.x().hstack(&f).unwrap();
        let idx = acee_core::effects::NeighborIndex::build(&pts, ds.d(), k, true).unwrap();
        let (n0, n1) = ds.arm_sizes();
        for (arm, size) in [(0u8, n0), (1u8, n1)] {
            let total: usize = (0..ds.n()).filter(|&i| ds.d()[i] == arm).map(|i| idx.counts[i]).sum();
            prop_assert_eq!(total, ds.n() * k.min(size));
        }
    }
}
