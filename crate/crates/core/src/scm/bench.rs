use serde::{Deserialize, Serialize};

use super::{BenchOutcome, Dag, Mechanism, NoiseMode, Propensity, Scm, ScmError, Term};

/// Named benchmark generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchModel {
    M1,
    M2,
    M3,
    M4,
    NonlinSimpson,
    SymprodSimpson,
    LargeBackdoor,
    WeakArrows,
    /// Simpson shapes with multiplicative `e^{sd eps}` noise on non-root nodes.
    NonlinSimpsonMultiplicative,
    SymprodSimpsonMultiplicative,
    Example1,
    /// `X = V^T X + eps`; `V[k][j]` is the weight of edge `k -> j` (k < j).
    LinearV(Vec<Vec<f64>>),
}

impl BenchModel {
    /// Closed-form ATE of treatment on outcome where one exists.
    ///
    /// M1/M2: `E[e^{X3+1} - e^{X3}] = (e - 1) e^{1/2}`; M3: `E[e^eps] = e^{1/2}`;
    /// M4: `E[X1] = 0`; Example1: the coefficient on D.
    pub fn true_ate(&self) -> Option<f64> {
        let e = std::f64::consts::E;
        match self {
            BenchModel::M1 | BenchModel::M2 => Some((e - 1.0) * 0.5f64.exp()),
            BenchModel::M3 => Some(0.5f64.exp()),
            BenchModel::M4 => Some(0.0),
            BenchModel::Example1 => Some(EXAMPLE1_EFFECT),
            _ => None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            BenchModel::LinearV(v) => format!("linear_v{}", v.len()),
            other => serde_json::to_value(other)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| format!("{other:?}")),
        }
    }
}

const EXAMPLE1_EFFECT: f64 = 2.0;

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn additive(terms: Vec<Term>, noise_sd: f64, noise: NoiseMode) -> Mechanism {
    Mechanism::Additive {
        terms,
        intercept: 0.0,
        product: 0.0,
        noise_sd,
        noise,
    }
}

fn covariate_model(outcome: BenchOutcome) -> Result<Scm, ScmError> {
    // nodes X1..X5 (0..4), D (5), Y (6)
    let y_parents: &[usize] = match outcome {
        BenchOutcome::M1 => &[0, 1, 2, 3, 4, 5],
        BenchOutcome::M2 => &[0, 2, 3, 4, 5],
        BenchOutcome::M3 => &[0, 1, 2, 5],
        BenchOutcome::M4 => unreachable!(),
    };
    let mut edges = vec![(0, 5), (1, 5)];
    edges.extend(y_parents.iter().map(|&p| (p, 6)));
    let dag = Dag::new(
        labels(&["X1", "X2", "X3", "X4", "X5", "D", "Y"]),
        vec![false; 7],
        &edges,
    )?;
    let mut mech = vec![Mechanism::standard_normal(); 5];
    mech.push(Mechanism::Bernoulli {
        propensity: Propensity::ProductOfTwo,
    });
    mech.push(Mechanism::Bench { model: outcome });
    Scm::new(dag, mech, Some(5), Some(6))
}

fn m4() -> Result<Scm, ScmError> {
    // U (0, hidden), X1..X5 (1..5), D (6), Y (7)
    let dag = Dag::new(
        labels(&["U", "X1", "X2", "X3", "X4", "X5", "D", "Y"]),
        vec![true, false, false, false, false, false, false, false],
        &[(0, 1), (0, 2), (0, 3), (0, 6), (0, 7), (1, 7), (4, 7), (5, 7), (6, 7)],
    )?;
    let mech = vec![
        Mechanism::standard_normal(),
        Mechanism::linear(&[1.5], 1.0),
        Mechanism::linear(&[1.0], 1.0),
        Mechanism::linear(&[1.0], 1.0),
        Mechanism::standard_normal(),
        Mechanism::standard_normal(),
        Mechanism::Bernoulli {
            propensity: Propensity::HiddenLogistic,
        },
        Mechanism::Bench {
            model: BenchOutcome::M4,
        },
    ];
    Scm::new(dag, mech, Some(6), Some(7))
}

fn nonlin_simpson(noise: NoiseMode) -> Result<Scm, ScmError> {
    // X3 -> X1, X3 -> X2, X1 -> X2, X2 -> X4 (0-based: 2->0, 2->1, 0->1, 1->3)
    let dag = Dag::observed(4, &[(2, 0), (2, 1), (0, 1), (1, 3)])?;
    let (sd, shift) = noise_scale(noise);
    let mech = vec![
        with_intercept(additive(vec![Term::Tanh(2.0)], sd, noise), shift),
        with_intercept(additive(vec![Term::Tanh(-1.5), Term::Linear(1.5)], sd, noise), shift),
        Mechanism::standard_normal(),
        with_intercept(additive(vec![Term::Tanh(1.5)], sd, noise), shift),
    ];
    Scm::new(dag, mech, None, None)
}

fn symprod_simpson(noise: NoiseMode) -> Result<Scm, ScmError> {
    // X3 -> X1, X3 -> X2, X1 -> X2, X3 -> X4
    let dag = Dag::observed(4, &[(2, 0), (2, 1), (0, 1), (2, 3)])?;
    let (sd, shift) = noise_scale(noise);
    let x2 = Mechanism::Additive {
        terms: vec![Term::SoftQuad(0.3), Term::Linear(0.0)],
        intercept: shift,
        product: 1.0,
        noise_sd: sd,
        noise,
    };
    let mech = vec![
        with_intercept(additive(vec![Term::Tanh(1.5)], sd, noise), shift),
        x2,
        Mechanism::standard_normal(),
        with_intercept(additive(vec![Term::SoftQuad(1.5)], sd, noise), shift),
    ];
    Scm::new(dag, mech, None, None)
}

/// Multiplicative variants get an intercept so the signal does not collapse
/// around zero.
fn noise_scale(noise: NoiseMode) -> (f64, f64) {
    match noise {
        NoiseMode::Additive => (0.6, 0.0),
        NoiseMode::Multiplicative => (0.5, 1.0),
    }
}

fn with_intercept(m: Mechanism, c: f64) -> Mechanism {
    match m {
        Mechanism::Additive {
            terms,
            product,
            noise_sd,
            noise,
            ..
        } => Mechanism::Additive {
            terms,
            intercept: c,
            product,
            noise_sd,
            noise,
        },
        other => other,
    }
}

const BACKDOOR_EDGES: [(usize, usize); 9] = [(0, 1), (0, 2), (1, 3), (2, 4), (3, 5), (5, 7), (7, 8), (4, 6), (6, 8)];

fn large_backdoor(weak: bool) -> Result<Scm, ScmError> {
    let mut edges = BACKDOOR_EDGES.to_vec();
    if weak {
        edges.extend((0..6).map(|k| (k, 8)));
    }
    let dag = Dag::observed(9, &edges)?;
    let add = NoiseMode::Additive;
    let mut mech = vec![
        Mechanism::standard_normal(),
        additive(vec![Term::Tanh(1.5)], 0.6, add),
        additive(vec![Term::SoftQuad(0.8)], 0.6, add),
        additive(vec![Term::Tanh(1.5)], 0.6, add),
        additive(vec![Term::Tanh(-1.5)], 0.6, add),
        additive(vec![Term::SoftQuad(0.8)], 0.6, add),
        additive(vec![Term::Tanh(1.5)], 0.6, add),
        additive(vec![Term::Tanh(1.5)], 0.6, add),
    ];
    let x9 = if weak {
        // parents X1..X8 in index order; X1..X6 are the weak arrows
        let mut t: Vec<Term> = (0..6)
            .map(|k| if k % 2 == 0 { Term::Tanh(0.3) } else { Term::Linear(0.2) })
            .collect();
        t.extend([Term::Tanh(1.2), Term::Tanh(1.2)]);
        additive(t, 0.6, add)
    } else {
        additive(vec![Term::Tanh(1.2), Term::Tanh(1.2)], 0.6, add)
    };
    mech.push(x9);
    Scm::new(dag, mech, None, None)
}

fn example1() -> Result<Scm, ScmError> {
    // H1, H2 (hidden), X1..X4, D, Y.
    // Y = f(X, D) + g(H) + eps, X_j = f_j(X_{j-1}) + g_j(H) + eps_j,
    // P(D = 1 | X, H) = 1 / ((1 + e^{g(H)}) (1 + e^{f(X)})).
    let names = ["H1", "H2", "X1", "X2", "X3", "X4", "D", "Y"];
    let mut edges = vec![(0, 2), (1, 2)];
    for j in 3..6 {
        edges.extend([(0, j), (1, j), (j - 1, j)]);
    }
    for p in 0..6 {
        edges.push((p, 6));
    }
    for p in 0..7 {
        edges.push((p, 7));
    }
    let dag = Dag::new(labels(&names), vec![true, true, false, false, false, false, false, false], &edges)?;
    let add = NoiseMode::Additive;
    let l = Term::Linear;
    let mech = vec![
        Mechanism::standard_normal(),
        Mechanism::standard_normal(),
        additive(vec![l(1.0), l(0.6)], 0.5, add),
        additive(vec![l(-0.7), l(1.0), Term::Tanh(0.3)], 0.5, add),
        additive(vec![l(0.9), l(0.8), Term::Tanh(0.3)], 0.5, add),
        additive(vec![l(1.0), l(-0.9), Term::Tanh(0.3)], 0.5, add),
        Mechanism::Bernoulli {
            propensity: Propensity::TwoFactorLogistic {
                first: vec![1.5, -1.0],
                second: vec![0.3, 0.0, 0.0, -0.3],
            },
        },
        additive(
            vec![
                l(1.0),
                l(-1.0),
                l(0.5),
                Term::Tanh(1.0),
                l(0.0),
                Term::SoftQuad(0.5),
                l(EXAMPLE1_EFFECT),
            ],
            1.0,
            add,
        ),
    ];
    Scm::new(dag, mech, Some(6), Some(7))
}

fn linear_v(v: &[Vec<f64>]) -> Result<Scm, ScmError> {
    let p = v.len();
    if v.iter().any(|r| r.len() != p) {
        return Err(ScmError::InvalidModel("V must be square".into()));
    }
    let mut edges = Vec::new();
    for (k, row) in v.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w != 0.0 {
                if k >= j {
                    return Err(ScmError::InvalidModel(format!("V[{k}][{j}] must be zero (k >= j)")));
                }
                edges.push((k, j));
            }
        }
    }
    let dag = Dag::observed(p, &edges)?;
    let mech = (0..p)
        .map(|j| {
            if dag.parents(j).is_empty() {
                Mechanism::standard_normal()
            } else {
                let w: Vec<f64> = dag.parents(j).iter().map(|&k| v[k][j]).collect();
                Mechanism::linear(&w, 1.0)
            }
        })
        .collect();
    Scm::new(dag, mech, None, None)
}

/// Expands a benchmark identifier into its SCM.
pub fn bench_model(model: &BenchModel) -> Result<Scm, ScmError> {
    match model {
        BenchModel::M1 => covariate_model(BenchOutcome::M1),
        BenchModel::M2 => covariate_model(BenchOutcome::M2),
        BenchModel::M3 => covariate_model(BenchOutcome::M3),
        BenchModel::M4 => m4(),
        BenchModel::NonlinSimpson => nonlin_simpson(NoiseMode::Additive),
        BenchModel::SymprodSimpson => symprod_simpson(NoiseMode::Additive),
        BenchModel::NonlinSimpsonMultiplicative => nonlin_simpson(NoiseMode::Multiplicative),
        BenchModel::SymprodSimpsonMultiplicative => symprod_simpson(NoiseMode::Multiplicative),
        BenchModel::LargeBackdoor => large_backdoor(false),
        BenchModel::WeakArrows => large_backdoor(true),
        BenchModel::Example1 => example1(),
        BenchModel::LinearV(v) => linear_v(v),
    }
}

/// Total effect of `k` on `j` in a linear SCM: entry (k, j) of `(I - V)^{-1}`,
/// i.e. the sum over directed paths of the product of edge weights.
pub fn linear_path_sum(v: &[Vec<f64>], k: usize, j: usize) -> f64 {
    // V is strictly upper triangular so (I - V)^{-1} = sum_m V^m; walk forward.
    let p = v.len();
    let mut reach = vec![0.0; p];
    reach[k] = 1.0;
    for a in k..p {
        if reach[a] == 0.0 {
            continue;
        }
        for b in a + 1..p {
            reach[b] += reach[a] * v[a][b];
        }
    }
    reach[j]
}

/// Copy of `scm` whose Gaussian root nodes have mean shifted by `shift` and sd
/// scaled by `scale`; all other mechanisms are unchanged.
pub fn shift_roots(scm: &Scm, shift: f64, scale: f64) -> Result<Scm, ScmError> {
    let mech = scm
        .mechanisms()
        .iter()
        .map(|m| match m {
            Mechanism::Gaussian { mean, sd } => Mechanism::Gaussian {
                mean: mean + shift,
                sd: sd * scale,
            },
            other => other.clone(),
        })
        .collect();
    Scm::new(scm.dag().clone(), mech, scm.treatment(), scm.outcome())
}
