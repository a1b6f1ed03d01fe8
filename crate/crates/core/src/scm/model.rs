use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Dag, Mechanism, ScmError};
use crate::effects::ObservationalDataset;
use crate::numerics::{Matrix, Rng};

/// Structural causal model: a DAG plus one mechanism per node. Every node
/// consumes exactly one standard normal exogenous draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Scm {
    dag: Dag,
    mechanisms: Vec<Mechanism>,
    treatment: Option<usize>,
    outcome: Option<usize>,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub value: f64,
    pub std_err: f64,
    pub draws: usize,
}

impl OracleEstimate {
    fn from_samples(xs: &[f64]) -> Self {
        Self {
            value: crate::numerics::stats::mean(xs),
            std_err: crate::numerics::stats::std_err(xs),
            draws: xs.len(),
        }
    }
}

/// Contrast of `X_j` between `do(X_k = x1)` and `do(X_k = x0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterventionQuery {
    pub k: usize,
    pub j: usize,
    pub x1: f64,
    pub x0: f64,
    /// Outer Monte Carlo draws.
    pub draws: usize,
    /// Mediator and target-noise redraws per outer draw (nested oracles only).
    #[serde(default = "one")]
    pub inner_draws: usize,
    /// Pair every exogenous draw with its sign-flipped mirror (total effect only).
    #[serde(default = "yes")]
    pub antithetic: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl InterventionQuery {
    pub fn new(k: usize, j: usize, x1: f64, x0: f64, draws: usize) -> Self {
        Self {
            k,
            j,
            x1,
            x0,
            draws,
            inner_draws: 1,
            antithetic: true,
        }
    }

    pub fn with_inner_draws(mut self, inner: usize) -> Self {
        self.inner_draws = inner;
        self
    }
}

/// All node values of a simulated sample (n x nodes, node-index columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub values: Matrix,
}

impl Scm {
    pub fn new(
        dag: Dag,
        mechanisms: Vec<Mechanism>,
        treatment: Option<usize>,
        outcome: Option<usize>,
    ) -> Result<Self, ScmError> {
        if mechanisms.len() != dag.len() {
            return Err(ScmError::InvalidModel(format!(
                "{} mechanisms for {} nodes",
                mechanisms.len(),
                dag.len()
            )));
        }
        for (v, m) in mechanisms.iter().enumerate() {
            let np = dag.parents(v).len();
            if !m.accepts_arity(np) {
                return Err(ScmError::InvalidModel(format!(
                    "mechanism of {} expects {:?} parents, graph gives {np}",
                    dag.label(v),
                    m.arity()
                )));
            }
        }
        for (role, node) in [("treatment", treatment), ("outcome", outcome)] {
            if let Some(t) = node {
                if t >= dag.len() {
                    return Err(ScmError::UnknownNode(format!("{role} {t}")));
                }
                if dag.is_hidden(t) {
                    return Err(ScmError::InvalidModel(format!("{role} node {} is hidden", dag.label(t))));
                }
            }
        }
        if let Some(t) = treatment {
            if !mechanisms[t].is_binary() {
                return Err(ScmError::InvalidModel("treatment node must use a Bernoulli mechanism".into()));
            }
        }
        if let (Some(t), Some(o)) = (treatment, outcome) {
            if t == o || dag.is_ancestor(o, t) {
                return Err(ScmError::InvalidModel("outcome must not precede treatment".into()));
            }
        }
        Ok(Self {
            dag,
            mechanisms,
            treatment,
            outcome,
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn mechanism(&self, v: usize) -> &Mechanism {
        &self.mechanisms[v]
    }

    pub fn treatment(&self) -> Option<usize> {
        self.treatment
    }

    pub fn outcome(&self) -> Option<usize> {
        self.outcome
    }

    pub fn num_nodes(&self) -> usize {
        self.dag.len()
    }

    /// Observed nodes other than treatment and outcome, in index order.
    pub fn covariate_nodes(&self) -> Vec<usize> {
        self.dag
            .observed_nodes()
            .into_iter()
            .filter(|&v| Some(v) != self.treatment && Some(v) != self.outcome)
            .collect()
    }

    /// Copy with replaced mechanism at node `v`.
    pub fn with_mechanism(&self, v: usize, m: Mechanism) -> Result<Self, ScmError> {
        let mut ms = self.mechanisms.clone();
        ms[v] = m;
        Scm::new(self.dag.clone(), ms, self.treatment, self.outcome)
    }

    /// Evaluates every node in topological order for exogenous draws `eps`,
    /// with the nodes in `clamp` fixed at the given values.
    pub fn evaluate(&self, eps: &[f64], clamp: &[(usize, f64)], out: &mut [f64]) {
        let mut pa = Vec::with_capacity(8);
        for &v in self.dag.topological_order() {
            if let Some(&(_, x)) = clamp.iter().find(|(c, _)| *c == v) {
                out[v] = x;
                continue;
            }
            pa.clear();
            pa.extend(self.dag.parents(v).iter().map(|&p| out[p]));
            out[v] = self.mechanisms[v].eval(&pa, eps[v]);
        }
    }

    fn draw_eps(&self, rng: &mut Rng, eps: &mut [f64]) {
        for e in eps.iter_mut() {
            *e = rng.normal();
        }
    }

    pub fn simulate(&self, n: usize, rng: &mut Rng) -> Result<Simulation, ScmError> {
        self.simulate_with(n, &[], rng)
    }

    /// Simulation under `do(clamp)`.
    pub fn simulate_with(&self, n: usize, clamp: &[(usize, f64)], rng: &mut Rng) -> Result<Simulation, ScmError> {
        if n == 0 {
            return Err(ScmError::InvalidQuery("sample size must be at least 1".into()));
        }
        let p = self.num_nodes();
        let mut values = Matrix::zeros(n, p);
        let mut eps = vec![0.0; p];
        for i in 0..n {
            self.draw_eps(rng, &mut eps);
            let row = values.row_mut(i);
            self.evaluate(&eps, clamp, row);
            if let Some(v) = row.iter().position(|x| !x.is_finite()) {
                return Err(ScmError::NonFinite {
                    node: self.dag.label(v).to_string(),
                });
            }
        }
        Ok(Simulation { values })
    }

    fn check_query(&self, q: &InterventionQuery) -> Result<(), ScmError> {
        let n = self.num_nodes();
        if q.k >= n || q.j >= n {
            return Err(ScmError::UnknownNode(q.k.max(q.j).to_string()));
        }
        if q.k == q.j {
            return Err(ScmError::InvalidQuery("source and target coincide".into()));
        }
        if self.dag.is_ancestor(q.j, q.k) {
            return Err(ScmError::InvalidQuery(format!(
                "{} descends from {}; no causal order puts it first",
                self.dag.label(q.k),
                self.dag.label(q.j)
            )));
        }
        if q.draws == 0 || q.inner_draws == 0 {
            return Err(ScmError::InvalidQuery("draw counts must be at least 1".into()));
        }
        if !q.x1.is_finite() || !q.x0.is_finite() {
            return Err(ScmError::InvalidQuery("intervention levels must be finite".into()));
        }
        Ok(())
    }

    /// `E[X_j | do(X_k = x1)] - E[X_j | do(X_k = x0)]` with common exogenous
    /// draws across the two arms (and antithetic mirrors if requested). The
    /// standard error is over per-draw contrasts (mirror pairs averaged).
    pub fn do_total_effect(&self, q: &InterventionQuery, rng: &mut Rng) -> Result<OracleEstimate, ScmError> {
        self.check_query(q)?;
        let p = self.num_nodes();
        let mut eps = vec![0.0; p];
        let mut w1 = vec![0.0; p];
        let mut w0 = vec![0.0; p];
        let mut contrasts = Vec::with_capacity(q.draws);
        for _ in 0..q.draws {
            self.draw_eps(rng, &mut eps);
            self.evaluate(&eps, &[(q.k, q.x1)], &mut w1);
            self.evaluate(&eps, &[(q.k, q.x0)], &mut w0);
            let mut c = w1[q.j] - w0[q.j];
            if q.antithetic {
                for e in eps.iter_mut() {
                    *e = -*e;
                }
                self.evaluate(&eps, &[(q.k, q.x1)], &mut w1);
                self.evaluate(&eps, &[(q.k, q.x0)], &mut w0);
                c = 0.5 * (c + (w1[q.j] - w0[q.j]));
            }
            if !c.is_finite() {
                return Err(ScmError::NonFinite {
                    node: self.dag.label(q.j).to_string(),
                });
            }
            contrasts.push(c);
        }
        Ok(OracleEstimate::from_samples(&contrasts))
    }

    /// Direct effect: mediators held at their `X_k = x0` values while `X_j`'s
    /// mechanism sees `x1` versus `x0`.
    pub fn do_direct_effect(&self, q: &InterventionQuery, rng: &mut Rng) -> Result<OracleEstimate, ScmError> {
        self.nested_contrast(q, (q.x1, q.x0), (q.x0, q.x0), rng)
    }

    /// Indirect effect: `X_j`'s mechanism sees `x0` while mediators come from
    /// `X_k = x1` versus `X_k = x0`.
    pub fn do_indirect_effect(&self, q: &InterventionQuery, rng: &mut Rng) -> Result<OracleEstimate, ScmError> {
        self.nested_contrast(q, (q.x0, q.x1), (q.x0, q.x0), rng)
    }

    /// `E f_j(eval_a; M(med_a)) - E f_j(eval_b; M(med_b))` where each pair is
    /// (level seen by X_j's mechanism, level the mediators are drawn under).
    /// Outer draws cover nodes ordered before `k`; the remaining noise
    /// (mediators, then `X_j`) is redrawn `inner_draws` times per outer draw.
    fn nested_contrast(
        &self,
        q: &InterventionQuery,
        (eval_a, med_a): (f64, f64),
        (eval_b, med_b): (f64, f64),
        rng: &mut Rng,
    ) -> Result<OracleEstimate, ScmError> {
        self.check_query(q)?;
        let order = self.dag.topological_order();
        let pos_k = order.iter().position(|&v| v == q.k).unwrap();
        let p = self.num_nodes();
        let mut eps = vec![0.0; p];
        let mut wa = vec![0.0; p];
        let mut wb = vec![0.0; p];
        let mut pa = Vec::with_capacity(8);
        let parents = self.dag.parents(q.j);
        let mech = &self.mechanisms[q.j];
        let eval_target = |world: &[f64], level: f64, e: f64, pa: &mut Vec<f64>| {
            pa.clear();
            pa.extend(parents.iter().map(|&u| if u == q.k { level } else { world[u] }));
            mech.eval(pa, e)
        };
        let mut outer = Vec::with_capacity(q.draws);
        for _ in 0..q.draws {
            for &v in &order[..pos_k] {
                eps[v] = rng.normal();
            }
            let mut acc = 0.0;
            for _ in 0..q.inner_draws {
                for &v in &order[pos_k..] {
                    eps[v] = rng.normal();
                }
                self.evaluate(&eps, &[(q.k, med_a)], &mut wa);
                self.evaluate(&eps, &[(q.k, med_b)], &mut wb);
                let a = eval_target(&wa, eval_a, eps[q.j], &mut pa);
                let b = eval_target(&wb, eval_b, eps[q.j], &mut pa);
                acc += a - b;
            }
            let c = acc / q.inner_draws as f64;
            if !c.is_finite() {
                return Err(ScmError::NonFinite {
                    node: self.dag.label(q.j).to_string(),
                });
            }
            outer.push(c);
        }
        Ok(OracleEstimate::from_samples(&outer))
    }

    /// Monte Carlo mean of every node under `do(clamp)`. When the clamped set
    /// is closed under ancestors (e.g. a set of root nodes) this is the
    /// conditional mean given those values.
    pub fn interventional_mean(
        &self,
        clamp: &[(usize, f64)],
        draws: usize,
        rng: &mut Rng,
    ) -> Result<Vec<f64>, ScmError> {
        let sim = self.simulate_with(draws, clamp, rng)?;
        Ok((0..self.num_nodes())
            .map(|v| crate::numerics::stats::mean(&sim.values.col(v)))
            .collect())
    }

    pub fn to_file(&self) -> ScmFile {
        let labels = self.dag.labels();
        ScmFile {
            nodes: labels
                .iter()
                .enumerate()
                .map(|(v, l)| NodeSpec {
                    name: l.clone(),
                    hidden: self.dag.is_hidden(v),
                })
                .collect(),
            edges: self
                .dag
                .edges()
                .into_iter()
                .map(|(a, b)| (labels[a].clone(), labels[b].clone()))
                .collect(),
            mechanisms: labels.iter().cloned().zip(self.mechanisms.iter().cloned()).collect(),
            treatment: self.treatment.map(|t| labels[t].clone()),
            outcome: self.outcome.map(|o| labels[o].clone()),
        }
    }

    pub fn from_file(f: &ScmFile) -> Result<Self, ScmError> {
        let labels: Vec<String> = f.nodes.iter().map(|n| n.name.clone()).collect();
        let idx = |name: &str| -> Result<usize, ScmError> {
            labels
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| ScmError::UnknownNode(name.to_string()))
        };
        let mut edges = Vec::with_capacity(f.edges.len());
        for (a, b) in &f.edges {
            edges.push((idx(a)?, idx(b)?));
        }
        let dag = Dag::new(labels.clone(), f.nodes.iter().map(|n| n.hidden).collect(), &edges)?;
        let mut mechanisms = Vec::with_capacity(labels.len());
        for l in &labels {
            mechanisms.push(
                f.mechanisms
                    .get(l)
                    .cloned()
                    .ok_or_else(|| ScmError::InvalidModel(format!("no mechanism for node {l}")))?,
            );
        }
        let treatment = f.treatment.as_deref().map(idx).transpose()?;
        let outcome = f.outcome.as_deref().map(idx).transpose()?;
        Scm::new(dag, mechanisms, treatment, outcome)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scm file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ScmError> {
        let f: ScmFile = serde_json::from_str(s).map_err(|e| ScmError::Parse(e.to_string()))?;
        Self::from_file(&f)
    }
}

impl Simulation {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn column(&self, v: usize) -> Vec<f64> {
        self.values.col(v)
    }

    pub fn nodes(&self, nodes: &[usize]) -> Matrix {
        self.values.select_columns(nodes)
    }

    pub fn observed(&self, scm: &Scm) -> Matrix {
        self.nodes(&scm.dag().observed_nodes())
    }

    pub fn hidden(&self, scm: &Scm) -> Matrix {
        self.nodes(&scm.dag().hidden_nodes())
    }

    /// Dataset of observed covariates, treatment and outcome. Hidden nodes are
    /// never included.
    pub fn dataset(&self, scm: &Scm) -> Result<ObservationalDataset, ScmError> {
        let (t, o) = match (scm.treatment(), scm.outcome()) {
            (Some(t), Some(o)) => (t, o),
            _ => return Err(ScmError::InvalidModel("model has no treatment/outcome pair".into())),
        };
        let cov = scm.covariate_nodes();
        let names = cov.iter().map(|&v| scm.dag().label(v).to_string()).collect();
        let ds = ObservationalDataset::from_real_treatment(self.nodes(&cov), &self.column(t), self.column(o))
            .map_err(|e| ScmError::InvalidModel(e.to_string()))?;
        ds.with_names(names).map_err(|e| ScmError::InvalidModel(e.to_string()))
    }
}

/// JSON description of an SCM. Nodes are referenced by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmFile {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<(String, String)>,
    pub mechanisms: BTreeMap<String, Mechanism>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub treatment: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    #[serde(default)]
    pub hidden: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::Term;

    fn chain() -> Scm {
        let dag = Dag::observed(3, &[(0, 1), (1, 2)]).unwrap();
        Scm::new(
            dag,
            vec![
                Mechanism::standard_normal(),
                Mechanism::linear(&[2.0], 1.0),
                Mechanism::linear(&[0.5], 1.0),
            ],
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn arity_is_validated() {
        let dag = Dag::observed(2, &[(0, 1)]).unwrap();
        let r = Scm::new(
            dag,
            vec![Mechanism::standard_normal(), Mechanism::standard_normal()],
            None,
            None,
        );
        assert!(matches!(r, Err(ScmError::InvalidModel(_))));
    }

    #[test]
    fn evaluation_follows_mechanisms() {
        let scm = chain();
        let mut out = vec![0.0; 3];
        scm.evaluate(&[1.0, 0.5, -1.0], &[], &mut out);
        assert_eq!(out, vec![1.0, 2.5, 0.25]);
        scm.evaluate(&[1.0, 0.5, -1.0], &[(1, 4.0)], &mut out);
        assert_eq!(out, vec![1.0, 4.0, 1.0]);
    }

    #[test]
    fn single_row_replays() {
        let scm = chain();
        let a = scm.simulate(1, &mut Rng::new(5, 0)).unwrap();
        let b = scm.simulate(1, &mut Rng::new(5, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_mechanism_aborts_with_node() {
        let dag = Dag::observed(2, &[(0, 1)]).unwrap();
        let scm = Scm::new(
            dag,
            vec![
                Mechanism::Gaussian { mean: 1e200, sd: 0.0 },
                Mechanism::Additive {
                    terms: vec![Term::Square(1.0)],
                    intercept: 0.0,
                    product: 0.0,
                    noise_sd: 0.0,
                    noise: Default::default(),
                },
            ],
            None,
            None,
        )
        .unwrap();
        match scm.simulate(2, &mut Rng::new(1, 0)) {
            Err(ScmError::NonFinite { node }) => assert_eq!(node, "X2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn query_validation() {
        let scm = chain();
        let mut rng = Rng::new(1, 0);
        assert!(scm.do_total_effect(&InterventionQuery::new(2, 0, 1.0, 0.0, 10), &mut rng).is_err());
        assert!(scm.do_total_effect(&InterventionQuery::new(1, 1, 1.0, 0.0, 10), &mut rng).is_err());
        assert!(scm.do_total_effect(&InterventionQuery::new(0, 2, 1.0, 0.0, 0), &mut rng).is_err());
    }

    #[test]
    fn chain_effects_exact() {
        let scm = chain();
        let q = InterventionQuery::new(0, 2, 1.0, 0.0, 100);
        let te = scm.do_total_effect(&q, &mut Rng::new(2, 0)).unwrap();
        assert!((te.value - 1.0).abs() < 1e-12);
        let de = scm.do_direct_effect(&q, &mut Rng::new(3, 0)).unwrap();
        assert_eq!(de.value, 0.0);
        let ie = scm.do_indirect_effect(&q.with_inner_draws(3), &mut Rng::new(4, 0)).unwrap();
        // the whole effect runs through the mediator: tau = tau_i(x1, x0) - tau_d(x0, x1)
        assert!((ie.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let scm = chain();
        let back = Scm::from_json(&scm.to_json()).unwrap();
        assert_eq!(scm, back);
        assert!(Scm::from_json(r#"{"nodes":[{"name":"a"}],"edges":[],"mechanisms":{}}"#).is_err());
    }
}
