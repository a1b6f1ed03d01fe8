use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::ScmError;

/// Directed acyclic graph over observed and hidden nodes. Parent lists are
/// kept sorted by node index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DagRepr", into = "DagRepr")]
pub struct Dag {
    labels: Vec<String>,
    hidden: Vec<bool>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DagRepr {
    labels: Vec<String>,
    hidden: Vec<bool>,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<DagRepr> for Dag {
    type Error = ScmError;
    fn try_from(r: DagRepr) -> Result<Self, ScmError> {
        Dag::new(r.labels, r.hidden, &r.edges)
    }
}

impl From<Dag> for DagRepr {
    fn from(d: Dag) -> Self {
        DagRepr {
            edges: d.edges(),
            labels: d.labels,
            hidden: d.hidden,
        }
    }
}

impl Dag {
    pub fn new(labels: Vec<String>, hidden: Vec<bool>, edges: &[(usize, usize)]) -> Result<Self, ScmError> {
        let n = labels.len();
        if hidden.len() != n {
            return Err(ScmError::InvalidGraph(format!(
                "{} labels but {} hidden flags",
                n,
                hidden.len()
            )));
        }
        let mut parents = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(ScmError::InvalidGraph(format!("edge ({a}, {b}) references a node >= {n}")));
            }
            if a == b {
                return Err(ScmError::InvalidGraph(format!("self-loop on node {a}")));
            }
            parents[b].insert(a);
        }
        let parents: Vec<Vec<usize>> = parents.into_iter().map(|s| s.into_iter().collect()).collect();
        let mut children = vec![Vec::new(); n];
        for (c, ps) in parents.iter().enumerate() {
            for &p in ps {
                children[p].push(c);
            }
        }
        let order = kahn(&parents, &children).ok_or(ScmError::Cyclic)?;
        Ok(Self {
            labels,
            hidden,
            parents,
            children,
            order,
        })
    }

    /// All-observed graph with labels `X1..Xn` and 0-based edges.
    pub fn observed(n: usize, edges: &[(usize, usize)]) -> Result<Self, ScmError> {
        Self::new((1..=n).map(|i| format!("X{i}")).collect(), vec![false; n], edges)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> &str {
        &self.labels[v]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn is_hidden(&self, v: usize) -> bool {
        self.hidden[v]
    }

    pub fn hidden_flags(&self) -> &[bool] {
        &self.hidden
    }

    pub fn observed_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| !self.hidden[v]).collect()
    }

    pub fn hidden_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.hidden[v]).collect()
    }

    pub fn parents(&self, v: usize) -> &[usize] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.parents[b].binary_search(&a).is_ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .parents
            .iter()
            .enumerate()
            .flat_map(|(c, ps)| ps.iter().map(move |&p| (p, c)))
            .collect();
        e.sort_unstable();
        e
    }

    /// Topological order; among ready nodes the lowest index goes first.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Whether `order` is a permutation of the nodes consistent with every edge.
    pub fn is_valid_order(&self, order: &[usize]) -> bool {
        if order.len() != self.len() {
            return false;
        }
        let mut pos = vec![usize::MAX; self.len()];
        for (i, &v) in order.iter().enumerate() {
            if v >= self.len() || pos[v] != usize::MAX {
                return false;
            }
            pos[v] = i;
        }
        self.edges().iter().all(|&(a, b)| pos[a] < pos[b])
    }

    /// Strict descendants of `v`.
    pub fn descendants(&self, v: usize) -> BTreeSet<usize> {
        self.reach(v, |u| &self.children[u])
    }

    /// Strict ancestors of `v`.
    pub fn ancestors(&self, v: usize) -> BTreeSet<usize> {
        self.reach(v, |u| &self.parents[u])
    }

    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        a != b && self.ancestors(b).contains(&a)
    }

    fn reach<'a>(&'a self, v: usize, next: impl Fn(usize) -> &'a [usize]) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            for &w in next(u) {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    /// Copy of this graph with the outgoing edges of `v` removed.
    pub fn without_outgoing(&self, v: usize) -> Dag {
        let edges: Vec<(usize, usize)> = self.edges().into_iter().filter(|&(a, _)| a != v).collect();
        Dag::new(self.labels.clone(), self.hidden.clone(), &edges).expect("subgraph of a dag is a dag")
    }

    fn check_nodes(&self, set: &BTreeSet<usize>) -> Result<(), ScmError> {
        match set.iter().find(|&&v| v >= self.len()) {
            Some(&v) => Err(ScmError::UnknownNode(v.to_string())),
            None => Ok(()),
        }
    }

    /// d-separation of `a` and `b` given `cond`, by reachability over
    /// (node, direction) states. A trail passing through a non-collider is
    /// blocked when that node is in `cond`; a collider blocks unless it or one
    /// of its descendants is in `cond`.
    pub fn d_separated(
        &self,
        a: &BTreeSet<usize>,
        b: &BTreeSet<usize>,
        cond: &BTreeSet<usize>,
    ) -> Result<bool, ScmError> {
        for s in [a, b, cond] {
            self.check_nodes(s)?;
        }
        if !a.is_disjoint(b) || !a.is_disjoint(cond) || !b.is_disjoint(cond) {
            return Err(ScmError::OverlappingSets);
        }
        // nodes that are in cond or have a descendant in cond
        let mut opens_collider = vec![false; self.len()];
        let mut stack: Vec<usize> = cond.iter().copied().collect();
        for &c in cond {
            opens_collider[c] = true;
        }
        while let Some(u) = stack.pop() {
            for &p in &self.parents[u] {
                if !opens_collider[p] {
                    opens_collider[p] = true;
                    stack.push(p);
                }
            }
        }
        // state (v, arrived_from_child): true when the trail enters v against an edge (v -> prev)
        let mut visited = vec![[false; 2]; self.len()];
        let mut queue: VecDeque<(usize, bool)> = a.iter().map(|&v| (v, true)).collect();
        while let Some((v, up)) = queue.pop_front() {
            if visited[v][up as usize] {
                continue;
            }
            visited[v][up as usize] = true;
            if b.contains(&v) {
                return Ok(false);
            }
            let in_cond = cond.contains(&v);
            if up {
                // arrived from a child (or v is a start node): v emits arrows both ways
                if !in_cond {
                    for &p in &self.parents[v] {
                        queue.push_back((p, true));
                    }
                    for &c in &self.children[v] {
                        queue.push_back((c, false));
                    }
                }
            } else {
                // arrived from a parent
                if !in_cond {
                    for &c in &self.children[v] {
                        queue.push_back((c, false));
                    }
                }
                if opens_collider[v] {
                    for &p in &self.parents[v] {
                        queue.push_back((p, true));
                    }
                }
            }
        }
        Ok(true)
    }

    /// Back-door admissibility of `s` for the effect of `k` on `j`.
    pub fn is_admissible(&self, k: usize, j: usize, s: &BTreeSet<usize>) -> Result<bool, ScmError> {
        if k >= self.len() || j >= self.len() {
            return Err(ScmError::UnknownNode(k.max(j).to_string()));
        }
        if k == j {
            return Err(ScmError::InvalidQuery("source and target coincide".into()));
        }
        if self.is_ancestor(j, k) {
            return Err(ScmError::InvalidQuery(format!(
                "{} is an ancestor of {}, so no order puts the source first",
                self.labels[j], self.labels[k]
            )));
        }
        self.check_nodes(s)?;
        if s.contains(&k) || s.contains(&j) {
            return Ok(false);
        }
        let desc = self.descendants(k);
        if s.iter().any(|v| desc.contains(v)) {
            return Ok(false);
        }
        let g = self.without_outgoing(k);
        g.d_separated(&BTreeSet::from([k]), &BTreeSet::from([j]), s)
    }

    /// Projection onto the observed nodes in which every hidden node is a
    /// source. Observed nodes keep their relative order and labels; new hidden
    /// sources `H1..HK` are appended, one per inclusion-maximal set of at
    /// least two observed nodes sharing a hidden common cause.
    pub fn canonical_exogenous_dag(&self) -> Dag {
        let obs = self.observed_nodes();
        let mut new_index = vec![usize::MAX; self.len()];
        for (i, &v) in obs.iter().enumerate() {
            new_index[v] = i;
        }
        let mut edges = BTreeSet::new();
        for &i in &obs {
            for t in self.hidden_reach(&self.children[i]) {
                edges.insert((new_index[i], new_index[t]));
            }
        }
        let mut sets: Vec<BTreeSet<usize>> = Vec::new();
        for h in self.hidden_nodes() {
            let c = self.hidden_reach(&self.children[h]);
            if c.len() >= 2 && !sets.contains(&c) {
                sets.push(c);
            }
        }
        let maximal: Vec<&BTreeSet<usize>> = sets
            .iter()
            .filter(|c| !sets.iter().any(|d| d.len() > c.len() && c.is_subset(d)))
            .collect();
        let mut labels: Vec<String> = obs.iter().map(|&v| self.labels[v].clone()).collect();
        let mut hidden = vec![false; obs.len()];
        for (k, c) in maximal.iter().enumerate() {
            let h = labels.len();
            labels.push(format!("H{}", k + 1));
            hidden.push(true);
            for &x in c.iter() {
                edges.insert((h, new_index[x]));
            }
        }
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        Dag::new(labels, hidden, &edges).expect("latent projection of a dag is acyclic")
    }

    /// Observed nodes reachable from `start` through paths whose intermediate
    /// nodes are all hidden (the start nodes themselves count).
    fn hidden_reach(&self, start: &[usize]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        let mut seen = vec![false; self.len()];
        let mut stack: Vec<usize> = start.to_vec();
        while let Some(u) = stack.pop() {
            if seen[u] {
                continue;
            }
            seen[u] = true;
            if self.hidden[u] {
                stack.extend_from_slice(&self.children[u]);
            } else {
                out.insert(u);
            }
        }
        out
    }
}

fn kahn(parents: &[Vec<usize>], children: &[Vec<usize>]) -> Option<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let n = parents.len();
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indeg[c] -= 1;
            if indeg[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    (order.len() == n).then_some(order)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn rejects_cycles_and_self_loops() {
        assert!(matches!(Dag::observed(2, &[(0, 1), (1, 0)]), Err(ScmError::Cyclic)));
        assert!(Dag::observed(2, &[(1, 1)]).is_err());
        assert!(Dag::observed(2, &[(0, 2)]).is_err());
    }

    #[test]
    fn topological_order_prefers_low_indices() {
        let g = Dag::observed(4, &[(2, 0), (2, 1), (0, 1), (1, 3)]).unwrap();
        assert_eq!(g.topological_order(), &[2, 0, 1, 3]);
        assert!(g.is_valid_order(&[2, 0, 1, 3]));
        assert!(!g.is_valid_order(&[0, 2, 1, 3]));
    }

    #[test]
    fn chain_blocking() {
        let g = Dag::observed(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(g.d_separated(&set(&[0]), &set(&[3]), &set(&[1])).unwrap());
        assert!(g.d_separated(&set(&[0]), &set(&[3]), &set(&[2])).unwrap());
        assert!(!g.d_separated(&set(&[0]), &set(&[3]), &set(&[])).unwrap());
    }

    #[test]
    fn collider_blocking() {
        let g = Dag::observed(4, &[(0, 1), (2, 1), (1, 3)]).unwrap();
        assert!(g.d_separated(&set(&[0]), &set(&[2]), &set(&[])).unwrap());
        assert!(!g.d_separated(&set(&[0]), &set(&[2]), &set(&[1])).unwrap());
        // conditioning on a descendant of the collider also opens it
        assert!(!g.d_separated(&set(&[0]), &set(&[2]), &set(&[3])).unwrap());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let g = Dag::observed(3, &[(0, 1)]).unwrap();
        assert!(matches!(
            g.d_separated(&set(&[0]), &set(&[0, 1]), &set(&[])),
            Err(ScmError::OverlappingSets)
        ));
    }

    #[test]
    fn admissibility() {
        // H(0) -> k(1), H -> j(2), k -> j, k -> c(3)
        let g = Dag::observed(4, &[(0, 1), (0, 2), (1, 2), (1, 3)]).unwrap();
        assert!(g.is_admissible(1, 2, &set(&[0])).unwrap());
        assert!(!g.is_admissible(1, 2, &set(&[])).unwrap());
        assert!(!g.is_admissible(1, 2, &set(&[0, 3])).unwrap());
        assert!(g.is_admissible(0, 2, &set(&[])).unwrap());
        assert!(g.is_admissible(1, 1, &set(&[])).is_err());
    }

    #[test]
    fn canonical_hidden_mediator() {
        // X1 -> Hbar -> X2
        let g = Dag::new(
            vec!["X1".into(), "Hbar".into(), "X2".into()],
            vec![false, true, false],
            &[(0, 1), (1, 2)],
        )
        .unwrap();
        let c = g.canonical_exogenous_dag();
        assert_eq!(c.labels(), &["X1".to_string(), "X2".to_string()]);
        assert_eq!(c.edges(), vec![(0, 1)]);
    }

    #[test]
    fn canonical_hidden_common_cause() {
        // Hbar -> X1, Hbar -> X2
        let g = Dag::new(
            vec!["Hbar".into(), "X1".into(), "X2".into()],
            vec![true, false, false],
            &[(0, 1), (0, 2)],
        )
        .unwrap();
        let c = g.canonical_exogenous_dag();
        assert_eq!(c.len(), 3);
        assert!(c.is_hidden(2));
        assert_eq!(c.label(2), "H1");
        assert_eq!(c.edges(), vec![(2, 0), (2, 1)]);
    }

    #[test]
    fn canonical_without_hidden_is_identity() {
        let g = Dag::observed(4, &[(0, 1), (1, 2), (0, 3)]).unwrap();
        assert_eq!(g.canonical_exogenous_dag(), g);
    }

    #[test]
    fn serde_round_trip() {
        let g = Dag::observed(3, &[(0, 1), (1, 2)]).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: Dag = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"labels":["a","b"],"hidden":[false,false],"edges":[[0,1],[1,0]]}"#;
        assert!(serde_json::from_str::<Dag>(bad).is_err());
    }
}
