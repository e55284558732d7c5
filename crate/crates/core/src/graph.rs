//! Tanner-graph girth and degree statistics.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::code::ParityCheckMatrix;
use crate::gf2::BitMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Var(usize),
    Check(usize),
}

/// Bipartite graph with variable nodes `0..n` and check nodes `n..n+m`.
#[derive(Clone, Debug)]
pub struct TannerGraph {
    n: usize,
    m: usize,
    adj: Vec<Vec<usize>>,
}

impl TannerGraph {
    /// Edge `(c, v)` for every one in `h` (rows are checks).
    pub fn from_matrix(h: &BitMatrix) -> Self {
        let (m, n) = (h.rows(), h.cols());
        let mut adj = vec![Vec::new(); n + m];
        for c in 0..m {
            for v in 0..n {
                if h.get(c, v) {
                    adj[v].push(n + c);
                    adj[n + c].push(v);
                }
            }
        }
        TannerGraph { n, m, adj }
    }

    pub fn from_code(h: &ParityCheckMatrix) -> Self {
        Self::from_matrix(&h.full_h())
    }

    pub fn variables(&self) -> usize {
        self.n
    }

    pub fn checks(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.adj[..self.n].iter().map(Vec::len).sum()
    }

    fn index(&self, node: Node) -> usize {
        match node {
            Node::Var(v) => {
                assert!(v < self.n, "variable {v} out of range");
                v
            }
            Node::Check(c) => {
                assert!(c < self.m, "check {c} out of range");
                self.n + c
            }
        }
    }

    pub fn degree(&self, node: Node) -> usize {
        self.adj[self.index(node)].len()
    }

    /// Length of the shortest cycle through `node`, `None` when it lies on no cycle.
    pub fn node_girth(&self, node: Node) -> Option<usize> {
        let root = self.index(node);
        let total = self.adj.len();
        let mut depth = vec![usize::MAX; total];
        let mut branch = vec![usize::MAX; total];
        let mut parent = vec![usize::MAX; total];
        let mut queue = VecDeque::new();
        depth[root] = 0;
        for &u in &self.adj[root] {
            depth[u] = 1;
            branch[u] = u;
            parent[u] = root;
            queue.push_back(u);
        }
        let mut best = usize::MAX;
        while let Some(u) = queue.pop_front() {
            // every closure from here on has length >= 2·depth(u)
            if 2 * depth[u] >= best {
                break;
            }
            for &w in &self.adj[u] {
                if w == parent[u] || w == root {
                    continue;
                }
                if depth[w] == usize::MAX {
                    depth[w] = depth[u] + 1;
                    branch[w] = branch[u];
                    parent[w] = u;
                    queue.push_back(w);
                } else if branch[w] != branch[u] {
                    best = best.min(depth[u] + depth[w] + 1);
                }
            }
        }
        (best != usize::MAX).then_some(best)
    }

    pub fn variable_girths(&self) -> Vec<Option<usize>> {
        (0..self.n).into_par_iter().map(|v| self.node_girth(Node::Var(v))).collect()
    }

    pub fn check_girths(&self) -> Vec<Option<usize>> {
        (0..self.m).into_par_iter().map(|c| self.node_girth(Node::Check(c))).collect()
    }

    /// Shortest cycle in the whole graph.
    pub fn girth(&self) -> Option<usize> {
        self.variable_girths().into_iter().flatten().min()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GirthHistogram {
    pub counts: BTreeMap<usize, usize>,
    pub no_cycle: usize,
}

impl GirthHistogram {
    pub fn from_girths(girths: &[Option<usize>]) -> Self {
        let mut h = GirthHistogram::default();
        for g in girths {
            match g {
                Some(g) => *h.counts.entry(*g).or_default() += 1,
                None => h.no_cycle += 1,
            }
        }
        h
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum::<usize>() + self.no_cycle
    }

    /// Mean girth over nodes that lie on a cycle.
    pub fn mean_cyclic(&self) -> Option<f64> {
        let n: usize = self.counts.values().sum();
        (n > 0).then(|| self.counts.iter().map(|(g, c)| (g * c) as f64).sum::<f64>() / n as f64)
    }

    fn json(&self) -> String {
        let mut parts: Vec<String> = self.counts.iter().map(|(g, c)| format!("\"{g}\":{c}")).collect();
        parts.push(format!("\"none\":{}", self.no_cycle));
        format!("{{{}}}", parts.join(","))
    }
}

/// Degree histograms over the full `H`, identity block included.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    pub variable: BTreeMap<usize, usize>,
    pub check: BTreeMap<usize, usize>,
}

impl DegreeDistribution {
    pub fn variable_degree_sum(&self) -> usize {
        self.variable.iter().map(|(d, c)| d * c).sum()
    }

    pub fn check_degree_sum(&self) -> usize {
        self.check.iter().map(|(d, c)| d * c).sum()
    }
}

pub fn girth_histograms(h: &ParityCheckMatrix) -> (GirthHistogram, GirthHistogram) {
    let g = TannerGraph::from_code(h);
    (
        GirthHistogram::from_girths(&g.variable_girths()),
        GirthHistogram::from_girths(&g.check_girths()),
    )
}

pub fn degree_distributions(h: &ParityCheckMatrix) -> DegreeDistribution {
    let full = h.full_h();
    let mut d = DegreeDistribution::default();
    for v in 0..full.cols() {
        *d.variable.entry(full.col_weight(v)).or_default() += 1;
    }
    for c in 0..full.rows() {
        *d.check.entry(full.row_weight(c)).or_default() += 1;
    }
    d
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphAnalysis {
    pub vn_girth: GirthHistogram,
    pub cn_girth: GirthHistogram,
    pub degrees: DegreeDistribution,
}

impl GraphAnalysis {
    pub fn of(h: &ParityCheckMatrix) -> Self {
        let (vn_girth, cn_girth) = girth_histograms(h);
        GraphAnalysis {
            vn_girth,
            cn_girth,
            degrees: degree_distributions(h),
        }
    }

    /// `{"vn_girth":{"4":..,"none":..},"cn_girth":{..},"vn_degree":{..},"cn_degree":{..}}`,
    /// girth keys in ascending numeric order.
    pub fn to_json(&self) -> String {
        let deg = |m: &BTreeMap<usize, usize>| {
            let parts: Vec<String> = m.iter().map(|(d, c)| format!("\"{d}\":{c}")).collect();
            format!("{{{}}}", parts.join(","))
        };
        format!(
            "{{\"vn_girth\":{},\"cn_girth\":{},\"vn_degree\":{},\"cn_degree\":{}}}",
            self.vn_girth.json(),
            self.cn_girth.json(),
            deg(&self.degrees.variable),
            deg(&self.degrees.check)
        )
    }
}

/// Bucket-wise mean of histograms over a population of codes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AveragedHistogram {
    pub codes: usize,
    pub mean_counts: BTreeMap<usize, f64>,
    pub mean_no_cycle: f64,
}

impl AveragedHistogram {
    pub fn average<'a>(hists: impl IntoIterator<Item = &'a GirthHistogram>) -> Self {
        let mut out = AveragedHistogram::default();
        for h in hists {
            out.codes += 1;
            for (&g, &c) in &h.counts {
                *out.mean_counts.entry(g).or_default() += c as f64;
            }
            out.mean_no_cycle += h.no_cycle as f64;
        }
        if out.codes > 0 {
            let n = out.codes as f64;
            out.mean_counts.values_mut().for_each(|v| *v /= n);
            out.mean_no_cycle /= n;
        }
        out
    }

    /// Mean girth over cyclic nodes of the pooled population.
    pub fn mean_cyclic(&self) -> Option<f64> {
        let n: f64 = self.mean_counts.values().sum();
        (n > 0.0).then(|| self.mean_counts.iter().map(|(&g, &c)| g as f64 * c).sum::<f64>() / n)
    }

    /// Fraction of cyclic nodes with girth `<= g`.
    pub fn cyclic_cdf(&self, g: usize) -> f64 {
        let n: f64 = self.mean_counts.values().sum();
        self.mean_counts.range(..=g).map(|(_, &c)| c).sum::<f64>() / n
    }

    /// True when `self`'s cyclic-girth distribution is nowhere stochastically below `other`'s.
    pub fn dominates(&self, other: &AveragedHistogram) -> bool {
        let keys: Vec<usize> = self.mean_counts.keys().chain(other.mean_counts.keys()).copied().collect();
        keys.iter().all(|&g| self.cyclic_cdf(g) <= other.cyclic_cdf(g) + 1e-12)
    }
}
