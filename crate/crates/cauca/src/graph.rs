//! Directed acyclic graphs over latent nodes.
//!
//! - Nodes are `0..d` internally; the on-disk JSON form uses 1-based indices.
//! - Validation happens at construction: a `Dag` value is always acyclic,
//!   free of self loops and duplicate edges, with all endpoints in range.
//! - Random graphs follow the upper-triangular recipe: each pair (i, j) with
//!   i < j carries an edge independently with the given density, optionally
//!   rejecting edgeless draws.

use crate::error::{Error, Result};
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeSet;

/// Immutable validated DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    d: usize,
    edges: BTreeSet<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Dag {
    /// Build a DAG on `d` nodes from 0-based `(from, to)` edges.
    pub fn new(d: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= d {
                return Err(Error::NodeOutOfRange { node: i, d });
            }
            if j >= d {
                return Err(Error::NodeOutOfRange { node: j, d });
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if !set.insert((i, j)) {
                return Err(Error::DuplicateEdge(i, j));
            }
        }
        let mut parents = vec![Vec::new(); d];
        let mut children = vec![Vec::new(); d];
        for &(i, j) in &set {
            parents[j].push(i);
            children[i].push(j);
        }
        for p in &mut parents {
            p.sort_unstable();
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let dag = Dag { d, edges: set, parents, children };
        // acyclicity: Kahn must consume every node
        if dag.try_topological_order().is_none() {
            // find one offending edge for the message: any edge on a cycle
            let &(i, j) = dag.edges.iter().next().expect("cycle implies an edge");
            return Err(Error::CyclicGraph { from: i, to: j });
        }
        Ok(dag)
    }

    /// Empty graph on `d` nodes.
    pub fn empty(d: usize) -> Self {
        Dag::new(d, std::iter::empty()).expect("empty graph is valid")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty_graph(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Edges in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// Parents of `i`, sorted ascending.
    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn is_root(&self, i: usize) -> bool {
        self.parents[i].is_empty()
    }

    fn try_topological_order(&self) -> Option<Vec<usize>> {
        let mut indeg: Vec<usize> = (0..self.d).map(|i| self.parents[i].len()).collect();
        let mut order = Vec::with_capacity(self.d);
        let mut ready: BTreeSet<usize> =
            (0..self.d).filter(|&i| indeg[i] == 0).collect();
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for &c in &self.children[next] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == self.d).then_some(order)
    }

    /// Deterministic topological order: Kahn's algorithm, lowest index first
    /// among ready nodes.
    pub fn topological_order(&self) -> Vec<usize> {
        self.try_topological_order()
            .expect("Dag invariant: acyclic by construction")
    }

    /// Strict ancestors of `i` (excluding `i`).
    pub fn ancestors(&self, i: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.parents[i].to_vec();
        while let Some(p) = stack.pop() {
            if seen.insert(p) {
                stack.extend_from_slice(&self.parents[p]);
            }
        }
        seen
    }

    /// Ancestor closure of `i`: ancestors plus `i` itself.
    pub fn ancestors_closure(&self, i: usize) -> BTreeSet<usize> {
        let mut s = self.ancestors(i);
        s.insert(i);
        s
    }

    /// New DAG with an edge wherever a directed path exists.
    pub fn transitive_closure(&self) -> Dag {
        let mut edges = Vec::new();
        for j in 0..self.d {
            for &a in self.ancestors(j).iter() {
                edges.push((a, j));
            }
        }
        Dag::new(self.d, edges).expect("closure of a DAG is a DAG")
    }
}

/// Sample an upper-triangular random DAG: edge (i, j) for i < j with
/// probability `density`. With `require_nonempty`, edgeless draws are
/// rejected and resampled.
pub fn random_dag<R: Rng>(
    d: usize,
    density: f64,
    require_nonempty: bool,
    rng: &mut R,
) -> Result<Dag> {
    if d == 0 {
        return Err(Error::InvalidParam {
            name: "d".into(),
            reason: "need at least one node".into(),
        });
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidParam {
            name: "density".into(),
            reason: format!("{density} outside [0, 1]"),
        });
    }
    if require_nonempty && (d == 1 || density == 0.0) {
        return Err(Error::ImpossibleGraph(format!(
            "nonempty graph requested with d={d}, density={density}"
        )));
    }
    for _attempt in 0..10_000 {
        let mut edges = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                if rng.random::<f64>() < density {
                    edges.push((i, j));
                }
            }
        }
        if !require_nonempty || !edges.is_empty() {
            return Dag::new(d, edges);
        }
    }
    Err(Error::ImpossibleGraph(format!(
        "no nonempty draw in 10000 attempts (d={d}, density={density})"
    )))
}

// JSON form: {"d": 3, "edges": [[1,2],[2,3]]} with 1-based node indices.
#[derive(Serialize, Deserialize)]
struct DagRepr {
    d: usize,
    edges: Vec<[usize; 2]>,
}

impl Serialize for Dag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = DagRepr {
            d: self.d,
            edges: self.edges.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dag {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = DagRepr::deserialize(de)?;
        let edges: Vec<(usize, usize)> = repr
            .edges
            .iter()
            .map(|&[i, j]| {
                if i == 0 || j == 0 {
                    Err(D::Error::custom("edge indices are 1-based"))
                } else {
                    Ok((i - 1, j - 1))
                }
            })
            .collect::<std::result::Result<_, _>>()?;
        Dag::new(repr.d, edges).map_err(D::Error::custom)
    }
}
