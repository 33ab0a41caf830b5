//! Graph data model, JSON-Lines ingestion, synthetic tasks and dataset splits.

mod jsonl;
mod split;
mod synth;

use std::path::Path;

pub use jsonl::{parse_graph_record, serialize_graph_record};
pub use split::{load_split_files, split_dataset, write_split_files, DatasetSplit};
pub use synth::{count_triangles, generate_synthetic, max_degree_parity, SynthSpec, SynthTask};

use crate::error::{Error, Result};

/// Directed edge `src → dst`; node `src` aggregates a message from `dst`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub label: Vec<usize>,
}

/// Labelled graph. Undirected inputs are stored as their symmetric closure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    node_labels: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl Graph {
    /// Builds a graph from node labels and an already-closed edge list.
    pub fn new(node_labels: Vec<Vec<usize>>, edges: Vec<Edge>) -> Result<Self> {
        if node_labels.is_empty() {
            return Err(Error::Data("graph needs at least one node".into()));
        }
        let n = node_labels.len();
        let fields = node_labels[0].len();
        if node_labels.iter().any(|l| l.len() != fields) {
            return Err(Error::Data("node label tuples differ in length".into()));
        }
        if let Some(first) = edges.first() {
            if edges.iter().any(|e| e.label.len() != first.label.len()) {
                return Err(Error::Data("edge label tuples differ in length".into()));
            }
        }
        for e in &edges {
            if e.src >= n {
                return Err(Error::Data(format!("src {} out of range", e.src)));
            }
            if e.dst >= n {
                return Err(Error::Data(format!("dst {} out of range", e.dst)));
            }
        }
        Ok(Self { node_labels, edges })
    }

    /// Builds a graph from undirected edges, materializing both directions.
    pub fn undirected(node_labels: Vec<Vec<usize>>, edges: &[(usize, usize, Vec<usize>)]) -> Result<Self> {
        let mut closed = Vec::with_capacity(edges.len() * 2);
        for (a, b, label) in edges {
            closed.push(Edge {
                src: *a,
                dst: *b,
                label: label.clone(),
            });
            if a != b {
                closed.push(Edge {
                    src: *b,
                    dst: *a,
                    label: label.clone(),
                });
            }
        }
        Self::new(node_labels, closed)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_labels(&self) -> &[Vec<usize>] {
        &self.node_labels
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_fields(&self) -> usize {
        self.node_labels[0].len()
    }

    /// Edge label width; `None` for a graph without edges.
    pub fn edge_fields(&self) -> Option<usize> {
        self.edges.first().map(|e| e.label.len())
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.src == i).map(|e| e.dst)
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Every `(i, j, label)` has a matching `(j, i, label)`.
    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|e| {
            self.edges
                .iter()
                .any(|r| r.src == e.dst && r.dst == e.src && r.label == e.label)
        })
    }

    /// Relabels node `i` as `perm[i]`. Edge order is kept.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Data("not a permutation of the node ids".into()));
        }
        let mut labels = vec![Vec::new(); n];
        for (i, l) in self.node_labels.iter().enumerate() {
            labels[perm[i]] = l.clone();
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: perm[e.src],
                dst: perm[e.dst],
                label: e.label.clone(),
            })
            .collect();
        Graph::new(labels, edges)
    }

    /// Replaces the label tuple of node `i`.
    pub fn with_node_label(&self, i: usize, label: Vec<usize>) -> Result<Graph> {
        let mut labels = self.node_labels.clone();
        labels[i] = label;
        Graph::new(labels, self.edges.clone())
    }

    /// Unweighted shortest-path distances from `source`; `None` when unreachable.
    pub fn distances_from(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes()];
        dist[source] = Some(0);
        let mut frontier = std::collections::VecDeque::from([source]);
        while let Some(u) = frontier.pop_front() {
            let du = dist[u].unwrap();
            for e in self.edges.iter().filter(|e| e.src == u || e.dst == u) {
                let v = if e.src == u { e.dst } else { e.src };
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    frontier.push_back(v);
                }
            }
        }
        dist
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub graph: Graph,
    pub target: f64,
}

/// Immutable collection of examples loaded from one file or generator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExampleStore {
    examples: Vec<LabeledExample>,
}

impl ExampleStore {
    pub fn new(examples: Vec<LabeledExample>) -> Result<Self> {
        if let Some(first) = examples.first() {
            let nf = first.graph.node_fields();
            let ef = examples.iter().find_map(|e| e.graph.edge_fields());
            for (i, ex) in examples.iter().enumerate() {
                if ex.graph.node_fields() != nf {
                    return Err(Error::Data(format!(
                        "example {i}: {} node label fields, expected {nf}",
                        ex.graph.node_fields()
                    )));
                }
                if let (Some(a), Some(b)) = (ex.graph.edge_fields(), ef) {
                    if a != b {
                        return Err(Error::Data(format!(
                            "example {i}: {a} edge label fields, expected {b}"
                        )));
                    }
                }
            }
        }
        Ok(Self { examples })
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            out.push(parse_graph_record(line, i + 1)?);
        }
        Self::new(out)
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_jsonl(&std::fs::read_to_string(path)?)
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for ex in &self.examples {
            s.push_str(&serialize_graph_record(ex));
            s.push('\n');
        }
        s
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, i: usize) -> &LabeledExample {
        &self.examples[i]
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    /// Per-field vocabulary sizes (max id + 1) for node and edge labels.
    pub fn vocab(&self) -> (Vec<usize>, Vec<usize>) {
        let mut node: Vec<usize> = Vec::new();
        let mut edge: Vec<usize> = Vec::new();
        let bump = |sizes: &mut Vec<usize>, label: &[usize]| {
            if sizes.len() < label.len() {
                sizes.resize(label.len(), 0);
            }
            for (s, &l) in sizes.iter_mut().zip(label) {
                *s = (*s).max(l + 1);
            }
        };
        for ex in &self.examples {
            for l in ex.graph.node_labels() {
                bump(&mut node, l);
            }
            for e in ex.graph.edges() {
                bump(&mut edge, &e.label);
            }
        }
        (node, edge)
    }

    /// Classification stores must carry targets in {0, 1}.
    pub fn validate_binary_targets(&self) -> Result<()> {
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.target != 0.0 && ex.target != 1.0 {
                return Err(Error::Data(format!(
                    "example {i}: classification target {} not in {{0,1}}",
                    ex.target
                )));
            }
        }
        Ok(())
    }
}
