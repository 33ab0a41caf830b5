//! One example per line:
//! `{"nodes": [[int,...],...], "edges": [[src, dst, [int,...]],...], "target": number}`
//!
//! Optional flags: `"directed": true` takes the edge list verbatim instead of
//! adding reverse edges; `"self_loops": true` permits `src == dst`.

use std::collections::HashSet;

use serde_json::{json, Map, Value};

use super::{Edge, Graph, LabeledExample};
use crate::error::{Error, Result};

fn err(line: usize, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn label_tuple(v: &Value, line: usize, field: &str) -> Result<Vec<usize>> {
    let items = v
        .as_array()
        .ok_or_else(|| err(line, field, "expected an array of integers"))?;
    items
        .iter()
        .map(|x| {
            x.as_u64()
                .map(|u| u as usize)
                .ok_or_else(|| err(line, field, format!("expected a non-negative integer, got {x}")))
        })
        .collect()
}

fn flag(obj: &Map<String, Value>, key: &str, line: usize) -> Result<bool> {
    match obj.get(key) {
        None => Ok(false),
        Some(Value::Bool(b)) => Ok(*b),
        Some(other) => Err(err(line, key, format!("expected a boolean, got {other}"))),
    }
}

/// Parses one JSON-Lines record. `line` is 1-based and only used in error messages.
pub fn parse_graph_record(record: &str, line: usize) -> Result<LabeledExample> {
    let value: Value =
        serde_json::from_str(record).map_err(|e| err(line, "<record>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| err(line, "<record>", "expected a JSON object"))?;

    let nodes = obj
        .get("nodes")
        .and_then(Value::as_array)
        .ok_or_else(|| err(line, "nodes", "missing or not an array"))?;
    if nodes.is_empty() {
        return Err(err(line, "nodes", "graph needs at least one node"));
    }
    let node_labels = nodes
        .iter()
        .enumerate()
        .map(|(i, v)| label_tuple(v, line, &format!("nodes[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let fields = node_labels[0].len();
    if let Some(i) = node_labels.iter().position(|l| l.len() != fields) {
        return Err(err(
            line,
            format!("nodes[{i}]"),
            format!("{} label fields, expected {fields}", node_labels[i].len()),
        ));
    }
    let n = node_labels.len();

    let directed = flag(obj, "directed", line)?;
    let self_loops = flag(obj, "self_loops", line)?;

    let raw_edges = match obj.get("edges") {
        None => Vec::new(),
        Some(v) => v
            .as_array()
            .ok_or_else(|| err(line, "edges", "expected an array"))?
            .clone(),
    };
    let mut edges = Vec::with_capacity(raw_edges.len() * 2);
    for (k, e) in raw_edges.iter().enumerate() {
        let field = format!("edges[{k}]");
        let parts = e
            .as_array()
            .filter(|p| p.len() == 3)
            .ok_or_else(|| err(line, &field, "expected [src, dst, [label,...]]"))?;
        let src = parts[0]
            .as_u64()
            .ok_or_else(|| err(line, format!("{field}.src"), "expected a non-negative integer"))?
            as usize;
        let dst = parts[1]
            .as_u64()
            .ok_or_else(|| err(line, format!("{field}.dst"), "expected a non-negative integer"))?
            as usize;
        if src >= n {
            return Err(err(line, format!("{field}.src"), format!("src {src} out of range")));
        }
        if dst >= n {
            return Err(err(line, format!("{field}.dst"), format!("dst {dst} out of range")));
        }
        if src == dst && !self_loops {
            return Err(err(line, &field, format!("self-loop on node {src} not declared")));
        }
        let label = label_tuple(&parts[2], line, &format!("{field}.label"))?;
        edges.push(Edge { src, dst, label });
    }
    if let Some(first) = edges.first() {
        let w = first.label.len();
        if let Some(k) = edges.iter().position(|e| e.label.len() != w) {
            return Err(err(line, format!("edges[{k}].label"), format!("expected {w} label fields")));
        }
    }

    let mut seen = HashSet::new();
    for (k, e) in edges.iter().enumerate() {
        if !seen.insert((e.src, e.dst)) {
            return Err(err(
                line,
                format!("edges[{k}]"),
                format!("duplicate edge ({}, {})", e.src, e.dst),
            ));
        }
    }
    if !directed {
        for (k, e) in edges.iter().enumerate() {
            if let Some(r) = edges.iter().find(|r| r.src == e.dst && r.dst == e.src) {
                if r.label != e.label {
                    return Err(err(
                        line,
                        format!("edges[{k}].label"),
                        "reverse edge carries a different label",
                    ));
                }
            }
        }
        let mut closed = Vec::with_capacity(edges.len() * 2);
        for e in &edges {
            closed.push(e.clone());
            if e.src != e.dst && !seen.contains(&(e.dst, e.src)) {
                closed.push(Edge {
                    src: e.dst,
                    dst: e.src,
                    label: e.label.clone(),
                });
            }
        }
        edges = closed;
    }

    let target = obj
        .get("target")
        .ok_or_else(|| err(line, "target", "missing"))?
        .as_f64()
        .ok_or_else(|| err(line, "target", "expected a number"))?;
    if !target.is_finite() {
        return Err(err(line, "target", "non-finite target"));
    }

    let graph = Graph::new(node_labels, edges).map_err(|e| err(line, "<graph>", e.to_string()))?;
    Ok(LabeledExample { graph, target })
}

/// Writes the stored (closed) edge list verbatim with `"directed": true`, so
/// parsing the output reproduces the same data model.
pub fn serialize_graph_record(example: &LabeledExample) -> String {
    let g = &example.graph;
    let edges: Vec<Value> = g
        .edges()
        .iter()
        .map(|e| json!([e.src, e.dst, e.label]))
        .collect();
    let mut obj = Map::new();
    obj.insert("nodes".into(), json!(g.node_labels()));
    obj.insert("edges".into(), Value::Array(edges));
    obj.insert("target".into(), json!(example.target));
    obj.insert("directed".into(), Value::Bool(true));
    if g.edges().iter().any(|e| e.src == e.dst) {
        obj.insert("self_loops".into(), Value::Bool(true));
    }
    Value::Object(obj).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn minimal_graph() {
        let ex = parse_graph_record(r#"{"nodes":[[0]],"edges":[],"target":1.5}"#, 1).unwrap();
        assert_eq!(ex.graph.num_nodes(), 1);
        assert_eq!(ex.graph.num_edges(), 0);
        assert_eq!(ex.target, 1.5);
    }

    #[test]
    fn dst_out_of_range() {
        let e = parse_graph_record(r#"{"nodes":[[0],[1]],"edges":[[0,2,[0]]],"target":0}"#, 4)
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("dst 2 out of range"), "{msg}");
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("edges[0].dst"), "{msg}");
    }

    #[test]
    fn triangle_closure() {
        let ex = parse_graph_record(
            r#"{"nodes":[[0],[0],[1]],"edges":[[0,1,[0]],[1,2,[1]],[2,0,[0]]],"target":1}"#,
            1,
        )
        .unwrap();
        assert_eq!(ex.graph.num_edges(), 6);
        assert!(ex.graph.is_symmetric());
    }

    #[test]
    fn already_closed_input_is_not_duplicated() {
        let ex = parse_graph_record(
            r#"{"nodes":[[0],[0]],"edges":[[0,1,[0]],[1,0,[0]]],"target":1}"#,
            1,
        )
        .unwrap();
        assert_eq!(ex.graph.num_edges(), 2);
    }

    #[test]
    fn directed_flag_suppresses_closure() {
        let ex = parse_graph_record(
            r#"{"nodes":[[0],[0]],"edges":[[0,1,[0]]],"target":1,"directed":true}"#,
            1,
        )
        .unwrap();
        assert_eq!(ex.graph.num_edges(), 1);
    }

    #[test]
    fn malformed_fields_are_named() {
        let cases = [
            (r#"{"nodes":[[0]],"edges":[],"target":"x"}"#, "target"),
            (r#"{"nodes":[[0],[-1]],"edges":[],"target":0}"#, "nodes[1]"),
            (r#"{"edges":[],"target":0}"#, "nodes"),
            (r#"{"nodes":[[0],[0]],"edges":[[0,0,[0]]],"target":0}"#, "edges[0]"),
            (r#"{"nodes":[[0],[0]],"edges":[[0,1]],"target":0}"#, "edges[0]"),
            (r#"{"nodes":[[0],[0]],"edges":[[0,1,[0]],[1,0,[1]]],"target":0}"#, "edges[0].label"),
            (r#"{"nodes":[[0]],"edges":[]}"#, "target"),
            (r#"{"nodes":[[0]],"edges":[],"target":1e999}"#, "<record>"),
        ];
        for (rec, field) in cases {
            match parse_graph_record(rec, 9).unwrap_err() {
                Error::Parse { line, field: f, .. } => {
                    assert_eq!(line, 9);
                    assert_eq!(f, field, "{rec}");
                }
                other => panic!("{other:?}"),
            }
        }
    }

    fn arb_example() -> impl Strategy<Value = LabeledExample> {
        (1usize..8, 1usize..3, 0usize..3)
            .prop_flat_map(|(n, nf, ef)| {
                (
                    prop::collection::vec(prop::collection::vec(0usize..5, nf), n),
                    prop::collection::vec((0..n, 0..n, prop::collection::vec(0usize..4, ef)), 0..12),
                    -1e3f64..1e3,
                )
            })
            .prop_map(|(labels, raw, target)| {
                let mut seen = HashSet::new();
                let edges: Vec<_> = raw
                    .into_iter()
                    .filter(|(a, b, _)| a != b && seen.insert((*a.min(b), *a.max(b))))
                    .collect();
                LabeledExample {
                    graph: Graph::undirected(labels, &edges).unwrap(),
                    target,
                }
            })
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(ex in arb_example()) {
            let text = serialize_graph_record(&ex);
            let back = parse_graph_record(&text, 1).unwrap();
            prop_assert_eq!(&back, &ex);
            prop_assert_eq!(serialize_graph_record(&back), text);
        }
    }
}
