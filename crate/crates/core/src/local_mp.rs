//! Label embedding and local message passing.
//!
//! Layer `l` computes `h_i' = f(ε·h_i + Σ_{j∈N(i)} φ([h_j, e_ij]))` and then
//! refreshes every edge as `e_ij' = φ([h_i', h_j'])`.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::ModelConfig;
use crate::nn::{gaussian, Ffn, ParameterStore};

/// Test-only replacements for the update function `f`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpdateHook {
    #[default]
    Ffn,
    Identity,
}

/// Test-only replacements for the fusion function `φ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FuseHook {
    #[default]
    Ffn,
    /// `φ(a, b) = a`
    FirstArg,
    /// `φ(a, b) = (a + b) / 2`
    HalvedSum,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MpHooks {
    pub update: UpdateHook,
    pub fuse: FuseHook,
}

fn update_ffn(cfg: &ModelConfig, l: usize) -> Ffn {
    Ffn::new(format!("mp.{l}.f"), cfg.activation)
}

fn fuse_ffn(cfg: &ModelConfig, l: usize) -> Ffn {
    Ffn::new(format!("mp.{l}.phi"), cfg.activation)
}

fn edge_fuse_ffn(cfg: &ModelConfig, l: usize) -> Ffn {
    if cfg.share_phi {
        fuse_ffn(cfg, l)
    } else {
        Ffn::new(format!("mp.{l}.phi_edge"), cfg.activation)
    }
}

/// Registers embedding tables and per-layer `ε`, `f`, `φ`.
pub fn init_params(store: &mut ParameterStore, cfg: &ModelConfig, rng: &mut impl Rng) {
    let d = cfg.d;
    let emb_std = (1.0 / d as f64).sqrt();
    for (k, &vocab) in cfg.node_vocab.iter().enumerate() {
        store.insert(format!("embed.node.{k}"), gaussian(rng, vocab, d, emb_std));
    }
    for (k, &vocab) in cfg.edge_vocab.iter().enumerate() {
        store.insert(format!("embed.edge.{k}"), gaussian(rng, vocab, d, emb_std));
    }
    for l in 0..cfg.mp_layers {
        store.insert(format!("mp.{l}.epsilon"), Tensor::scalar(0.0));
        update_ffn(cfg, l).init(store, rng, d, 2 * d, d);
        fuse_ffn(cfg, l).init(store, rng, 2 * d, 2 * d, d);
        if !cfg.share_phi {
            edge_fuse_ffn(cfg, l).init(store, rng, 2 * d, 2 * d, d);
        }
    }
}

fn check_vocab(kind: &str, item: usize, label: &[usize], vocab: &[usize]) -> Result<()> {
    if label.len() != vocab.len() {
        return Err(Error::Vocab(format!(
            "{kind} {item}: {} label fields, model expects {}",
            label.len(),
            vocab.len()
        )));
    }
    for (field, (&id, &size)) in label.iter().zip(vocab).enumerate() {
        if id >= size {
            return Err(Error::Vocab(format!(
                "{kind} {item}, field {field}: id {id} outside vocabulary of size {size}"
            )));
        }
    }
    Ok(())
}

fn sum_field_embeddings(
    tape: &mut Tape,
    store: &ParameterStore,
    prefix: &str,
    labels: &[&[usize]],
    fields: usize,
    d: usize,
) -> Result<Var> {
    if fields == 0 || labels.is_empty() {
        return tape.constant(Tensor::zeros(labels.len(), d));
    }
    let mut acc: Option<Var> = None;
    for field in 0..fields {
        let table = tape.param(store, &format!("{prefix}.{field}"))?;
        let ids: Vec<usize> = labels.iter().map(|l| l[field]).collect();
        let rows = tape.gather_rows(table, &ids)?;
        acc = Some(match acc {
            None => rows,
            Some(a) => tape.add(a, rows)?,
        });
    }
    Ok(acc.expect("fields > 0"))
}

/// `h_i^0` and `e_ij^0`: per-field embedding rows summed over label fields.
/// Edge features are `E×d` in stored edge order.
pub fn embed_labels(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    graph: &Graph,
) -> Result<(Var, Var)> {
    for (i, l) in graph.node_labels().iter().enumerate() {
        check_vocab("node", i, l, &cfg.node_vocab)?;
    }
    for (k, e) in graph.edges().iter().enumerate() {
        if !cfg.edge_vocab.is_empty() || !e.label.is_empty() {
            check_vocab("edge", k, &e.label, &cfg.edge_vocab)?;
        }
    }
    let node_labels: Vec<&[usize]> = graph.node_labels().iter().map(Vec::as_slice).collect();
    let h0 = sum_field_embeddings(tape, store, "embed.node", &node_labels, cfg.node_vocab.len(), cfg.d)?;
    let edge_labels: Vec<&[usize]> = graph.edges().iter().map(|e| e.label.as_slice()).collect();
    let e0 = sum_field_embeddings(tape, store, "embed.edge", &edge_labels, cfg.edge_vocab.len(), cfg.d)?;
    Ok((h0, e0))
}

fn fuse(tape: &mut Tape, store: &ParameterStore, cfg: &ModelConfig, ffn: &Ffn, a: Var, b: Var) -> Result<Var> {
    match cfg.mp_hooks.fuse {
        FuseHook::Ffn => {
            let x = tape.concat_cols(a, b)?;
            ffn.forward(tape, store, x)
        }
        FuseHook::FirstArg => Ok(a),
        FuseHook::HalvedSum => {
            let s = tape.add(a, b)?;
            tape.scale(s, 0.5)
        }
    }
}

/// One message-passing layer (node update only).
pub fn mp_layer(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    l: usize,
    graph: &Graph,
    h: Var,
    e: Var,
) -> Result<Var> {
    let n = graph.num_nodes();
    let src: Vec<usize> = graph.edges().iter().map(|e| e.src).collect();
    let dst: Vec<usize> = graph.edges().iter().map(|e| e.dst).collect();
    let h_nbr = tape.gather_rows(h, &dst)?;
    let messages = fuse(tape, store, cfg, &fuse_ffn(cfg, l), h_nbr, e)?;
    let aggregated = tape.scatter_add_rows(messages, &src, n)?;
    let eps = tape.param(store, &format!("mp.{l}.epsilon"))?;
    let own = tape.scale_by(h, eps)?;
    let pre = tape.add(own, aggregated)?;
    match cfg.mp_hooks.update {
        UpdateHook::Ffn => update_ffn(cfg, l).forward(tape, store, pre),
        UpdateHook::Identity => Ok(pre),
    }
}

/// `e_ij' = φ([h_i, h_j])` for every stored edge `i → j`.
pub fn edge_update(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    l: usize,
    graph: &Graph,
    h: Var,
) -> Result<Var> {
    let src: Vec<usize> = graph.edges().iter().map(|e| e.src).collect();
    let dst: Vec<usize> = graph.edges().iter().map(|e| e.dst).collect();
    let hi = tape.gather_rows(h, &src)?;
    let hj = tape.gather_rows(h, &dst)?;
    fuse(tape, store, cfg, &edge_fuse_ffn(cfg, l), hi, hj)
}

/// Embedding followed by `mp_layers` rounds of (node update, edge refresh).
/// The refresh after the final layer is skipped since nothing consumes it.
pub fn run_local_mp(tape: &mut Tape, store: &ParameterStore, cfg: &ModelConfig, graph: &Graph) -> Result<Var> {
    let (mut h, mut e) = embed_labels(tape, store, cfg, graph)?;
    for l in 0..cfg.mp_layers {
        h = mp_layer(tape, store, cfg, l, graph, h, e)?;
        if l + 1 < cfg.mp_layers {
            e = edge_update(tape, store, cfg, l, graph, h)?;
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, Variant};
    use crate::nn::stream_rng;

    fn cfg(d: usize, layers: usize) -> ModelConfig {
        ModelConfig {
            d,
            mp_layers: layers,
            node_vocab: vec![4],
            edge_vocab: vec![2],
            variant: Variant::Full,
            ..ModelConfig::default()
        }
    }

    fn store_for(c: &ModelConfig) -> ParameterStore {
        let mut s = ParameterStore::new();
        init_params(&mut s, c, &mut stream_rng(3, 0, 0));
        s
    }

    #[test]
    fn identical_labels_identical_rows() {
        let c = cfg(4, 0);
        let s = store_for(&c);
        let g = Graph::undirected(vec![vec![2], vec![1], vec![2]], &[(0, 1, vec![0])]).unwrap();
        let mut t = Tape::new();
        let (h, _) = embed_labels(&mut t, &s, &c, &g).unwrap();
        let v = t.value(h);
        assert_eq!(v.row_slice(0), v.row_slice(2));
        assert_eq!(v.row_slice(0), s.get("embed.node.0").unwrap().row_slice(2));
    }

    #[test]
    fn zero_tables_give_zero_features() {
        let c = cfg(3, 0);
        let mut s = store_for(&c);
        for (_, t) in s.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let g = Graph::undirected(vec![vec![1], vec![3]], &[(0, 1, vec![1])]).unwrap();
        let mut t = Tape::new();
        let (h, e) = embed_labels(&mut t, &s, &c, &g).unwrap();
        assert!(t.value(h).data().iter().all(|&v| v == 0.0));
        assert!(t.value(e).data().iter().all(|&v| v == 0.0));
        assert_eq!(t.value(e).shape(), &[2, 3]);
    }

    #[test]
    fn multi_field_labels_sum() {
        let c = ModelConfig {
            node_vocab: vec![3, 2],
            ..cfg(2, 0)
        };
        let s = store_for(&c);
        let g = Graph::undirected(vec![vec![2, 1]], &[]).unwrap();
        let mut t = Tape::new();
        let (h, _) = embed_labels(&mut t, &s, &c, &g).unwrap();
        let a = s.get("embed.node.0").unwrap().row_slice(2);
        let b = s.get("embed.node.1").unwrap().row_slice(1);
        assert_eq!(t.value(h).data(), &[a[0] + b[0], a[1] + b[1]]);
    }

    #[test]
    fn out_of_vocab_names_node_and_field() {
        let c = cfg(2, 0);
        let s = store_for(&c);
        let g = Graph::undirected(vec![vec![0], vec![9]], &[]).unwrap();
        let err = embed_labels(&mut Tape::new(), &s, &c, &g).unwrap_err().to_string();
        assert!(err.contains("node 1, field 0"), "{err}");
        let g = Graph::undirected(vec![vec![0], vec![1]], &[(0, 1, vec![5])]).unwrap();
        let err = embed_labels(&mut Tape::new(), &s, &c, &g).unwrap_err().to_string();
        assert!(err.contains("edge 0, field 0"), "{err}");
    }

    #[test]
    fn isolated_node_with_identity_update() {
        let c = ModelConfig {
            mp_hooks: MpHooks {
                update: UpdateHook::Identity,
                fuse: FuseHook::Ffn,
            },
            ..cfg(3, 1)
        };
        let mut s = store_for(&c);
        s.insert("mp.0.epsilon", Tensor::scalar(0.7));
        let g = Graph::undirected(vec![vec![1]], &[]).unwrap();
        let mut t = Tape::new();
        let (h, e) = embed_labels(&mut t, &s, &c, &g).unwrap();
        let out = mp_layer(&mut t, &s, &c, 0, &g, h, e).unwrap();
        let expect: Vec<f64> = t.value(h).data().iter().map(|v| 0.7 * v).collect();
        assert_eq!(t.value(out).data(), expect.as_slice());
    }

    #[test]
    fn star_center_sums_three_leaves() {
        let c = ModelConfig {
            mp_hooks: MpHooks {
                update: UpdateHook::Identity,
                fuse: FuseHook::FirstArg,
            },
            ..cfg(3, 1)
        };
        let mut s = store_for(&c);
        s.insert("mp.0.epsilon", Tensor::scalar(0.5));
        let g = Graph::undirected(
            vec![vec![0], vec![1], vec![1], vec![1]],
            &[(0, 1, vec![0]), (0, 2, vec![1]), (0, 3, vec![0])],
        )
        .unwrap();
        let mut t = Tape::new();
        let (h, e) = embed_labels(&mut t, &s, &c, &g).unwrap();
        let out = mp_layer(&mut t, &s, &c, 0, &g, h, e).unwrap();
        let hv = t.value(h).clone();
        for k in 0..3 {
            let expect = 0.5 * hv.at(0, k) + 3.0 * hv.at(1, k);
            assert!((t.value(out).at(0, k) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn halved_sum_edge_update_on_equal_endpoints() {
        let c = ModelConfig {
            mp_hooks: MpHooks {
                update: UpdateHook::Identity,
                fuse: FuseHook::HalvedSum,
            },
            ..cfg(3, 1)
        };
        let s = store_for(&c);
        let g = Graph::undirected(vec![vec![2], vec![2]], &[(0, 1, vec![0])]).unwrap();
        let mut t = Tape::new();
        let (h, _) = embed_labels(&mut t, &s, &c, &g).unwrap();
        let e = edge_update(&mut t, &s, &c, 0, &g, h).unwrap();
        assert_eq!(t.value(e).row_slice(0), t.value(h).row_slice(0));
    }

    #[test]
    fn edge_update_is_ordered() {
        let c = cfg(4, 1);
        let s = store_for(&c);
        let g = Graph::undirected(vec![vec![0], vec![3]], &[(0, 1, vec![0])]).unwrap();
        let mut t = Tape::new();
        let (h, _) = embed_labels(&mut t, &s, &c, &g).unwrap();
        let e = edge_update(&mut t, &s, &c, 0, &g, h).unwrap();
        assert_ne!(t.value(e).row_slice(0), t.value(e).row_slice(1));
    }

    #[test]
    fn zero_layers_returns_embedding() {
        let c = cfg(4, 0);
        let s = store_for(&c);
        let g = Graph::undirected(vec![vec![0], vec![3]], &[(0, 1, vec![1])]).unwrap();
        let mut t = Tape::new();
        let h = run_local_mp(&mut t, &s, &c, &g).unwrap();
        let (h0, _) = embed_labels(&mut t, &s, &c, &g).unwrap();
        assert_eq!(t.value(h), t.value(h0));
    }

    #[test]
    fn unshared_phi_registers_edge_ffn() {
        let c = ModelConfig {
            share_phi: false,
            ..cfg(2, 2)
        };
        let s = store_for(&c);
        assert!(s.contains("mp.0.phi_edge.w1"));
        assert!(!store_for(&cfg(2, 2)).contains("mp.0.phi_edge.w1"));
    }
}
