//! Positional injection and the self-attention encoder over graph tokens.

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::{gaussian, Ffn, ParameterStore};

pub const LAMBDA_LOGIT: &str = "attn.lambda_logit";
pub const LN_EPS: f64 = 1e-5;

/// Test-only switches for closed-form checks of the encoder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AttnHooks {
    /// Layer norms return their input unchanged.
    pub ln_passthrough: bool,
    /// No sinusoidal term in the positional injection.
    pub spe_off: bool,
}

/// `SPE(pos)[2k] = sin(pos / base^{2k/d})`, `SPE(pos)[2k+1] = cos(...)`.
pub fn sinusoidal_pe(pos: usize, d: usize, base: f64) -> Result<Vec<f64>> {
    if d % 2 != 0 {
        return Err(Error::Config(format!("sinusoidal encoding needs an even width, got {d}")));
    }
    let mut out = Vec::with_capacity(d);
    for k in 0..d / 2 {
        let angle = pos as f64 / base.powf(2.0 * k as f64 / d as f64);
        out.push(angle.sin());
        out.push(angle.cos());
    }
    Ok(out)
}

/// Rows `SPE(0) .. SPE(m−1)`.
pub fn sinusoidal_table(m: usize, d: usize, base: f64) -> Result<Tensor> {
    let mut data = Vec::with_capacity(m * d);
    for pos in 0..m {
        data.extend(sinusoidal_pe(pos, d, base)?);
    }
    Tensor::matrix(m, d, data)
}

/// Mixing weight for the learnable positional term.
#[derive(Clone, Copy, Debug)]
pub enum Lambda {
    Fixed(f64),
    /// Learnable, passed through a sigmoid so it stays in `[0, 1]`.
    Learned(Var),
}

/// `g0_pos = (1 − λ)·g_pos + λ·b_pos + SPE(pos)`, positions 0-based.
pub fn inject_positional(
    tape: &mut Tape,
    tokens: Var,
    basis: Var,
    lambda: Lambda,
    spe: Option<&Tensor>,
) -> Result<Var> {
    if tape.value(tokens).shape() != tape.value(basis).shape() {
        return Err(Error::shape("inject_positional", "tokens and basis differ in shape"));
    }
    let mixed = match lambda {
        Lambda::Fixed(l) => {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("lambda {l} outside [0, 1]")));
            }
            let a = tape.scale(tokens, 1.0 - l)?;
            let b = tape.scale(basis, l)?;
            tape.add(a, b)?
        }
        Lambda::Learned(l) => {
            let one = tape.constant(Tensor::scalar(1.0))?;
            let rest = tape.sub(one, l)?;
            let a = tape.scale_by(tokens, rest)?;
            let b = tape.scale_by(basis, l)?;
            tape.add(a, b)?
        }
    };
    match spe {
        Some(table) => {
            let s = tape.constant(table.clone())?;
            tape.add(mixed, s)
        }
        None => Ok(mixed),
    }
}

fn ffn(cfg: &ModelConfig, l: usize) -> Ffn {
    Ffn::new(format!("attn.{l}.ffn"), cfg.activation)
}

fn needs_output_projection(cfg: &ModelConfig) -> bool {
    cfg.heads * cfg.dk != cfg.d
}

pub fn init_params(store: &mut ParameterStore, cfg: &ModelConfig, rng: &mut impl Rng) {
    let (d, width) = (cfg.d, cfg.heads * cfg.dk);
    let std = (1.0 / d as f64).sqrt();
    for l in 0..cfg.attn_layers {
        for w in ["wq", "wk", "wv"] {
            store.insert(format!("attn.{l}.{w}"), gaussian(rng, d, width, std));
        }
        if needs_output_projection(cfg) {
            store.insert(format!("attn.{l}.wo"), gaussian(rng, width, d, (1.0 / width as f64).sqrt()));
        }
        ffn(cfg, l).init(store, rng, d, 2 * d, d);
        for ln in ["ln1", "ln2"] {
            store.insert(format!("attn.{l}.{ln}.gain"), Tensor::filled(1, d, 1.0));
            store.insert(format!("attn.{l}.{ln}.bias"), Tensor::zeros(1, d));
        }
    }
    if cfg.learnable_lambda {
        let l = cfg.lambda.clamp(1e-6, 1.0 - 1e-6);
        store.insert(LAMBDA_LOGIT, Tensor::scalar((l / (1.0 - l)).ln()));
    }
}

fn layer_norm(tape: &mut Tape, store: &ParameterStore, cfg: &ModelConfig, name: &str, x: Var) -> Result<Var> {
    if cfg.attn_hooks.ln_passthrough {
        return Ok(x);
    }
    let gain = tape.param(store, &format!("{name}.gain"))?;
    let bias = tape.param(store, &format!("{name}.bias"))?;
    tape.layer_norm_rows(x, gain, bias, LN_EPS)
}

/// `Z = softmax(G Wq (G Wk)ᵀ / √dk) · G Wv`, then
/// `G' = LN(G + FFN(LN(G + Z)))`. Attention weight matrices are pushed onto
/// `weights` when given (one per head).
pub fn attention_layer(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    l: usize,
    input: Var,
    mut weights: Option<&mut Vec<Tensor>>,
) -> Result<Var> {
    let wq = tape.param(store, &format!("attn.{l}.wq"))?;
    let wk = tape.param(store, &format!("attn.{l}.wk"))?;
    let wv = tape.param(store, &format!("attn.{l}.wv"))?;
    let q = tape.matmul(input, wq)?;
    let k = tape.matmul(input, wk)?;
    let v = tape.matmul(input, wv)?;
    let scale = 1.0 / (cfg.dk as f64).sqrt();
    let mut z: Option<Var> = None;
    for head in 0..cfg.heads {
        let (qh, kh, vh) = if cfg.heads == 1 {
            (q, k, v)
        } else {
            let start = head * cfg.dk;
            (
                tape.slice_cols(q, start, cfg.dk)?,
                tape.slice_cols(k, start, cfg.dk)?,
                tape.slice_cols(v, start, cfg.dk)?,
            )
        };
        let kt = tape.transpose(kh)?;
        let logits = tape.matmul(qh, kt)?;
        let logits = tape.scale(logits, scale)?;
        let attn = tape.softmax_rows(logits)?;
        if let Some(w) = weights.as_deref_mut() {
            w.push(tape.value(attn).clone());
        }
        let zh = tape.matmul(attn, vh)?;
        z = Some(match z {
            None => zh,
            Some(prev) => tape.concat_cols(prev, zh)?,
        });
    }
    let mut z = z.expect("at least one head");
    if needs_output_projection(cfg) {
        let wo = tape.param(store, &format!("attn.{l}.wo"))?;
        z = tape.matmul(z, wo)?;
    }
    let res1 = tape.add(input, z)?;
    let normed = layer_norm(tape, store, cfg, &format!("attn.{l}.ln1"), res1)?;
    let f = ffn(cfg, l).forward(tape, store, normed)?;
    let res2 = tape.add(input, f)?;
    layer_norm(tape, store, cfg, &format!("attn.{l}.ln2"), res2)
}

/// Applies every attention layer in order; zero layers is the identity.
pub fn encode(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &ModelConfig,
    input: Var,
    mut weights: Option<&mut Vec<Tensor>>,
) -> Result<Var> {
    let mut g = input;
    for l in 0..cfg.attn_layers {
        g = attention_layer(tape, store, cfg, l, g, weights.as_deref_mut())?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::stream_rng;

    fn cfg(d: usize, layers: usize) -> ModelConfig {
        ModelConfig {
            d,
            dk: d,
            attn_layers: layers,
            ..ModelConfig::default()
        }
    }

    fn store_for(c: &ModelConfig, seed: u64) -> ParameterStore {
        let mut s = ParameterStore::new();
        init_params(&mut s, c, &mut stream_rng(seed, 0, 0));
        s
    }

    #[test]
    fn spe_at_zero() {
        assert_eq!(sinusoidal_pe(0, 6, 10000.0).unwrap(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn spe_at_one() {
        let v = sinusoidal_pe(1, 4, 10000.0).unwrap();
        let expect = [1f64.sin(), 1f64.cos(), 0.01f64.sin(), 0.01f64.cos()];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in v.iter().zip([0.84147, 0.54030, 0.01000, 0.99995]) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn spe_bounded_and_even_only() {
        for pos in 0..64 {
            assert!(sinusoidal_pe(pos, 8, 10000.0).unwrap().iter().all(|v| v.abs() <= 1.0));
        }
        assert!(matches!(sinusoidal_pe(0, 5, 10000.0), Err(Error::Config(_))));
    }

    fn inject(g: &Tensor, b: &Tensor, lambda: f64) -> Result<Tensor> {
        let spe = sinusoidal_table(g.rows(), g.cols(), 10000.0)?;
        let mut t = Tape::new();
        let gv = t.constant(g.clone())?;
        let bv = t.constant(b.clone())?;
        let out = inject_positional(&mut t, gv, bv, Lambda::Fixed(lambda), Some(&spe))?;
        Ok(t.value(out).clone())
    }

    #[test]
    fn inject_boundaries() {
        let g = Tensor::matrix(3, 4, (0..12).map(|x| x as f64 * 0.3 - 1.0).collect()).unwrap();
        let b = Tensor::matrix(3, 4, (0..12).map(|x| (x as f64).sin()).collect()).unwrap();
        let spe = sinusoidal_table(3, 4, 10000.0).unwrap();
        let plus = |x: &Tensor| {
            Tensor::new(x.shape().to_vec(), x.data().iter().zip(spe.data()).map(|(a, s)| a + s).collect())
                .unwrap()
        };
        assert_eq!(inject(&g, &b, 0.0).unwrap(), plus(&g));
        assert_eq!(inject(&g, &b, 1.0).unwrap(), plus(&b));
        assert_eq!(inject(&g, &g, 0.5).unwrap(), plus(&g));
        assert!(matches!(inject(&g, &b, 1.5), Err(Error::Config(_))));
    }

    #[test]
    fn single_token_attends_to_itself() {
        let c = cfg(4, 1);
        let s = store_for(&c, 1);
        let mut t = Tape::new();
        let g = t.constant(Tensor::row(vec![0.2, -0.4, 1.0, 0.5])).unwrap();
        let mut w = Vec::new();
        attention_layer(&mut t, &s, &c, 0, g, Some(&mut w)).unwrap();
        assert_eq!(w[0].data(), &[1.0]);
    }

    #[test]
    fn identical_rows_give_uniform_attention() {
        let c = cfg(4, 2);
        let s = store_for(&c, 2);
        let mut t = Tape::new();
        let g = t.constant(Tensor::from_rows(&vec![vec![0.2, -0.4, 1.0, 0.5]; 3]).unwrap()).unwrap();
        let mut w = Vec::new();
        let out = encode(&mut t, &s, &c, g, Some(&mut w)).unwrap();
        for a in &w {
            assert!(a.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
        let o = t.value(out);
        assert_eq!(o.row_slice(0), o.row_slice(1));
        assert_eq!(o.row_slice(1), o.row_slice(2));
    }

    #[test]
    fn residual_identity_with_zeroed_branches() {
        let c = ModelConfig {
            attn_hooks: AttnHooks {
                ln_passthrough: true,
                spe_off: true,
            },
            ..cfg(4, 1)
        };
        let mut s = store_for(&c, 3);
        for (name, t) in s.iter_mut() {
            if name.contains(".ffn.") || name.ends_with(".wv") {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut t = Tape::new();
        let input = Tensor::matrix(2, 4, vec![0.1, 0.2, -0.3, 0.4, 1.0, -1.0, 0.5, 0.0]).unwrap();
        let g = t.constant(input.clone()).unwrap();
        let out = attention_layer(&mut t, &s, &c, 0, g, None).unwrap();
        assert_eq!(t.value(out), &input);
    }

    #[test]
    fn zero_layers_is_identity() {
        let c = cfg(4, 0);
        let s = store_for(&c, 0);
        let mut t = Tape::new();
        let g = t.constant(Tensor::filled(3, 4, 0.7)).unwrap();
        let out = encode(&mut t, &s, &c, g, None).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn multi_head_shapes_and_row_sums() {
        let c = ModelConfig {
            heads: 2,
            dk: 3,
            ..cfg(4, 1)
        };
        let s = store_for(&c, 4);
        assert!(s.contains("attn.0.wo"));
        let mut t = Tape::new();
        let g = t
            .constant(Tensor::matrix(3, 4, (0..12).map(|x| (x as f64 * 0.7).cos()).collect()).unwrap())
            .unwrap();
        let mut w = Vec::new();
        let out = encode(&mut t, &s, &c, g, Some(&mut w)).unwrap();
        assert_eq!(t.value(out).shape(), &[3, 4]);
        assert_eq!(w.len(), 2);
        for a in &w {
            for row in a.to_rows() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
