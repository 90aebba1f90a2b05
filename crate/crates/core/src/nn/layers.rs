use std::rc::Rc;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: store.weight(&format!("{name}.w"), fan_in, fan_out),
            b: store.bias(&format!("{name}.b"), fan_out),
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let y = tape.matmul(x, w)?;
        let b = tape.param(self.b);
        tape.add_bias(y, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    LeakyRelu,
    Identity,
}

/// Stack of affine layers with the activation between (not after) them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    /// Dropout on hidden activations during training.
    pub dropout: f64,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], activation: Activation) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Self {
            layers,
            activation,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i < last {
                if self.activation == Activation::LeakyRelu {
                    h = tape.leaky_relu(h);
                }
                h = tape.dropout(h, self.dropout)?;
            }
        }
        Ok(h)
    }
}

/// Functional form: run `mlp` on `x`.
pub fn mlp(tape: &mut Tape, net: &Mlp, x: Var) -> Result<Var> {
    net.forward(tape, x)
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gain: store.norm_gain(&format!("{name}.gain"), width),
            bias: store.norm_bias(&format!("{name}.bias"), width),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let g = tape.param(self.gain);
        let b = tape.param(self.bias);
        tape.layer_norm(x, g, b)
    }
}

/// Source/destination indices of one edge type, shared by reference.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    pub src: Rc<[usize]>,
    pub dst: Rc<[usize]>,
}

impl EdgeIndex {
    pub fn new(src: &[usize], dst: &[usize]) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Transformer-style graph convolution followed by a feed-forward block.
///
/// Pre-norm on both inputs; per head, destination queries attend over their
/// in-edges with keys and values taken from the source node plus the edge
/// embedding. The aggregated message is added to a skip projection of the
/// destination, then the residual and a pre-norm FFN with residual follow.
#[derive(Debug, Clone)]
pub struct GraphAttention {
    pub width: usize,
    pub heads: usize,
    pub norm_src: LayerNorm,
    pub norm_dst: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub skip: Linear,
    pub norm_ffn: LayerNorm,
    pub ffn: Mlp,
    pub dropout: f64,
}

impl GraphAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        ffn_hidden: usize,
        dropout: f64,
    ) -> Self {
        assert!(width.is_multiple_of(heads), "width must be divisible by heads");
        Self {
            width,
            heads,
            norm_src: LayerNorm::new(store, &format!("{name}.norm_src"), width),
            norm_dst: LayerNorm::new(store, &format!("{name}.norm_dst"), width),
            query: Linear::new(store, &format!("{name}.q"), width, width),
            key: Linear::new(store, &format!("{name}.k"), width, width),
            value: Linear::new(store, &format!("{name}.v"), width, width),
            skip: Linear::new(store, &format!("{name}.skip"), width, width),
            norm_ffn: LayerNorm::new(store, &format!("{name}.norm_ffn"), width),
            ffn: Mlp::new(
                store,
                &format!("{name}.ffn"),
                &[width, ffn_hidden, width],
                Activation::LeakyRelu,
            )
            .with_dropout(dropout),
            dropout,
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        src: Var,
        dst: Var,
        edges: &EdgeIndex,
        edge_emb: Var,
    ) -> Result<Var> {
        Ok(self.forward_with_attention(tape, src, dst, edges, edge_emb)?.0)
    }

    /// Also returns the `edges x heads` attention weights (`None` without edges).
    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        src: Var,
        dst: Var,
        edges: &EdgeIndex,
        edge_emb: Var,
    ) -> Result<(Var, Option<Var>)> {
        let n_dst = tape.shape(dst)[0];
        let dst_n = self.norm_dst.forward(tape, dst)?;
        let mut out = self.skip.forward(tape, dst_n)?;
        let mut weights = None;
        if !edges.is_empty() {
            let src_n = self.norm_src.forward(tape, src)?;
            let q = self.query.forward(tape, dst_n)?;
            let k = self.key.forward(tape, src_n)?;
            let v = self.value.forward(tape, src_n)?;
            let q_e = tape.gather_rows(q, edges.dst.clone())?;
            let k_e = tape.gather_rows(k, edges.src.clone())?;
            let k_e = tape.add(k_e, edge_emb)?;
            let v_e = tape.gather_rows(v, edges.src.clone())?;
            let v_e = tape.add(v_e, edge_emb)?;
            let logits = tape.head_dot(q_e, k_e, self.heads)?;
            let scale = 1.0 / ((self.width / self.heads) as f64).sqrt();
            let logits = tape.scalar_mul(logits, scale);
            let alpha = tape.softmax_grouped(logits, edges.dst.clone(), n_dst)?;
            let msg = tape.head_scale(v_e, alpha, self.heads)?;
            let agg = tape.scatter_add_rows(msg, edges.dst.clone(), n_dst)?;
            out = tape.add(out, agg)?;
            weights = Some(alpha);
        }
        let out = tape.dropout(out, self.dropout)?;
        let h = tape.add(dst, out)?;
        let hn = self.norm_ffn.forward(tape, h)?;
        let f = self.ffn.forward(tape, hn)?;
        Ok((tape.add(h, f)?, weights))
    }
}
