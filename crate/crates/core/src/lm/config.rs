use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model dimensions. Token ids live in `0..vocab`; sequences plus prefix must
/// fit in `context` positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab: usize,
    pub context: usize,
    pub d_ff: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            n_layers: 4,
            d_model: 64,
            n_heads: 4,
            vocab: 512,
            context: 128,
            d_ff: 256,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("context", self.context),
            ("d_ff", self.d_ff),
        ] {
            if v == 0 {
                errs.push(format!("{name} must be >= 1"));
            }
        }
        if self.vocab < 3 {
            errs.push("vocab must be >= 3".to_string());
        }
        if self.n_heads > 0 && self.d_model % self.n_heads != 0 {
            errs.push(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!("model config: {}", errs.join("; "))))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TensorKind {
    TokEmb,
    PosEmb,
    Ln1Gain,
    Ln1Bias,
    Wq,
    Wk,
    Wv,
    Wo,
    Ln2Gain,
    Ln2Bias,
    W1,
    B1,
    W2,
    B2,
    WOut,
}

impl TensorKind {
    pub const PER_LAYER: [TensorKind; 12] = [
        TensorKind::Ln1Gain,
        TensorKind::Ln1Bias,
        TensorKind::Wq,
        TensorKind::Wk,
        TensorKind::Wv,
        TensorKind::Wo,
        TensorKind::Ln2Gain,
        TensorKind::Ln2Bias,
        TensorKind::W1,
        TensorKind::B1,
        TensorKind::W2,
        TensorKind::B2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TensorKind::TokEmb => "tok_emb",
            TensorKind::PosEmb => "pos_emb",
            TensorKind::Ln1Gain => "ln1_g",
            TensorKind::Ln1Bias => "ln1_b",
            TensorKind::Wq => "wq",
            TensorKind::Wk => "wk",
            TensorKind::Wv => "wv",
            TensorKind::Wo => "wo",
            TensorKind::Ln2Gain => "ln2_g",
            TensorKind::Ln2Bias => "ln2_b",
            TensorKind::W1 => "w1",
            TensorKind::B1 => "b1",
            TensorKind::W2 => "w2",
            TensorKind::B2 => "b2",
            TensorKind::WOut => "w_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub kind: TensorKind,
    /// Zero-based transformer layer, `None` for embeddings and the output matrix.
    pub layer: Option<usize>,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn name(&self) -> String {
        match self.layer {
            Some(l) => format!("layers.{l}.{}", self.kind.name()),
            None => self.kind.name().to_string(),
        }
    }
}

/// Flat offsets of one layer's tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Position of every tensor in the flat parameter buffer. Order:
/// `tok_emb, pos_emb, layers.0.*, ..., layers.{n-1}.*, w_out`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) tok_emb: usize,
    pub(crate) pos_emb: usize,
    pub(crate) w_out: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &LmConfig) -> Self {
        let (d, f) = (cfg.d_model, cfg.d_ff);
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |kind, layer, rows, cols| {
            tensors.push(TensorSpec {
                kind,
                layer,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
            offset - rows * cols
        };
        let tok_emb = push(TensorKind::TokEmb, None, cfg.vocab, d);
        let pos_emb = push(TensorKind::PosEmb, None, cfg.context, d);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            let mut at = [0usize; 12];
            for (slot, kind) in at.iter_mut().zip(TensorKind::PER_LAYER) {
                let (rows, cols) = match kind {
                    TensorKind::Wq | TensorKind::Wk | TensorKind::Wv | TensorKind::Wo => (d, d),
                    TensorKind::W1 => (d, f),
                    TensorKind::W2 => (f, d),
                    TensorKind::B1 => (1, f),
                    _ => (1, d),
                };
                *slot = push(kind, Some(l), rows, cols);
            }
            let [ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, w1, b1, w2, b2] = at;
            layers.push(LayerOffsets {
                ln1_g,
                ln1_b,
                wq,
                wk,
                wv,
                wo,
                ln2_g,
                ln2_b,
                w1,
                b1,
                w2,
                b2,
            });
        }
        let w_out = push(TensorKind::WOut, None, d, cfg.vocab);
        ParamLayout {
            tensors,
            layers,
            tok_emb,
            pos_emb,
            w_out,
            total: offset,
        }
    }

    /// Index into `tensors` for a per-layer kind, or for a global kind when `layer` is `None`.
    pub fn index(&self, kind: TensorKind, layer: Option<usize>) -> Option<usize> {
        self.tensors
            .iter()
            .position(|t| t.kind == kind && t.layer == layer)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Index of the first tensor of layer `l`; the layer's 12 tensors are contiguous.
    pub(crate) fn layer_start(&self, l: usize) -> usize {
        2 + 12 * l
    }

    pub(crate) fn w_out_index(&self) -> usize {
        self.tensors.len() - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_reproducible_from_dims() {
        let cfg = LmConfig::default();
        let (n, d, v, c, f) = (4, 64, 512, 128, 256);
        let per_layer = 4 * d + 4 * d * d + 2 * d * f + f + d;
        let expect = v * d + c * d + n * per_layer + d * v;
        let layout = ParamLayout::new(&cfg);
        assert_eq!(layout.total, expect);
        assert_eq!(layout.tensors.len(), 2 + 12 * n + 1);
        let mut off = 0;
        for t in &layout.tensors {
            assert_eq!(t.offset, off);
            off += t.len();
        }
        assert_eq!(layout.index(TensorKind::W1, Some(2)), Some(layout.layer_start(2) + 8));
        assert_eq!(layout.tensors[layout.w_out_index()].kind, TensorKind::WOut);
    }

    #[test]
    fn bad_heads_rejected() {
        let cfg = LmConfig {
            n_heads: 3,
            ..LmConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
