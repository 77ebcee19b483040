use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{LmConfig, ParamLayout, TensorKind};
use crate::error::{Error, Result};

/// Pretrained parameter set held in one flat buffer described by `layout`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyLmParams {
    pub config: LmConfig,
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl ToyLmParams {
    /// Seeded initialization: matrices N(0, 1/fan_in), residual-stream output
    /// projections further scaled by `1/sqrt(2n)`, gains 1, biases 0.
    pub fn init(config: LmConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut data = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let resid = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        for t in &layout.tensors {
            let std = match t.kind {
                TensorKind::TokEmb | TensorKind::PosEmb => 1.0 / (config.d_model as f64).sqrt(),
                TensorKind::Wo | TensorKind::W2 => resid / (t.rows as f64).sqrt(),
                TensorKind::Wq
                | TensorKind::Wk
                | TensorKind::Wv
                | TensorKind::W1
                | TensorKind::WOut => 1.0 / (t.rows as f64).sqrt(),
                TensorKind::Ln1Gain | TensorKind::Ln2Gain => {
                    data[t.range()].fill(1.0);
                    continue;
                }
                TensorKind::Ln1Bias | TensorKind::Ln2Bias | TensorKind::B1 | TensorKind::B2 => {
                    continue
                }
            };
            for x in &mut data[t.range()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = std * z;
            }
        }
        Ok(ToyLmParams {
            config,
            layout,
            data,
        })
    }

    pub fn from_data(config: LmConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if data.len() != layout.total {
            return Err(Error::Shape(format!(
                "parameter buffer has {} values, config needs {}",
                data.len(),
                layout.total
            )));
        }
        Ok(ToyLmParams {
            config,
            layout,
            data,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    pub fn tensor(&self, kind: TensorKind, layer: Option<usize>) -> &[f64] {
        let i = self
            .layout
            .index(kind, layer)
            .expect("tensor kind/layer pair exists in layout");
        &self.data[self.layout.tensors[i].range()]
    }

    pub fn tensor_mut(&mut self, kind: TensorKind, layer: Option<usize>) -> &mut [f64] {
        let i = self
            .layout
            .index(kind, layer)
            .expect("tensor kind/layer pair exists in layout");
        let r = self.layout.tensors[i].range();
        &mut self.data[r]
    }
}

/// Trainable prefix: `prefix_len` rows of `n_layers * d_model`. Slice `l` of a
/// row is that prefix position's residual-stream input to layer `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixBank {
    prefix_len: usize,
    n_layers: usize,
    d_model: usize,
    data: Vec<f64>,
}

impl PrefixBank {
    pub fn new(config: &LmConfig, prefix_len: usize, data: Vec<f64>) -> Result<Self> {
        if prefix_len == 0 {
            return Err(Error::Argument("prefix_len must be >= 1".into()));
        }
        let bank = Self::raw(config, prefix_len, data)?;
        if let Some(i) = bank.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("prefix entry {i} is not finite")));
        }
        Ok(bank)
    }

    /// A bank with no positions; forwards identically to having no prefix.
    pub fn empty(config: &LmConfig) -> Self {
        PrefixBank {
            prefix_len: 0,
            n_layers: config.n_layers,
            d_model: config.d_model,
            data: Vec::new(),
        }
    }

    /// Entries N(0, 1/d_model), matching the token-embedding scale.
    pub fn random(config: &LmConfig, prefix_len: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let std = 1.0 / (config.d_model as f64).sqrt();
        let n = prefix_len * config.n_layers * config.d_model;
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                std * z
            })
            .collect();
        Self::new(config, prefix_len, data)
    }

    fn raw(config: &LmConfig, prefix_len: usize, data: Vec<f64>) -> Result<Self> {
        let expect = prefix_len * config.n_layers * config.d_model;
        if data.len() != expect {
            return Err(Error::Shape(format!(
                "prefix bank has {} values, expected {prefix_len} x {}",
                data.len(),
                config.n_layers * config.d_model
            )));
        }
        Ok(PrefixBank {
            prefix_len,
            n_layers: config.n_layers,
            d_model: config.d_model,
            data,
        })
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Flat index of entry `(position p, layer l, channel c)`.
    #[inline]
    pub fn index(&self, p: usize, l: usize, c: usize) -> usize {
        (p * self.n_layers + l) * self.d_model + c
    }

    /// Layer `l` slice as a `prefix_len x d_model` row-major copy.
    pub(crate) fn layer_rows(&self, l: usize) -> Vec<f64> {
        let d = self.d_model;
        let mut out = Vec::with_capacity(self.prefix_len * d);
        for p in 0..self.prefix_len {
            let s = self.index(p, l, 0);
            out.extend_from_slice(&self.data[s..s + d]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded() {
        let cfg = LmConfig {
            n_layers: 2,
            d_model: 16,
            n_heads: 2,
            vocab: 50,
            context: 16,
            d_ff: 32,
        };
        let a = ToyLmParams::init(cfg, 7).unwrap();
        let b = ToyLmParams::init(cfg, 7).unwrap();
        let c = ToyLmParams::init(cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data, c.data);
        assert!(a.tensor(TensorKind::Ln1Gain, Some(1)).iter().all(|&g| g == 1.0));
        assert!(a.tensor(TensorKind::B1, Some(0)).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn prefix_layout_and_validation() {
        let cfg = LmConfig {
            n_layers: 3,
            d_model: 4,
            n_heads: 1,
            vocab: 10,
            context: 8,
            d_ff: 4,
        };
        let data: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let bank = PrefixBank::new(&cfg, 2, data).unwrap();
        assert_eq!(bank.layer_rows(1), vec![4.0, 5.0, 6.0, 7.0, 16.0, 17.0, 18.0, 19.0]);
        assert!(PrefixBank::new(&cfg, 0, vec![]).is_err());
        assert!(PrefixBank::new(&cfg, 1, vec![f64::NAN; 12]).is_err());
        assert!(PrefixBank::new(&cfg, 1, vec![0.0; 11]).is_err());
    }
}
