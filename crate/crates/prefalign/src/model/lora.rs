//! Low-rank adapters over the attention projection matrices.
//!
//! Each adapted projection `W` (stored in `x @ W` orientation, in x out)
//! gains a pair of factors: `a` maps input to rank, `b` maps rank to output,
//! and the adapted map is `x @ W + (alpha/rank) * ((x @ a) @ b)`. `b` starts
//! at zero so a freshly adapted model is exactly the base model; only `a`
//! and `b` train while the base stays frozen.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::math::Mat;
use super::transformer::gauss;
use crate::{Error, Result};

/// Which attention projections carry adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoraTarget {
    Query,
    Key,
    Value,
    Output,
}

impl LoraTarget {
    pub const ALL: [LoraTarget; 4] = [
        LoraTarget::Query,
        LoraTarget::Key,
        LoraTarget::Value,
        LoraTarget::Output,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LoraTarget::Query => "query",
            LoraTarget::Key => "key",
            LoraTarget::Value => "value",
            LoraTarget::Output => "output",
        }
    }
}

impl std::str::FromStr for LoraTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "query" | "q" | "q_proj" => Ok(LoraTarget::Query),
            "key" | "k" | "k_proj" => Ok(LoraTarget::Key),
            "value" | "v" | "v_proj" => Ok(LoraTarget::Value),
            "output" | "o" | "o_proj" => Ok(LoraTarget::Output),
            other => Err(Error::validation(format!(
                "unknown LoRA target {other:?}; expected one of query, key, value, output"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub targets: Vec<LoraTarget>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: 8,
            alpha: 16.0,
            targets: vec![LoraTarget::Query, LoraTarget::Value],
            seed: 0,
        }
    }
}

impl LoraConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::validation("LoRA rank must be at least 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::validation("LoRA alpha must be positive"));
        }
        if self.targets.is_empty() {
            return Err(Error::validation("LoRA target set must be non-empty"));
        }
        let mut sorted = self.targets.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.targets.len() {
            return Err(Error::validation("LoRA target set has duplicates"));
        }
        Ok(())
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// One adapted projection: `a` is in x rank, `b` is rank x out.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraPair {
    pub a: Mat,
    pub b: Mat,
}

impl LoraPair {
    fn init(d_in: usize, d_out: usize, rank: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut a = Mat::zeros(d_in, rank);
        for v in a.as_mut_slice() {
            *v = gauss(rng, 0.02);
        }
        LoraPair {
            a,
            b: Mat::zeros(rank, d_out),
        }
    }

    /// `(x @ a) @ b * scale`, the adapter's additive contribution.
    pub(crate) fn delta(&self, x: &Mat, scale: f64) -> Mat {
        let mut d = x.matmul(&self.a).matmul(&self.b);
        for v in d.as_mut_slice() {
            *v *= scale;
        }
        d
    }

    /// Dense `scale * (a @ b)` for merging into the base weight.
    pub(crate) fn merged_delta(&self, scale: f64) -> Mat {
        let mut d = self.a.matmul(&self.b);
        for v in d.as_mut_slice() {
            *v *= scale;
        }
        d
    }

    pub fn param_count(&self) -> usize {
        self.a.len() + self.b.len()
    }
}

/// Adapter state for every layer; targets not in the config stay `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapters {
    pub config: LoraConfig,
    pub layers: Vec<LayerAdapters>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerAdapters {
    pub query: Option<LoraPair>,
    pub key: Option<LoraPair>,
    pub value: Option<LoraPair>,
    pub output: Option<LoraPair>,
}

impl LayerAdapters {
    pub fn get(&self, target: LoraTarget) -> Option<&LoraPair> {
        match target {
            LoraTarget::Query => self.query.as_ref(),
            LoraTarget::Key => self.key.as_ref(),
            LoraTarget::Value => self.value.as_ref(),
            LoraTarget::Output => self.output.as_ref(),
        }
    }

    fn slot_mut(&mut self, target: LoraTarget) -> &mut Option<LoraPair> {
        match target {
            LoraTarget::Query => &mut self.query,
            LoraTarget::Key => &mut self.key,
            LoraTarget::Value => &mut self.value,
            LoraTarget::Output => &mut self.output,
        }
    }
}

impl LoraAdapters {
    /// Fresh adapters: `a` gaussian, `b` zero, so the adapted model equals
    /// the base model exactly until training moves `b`.
    pub fn init(config: LoraConfig, layers: usize, embed_dim: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut out = Vec::with_capacity(layers);
        for _ in 0..layers {
            let mut layer = LayerAdapters::default();
            for &target in LoraTarget::ALL.iter() {
                if config.targets.contains(&target) {
                    *layer.slot_mut(target) =
                        Some(LoraPair::init(embed_dim, embed_dim, config.rank, &mut rng));
                }
            }
            out.push(layer);
        }
        Ok(LoraAdapters {
            config,
            layers: out,
        })
    }

    pub fn scaling(&self) -> f64 {
        self.config.scaling()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| LoraTarget::ALL.iter().filter_map(|&t| l.get(t)))
            .map(LoraPair::param_count)
            .sum()
    }

    /// Stable enumeration of adapter tensors: layer-major, then target in
    /// query/key/value/output order, `a` before `b`.
    pub fn tensors(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for &target in LoraTarget::ALL.iter() {
                if let Some(pair) = layer.get(target) {
                    out.push((format!("layer{i}.lora_{}.a", target.name()), &pair.a));
                    out.push((format!("layer{i}.lora_{}.b", target.name()), &pair.b));
                }
            }
        }
        out
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for slot in [
                &mut layer.query,
                &mut layer.key,
                &mut layer.value,
                &mut layer.output,
            ] {
                if let Some(pair) = slot {
                    out.push(pair.a.as_mut_slice());
                    out.push(pair.b.as_mut_slice());
                }
            }
        }
        out
    }

    /// Zero-filled gradient container with matching structure.
    pub(crate) fn zeros_like(&self) -> LoraGrads {
        LoraGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerAdapterGrads {
                    query: l.query.as_ref().map(pair_zeros),
                    key: l.key.as_ref().map(pair_zeros),
                    value: l.value.as_ref().map(pair_zeros),
                    output: l.output.as_ref().map(pair_zeros),
                })
                .collect(),
        }
    }
}

fn pair_zeros(p: &LoraPair) -> PairGrads {
    PairGrads {
        a: Mat::zeros(p.a.rows(), p.a.cols()),
        b: Mat::zeros(p.b.rows(), p.b.cols()),
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PairGrads {
    pub a: Mat,
    pub b: Mat,
}

#[derive(Debug, Clone)]
pub(crate) struct LoraGrads {
    pub layers: Vec<LayerAdapterGrads>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerAdapterGrads {
    pub query: Option<PairGrads>,
    pub key: Option<PairGrads>,
    pub value: Option<PairGrads>,
    pub output: Option<PairGrads>,
}

impl LayerAdapterGrads {
    pub(crate) fn slot_mut(&mut self, target: LoraTarget) -> &mut Option<PairGrads> {
        match target {
            LoraTarget::Query => &mut self.query,
            LoraTarget::Key => &mut self.key,
            LoraTarget::Value => &mut self.value,
            LoraTarget::Output => &mut self.output,
        }
    }
}

impl LoraGrads {
    /// Same enumeration order as [`LoraAdapters::slices_mut`].
    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for slot in [&layer.query, &layer.key, &layer.value, &layer.output] {
                if let Some(pair) = slot {
                    out.push(pair.a.as_slice());
                    out.push(pair.b.as_slice());
                }
            }
        }
        out
    }

    pub(crate) fn accumulate(&mut self, other: &LoraGrads) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            for (mine, theirs) in [
                (&mut l.query, &o.query),
                (&mut l.key, &o.key),
                (&mut l.value, &o.value),
                (&mut l.output, &o.output),
            ] {
                if let (Some(m), Some(t)) = (mine.as_mut(), theirs.as_ref()) {
                    m.a.add_scaled(&t.a, 1.0);
                    m.b.add_scaled(&t.b, 1.0);
                }
            }
        }
    }
}
