//! Named parameter tensors and their initialization.

use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::Tensor;
use super::{ModelConfig, ModelError};
use crate::util::seed_rng;

/// All model tensors plus a monotonically increasing update counter.
/// Iteration order is the sorted tensor name order everywhere, which keeps
/// reductions and serialization deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet {
            tensors: BTreeMap::new(),
            step: 0,
        }
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        let prev = self.tensors.insert(name.to_string(), tensor);
        assert!(prev.is_none(), "duplicate tensor name {name}");
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors.len()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Same names and shapes, all zeros; the shape gradients accumulate into.
    pub fn zeros_like(&self) -> Self {
        let tensors = self
            .tensors
            .iter()
            .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
            .collect();
        ParameterSet { tensors, step: 0 }
    }

    /// Element-wise `self *= alpha`.
    pub fn scale(&mut self, alpha: f64) {
        for (_, t) in self.iter_mut() {
            for x in t.data_mut() {
                *x *= alpha;
            }
        }
    }

    /// Element-wise `self += alpha * other`; shapes must match.
    pub fn add_scaled(&mut self, other: &ParameterSet, alpha: f64) {
        for ((an, at), (bn, bt)) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            debug_assert_eq!(an, bn);
            for (a, b) in at.data_mut().iter_mut().zip(bt.data()) {
                *a += alpha * b;
            }
        }
    }

    pub fn same_shapes(&self, other: &ParameterSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|((an, at), (bn, bt))| an == bn && at.shape() == bt.shape())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Bit-exact tensor equality (names, shapes, every f64).
    pub fn bits_equal(&self, other: &ParameterSet) -> bool {
        self.same_shapes(other)
            && self
                .tensors
                .values()
                .zip(other.tensors.values())
                .all(|(a, b)| {
                    a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
                })
    }
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

enum Init {
    Xavier,
    Zeros,
    Ones,
}

/// (name, shape, init) for every tensor, in construction order.
fn tensor_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.model_dim;
    let f = cfg.ffn_dim;
    let v = cfg.vocab_size;
    let mut specs: Vec<(String, Vec<usize>, Init)> = Vec::new();
    specs.push(("embed.tok".into(), vec![v, d], Init::Xavier));
    for l in 0..cfg.num_layers {
        for side in ["enc", "dec"] {
            for proj in ["wq", "wk", "wv", "wo"] {
                specs.push((format!("{side}{l}.sa.{proj}"), vec![d, d], Init::Xavier));
            }
            specs.push((format!("{side}{l}.ln1.scale"), vec![d], Init::Ones));
            specs.push((format!("{side}{l}.ln1.offset"), vec![d], Init::Zeros));
            if side == "dec" {
                for proj in ["wq", "wk", "wv", "wo"] {
                    specs.push((format!("dec{l}.ca.{proj}"), vec![d, d], Init::Xavier));
                }
                specs.push((format!("dec{l}.ln2.scale"), vec![d], Init::Ones));
                specs.push((format!("dec{l}.ln2.offset"), vec![d], Init::Zeros));
            }
            specs.push((format!("{side}{l}.ffn.w1"), vec![d, f], Init::Xavier));
            specs.push((format!("{side}{l}.ffn.b1"), vec![f], Init::Zeros));
            specs.push((format!("{side}{l}.ffn.w2"), vec![f, d], Init::Xavier));
            specs.push((format!("{side}{l}.ffn.b2"), vec![d], Init::Zeros));
            let last_ln = if side == "enc" { "ln2" } else { "ln3" };
            specs.push((format!("{side}{l}.{last_ln}.scale"), vec![d], Init::Ones));
            specs.push((format!("{side}{l}.{last_ln}.offset"), vec![d], Init::Zeros));
        }
    }
    specs.push(("out.w".into(), vec![d, v], Init::Xavier));
    specs.push(("out.b".into(), vec![v], Init::Zeros));
    specs
}

/// Deterministic initialization: weights are scaled-uniform with bound
/// sqrt(6 / (fan_in + fan_out)), biases and layer-norm offsets zero,
/// layer-norm scales one.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParameterSet, ModelError> {
    cfg.validate()?;
    let mut rng = seed_rng(seed, "init");
    let mut params = ParameterSet::new();
    for (name, shape, init) in tensor_specs(cfg) {
        let mut t = Tensor::zeros(&shape);
        match init {
            Init::Zeros => {}
            Init::Ones => t.fill(1.0),
            Init::Xavier => {
                let (fan_in, fan_out) = (shape[0] as f64, shape[1] as f64);
                let bound = (6.0 / (fan_in + fan_out)).sqrt();
                for x in t.data_mut() {
                    *x = rng.gen_range(-bound..bound);
                }
            }
        }
        params.insert(&name, t);
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let cfg = ModelConfig::desk_scale(20);
        let a = init_params(&cfg, 9).unwrap();
        let b = init_params(&cfg, 9).unwrap();
        assert!(a.bits_equal(&b));
        let c = init_params(&cfg, 10).unwrap();
        assert!(!c.bits_equal(&a));
    }

    #[test]
    fn layernorm_scales_are_ones() {
        let cfg = ModelConfig::desk_scale(20);
        let p = init_params(&cfg, 1).unwrap();
        assert!(p.get("enc0.ln1.scale").data().iter().all(|&x| x == 1.0));
        assert!(p.get("dec1.ln3.offset").data().iter().all(|&x| x == 0.0));
        assert!(p.get("out.b").data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn invalid_config_is_config_error() {
        let mut cfg = ModelConfig::desk_scale(20);
        cfg.model_dim = 7;
        cfg.num_heads = 2;
        assert!(matches!(
            init_params(&cfg, 0),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn xavier_bound_respected() {
        let cfg = ModelConfig::desk_scale(20);
        let p = init_params(&cfg, 4).unwrap();
        let emb = p.get("embed.tok");
        let bound = (6.0f64 / (20.0 + 64.0)).sqrt();
        assert!(emb.data().iter().all(|&x| x.abs() < bound));
        assert!(emb.data().iter().any(|&x| x != 0.0));
    }
}
