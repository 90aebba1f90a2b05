use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// What a parameter is used for; decides initialization and weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    NormGain,
    NormBias,
    Embedding,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named learnable tensors with their gradients.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
    seed: u64,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn insert(&mut self, name: &str, kind: ParamKind, value: Tensor) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = self.params.len();
        self.by_name.insert(name.to_string(), id);
        let grad = Tensor::zeros(value.rows(), value.cols());
        self.params.push(Param {
            name: name.to_string(),
            kind,
            value,
            grad,
        });
        ParamId(id)
    }

    /// Affine weight `fan_in x fan_out`, Glorot-uniform.
    pub fn weight(&mut self, name: &str, fan_in: usize, fan_out: usize) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| self.rng.random_range(-limit..=limit))
            .collect();
        let t = Tensor::from_vec(fan_in, fan_out, data).expect("sized");
        self.insert(name, ParamKind::Weight, t)
    }

    pub fn bias(&mut self, name: &str, width: usize) -> ParamId {
        self.insert(name, ParamKind::Bias, Tensor::zeros(1, width))
    }

    pub fn norm_gain(&mut self, name: &str, width: usize) -> ParamId {
        self.insert(name, ParamKind::NormGain, Tensor::full(1, width, 1.0))
    }

    pub fn norm_bias(&mut self, name: &str, width: usize) -> ParamId {
        self.insert(name, ParamKind::NormBias, Tensor::zeros(1, width))
    }

    /// Lookup table `rows x width`, N(0, 0.02).
    pub fn embedding(&mut self, name: &str, rows: usize, width: usize) -> ParamId {
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let data = (0..rows * width)
            .map(|_| normal.sample(&mut self.rng))
            .collect();
        let t = Tensor::from_vec(rows, width, data).expect("sized");
        self.insert(name, ParamKind::Embedding, t)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Add `scale * grads` into the stored gradients.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            if let Some(g) = g {
                for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += scale * b;
                }
            }
        }
    }

    /// Overwrite a value tensor, checking its shape.
    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Index(format!("unknown parameter `{name}`")))?;
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::ParamShape {
                name: name.to_string(),
                expected: p.value.shape().to_vec(),
                found: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    /// Flat copy of every parameter value, in registration order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }
}

/// Per-parameter gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients(pub(crate) Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `id`, zeros when the parameter was not reached.
    pub fn dense(&self, id: ParamId, store: &ParamStore) -> Tensor {
        match self.get(id) {
            Some(g) => g.clone(),
            None => {
                let v = store.value(id);
                Tensor::zeros(v.rows(), v.cols())
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.0.iter_mut().flatten() {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().flatten().all(|t| t.all_finite())
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }
}
