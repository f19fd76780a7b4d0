use crate::error::{Error, Result};
use crate::tensor::serialize::{load_tensors, save_tensors};
use crate::tensor::{Float, Graph, NodeId, Tensor};
use rand::distributions::{Distribution, Uniform};
use rand::Rng;
use std::collections::HashMap;
use std::path::Path;

/// What a parameter is, for initialization and weight-decay decisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Embedding,
    Bias,
    /// LayerNorm gain; initialized to one.
    NormGain,
    /// LayerNorm shift; initialized to zero.
    NormBias,
    /// Gated relative-position bias parameters (`d_table`, `u`, `v`, `w`).
    Gate,
}

impl ParamKind {
    /// Sampled from the uniform init range.
    pub fn is_random(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Embedding | ParamKind::Gate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<T: Float> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

/// Ordered, named collection of every trainable tensor.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Float = f32> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.by_name.contains_key(&name), "duplicate parameter `{name}`");
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, kind, value });
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf of `graph`, in store order.
    ///
    /// With `trainable = false` the leaves are constants and backward never
    /// allocates gradients for them.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> BoundParams {
        let nodes = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    graph.trainable(p.value.clone())
                } else {
                    graph.constant(p.value.clone())
                }
            })
            .collect();
        BoundParams { nodes }
    }

    /// Gradients after `graph.backward`, aligned with the store; untouched
    /// parameters get zeros.
    pub fn collect_grads(&self, graph: &Graph<T>, bound: &BoundParams) -> Vec<Vec<T>> {
        self.params
            .iter()
            .zip(&bound.nodes)
            .map(|(p, &node)| match graph.grad(node) {
                Some(g) => g.to_vec(),
                None => vec![T::zero(); p.value.len()],
            })
            .collect()
    }

    /// Samples every random-kind parameter from `Uniform[-range, range]`
    /// and sets biases to zero and norm gains to one.
    pub fn init_uniform<R: Rng>(&mut self, range: f64, rng: &mut R) {
        let dist = Uniform::new_inclusive(-range, range);
        for p in &mut self.params {
            let fill = match p.kind {
                ParamKind::NormGain => Some(T::one()),
                ParamKind::Bias | ParamKind::NormBias => Some(T::zero()),
                _ => None,
            };
            for v in p.value.data_mut() {
                *v = match fill {
                    Some(c) => c,
                    None => T::of(dist.sample(rng)),
                };
            }
        }
    }

    pub fn scale_param(&mut self, id: ParamId, factor: f64) {
        let f = T::of(factor);
        for v in self.params[id.0].value.data_mut() {
            *v *= f;
        }
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: p.value.cast(),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<(&str, &Tensor<T>)> =
            self.params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
        save_tensors(path, &records)
    }

    /// Overwrites values from a file written by [`ParamStore::save`].
    ///
    /// Every parameter must be present with a matching shape.
    pub fn load_values(&mut self, path: &Path) -> Result<()> {
        let records = load_tensors::<T>(path)?;
        let mut seen = vec![false; self.params.len()];
        for (name, t) in records {
            let id = self
                .id(&name)
                .ok_or_else(|| Error::format(path, format!("unknown parameter `{name}`")))?;
            let p = &mut self.params[id.0];
            if p.value.shape() != t.shape() {
                return Err(Error::format(
                    path,
                    format!("parameter `{name}` has shape {:?}, expected {:?}", t.shape(), p.value.shape()),
                ));
            }
            p.value = t;
            seen[id.0] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::format(path, format!("missing parameter `{}`", self.params[i].name)));
        }
        Ok(())
    }

    /// Order-sensitive FNV-1a hash over every value's bit pattern.
    pub fn fingerprint(&self) -> u64 {
        self.params.iter().fold(0xcbf2_9ce4_8422_2325, |h, p| hash_values(h, &p.value))
    }

    pub fn param_fingerprint(&self, id: ParamId) -> u64 {
        hash_values(0xcbf2_9ce4_8422_2325, &self.params[id.0].value)
    }
}

fn hash_values<T: Float>(mut h: u64, t: &Tensor<T>) -> u64 {
    for v in t.data() {
        for b in v.as_f64().to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Graph leaves of a [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    nodes: Vec<NodeId>,
}

impl BoundParams {
    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }
}

impl std::ops::Index<ParamId> for BoundParams {
    type Output = NodeId;
    fn index(&self, id: ParamId) -> &NodeId {
        &self.nodes[id.0]
    }
}
