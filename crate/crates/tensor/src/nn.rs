//! Named parameter store and small layer building blocks.
//!
//! Parameters live outside any tape; a forward pass leafs them into the
//! current [`Graph`] on demand (memoized per pass via [`Leafs`]), so the same
//! parameter used twice contributes one accumulated gradient.

use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{digest_tensors, Checkpoint, CheckpointError};
use crate::graph::{Grads, Graph, NodeId};
use crate::rng::randn_scaled;
use crate::tensor::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PId(pub usize);

/// Ordered, uniquely named parameter tensors for one model.
#[derive(Default, Clone)]
pub struct Params {
    names: Vec<String>,
    ts: Vec<Tensor>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, t: Tensor) -> PId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate param {name}"
        );
        self.names.push(name.to_string());
        self.ts.push(t);
        PId(self.ts.len() - 1)
    }

    pub fn get(&self, id: PId) -> &Tensor {
        &self.ts[id.0]
    }

    pub fn set(&mut self, id: PId, t: Tensor) {
        assert_eq!(self.ts[id.0].shape(), t.shape(), "param shape change");
        self.ts[id.0] = t;
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.ts
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.ts
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Hex digest of all parameter bytes (freeze checks).
    pub fn digest(&self) -> String {
        digest_tensors(self.ts.iter())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        for (n, t) in self.names.iter().zip(&self.ts) {
            ck.push_tensor(n, t.clone());
        }
        ck
    }

    /// Restore values by name; every stored name must exist with the same shape.
    pub fn load_checkpoint(&mut self, ck: &Checkpoint) -> Result<(), CheckpointError> {
        for (name, t) in &ck.tensors {
            let Some(idx) = self.names.iter().position(|n| n == name) else {
                return Err(CheckpointError::Invalid(format!("unknown tensor {name}")));
            };
            if self.ts[idx].shape() != t.shape() {
                return Err(CheckpointError::Invalid(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    self.ts[idx].shape(),
                    t.shape()
                )));
            }
            self.ts[idx] = t.clone();
        }
        Ok(())
    }
}

/// Per-pass memoization of parameter leaves.
pub struct Leafs {
    ids: Vec<Option<NodeId>>,
}

impl Leafs {
    pub fn new(params: &Params) -> Self {
        Self {
            ids: vec![None; params.len()],
        }
    }

    pub fn of(&mut self, g: &Graph, ps: &Params, p: PId) -> NodeId {
        if let Some(id) = self.ids[p.0] {
            return id;
        }
        let id = g.leaf(ps.get(p));
        self.ids[p.0] = Some(id);
        id
    }

    /// Node ids actually used this pass, paired with their param slots.
    pub fn used(&self) -> impl Iterator<Item = (PId, NodeId)> + '_ {
        self.ids
            .iter()
            .enumerate()
            .filter_map(|(i, id)| id.map(|id| (PId(i), id)))
    }
}

pub struct Conv2d {
    pub w: PId,
    pub b: PId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        ps: &mut Params,
        name: &str,
        ci: usize,
        co: usize,
        k: usize,
        stride: usize,
        pad: usize,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let std = gain / ((ci * k * k) as f64).sqrt();
        let w = ps.add(&format!("{name}.w"), randn_scaled(&[co, ci, k, k], std, rng));
        let b = ps.add(&format!("{name}.b"), Tensor::zeros(&[co]));
        Self { w, b, stride, pad }
    }

    pub fn forward(
        &self,
        g: &Graph,
        ps: &Params,
        lf: &mut Leafs,
        x: NodeId,
    ) -> Result<NodeId, TensorError> {
        let w = lf.of(g, ps, self.w);
        let b = lf.of(g, ps, self.b);
        let y = g.conv2d(x, w, self.stride, self.pad)?;
        let co = g.shape(y)[0];
        let b3 = g.reshape(b, &[co, 1, 1])?;
        g.add(y, b3)
    }
}

pub struct Linear {
    pub w: PId,
    pub b: PId,
}

impl Linear {
    pub fn init(
        ps: &mut Params,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        gain: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let std = gain / (fan_in as f64).sqrt();
        let w = ps.add(
            &format!("{name}.w"),
            randn_scaled(&[fan_in, fan_out], std, rng),
        );
        let b = ps.add(&format!("{name}.b"), Tensor::zeros(&[fan_out]));
        Self { w, b }
    }

    /// x: [N, fan_in] → [N, fan_out].
    pub fn forward(
        &self,
        g: &Graph,
        ps: &Params,
        lf: &mut Leafs,
        x: NodeId,
    ) -> Result<NodeId, TensorError> {
        let w = lf.of(g, ps, self.w);
        let b = lf.of(g, ps, self.b);
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }
}

/// Group normalization with learned per-channel scale and shift.
pub struct GroupNorm {
    pub gamma: PId,
    pub beta: PId,
    pub groups: usize,
    pub eps: f64,
}

impl GroupNorm {
    pub fn init(ps: &mut Params, name: &str, channels: usize, groups: usize) -> Self {
        let gamma = ps.add(&format!("{name}.gamma"), Tensor::full(&[channels], 1.0));
        let beta = ps.add(&format!("{name}.beta"), Tensor::zeros(&[channels]));
        Self {
            gamma,
            beta,
            groups,
            eps: 1e-5,
        }
    }

    pub fn forward(
        &self,
        g: &Graph,
        ps: &Params,
        lf: &mut Leafs,
        x: NodeId,
    ) -> Result<NodeId, TensorError> {
        let c = g.shape(x)[0];
        let y = g.group_norm(x, self.groups, self.eps)?;
        let gamma = g.reshape(lf.of(g, ps, self.gamma), &[c, 1, 1])?;
        let beta = g.reshape(lf.of(g, ps, self.beta), &[c, 1, 1])?;
        let y = g.mul(y, gamma)?;
        g.add(y, beta)
    }
}

/// Gradient tensors aligned with `ps` order: used leaves get their gradient,
/// untouched parameters get zeros. Feed straight into `Adam::step_all`.
pub fn collect_grads(lf: &Leafs, ps: &Params, gr: &Grads) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = ps
        .tensors()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    for (pid, nid) in lf.used() {
        out[pid.0] = gr.get(nid);
    }
    out
}
