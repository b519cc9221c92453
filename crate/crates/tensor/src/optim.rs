//! Adam optimizer over plain tensors. State is indexed by slot so the same
//! instance can drive a whole parameter set or a single seed tensor.

use crate::tensor::Tensor;

pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update over all parameter slots. `params[i]` is replaced by its
    /// updated tensor; `grads[i]` must match its shape.
    pub fn step_all(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        self.t += 1;
        while self.m.len() < params.len() {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grads[i].data();
            assert_eq!(p.len(), g.len(), "grad shape mismatch at slot {i}");
            if self.m[i].is_empty() {
                self.m[i] = vec![0.0; p.len()];
                self.v[i] = vec![0.0; p.len()];
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let mut out = p.to_vec();
            for j in 0..out.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                out[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            *p = Tensor::new(p.shape(), out).expect("param shape");
        }
    }
}
