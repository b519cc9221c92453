//! Central finite-difference gradient checking (64-bit only).

use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Worst-case relative error between the analytic gradient of `f` at `point`
/// and central finite differences with step `eps`:
/// max over coordinates of |analytic − cd| / max(1e-12, |cd|).
///
/// `f` must build a scalar loss from the given input node and be
/// deterministic (it is re-evaluated 2·n times for the differences).
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> f64
where
    F: Fn(&Graph, NodeId) -> NodeId,
{
    let g = Graph::new();
    let x = g.leaf(point);
    let loss = f(&g, x);
    assert_eq!(
        g.value(loss).len(),
        1,
        "grad_check needs a scalar-valued function"
    );
    let grads = g.backward(loss).expect("backward");
    let analytic = grads.get(x);

    let eval = |p: &Tensor| -> f64 {
        let g = Graph::new();
        let x = g.leaf(p);
        let loss = f(&g, x);
        g.value(loss).item()
    };

    let base = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += eps;
        let mut minus = base.clone();
        minus[i] -= eps;
        let fp = eval(&Tensor::new(point.shape(), plus).unwrap());
        let fm = eval(&Tensor::new(point.shape(), minus).unwrap());
        let cd = (fp - fm) / (2.0 * eps);
        let rel = (analytic.data()[i] - cd).abs() / f64::max(1e-12, cd.abs());
        if rel > worst {
            worst = rel;
        }
    }
    worst
}
