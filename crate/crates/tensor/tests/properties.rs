//! Property tests for broadcasting and gradient identities.

use proptest::prelude::*;
use tensor::{Graph, Tensor};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// d(Σ a∘b)/da == b exactly, for any same-shape operands.
    #[test]
    fn mul_grad_is_other_operand(
        vals in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..32)
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
        let g = Graph::new();
        let an = g.leaf(&Tensor::from_vec(a));
        let bt = Tensor::from_vec(b.clone());
        let bn = g.leaf(&bt);
        let y = g.mul(an, bn).unwrap();
        let loss = g.sum_all(y);
        let grads = g.backward(loss).unwrap();
        let ga = grads.get(an);
        prop_assert_eq!(ga.data(), b.as_slice());
    }

    /// Broadcasting a [1] operand matches scalar arithmetic everywhere.
    #[test]
    fn scalar_broadcast_matches_map(
        xs in prop::collection::vec(-100.0f64..100.0, 1..24),
        c in -5.0f64..5.0
    ) {
        let g = Graph::new();
        let x = g.leaf(&Tensor::from_vec(xs.clone()));
        let cn = g.leaf(&Tensor::from_vec(vec![c]));
        let y = g.mul(x, cn).unwrap();
        let expect: Vec<f64> = xs.iter().map(|v| v * c).collect();
        let vy = g.value(y);
        prop_assert_eq!(vy.data(), expect.as_slice());
    }

    /// Reshape round-trips preserve data order.
    #[test]
    fn reshape_preserves_order(rows in 1usize..6, cols in 1usize..6) {
        let n = rows * cols;
        let data: Vec<f64> = (0..n).map(|v| v as f64).collect();
        let g = Graph::new();
        let x = g.leaf(&Tensor::from_vec(data.clone()));
        let r = g.reshape(x, &[rows, cols]).unwrap();
        let back = g.reshape(r, &[n]).unwrap();
        let vb = g.value(back);
        prop_assert_eq!(vb.data(), data.as_slice());
    }
}
