//! Finite-difference oracles for every primitive and for small composites.
//!
//! Loss construction mixes op outputs with a fixed random projection so each
//! input coordinate carries a healthy gradient (central differences are
//! noise-dominated near zero-gradient coordinates).

use tensor::gradcheck::grad_check;
use tensor::rng::{randn, stream};
use tensor::{Graph, NodeId, Tensor};

const EPS: f64 = 1e-3;
const TOL: f64 = 1e-4;

/// Scalarize `y` as sum(y ∘ r) with a fixed projection r.
fn project(g: &Graph, y: NodeId, seed: u64) -> NodeId {
    let shape = g.shape(y);
    let mut rng = stream(seed, "proj");
    let r = randn(&shape, &mut rng).map(|v| v + 0.25);
    let rl = g.leaf(&r);
    let p = g.mul(y, rl).unwrap();
    g.sum_all(p)
}

#[test]
fn linear_function_is_fd_exact() {
    let point = Tensor::from_vec(vec![0.4, -1.2, 2.2, 0.7]);
    let err = grad_check(
        |g, x| {
            let y = g.mul_scalar(x, 3.0);
            g.sum_all(y)
        },
        &point,
        EPS,
    );
    assert!(err < 1e-9, "linear FD error {err}");
}

#[test]
fn sum_of_squares_at_ones() {
    let point = Tensor::from_vec(vec![1.0, 1.0, 1.0]);
    let err = grad_check(
        |g, x| {
            let sq = g.square(x).unwrap();
            g.sum_all(sq)
        },
        &point,
        1e-3,
    );
    assert!(err < 1e-7, "sum-of-squares FD error {err}");
}

#[test]
fn elementwise_primitives() {
    let mut rng = stream(11, "elementwise");
    let x = randn(&[3, 5], &mut rng);
    let pos = x.map(|v| v.abs() + 0.5);

    let cases: Vec<(&str, Box<dyn Fn(&Graph, NodeId) -> NodeId>, Tensor)> = vec![
        (
            "sigmoid",
            Box::new(|g: &Graph, x: NodeId| project(g, g.sigmoid(x), 1)),
            x.clone(),
        ),
        (
            "exp",
            Box::new(|g: &Graph, x: NodeId| project(g, g.exp(x), 2)),
            x.clone(),
        ),
        (
            "silu",
            Box::new(|g: &Graph, x: NodeId| project(g, g.silu(x).unwrap(), 3)),
            x.clone(),
        ),
        (
            "ln",
            Box::new(|g: &Graph, x: NodeId| project(g, g.ln(x), 4)),
            pos.clone(),
        ),
        (
            "sqrt",
            Box::new(|g: &Graph, x: NodeId| project(g, g.sqrt(x), 5)),
            pos.clone(),
        ),
        (
            "recip",
            Box::new(|g: &Graph, x: NodeId| project(g, g.recip(x), 6)),
            pos.clone(),
        ),
        (
            "add_scalar",
            Box::new(|g: &Graph, x: NodeId| project(g, g.add_scalar(x, 1.7), 7)),
            x.clone(),
        ),
        (
            "softmax",
            Box::new(|g: &Graph, x: NodeId| project(g, g.softmax(x).unwrap(), 8)),
            x.clone(),
        ),
    ];
    for (name, f, point) in cases {
        let err = grad_check(f.as_ref(), &point, EPS);
        assert!(err <= TOL, "{name} FD error {err}");
    }
}

#[test]
fn broadcast_add_mul() {
    let mut rng = stream(12, "broadcast");
    let other = randn(&[4, 1, 3], &mut rng).map(|v| v + 0.3);

    // gradient w.r.t. the broadcast (smaller) operand
    let small = randn(&[1, 3], &mut rng);
    let big = randn(&[4, 2, 3], &mut rng);
    let big2 = big.clone();
    let err = grad_check(
        move |g, x| {
            let b = g.leaf(&big2);
            let y = g.mul(x, b).unwrap();
            project(g, y, 21)
        },
        &small,
        EPS,
    );
    assert!(err <= TOL, "mul broadcast small FD error {err}");

    // gradient w.r.t. the large operand
    let err = grad_check(
        move |g, x| {
            let o = g.leaf(&other);
            let y = g.add(x, o).unwrap();
            let y = g.mul(y, o).unwrap();
            project(g, y, 22)
        },
        &big,
        EPS,
    );
    assert!(err <= TOL, "add broadcast big FD error {err}");
}

#[test]
fn matmul_and_transpose() {
    let mut rng = stream(13, "matmul");
    let a = randn(&[4, 3], &mut rng);
    let b = randn(&[3, 5], &mut rng);

    let b2 = b.clone();
    let err = grad_check(
        move |g, x| {
            let bl = g.leaf(&b2);
            let y = g.matmul(x, bl).unwrap();
            project(g, y, 31)
        },
        &a,
        EPS,
    );
    assert!(err <= TOL, "matmul lhs FD error {err}");

    let a2 = a.clone();
    let err = grad_check(
        move |g, x| {
            let al = g.leaf(&a2);
            let y = g.matmul(al, x).unwrap();
            let yt = g.transpose2(y).unwrap();
            project(g, yt, 32)
        },
        &b,
        EPS,
    );
    assert!(err <= TOL, "matmul rhs + transpose FD error {err}");
}

#[test]
fn conv2d_strides_and_padding() {
    let mut rng = stream(14, "conv");
    for &(stride, pad) in &[(1usize, 0usize), (1, 1), (2, 1)] {
        let x = randn(&[2, 6, 6], &mut rng);
        let w = randn(&[3, 2, 3, 3], &mut rng);

        let w2 = w.clone();
        let err = grad_check(
            move |g, xn| {
                let wl = g.leaf(&w2);
                let y = g.conv2d(xn, wl, stride, pad).unwrap();
                project(g, y, 41)
            },
            &x,
            EPS,
        );
        assert!(err <= TOL, "conv x-grad s{stride} p{pad} FD error {err}");

        let x2 = x.clone();
        let err = grad_check(
            move |g, wn| {
                let xl = g.leaf(&x2);
                let y = g.conv2d(xl, wn, stride, pad).unwrap();
                project(g, y, 42)
            },
            &w,
            EPS,
        );
        assert!(err <= TOL, "conv w-grad s{stride} p{pad} FD error {err}");
    }
}

#[test]
fn group_norm_all_group_counts() {
    let mut rng = stream(15, "gn");
    let x = randn(&[4, 3, 3], &mut rng);
    for &groups in &[1usize, 2, 4] {
        let err = grad_check(
            move |g, xn| {
                let y = g.group_norm(xn, groups, 1e-5).unwrap();
                project(g, y, 51 + groups as u64)
            },
            &x,
            EPS,
        );
        assert!(err <= TOL, "group_norm g{groups} FD error {err}");
    }
}

#[test]
fn reshape_concat_upsample() {
    let mut rng = stream(16, "shape");
    let x = randn(&[2, 3, 4], &mut rng);
    let err = grad_check(
        |g, xn| {
            let r = g.reshape(xn, &[2, 12]).unwrap();
            let c = g.concat(&[r, r], 1).unwrap();
            project(g, c, 61)
        },
        &x,
        EPS,
    );
    assert!(err <= TOL, "reshape+concat FD error {err}");

    let err = grad_check(
        |g, xn| {
            let u = g.upsample2x(xn).unwrap();
            project(g, u, 62)
        },
        &x,
        EPS,
    );
    assert!(err <= TOL, "upsample2x FD error {err}");
}

#[test]
fn reductions_and_norms() {
    let mut rng = stream(17, "reduce");
    let x = randn(&[7], &mut rng).map(|v| v + 2.0);
    let err = grad_check(
        |g, xn| {
            let m = g.mean_all(xn);
            let s = g.sum_all(xn);
            let p = g.mul(m, s).unwrap();
            g.sum_all(p)
        },
        &x,
        EPS,
    );
    assert!(err <= TOL, "mean*sum FD error {err}");

    let target = randn(&[7], &mut rng);
    let err = grad_check(
        move |g, xn| {
            let t = g.leaf(&target);
            g.l2_distance(xn, t).unwrap()
        },
        &x,
        EPS,
    );
    assert!(err <= TOL, "l2_distance FD error {err}");

    let err = grad_check(
        |g, xn| {
            let n = g.l2_normalize(xn).unwrap();
            project(g, n, 63)
        },
        &x,
        EPS,
    );
    assert!(err <= TOL, "l2_normalize FD error {err}");
}

#[test]
fn random_three_layer_conv_net() {
    // conv → silu → conv(s2) → silu → conv → sigmoid → projected sum,
    // checked against central differences at ε=1e-3 in f64.
    let mut rng = stream(18, "convnet");
    let w1 = randn(&[3, 2, 3, 3], &mut rng).map(|v| v * 0.5);
    let w2 = randn(&[4, 3, 3, 3], &mut rng).map(|v| v * 0.4);
    let w3 = randn(&[2, 4, 3, 3], &mut rng).map(|v| v * 0.4);
    let x = randn(&[2, 8, 8], &mut rng);

    let net = move |g: &Graph, xn: NodeId| -> NodeId {
        let w1 = g.leaf(&w1);
        let w2 = g.leaf(&w2);
        let w3 = g.leaf(&w3);
        let h1 = g.silu(g.conv2d(xn, w1, 1, 1).unwrap()).unwrap();
        let h2 = g.silu(g.conv2d(h1, w2, 2, 1).unwrap()).unwrap();
        let h3 = g.sigmoid(g.conv2d(h2, w3, 1, 1).unwrap());
        project(g, h3, 71)
    };
    let err = grad_check(net, &x, EPS);
    assert!(err <= 1e-4, "conv net FD error {err}");
}

#[test]
fn randomized_small_shapes_per_primitive() {
    // the spec-level sweep: randomized shapes ≤ 256 elements, 64-bit mode
    let mut rng = stream(19, "sweep");
    for trial in 0..5u64 {
        let c = 1 + (trial as usize % 3);
        let x = randn(&[c, 4, 4], &mut rng);
        let w = randn(&[2, c, 3, 3], &mut rng);
        let w2 = w.clone();
        let err = grad_check(
            move |g, xn| {
                let wl = g.leaf(&w2);
                let y = g.conv2d(xn, wl, 1, 1).unwrap();
                let y = g.group_norm(y, 2, 1e-5).unwrap();
                let y = g.silu(y).unwrap();
                project(g, y, 81 + trial)
            },
            &x,
            EPS,
        );
        assert!(err <= TOL, "sweep trial {trial} FD error {err}");
    }
}
