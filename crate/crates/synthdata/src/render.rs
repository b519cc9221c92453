//! Signed-distance-field shape rendering with antialiased edges.
//!
//! Every family is closed under horizontal flips: either the geometry is
//! mirror-symmetric or the randomized parameter (star phase, checker parity,
//! center jitter) has a flip-symmetric distribution. That keeps flip
//! augmentation label-preserving downstream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeFamily {
    Disk,
    Ring,
    Square,
    Diamond,
    Cross,
    HBars,
    VBars,
    Checker,
    DotGrid,
    Frame,
    Star,
    Triangle,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 12] = [
        ShapeFamily::Disk,
        ShapeFamily::Ring,
        ShapeFamily::Square,
        ShapeFamily::Diamond,
        ShapeFamily::Cross,
        ShapeFamily::HBars,
        ShapeFamily::VBars,
        ShapeFamily::Checker,
        ShapeFamily::DotGrid,
        ShapeFamily::Frame,
        ShapeFamily::Star,
        ShapeFamily::Triangle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeFamily::Disk => "solid disk",
            ShapeFamily::Ring => "thin ring",
            ShapeFamily::Square => "solid square",
            ShapeFamily::Diamond => "solid diamond",
            ShapeFamily::Cross => "plus cross",
            ShapeFamily::HBars => "horizontal bars",
            ShapeFamily::VBars => "vertical bars",
            ShapeFamily::Checker => "checker board",
            ShapeFamily::DotGrid => "dot grid",
            ShapeFamily::Frame => "square frame",
            ShapeFamily::Star => "five star",
            ShapeFamily::Triangle => "solid triangle",
        }
    }
}

struct Params {
    cx: f64,
    cy: f64,
    scale: f64,
    fg: [f64; 3],
    bg: [f64; 3],
    phase: f64,   // star rotation, uniform over one symmetry period
    parity: bool, // checkerboard cell parity
    noise_sigma: f64,
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = (h.rem_euclid(1.0)) * 6.0;
    let i = h.floor();
    let f = h - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, t],
    }
}

fn sample_params(class: usize, n_classes: usize, rng: &mut ChaCha8Rng) -> Params {
    let base_hue = class as f64 / n_classes as f64;
    let hue = base_hue + rng.gen_range(-0.03..0.03);
    let fg = hsv_to_rgb(hue, rng.gen_range(0.6..0.95), rng.gen_range(0.75..1.0));
    let bg_v = rng.gen_range(0.05..0.28);
    let bg = hsv_to_rgb(rng.gen_range(0.0..1.0), rng.gen_range(0.0..0.15), bg_v);
    Params {
        cx: rng.gen_range(-0.16..0.16),
        cy: rng.gen_range(-0.16..0.16),
        scale: rng.gen_range(0.55..0.85),
        fg,
        bg,
        phase: rng.gen_range(0.0..std::f64::consts::TAU / 5.0),
        parity: rng.gen_bool(0.5),
        noise_sigma: 0.015,
    }
}

fn box2(qx: f64, qy: f64, hx: f64, hy: f64) -> f64 {
    (qx.abs() - hx).max(qy.abs() - hy)
}

fn sdf(family: ShapeFamily, qx: f64, qy: f64, p: &Params) -> f64 {
    match family {
        ShapeFamily::Disk => (qx * qx + qy * qy).sqrt() - 0.9,
        ShapeFamily::Ring => ((qx * qx + qy * qy).sqrt() - 0.68).abs() - 0.2,
        ShapeFamily::Square => box2(qx, qy, 0.78, 0.78),
        ShapeFamily::Diamond => (qx.abs() + qy.abs()) - 1.0,
        ShapeFamily::Cross => box2(qx, qy, 0.95, 0.3).min(box2(qx, qy, 0.3, 0.95)),
        ShapeFamily::HBars => (-1..=1)
            .map(|k| box2(qx, qy - k as f64 * 0.62, 0.85, 0.16))
            .fold(f64::INFINITY, f64::min),
        ShapeFamily::VBars => (-1..=1)
            .map(|k| box2(qx - k as f64 * 0.62, qy, 0.16, 0.85))
            .fold(f64::INFINITY, f64::min),
        ShapeFamily::Checker => {
            let mut d = f64::INFINITY;
            for i in 0..4 {
                for j in 0..4 {
                    if (i + j) % 2 == usize::from(p.parity) {
                        continue;
                    }
                    let (cx, cy) = ((i as f64 - 1.5) * 0.5, (j as f64 - 1.5) * 0.5);
                    d = d.min(box2(qx - cx, qy - cy, 0.24, 0.24));
                }
            }
            d
        }
        ShapeFamily::DotGrid => {
            let mut d = f64::INFINITY;
            for i in -1..=1 {
                for j in -1..=1 {
                    let (cx, cy) = (i as f64 * 0.62, j as f64 * 0.62);
                    let r = ((qx - cx).powi(2) + (qy - cy).powi(2)).sqrt();
                    d = d.min(r - 0.21);
                }
            }
            d
        }
        ShapeFamily::Frame => {
            let m = qx.abs().max(qy.abs());
            (m - 0.88).max(0.5 - m)
        }
        ShapeFamily::Star => {
            let r = (qx * qx + qy * qy).sqrt();
            let theta = qy.atan2(qx) + p.phase;
            r - (0.52 + 0.4 * (5.0 * theta).cos())
        }
        ShapeFamily::Triangle => {
            // isoceles, apex up, mirror-symmetric in x
            let d_base = qy - 0.75;
            // edge from apex (0,-0.85) to (0.85, 0.75): normal (dy, -dx)/len
            let (ex, ey) = (0.85f64, 1.6f64);
            let len = (ex * ex + ey * ey).sqrt();
            let d_right = (ey * (qx.abs() - 0.85) - ex * (qy - 0.75)) / len;
            d_base.max(d_right)
        }
    }
}

/// Render one image as a [3, size, size] tensor with values in [0,1].
pub fn render_image(
    family: ShapeFamily,
    class: usize,
    n_classes: usize,
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let p = sample_params(class, n_classes, rng);
    let aa = 2.0 / size as f64; // one-pixel antialiasing band
    let mut data = vec![0.0f64; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let px = (x as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let py = (y as f64 + 0.5) / size as f64 * 2.0 - 1.0;
            let (qx, qy) = ((px - p.cx) / p.scale, (py - p.cy) / p.scale);
            let d = sdf(family, qx, qy, &p) * p.scale;
            let alpha = (0.5 - d / aa).clamp(0.0, 1.0);
            for c in 0..3 {
                let v = p.bg[c] * (1.0 - alpha) + p.fg[c] * alpha;
                let noisy = v + p.noise_sigma * gauss(rng);
                data[c * size * size + y * size + x] = noisy.clamp(0.0, 1.0);
            }
        }
    }
    Tensor::new(&[3, size, size], data).expect("render buffer sized to shape")
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; two uniforms per call keeps the stream layout simple
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Horizontal mirror of a [3, H, W] image.
pub fn flip_h(img: &Tensor) -> Tensor {
    let s = img.shape();
    assert_eq!(s.len(), 3, "expected [C,H,W]");
    let (c, h, w) = (s[0], s[1], s[2]);
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[ci * h * w + y * w + x] = src[ci * h * w + y * w + (w - 1 - x)];
            }
        }
    }
    Tensor::new(s, out).expect("same shape")
}

/// Per-channel multiplicative jitter in [1−strength, 1+strength], clamped.
pub fn color_jitter(img: &Tensor, strength: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let s = img.shape();
    assert_eq!(s.len(), 3, "expected [C,H,W]");
    let (c, hw) = (s[0], s[1] * s[2]);
    let src = img.data();
    let mut out = vec![0.0; src.len()];
    for ci in 0..c {
        let m = 1.0 + rng.gen_range(-strength..strength);
        for i in 0..hw {
            out[ci * hw + i] = (src[ci * hw + i] * m).clamp(0.0, 1.0);
        }
    }
    Tensor::new(s, out).expect("same shape")
}
