//! Autoencoder and denoiser contracts: shapes, determinism, guidance
//! endpoints, training behavior, checkpoint round trips.

use approx::assert_abs_diff_eq;
use diffusion::{
    combine_cfg, train_autoencoder, train_denoiser, AeTrainConfig, Autoencoder, Denoiser,
    DenoiserCfg, DenoiserTrainConfig, DiffusionError, NoiseSchedule,
};
use tensor::nn::Leafs;
use tensor::rng::{randn, stream};
use tensor::{Graph, Tensor};

fn toy_images(n: usize, size: usize, seed: u64) -> Vec<Tensor> {
    let mut rng = stream(seed, "test/images");
    (0..n)
        .map(|_| {
            let t = randn(&[3, size, size], &mut rng);
            t.map(|v| 0.5 + 0.2 * v.tanh())
        })
        .collect()
}

fn tiny_denoiser_cfg() -> DenoiserCfg {
    DenoiserCfg {
        latent_channels: 2,
        base_width: 8,
        emb_dim: 16,
        n_classes: 3,
        t_train: 50,
        groups: 2,
    }
}

#[test]
fn encode_decode_shapes_and_range() {
    let ae = Autoencoder::new(32, 1);
    let img = toy_images(1, 32, 2).remove(0);
    let z = ae.encode(&img).unwrap();
    assert_eq!(z.shape(), [4, 8, 8]);
    let y = ae.decode(&z).unwrap();
    assert_eq!(y.shape(), [3, 32, 32]);
    assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)), "sigmoid range");
}

#[test]
fn encode_is_deterministic() {
    let ae = Autoencoder::new(16, 3);
    let img = toy_images(1, 16, 4).remove(0);
    let z1 = ae.encode(&img).unwrap();
    let z2 = ae.encode(&img).unwrap();
    assert_eq!(z1.to_vec(), z2.to_vec(), "bit-identical latents");
}

#[test]
fn encode_rejects_wrong_shape() {
    let ae = Autoencoder::new(32, 1);
    let bad = Tensor::zeros(&[1, 32, 32]);
    assert!(ae.encode(&bad).is_err());
}

#[test]
fn ae_training_reduces_loss_and_normalizes_latents() {
    let images = toy_images(12, 16, 5);
    let mut ae = Autoencoder::new(16, 6);
    let cfg = AeTrainConfig {
        steps: 80,
        batch_size: 4,
        lr: 3e-3,
        seed: 7,
    };
    let losses = train_autoencoder(&mut ae, &images, &cfg).unwrap();
    assert_eq!(losses.len(), 80);
    let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = losses[70..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "loss decreased: {head} → {tail}");

    // after fitting, training latents are ~unit scale
    let (mut sum, mut sq, mut n) = (0.0, 0.0, 0usize);
    for img in &images {
        let z = ae.encode(img).unwrap();
        for &v in z.data().iter() {
            sum += v;
            sq += v * v;
            n += 1;
        }
    }
    let mean = sum / n as f64;
    let std = (sq / n as f64 - mean * mean).sqrt();
    assert!(mean.abs() < 1e-6, "latent mean {mean}");
    assert!((std - 1.0).abs() < 1e-6, "latent std {std}");
}

#[test]
fn ae_checkpoint_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let mut ae = Autoencoder::new(16, 8);
    ae.latent_mean = -0.12345678901234;
    ae.latent_std = 2.7182818284;
    let path = dir.path().join("ae.ssel");
    ae.save(&path).unwrap();
    let back = Autoencoder::load(&path).unwrap();
    assert_eq!(back.weight_digest(), ae.weight_digest());
    assert_eq!(back.latent_mean, ae.latent_mean);
    assert_eq!(back.latent_std, ae.latent_std);
    assert_eq!(back.image_size, 16);
}

#[test]
fn denoiser_forward_shape_and_determinism() {
    let den = Denoiser::new(tiny_denoiser_cfg(), 1);
    let z = randn(&[2, 4, 4], &mut stream(2, "z"));
    let run = || {
        let g = Graph::new();
        let mut lf = Leafs::new(&den.ps);
        let zn = g.leaf(&z);
        let out = den.forward(&g, &mut lf, zn, 25, 1).unwrap();
        (g.shape(out).to_vec(), g.value(out).to_vec())
    };
    let (s1, v1) = run();
    let (_, v2) = run();
    assert_eq!(s1, vec![2, 4, 4]);
    assert_eq!(v1, v2, "bit-identical prediction");
}

#[test]
fn denoiser_validates_class_and_timestep() {
    let den = Denoiser::new(tiny_denoiser_cfg(), 1);
    let z = randn(&[2, 4, 4], &mut stream(3, "z"));
    let g = Graph::new();
    let mut lf = Leafs::new(&den.ps);
    let zn = g.leaf(&z);
    // null class (id = n_classes) is legal; one past it is not
    assert!(den.forward(&g, &mut lf, zn, 10, 3).is_ok());
    assert!(matches!(
        den.forward(&g, &mut lf, zn, 10, 4),
        Err(DiffusionError::UnknownClass { id: 4, n_classes: 3 })
    ));
    assert!(matches!(
        den.forward(&g, &mut lf, zn, 0, 1),
        Err(DiffusionError::BadTimestep { .. })
    ));
    assert!(matches!(
        den.forward(&g, &mut lf, zn, 51, 1),
        Err(DiffusionError::BadTimestep { .. })
    ));
}

#[test]
fn guidance_endpoints_are_exact() {
    let den = Denoiser::new(tiny_denoiser_cfg(), 4);
    let z = randn(&[2, 4, 4], &mut stream(5, "z"));
    let eval = |scale: Option<f64>, class: usize| {
        let g = Graph::new();
        let mut lf = Leafs::new(&den.ps);
        let zn = g.leaf(&z);
        let out = match scale {
            Some(s) => den.guided_predict(&g, &mut lf, zn, 20, 1, s).unwrap(),
            None => den.forward(&g, &mut lf, zn, 20, class).unwrap(),
        };
        g.value(out).to_vec()
    };
    assert_eq!(eval(Some(1.0), 0), eval(None, 1), "s = 1 → ε_c exactly");
    assert_eq!(eval(Some(0.0), 0), eval(None, 3), "s = 0 → ε_u exactly");
}

#[test]
fn cfg_combination_arithmetic() {
    let g = Graph::new();
    let e_u = g.leaf(&Tensor::zeros(&[4]));
    let e_c = g.leaf(&Tensor::full(&[4], 1.0));
    let out = combine_cfg(&g, e_u, e_c, 7.5).unwrap();
    for v in g.value(out).to_vec() {
        assert_abs_diff_eq!(v, 7.5, epsilon = 0.0);
    }
}

#[test]
fn denoiser_training_reduces_loss_and_is_deterministic() {
    let schedule = NoiseSchedule::linear(50, 1e-3, 5e-2);
    let mut rng = stream(11, "latents");
    let latents: Vec<Tensor> = (0..8).map(|_| randn(&[2, 4, 4], &mut rng)).collect();
    let labels: Vec<usize> = (0..8).map(|i| i % 3).collect();
    let cfg = DenoiserTrainConfig {
        steps: 60,
        batch_size: 4,
        lr: 3e-3,
        p_uncond: 0.1,
        seed: 12,
    };
    let mut d1 = Denoiser::new(tiny_denoiser_cfg(), 13);
    let l1 = train_denoiser(&mut d1, &latents, &labels, &schedule, &cfg).unwrap();
    let head: f64 = l1[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = l1[50..].iter().sum::<f64>() / 10.0;
    assert!(tail < head, "loss decreased: {head} → {tail}");

    let mut d2 = Denoiser::new(tiny_denoiser_cfg(), 13);
    let l2 = train_denoiser(&mut d2, &latents, &labels, &schedule, &cfg).unwrap();
    assert_eq!(l1, l2, "identical loss trace");
    assert_eq!(d1.weight_digest(), d2.weight_digest(), "identical weights");
}

#[test]
fn denoiser_checkpoint_records_p_uncond() {
    let dir = tempfile::tempdir().unwrap();
    let schedule = NoiseSchedule::linear(50, 1e-3, 5e-2);
    let mut rng = stream(14, "latents");
    let latents: Vec<Tensor> = (0..4).map(|_| randn(&[2, 4, 4], &mut rng)).collect();
    let labels = vec![0, 1, 2, 0];
    let mut den = Denoiser::new(tiny_denoiser_cfg(), 15);
    let cfg = DenoiserTrainConfig {
        steps: 3,
        batch_size: 2,
        lr: 1e-3,
        p_uncond: 0.25,
        seed: 16,
    };
    train_denoiser(&mut den, &latents, &labels, &schedule, &cfg).unwrap();
    let path = dir.path().join("den.ssel");
    den.save(&path).unwrap();
    let ck = tensor::checkpoint::Checkpoint::load(&path).unwrap();
    assert_eq!(ck.meta.get("p_uncond").unwrap(), "0.25");
    let back = Denoiser::load(&path).unwrap();
    assert_eq!(back.p_uncond, 0.25);
    assert_eq!(back.weight_digest(), den.weight_digest());
}

#[test]
fn nan_latents_abort_with_diagnostic() {
    let schedule = NoiseSchedule::linear(50, 1e-3, 5e-2);
    let latents = vec![Tensor::full(&[2, 4, 4], f64::NAN)];
    let labels = vec![0];
    let mut den = Denoiser::new(tiny_denoiser_cfg(), 17);
    let cfg = DenoiserTrainConfig {
        steps: 5,
        batch_size: 1,
        lr: 1e-3,
        p_uncond: 0.1,
        seed: 18,
    };
    match train_denoiser(&mut den, &latents, &labels, &schedule, &cfg) {
        Err(DiffusionError::NanLoss { step: 0, .. }) => {}
        other => panic!("expected NanLoss at step 0, got {other:?}"),
    }
}

#[test]
fn empty_dataset_rejected() {
    let schedule = NoiseSchedule::linear(50, 1e-3, 5e-2);
    let mut den = Denoiser::new(tiny_denoiser_cfg(), 19);
    let cfg = DenoiserTrainConfig::default();
    assert!(matches!(
        train_denoiser(&mut den, &[], &[], &schedule, &cfg),
        Err(DiffusionError::EmptyDataset)
    ));
    let mut ae = Autoencoder::new(16, 20);
    assert!(matches!(
        train_autoencoder(&mut ae, &[], &AeTrainConfig::default()),
        Err(DiffusionError::EmptyDataset)
    ));
}
