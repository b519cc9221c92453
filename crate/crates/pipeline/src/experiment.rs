//! The end-to-end experiment: synthesize the long-tail dataset, train the
//! generative stack and probes, generate per-class pools with random and
//! optimized seeds, and evaluate both arms into one report.

use std::fs;
use std::path::Path;
use std::time::Instant;

use diffusion::{
    sample_detached, train_autoencoder, train_denoiser, AeTrainConfig, Autoencoder, Denoiser,
    DenoiserCfg, DenoiserTrainConfig, NoiseSchedule,
};
use evalkit::{
    augmentation_eval, faithfulness_curve, fid, ndb, prdc, spearman, EvalReport,
    FaithfulnessCurve, MixConfig, NdbSummary,
};
use models::{
    build_centroid_table, train_classifier, train_embedder, CentroidTable, Classifier,
    ClassifierTrainConfig, Embedder, EmbedderTrainConfig,
};
use seedopt::{
    bootstrap_generate, optimize_seed, BootstrapPlan, FrozenStack, OptimizationConfig,
    ReferenceSet,
};
use synthdata::{save_png, synth_dataset, write_dataset, Dataset, SynthOutput};
use tensor::rng::{randn, stream};
use tensor::Tensor;

use crate::artifacts::{save_stamped, write_loss_trace, write_tsv, OutDirs};
use crate::config::ExperimentConfig;
use crate::PipelineError;

/// Noise schedule endpoints (shared by every stage that builds a schedule).
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 2e-2;

pub struct TrainedStack {
    pub ae: Autoencoder,
    pub den: Denoiser,
    pub schedule: NoiseSchedule,
    pub emb: Embedder,
    pub clf: Classifier,
}

impl TrainedStack {
    pub fn frozen(&self) -> FrozenStack<'_> {
        FrozenStack {
            ae: &self.ae,
            den: &self.den,
            schedule: &self.schedule,
            emb: &self.emb,
        }
    }
}

pub struct ExperimentOutput {
    pub report: EvalReport,
    /// Ordered (stage, seconds) wall-clock records; also written to
    /// `timings.tsv`. Kept out of the report so reruns stay byte-identical.
    pub timings: Vec<(String, f64)>,
}

/// Run one timed stage, attributing any failure to it by name. Artifacts
/// written by earlier stages stay on disk when a later stage fails.
fn stage<T>(
    log: &mut Vec<(String, f64)>,
    name: &'static str,
    f: impl FnOnce() -> Result<T, PipelineError>,
) -> Result<T, PipelineError> {
    log::info!("stage {name} starting");
    let t = Instant::now();
    let out = f().map_err(|e| PipelineError::Stage {
        stage: name,
        source: Box::new(e),
    })?;
    let secs = t.elapsed().as_secs_f64();
    log.push((name.to_string(), secs));
    log::info!("stage {name} finished in {secs:.2}s");
    Ok(out)
}

pub fn schedule_for(cfg: &ExperimentConfig) -> NoiseSchedule {
    NoiseSchedule::linear(cfg.denoiser.t_train, BETA_START, BETA_END)
}

pub fn denoiser_cfg_for(cfg: &ExperimentConfig, latent_channels: usize) -> DenoiserCfg {
    DenoiserCfg {
        latent_channels,
        base_width: cfg.denoiser.base_width,
        emb_dim: cfg.denoiser.emb_dim,
        n_classes: cfg.dataset.n_classes,
        t_train: cfg.denoiser.t_train,
        groups: cfg.denoiser.groups,
    }
}

/// Render the dataset for this config (deterministic, in memory).
pub fn synth_stage(cfg: &ExperimentConfig) -> Result<SynthOutput, PipelineError> {
    Ok(synth_dataset(&cfg.dataset.to_spec(cfg.seed))?)
}

pub fn train_ae_stage(
    cfg: &ExperimentConfig,
    images: &[Tensor],
) -> Result<(Autoencoder, Vec<f64>), PipelineError> {
    let mut ae = Autoencoder::new(cfg.dataset.image_size, cfg.seed);
    let losses = train_autoencoder(
        &mut ae,
        images,
        &AeTrainConfig {
            steps: cfg.autoencoder.steps,
            batch_size: cfg.autoencoder.batch_size,
            lr: cfg.autoencoder.lr,
            seed: cfg.seed,
        },
    )?;
    Ok((ae, losses))
}

pub fn train_denoiser_stage(
    cfg: &ExperimentConfig,
    ae: &Autoencoder,
    train: &Dataset,
) -> Result<(Denoiser, NoiseSchedule, Vec<f64>), PipelineError> {
    let latents: Vec<Tensor> = train
        .images
        .iter()
        .map(|img| ae.encode(img))
        .collect::<Result<_, _>>()?;
    let mut den = Denoiser::new(denoiser_cfg_for(cfg, ae.latent_shape()[0]), cfg.seed);
    let schedule = schedule_for(cfg);
    let losses = train_denoiser(
        &mut den,
        &latents,
        &train.labels,
        &schedule,
        &DenoiserTrainConfig {
            steps: cfg.denoiser.steps,
            batch_size: cfg.denoiser.batch_size,
            lr: cfg.denoiser.lr,
            p_uncond: cfg.denoiser.p_uncond,
            seed: cfg.seed,
        },
    )?;
    Ok((den, schedule, losses))
}

pub fn train_embedder_stage(
    cfg: &ExperimentConfig,
    train: &Dataset,
) -> Result<(Embedder, Vec<f64>), PipelineError> {
    let mut emb = Embedder::new(cfg.dataset.image_size, cfg.embedder.dim, cfg.seed);
    let losses = train_embedder(
        &mut emb,
        train,
        cfg.dataset.n_classes,
        &EmbedderTrainConfig {
            steps: cfg.embedder.steps,
            per_class: cfg.embedder.per_class,
            lr: cfg.embedder.lr,
            temperature: cfg.embedder.temperature,
            seed: cfg.seed,
        },
    )?;
    Ok((emb, losses))
}

pub fn train_classifier_stage(
    cfg: &ExperimentConfig,
    train: &Dataset,
) -> Result<(Classifier, Vec<f64>), PipelineError> {
    let mut clf = Classifier::new(cfg.dataset.image_size, cfg.dataset.n_classes, cfg.seed);
    let losses = train_classifier(
        &mut clf,
        train,
        &ClassifierTrainConfig {
            steps: cfg.classifier.steps,
            per_class: cfg.classifier.per_class,
            lr: cfg.classifier.lr,
            seed: cfg.seed,
        },
    )?;
    Ok((clf, losses))
}

/// The per-class few-shot reference sets: the first `refs_per_class` training
/// images of each class (or all of them for classes rarer than that).
pub fn reference_sets(
    cfg: &ExperimentConfig,
    train: &Dataset,
    ae: &Autoencoder,
    emb: &Embedder,
) -> Result<Vec<ReferenceSet>, PipelineError> {
    (0..cfg.dataset.n_classes)
        .map(|c| {
            let idx = train.of_class(c);
            let k = cfg.eval.refs_per_class.min(idx.len());
            let images: Vec<Tensor> = idx[..k].iter().map(|&i| train.images[i].clone()).collect();
            Ok(ReferenceSet::new(images, c, ae, emb)?)
        })
        .collect()
}

/// Random-seed generations for one class.
pub fn baseline_pool(
    cfg: &ExperimentConfig,
    ae: &Autoencoder,
    den: &Denoiser,
    schedule: &NoiseSchedule,
    class: usize,
    n: usize,
) -> Result<Vec<Tensor>, PipelineError> {
    let latent = ae.latent_shape();
    (0..n)
        .map(|i| {
            let rng = &mut stream(cfg.seed, &format!("gen/baseline/{class}/{i}"));
            let z_t = randn(&latent, rng);
            let (z0, _) = sample_detached(
                den,
                schedule,
                &z_t,
                class,
                cfg.seedopt.sampling_steps,
                cfg.seedopt.guidance_scale,
            )?;
            Ok(ae.decode(&z0)?)
        })
        .collect()
}

/// Optimized-seed generations for one class via warm-started bootstrap.
pub fn optimized_pool(
    cfg: &ExperimentConfig,
    stack: &FrozenStack,
    refs: &ReferenceSet,
    table: Option<&CentroidTable>,
    class: usize,
    n: usize,
) -> Result<seedopt::BootstrapOutput, PipelineError> {
    let class_seed = cfg.seed.wrapping_add(class as u64);
    let plan = BootstrapPlan {
        warm_iters: cfg.bootstrap.warm_iters,
        subset_iters: cfg.bootstrap.subset_iters,
        rule: cfg.bootstrap.rule()?,
        n_images: n,
        seed: class_seed,
    };
    Ok(bootstrap_generate(
        stack,
        refs,
        class,
        &plan,
        &cfg.seedopt.to_config(class_seed),
        table,
    )?)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Round-robin across classes until `n` items are taken (class-balanced up
/// to rounding); pools must all be non-empty.
pub fn balanced_take(pools: &[Vec<Tensor>], n: usize) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while out.len() < n {
        for pool in pools {
            if out.len() >= n {
                break;
            }
            if let Some(t) = pool.get(i) {
                out.push(t.clone());
            }
        }
        i += 1;
        if i > pools.iter().map(Vec::len).max().unwrap_or(0) {
            break; // fewer images than requested: take everything available
        }
    }
    out
}

/// Labelled dataset from the first `per_class` images of each class pool.
pub fn pool_dataset(pools: &[Vec<Tensor>], per_class: usize) -> Dataset {
    let mut ds = Dataset::default();
    for (class, pool) in pools.iter().enumerate() {
        for img in pool.iter().take(per_class) {
            ds.images.push(img.clone());
            ds.labels.push(class);
        }
    }
    ds
}

pub fn embed_all(emb: &Embedder, images: &[Tensor]) -> Result<Vec<Tensor>, PipelineError> {
    images.iter().map(|i| Ok(emb.embed(i)?)).collect()
}

/// The first `per_class` real images of each class (the few-shot set the
/// augmentation comparison trains on).
pub fn few_shot_real(train: &Dataset, n_classes: usize, per_class: usize) -> Dataset {
    let mut ds = Dataset::default();
    for c in 0..n_classes {
        for &i in train.of_class(c).iter().take(per_class) {
            ds.images.push(train.images[i].clone());
            ds.labels.push(c);
        }
    }
    ds
}

/// Per-class image pools from a labelled dataset.
pub fn class_pools(ds: &Dataset, n_classes: usize) -> Vec<Vec<Tensor>> {
    (0..n_classes)
        .map(|c| {
            ds.of_class(c)
                .into_iter()
                .map(|i| ds.images[i].clone())
                .collect()
        })
        .collect()
}

/// Faithfulness curve over per-class pools plus the Spearman rank
/// correlation between training frequency and per-class accuracy.
pub fn curve_and_rank(
    pools: &[Vec<Tensor>],
    clf: &Classifier,
    frequencies: &[u64],
    cfg: &ExperimentConfig,
) -> Result<(FaithfulnessCurve, f64), PipelineError> {
    let generated: Vec<(usize, Vec<Tensor>)> = pools
        .iter()
        .enumerate()
        .map(|(c, p)| (c, p.clone()))
        .collect();
    let curve = faithfulness_curve(
        &generated,
        clf,
        frequencies,
        cfg.eval.band_hi,
        cfg.eval.band_lo,
    )?;
    let xs: Vec<f64> = curve.per_class.iter().map(|e| e.frequency as f64).collect();
    let ys: Vec<f64> = curve.per_class.iter().map(|e| e.accuracy).collect();
    let rho = spearman(&xs, &ys)?;
    Ok((curve, rho))
}

/// Persist a handful of example generations for eyeballing.
fn save_samples(dir: &Path, arm: &str, pools: &[Vec<Tensor>]) -> Result<(), PipelineError> {
    let sample_dir = dir.join("samples").join(arm);
    fs::create_dir_all(&sample_dir)?;
    for (class, pool) in pools.iter().enumerate() {
        for (i, img) in pool.iter().take(3).enumerate() {
            save_png(img, &sample_dir.join(format!("c{class:02}_{i}.png")))?;
        }
    }
    Ok(())
}

/// The full pipeline. Every artifact lands under `cfg.out_dir`, stamped with
/// the config hash; wall-clock stage timings go to `timings.tsv` (not into
/// the report, which must be byte-identical across reruns).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, PipelineError> {
    cfg.validate()?;
    let total_start = Instant::now();
    let hash = cfg.hash();
    let dirs = OutDirs::create(&cfg.out_dir)?;
    fs::write(dirs.root.join("config.resolved.toml"), cfg.to_toml())?;
    fs::write(dirs.root.join("config_hash.txt"), &hash)?;
    let mut log: Vec<(String, f64)> = Vec::new();
    let n_classes = cfg.dataset.n_classes;

    let data = stage(&mut log, "synth-data", || {
        let data = synth_stage(cfg)?;
        if cfg.dataset.export_png {
            write_dataset(&cfg.dataset.to_spec(cfg.seed), &dirs.dataset)?;
            fs::write(dirs.dataset.join("config_hash.txt"), &hash)?;
        }
        let mut body = String::from("class\tname\ttrain_count\n");
        for (c, (&count, name)) in data.train_counts.iter().zip(&data.class_names).enumerate() {
            body.push_str(&format!("{c}\t{name}\t{count}\n"));
        }
        write_tsv(&dirs.eval.join("frequencies.tsv"), &hash, &body)?;
        Ok(data)
    })?;
    let frequencies: Vec<u64> = data.train_counts.iter().map(|&c| c as u64).collect();

    let ae = stage(&mut log, "train-ae", || {
        let (ae, losses) = train_ae_stage(cfg, &data.train.images)?;
        save_stamped(ae.to_checkpoint(), &hash, &dirs.models.join("ae.ckpt"))?;
        write_loss_trace(&dirs.traces.join("ae_loss.tsv"), &hash, &losses)?;
        Ok(ae)
    })?;

    let (den, schedule) = stage(&mut log, "train-ddpm", || {
        let (den, schedule, losses) = train_denoiser_stage(cfg, &ae, &data.train)?;
        save_stamped(den.to_checkpoint(), &hash, &dirs.models.join("denoiser.ckpt"))?;
        write_loss_trace(&dirs.traces.join("denoiser_loss.tsv"), &hash, &losses)?;
        Ok((den, schedule))
    })?;

    let emb = stage(&mut log, "train-embedder", || {
        let (emb, losses) = train_embedder_stage(cfg, &data.train)?;
        save_stamped(emb.to_checkpoint(), &hash, &dirs.models.join("embedder.ckpt"))?;
        write_loss_trace(&dirs.traces.join("embedder_loss.tsv"), &hash, &losses)?;
        Ok(emb)
    })?;

    let mut extras = std::collections::BTreeMap::new();

    let clf = stage(&mut log, "train-classifier", || {
        let (clf, losses) = train_classifier_stage(cfg, &data.train)?;
        save_stamped(clf.to_checkpoint(), &hash, &dirs.models.join("classifier.ckpt"))?;
        write_loss_trace(&dirs.traces.join("classifier_loss.tsv"), &hash, &losses)?;
        Ok(clf)
    })?;
    // probe quality of the frozen judge on real held-out data
    let clf_eval = stage(&mut log, "classifier-eval", || {
        let per_class = clf.per_class_accuracy(&data.test)?;
        let mut body = String::from("class\ttest_accuracy\n");
        for (c, acc) in per_class.iter().enumerate() {
            body.push_str(&format!("{c}\t{acc}\n"));
        }
        write_tsv(&dirs.eval.join("classifier_eval.tsv"), &hash, &body)?;
        Ok(clf.balanced_accuracy(&data.test)?)
    })?;
    extras.insert("classifier_test_balanced_accuracy".to_string(), clf_eval);

    let stack = TrainedStack {
        ae,
        den,
        schedule,
        emb,
        clf,
    };

    let table = if cfg.seedopt.contrastive {
        Some(stage(&mut log, "build-centroids", || {
            Ok(build_centroid_table(&stack.emb, &data.train, n_classes)?)
        })?)
    } else {
        None
    };

    let refs = stage(&mut log, "build-references", || {
        reference_sets(cfg, &data.train, &stack.ae, &stack.emb)
    })?;

    let pools_base = stage(&mut log, "generate-baseline", || {
        let pools: Vec<Vec<Tensor>> = (0..n_classes)
            .map(|c| {
                baseline_pool(
                    cfg,
                    &stack.ae,
                    &stack.den,
                    &stack.schedule,
                    c,
                    cfg.eval.gen_per_class,
                )
            })
            .collect::<Result<_, _>>()?;
        save_samples(&dirs.eval, "baseline", &pools)?;
        Ok(pools)
    })?;

    let pools_opt = stage(&mut log, "seedselect", || {
        let frozen = stack.frozen();
        let mut pools = Vec::with_capacity(n_classes);
        let mut all_iters: Vec<f64> = Vec::new();
        for c in 0..n_classes {
            let out = optimized_pool(
                cfg,
                &frozen,
                &refs[c],
                table.as_ref(),
                c,
                cfg.eval.gen_per_class,
            )?;
            all_iters.extend(out.per_image_iters.iter().map(|&i| i as f64));
            let mut trace = Vec::new();
            out.warm.write_trace(&mut trace).map_err(|e| {
                PipelineError::Artifact(format!("seedselect trace for class {c}: {e}"))
            })?;
            let trace = String::from_utf8_lossy(&trace).into_owned();
            write_tsv(
                &dirs.traces.join(format!("seedselect_c{c:02}.tsv")),
                &hash,
                &trace,
            )?;
            pools.push(out.images);
        }
        if !all_iters.is_empty() {
            // recorded for the report: not a timing, a convergence statistic
            let m = mean(&all_iters);
            log::info!("seedselect mean subset iterations: {m:.2}");
        }
        save_samples(&dirs.eval, "optimized", &pools)?;
        Ok(pools)
    })?;

    let (warm_mean, cold_mean) = stage(&mut log, "bootstrap-timing", || {
        let frozen = stack.frozen();
        let class = n_classes - 1; // the rarest class
        let n = cfg.eval.bootstrap_images;
        // Both arms run per-image optimizations under the identical stopping
        // rule and cap; only the starting point differs.
        let base = cfg.seedopt.to_config(cfg.seed);
        let mut cold_iters = Vec::with_capacity(n);
        for i in 0..n {
            let run = optimize_seed(
                &frozen,
                &refs[class],
                class,
                &OptimizationConfig {
                    seed: cfg.seed.wrapping_add(1000 + i as u64),
                    ..base.clone()
                },
                table.as_ref(),
                None,
            )?;
            cold_iters.push(run.iterations as f64);
        }
        // One amortized warm start (its own budget), then per-image
        // re-optimizations with the same cap as the cold arm.
        let plan = BootstrapPlan {
            warm_iters: cfg.bootstrap.warm_iters,
            subset_iters: base.max_iters,
            rule: cfg.bootstrap.rule()?,
            n_images: n,
            seed: cfg.seed.wrapping_add(777),
        };
        let warm = bootstrap_generate(&frozen, &refs[class], class, &plan, &base, table.as_ref())?;
        let warm_iters: Vec<f64> = warm.per_image_iters.iter().map(|&i| i as f64).collect();
        Ok((mean(&warm_iters), mean(&cold_iters)))
    })?;
    extras.insert("bootstrap_warm_mean_iters".to_string(), warm_mean);
    extras.insert("bootstrap_cold_mean_iters".to_string(), cold_mean);

    let mut report = EvalReport {
        config_hash: hash.clone(),
        ..EvalReport::default()
    };

    stage(&mut log, "eval-curves", || {
        let (curve_b, rho_b) = curve_and_rank(&pools_base, &stack.clf, &frequencies, cfg)?;
        let (curve_o, rho_o) = curve_and_rank(&pools_opt, &stack.clf, &frequencies, cfg)?;
        write_tsv(&dirs.eval.join("curve_baseline.tsv"), &hash, &curve_b.to_tsv())?;
        write_tsv(&dirs.eval.join("curve_optimized.tsv"), &hash, &curve_o.to_tsv())?;
        extras.insert("spearman_baseline".to_string(), rho_b);
        extras.insert("spearman_optimized".to_string(), rho_o);
        report.curves.insert("baseline".to_string(), curve_b);
        report.curves.insert("optimized".to_string(), curve_o);
        Ok(())
    })?;

    let (real_feats, feats_base, feats_opt) = stage(&mut log, "embed-features", || {
        let n = cfg.eval.n_eval_samples;
        let real_pools = class_pools(&data.test, n_classes);
        let real = embed_all(&stack.emb, &balanced_take(&real_pools, n))?;
        let base = embed_all(&stack.emb, &balanced_take(&pools_base, n))?;
        let opt = embed_all(&stack.emb, &balanced_take(&pools_opt, n))?;
        Ok((real, base, opt))
    })?;

    stage(&mut log, "eval-fid", || {
        report
            .fid
            .insert("baseline".to_string(), fid(&real_feats, &feats_base)?);
        report
            .fid
            .insert("optimized".to_string(), fid(&real_feats, &feats_opt)?);
        Ok(())
    })?;

    stage(&mut log, "eval-diversity", || {
        for (arm, feats) in [("baseline", &feats_base), ("optimized", &feats_opt)] {
            report
                .prdc
                .insert(arm.to_string(), prdc(&real_feats, feats, cfg.eval.prdc_k)?);
            let r = ndb(
                &real_feats,
                feats,
                cfg.eval.ndb_bins,
                cfg.eval.ndb_alpha,
                cfg.seed,
            )?;
            report.ndb.insert(
                arm.to_string(),
                NdbSummary {
                    ndb: r.ndb,
                    n_bins: r.n_bins,
                },
            );
        }
        Ok(())
    })?;

    stage(&mut log, "eval-augment", || {
        let real_few = few_shot_real(&data.train, n_classes, cfg.eval.aug_real_per_class);
        let mix_cfg = MixConfig {
            steps: cfg.eval.aug_steps,
            per_class: cfg.eval.aug_batch_per_class,
            lr: cfg.eval.aug_lr,
            seed: cfg.seed,
        };
        let runs = [
            ("real_only", Dataset::default()),
            ("mix_random", pool_dataset(&pools_base, cfg.eval.aug_per_class)),
            ("mix_optimized", pool_dataset(&pools_opt, cfg.eval.aug_per_class)),
        ];
        for (name, generated) in runs {
            let acc = augmentation_eval(&real_few, &generated, &data.test, n_classes, &mix_cfg)?;
            report.augmentation_accuracy.insert(name.to_string(), acc);
        }
        Ok(())
    })?;

    report.extras = extras;
    stage(&mut log, "write-report", || {
        report
            .save(&dirs.root.join("report.json"))
            .map_err(|e| PipelineError::Artifact(format!("report: {e}")))?;
        write_tsv(&dirs.eval.join("metrics.tsv"), &hash, &report.metrics_tsv())?;
        Ok(())
    })?;

    log.push(("total".to_string(), total_start.elapsed().as_secs_f64()));
    let mut body = String::from("stage\tseconds\n");
    for (name, secs) in &log {
        body.push_str(&format!("{name}\t{secs}\n"));
    }
    write_tsv(&dirs.root.join("timings.tsv"), &hash, &body)?;

    Ok(ExperimentOutput {
        report,
        timings: log,
    })
}
