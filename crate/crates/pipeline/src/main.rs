//! seedpipe: run the long-tail seed-optimization experiment, a stage at a
//! time or end to end. Every artifact is stamped with the config hash, and
//! verbs that consume earlier artifacts refuse stale ones.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use corpus::{
    count_ngrams, count_phrases, merge_synonyms, rank_and_split, split_tsv, FrequencyTable,
    SynonymMap,
};
use diffusion::{Autoencoder, Denoiser};
use evalkit::{augmentation_eval, fid, ndb, prdc, MixConfig};
use models::{build_centroid_table, Classifier, Embedder};
use pipeline::artifacts::{check_stamp, save_stamped, write_tsv, OutDirs};
use pipeline::config::ExperimentConfig;
use pipeline::experiment::{
    balanced_take, baseline_pool, class_pools, curve_and_rank, embed_all, few_shot_real,
    optimized_pool, pool_dataset, reference_sets, run_experiment, schedule_for, synth_stage,
    train_ae_stage, train_classifier_stage, train_denoiser_stage, train_embedder_stage,
};
use pipeline::PipelineError;
use seedopt::{optimize_seed, FrozenStack};
use synthdata::{save_png, write_dataset, SynthOutput};
use tensor::checkpoint::Checkpoint;
use tensor::Tensor;

#[derive(Parser)]
#[command(
    name = "seedpipe",
    version,
    about = "Long-tail diffusion experiment pipeline"
)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output root; overrides the config and the SEEDPIPE_OUT env var.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Global RNG seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the long-tailed dataset to PNGs plus a manifest.
    SynthData,
    /// Train the autoencoder and checkpoint it.
    TrainAe,
    /// Train the class-conditional denoiser (needs the autoencoder).
    TrainDdpm,
    /// Train the semantic embedder.
    TrainEmbedder,
    /// Train the balanced evaluation classifier.
    TrainClassifier,
    /// Optimize one initial noise seed for a class; writes a loss trace.
    Seedselect(SeedselectArgs),
    /// Generate an image pool for one class under one arm.
    Generate(GenerateArgs),
    /// Faithfulness curve across classes for one arm's pools.
    EvalFaithfulness(ArmArg),
    /// FID between real test features and one arm's pools.
    EvalFid(ArmArg),
    /// Precision/recall/density/coverage and NDB for one arm's pools.
    EvalDiversity(ArmArg),
    /// Few-shot augmentation comparison: real-only vs both generated mixes.
    EvalAugment,
    /// Count n-grams in a line-delimited caption corpus.
    CorpusCount(CorpusCountArgs),
    /// Per-class corpus frequencies with synonym folding and band splits.
    CorpusClasses(CorpusClassesArgs),
    /// Run every stage end to end and write the report.
    RunAll,
}

#[derive(Args)]
struct SeedselectArgs {
    /// Target class id.
    #[arg(long)]
    class: usize,
    /// Blend weight: total = λ·semantic + (1−λ)·appearance.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Consecutive loss increases tolerated before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Trailing denoising steps feeding the stabilized semantic loss.
    #[arg(long)]
    t_stab: Option<usize>,
    #[arg(long)]
    sampling_steps: Option<usize>,
    #[arg(long)]
    guidance_scale: Option<f64>,
    /// Reference images taken from the class's training split.
    #[arg(long)]
    refs: Option<usize>,
    /// Use the contrastive semantic loss against all class centroids.
    #[arg(long)]
    contrastive: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Target class id.
    #[arg(long)]
    class: usize,
    /// Pool size; defaults to the config's gen_per_class.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    arm: Arm,
}

#[derive(Args)]
struct ArmArg {
    #[arg(long, value_enum)]
    arm: Arm,
}

#[derive(Args)]
struct CorpusCountArgs {
    /// Line-delimited UTF-8 caption file.
    #[arg(long)]
    input: PathBuf,
    /// Worker threads for sharded counting.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Count 1-grams up to n-grams of this order (1 or 2).
    #[arg(long, default_value_t = 2)]
    n_max: usize,
    /// Output TSV: ngram, count (count desc, then lexicographic).
    #[arg(long)]
    out_file: PathBuf,
}

#[derive(Args)]
struct CorpusClassesArgs {
    /// Line-delimited UTF-8 caption file.
    #[arg(long)]
    input: PathBuf,
    /// One class phrase per line.
    #[arg(long)]
    classes: PathBuf,
    /// Synonym TSV: synonym <TAB> class.
    #[arg(long)]
    synonyms: Option<PathBuf>,
    /// Count above which a class is in the Many band.
    #[arg(long)]
    hi: u64,
    /// Count below which a class is in the Few band.
    #[arg(long)]
    lo: u64,
    /// Worker threads for sharded counting.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output TSV: class, count, band (rank order).
    #[arg(long)]
    out_file: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Arm {
    Baseline,
    Optimized,
}

impl Arm {
    fn as_str(self) -> &'static str {
        match self {
            Arm::Baseline => "baseline",
            Arm::Optimized => "optimized",
        }
    }
}

/// Everything a verb needs: the resolved config, its hash, and the output
/// directory tree.
struct Ctx {
    cfg: ExperimentConfig,
    dirs: OutDirs,
    hash: String,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    } else if cfg.out_dir.as_os_str().is_empty() {
        if let Ok(v) = std::env::var("SEEDPIPE_OUT") {
            if !v.is_empty() {
                cfg.out_dir = PathBuf::from(v);
            }
        }
    }
    if cfg.out_dir.as_os_str().is_empty() {
        cfg.out_dir = PathBuf::from("runs/default");
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ctx(cli: &Cli) -> Result<Ctx, PipelineError> {
    let cfg = resolve_config(cli)?;
    let hash = cfg.hash();
    let dirs = OutDirs::create(&cfg.out_dir)?;
    fs::write(dirs.root.join("config.resolved.toml"), cfg.to_toml())?;
    fs::write(dirs.root.join("config_hash.txt"), &hash)?;
    Ok(Ctx { cfg, dirs, hash })
}

/// Refuse to consume an artifact that is missing or was produced under a
/// different config hash.
fn require(path: &Path, hash: &str, hint: &str) -> Result<(), PipelineError> {
    if !path.exists() {
        return Err(PipelineError::Artifact(format!(
            "{} not found — run `seedpipe {hint}` first",
            path.display()
        )));
    }
    check_stamp(path, hash)
}

impl Ctx {
    fn load_ae(&self) -> Result<Autoencoder, PipelineError> {
        let p = self.dirs.models.join("ae.ckpt");
        require(&p, &self.hash, "train-ae")?;
        Ok(Autoencoder::load(&p)?)
    }

    fn load_denoiser(&self) -> Result<Denoiser, PipelineError> {
        let p = self.dirs.models.join("denoiser.ckpt");
        require(&p, &self.hash, "train-ddpm")?;
        Ok(Denoiser::load(&p)?)
    }

    fn load_embedder(&self) -> Result<Embedder, PipelineError> {
        let p = self.dirs.models.join("embedder.ckpt");
        require(&p, &self.hash, "train-embedder")?;
        Ok(Embedder::load(&p)?)
    }

    fn load_classifier(&self) -> Result<Classifier, PipelineError> {
        let p = self.dirs.models.join("classifier.ckpt");
        require(&p, &self.hash, "train-classifier")?;
        Ok(Classifier::load(&p)?)
    }

    fn pool_path(&self, arm: Arm, class: usize) -> PathBuf {
        self.dirs
            .eval
            .join(format!("pool_{}_c{class:02}.ckpt", arm.as_str()))
    }

    fn save_pool(&self, arm: Arm, class: usize, images: &[Tensor]) -> Result<(), PipelineError> {
        let mut ck = Checkpoint::new();
        for (i, img) in images.iter().enumerate() {
            ck.push_tensor(&format!("{i:06}"), img.clone());
        }
        save_stamped(ck, &self.hash, &self.pool_path(arm, class))
    }

    fn load_pool(&self, arm: Arm, class: usize) -> Result<Vec<Tensor>, PipelineError> {
        let p = self.pool_path(arm, class);
        require(
            &p,
            &self.hash,
            &format!("generate --arm {} --class {class}", arm.as_str()),
        )?;
        let ck = Checkpoint::load(&p)
            .map_err(|e| PipelineError::Artifact(format!("read {}: {e}", p.display())))?;
        Ok(ck.tensors.into_iter().map(|(_, t)| t).collect())
    }

    fn load_pools(&self, arm: Arm) -> Result<Vec<Vec<Tensor>>, PipelineError> {
        (0..self.cfg.dataset.n_classes)
            .map(|c| self.load_pool(arm, c))
            .collect()
    }

    fn synth(&self) -> Result<SynthOutput, PipelineError> {
        synth_stage(&self.cfg)
    }
}

fn cmd_synth_data(ctx: &Ctx) -> Result<(), PipelineError> {
    let spec = ctx.cfg.dataset.to_spec(ctx.cfg.seed);
    let (out, manifest) = write_dataset(&spec, &ctx.dirs.dataset)?;
    fs::write(ctx.dirs.dataset.join("config_hash.txt"), &ctx.hash)?;
    println!("manifest: {}", manifest.display());
    for (c, (&count, name)) in out.train_counts.iter().zip(&out.class_names).enumerate() {
        println!("class {c:2} {name:<12} train {count}");
    }
    println!(
        "total: {} train + {} test images",
        out.train.len(),
        out.test.len()
    );
    Ok(())
}

fn cmd_train_ae(ctx: &Ctx) -> Result<(), PipelineError> {
    let data = ctx.synth()?;
    let (ae, losses) = train_ae_stage(&ctx.cfg, &data.train.images)?;
    let path = ctx.dirs.models.join("ae.ckpt");
    save_stamped(ae.to_checkpoint(), &ctx.hash, &path)?;
    pipeline::artifacts::write_loss_trace(&ctx.dirs.traces.join("ae_loss.tsv"), &ctx.hash, &losses)?;
    println!(
        "autoencoder: {} steps, final loss {:.6}, saved {}",
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

fn cmd_train_ddpm(ctx: &Ctx) -> Result<(), PipelineError> {
    let ae = ctx.load_ae()?;
    let data = ctx.synth()?;
    let (den, _schedule, losses) = train_denoiser_stage(&ctx.cfg, &ae, &data.train)?;
    let path = ctx.dirs.models.join("denoiser.ckpt");
    save_stamped(den.to_checkpoint(), &ctx.hash, &path)?;
    pipeline::artifacts::write_loss_trace(
        &ctx.dirs.traces.join("denoiser_loss.tsv"),
        &ctx.hash,
        &losses,
    )?;
    println!(
        "denoiser: {} steps, final loss {:.6}, saved {}",
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

fn cmd_train_embedder(ctx: &Ctx) -> Result<(), PipelineError> {
    let data = ctx.synth()?;
    let (emb, losses) = train_embedder_stage(&ctx.cfg, &data.train)?;
    let path = ctx.dirs.models.join("embedder.ckpt");
    save_stamped(emb.to_checkpoint(), &ctx.hash, &path)?;
    pipeline::artifacts::write_loss_trace(
        &ctx.dirs.traces.join("embedder_loss.tsv"),
        &ctx.hash,
        &losses,
    )?;
    println!(
        "embedder: {} steps, final loss {:.6}, saved {}",
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

fn cmd_train_classifier(ctx: &Ctx) -> Result<(), PipelineError> {
    let data = ctx.synth()?;
    let (clf, losses) = train_classifier_stage(&ctx.cfg, &data.train)?;
    let path = ctx.dirs.models.join("classifier.ckpt");
    save_stamped(clf.to_checkpoint(), &ctx.hash, &path)?;
    pipeline::artifacts::write_loss_trace(
        &ctx.dirs.traces.join("classifier_loss.tsv"),
        &ctx.hash,
        &losses,
    )?;
    let acc = clf.balanced_accuracy(&data.test)?;
    println!(
        "classifier: {} steps, test balanced accuracy {acc:.4}, saved {}",
        losses.len(),
        path.display()
    );
    Ok(())
}

fn cmd_seedselect(ctx: &Ctx, args: &SeedselectArgs) -> Result<(), PipelineError> {
    let mut cfg = ctx.cfg.clone();
    if let Some(v) = args.lambda {
        cfg.seedopt.lambda = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.seedopt.learning_rate = v;
    }
    if let Some(v) = args.max_iters {
        cfg.seedopt.max_iters = v;
    }
    if let Some(v) = args.patience {
        cfg.seedopt.patience = v;
    }
    if let Some(v) = args.t_stab {
        cfg.seedopt.t_stab = v;
    }
    if let Some(v) = args.sampling_steps {
        cfg.seedopt.sampling_steps = v;
    }
    if let Some(v) = args.guidance_scale {
        cfg.seedopt.guidance_scale = v;
    }
    if let Some(v) = args.refs {
        cfg.eval.refs_per_class = v;
    }
    cfg.seedopt.contrastive = args.contrastive;
    if args.class >= cfg.dataset.n_classes {
        return Err(PipelineError::Config(format!(
            "class {} out of range ({} classes)",
            args.class, cfg.dataset.n_classes
        )));
    }

    let ae = ctx.load_ae()?;
    let den = ctx.load_denoiser()?;
    let emb = ctx.load_embedder()?;
    let schedule = schedule_for(&cfg);
    let data = ctx.synth()?;
    let refs = reference_sets(&cfg, &data.train, &ae, &emb)?;
    let table = if cfg.seedopt.contrastive {
        Some(build_centroid_table(&emb, &data.train, cfg.dataset.n_classes)?)
    } else {
        None
    };
    let stack = FrozenStack {
        ae: &ae,
        den: &den,
        schedule: &schedule,
        emb: &emb,
    };
    let opt_cfg = cfg.seedopt.to_config(cfg.seed);
    let run = optimize_seed(
        &stack,
        &refs[args.class],
        args.class,
        &opt_cfg,
        table.as_ref(),
        None,
    )?;

    let mut trace = Vec::new();
    run.write_trace(&mut trace)
        .map_err(|e| PipelineError::Artifact(format!("loss trace: {e}")))?;
    let trace_path = ctx
        .dirs
        .traces
        .join(format!("seedselect_cli_c{:02}.tsv", args.class));
    write_tsv(&trace_path, &ctx.hash, &String::from_utf8_lossy(&trace))?;

    let mut ck = Checkpoint::new();
    ck.push_tensor("seed", run.seed.clone());
    let seed_path = ctx
        .dirs
        .eval
        .join(format!("seedselect_c{:02}.ckpt", args.class));
    save_stamped(ck, &ctx.hash, &seed_path)?;
    let img = stack.generate(
        &run.seed,
        args.class,
        opt_cfg.sampling_steps,
        opt_cfg.guidance_scale,
    )?;
    let png_path = ctx
        .dirs
        .eval
        .join(format!("seedselect_c{:02}.png", args.class));
    save_png(&img, &png_path)?;

    println!(
        "class {}: {} iterations, stopped by {:?}, best total loss {:.6} at iter {}",
        args.class, run.iterations, run.stop_reason, run.best_total, run.best_iter
    );
    println!("trace: {}", trace_path.display());
    println!("seed:  {}", seed_path.display());
    println!("image: {}", png_path.display());
    Ok(())
}

fn cmd_generate(ctx: &Ctx, args: &GenerateArgs) -> Result<(), PipelineError> {
    if args.class >= ctx.cfg.dataset.n_classes {
        return Err(PipelineError::Config(format!(
            "class {} out of range ({} classes)",
            args.class, ctx.cfg.dataset.n_classes
        )));
    }
    let n = args.n.unwrap_or(ctx.cfg.eval.gen_per_class);
    let ae = ctx.load_ae()?;
    let den = ctx.load_denoiser()?;
    let schedule = schedule_for(&ctx.cfg);
    let images = match args.arm {
        Arm::Baseline => baseline_pool(&ctx.cfg, &ae, &den, &schedule, args.class, n)?,
        Arm::Optimized => {
            let emb = ctx.load_embedder()?;
            let data = ctx.synth()?;
            let refs = reference_sets(&ctx.cfg, &data.train, &ae, &emb)?;
            let table = if ctx.cfg.seedopt.contrastive {
                Some(build_centroid_table(&emb, &data.train, ctx.cfg.dataset.n_classes)?)
            } else {
                None
            };
            let stack = FrozenStack {
                ae: &ae,
                den: &den,
                schedule: &schedule,
                emb: &emb,
            };
            optimized_pool(
                &ctx.cfg,
                &stack,
                &refs[args.class],
                table.as_ref(),
                args.class,
                n,
            )?
            .images
        }
    };
    ctx.save_pool(args.arm, args.class, &images)?;
    let sample_dir = ctx.dirs.eval.join("samples").join(args.arm.as_str());
    fs::create_dir_all(&sample_dir)?;
    for (i, img) in images.iter().take(3).enumerate() {
        save_png(img, &sample_dir.join(format!("c{:02}_{i}.png", args.class)))?;
    }
    println!(
        "{} images for class {} ({}) → {}",
        images.len(),
        args.class,
        args.arm.as_str(),
        ctx.pool_path(args.arm, args.class).display()
    );
    Ok(())
}

fn cmd_eval_faithfulness(ctx: &Ctx, arm: Arm) -> Result<(), PipelineError> {
    let clf = ctx.load_classifier()?;
    let pools = ctx.load_pools(arm)?;
    let data = ctx.synth()?;
    let frequencies: Vec<u64> = data.train_counts.iter().map(|&c| c as u64).collect();
    let (curve, rho) = curve_and_rank(&pools, &clf, &frequencies, &ctx.cfg)?;
    let path = ctx.dirs.eval.join(format!("curve_{}.tsv", arm.as_str()));
    write_tsv(&path, &ctx.hash, &curve.to_tsv())?;
    println!("arm: {}", arm.as_str());
    for e in &curve.per_class {
        println!(
            "class {:2} freq {:5} {:4} accuracy {:.4}",
            e.class, e.frequency, e.band, e.accuracy
        );
    }
    let fmt = |m: Option<f64>| m.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "bands: many {} med {} few {} | tail quartile {:.4} | spearman(freq, acc) {:.4}",
        fmt(curve.many_mean),
        fmt(curve.med_mean),
        fmt(curve.few_mean),
        curve.tail_quartile_mean,
        rho
    );
    println!("curve: {}", path.display());
    Ok(())
}

/// Balanced embeddings of the real test split and one arm's pools.
fn arm_features(ctx: &Ctx, arm: Arm) -> Result<(Vec<Tensor>, Vec<Tensor>), PipelineError> {
    let emb = ctx.load_embedder()?;
    let pools = ctx.load_pools(arm)?;
    let data = ctx.synth()?;
    let n = ctx.cfg.eval.n_eval_samples;
    let real_pools = class_pools(&data.test, ctx.cfg.dataset.n_classes);
    let real = embed_all(&emb, &balanced_take(&real_pools, n))?;
    let gen = embed_all(&emb, &balanced_take(&pools, n))?;
    Ok((real, gen))
}

fn cmd_eval_fid(ctx: &Ctx, arm: Arm) -> Result<(), PipelineError> {
    let (real, gen) = arm_features(ctx, arm)?;
    let d = fid(&real, &gen)?;
    write_tsv(
        &ctx.dirs.eval.join(format!("fid_{}.tsv", arm.as_str())),
        &ctx.hash,
        &format!("arm\tfid\n{}\t{d}\n", arm.as_str()),
    )?;
    println!("fid[{}] = {d:.6} ({} vs {} features)", arm.as_str(), real.len(), gen.len());
    Ok(())
}

fn cmd_eval_diversity(ctx: &Ctx, arm: Arm) -> Result<(), PipelineError> {
    let (real, gen) = arm_features(ctx, arm)?;
    let p = prdc(&real, &gen, ctx.cfg.eval.prdc_k)?;
    let r = ndb(
        &real,
        &gen,
        ctx.cfg.eval.ndb_bins,
        ctx.cfg.eval.ndb_alpha,
        ctx.cfg.seed,
    )?;
    let body = format!(
        "arm\tprecision\trecall\tdensity\tcoverage\tndb\tn_bins\n{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        arm.as_str(),
        p.precision,
        p.recall,
        p.density,
        p.coverage,
        r.ndb,
        r.n_bins
    );
    write_tsv(
        &ctx.dirs.eval.join(format!("diversity_{}.tsv", arm.as_str())),
        &ctx.hash,
        &body,
    )?;
    println!(
        "prdc[{}]: precision {:.4} recall {:.4} density {:.4} coverage {:.4}",
        arm.as_str(),
        p.precision,
        p.recall,
        p.density,
        p.coverage
    );
    println!("ndb[{}]: {} of {} bins differ", arm.as_str(), r.ndb, r.n_bins);
    Ok(())
}

fn cmd_eval_augment(ctx: &Ctx) -> Result<(), PipelineError> {
    let data = ctx.synth()?;
    let n_classes = ctx.cfg.dataset.n_classes;
    let real_few = few_shot_real(&data.train, n_classes, ctx.cfg.eval.aug_real_per_class);
    let mix_cfg = MixConfig {
        steps: ctx.cfg.eval.aug_steps,
        per_class: ctx.cfg.eval.aug_batch_per_class,
        lr: ctx.cfg.eval.aug_lr,
        seed: ctx.cfg.seed,
    };
    let pools_base = ctx.load_pools(Arm::Baseline)?;
    let pools_opt = ctx.load_pools(Arm::Optimized)?;
    let runs = [
        ("real_only", synthdata::Dataset::default()),
        (
            "mix_random",
            pool_dataset(&pools_base, ctx.cfg.eval.aug_per_class),
        ),
        (
            "mix_optimized",
            pool_dataset(&pools_opt, ctx.cfg.eval.aug_per_class),
        ),
    ];
    let mut body = String::from("arm\tbalanced_accuracy\n");
    for (name, generated) in runs {
        let acc = augmentation_eval(&real_few, &generated, &data.test, n_classes, &mix_cfg)?;
        println!("{name}: balanced accuracy {acc:.4}");
        body.push_str(&format!("{name}\t{acc}\n"));
    }
    write_tsv(&ctx.dirs.eval.join("augmentation.tsv"), &ctx.hash, &body)?;
    Ok(())
}

fn cmd_corpus_count(args: &CorpusCountArgs) -> Result<(), PipelineError> {
    let table = count_ngrams(&args.input, args.threads, args.n_max)?;
    table
        .write_tsv(&args.out_file)
        .map_err(|e| PipelineError::Artifact(format!("write {}: {e}", args.out_file.display())))?;
    println!(
        "{} distinct n-grams → {}",
        table.len(),
        args.out_file.display()
    );
    for (ngram, count) in table.sorted_entries().into_iter().take(10) {
        println!("{count:>10}  {ngram}");
    }
    Ok(())
}

fn cmd_corpus_classes(args: &CorpusClassesArgs) -> Result<(), PipelineError> {
    let text = fs::read_to_string(&args.classes)
        .map_err(|e| PipelineError::Config(format!("read {}: {e}", args.classes.display())))?;
    let classes: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect();
    if classes.is_empty() {
        return Err(PipelineError::Config(format!(
            "no classes in {}",
            args.classes.display()
        )));
    }
    let synonyms = match &args.synonyms {
        Some(p) => SynonymMap::from_tsv(p)?,
        None => SynonymMap::new(),
    };
    let mut phrases: Vec<String> = classes.clone();
    for class in &classes {
        phrases.extend(synonyms.synonyms_of(class));
    }
    phrases.sort_unstable();
    phrases.dedup();

    let mut table = FrequencyTable::new();
    table.insert_phrase_counts(count_phrases(&args.input, &phrases, args.threads)?);
    let merged = merge_synonyms(&table, &synonyms, &classes);
    let ranked = rank_and_split(&merged, args.hi, args.lo)?;
    fs::write(&args.out_file, split_tsv(&ranked))
        .map_err(|e| PipelineError::Artifact(format!("write {}: {e}", args.out_file.display())))?;
    for r in &ranked {
        println!("{:>10}  {:<4}  {}", r.count, r.band.to_string(), r.class);
    }
    println!("split: {}", args.out_file.display());
    Ok(())
}

fn cmd_run_all(ctx: &Ctx) -> Result<(), PipelineError> {
    let out = run_experiment(&ctx.cfg)?;
    println!("report: {}", ctx.dirs.root.join("report.json").display());
    for (arm, curve) in &out.report.curves {
        let fmt = |m: Option<f64>| m.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        println!(
            "curve[{arm}]: many {} med {} few {} tail {:.4}",
            fmt(curve.many_mean),
            fmt(curve.med_mean),
            fmt(curve.few_mean),
            curve.tail_quartile_mean
        );
    }
    for (arm, v) in &out.report.fid {
        println!("fid[{arm}] = {v:.6}");
    }
    for (arm, p) in &out.report.prdc {
        println!(
            "prdc[{arm}]: precision {:.4} recall {:.4} density {:.4} coverage {:.4}",
            p.precision, p.recall, p.density, p.coverage
        );
    }
    for (arm, n) in &out.report.ndb {
        println!("ndb[{arm}]: {} of {} bins differ", n.ndb, n.n_bins);
    }
    for (name, acc) in &out.report.augmentation_accuracy {
        println!("augmentation[{name}]: balanced accuracy {acc:.4}");
    }
    for (k, v) in &out.report.extras {
        println!("{k} = {v:.4}");
    }
    let total = out
        .timings
        .iter()
        .find(|(n, _)| n == "total")
        .map_or(0.0, |(_, s)| *s);
    println!("total wall clock: {total:.1}s (see timings.tsv)");
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.cmd {
        Cmd::CorpusCount(args) => return cmd_corpus_count(args),
        Cmd::CorpusClasses(args) => return cmd_corpus_classes(args),
        _ => {}
    }
    let ctx = ctx(cli)?;
    match &cli.cmd {
        Cmd::SynthData => cmd_synth_data(&ctx),
        Cmd::TrainAe => cmd_train_ae(&ctx),
        Cmd::TrainDdpm => cmd_train_ddpm(&ctx),
        Cmd::TrainEmbedder => cmd_train_embedder(&ctx),
        Cmd::TrainClassifier => cmd_train_classifier(&ctx),
        Cmd::Seedselect(args) => cmd_seedselect(&ctx, args),
        Cmd::Generate(args) => cmd_generate(&ctx, args),
        Cmd::EvalFaithfulness(a) => cmd_eval_faithfulness(&ctx, a.arm),
        Cmd::EvalFid(a) => cmd_eval_fid(&ctx, a.arm),
        Cmd::EvalDiversity(a) => cmd_eval_diversity(&ctx, a.arm),
        Cmd::EvalAugment => cmd_eval_augment(&ctx),
        Cmd::RunAll => cmd_run_all(&ctx),
        Cmd::CorpusCount(_) | Cmd::CorpusClasses(_) => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
