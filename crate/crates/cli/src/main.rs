//! `alpr` — batch front end for the plate pipeline: generate synthetic
//! data, augment, split, evaluate, decode, and emit schedule curves.
//!
//! Every randomized command takes an explicit `--seed` and derives one
//! substream per sample, so reruns are byte-identical. Artifacts are
//! written atomically and every produced manifest embeds the seed and the
//! hash of the exact configuration that produced it.

mod fsio;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use alpr_core::augment::{apply_pipeline, AugmentConfig};
use alpr_core::config::{ConfigError, KvConfig};
use alpr_core::dataset::{
    bbox_polygon, leakage_safe_split, manifest_stats, select_validation_view, AnnotationRecord,
    Category, DatasetError, Header, ImageEntry, Manifest, Task, SCHEMA_TAG,
};
use alpr_core::img::LabeledImage;
use alpr_core::metrics::{evaluate_detections, sequence_accuracy, BoxXYWH, ScoredBox};
use alpr_core::parseq::{
    decode_ar, decode_nar, make_mock_recognizer, refine_cloze, ImageFeatures, MockTable,
    Permutation, Vocab,
};
use alpr_core::plate::{layout_plate, sample_plate, Registry};
use alpr_core::render::{load_font_dir, render_plate, BuiltinFont, GlyphSource, RenderConfig};
use alpr_core::rng::SeededRng;
use alpr_core::sched::{one_cycle_curve, OneCycleConfig};

use fsio::{encode_image, load_labeled_image, write_atomic, ImageFormat};

#[derive(Parser)]
#[command(name = "alpr", version, about = "License-plate pipeline tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic plate dataset (images + manifest).
    Gen(GenArgs),
    /// Augment a rendered dataset with the training-time pipeline.
    Augment(AugmentArgs),
    /// Split a manifest into train/val without plate-text leakage.
    Split(SplitArgs),
    /// Score recognition predictions against ground truth.
    EvalRec(EvalRecArgs),
    /// Score detection predictions against ground truth.
    EvalDet(EvalDetArgs),
    /// Decode with a mock recognizer table (AR, NAR, or refinement).
    Decode(DecodeArgs),
    /// Emit a one-cycle learning-rate curve as CSV.
    Sched(SchedArgs),
    /// Print manifest statistics.
    Stats(StatsArgs),
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes, like any Unix filter.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = classify(&err);
            let record = serde_json::json!({
                "error": format!("{err:#}"),
                "kind": kind,
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

fn classify(err: &anyhow::Error) -> &'static str {
    if err.chain().any(|c| c.is::<std::io::Error>()) {
        return "io";
    }
    if err.chain().any(|c| c.is::<ConfigError>()) {
        return "config";
    }
    if err.chain().any(|c| c.is::<DatasetError>()) {
        return "data";
    }
    "error"
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen(args) => cmd_gen(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Split(args) => cmd_split(args),
        Command::EvalRec(args) => cmd_eval_rec(args),
        Command::EvalDet(args) => cmd_eval_det(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Sched(args) => cmd_sched(args),
        Command::Stats(args) => cmd_stats(args),
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<KvConfig> {
    match path {
        Some(p) => KvConfig::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(KvConfig::new()),
    }
}

// ---------------------------------------------------------------- gen --

#[derive(Args)]
struct GenArgs {
    /// Master seed; sample i uses the substream derived from (seed, i).
    #[arg(long)]
    seed: u64,
    /// Number of samples to generate.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// State-code registry file (`CODE<TAB>weight`); defaults to the
    /// built-in three-state registry.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Output directory (images/ subdirectory plus manifest.jsonl).
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config file. Keys: format, jpeg_quality,
    /// glyph_height, line_gap, margin.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of .glyphfont files to mix with the built-in font.
    #[arg(long)]
    fonts: Option<PathBuf>,
}

const GEN_KEYS: [&str; 5] = ["format", "jpeg_quality", "glyph_height", "line_gap", "margin"];

fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = load_config(args.config.as_ref())?;
    cfg.validate_keys(&GEN_KEYS)?;
    let format = match cfg.get("format").unwrap_or("png") {
        "png" => ImageFormat::Png,
        "jpeg" | "jpg" => ImageFormat::Jpeg {
            quality: cfg.get_parsed::<u8>("jpeg_quality")?.unwrap_or(73),
        },
        other => bail!(ConfigError::InvalidValue {
            key: "format".into(),
            value: other.into(),
        }),
    };
    let mut render_cfg = RenderConfig::default();
    if let Some(h) = cfg.get_parsed::<u32>("glyph_height")? {
        render_cfg.glyph_height = h;
    }
    if let Some(g) = cfg.get_parsed::<u32>("line_gap")? {
        render_cfg.line_gap = g;
    }
    if let Some(m) = cfg.get_parsed::<u32>("margin")? {
        render_cfg.margin = m;
    }

    let registry = match &args.registry {
        Some(path) => {
            Registry::load(path).with_context(|| format!("registry {}", path.display()))?
        }
        None => Registry::default_states(),
    };

    let mut fonts: Vec<Box<dyn GlyphSource>> = vec![Box::new(BuiltinFont)];
    if let Some(dir) = &args.fonts {
        for font in load_font_dir(dir).with_context(|| format!("fonts in {}", dir.display()))? {
            fonts.push(Box::new(font));
        }
    }

    let master = SeededRng::new(args.seed);
    let mut manifest = Manifest::new(Header {
        schema: SCHEMA_TAG.to_string(),
        seed: Some(args.seed),
        config_hash: Some(cfg.hash()),
    });

    for i in 0..args.count {
        let mut rng = master.derive(i as u64);
        let fields = sample_plate(&mut rng, &registry)?;
        let layout = layout_plate(&fields, &mut rng);
        let font = &fonts[rng.index(fonts.len())];
        let img = render_plate(&layout, font.as_ref(), &render_cfg, &mut rng)?;

        let rel_path = format!("images/{i:06}.{}", format.extension());
        write_atomic(&args.out.join(&rel_path), &encode_image(&img, format)?)?;

        let bbox: BoxXYWH = [0.0, 0.0, img.width() as f64, img.height() as f64];
        manifest
            .push_entry(ImageEntry {
                image: rel_path.clone(),
                width: img.width(),
                height: img.height(),
                annotations: vec![AnnotationRecord {
                    image_id: rel_path,
                    image_size: (img.width(), img.height()),
                    polygon: bbox_polygon(bbox),
                    bbox,
                    categories: BTreeSet::from([Category::LicensePlate]),
                    text: Some(img.label().to_string()),
                    confidence: None,
                }],
            })
            .context("generated record failed schema validation")?;
    }

    write_atomic(&args.out.join("manifest.jsonl"), manifest.render().as_bytes())?;
    println!("wrote {} samples to {}", args.count, args.out.display());
    Ok(())
}

// ------------------------------------------------------------ augment --

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    seed: u64,
    /// Input manifest; image paths resolve relative to its directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config with the augmentation envelope overrides.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let cfg = load_config(args.config.as_ref())?;
    let aug_cfg = AugmentConfig::from_kv(&cfg).context("augment config")?;
    let manifest = Manifest::load(&args.input)
        .with_context(|| format!("manifest {}", args.input.display()))?;
    let base_dir = args
        .input
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    // Load every labeled image up front; the pool doubles as the peer
    // source for the vertical-concatenation augmentation.
    let mut pool: Vec<LabeledImage> = Vec::new();
    let mut sources: Vec<(usize, &ImageEntry)> = Vec::new();
    for entry in manifest.entries() {
        let Some(text) = entry.annotations.iter().find_map(|a| a.text.clone()) else {
            continue; // textless entries (unreadable crops) pass through
        };
        let img = load_labeled_image(&base_dir.join(&entry.image), &text)?;
        sources.push((pool.len(), entry));
        pool.push(img);
    }

    let master = SeededRng::new(args.seed);
    let mut out_manifest = Manifest::new(Header {
        schema: SCHEMA_TAG.to_string(),
        seed: Some(args.seed),
        config_hash: Some(cfg.hash()),
    });

    for (pool_idx, entry) in &sources {
        let mut rng = master.derive(*pool_idx as u64);
        let augmented = apply_pipeline(&pool[*pool_idx], &aug_cfg, &mut rng, &pool)?;
        let rel_path = format!("images/{pool_idx:06}.png");
        write_atomic(
            &args.out.join(&rel_path),
            &encode_image(&augmented, ImageFormat::Png)?,
        )?;
        let bbox: BoxXYWH = [
            0.0,
            0.0,
            augmented.width() as f64,
            augmented.height() as f64,
        ];
        let categories = entry
            .annotations
            .first()
            .map(|a| a.categories.clone())
            .unwrap_or_else(|| BTreeSet::from([Category::LicensePlate]));
        out_manifest
            .push_entry(ImageEntry {
                image: rel_path.clone(),
                width: augmented.width(),
                height: augmented.height(),
                annotations: vec![AnnotationRecord {
                    image_id: rel_path,
                    image_size: (augmented.width(), augmented.height()),
                    polygon: bbox_polygon(bbox),
                    bbox,
                    categories,
                    text: Some(augmented.label().to_string()),
                    confidence: None,
                }],
            })
            .context("augmented record failed schema validation")?;
    }

    write_atomic(
        &args.out.join("manifest.jsonl"),
        out_manifest.render().as_bytes(),
    )?;
    println!(
        "augmented {} samples into {}",
        sources.len(),
        args.out.display()
    );
    Ok(())
}

// -------------------------------------------------------------- split --

#[derive(Args)]
struct SplitArgs {
    /// Fraction of groups assigned to validation, in (0, 1).
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    seed: u64,
    /// Output directory for train.jsonl and val.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Input manifest.
    input: PathBuf,
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let manifest = Manifest::load(&args.input)
        .with_context(|| format!("manifest {}", args.input.display()))?;
    let (mut train, mut val) = leakage_safe_split(&manifest, args.ratio, args.seed)?;

    let mut cfg = KvConfig::new();
    cfg.set("ratio", args.ratio);
    for side in [&mut train, &mut val] {
        side.header.seed = Some(args.seed);
        side.header.config_hash = Some(cfg.hash());
    }
    write_atomic(&args.out.join("train.jsonl"), train.render().as_bytes())?;
    write_atomic(&args.out.join("val.jsonl"), val.render().as_bytes())?;
    println!(
        "split {} entries into {} train / {} val",
        manifest.len(),
        train.len(),
        val.len()
    );
    Ok(())
}

// ------------------------------------------------------------ eval-rec --

#[derive(Args)]
struct EvalRecArgs {
    /// Prediction manifest (text per image).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth manifest.
    #[arg(long)]
    gt: PathBuf,
    /// Optional path for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval_rec(args: EvalRecArgs) -> Result<()> {
    let pred = Manifest::load(&args.pred)
        .with_context(|| format!("manifest {}", args.pred.display()))?;
    let gt =
        Manifest::load(&args.gt).with_context(|| format!("manifest {}", args.gt.display()))?;

    let gt_view = select_validation_view(&gt, Task::Recognition);
    if gt_view.is_empty() {
        bail!("ground truth has no recognition-eligible records");
    }
    let pairs: Vec<(String, String)> = gt_view
        .iter()
        .map(|record| {
            let predicted = pred
                .entries()
                .iter()
                .find(|e| e.image == record.image_id)
                .and_then(|e| e.annotations.iter().find_map(|a| a.text.clone()))
                .unwrap_or_default();
            (
                predicted,
                record.text.clone().expect("recognition view records carry text"),
            )
        })
        .collect();
    let report = sequence_accuracy(&pairs)?;

    let json = serde_json::to_string(&report)?;
    println!("{json}");
    println!(
        "accuracy {:.4} | ned {:.4} | {} samples",
        report.accuracy, report.ned, report.n_samples
    );
    if let Some(out) = args.out {
        write_atomic(&out, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}

// ------------------------------------------------------------ eval-det --

#[derive(Args)]
struct EvalDetArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_eval_det(args: EvalDetArgs) -> Result<()> {
    let pred = Manifest::load(&args.pred)
        .with_context(|| format!("manifest {}", args.pred.display()))?;
    let gt =
        Manifest::load(&args.gt).with_context(|| format!("manifest {}", args.gt.display()))?;

    let mut image_ids: Vec<&str> = gt.entries().iter().map(|e| e.image.as_str()).collect();
    for entry in pred.entries() {
        if !image_ids.contains(&entry.image.as_str()) {
            image_ids.push(&entry.image);
        }
    }

    let gt_view = select_validation_view(&gt, Task::Detection);
    let mut per_image: Vec<(Vec<ScoredBox>, Vec<BoxXYWH>)> = Vec::new();
    for image_id in image_ids {
        let gts: Vec<BoxXYWH> = gt_view
            .iter()
            .filter(|r| r.image_id == image_id)
            .map(|r| r.bbox)
            .collect();
        let mut dets = Vec::new();
        if let Some(entry) = pred.entries().iter().find(|e| e.image == image_id) {
            for a in &entry.annotations {
                let confidence = a.confidence.with_context(|| {
                    format!("prediction for {image_id} is missing a confidence")
                })?;
                dets.push(ScoredBox {
                    bbox: a.bbox,
                    confidence,
                });
            }
        }
        per_image.push((dets, gts));
    }

    let report = evaluate_detections(&per_image);
    let json = serde_json::to_string(&report)?;
    println!("{json}");
    println!(
        "P {:.3} | R {:.3} | AP50 {:.3} | AP50:95 {:.3} | maxF1 {:.3} @ {:.2}",
        report.precision,
        report.recall,
        report.ap50,
        report.ap50_95,
        report.f1_max,
        report.best_threshold
    );
    if let Some(out) = args.out {
        write_atomic(&out, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}

// -------------------------------------------------------------- decode --

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DecodeMode {
    Ar,
    Nar,
    Refine,
}

#[derive(Args)]
struct DecodeArgs {
    /// Mock recognizer table (JSON).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = DecodeMode::Ar)]
    mode: DecodeMode,
    /// Factorization order for AR mode, 1-based (e.g. `3,2,1`).
    /// Defaults to the identity order.
    #[arg(long)]
    perm: Option<String>,
    /// Number of positions to decode.
    #[arg(long, default_value_t = alpr_core::parseq::DEFAULT_T_MAX)]
    t_max: usize,
    /// Refinement iterations (refine mode runs them after a parallel
    /// first pass).
    #[arg(long, default_value_t = 1)]
    iters: usize,
    /// Emit one JSON line per decode step with its full distribution.
    #[arg(long)]
    trace: bool,
    /// Comma-separated image feature values handed to the model.
    #[arg(long)]
    features: Option<String>,
}

fn cmd_decode(args: DecodeArgs) -> Result<()> {
    let table: MockTable = serde_json::from_str(
        &std::fs::read_to_string(&args.model)
            .with_context(|| format!("model {}", args.model.display()))?,
    )
    .context("parsing mock table")?;
    let vocab = Vocab::new(&table.charset).context("model charset")?;
    let model = make_mock_recognizer(&table)?;
    let x = ImageFeatures(match &args.features {
        Some(csv) => csv
            .split(',')
            .map(|s| s.trim().parse::<f64>().context("parsing --features"))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    });

    let (output, mode_name) = match args.mode {
        DecodeMode::Ar => {
            let perm = match &args.perm {
                Some(text) => {
                    let order: Vec<usize> = text
                        .split(',')
                        .map(|s| {
                            let one_based: usize = s.trim().parse().context("parsing --perm")?;
                            anyhow::ensure!(one_based >= 1, "--perm entries are 1-based");
                            Ok(one_based - 1)
                        })
                        .collect::<Result<_>>()?;
                    Permutation::new(order)?
                }
                None => Permutation::identity(args.t_max),
            };
            anyhow::ensure!(
                perm.len() <= args.t_max,
                "permutation length {} exceeds --t-max {}",
                perm.len(),
                args.t_max
            );
            (decode_ar(&model, &x, &perm, &vocab, args.t_max)?, "ar")
        }
        DecodeMode::Nar => (decode_nar(&model, &x, &vocab, args.t_max)?, "nar"),
        DecodeMode::Refine => {
            let first = decode_nar(&model, &x, &vocab, args.t_max)?;
            let refined = refine_cloze(&model, &x, &first.seq, &vocab, args.iters)?;
            let refined_text = refined.to_text(&vocab);
            if args.trace {
                for step in &first.steps {
                    println!("{}", serde_json::to_string(step)?);
                }
            }
            println!(
                "{}",
                serde_json::json!({"mode": "refine", "text": refined_text, "iters": args.iters})
            );
            return Ok(());
        }
    };

    if args.trace {
        for step in &output.steps {
            println!("{}", serde_json::to_string(step)?);
        }
    }
    println!(
        "{}",
        serde_json::json!({"mode": mode_name, "text": output.seq.to_text(&vocab)})
    );
    Ok(())
}

// --------------------------------------------------------------- sched --

#[derive(Args)]
struct SchedArgs {
    /// Preset config file with total_steps/start_lr/peak_lr/end_lr.
    #[arg(long, conflicts_with_all = ["total_steps", "start_lr", "peak_lr", "end_lr"])]
    preset: Option<PathBuf>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    start_lr: Option<f64>,
    #[arg(long)]
    peak_lr: Option<f64>,
    #[arg(long)]
    end_lr: Option<f64>,
    #[arg(long)]
    peak_fraction: Option<f64>,
    /// CSV output path (`step,lr`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_sched(args: SchedArgs) -> Result<()> {
    let cfg = match &args.preset {
        Some(path) => {
            let kv = KvConfig::load(path)?;
            kv.validate_keys(&[
                "total_steps",
                "start_lr",
                "peak_lr",
                "end_lr",
                "peak_fraction",
                "swa_lr",
                "swa_start_fraction",
            ])?;
            OneCycleConfig::from_kv(&kv)?
        }
        None => OneCycleConfig::with_peak_fraction(
            args.total_steps.context("--total-steps is required")?,
            args.start_lr.context("--start-lr is required")?,
            args.peak_lr.context("--peak-lr is required")?,
            args.end_lr.context("--end-lr is required")?,
            args.peak_fraction
                .unwrap_or(OneCycleConfig::DEFAULT_PEAK_FRACTION),
        )?,
    };

    let mut csv = String::from("step,lr\n");
    for (step, lr) in one_cycle_curve(&cfg)? {
        csv.push_str(&format!("{step},{lr}\n"));
    }
    match args.out {
        Some(path) => write_atomic(&path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

// --------------------------------------------------------------- stats --

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let manifest = Manifest::load(&args.input)
        .with_context(|| format!("manifest {}", args.input.display()))?;
    let stats = manifest_stats(&manifest);
    let json = serde_json::to_string(&stats)?;
    println!("{json}");
    print!("{stats}");
    if let Some(out) = args.out {
        write_atomic(&out, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}
