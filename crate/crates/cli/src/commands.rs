use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ldc::dataio::{load_dataset, Dataset, DatasetId, DatasetPaths};
use ldc::deploy::{hardware_estimate, infer_packed, memory_breakdown, pack_model, robustness_curve, PackedModel};
use ldc::qat::QatConfig;
use ldc::teacher::{export_logits, import_logits, train_teacher, TeacherConfig, TeacherLogits};
use ldc::trainer::{evaluate, first_misclassified, gradient_snapshot, load_model, save_model, train_ldc, RunReport, TrainConfig};
use log::info;
use serde_json::json;

use crate::{
    BenchCmd, Command, DataArgs, ExportCmd, Grid, InferCmd, RobustnessCmd, SnapshotCmd, SweepCmd, TeacherCmd,
    TrainArgs, TrainCmd,
};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(c) => train(c),
        Command::DistillTeacher(c) => distill_teacher(c),
        Command::Export(c) => export(c),
        Command::Infer(c) => infer(c),
        Command::Bench(c) => bench(c),
        Command::Robustness(c) => robustness(c),
        Command::Sweep(c) => sweep(c),
        Command::Snapshot(c) => snapshot(c),
    }
}

fn data_root(explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .or_else(|| std::env::var_os("LDC_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn load(args: &DataArgs) -> Result<(Dataset, Dataset)> {
    let mut paths = DatasetPaths::under_root(args.dataset, &data_root(&args.data_dir));
    if !args.train_files.is_empty() {
        paths.train = args.train_files.clone();
    }
    if !args.test_files.is_empty() {
        paths.test = args.test_files.clone();
    }
    if args.dataset == DatasetId::Custom && (args.train_files.is_empty() || args.test_files.is_empty()) {
        info!("custom dataset without --train-files/--test-files, using {}", paths.train[0].display());
    }
    let (train, test) = load_dataset(args.dataset, &paths, args.levels)
        .with_context(|| format!("loading {}", args.dataset))?;
    info!(
        "{}: {} train / {} test, N={} K={} M={}",
        args.dataset,
        train.len(),
        test.len(),
        train.n_features,
        train.n_classes,
        train.n_levels
    );
    Ok((train, test))
}

fn train_config(a: &TrainArgs, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::with_dim(a.dim);
    if let Some(dv) = a.value_dim {
        cfg.d_v = dv;
    }
    TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        lr0: a.lr,
        clip: a.clip,
        gamma: a.gamma,
        temperature: a.temperature,
        loss: a.loss.into(),
        normalizer: a.norm.into(),
        delta: a.delta,
        alpha_multiplier: a.alpha_multiplier,
        qat: QatConfig {
            momentum: a.qat_momentum,
            threshold: a.qat_threshold,
            start_epoch: a.qat_start_epoch,
        },
        seed,
        label_smoothing: a.label_smoothing,
        eval_every_epoch: !a.final_eval_only,
        ..cfg
    }
}

fn teacher_for(a: &TrainArgs, train: &Dataset) -> Result<Option<TeacherLogits>> {
    let cfg = train_config(a, a.seed);
    cfg.validate()?;
    match (&a.teacher_logits, cfg.loss.needs_teacher()) {
        (Some(p), true) => Ok(Some(
            import_logits(p, Some((train.len(), train.n_classes)))
                .with_context(|| format!("reading teacher logits {}", p.display()))?,
        )),
        (None, true) => bail!(ldc::LdcError::Config(format!("--loss {:?} needs --teacher-logits", a.loss))),
        (Some(_), false) => {
            info!("ignoring --teacher-logits for a cross-entropy run");
            Ok(None)
        }
        (None, false) => Ok(None),
    }
}

fn summary(report: &RunReport) -> serde_json::Value {
    json!({
        "seed": report.config.seed,
        "accuracy": report.final_accuracy,
        "mean_entropy_correct": report.mean_entropy_correct,
        "mean_entropy_wrong": report.mean_entropy_wrong,
        "frozen_fraction": report.epochs.last().map(|e| e.frozen_fraction),
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn train(c: TrainCmd) -> Result<()> {
    let (train, test) = load(&c.data)?;
    let teacher = teacher_for(&c.train, &train)?;
    if c.train.repeats == 0 {
        bail!(ldc::LdcError::Config("--repeats must be at least 1".into()));
    }
    let mut runs = Vec::new();
    for r in 0..c.train.repeats {
        let cfg = train_config(&c.train, c.train.seed + r);
        let dir = if c.train.repeats == 1 { c.out.clone() } else { c.out.join(format!("run_{r}")) };
        let (model, report) = train_ldc(&cfg, &train, &test, teacher.as_ref())?;
        report.write(&dir)?;
        save_model(&model, &dir.join("model.json"))?;
        info!("seed {}: accuracy {:.4}", cfg.seed, report.final_accuracy);
        runs.push(report);
    }
    let accs: Vec<f64> = runs.iter().map(|r| r.final_accuracy).collect();
    let (mean, std) = mean_std(&accs);
    let out = json!({
        "runs": runs.iter().map(summary).collect::<Vec<_>>(),
        "mean_accuracy": mean,
        "std_accuracy": std,
    });
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join("summary.json"), serde_json::to_string_pretty(&out)?)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn distill_teacher(c: TeacherCmd) -> Result<()> {
    let (train, test) = load(&c.data)?;
    if c.members == 0 {
        bail!(ldc::LdcError::Config("--members must be at least 1".into()));
    }
    let mut logits = Vec::new();
    let mut reports = Vec::new();
    for i in 0..c.members {
        let cfg = TeacherConfig {
            epochs: c.epochs,
            lr: c.lr,
            batch_size: c.batch_size,
            seed: c.seed + i,
            ..TeacherConfig::default()
        };
        let (model, report) = train_teacher(&cfg, &train, Some(&test))?;
        info!("teacher seed {}: test accuracy {:?}", cfg.seed, report.test_accuracy);
        logits.push(model.logits(&train)?);
        reports.push(report);
    }
    let combined = if logits.len() == 1 { logits.pop().expect("one member") } else { TeacherLogits::ensemble(&logits)? };
    fs::create_dir_all(&c.out)?;
    let path = c.out.join("teacher_logits.bin");
    export_logits(&combined, &path)?;
    let out = json!({ "logits": path, "members": reports });
    fs::write(c.out.join("teacher_report.json"), serde_json::to_string_pretty(&out)?)?;
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn export(c: ExportCmd) -> Result<()> {
    let model = load_model(&c.model).with_context(|| format!("reading {}", c.model.display()))?;
    let pm = pack_model(&model)?;
    pm.save(&c.out)?;
    let dims = pm.dims();
    let out = json!({
        "file": c.out,
        "bytes": pm.to_bytes().len(),
        "dims": dims,
        "memory": memory_breakdown(dims, pm.has_thresholds()),
        "estimate": hardware_estimate(dims, pm.has_thresholds()),
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn parse_levels(path: &Path) -> Result<Vec<Vec<u16>>> {
    let text = fs::read_to_string(path).map_err(|e| ldc::LdcError::Io { path: path.to_owned(), source: e })?;
    let mut rows = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<u16>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| ldc::LdcError::Format(format!("{}:{}: {e}", path.display(), no + 1)))?;
        rows.push(row);
    }
    Ok(rows)
}

fn infer(c: InferCmd) -> Result<()> {
    let pm = PackedModel::load(&c.model)?;
    for sample in parse_levels(&c.input)? {
        let (label, z) = infer_packed(&pm, &sample)?;
        let z: Vec<String> = z.iter().map(i32::to_string).collect();
        println!("{label} {}", z.join(","));
    }
    Ok(())
}

fn packed_for(model: &Path, data: &Dataset) -> Result<PackedModel> {
    let pm = PackedModel::load(model)?;
    let d = pm.dims();
    if d.n != data.n_features || d.m != data.n_levels || d.k != data.n_classes {
        bail!(ldc::LdcError::Config(format!(
            "model expects N={} M={} K={}, dataset has N={} M={} K={}",
            d.n, d.m, d.k, data.n_features, data.n_levels, data.n_classes
        )));
    }
    Ok(pm)
}

fn bench(c: BenchCmd) -> Result<()> {
    let (_, test) = load(&c.data)?;
    let pm = packed_for(&c.model, &test)?;
    let mut correct = 0usize;
    let start = Instant::now();
    for _ in 0..c.repeats.max(1) {
        correct = 0;
        for i in 0..test.len() {
            if infer_packed(&pm, test.row(i))?.0 == test.labels[i] {
                correct += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let samples = test.len() * c.repeats.max(1);
    let out = json!({
        "samples": samples,
        "seconds": secs,
        "samples_per_second": samples as f64 / secs,
        "accuracy": correct as f64 / test.len().max(1) as f64,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn robustness(c: RobustnessCmd) -> Result<()> {
    let (_, test) = load(&c.data)?;
    let pm = packed_for(&c.model, &test)?;
    let curve = robustness_curve(&pm, &test, &c.rates, c.seeds, c.seed)?;
    let mut csv = String::from("rate,mean_accuracy,min_accuracy,max_accuracy\n");
    for p in &curve {
        let lo = p.accuracies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        writeln!(csv, "{},{},{},{}", p.rate, p.mean_accuracy, lo, hi)?;
    }
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join("robustness.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn sweep(c: SweepCmd) -> Result<()> {
    let (train, test) = load(&c.data)?;
    let teacher = teacher_for(&c.train, &train)?;
    let mut csv = String::from("grid,value,accuracy,mean_entropy_correct,mean_entropy_wrong\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for &v in &c.values {
        let mut cfg = train_config(&c.train, c.train.seed);
        let tag = match c.grid {
            Grid::Gamma => {
                cfg.gamma = v;
                "gamma"
            }
            Grid::Temperature => {
                cfg.temperature = v;
                "temperature"
            }
            Grid::BatchSize => {
                if v.fract() != 0.0 || v < 2.0 {
                    bail!(ldc::LdcError::Config(format!("batch size {v} is not an integer >= 2")));
                }
                cfg.batch_size = v as usize;
                "batch_size"
            }
            Grid::Smoothing => {
                cfg.label_smoothing = v;
                "smoothing"
            }
        };
        let (_, report) = train_ldc(&cfg, &train, &test, teacher.as_ref())?;
        report.write(&c.out.join(format!("{tag}_{v}")))?;
        info!("{tag}={v}: accuracy {:.4}", report.final_accuracy);
        writeln!(
            csv,
            "{tag},{v},{},{},{}",
            report.final_accuracy,
            opt(report.mean_entropy_correct),
            opt(report.mean_entropy_wrong)
        )?;
    }
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn snapshot(c: SnapshotCmd) -> Result<()> {
    let model = load_model(&c.model).with_context(|| format!("reading {}", c.model.display()))?;
    let (_, test) = load(&c.data)?;
    let idx = match c.sample {
        Some(i) if i < test.len() => i,
        Some(i) => bail!(ldc::LdcError::Config(format!("sample {i} outside the {} test samples", test.len()))),
        None => first_misclassified(&model, &test)?.context("every test sample is classified correctly")?,
    };
    let snap = gradient_snapshot(&model, test.row(idx), test.labels[idx], c.delta, c.bins, false)?;
    snap.write(&c.out, "snapshot")?;
    if c.with_zero_upstream {
        gradient_snapshot(&model, test.row(idx), test.labels[idx], c.delta, c.bins, true)?.write(&c.out, "zero_upstream")?;
    }
    let eval = evaluate(&model, &test)?;
    let out = json!({
        "sample": idx,
        "label": snap.label,
        "predicted": snap.predicted,
        "zero_grad_fraction": snap.zero_grad_fraction,
        "pre_sign_variance": snap.pre_sign_variance,
        "test_accuracy": eval.accuracy,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
