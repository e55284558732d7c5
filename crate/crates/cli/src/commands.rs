use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use gqla_core::bp::GradientMode;
use gqla_core::channel::{estimate_bler, BlerEstimate, ChannelSpec, EvalConfig, EvalMode};
use gqla_core::code::{CodeDimensions, DensitySpec, ParityCheckMatrix};
use gqla_core::graph::{AveragedHistogram, GraphAnalysis};
use gqla_core::io::{from_json, to_json, CodeMetadata};
use gqla_core::optim::{OptimizerKind, OptimizerSpec};
use gqla_core::search::{
    beat_probability, build_cdf, max_ebno, mean_p_beat, parse_records, random_search_campaign_with, rank_densities,
    CampaignConfig, ComparisonResult, DensitySummary, RandomSearchRecord,
};
use gqla_core::train::{train as run_training, TrainingConfig};

use crate::config::KeyValues;
use crate::manifest::{beside, write_atomic, RunManifest};
use crate::{AnalyzeArgs, CdfStatsArgs, CompareArgs, EvalArgs, RandomSearchArgs, TrainArgs, Usage};

/// Parses `start:stop:step` (inclusive) or a single number.
pub fn parse_ebno_range(s: &str) -> Result<Vec<f64>> {
    let bad = || Usage(format!("invalid Eb/N0 range `{s}`: expected start:stop:step or a number"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<std::result::Result<_, _>>()?;
    if parts.iter().any(|x| !x.is_finite()) {
        return Err(bad().into());
    }
    match parts[..] {
        [x] => Ok(vec![x]),
        [start, stop, step] => {
            if !(step > 0.0) || stop < start {
                return Err(Usage(format!("invalid Eb/N0 range `{s}`: need step > 0 and stop >= start")).into());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            // snap to the step grid so 0.1 steps print as 0.3, not 0.30000000000000004
            Ok((0..count)
                .map(|i| {
                    let x = start + i as f64 * step;
                    (x * 1e9).round() / 1e9
                })
                .collect())
        }
        _ => Err(bad().into()),
    }
}

fn usage(e: gqla_core::error::Error) -> anyhow::Error {
    Usage(e.to_string()).into()
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_code(path: &Path) -> Result<(ParityCheckMatrix, CodeMetadata)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_records(paths: &[PathBuf]) -> Result<Vec<RandomSearchRecord>> {
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        out.extend(parse_records(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    Ok(out)
}

pub const TRAIN_REQUIRED: &[&str] = &["n", "k", "alpha", "n_errors", "T", "init_density", "val_ebno"];
pub const TRAIN_OPTIONAL: &[&str] = &[
    "optimizer",
    "batch_size",
    "max_epochs",
    "steps_per_epoch",
    "train_iterations",
    "gradient_mode",
    "val_iterations",
    "val_rel",
    "val_max_blocks",
    "patience",
    "seed",
    "learning_rate",
    "init_magnitude",
];

fn parse_gradient_mode(s: &str) -> Result<GradientMode> {
    match s {
        "exact" => Ok(GradientMode::Exact),
        "pass_through" => Ok(GradientMode::PassThrough),
        _ => Err(Usage(format!("invalid value `{s}` for key `gradient_mode`: expected exact or pass_through")).into()),
    }
}

/// Builds a validated training configuration from keys.
pub fn training_config(kv: &KeyValues) -> Result<TrainingConfig> {
    let known: Vec<&str> = TRAIN_REQUIRED.iter().chain(TRAIN_OPTIONAL).copied().collect();
    kv.reject_unknown(&known)?;
    kv.require(TRAIN_REQUIRED)?;
    let dims = CodeDimensions::new(kv.req("n")?, kv.req("k")?).map_err(usage)?;
    let kind: OptimizerKind = match kv.entries().get("optimizer") {
        Some(s) => s.parse().map_err(usage)?,
        None => OptimizerKind::MbGqlaUpdateMatrix,
    };
    let mut spec = OptimizerSpec::new(kind, kv.req("T")?);
    spec.learning_rate = kv.get_or("learning_rate", spec.learning_rate)?;
    spec.init_magnitude = kv.get_or("init_magnitude", spec.init_magnitude)?;
    let mut cfg = TrainingConfig::new(dims, kv.req("alpha")?, kv.req("n_errors")?, spec);
    cfg.init_density = kv.req("init_density")?;
    cfg.val_ebno_db = kv.req("val_ebno")?;
    cfg.batch_size = kv.get_or("batch_size", cfg.batch_size)?;
    cfg.max_epochs = kv.get_or("max_epochs", cfg.max_epochs)?;
    cfg.steps_per_epoch = kv.get_or("steps_per_epoch", cfg.steps_per_epoch)?;
    cfg.train_iterations = kv.get_or("train_iterations", cfg.train_iterations)?;
    if let Some(m) = kv.entries().get("gradient_mode") {
        cfg.gradient_mode = parse_gradient_mode(m)?;
    }
    cfg.val_iterations = kv.get_or("val_iterations", cfg.val_iterations)?;
    cfg.val_target_rel = kv.get_or("val_rel", cfg.val_target_rel)?;
    cfg.val_max_blocks = kv.get_or("val_max_blocks", cfg.val_max_blocks)?;
    cfg.patience = kv.get_or("patience", cfg.patience)?;
    cfg.seed = kv.get_or("seed", cfg.seed)?;
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

pub fn train(args: &TrainArgs, workers: Option<usize>) -> Result<()> {
    let mut kv = match &args.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    kv.set_all(&args.overrides)?;
    if let Some(s) = args.seed {
        kv.insert("seed", s);
    }
    let cfg = training_config(&kv)?;

    let code_path = args.out.join("code.json");
    let log_path = args.out.join("training_log.csv");
    let manifest_path = args.out.join("manifest.json");
    let mut manifest = RunManifest::start("train", serde_json::to_value(&cfg)?, Some(cfg.seed), workers);
    manifest.outputs = vec![code_path.clone(), log_path.clone()];
    manifest.write(&manifest_path)?;

    let report = run_training(&cfg)?;
    let meta = CodeMetadata {
        alpha: Some(cfg.alpha),
        n_errors: Some(cfg.n_errors),
        threshold_t: Some(cfg.optimizer.threshold_t),
        init_density: Some(cfg.init_density),
        batch_size: Some(cfg.batch_size),
        seed: Some(cfg.seed),
        update_count: Some(report.update_count),
        optimizer: Some(cfg.optimizer.kind.name().to_string()),
    };
    write_atomic(&code_path, to_json(&report.code, &meta).as_bytes())?;
    write_atomic(&log_path, report.log_csv().as_bytes())?;
    manifest.finish(&manifest_path)?;

    let best = report.best_validation();
    eprintln!(
        "epochs {}, best epoch {}, validation BLER {}, updates {} ({} effective), {:.1}s",
        report.history.len(),
        report.best_epoch.map_or("-".into(), |e| e.to_string()),
        best.map_or("-".into(), |b| format!("{:e}", b.p_tilde)),
        report.update_count,
        report.effective_updates,
        report.wall_time.as_secs_f64()
    );
    Ok(())
}

fn check_eval_args(iters: usize, rel: f64, max_blocks: Option<u64>) -> Result<()> {
    if iters == 0 {
        bail!(Usage("--iters must be >= 1".into()));
    }
    if !(rel > 0.0 && rel.is_finite()) {
        bail!(Usage("--rel must be positive".into()));
    }
    if max_blocks == Some(0) {
        bail!(Usage("--max-blocks must be >= 1".into()));
    }
    Ok(())
}

fn eval_config(iters: usize, rel: f64, max_blocks: Option<u64>, seed: u64) -> EvalConfig {
    let mut ec = EvalConfig::new(iters, rel, seed);
    if let Some(m) = max_blocks {
        ec = ec.with_max_blocks(m);
    }
    ec
}

pub fn eval(args: &EvalArgs, workers: Option<usize>) -> Result<()> {
    let points = parse_ebno_range(&args.ebno)?;
    check_eval_args(args.iters, args.rel, args.max_blocks)?;
    let (h, _) = load_code(&args.code)?;
    let mode = if args.all_zero { EvalMode::AllZero } else { EvalMode::FullEncoder };
    let ec = eval_config(args.iters, args.rel, args.max_blocks, args.seed).with_mode(mode);

    let mut manifest = RunManifest::start(
        "eval",
        json!({ "code": args.code, "ebno_db": points, "eval": ec }),
        Some(args.seed),
        workers,
    );
    let manifest_path = args.out.as_deref().map(beside);
    if let (Some(mp), Some(out)) = (&manifest_path, &args.out) {
        manifest.outputs = vec![out.clone()];
        manifest.write(mp)?;
    }

    let mut csv = String::from(BlerEstimate::CSV_HEADER);
    csv.push('\n');
    for &e in &points {
        let chan = ChannelSpec::for_code(e, h.dims()).map_err(usage)?;
        let est = estimate_bler(&h, &chan, &ec)?;
        csv.push_str(&est.csv_row(e));
        csv.push('\n');
    }
    write_output(args.out.as_deref(), &csv)?;
    if let Some(mp) = &manifest_path {
        manifest.finish(mp)?;
    }
    Ok(())
}

pub fn random_search(args: &RandomSearchArgs, workers: Option<usize>) -> Result<()> {
    let points = parse_ebno_range(&args.ebno)?;
    check_eval_args(args.iters, args.rel, args.max_blocks)?;
    let dims = CodeDimensions::new(args.n, args.k).map_err(usage)?;
    let density = DensitySpec::new(args.density).map_err(usage)?;
    if args.count == 0 {
        bail!(Usage("--count must be >= 1".into()));
    }

    let mut existing = 0u64;
    if args.out.exists() {
        if !args.resume {
            bail!(Usage(format!(
                "{} exists; pass --resume to extend it",
                args.out.display()
            )));
        }
        let recs = load_records(std::slice::from_ref(&args.out))?;
        for (i, r) in recs.iter().enumerate() {
            if (r.n, r.k) != (args.n, args.k) || r.density != args.density || r.index != i as u64 {
                bail!(
                    "{} record {} does not continue this campaign",
                    args.out.display(),
                    i + 1
                );
            }
        }
        existing = recs.len() as u64;
    }

    let mut cfg = CampaignConfig::new(args.rel, args.seed);
    cfg.iterations = args.iters;
    if let Some(m) = args.max_blocks {
        cfg.max_blocks = m;
    }
    cfg.start_index = existing;

    let manifest_path = beside(&args.out);
    let mut manifest = RunManifest::start(
        "random-search",
        json!({ "n": args.n, "k": args.k, "density": args.density, "count": args.count,
                "ebno_db": points, "campaign": cfg }),
        Some(args.seed),
        workers,
    );
    manifest.outputs = vec![args.out.clone()];
    manifest.write(&manifest_path)?;

    if existing < args.count {
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&args.out)
            .with_context(|| format!("opening {}", args.out.display()))?;
        random_search_campaign_with(dims, density, args.count - existing, &points, &cfg, |r| {
            writeln!(file, "{}", r.to_json_line())
                .and_then(|_| file.flush())
                .map_err(gqla_core::error::Error::Io)
        })?;
    }
    manifest.finish(&manifest_path)?;
    Ok(())
}

type Family = (usize, usize, u64);

fn group_records(records: Vec<RandomSearchRecord>) -> BTreeMap<Family, Vec<RandomSearchRecord>> {
    let mut groups: BTreeMap<Family, Vec<RandomSearchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.n, r.k, r.density.to_bits())).or_default().push(r);
    }
    groups
}

pub fn cdf_stats(args: &CdfStatsArgs) -> Result<()> {
    let records = load_records(&args.records)?;
    if records.is_empty() {
        bail!("no records in input");
    }
    let ebno = match args.ebno {
        Some(e) => e,
        None => max_ebno(&records).context("records carry no BLER points")?,
    };
    let groups = group_records(records);
    let shapes: std::collections::BTreeSet<(usize, usize)> = groups.keys().map(|&(n, k, _)| (n, k)).collect();
    if shapes.len() > 1 {
        bail!(Usage(format!("records mix code shapes {shapes:?}; pass one shape at a time")));
    }

    let mut summaries = Vec::new();
    let mut table = String::from(DensitySummary::CSV_HEADER);
    table.push('\n');
    let mut points = String::from("density,bler,cdf\n");
    for recs in groups.values() {
        let cdf = build_cdf(recs, ebno).with_context(|| format!("density {}", recs[0].density))?;
        for &x in cdf.samples() {
            let _ = writeln!(points, "{},{:e},{:e}", cdf.density, x, cdf.cdf(x));
        }
        let s = DensitySummary::of(&cdf);
        table.push_str(&s.csv_row());
        table.push('\n');
        summaries.push(s);
    }
    let ranking = rank_densities(&summaries)?.csv();

    match &args.out {
        Some(p) => write_atomic(p, table.as_bytes())?,
        None if args.ranking.is_none() => write_output(None, &format!("{table}\n{ranking}"))?,
        None => write_output(None, &table)?,
    }
    if let Some(p) = &args.ranking {
        write_atomic(p, ranking.as_bytes())?;
    }
    if let Some(p) = &args.cdf {
        write_atomic(p, points.as_bytes())?;
    }
    Ok(())
}

pub fn compare(args: &CompareArgs, workers: Option<usize>) -> Result<()> {
    check_eval_args(args.iters, args.rel, args.max_blocks)?;
    if args.random.is_empty() {
        bail!(Usage("--random needs at least one records file".into()));
    }
    let mut groups = group_records(load_records(&args.random)?);
    let family = match args.density {
        Some(d) => groups.keys().find(|f| f.2 == d.to_bits()).copied(),
        None if groups.len() == 1 => groups.keys().next().copied(),
        None => bail!(Usage(format!(
            "records hold {} families; choose one with --density",
            groups.len()
        ))),
    }
    .context("no records match the requested density")?;
    let cdf = build_cdf(&groups.remove(&family).unwrap_or_default(), args.ebno)?;

    let manifest_path = args.out.as_deref().map(beside);
    let mut manifest = RunManifest::start(
        "compare",
        json!({ "codes": args.codes, "random": args.random, "density": f64::from_bits(family.2),
                "ebno_db": args.ebno, "iters": args.iters, "rel": args.rel, "max_blocks": args.max_blocks,
                "updates": args.updates }),
        Some(args.seed),
        workers,
    );
    if let (Some(mp), Some(out)) = (&manifest_path, &args.out) {
        manifest.outputs = vec![out.clone()];
        manifest.write(mp)?;
    }

    let ec = eval_config(args.iters, args.rel, args.max_blocks, args.seed);
    let mut results: Vec<ComparisonResult> = Vec::new();
    let mut csv = String::from(ComparisonResult::CSV_HEADER);
    csv.push('\n');
    for path in &args.codes {
        let (h, meta) = load_code(path)?;
        if (h.dims().n, h.dims().k) != (family.0, family.1) {
            bail!(
                "{} is ({},{}) but the records are ({},{})",
                path.display(),
                h.dims().n,
                h.dims().k,
                family.0,
                family.1
            );
        }
        let updates = meta
            .update_count
            .or(args.updates)
            .with_context(|| format!("{} has no update count; pass --updates", path.display()))?;
        let est = estimate_bler(&h, &ChannelSpec::for_code(args.ebno, h.dims()).map_err(usage)?, &ec)?;
        let r = beat_probability(&cdf, est.p_tilde, updates).map_err(usage)?;
        let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into());
        csv.push_str(&r.csv_row(&label));
        csv.push('\n');
        results.push(r);
    }
    write_output(args.out.as_deref(), &csv)?;
    if let Some(m) = mean_p_beat(&results) {
        eprintln!("mean p_beat {m:e} over {} codes, {} random samples", results.len(), cdf.len());
    }
    if let Some(mp) = &manifest_path {
        manifest.finish(mp)?;
    }
    Ok(())
}

fn mean_map(maps: &[BTreeMap<usize, usize>]) -> BTreeMap<usize, f64> {
    let mut out: BTreeMap<usize, f64> = BTreeMap::new();
    for m in maps {
        for (&k, &v) in m {
            *out.entry(k).or_default() += v as f64;
        }
    }
    out.values_mut().for_each(|v| *v /= maps.len() as f64);
    out
}

fn json_map(m: &BTreeMap<usize, f64>, none: Option<f64>) -> String {
    let mut parts: Vec<String> = m.iter().map(|(k, v)| format!("\"{k}\":{v}")).collect();
    if let Some(n) = none {
        parts.push(format!("\"none\":{n}"));
    }
    format!("{{{}}}", parts.join(","))
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let mut codes = Vec::new();
    for p in &args.inputs {
        if p.extension().is_some_and(|e| e == "jsonl") {
            for r in load_records(std::slice::from_ref(p))? {
                codes.push(r.code()?);
            }
        } else {
            codes.push(load_code(p)?.0);
        }
    }
    let analyses: Vec<GraphAnalysis> = codes.iter().map(GraphAnalysis::of).collect();
    let text = if let [single] = &analyses[..] {
        single.to_json()
    } else {
        let vn = AveragedHistogram::average(analyses.iter().map(|a| &a.vn_girth));
        let cn = AveragedHistogram::average(analyses.iter().map(|a| &a.cn_girth));
        let vd: Vec<_> = analyses.iter().map(|a| a.degrees.variable.clone()).collect();
        let cd: Vec<_> = analyses.iter().map(|a| a.degrees.check.clone()).collect();
        format!(
            "{{\"codes\":{},\"vn_girth\":{},\"cn_girth\":{},\"vn_degree\":{},\"cn_degree\":{}}}",
            analyses.len(),
            json_map(&vn.mean_counts, Some(vn.mean_no_cycle)),
            json_map(&cn.mean_counts, Some(cn.mean_no_cycle)),
            json_map(&mean_map(&vd), None),
            json_map(&mean_map(&cd), None)
        )
    };
    write_output(args.out.as_deref(), &(text + "\n"))
}
