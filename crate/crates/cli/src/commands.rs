//! The five subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hrrp_core::analysis::{lrp_meters, pearson, tlop};
use hrrp_core::dataset::{generate_dataset, read_dataset, write_dataset, DatasetRecord, Split};
use hrrp_core::metrics::{evaluate_set, GeneratedSample, Reference, ReferenceSet};
use hrrp_core::rng::derive_seed;
use hrrp_core::training::{Model, ModelKind, StepLoss};
use hrrp_core::{ConditionVector, Error as CoreError};

use crate::config::RunConfig;
use crate::generated::{load_profile_set, write_manifest, ManifestEntry, ManifestHeader, RejectedRow};
use crate::generated::{MANIFEST_FORMAT, MANIFEST_VERSION, RECORDS_NAME};
use crate::{split_name, AnalyzeArgs, Cli, Command, EvaluateArgs, GenerateArgs, TrainArgs};

pub const CONFIG_FILE: &str = "config.txt";
pub const VERSION_FILE: &str = "VERSION";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
/// Profiles sampled per forward pass during generation.
const SAMPLE_CHUNK: usize = 64;

pub fn version_string() -> String {
    format!("hrrp {}", env!("CARGO_PKG_VERSION"))
}

pub fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let out = cli.out_dir.as_path();
    prepare_out_dir(out, cfg)?;
    match &cli.command {
        Command::Simulate => simulate(cfg, out),
        Command::Train(a) => train(a, cfg, out),
        Command::Generate(a) => generate(a, cfg, out),
        Command::Evaluate(a) => evaluate(a, cfg, out),
        Command::Analyze(a) => analyze(a, cfg, out),
    }
}

/// Create the output directory and record the resolved config and tool version.
pub fn prepare_out_dir(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text())?;
    fs::write(out.join(VERSION_FILE), version_string() + "\n")?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

struct SnrSummary {
    n: usize,
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn snr_summary(records: &[&DatasetRecord]) -> Option<SnrSummary> {
    let v: Vec<f64> = records.iter().map(|r| r.snr_db).filter(|s| s.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Some(SnrSummary {
        n: v.len(),
        mean,
        std: var.sqrt(),
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let ds = generate_dataset(&cfg.dataset, cfg.seed, &cfg.lrp).context("simulation failed")?;
    let mut summary = String::from("split,n_ships,n_records,snr_mean_db,snr_std_db,snr_min_db,snr_max_db\n");
    println!("{:<6} {:>6} {:>8}  snr (dB)", "split", "ships", "records");
    for split in [Split::Train, Split::Val, Split::Test] {
        let name = split_name(split);
        let recs = ds.split(split)?;
        let owned: Vec<DatasetRecord> = recs.iter().map(|r| (*r).clone()).collect();
        write_dataset(&owned, out, name).with_context(|| format!("cannot write the {name} split"))?;
        let n_ships = ds.manifest.ids(split).len();
        match snr_summary(&recs) {
            Some(s) => {
                println!(
                    "{name:<6} {n_ships:>6} {:>8}  mean {:.2} std {:.2} min {:.2} max {:.2}",
                    recs.len(),
                    s.mean,
                    s.std,
                    s.min,
                    s.max
                );
                writeln!(summary, "{name},{n_ships},{},{:.6},{:.6},{:.6},{:.6}", recs.len(), s.mean, s.std, s.min, s.max)?;
                debug_assert_eq!(s.n, recs.len());
            }
            None => {
                println!("{name:<6} {n_ships:>6} {:>8}  noiseless", recs.len());
                writeln!(summary, "{name},{n_ships},{},,,,", recs.len())?;
            }
        }
    }
    ds.manifest.write(&out.join("split.json"))?;
    write_text(&out.join("summary.csv"), &summary)?;
    println!("{} records written to {}", ds.records.len(), out.display());
    Ok(())
}

fn build_model(cfg: &RunConfig) -> Result<Model> {
    let init_seed = derive_seed(cfg.seed, &[0x1417]);
    Ok(match cfg.model {
        ModelKind::Ddpm => Model::new_ddpm(cfg.ddpm_config(), init_seed)?,
        ModelKind::Gan => Model::new_gan(cfg.gan_config(), init_seed)?,
    })
}

/// Train on `records` as `train` does, without touching the file system.
pub fn train_records(cfg: &RunConfig, records: &[&DatasetRecord], mut on_step: impl FnMut(&StepLoss)) -> Result<Model> {
    let mut model = build_model(cfg)?;
    model.train(records, cfg.steps, derive_seed(cfg.seed, &[0x7a1]), &mut on_step)?;
    Ok(model)
}

pub fn train(args: &TrainArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let records = read_dataset(&args.data, "train")
        .with_context(|| format!("no training dataset in {} (run `hrrp simulate` first)", args.data.display()))?;
    let refs: Vec<&DatasetRecord> = records.iter().collect();
    let loss_path = out.join(LOSS_FILE);
    let mut loss_csv = BufWriter::new(fs::File::create(&loss_path).with_context(|| format!("cannot create {}", loss_path.display()))?);
    writeln!(loss_csv, "{}", StepLoss::csv_header(cfg.model))?;
    let report_every = (cfg.steps / 10).max(1);
    let mut tail = Vec::new();
    let mut io_err = None;
    eprintln!(
        "training {} ({}) for {} steps on {} records",
        cfg.model,
        cfg.conditioning,
        cfg.steps,
        records.len()
    );
    let model = train_records(cfg, &refs, |loss| {
        if let Err(e) = writeln!(loss_csv, "{}", loss.csv_row()) {
            io_err.get_or_insert(e);
        }
        tail.push(loss.headline());
        let step = tail.len() as u64;
        if step % report_every == 0 || step == cfg.steps {
            eprintln!("step {step}: loss {:.5}", loss.headline());
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).context("cannot write the loss trace");
    }
    loss_csv.flush()?;
    let keep = tail.len().saturating_sub(100);
    model.save(&out.join(CHECKPOINT_FILE), cfg.seed, tail.split_off(keep))?;
    if let Some(g) = model.gan() {
        eprintln!("critic max |w| = {:.6} (bound {})", g.critic_max_abs(), g.config.train.clip_bound);
    }
    println!("checkpoint written to {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

/// One condition row before validation.
struct ConditionRow {
    row: usize,
    ship_id: String,
    parsed: std::result::Result<ConditionVector, String>,
}

fn validate_condition(length: f64, width: f64, aspect: f64) -> std::result::Result<ConditionVector, String> {
    if !(length.is_finite() && width.is_finite() && aspect.is_finite()) {
        return Err("non-finite value".into());
    }
    if length < width {
        return Err(format!("length {length} is smaller than width {width}"));
    }
    ConditionVector::new(length, width, aspect).map_err(|e| e.to_string())
}

fn read_condition_csv(path: &Path) -> Result<Vec<ConditionRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(il), Some(iw), Some(ia)) = (col("length"), col("width"), col("aspect_angle")) else {
        bail!("{}: header must name length, width and aspect_angle", path.display());
    };
    let is = col("ship_id");
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: unreadable row {row}", path.display()))?;
        let num = |i: usize| -> std::result::Result<f64, String> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>().map_err(|_| format!("cannot parse {s:?} as a number"))
        };
        let parsed = (|| validate_condition(num(il)?, num(iw)?, num(ia)?))();
        let ship_id = is.and_then(|i| rec.get(i)).unwrap_or("").to_string();
        rows.push(ConditionRow { row, ship_id, parsed });
    }
    Ok(rows)
}

/// Evenly spaced positions covering `0..n`, at most `limit` of them.
pub fn spaced_indices(n: usize, limit: Option<usize>) -> Vec<usize> {
    match limit {
        Some(k) if k < n => (0..k).map(|i| i * n / k).collect(),
        _ => (0..n).collect(),
    }
}

pub fn generate(args: &GenerateArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let (model, _) = Model::load(&args.checkpoint).with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let mut delta_r = cfg.dataset.acquisition.grid.delta_r;
    let rows = match (&args.conditions, &args.dataset) {
        (Some(path), _) => read_condition_csv(path)?,
        (None, Some(dir)) => {
            let name = split_name(args.split);
            let recs = read_dataset(dir, name).with_context(|| format!("cannot read the {name} split of {}", dir.display()))?;
            let first = recs.first().context("empty dataset")?;
            if first.profile.n_bins() != model.n_bins() {
                bail!(
                    "dataset profiles have {} bins but the checkpoint expects {}",
                    first.profile.n_bins(),
                    model.n_bins()
                );
            }
            delta_r = first.profile.delta_r();
            spaced_indices(recs.len(), args.limit)
                .into_iter()
                .map(|i| {
                    let r = &recs[i];
                    ConditionRow {
                        row: i,
                        ship_id: r.ship_id.clone(),
                        parsed: validate_condition(r.length, r.width, r.aspect_angle),
                    }
                })
                .collect()
        }
        (None, None) => bail!("either --conditions or --dataset is required"),
    };
    let mut rejected = Vec::new();
    let mut accepted = Vec::new();
    for r in rows {
        match r.parsed {
            Ok(c) => accepted.push((r.row, r.ship_id, c)),
            Err(reason) => {
                eprintln!("warning: row {} rejected: {reason}", r.row);
                rejected.push(RejectedRow { row: r.row, reason });
            }
        }
    }
    if accepted.is_empty() {
        bail!("no valid condition rows");
    }
    let requests: Vec<(ConditionVector, u64)> = accepted
        .iter()
        .map(|(row, _, c)| (*c, derive_seed(cfg.seed, &[*row as u64])))
        .collect();
    let profiles = model.sample_chunked(&requests, delta_r, SAMPLE_CHUNK)?;
    let mut records = Vec::with_capacity(profiles.len());
    let mut entries = Vec::with_capacity(profiles.len());
    for (index, (((row, ship_id, c), (_, seed)), profile)) in accepted.iter().zip(&requests).zip(profiles).enumerate() {
        entries.push(ManifestEntry {
            index,
            row: *row,
            ship_id: ship_id.clone(),
            length: c.length,
            width: c.width,
            aspect_angle: c.aspect_angle,
            seed: *seed,
        });
        records.push(DatasetRecord {
            ship_id: ship_id.clone(),
            length: c.length,
            width: c.width,
            aspect_angle: c.aspect_angle,
            snr_db: f64::NAN,
            seed: *seed,
            profile,
        });
    }
    write_dataset(&records, out, RECORDS_NAME)?;
    let header = ManifestHeader {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        model: model.kind().to_string(),
        conditioning: model.conditioning().to_string(),
        checkpoint: args.checkpoint.display().to_string(),
        seed: cfg.seed,
        n_profiles: entries.len(),
        records: RECORDS_NAME.into(),
        rejected: rejected.clone(),
    };
    let path = write_manifest(out, &header, &entries)?;
    println!(
        "{} profiles generated, {} rows rejected; manifest {}",
        entries.len(),
        rejected.len(),
        path.display()
    );
    Ok(())
}

/// Real profiles of `split` in `dir` as an evaluation pool.
pub fn reference_set(dir: &Path, split: Split, cfg: &RunConfig) -> Result<ReferenceSet> {
    let name = split_name(split);
    let real = read_dataset(dir, name).with_context(|| format!("cannot read the {name} split of {}", dir.display()))?;
    let mut skipped = 0usize;
    let refs: Vec<Reference> = real
        .into_iter()
        .filter_map(|r| {
            let c = r.condition();
            Reference::new(r.ship_id, c, r.profile, &cfg.lrp)
                .map_err(|_| skipped += 1)
                .ok()
        })
        .collect();
    if skipped > 0 {
        eprintln!("warning: {skipped} real profiles without a detectable target left out of the pool");
    }
    Ok(ReferenceSet::new(refs))
}

pub fn evaluate(args: &EvaluateArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let pool = reference_set(&args.real, args.split, cfg)?;
    if pool.is_empty() {
        bail!("the real reference pool is empty");
    }
    let mut reports = Vec::new();
    for path in &args.generated {
        let set = load_profile_set(path)?;
        let samples: Vec<GeneratedSample> = set
            .records
            .into_iter()
            .map(|r| GeneratedSample {
                ship_id: r.ship_id.clone(),
                condition: r.condition(),
                profile: r.profile,
            })
            .collect();
        let mut report = evaluate_set(&samples, &pool, cfg.eval_delta, &cfg.lrp)
            .with_context(|| format!("evaluating {}", path.display()))?;
        report.model = set.model;
        report.conditioning = set.conditioning;
        report.reference_pool = format!("{} split of {}", split_name(args.split), args.real.display());
        if report.n_skipped_empty_neighborhood > 0 {
            eprintln!(
                "warning: {}: {} of {} samples had no real profile within {} deg",
                path.display(),
                report.n_skipped_empty_neighborhood,
                samples.len(),
                cfg.eval_delta
            );
        }
        reports.push(report);
    }
    let mut csv_text = String::from(hrrp_core::metrics::EvalReport::CSV_HEADER);
    csv_text.push('\n');
    println!("{:<6} {:<12} {:>9} {:>9} {:>7} {:>7} {:>7}", "model", "conditioning", "psnr", "mse_f", "cos_f", "n", "skipped");
    for r in &reports {
        csv_text.push_str(&r.csv_row());
        csv_text.push('\n');
        println!(
            "{:<6} {:<12} {:>9.3} {:>9.4} {:>7.4} {:>7} {:>7}",
            r.model, r.conditioning, r.psnr_db, r.mse_f, r.cos_f, r.n_evaluated, r.n_skipped_empty_neighborhood
        );
    }
    write_text(&out.join("eval.csv"), &csv_text)?;
    write_text(&out.join("eval.json"), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    Ok(())
}

/// One ship's LRP/TLOP curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ShipCurve {
    pub ship_id: String,
    /// `(aspect_angle, lrp_m, tlop_m)` sorted by aspect.
    pub points: Vec<(f64, f64, f64)>,
    pub n_skipped: usize,
    pub pearson_r: Option<f64>,
}

/// Group records by ship and measure LRP against TLOP.
pub fn lrp_curves(records: &[DatasetRecord], cfg: &RunConfig) -> Result<Vec<ShipCurve>> {
    let mut by_ship: BTreeMap<&str, Vec<&DatasetRecord>> = BTreeMap::new();
    for r in records {
        by_ship.entry(r.ship_id.as_str()).or_default().push(r);
    }
    let mut curves = Vec::new();
    for (ship, recs) in by_ship {
        let mut points = Vec::with_capacity(recs.len());
        let mut n_skipped = 0;
        for r in recs {
            match lrp_meters(&r.profile, &cfg.lrp) {
                Ok(l) => points.push((r.aspect_angle, l, tlop(r.length, r.width, r.aspect_angle))),
                Err(CoreError::NoTargetDetected) => n_skipped += 1,
                Err(e) => return Err(e.into()),
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let l: Vec<f64> = points.iter().map(|p| p.1).collect();
        let t: Vec<f64> = points.iter().map(|p| p.2).collect();
        let pearson_r = pearson(&l, &t).ok().filter(|r| r.is_finite());
        curves.push(ShipCurve {
            ship_id: ship.to_string(),
            points,
            n_skipped,
            pearson_r,
        });
    }
    Ok(curves)
}

pub fn curve_csv(c: &ShipCurve) -> String {
    let mut s = String::from("aspect_angle,lrp_m,tlop_m\n");
    for (a, l, t) in &c.points {
        writeln!(s, "{a:.6},{l:.6},{t:.6}").unwrap();
    }
    match c.pearson_r {
        Some(r) => writeln!(s, "# pearson_r,{r:.6}").unwrap(),
        None => s.push_str("# pearson_r,nan\n"),
    }
    s
}

pub fn analysis_dir(out: &Path) -> PathBuf {
    out.join("analyze")
}

pub fn analyze(args: &AnalyzeArgs, cfg: &RunConfig, out: &Path) -> Result<()> {
    let set = load_profile_set(&args.input)?;
    let curves = lrp_curves(&set.records, cfg)?;
    let dir = analysis_dir(out);
    fs::create_dir_all(&dir)?;
    let mut summary = String::from("ship_id,n,skipped,pearson_r\n");
    for c in &curves {
        if c.n_skipped > 0 {
            eprintln!("warning: ship {}: {} profiles without a detectable target skipped", c.ship_id, c.n_skipped);
        }
        if c.points.is_empty() {
            eprintln!("warning: ship {} has no detectable target; no curve written", c.ship_id);
            continue;
        }
        write_text(&dir.join(format!("lrp_{}.csv", c.ship_id)), &curve_csv(c))?;
        let r = c.pearson_r.map_or("nan".to_string(), |r| format!("{r:.6}"));
        writeln!(summary, "{},{},{},{r}", c.ship_id, c.points.len(), c.n_skipped)?;
        println!("ship {:<12} n {:>5} r {r}", c.ship_id, c.points.len());
    }
    write_text(&dir.join("summary.csv"), &summary)?;
    println!("{} ({}/{}): {} ship curves in {}", args.input.display(), set.model, set.conditioning, curves.len(), dir.display());
    Ok(())
}
