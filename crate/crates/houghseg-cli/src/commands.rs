//! The five subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use houghseg::eval::{dice, dice_histogram, mean_surface_distance, summarize, Mask, RegionResult};
use houghseg::hough::{segment_all_regions, HoughConfig, RegionOutcome};
use houghseg::houghdb::{build_database, load_db, save_db, HoughDatabase};
use houghseg::net::{
    load_weights, parse_arch_for_mode, save_weights, train as train_net, Network, TrainConfig,
};
use houghseg::patch::{sample_training_set, Mode, TrainingSet};
use houghseg::phantom::{generate_cohort, parse_phantom_spec};
use houghseg::volume::{load_label, load_scalar, save_labels, save_volume, LabelVolume, Volume};
use houghseg::{Error, Result};

use crate::config::FileConfig;
use crate::manifest::RunManifest;
use crate::{BuildDbArgs, EvalArgs, PhantomArgs, SegmentArgs, TrainArgs};

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Image/label pairs of a cohort directory, sorted by file name.
fn discover_cohort(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut images: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_image.mhd"))
        })
        .collect();
    images.sort();
    if images.is_empty() {
        return Err(Error::Config(format!(
            "no `*_image.mhd` volumes found in {}",
            dir.display()
        )));
    }
    images
        .into_iter()
        .map(|img| {
            let name = img.file_name().unwrap().to_str().unwrap();
            let labels = img.with_file_name(name.replace("_image.mhd", "_labels.mhd"));
            if !labels.exists() {
                return Err(Error::Config(format!(
                    "missing label volume {} for {}",
                    labels.display(),
                    img.display()
                )));
            }
            Ok((img, labels))
        })
        .collect()
}

fn load_cohort(pairs: &[(PathBuf, PathBuf)]) -> Result<Vec<(Volume, LabelVolume)>> {
    pairs
        .iter()
        .map(|(img, lab)| {
            let v = load_scalar(img)?;
            let l = load_label(lab)?;
            if v.dims != l.dims {
                return Err(Error::Shape(format!(
                    "{}: image dims {:?} vs label dims {:?}",
                    img.display(),
                    v.dims,
                    l.dims
                )));
            }
            Ok((v, l))
        })
        .collect()
}

pub fn phantom(args: PhantomArgs, cfg: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let mut spec = parse_phantom_spec(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let jitter = cfg.resolve(&args.jitter, "jitter", 1.25)?;

    // generate everything before touching the disk, so a bad spec leaves
    // no partial cohort behind
    let cohort = generate_cohort(&spec, args.count, jitter, spec.seed)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let mut manifest = RunManifest::new(
        "phantom",
        Some(spec.seed),
        json!({ "count": args.count, "jitter": jitter, "spec": args.spec }),
    );
    manifest.inputs.push(args.spec.clone());
    for (i, (v, l)) in cohort.iter().enumerate() {
        let img = args.out.join(format!("p{i:03}_image.mhd"));
        let lab = args.out.join(format!("p{i:03}_labels.mhd"));
        save_volume(v, &img)?;
        save_labels(l, &lab)?;
        manifest.outputs.push(img);
        manifest.outputs.push(lab);
    }
    manifest.write(&args.out.join("manifest.json"), start.elapsed())?;
    println!("wrote {} phantoms to {}", cohort.len(), args.out.display());
    Ok(())
}

pub fn train(args: TrainArgs, cfg: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let arch_name: String = cfg.require(&args.arch, "arch")?;
    let mode: Mode = cfg.require::<String>(&args.mode, "mode")?.parse()?;
    let per_class = cfg.resolve(&args.patches_per_class, "patches_per_class", 833)?;
    let train_cfg = TrainConfig {
        learning_rate: cfg.resolve(&args.lr, "lr", 1e-2)?,
        momentum: cfg.resolve(&args.momentum, "momentum", 0.9)?,
        weight_decay: cfg.resolve(&args.weight_decay, "weight_decay", 5e-4)?,
        batch_size: cfg.resolve(&args.batch, "batch", 64)?,
        epochs: cfg.resolve(&args.epochs, "epochs", 15)?,
        dropout_ratio: cfg.resolve(&args.dropout, "dropout", 0.5)?,
        seed: cfg.resolve(&args.seed, "seed", 0)?,
    };

    let pairs = discover_cohort(&args.data)?;
    let cohort = load_cohort(&pairs)?;

    // classes: background plus every region present anywhere in the cohort
    let mut present = [false; 256];
    for (_, l) in &cohort {
        for id in l.region_ids() {
            present[id as usize] = true;
        }
    }
    let max_region = (1..256).rfind(|&i| present[i]).unwrap_or(0);
    if max_region == 0 {
        return Err(Error::Config("cohort has no labelled regions".into()));
    }
    let classes: Vec<u8> = (0..=max_region as u8).collect();
    let num_classes = classes.len();

    let arch = parse_arch_for_mode(&arch_name, mode, num_classes)?;
    let size = arch.input_size;

    let mut ts: Option<TrainingSet> = None;
    for (i, (v, l)) in cohort.iter().enumerate() {
        let sampled =
            sample_training_set(v, l, &classes, per_class, mode, size, train_cfg.seed + i as u64)?;
        ts = Some(match ts {
            None => sampled,
            Some(acc) => acc.merge(sampled)?,
        });
    }
    let ts = ts.unwrap();
    println!(
        "training {} ({} classes, mode {mode}) on {} patches",
        arch.notation,
        num_classes,
        ts.patches.len()
    );

    let val = match &args.val_data {
        None => None,
        Some(dir) => {
            let pairs = discover_cohort(dir)?;
            let vols = load_cohort(&pairs)?;
            let mut vs: Option<TrainingSet> = None;
            for (i, (v, l)) in vols.iter().enumerate() {
                let sampled = sample_training_set(
                    v,
                    l,
                    &classes,
                    (per_class / 4).max(16),
                    mode,
                    size,
                    0x56414C + i as u64,
                )?;
                vs = Some(match vs {
                    None => sampled,
                    Some(acc) => acc.merge(sampled)?,
                });
            }
            vs
        }
    };

    let mut net: Network<f32> = Network::init_msra(&arch, train_cfg.seed)?;
    let log = train_net(&mut net, &ts, &train_cfg, val.as_ref())?;
    save_weights(&net, &args.out)?;

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| args.out.with_extension("log.csv"));
    let mut csv = String::from("epoch,mean_loss,train_accuracy,val_accuracy\n");
    for e in &log.epochs {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            e.epoch,
            e.mean_loss,
            e.train_accuracy,
            e.val_accuracy.map_or(String::new(), |v| v.to_string())
        ));
    }
    write_text(&log_path, &csv)?;
    println!(
        "final training accuracy {:.4}; weights in {}",
        log.final_train_accuracy,
        args.out.display()
    );

    let mut manifest = RunManifest::new(
        "train",
        Some(train_cfg.seed),
        json!({
            "arch": arch_name, "mode": mode.to_string(),
            "patches_per_class": per_class,
            "lr": train_cfg.learning_rate, "momentum": train_cfg.momentum,
            "weight_decay": train_cfg.weight_decay, "batch": train_cfg.batch_size,
            "epochs": train_cfg.epochs, "dropout": train_cfg.dropout_ratio,
        }),
    );
    manifest.inputs = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    manifest.outputs = vec![args.out.clone(), log_path];
    manifest.write(&args.out.with_extension("manifest.json"), start.elapsed())
}

pub fn build_db(args: BuildDbArgs, cfg: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let mode: Mode = cfg.require::<String>(&args.mode, "mode")?.parse()?;
    let stride = cfg.resolve(&args.stride, "stride", 2)?;
    if stride == 0 {
        return Err(Error::Config("stride must be >= 1".into()));
    }
    let net = load_weights(&args.weights)?;
    let pairs = discover_cohort(&args.data)?;
    let cohort = load_cohort(&pairs)?;
    let refs: Vec<(&Volume, &LabelVolume)> = cohort.iter().map(|(v, l)| (v, l)).collect();
    let manifest_paths: Vec<String> =
        pairs.iter().map(|(_, l)| l.to_string_lossy().into_owned()).collect();

    let db = build_database(
        &net,
        &refs,
        args.region,
        mode,
        stride,
        args.inline_masks,
        manifest_paths,
    )?;
    save_db(&db, &args.out)?;
    println!(
        "region {}: {} records ({} storage) in {}",
        args.region,
        db.len(),
        if args.inline_masks { "inline" } else { "by-reference" },
        args.out.display()
    );

    let mut manifest = RunManifest::new(
        "build-db",
        None,
        json!({
            "region": args.region, "mode": mode.to_string(), "stride": stride,
            "inline_masks": args.inline_masks, "weights": args.weights,
        }),
    );
    manifest.inputs = pairs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    manifest.inputs.push(args.weights.clone());
    manifest.outputs = vec![args.out.clone()];
    manifest.write(&args.out.with_extension("manifest.json"), start.elapsed())
}

/// Load the label volumes a by-reference database needs, trying the stored
/// path first and then the database's own directory.
fn load_manifest_labels(db: &HoughDatabase, db_path: &Path) -> Result<Option<Vec<LabelVolume>>> {
    if db.inline_masks {
        return Ok(None);
    }
    let base = db_path.parent().unwrap_or(Path::new("."));
    let vols = db
        .manifest
        .iter()
        .map(|p| {
            let direct = PathBuf::from(p);
            let path = if direct.exists() { direct } else { base.join(p) };
            load_label(&path)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(vols))
}

pub fn segment(args: SegmentArgs, cfg: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let mode: Mode = cfg.require::<String>(&args.mode, "mode")?.parse()?;
    let hough_cfg = HoughConfig {
        radius: cfg.resolve(&args.radius, "radius", 3.0)?,
        sigma: cfg.resolve(&args.sigma, "sigma", 1.0)?,
        k: cfg.resolve(&args.knn, "knn", 20)?,
        max_dist: cfg.resolve(&args.max_dist, "max_dist", f32::INFINITY)?,
        seg_patch: cfg.resolve(&args.seg_patch, "seg_patch", 9)?,
        threshold: cfg.resolve(&args.threshold, "threshold", 0.5)?,
        eps_w: 1e-6,
    };
    hough_cfg.validate()?;

    let net = load_weights(&args.weights)?;
    let volume = load_scalar(&args.input)?;

    let (labels, report) = if args.semantic {
        let labels = houghseg::dense::semantic_segment(&net, &volume, mode)?;
        let outcomes: Vec<RegionOutcome> = labels
            .region_ids()
            .into_iter()
            .map(|region| {
                let count = labels.labels.iter().filter(|&&l| l == region).count();
                RegionOutcome {
                    region,
                    success: count > 0,
                    centroid: None,
                    survivors: 0,
                    mask_voxels: count,
                }
            })
            .collect();
        (labels, outcomes)
    } else {
        if args.dbs.is_empty() {
            return Err(Error::Config("at least one --db is required".into()));
        }
        let dbs: Vec<HoughDatabase> =
            args.dbs.iter().map(|p| load_db(p)).collect::<Result<_>>()?;
        for db in &dbs {
            if db.seg_patch_side != hough_cfg.seg_patch {
                return Err(Error::Config(format!(
                    "database stores {}-sided patches, --seg-patch asked for {}",
                    db.seg_patch_side, hough_cfg.seg_patch
                )));
            }
        }
        let sources: Vec<Option<Vec<LabelVolume>>> = dbs
            .iter()
            .zip(&args.dbs)
            .map(|(db, p)| load_manifest_labels(db, p))
            .collect::<Result<_>>()?;
        let db_refs: Vec<&HoughDatabase> = dbs.iter().collect();
        let source_refs: Vec<Option<&[LabelVolume]>> =
            sources.iter().map(|s| s.as_deref()).collect();
        segment_all_regions(&net, &volume, mode, &db_refs, &source_refs, &hough_cfg)?
    };

    save_labels(&labels, &args.out_labels)?;
    let mut csv = String::from("region,success,cx,cy,cz,survivors,mask_voxels\n");
    for o in &report {
        csv.push_str(&o.csv_row());
        csv.push('\n');
        if !o.success {
            eprintln!("region {} failed (no localisation or no surviving votes)", o.region);
        }
    }
    write_text(&args.out_report, &csv)?;
    println!(
        "segmented {} regions ({} failures) -> {}",
        report.len(),
        report.iter().filter(|o| !o.success).count(),
        args.out_labels.display()
    );

    let mut manifest = RunManifest::new(
        "segment",
        None,
        json!({
            "mode": mode.to_string(), "semantic": args.semantic,
            "radius": hough_cfg.radius, "sigma": hough_cfg.sigma,
            "knn": hough_cfg.k, "max_dist": hough_cfg.max_dist,
            "seg_patch": hough_cfg.seg_patch, "threshold": hough_cfg.threshold,
        }),
    );
    manifest.inputs = vec![args.input.clone(), args.weights.clone()];
    manifest.inputs.extend(args.dbs.iter().cloned());
    manifest.outputs = vec![args.out_labels.clone(), args.out_report.clone()];
    manifest.write(&args.out_labels.with_extension("manifest.json"), start.elapsed())
}

pub fn eval(args: EvalArgs, _cfg: &FileConfig) -> Result<()> {
    let start = Instant::now();
    let pred = load_label(&args.pred)?;
    let gt = load_label(&args.gt)?;
    if pred.dims != gt.dims {
        return Err(Error::Shape(format!(
            "prediction dims {:?} vs ground truth dims {:?}",
            pred.dims, gt.dims
        )));
    }

    let mut results = Vec::new();
    let mut csv = String::from("region,dice,mean_surface_distance_mm,failed\n");
    for region in gt.region_ids() {
        let pm = Mask::from_labels(&pred, region);
        let gm = Mask::from_labels(&gt, region);
        let d = dice(&pm, &gm)?;
        let failed = d == 0.0;
        let msd = if failed || pm.count() == 0 {
            None
        } else {
            Some(mean_surface_distance(&pm, &gm, gt.spacing)?)
        };
        csv.push_str(&format!(
            "{},{},{},{}\n",
            region,
            d,
            msd.map_or(String::new(), |m| m.to_string()),
            failed as u8
        ));
        results.push(RegionResult {
            region,
            dice: if failed { 0.0 } else { d },
            mean_surface_distance: msd,
            failed,
        });
    }
    write_text(&args.out, &csv)?;

    let summary = summarize(&results)?;
    println!(
        "regions {} | failures {} ({:.0}%) | mean dice {:.4} | mean distance {}",
        summary.total,
        summary.failures,
        summary.failure_rate * 100.0,
        summary.mean_dice,
        summary
            .mean_distance
            .map_or("n/a".to_string(), |d| format!("{d:.3} mm"))
    );

    if let Some(hist_path) = &args.hist {
        let dices: Vec<f64> = results.iter().map(|r| r.dice).collect();
        let bins = dice_histogram(&dices, 0.05)?;
        let mut csv = String::from("bin_lo,bin_hi,count\n");
        for (i, count) in bins.iter().enumerate() {
            csv.push_str(&format!("{:.2},{:.2},{}\n", i as f64 * 0.05, (i + 1) as f64 * 0.05, count));
        }
        write_text(hist_path, &csv)?;
    }

    let mut manifest = RunManifest::new("eval", None, json!({}));
    manifest.inputs = vec![args.pred.clone(), args.gt.clone()];
    manifest.outputs = vec![args.out.clone()];
    if let Some(h) = &args.hist {
        manifest.outputs.push(h.clone());
    }
    manifest.write(&args.out.with_extension("manifest.json"), start.elapsed())
}
