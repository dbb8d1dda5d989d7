//! Batch front end wiring phantom generation, training, database
//! construction, segmentation and evaluation into reproducible experiments.
//!
//! Every command is a pure function of its inputs, configuration and seed:
//! repeated runs produce byte-identical outputs. Exit codes: 0 success
//! (including reported region failures), 1 usage, 2 I/O or malformed data,
//! 3 numerical divergence.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "houghseg", version, about = "Voting-based volumetric segmentation")]
struct Cli {
    /// Flat key=value config file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker thread cap (1 = bit-exact reference mode; 0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a phantom cohort from a spec file.
    Phantom(PhantomArgs),
    /// Train a patch-classification network on a cohort.
    Train(TrainArgs),
    /// Build a per-region vote database from a trained network.
    BuildDb(BuildDbArgs),
    /// Segment a volume by Hough voting (or the voxel-wise baseline).
    Segment(SegmentArgs),
    /// Score a predicted label volume against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
pub struct PhantomArgs {
    /// Phantom spec file.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory for the cohort.
    #[arg(long)]
    out: PathBuf,
    /// Number of phantoms.
    #[arg(short = 'n', long, default_value_t = 1)]
    count: usize,
    /// Center jitter std in voxels across the cohort.
    #[arg(long)]
    jitter: Option<f64>,
    /// Overrides the seed in the spec file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Cohort directory (pNNN_image.mhd / pNNN_labels.mhd pairs).
    #[arg(long)]
    data: PathBuf,
    /// Optional validation cohort directory (accuracy logged per epoch).
    #[arg(long)]
    val_data: Option<PathBuf>,
    /// Architecture name or explicit layer string.
    #[arg(long)]
    arch: Option<String>,
    /// Patch mode: 2d, 2.5d or 3d.
    #[arg(long)]
    mode: Option<String>,
    /// Patches per class per training volume.
    #[arg(long)]
    patches_per_class: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Weight file to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV log (default: <out>.log.csv).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
pub struct BuildDbArgs {
    /// Cohort directory with images and labels.
    #[arg(long)]
    data: PathBuf,
    /// Trained weight file.
    #[arg(long)]
    weights: PathBuf,
    /// Region id to index.
    #[arg(long)]
    region: u8,
    /// Patch mode: 2d, 2.5d or 3d.
    #[arg(long)]
    mode: Option<String>,
    /// Foreground subsampling stride (1 = exhaustive).
    #[arg(long)]
    stride: Option<usize>,
    /// Store segmentation patches inline instead of by reference.
    #[arg(long)]
    inline_masks: bool,
    /// Database file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct SegmentArgs {
    /// Volume to segment.
    #[arg(long)]
    input: PathBuf,
    /// Trained weight file.
    #[arg(long)]
    weights: PathBuf,
    /// Region databases (repeat per region).
    #[arg(long = "db")]
    dbs: Vec<PathBuf>,
    /// Patch mode: 2d, 2.5d or 3d.
    #[arg(long)]
    mode: Option<String>,
    /// Reprojection tolerance radius in voxels.
    #[arg(long)]
    radius: Option<f64>,
    /// Vote-map smoothing sigma in voxels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Neighbours per K-NN query.
    #[arg(long)]
    knn: Option<usize>,
    /// Maximal K-NN feature distance.
    #[arg(long)]
    max_dist: Option<f32>,
    /// Segmentation patch side.
    #[arg(long)]
    seg_patch: Option<u8>,
    /// Confidence threshold on the normalised segmentation map.
    #[arg(long)]
    threshold: Option<f32>,
    /// Voxel-wise semantic baseline instead of Hough voting.
    #[arg(long)]
    semantic: bool,
    /// Predicted label volume to write.
    #[arg(long)]
    out_labels: PathBuf,
    /// Per-region CSV report to write.
    #[arg(long)]
    out_report: PathBuf,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predicted label volume.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth label volume.
    #[arg(long)]
    gt: PathBuf,
    /// Per-region metrics CSV to write.
    #[arg(long)]
    out: PathBuf,
    /// Dice histogram CSV (0.05-wide bins).
    #[arg(long)]
    hist: Option<PathBuf>,
}

fn exit_code_for(err: &houghseg::Error) -> u8 {
    match err {
        houghseg::Error::Config(_) => 1,
        houghseg::Error::Divergence { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not usage errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(threads) = cli.threads {
        if threads > 0 {
            if let Err(e) =
                rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()
            {
                eprintln!("error: cannot configure thread pool: {e}");
                return ExitCode::from(1);
            }
        }
    }

    let cfg = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };

    let result = match cli.cmd {
        Cmd::Phantom(args) => commands::phantom(args, &cfg),
        Cmd::Train(args) => commands::train(args, &cfg),
        Cmd::BuildDb(args) => commands::build_db(args, &cfg),
        Cmd::Segment(args) => commands::segment(args, &cfg),
        Cmd::Eval(args) => commands::eval(args, &cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
