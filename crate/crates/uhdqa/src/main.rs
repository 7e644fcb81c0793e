//! Thin command-line front end over the library's experiment commands.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uhdqa::cli::{
    cmd_ablate, cmd_evaluate, cmd_gen_synthetic, cmd_score, cmd_select_patches, cmd_train,
    RunConfig, SweepKind,
};
use uhdqa::datasets::SyntheticSpec;
use uhdqa::imaging::ResampleKernel;

#[derive(Parser)]
#[command(
    name = "uhdqa",
    about = "Blind quality assessment for ultra-high-resolution content",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every experiment command; each overrides the matching
/// config-file key.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key-value JSON config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Patch width and height, e.g. 240
    #[arg(long)]
    patch_size: Option<u32>,
    /// Number of selected patches
    #[arg(long)]
    patch_n: Option<usize>,
    /// Texture measure: glcm_contrast | variance | local_variance |
    /// gray_diff_entropy | random
    #[arg(long)]
    measure: Option<String>,
    /// Backbone family: std5 | tiny5
    #[arg(long)]
    backbone: Option<String>,
    /// Extractor input size override
    #[arg(long)]
    input_size: Option<u32>,
    /// Pretrained backbone weights archive
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Stage mask: BL | BL_234 | BL_134 | BL_124 | BL_all | 4-bit string
    #[arg(long)]
    stage_mask: Option<String>,
    /// Training mode: multitask_uncertainty | multitask_fixed |
    /// classification_only | regression_only
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Scene-disjoint trials for evaluate/ablate
    #[arg(long)]
    trials: Option<usize>,
    /// Train fraction by scene count
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn realize(&self) -> uhdqa::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.patch_size {
            cfg.patch_sw = s;
            cfg.patch_sh = s;
        }
        if let Some(n) = self.patch_n {
            cfg.patch_n = n;
        }
        if let Some(m) = &self.measure {
            cfg.measure = m.clone();
        }
        if let Some(b) = &self.backbone {
            cfg.backbone = b.clone();
        }
        if let Some(s) = self.input_size {
            cfg.input_size = s;
        }
        if let Some(w) = &self.weights {
            cfg.weights = Some(w.clone());
        }
        if let Some(m) = &self.stage_mask {
            cfg.stage_mask = m.clone();
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.clone();
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(lr) = self.lr {
            cfg.lr = lr;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(r) = self.ratio {
            cfg.ratio = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Score and rank the patch grid of one image
    SelectPatches {
        image: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Also write an annotated preview PNG
        #[arg(long)]
        preview: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train on a manifest and write a checkpoint plus training log
    Train {
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate over scene-disjoint splits (retrains per split unless a
    /// checkpoint is given without --retrain)
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Retrain per split even when a checkpoint is given
        #[arg(long)]
        retrain: bool,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Sweep one experiment dimension over paired splits
    Ablate {
        manifest: PathBuf,
        /// stage_masks | texture_measures | patch_grid | loss_modes
        #[arg(long)]
        sweep: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a single image or frame directory with a checkpoint
    Score {
        media: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render the synthetic true/pseudo dataset
    GenSynthetic {
        #[arg(long, default_value = "out/synthetic")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        scenes: usize,
        #[arg(long, default_value_t = 960)]
        width: u32,
        #[arg(long, default_value_t = 540)]
        height: u32,
        /// Downscale factors, e.g. --factors 2,3
        #[arg(long, value_delimiter = ',', default_values_t = vec![2u32, 3])]
        factors: Vec<u32>,
        /// Kernels: nearest | bilinear | bicubic | lanczos
        #[arg(long, value_delimiter = ',', default_values_t = vec!["bilinear".to_string()])]
        kernels: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run() -> uhdqa::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::SelectPatches { image, out_dir, preview, config } => {
            let cfg = config.realize()?;
            let output = cmd_select_patches(&image, &cfg, &out_dir, preview)?;
            println!("wrote {}", output.csv.display());
            if let Some(p) = output.preview {
                println!("wrote {}", p.display());
            }
            println!("selected tiles: {:?}", output.selected);
        }
        Command::Train { manifest, out_dir, config } => {
            let cfg = config.realize()?;
            let outputs = cmd_train(&manifest, &cfg, &out_dir)?;
            println!("wrote {}", outputs.checkpoint.display());
            println!("wrote {}", outputs.log_csv.display());
            println!("final overall loss: {:.6}", outputs.final_l_overall);
        }
        Command::Evaluate { manifest, checkpoint, retrain, out_dir, config } => {
            let mut cfg = config.realize()?;
            cfg.retrain = cfg.retrain || retrain;
            let report = cmd_evaluate(&manifest, checkpoint.as_deref(), &cfg, &out_dir)?;
            println!("{}", serde_json::to_string_pretty(&report.mean)?);
            println!("wrote {}", out_dir.join("eval_report.json").display());
        }
        Command::Ablate { manifest, sweep, out_dir, config } => {
            let cfg = config.realize()?;
            let sweep = SweepKind::parse(&sweep)?;
            let table = cmd_ablate(&manifest, &cfg, sweep, &out_dir)?;
            print!("{}", table.to_csv());
            println!(
                "wrote {}",
                out_dir.join(format!("ablation_{}.json", table.sweep)).display()
            );
        }
        Command::Score { media, checkpoint, config } => {
            let cfg = config.realize()?;
            let score = cmd_score(&media, &checkpoint, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&score)?);
        }
        Command::GenSynthetic { out_dir, scenes, width, height, factors, kernels, seed } => {
            let kernels = kernels
                .iter()
                .map(|k| ResampleKernel::parse(k))
                .collect::<uhdqa::Result<Vec<_>>>()?;
            let spec = SyntheticSpec {
                scenes,
                base_size: (width, height),
                downscale_factors: factors,
                kernels,
                seed,
                ..SyntheticSpec::default()
            };
            let manifest = cmd_gen_synthetic(&spec, &out_dir)?;
            println!("wrote {}", manifest.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
