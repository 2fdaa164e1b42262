//! `contourpan` command-line tool.
//!
//! Exit codes: 0 on success, 1 for invalid input or arguments, 2 for I/O failures.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use contourpan_core::derive::{Connectivity, DeriveParams};
use contourpan_core::pipeline::PipelineConfig;
use contourpan_core::refine::RefineParams;

mod commands;
mod files;

#[derive(Parser, Debug)]
#[command(
    name = "contourpan",
    version,
    about = "Contour-driven panoptic segmentation post-processing"
)]
struct Cli {
    /// Worker threads for batch commands (default: all cores).
    #[arg(long, global = true, env = "CONTOURPAN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Instance contours of an instance-id map, thickened by dilation.
    GtContours(GtContoursArgs),
    /// Evaluate the training losses of predictions against ground truth.
    Loss(LossArgs),
    /// Derive instances from semantic and contour probabilities.
    Derive(DeriveArgs),
    /// Split, merge and filter instances using center offsets.
    Refine(RefineArgs),
    /// Fuse semantic labels and instances into a panoptic map.
    Panoptic(PanopticArgs),
    /// Score predicted panoptic maps against ground truth.
    Eval(EvalArgs),
    /// Generate synthetic scenes with simulated predictions.
    Synth(SynthArgs),
    /// Run derive, refine and panoptic fusion end to end, scoring when ground truth is known.
    Pipeline(PipelineArgs),
    /// Sweep one parameter over synthetic scenes.
    Ablate(AblateArgs),
}

#[derive(Args, Debug)]
pub struct GtContoursArgs {
    /// Instance ids (STF).
    #[arg(long)]
    pub instances: PathBuf,
    /// Dilation radius in pixels.
    #[arg(long, default_value_t = contourpan_core::contour::DEFAULT_DILATION_RATE)]
    pub rate: usize,
    /// Output contour mask (STF).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the mask as PGM.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    #[arg(long, requires = "semantic_gt")]
    pub semantic_probs: Option<PathBuf>,
    #[arg(long, requires = "semantic_probs")]
    pub semantic_gt: Option<PathBuf>,
    #[arg(long, requires = "contour_gt")]
    pub contours: Option<PathBuf>,
    /// Ground-truth contour mask (STF).
    #[arg(long, requires = "contours")]
    pub contour_gt: Option<PathBuf>,
    #[arg(long, requires = "offset_gt")]
    pub offsets: Option<PathBuf>,
    #[arg(long, requires = "offsets")]
    pub offset_gt: Option<PathBuf>,
    /// Semantic, contour and center weights.
    #[arg(long, default_value = "1,50,0.1")]
    pub weights: String,
    /// Contour terms, e.g. `wbce+huber+nms`.
    #[arg(long, default_value = "wbce+huber+nms")]
    pub terms: String,
    #[arg(long, default_value_t = contourpan_core::losses::DEFAULT_NMS_WINDOW)]
    pub nms_window: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DeriveFlags {
    /// Contour probability above which a pixel counts as contour.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Pixel connectivity for labeling (4 or 8).
    #[arg(long)]
    pub connectivity: Option<u8>,
}

impl DeriveFlags {
    pub fn apply(&self, params: &mut DeriveParams) -> Result<()> {
        if let Some(t) = self.threshold {
            params.contour_threshold = t;
        }
        if let Some(c) = self.connectivity {
            params.connectivity = Connectivity::try_from(c)?;
        }
        params.validate()?;
        Ok(())
    }
}

#[derive(Args, Debug, Clone)]
pub struct RefineFlags {
    /// Cluster distance for splitting, in pixels.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Fixed DBSCAN density (default scales with instance area).
    #[arg(long)]
    pub min_samples: Option<usize>,
    /// Instances below this many pixels are dissolved.
    #[arg(long)]
    pub min_area: Option<usize>,
    /// Instances merge when their mean centers are closer than this.
    #[arg(long)]
    pub merge_distance: Option<f64>,
    #[arg(long)]
    pub no_split: bool,
    #[arg(long)]
    pub no_merge: bool,
    /// Allow merging instances of different classes.
    #[arg(long)]
    pub merge_any_class: bool,
}

impl RefineFlags {
    pub fn apply(&self, params: &mut RefineParams) -> Result<()> {
        if let Some(v) = self.eps {
            params.eps = v;
        }
        if let Some(v) = self.min_samples {
            params.min_samples = Some(v);
        }
        if let Some(v) = self.min_area {
            params.min_area = v;
        }
        if let Some(v) = self.merge_distance {
            params.merge_distance = v;
        }
        if self.no_split {
            params.split = false;
        }
        if self.no_merge {
            params.merge = false;
        }
        if self.merge_any_class {
            params.merge_same_class_only = false;
        }
        params.validate()?;
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct DeriveArgs {
    #[arg(long)]
    pub semantic_probs: PathBuf,
    #[arg(long)]
    pub contours: PathBuf,
    /// Center offsets; without them contour pixels go to the nearest instance by distance.
    #[arg(long)]
    pub offsets: Option<PathBuf>,
    /// Class catalog JSON (default: the synthetic catalog).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub flags: DeriveFlags,
    /// Output instance ids (STF).
    #[arg(long)]
    pub out: PathBuf,
    /// Output instance records (JSON).
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RefineArgs {
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long)]
    pub offsets: PathBuf,
    #[arg(long)]
    pub semantic_probs: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Refinement parameters JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: RefineFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PanopticArgs {
    /// Semantic labels or probabilities (STF).
    #[arg(long)]
    pub semantic: PathBuf,
    /// Instance ids (STF).
    #[arg(long)]
    pub instances: PathBuf,
    /// Instance records (JSON); recomputed from the semantic input when absent.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Thing segment list (JSON).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Color rendering for inspection (PPM).
    #[arg(long)]
    pub debug_ppm: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scene spec JSON; missing fields take defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of scenes, with seeds counting up from the spec seed.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Directory of scenes as written by `synth`.
    #[arg(long, conflicts_with_all = ["spec", "semantic_probs"])]
    pub scenes: Option<PathBuf>,
    /// Generate scenes from this spec instead of reading them.
    #[arg(long, conflicts_with = "semantic_probs")]
    pub spec: Option<PathBuf>,
    /// Scenes to generate with `--spec`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, requires = "contours")]
    pub semantic_probs: Option<PathBuf>,
    #[arg(long, requires = "semantic_probs")]
    pub contours: Option<PathBuf>,
    #[arg(long, requires = "semantic_probs")]
    pub offsets: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Pipeline config JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skip all refinement steps.
    #[arg(long)]
    pub no_refine: bool,
    #[command(flatten)]
    pub derive: DeriveFlags,
    #[command(flatten)]
    pub refine: RefineFlags,
    #[arg(long)]
    pub out_dir: PathBuf,
}

impl PipelineArgs {
    pub fn config(&self) -> Result<PipelineConfig> {
        let mut config: PipelineConfig = match &self.config {
            Some(path) => files::read_json(path)?,
            None => PipelineConfig::default(),
        };
        self.derive.apply(&mut config.derive)?;
        self.refine.apply(&mut config.refine)?;
        if self.no_refine {
            config.no_refine = true;
        }
        Ok(config)
    }
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// dilation_rate, min_area, loss_combo or refine_flags.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values (default: the standard grid of the axis).
    #[arg(long)]
    pub grid: Option<String>,
    /// Ablation config JSON with `spec`, `pipeline`, `loss` and `scenes`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of scenes per grid value.
    #[arg(long)]
    pub scenes: Option<usize>,
    /// First scene seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON table; a CSV with the same stem is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<contourpan_core::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        bail!(contourpan_core::Error::Validation(
            "--threads must be at least 1".into()
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::GtContours(a) => commands::gt_contours(&a),
        Command::Loss(a) => commands::loss(&a),
        Command::Derive(a) => commands::derive(&a),
        Command::Refine(a) => commands::refine(&a),
        Command::Panoptic(a) => commands::panoptic(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Pipeline(a) => commands::pipeline(&a),
        Command::Ablate(a) => commands::ablate(&a),
    }
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn render(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    let mut last = out.clone();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !last.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", render(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
