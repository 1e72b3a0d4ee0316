use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use boxdiff::denoiser::{train, Checkpoint, ConstantDenoiser, TinyMlp};
use boxdiff::diffusion::{select_best, NormalisationSpec, SampleConfig};
use boxdiff::eval::scenarios::{corners_csv, metric_scenarios, scenarios_csv};
use boxdiff::eval::studies::{perturb_study, study_csv, NoiseGrid};
use boxdiff::eval::synthetic::{generate, RotationPrior, SyntheticConfig};
use boxdiff::eval::views::find_object;
use boxdiff::eval::{
    evaluate, load_predictions, training_samples, AnnotationSet, Box2D, BoxTable,
    DiffusionPipeline, EvalConfig, PinholeK, PoseBox, Predictor, UnprojectionBaseline,
};
use boxdiff::geometry::{BoxPrompt2D, CameraIntrinsics};
use boxdiff::metrics::Enclosure;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{Config, DEFAULT_MAX_DIM};
use crate::{read_file, write_file, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "boxdiff",
    version,
    about = "Prompted 3D box prediction and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score predictions against the ground truth of an annotation file.
    Evaluate(EvaluateArgs),
    /// Write the metric-comparison scenario table and its corner data.
    SimulateMetrics {
        #[arg(long, default_value = "metrics")]
        out: PathBuf,
    },
    /// Train a network and write its checkpoint and loss curve.
    Train(TrainArgs),
    /// Write an oracle or constant checkpoint.
    Init(InitArgs),
    /// Sample proposals for one prompt.
    Sample(SampleArgs),
    /// Evaluate under increasing prompt noise.
    PerturbStudy(PerturbArgs),
    /// Write a synthetic annotation file.
    Synthesize(SynthArgs),
    /// Run the local labelling service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Unprojection,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EnclosureArg {
    ConvexHull,
    AxisAligned,
}

impl From<EnclosureArg> for Enclosure {
    fn from(e: EnclosureArg) -> Self {
        match e {
            EnclosureArg::ConvexHull => Enclosure::ConvexHull,
            EnclosureArg::AxisAligned => Enclosure::AxisAligned,
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "predictor", required = true, multiple = false)]
pub struct PredictorArgs {
    /// Prediction file: a JSON list of {image_id, object_id, box3d, mu}.
    #[arg(long, group = "predictor")]
    pub pred: Option<PathBuf>,
    #[arg(long, value_enum, group = "predictor")]
    pub baseline: Option<Baseline>,
    /// Sample with the model of this checkpoint.
    #[arg(long, group = "predictor")]
    pub pipeline: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long, default_value_t = 10)]
    pub n_eval: usize,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub annotations: PathBuf,
    #[command(flatten)]
    pub predictor: PredictorArgs,
    /// Evaluate with seeds 0..N.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, value_enum, default_value = "convex-hull")]
    pub enclosure: EnclosureArg,
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint; its config hash must match.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Defaults to the checkpoint path with a `.loss.csv` extension.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Oracle,
    Constant,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, value_enum)]
    pub kind: InitKind,
    #[arg(long, default_value_t = 0.1)]
    pub mu: f64,
    /// Schedule and normalisation are taken from this config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Inline JSON or a file: {box2d, intrinsics, width, height}.
    #[arg(long, conflicts_with = "annotations")]
    pub prompt: Option<String>,
    #[arg(long, requires = "object")]
    pub annotations: Option<PathBuf>,
    #[arg(long, requires = "annotations")]
    pub object: Option<String>,
    /// Narrows `--object` when object ids repeat across images.
    #[arg(long, requires = "object")]
    pub image: Option<String>,
    /// Object depth in metres; defaults to the annotated depth.
    #[arg(long)]
    pub depth: Option<f64>,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// Comma-separated `sigma_scale:sigma_trans` pairs.
    #[arg(long, default_value = "0:0,0.05:0,0:0.05,0.05:0.05,0.1:0.1")]
    pub grid: String,
    #[arg(long, conflicts_with = "pipeline")]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub pipeline: Option<PathBuf>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RotationArg {
    Uniform,
    Yaw,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "uniform")]
    pub rotation: RotationArg,
    #[arg(long, default_value_t = 1)]
    pub per_image: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides the `BOXDIFF_PORT` environment variable.
    #[arg(long)]
    pub port: Option<u16>,
    /// Start with a session from these files.
    #[arg(long, requires = "checkpoint")]
    pub annotations: Option<PathBuf>,
    #[arg(long, requires = "annotations")]
    pub checkpoint: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command,
/// writing human-readable progress to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => return Err(CliError::Input(e.to_string())),
        Err(e) => {
            let _ = write!(out, "{e}");
            return Ok(());
        }
    };
    match cli.command {
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::SimulateMetrics { out: dir } => cmd_simulate(&dir, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Init(a) => cmd_init(&a, out),
        Command::Sample(a) => cmd_sample(&a, out),
        Command::PerturbStudy(a) => cmd_perturb(&a, out),
        Command::Synthesize(a) => cmd_synthesize(&a, out),
        Command::Serve(a) => crate::service::serve_blocking(&a, out),
    }
}

fn say(out: &mut dyn Write, line: impl std::fmt::Display) {
    // Progress output is best effort; a closed pipe must not fail the run.
    let _ = writeln!(out, "{line}");
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = read_file(path)?;
    Checkpoint::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn seeds(n: u64) -> Result<Vec<u64>, CliError> {
    if n == 0 {
        return Err(CliError::Input("--seeds must be at least 1".into()));
    }
    Ok((0..n).collect())
}

fn pipeline(
    ckpt: &Path,
    set: &AnnotationSet,
    s: &SamplingArgs,
) -> Result<DiffusionPipeline, CliError> {
    let ckpt = load_checkpoint(ckpt)?;
    Ok(DiffusionPipeline::from_checkpoint(&ckpt, Some(set))?.with_sampling(s.n_eval, s.steps))
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let set = AnnotationSet::load(&a.annotations)?;
    let seeds = seeds(a.seeds)?;
    let p = &a.predictor;
    let predictor: Box<dyn Predictor> = match (&p.pred, p.baseline, &p.pipeline) {
        (Some(file), _, _) => Box::new(BoxTable::from_predictions(&set, &load_predictions(file)?)?),
        (_, Some(Baseline::Unprojection), _) => Box::new(UnprojectionBaseline),
        (_, Some(Baseline::GroundTruth), _) => Box::new(BoxTable::ground_truth(&set)?),
        (_, _, Some(ckpt)) => Box::new(pipeline(ckpt, &set, &a.sampling)?),
        _ => unreachable!("clap requires one predictor"),
    };
    let config = EvalConfig {
        enclosure: a.enclosure.into(),
        perturb: None,
    };
    let report = evaluate(&set, predictor.as_ref(), &seeds, &config)?;
    let files = [
        ("report.json", report.to_json()),
        ("objects.csv", report.objects_csv()?),
        ("summary.csv", report.summary_csv()?),
    ];
    for (name, text) in files {
        let path = a.out.join(name);
        write_file(&path, &text)?;
        say(out, format!("wrote {}", path.display()));
    }
    let m = &report.overall.means;
    say(
        out,
        format!(
            "{} objects, {} seed(s): IoU3D {:.2}%  NHD {:.4}",
            set.objects.len(),
            seeds.len(),
            m.iou3d_pct,
            m.nhd
        ),
    );
    Ok(())
}

fn cmd_simulate(dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let scenarios = metric_scenarios()?;
    for (name, text) in [
        ("scenarios.csv", scenarios_csv(&scenarios)?),
        ("corners.csv", corners_csv(&scenarios)?),
    ] {
        let path = dir.join(name);
        write_file(&path, &text)?;
        say(out, format!("wrote {}", path.display()));
    }
    say(
        out,
        format!("{:<4} {:>8} {:>8} {:>8}", "case", "IoU", "GIoU", "NHD"),
    );
    for s in &scenarios {
        say(
            out,
            format!(
                "{:<4} {:>8.4} {:>8.4} {:>8.4}",
                s.name, s.metrics.iou3d, s.metrics.giou3d, s.metrics.nhd
            ),
        );
    }
    Ok(())
}

/// Normalisation covering every image of `set`.
pub fn normalisation_for(set: &AnnotationSet) -> Result<NormalisationSpec, CliError> {
    let w = set.images.iter().map(|i| i.width).fold(0.0, f64::max);
    let h = set.images.iter().map(|i| i.height).fold(0.0, f64::max);
    Ok(NormalisationSpec::new(w, h, DEFAULT_MAX_DIM)?)
}

fn training_set(cfg: &Config) -> Result<AnnotationSet, CliError> {
    match (&cfg.data.annotations, &cfg.data.synthetic) {
        (Some(path), _) => Ok(AnnotationSet::load(path)?),
        (None, Some(s)) => Ok(generate(s)?),
        (None, None) => Ok(generate(&SyntheticConfig::default())?),
    }
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = Config::load(&a.config)?;
    let hash = cfg.training_hash();
    let set = training_set(&cfg)?;
    let sched = cfg.schedule.build()?;
    let spec = match cfg.normalisation {
        Some(n) => n,
        None => normalisation_for(&set)?,
    };
    let model = match &a.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.config_hash != hash {
                return Err(CliError::Input(format!(
                    "cannot resume from `{}`: it was trained with config hash {}, this config hashes to {hash}",
                    path.display(),
                    ckpt.config_hash
                )));
            }
            ckpt.mlp()?
        }
        None => TinyMlp::new(
            cfg.model.clone(),
            spec,
            sched.steps(),
            sched.scale(),
            cfg.training.seed,
        )?,
    };
    let data = training_samples(&set, &model)?;
    let trained = train(model, &data, &cfg.training, &sched)?;
    let ckpt = Checkpoint::from_mlp(&trained.model, &sched, hash);
    write_file(&a.out, &(ckpt.to_json() + "\n"))?;
    say(out, format!("wrote {}", a.out.display()));
    let curve_path = a
        .loss_csv
        .clone()
        .unwrap_or_else(|| a.out.with_extension("loss.csv"));
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in trained.curve.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    write_file(&curve_path, &csv)?;
    say(out, format!("wrote {}", curve_path.display()));
    if let Some(last) = trained.curve.last() {
        say(out, format!("final loss {last:.6}"));
    }
    Ok(())
}

fn cmd_init(a: &InitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = match &a.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if !(a.mu > 0.0 && a.mu.is_finite()) {
        return Err(CliError::Input("--mu must be positive".into()));
    }
    let sched = cfg.schedule.build()?;
    let spec = match cfg.normalisation {
        Some(n) => n,
        None => NormalisationSpec::new(640.0, 480.0, DEFAULT_MAX_DIM)?,
    };
    let ckpt = match a.kind {
        InitKind::Oracle => Checkpoint::oracle(a.mu, &sched, spec),
        InitKind::Constant => {
            Checkpoint::constant(&ConstantDenoiser::new(a.mu, sched.scale()), &sched, spec)
        }
    };
    write_file(&a.out, &(ckpt.to_json() + "\n"))?;
    say(out, format!("wrote {}", a.out.display()));
    Ok(())
}

/// A stand-alone prompt for `sample`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptFile {
    pub box2d: Box2D,
    pub intrinsics: PinholeK,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledProposal {
    pub index: usize,
    pub box3d: PoseBox,
    pub mu: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutput {
    pub depth: f64,
    pub seed: u64,
    pub n_eval: usize,
    pub steps: usize,
    /// Index of the most confident proposal.
    pub selected: usize,
    pub proposals: Vec<SampledProposal>,
}

fn cmd_sample(a: &SampleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    if a.n == 0 || a.steps == 0 {
        return Err(CliError::Input("--n and --steps must be at least 1".into()));
    }
    let (set, ids, prompt, k, stream) = match (&a.prompt, &a.annotations, &a.object) {
        (Some(p), _, _) => {
            let text = if p.trim_start().starts_with('{') {
                p.clone()
            } else {
                read_file(Path::new(p))?
            };
            let pf: PromptFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("invalid prompt: {e}")))?;
            let depth = a
                .depth
                .ok_or_else(|| CliError::Input("--depth is required with --prompt".into()))?;
            let i = pf.intrinsics;
            let k = CameraIntrinsics::new(i.fx, i.fy, i.cx, i.cy, pf.width, pf.height)
                .map_err(|e| CliError::Input(e.to_string()))?;
            let b = pf.box2d;
            let prompt = BoxPrompt2D {
                clipped: b.clipped,
                ..BoxPrompt2D::new(b.u2d, b.v2d, b.w2d, b.h2d, depth)
            };
            (None, (String::new(), String::new()), prompt, k, 0)
        }
        (None, Some(path), Some(object)) => {
            let set = AnnotationSet::load(path)?;
            let (index, obj) = find_object(&set, a.image.as_deref(), object)?;
            let mut prompt = set.prompt(obj);
            if let Some(d) = a.depth {
                prompt = prompt.at_depth(d);
            }
            let k = set.camera_of(obj)?;
            let ids = (obj.image_id.clone(), obj.id.clone());
            (Some(set), ids, prompt, k, index as u64)
        }
        _ => {
            return Err(CliError::Input(
                "give either --prompt or --annotations with --object".into(),
            ))
        }
    };
    prompt
        .validate(&k)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let pipe = DiffusionPipeline::from_checkpoint(&ckpt, set.as_ref())?;
    let cfg = SampleConfig {
        n_eval: a.n,
        steps: a.steps,
        seed: a.seed,
        stream,
    };
    let preds = pipe.proposals(&ids.0, &ids.1, &prompt, &k, &cfg)?;
    let (selected, _) = select_best(&preds)?;
    let proposals = preds
        .iter()
        .enumerate()
        .map(|(index, p)| {
            Ok(SampledProposal {
                index,
                box3d: PoseBox::from_box3d(&p.box3d, &k)?,
                mu: p.mu,
                eta: p.eta,
            })
        })
        .collect::<Result<_, CliError>>()?;
    let result = SampleOutput {
        depth: prompt.z,
        seed: a.seed,
        n_eval: a.n,
        steps: a.steps,
        selected,
        proposals,
    };
    let json = serde_json::to_string_pretty(&result).expect("serialisable") + "\n";
    match &a.out {
        Some(path) => {
            write_file(path, &json)?;
            say(out, format!("wrote {}", path.display()));
        }
        None => {
            let _ = out.write_all(json.as_bytes());
        }
    }
    Ok(())
}

fn cmd_perturb(a: &PerturbArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let set = AnnotationSet::load(&a.annotations)?;
    let grid: NoiseGrid = a.grid.parse()?;
    let seeds = seeds(a.seeds)?;
    let predictor: Box<dyn Predictor> = match (&a.pipeline, a.baseline) {
        (Some(ckpt), _) => Box::new(pipeline(ckpt, &set, &a.sampling)?),
        (None, Some(Baseline::GroundTruth)) => Box::new(BoxTable::ground_truth(&set)?),
        (None, _) => Box::new(UnprojectionBaseline),
    };
    let rows = perturb_study(
        &set,
        predictor.as_ref(),
        &grid,
        &seeds,
        a.noise_seed,
        Enclosure::default(),
    )?;
    say(
        out,
        format!(
            "{:>11} {:>11} {:>9} {:>8}",
            "sigma_scale", "sigma_trans", "IoU3D %", "NHD"
        ),
    );
    for r in &rows {
        say(
            out,
            format!(
                "{:>11} {:>11} {:>9.2} {:>8.4}",
                r.sigma_scale, r.sigma_trans, r.iou3d_pct, r.nhd
            ),
        );
    }
    if let Some(path) = &a.out {
        write_file(path, &study_csv(&rows)?)?;
        say(out, format!("wrote {}", path.display()));
    }
    Ok(())
}

fn cmd_synthesize(a: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let rotation = match a.rotation {
        RotationArg::Uniform => RotationPrior::Uniform,
        RotationArg::Yaw => RotationPrior::EgocentricYaw {
            max_yaw: std::f64::consts::PI,
        },
    };
    let set = generate(&SyntheticConfig {
        count: a.count,
        seed: a.seed,
        rotation,
        objects_per_image: a.per_image,
        ..SyntheticConfig::default()
    })?;
    write_file(&a.out, &(set.to_json() + "\n"))?;
    say(
        out,
        format!(
            "wrote {} ({} objects in {} images)",
            a.out.display(),
            set.objects.len(),
            set.images.len()
        ),
    );
    Ok(())
}
