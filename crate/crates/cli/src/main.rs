use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use reid_core::archive::{load_model, save_model};
use reid_core::config::RunConfig;
use reid_core::error::ErrorKind;
use reid_core::eval::{
    load_dataset, load_image, run_experiment, synth_generate, train_model, write_dataset, write_report, SynthParams,
};
use reid_core::odboa::{build_bag, match_bags, select_pairs, selection_pairs, MultiShotMethod};
use reid_core::{CameraId, Error, PersonId, PersonImage, Seed};

#[derive(Parser)]
#[command(name = "reid", version, about = "Person re-identification with orientation-driven bags of appearances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic multi-camera dataset with a manifest.
    Synth(SynthArgs),
    /// Train codebooks, orientation classifier and metrics into an archive.
    Train(TrainArgs),
    /// Run the trial experiment and write CMC reports.
    Evaluate(EvaluateArgs),
    /// Score one probe image set against one gallery image set.
    Match(MatchArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60)]
    persons: usize,
    #[arg(long, default_value_t = 2)]
    cameras: u32,
    /// Distinct orientations rendered per person and camera.
    #[arg(long, default_value_t = 8)]
    orientations: usize,
    #[arg(long, default_value_t = 2016)]
    seed: u64,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Overrides `paths.manifest`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Overrides `paths.archive`.
    #[arg(long)]
    archive: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// A method name, or `all`. Overrides `experiment.methods`.
    #[arg(long, value_parser = parse_methods)]
    method: Option<Methods>,
    #[arg(long)]
    probe_shots: Option<usize>,
    #[arg(long)]
    gallery_shots: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Evaluate every smaller shot setting too.
    #[arg(long)]
    grid: bool,
    /// Overrides `paths.manifest`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Overrides `paths.output`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    archive: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    probe_images: Vec<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    gallery_images: Vec<PathBuf>,
    #[arg(long, default_value = "odboa-mid-pooling", value_parser = parse_method)]
    method: MultiShotMethod,
}

#[derive(Clone)]
struct Methods(Vec<MultiShotMethod>);

fn parse_method(s: &str) -> Result<MultiShotMethod, String> {
    MultiShotMethod::parse(s).ok_or_else(|| {
        let names: Vec<&str> = MultiShotMethod::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method {s:?}; expected all or one of {}", names.join(", "))
    })
}

fn parse_methods(s: &str) -> Result<Methods, String> {
    if s.eq_ignore_ascii_case("all") {
        Ok(Methods(MultiShotMethod::ALL.to_vec()))
    } else {
        parse_method(s).map(|m| Methods(vec![m]))
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("config: loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let params = SynthParams { persons: a.persons, cameras: a.cameras, orientations_per_cam: a.orientations };
    let images = synth_generate(Seed(a.seed), &params).context("synth: generating images")?;
    let rows = write_dataset(&a.out, &images).with_context(|| format!("synth: writing {}", a.out.display()))?;
    println!("wrote {} images to {}", rows.len(), a.out.display());
    Ok(())
}

fn dataset(cfg: &RunConfig) -> Result<reid_core::eval::Dataset> {
    let p = &cfg.paths;
    load_dataset(&p.manifest, p.image_root.as_deref(), (cfg.data.height, cfg.data.width))
        .with_context(|| format!("dataset: loading {}", p.manifest.display()))
}

fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    if let Some(m) = &a.manifest {
        cfg.paths.manifest = m.clone();
    }
    if let Some(d) = &a.archive {
        cfg.paths.archive = d.clone();
    }
    let ds = dataset(&cfg)?;
    let images: Vec<&PersonImage> = ds.images.iter().collect();
    let model = train_model(&images, &cfg, cfg.seed).context("train")?;
    let digest = save_model(&model, &cfg.paths.archive).context("archive: saving model")?;
    println!("archive={} digest={digest}", cfg.paths.archive.display());
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    let e = &mut cfg.experiment;
    if let Some(m) = &a.method {
        e.methods = m.0.clone();
    }
    if let Some(m) = a.probe_shots {
        e.probe_shots = m;
    }
    if let Some(n) = a.gallery_shots {
        e.gallery_shots = n;
    }
    if let Some(t) = a.trials {
        e.trials = t;
    }
    e.grid |= a.grid;
    if let Some(m) = &a.manifest {
        cfg.paths.manifest = m.clone();
    }
    if let Some(o) = &a.output {
        cfg.paths.output = o.clone();
    }
    cfg.validate().context("config")?;
    let ds = dataset(&cfg)?;
    let report = run_experiment(&cfg, &ds).context("evaluate")?;
    let files = write_report(&report, &cfg.paths.output).context("report: writing files")?;
    for r in &report.results {
        println!("{} {}v{} rank1={:.4}", r.method, r.probe_shots, r.gallery_shots, r.mean.rank1());
    }
    println!("wrote {} files to {}", files.len(), cfg.paths.output.display());
    Ok(())
}

fn read_bag_images(paths: &[PathBuf], person: &str, camera: u32, size: (u32, u32)) -> Result<Vec<PersonImage>> {
    paths
        .iter()
        .map(|p: &PathBuf| {
            let pixels = load_image(p, size).with_context(|| format!("match: reading {}", p.display()))?;
            Ok(PersonImage::new(pixels, PersonId(person.into()), CameraId(camera), None)?)
        })
        .collect()
}

fn bag_of(model: &reid_core::eval::TrainedModel, images: &[PersonImage]) -> Result<reid_core::odboa::AppearanceBag> {
    let sigs = images
        .iter()
        .map(|img| {
            let mut s = model.encode(img).context("match: encoding")?;
            s.meta.orientation = Some(model.orientation_of(img, true).context("match: orientation")?);
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_bag(&sigs).context("match: building bag")?)
}

fn match_cmd(a: &MatchArgs) -> Result<()> {
    let model = load_model(&a.archive).with_context(|| format!("archive: loading {}", a.archive.display()))?;
    let size = (model.height, model.width);
    let probe = bag_of(&model, &read_bag_images(&a.probe_images, "probe", 0, size)?)?;
    let gallery = bag_of(&model, &read_bag_images(&a.gallery_images, "gallery", 1, size)?)?;
    let seed = model.seed.derive(7);
    let score = match_bags(&probe, &gallery, &model.matching, a.method, seed).context("match")?;
    let pairs = selection_pairs(&select_pairs(&probe, &gallery, seed)?);
    println!("score={score:.6}");
    let list: Vec<String> = pairs.iter().map(|(i, j)| format!("({i},{j})")).collect();
    println!("pairs={}", list.join(";"));
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::kind) {
        Some(ErrorKind::Usage) => 1,
        Some(ErrorKind::Numeric) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Match(a) => {
            if let Some(p) = a.probe_images.iter().chain(&a.gallery_images).find(|p| !p.is_file()) {
                eprintln!("error: image {} does not exist", p.display());
                return ExitCode::from(2);
            }
            match_cmd(a)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
