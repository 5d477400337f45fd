//! `fovea`: train codebooks, explore scenes, analyze transition tensors and
//! run the acceptance suite.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fovea_core::pipeline::{self, AnalyzeOptions, Config, RunPaths, SourceKind};
use fovea_core::retina::FieldId;
use fovea_core::verify::{self, Scale, SuiteOptions};
use fovea_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_FAILURE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "fovea",
    version,
    about = "Sensorimotor structure discovery with a foveated sensor"
)]
struct Cli {
    /// Output root directory.
    #[arg(long, global = true, env = "FOVEA_OUT", default_value = "fovea-out")]
    out: PathBuf,

    /// key=value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Extra config entry (key=value), applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the nine field codebooks.
    Train(SceneArgs),
    /// Explore scenes with trained codebooks and accumulate the tensor.
    Explore {
        #[command(flatten)]
        scenes: SceneArgs,
        /// Also write the binary event log.
        #[arg(long)]
        event_log: bool,
        /// Codebook directory (defaults to <out>/codebooks).
        #[arg(long)]
        codebooks: Option<PathBuf>,
    },
    /// Compute entropies, similarity sets and reports from a tensor.
    Analyze(AnalyzeArgs),
    /// train, explore and analyze in sequence.
    Run {
        #[command(flatten)]
        scenes: SceneArgs,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run the acceptance suite.
    Verify {
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Natural images (expanded with dihedral variants below 100 files).
        #[arg(long)]
        natural_dir: Option<PathBuf>,
    },
    /// Write the tile-world codebooks and tensor under the output root.
    TileWorld {
        #[arg(long, default_value_t = verify::TILE_WORLD_SACCADES)]
        saccades: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct SceneArgs {
    /// random | directory
    #[arg(long, visible_alias = "scene-source")]
    source: Option<String>,
    /// Image directory for directory sources.
    #[arg(long)]
    scene_dir: Option<PathBuf>,
    /// Total saccades; the scene count is saccades / per-scene.
    #[arg(long)]
    saccades: Option<usize>,
    #[arg(long)]
    per_scene: Option<usize>,
    /// Number of scenes; with --saccades alone it sets the saccades per scene.
    #[arg(long)]
    scenes: Option<usize>,
    /// Seed of this command's own walk (codebook walk for train, exploration walk otherwise).
    #[arg(long)]
    seed: Option<u64>,
    /// Side of generated random scenes.
    #[arg(long)]
    scene_size: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long)]
    codebook_seed: Option<u64>,
    #[arg(long)]
    explore_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Tensor file (defaults to <out>/tensor.bin).
    #[arg(long)]
    tensor: Option<PathBuf>,
    /// Codebook directory (defaults to <out>/codebooks).
    #[arg(long)]
    codebooks: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Build similarity sets for every field, not only the fovea.
    #[arg(long)]
    all_anchors: bool,
    /// Exit with status 2 unless coupled blocks rank lowest for every saccade.
    #[arg(long)]
    verify: bool,
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let mut config = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    for entry in &cli.set {
        let (k, v) = entry.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!("--set expects key=value, got {entry}"))
        })?;
        config.set(k, v)?;
    }
    Ok(config)
}

fn apply_scene_args(config: &mut Config, args: &SceneArgs) -> Result<(), Error> {
    if let Some(s) = &args.source {
        config.set("scene.source", s)?;
    }
    if let Some(dir) = &args.scene_dir {
        config.scene_path = Some(dir.clone());
        if args.source.is_none() {
            config.scene_source = SourceKind::Directory;
        }
    }
    if let Some(n) = args.per_scene {
        config.saccades_per_scene = n;
    }
    if let Some(n) = args.scenes {
        config.scene_count = n;
    }
    if let Some(total) = args.saccades {
        if args.per_scene.is_none() && args.scenes.is_some() {
            if config.scene_count == 0 || total % config.scene_count != 0 {
                return Err(Error::InvalidArgument(format!(
                    "--saccades {total} is not a multiple of {} scenes",
                    config.scene_count
                )));
            }
            config.saccades_per_scene = total / config.scene_count;
        } else {
            if config.saccades_per_scene == 0 || total % config.saccades_per_scene != 0 {
                return Err(Error::InvalidArgument(format!(
                    "--saccades {total} is not a multiple of {} saccades per scene",
                    config.saccades_per_scene
                )));
            }
            if args
                .scenes
                .is_some_and(|n| n * config.saccades_per_scene != total)
            {
                return Err(Error::InvalidArgument(
                    "--saccades, --scenes and --per-scene disagree".into(),
                ));
            }
            config.scene_count = total / config.saccades_per_scene;
        }
    }
    if let Some(n) = args.scene_size {
        config.scene_size = n;
    }
    if let Some(n) = args.samples {
        config.samples_per_field = n;
    }
    if let Some(s) = args.scene_seed {
        config.scene_seed = s;
    }
    if let Some(s) = args.codebook_seed {
        config.codebook_seed = s;
    }
    if let Some(s) = args.explore_seed {
        config.explore_seed = s;
    }
    Ok(())
}

fn analyze(paths: &RunPaths, args: &AnalyzeArgs, config: &Config) -> Result<bool, Error> {
    let epsilon = args.epsilon.unwrap_or(config.epsilon);
    if epsilon > 1.0 {
        eprintln!("warning: epsilon {epsilon} exceeds 1; every similarity set will be empty");
    }
    let options = AnalyzeOptions {
        epsilon,
        anchor_field: if args.all_anchors {
            None
        } else {
            Some(FieldId::FOVEA)
        },
    };
    let tensor = args.tensor.clone().unwrap_or_else(|| paths.tensor());
    let codebooks = args.codebooks.clone().unwrap_or_else(|| paths.codebooks());
    let outcome = pipeline::cmd_analyze(&tensor, &codebooks, &paths.analysis(), &options)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let report = &outcome.report;
    println!(
        "mean H coupled {:.4}, uncoupled {:.4}; rank agreement {}",
        report.mean_coupled,
        report.mean_uncoupled,
        report.rank_agreement()
    );
    println!(
        "wrote {} files to {}",
        outcome.outputs.len(),
        paths.analysis().display()
    );
    Ok(!args.verify || outcome.verified())
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut config = load_config(&cli)?;
    let paths = RunPaths::new(&cli.out);
    match &cli.command {
        Command::Train(scenes) => {
            apply_scene_args(&mut config, scenes)?;
            if let Some(seed) = scenes.seed {
                config.codebook_seed = seed;
            }
            let outcome = pipeline::cmd_train(&config, &paths.codebooks())?;
            println!(
                "trained 9 codebooks in {:.1} s into {}",
                outcome.elapsed.as_secs_f64(),
                paths.codebooks().display()
            );
            Ok(true)
        }
        Command::Explore {
            scenes,
            event_log,
            codebooks,
        } => {
            apply_scene_args(&mut config, scenes)?;
            if let Some(seed) = scenes.seed {
                config.explore_seed = seed;
            }
            config.event_log |= *event_log;
            let codebooks = codebooks.clone().unwrap_or_else(|| paths.codebooks());
            let outcome = pipeline::cmd_explore(&config, &codebooks, &paths.root)?;
            println!(
                "{} events ({} scene changes suppressed) in {:.1} s; tensor at {}",
                outcome.log.events,
                outcome.log.suppressed_boundaries,
                outcome.elapsed.as_secs_f64(),
                paths.tensor().display()
            );
            Ok(true)
        }
        Command::Analyze(args) => analyze(&paths, args, &config),
        Command::Run { scenes, epsilon } => {
            apply_scene_args(&mut config, scenes)?;
            pipeline::cmd_train(&config, &paths.codebooks())?;
            pipeline::cmd_explore(&config, &paths.codebooks(), &paths.root)?;
            let args = AnalyzeArgs {
                tensor: None,
                codebooks: None,
                epsilon: *epsilon,
                all_anchors: false,
                verify: false,
            };
            analyze(&paths, &args, &config)
        }
        Command::Verify { scale, natural_dir } => {
            let options = SuiteOptions {
                scale: *scale,
                natural_dir: natural_dir.clone(),
                work_dir: cli.out.join(format!("verify-{scale}")),
            };
            let outcomes = verify::run_suite(&options, |o| print!("{o}"));
            println!();
            for o in &outcomes {
                println!("{}", o.line());
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
        Command::TileWorld { saccades, seed } => {
            let world = verify::TileWorld::build(*seed)?;
            let tensor = world.explore(*saccades, *seed, Some(&cli.out))?;
            println!(
                "tile world: {} events written to {}",
                tensor.events(),
                paths.tensor().display()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(e @ Error::InvalidArgument(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
