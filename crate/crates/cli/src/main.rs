//! Command-line driver: synthesize scenarios, run the tracking and activity
//! recognition pipeline, evaluate against ground truth, and render frames.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cohort::config::PipelineConfig;
use cohort::eval::clear_mot;
use cohort::io::{read_detections, read_tracks, write_detections, write_tracks, write_windows};
use cohort::pipeline::run_offline;
use cohort::render::{render_frame, FrameScene};
use cohort::sim::{preset, preset_alphabets, synthesize, Scenario};
use cohort::types::Collective;

#[derive(Parser)]
#[command(name = "cohort", version, about = "Multi-person tracking and activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneClass {
    Crossing,
    Waiting,
    Queuing,
    Walking,
    Talking,
    Gathering,
    Dismissal,
    Chasing,
    Jogging,
    Dancing,
}

impl From<SceneClass> for Collective {
    fn from(c: SceneClass) -> Collective {
        match c {
            SceneClass::Crossing => Collective::Crossing,
            SceneClass::Waiting => Collective::Waiting,
            SceneClass::Queuing => Collective::Queuing,
            SceneClass::Walking => Collective::Walking,
            SceneClass::Talking => Collective::Talking,
            SceneClass::Gathering => Collective::Gathering,
            SceneClass::Dismissal => Collective::Dismissal,
            SceneClass::Chasing => Collective::Chasing,
            SceneClass::Jogging => Collective::Jogging,
            SceneClass::Dancing => Collective::Dancing,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a detection stream from a scenario
    Simulate {
        /// Built-in scenario class
        #[arg(long, conflicts_with = "scenario")]
        class: Option<SceneClass>,
        /// Scenario description file (TOML)
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 160)]
        duration: u64,
        /// Detections output file
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth tracks here
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the pipeline over a detection stream
    Track {
        /// Detections input file
        #[arg(long)]
        input: PathBuf,
        /// Pipeline configuration (TOML); defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dotted-key overrides, e.g. --set grouping.mu_dist=80
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Restrict the run alphabets to a built-in scenario class
        #[arg(long)]
        class: Option<SceneClass>,
        /// Tracks output file (MOT rows)
        #[arg(long)]
        tracks: PathBuf,
        /// Per-window activity output file (JSON lines)
        #[arg(long)]
        activities: Option<PathBuf>,
    },
    /// Compare hypothesis tracks against ground truth
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        /// Emit the report as JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// Render one frame of a track file as SVG
    Render {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        frame: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 800)]
        width: u32,
        #[arg(long, default_value_t = 600)]
        height: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_input_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn is_input_error(err: &anyhow::Error) -> bool {
    use cohort::Error::*;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<cohort::Error>() {
            return matches!(
                e,
                MalformedInput { .. }
                    | OutOfOrderFrame { .. }
                    | InvalidConfig(_)
                    | DuplicateAgent(_)
                    | Io(_)
            );
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<toml::de::Error>().is_some()
        {
            return true;
        }
    }
    false
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            class,
            scenario,
            seed,
            duration,
            out,
            truth,
        } => {
            let mut scenario = match (class, scenario) {
                (Some(class), None) => preset(class.into(), seed, duration),
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    toml::from_str::<Scenario>(&text)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                _ => anyhow::bail!("exactly one of --class and --scenario is required"),
            };
            if class.is_some() {
                scenario.seed = seed;
            }
            let sim = synthesize(&scenario)?;
            write_detections(writer(&out)?, &sim.detections)?;
            if let Some(path) = truth {
                write_tracks(writer(&path)?, &sim.truth.tracks)?;
            }
            eprintln!(
                "wrote {} detections over {} frames",
                sim.detections.len(),
                scenario.duration
            );
            Ok(())
        }
        Command::Track {
            input,
            config,
            sets,
            class,
            tracks,
            activities,
        } => {
            let mut value = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    text.parse::<toml::Value>()
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => toml::Value::Table(Default::default()),
            };
            for set in &sets {
                let (key, val) = set
                    .split_once('=')
                    .with_context(|| format!("override {set:?} is not KEY=VALUE"))?;
                let patch: toml::Value = format!("{key} = {val}")
                    .parse()
                    .with_context(|| format!("override {set:?}"))?;
                merge(&mut value, patch);
            }
            let text = toml::to_string(&value).context("serializing merged config")?;
            let mut cfg: PipelineConfig = PipelineConfig::from_toml_str(&text)?;
            if let Some(class) = class {
                cfg.alphabets = preset_alphabets(class.into());
            }
            let detections = read_detections(reader(&input)?)?;
            let (outputs, track_set) = run_offline(cfg, &detections)?;
            write_tracks(writer(&tracks)?, &track_set)?;
            if let Some(path) = activities {
                write_windows(writer(&path)?, &outputs)?;
            }
            eprintln!(
                "tracked {} targets across {} windows",
                track_set.len(),
                outputs.len()
            );
            Ok(())
        }
        Command::Evaluate {
            truth,
            tracks,
            iou,
            json,
        } => {
            let gt = read_tracks(reader(&truth)?)?;
            let hyp = read_tracks(reader(&tracks)?)?;
            let report = clear_mot(&gt, &hyp, iou)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
            Ok(())
        }
        Command::Render {
            tracks,
            frame,
            out,
            width,
            height,
        } => {
            let track_set = read_tracks(reader(&tracks)?)?;
            let svg = render_frame(&FrameScene {
                frame,
                tracks: &track_set,
                interactions: &Default::default(),
                scene: None,
                size: (width, height),
            });
            let mut w = writer(&out)?;
            w.write_all(svg.as_bytes())?;
            Ok(())
        }
    }
}

fn reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("opening {}", path.display())
    })?))
}

fn writer(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("creating {}", path.display())
    })?))
}

fn merge(base: &mut toml::Value, patch: toml::Value) {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
