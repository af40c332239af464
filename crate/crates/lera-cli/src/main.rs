//! Command line front end for the replanning harness.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};

use lera_core::backend::BackendError;
use lera_core::metrics::{emit_report, ReportFormat};
use lera_core::suite::{run_suite, trace, write_outputs, SuiteConfig};
use lera_core::tasks::{task_by_id, task_library};
use lera_core::world::Observation;
use lera_core::{Family, TaskSpec};

#[derive(Parser)]
#[command(
    name = "lera",
    version,
    about = "Deterministic replanning harness for tabletop and household robot tasks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> ReportFormat {
        match value {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Json => ReportFormat::Structured,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Tabletop,
    Household,
}

impl From<FamilyArg> for Family {
    fn from(value: FamilyArg) -> Family {
        match value {
            FamilyArg::Tabletop => Family::Tabletop,
            FamilyArg::Household => Family::Household,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RenderFormat {
    /// Canonical JSON scene state
    Snapshot,
    /// Natural-language scene description
    Text,
    /// Binary PPM image
    Raster,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment suite described by a TOML config
    Run {
        /// Path to the suite config
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output_dir)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the backend's comfort level
        #[arg(long)]
        jobs: Option<usize>,
        /// Report format echoed to stdout
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
    },
    /// List the built-in tasks
    ListTasks {
        /// Restrict to one task family
        #[arg(long, value_enum)]
        family: Option<FamilyArg>,
    },
    /// Print a task's initial scene in the chosen rendering
    Render {
        /// Task id, as shown by list-tasks
        #[arg(long)]
        task: String,
        #[arg(long, value_enum, default_value_t = RenderFormat::Text)]
        format: RenderFormat,
        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply the task's start-of-episode perturbations first
        #[arg(long)]
        perturbed: bool,
    },
    /// Re-print one episode from a traces.jsonl file
    Replay {
        /// Path to the trace file
        #[arg(long)]
        trace: PathBuf,
        /// Episode index, as recorded in the trace
        #[arg(long)]
        episode: usize,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err:#}");
            let backend_config_trouble = err.chain().any(|cause| {
                matches!(
                    cause.downcast_ref::<BackendError>(),
                    Some(BackendError::MissingAuth)
                )
            });
            std::process::exit(if backend_config_trouble { 3 } else { 1 });
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, out, jobs, format } => cmd_run(config, out, jobs, format),
        Command::ListTasks { family } => cmd_list_tasks(family.map(Family::from)),
        Command::Render { task, format, out, perturbed } => {
            cmd_render(&task, format, out, perturbed)
        }
        Command::Replay { trace, episode } => cmd_replay(&trace, episode),
    }
}

fn cmd_run(
    config_path: PathBuf,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    format: FormatArg,
) -> anyhow::Result<()> {
    let mut config = SuiteConfig::from_path(&config_path)
        .with_context(|| format!("loading {}", config_path.display()))?;
    if let Some(dir) = out {
        config.output_dir = dir;
    }
    let backend = config.make_backend()?;
    let run = run_suite(&config, &backend, jobs)?;
    let written = write_outputs(&run, &config.output_dir)?;
    print!("{}", emit_report(&run.result, format.into()));
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_list_tasks(family: Option<Family>) -> anyhow::Result<()> {
    let mut stdout = std::io::stdout().lock();
    for task in task_library() {
        if family.is_some_and(|f| f != task.family) {
            continue;
        }
        writeln!(
            stdout,
            "{:<20} {:<10} {:>2} steps  {:>2} goals  {}",
            task.id,
            format!("{:?}", task.family).to_lowercase(),
            task.gt_plan.len(),
            task.goals.len(),
            task.instruction
        )?;
    }
    Ok(())
}

fn cmd_render(
    task_id: &str,
    format: RenderFormat,
    out: Option<PathBuf>,
    perturbed: bool,
) -> anyhow::Result<()> {
    let task: TaskSpec =
        task_by_id(task_id).ok_or_else(|| anyhow!("no such task: {task_id}"))?;
    let mut scene = task.initial_scene.clone();
    if perturbed {
        scene.apply_perturbations(&task.perturbations)?;
    }
    let observation = Observation::capture(&scene);
    let bytes: Vec<u8> = match format {
        RenderFormat::Snapshot => {
            let mut s = observation.snapshot.into_bytes();
            s.push(b'\n');
            s
        }
        RenderFormat::Text => observation.text.into_bytes(),
        RenderFormat::Raster => observation.raster.to_ppm(),
    };
    match out {
        Some(path) => std::fs::write(&path, bytes)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn cmd_replay(trace_path: &Path, episode: usize) -> anyhow::Result<()> {
    let lines = trace::read_jsonl(trace_path)
        .with_context(|| format!("reading {}", trace_path.display()))?;
    let episodes = trace::group_episodes(&lines)?;
    let found = episodes
        .iter()
        .find(|e| e.episode == episode)
        .ok_or_else(|| anyhow!("episode {episode} is not in this trace"))?;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "episode {}: task {}, agent {}, seed {} (episode seed {:#018x})",
        found.episode, found.task, found.agent, found.seed, found.episode_seed
    )?;
    for (i, event) in found.events.iter().enumerate() {
        match event {
            lera_core::agent::TraceEvent::Action(a) => {
                let verdict = if a.checker_passed { "pass" } else { "fail" };
                writeln!(
                    stdout,
                    "  {:>3}. {} -> {:?}: {} [checker: {verdict}]",
                    i + 1,
                    a.action,
                    a.status,
                    a.message
                )?;
            }
            lera_core::agent::TraceEvent::Replan(r) => {
                let outcome = match (r.parsed_ok, r.success) {
                    (false, _) => "no plan adopted".to_string(),
                    (true, Some(true)) => format!(
                        "adopted {} steps, recovered",
                        r.adopted_plan.as_ref().map_or(0, Vec::len)
                    ),
                    (true, _) => format!(
                        "adopted {} steps, did not recover",
                        r.adopted_plan.as_ref().map_or(0, Vec::len)
                    ),
                };
                writeln!(
                    stdout,
                    "  {:>3}. replan ({}, {} calls): {outcome}",
                    i + 1,
                    r.variant,
                    r.calls_made
                )?;
            }
        }
    }
    match (&found.error, found.success) {
        (Some(message), _) => writeln!(stdout, "  error: {message}")?,
        (None, Some(success)) => writeln!(
            stdout,
            "  result: {}, {}/{} goals{}",
            if success { "success" } else { "failure" },
            found.satisfied.unwrap_or(0),
            found.total.unwrap_or(0),
            if found.budget_exhausted == Some(true) {
                " (budget exhausted)"
            } else {
                ""
            }
        )?,
        (None, None) => writeln!(stdout, "  result: incomplete trace")?,
    }
    Ok(())
}
