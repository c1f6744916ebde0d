use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use cogdesk::dataset::{self, build_clips, load_episode, save_episode, write_clip_index, ClipSpec, Episode, TrainingClip};
use cogdesk::diffusion::{TrainConfig, Vocabulary};
use cogdesk::eval::ablation::format_table;
use cogdesk::eval::report::plot_report;
use cogdesk::eval::{ablation_table, evaluate, AblationConfig, Controller, RolloutConfig};
use cogdesk::flow2video::{self, VideoGenModel};
use cogdesk::flowcodec::default_f_max;
use cogdesk::image::Rgb8Image;
use cogdesk::policy::{train_policy, GoalPolicy, PolicyConfig, PolicyEpisode};
use cogdesk::sim2d::{Sim, SimConfig, TaskId};
use cogdesk::teleop::ServerConfig;
use cogdesk::text2flow::{self, FlowGenModel};

#[derive(Parser)]
#[command(name = "cogdesk", version, about = "Flow-guided video prediction on a 2D bimanual desk")]
struct Cli {
    /// TOML file with optional [sim], [clips], [train], [rollout], [ablation]
    /// and [teleop] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in [train], [ablation] and [teleop].
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record scripted expert episodes.
    Collect {
        #[arg(long)]
        task: TaskId,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cut episodes into clips with flow videos and write the clip index.
    Preprocess {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Text2flow {
        #[command(subcommand)]
        cmd: GenCmd,
    },
    Flow2video {
        #[command(subcommand)]
        cmd: GenCmd,
    },
    Policy {
        #[command(subcommand)]
        cmd: PolicyCmd,
    },
    /// Predict flow and video from a reset observation and pick a goal.
    Plan {
        #[arg(long)]
        text2flow: PathBuf,
        #[arg(long)]
        flow2video: PathBuf,
        #[arg(long)]
        task: TaskId,
        #[arg(long, default_value_t = 0)]
        env_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop success rate over seeds and runs.
    Eval {
        #[arg(long, value_enum, default_value_t = ControllerKind::Pipeline)]
        controller: ControllerKind,
        #[arg(long)]
        task: TaskId,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        text2flow: Option<PathBuf>,
        #[arg(long)]
        flow2video: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Report JSON; a bar chart is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train text-only and flow-guided video models and score them on held-out clips.
    Ablation {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        heldout: PathBuf,
    },
    /// Serve the live simulator over WebSocket.
    Teleop {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Subcommand)]
enum GenCmd {
    Train {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Flow to video only: drop the flow channels.
        #[arg(long)]
        text_only: bool,
        /// Start from an existing checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        task: TaskId,
        #[arg(long, default_value_t = 0)]
        env_seed: u64,
        /// Flow to video only: flow video frames (000.png ..) to condition on.
        #[arg(long)]
        flow: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PolicyCmd {
    Train {
        #[arg(long)]
        episodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Train the goal-free baseline.
        #[arg(long)]
        goal_free: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerKind {
    Pipeline,
    Oracle,
    GoalFree,
    Random,
}

#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    sim: SimConfig,
    clips: ClipSpec,
    train: TrainConfig,
    rollout: RolloutConfig,
    ablation: AblationConfig,
    teleop: Option<ServerConfig>,
    /// Ticks between policy chunk entries.
    policy_interval: Option<usize>,
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg: Config = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
        cfg.ablation.seed = s;
        if let Some(t) = &mut cfg.teleop {
            t.seed = s;
        }
    }
    cfg.sim.validate()?;
    cfg.clips.validate()?;
    cfg.train.validate()?;
    Ok(cfg)
}

/// Every episode directory directly under `dir`, in name order.
fn load_episodes(dir: &Path, sim: &Sim) -> anyhow::Result<Vec<(String, Episode)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    paths.sort();
    let res = sim.config().resolution;
    let mut out = Vec::new();
    for p in paths {
        let ep = load_episode(&p).with_context(|| format!("loading {}", p.display()))?;
        if ep.frames[0].dims() != (res, res) {
            bail!("{}: frames are {:?}, simulator renders {res}x{res}", p.display(), ep.frames[0].dims());
        }
        out.push((p.file_name().unwrap().to_string_lossy().into_owned(), ep));
    }
    if out.is_empty() {
        bail!("no episodes under {}", dir.display());
    }
    Ok(out)
}

fn clips(dir: &Path, sim: &Sim, spec: &ClipSpec) -> anyhow::Result<Vec<TrainingClip>> {
    let eps = load_episodes(dir, sim)?;
    let res = sim.config().resolution;
    let clips = build_clips(sim, &eps, spec, default_f_max(res, res))?;
    log::info!("{} episodes -> {} clips", eps.len(), clips.len());
    if clips.is_empty() {
        bail!("no clips survived preprocessing");
    }
    Ok(clips)
}

fn save_frames(frames: &[Rgb8Image], dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in frames.iter().enumerate() {
        f.save_png(dir.join(format!("{i:03}.png")))?;
    }
    Ok(())
}

fn load_frames(dir: &Path) -> anyhow::Result<Vec<Rgb8Image>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    paths.sort();
    Ok(paths.iter().map(Rgb8Image::load_png).collect::<Result<_, _>>()?)
}

fn reset_frame(sim: &Sim, task: TaskId, seed: u64) -> Rgb8Image {
    sim.render(&sim.reset(task, seed))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli)?;
    let sim = Sim::new(cfg.sim.clone())?;
    let res = cfg.sim.resolution;
    let interval = cfg.policy_interval.unwrap_or(cfg.clips.downsample_interval);
    match cli.cmd {
        Cmd::Collect { task, episodes, first_seed, out } => {
            std::fs::create_dir_all(&out)?;
            let mut ok = 0;
            for (i, ep) in dataset::collect(&sim, task, first_seed, episodes).into_iter().enumerate() {
                ok += ep.success as usize;
                save_episode(&ep, out.join(format!("{}_{:05}", task.as_str(), first_seed + i as u64)))?;
            }
            println!("saved {episodes} episodes to {} ({ok} successful)", out.display());
        }
        Cmd::Preprocess { episodes, out } => {
            let clips = clips(&episodes, &sim, &cfg.clips)?;
            write_clip_index(&out, &clips)?;
            println!("{} clips indexed in {}", clips.len(), out.display());
        }
        Cmd::Text2flow { cmd: GenCmd::Train { episodes, out, resume, text_only } } => {
            if text_only {
                bail!("--text-only applies to flow2video");
            }
            let clips = clips(&episodes, &sim, &cfg.clips)?;
            let model = match resume {
                Some(p) => FlowGenModel::load(&p)?,
                None => FlowGenModel::new(text2flow::default_config(res), Vocabulary::tasks(), cfg.train.seed)?,
            };
            let hist = text2flow::train_flow(&model, &clips, &cfg.train)?;
            model.save(&out)?;
            println!("final loss {:.4}, saved {}", cogdesk::diffusion::tail_mean(&hist, 50), out.display());
        }
        Cmd::Text2flow { cmd: GenCmd::Sample { checkpoint, task, env_seed, out, .. } } => {
            let model = FlowGenModel::load(&checkpoint)?;
            let flow = text2flow::generate_flow(&model, &reset_frame(&sim, task, env_seed), task.instruction(), env_seed)?;
            save_frames(&flow, &out)?;
        }
        Cmd::Flow2video { cmd: GenCmd::Train { episodes, out, text_only, resume } } => {
            let clips = clips(&episodes, &sim, &cfg.clips)?;
            let model = match resume {
                Some(p) => VideoGenModel::load(&p)?,
                None if text_only => VideoGenModel::text_only(flow2video::default_config(res), Vocabulary::tasks(), cfg.train.seed)?,
                None => VideoGenModel::new(flow2video::default_config(res), Vocabulary::tasks(), cfg.train.seed)?,
            };
            let hist = flow2video::train_video(&model, &clips, &cfg.train)?;
            model.save(&out)?;
            println!("final loss {:.4}, saved {}", cogdesk::diffusion::tail_mean(&hist, 50), out.display());
        }
        Cmd::Flow2video { cmd: GenCmd::Sample { checkpoint, task, env_seed, flow, out } } => {
            let model = VideoGenModel::load(&checkpoint)?;
            let flow = flow.map(|d| load_frames(&d)).transpose()?;
            let o0 = reset_frame(&sim, task, env_seed);
            let video = flow2video::predict_video_steps(
                &model,
                &o0,
                task.instruction(),
                flow.as_deref(),
                env_seed,
                cogdesk::diffusion::schedule::DEFAULT_SAMPLE_STEPS,
            )?;
            save_frames(&video, &out)?;
        }
        Cmd::Policy { cmd: PolicyCmd::Train { episodes, out, goal_free } } => {
            let eps: Vec<PolicyEpisode> = load_episodes(&episodes, &sim)?
                .iter()
                .map(|(_, ep)| PolicyEpisode::from_episode(&sim, ep))
                .collect::<Result<_, _>>()?;
            let policy = GoalPolicy::new(PolicyConfig::new(&cfg.sim, interval, !goal_free), cfg.train.seed)?;
            let hist = train_policy(&policy, &eps, &cfg.train)?;
            policy.save(&out)?;
            println!("final loss {:.4}, saved {}", cogdesk::diffusion::tail_mean(&hist, 50), out.display());
        }
        Cmd::Plan { text2flow: fp, flow2video: vp, task, env_seed, out } => {
            let fm = FlowGenModel::load(&fp)?;
            let vm = VideoGenModel::load(&vp)?;
            let o0 = reset_frame(&sim, task, env_seed);
            let (flow, video) = flow2video::predict_pipeline_steps(&fm, &vm, &o0, task.instruction(), env_seed, cfg.rollout.video_steps)?;
            save_frames(&flow, &out.join("flow"))?;
            save_frames(&video, &out.join("video"))?;
            let goal = cfg.rollout.goal_index.min(video.len() - 1);
            video[goal].save_png(out.join("goal.png"))?;
            println!("goal frame {goal} written to {}", out.join("goal.png").display());
        }
        Cmd::Eval { controller, task, policy, text2flow: fp, flow2video: vp, seeds, runs, out } => {
            let need = |p: Option<PathBuf>, flag: &str| p.with_context(|| format!("--{flag} is required for this controller"));
            let policy = match controller {
                ControllerKind::Random => None,
                _ => Some(GoalPolicy::load(&need(policy, "policy")?)?),
            };
            let models = match controller {
                ControllerKind::Pipeline => {
                    Some((FlowGenModel::load(&need(fp, "text2flow")?)?, VideoGenModel::load(&need(vp, "flow2video")?)?))
                }
                _ => None,
            };
            let ctl = match (controller, &policy, &models) {
                (ControllerKind::Pipeline, Some(policy), Some((fm, vm))) => Controller::Pipeline { fm, vm, policy },
                (ControllerKind::Oracle, Some(policy), _) => Controller::Oracle { policy },
                (ControllerKind::GoalFree, Some(policy), _) => Controller::GoalFree { policy },
                _ => Controller::Random,
            };
            let seeds: Vec<u64> = (0..seeds).collect();
            let report = evaluate(&sim, &ctl, task, &seeds, runs, &cfg.rollout)?;
            println!(
                "{} on {}: success {:.3} ± {:.3}",
                ctl.name(),
                task.as_str(),
                report.success_rate_mean,
                report.success_rate_std
            );
            if let Some(out) = out {
                report.write(&out)?;
                plot_report(&report, &out.with_extension("png"))?;
            }
        }
        Cmd::Ablation { train, heldout } => {
            let train = clips(&train, &sim, &cfg.clips)?;
            let heldout = clips(&heldout, &sim, &cfg.clips)?;
            let rows = ablation_table(&train, &heldout, &cfg.ablation)?;
            println!("{}", format_table(&rows));
        }
        Cmd::Teleop { port, host } => {
            let mut server = cfg.teleop.unwrap_or_default();
            if cli.config.is_some() && server.sim == SimConfig::default() {
                server.sim = cfg.sim.clone();
            }
            if let Some(s) = cli.seed {
                server.seed = s;
            }
            let addr = format!("{host}:{port}");
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let handle = cogdesk::teleop::spawn(&addr, server).await?;
                println!("teleop listening on ws://{}", handle.addr);
                let _ = tokio::signal::ctrl_c().await;
                handle.shutdown().await;
                Ok::<_, cogdesk::Error>(())
            })?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
