//! The `artist` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use artist_core::codebook::{fit_codebooks, DEFAULT_MAX_ITERS};
use artist_core::geometry::seq_to_velocities;
use artist_core::metrics::{self, MetricsReport};
use artist_core::nn::aggregate_interactions;
use artist_core::scoring::inpaint;
use artist_core::synth::{generate, tracks_from_rows};
use artist_core::tracker::run_sequence;
use artist_core::training::{init_model, train_with_progress, TrackSeq};
use artist_core::{rng, InteractionRep, MotionModel};
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{is_override, parse_inpainting, Settings};
use crate::error::{self, Result, ToolError};
use crate::motfile;
use crate::sequence;

#[derive(Debug, Parser)]
#[command(
    name = "artist",
    version,
    about = "Probabilistic multi-object tracking with tracklet inpainting"
)]
pub struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Positional arguments: paths, then any `namespace.key=value` overrides.
#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(value_name = "ARGS")]
    pub args: Vec<String>,
}

impl Inputs {
    fn split(&self) -> (Vec<PathBuf>, Vec<&str>) {
        let (o, p): (Vec<&String>, Vec<&String>) = self.args.iter().partition(|a| is_override(a));
        (
            p.into_iter().map(PathBuf::from).collect(),
            o.into_iter().map(String::as_str).collect(),
        )
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit velocity codebooks on the ground truth of sequence directories.
    Cluster {
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint to write (codebook only).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Train the motion model on the ground truth of sequence directories.
    Train {
        /// Checkpoint to start from, e.g. the output of `cluster`.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-iteration loss CSV.
        #[arg(long)]
        loss: Option<PathBuf>,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Track the detections of one sequence directory.
    Track {
        #[arg(long)]
        model: PathBuf,
        /// Required number of motion classes in the checkpoint.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        inpainting: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Results file in MOTChallenge format.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Score results against ground truth: pairs of sequence directory and results file.
    Eval {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Sample gap continuations of one ground-truth track.
    Inpaint {
        #[arg(long)]
        model: PathBuf,
        /// Ground-truth identity to continue.
        #[arg(long)]
        id: u64,
        /// Last observed frame.
        #[arg(long)]
        frame: u32,
        #[arg(long)]
        gap: usize,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Generate a synthetic sequence directory.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        inputs: Inputs,
    },
}

fn settings(config: Option<&Path>, overrides: &[&str]) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(p) = config {
        s.apply_text(&error::read_to_string(p)?)?;
    }
    for o in overrides {
        s.apply(o)?;
    }
    Ok(s)
}

fn one_dir(paths: &[PathBuf]) -> Result<&Path> {
    match paths {
        [p] => Ok(p),
        _ => Err(ToolError::Config(format!(
            "expected one sequence directory, got {}",
            paths.len()
        ))),
    }
}

fn some_dirs(paths: &[PathBuf]) -> Result<&[PathBuf]> {
    if paths.is_empty() {
        return Err(ToolError::Config(
            "expected at least one sequence directory".into(),
        ));
    }
    Ok(paths)
}

/// Parse and run; output goes to `out`, diagnostics to standard error.
pub fn run_args<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| ToolError::Config(e.to_string()))?;
    execute(&cli, out)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = cli.config.as_deref();
    let stdout_err = |e| ToolError::io("<stdout>", e);
    match &cli.command {
        Command::Cluster {
            k,
            seed,
            out: path,
            inputs,
        } => {
            let (paths, ov) = inputs.split();
            let mut s = settings(cfg, &ov)?;
            if let Some(k) = *k {
                s.model.k = k;
            }
            s.model.validate()?;
            let seed = seed.unwrap_or(s.train.seed);
            let vels = sequence::corpus(some_dirs(&paths)?)?.velocities();
            let cb = fit_codebooks(&vels, s.model.k, seed, DEFAULT_MAX_ITERS)?;
            let sse = cb.sse(&vels);
            checkpoint::save(path, &Checkpoint::stub(s.model, cb))?;
            writeln!(out, "component,sse").map_err(stdout_err)?;
            for (name, v) in ["x", "y", "w", "h"].iter().zip(sse) {
                writeln!(out, "{name},{v:.6e}").map_err(stdout_err)?;
            }
        }
        Command::Train {
            init,
            iterations,
            seed,
            out: path,
            loss,
            inputs,
        } => {
            let (paths, ov) = inputs.split();
            let mut s = settings(cfg, &ov)?;
            if let Some(seed) = *seed {
                s.train.seed = seed;
            }
            if let Some(n) = *iterations {
                s.train.iterations = n;
            }
            s.train.validate()?;
            let corpus = sequence::corpus(some_dirs(&paths)?)?;
            let model = match init {
                Some(p) => {
                    let ck = checkpoint::load(p)?;
                    match ck.weights {
                        Some(_) => ck.into_model(None)?,
                        None => {
                            let config = artist_core::ModelConfig {
                                k: ck.codebook.k(),
                                ..s.model
                            };
                            MotionModel::new(config, ck.codebook, s.train.seed)?
                        }
                    }
                }
                None => init_model(&corpus, s.model, s.train.seed)?,
            };
            let mut csv = String::from("iteration,nll,rec,lambda,total\n");
            let outcome = train_with_progress(&corpus, model, &s.train, |r| {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.iteration, r.nll, r.rec, r.lambda, r.total
                ));
            })?;
            checkpoint::save(path, &Checkpoint::from_model(&outcome.model))?;
            if let Some(p) = loss {
                error::write(p, csv)?;
            }
            if let Some(last) = outcome.trace.last() {
                writeln!(
                    out,
                    "iterations {}, final nll {:.4}, rec {:.6}",
                    outcome.trace.len(),
                    last.nll,
                    last.rec
                )
                .map_err(stdout_err)?;
            }
        }
        Command::Track {
            model,
            k,
            inpainting,
            seed,
            out: path,
            inputs,
        } => {
            let (paths, ov) = inputs.split();
            let mut s = settings(cfg, &ov)?;
            if let Some(m) = inpainting {
                s.tracker.inpainting = parse_inpainting("--inpainting", m)?;
            }
            if let Some(seed) = *seed {
                s.tracker.seed = seed;
            }
            s.tracker.validate()?;
            let dir = one_dir(&paths)?;
            let model = checkpoint::load(model)?.into_model(*k)?;
            let info = sequence::read_info(dir)?;
            let (dets, dropped) = sequence::read_detections(dir)?;
            if dropped > 0 {
                eprintln!("warning: dropped {dropped} detections with non-positive size");
            }
            let rows = run_sequence(&dets, &model, info.dims, &s.tracker, Some(info.length))?;
            error::write(path, motfile::write_results(&rows))?;
            let ids: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.id).collect();
            writeln!(out, "{} rows, {} tracks", rows.len(), ids.len()).map_err(stdout_err)?;
        }
        Command::Eval { inputs } => {
            let (paths, ov) = inputs.split();
            settings(cfg, &ov)?;
            if paths.is_empty() || paths.len() % 2 != 0 {
                return Err(ToolError::Config(
                    "eval expects pairs of sequence directory and results file".into(),
                ));
            }
            let pairs: Vec<(&PathBuf, &PathBuf)> =
                paths.chunks(2).map(|c| (&c[0], &c[1])).collect();
            let reports = std::thread::scope(|sc| {
                let handles: Vec<_> = pairs
                    .iter()
                    .map(|(d, r)| sc.spawn(move || evaluate_pair(d, r)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("evaluation thread panicked"))
                    .collect::<Vec<_>>()
            });
            let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
            writeln!(out, "sequence,MOTA,IDF1,IDs,MT,ML,FP,FN").map_err(stdout_err)?;
            for (name, r) in &reports {
                writeln!(out, "{}", report_row(name, r)).map_err(stdout_err)?;
            }
            if reports.len() > 1 {
                let all: Vec<MetricsReport> = reports.iter().map(|(_, r)| r.clone()).collect();
                writeln!(out, "{}", report_row("COMBINED", &metrics::combine(&all)?))
                    .map_err(stdout_err)?;
            }
        }
        Command::Inpaint {
            model,
            id,
            frame,
            gap,
            samples,
            seed,
            out: path,
            inputs,
        } => {
            let (paths, ov) = inputs.split();
            let mut s = settings(cfg, &ov)?;
            if let Some(n) = *samples {
                s.tracker.samples = n;
            }
            if let Some(seed) = *seed {
                s.tracker.seed = seed;
            }
            s.tracker.validate()?;
            let dir = one_dir(&paths)?;
            let model = checkpoint::load(model)?.into_model(None)?;
            let csv = inpaint_csv(&model, dir, &s, *id, *frame, *gap)?;
            error::write(path, csv)?;
        }
        Command::Synth {
            seed,
            out: path,
            inputs,
        } => {
            let (paths, ov) = inputs.split();
            if !paths.is_empty() {
                return Err(ToolError::Config(format!(
                    "unexpected argument {}",
                    paths[0].display()
                )));
            }
            let mut s = settings(cfg, &ov)?;
            if let Some(seed) = *seed {
                s.synth.seed = seed;
            }
            let scn = s.synth.scenario(&mut rng::derived(s.synth.seed, 0, 0))?;
            let seq = generate(&scn, s.synth.seed)?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "synth".into());
            sequence::write_sequence(path, &name, &seq)?;
            writeln!(
                out,
                "{} frames, {} gt rows, {} detections",
                seq.frames,
                seq.gt.len(),
                seq.detections.len()
            )
            .map_err(stdout_err)?;
        }
    }
    Ok(())
}

fn evaluate_pair(dir: &Path, results: &Path) -> Result<(String, MetricsReport)> {
    let info = sequence::read_info(dir)?;
    let gt = sequence::read_gt(dir)?;
    let pred: Vec<_> = motfile::parse_gt(&error::read_to_string(results)?, None)?
        .iter()
        .map(|r| r.track_row())
        .collect();
    Ok((info.name, metrics::evaluate(&gt, &pred)?))
}

fn report_row(name: &str, r: &MetricsReport) -> String {
    format!(
        "{name},{:.4},{:.4},{},{:.4},{:.4},{},{}",
        r.mota, r.idf1, r.ids, r.mt, r.ml, r.fp, r.fn_
    )
}

/// Encoder latent of a run of boxes up to and including `frame`, if it has
/// at least two boxes by then.
fn latent_at(
    model: &MotionModel,
    run: &TrackSeq,
    frame: u32,
    dims: artist_core::FrameDims,
) -> Option<Vec<f64>> {
    if frame < run.start + 1 || frame > run.end() {
        return None;
    }
    let boxes = &run.boxes[..=(frame - run.start) as usize];
    let vels = seq_to_velocities(boxes, dims).ok()?;
    model.encode_tracklet(&vels).ok()
}

fn inpaint_csv(
    model: &MotionModel,
    dir: &Path,
    s: &Settings,
    id: u64,
    frame: u32,
    gap: usize,
) -> Result<String> {
    let info = sequence::read_info(dir)?;
    let gt = sequence::read_gt(dir)?;
    let mine: Vec<_> = gt.iter().filter(|r| r.id == id).copied().collect();
    let others: Vec<_> = gt.iter().filter(|r| r.id != id).copied().collect();
    let run = tracks_from_rows(&mine)
        .into_iter()
        .find(|t| t.start <= frame && frame <= t.end())
        .ok_or_else(|| ToolError::Config(format!("track {id} is not visible at frame {frame}")))?;
    let history = &run.boxes[..=(frame - run.start) as usize];
    let other_runs = tracks_from_rows(&others);
    let dim = model.config.interaction_dim;
    let interaction = |k: usize| -> InteractionRep {
        if k == 0 || !s.tracker.interactions_enabled {
            return InteractionRep::zeros(dim);
        }
        let f = run.start + k as u32;
        let latents: Vec<Vec<f64>> = other_runs
            .iter()
            .filter_map(|o| latent_at(model, o, f, info.dims))
            .collect();
        aggregate_interactions(&latents, dim)
    };
    let interactions: Vec<InteractionRep> = (0..history.len()).map(interaction).collect();
    let mut r = rng::derived(s.tracker.seed, id, frame as u64);
    let cands = inpaint(
        model,
        history,
        info.dims,
        &interactions,
        gap,
        0,
        s.tracker.samples,
        s.tracker.mode,
        &mut r,
    )?;
    let mut csv = String::from("candidate,frame,x,y,w,h,log_prob\n");
    for (i, c) in cands.iter().enumerate() {
        for (j, b) in c.boxes.iter().enumerate() {
            csv.push_str(&format!(
                "{i},{},{:.2},{:.2},{:.2},{:.2},{:.6}\n",
                frame as usize + j + 1,
                b.x,
                b.y,
                b.w,
                b.h,
                c.log_prob
            ));
        }
    }
    Ok(csv)
}
