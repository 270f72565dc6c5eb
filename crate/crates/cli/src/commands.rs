use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use emgtype_core::augment::acm_statistics;
use emgtype_core::decode::{CharLm, Vocabulary};
use emgtype_core::encoder::{count_flops, count_params, Model, ModelConfig};
use emgtype_core::io::{load_checkpoint, read_session, save_checkpoint, write_session, Checkpoint};
use emgtype_core::normalize::RtnConfig;
use emgtype_core::pipeline::{run_pipeline, run_pipeline_streaming, PipelineConfig, PipelineOutput};
use emgtype_core::simulate::{rigged_model, simulate_session};

use crate::config::FileConfig;
use crate::{Cli, CliError, Command, DecodeArgs};

const DEFAULT_CHUNK: usize = 32;
const DEFAULT_DRAWS: usize = 1_000_000;
const DEFAULT_SECONDS: f64 = 30.0;

struct Context {
    file: FileConfig,
    seed: u64,
    jobs: Option<usize>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let ctx = Context {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        jobs: cli.jobs.or(file.jobs),
        file,
    };
    if ctx.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::Decode(args) => decode(&ctx, &args, Mode::Batch, false),
        Command::Stream { decode: args, chunk } => {
            let chunk = chunk.or(ctx.file.chunk).unwrap_or(DEFAULT_CHUNK);
            if chunk == 0 {
                return Err(CliError::Usage("--chunk must be at least 1".into()));
            }
            decode(&ctx, &args, Mode::Streaming(chunk), false)
        }
        Command::EvalCer { decode: args, streaming } => {
            let mode = if streaming {
                Mode::Streaming(ctx.file.chunk.unwrap_or(DEFAULT_CHUNK))
            } else {
                Mode::Batch
            };
            decode(&ctx, &args, mode, true)
        }
        Command::Flops {
            preset,
            checkpoint,
            seconds,
        } => {
            let seconds = seconds.or(ctx.file.seconds).unwrap_or(DEFAULT_SECONDS);
            if !(seconds > 0.0) {
                return Err(CliError::Usage("--seconds must be positive".into()));
            }
            for (name, cfg) in configs(&preset, checkpoint.as_deref())? {
                let f = count_flops(&cfg, seconds);
                emit(&FlopsRecord {
                    model: name,
                    seconds,
                    frames: f.frames,
                    macs: f.macs,
                    flops: f.flops,
                    gflops: f.gflops(),
                });
            }
            Ok(())
        }
        Command::Params { preset, checkpoint } => {
            for (name, cfg) in configs(&preset, checkpoint.as_deref())? {
                emit(&ParamsRecord {
                    model: name,
                    params: count_params(&cfg),
                    receptive_field: cfg.receptive_field(),
                });
            }
            Ok(())
        }
        Command::AugmentStats {
            draws,
            f_max,
            apply_probability,
        } => {
            let mut acm = ctx.file.acm.clone();
            if let Some(f) = f_max {
                acm.f_max = f;
            }
            if let Some(p) = apply_probability {
                acm.apply_probability = p;
            }
            let draws = draws.or(ctx.file.draws).unwrap_or(DEFAULT_DRAWS);
            if draws == 0 {
                return Err(CliError::Usage("--draws must be at least 1".into()));
            }
            emit(&acm_statistics(&acm, draws, ctx.seed)?);
            Ok(())
        }
        Command::Simulate {
            out,
            count,
            duration,
            text,
        } => simulate(&ctx, &out, count, duration, text),
        Command::LmCheck { lm, strict } => lm_check(&lm, strict),
        Command::InitCheckpoint { out, preset, rigged } => {
            let vocab = Vocabulary::keyboard();
            let model = if rigged {
                rigged_model(&vocab, &ctx.file.rigged)?
            } else {
                let name = preset.as_deref().unwrap_or("splashnet-mini");
                Model::random(preset_config(name)?, ctx.seed)?
            };
            save_checkpoint(&Checkpoint::from_model(&model, vocab), &out)?;
            emit(&ParamsRecord {
                model: out.display().to_string(),
                params: model.num_parameters() as u64,
                receptive_field: model.config().receptive_field(),
            });
            Ok(())
        }
    }
}

/// Prefixes a library error with the file it came from.
fn at(path: &Path, e: emgtype_core::Error) -> CliError {
    let name = path.display();
    match CliError::from(e) {
        CliError::Usage(m) => CliError::Usage(format!("{name}: {m}")),
        CliError::Data(m) => CliError::Data(format!("{name}: {m}")),
        CliError::Numeric(m) => CliError::Numeric(format!("{name}: {m}")),
    }
}

fn emit<T: Serialize>(record: &T) {
    println!("{}", serde_json::to_string(record).expect("records serialize"));
}

fn preset_config(name: &str) -> Result<ModelConfig, CliError> {
    ModelConfig::preset(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown preset {name:?}; expected one of {}",
            ModelConfig::PRESETS.join(", ")
        ))
    })
}

fn configs(presets: &[String], checkpoint: Option<&Path>) -> Result<Vec<(String, ModelConfig)>, CliError> {
    let mut out = Vec::new();
    if let Some(path) = checkpoint {
        out.push((path.display().to_string(), load_checkpoint(path).map_err(|e| at(path, e))?.config));
    }
    for p in presets {
        out.push((p.clone(), preset_config(p)?));
    }
    if out.is_empty() {
        for p in ModelConfig::PRESETS {
            out.push((p.to_string(), preset_config(p)?));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct FlopsRecord {
    model: String,
    seconds: f64,
    frames: u64,
    macs: u64,
    flops: u64,
    gflops: f64,
}

#[derive(Serialize)]
struct ParamsRecord {
    model: String,
    params: u64,
    receptive_field: usize,
}

#[derive(Clone, Copy)]
enum Mode {
    Batch,
    Streaming(usize),
}

#[derive(Serialize)]
struct SessionResult {
    id: String,
    participant: String,
    path: String,
    text: String,
    reference: String,
    frames: usize,
    cer: Option<f64>,
    substitutions: Option<usize>,
    deletions: Option<usize>,
    insertions: Option<usize>,
    reference_length: Option<usize>,
    runtime_s: f64,
}

#[derive(Serialize)]
struct Summary {
    summary: bool,
    sessions: usize,
    failed: usize,
    cer: Option<f64>,
    substitutions: usize,
    deletions: usize,
    insertions: usize,
    reference_length: usize,
}

fn pipeline_config(ctx: &Context, args: &DecodeArgs, vocab: &Vocabulary) -> PipelineConfig {
    let mut cfg = ctx.file.pipeline.clone();
    let d = &mut cfg.decode;
    d.blank_index = vocab.blank();
    if let Some(b) = args.beam_size {
        d.beam_size = b;
    }
    if let Some(w) = args.lm_weight {
        d.lm_weight = w;
    }
    if let Some(b) = args.insertion_bonus {
        d.insertion_bonus = b;
    }
    if let Some(w) = args.rtn_window {
        cfg.rtn = RtnConfig {
            warmup_frames: cfg.rtn.warmup_frames,
            epsilon: cfg.rtn.epsilon,
            ..RtnConfig::sliding_seconds(w)
        };
    }
    cfg
}

fn decode_one(
    path: &Path,
    model: &Model,
    vocab: &Vocabulary,
    cfg: &PipelineConfig,
    lm: Option<&CharLm>,
    mode: Mode,
) -> Result<SessionResult, CliError> {
    let start = Instant::now();
    let session = read_session(path)?;
    let out: PipelineOutput = match mode {
        Mode::Batch => run_pipeline(&session, model, vocab, cfg, lm)?,
        Mode::Streaming(chunk) => run_pipeline_streaming(&session, model, vocab, cfg, lm, chunk)?,
    };
    let cer = out.cer;
    Ok(SessionResult {
        id: session.session_id.clone(),
        participant: session.participant_id.clone(),
        path: path.display().to_string(),
        reference: session.text(),
        text: out.text,
        frames: out.frames,
        cer: cer.map(|c| c.cer),
        substitutions: cer.map(|c| c.substitutions),
        deletions: cer.map(|c| c.deletions),
        insertions: cer.map(|c| c.insertions),
        reference_length: cer.map(|c| c.reference_length),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Usage(format!("cannot start workers: {e}")))
}

fn decode(ctx: &Context, args: &DecodeArgs, mode: Mode, summary: bool) -> Result<(), CliError> {
    let ckpt_path = args
        .checkpoint
        .clone()
        .or_else(|| ctx.file.checkpoint.clone())
        .ok_or_else(|| CliError::Usage("no checkpoint given (--checkpoint)".into()))?;
    let ckpt = load_checkpoint(&ckpt_path).map_err(|e| at(&ckpt_path, e))?;
    let model = ckpt.model()?;
    let vocab = ckpt.vocabulary;
    let lm = match args.lm.clone().or_else(|| ctx.file.lm.clone()) {
        Some(p) => Some(CharLm::load(&p).map_err(|e| at(&p, e))?),
        None => None,
    };
    let cfg = pipeline_config(ctx, args, &vocab);
    cfg.decode.validate(&vocab)?;
    cfg.rtn.validate()?;

    let results: Vec<Result<SessionResult, CliError>> = thread_pool(ctx.jobs)?.install(|| {
        args.sessions
            .par_iter()
            .map(|p| decode_one(p, &model, &vocab, &cfg, lm.as_ref(), mode))
            .collect()
    });

    let mut first_error = None;
    let mut total = Summary {
        summary: true,
        sessions: 0,
        failed: 0,
        cer: None,
        substitutions: 0,
        deletions: 0,
        insertions: 0,
        reference_length: 0,
    };
    for (path, r) in args.sessions.iter().zip(results) {
        match r {
            Ok(rec) => {
                total.sessions += 1;
                total.substitutions += rec.substitutions.unwrap_or(0);
                total.deletions += rec.deletions.unwrap_or(0);
                total.insertions += rec.insertions.unwrap_or(0);
                total.reference_length += rec.reference_length.unwrap_or(0);
                emit(&rec);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                total.failed += 1;
                first_error.get_or_insert(e);
            }
        }
    }
    if summary {
        if total.reference_length > 0 {
            let edits = total.substitutions + total.deletions + total.insertions;
            total.cer = Some(100.0 * edits as f64 / total.reference_length as f64);
        }
        emit(&total);
    }
    match first_error {
        None => Ok(()),
        Some(e) => Err(e.with_message(format!("{} of {} sessions failed", total.failed, args.sessions.len()))),
    }
}

#[derive(Serialize)]
struct SimulatedRecord {
    id: String,
    path: String,
    seed: u64,
    samples: usize,
    keys: usize,
}

fn simulate(
    ctx: &Context,
    out: &Path,
    count: usize,
    duration: Option<f64>,
    text: Option<String>,
) -> Result<(), CliError> {
    let mut spec = ctx.file.simulation.clone();
    if let Some(d) = duration {
        spec.duration_s = d;
    }
    if text.is_some() {
        spec.text = text;
    }
    if !(spec.duration_s > 0.0) {
        return Err(CliError::Usage("duration must be positive".into()));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    let vocab = Vocabulary::keyboard();
    let base = spec.session_id.clone();
    let written: Vec<Result<SimulatedRecord, CliError>> = thread_pool(ctx.jobs)?.install(|| {
        (0..count)
            .into_par_iter()
            .map(|i| {
                let mut spec = spec.clone();
                if count > 1 {
                    spec.session_id = format!("{base}-{i}");
                }
                let seed = ctx.seed.wrapping_add(i as u64);
                let s = simulate_session(&spec, &vocab, seed)?;
                let path: PathBuf = out.join(format!("{}.emg", spec.session_id));
                write_session(&s, &path)?;
                Ok(SimulatedRecord {
                    id: spec.session_id,
                    path: path.display().to_string(),
                    seed,
                    samples: s.emg.len(),
                    keys: s.labels.len(),
                })
            })
            .collect()
    });
    for r in written {
        emit(&r?);
    }
    Ok(())
}

#[derive(Serialize)]
struct LmReport {
    path: String,
    order: usize,
    counts: Vec<usize>,
    max_context_mass: f64,
    normalized: bool,
}

fn lm_check(path: &Path, strict: bool) -> Result<(), CliError> {
    let lm = CharLm::load(path).map_err(|e| at(path, e))?;
    let mass = lm.max_context_mass()?;
    let report = LmReport {
        path: path.display().to_string(),
        order: lm.order(),
        counts: lm.counts(),
        max_context_mass: mass,
        normalized: mass <= 1.0 + 1e-4,
    };
    emit(&report);
    if !mass.is_finite() {
        return Err(CliError::Numeric("context mass is not finite".into()));
    }
    if strict && !report.normalized {
        return Err(CliError::Data(format!("context mass {mass} exceeds one")));
    }
    Ok(())
}
