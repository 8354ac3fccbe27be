mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dqrnn::pipeline::{
    attention_dataset, checkpoint_kind, collision_dataset, compare_trace, evaluate_binary, evaluate_collision,
    evaluate_multi, predict_sequence, prepare_split, read_trace, train_attention_binary, train_attention_multi,
    train_collision, trajectory, write_trace, AttentionBinary, AttentionMulti, AttentionStage, ClassifierReport,
    CollisionModel, CollisionStage, Confusion, EvalReport, LabelOracle, LogRow, ModelKind, PipelineConfig,
    SequenceReport, TargetOracle, TraceRecord,
};
use dqrnn::plot::{three_pose_svg, three_poses, trajectory_svg};
use dqrnn::simulator::{augment, read_jsonl, simulate, write_csv, write_jsonl, AugmentPolicy, RigidBodyRecord};
use dqrnn::{Error, Vec3};
use log::info;

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "dqrnn", version, about = "Rigid-body prediction with dual-quaternion networks")]
struct Cli {
    /// TOML file with `[sim]` and `[train]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw of the command.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a record dataset (`.jsonl`, or `.csv` for export only).
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Append the eight rotated copies of every collision record.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one stage; writes model.json, train_log.csv and manifest.json.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Stage::Attention)]
        stage: Stage,
        #[arg(long, value_enum, default_value_t = Variant::Multi)]
        variant: Variant,
    },
    /// Predict a trajectory from its first record.
    Predict {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Attention checkpoint, or `oracle` to replay the recorded labels.
        #[arg(long)]
        attention: String,
        /// Collision checkpoint, or `oracle` to replay the recorded outcomes.
        #[arg(long)]
        collision: String,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Trajectory to start from; the first record's by default.
        #[arg(long)]
        trajectory: Option<u64>,
    },
    /// Score models on the test split; writes report.json, confusion.csv
    /// and, with both stages, trace.jsonl.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Attention checkpoint, or `oracle`.
        #[arg(long)]
        attention: Option<String>,
        /// Collision checkpoint, or `oracle`.
        #[arg(long)]
        collision: Option<String>,
        /// Sequence length; the whole test trajectory by default.
        #[arg(long)]
        steps: Option<usize>,
        /// Trajectory for the sequence check; the first test one by default.
        #[arg(long)]
        trajectory: Option<u64>,
    },
    /// Draw a predicted trace against the recorded one, or the pose figure.
    Plot {
        /// Trace file.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        /// Record file holding the recorded trajectory.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Figure::Trajectory)]
        figure: Figure,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Stage {
    Attention,
    Collision,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    Multi,
    Binary,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Figure {
    Trajectory,
    Poses,
}

/// Failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(e: Error, context: &str) -> Self {
        let code = match &e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => 3,
            Error::Config(_) => 4,
            Error::Malformed(_) => 5,
            Error::SchemaVersion { .. } => 6,
            Error::DegenerateInput(_) | Error::BranchCut(_) | Error::Shape(_) => 7,
            Error::Io(_) => 8,
        };
        let message = if context.is_empty() { e.to_string() } else { format!("{context}: {e}") };
        Failure { code, message }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::new(e, "")
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Context<T> {
    fn at(self, path: &Path) -> Outcome<T>;
}

impl<T> Context<T> for dqrnn::Result<T> {
    fn at(self, path: &Path) -> Outcome<T> {
        self.map_err(|e| Failure::new(e, &path.display().to_string()))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DQRNN_LOG", "info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Outcome<PipelineConfig> {
    match &cli.config {
        Some(p) => PipelineConfig::load(p).at(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn read_records(path: &Path) -> Outcome<Vec<RigidBodyRecord>> {
    let f = File::open(path).map_err(Error::from).at(path)?;
    read_jsonl(BufReader::new(f)).at(path)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(Error::from).at(dir)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(Error::from).at(path)?))
}

/// Writes records and reads JSON output back to confirm it parses.
fn write_records(path: &Path, records: &[RigidBodyRecord]) -> Outcome<()> {
    let w = create(path)?;
    if is_csv(path) {
        write_csv(w, records).at(path)
    } else {
        write_jsonl(w, records).at(path)?;
        let back = read_records(path)?;
        if back.len() != records.len() {
            return Err(Failure::new(Error::Malformed("written record count differs".into()), &path.display().to_string()));
        }
        Ok(())
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Outcome<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::new(Error::Malformed(e.to_string()), ""))?;
    std::io::Write::write_all(&mut w, b"\n").map_err(Error::from).at(path)?;
    std::io::Write::flush(&mut w).map_err(Error::from).at(path)
}

fn write_text(path: &Path, text: &str) -> Outcome<()> {
    let mut w = create(path)?;
    std::io::Write::write_all(&mut w, text.as_bytes()).map_err(Error::from).at(path)?;
    std::io::Write::flush(&mut w).map_err(Error::from).at(path)
}

fn log_epoch(r: &LogRow) {
    let acc = r.accuracy.map_or(String::new(), |a| format!(" val_acc {a:.4}"));
    let paths = r.path_losses.map_or(String::new(), |p| format!(" paths {:.3e} {:.3e} {:.3e}", p[0], p[1], p[2]));
    info!("epoch {:>4} loss {:.5} val_loss {:.5}{acc}{paths} ({:.1}s)", r.epoch, r.loss, r.val_loss, r.seconds);
}

fn run(cli: &Cli) -> Outcome<()> {
    let cfg = load_config(cli)?;
    let mut m = RunManifest::new(cli, &cfg)?;
    match &cli.command {
        Command::Simulate { out } => {
            info!("simulating {} records, seed {}", cfg.sim.n_records, cli.seed);
            let records = simulate(&cfg.sim, cli.seed)?;
            write_records(out, &records)?;
            m.output(out)?;
            m.write_beside(out)?;
        }
        Command::Augment { input, out } => {
            let records = read_records(input)?;
            m.input(input)?;
            if records.iter().any(|r| r.augmentation != 0) {
                return Err(Failure::new(Error::Config("records are already augmented".into()), &input.display().to_string()));
            }
            let aug = augment(&records, AugmentPolicy::CollisionsOnly)?;
            info!("{} records, {} after augmentation", records.len(), aug.len());
            write_records(out, &aug)?;
            m.output(out)?;
            m.write_beside(out)?;
        }
        Command::Train { input, out, stage, variant } => {
            train(&cfg, cli.seed, input, out, *stage, *variant, &mut m)?;
            m.write_in(out)?;
        }
        Command::Predict { input, out, attention, collision, steps, trajectory: id } => {
            let records = read_records(input)?;
            m.input(input)?;
            let id = id.unwrap_or_else(|| records.first().map_or(0, |r| r.trajectory));
            let truth = trajectory(&records, id);
            if truth.is_empty() {
                return Err(Failure::usage(format!("no records for trajectory {id}")));
            }
            let mut att = attention_stage(attention, &truth, &mut m)?;
            let mut col = collision_stage(collision, &truth, cfg.sim.interval(), &mut m)?;
            let trace = predict_sequence(&mut *att, &mut *col, &truth[0], cfg.sim.box_half_extent, *steps, cfg.sim.interval())?;
            write_trace(create(out)?, &trace).at(out)?;
            read_trace(BufReader::new(File::open(out).map_err(Error::from).at(out)?)).at(out)?;
            let flagged = trace.iter().filter(|t| t.out_of_domain).count();
            info!("predicted {} steps of trajectory {id}; {flagged} out of domain", steps);
            m.output(out)?;
            m.write_beside(out)?;
        }
        Command::Eval { input, out, attention, collision, steps, trajectory: id } => {
            eval(&cfg, input, out, attention.as_deref(), collision.as_deref(), *steps, *id, &mut m)?;
            m.write_in(out)?;
        }
        Command::Plot { input, truth, out, figure } => {
            let svg = match figure {
                Figure::Poses => {
                    let p = three_poses(
                        Vec3::new(1.0, 0.5, 0.5),
                        Vec3::new(1.0, 1.0, 1.0),
                        std::f64::consts::FRAC_PI_2,
                        Vec3::new(1.0, 1.5, -1.0),
                    )?;
                    three_pose_svg(&p)
                }
                Figure::Trajectory => {
                    let Some(input) = input else { return Err(Failure::usage("--in <trace> is required")) };
                    let trace = read_trace(BufReader::new(File::open(input).map_err(Error::from).at(input)?)).at(input)?;
                    m.input(input)?;
                    let recorded = match truth {
                        Some(t) => {
                            m.input(t)?;
                            recorded_for(&read_records(t)?, &trace)
                        }
                        None => Vec::new(),
                    };
                    trajectory_svg(&trace, &recorded)
                }
            };
            write_text(out, &svg)?;
            m.output(out)?;
            m.write_beside(out)?;
        }
    }
    Ok(())
}

/// Recorded states matching a trace: same trajectory, from its first step.
fn recorded_for(records: &[RigidBodyRecord], trace: &[TraceRecord]) -> Vec<RigidBodyRecord> {
    let Some(first) = trace.first() else { return Vec::new() };
    trajectory(records, first.record.trajectory)
        .into_iter()
        .filter(|r| r.step >= first.record.step)
        .take(trace.len())
        .collect()
}

fn attention_stage(
    arg: &str,
    truth: &[RigidBodyRecord],
    m: &mut RunManifest,
) -> Outcome<Box<dyn AttentionStage>> {
    if arg == "oracle" {
        return Ok(Box::new(LabelOracle(truth.iter().map(|r| r.collision_label).collect())));
    }
    let p = Path::new(arg);
    m.input(p)?;
    Ok(match checkpoint_kind(p).at(p)? {
        ModelKind::AttentionMulti => Box::new(AttentionMulti::load(p).at(p)?),
        ModelKind::AttentionBinary => Box::new(AttentionBinary::load(p).at(p)?),
        ModelKind::Collision => {
            return Err(Failure::new(Error::Config("expected an attention checkpoint".into()), arg));
        }
    })
}

fn collision_stage(
    arg: &str,
    truth: &[RigidBodyRecord],
    dt: f64,
    m: &mut RunManifest,
) -> Outcome<Box<dyn CollisionStage>> {
    if arg == "oracle" {
        return Ok(Box::new(TargetOracle::from_records(truth, dt)?));
    }
    let p = Path::new(arg);
    m.input(p)?;
    Ok(Box::new(CollisionModel::load(p).at(p)?))
}

fn train(
    cfg: &PipelineConfig,
    seed: u64,
    input: &Path,
    out: &Path,
    stage: Stage,
    variant: Variant,
    m: &mut RunManifest,
) -> Outcome<()> {
    let records = read_records(input)?;
    m.input(input)?;
    let t = &cfg.train;
    let split = prepare_split(&records, t.split, t.augment)?;
    info!("split: {} train, {} validation, {} test records", split.train.len(), split.val.len(), split.test.len());
    let model_path = out.join("model.json");
    let log_path = out.join("train_log.csv");
    let mut cb = |r: &LogRow| log_epoch(r);
    let log = match stage {
        Stage::Attention => {
            let h = cfg.sim.box_half_extent;
            let (tr, va) = (attention_dataset(&split.train, h)?, attention_dataset(&split.val, h)?);
            match variant {
                Variant::Multi => {
                    let (model, log) = train_attention_multi(&tr, &va, t, seed, &mut cb)?;
                    create(&model_path)?;
                    model.save(&model_path).at(&model_path)?;
                    AttentionMulti::load(&model_path).at(&model_path)?;
                    log
                }
                Variant::Binary => {
                    let (model, log) = train_attention_binary(&tr, &va, t, seed, &mut cb)?;
                    create(&model_path)?;
                    model.save(&model_path).at(&model_path)?;
                    AttentionBinary::load(&model_path).at(&model_path)?;
                    log
                }
            }
        }
        Stage::Collision => {
            let (h, dt) = (cfg.sim.box_half_extent, cfg.sim.interval());
            let (tr, va) = (collision_dataset(&split.train, h, dt)?, collision_dataset(&split.val, h, dt)?);
            let (model, log) = train_collision(&tr, &va, t, seed, &mut cb)?;
            create(&model_path)?;
            model.save(&model_path).at(&model_path)?;
            CollisionModel::load(&model_path).at(&model_path)?;
            log
        }
    };
    log.write_csv(create(&log_path)?).at(&log_path)?;
    if let Some(b) = log.best() {
        info!("best epoch {} (val_loss {:.5}{})", b.epoch, b.val_loss, b.accuracy.map_or(String::new(), |a| format!(", val_acc {a:.4}")));
    }
    m.output(&model_path)?;
    m.output(&log_path)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    cfg: &PipelineConfig,
    input: &Path,
    out: &Path,
    attention: Option<&str>,
    collision: Option<&str>,
    steps: Option<usize>,
    id: Option<u64>,
    m: &mut RunManifest,
) -> Outcome<()> {
    if attention.is_none() && collision.is_none() {
        return Err(Failure::usage("eval needs --attention and/or --collision"));
    }
    let records = read_records(input)?;
    m.input(input)?;
    let t = &cfg.train;
    let split = prepare_split(&records, t.split, t.augment)?;
    let (h, dt) = (cfg.sim.box_half_extent, cfg.sim.interval());
    let mut report = EvalReport::default();

    if let Some(a) = attention {
        let test = attention_dataset(&split.test, h)?;
        let rep = if a == "oracle" {
            let mut c = Confusion::default();
            for s in &test {
                c.add(s.label, s.label);
            }
            report.attention_variant = Some("oracle".into());
            ClassifierReport::from_confusion(c, 0.0)
        } else {
            let p = Path::new(a);
            m.input(p)?;
            match checkpoint_kind(p).at(p)? {
                ModelKind::AttentionMulti => {
                    report.attention_variant = Some("multi".into());
                    evaluate_multi(&AttentionMulti::load(p).at(p)?, &test)?
                }
                ModelKind::AttentionBinary => {
                    report.attention_variant = Some("binary".into());
                    evaluate_binary(&AttentionBinary::load(p).at(p)?, &test)?
                }
                ModelKind::Collision => return Err(Failure::new(Error::Config("expected an attention checkpoint".into()), a)),
            }
        };
        info!("attention test accuracy {:.4} over {} samples", rep.accuracy, rep.samples);
        let path = out.join("confusion.csv");
        rep.confusion.write_csv(create(&path)?).at(&path)?;
        m.output(&path)?;
        report.attention = Some(rep);
    }

    if let Some(c) = collision.filter(|c| *c != "oracle") {
        let p = Path::new(c);
        m.input(p)?;
        let model = CollisionModel::load(p).at(p)?;
        let rep = evaluate_collision(&model, &collision_dataset(&split.test, h, dt)?)?;
        info!("collision test losses {:?}", rep.path_losses);
        report.collision = Some(rep);
    }

    if let (Some(a), Some(c)) = (attention, collision) {
        let id = id.or_else(|| split.test.first().map(|r| r.trajectory)).unwrap_or(0);
        let truth = trajectory(&records, id);
        if truth.is_empty() {
            return Err(Failure::usage(format!("no records for trajectory {id}")));
        }
        let n = steps.unwrap_or(truth.len() - 1);
        let mut att = attention_stage(a, &truth, m)?;
        let mut col = collision_stage(c, &truth, dt, m)?;
        let trace = predict_sequence(&mut *att, &mut *col, &truth[0], h, n, dt)?;
        let cmp = compare_trace(&trace, &truth)?;
        let seq = SequenceReport::new(id, &cmp);
        match seq.first_attention_error {
            Some(k) => info!("first attention error at step {k}; free-flight prefix error {:.2e}", seq.free_prefix_max_error),
            None => info!("no attention error over {} compared steps", cmp.position_errors.len().saturating_sub(1)),
        }
        let path = out.join("trace.jsonl");
        write_trace(create(&path)?, &trace).at(&path)?;
        m.output(&path)?;
        report.sequence = Some(seq);
    }

    let path = out.join("report.json");
    write_json(&path, &report)?;
    m.output(&path)?;
    Ok(())
}
