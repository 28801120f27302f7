use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use vlgrasp::geometry::{
    contacts_to_rect, lift_rect_to_6dof, rect_to_contacts, CameraExtrinsics, CameraIntrinsics,
    ContactPair, DepthMap, GraspRect, Point2, DEFAULT_JAW_PX,
};
use vlgrasp::harness::{
    emit_report, evaluate, load_dataset, load_predictions, write_jsonl, EvalConfig, RecordJson,
    ReportFormat,
};
use vlgrasp::parsing::{parse_response, TaskKind};
use vlgrasp::qc::{annotate_contacts, qc_report};
use vlgrasp::rewards::{RewardBreakdown, RewardConfig};
use vlgrasp::rl::{train_toy, write_curve_csv, Algo, Objective, SceneKind, ToyConfig};
use vlgrasp::service::{self, RewardRequest, WireGroundTruth};

#[derive(Parser)]
#[command(
    name = "vlgrasp",
    version,
    about = "Grasp reasoning rewards, evaluation and toy RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score predictions against a dataset and print a metrics table.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long, default_value_t = DEFAULT_JAW_PX)]
        contact_jaw: f64,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Score one response file against a ground-truth file.
    Reward {
        #[arg(long)]
        task: TaskKind,
        #[arg(long)]
        gt_file: PathBuf,
        #[arg(long)]
        response_file: PathBuf,
        /// Run-length mask to score segmentation answers with.
        #[arg(long)]
        external_mask: Option<PathBuf>,
        #[command(flatten)]
        reward: RewardFlags,
    },
    /// Parse a model response read from stdin.
    Parse {
        #[arg(long)]
        task: TaskKind,
    },
    /// Dataset quality summary.
    Qc {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Fill contact pairs from grasps and masks.
    AnnotateContacts {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Convert between grasp representations, one JSON value per line.
    Convert {
        #[command(subcommand)]
        kind: ConvertKind,
    },
    /// Train the toy policy and write its learning curve as CSV.
    TrainToy {
        #[arg(long, default_value = "grpo")]
        algo: Algo,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 8)]
        group: usize,
        #[arg(long, default_value = "grasp")]
        objective: Objective,
        #[arg(long, default_value = "rect")]
        scene: SceneKind,
        /// Action grid as NXxNYxNA.
        #[arg(long, value_parser = parse_grid)]
        grid: Option<[usize; 3]>,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the reward service.
    Serve {
        #[arg(long, value_enum, default_value = "stdio")]
        transport: Transport,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        reward: RewardFlags,
    },
}

#[derive(Subcommand)]
enum ConvertKind {
    /// `[cx, cy, theta_deg, opening, jaw]` to `[[x1, y1], [x2, y2]]`.
    RectToContacts {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// `[[x1, y1], [x2, y2]]` to `[cx, cy, theta_deg, opening, jaw]`.
    ContactsToRect {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_JAW_PX)]
        jaw: f64,
    },
    /// `[cx, cy, theta_deg, opening, jaw]` to a pose in the robot frame.
    #[command(name = "lift-6dof")]
    Lift6dof {
        #[arg(long)]
        intrinsics: PathBuf,
        #[arg(long)]
        depth: PathBuf,
        /// `{"rotation": [[..];3], "translation": [..]}`; identity when absent.
        #[arg(long)]
        extrinsics: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Stdio,
    Tcp,
}

#[derive(Args)]
struct RewardFlags {
    #[arg(long, default_value_t = 0.5)]
    tau_iou: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.9)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    huber_delta: f64,
    #[arg(long, default_value_t = DEFAULT_JAW_PX)]
    contact_jaw: f64,
    /// Image size used when a request does not carry one.
    #[arg(long, default_value_t = 640.0)]
    image_w: f64,
    #[arg(long, default_value_t = 480.0)]
    image_h: f64,
}

impl RewardFlags {
    fn config(&self) -> Result<RewardConfig, Failure> {
        let cfg = RewardConfig {
            tau_iou: self.tau_iou,
            huber_delta: self.huber_delta,
            alpha: self.alpha,
            beta: self.beta,
            image_w: self.image_w,
            image_h: self.image_h,
            contact_jaw: self.contact_jaw,
        };
        cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
        Ok(cfg)
    }
}

fn parse_grid(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = s.split(['x', 'X']).collect();
    let bad = || format!("grid must look like 16x16x8, got '{s}'");
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut g = [0; 3];
    for (slot, p) in g.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(g)
}

enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Failure::Usage(anyhow!("--jobs must be at least 1"))),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
            Ok(pool.install(f))
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> CliResult {
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

/// File or stdin, one JSON value per non-blank line.
fn json_lines<T: for<'de> Deserialize<'de>>(input: Option<&Path>) -> anyhow::Result<Vec<T>> {
    let reader: Box<dyn BufRead> = match input {
        Some(p) => Box::new(BufReader::new(
            fs::File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(io::stdin().lock()),
    };
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?);
    }
    Ok(out)
}

fn grasp_from_array(a: [f64; 5]) -> anyhow::Result<GraspRect> {
    let [cx, cy, deg, opening, jaw] = a;
    Ok(GraspRect::from_degrees(cx, cy, deg, opening, jaw)?)
}

fn contact_array(c: &ContactPair) -> [[f64; 2]; 2] {
    [[c.p1.x, c.p1.y], [c.p2.x, c.p2.y]]
}

#[derive(Deserialize)]
struct ExtrinsicsFile {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

#[derive(Serialize)]
struct PoseOut {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

/// Ground-truth file for `reward`: the wire ground truth plus an optional
/// image size.
#[derive(Deserialize)]
struct GtFile {
    #[serde(flatten)]
    gt: WireGroundTruth,
    image_w: Option<f64>,
    image_h: Option<f64>,
}

#[derive(Serialize)]
struct TrainSummary {
    algo: Algo,
    objective: Objective,
    seed: u64,
    baseline_reward: f64,
    final_expected_reward: f64,
    improvement: f64,
    final_argmax: [usize; 3],
    optimum: Option<[usize; 3]>,
    hit_optimum: Option<bool>,
}

fn convert(kind: ConvertKind) -> CliResult {
    let mut lines = Vec::new();
    match kind {
        ConvertKind::RectToContacts { input } => {
            for a in json_lines::<[f64; 5]>(input.as_deref())? {
                let c = rect_to_contacts(&grasp_from_array(a)?);
                lines.push(serde_json::to_string(&contact_array(&c))?);
            }
        }
        ConvertKind::ContactsToRect { input, jaw } => {
            for [a, b] in json_lines::<[[f64; 2]; 2]>(input.as_deref())? {
                let c = ContactPair::new(Point2::new(a[0], a[1]), Point2::new(b[0], b[1]))?;
                let r = contacts_to_rect(&c, jaw)?;
                let out = [r.cx, r.cy, r.theta_degrees(), r.opening, r.jaw];
                lines.push(serde_json::to_string(&out)?);
            }
        }
        ConvertKind::Lift6dof {
            intrinsics,
            depth,
            extrinsics,
            input,
        } => {
            let k: CameraIntrinsics = read_json(&intrinsics)?;
            let k = CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy)?;
            let d: DepthMap = read_json(&depth)?;
            let d = DepthMap::new(d.width, d.height, d.data)?;
            let ext = match extrinsics {
                Some(p) => {
                    let e: ExtrinsicsFile = read_json(&p)?;
                    CameraExtrinsics::from_rows(e.rotation, e.translation)?
                }
                None => CameraExtrinsics::identity(),
            };
            for (i, a) in json_lines::<[f64; 5]>(input.as_deref())?
                .into_iter()
                .enumerate()
            {
                let pose = lift_rect_to_6dof(&grasp_from_array(a)?, &d, &k, &ext)
                    .with_context(|| format!("grasp {}", i + 1))?;
                lines.push(serde_json::to_string(&PoseOut {
                    rotation: pose.rotation_rows(),
                    translation: pose.translation_array(),
                })?);
            }
        }
    }
    let mut out = io::stdout().lock();
    for l in lines {
        writeln!(out, "{l}")?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Eval {
            dataset,
            pred,
            format,
            contact_jaw,
            jobs,
        } => {
            let ds = load_dataset(&dataset)?;
            let preds = load_predictions(&pred)?;
            let cfg = EvalConfig { contact_jaw };
            let report = with_jobs(jobs, || evaluate(&ds, &preds, &cfg))??;
            print!("{}", emit_report(&report, format));
        }
        Command::Reward {
            task,
            gt_file,
            response_file,
            external_mask,
            reward,
        } => {
            let cfg = reward.config()?;
            let gt: GtFile = read_json(&gt_file)?;
            let req = RewardRequest {
                id: Value::Null,
                task: task.to_string(),
                raw_text: read_text(&response_file)?,
                gt: gt.gt,
                image_w: gt.image_w,
                image_h: gt.image_h,
                external_mask: external_mask
                    .map(|p| read_text(&p).map(|s| s.trim().to_string()))
                    .transpose()?,
                group_id: None,
            };
            let resp = service::handle(&req, &cfg).map_err(|e| {
                anyhow!(
                    "{}{}",
                    e.message.unwrap_or(e.error),
                    e.field.map(|f| format!(" ({f})")).unwrap_or_default()
                )
            })?;
            print_json(&RewardBreakdown {
                r_format: resp.r_format,
                r_task: resp.r_task,
                r_total: resp.r_total,
                components: resp.components,
                valid: resp.valid,
                diagnostics: resp.diagnostics,
            })?;
        }
        Command::Parse { task } => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text)?;
            print_json(&parse_response(&text, task))?;
        }
        Command::Qc { dataset, jobs } => {
            let ds = load_dataset(&dataset)?;
            print_json(&with_jobs(jobs, || qc_report(&ds))?)?;
        }
        Command::AnnotateContacts { dataset, out, jobs } => {
            let mut ds = load_dataset(&dataset)?;
            let report = with_jobs(jobs, || annotate_contacts(&mut ds))?;
            fs::write(&out, write_jsonl(ds.iter().map(RecordJson::from)))
                .with_context(|| format!("writing {}", out.display()))?;
            print_json(&report)?;
        }
        Command::Convert { kind } => convert(kind)?,
        Command::TrainToy {
            algo,
            seed,
            iters,
            group,
            objective,
            scene,
            grid,
            out,
        } => {
            let cfg = ToyConfig {
                iterations: iters,
                group_size: group,
                algo,
                objective,
                scene,
                grid: grid.unwrap_or(ToyConfig::default_grid(objective)),
                ..ToyConfig::default()
            };
            cfg.validate().map_err(|e| Failure::Usage(e.into()))?;
            let res = train_toy(seed, &cfg)?;
            let summary = TrainSummary {
                algo,
                objective,
                seed,
                baseline_reward: res.baseline_reward,
                final_expected_reward: res.final_expected_reward,
                improvement: res.final_expected_reward - res.baseline_reward,
                final_argmax: res.final_argmax,
                optimum: res.optimum,
                hit_optimum: res.optimum.map(|o| o == res.final_argmax),
            };
            match out {
                Some(p) => {
                    let f = fs::File::create(&p)
                        .with_context(|| format!("creating {}", p.display()))?;
                    let mut w = io::BufWriter::new(f);
                    write_curve_csv(&res.curve, &mut w)?;
                    w.flush()?;
                    print_json(&summary)?;
                }
                None => {
                    write_curve_csv(&res.curve, io::stdout().lock())?;
                    eprintln!("{}", serde_json::to_string(&summary)?);
                }
            }
        }
        Command::Serve {
            transport,
            host,
            port,
            jobs,
            reward,
        } => {
            let cfg = reward.config()?;
            match transport {
                Transport::Stdio => with_jobs(jobs, || service::serve_stdio(&cfg))??,
                Transport::Tcp => {
                    let listener = TcpListener::bind((host.as_str(), port))
                        .with_context(|| format!("binding {host}:{port}"))?;
                    eprintln!("listening on {}", listener.local_addr()?);
                    with_jobs(jobs, || service::serve_tcp(listener, cfg))??;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
