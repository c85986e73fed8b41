//! `lbsvc` command line: tone-map, train, encode, decode, evaluate, and
//! dataset statistics for the scalable HDR codec.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation/format error,
//! 3 internal error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lbsvc::codec::{LbsvcModel, ModelConfig, Stage};
use lbsvc::error::Error;
use lbsvc::eval::{bd_rate, evaluate_model, RdCurve, RdPoint};
use lbsvc::frame::{read_clip, write_clip, Clip};
use lbsvc::stats::{stats_csv, ClipStats};
use lbsvc::train::{train_stage, TrainConfig};
use lbsvc::transfer::{apply_tone_curve, fit_curve_for_frames};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "lbsvc", about = "Learned bit-depth scalable video codec", version)]
struct Cli {
    /// Random seed for any stochastic subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = library default). LBSVC_DETERMINISTIC=1 forces 1.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a tone curve over an HDR clip and write the paired LDR frames.
    Tonemap(TonemapArgs),
    /// Run one training stage from a key-value config file.
    Train(TrainArgs),
    /// Encode a clip directory into a bitstream file.
    Encode(EncodeArgs),
    /// Decode a bitstream file into reconstructed frames.
    Decode(DecodeArgs),
    /// Encode sequences at several rate points and report RD statistics.
    Eval(EvalArgs),
    /// Compute dataset diversity statistics over a directory of clips.
    Stats(StatsArgs),
    /// BD-rate between two eval report CSV files.
    Bdrate(BdrateArgs),
}

#[derive(Args)]
struct TonemapArgs {
    /// Clip directory containing `hdr/%04d.pfm`.
    #[arg(long)]
    input: PathBuf,
    /// Output clip directory (receives `hdr/`, `ldr/`, `curve.txt`).
    #[arg(long)]
    output: PathBuf,
    /// Histogram bins for the tone-curve fit.
    #[arg(long, default_value_t = 64)]
    bins: usize,
    /// Exposure factor applied to HDR values before tone mapping.
    #[arg(long, default_value_t = 1.0)]
    exposure: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Key-value training config file.
    #[arg(long)]
    config: PathBuf,
    /// Directory of clip directories.
    #[arg(long)]
    data: PathBuf,
    /// Output checkpoint path (written as .safetensors + .json).
    #[arg(long)]
    out: PathBuf,
    /// Checkpoint to start from (required for EL and JOINT stages).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Metrics log file (default: stdout).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Train without the bit-depth enhancement conditioning (ablation).
    #[arg(long, default_value_t = false)]
    no_bem: bool,
}

#[derive(Args)]
struct EncodeArgs {
    /// Clip directory with `hdr/` and `ldr/` frames.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output bitstream file.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 32)]
    intra_period: usize,
    /// Encode at most this many frames.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct DecodeArgs {
    /// Input bitstream file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output clip directory for reconstructed frames.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of clip directories to evaluate.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated checkpoint paths, one per rate point.
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<PathBuf>,
    /// Output CSV report.
    #[arg(long)]
    report: PathBuf,
    /// Optional machine-readable lines report.
    #[arg(long)]
    lines: Option<PathBuf>,
    /// Optional RD plot (SVG).
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    intra_period: usize,
    #[arg(long, default_value_t = 96)]
    frames: usize,
}

#[derive(Args)]
struct StatsArgs {
    /// Directory of clip directories.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV report.
    #[arg(long)]
    report: PathBuf,
    /// Highlight threshold in cd/m^2.
    #[arg(long, default_value_t = 100.0)]
    threshold: f64,
}

#[derive(Args)]
struct BdrateArgs {
    /// Anchor eval report CSV.
    #[arg(long)]
    anchor: PathBuf,
    /// Test eval report CSV.
    #[arg(long)]
    test: PathBuf,
    /// Sequence name to compare (default: every common sequence).
    #[arg(long)]
    sequence: Option<String>,
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
    timestamp_unix: u64,
    artifact_sha256: std::collections::BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> lbsvc::Result<String> {
    let data = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&data)))
}

fn write_manifest(
    subcommand: &str,
    inputs: &[&Path],
    outputs: &[&Path],
    seed: u64,
) -> lbsvc::Result<()> {
    let mut hashes = std::collections::BTreeMap::new();
    for p in outputs {
        if p.is_file() {
            hashes.insert(p.display().to_string(), sha256_file(p)?);
        }
    }
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        seed,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        artifact_sha256: hashes,
    };
    let path = match outputs.first() {
        Some(p) => {
            let mut os = p.as_os_str().to_owned();
            os.push(".manifest.json");
            PathBuf::from(os)
        }
        None => PathBuf::from("lbsvc.manifest.json"),
    };
    std::fs::write(path, serde_json::to_string_pretty(&manifest).unwrap())?;
    Ok(())
}

fn load_dataset(dir: &Path) -> lbsvc::Result<Vec<Clip>> {
    if !dir.is_dir() {
        return Err(Error::validation(format!("{} is not a directory", dir.display())));
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    let mut clips = Vec::new();
    for e in entries {
        clips.push(read_clip(&e, 30.0)?);
    }
    if clips.is_empty() {
        return Err(Error::validation(format!("no clips found in {}", dir.display())));
    }
    Ok(clips)
}

fn cmd_tonemap(args: &TonemapArgs, seed: u64) -> lbsvc::Result<()> {
    let hdr_dir = args.input.join("hdr");
    if !hdr_dir.is_dir() {
        return Err(Error::validation(format!("missing {}", hdr_dir.display())));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&hdr_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "pfm").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::validation("no PFM frames to tone-map"));
    }
    let mut frames = Vec::new();
    for p in &paths {
        let mut f = lbsvc::frame::read_pfm(p)?;
        if args.exposure != 1.0 {
            for plane in f.planes.iter_mut() {
                for v in plane.iter_mut() {
                    *v *= args.exposure as f32;
                }
            }
        }
        frames.push(f);
    }
    let refs: Vec<&lbsvc::frame::HdrFrame> = frames.iter().collect();
    let curve = fit_curve_for_frames(&refs, args.bins, 255.0)?;
    let pairs: Vec<_> = frames
        .into_iter()
        .map(|f| {
            let ldr = apply_tone_curve(&f, &curve);
            (f, ldr)
        })
        .collect();
    let clip = Clip {
        name: args
            .output
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "clip".into()),
        fps: 30.0,
        frames: pairs,
    };
    write_clip(&clip, &args.output)?;
    let curve_path = args.output.join("curve.txt");
    std::fs::write(&curve_path, curve.to_text())?;
    println!("tonemapped {} frames into {}", clip.frames.len(), args.output.display());
    write_manifest("tonemap", &[&args.input], &[&curve_path], seed)
}

fn cmd_train(args: &TrainArgs, seed: u64) -> lbsvc::Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::validation(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut cfg = TrainConfig::from_text(&text)?;
    if seed != 0 {
        cfg.seed = seed;
    }
    let dataset = load_dataset(&args.data)?;

    let model = match (&args.resume, cfg.stage) {
        (Some(path), stage) => {
            let (model, manifest) = LbsvcModel::load(path)?;
            let prev = Stage::parse(&manifest.stage)?;
            let ok = matches!(
                (prev, stage),
                (Stage::Bl, Stage::Bl)
                    | (Stage::Bl, Stage::El)
                    | (Stage::El, Stage::El)
                    | (Stage::El, Stage::Joint)
                    | (Stage::Joint, Stage::Joint)
            );
            if !ok {
                return Err(Error::validation(format!(
                    "stage order violated: checkpoint is {}, requested {}",
                    manifest.stage,
                    stage.name()
                )));
            }
            model
        }
        (None, Stage::Bl) => LbsvcModel::new(ModelConfig {
            use_bem: !args.no_bem,
            ..Default::default()
        })?,
        (None, s) => {
            return Err(Error::validation(format!(
                "stage {} requires --resume with the previous stage's checkpoint",
                s.name()
            )));
        }
    };

    let metrics = match &args.log {
        Some(p) => {
            let mut f = std::fs::File::create(p)?;
            train_stage(&model, &cfg, &dataset, &mut f)?
        }
        None => train_stage(&model, &cfg, &dataset, &mut std::io::stdout())?,
    };
    model.save(&args.out, cfg.stage.name(), cfg.lambda_e, cfg.steps)?;
    println!(
        "stage {} done: loss {:.4} -> {:.4}; checkpoint {}",
        cfg.stage.name(),
        metrics.first_window_loss,
        metrics.last_window_loss,
        args.out.display()
    );
    let st = args.out.with_extension("safetensors");
    write_manifest("train", &[&args.config, &args.data], &[&st], seed)
}

fn cmd_encode(args: &EncodeArgs, seed: u64) -> lbsvc::Result<()> {
    let (model, _) = LbsvcModel::load(&args.checkpoint)?;
    let mut clip = read_clip(&args.input, 30.0)?;
    if let Some(n) = args.frames {
        if n == 0 {
            return Err(Error::validation("--frames must be positive"));
        }
        clip.frames.truncate(n);
    }
    let coded = model.code_sequence(&clip, args.intra_period)?;
    let bytes = lbsvc::entropy::pack_container(&coded.stream)?;
    std::fs::write(&args.output, &bytes)?;
    println!(
        "encoded {} frames, {} bytes, {:.6} bpp",
        coded.stream.frames.len(),
        bytes.len(),
        coded.stream.bpp()
    );
    write_manifest("encode", &[&args.input, &args.checkpoint], &[&args.output], seed)
}

fn cmd_decode(args: &DecodeArgs, seed: u64) -> lbsvc::Result<()> {
    let (model, _) = LbsvcModel::load(&args.checkpoint)?;
    let bytes = std::fs::read(&args.input)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", args.input.display())))?;
    let stream = lbsvc::entropy::unpack_container(&bytes)?;
    let decoded = model.decode_sequence(&stream)?;
    let clip = Clip {
        name: "decoded".into(),
        fps: 30.0,
        frames: decoded
            .recon_hdr
            .into_iter()
            .zip(decoded.recon_ldr)
            .collect(),
    };
    write_clip(&clip, &args.output)?;
    println!(
        "decoded {} frames into {} ({:.6} bpp)",
        clip.frames.len(),
        args.output.display(),
        stream.bpp()
    );
    write_manifest("decode", &[&args.input, &args.checkpoint], &[&args.output], seed)
}

fn cmd_eval(args: &EvalArgs, seed: u64) -> lbsvc::Result<()> {
    if args.checkpoints.is_empty() {
        return Err(Error::validation("--checkpoints requires at least one path"));
    }
    let sequences = load_dataset(&args.data)?;
    let mut loaded = Vec::new();
    for p in &args.checkpoints {
        let (model, manifest) = LbsvcModel::load(p)?;
        loaded.push((manifest.lambda, model));
    }
    let models: Vec<(f64, &LbsvcModel)> = loaded.iter().map(|(l, m)| (*l, m)).collect();
    let report = evaluate_model(&models, &sequences, args.intra_period, args.frames, "lbsvc")?;
    std::fs::write(&args.report, report.to_csv())?;
    if let Some(p) = &args.lines {
        std::fs::write(p, report.to_lines())?;
    }
    if let Some(p) = &args.svg {
        std::fs::write(p, report.to_svg())?;
    }
    println!("{}", report.to_csv().trim_end());
    write_manifest("eval", &[&args.data], &[&args.report], seed)
}

fn cmd_stats(args: &StatsArgs, seed: u64) -> lbsvc::Result<()> {
    let clips = load_dataset(&args.data)?;
    let mut rows = Vec::new();
    for clip in &clips {
        rows.push((clip.name.clone(), ClipStats::compute(clip, args.threshold)?));
    }
    let csv = stats_csv(&rows);
    std::fs::write(&args.report, &csv)?;
    println!("{}", csv.trim_end());
    write_manifest("stats", &[&args.data], &[&args.report], seed)
}

/// Parse curves back out of an eval CSV: sequence -> (bpp, pu_psnr) points.
fn curves_from_csv(path: &Path) -> lbsvc::Result<Vec<RdCurve>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut by_seq: std::collections::BTreeMap<String, Vec<RdPoint>> = Default::default();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if !line.starts_with("sequence,") {
                return Err(Error::format("not an eval report CSV"));
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::format(format!("bad CSV row {}", i + 1)));
        }
        let parse = |s: &str| -> lbsvc::Result<f64> {
            s.parse().map_err(|_| Error::format(format!("bad number {s:?} in row {}", i + 1)))
        };
        by_seq.entry(cols[0].to_string()).or_default().push(RdPoint {
            bpp: parse(cols[2])?,
            quality: parse(cols[5])?,
        });
    }
    Ok(by_seq
        .into_iter()
        .map(|(sequence, mut points)| {
            points.sort_by(|a, b| a.bpp.partial_cmp(&b.bpp).unwrap());
            RdCurve {
                sequence,
                method: path.display().to_string(),
                metric: "pu_psnr".into(),
                points,
            }
        })
        .collect())
}

fn cmd_bdrate(args: &BdrateArgs) -> lbsvc::Result<()> {
    let anchors = curves_from_csv(&args.anchor)?;
    let tests = curves_from_csv(&args.test)?;
    let mut any = false;
    for a in &anchors {
        if let Some(sel) = &args.sequence {
            if &a.sequence != sel {
                continue;
            }
        }
        if let Some(t) = tests.iter().find(|t| t.sequence == a.sequence) {
            let bd = bd_rate(a, t)?;
            println!("{}: BD-rate {:+.2}%", a.sequence, bd);
            any = true;
        }
    }
    if !any {
        return Err(Error::validation("no common sequences between the reports"));
    }
    Ok(())
}

fn run(cli: &Cli) -> lbsvc::Result<()> {
    let threads = if std::env::var("LBSVC_DETERMINISTIC").as_deref() == Ok("1") {
        1
    } else {
        cli.threads
    };
    if threads > 0 {
        // ignore failure if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match &cli.cmd {
        Cmd::Tonemap(a) => cmd_tonemap(a, cli.seed),
        Cmd::Train(a) => cmd_train(a, cli.seed),
        Cmd::Encode(a) => cmd_encode(a, cli.seed),
        Cmd::Decode(a) => cmd_decode(a, cli.seed),
        Cmd::Eval(a) => cmd_eval(a, cli.seed),
        Cmd::Stats(a) => cmd_stats(a, cli.seed),
        Cmd::Bdrate(a) => cmd_bdrate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with success intent
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::Validation(_) | Error::Format(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("internal error: {e}");
            ExitCode::from(3)
        }
    }
}
