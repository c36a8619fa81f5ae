//! Command-line front end. [`run`] is the whole program; `main` only wires
//! up the process streams.
//!
//! Exit codes: 0 success, 1 input error, 2 budget or contract violation
//! (and failed selfcheck suites).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, EncoderKind};
use crate::curation::{self, CurationPipeline, StoredScorer};
use crate::diff_fp::{compression_stats, compute_prune_mask, frame_stats};
use crate::error::{Error, Result};
use crate::format::{self, RenderItem, SequenceFormat};
use crate::io::FrameDir;
use crate::selfcheck::run_selfcheck;
use crate::video::prepare_frames;

#[derive(Debug, Parser)]
#[command(
    name = "vidtok",
    version,
    about = "Vision-side video tokenization without model weights"
)]
struct Cli {
    /// Flat key=value config file; explicit flags override it
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample, prune, encode and budget a frame directory; write a JSON summary
    Tokenize(TokenizeArgs),
    /// Print per-frame kept/dropped counts for a frame directory
    PruneStats(PruneArgs),
    /// Render a JSON-lines event file as an image, video or streaming sequence
    RenderSequence(RenderArgs),
    /// Run aspect, score and cluster filters over a manifest
    Curate(CurateArgs),
    /// Run the built-in invariant suites
    Selfcheck(SelfcheckArgs),
    /// Print the effective configuration
    Config,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Frame directory with numbered .png/.raw files and a frames.meta sidecar
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    /// Patch size in pixels [default: 14]
    #[arg(long)]
    patch: Option<usize>,
    /// Spatial merge factor applied after encoding [default: 2]
    #[arg(long)]
    merge: Option<usize>,
    /// Pruning threshold on mean absolute pixel difference [default: 0.1]
    #[arg(long)]
    threshold: Option<f64>,
    /// Sampling rate in frames per second [default: 1]
    #[arg(long)]
    fps: Option<f64>,
    /// Maximum number of sampled frames [default: 180]
    #[arg(long)]
    max_frames: Option<usize>,
    /// Vision token budget [default: 10240]
    #[arg(long)]
    budget_vision: Option<usize>,
    /// Per-frame token cap used when resizing frames [default: the vision budget]
    #[arg(long, value_name = "N")]
    max_frame_tokens: Option<usize>,
}

#[derive(Debug, Args)]
struct TokenizeArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Total token budget [default: 16384]
    #[arg(long)]
    budget_total: Option<usize>,
    /// Feature encoder: identity or randproj [default: identity]
    #[arg(long)]
    encoder: Option<String>,
    /// Output dimension of the randproj encoder [default: 64]
    #[arg(long)]
    dim: Option<usize>,
    /// Seed for the randproj encoder [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON summary here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Sequence layout: image, video or streaming
    #[arg(long)]
    format: SequenceFormat,
    /// JSON-lines event file
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Write the rendered text here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the placeholder span table (offset<TAB>count per line)
    #[arg(long, value_name = "FILE")]
    spans: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurateArgs {
    /// Input manifest (JSON lines)
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Comma-separated stages, e.g. aspect,score:aesthetic:0.5,cluster:1000:5
    #[arg(long)]
    stages: String,
    /// Seed for cluster initialization
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Kept samples manifest [default: stdout]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Removed samples manifest, annotated with the removing stage
    #[arg(long, value_name = "FILE")]
    rejects: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelfcheckArgs {
    /// Seed for the synthetic inputs
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize)]
struct FrameSummary {
    frame: usize,
    timestamp: f64,
    kept: usize,
    dropped: usize,
    selected: bool,
}

#[derive(Serialize)]
struct TokenizeSummary {
    version: &'static str,
    encoder: String,
    frames_sampled: usize,
    resolution: [usize; 2],
    grid: [usize; 2],
    feature_dim: usize,
    vision_tokens: usize,
    total_tokens: usize,
    kept: usize,
    dropped: usize,
    ratio: f64,
    frames: Vec<FrameSummary>,
    sequence: String,
    /// `[frame, row, col]` per vision token, in sequence order.
    positions: Vec<[usize; 3]>,
}

/// Parse `args` (including the program name) and execute. Returns the exit
/// code.
pub fn run<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_contract_violation() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let src = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            Config::parse(&src).map_err(|e| Error::file(path, e))?
        }
        None => Config::default(),
    };
    match cli.command {
        Command::Tokenize(a) => tokenize(&mut cfg, a, out),
        Command::PruneStats(a) => prune_stats(&mut cfg, a, out, err),
        Command::RenderSequence(a) => render_sequence(a, out),
        Command::Curate(a) => curate(a, out, err),
        Command::Selfcheck(a) => selfcheck(a.seed, out),
        Command::Config => {
            write!(out, "{cfg}")?;
            Ok(0)
        }
    }
}

fn apply_pipeline(cfg: &mut Config, a: &PipelineArgs) {
    if let Some(v) = a.patch {
        cfg.patch_size = v;
    }
    if let Some(v) = a.merge {
        cfg.merge_factor = v;
    }
    if let Some(v) = a.threshold {
        cfg.prune_threshold = v;
    }
    if let Some(v) = a.fps {
        cfg.fps = v;
    }
    if let Some(v) = a.max_frames {
        cfg.max_frames = v;
    }
    if let Some(v) = a.budget_vision {
        cfg.max_vision_tokens = v;
    }
}

fn load_frames(cfg: &Config, a: &PipelineArgs) -> Result<crate::diff_fp::FrameSequence> {
    let dir = FrameDir::open(&a.frames)?;
    let (images, times) = dir.load_sampled(&cfg.policy()?)?;
    let cap = a.max_frame_tokens.unwrap_or(cfg.max_vision_tokens);
    prepare_frames(images, times, cfg.patch_size, cfg.merge_factor, cap)
}

fn write_output(path: Option<&Path>, bytes: &[u8], out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::file(p, e)),
        None => Ok(out.write_all(bytes)?),
    }
}

fn tokenize(cfg: &mut Config, a: TokenizeArgs, out: &mut dyn Write) -> Result<i32> {
    apply_pipeline(cfg, &a.pipeline);
    if let Some(v) = a.budget_total {
        cfg.max_total_tokens = v;
    }
    if let Some(v) = &a.encoder {
        cfg.encoder = v.parse()?;
    }
    if let Some(v) = a.dim {
        cfg.proj_dim = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let tok = cfg.tokenizer()?;
    let seq = load_frames(cfg, &a.pipeline)?;
    let result = tok.tokenize(&seq)?;

    let stats = compression_stats(&result.mask);
    let frames = frame_stats(&result.mask, seq.timestamps())?
        .into_iter()
        .map(|f| FrameSummary {
            frame: f.frame,
            timestamp: f.timestamp,
            kept: f.kept,
            dropped: f.dropped,
            selected: result.frames.contains(&f.frame),
        })
        .collect();
    let items: Vec<RenderItem> = result
        .sequence
        .frame_runs()
        .iter()
        .map(|r| RenderItem::frame(r.tokens, r.timestamp))
        .collect();
    let rendered = format::render_video_sequence(&items, None)?;
    let vision = result.sequence.vision_count();
    let total = result.sequence.total_count();
    if vision > cfg.max_vision_tokens || total > cfg.max_total_tokens {
        return Err(Error::BudgetExceeded {
            vision,
            total,
            max_vision: cfg.max_vision_tokens,
            max_total: cfg.max_total_tokens,
        });
    }
    let res = seq.resolution();
    let summary = TokenizeSummary {
        version: env!("CARGO_PKG_VERSION"),
        encoder: match cfg.encoder {
            EncoderKind::Identity => "identity".into(),
            EncoderKind::RandomProjection => {
                format!("randproj(dim={}, seed={})", cfg.proj_dim, cfg.seed)
            }
        },
        frames_sampled: seq.len(),
        resolution: [res.height, res.width],
        grid: [result.mask.rows(), result.mask.cols()],
        feature_dim: result
            .sequence
            .vision_tokens()
            .next()
            .map_or(0, |t| t.feature.len()),
        vision_tokens: vision,
        total_tokens: total,
        kept: stats.kept,
        dropped: stats.dropped,
        ratio: stats.ratio,
        frames,
        sequence: rendered.text,
        positions: result
            .sequence
            .vision_tokens()
            .map(|t| [t.frame, t.position.row, t.position.col])
            .collect(),
    };
    let mut json =
        serde_json::to_string_pretty(&summary).map_err(|e| Error::InvalidInput(e.to_string()))?;
    json.push('\n');
    write_output(a.out.as_deref(), json.as_bytes(), out)?;
    Ok(0)
}

fn prune_stats(
    cfg: &mut Config,
    a: PruneArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    apply_pipeline(cfg, &a.pipeline);
    cfg.validate()?;
    let seq = load_frames(cfg, &a.pipeline)?;
    let prune =
        crate::diff_fp::PruneConfig::new(cfg.prune_threshold, cfg.patch_size * cfg.merge_factor)?;
    let mask = compute_prune_mask(&seq, &prune)?;
    for f in frame_stats(&mask, seq.timestamps())? {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            f.frame, f.timestamp, f.kept, f.dropped
        )?;
    }
    let s = compression_stats(&mask);
    writeln!(
        err,
        "kept={} dropped={} ratio={:.6}",
        s.kept, s.dropped, s.ratio
    )?;
    Ok(0)
}

fn render_sequence(a: RenderArgs, out: &mut dyn Write) -> Result<i32> {
    let src = std::fs::read_to_string(&a.input).map_err(|e| Error::file(&a.input, e))?;
    let items = format::parse_events(&src).map_err(|e| Error::file(&a.input, e))?;
    let rendered = format::render(a.format, &items)?;
    write_output(a.out.as_deref(), rendered.text.as_bytes(), out)?;
    if let Some(path) = &a.spans {
        let mut table = String::new();
        for s in &rendered.spans {
            table.push_str(&format!("{}\t{}\n", s.offset, s.count));
        }
        std::fs::write(path, table).map_err(|e| Error::file(path, e))?;
    }
    Ok(0)
}

fn curate(a: CurateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let batch = curation::read_manifest(&a.manifest)?;
    let stages = curation::parse_stages(&a.stages)?;
    let mut pipeline = CurationPipeline::new(stages.clone(), a.seed);
    for stage in &stages {
        if let curation::Stage::Score { name, .. } = stage {
            pipeline = pipeline.with_scorer(name.clone(), StoredScorer(name.clone()));
        }
    }
    let n = batch.len();
    let part = pipeline.run(batch)?;
    write_output(
        a.out.as_deref(),
        curation::format_manifest(&part.kept).as_bytes(),
        out,
    )?;
    if let Some(path) = &a.rejects {
        std::fs::write(path, curation::format_manifest(&part.removed))
            .map_err(|e| Error::file(path, e))?;
    }
    writeln!(
        err,
        "input={} kept={} removed={}",
        n,
        part.kept.len(),
        part.removed.len()
    )?;
    Ok(0)
}

fn selfcheck(seed: u64, out: &mut dyn Write) -> Result<i32> {
    let results = run_selfcheck(seed);
    let mut all_ok = true;
    for r in &results {
        let status = if r.ok() { "ok" } else { "FAIL" };
        writeln!(
            out,
            "{:<24} {:>4}/{:<4} {status}",
            r.name, r.passed, r.total
        )?;
        all_ok &= r.ok();
    }
    let passed = results.iter().filter(|r| r.ok()).count();
    writeln!(out, "suites passed: {passed}/{}", results.len())?;
    Ok(if all_ok { 0 } else { 2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_flag_is_input_error() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["vidtok", "selfcheck", "--bogus"], &mut o, &mut e), 1);
        assert!(String::from_utf8(e).unwrap().contains("Usage"));
    }

    #[test]
    fn version_flag() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["vidtok", "--version"], &mut o, &mut e), 0);
        assert_eq!(
            String::from_utf8(o).unwrap().trim(),
            format!("vidtok {}", env!("CARGO_PKG_VERSION"))
        );
    }
}
