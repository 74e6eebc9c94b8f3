//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime error, 2 `detect` found an incomplete
//! unit, 3 `monitor` raised an alarm, 64 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};

use crate::coco::{parse_coco, AnnotationSet, UnitRegion};
use crate::config::RunConfig;
use crate::eval::evaluate_corpus;
use crate::imaging::{decode_image, encode_png_rgb, GrayImage};
use crate::monitor::{append_log, FrameSnapshot, Monitor};
use crate::overlay::draw_overlay;
use crate::report::{detect_regions, resolve_image, DetectionReport, ImageReport, UnitReport};
use crate::synth::{generate_corpus, CorpusOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCOMPLETE: i32 = 2;
pub const EXIT_ALARM: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

type Error = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(
    name = "scaffold-brace",
    version,
    about = "Cross-brace completeness inspection for frame scaffolding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check every annotated unit in one or more images.
    Detect(DetectArgs),
    /// Render a synthetic corpus with annotations and ground truth.
    Synth(SynthArgs),
    /// Score detection against a synthetic corpus.
    Eval(EvalArgs),
    /// Compare consecutive frames and log brace removals.
    Monitor(MonitorArgs),
}

#[derive(Debug, clap::Args)]
pub struct DetectArgs {
    /// Input image (PNG or ASCII PPM); repeat for several images.
    #[arg(long, required = true)]
    pub image: Vec<PathBuf>,
    /// COCO annotation file with the unit regions.
    #[arg(long)]
    pub coco: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write an overlay PNG (single image only).
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report `elapsed_ms` as null so output is byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    #[arg(long, default_value_t = 0.5)]
    pub presence_rate: f64,
    #[arg(long, default_value_t = 3)]
    pub cols: usize,
    #[arg(long, default_value_t = 2)]
    pub rows: usize,
    /// Upper bound on clutter strokes per unit.
    #[arg(long)]
    pub clutter_max: Option<usize>,
    /// Upper bound on the per-frame noise sigma.
    #[arg(long)]
    pub noise_max: Option<f64>,
    /// Upper bound on endpoint jitter in pixels.
    #[arg(long)]
    pub jitter_max: Option<f64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    /// Corpus directory written by `synth`.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output path, default `<corpus>/eval.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TimestampSource {
    /// File modification time in milliseconds since the Unix epoch.
    Mtime,
    /// Position of the frame in name order.
    Index,
}

#[derive(Debug, clap::Args)]
pub struct MonitorArgs {
    /// Directory of frames, processed in file-name order.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub coco: PathBuf,
    /// JSONL alarm log, appended to.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TimestampSource::Index)]
    pub timestamps: TimestampSource,
    /// Consecutive negative frames required before an alarm.
    #[arg(long)]
    pub debounce: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Detect(a) => cmd_detect(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Monitor(a) => cmd_monitor(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn read_file(path: &Path) -> Result<Vec<u8>, Error> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load_coco(path: &Path, category: &str) -> Result<AnnotationSet, Error> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(parse_coco(&text, category)?)
}

fn load_gray(path: &Path) -> Result<GrayImage, Error> {
    decode_image(&read_file(path)?)
        .map(|r| r.into_gray())
        .map_err(|e| format!("{}: {e}", path.display()).into())
}

/// Regions annotated on `path`, after checking the image size matches.
fn regions_for(set: &AnnotationSet, path: &Path, img: &GrayImage) -> Result<Vec<UnitRegion>, Error> {
    let entry =
        resolve_image(set, path).ok_or_else(|| format!("{}: no matching image in annotations", path.display()))?;
    if (entry.width as usize, entry.height as usize) != (img.width(), img.height()) {
        return Err(format!(
            "{}: image is {}x{} but annotations say {}x{}",
            path.display(),
            img.width(),
            img.height(),
            entry.width,
            entry.height
        )
        .into());
    }
    Ok(set.regions_for_image(entry.id).cloned().collect())
}

fn cmd_detect(a: &DetectArgs) -> Result<i32, Error> {
    if a.overlay.is_some() && a.image.len() != 1 {
        eprintln!("error: --overlay needs exactly one --image");
        return Ok(EXIT_USAGE);
    }
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let params = cfg.detect_params();
    let set = load_coco(&a.coco, &cfg.category)?;
    let mut images = Vec::new();
    for path in &a.image {
        let img = load_gray(path)?;
        let regions = regions_for(&set, path, &img)?;
        let start = Instant::now();
        let dets = detect_regions(&img, &regions, &params)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        if let Some(out) = &a.overlay {
            write_file(out, &encode_png_rgb(&draw_overlay(&img, &dets))?)?;
        }
        images.push(ImageReport {
            file: path.display().to_string(),
            elapsed_ms: (!a.no_timing).then_some(elapsed),
            units: dets.iter().map(UnitReport::from).collect(),
        });
    }
    let report = DetectionReport { images, config: cfg };
    let json = report.to_json_pretty();
    match &a.report {
        Some(p) => write_file(p, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(if report.all_present() { EXIT_OK } else { EXIT_INCOMPLETE })
}

fn cmd_synth(a: &SynthArgs) -> Result<i32, Error> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let mut ranges = cfg.clutter;
    if let Some(v) = a.clutter_max {
        ranges.max_clutter_lines = v;
    }
    if let Some(v) = a.noise_max {
        ranges.max_noise_sigma = v;
    }
    if let Some(v) = a.jitter_max {
        ranges.max_jitter_px = v;
    }
    let opts = CorpusOptions {
        n_frames: a.frames,
        presence_rate: a.presence_rate,
        n_cols: a.cols,
        n_rows: a.rows,
        ranges,
        seed: cfg.seed,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    let manifest = generate_corpus(&cfg.synth, &opts, &a.out)?;
    eprintln!(
        "wrote {} frames of {}x{} units to {}",
        manifest.frames.len(),
        a.cols,
        a.rows,
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_eval(a: &EvalArgs) -> Result<i32, Error> {
    let cfg = load_config(a.config.as_deref(), a.seed)?;
    let report = evaluate_corpus(&a.corpus, &cfg.category, &cfg.detect_params())?;
    let out = a.out.clone().unwrap_or_else(|| a.corpus.join("eval.json"));
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    write_file(&out, json.as_bytes())?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    let c = report.confusion;
    eprintln!(
        "tp={} fp={} fn={} tn={} precision={} recall={} accuracy={}",
        c.tp,
        c.fp,
        c.fn_,
        c.tn,
        fmt(report.precision),
        fmt(report.recall),
        fmt(report.accuracy)
    );
    Ok(EXIT_OK)
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn mtime_ms(path: &Path) -> Result<i64, Error> {
    let t = std::fs::metadata(path)?.modified()?;
    let d = t
        .duration_since(UNIX_EPOCH)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(i64::try_from(d.as_millis())?)
}

fn cmd_monitor(a: &MonitorArgs) -> Result<i32, Error> {
    let mut cfg = load_config(a.config.as_deref(), a.seed)?;
    if let Some(k) = a.debounce {
        cfg.monitor.debounce = k;
    }
    let params = cfg.detect_params();
    let set = load_coco(&a.coco, &cfg.category)?;
    let mut monitor = Monitor::new(cfg.monitor.debounce)?;
    let mut n_alarms = 0;
    let files = frame_files(&a.frames)?;
    for (i, path) in files.iter().enumerate() {
        let img = load_gray(path)?;
        let regions = regions_for(&set, path, &img)?;
        let verdicts = detect_regions(&img, &regions, &params)?
            .into_iter()
            .map(|d| d.verdict)
            .collect();
        let ts = match a.timestamps {
            TimestampSource::Mtime => mtime_ms(path)?,
            TimestampSource::Index => i as i64,
        };
        let name = path
            .file_name()
            .map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        let alarms = monitor.observe(FrameSnapshot::new(name, ts, verdicts)?)?;
        append_log(&alarms, &a.log)?;
        n_alarms += alarms.len();
    }
    eprintln!("{} frames, {} alarms", files.len(), n_alarms);
    Ok(if n_alarms > 0 { EXIT_ALARM } else { EXIT_OK })
}
