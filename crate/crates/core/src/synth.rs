//! Ground-truth scaffold scenes.
//!
//! A frame is a grid of scaffold units seen in elevation: uprights on the
//! shared unit boundaries, ledgers along the row boundaries, two work-platform
//! boards above each bottom ledger and, where present, a corner-to-corner cross
//! brace. Strokes are anti-aliased by 4x4 supersampling. Clutter strokes and
//! Gaussian noise come last.
//!
//! All coordinates are continuous image coordinates: pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::{to_coco_json, AnnotationSet, BBox, ImageEntry, UnitRegion, DEFAULT_UNIT_CATEGORY};
use crate::imaging::{encode_png_gray, GrayImage, ImagingError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("canvas {0}x{1} is too small (minimum 32 px per side)")]
    CanvasTooSmall(usize, usize),
    #[error("invalid scaffold spec: {0}")]
    InvalidSpec(String),
    #[error("invalid clutter parameters: {0}")]
    InvalidClutter(String),
    #[error("presence matrix is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    PresenceShape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("presence rate {0} outside [0, 1]")]
    InvalidPresenceRate(f64),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Physical unit geometry and rendering scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaffoldSpec {
    pub unit_width_mm: f64,
    pub net_width_mm: f64,
    pub platform_width_mm: f64,
    pub unit_height_mm: f64,
    pub px_per_mm: f64,
    pub upright_thickness_px: f64,
    pub brace_thickness_px: f64,
    pub line_gray: u8,
    pub background_gray: u8,
    pub ledgers: bool,
}

impl Default for ScaffoldSpec {
    fn default() -> Self {
        Self {
            unit_width_mm: 762.0,
            net_width_mm: 719.3,
            platform_width_mm: 300.0,
            unit_height_mm: 1900.0,
            px_per_mm: 0.25,
            upright_thickness_px: 4.0,
            brace_thickness_px: 2.0,
            line_gray: 40,
            background_gray: 255,
            ledgers: true,
        }
    }
}

impl ScaffoldSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let dims = [
            self.unit_width_mm,
            self.net_width_mm,
            self.platform_width_mm,
            self.unit_height_mm,
            self.px_per_mm,
            self.upright_thickness_px,
            self.brace_thickness_px,
        ];
        if dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(SynthError::InvalidSpec("all dimensions must be positive".into()));
        }
        if self.net_width_mm >= self.unit_width_mm {
            return Err(SynthError::InvalidSpec("net width must be below unit width".into()));
        }
        let (w, h) = self.unit_px();
        if w < 32 || h < 32 {
            return Err(SynthError::CanvasTooSmall(w, h));
        }
        Ok(())
    }

    /// Unit canvas size in pixels.
    pub fn unit_px(&self) -> (usize, usize) {
        (
            (self.unit_width_mm * self.px_per_mm).round().max(0.0) as usize,
            (self.unit_height_mm * self.px_per_mm).round().max(0.0) as usize,
        )
    }
}

/// Per-unit disturbance settings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterParams {
    pub n_clutter_lines: usize,
    pub noise_sigma: f64,
    pub jitter_px: f64,
}

impl ClutterParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_clutter_lines > 10 {
            return Err(SynthError::InvalidClutter("n_clutter_lines must be in 0..=10".into()));
        }
        if !(0.0..=16.0).contains(&self.noise_sigma) {
            return Err(SynthError::InvalidClutter("noise_sigma must be in [0, 16]".into()));
        }
        if !(0.0..=3.0).contains(&self.jitter_px) {
            return Err(SynthError::InvalidClutter("jitter_px must be in [0, 3]".into()));
        }
        Ok(())
    }
}

/// Ground truth for one rendered unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitTruth {
    pub unit_id: u64,
    pub bbox: [f64; 4],
    pub brace_present: bool,
    pub crossing: Option<[f64; 2]>,
    pub clutter_count: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// A rendered multi-unit frame.
#[derive(Clone, Debug)]
pub struct Frame {
    pub image: GrayImage,
    pub annotations: AnnotationSet,
    pub truth: Vec<UnitTruth>,
}

struct Canvas {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Clip {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

const SUBSAMPLES: usize = 4;

impl Canvas {
    fn new(width: usize, height: usize, background: u8) -> Self {
        Self {
            width,
            height,
            values: vec![f64::from(background); width * height],
        }
    }

    /// Capsule stroke of the given thickness, blended by pixel coverage.
    fn stroke(&mut self, a: (f64, f64), b: (f64, f64), thickness: f64, gray: f64, clip: Clip) {
        let r = thickness / 2.0;
        let lo_x = (a.0.min(b.0) - r - 1.0).max(clip.x0).max(0.0).floor() as usize;
        let lo_y = (a.1.min(b.1) - r - 1.0).max(clip.y0).max(0.0).floor() as usize;
        let hi_x = ((a.0.max(b.0) + r + 1.0).min(clip.x1).ceil().max(0.0) as usize).min(self.width);
        let hi_y = ((a.1.max(b.1) + r + 1.0).min(clip.y1).ceil().max(0.0) as usize).min(self.height);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        let step = 1.0 / SUBSAMPLES as f64;
        for j in lo_y..hi_y {
            for i in lo_x..hi_x {
                let mut hits = 0;
                for sy in 0..SUBSAMPLES {
                    for sx in 0..SUBSAMPLES {
                        let px = i as f64 + (sx as f64 + 0.5) * step;
                        let py = j as f64 + (sy as f64 + 0.5) * step;
                        if px < clip.x0 || px >= clip.x1 || py < clip.y0 || py >= clip.y1 {
                            continue;
                        }
                        let t = if len2 > 0.0 {
                            (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
                        } else {
                            0.0
                        };
                        let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
                        if (px - qx).powi(2) + (py - qy).powi(2) <= r * r {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    let cover = hits as f64 / (SUBSAMPLES * SUBSAMPLES) as f64;
                    let v = &mut self.values[j * self.width + i];
                    *v += cover * (gray - *v);
                }
            }
        }
    }

    fn add_noise(&mut self, sigma: f64, rng: &mut ChaCha8Rng) {
        if sigma <= 0.0 {
            return;
        }
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        for v in &mut self.values {
            *v += normal.sample(rng);
        }
    }

    fn into_image(self) -> GrayImage {
        let data = self.values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        GrayImage::new(self.width, self.height, data).expect("canvas dimensions")
    }
}

fn jitter(rng: &mut ChaCha8Rng, amount: f64) -> (f64, f64) {
    let dx: f64 = rng.random_range(-1.0..=1.0);
    let dy: f64 = rng.random_range(-1.0..=1.0);
    (dx * amount, dy * amount)
}

fn offset(p: (f64, f64), d: (f64, f64)) -> (f64, f64) {
    (p.0 + d.0, p.1 + d.1)
}

/// Intersection of the infinite lines through `a0-a1` and `b0-b1`.
fn segment_crossing(a0: (f64, f64), a1: (f64, f64), b0: (f64, f64), b1: (f64, f64)) -> Option<(f64, f64)> {
    let (ux, uy) = (a1.0 - a0.0, a1.1 - a0.1);
    let (vx, vy) = (b1.0 - b0.0, b1.1 - b0.1);
    let den = ux * vy - uy * vx;
    if den.abs() < 1e-12 {
        return None;
    }
    let t = ((b0.0 - a0.0) * vy - (b0.1 - a0.1) * vx) / den;
    Some((a0.0 + t * ux, a0.1 + t * uy))
}

/// What to draw in one unit.
#[derive(Clone, Copy, Debug)]
struct UnitPlan {
    brace_present: bool,
    n_clutter: usize,
}

const STRUCTURE_STREAM: u64 = 0;
const NOISE_STREAM: u64 = u64::MAX;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn render_grid(
    spec: &ScaffoldSpec,
    n_cols: usize,
    n_rows: usize,
    plans: &[UnitPlan],
    noise_sigma: f64,
    jitter_px: f64,
    seed: u64,
) -> Result<Frame, SynthError> {
    spec.validate()?;
    let (uw, uh) = spec.unit_px();
    let (w, h) = (uw * n_cols, uh * n_rows);
    let (uwf, uhf) = (uw as f64, uh as f64);
    let full = Clip {
        x0: 0.0,
        y0: 0.0,
        x1: w as f64,
        y1: h as f64,
    };
    let ink = f64::from(spec.line_gray);
    let mut canvas = Canvas::new(w, h, spec.background_gray);

    let mut rng = stream_rng(seed, STRUCTURE_STREAM);
    for r in 0..n_rows {
        let (top, bottom) = (r as f64 * uhf, (r + 1) as f64 * uhf);
        for c in 0..=n_cols {
            let x = c as f64 * uwf;
            let a = offset((x, top), jitter(&mut rng, jitter_px));
            let b = offset((x, bottom), jitter(&mut rng, jitter_px));
            canvas.stroke(a, b, spec.upright_thickness_px, ink, full);
        }
    }
    if spec.ledgers {
        let scale = spec.px_per_mm;
        let boards = 2.0 * spec.platform_width_mm;
        let gap = (spec.net_width_mm - boards).clamp(0.0, 30.0);
        let margin = (spec.unit_width_mm - boards - gap) / 2.0;
        for r in 0..=n_rows {
            let y = r as f64 * uhf;
            for c in 0..n_cols {
                let x0 = c as f64 * uwf;
                let a = offset((x0, y), jitter(&mut rng, jitter_px));
                let b = offset((x0 + uwf, y), jitter(&mut rng, jitter_px));
                canvas.stroke(a, b, spec.upright_thickness_px, ink, full);
                if r > 0 {
                    // board edges seen just above the bottom ledger
                    let yb = y - 0.06 * uhf;
                    for k in 0..2 {
                        let start = x0 + (margin + k as f64 * (spec.platform_width_mm + gap)) * scale;
                        let end = start + spec.platform_width_mm * scale;
                        canvas.stroke((start, yb), (end, yb), spec.brace_thickness_px * 2.0, ink, full);
                    }
                }
            }
        }
    }

    let mut annotations = AnnotationSet {
        images: vec![ImageEntry {
            id: 1,
            file_name: "frame.png".into(),
            width: w as u32,
            height: h as u32,
        }],
        regions: Vec::new(),
    };
    let mut truth = Vec::new();
    for (k, plan) in plans.iter().enumerate() {
        let (c, r) = (k % n_cols, k / n_cols);
        let (x0, y0) = (c as f64 * uwf, r as f64 * uhf);
        let (x1, y1) = (x0 + uwf, y0 + uhf);
        let clip = Clip { x0, y0, x1, y1 };
        let mut rng = stream_rng(seed, k as u64 + 1);
        let p = [(x0, y0), (x1, y1), (x1, y0), (x0, y1)].map(|q| offset(q, jitter(&mut rng, jitter_px)));
        let crossing = if plan.brace_present {
            canvas.stroke(p[0], p[1], spec.brace_thickness_px, ink, clip);
            canvas.stroke(p[2], p[3], spec.brace_thickness_px, ink, clip);
            segment_crossing(p[0], p[1], p[2], p[3])
        } else {
            None
        };
        for _ in 0..plan.n_clutter {
            let cx = rng.random_range(x0..x1);
            let cy = rng.random_range(y0..y1);
            let angle: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let half = rng.random_range(0.1..0.3) * uhf;
            let thickness = f64::from(rng.random_range(1u8..=3));
            let gray = rng.random_range(20.0..140.0);
            let (s, co) = angle.sin_cos();
            canvas.stroke(
                (cx - half * co, cy - half * s),
                (cx + half * co, cy + half * s),
                thickness,
                gray,
                clip,
            );
        }
        let bbox = BBox {
            x: x0,
            y: y0,
            w: uwf,
            h: uhf,
        };
        let unit_id = k as u64 + 1;
        annotations
            .regions
            .push(UnitRegion::rectangle(unit_id, 1, bbox, DEFAULT_UNIT_CATEGORY));
        truth.push(UnitTruth {
            unit_id,
            bbox: bbox.as_array(),
            brace_present: plan.brace_present,
            crossing: crossing.map(|(x, y)| [x, y]),
            clutter_count: plan.n_clutter,
            noise_sigma,
            seed,
        });
    }
    canvas.add_noise(noise_sigma, &mut stream_rng(seed, NOISE_STREAM));
    Ok(Frame {
        image: canvas.into_image(),
        annotations,
        truth,
    })
}

/// A single unit on its own canvas.
pub fn render_unit(
    spec: &ScaffoldSpec,
    brace_present: bool,
    clutter: &ClutterParams,
    seed: u64,
) -> Result<(GrayImage, UnitTruth), SynthError> {
    let frame = render_frame(spec, 1, 1, &[vec![brace_present]], clutter, seed)?;
    let truth = frame.truth.into_iter().next().expect("one unit");
    Ok((frame.image, truth))
}

/// `presence[row][col]` selects which units carry a brace.
pub fn render_frame(
    spec: &ScaffoldSpec,
    n_cols: usize,
    n_rows: usize,
    presence: &[Vec<bool>],
    clutter: &ClutterParams,
    seed: u64,
) -> Result<Frame, SynthError> {
    clutter.validate()?;
    let got_cols = presence.first().map_or(0, Vec::len);
    if n_cols == 0 || n_rows == 0 || presence.len() != n_rows || presence.iter().any(|r| r.len() != n_cols) {
        return Err(SynthError::PresenceShape {
            rows: n_rows,
            cols: n_cols,
            got_rows: presence.len(),
            got_cols,
        });
    }
    let plans: Vec<UnitPlan> = presence
        .iter()
        .flatten()
        .map(|&brace_present| UnitPlan {
            brace_present,
            n_clutter: clutter.n_clutter_lines,
        })
        .collect();
    render_grid(
        spec,
        n_cols,
        n_rows,
        &plans,
        clutter.noise_sigma,
        clutter.jitter_px,
        seed,
    )
}

/// Upper bounds for per-frame/per-unit disturbance sampling (lower bounds are 0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterRanges {
    pub max_clutter_lines: usize,
    pub max_noise_sigma: f64,
    pub max_jitter_px: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    pub n_frames: usize,
    pub presence_rate: f64,
    pub n_cols: usize,
    pub n_rows: usize,
    pub ranges: ClutterRanges,
    pub seed: u64,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            n_frames: 10,
            presence_rate: 0.5,
            n_cols: 3,
            n_rows: 2,
            ranges: ClutterRanges::default(),
            seed: 42,
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COCO_FILE: &str = "annotations.json";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub file: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub frames: Vec<ManifestFrame>,
    pub coco: String,
    pub truth: String,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    pub file: String,
    pub units: Vec<UnitTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub frames: Vec<TruthFrame>,
    pub seed: u64,
    pub spec: ScaffoldSpec,
}

/// Named frames, their annotations and the ground truth.
pub type Corpus = (Vec<(String, GrayImage)>, AnnotationSet, TruthFile);

/// Per-frame render seeds, drawn from their own stream of the corpus seed so
/// that corpora with nearby seeds share no frames.
pub fn frame_seeds(seed: u64, n_frames: usize) -> Vec<u64> {
    let mut rng = stream_rng(seed, u64::MAX - 3);
    (0..n_frames).map(|_| rng.random()).collect()
}

/// Renders the corpus in memory. The number of braced units is
/// `round(presence_rate * total_units)`, spread by a seeded shuffle.
pub fn build_corpus(spec: &ScaffoldSpec, opts: &CorpusOptions) -> Result<Corpus, SynthError> {
    if !(0.0..=1.0).contains(&opts.presence_rate) {
        return Err(SynthError::InvalidPresenceRate(opts.presence_rate));
    }
    if opts.n_cols == 0 || opts.n_rows == 0 {
        return Err(SynthError::PresenceShape {
            rows: opts.n_rows,
            cols: opts.n_cols,
            got_rows: opts.n_rows,
            got_cols: opts.n_cols,
        });
    }
    let r = &opts.ranges;
    ClutterParams {
        n_clutter_lines: r.max_clutter_lines,
        noise_sigma: r.max_noise_sigma,
        jitter_px: r.max_jitter_px,
    }
    .validate()?;
    spec.validate()?;

    let per_frame = opts.n_cols * opts.n_rows;
    let total = opts.n_frames * per_frame;
    let n_present = (opts.presence_rate * total as f64).round() as usize;
    let mut presence: Vec<bool> = (0..total).map(|i| i < n_present).collect();
    presence.shuffle(&mut stream_rng(opts.seed, u64::MAX - 1));

    let mut images = Vec::with_capacity(opts.n_frames);
    let mut annotations = AnnotationSet::default();
    let mut truth = TruthFile {
        frames: Vec::new(),
        seed: opts.seed,
        spec: spec.clone(),
    };
    for (f, frame_seed) in frame_seeds(opts.seed, opts.n_frames).into_iter().enumerate() {
        let mut rng = stream_rng(frame_seed, u64::MAX - 2);
        let noise = if r.max_noise_sigma > 0.0 {
            rng.random_range(0.0..=r.max_noise_sigma)
        } else {
            0.0
        };
        let jit = if r.max_jitter_px > 0.0 {
            rng.random_range(0.0..=r.max_jitter_px)
        } else {
            0.0
        };
        let plans: Vec<UnitPlan> = presence[f * per_frame..(f + 1) * per_frame]
            .iter()
            .map(|&brace_present| UnitPlan {
                brace_present,
                n_clutter: rng.random_range(0..=r.max_clutter_lines),
            })
            .collect();
        let frame = render_grid(spec, opts.n_cols, opts.n_rows, &plans, noise, jit, frame_seed)?;
        let file = format!("frame_{f:04}.png");
        let image_id = f as u64 + 1;
        let id_base = (f * per_frame) as u64;
        annotations.images.push(ImageEntry {
            id: image_id,
            file_name: file.clone(),
            ..frame.annotations.images[0].clone()
        });
        annotations
            .regions
            .extend(frame.annotations.regions.into_iter().map(|reg| UnitRegion {
                id: reg.id + id_base,
                image_id,
                ..reg
            }));
        truth.frames.push(TruthFrame {
            file: file.clone(),
            units: frame
                .truth
                .into_iter()
                .map(|u| UnitTruth {
                    unit_id: u.unit_id + id_base,
                    ..u
                })
                .collect(),
        });
        images.push((file, frame.image));
    }
    Ok((images, annotations, truth))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    fs::write(path, bytes).map_err(|source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serializable");
    s.push(b'\n');
    s
}

/// Writes PNG frames, one COCO file, one truth file and the manifest into `out_dir`.
pub fn generate_corpus(spec: &ScaffoldSpec, opts: &CorpusOptions, out_dir: &Path) -> Result<Manifest, SynthError> {
    let (images, annotations, truth) = build_corpus(spec, opts)?;
    fs::create_dir_all(out_dir).map_err(|source| SynthError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut frames = Vec::with_capacity(images.len());
    for ((file, image), seed) in images.iter().zip(frame_seeds(opts.seed, opts.n_frames)) {
        write(&out_dir.join(file), &encode_png_gray(image)?)?;
        frames.push(ManifestFrame {
            file: file.clone(),
            seed,
        });
    }
    write(&out_dir.join(COCO_FILE), &pretty(&to_coco_json(&annotations)))?;
    write(&out_dir.join(TRUTH_FILE), &pretty(&truth))?;
    let manifest = Manifest {
        frames,
        coco: COCO_FILE.into(),
        truth: TRUTH_FILE.into(),
        seed: opts.seed,
    };
    write(&out_dir.join(MANIFEST_FILE), &pretty(&manifest))?;
    Ok(manifest)
}
