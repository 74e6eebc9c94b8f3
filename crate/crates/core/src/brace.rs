//! Cross-brace detection inside one scaffold unit.
//!
//! Lines found by the Hough transform are split into structural members
//! (uprights and ledgers) and diagonals. The diagonals are embedded on the unit
//! circle with the doubled-angle map, split into two families by 2-means, and
//! every cross-family pair is intersected. A unit carries a brace when at least
//! one intersection falls inside a centred window of its bounding box.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::{crop_unit, rasterize_polygon, CocoError, UnitRegion};
use crate::hough::{axial_distance, find_peaks, hough_accumulate, HoughParams, PolarLine};
use crate::imaging::{apply_mask, canny_edges, GrayImage, ImagingError};

#[derive(Debug, Error)]
pub enum BraceError {
    #[error("need at least two distinct line orientations, got {0}")]
    InsufficientLines(usize),
    #[error("lines are parallel within tolerance (|sin dtheta| = {0:e})")]
    NearParallel(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Coco(#[from] CocoError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BraceParams {
    /// Lines within this of theta = 0 are uprights.
    pub vert_tol: f64,
    /// Lines within this of theta = pi/2 are ledgers and platform edges.
    pub horiz_tol: f64,
    pub central_frac: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub parallel_eps: f64,
}

impl Default for BraceParams {
    fn default() -> Self {
        Self {
            vert_tol: 15f64.to_radians(),
            horiz_tol: 10f64.to_radians(),
            central_frac: 0.6,
            kmeans_restarts: 10,
            kmeans_max_iter: 100,
            kmeans_tol: 1e-6,
            parallel_eps: 1e-3,
        }
    }
}

impl BraceParams {
    pub fn validate(&self) -> Result<(), BraceError> {
        let ok = self.central_frac > 0.0
            && self.central_frac <= 1.0
            && self.vert_tol > 0.0
            && self.horiz_tol > 0.0
            && self.kmeans_tol > 0.0
            && self.parallel_eps > 0.0
            && self.kmeans_restarts >= 1
            && self.kmeans_max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(BraceError::InvalidParams(format!("{self:?}")))
        }
    }
}

/// Inclusive axis-aligned rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Same centre, sides scaled by `frac`.
    pub fn centered_window(&self, frac: f64) -> Rect {
        let (cx, cy) = self.center();
        let hw = frac * (self.x_max - self.x_min) / 2.0;
        let hh = frac * (self.y_max - self.y_min) / 2.0;
        Rect {
            x_min: cx - hw,
            y_min: cy - hh,
            x_max: cx + hw,
            y_max: cy + hh,
        }
    }
}

/// Splits lines into `(diagonals, structural)`, preserving order.
pub fn filter_structural_lines(lines: &[PolarLine], params: &BraceParams) -> (Vec<PolarLine>, Vec<PolarLine>) {
    lines.iter().partition(|l| {
        axial_distance(l.theta, 0.0) > params.vert_tol && axial_distance(l.theta, PI / 2.0) > params.horiz_tol
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnglePoint {
    pub line_index: usize,
    pub x: f64,
    pub y: f64,
}

/// Doubled-angle embedding `(cos 2theta, sin 2theta)` after folding theta into `[0, pi)`.
pub fn embed_angles(lines: &[PolarLine]) -> Vec<AnglePoint> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let theta = l.theta.rem_euclid(PI);
            let (s, c) = (2.0 * theta).sin_cos();
            AnglePoint {
                line_index: i,
                x: c,
                y: s,
            }
        })
        .collect()
}

/// Outcome of one 2-means run (or the best of several).
#[derive(Clone, Debug, PartialEq)]
pub struct TwoMeans {
    /// Cluster label (0 or 1) per input point.
    pub labels: Vec<u8>,
    pub centroids: [(f64, f64); 2],
    pub objective: f64,
    /// Restart that produced this result.
    pub restart: usize,
    /// Objective after each Lloyd update, for the chosen restart.
    pub history: Vec<f64>,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn means(points: &[(f64, f64)], labels: &[u8]) -> [(f64, f64); 2] {
    let mut sum = [(0.0, 0.0); 2];
    let mut n = [0usize; 2];
    for (p, &l) in points.iter().zip(labels) {
        let l = l as usize;
        sum[l].0 += p.0;
        sum[l].1 += p.1;
        n[l] += 1;
    }
    [0, 1].map(|k| {
        if n[k] == 0 {
            (0.0, 0.0)
        } else {
            (sum[k].0 / n[k] as f64, sum[k].1 / n[k] as f64)
        }
    })
}

fn sse(points: &[(f64, f64)], labels: &[u8], centroids: &[(f64, f64); 2]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(&p, &l)| dist2(p, centroids[l as usize]))
        .sum()
}

/// Moves the point farthest from its centroid into an empty cluster.
fn repair_empty(points: &[(f64, f64)], labels: &mut [u8], centroids: &[(f64, f64); 2]) {
    for k in 0..2u8 {
        if labels.contains(&k) {
            continue;
        }
        let far = (0..points.len())
            .max_by(|&a, &b| {
                dist2(points[a], centroids[labels[a] as usize])
                    .total_cmp(&dist2(points[b], centroids[labels[b] as usize]))
                    .then(b.cmp(&a))
            })
            .expect("non-empty point set");
        labels[far] = k;
    }
}

/// Lloyd iterations from two initial centroids.
fn lloyd(points: &[(f64, f64)], init: [(f64, f64); 2], params: &BraceParams) -> (Vec<u8>, [(f64, f64); 2], Vec<f64>) {
    let mut centroids = init;
    let mut labels: Vec<u8> = vec![u8::MAX; points.len()];
    let mut history = Vec::new();
    for _ in 0..params.kmeans_max_iter {
        let mut next: Vec<u8> = points
            .iter()
            .map(|&p| u8::from(dist2(p, centroids[1]) < dist2(p, centroids[0])))
            .collect();
        repair_empty(points, &mut next, &centroids);
        let changed = next != labels;
        labels = next;
        let updated = means(points, &labels);
        let shift = dist2(updated[0], centroids[0])
            .max(dist2(updated[1], centroids[1]))
            .sqrt();
        centroids = updated;
        history.push(sse(points, &labels, &centroids));
        if !changed || shift < params.kmeans_tol {
            break;
        }
    }
    (labels, centroids, history)
}

/// Indices of the two points at maximal distance; ties go to the lowest `(i, j)`.
fn farthest_pair(points: &[(f64, f64)]) -> (usize, usize) {
    let mut best = (0, 1, -1.0);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = dist2(points[i], points[j]);
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1)
}

const COINCIDENT: f64 = 1e-24;

/// 2-means clustering with `kmeans_restarts` restarts. Restart 0 starts from the
/// farthest pair; the rest from seeded random pairs of distinct points. The
/// restart with the lowest objective wins, earliest on ties. Labels are
/// normalized so the first point is in cluster 0.
pub fn kmeans_two(points: &[AnglePoint], params: &BraceParams, seed: u64) -> Result<TwoMeans, BraceError> {
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    let distinct = pts.iter().any(|&p| dist2(p, pts[0]) > COINCIDENT);
    if pts.len() < 2 || !distinct {
        let n_distinct = if pts.is_empty() { 0 } else { 1 };
        return Err(BraceError::InsufficientLines(n_distinct));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<TwoMeans> = None;
    for restart in 0..params.kmeans_restarts.max(1) {
        let (i, j) = if restart == 0 {
            farthest_pair(&pts)
        } else {
            let i = rng.random_range(0..pts.len());
            let others: Vec<usize> = (0..pts.len()).filter(|&k| dist2(pts[k], pts[i]) > COINCIDENT).collect();
            (i, others[rng.random_range(0..others.len())])
        };
        let (mut labels, mut centroids, history) = lloyd(&pts, [pts[i], pts[j]], params);
        if labels[0] == 1 {
            labels.iter_mut().for_each(|l| *l = 1 - *l);
            centroids.swap(0, 1);
        }
        let objective = sse(&pts, &labels, &centroids);
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(TwoMeans {
                labels,
                centroids,
                objective,
                restart,
                history,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// A line tagged with its index in the diagonal list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexedLine {
    pub index: usize,
    pub line: PolarLine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinePartition {
    pub group_a: Vec<IndexedLine>,
    pub group_b: Vec<IndexedLine>,
    pub objective: f64,
}

/// Embeds `lines`, clusters them and splits them into the two families.
pub fn partition_lines(lines: &[PolarLine], params: &BraceParams, seed: u64) -> Result<LinePartition, BraceError> {
    let km = kmeans_two(&embed_angles(lines), params, seed)?;
    let (mut group_a, mut group_b) = (Vec::new(), Vec::new());
    for (index, (&line, &label)) in lines.iter().zip(&km.labels).enumerate() {
        let tagged = IndexedLine { index, line };
        if label == 0 {
            group_a.push(tagged);
        } else {
            group_b.push(tagged);
        }
    }
    Ok(LinePartition {
        group_a,
        group_b,
        objective: km.objective,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionPoint {
    pub x: f64,
    pub y: f64,
    pub parent_a: usize,
    pub parent_b: usize,
}

/// Solves the 2x2 normal-form system by Cramer's rule.
pub fn intersect(a: &PolarLine, b: &PolarLine, params: &BraceParams) -> Result<(f64, f64), BraceError> {
    let det = (b.theta - a.theta).sin();
    if det.abs() < params.parallel_eps {
        return Err(BraceError::NearParallel(det.abs()));
    }
    let (sa, ca) = a.theta.sin_cos();
    let (sb, cb) = b.theta.sin_cos();
    let x = (a.rho * sb - b.rho * sa) / det;
    let y = (b.rho * ca - a.rho * cb) / det;
    Ok((x, y))
}

/// Intersections of every cross-family pair that fall inside `bounds`, ordered
/// by `(parent_a, parent_b)`.
pub fn cross_pair_intersections(part: &LinePartition, bounds: &Rect, params: &BraceParams) -> Vec<IntersectionPoint> {
    let mut out = Vec::new();
    for a in &part.group_a {
        for b in &part.group_b {
            if let Ok((x, y)) = intersect(&a.line, &b.line, params) {
                if bounds.contains(x, y) {
                    out.push(IntersectionPoint {
                        x,
                        y,
                        parent_a: a.index,
                        parent_b: b.index,
                    });
                }
            }
        }
    }
    out.sort_by_key(|p| (p.parent_a, p.parent_b));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitVerdict {
    pub unit_id: u64,
    pub brace_present: bool,
    pub intersections: Vec<IntersectionPoint>,
    pub n_lines_a: usize,
    pub n_lines_b: usize,
    pub central_hits: usize,
}

/// Counts points inside the centred window; present iff at least one hit.
/// Line counts are left at zero for the caller to fill in.
pub fn judge_unit(unit_id: u64, points: Vec<IntersectionPoint>, bounds: &Rect, params: &BraceParams) -> UnitVerdict {
    let window = bounds.centered_window(params.central_frac);
    let central_hits = points.iter().filter(|p| window.contains(p.x, p.y)).count();
    UnitVerdict {
        unit_id,
        brace_present: central_hits >= 1,
        intersections: points,
        n_lines_a: 0,
        n_lines_b: 0,
        central_hits,
    }
}

/// Canny thresholds on the raw Sobel magnitude of 8-bit images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CannyParams {
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self { low: 50.0, high: 150.0 }
    }
}

/// Everything [`detect_unit`] needs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DetectParams {
    pub canny: CannyParams,
    pub hough: HoughParams,
    pub brace: BraceParams,
    pub seed: u64,
}

/// Full per-unit result: the verdict plus the intermediate geometry used for
/// overlays. `lines` and `crop` are in image pixel-index coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitDetection {
    pub verdict: UnitVerdict,
    pub lines: Vec<PolarLine>,
    pub diagonals: usize,
    pub crop: Rect,
}

/// Runs crop, mask, Canny, Hough, the structural filter, 2-means, the
/// intersection solve and the verdict for one region.
///
/// Detection runs in crop-local pixel-index coordinates (pixel centres on
/// integers). Reported intersections are translated to image coordinates in
/// the COCO convention, where pixel `(i, j)` has centre `(i + 0.5, j + 0.5)`.
pub fn detect_unit_detailed(
    img: &GrayImage,
    region: &UnitRegion,
    params: &DetectParams,
) -> Result<UnitDetection, BraceError> {
    params.brace.validate()?;
    params.hough.validate().map_err(BraceError::InvalidParams)?;
    let (crop, (ox, oy)) = crop_unit(img, region)?;
    let (cw, ch) = (crop.width(), crop.height());
    let mask = rasterize_polygon(&region.translated(ox as f64, oy as f64), cw, ch)?;
    let edges = apply_mask(&canny_edges(&crop, params.canny.low, params.canny.high)?, &mask)?;
    let acc = hough_accumulate(&edges, &params.hough);
    let lines = find_peaks(&acc, &params.hough, ch);
    let (diagonals, _structural) = filter_structural_lines(&lines, &params.brace);

    // region bbox, then crop bounds, in crop-local pixel-index coordinates
    let b = &region.bbox;
    let bounds = Rect {
        x_min: (b.x - ox as f64 - 0.5).max(0.0),
        y_min: (b.y - oy as f64 - 0.5).max(0.0),
        x_max: (b.x + b.w - ox as f64 - 0.5).min(cw as f64 - 1.0),
        y_max: (b.y + b.h - oy as f64 - 0.5).min(ch as f64 - 1.0),
    };

    let (points, n_a, n_b) = match partition_lines(&diagonals, &params.brace, params.seed) {
        Ok(part) => (
            cross_pair_intersections(&part, &bounds, &params.brace),
            part.group_a.len(),
            part.group_b.len(),
        ),
        Err(BraceError::InsufficientLines(_)) => (Vec::new(), diagonals.len(), 0),
        Err(e) => return Err(e),
    };
    let mut verdict = judge_unit(region.id, points, &bounds, &params.brace);
    verdict.n_lines_a = n_a;
    verdict.n_lines_b = n_b;
    let (gx, gy) = (ox as f64 + 0.5, oy as f64 + 0.5);
    for p in &mut verdict.intersections {
        p.x += gx;
        p.y += gy;
    }
    let to_image = |l: &PolarLine| {
        let (s, c) = l.theta.sin_cos();
        PolarLine::new(l.rho + ox as f64 * c + oy as f64 * s, l.theta)
    };
    Ok(UnitDetection {
        verdict,
        lines: lines.iter().map(to_image).collect(),
        diagonals: diagonals.len(),
        crop: Rect {
            x_min: ox as f64,
            y_min: oy as f64,
            x_max: (ox + cw - 1) as f64,
            y_max: (oy + ch - 1) as f64,
        },
    })
}

pub fn detect_unit(img: &GrayImage, region: &UnitRegion, params: &DetectParams) -> Result<UnitVerdict, BraceError> {
    detect_unit_detailed(img, region, params).map(|d| d.verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn line(theta: f64) -> PolarLine {
        PolarLine { rho: 0.0, theta }
    }

    fn bounds(w: f64, h: f64) -> Rect {
        Rect {
            x_min: 0.0,
            y_min: 0.0,
            x_max: w,
            y_max: h,
        }
    }

    /// Exhaustive minimum-SSE 2-partition; returns the labels with point 0 in cluster 0.
    fn exhaustive(points: &[AnglePoint]) -> (Vec<u8>, f64) {
        let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
        let n = pts.len();
        let mut best = (Vec::new(), f64::INFINITY);
        for mask in 0u32..(1 << (n - 1)) {
            let labels: Vec<u8> = (0..n)
                .map(|i| if i == 0 { 0 } else { ((mask >> (i - 1)) & 1) as u8 })
                .collect();
            if !labels.contains(&1) {
                continue;
            }
            let mut total = 0.0;
            for k in 0..2u8 {
                let members: Vec<_> = pts
                    .iter()
                    .zip(&labels)
                    .filter(|(_, &l)| l == k)
                    .map(|(p, _)| *p)
                    .collect();
                let m = members.len() as f64;
                let c = (
                    members.iter().map(|p| p.0).sum::<f64>() / m,
                    members.iter().map(|p| p.1).sum::<f64>() / m,
                );
                total += members
                    .iter()
                    .map(|p| (p.0 - c.0).powi(2) + (p.1 - c.1).powi(2))
                    .sum::<f64>();
            }
            if total < best.1 {
                best = (labels, total);
            }
        }
        best
    }

    #[test]
    fn structural_filter_examples() {
        let p = BraceParams::default();
        let lines = [
            line(0.01),
            line(3.13),
            line(PI / 4.0),
            line(3.0 * PI / 4.0),
            line(PI / 2.0 + 0.1),
        ];
        let (diag, structural) = filter_structural_lines(&lines, &p);
        assert_eq!(diag, vec![line(PI / 4.0), line(3.0 * PI / 4.0)]);
        assert_eq!(structural, vec![line(0.01), line(3.13), line(PI / 2.0 + 0.1)]);
    }

    #[test]
    fn embedding_examples() {
        let e = embed_angles(&[line(0.0), line(PI / 2.0), line(0.02), line(PI - 0.02)]);
        assert_eq!((e[0].x, e[0].y), (1.0, 0.0));
        assert!((e[1].x + 1.0).abs() < 1e-15 && e[1].y.abs() < 1e-15);
        let chord = ((e[2].x - e[3].x).powi(2) + (e[2].y - e[3].y).powi(2)).sqrt();
        assert!((chord - 2.0 * 0.04f64.sin()).abs() < 1e-12);
        assert!((chord - 0.0800).abs() < 1e-4);
        for p in &e {
            assert!((p.x * p.x + p.y * p.y - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn kmeans_two_points() {
        let pts = embed_angles(&[line(PI / 4.0), line(3.0 * PI / 4.0)]);
        let km = kmeans_two(&pts, &BraceParams::default(), 42).unwrap();
        assert_eq!(km.labels, vec![0, 1]);
        assert!(km.objective.abs() < 1e-24);
    }

    #[test]
    fn kmeans_insufficient() {
        let p = BraceParams::default();
        assert!(matches!(kmeans_two(&[], &p, 1), Err(BraceError::InsufficientLines(0))));
        let same = embed_angles(&[line(0.5), line(0.5), line(0.5 + PI)]);
        assert!(matches!(
            kmeans_two(&same, &p, 1),
            Err(BraceError::InsufficientLines(1))
        ));
    }

    #[test]
    fn kmeans_seam_example() {
        let degs = [10.0f64, 170.0, 85.0, 95.0];
        let pts = embed_angles(&degs.map(|d| line(d.to_radians())));
        let km = kmeans_two(&pts, &BraceParams::default(), 42).unwrap();
        let (oracle, obj) = exhaustive(&pts);
        assert_eq!(km.labels, oracle);
        assert_eq!(km.labels, vec![0, 0, 1, 1]);
        assert!((km.objective - obj).abs() < 1e-12);
    }

    #[test]
    fn kmeans_six_lines_two_families() {
        let degs = [49.0f64, 50.0, 51.0, 129.0, 130.5, 131.0];
        let pts = embed_angles(&degs.map(|d| line(d.to_radians())));
        let km = kmeans_two(&pts, &BraceParams::default(), 42).unwrap();
        assert_eq!(km.labels, exhaustive(&pts).0);
        assert_eq!(km.labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn kmeans_history_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(2..13);
            let lines: Vec<_> = (0..n).map(|_| line(rng.random_range(0.0..PI))).collect();
            let pts: Vec<(f64, f64)> = embed_angles(&lines).iter().map(|p| (p.x, p.y)).collect();
            for _ in 0..3 {
                let i = rng.random_range(0..n);
                let j = (i + 1 + rng.random_range(0..n - 1)) % n;
                let (_, _, history) = lloyd(&pts, [pts[i], pts[j]], &BraceParams::default());
                for w in history.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "{history:?}");
                }
            }
        }
    }

    #[test]
    fn kmeans_partition_invariant_under_permutation() {
        let degs = [48.0f64, 52.0, 50.5, 127.0, 133.0, 130.0, 131.5];
        let base: Vec<_> = degs.iter().map(|d| line(d.to_radians())).collect();
        let p = BraceParams::default();
        let reference = kmeans_two(&embed_angles(&base), &p, 5).unwrap();
        assert_eq!(reference.restart, 0);
        let sets = |lines: &[PolarLine], labels: &[u8]| {
            let mut groups: Vec<Vec<u64>> = vec![Vec::new(), Vec::new()];
            for (l, &lab) in lines.iter().zip(labels) {
                groups[lab as usize].push(l.theta.to_bits());
            }
            groups.iter_mut().for_each(|g| g.sort());
            groups.sort();
            groups
        };
        let expected = sets(&base, &reference.labels);
        let perms: [[usize; 7]; 3] = [[6, 5, 4, 3, 2, 1, 0], [3, 0, 4, 1, 5, 2, 6], [1, 3, 5, 0, 2, 4, 6]];
        for perm in perms {
            let lines: Vec<_> = perm.iter().map(|&i| base[i]).collect();
            let km = kmeans_two(&embed_angles(&lines), &p, 5).unwrap();
            assert_eq!(sets(&lines, &km.labels), expected);
        }
    }

    #[test]
    fn intersect_examples() {
        let p = BraceParams::default();
        let (x, y) = intersect(
            &PolarLine { rho: 3.0, theta: 0.0 },
            &PolarLine {
                rho: 7.0,
                theta: PI / 2.0,
            },
            &p,
        )
        .unwrap();
        assert!((x - 3.0).abs() < 1e-12 && (y - 7.0).abs() < 1e-12);

        let a = PolarLine {
            rho: 0.0,
            theta: PI / 4.0,
        };
        let b = PolarLine {
            rho: 1e-4,
            theta: PI / 4.0 + 1e-5,
        };
        assert!(matches!(intersect(&a, &b, &p), Err(BraceError::NearParallel(_))));

        // y = x and x + y = 10 sqrt 2; oracle: Gaussian elimination on the 2x2 system
        let a = PolarLine {
            rho: 0.0,
            theta: 3.0 * PI / 4.0,
        };
        let b = PolarLine {
            rho: 10.0,
            theta: PI / 4.0,
        };
        let (x, y) = intersect(&a, &b, &p).unwrap();
        let (ox, oy) = solve2(
            [[a.theta.cos(), a.theta.sin()], [b.theta.cos(), b.theta.sin()]],
            [a.rho, b.rho],
        );
        assert!((x - ox).abs() < 1e-9 && (y - oy).abs() < 1e-9);
        assert!((x - 5.0 * 2f64.sqrt()).abs() < 1e-9 && (y - 5.0 * 2f64.sqrt()).abs() < 1e-9);
    }

    /// Gaussian elimination with partial pivoting.
    fn solve2(m: [[f64; 2]; 2], r: [f64; 2]) -> (f64, f64) {
        let (mut m, mut r) = (m, r);
        if m[1][0].abs() > m[0][0].abs() {
            m.swap(0, 1);
            r.swap(0, 1);
        }
        let f = m[1][0] / m[0][0];
        let m11 = m[1][1] - f * m[0][1];
        let r1 = r[1] - f * r[0];
        let y = r1 / m11;
        ((r[0] - m[0][1] * y) / m[0][0], y)
    }

    #[test]
    fn cross_pairs_cardinality_and_bounds() {
        let p = BraceParams::default();
        let tag = |index, line| IndexedLine { index, line };
        let empty = LinePartition {
            group_a: vec![],
            group_b: vec![tag(0, line(1.0))],
            objective: 0.0,
        };
        assert!(cross_pair_intersections(&empty, &bounds(100.0, 100.0), &p).is_empty());

        // two lines near 60 deg and three near 120 deg, all crossing near (50, 50)
        let through = |theta: f64| PolarLine {
            rho: 50.0 * theta.cos() + 50.0 * theta.sin(),
            theta,
        };
        let part = LinePartition {
            group_a: vec![tag(0, through(1.0)), tag(1, through(1.05))],
            group_b: vec![tag(2, through(2.0)), tag(3, through(2.1)), tag(4, through(2.2))],
            objective: 0.0,
        };
        let pts = cross_pair_intersections(&part, &bounds(100.0, 100.0), &p);
        assert_eq!(pts.len(), 6);
        let order: Vec<_> = pts.iter().map(|q| (q.parent_a, q.parent_b)).collect();
        assert_eq!(order, vec![(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]);

        // x = 150 meets y = 50 fifty pixels right of the bbox
        let part = LinePartition {
            group_a: vec![tag(0, PolarLine { rho: 150.0, theta: 0.0 })],
            group_b: vec![tag(
                1,
                PolarLine {
                    rho: 50.0,
                    theta: PI / 2.0,
                },
            )],
            objective: 0.0,
        };
        assert!(cross_pair_intersections(&part, &bounds(100.0, 100.0), &p).is_empty());
    }

    #[test]
    fn judge_examples() {
        let p = BraceParams::default();
        let b = bounds(100.0, 200.0);
        assert!(!judge_unit(1, vec![], &b, &p).brace_present);
        let at = |x, y| IntersectionPoint {
            x,
            y,
            parent_a: 0,
            parent_b: 1,
        };
        let v = judge_unit(1, vec![at(50.0, 100.0)], &b, &p);
        assert!(v.brace_present && v.central_hits == 1);
        let v = judge_unit(1, vec![at(0.0, 0.0), at(100.0, 200.0)], &b, &p);
        assert!(!v.brace_present && v.intersections.len() == 2 && v.central_hits == 0);
    }

    #[test]
    fn blank_crop_is_negative() {
        let img = GrayImage::filled(120, 200, 255);
        let region = UnitRegion::rectangle(
            9,
            1,
            crate::coco::BBox {
                x: 10.0,
                y: 10.0,
                w: 100.0,
                h: 180.0,
            },
            "scaffold_unit",
        );
        let v = detect_unit(&img, &region, &DetectParams::default()).unwrap();
        assert_eq!((v.brace_present, v.n_lines_a, v.n_lines_b, v.unit_id), (false, 0, 0, 9));
    }

    proptest! {
        #[test]
        fn embedding_is_pi_periodic(theta in -20.0f64..20.0) {
            let a = embed_angles(&[line(theta)])[0];
            let b = embed_angles(&[line(theta.rem_euclid(PI))])[0];
            prop_assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }

        #[test]
        fn intersection_satisfies_both_lines(
            ra in -800.0f64..800.0, ta in 0.0f64..PI, rb in -800.0f64..800.0, tb in 0.0f64..PI,
        ) {
            let p = BraceParams::default();
            let a = PolarLine { rho: ra, theta: ta };
            let b = PolarLine { rho: rb, theta: tb };
            match intersect(&a, &b, &p) {
                Ok((x, y)) => {
                    prop_assert!(a.residual(x, y).abs() <= 1e-6);
                    prop_assert!(b.residual(x, y).abs() <= 1e-6);
                    let (x2, y2) = intersect(&b, &a, &p).unwrap();
                    prop_assert!((x - x2).abs() <= 1e-9 && (y - y2).abs() <= 1e-9);
                }
                Err(BraceError::NearParallel(_)) => prop_assert!((tb - ta).sin().abs() < p.parallel_eps),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn judge_is_monotone(
            pts in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..6),
            extra in (20.0f64..80.0, 20.0f64..80.0),
        ) {
            let p = BraceParams::default();
            let b = bounds(100.0, 100.0);
            let mk = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| IntersectionPoint { x, y, parent_a: 0, parent_b: 0 }).collect::<Vec<_>>();
            let before = judge_unit(1, mk(&pts), &b, &p);
            let mut more = pts.clone();
            more.push(extra);
            let after = judge_unit(1, mk(&more), &b, &p);
            prop_assert!(after.brace_present);
            prop_assert!(!before.brace_present || after.brace_present);
        }
    }
}
