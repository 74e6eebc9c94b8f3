//! Standard Hough transform for straight lines.
//!
//! Lines are kept in normal form `x cos(theta) + y sin(theta) = rho` with the
//! origin at the centre of the top-left pixel, `x` rightward, `y` downward,
//! `theta` in `[0, pi)` and signed `rho`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::imaging::EdgeMap;

/// A line in polar normal form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarLine {
    pub rho: f64,
    pub theta: f64,
}

impl PolarLine {
    /// Builds a line from any `theta`, folding it into `[0, pi)` and flipping
    /// the sign of `rho` for every half-turn removed.
    pub fn new(rho: f64, theta: f64) -> Self {
        let turns = (theta / PI).floor();
        let mut t = theta - turns * PI;
        let mut r = if (turns as i64) % 2 == 0 { rho } else { -rho };
        if t >= PI {
            t -= PI;
            r = -r;
        }
        if t < 0.0 {
            t = 0.0;
        }
        Self { rho: r, theta: t }
    }

    /// Signed distance of `(x, y)` from the line.
    pub fn residual(&self, x: f64, y: f64) -> f64 {
        x * self.theta.cos() + y * self.theta.sin() - self.rho
    }
}

/// Minimum vote count, either fixed or proportional to the crop height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteThreshold {
    Absolute(u32),
    HeightFraction(f64),
}

impl VoteThreshold {
    pub fn resolve(&self, image_height: usize) -> u32 {
        match *self {
            VoteThreshold::Absolute(v) => v.max(1),
            VoteThreshold::HeightFraction(f) => ((f * image_height as f64).ceil() as u32).max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoughParams {
    pub rho_res: f64,
    pub theta_res: f64,
    pub threshold: VoteThreshold,
    pub nms_rho: usize,
    pub nms_theta: usize,
    pub max_lines: usize,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            rho_res: 1.0,
            theta_res: PI / 180.0,
            threshold: VoteThreshold::HeightFraction(0.3),
            nms_rho: 2,
            nms_theta: 2,
            max_lines: 16,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<(), String> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.rho_res) || !finite_pos(self.theta_res) || self.theta_res > PI {
            return Err("rho_res and theta_res must be positive (theta_res <= pi)".into());
        }
        if self.nms_rho == 0 || self.nms_theta == 0 || self.max_lines == 0 {
            return Err("nms_rho, nms_theta and max_lines must be positive".into());
        }
        match self.threshold {
            VoteThreshold::Absolute(0) => Err("threshold must be at least 1".into()),
            VoteThreshold::HeightFraction(f) if !finite_pos(f) => Err("threshold fraction must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// Vote histogram over `(rho, theta)` cells.
///
/// Rho bin `k` is centred on `-diag + k * rho_res`; theta bin `j` on
/// `j * theta_step` with `theta_step = pi / theta_bins`.
#[derive(Clone, Debug)]
pub struct HoughAccumulator {
    rho_res: f64,
    theta_step: f64,
    rho_bins: usize,
    theta_bins: usize,
    diag: f64,
    votes: Vec<u32>,
}

impl HoughAccumulator {
    pub fn new(width: usize, height: usize, rho_res: f64, theta_res: f64) -> Self {
        let diag = ((width * width + height * height) as f64).sqrt();
        let rho_bins = (2.0 * diag / rho_res).ceil() as usize + 1;
        let theta_bins = ((PI / theta_res).round() as usize).max(1);
        Self {
            rho_res,
            theta_step: PI / theta_bins as f64,
            rho_bins,
            theta_bins,
            diag,
            votes: vec![0; rho_bins * theta_bins],
        }
    }

    pub fn rho_bins(&self) -> usize {
        self.rho_bins
    }

    pub fn theta_bins(&self) -> usize {
        self.theta_bins
    }

    pub fn rho_res(&self) -> f64 {
        self.rho_res
    }

    pub fn theta_step(&self) -> f64 {
        self.theta_step
    }

    pub fn diag(&self) -> f64 {
        self.diag
    }

    #[inline]
    pub fn votes(&self, rho_bin: usize, theta_bin: usize) -> u32 {
        self.votes[theta_bin * self.rho_bins + rho_bin]
    }

    pub fn total_votes(&self) -> u64 {
        self.votes.iter().map(|&v| u64::from(v)).sum()
    }

    pub fn rho_center(&self, rho_bin: usize) -> f64 {
        -self.diag + rho_bin as f64 * self.rho_res
    }

    pub fn theta_center(&self, theta_bin: usize) -> f64 {
        theta_bin as f64 * self.theta_step
    }

    pub fn rho_bin(&self, rho: f64) -> usize {
        (((rho + self.diag) / self.rho_res).round().max(0.0) as usize).min(self.rho_bins - 1)
    }

    pub fn line(&self, rho_bin: usize, theta_bin: usize) -> PolarLine {
        PolarLine {
            rho: self.rho_center(rho_bin),
            theta: self.theta_center(theta_bin),
        }
    }

    /// Adds another accumulator of identical geometry cell by cell.
    pub fn merge(&mut self, other: &HoughAccumulator) {
        assert_eq!(self.votes.len(), other.votes.len(), "accumulator geometry mismatch");
        for (a, b) in self.votes.iter_mut().zip(&other.votes) {
            *a += b;
        }
    }

    fn vote_points(&mut self, points: impl Iterator<Item = (usize, usize)>) {
        let trig: Vec<(f64, f64)> = (0..self.theta_bins).map(|j| self.theta_center(j).sin_cos()).collect();
        for (x, y) in points {
            let (x, y) = (x as f64, y as f64);
            for (j, &(s, c)) in trig.iter().enumerate() {
                let k = self.rho_bin(x * c + y * s);
                self.votes[j * self.rho_bins + k] += 1;
            }
        }
    }
}

/// Every edge pixel votes once per theta bin.
pub fn hough_accumulate(edges: &EdgeMap, params: &HoughParams) -> HoughAccumulator {
    let mut acc = HoughAccumulator::new(edges.width(), edges.height(), params.rho_res, params.theta_res);
    acc.vote_points(edges.points());
    acc
}

/// A selected accumulator cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub line: PolarLine,
    pub votes: u32,
    pub rho_bin: usize,
    pub theta_bin: usize,
}

/// Whether two cells fall inside each other's suppression window. Cells near
/// theta = 0 and theta = pi are compared with the rho of one of them negated.
pub fn within_nms_window(acc: &HoughAccumulator, a: (usize, usize), b: (usize, usize), params: &HoughParams) -> bool {
    let (ra, ta) = a;
    let (rb, tb) = b;
    let rho_tol = params.nms_rho as f64 * acc.rho_res + 1e-9;
    let dt = ta.abs_diff(tb);
    if dt <= params.nms_theta && (acc.rho_center(ra) - acc.rho_center(rb)).abs() <= rho_tol {
        return true;
    }
    let wrapped = acc.theta_bins - dt;
    wrapped <= params.nms_theta && (acc.rho_center(ra) + acc.rho_center(rb)).abs() <= rho_tol
}

/// Greedy non-maximum suppression over cells with at least `threshold` votes,
/// visited by descending votes, then ascending theta bin, then ascending rho bin.
pub fn find_peaks_with_votes(acc: &HoughAccumulator, params: &HoughParams, threshold: u32) -> Vec<Peak> {
    let mut cells: Vec<(u32, usize, usize)> = Vec::new();
    for t in 0..acc.theta_bins {
        for r in 0..acc.rho_bins {
            let v = acc.votes(r, t);
            if v >= threshold && v > 0 {
                cells.push((v, t, r));
            }
        }
    }
    cells.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut peaks: Vec<Peak> = Vec::new();
    for (votes, t, r) in cells {
        if peaks.len() >= params.max_lines {
            break;
        }
        if peaks
            .iter()
            .any(|p| within_nms_window(acc, (p.rho_bin, p.theta_bin), (r, t), params))
        {
            continue;
        }
        peaks.push(Peak {
            line: acc.line(r, t),
            votes,
            rho_bin: r,
            theta_bin: t,
        });
    }
    peaks
}

/// Peak lines at bin centres; `image_height` resolves a relative threshold.
pub fn find_peaks(acc: &HoughAccumulator, params: &HoughParams, image_height: usize) -> Vec<PolarLine> {
    let threshold = params.threshold.resolve(image_height);
    find_peaks_with_votes(acc, params, threshold)
        .into_iter()
        .map(|p| p.line)
        .collect()
}

pub const DEFAULT_HALF_EXTENT: f64 = 1000.0;

/// Two points `half_extent` either side of the foot of the perpendicular from
/// the origin.
pub fn line_to_segment(line: &PolarLine, half_extent: f64) -> ((f64, f64), (f64, f64)) {
    let (s, c) = line.theta.sin_cos();
    let (x0, y0) = (line.rho * c, line.rho * s);
    (
        (x0 - half_extent * s, y0 + half_extent * c),
        (x0 + half_extent * s, y0 - half_extent * c),
    )
}

/// Smallest rotation taking one line orientation onto the other, in `[0, pi/2]`.
pub fn axial_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}
