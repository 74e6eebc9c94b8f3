//! Diagnostic overlays: detected lines, intersections and unit outlines.

use crate::brace::{Rect, UnitDetection};
use crate::hough::{line_to_segment, PolarLine, DEFAULT_HALF_EXTENT};
use crate::imaging::{GrayImage, RgbImage};

pub const PRESENT_COLOR: [u8; 3] = [0, 255, 0];
pub const ABSENT_COLOR: [u8; 3] = [255, 0, 0];
pub const LINE_COLOR: [u8; 3] = [0, 128, 255];
pub const POINT_COLOR: [u8; 3] = [255, 0, 255];
pub const POINT_RADIUS: i64 = 4;

/// Clips the segment `a-b` to `rect` (Liang-Barsky).
pub fn clip_segment(a: (f64, f64), b: (f64, f64), rect: &Rect) -> Option<((f64, f64), (f64, f64))> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [
        (-dx, a.0 - rect.x_min),
        (dx, rect.x_max - a.0),
        (-dy, a.1 - rect.y_min),
        (dy, rect.y_max - a.1),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
            continue;
        }
        let t = q / p;
        if p < 0.0 {
            t0 = t0.max(t);
        } else {
            t1 = t1.min(t);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some(((a.0 + t0 * dx, a.1 + t0 * dy), (a.0 + t1 * dx, a.1 + t1 * dy)))
}

fn put(img: &mut RgbImage, x: i64, y: i64, rgb: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set(x as usize, y as usize, rgb);
    }
}

/// Bresenham between rounded endpoints.
fn draw_segment(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), rgb: [u8; 3]) {
    let (mut x, mut y) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let (dx, dy) = ((x1 - x).abs(), -(y1 - y).abs());
    let (sx, sy) = (if x < x1 { 1 } else { -1 }, if y < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x, y, rgb);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn draw_disc(img: &mut RgbImage, cx: i64, cy: i64, r: i64, rgb: [u8; 3]) {
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                put(img, cx + dx, cy + dy, rgb);
            }
        }
    }
}

fn draw_outline(img: &mut RgbImage, r: &Rect, rgb: [u8; 3]) {
    let (x0, y0, x1, y1) = (r.x_min, r.y_min, r.x_max, r.y_max);
    for (a, b) in [
        ((x0, y0), (x1, y0)),
        ((x1, y0), (x1, y1)),
        ((x1, y1), (x0, y1)),
        ((x0, y1), (x0, y0)),
    ] {
        draw_segment(img, a, b, rgb);
    }
}

/// Draws a line (image pixel-index coordinates) within `clip`.
pub fn draw_line(img: &mut RgbImage, line: &PolarLine, clip: &Rect, rgb: [u8; 3]) {
    let (a, b) = line_to_segment(line, DEFAULT_HALF_EXTENT);
    if let Some((a, b)) = clip_segment(a, b, clip) {
        draw_segment(img, a, b, rgb);
    }
}

/// Promotes `img` to RGB and draws, per unit, its lines clipped to the crop,
/// its intersections as discs, then the crop outline coloured by verdict.
pub fn draw_overlay(img: &GrayImage, units: &[UnitDetection]) -> RgbImage {
    let mut out = img.to_rgb();
    for u in units {
        for l in &u.lines {
            draw_line(&mut out, l, &u.crop, LINE_COLOR);
        }
    }
    for u in units {
        for p in &u.verdict.intersections {
            // reported points use pixel-centre-at-half coordinates
            draw_disc(
                &mut out,
                (p.x - 0.5).round() as i64,
                (p.y - 0.5).round() as i64,
                POINT_RADIUS,
                POINT_COLOR,
            );
        }
        let color = if u.verdict.brace_present {
            PRESENT_COLOR
        } else {
            ABSENT_COLOR
        };
        draw_outline(&mut out, &u.crop, color);
    }
    out
}
