//! Raster primitives: decoding, grayscale conversion, Sobel gradients, Canny
//! edges and mask-restricted edge maps.
//!
//! Pixel `(x, y)` is addressed with `x` rightward and `y` downward; buffers are
//! row-major.

use std::collections::VecDeque;
use std::io::Cursor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("unsupported image format (expected PNG or ASCII PPM)")]
    UnsupportedFormat,
    #[error("corrupt image payload: {0}")]
    CorruptPayload(String),
    #[error("image is {width}x{height}; at least 3x3 is required")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid thresholds: low {low} > high {high}")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("mask has no set pixels")]
    EmptyMask,
    #[error("png encoding failed: {0}")]
    Encode(String),
}

/// Single-channel 8-bit luminance raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::InvalidRaster("zero dimension".into()));
        }
        if data.len() != width * height {
            return Err(ImagingError::InvalidRaster(format!(
                "buffer holds {} values, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self { width, height, data })
    }

    /// Constant image. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "zero-sized image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Copy of the rectangle `[x0, x0+w) x [y0, y0+h)`, which must lie inside the image.
    pub fn sub_image(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        assert!(w > 0 && h > 0 && x0 + w <= self.width && y0 + h <= self.height);
        let mut data = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
        }
        Self {
            width: w,
            height: h,
            data,
        }
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| [v, v, v]).collect(),
        }
    }
}

/// Three-channel 8-bit raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(ImagingError::InvalidRaster(format!(
                "{}x{} raster with {} pixels",
                width,
                height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.data[y * self.width + x] = rgb;
    }
}

/// Result of [`decode_image`]: the file's native channel layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Raster {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl Raster {
    pub fn width(&self) -> usize {
        match self {
            Raster::Gray(g) => g.width(),
            Raster::Rgb(c) => c.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Raster::Gray(g) => g.height(),
            Raster::Rgb(c) => c.height(),
        }
    }

    pub fn into_gray(self) -> GrayImage {
        match self {
            Raster::Gray(g) => g,
            Raster::Rgb(c) => to_grayscale(&c),
        }
    }
}

const PNG_MAGIC: &[u8] = &[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Decodes a PNG or ASCII (P3) PPM payload.
pub fn decode_image(bytes: &[u8]) -> Result<Raster, ImagingError> {
    if bytes.starts_with(PNG_MAGIC) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P3") {
        decode_ppm(bytes)
    } else {
        Err(ImagingError::UnsupportedFormat)
    }
}

fn decode_png(bytes: &[u8]) -> Result<Raster, ImagingError> {
    decode_with(bytes, image::ImageFormat::Png)
}

fn decode_ppm(bytes: &[u8]) -> Result<Raster, ImagingError> {
    decode_with(bytes, image::ImageFormat::Pnm)
}

fn decode_with(bytes: &[u8], format: image::ImageFormat) -> Result<Raster, ImagingError> {
    let img =
        image::load_from_memory_with_format(bytes, format).map_err(|e| ImagingError::CorruptPayload(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        image::DynamicImage::ImageLuma8(buf) => Ok(Raster::Gray(GrayImage::new(w, h, buf.into_raw())?)),
        other => {
            let rgb = other.to_rgb8().into_raw();
            let data = rgb.chunks_exact(3).map(|p| [p[0], p[1], p[2]]).collect();
            Ok(Raster::Rgb(RgbImage::new(w, h, data)?))
        }
    }
}

/// ITU-R 601 luma, rounded and clamped to `[0, 255]`.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let y = 0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2]);
    y.round().clamp(0.0, 255.0) as u8
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|&p| luma(p)).collect(),
    }
}

pub fn encode_png_gray(img: &GrayImage) -> Result<Vec<u8>, ImagingError> {
    encode_png(img.data(), img.width, img.height, image::ExtendedColorType::L8)
}

pub fn encode_png_rgb(img: &RgbImage) -> Result<Vec<u8>, ImagingError> {
    let flat: Vec<u8> = img.data.iter().flatten().copied().collect();
    encode_png(&flat, img.width, img.height, image::ExtendedColorType::Rgb8)
}

fn encode_png(
    raw: &[u8],
    width: usize,
    height: usize,
    color: image::ExtendedColorType,
) -> Result<Vec<u8>, ImagingError> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(raw, width as u32, height as u32, color)
        .map_err(|e| ImagingError::Encode(e.to_string()))?;
    Ok(out)
}

/// ASCII P3 PPM with maxval 255.
pub fn encode_ppm(img: &RgbImage) -> String {
    let mut s = format!("P3\n{} {}\n255\n", img.width, img.height);
    for row in img.data.chunks(img.width) {
        let line: Vec<String> = row.iter().map(|p| format!("{} {} {}", p[0], p[1], p[2])).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// Per-pixel Sobel response. Border pixels carry zero gradient.
#[derive(Clone, Debug)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<i32>,
    gy: Vec<i32>,
    magnitude: Vec<f64>,
    direction: Vec<f64>,
}

impl GradientField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    /// Gradient angle `atan2(gy, gx)` in `[-pi, pi]`.
    pub fn direction(&self, x: usize, y: usize) -> f64 {
        self.direction[y * self.width + x]
    }

    pub fn gx(&self, x: usize, y: usize) -> i32 {
        self.gx[y * self.width + x]
    }

    pub fn gy(&self, x: usize, y: usize) -> i32 {
        self.gy[y * self.width + x]
    }
}

pub fn sobel_gradients(img: &GrayImage) -> Result<GradientField, ImagingError> {
    let (w, h) = (img.width, img.height);
    if w < 3 || h < 3 {
        return Err(ImagingError::ImageTooSmall { width: w, height: h });
    }
    let mut gx = vec![0i32; w * h];
    let mut gy = vec![0i32; w * h];
    let p = |x: usize, y: usize| i32::from(img.data[y * w + x]);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let (tl, tc, tr) = (p(x - 1, y - 1), p(x, y - 1), p(x + 1, y - 1));
            let (ml, mr) = (p(x - 1, y), p(x + 1, y));
            let (bl, bc, br) = (p(x - 1, y + 1), p(x, y + 1), p(x + 1, y + 1));
            gx[y * w + x] = (tr + 2 * mr + br) - (tl + 2 * ml + bl);
            gy[y * w + x] = (bl + 2 * bc + br) - (tl + 2 * tc + tr);
        }
    }
    let magnitude = gx
        .iter()
        .zip(&gy)
        .map(|(&a, &b)| f64::from(a * a + b * b).sqrt())
        .collect();
    let direction = gx
        .iter()
        .zip(&gy)
        .map(|(&a, &b)| f64::from(b).atan2(f64::from(a)))
        .collect();
    Ok(GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
        direction,
    })
}

/// Binary edge raster; the Hough transform's voting set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    edges: Vec<bool>,
}

impl EdgeMap {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "zero-sized edge map");
        Self {
            width,
            height,
            edges: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut map = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                map.edges[y * width + x] = f(x, y);
            }
        }
        map
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.edges[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.edges[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.edges.iter().any(|&e| e)
    }

    /// Edge pixel coordinates in row-major order.
    pub fn points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }
}

/// Binary region mask with its tight inclusive bounding box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitMask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
    bbox: (usize, usize, usize, usize),
}

impl UnitMask {
    pub fn new(width: usize, height: usize, inside: Vec<bool>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 || inside.len() != width * height {
            return Err(ImagingError::InvalidRaster("mask buffer size".into()));
        }
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        for (i, _) in inside.iter().enumerate().filter(|(_, &v)| v) {
            let (x, y) = (i % width, i / width);
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
        }
        if bbox.0 == usize::MAX {
            return Err(ImagingError::EmptyMask);
        }
        Ok(Self {
            width,
            height,
            inside,
            bbox,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height]).expect("non-empty full mask")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.inside[y * self.width + x]
    }

    /// `(x_min, y_min, x_max, y_max)`, inclusive.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.inside.iter().filter(|&&v| v).count()
    }
}

/// Neighbour offsets along the gradient, quantized to 0/45/90/135 degrees.
fn gradient_neighbours(direction: f64) -> (isize, isize) {
    let mut deg = direction.to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Thin ridges of the gradient magnitude. A pixel survives when it is strictly
/// greater than its backward neighbour and at least its forward neighbour along
/// the quantized gradient direction, so two-pixel plateaus keep exactly one pixel.
pub fn non_maximum_suppression(grad: &GradientField) -> Vec<bool> {
    let (w, h) = (grad.width, grad.height);
    let mut keep = vec![false; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let m = grad.magnitude(x, y);
            if m <= 0.0 {
                continue;
            }
            let (dx, dy) = gradient_neighbours(grad.direction(x, y));
            let fwd = grad.magnitude((x as isize + dx) as usize, (y as isize + dy) as usize);
            let back = grad.magnitude((x as isize - dx) as usize, (y as isize - dy) as usize);
            keep[y * w + x] = m > back && m >= fwd;
        }
    }
    keep
}

/// Canny edge detector: Sobel magnitude, non-maximum suppression, then
/// 8-connected double-threshold hysteresis.
pub fn canny_edges(img: &GrayImage, low: f64, high: f64) -> Result<EdgeMap, ImagingError> {
    if !(low >= 0.0 && low <= high) {
        return Err(ImagingError::InvalidThresholds { low, high });
    }
    let grad = sobel_gradients(img)?;
    let (w, h) = (grad.width, grad.height);
    let thin = non_maximum_suppression(&grad);
    let candidate = |i: usize| thin[i] && grad.magnitude[i] >= low;

    let mut out = EdgeMap::new(w, h);
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if candidate(i) && grad.magnitude[i] >= high {
            out.edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !out.edges[j] && candidate(j) {
                    out.edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(out)
}

pub fn apply_mask(edges: &EdgeMap, mask: &UnitMask) -> Result<EdgeMap, ImagingError> {
    if edges.width != mask.width || edges.height != mask.height {
        return Err(ImagingError::DimensionMismatch(
            edges.width,
            edges.height,
            mask.width,
            mask.height,
        ));
    }
    Ok(EdgeMap {
        width: edges.width,
        height: edges.height,
        edges: edges.edges.iter().zip(&mask.inside).map(|(&e, &m)| e && m).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SOBEL_X: [[i32; 3]; 3] = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
    const SOBEL_Y: [[i32; 3]; 3] = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];

    /// Direct 3x3 correlation, zero on the border ring.
    fn naive_sobel(img: &GrayImage) -> (Vec<i32>, Vec<i32>) {
        let (w, h) = (img.width(), img.height());
        let mut gx = vec![0; w * h];
        let mut gy = vec![0; w * h];
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let (mut sx, mut sy) = (0, 0);
                for (ky, (rx, ry)) in SOBEL_X.iter().zip(SOBEL_Y.iter()).enumerate() {
                    for kx in 0..3 {
                        let v = i32::from(img.get(x + kx - 1, y + ky - 1));
                        sx += rx[kx] * v;
                        sy += ry[kx] * v;
                    }
                }
                gx[y * w + x] = sx;
                gy[y * w + x] = sy;
            }
        }
        (gx, gy)
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |_, _| rng.random())
    }

    #[test]
    fn ppm_white_decodes_to_gray_255() {
        let ppm = b"P3\n2 2\n255\n255 255 255 255 255 255\n255 255 255 255 255 255\n";
        let gray = decode_image(ppm).unwrap().into_gray();
        assert_eq!(gray, GrayImage::filled(2, 2, 255));
    }

    #[test]
    fn ppm_with_comments_and_lower_maxval() {
        let ppm = b"P3\n# a comment\n1 1\n15\n15 0 15\n";
        match decode_image(ppm).unwrap() {
            Raster::Rgb(c) => assert_eq!(c.get(0, 0), [255, 0, 255]),
            other => panic!("expected rgb, got {other:?}"),
        }
    }

    #[test]
    fn truncated_header_is_corrupt() {
        assert!(matches!(decode_image(b"P3\n2"), Err(ImagingError::CorruptPayload(_))));
        assert!(matches!(
            decode_image(b"P3\n2 2\n255\n1 2 3"),
            Err(ImagingError::CorruptPayload(_))
        ));
        assert!(matches!(
            decode_image(&PNG_MAGIC[..8]),
            Err(ImagingError::CorruptPayload(_))
        ));
    }

    #[test]
    fn unknown_magic_is_unsupported() {
        assert!(matches!(decode_image(b"GIF89a"), Err(ImagingError::UnsupportedFormat)));
    }

    #[test]
    fn png_gray_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 8, 8);
        let bytes = encode_png_gray(&img).unwrap();
        assert_eq!(decode_image(&bytes).unwrap(), Raster::Gray(img));
    }

    #[test]
    fn ppm_encode_decode_round_trip() {
        let img = RgbImage::new(2, 1, vec![[1, 2, 3], [250, 128, 0]]).unwrap();
        let text = encode_ppm(&img);
        assert_eq!(decode_image(text.as_bytes()).unwrap(), Raster::Rgb(img));
    }

    #[test]
    fn luma_values() {
        assert_eq!(luma([0, 0, 0]), 0);
        assert_eq!(luma([255, 255, 255]), 255);
        // 0.299 * 255 = 76.245
        assert_eq!(luma([255, 0, 0]), 76);
        assert_eq!(luma([100, 100, 100]), 100);
    }

    #[test]
    fn sobel_rejects_tiny_images() {
        assert!(matches!(
            sobel_gradients(&GrayImage::filled(2, 5, 0)),
            Err(ImagingError::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn sobel_constant_is_zero() {
        let g = sobel_gradients(&GrayImage::filled(6, 5, 77)).unwrap();
        for y in 0..5 {
            for x in 0..6 {
                assert_eq!(g.magnitude(x, y), 0.0);
            }
        }
    }

    #[test]
    fn sobel_vertical_step_response() {
        let c = 6;
        let img = GrayImage::from_fn(12, 8, |x, _| if x < c { 0 } else { 200 });
        let g = sobel_gradients(&img).unwrap();
        for y in 1..7 {
            let row_max = (1..11).map(|x| g.magnitude(x, y)).fold(0.0, f64::max);
            assert_eq!(g.magnitude(c - 1, y), row_max);
            assert_eq!(g.magnitude(c, y), row_max);
            assert_eq!(g.gy(c, y), 0);
            assert!(g.direction(c, y).abs() < 1e-12);
        }
    }

    #[test]
    fn sobel_matches_naive_convolution_on_random_5x5() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let img = random_image(&mut rng, 5, 5);
            let (gx, gy) = naive_sobel(&img);
            let g = sobel_gradients(&img).unwrap();
            for y in 0..5 {
                for x in 0..5 {
                    assert_eq!(g.gx(x, y), gx[y * 5 + x]);
                    assert_eq!(g.gy(x, y), gy[y * 5 + x]);
                    let m = f64::from(gx[y * 5 + x].pow(2) + gy[y * 5 + x].pow(2)).sqrt();
                    assert_eq!(g.magnitude(x, y).to_bits(), m.to_bits());
                }
            }
        }
    }

    #[test]
    fn canny_constant_is_empty() {
        let e = canny_edges(&GrayImage::filled(20, 20, 128), 50.0, 150.0).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn canny_rejects_inverted_thresholds() {
        assert!(matches!(
            canny_edges(&GrayImage::filled(5, 5, 0), 10.0, 5.0),
            Err(ImagingError::InvalidThresholds { .. })
        ));
    }

    #[test]
    fn canny_half_plane_gives_one_edge_per_row() {
        let (w, h) = (24, 16);
        let img = GrayImage::from_fn(w, h, |x, _| if x < 10 { 0 } else { 255 });
        let edges = canny_edges(&img, 50.0, 150.0).unwrap();

        // Oracle: magnitude is 1020 in columns 9 and 10, zero elsewhere; the
        // plateau tie-break keeps the column whose backward neighbour is smaller.
        let grad = sobel_gradients(&img).unwrap();
        for y in 1..h - 1 {
            let cols: Vec<usize> = (0..w).filter(|&x| edges.get(x, y)).collect();
            assert_eq!(cols.len(), 1, "row {y}: {cols:?}");
            assert!((9..=11).contains(&cols[0]));
            assert_eq!(grad.magnitude(cols[0], y), 1020.0);
        }
        for x in 0..w {
            assert!(!edges.get(x, 0) && !edges.get(x, h - 1));
        }
    }

    #[test]
    fn canny_equal_thresholds_is_single_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = random_image(&mut rng, 30, 20);
        let t = 300.0;
        let edges = canny_edges(&img, t, t).unwrap();
        let grad = sobel_gradients(&img).unwrap();
        let thin = non_maximum_suppression(&grad);
        for y in 0..20 {
            for x in 0..30 {
                let expected = thin[y * 30 + x] && grad.magnitude(x, y) >= t;
                assert_eq!(edges.get(x, y), expected);
            }
        }
    }

    #[test]
    fn canny_hysteresis_keeps_only_connected_weak_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = GrayImage::from_fn(40, 40, |x, y| {
            let base = if x + y < 40 { 60 } else { 180 };
            (base + rng.random_range(0..30)) as u8
        });
        let (low, high) = (60.0, 250.0);
        let edges = canny_edges(&img, low, high).unwrap();
        let grad = sobel_gradients(&img).unwrap();
        let thin = non_maximum_suppression(&grad);
        // Every output pixel reaches a strong pixel through output pixels.
        let mut reach = vec![false; 1600];
        let mut stack: Vec<(usize, usize)> = edges.points().filter(|&(x, y)| grad.magnitude(x, y) >= high).collect();
        for &(x, y) in &stack {
            reach[y * 40 + x] = true;
        }
        while let Some((x, y)) = stack.pop() {
            for ny in y.saturating_sub(1)..=(y + 1).min(39) {
                for nx in x.saturating_sub(1)..=(x + 1).min(39) {
                    if edges.get(nx, ny) && !reach[ny * 40 + nx] {
                        reach[ny * 40 + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
        for (x, y) in edges.points() {
            assert!(reach[y * 40 + x]);
            assert!(thin[y * 40 + x] && grad.magnitude(x, y) >= low);
        }
        assert!(edges.count() > 0);
    }

    #[test]
    fn mask_identity_empty_and_checkerboard() {
        let full_edges = EdgeMap::from_fn(6, 4, |_, _| true);
        let full = UnitMask::full(6, 4);
        assert_eq!(apply_mask(&full_edges, &full).unwrap(), full_edges);

        let corner = UnitMask::new(6, 4, (0..24).map(|i| i == 0).collect()).unwrap();
        let sparse = EdgeMap::from_fn(6, 4, |x, _| x == 5);
        assert!(apply_mask(&sparse, &corner).unwrap().is_empty());

        let checker: Vec<bool> = (0..24).map(|i| (i % 6 + i / 6) % 2 == 0).collect();
        let mask = UnitMask::new(6, 4, checker.clone()).unwrap();
        let out = apply_mask(&full_edges, &mask).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(out.get(x, y), checker[y * 6 + x]);
            }
        }
    }

    #[test]
    fn mask_dimension_mismatch() {
        let e = EdgeMap::new(4, 4);
        let m = UnitMask::full(5, 4);
        assert!(matches!(apply_mask(&e, &m), Err(ImagingError::DimensionMismatch(..))));
    }

    #[test]
    fn mask_bbox_is_tight() {
        let inside: Vec<bool> = (0..30).map(|i| i == 7 || i == 22).collect();
        let m = UnitMask::new(6, 5, inside).unwrap();
        assert_eq!(m.bbox(), (1, 1, 4, 3));
        assert!(matches!(
            UnitMask::new(2, 2, vec![false; 4]),
            Err(ImagingError::EmptyMask)
        ));
    }

    proptest! {
        #[test]
        fn apply_mask_is_idempotent(
            e in proptest::collection::vec(any::<bool>(), 35),
            mut m in proptest::collection::vec(any::<bool>(), 35),
        ) {
            m[0] = true;
            let edges = EdgeMap { width: 7, height: 5, edges: e };
            let mask = UnitMask::new(7, 5, m).unwrap();
            let once = apply_mask(&edges, &mask).unwrap();
            prop_assert_eq!(apply_mask(&once, &mask).unwrap(), once);
        }

        #[test]
        fn luma_is_monotone(r in 0u8..255, g in 0u8..255, b in 0u8..255, ch in 0usize..3) {
            let base = [r, g, b];
            let mut raised = base;
            raised[ch] += 1;
            prop_assert!(luma(raised) >= luma(base));
        }

        #[test]
        fn canny_is_subset_of_low_threshold(
            seed in any::<u64>(),
            low in 0.0f64..400.0,
            span in 0.0f64..400.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, 12, 10);
            let edges = canny_edges(&img, low, low + span).unwrap();
            let grad = sobel_gradients(&img).unwrap();
            for (x, y) in edges.points() {
                prop_assert!(grad.magnitude(x, y) >= low);
            }
        }

        #[test]
        fn sobel_matches_naive_oracle(seed in any::<u64>(), w in 3usize..12, h in 3usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let img = random_image(&mut rng, w, h);
            let (gx, gy) = naive_sobel(&img);
            let g = sobel_gradients(&img).unwrap();
            prop_assert_eq!(&g.gx, &gx);
            prop_assert_eq!(&g.gy, &gy);
        }
    }
}
