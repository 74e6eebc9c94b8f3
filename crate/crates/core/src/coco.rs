//! COCO-subset annotation ingestion: polygon unit regions, even-odd polygon
//! rasterization and per-unit cropping.
//!
//! Polygon and bbox coordinates follow the COCO convention: pixel `(i, j)`
//! covers `[i, i+1) x [j, j+1)` and its centre is `(i + 0.5, j + 0.5)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::imaging::{GrayImage, ImagingError, UnitMask};

pub const DEFAULT_UNIT_CATEGORY: &str = "scaffold_unit";

#[derive(Debug, Error)]
pub enum CocoError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("field `{field}` has the wrong type: {detail}")]
    InvalidField { field: String, detail: String },
    #[error("annotation {annotation} references unknown image {image_id}")]
    DanglingImageRef { annotation: u64, image_id: u64 },
    #[error("annotation {0}: RLE segmentation is not supported, use polygons")]
    UnsupportedSegmentation(u64),
    #[error("annotation {0}: expected exactly one polygon")]
    MultiPartPolygon(u64),
    #[error("annotation {id}: {detail}")]
    InvalidRegion { id: u64, detail: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("polygon of region {0} has zero area")]
    DegeneratePolygon(u64),
    #[error("region {0} does not overlap the image")]
    RegionOutsideImage(u64),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// `[x, y, w, h]` in image pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn contains_with_tolerance(&self, (px, py): (f64, f64), tol: f64) -> bool {
        px >= self.x - tol && px <= self.x + self.w + tol && py >= self.y - tol && py <= self.y + self.h + tol
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }
}

/// One scaffold unit as segmented upstream.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitRegion {
    pub id: u64,
    pub image_id: u64,
    pub polygon: Vec<(f64, f64)>,
    pub bbox: BBox,
    pub category: String,
}

impl UnitRegion {
    /// Axis-aligned rectangle region, polygon wound clockwise from the top-left corner.
    pub fn rectangle(id: u64, image_id: u64, bbox: BBox, category: &str) -> Self {
        let (x0, y0, x1, y1) = (bbox.x, bbox.y, bbox.x + bbox.w, bbox.y + bbox.h);
        Self {
            id,
            image_id,
            polygon: vec![(x0, y0), (x1, y0), (x1, y1), (x0, y1)],
            bbox,
            category: category.to_string(),
        }
    }

    fn validate(&self) -> Result<(), CocoError> {
        let bad = |detail: String| CocoError::InvalidRegion { id: self.id, detail };
        if self.polygon.len() < 3 {
            return Err(bad(format!("polygon has {} vertices", self.polygon.len())));
        }
        if !(self.bbox.w > 0.0 && self.bbox.h > 0.0) {
            return Err(bad("bbox must have positive width and height".into()));
        }
        if let Some(v) = self
            .polygon
            .iter()
            .find(|&&v| !self.bbox.contains_with_tolerance(v, 1.0))
        {
            return Err(bad(format!("vertex {v:?} lies outside the bbox")));
        }
        Ok(())
    }

    /// Same region shifted by `(-dx, -dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            polygon: self.polygon.iter().map(|&(x, y)| (x - dx, y - dy)).collect(),
            bbox: BBox {
                x: self.bbox.x - dx,
                y: self.bbox.y - dy,
                ..self.bbox
            },
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageEntry {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotationSet {
    pub images: Vec<ImageEntry>,
    pub regions: Vec<UnitRegion>,
}

impl AnnotationSet {
    pub fn regions_for_image(&self, image_id: u64) -> impl Iterator<Item = &UnitRegion> {
        self.regions.iter().filter(move |r| r.image_id == image_id)
    }

    /// Looks an image up by file name, ignoring any directory components.
    pub fn image_by_file_name(&self, name: &str) -> Option<&ImageEntry> {
        let base = |s: &str| s.rsplit(['/', '\\']).next().unwrap_or(s).to_string();
        let wanted = base(name);
        self.images.iter().find(|im| base(&im.file_name) == wanted)
    }
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, CocoError> {
    obj.get(name).ok_or_else(|| CocoError::MissingField(name.to_string()))
}

fn invalid(name: &str, detail: &str) -> CocoError {
    CocoError::InvalidField {
        field: name.to_string(),
        detail: detail.to_string(),
    }
}

fn as_object<'a>(v: &'a Value, name: &str) -> Result<&'a Map<String, Value>, CocoError> {
    v.as_object().ok_or_else(|| invalid(name, "expected an object"))
}

fn as_array<'a>(v: &'a Value, name: &str) -> Result<&'a Vec<Value>, CocoError> {
    v.as_array().ok_or_else(|| invalid(name, "expected an array"))
}

fn u64_field(obj: &Map<String, Value>, name: &str) -> Result<u64, CocoError> {
    field(obj, name)?
        .as_u64()
        .ok_or_else(|| invalid(name, "expected a non-negative integer"))
}

fn f64_list(v: &Value, name: &str) -> Result<Vec<f64>, CocoError> {
    as_array(v, name)?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| invalid(name, "expected numbers")))
        .collect()
}

/// Parses COCO JSON, keeping only annotations whose category name equals `unit_category`.
pub fn parse_coco(text: &str, unit_category: &str) -> Result<AnnotationSet, CocoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| CocoError::MalformedJson(e.to_string()))?;
    let root = as_object(&root, "<root>")?;

    let mut images = Vec::new();
    let mut image_ids = BTreeSet::new();
    for im in as_array(field(root, "images")?, "images")? {
        let im = as_object(im, "images[]")?;
        let entry = ImageEntry {
            id: u64_field(im, "id")?,
            file_name: field(im, "file_name")?
                .as_str()
                .ok_or_else(|| invalid("file_name", "expected a string"))?
                .to_string(),
            width: u32::try_from(u64_field(im, "width")?).map_err(|_| invalid("width", "too large"))?,
            height: u32::try_from(u64_field(im, "height")?).map_err(|_| invalid("height", "too large"))?,
        };
        if !image_ids.insert(entry.id) {
            return Err(CocoError::DuplicateId {
                kind: "image",
                id: entry.id,
            });
        }
        images.push(entry);
    }

    let mut categories = HashMap::new();
    for c in as_array(field(root, "categories")?, "categories")? {
        let c = as_object(c, "categories[]")?;
        let name = field(c, "name")?
            .as_str()
            .ok_or_else(|| invalid("name", "expected a string"))?;
        categories.insert(u64_field(c, "id")?, name.to_string());
    }

    let mut regions = Vec::new();
    let mut region_ids = BTreeSet::new();
    for a in as_array(field(root, "annotations")?, "annotations")? {
        let a = as_object(a, "annotations[]")?;
        let id = u64_field(a, "id")?;
        let image_id = u64_field(a, "image_id")?;
        let category_id = u64_field(a, "category_id")?;
        if !image_ids.contains(&image_id) {
            return Err(CocoError::DanglingImageRef {
                annotation: id,
                image_id,
            });
        }
        if categories.get(&category_id).map(String::as_str) != Some(unit_category) {
            continue;
        }
        let bbox = f64_list(field(a, "bbox")?, "bbox")?;
        let [x, y, w, h] = <[f64; 4]>::try_from(bbox).map_err(|_| invalid("bbox", "expected [x, y, w, h]"))?;
        let seg = field(a, "segmentation")?;
        let polys = match seg {
            Value::Array(p) => p,
            Value::Object(_) => return Err(CocoError::UnsupportedSegmentation(id)),
            _ => return Err(invalid("segmentation", "expected polygon lists")),
        };
        if polys.len() != 1 {
            return Err(CocoError::MultiPartPolygon(id));
        }
        let flat = f64_list(&polys[0], "segmentation")?;
        if flat.len() % 2 != 0 {
            return Err(invalid("segmentation", "odd number of coordinates"));
        }
        let region = UnitRegion {
            id,
            image_id,
            polygon: flat.chunks_exact(2).map(|p| (p[0], p[1])).collect(),
            bbox: BBox { x, y, w, h },
            category: unit_category.to_string(),
        };
        region.validate()?;
        if !region_ids.insert(id) {
            return Err(CocoError::DuplicateId { kind: "annotation", id });
        }
        regions.push(region);
    }
    Ok(AnnotationSet { images, regions })
}

/// Serializes to the COCO subset read by [`parse_coco`]. Category ids are
/// assigned from 1 in lexicographic order of the region category names.
pub fn to_coco_json(set: &AnnotationSet) -> Value {
    let names: BTreeSet<&str> = set.regions.iter().map(|r| r.category.as_str()).collect();
    let ids: BTreeMap<&str, u64> = names.iter().enumerate().map(|(i, &n)| (n, i as u64 + 1)).collect();
    json!({
        "images": set.images.iter().map(|im| json!({
            "id": im.id,
            "file_name": im.file_name,
            "width": im.width,
            "height": im.height,
        })).collect::<Vec<_>>(),
        "annotations": set.regions.iter().map(|r| json!({
            "id": r.id,
            "image_id": r.image_id,
            "category_id": ids[r.category.as_str()],
            "bbox": r.bbox.as_array(),
            "area": shoelace_area(&r.polygon),
            "iscrowd": 0,
            "segmentation": [r.polygon.iter().flat_map(|&(x, y)| [x, y]).collect::<Vec<f64>>()],
        })).collect::<Vec<_>>(),
        "categories": ids.iter().map(|(&name, &id)| json!({"id": id, "name": name})).collect::<Vec<_>>(),
    })
}

/// Absolute polygon area.
pub fn shoelace_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() / 2.0
}

/// Even-odd scanline fill: pixel `(i, j)` is set iff its centre
/// `(i + 0.5, j + 0.5)` lies inside the polygon. Edges are half-open in y and
/// a centre exactly on a left crossing counts as inside.
pub fn rasterize_polygon(region: &UnitRegion, width: usize, height: usize) -> Result<UnitMask, CocoError> {
    let poly = &region.polygon;
    if poly.len() < 3 || shoelace_area(poly) <= 1e-12 {
        return Err(CocoError::DegeneratePolygon(region.id));
    }
    let n = poly.len();
    let mut inside = vec![false; width * height];
    let mut xs = Vec::new();
    for j in 0..height {
        let cy = j as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            if (y0 > cy) != (y1 > cy) {
                xs.push(x0 + (cy - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // centres cx = i + 0.5 with span[0] <= cx < span[1]
            let first = (span[0] - 0.5).ceil().max(0.0);
            let last = (span[1] - 0.5).ceil() - 1.0;
            if last < first {
                continue;
            }
            let last = last.min(width as f64 - 1.0);
            let mut i = first as usize;
            while (i as f64) <= last {
                inside[j * width + i] = true;
                i += 1;
            }
        }
    }
    Ok(UnitMask::new(width, height, inside)?)
}

/// Integer pixel rectangle `[x0, x1) x [y0, y1)` of the region bbox clipped to
/// an image of the given size.
pub fn crop_rect(region: &UnitRegion, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
    let b = &region.bbox;
    let x0 = b.x.floor().max(0.0);
    let y0 = b.y.floor().max(0.0);
    let x1 = (b.x + b.w).ceil().min(width as f64);
    let y1 = (b.y + b.h).ceil().min(height as f64);
    (x1 > x0 && y1 > y0).then_some((x0 as usize, y0 as usize, x1 as usize, y1 as usize))
}

/// Crops the region bbox out of `img`; returns the crop and the offset that maps
/// crop-local pixel indices back to image pixel indices.
pub fn crop_unit(img: &GrayImage, region: &UnitRegion) -> Result<(GrayImage, (usize, usize)), CocoError> {
    let (x0, y0, x1, y1) =
        crop_rect(region, img.width(), img.height()).ok_or(CocoError::RegionOutsideImage(region.id))?;
    Ok((img.sub_image(x0, y0, x1 - x0, y1 - y0), (x0, y0)))
}
