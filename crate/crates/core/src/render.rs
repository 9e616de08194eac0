//! Deterministic rasterization of worlds into RGB scenes.
//!
//! All geometry is evaluated at pixel centers with plain IEEE arithmetic (no
//! trigonometry at run time, no anti-aliasing), so a given world and config
//! produce the same bytes on every platform.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{Category, Cell, GRID_DIM, ObjectKind, ObjectSpec, Shape, Sheen, SizeClass, Vocabulary, World};

pub const SUPPORTED_IMAGE_SIZES: [u32; 3] = [336, 672, 1344];

/// Channel scale applied by the matte finish.
pub const MATTE_LEVEL: f64 = 0.8;
/// Peak amount of white blended in at the glossy highlight.
pub const GLOSS_PEAK: f64 = 0.65;
/// Highlight center in unit object-box coordinates.
pub const GLOSS_CENTER: (f64, f64) = (0.35, 0.35);
/// Distance (unit box coordinates) over which the highlight decays to the base color.
pub const GLOSS_RADIUS: f64 = 0.65;

const MATTE_SPREAD: f64 = 0.05;
const BAYER4: [[u8; 4]; 4] = [[0, 8, 2, 10], [12, 4, 14, 6], [3, 11, 1, 9], [15, 7, 13, 5]];

// Unit star, pointing up, outer radius 1 and inner radius 0.5. Precomputed so
// no libm call is involved in rasterization.
const STAR: [(f64, f64); 10] = [
    (0.0, -1.0),
    (0.293_892_626_146_236_6, -0.404_508_497_187_473_7),
    (0.951_056_516_295_153_5, -0.309_016_994_374_947_4),
    (0.475_528_258_147_576_8, 0.154_508_497_187_473_7),
    (0.587_785_252_292_473_1, 0.809_016_994_374_947_5),
    (0.0, 0.5),
    (-0.587_785_252_292_473_1, 0.809_016_994_374_947_5),
    (-0.475_528_258_147_576_8, 0.154_508_497_187_473_7),
    (-0.951_056_516_295_153_5, -0.309_016_994_374_947_4),
    (-0.293_892_626_146_236_6, -0.404_508_497_187_473_7),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub image_size: u32,
    pub background: [u8; 3],
    pub regular_fill_ratio: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            image_size: 672,
            background: [0, 0, 0],
            regular_fill_ratio: 0.9,
        }
    }
}

impl RenderConfig {
    pub fn with_size(image_size: u32) -> Self {
        RenderConfig {
            image_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_IMAGE_SIZES.contains(&self.image_size) {
            return Err(Error::Config(format!(
                "image size {} not in {:?}",
                self.image_size, SUPPORTED_IMAGE_SIZES
            )));
        }
        if !(self.regular_fill_ratio > 0.0 && self.regular_fill_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "regular fill ratio {} must lie in (0, 1]",
                self.regular_fill_ratio
            )));
        }
        Ok(())
    }
}

/// Half-open pixel rectangle: columns `left..right`, rows `top..bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub left: u32,
    pub top: u32,
    pub right: u32,
    pub bottom: u32,
}

impl PixelRect {
    pub fn width(&self) -> u32 {
        self.right - self.left
    }

    pub fn height(&self) -> u32 {
        self.bottom - self.top
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.left..self.right).contains(&x) && (self.top..self.bottom).contains(&y)
    }
}

fn grid_boundary(i: u32, image_size: u32) -> u32 {
    // round(i * size / 9), halves rounded up
    (2 * i * image_size + GRID_DIM as u32) / (2 * GRID_DIM as u32)
}

pub fn cell_rect(cell: Cell, image_size: u32) -> PixelRect {
    let (r, c) = (cell.row() as u32, cell.col() as u32);
    PixelRect {
        left: grid_boundary(c, image_size),
        top: grid_boundary(r, image_size),
        right: grid_boundary(c + 1, image_size),
        bottom: grid_boundary(r + 1, image_size),
    }
}

/// The square box an object occupies inside its cell.
pub fn object_box(cell: Cell, size: SizeClass, cfg: &RenderConfig) -> PixelRect {
    let rect = cell_rect(cell, cfg.image_size);
    let span = rect.width().min(rect.height());
    // even, so that a small object is exactly half a regular one
    let regular = (2 * (span as f64 * cfg.regular_fill_ratio / 2.0).round() as u32).clamp(2, span - span % 2);
    let side = match size {
        SizeClass::Regular => regular,
        SizeClass::Small => regular / 2,
    };
    let left = rect.left + (rect.width() - side) / 2;
    let top = rect.top + (rect.height() - side) / 2;
    PixelRect {
        left,
        top,
        right: left + side,
        bottom: top + side,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl SceneImage {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(3 * (width * height) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        SceneImage { width, height, pixels }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major RGB bytes.
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y * self.width + x) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x) as usize;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn encode_png<W: Write>(&self, out: W) -> Result<()> {
        let encoder = PngEncoder::new_with_quality(out, CompressionType::Fast, FilterType::Sub);
        encoder.write_image(&self.pixels, self.width, self.height, ExtendedColorType::Rgb8)?;
        Ok(())
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.encode_png(&mut buf)?;
        Ok(buf)
    }

    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?.into_rgb8();
        let (width, height) = img.dimensions();
        Ok(SceneImage {
            width,
            height,
            pixels: img.into_raw(),
        })
    }
}

/// Pre-cropped sprite images keyed by category, read once and shared.
#[derive(Debug, Clone, Default)]
pub struct SpriteStore {
    sprites: HashMap<Category, RgbaImage>,
}

impl SpriteStore {
    /// Load every `<category>.png` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Asset(format!("sprite directory {} not found", dir.display())));
        }
        let mut store = SpriteStore::default();
        for &category in Category::ALL {
            let path = dir.join(format!("{category}.png"));
            if path.exists() {
                let img = image::open(&path)
                    .map_err(|e| Error::Asset(format!("{}: {e}", path.display())))?
                    .into_rgba8();
                store.insert(category, img);
            }
        }
        Ok(store)
    }

    pub fn insert(&mut self, category: Category, sprite: RgbaImage) {
        self.sprites.insert(category, sprite);
    }

    pub fn get(&self, category: Category) -> Option<&RgbaImage> {
        self.sprites.get(&category)
    }
}

/// Color of one object pixel given the finish. `(u, v)` is the pixel center in
/// unit object-box coordinates and `(dx, dy)` its integer offset in the box.
pub fn apply_sheen(base: [u8; 3], sheen: Sheen, u: f64, v: f64, dx: u32, dy: u32) -> [u8; 3] {
    match sheen {
        Sheen::None => base,
        Sheen::Matte => {
            let b = BAYER4[(dy % 4) as usize][(dx % 4) as usize] as f64;
            let factor = MATTE_LEVEL + (b - 7.5) / 7.5 * MATTE_SPREAD;
            base.map(|c| (c as f64 * factor).round() as u8)
        }
        Sheen::Glossy => {
            let (hx, hy) = GLOSS_CENTER;
            let d = ((u - hx) * (u - hx) + (v - hy) * (v - hy)).sqrt();
            let t = GLOSS_PEAK * (1.0 - d / GLOSS_RADIUS).max(0.0);
            base.map(|c| (c as f64 + (255.0 - c as f64) * t).round() as u8)
        }
    }
}

const TRIANGLE: [(f64, f64); 3] = [(0.5, 0.0), (1.0, 1.0), (0.0, 1.0)];

/// Polygon corners in unit object-box coordinates (empty for round or
/// box-filling shapes).
pub fn shape_vertices(shape: Shape) -> Vec<(f64, f64)> {
    match shape {
        Shape::Square | Shape::Circle => Vec::new(),
        Shape::Triangle => TRIANGLE.to_vec(),
        Shape::Star => STAR.iter().map(|(x, y)| (0.5 + x / 2.0, 0.5 + y / 2.0)).collect(),
    }
}

/// Whether the unit-box point `(u, v)` lies inside `shape`.
pub fn shape_contains(shape: Shape, u: f64, v: f64) -> bool {
    match shape {
        Shape::Square => true,
        Shape::Circle => (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25,
        Shape::Triangle => (u - 0.5).abs() <= v / 2.0,
        Shape::Star => {
            let (x, y) = ((u - 0.5) * 2.0, (v - 0.5) * 2.0);
            let mut inside = false;
            let mut j = STAR.len() - 1;
            for (i, &(xi, yi)) in STAR.iter().enumerate() {
                let (xj, yj) = STAR[j];
                if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                    inside = !inside;
                }
                j = i;
            }
            inside
        }
    }
}

fn draw_elementary(img: &mut SceneImage, obj: &ObjectSpec, shape: Shape, rgb: [u8; 3], sheen: Sheen, cfg: &RenderConfig) {
    let b = object_box(obj.cell, obj.size, cfg);
    let side = b.width() as f64;
    for dy in 0..b.height() {
        let v = (dy as f64 + 0.5) / side;
        for dx in 0..b.width() {
            let u = (dx as f64 + 0.5) / side;
            if shape_contains(shape, u, v) {
                img.put(b.left + dx, b.top + dy, apply_sheen(rgb, sheen, u, v, dx, dy));
            }
        }
    }
    // Sharp corners own the pixel they fall in, so thin tips are never lost
    // to pixel-center sampling and the object's extent scales with its box.
    for (vu, vv) in shape_vertices(shape) {
        let dx = ((vu * side) as u32).min(b.width() - 1);
        let dy = ((vv * side) as u32).min(b.height() - 1);
        let (u, v) = ((dx as f64 + 0.5) / side, (dy as f64 + 0.5) / side);
        img.put(b.left + dx, b.top + dy, apply_sheen(rgb, sheen, u, v, dx, dy));
    }
}

fn draw_sprite(img: &mut SceneImage, obj: &ObjectSpec, sprite: &RgbaImage, cfg: &RenderConfig) {
    let b = object_box(obj.cell, obj.size, cfg);
    let side = b.width();
    let (sw, sh) = sprite.dimensions();
    let longest = sw.max(sh);
    let dw = ((sw * side + longest / 2) / longest).clamp(1, side);
    let dh = ((sh * side + longest / 2) / longest).clamp(1, side);
    let left = b.left + (side - dw) / 2;
    let top = b.top + (side - dh) / 2;
    for y in 0..dh {
        let sy = ((2 * y + 1) * sh / (2 * dh)).min(sh - 1);
        for x in 0..dw {
            let sx = ((2 * x + 1) * sw / (2 * dw)).min(sw - 1);
            let [r, g, bl, a] = sprite.get_pixel(sx, sy).0;
            let bg = img.get(left + x, top + y);
            let a = a as u32;
            let mix = |s: u8, d: u8| ((a * s as u32 + (255 - a) * d as u32 + 127) / 255) as u8;
            img.put(left + x, top + y, [mix(r, bg[0]), mix(g, bg[1]), mix(bl, bg[2])]);
        }
    }
}

pub fn render(world: &World, cfg: &RenderConfig, sprites: Option<&SpriteStore>) -> Result<SceneImage> {
    cfg.validate()?;
    let mut img = SceneImage::filled(cfg.image_size, cfg.image_size, cfg.background);
    for obj in world.objects() {
        match obj.kind {
            ObjectKind::Elementary { shape, color, sheen } => {
                draw_elementary(&mut img, obj, shape, color.rgb(), sheen, cfg);
            }
            ObjectKind::Sprite { category } => {
                let sprite = sprites
                    .and_then(|s| s.get(category))
                    .ok_or_else(|| Error::Asset(format!("no sprite loaded for category {category}")))?;
                draw_sprite(&mut img, obj, sprite, cfg);
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Color, Setting};

    fn single(shape: Shape, color: Color, sheen: Sheen, size: SizeClass, r: u8, c: u8) -> World {
        let obj = ObjectSpec::elementary(shape, color, sheen, size, Cell::new(r, c).unwrap());
        World::new(Setting::SingleObject, vec![obj]).unwrap()
    }

    fn object_pixels(img: &SceneImage, rect: PixelRect, bg: [u8; 3]) -> Vec<[u8; 3]> {
        let mut out = Vec::new();
        for y in rect.top..rect.bottom {
            for x in rect.left..rect.right {
                let p = img.get(x, y);
                if p != bg {
                    out.push(p);
                }
            }
        }
        out
    }

    fn luminance(p: [u8; 3]) -> f64 {
        0.2126 * p[0] as f64 + 0.7152 * p[1] as f64 + 0.0722 * p[2] as f64
    }

    #[test]
    fn cell_rect_boundaries() {
        let r = cell_rect(Cell::new(0, 0).unwrap(), 672);
        assert_eq!((r.top, r.bottom - 1, r.left, r.right - 1), (0, 74, 0, 74));
        let r = cell_rect(Cell::new(8, 8).unwrap(), 336);
        assert_eq!((r.right - 1, r.bottom - 1), (335, 335));
    }

    #[test]
    fn cell_rects_tile_the_image() {
        for size in SUPPORTED_IMAGE_SIZES {
            let mut hits = vec![0u8; (size * size) as usize];
            for cell in Cell::all() {
                let r = cell_rect(cell, size);
                for y in r.top..r.bottom {
                    for x in r.left..r.right {
                        hits[(y * size + x) as usize] += 1;
                    }
                }
            }
            assert!(hits.iter().all(|&h| h == 1), "size {size}");
        }
    }

    #[test]
    fn star_center_is_filled() {
        let w = single(Shape::Star, Color::Yellow, Sheen::None, SizeClass::Regular, 4, 4);
        let img = render(&w, &RenderConfig::with_size(672), None).unwrap();
        assert_eq!(img.get(336, 336), [255, 255, 0]);
        assert_eq!(img.pixels().len(), 3 * 672 * 672);
    }

    #[test]
    fn empty_center_is_background() {
        let w = single(Shape::Square, Color::Red, Sheen::Glossy, SizeClass::Regular, 0, 0);
        let img = render(&w, &RenderConfig::default(), None).unwrap();
        assert_eq!(img.get(336, 336), [0, 0, 0]);
    }

    #[test]
    fn locality_and_color_fidelity() {
        let cfg = RenderConfig::with_size(336);
        for &shape in Shape::ALL {
            let w = single(shape, Color::Cyan, Sheen::None, SizeClass::Regular, 2, 7);
            let img = render(&w, &cfg, None).unwrap();
            let rect = cell_rect(w.primary().cell, 336);
            for y in 0..336 {
                for x in 0..336 {
                    let p = img.get(x, y);
                    if rect.contains(x, y) {
                        assert!(p == [0, 0, 0] || p == [0, 255, 255]);
                    } else {
                        assert_eq!(p, [0, 0, 0]);
                    }
                }
            }
            assert!(!object_pixels(&img, rect, [0, 0, 0]).is_empty());
        }
    }

    fn bbox(img: &SceneImage, rect: PixelRect) -> (u32, u32) {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for y in rect.top..rect.bottom {
            for x in rect.left..rect.right {
                if img.get(x, y) != [0, 0, 0] {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x1 - x0 + 1, y1 - y0 + 1)
    }

    #[test]
    fn small_objects_are_half_size() {
        for size in SUPPORTED_IMAGE_SIZES {
            let cfg = RenderConfig::with_size(size);
            for &shape in Shape::ALL {
                let big = render(&single(shape, Color::Red, Sheen::None, SizeClass::Regular, 3, 5), &cfg, None).unwrap();
                let small = render(&single(shape, Color::Red, Sheen::None, SizeClass::Small, 3, 5), &cfg, None).unwrap();
                let rect = cell_rect(Cell::new(3, 5).unwrap(), size);
                let (bw, bh) = bbox(&big, rect);
                let (sw, sh) = bbox(&small, rect);
                assert!((2 * sw as i64 - bw as i64).abs() <= 2, "{shape} {size}: {sw} vs {bw}");
                assert!((2 * sh as i64 - bh as i64).abs() <= 2, "{shape} {size}: {sh} vs {bh}");
            }
        }
    }

    #[test]
    fn glossy_peak_brighter_than_boundary() {
        let w = single(Shape::Square, Color::Yellow, Sheen::Glossy, SizeClass::Regular, 4, 4);
        let cfg = RenderConfig::default();
        let img = render(&w, &cfg, None).unwrap();
        let b = object_box(w.primary().cell, SizeClass::Regular, &cfg);
        let side = b.width() as f64;
        let peak = img.get(b.left + (GLOSS_CENTER.0 * side) as u32, b.top + (GLOSS_CENTER.1 * side) as u32);
        let edge = img.get(b.right - 1, b.bottom - 1);
        assert!(luminance(peak) > luminance(edge));
        assert_eq!(edge, [255, 255, 0]);
    }

    #[test]
    fn matte_is_darker_than_flat() {
        let cfg = RenderConfig::default();
        let mean = |sheen| {
            let w = single(Shape::Circle, Color::Yellow, sheen, SizeClass::Regular, 4, 4);
            let img = render(&w, &cfg, None).unwrap();
            let px = object_pixels(&img, cell_rect(w.primary().cell, cfg.image_size), [0, 0, 0]);
            px.iter().map(|p| luminance(*p)).sum::<f64>() / px.len() as f64
        };
        assert!(mean(Sheen::Matte) < mean(Sheen::None));
        assert_eq!(apply_sheen([255, 255, 0], Sheen::None, 0.3, 0.9, 1, 2), [255, 255, 0]);
    }

    #[test]
    fn rendering_is_deterministic() {
        let w = single(Shape::Star, Color::Magenta, Sheen::Glossy, SizeClass::Regular, 6, 1);
        let cfg = RenderConfig::with_size(1344);
        let a = render(&w, &cfg, None).unwrap();
        let b = render(&w, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_png().unwrap(), b.to_png().unwrap());
        assert_eq!(SceneImage::from_png(&a.to_png().unwrap()).unwrap(), a);
    }

    #[test]
    fn rejects_unsupported_size() {
        let w = single(Shape::Star, Color::Red, Sheen::None, SizeClass::Regular, 0, 0);
        assert!(matches!(render(&w, &RenderConfig::with_size(500), None), Err(Error::Config(_))));
    }

    #[test]
    fn sprites_keep_aspect_and_stay_in_cell() {
        let obj = ObjectSpec::sprite(Category::Zebra, SizeClass::Regular, Cell::new(1, 1).unwrap());
        let world = World::new(Setting::SingleObjectCoco, vec![obj]).unwrap();
        let cfg = RenderConfig::with_size(1344);
        assert!(matches!(render(&world, &cfg, None), Err(Error::Asset(_))));

        // 40x20 opaque white sprite with a transparent right half
        let sprite = RgbaImage::from_fn(40, 20, |x, _| {
            if x < 20 { image::Rgba([255, 255, 255, 255]) } else { image::Rgba([255, 255, 255, 0]) }
        });
        let mut store = SpriteStore::default();
        store.insert(Category::Zebra, sprite);
        let img = render(&world, &cfg, Some(&store)).unwrap();
        let rect = cell_rect(obj.cell, 1344);
        let b = object_box(obj.cell, obj.size, &cfg);
        let (w, h) = bbox(&img, rect);
        // only the opaque half shows: width ~ side/2, height ~ side/2
        assert!((w as i64 - b.width() as i64 / 2).abs() <= 1);
        assert!((h as i64 - b.width() as i64 / 2).abs() <= 1);
        for y in 0..1344 {
            for x in 0..1344 {
                if !rect.contains(x, y) {
                    assert_eq!(img.get(x, y), [0, 0, 0]);
                }
            }
        }
    }
}
