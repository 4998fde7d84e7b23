//! Deterministic raster overlays and composites.
//!
//! Primitives are drawn with integer centers and no anti-aliasing, text uses
//! a fixed bitmap font, and PNGs are written with fixed encoder settings and
//! no metadata chunks, so identical inputs give identical bytes.

pub mod font;

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::imageops;
use image::{ImageEncoder, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajmodel::ImageSize;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("primitive {index} anchors at ({u}, {v}) outside the {w}x{h} image")]
    OutOfBounds { index: usize, u: i64, v: i64, w: u32, h: u32 },
    #[error("compose needs at least two images, got {0}")]
    TooFew(usize),
    #[error("{0} labels for {1} images")]
    LabelCount(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
    Black,
    White,
}

/// The five marker colors, in the order questions list them.
pub const PALETTE: [Color; 5] = [Color::Red, Color::Green, Color::Blue, Color::Yellow, Color::Purple];

impl Color {
    pub fn rgb(self) -> Rgb<u8> {
        Rgb(match self {
            Color::Red => [255, 0, 0],
            Color::Green => [0, 200, 0],
            Color::Blue => [0, 0, 255],
            Color::Yellow => [255, 215, 0],
            Color::Purple => [160, 32, 240],
            Color::Black => [0, 0, 0],
            Color::White => [255, 255, 255],
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "Red",
            Color::Green => "Green",
            Color::Blue => "Blue",
            Color::Yellow => "Yellow",
            Color::Purple => "Purple",
            Color::Black => "Black",
            Color::White => "White",
        }
    }

    /// Black or white, whichever reads better on top of this color.
    pub fn contrast(self) -> Color {
        let [r, g, b] = self.rgb().0;
        let luma = 299 * r as u32 + 587 * g as u32 + 114 * b as u32;
        if luma > 128_000 {
            Color::Black
        } else {
            Color::White
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn default_scale() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Filled disk with a one-pixel black rim.
    Dot { center: [i64; 2], radius: u32, color: Color },
    /// Three-pixel shaft with a triangular head of length `head` (0 = no head).
    Arrow { from: [i64; 2], to: [i64; 2], color: Color, head: u32 },
    /// Text on a contrasting box; `anchor` is the box's top-left corner.
    TextLabel {
        anchor: [i64; 2],
        text: String,
        color: Color,
        #[serde(default = "default_scale")]
        scale: u32,
    },
}

const SHAFT_HALF_WIDTH: f64 = 1.5;

impl Primitive {
    fn anchors(&self) -> Vec<[i64; 2]> {
        match self {
            Primitive::Dot { center, .. } => vec![*center],
            Primitive::Arrow { from, to, .. } => vec![*from, *to],
            Primitive::TextLabel { anchor, .. } => vec![*anchor],
        }
    }

    /// Inclusive pixel box this primitive may touch: `(u0, v0, u1, v1)`.
    pub fn bbox(&self) -> (i64, i64, i64, i64) {
        match self {
            Primitive::Dot { center, radius, .. } => {
                let r = *radius as i64 + 1;
                (center[0] - r, center[1] - r, center[0] + r, center[1] + r)
            }
            Primitive::Arrow { from, to, head, .. } => {
                let m = (*head as i64).max(2);
                (from[0].min(to[0]) - m, from[1].min(to[1]) - m, from[0].max(to[0]) + m, from[1].max(to[1]) + m)
            }
            Primitive::TextLabel { anchor, text, scale, .. } => {
                let (w, h) = font::text_size(text, *scale);
                let pad = 2 * *scale as i64;
                (anchor[0], anchor[1], anchor[0] + w as i64 + 2 * pad - 1, anchor[1] + h as i64 + 2 * pad - 1)
            }
        }
    }
}

/// Base image, primitives drawn in order, and where the result goes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlaySpec {
    pub base: PathBuf,
    pub primitives: Vec<Primitive>,
    pub output: PathBuf,
}

fn put(img: &mut RgbImage, u: i64, v: i64, c: Rgb<u8>) {
    if u >= 0 && v >= 0 && (u as u32) < img.width() && (v as u32) < img.height() {
        img.put_pixel(u as u32, v as u32, c);
    }
}

fn draw_dot(img: &mut RgbImage, c: [i64; 2], radius: u32, color: Color) {
    let r = radius as i64;
    let (r2, rim2) = (r * r, (r + 1) * (r + 1));
    for dv in -(r + 1)..=(r + 1) {
        for du in -(r + 1)..=(r + 1) {
            let d2 = du * du + dv * dv;
            if d2 <= r2 {
                put(img, c[0] + du, c[1] + dv, color.rgb());
            } else if d2 <= rim2 {
                put(img, c[0] + du, c[1] + dv, Color::Black.rgb());
            }
        }
    }
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn draw_arrow(img: &mut RgbImage, from: [i64; 2], to: [i64; 2], color: Color, head: u32) {
    let a = [from[0] as f64, from[1] as f64];
    let b = [to[0] as f64, to[1] as f64];
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len = (dx * dx + dy * dy).sqrt();
    let h = (head as f64).min(len);
    let (ux, uy) = if len > 0.0 { (dx / len, dy / len) } else { (0.0, 0.0) };
    let base = [b[0] - ux * h, b[1] - uy * h];
    let half = h * 0.5;
    let tri = [b, [base[0] - uy * half, base[1] + ux * half], [base[0] + uy * half, base[1] - ux * half]];
    let shaft_end = if h > 0.0 { base } else { b };
    let c = color.rgb();
    let m = (head as i64).max(2);
    for v in from[1].min(to[1]) - m..=from[1].max(to[1]) + m {
        for u in from[0].min(to[0]) - m..=from[0].max(to[0]) + m {
            let p = [u as f64, v as f64];
            let in_shaft = seg_dist(p, a, shaft_end) <= SHAFT_HALF_WIDTH;
            let in_head = h > 0.0 && {
                let s = [cross(tri[0], tri[1], p), cross(tri[1], tri[2], p), cross(tri[2], tri[0], p)];
                s.iter().all(|x| *x >= -1e-9) || s.iter().all(|x| *x <= 1e-9)
            };
            if in_shaft || in_head {
                put(img, u, v, c);
            }
        }
    }
}

fn draw_text(img: &mut RgbImage, anchor: [i64; 2], text: &str, color: Color, scale: u32) {
    let (u0, v0, u1, v1) = Primitive::TextLabel { anchor, text: text.to_string(), color, scale }.bbox();
    let bg = color.contrast().rgb();
    for v in v0..=v1 {
        for u in u0..=u1 {
            put(img, u, v, bg);
        }
    }
    let pad = 2 * scale as i64;
    let s = scale as i64;
    for (i, ch) in text.chars().enumerate() {
        let ox = anchor[0] + pad + i as i64 * font::ADVANCE as i64 * s;
        for (row, bits) in font::glyph(ch).iter().enumerate() {
            for col in 0..font::GLYPH_W as i64 {
                if bits & (1 << (font::GLYPH_W as i64 - 1 - col)) == 0 {
                    continue;
                }
                for dy in 0..s {
                    for dx in 0..s {
                        put(img, ox + col * s + dx, anchor[1] + pad + row as i64 * s + dy, color.rgb());
                    }
                }
            }
        }
    }
}

/// Draws `primitives` onto `img` in order. Every anchor must lie inside the
/// image; strokes that extend past the border are clipped.
pub fn draw(img: &mut RgbImage, primitives: &[Primitive]) -> Result<(), AnnotateError> {
    let (w, h) = img.dimensions();
    for (index, p) in primitives.iter().enumerate() {
        for [u, v] in p.anchors() {
            if u < 0 || v < 0 || u >= w as i64 || v >= h as i64 {
                return Err(AnnotateError::OutOfBounds { index, u, v, w, h });
            }
        }
    }
    for p in primitives {
        match p {
            Primitive::Dot { center, radius, color } => draw_dot(img, *center, *radius, *color),
            Primitive::Arrow { from, to, color, head } => draw_arrow(img, *from, *to, *color, *head),
            Primitive::TextLabel { anchor, text, color, scale } => draw_text(img, *anchor, text, *color, *scale),
        }
    }
    Ok(())
}

pub fn load_rgb(path: &Path) -> Result<RgbImage, AnnotateError> {
    image::open(path)
        .map(|i| i.to_rgb8())
        .map_err(|e| AnnotateError::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// Encodes 8-bit RGB PNG with fixed settings, creating parent directories.
pub fn write_png(img: &RgbImage, path: &Path) -> Result<(), AnnotateError> {
    let io = |source| AnnotateError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let file = fs::File::create(path).map_err(io)?;
    let enc = PngEncoder::new_with_quality(BufWriter::new(file), CompressionType::Default, FilterType::Adaptive);
    enc.write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| AnnotateError::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// Applies an overlay spec and returns the output path. With no primitives
/// the base file is copied byte for byte.
pub fn render(spec: &OverlaySpec) -> Result<PathBuf, AnnotateError> {
    if spec.primitives.is_empty() {
        if let Some(dir) = spec.output.parent() {
            fs::create_dir_all(dir).map_err(|source| AnnotateError::Io { path: dir.to_path_buf(), source })?;
        }
        fs::copy(&spec.base, &spec.output).map_err(|source| AnnotateError::Io { path: spec.base.clone(), source })?;
        return Ok(spec.output.clone());
    }
    let mut img = load_rgb(&spec.base)?;
    draw(&mut img, &spec.primitives)?;
    write_png(&img, &spec.output)?;
    Ok(spec.output.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    SideBySide,
    Grid,
}

fn label_scale(tile_h: u32) -> u32 {
    if tile_h >= 200 {
        2
    } else {
        1
    }
}

fn fit(img: &RgbImage, w: u32, h: u32) -> RgbImage {
    if img.dimensions() == (w, h) {
        img.clone()
    } else {
        imageops::resize(img, w, h, imageops::FilterType::Nearest)
    }
}

/// Side-by-side strip at a common height, or a row-major grid with
/// `ceil(sqrt(n))` columns. Labels go in each panel's top-left corner.
pub fn compose(images: &[RgbImage], layout: Layout, labels: Option<&[String]>) -> Result<RgbImage, AnnotateError> {
    if images.len() < 2 {
        return Err(AnnotateError::TooFew(images.len()));
    }
    if let Some(l) = labels {
        if l.len() != images.len() {
            return Err(AnnotateError::LabelCount(l.len(), images.len()));
        }
    }
    let mut out;
    let mut origins = Vec::with_capacity(images.len());
    let tile_h;
    match layout {
        Layout::SideBySide => {
            tile_h = images.iter().map(|i| i.height()).max().unwrap_or(1);
            let panels: Vec<RgbImage> = images
                .iter()
                .map(|i| {
                    let w =
                        ((i.width() as u64 * tile_h as u64 + i.height() as u64 / 2) / i.height() as u64).max(1) as u32;
                    fit(i, w, tile_h)
                })
                .collect();
            let total_w = panels.iter().map(|p| p.width()).sum();
            out = RgbImage::from_pixel(total_w, tile_h, Rgb([255, 255, 255]));
            let mut x = 0;
            for p in &panels {
                imageops::replace(&mut out, p, x as i64, 0);
                origins.push([x as i64, 0]);
                x += p.width();
            }
        }
        Layout::Grid => {
            let n = images.len();
            let cols = (n as f64).sqrt().ceil() as u32;
            let rows = (n as u32).div_ceil(cols);
            let tw = images.iter().map(|i| i.width()).max().unwrap_or(1);
            tile_h = images.iter().map(|i| i.height()).max().unwrap_or(1);
            out = RgbImage::from_pixel(tw * cols, tile_h * rows, Rgb([255, 255, 255]));
            for (k, img) in images.iter().enumerate() {
                let (c, r) = (k as u32 % cols, k as u32 / cols);
                let (x, y) = ((c * tw) as i64, (r * tile_h) as i64);
                imageops::replace(&mut out, &fit(img, tw, tile_h), x, y);
                origins.push([x, y]);
            }
        }
    }
    if let Some(labels) = labels {
        let scale = label_scale(tile_h);
        let prims: Vec<Primitive> = labels
            .iter()
            .zip(&origins)
            .map(|(text, o)| Primitive::TextLabel {
                anchor: [o[0] + 4, o[1] + 4],
                text: text.clone(),
                color: Color::Black,
                scale,
            })
            .collect();
        draw(&mut out, &prims)?;
    }
    Ok(out)
}

/// File-level [`compose`].
pub fn compose_files(
    inputs: &[PathBuf],
    layout: Layout,
    labels: Option<&[String]>,
    output: &Path,
) -> Result<PathBuf, AnnotateError> {
    let images = inputs.iter().map(|p| load_rgb(p)).collect::<Result<Vec<_>, _>>()?;
    let img = compose(&images, layout, labels)?;
    write_png(&img, output)?;
    Ok(output.to_path_buf())
}

/// Keeps images at least 100 pixels on each side.
pub fn resolution_filter(size: ImageSize) -> bool {
    size.w >= 100 && size.h >= 100
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(w: u32, h: u32) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([255, 255, 255]))
    }

    /// Connected components (4-neighborhood) of pixels equal to `c`.
    fn components(img: &RgbImage, c: Rgb<u8>) -> Vec<Vec<(u32, u32)>> {
        let (w, h) = img.dimensions();
        let mut seen = vec![false; (w * h) as usize];
        let mut out = Vec::new();
        for v in 0..h {
            for u in 0..w {
                if seen[(v * w + u) as usize] || *img.get_pixel(u, v) != c {
                    continue;
                }
                let mut stack = vec![(u, v)];
                let mut comp = Vec::new();
                seen[(v * w + u) as usize] = true;
                while let Some((x, y)) = stack.pop() {
                    comp.push((x, y));
                    let nb = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
                    for (nx, ny) in nb {
                        if nx < w && ny < h && !seen[(ny * w + nx) as usize] && *img.get_pixel(nx, ny) == c {
                            seen[(ny * w + nx) as usize] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
                out.push(comp);
            }
        }
        out
    }

    #[test]
    fn single_dot_is_one_region_centered() {
        let mut img = white(100, 100);
        draw(&mut img, &[Primitive::Dot { center: [50, 50], radius: 6, color: Color::Red }]).unwrap();
        let comps = components(&img, Color::Red.rgb());
        assert_eq!(comps.len(), 1);
        let n = comps[0].len() as f64;
        let cu = comps[0].iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let cv = comps[0].iter().map(|p| p.1 as f64).sum::<f64>() / n;
        assert!((cu - 50.0).abs() <= 0.5 && (cv - 50.0).abs() <= 0.5);
    }

    #[test]
    fn out_of_bounds_anchor_errors() {
        let mut img = white(10, 10);
        let e = draw(&mut img, &[Primitive::Dot { center: [10, 3], radius: 1, color: Color::Red }]);
        assert!(matches!(e, Err(AnnotateError::OutOfBounds { index: 0, .. })));
        // nothing drawn on failure
        assert_eq!(img, white(10, 10));
    }

    #[test]
    fn primitives_stay_inside_their_box() {
        let prims = [
            Primitive::Dot { center: [20, 30], radius: 5, color: Color::Blue },
            Primitive::Arrow { from: [10, 10], to: [60, 40], color: Color::Green, head: 8 },
            Primitive::TextLabel { anchor: [5, 60], text: "Configuration A".into(), color: Color::Black, scale: 1 },
        ];
        for p in &prims {
            let mut img = white(120, 100);
            draw(&mut img, std::slice::from_ref(p)).unwrap();
            let (u0, v0, u1, v1) = p.bbox();
            for (u, v, px) in img.enumerate_pixels() {
                let (u, v) = (u as i64, v as i64);
                let inside = u >= u0 - 1 && u <= u1 + 1 && v >= v0 - 1 && v <= v1 + 1;
                if !inside {
                    assert_eq!(*px, Rgb([255, 255, 255]), "{p:?} touched ({u},{v})");
                }
            }
        }
    }

    #[test]
    fn arrow_head_points_at_target() {
        let mut img = white(100, 100);
        draw(&mut img, &[Primitive::Arrow { from: [10, 50], to: [90, 50], color: Color::Red, head: 10 }]).unwrap();
        assert_eq!(*img.get_pixel(90, 50), Color::Red.rgb());
        assert_eq!(*img.get_pixel(82, 53), Color::Red.rgb());
        assert_eq!(*img.get_pixel(20, 53), Rgb([255, 255, 255]));
    }

    #[test]
    fn side_by_side_dimensions() {
        let a = white(640, 360);
        let out = compose(&[a.clone(), a], Layout::SideBySide, None).unwrap();
        assert_eq!(out.dimensions(), (1280, 360));
        let b = white(100, 50);
        let out = compose(&[white(200, 100), b], Layout::SideBySide, None).unwrap();
        assert_eq!(out.dimensions(), (400, 100));
    }

    #[test]
    fn grid_three_plus_two() {
        let tiles: Vec<RgbImage> = (0..5).map(|_| white(120, 80)).collect();
        let labels: Vec<String> = "ABCDE".chars().map(|c| format!("Configuration {c}")).collect();
        let out = compose(&tiles, Layout::Grid, Some(&labels)).unwrap();
        assert_eq!(out.dimensions(), (360, 160));
        // each of the five tiles carries a label box at its top-left; the
        // sixth cell stays blank
        for (c, r) in [(0, 0), (1, 0), (2, 0), (0, 1), (1, 1)] {
            assert_eq!(*out.get_pixel(c * 120 + 4, r * 80 + 4), Rgb([255, 255, 255]));
            let dark = (0..100)
                .flat_map(|u| (0..14).map(move |v| (u, v)))
                .any(|(u, v)| *out.get_pixel(c * 120 + u, r * 80 + v) == Rgb([0, 0, 0]));
            assert!(dark, "tile {c},{r} unlabeled");
        }
        let blank = (240..360).all(|u| (80..160).all(|v| *out.get_pixel(u, v) == Rgb([255, 255, 255])));
        assert!(blank);
    }

    #[test]
    fn compose_rejects_fewer_than_two() {
        assert!(matches!(compose(&[], Layout::Grid, None), Err(AnnotateError::TooFew(0))));
        assert!(matches!(compose(&[white(4, 4)], Layout::SideBySide, None), Err(AnnotateError::TooFew(1))));
    }

    #[test]
    fn resolution_filter_examples() {
        assert!(resolution_filter(ImageSize { w: 640, h: 360 }));
        assert!(!resolution_filter(ImageSize { w: 84, h: 84 }));
        assert!(resolution_filter(ImageSize { w: 100, h: 100 }));
        assert!(!resolution_filter(ImageSize { w: 100, h: 99 }));
    }

    #[test]
    fn render_is_byte_stable_and_empty_is_copy() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("base.png");
        write_png(&white(64, 48), &base).unwrap();
        let prims = vec![
            Primitive::Dot { center: [10, 10], radius: 3, color: Color::Purple },
            Primitive::TextLabel { anchor: [20, 20], text: "A".into(), color: Color::Yellow, scale: 1 },
        ];
        let a =
            render(&OverlaySpec { base: base.clone(), primitives: prims.clone(), output: dir.path().join("a.png") })
                .unwrap();
        let b =
            render(&OverlaySpec { base: base.clone(), primitives: prims, output: dir.path().join("b.png") }).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        let c =
            render(&OverlaySpec { base: base.clone(), primitives: vec![], output: dir.path().join("c.png") }).unwrap();
        assert_eq!(fs::read(c).unwrap(), fs::read(&base).unwrap());
    }
}
