//! Binary rasterization of vector glyphs.
//!
//! Coordinates are normalized to the unit square with `x` to the right and
//! `y` downwards. A pixel belongs to the foreground when its center lies
//! inside a dot disc or within half a stroke width of a polyline segment.
//! There is no anti-aliasing, so the foreground mask of a glyph is the
//! union of the masks of its primitives.

use std::path::Path;

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Reference canvas size that pixel-denominated defaults are quoted at.
pub const REFERENCE_SIZE: u32 = 224;
pub const MIN_CANVAS_SIZE: u32 = 32;
/// 4 px dot radius at the reference size.
pub const DEFAULT_DOT_RADIUS: f64 = 4.0 / REFERENCE_SIZE as f64;
/// 2 px stroke width at the reference size.
pub const DEFAULT_STROKE_WIDTH: f64 = 2.0 / REFERENCE_SIZE as f64;

/// Smallest rasterized dot radius and stroke half-width, in pixels, so
/// that primitives stay visible on small canvases.
const MIN_RADIUS_PX: f64 = 1.0;
const MIN_HALF_WIDTH_PX: f64 = 0.5;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Dot { center: Point, radius: f64 },
    Polyline { vertices: Vec<Point>, stroke_width: f64 },
}

impl Primitive {
    pub fn dot(center: Point) -> Self {
        Primitive::Dot { center, radius: DEFAULT_DOT_RADIUS }
    }

    pub fn line(vertices: Vec<Point>) -> Self {
        Primitive::Polyline { vertices, stroke_width: DEFAULT_STROKE_WIDTH }
    }

    pub fn points(&self) -> &[Point] {
        match self {
            Primitive::Dot { center, .. } => std::slice::from_ref(center),
            Primitive::Polyline { vertices, .. } => vertices,
        }
    }

    /// Distance from a point to the primitive's outline extent (half the
    /// stroke width or the radius), used for frame checks.
    pub fn extent(&self) -> f64 {
        match self {
            Primitive::Dot { radius, .. } => *radius,
            Primitive::Polyline { stroke_width, .. } => stroke_width / 2.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let in_unit = |p: &Point| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
        match self {
            Primitive::Dot { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidGlyph(format!("dot radius {radius} must be > 0")));
                }
                if !in_unit(center) {
                    return Err(Error::InvalidGlyph(format!("dot center {center:?} outside [0,1]²")));
                }
            }
            Primitive::Polyline { vertices, stroke_width } => {
                if !(*stroke_width > 0.0) {
                    return Err(Error::InvalidGlyph(format!(
                        "stroke width {stroke_width} must be > 0"
                    )));
                }
                if vertices.is_empty() {
                    return Err(Error::InvalidGlyph("polyline without vertices".into()));
                }
                if let Some(v) = vertices.iter().find(|v| !in_unit(v)) {
                    return Err(Error::InvalidGlyph(format!("vertex {v:?} outside [0,1]²")));
                }
            }
        }
        Ok(())
    }
}

/// An ordered list of primitives.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Glyph {
    pub primitives: Vec<Primitive>,
}

impl Glyph {
    /// Builds a glyph, checking that all coordinates are normalized and
    /// all radii and widths are positive.
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        let glyph = Glyph { primitives };
        glyph.validate()?;
        Ok(glyph)
    }

    pub fn empty() -> Self {
        Glyph::default()
    }

    pub fn validate(&self) -> Result<()> {
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    /// Primitive-list union: `self` followed by `other`.
    pub fn union(&self, other: &Glyph) -> Glyph {
        let mut primitives = self.primitives.clone();
        primitives.extend(other.primitives.iter().cloned());
        Glyph { primitives }
    }

    /// Dot centers in primitive order (polylines are skipped).
    pub fn dot_centers(&self) -> Vec<Point> {
        self.primitives
            .iter()
            .filter_map(|p| match p {
                Primitive::Dot { center, .. } => Some(*center),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    WhiteOnBlack,
    BlackOnWhite,
    BlackOnRandomPixels,
}

impl Polarity {
    pub const ALL: [Polarity; 3] =
        [Polarity::WhiteOnBlack, Polarity::BlackOnWhite, Polarity::BlackOnRandomPixels];

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::WhiteOnBlack => "white_on_black",
            Polarity::BlackOnWhite => "black_on_white",
            Polarity::BlackOnRandomPixels => "black_on_random_pixels",
        }
    }

    pub fn stroke_value(self) -> u8 {
        match self {
            Polarity::WhiteOnBlack => 255,
            Polarity::BlackOnWhite | Polarity::BlackOnRandomPixels => 0,
        }
    }
}

impl std::str::FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Polarity::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown style `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub polarity: Polarity,
    pub noise_seed: u64,
}

impl RenderStyle {
    pub fn new(polarity: Polarity, noise_seed: u64) -> Self {
        RenderStyle { polarity, noise_seed }
    }

    /// Same polarity with a noise seed derived for one image slot.
    pub fn for_slot(&self, slot: u64) -> Self {
        RenderStyle { polarity: self.polarity, noise_seed: rng::derive_seed(self.noise_seed, &[slot]) }
    }
}

/// Row-major foreground mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub size: u32,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(size: u32) -> Self {
        Mask { size, bits: vec![false; (size * size) as usize] }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[(y * self.size + x) as usize]
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!(self.size, other.size);
        Mask {
            size: self.size,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// Pixels set in `self` but not in `other`.
    pub fn difference(&self, other: &Mask) -> Mask {
        assert_eq!(self.size, other.size);
        Mask {
            size: self.size,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && !*b).collect(),
        }
    }
}

/// Rasterize the foreground mask of a glyph. Geometry outside the unit
/// square is clipped.
pub fn render_mask(glyph: &Glyph, size: u32) -> Mask {
    let mut mask = Mask::new(size);
    let s = size as f64;
    for prim in &glyph.primitives {
        match prim {
            Primitive::Dot { center, radius } => {
                let (cx, cy) = (center[0] * s, center[1] * s);
                let r = (radius * s).max(MIN_RADIUS_PX);
                fill_where(&mut mask, cx - r, cy - r, cx + r, cy + r, |px, py| {
                    (px - cx).powi(2) + (py - cy).powi(2) <= r * r
                });
            }
            Primitive::Polyline { vertices, stroke_width } => {
                let hw = (stroke_width * s / 2.0).max(MIN_HALF_WIDTH_PX);
                let pts: Vec<Point> = vertices.iter().map(|v| [v[0] * s, v[1] * s]).collect();
                let segments: Vec<(Point, Point)> = if pts.len() == 1 {
                    vec![(pts[0], pts[0])]
                } else {
                    pts.windows(2).map(|w| (w[0], w[1])).collect()
                };
                for (a, b) in segments {
                    fill_where(
                        &mut mask,
                        a[0].min(b[0]) - hw,
                        a[1].min(b[1]) - hw,
                        a[0].max(b[0]) + hw,
                        a[1].max(b[1]) + hw,
                        |px, py| point_segment_distance([px, py], a, b) <= hw,
                    );
                }
            }
        }
    }
    mask
}

fn fill_where(
    mask: &mut Mask,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    inside: impl Fn(f64, f64) -> bool,
) {
    let size = mask.size as i64;
    let lo = |v: f64| ((v - 0.5).floor() as i64).clamp(0, size);
    let hi = |v: f64| ((v - 0.5).ceil() as i64 + 1).clamp(0, size);
    for y in lo(y0)..hi(y1) {
        for x in lo(x0)..hi(x1) {
            if inside(x as f64 + 0.5, y as f64 + 0.5) {
                mask.bits[(y * size + x) as usize] = true;
            }
        }
    }
}

pub fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - qx).powi(2) + (p[1] - qy).powi(2)).sqrt()
}

/// Square grayscale image stored as 8-bit RGB triplets, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canvas {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Canvas {
    pub fn filled(size: u32, value: u8) -> Self {
        Canvas { width: size, height: size, pixels: vec![value; (size * size * 3) as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn size(&self) -> u32 {
        self.width
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn set_gray(&mut self, index: usize, value: u8) {
        self.pixels[index * 3..index * 3 + 3].fill(value);
    }

    /// Interleaved RGB bytes.
    pub fn as_bytes(&self) -> &[u8] {
        &self.pixels
    }

    /// First channel of every pixel (all channels are equal).
    pub fn gray(&self) -> Vec<u8> {
        self.pixels.iter().step_by(3).copied().collect()
    }

    /// Number of pixel positions whose values differ.
    pub fn count_differing(&self, other: &Canvas) -> usize {
        self.pixels
            .chunks_exact(3)
            .zip(other.pixels.chunks_exact(3))
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn to_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("canvas buffer matches its dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Background-only canvas for a style.
pub fn render_background(style: &RenderStyle, size: u32) -> Result<Canvas> {
    if size < MIN_CANVAS_SIZE {
        return Err(Error::CanvasTooSmall(size));
    }
    Ok(match style.polarity {
        Polarity::WhiteOnBlack => Canvas::filled(size, 0),
        Polarity::BlackOnWhite => Canvas::filled(size, 255),
        Polarity::BlackOnRandomPixels => {
            let mut canvas = Canvas::filled(size, 0);
            let mut rng = rng::rng_from(style.noise_seed, &[rng::tag("background")]);
            for i in 0..(size * size) as usize {
                canvas.set_gray(i, rng.random::<u8>());
            }
            canvas
        }
    })
}

/// Rasterize `glyph` over the style's background.
pub fn render(glyph: &Glyph, style: &RenderStyle, size: u32) -> Result<Canvas> {
    if glyph.is_empty() {
        return Err(Error::EmptyGlyph);
    }
    render_allow_empty(glyph, style, size)
}

/// Like [`render`] but an empty glyph yields a background-only canvas.
pub fn render_allow_empty(glyph: &Glyph, style: &RenderStyle, size: u32) -> Result<Canvas> {
    let mut canvas = render_background(style, size)?;
    let mask = render_mask(glyph, size);
    let value = style.polarity.stroke_value();
    for (i, _) in mask.bits.iter().enumerate().filter(|(_, &b)| b) {
        canvas.set_gray(i, value);
    }
    Ok(canvas)
}
