//! Geometric transformations applied to glyph geometry before rasterization.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::canvas::{Glyph, Point, Primitive};
use crate::error::{Error, Result};
use crate::rng;

/// Attempts made by [`sample_in_frame`] before giving up.
pub const MAX_FRAME_ATTEMPTS: u64 = 100;

const CENTER: Point = [0.5, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    None,
    Translate,
    Scale,
    Rotate,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] =
        [TransformKind::None, TransformKind::Translate, TransformKind::Scale, TransformKind::Rotate];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::None => "none",
            TransformKind::Translate => "translate",
            TransformKind::Scale => "scale",
            TransformKind::Rotate => "rotate",
        }
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransformKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown transform `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
    /// Maximum translation per axis as a fraction of the canvas width.
    pub translate_fraction: f64,
    pub scale_range: (f64, f64),
    /// Degrees, half-open `[lo, hi)`.
    pub rotate_range: (f64, f64),
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            kind: TransformKind::None,
            translate_fraction: 0.18,
            scale_range: (0.7, 1.3),
            rotate_range: (0.0, 360.0),
        }
    }
}

impl TransformSpec {
    pub fn of_kind(kind: TransformKind) -> Self {
        TransformSpec { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTransform(m));
        if !(0.0..=0.5).contains(&self.translate_fraction) {
            return bad(format!("translate_fraction {} outside [0, 0.5]", self.translate_fraction));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale_range ({lo}, {hi}) must satisfy 0 < lo <= hi"));
        }
        let (lo, hi) = self.rotate_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad(format!("rotate_range ({lo}, {hi}) must satisfy lo <= hi"));
        }
        Ok(())
    }
}

/// One concrete draw. Translation is in normalized units; applied as
/// scale about the canvas center, then rotation about the center, then
/// translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcreteTransform {
    pub dx: f64,
    pub dy: f64,
    pub scale: f64,
    pub rotation_deg: f64,
}

impl Default for ConcreteTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl ConcreteTransform {
    pub const IDENTITY: ConcreteTransform = ConcreteTransform { dx: 0.0, dy: 0.0, scale: 1.0, rotation_deg: 0.0 };

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn translation_px(&self, canvas_size: u32) -> (f64, f64) {
        (self.dx * canvas_size as f64, self.dy * canvas_size as f64)
    }

    pub fn apply_point(&self, p: Point) -> Point {
        let (sin, cos) = self.rotation_deg.to_radians().sin_cos();
        let x = (p[0] - CENTER[0]) * self.scale;
        let y = (p[1] - CENTER[1]) * self.scale;
        [CENTER[0] + cos * x - sin * y + self.dx, CENTER[1] + sin * x + cos * y + self.dy]
    }

    pub fn apply_glyph(&self, glyph: &Glyph) -> Glyph {
        if self.is_identity() {
            return glyph.clone();
        }
        let primitives = glyph
            .primitives
            .iter()
            .map(|p| match p {
                Primitive::Dot { center, radius } => {
                    Primitive::Dot { center: self.apply_point(*center), radius: radius * self.scale }
                }
                Primitive::Polyline { vertices, stroke_width } => Primitive::Polyline {
                    vertices: vertices.iter().map(|v| self.apply_point(*v)).collect(),
                    stroke_width: stroke_width * self.scale,
                },
            })
            .collect();
        Glyph { primitives }
    }
}

/// Draw one transform of `spec.kind`; uniform within the spec's ranges.
pub fn sample_transform(spec: &TransformSpec, seed: u64) -> Result<ConcreteTransform> {
    spec.validate()?;
    let mut rng = rng::rng_from(seed, &[rng::tag("transform")]);
    let mut t = ConcreteTransform::IDENTITY;
    match spec.kind {
        TransformKind::None => {}
        TransformKind::Translate => {
            let f = spec.translate_fraction;
            if f > 0.0 {
                t.dx = rng.random_range(-f..=f);
                t.dy = rng.random_range(-f..=f);
            }
        }
        TransformKind::Scale => {
            let (lo, hi) = spec.scale_range;
            t.scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        }
        TransformKind::Rotate => {
            let (lo, hi) = spec.rotate_range;
            t.rotation_deg = if lo < hi { rng.random_range(lo..hi) } else { lo };
        }
    }
    Ok(t)
}

/// True when every primitive, including its radius or half stroke width,
/// lies inside the unit square.
pub fn fits_in_frame(glyph: &Glyph) -> bool {
    glyph.primitives.iter().all(|p| {
        let e = p.extent();
        p.points().iter().all(|q| q[0] - e >= 0.0 && q[0] + e <= 1.0 && q[1] - e >= 0.0 && q[1] + e <= 1.0)
    })
}
