//! Discrimination pairs, before and after rasterization.

use serde::{Deserialize, Serialize};

use crate::canvas::{self, Canvas, Glyph, Mask, RenderStyle};
use crate::error::{Error, Result};
use crate::rng;
use crate::transform::{self, ConcreteTransform, TransformSpec, MAX_FRAME_ATTEMPTS};

/// Vector form of a pair. Empty glyphs render as background-only images.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GlyphPair {
    pub a: Glyph,
    pub b: Glyph,
}

impl GlyphPair {
    pub fn new(a: Glyph, b: Glyph) -> Self {
        GlyphPair { a, b }
    }

    /// Add the same context glyph to both images.
    pub fn with_context(&self, context: &Glyph) -> GlyphPair {
        GlyphPair { a: self.a.union(context), b: self.b.union(context) }
    }

    /// Apply one transform identically to both glyphs.
    pub fn apply_transform(&self, t: &ConcreteTransform) -> Result<GlyphPair> {
        let pair = GlyphPair { a: t.apply_glyph(&self.a), b: t.apply_glyph(&self.b) };
        if !(transform::fits_in_frame(&pair.a) && transform::fits_in_frame(&pair.b)) {
            return Err(Error::OutOfFrame);
        }
        Ok(pair)
    }

    /// Rasterize both images. Image slots `a` and `b` get independent
    /// background noise derived from `style.noise_seed`.
    pub fn render(&self, style: &RenderStyle, size: u32) -> Result<StimulusPair> {
        Ok(StimulusPair {
            image_a: canvas::render_allow_empty(&self.a, &style.for_slot(0), size)?,
            image_b: canvas::render_allow_empty(&self.b, &style.for_slot(1), size)?,
        })
    }

    pub fn masks(&self, size: u32) -> (Mask, Mask) {
        (canvas::render_mask(&self.a, size), canvas::render_mask(&self.b, size))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusPair {
    pub image_a: Canvas,
    pub image_b: Canvas,
}

impl StimulusPair {
    pub fn new(image_a: Canvas, image_b: Canvas) -> Result<Self> {
        if image_a.size() != image_b.size() {
            return Err(Error::LengthMismatch { left: image_a.size() as usize, right: image_b.size() as usize });
        }
        Ok(StimulusPair { image_a, image_b })
    }

    /// Whether the two images differ in at least one pixel.
    pub fn is_discriminable(&self) -> bool {
        self.image_a != self.image_b
    }
}

/// Draw a transform that keeps every pair in frame, resampling with fresh
/// seeds up to [`MAX_FRAME_ATTEMPTS`] times. The same draw is applied to
/// all `pairs`.
pub fn sample_in_frame(
    spec: &TransformSpec,
    seed: u64,
    pairs: &[&GlyphPair],
) -> Result<(ConcreteTransform, Vec<GlyphPair>)> {
    for attempt in 0..MAX_FRAME_ATTEMPTS {
        let t = transform::sample_transform(spec, rng::derive_seed(seed, &[attempt]))?;
        let moved: Result<Vec<GlyphPair>> = pairs.iter().map(|p| p.apply_transform(&t)).collect();
        match moved {
            Ok(moved) => return Ok((t, moved)),
            Err(Error::OutOfFrame) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::OutOfFrame)
}
