//! Pixel-polarizer mosaic: the 2x2 analyzer-angle pattern of a
//! division-of-focal-plane sensor and the Malus-law rendering of a sky
//! field through it, with Gaussian sensor noise and quantization.

use crate::error::{Error, Result};
use crate::skysim::field::SkyStokesField;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Assignment of analyzer angles to the four super-pixel offsets.
///
/// Must be a permutation of {0, 45, 90, 135} degrees. The default is the
/// common commercial layout: 90 at (0,0), 45 at (0,1), 135 at (1,0),
/// 0 at (1,1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizerPattern {
    angles: [[f64; 2]; 2],
}

impl PolarizerPattern {
    pub fn new(angles: [[f64; 2]; 2]) -> Result<Self> {
        let mut sorted: Vec<f64> = angles.iter().flatten().copied().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted != [0.0, 45.0, 90.0, 135.0] {
            return Err(Error::InvalidParameter(format!(
                "polarizer pattern must be a permutation of 0/45/90/135, got {angles:?}"
            )));
        }
        Ok(Self { angles })
    }

    pub fn angle_at(&self, row_offset: usize, col_offset: usize) -> f64 {
        self.angles[row_offset % 2][col_offset % 2]
    }

    /// Super-pixel offset carrying the given analyzer angle.
    pub fn offset_of(&self, angle: f64) -> (usize, usize) {
        for dr in 0..2 {
            for dc in 0..2 {
                if self.angles[dr][dc] == angle {
                    return (dr, dc);
                }
            }
        }
        unreachable!("pattern is a validated permutation")
    }

    /// Row-major flat form `[a00, a01, a10, a11]` used in sidecar files.
    pub fn flat(&self) -> [f64; 4] {
        [
            self.angles[0][0],
            self.angles[0][1],
            self.angles[1][0],
            self.angles[1][1],
        ]
    }

    pub fn from_flat(flat: [f64; 4]) -> Result<Self> {
        Self::new([[flat[0], flat[1]], [flat[2], flat[3]]])
    }

    /// Parse a comma-separated row-major angle list, e.g. `90,45,135,0`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<f64> = text
            .split(',')
            .map(|p| {
                p.trim().parse::<f64>().map_err(|_| {
                    Error::InvalidParameter(format!("bad pattern component `{p}`"))
                })
            })
            .collect::<Result<_>>()?;
        if parts.len() != 4 {
            return Err(Error::InvalidParameter(format!(
                "pattern needs 4 comma-separated angles, got {}",
                parts.len()
            )));
        }
        Self::from_flat([parts[0], parts[1], parts[2], parts[3]])
    }
}

impl Default for PolarizerPattern {
    fn default() -> Self {
        Self {
            angles: [[90.0, 45.0], [135.0, 0.0]],
        }
    }
}

/// Raw quantized sensor frame behind the pixel-polarizer array.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicImage {
    pixels: Vec<u16>,
    width: usize,
    height: usize,
    bit_depth: u8,
    pattern: PolarizerPattern,
}

impl MosaicImage {
    pub fn new(
        pixels: Vec<u16>,
        width: usize,
        height: usize,
        bit_depth: u8,
        pattern: PolarizerPattern,
    ) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "mosaic dimensions must be positive and even, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if bit_depth == 0 || bit_depth > 16 {
            return Err(Error::InvalidParameter(format!(
                "bit depth must lie in [1, 16], got {bit_depth}"
            )));
        }
        let full = full_scale(bit_depth);
        if let Some(&bad) = pixels.iter().find(|&&p| p > full) {
            return Err(Error::InvalidParameter(format!(
                "pixel value {bad} exceeds full scale {full}"
            )));
        }
        Ok(Self {
            pixels,
            width,
            height,
            bit_depth,
            pattern,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pattern(&self) -> PolarizerPattern {
        self.pattern
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.width + col]
    }

    pub fn full_scale(&self) -> u16 {
        full_scale(self.bit_depth)
    }
}

pub fn full_scale(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

/// Analyzer response of the Malus law for a partially polarized beam:
/// `I(theta) = (s0 / 2) (1 + dop cos 2(theta - aop))`, in normalized units.
pub fn analyzer_intensity(s0: f64, dop: f64, aop_deg: f64, analyzer_deg: f64) -> f64 {
    (s0 / 2.0) * (1.0 + dop * (2.0 * (analyzer_deg - aop_deg).to_radians()).cos())
}

/// Render a sky field through the polarizer mosaic: per-pixel Malus response
/// at the analyzer angle of the pixel's 2x2 offset, additive zero-mean
/// Gaussian noise of `noise_sigma` of full scale, rounded to the nearest
/// code and clamped to `[0, 2^bit_depth - 1]`.
///
/// Noise values are drawn in row-major pixel order, so the output is fully
/// determined by the rng state.
pub fn synthesize_mosaic(
    field: &SkyStokesField,
    pattern: PolarizerPattern,
    noise_sigma: f64,
    bit_depth: u8,
    rng: &mut impl Rng,
) -> Result<MosaicImage> {
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be non-negative, got {noise_sigma}"
        )));
    }
    let (h, w) = (field.height(), field.width());
    let full = full_scale(bit_depth) as f64;
    let noise = if noise_sigma > 0.0 {
        Some(Normal::new(0.0, noise_sigma * full).expect("finite sigma"))
    } else {
        None
    };
    let mut pixels = Vec::with_capacity(h * w);
    for row in 0..h {
        for col in 0..w {
            let analyzer = pattern.angle_at(row % 2, col % 2);
            let intensity = analyzer_intensity(
                field.s0.get(row, col),
                field.dop.get(row, col),
                field.aop.get(row, col),
                analyzer,
            );
            let mut counts = intensity * full;
            if let Some(n) = &noise {
                counts += n.sample(rng);
            }
            pixels.push(counts.round().clamp(0.0, full) as u16);
        }
    }
    MosaicImage::new(pixels, w, h, bit_depth, pattern)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::Map;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pattern_rejects_non_permutations() {
        assert!(PolarizerPattern::new([[0.0, 45.0], [90.0, 90.0]]).is_err());
        assert!(PolarizerPattern::new([[0.0, 30.0], [90.0, 135.0]]).is_err());
        assert!(PolarizerPattern::new([[0.0, 45.0], [90.0, 135.0]]).is_ok());
    }

    #[test]
    fn pattern_parse_round_trip() {
        let p = PolarizerPattern::parse("90,45,135,0").unwrap();
        assert_eq!(p, PolarizerPattern::default());
        assert_eq!(p.flat(), [90.0, 45.0, 135.0, 0.0]);
        assert_eq!(p.offset_of(0.0), (1, 1));
        assert!(PolarizerPattern::parse("90,45,135").is_err());
    }

    #[test]
    fn malus_response_anchors() {
        // fully polarized horizontal light
        assert!((analyzer_intensity(1.0, 1.0, 0.0, 0.0) - 1.0).abs() < 1e-15);
        assert!((analyzer_intensity(1.0, 1.0, 0.0, 45.0) - 0.5).abs() < 1e-15);
        assert!(analyzer_intensity(1.0, 1.0, 0.0, 90.0).abs() < 1e-15);
        assert!((analyzer_intensity(1.0, 1.0, 0.0, 135.0) - 0.5).abs() < 1e-15);
        // unpolarized light gives s0/2 at every analyzer
        for ang in [0.0, 45.0, 90.0, 135.0] {
            assert!((analyzer_intensity(0.8, 0.0, 17.0, ang) - 0.4).abs() < 1e-15);
        }
    }

    fn constant_field(h: usize, w: usize, s0: f64, dop: f64, aop: f64) -> SkyStokesField {
        SkyStokesField {
            s0: Map::filled(h, w, s0),
            dop: Map::filled(h, w, dop),
            aop: Map::filled(h, w, aop),
            degenerate: vec![false; h * w],
        }
    }

    #[test]
    fn mosaic_is_deterministic_given_rng_state() {
        let field = constant_field(8, 8, 0.9, 0.5, 30.0);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = synthesize_mosaic(&field, PolarizerPattern::default(), 0.01, 12, &mut r1).unwrap();
        let b = synthesize_mosaic(&field, PolarizerPattern::default(), 0.01, 12, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_free_mosaic_matches_malus_exactly() {
        let field = constant_field(4, 4, 1.0, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = synthesize_mosaic(&field, PolarizerPattern::default(), 0.0, 12, &mut rng).unwrap();
        // offsets: (0,0)->90 deg -> 0 counts, (1,1)->0 -> 4095; the 45/135
        // responses sit exactly on the 2047.5 rounding edge, where the sign
        // of the cos() rounding noise picks the neighbor
        assert_eq!(m.get(0, 0), 0);
        assert!(m.get(0, 1) == 2047 || m.get(0, 1) == 2048);
        assert!(m.get(1, 0) == 2047 || m.get(1, 0) == 2048);
        assert_eq!(m.get(1, 1), 4095);
    }

    #[test]
    fn rejects_negative_noise() {
        let field = constant_field(2, 2, 1.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(
            synthesize_mosaic(&field, PolarizerPattern::default(), -0.1, 12, &mut rng).is_err()
        );
    }
}
