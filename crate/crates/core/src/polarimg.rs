//! Intensity-image processing layers: strided demosaicking of the
//! polarizer mosaic into four analyzer channels, mean pooling, the Stokes
//! maps `s0 = (i0+i45+i90+i135)/2, s1 = i0-i90, s2 = i45-i135` (circular
//! component dropped), the degree and angle of polarization, and the
//! normalized three-map feature tensor fed to the network.

use crate::error::{Error, Result};
use crate::map::Map;
use crate::skysim::mosaic::MosaicImage;

/// Guard against division by a near-zero total intensity.
pub const S0_EPS: f64 = 1e-9;

/// The four demosaicked analyzer channels, normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityChannels {
    pub i0: Map,
    pub i45: Map,
    pub i90: Map,
    pub i135: Map,
}

impl IntensityChannels {
    pub fn height(&self) -> usize {
        self.i0.height()
    }

    pub fn width(&self) -> usize {
        self.i0.width()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StokesMaps {
    pub s0: Map,
    pub s1: Map,
    pub s2: Map,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationMaps {
    /// Degree of polarization, clamped to `[0, 1]`.
    pub dop: Map,
    /// Angle of polarization, degrees in `(-90, 90]`.
    pub aop: Map,
    /// Pixels where `s1 = s2 = 0` or `s0 < S0_EPS`: AOP reported as 0.
    pub degenerate: Vec<bool>,
}

/// Normalized `(s0, dop, aop)` maps, each pooled to the feature grid.
/// The stacking order is fixed; the checkpoint format depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub s0: Map,
    pub dop: Map,
    pub aop: Map,
}

impl FeatureTensor {
    pub fn grid_height(&self) -> usize {
        self.s0.height()
    }

    pub fn grid_width(&self) -> usize {
        self.s0.width()
    }

    /// Flatten to the network input layout: s0 cells, then dop, then aop,
    /// each row-major.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.s0.data().len());
        out.extend_from_slice(self.s0.data());
        out.extend_from_slice(self.dop.data());
        out.extend_from_slice(self.aop.data());
        out
    }
}

/// Split the mosaic into its four analyzer channels with the fixed strided
/// 2x2 kernels: channel `theta` at `(r, c)` reads the mosaic at
/// `(2r+dr, 2c+dc)` where `(dr, dc)` carries analyzer `theta` in the
/// pattern, scaled by the full-scale code.
pub fn demosaic(mosaic: &MosaicImage) -> Result<IntensityChannels> {
    if mosaic.width() % 2 != 0 || mosaic.height() % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "mosaic dimensions must be even, got {}x{}",
            mosaic.width(),
            mosaic.height()
        )));
    }
    let (h, w) = (mosaic.height() / 2, mosaic.width() / 2);
    let scale = mosaic.full_scale() as f64;
    let pattern = mosaic.pattern();
    let channel = |angle: f64| -> Map {
        let (dr, dc) = pattern.offset_of(angle);
        let mut out = Map::zeros(h, w);
        for r in 0..h {
            for c in 0..w {
                out.set(r, c, mosaic.get(2 * r + dr, 2 * c + dc) as f64 / scale);
            }
        }
        out
    };
    Ok(IntensityChannels {
        i0: channel(0.0),
        i45: channel(45.0),
        i90: channel(90.0),
        i135: channel(135.0),
    })
}

/// Mean-pool with square blocks; trailing rows/cols that do not fill a
/// block are dropped.
pub fn mean_pool(map: &Map, pool_size: usize) -> Result<Map> {
    if pool_size == 0 {
        return Err(Error::InvalidParameter("pool size must be positive".into()));
    }
    if pool_size == 1 {
        return Ok(map.clone());
    }
    let (h, w) = (map.height() / pool_size, map.width() / pool_size);
    if h == 0 || w == 0 {
        return Err(Error::DimensionMismatch(format!(
            "pool size {pool_size} exceeds map dimensions {}x{}",
            map.height(),
            map.width()
        )));
    }
    let inv = 1.0 / (pool_size * pool_size) as f64;
    let mut out = Map::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for dr in 0..pool_size {
                for dc in 0..pool_size {
                    acc += map.get(r * pool_size + dr, c * pool_size + dc);
                }
            }
            out.set(r, c, acc * inv);
        }
    }
    Ok(out)
}

pub fn mean_pool_channels(channels: &IntensityChannels, pool_size: usize) -> Result<IntensityChannels> {
    Ok(IntensityChannels {
        i0: mean_pool(&channels.i0, pool_size)?,
        i45: mean_pool(&channels.i45, pool_size)?,
        i90: mean_pool(&channels.i90, pool_size)?,
        i135: mean_pool(&channels.i135, pool_size)?,
    })
}

pub fn stokes(channels: &IntensityChannels) -> Result<StokesMaps> {
    let (i0, i45, i90, i135) = (&channels.i0, &channels.i45, &channels.i90, &channels.i135);
    if i0.data().is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(i0.same_shape(i45) && i0.same_shape(i90) && i0.same_shape(i135)) {
        return Err(Error::DimensionMismatch("channel shapes differ".into()));
    }
    let n = i0.data().len();
    let mut s0 = Vec::with_capacity(n);
    let mut s1 = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c, d) = (i0.data()[i], i45.data()[i], i90.data()[i], i135.data()[i]);
        s0.push((a + b + c + d) / 2.0);
        s1.push(a - c);
        s2.push(b - d);
    }
    let (h, w) = (i0.height(), i0.width());
    Ok(StokesMaps {
        s0: Map::from_vec(h, w, s0)?,
        s1: Map::from_vec(h, w, s1)?,
        s2: Map::from_vec(h, w, s2)?,
    })
}

/// Degree of polarization `sqrt(s1^2 + s2^2) / s0`, clamped to `[0, 1]`;
/// pixels with `s0 < S0_EPS` report 0.
pub fn dop(stokes: &StokesMaps) -> Map {
    let n = stokes.s0.data().len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let s0 = stokes.s0.data()[i];
        if s0 < S0_EPS {
            out.push(0.0);
        } else {
            let (s1, s2) = (stokes.s1.data()[i], stokes.s2.data()[i]);
            out.push((s1.hypot(s2) / s0).clamp(0.0, 1.0));
        }
    }
    Map::from_vec(stokes.s0.height(), stokes.s0.width(), out).expect("same shape")
}

/// Angle of polarization `atan2(s2, s1) / 2` in degrees, mapped to
/// `(-90, 90]`, with degenerate pixels (`s1 = s2 = 0` or dark) flagged.
///
/// The two-argument arctangent extends the printed single-argument form
/// continuously across the `s1 <= 0` half-plane, the canonical choice in
/// sky polarimetry.
pub fn aop(stokes: &StokesMaps) -> (Map, Vec<bool>) {
    let n = stokes.s0.data().len();
    let mut out = Vec::with_capacity(n);
    let mut degenerate = vec![false; n];
    for i in 0..n {
        let s0 = stokes.s0.data()[i];
        let (s1, s2) = (stokes.s1.data()[i], stokes.s2.data()[i]);
        if (s1 == 0.0 && s2 == 0.0) || s0 < S0_EPS {
            out.push(0.0);
            degenerate[i] = true;
            continue;
        }
        let mut half = s2.atan2(s1).to_degrees() / 2.0;
        if half <= -90.0 {
            half += 180.0;
        }
        out.push(half);
    }
    (
        Map::from_vec(stokes.s0.height(), stokes.s0.width(), out).expect("same shape"),
        degenerate,
    )
}

pub fn polarization(stokes: &StokesMaps) -> PolarizationMaps {
    let dop = dop(stokes);
    let (aop, degenerate) = aop(stokes);
    PolarizationMaps {
        dop,
        aop,
        degenerate,
    }
}

/// Stack the normalized maps into the feature tensor: `s0` scaled by its
/// theoretical maximum of 2, `dop` as-is, `aop` mapped by `(a + 90) / 180`,
/// each mean-pooled by `pool_size`.
pub fn build_feature_tensor(
    stokes: &StokesMaps,
    polarization: &PolarizationMaps,
    pool_size: usize,
) -> Result<FeatureTensor> {
    if !stokes.s0.same_shape(&polarization.dop) {
        return Err(Error::DimensionMismatch(
            "stokes and polarization map shapes differ".into(),
        ));
    }
    let s0 = stokes.s0.map(|v| (v / 2.0).clamp(0.0, 1.0));
    let aop = polarization.aop.map(|a| (a + 90.0) / 180.0);
    Ok(FeatureTensor {
        s0: mean_pool(&s0, pool_size)?,
        dop: mean_pool(&polarization.dop, pool_size)?,
        aop: mean_pool(&aop, pool_size)?,
    })
}

/// Canonical pipeline from a raw mosaic to the feature tensor: demosaic,
/// mean-pool the channels, Stokes, DOP/AOP, normalize and stack.
pub fn features_from_mosaic(mosaic: &MosaicImage, channel_pool: usize) -> Result<FeatureTensor> {
    let channels = mean_pool_channels(&demosaic(mosaic)?, channel_pool)?;
    let stokes_maps = stokes(&channels)?;
    let polar = polarization(&stokes_maps);
    build_feature_tensor(&stokes_maps, &polar, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skysim::mosaic::PolarizerPattern;
    use proptest::prelude::*;

    fn mosaic_from(vals: Vec<u16>, w: usize, h: usize) -> MosaicImage {
        MosaicImage::new(vals, w, h, 12, PolarizerPattern::default()).unwrap()
    }

    fn stokes_of(s0: f64, s1: f64, s2: f64) -> StokesMaps {
        StokesMaps {
            s0: Map::filled(1, 1, s0),
            s1: Map::filled(1, 1, s1),
            s2: Map::filled(1, 1, s2),
        }
    }

    #[test]
    fn demosaic_constant_mosaic() {
        let m = mosaic_from(vec![819; 16], 4, 4);
        let ch = demosaic(&m).unwrap();
        for map in [&ch.i0, &ch.i45, &ch.i90, &ch.i135] {
            assert_eq!(map.height(), 2);
            for &v in map.data() {
                assert!((v - 819.0 / 4095.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn demosaic_single_super_pixel_routes_offsets() {
        // default pattern: (0,0)=90, (0,1)=45, (1,0)=135, (1,1)=0
        let m = mosaic_from(vec![10, 20, 30, 40], 2, 2);
        let ch = demosaic(&m).unwrap();
        assert_eq!(ch.i90.get(0, 0) * 4095.0, 10.0);
        assert_eq!(ch.i45.get(0, 0) * 4095.0, 20.0);
        assert_eq!(ch.i135.get(0, 0) * 4095.0, 30.0);
        assert_eq!(ch.i0.get(0, 0) * 4095.0, 40.0);
    }

    #[test]
    fn mean_pool_identity_and_block_mean() {
        let m = Map::from_vec(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(mean_pool(&m, 1).unwrap(), m);
        let pooled = mean_pool(&m, 2).unwrap();
        assert_eq!(pooled.get(0, 0), 1.5);
        assert!(mean_pool(&m, 0).is_err());
    }

    #[test]
    fn mean_pool_drops_trailing_remainder() {
        let m = Map::from_vec(3, 5, (0..15).map(|v| v as f64).collect()).unwrap();
        let pooled = mean_pool(&m, 2).unwrap();
        assert_eq!((pooled.height(), pooled.width()), (1, 2));
        assert_eq!(pooled.get(0, 0), (0.0 + 1.0 + 5.0 + 6.0) / 4.0);
    }

    #[test]
    fn pooling_shrinks_noise_variance_by_block_area() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let p = 4;
        let (mut raw_var, mut pooled_var) = (0.0, 0.0);
        let mut count = 0.0;
        for _ in 0..1000 {
            let noise: Vec<f64> = (0..256).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let m = Map::from_vec(16, 16, noise).unwrap();
            raw_var += m.data().iter().map(|v| v * v).sum::<f64>() / 256.0;
            let pooled = mean_pool(&m, p).unwrap();
            pooled_var += pooled.data().iter().map(|v| v * v).sum::<f64>() / 16.0;
            count += 1.0;
        }
        let ratio = (raw_var / count) / (pooled_var / count);
        let expected = (p * p) as f64;
        assert!(
            (ratio - expected).abs() < 0.1 * expected,
            "variance ratio {ratio}, expected about {expected}"
        );
    }

    #[test]
    fn stokes_anchors() {
        let ch = IntensityChannels {
            i0: Map::filled(1, 1, 1.0),
            i45: Map::filled(1, 1, 1.0),
            i90: Map::filled(1, 1, 1.0),
            i135: Map::filled(1, 1, 1.0),
        };
        let s = stokes(&ch).unwrap();
        assert_eq!((s.s0.get(0, 0), s.s1.get(0, 0), s.s2.get(0, 0)), (2.0, 0.0, 0.0));

        let ch = IntensityChannels {
            i0: Map::filled(1, 1, 1.0),
            i45: Map::filled(1, 1, 0.5),
            i90: Map::filled(1, 1, 0.0),
            i135: Map::filled(1, 1, 0.5),
        };
        let s = stokes(&ch).unwrap();
        assert_eq!((s.s0.get(0, 0), s.s1.get(0, 0), s.s2.get(0, 0)), (1.0, 1.0, 0.0));

        // direct evaluation with mixed channels
        let ch = IntensityChannels {
            i0: Map::filled(1, 1, 0.75),
            i45: Map::filled(1, 1, 0.5),
            i90: Map::filled(1, 1, 0.25),
            i135: Map::filled(1, 1, 0.5),
        };
        let s = stokes(&ch).unwrap();
        assert_eq!((s.s0.get(0, 0), s.s1.get(0, 0), s.s2.get(0, 0)), (1.0, 0.5, 0.0));
    }

    #[test]
    fn dop_anchors_and_clamp() {
        assert_eq!(dop(&stokes_of(1.0, 0.0, 0.0)).get(0, 0), 0.0);
        assert_eq!(dop(&stokes_of(1.0, 1.0, 0.0)).get(0, 0), 1.0);
        // 3-4-5 triangle
        assert!((dop(&stokes_of(1.0, 0.3, 0.4)).get(0, 0) - 0.5).abs() < 1e-15);
        // noise can push the raw ratio above one; the map is clamped
        assert_eq!(dop(&stokes_of(0.5, 0.6, 0.0)).get(0, 0), 1.0);
        // dark pixel guard
        assert_eq!(dop(&stokes_of(1e-12, 0.5, 0.0)).get(0, 0), 0.0);
    }

    #[test]
    fn aop_quadrants() {
        let (a, d) = aop(&stokes_of(1.0, 1.0, 0.0));
        assert_eq!(a.get(0, 0), 0.0);
        assert!(!d[0]);
        let (a, _) = aop(&stokes_of(1.0, 0.0, 1.0));
        assert_eq!(a.get(0, 0), 45.0);
        // the s1 < 0 branch lands on +90, the open-interval endpoint
        let (a, _) = aop(&stokes_of(1.0, -1.0, 0.0));
        assert_eq!(a.get(0, 0), 90.0);
        let (a, d) = aop(&stokes_of(1.0, 0.0, 0.0));
        assert_eq!(a.get(0, 0), 0.0);
        assert!(d[0]);
    }

    #[test]
    fn feature_tensor_normalization() {
        let s = stokes_of(2.0, 0.0, 0.0);
        let mut p = polarization(&s);
        p.aop = Map::filled(1, 1, 90.0);
        let f = build_feature_tensor(&s, &p, 1).unwrap();
        assert_eq!(f.s0.get(0, 0), 1.0);
        assert_eq!(f.aop.get(0, 0), 1.0);

        let mut p2 = polarization(&s);
        p2.aop = Map::filled(1, 1, -89.9);
        let f2 = build_feature_tensor(&s, &p2, 1).unwrap();
        assert!((f2.aop.get(0, 0) - 0.1 / 180.0).abs() < 1e-12);
        // dop passes through untouched
        p2.dop = Map::filled(1, 1, 0.37);
        let f3 = build_feature_tensor(&s, &p2, 1).unwrap();
        assert_eq!(f3.dop.get(0, 0), 0.37);
    }

    #[test]
    fn flatten_order_is_s0_dop_aop() {
        let f = FeatureTensor {
            s0: Map::filled(1, 2, 0.1),
            dop: Map::filled(1, 2, 0.2),
            aop: Map::filled(1, 2, 0.3),
        };
        assert_eq!(f.flatten(), vec![0.1, 0.1, 0.2, 0.2, 0.3, 0.3]);
    }

    proptest! {
        /// Malus synthesis of the four analyzer intensities followed by
        /// Stokes/DOP/AOP recovers the polarization state (no quantization).
        #[test]
        fn prop_unquantized_round_trip(
            s0_in in 0.1f64..1.0,
            d_in in 0.0f64..1.0,
            a_in in -89.999f64..90.0,
        ) {
            use crate::skysim::mosaic::analyzer_intensity;
            let ch = IntensityChannels {
                i0: Map::filled(1, 1, analyzer_intensity(s0_in, d_in, a_in, 0.0)),
                i45: Map::filled(1, 1, analyzer_intensity(s0_in, d_in, a_in, 45.0)),
                i90: Map::filled(1, 1, analyzer_intensity(s0_in, d_in, a_in, 90.0)),
                i135: Map::filled(1, 1, analyzer_intensity(s0_in, d_in, a_in, 135.0)),
            };
            let s = stokes(&ch).unwrap();
            prop_assert!((s.s0.get(0, 0) - s0_in).abs() < 1e-12);
            let d_rec = dop(&s).get(0, 0);
            prop_assert!((d_rec - d_in).abs() < 1e-12);
            if d_in > 1e-3 {
                let (a, _) = aop(&s);
                let diff = (a.get(0, 0) - a_in).rem_euclid(180.0);
                prop_assert!(diff.min(180.0 - diff) < 1e-10);
            }
        }

        #[test]
        fn prop_mean_pool_is_linear(
            alpha in -2.0f64..2.0,
            beta in -2.0f64..2.0,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Map::from_vec(4, 4, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let y = Map::from_vec(4, 4, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let combo = Map::from_vec(
                4, 4,
                x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect(),
            ).unwrap();
            let lhs = mean_pool(&combo, 2).unwrap();
            let px = mean_pool(&x, 2).unwrap();
            let py = mean_pool(&y, 2).unwrap();
            for i in 0..lhs.data().len() {
                prop_assert!((lhs.data()[i] - (alpha * px.data()[i] + beta * py.data()[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn prop_dop_in_unit_interval_aop_in_half_open(
            s0_in in 0.0f64..2.0,
            s1_in in -1.5f64..1.5,
            s2_in in -1.5f64..1.5,
        ) {
            let s = stokes_of(s0_in, s1_in, s2_in);
            let p = polarization(&s);
            let d = p.dop.get(0, 0);
            prop_assert!((0.0..=1.0).contains(&d));
            let a = p.aop.get(0, 0);
            prop_assert!(a > -90.0 && a <= 90.0);
        }
    }
}
