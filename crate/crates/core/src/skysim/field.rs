//! Single-scattering Rayleigh sky: degree of polarization from the
//! scattering angle, E-vector direction perpendicular to the scattering
//! plane projected into the image frame, and whole-field synthesis.


use crate::map::Map;
use crate::skysim::geometry::{cross, dot, norm, scattering_angle, view_direction, CameraRig, PixelView, SunPosition, Vec3};

/// Rayleigh degree of polarization `dop_max * sin^2(g) / (1 + cos^2(g))`.
pub fn rayleigh_dop(gamma_deg: f64, dop_max: f64) -> f64 {
    let g = gamma_deg.to_radians();
    let c = g.cos();
    let s = g.sin();
    dop_max * s * s / (1.0 + c * c)
}

/// Angle of polarization at a pixel, degrees in `(-90, 90]` in the image
/// frame, plus a degeneracy flag for views parallel or antiparallel to the
/// sun where the scattering plane is undefined.
///
/// The E-vector is perpendicular to the plane spanned by the view and sun
/// directions. Its components along the local meridian (up-sky) and azimuth
/// (tangent) directions map to the radial and tangential image directions of
/// the equidistant fisheye, which fixes the image-frame angle. Angles are
/// measured counterclockwise from the image +x axis with y up (the same
/// convention as the analyzer angles of the polarizer mosaic).
pub fn rayleigh_aop(view: &PixelView, sun: &SunPosition) -> (f64, bool) {
    let e = cross(&view.direction, &sun.direction());
    let n = norm(&e);
    if n < 1e-12 {
        return (0.0, true);
    }
    let e = [e[0] / n, e[1] / n, e[2] / n];

    let zen = view.zenith_deg.to_radians();
    let az = view.azimuth_deg.to_radians();
    // Local sky basis at the view direction: e_zen points away from zenith
    // along the meridian, e_az along increasing azimuth. Both are transverse
    // to the view direction, as is the E-vector.
    let e_zen: Vec3 = [zen.cos() * az.sin(), zen.cos() * az.cos(), -zen.sin()];
    let e_az: Vec3 = [az.cos(), -az.sin(), 0.0];
    let a = dot(&e, &e_zen);
    let b = dot(&e, &e_az);

    // e_zen maps to the radial image direction, e_az to the tangential one.
    let psi = view.polar_deg.to_radians();
    let ix = a * psi.sin() + b * psi.cos();
    let iy_down = -a * psi.cos() + b * psi.sin();
    let alpha = (-iy_down).atan2(ix).to_degrees();
    (wrap_axis_deg(alpha), false)
}

/// Normalize an axial angle (period 180) into `(-90, 90]`.
pub fn wrap_axis_deg(deg: f64) -> f64 {
    let mut v = deg.rem_euclid(180.0);
    if v > 90.0 {
        v -= 180.0;
    }
    if v <= -90.0 {
        v += 180.0;
    }
    v
}

/// Ground-truth per-pixel polarization state of the synthetic sky.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyStokesField {
    /// Total intensity, peak-normalized to `[0, 1]`.
    pub s0: Map,
    /// Degree of polarization in `[0, dop_max]`.
    pub dop: Map,
    /// E-vector angle in image-frame degrees, `(-90, 90]`.
    pub aop: Map,
    /// Per-pixel flag: AOP undefined (view parallel to sun) or outside disc.
    pub degenerate: Vec<bool>,
}

impl SkyStokesField {
    pub fn height(&self) -> usize {
        self.s0.height()
    }

    pub fn width(&self) -> usize {
        self.s0.width()
    }
}

/// Render the Rayleigh sky for a rig pose: per-pixel `(s0, dop, aop)` with
/// intensity `(1 + cos^2(g)) / 2` and pixels outside the sky disc zeroed.
pub fn synthesize_field(rig: &CameraRig, sun: &SunPosition) -> SkyStokesField {
    let (h, w) = (rig.height(), rig.width());
    let mut s0 = Map::zeros(h, w);
    let mut dop = Map::zeros(h, w);
    let mut aop = Map::zeros(h, w);
    let mut degenerate = vec![false; h * w];
    for row in 0..h {
        for col in 0..w {
            let view = view_direction(row as f64, col as f64, rig);
            if !view.inside_sky {
                degenerate[row * w + col] = true;
                continue;
            }
            let gamma = scattering_angle(&view.direction, sun);
            let c = gamma.to_radians().cos();
            s0.set(row, col, (1.0 + c * c) / 2.0);
            dop.set(row, col, rayleigh_dop(gamma, rig.dop_max()));
            let (alpha, degen) = rayleigh_aop(&view, sun);
            aop.set(row, col, alpha);
            degenerate[row * w + col] = degen;
        }
    }
    SkyStokesField {
        s0,
        dop,
        aop,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skysim::geometry::view_direction;

    fn rig(heading: f64) -> CameraRig {
        CameraRig::new(heading, 64, 64, 90.0, 0.8).unwrap()
    }

    /// Distance between two axial angles (period 180).
    fn axis_dist(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(180.0);
        d.min(180.0 - d)
    }

    #[test]
    fn rayleigh_dop_anchors() {
        assert_eq!(rayleigh_dop(0.0, 1.0), 0.0);
        assert!((rayleigh_dop(90.0, 1.0) - 1.0).abs() < 1e-15);
        // direct evaluation of the law at 45 degrees, dop_max 0.8
        assert!((rayleigh_dop(45.0, 0.8) - 0.8 * 0.5 / 1.5).abs() < 1e-15);
    }

    #[test]
    fn aop_tangential_under_zenith_sun() {
        let r = rig(0.0);
        let sun = SunPosition::new(0.0, 90.0).unwrap();
        for (row, col) in [(3.0, 40.0), (55.0, 10.0), (31.5, 60.0)] {
            let view = view_direction(row, col, &r);
            let (alpha, degen) = rayleigh_aop(&view, &sun);
            assert!(!degen);
            // tangential axis = polar angle rotated a quarter turn from radial;
            // radial image axis in y-up angle terms is 90 - polar.
            let radial_axis = wrap_axis_deg(90.0 - view.polar_deg);
            assert!(
                (axis_dist(alpha, radial_axis) - 90.0).abs() < 1e-9,
                "alpha {alpha} not perpendicular to radial {radial_axis}"
            );
        }
    }

    #[test]
    fn aop_at_zenith_perpendicular_to_solar_azimuth() {
        for heading in [0.0, 77.0, 200.0] {
            let r = rig(heading);
            let (cy, cx) = r.center();
            let sun = SunPosition::new(132.0, 25.0).unwrap();
            let view = view_direction(cy, cx, &r);
            let (alpha, degen) = rayleigh_aop(&view, &sun);
            assert!(!degen);
            // solar azimuth appears in the image at polar angle az - heading;
            // its y-up axis angle is 90 - (az - heading).
            let sun_axis = wrap_axis_deg(90.0 - (132.0 - heading));
            assert!(
                (axis_dist(alpha, sun_axis) - 90.0).abs() < 1e-9,
                "heading {heading}: alpha {alpha} vs sun axis {sun_axis}"
            );
        }
    }

    #[test]
    fn aop_degenerate_toward_sun() {
        let r = rig(0.0);
        let sun = SunPosition::new(0.0, 90.0).unwrap();
        let (cy, cx) = r.center();
        let view = view_direction(cy, cx, &r);
        let (alpha, degen) = rayleigh_aop(&view, &sun);
        assert_eq!(alpha, 0.0);
        assert!(degen);
    }

    #[test]
    fn heading_rotates_aop_map_mod_180() {
        let sun = SunPosition::new(50.0, 20.0).unwrap();
        let base = synthesize_field(&rig(10.0), &sun);
        let turned = synthesize_field(&rig(10.0 + 90.0), &sun);
        let w = 64;
        // field(h+90) at p equals field(h) at p rotated 90 degrees clockwise,
        // with aop values shifted by the same rotation.
        for row in 0..w {
            for col in 0..w {
                let (r2, c2) = (col, w - 1 - row);
                let expect_s0 = base.s0.get(r2, c2);
                assert!((turned.s0.get(row, col) - expect_s0).abs() < 1e-12);
                if base.degenerate[r2 * w + c2] || turned.degenerate[row * w + col] {
                    continue;
                }
                let expect_aop = wrap_axis_deg(base.aop.get(r2, c2) + 90.0);
                assert!(
                    axis_dist(turned.aop.get(row, col), expect_aop) < 1e-9,
                    "({row},{col})"
                );
            }
        }
    }

    #[test]
    fn zenith_sun_field_is_heading_invariant() {
        let sun = SunPosition::new(0.0, 90.0).unwrap();
        let a = synthesize_field(&rig(0.0), &sun);
        let b = synthesize_field(&rig(123.4), &sun);
        for i in 0..a.s0.data().len() {
            assert!((a.s0.data()[i] - b.s0.data()[i]).abs() < 1e-12);
            assert!((a.dop.data()[i] - b.dop.data()[i]).abs() < 1e-12);
            if !a.degenerate[i] && !b.degenerate[i] {
                assert!(axis_dist(a.aop.data()[i], b.aop.data()[i]) < 1e-9);
            }
        }
    }

    #[test]
    fn horizon_sun_makes_opposite_headings_identical() {
        let sun = SunPosition::new(203.0, 0.0).unwrap();
        let a = synthesize_field(&rig(41.7), &sun);
        let b = synthesize_field(&rig(41.7 + 180.0), &sun);
        let mut worst: f64 = 0.0;
        for i in 0..a.dop.data().len() {
            worst = worst.max((a.dop.data()[i] - b.dop.data()[i]).abs());
            if !a.degenerate[i] && !b.degenerate[i] {
                worst = worst.max(axis_dist(a.aop.data()[i], b.aop.data()[i]));
            }
        }
        assert!(worst < 1e-9, "max deviation {worst}");
    }

    #[test]
    fn dop_reaches_dop_max_on_quadrature_circle() {
        // sun at zenith: gamma = zenith angle, so the disc boundary (90 deg)
        // attains the Rayleigh maximum exactly.
        let r = rig(0.0);
        let sun = SunPosition::new(0.0, 90.0).unwrap();
        let field = synthesize_field(&r, &sun);
        let max = field.dop.max();
        assert!(max <= 0.8 + 1e-12);
        // boundary pixels are within half a pixel of the disc edge
        assert!(max > 0.79, "max dop {max}");
        let t = synthesize_field(&rig(0.0), &SunPosition::new(10.0, 45.0).unwrap());
        assert!(t.dop.max() <= 0.8 + 1e-12);
        assert!(t.dop.min() >= 0.0);
    }
}
