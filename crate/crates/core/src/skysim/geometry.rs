//! Camera and sky geometry: east-north-up direction vectors, the
//! zenith-centered equidistant fisheye projection, and scattering angles.
//!
//! Conventions. Azimuths are degrees clockwise from North; the world frame is
//! east-north-up, so azimuth `A` at altitude `h` maps to the unit vector
//! `(cos h sin A, cos h cos A, sin h)`. In the image, +x is right, +y is down,
//! and when the rig heading is 0 the "up" direction of the image points North.
//! Pixel centers sit at integer (row, col); the optical center is the image
//! center `((h-1)/2, (w-1)/2)` and the sky disc radius is `(min(w,h)-1)/2`
//! pixels, so the disc boundary reaches zenith angle `fov`.

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Sun direction: azimuth clockwise from North, altitude above the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SunPosition {
    azimuth_deg: f64,
    altitude_deg: f64,
}

impl SunPosition {
    /// Azimuth is normalized to `[0, 360)`; altitude outside `[-90, 90]` is
    /// rejected rather than clamped.
    pub fn new(azimuth_deg: f64, altitude_deg: f64) -> Result<Self> {
        if !altitude_deg.is_finite() || !(-90.0..=90.0).contains(&altitude_deg) {
            return Err(Error::InvalidParameter(format!(
                "sun altitude must lie in [-90, 90], got {altitude_deg}"
            )));
        }
        if !azimuth_deg.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sun azimuth must be finite, got {azimuth_deg}"
            )));
        }
        Ok(Self {
            azimuth_deg: normalize_deg(azimuth_deg),
            altitude_deg,
        })
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn altitude_deg(&self) -> f64 {
        self.altitude_deg
    }

    /// Unit vector toward the sun in the east-north-up frame.
    pub fn direction(&self) -> Vec3 {
        let az = self.azimuth_deg.to_radians();
        let alt = self.altitude_deg.to_radians();
        [alt.cos() * az.sin(), alt.cos() * az.cos(), alt.sin()]
    }
}

/// Camera pose and optics: the heading to be recovered plus the sensor and
/// fisheye parameters used to render it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    heading_deg: f64,
    width: usize,
    height: usize,
    fov_deg: f64,
    dop_max: f64,
}

impl CameraRig {
    pub fn new(
        heading_deg: f64,
        width: usize,
        height: usize,
        fov_deg: f64,
        dop_max: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "mosaic dimensions must be positive and even, got {width}x{height}"
            )));
        }
        if !(fov_deg > 0.0 && fov_deg <= 180.0) {
            return Err(Error::InvalidParameter(format!(
                "fov must lie in (0, 180], got {fov_deg}"
            )));
        }
        if !(dop_max > 0.0 && dop_max <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "dop_max must lie in (0, 1], got {dop_max}"
            )));
        }
        if !heading_deg.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "heading must be finite, got {heading_deg}"
            )));
        }
        Ok(Self {
            heading_deg: normalize_deg(heading_deg),
            width,
            height,
            fov_deg,
            dop_max,
        })
    }

    pub fn heading_deg(&self) -> f64 {
        self.heading_deg
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn fov_deg(&self) -> f64 {
        self.fov_deg
    }

    pub fn dop_max(&self) -> f64 {
        self.dop_max
    }

    /// Row/col of the optical center in pixel-center coordinates.
    pub fn center(&self) -> (f64, f64) {
        ((self.height as f64 - 1.0) / 2.0, (self.width as f64 - 1.0) / 2.0)
    }

    /// Radius of the sky disc in pixels.
    pub fn disc_radius(&self) -> f64 {
        (self.width.min(self.height) as f64 - 1.0) / 2.0
    }

    pub fn with_heading(&self, heading_deg: f64) -> Result<Self> {
        Self::new(heading_deg, self.width, self.height, self.fov_deg, self.dop_max)
    }
}

/// Viewing geometry of one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelView {
    /// Unit view direction in the east-north-up sky frame.
    pub direction: Vec3,
    /// Zenith angle of the view direction, degrees.
    pub zenith_deg: f64,
    /// Sky azimuth of the view direction, degrees clockwise from North.
    pub azimuth_deg: f64,
    /// Pixel polar angle in the image, degrees clockwise from image-up.
    pub polar_deg: f64,
    /// False when the pixel lies beyond the fisheye sky disc.
    pub inside_sky: bool,
}

/// Project a pixel through the equidistant fisheye: zenith angle grows
/// linearly with radial distance, reaching `fov` at the disc boundary, and
/// the view azimuth is the pixel polar angle rotated by the rig heading.
///
/// Coordinates are pixel centers and may be fractional.
pub fn view_direction(row: f64, col: f64, rig: &CameraRig) -> PixelView {
    let (cy, cx) = rig.center();
    let dx = col - cx;
    let dy = row - cy;
    let r = dx.hypot(dy);
    let r_max = rig.disc_radius();
    let zenith_deg = rig.fov_deg() * r / r_max;
    let polar_deg = dx.atan2(-dy).to_degrees();
    let azimuth_deg = polar_deg + rig.heading_deg();
    let zen = zenith_deg.to_radians();
    let az = azimuth_deg.to_radians();
    PixelView {
        direction: [zen.sin() * az.sin(), zen.sin() * az.cos(), zen.cos()],
        zenith_deg,
        azimuth_deg,
        polar_deg,
        inside_sky: r <= r_max,
    }
}

/// Angle between the view direction and the sun, degrees in `[0, 180]`.
pub fn scattering_angle(view: &Vec3, sun: &SunPosition) -> f64 {
    dot(view, &sun.direction()).clamp(-1.0, 1.0).acos().to_degrees()
}

pub(crate) fn normalize_deg(deg: f64) -> f64 {
    let mut v = deg.rem_euclid(360.0);
    if v >= 360.0 {
        v -= 360.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig() -> CameraRig {
        CameraRig::new(0.0, 64, 64, 90.0, 0.8).unwrap()
    }

    #[test]
    fn rig_rejects_odd_dimensions() {
        assert!(CameraRig::new(0.0, 63, 64, 90.0, 0.8).is_err());
        assert!(CameraRig::new(0.0, 64, 2, 90.0, 0.8).is_ok());
    }

    #[test]
    fn sun_rejects_out_of_range_altitude() {
        assert!(SunPosition::new(10.0, 90.5).is_err());
        assert!(SunPosition::new(10.0, -91.0).is_err());
        assert_eq!(SunPosition::new(-90.0, 0.0).unwrap().azimuth_deg(), 270.0);
    }

    #[test]
    fn center_pixel_views_zenith() {
        let r = rig();
        let (cy, cx) = r.center();
        let v = view_direction(cy, cx, &r);
        assert!((v.direction[0]).abs() < 1e-12);
        assert!((v.direction[1]).abs() < 1e-12);
        assert!((v.direction[2] - 1.0).abs() < 1e-12);
        assert!(v.inside_sky);
    }

    #[test]
    fn disc_boundary_views_horizon() {
        let r = rig();
        let (cy, cx) = r.center();
        let v = view_direction(cy, cx + r.disc_radius(), &r);
        assert!((v.zenith_deg - 90.0).abs() < 1e-12);
        assert!(v.direction[2].abs() < 1e-12);
        assert!(v.inside_sky);
        let outside = view_direction(cy, cx + r.disc_radius() + 0.6, &r);
        assert!(!outside.inside_sky);
    }

    #[test]
    fn heading_shifts_view_azimuth_exactly() {
        let base = rig();
        let rotated = base.with_heading(37.25).unwrap();
        let a = view_direction(10.0, 50.0, &base);
        let b = view_direction(10.0, 50.0, &rotated);
        assert!((b.azimuth_deg - a.azimuth_deg - 37.25).abs() < 1e-12);
        assert_eq!(a.zenith_deg, b.zenith_deg);
    }

    #[test]
    fn scattering_angle_anchors() {
        let sun = SunPosition::new(0.0, 30.0).unwrap();
        let s = sun.direction();
        assert!(scattering_angle(&s, &sun).abs() < 1e-6);
        let anti = [-s[0], -s[1], -s[2]];
        assert!((scattering_angle(&anti, &sun) - 180.0).abs() < 1e-6);
        let perp = [s[1], -s[0], 0.0];
        let n = norm(&perp);
        let perp = [perp[0] / n, perp[1] / n, perp[2] / n];
        assert!((scattering_angle(&perp, &sun) - 90.0).abs() < 1e-9);
    }
}
