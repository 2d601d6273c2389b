//! Synthetic skylight polarization: Rayleigh single-scattering fields
//! rendered through a pixel-polarizer mosaic camera, plus seeded dataset
//! generation and the on-disk sample format.

pub mod dataset;
pub mod field;
pub mod geometry;
pub mod mosaic;
pub mod pgm;

pub use dataset::{
    generate_dataset, generate_sample, load_dataset, load_manifest, load_sample,
    sample_basename, DatasetConfig, SampleMeta, SunAzimuthSampler, MANIFEST_NAME,
};
pub use field::{rayleigh_aop, rayleigh_dop, synthesize_field, wrap_axis_deg, SkyStokesField};
pub use geometry::{scattering_angle, view_direction, CameraRig, PixelView, SunPosition};
pub use mosaic::{
    analyzer_intensity, full_scale, synthesize_mosaic, MosaicImage, PolarizerPattern,
};
