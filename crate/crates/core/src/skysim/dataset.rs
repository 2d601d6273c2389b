//! Labeled dataset generation: seeded sampling of headings and sun
//! positions, rendering through the mosaic, and the on-disk sample format
//! (16-bit PGM + JSON sidecar + line-delimited manifest).
//!
//! Reproducibility contract: every sample owns two ChaCha streams derived
//! from `(seed, index)` — one for label sampling, one for sensor noise — so
//! samples can be generated in any order or regenerated in isolation,
//! bit-for-bit.

use crate::error::{Error, Result};
use crate::skysim::field::synthesize_field;
use crate::skysim::geometry::{CameraRig, SunPosition};
use crate::skysim::mosaic::{full_scale, synthesize_mosaic, MosaicImage, PolarizerPattern};
use crate::skysim::pgm::{read_pgm, write_pgm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

pub const MANIFEST_NAME: &str = "manifest.txt";

/// How the sun azimuth is drawn for each sample.
///
/// The default pins it to one value: with azimuth free and independent of
/// the heading, an image determines only the difference between sun azimuth
/// and heading, and no model could recover the heading itself. A fixed
/// azimuth plays the role of the known solar geometry shared by a real
/// dataset's train and test halves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SunAzimuthSampler {
    Fixed(f64),
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub dop_max: f64,
    pub noise_sigma: f64,
    pub bit_depth: u8,
    pub pattern: [f64; 4],
    /// Headings are drawn on this grid (degrees) when set, continuous when
    /// `None`. Defaults to the 1-degree desk-scale encoding grid.
    pub heading_grid_deg: Option<f64>,
    pub sun_azimuth: SunAzimuthSampler,
    pub sun_alt_min_deg: f64,
    pub sun_alt_max_deg: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 0,
            width: 64,
            height: 64,
            fov_deg: 90.0,
            dop_max: 0.8,
            noise_sigma: 0.005,
            bit_depth: 12,
            pattern: PolarizerPattern::default().flat(),
            heading_grid_deg: Some(1.0),
            sun_azimuth: SunAzimuthSampler::Fixed(180.0),
            sun_alt_min_deg: 0.0,
            sun_alt_max_deg: 60.0,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        // constructing throwaway values runs the underlying range checks
        CameraRig::new(0.0, self.width, self.height, self.fov_deg, self.dop_max)?;
        SunPosition::new(0.0, self.sun_alt_min_deg)?;
        SunPosition::new(0.0, self.sun_alt_max_deg)?;
        PolarizerPattern::from_flat(self.pattern)?;
        if self.sun_alt_min_deg > self.sun_alt_max_deg {
            return Err(Error::InvalidParameter(format!(
                "sun altitude range is empty: [{}, {}]",
                self.sun_alt_min_deg, self.sun_alt_max_deg
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if let Some(g) = self.heading_grid_deg {
            if !(g > 0.0) || (360.0 / g).round() < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "heading grid must be positive and divide 360, got {g}"
                )));
            }
        }
        if let SunAzimuthSampler::Fixed(az) = self.sun_azimuth {
            if !az.is_finite() {
                return Err(Error::InvalidParameter("fixed sun azimuth must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Everything needed to regenerate one sample bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub index: u64,
    pub heading_deg: f64,
    pub sun_azimuth_deg: f64,
    pub sun_altitude_deg: f64,
    pub dop_max: f64,
    pub noise_sigma: f64,
    pub rng_seed: u64,
    pub bit_depth: u8,
    pub pattern: [f64; 4],
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

impl SampleMeta {
    pub fn sun(&self) -> Result<SunPosition> {
        SunPosition::new(self.sun_azimuth_deg, self.sun_altitude_deg)
    }

    pub fn rig(&self) -> Result<CameraRig> {
        CameraRig::new(
            self.heading_deg,
            self.width,
            self.height,
            self.fov_deg,
            self.dop_max,
        )
    }

    pub fn polarizer_pattern(&self) -> Result<PolarizerPattern> {
        PolarizerPattern::from_flat(self.pattern)
    }

    /// Re-render the mosaic this metadata describes, reproducing the
    /// original noise draws from `(rng_seed, index)`.
    pub fn regenerate(&self) -> Result<MosaicImage> {
        let field = synthesize_field(&self.rig()?, &self.sun()?);
        let mut rng = noise_rng(self.rng_seed, self.index);
        synthesize_mosaic(
            &field,
            self.polarizer_pattern()?,
            self.noise_sigma,
            self.bit_depth,
            &mut rng,
        )
    }
}

fn sampler_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index);
    rng
}

fn noise_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index + 1);
    rng
}

/// Draw the labels and render one sample.
pub fn generate_sample(config: &DatasetConfig, index: u64) -> Result<(MosaicImage, SampleMeta)> {
    let mut rng = sampler_rng(config.seed, index);
    let heading_deg = match config.heading_grid_deg {
        Some(g) => {
            let count = (360.0 / g).round() as u64;
            rng.gen_range(0..count) as f64 * g
        }
        None => rng.gen_range(0.0..360.0),
    };
    let sun_azimuth_deg = match config.sun_azimuth {
        SunAzimuthSampler::Fixed(az) => az,
        SunAzimuthSampler::Uniform => rng.gen_range(0.0..360.0),
    };
    let sun_altitude_deg = if config.sun_alt_min_deg < config.sun_alt_max_deg {
        rng.gen_range(config.sun_alt_min_deg..config.sun_alt_max_deg)
    } else {
        config.sun_alt_min_deg
    };
    let meta = SampleMeta {
        index,
        heading_deg,
        sun_azimuth_deg,
        sun_altitude_deg,
        dop_max: config.dop_max,
        noise_sigma: config.noise_sigma,
        rng_seed: config.seed,
        bit_depth: config.bit_depth,
        pattern: config.pattern,
        width: config.width,
        height: config.height,
        fov_deg: config.fov_deg,
    };
    let mosaic = meta.regenerate()?;
    Ok((mosaic, meta))
}

pub fn sample_basename(index: u64) -> String {
    format!("sample_{index:06}")
}

/// Generate `config.count` samples into `out_dir`, one PGM + JSON sidecar
/// per sample plus a line-delimited manifest of basenames. On failure every
/// file written so far is removed.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<Vec<String>> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| -> Result<Vec<String>> {
        let mut names = Vec::with_capacity(config.count);
        for index in 0..config.count as u64 {
            let (mosaic, meta) = generate_sample(config, index)?;
            let base = sample_basename(index);
            let pgm_path = out_dir.join(format!("{base}.pgm"));
            write_pgm(
                &pgm_path,
                mosaic.width(),
                mosaic.height(),
                mosaic.full_scale(),
                mosaic.pixels(),
            )?;
            written.push(pgm_path);
            let json_path = out_dir.join(format!("{base}.json"));
            fs::write(&json_path, serde_json::to_string_pretty(&meta)?)?;
            written.push(json_path);
            names.push(base);
        }
        let manifest_path = out_dir.join(MANIFEST_NAME);
        let mut manifest = names.join("\n");
        if !manifest.is_empty() {
            manifest.push('\n');
        }
        fs::write(&manifest_path, manifest)?;
        written.push(manifest_path);
        Ok(names)
    })();
    if result.is_err() {
        for path in &written {
            let _ = fs::remove_file(path);
        }
    }
    result
}

pub fn load_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn load_sample(dir: &Path, basename: &str) -> Result<(MosaicImage, SampleMeta)> {
    let json_path = dir.join(format!("{basename}.json"));
    let meta: SampleMeta = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    let pgm_path = dir.join(format!("{basename}.pgm"));
    let img = read_pgm(&pgm_path)?;
    if img.width != meta.width || img.height != meta.height {
        return Err(Error::MalformedFile {
            path: pgm_path.display().to_string(),
            reason: format!(
                "PGM is {}x{} but sidecar says {}x{}",
                img.width, img.height, meta.width, meta.height
            ),
        });
    }
    if img.maxval != full_scale(meta.bit_depth) {
        return Err(Error::MalformedFile {
            path: pgm_path.display().to_string(),
            reason: format!(
                "PGM maxval {} does not match bit depth {}",
                img.maxval, meta.bit_depth
            ),
        });
    }
    let mosaic = MosaicImage::new(
        img.pixels,
        img.width,
        img.height,
        meta.bit_depth,
        meta.polarizer_pattern()?,
    )?;
    Ok((mosaic, meta))
}

pub fn load_dataset(dir: &Path) -> Result<Vec<(MosaicImage, SampleMeta)>> {
    load_manifest(dir)?
        .iter()
        .map(|base| load_sample(dir, base))
        .collect()
}
