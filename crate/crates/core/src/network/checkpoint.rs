//! Versioned binary checkpoint: little-endian header carrying the network
//! and encoding configuration, followed by contiguous 64-bit float weight
//! blocks in the fixed layer order (weights row-major, then biases).

use crate::encoding::{decode, EncodingScheme, EncodingSpec, OrientationDeg};
use crate::error::{Error, Result};
use crate::network::{forward, ActivationKind, Layer, NetworkConfig, NetworkParams, LAYER_COUNT};
use crate::polarimg::features_from_mosaic;
use crate::skysim::mosaic::MosaicImage;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"SKPC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters bundled with the configuration they were trained
/// under; what a checkpoint file stores.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: NetworkParams,
    pub config: NetworkConfig,
    pub spec: EncodingSpec,
}

impl Model {
    /// Full inference pipeline: demosaic, mean-pool the channels down to
    /// the feature grid, Stokes, DOP/AOP, feature tensor, forward pass,
    /// decode.
    pub fn predict(&self, mosaic: &MosaicImage) -> Result<OrientationDeg> {
        let features = self.features_for(mosaic)?;
        let code = forward(&self.params, &self.config, &features)?;
        decode(&code, &self.spec)
    }

    /// Feature extraction matching this model's grid; the channel pool
    /// size is derived from the mosaic dimensions.
    pub fn features_for(&self, mosaic: &MosaicImage) -> Result<Vec<f64>> {
        let pool = channel_pool_for(
            mosaic.height(),
            mosaic.width(),
            self.config.grid_h,
            self.config.grid_w,
        )?;
        Ok(features_from_mosaic(mosaic, pool)?.flatten())
    }
}

/// Channel-stage pool size turning an `h x w` mosaic into the feature grid.
pub fn channel_pool_for(
    mosaic_h: usize,
    mosaic_w: usize,
    grid_h: usize,
    grid_w: usize,
) -> Result<usize> {
    let (ch_h, ch_w) = (mosaic_h / 2, mosaic_w / 2);
    if grid_h == 0 || grid_w == 0 || ch_h % grid_h != 0 || ch_w % grid_w != 0 {
        return Err(Error::DimensionMismatch(format!(
            "channel maps {ch_h}x{ch_w} cannot pool to grid {grid_h}x{grid_w}"
        )));
    }
    let (ph, pw) = (ch_h / grid_h, ch_w / grid_w);
    if ph != pw {
        return Err(Error::DimensionMismatch(format!(
            "non-square pooling {ph}x{pw} from {ch_h}x{ch_w} to {grid_h}x{grid_w}"
        )));
    }
    Ok(ph)
}

fn scheme_code(scheme: EncodingScheme) -> u8 {
    match scheme {
        EncodingScheme::Raw360 => 0,
        EncodingScheme::Norm01 => 1,
        EncodingScheme::OneHot => 2,
        EncodingScheme::Trig => 3,
        EncodingScheme::Exp => 4,
    }
}

fn scheme_from_code(code: u8) -> Result<EncodingScheme> {
    Ok(match code {
        0 => EncodingScheme::Raw360,
        1 => EncodingScheme::Norm01,
        2 => EncodingScheme::OneHot,
        3 => EncodingScheme::Trig,
        4 => EncodingScheme::Exp,
        other => {
            return Err(Error::CheckpointCorrupt(format!(
                "unknown scheme code {other}"
            )))
        }
    })
}

pub fn save_checkpoint(
    path: &Path,
    params: &NetworkParams,
    config: &NetworkConfig,
    spec: &EncodingSpec,
) -> Result<()> {
    let dims = config.layer_dims();
    for (layer, (rows, cols)) in params.layers.iter().zip(dims) {
        if layer.rows != rows || layer.cols != cols {
            return Err(Error::CheckpointShape(format!(
                "params layer {}x{} does not match config {rows}x{cols}",
                layer.rows, layer.cols
            )));
        }
    }
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(scheme_code(spec.scheme));
    buf.extend_from_slice(&spec.j.to_le_bytes());
    buf.extend_from_slice(&spec.m.to_le_bytes());
    for v in [
        config.grid_h,
        config.grid_w,
        config.branch_hidden1,
        config.branch_hidden2,
        config.fusion_hidden,
        config.output_size,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    buf.push(match config.output_activation {
        ActivationKind::Sigmoid => 0,
        ActivationKind::Linear => 1,
    });
    for layer in &params.layers {
        for w in layer.weights.iter().chain(&layer.bias) {
            buf.extend_from_slice(&w.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CheckpointCorrupt(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(Error::CheckpointCorrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let scheme = scheme_from_code(r.u8()?)?;
    let j = r.f64()?;
    let m = r.f64()?;
    let spec = EncodingSpec::new(scheme, j, m)
        .map_err(|e| Error::CheckpointCorrupt(format!("bad encoding spec: {e}")))?;
    let grid_h = r.u32()? as usize;
    let grid_w = r.u32()? as usize;
    let branch_hidden1 = r.u32()? as usize;
    let branch_hidden2 = r.u32()? as usize;
    let fusion_hidden = r.u32()? as usize;
    let output_size = r.u32()? as usize;
    let output_activation = match r.u8()? {
        0 => ActivationKind::Sigmoid,
        1 => ActivationKind::Linear,
        other => {
            return Err(Error::CheckpointCorrupt(format!(
                "unknown activation code {other}"
            )))
        }
    };
    let config = NetworkConfig {
        grid_h,
        grid_w,
        branch_hidden1,
        branch_hidden2,
        fusion_hidden,
        output_size,
        output_activation,
    };
    config
        .validate()
        .map_err(|e| Error::CheckpointCorrupt(format!("bad config: {e}")))?;
    if !config.matches_spec(&spec) {
        return Err(Error::CheckpointShape(format!(
            "output size {} does not match encoding length {}",
            config.output_size,
            spec.code_len()
        )));
    }
    let mut layers = Vec::with_capacity(LAYER_COUNT);
    for (rows, cols) in config.layer_dims() {
        let mut layer = Layer::zeros(rows, cols);
        for w in layer.weights.iter_mut() {
            *w = r.f64()?;
        }
        for b in layer.bias.iter_mut() {
            *b = r.f64()?;
        }
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Model {
        params: NetworkParams { layers },
        config,
        spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_params;

    fn model() -> Model {
        let spec = EncodingSpec::new(EncodingScheme::Exp, 10.0, 0.98).unwrap();
        let config = NetworkConfig {
            grid_h: 2,
            grid_w: 2,
            branch_hidden1: 4,
            branch_hidden2: 3,
            fusion_hidden: 5,
            output_size: 36,
            output_activation: ActivationKind::Sigmoid,
        };
        Model {
            params: init_params(&config, 9).unwrap(),
            config,
            spec,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&path, &m.params, &m.config, &m.spec).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, m);
        // forward outputs are therefore identical
        let f: Vec<f64> = (0..m.config.feature_len()).map(|i| i as f64 / 20.0).collect();
        let a = forward(&m.params, &m.config, &f).unwrap();
        let b = forward(&loaded.params, &loaded.config, &f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn save_twice_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        let m = model();
        save_checkpoint(&p1, &m.params, &m.config, &m.spec).unwrap();
        save_checkpoint(&p2, &m.params, &m.config, &m.spec).unwrap();
        assert_eq!(fs::read(p1).unwrap(), fs::read(p2).unwrap());
    }

    #[test]
    fn truncated_file_reports_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&path, &m.params, &m.config, &m.spec).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointCorrupt(_))
        ));
    }

    #[test]
    fn version_mismatch_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&path, &m.params, &m.config, &m.spec).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes[4] = 99;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointVersion { found: 99, .. })
        ));
    }

    #[test]
    fn bad_magic_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::CheckpointCorrupt(_))
        ));
    }

    #[test]
    fn channel_pool_derivation() {
        assert_eq!(channel_pool_for(64, 64, 8, 8).unwrap(), 4);
        assert_eq!(channel_pool_for(64, 64, 32, 32).unwrap(), 1);
        assert!(channel_pool_for(64, 64, 7, 8).is_err());
        assert!(channel_pool_for(64, 32, 8, 8).is_err());
    }
}
