//! End-to-end skylight-polarization orientation determination: a Rayleigh
//! single-scattering sky simulator with a pixel-polarizer mosaic camera,
//! the Stokes/DOP/AOP image-processing layers, five orientation output
//! encodings, a from-scratch trainable network with analytic
//! backpropagation, and the experiment harness that compares them.

pub mod encoding;
pub mod error;
pub mod harness;
pub mod map;
pub mod network;
pub mod polarimg;
pub mod skysim;

pub use encoding::{
    angular_error, decode, encode, fold_error_180, loss, CodeVector, EncodingScheme,
    EncodingSpec, OrientationDeg,
};
pub use error::{Error, Result};
pub use map::Map;
pub use network::{
    fit, init_params, load_checkpoint, save_checkpoint, Model, NetworkConfig, NetworkParams,
    TrainConfig, TrainReport, TrainSample,
};
pub use polarimg::{FeatureTensor, IntensityChannels, PolarizationMaps, StokesMaps};
pub use skysim::{
    CameraRig, DatasetConfig, MosaicImage, PolarizerPattern, SampleMeta, SkyStokesField,
    SunAzimuthSampler, SunPosition,
};
