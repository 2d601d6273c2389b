//! Orientation output encodings, their decoders, the squared-error loss on
//! code vectors, and angular error metrics.
//!
//! Five schemes are supported. `Raw360` and `Norm01` are scalar outputs;
//! `OneHot`, `Trig`, and `Exp` spread the orientation over `360/j` neurons,
//! one per `j` degrees, with full wraparound so that 0 and 360 degrees share
//! a neuron. Trigonometric values are computed with arguments in degrees:
//! the neighbor value at `j = 0.1` is cos(0.1 deg) = 0.99999847691329, which
//! pins the degree convention.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A heading angle in degrees, normalized to `[0, 360)` on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationDeg(f64);

impl OrientationDeg {
    pub fn new(degrees: f64) -> Self {
        let mut v = degrees % 360.0;
        if v < 0.0 {
            v += 360.0;
        }
        // `-1e-18 % 360` rounds to 360.0 exactly; fold that back to 0.
        if v >= 360.0 {
            v -= 360.0;
        }
        Self(v)
    }

    pub fn degrees(&self) -> f64 {
        self.0
    }
}

/// Output-layer encoding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncodingScheme {
    /// Single neuron holding the orientation in `[0, 360)`.
    Raw360,
    /// Single neuron holding orientation / 360.
    Norm01,
    /// One active neuron at the nearest grid angle.
    OneHot,
    /// cos(i * j) over the neurons within 90 degrees of the true angle.
    Trig,
    /// m^|i| over all neurons, wrapped around the circle.
    Exp,
}

impl EncodingScheme {
    /// Exact CLI token for the scheme.
    pub fn token(&self) -> &'static str {
        match self {
            EncodingScheme::Raw360 => "raw360",
            EncodingScheme::Norm01 => "norm01",
            EncodingScheme::OneHot => "onehot",
            EncodingScheme::Trig => "trig",
            EncodingScheme::Exp => "exp",
        }
    }

    pub fn from_token(token: &str) -> Result<Self> {
        match token {
            "raw360" => Ok(EncodingScheme::Raw360),
            "norm01" => Ok(EncodingScheme::Norm01),
            "onehot" => Ok(EncodingScheme::OneHot),
            "trig" => Ok(EncodingScheme::Trig),
            "exp" => Ok(EncodingScheme::Exp),
            other => Err(Error::InvalidParameter(format!(
                "unknown encoding scheme `{other}` (expected raw360|norm01|onehot|trig|exp)"
            ))),
        }
    }

    pub fn all() -> [EncodingScheme; 5] {
        [
            EncodingScheme::Raw360,
            EncodingScheme::Norm01,
            EncodingScheme::OneHot,
            EncodingScheme::Trig,
            EncodingScheme::Exp,
        ]
    }

    /// Whether the scheme uses one neuron per grid angle.
    pub fn is_vector(&self) -> bool {
        matches!(
            self,
            EncodingScheme::OneHot | EncodingScheme::Trig | EncodingScheme::Exp
        )
    }
}

/// Scheme plus its angular resolution `j` (degrees per neuron) and the decay
/// hyperparameter `m` used by the exponential scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingSpec {
    pub scheme: EncodingScheme,
    pub j: f64,
    pub m: f64,
}

impl EncodingSpec {
    pub fn new(scheme: EncodingScheme, j: f64, m: f64) -> Result<Self> {
        if !(j > 0.0) || !j.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "angular resolution j must be positive, got {j}"
            )));
        }
        let count = 360.0 / j;
        if (count - count.round()).abs() > 1e-9 || count.round() < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "360/j must be a positive integer, got 360/{j} = {count}"
            )));
        }
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "hyperparameter m must lie in (0, 1), got {m}"
            )));
        }
        Ok(Self { scheme, j, m })
    }

    /// Output-vector length: `360/j` for vector schemes, 1 otherwise.
    pub fn code_len(&self) -> usize {
        if self.scheme.is_vector() {
            (360.0 / self.j).round() as usize
        } else {
            1
        }
    }

    /// Number of grid neurons (`360/j`) regardless of scheme.
    pub fn neuron_count(&self) -> usize {
        (360.0 / self.j).round() as usize
    }
}

/// Target or predicted output-layer vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeVector(pub Vec<f64>);

impl CodeVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Wrapped index distance from neuron `k` to the active neuron `k0`, as the
/// minimal-magnitude integer `i` with `k = k0 + i (mod n)`.
fn wrapped_offset(k: usize, k0: usize, n: usize) -> i64 {
    let n = n as i64;
    let mut d = (k as i64 - k0 as i64) % n;
    if d < -n / 2 {
        d += n;
    } else if d > n / 2 {
        d -= n;
    }
    d
}

/// Encode an orientation under the given spec.
///
/// Vector schemes place the active neuron at the grid angle nearest to the
/// orientation; off-grid headings are rounded to that neuron.
pub fn encode(phi: OrientationDeg, spec: &EncodingSpec) -> CodeVector {
    let phi = phi.degrees();
    match spec.scheme {
        EncodingScheme::Raw360 => CodeVector(vec![phi]),
        EncodingScheme::Norm01 => CodeVector(vec![phi / 360.0]),
        EncodingScheme::OneHot => {
            let n = spec.neuron_count();
            let k0 = (phi / spec.j).round() as usize % n;
            let mut out = vec![0.0; n];
            out[k0] = 1.0;
            CodeVector(out)
        }
        EncodingScheme::Trig => {
            let n = spec.neuron_count();
            let k0 = (phi / spec.j).round() as usize % n;
            let out = (0..n)
                .map(|k| {
                    let angle = wrapped_offset(k, k0, n) as f64 * spec.j;
                    if angle.abs() < 90.0 {
                        angle.to_radians().cos()
                    } else {
                        0.0
                    }
                })
                .collect();
            CodeVector(out)
        }
        EncodingScheme::Exp => {
            let n = spec.neuron_count();
            let k0 = (phi / spec.j).round() as usize % n;
            let out = (0..n)
                .map(|k| spec.m.powi(wrapped_offset(k, k0, n).unsigned_abs() as i32))
                .collect();
            CodeVector(out)
        }
    }
}

/// Decode a code vector back to an orientation.
///
/// Scalar schemes are read directly (mod 360); vector schemes take the
/// argmax neuron, ties broken by the lowest index.
pub fn decode(code: &CodeVector, spec: &EncodingSpec) -> Result<OrientationDeg> {
    if code.is_empty() {
        return Err(Error::InvalidParameter("empty code vector".into()));
    }
    if code.len() != spec.code_len() {
        return Err(Error::DimensionMismatch(format!(
            "code length {} does not match spec length {}",
            code.len(),
            spec.code_len()
        )));
    }
    let deg = match spec.scheme {
        EncodingScheme::Raw360 => code.0[0],
        EncodingScheme::Norm01 => code.0[0] * 360.0,
        _ => {
            let mut best = 0usize;
            for (k, &v) in code.0.iter().enumerate() {
                if v > code.0[best] {
                    best = k;
                }
            }
            best as f64 * spec.j
        }
    };
    Ok(OrientationDeg::new(deg))
}

/// Sum of squared componentwise differences between two code vectors.
pub fn loss(pred: &CodeVector, target: &CodeVector) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "code lengths differ: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred
        .0
        .iter()
        .zip(&target.0)
        .map(|(p, t)| (p - t) * (p - t))
        .sum())
}

/// Shortest wrap-around angular distance, in `[0, 180]`.
pub fn angular_error(predicted: OrientationDeg, truth: OrientationDeg) -> f64 {
    let d = (predicted.degrees() - truth.degrees()).rem_euclid(360.0).abs();
    d.min(360.0 - d)
}

/// Map an error in `[0, 180]` to `[0, 90]` by subtracting from 180 when it
/// exceeds 90, for comparisons over a 0-180 orientation range.
pub fn fold_error_180(error: f64) -> f64 {
    if error > 90.0 {
        (error - 180.0).abs()
    } else {
        error
    }
}
