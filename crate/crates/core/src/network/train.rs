//! Mini-batch training with the adaptive-moment optimizer, seeded
//! per-epoch shuffling, and a divergence guard. Everything downstream of
//! `(seed, dataset, configs)` is deterministic.

use crate::encoding::{encode, EncodingSpec, OrientationDeg};
use crate::error::{Error, Result};
use crate::network::{
    backward_accumulate, forward_cached, init_params, Gradients, NetworkConfig, NetworkParams,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub spec: EncodingSpec,
}

impl TrainConfig {
    pub fn new(spec: EncodingSpec) -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            epochs: 60,
            seed: 0,
            spec,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in [0, 1), got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One training example: flattened feature tensor plus its heading label.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub features: Vec<f64>,
    pub heading: OrientationDeg,
}

#[derive(Debug, Clone, Default)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub wall_ms: f64,
}

/// Per-epoch statistics of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }

    /// CSV with the fixed header `epoch,mean_loss`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!("{},{:.9e}\n", i, e.mean_loss));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: NetworkParams,
    pub report: TrainReport,
    /// True when training stopped early on a non-finite epoch loss.
    pub diverged: bool,
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl AdamState {
    fn new(config: &NetworkConfig) -> Self {
        Self {
            m: NetworkParams::zeros(config),
            v: NetworkParams::zeros(config),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut NetworkParams, grads: &Gradients, tc: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - tc.beta1.powi(self.t);
        let bc2 = 1.0 - tc.beta2.powi(self.t);
        for (layer_idx, layer) in params.layers.iter_mut().enumerate() {
            let g = &grads.layers[layer_idx];
            let m = &mut self.m.layers[layer_idx];
            let v = &mut self.v.layers[layer_idx];
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = tc.beta1 * *m + (1.0 - tc.beta1) * g;
                *v = tc.beta2 * *v + (1.0 - tc.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= tc.learning_rate * mh / (vh.sqrt() + tc.epsilon);
            };
            for i in 0..layer.weights.len() {
                update(&mut layer.weights[i], g.weights[i], &mut m.weights[i], &mut v.weights[i]);
            }
            for i in 0..layer.bias.len() {
                update(&mut layer.bias[i], g.bias[i], &mut m.bias[i], &mut v.bias[i]);
            }
        }
    }
}

/// Train from the standard initialization: per-epoch shuffling, mean
/// gradient per mini-batch, adaptive-moment updates. Returns early with
/// `diverged = true` if an epoch's mean loss stops being finite.
pub fn fit(
    samples: &[TrainSample],
    tc: &TrainConfig,
    nc: &NetworkConfig,
) -> Result<FitResult> {
    tc.validate()?;
    nc.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !nc.matches_spec(&tc.spec) {
        return Err(Error::DimensionMismatch(format!(
            "network output size {} does not fit encoding (len {})",
            nc.output_size,
            tc.spec.code_len()
        )));
    }
    for s in samples {
        if s.features.len() != nc.feature_len() {
            return Err(Error::DimensionMismatch(format!(
                "sample feature length {} does not match config {}",
                s.features.len(),
                nc.feature_len()
            )));
        }
    }
    let targets: Vec<_> = samples.iter().map(|s| encode(s.heading, &tc.spec)).collect();
    let mut params = init_params(nc, tc.seed)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(tc.seed);
    shuffle_rng.set_stream(u64::MAX); // keep shuffling independent of init draws
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut adam = AdamState::new(nc);
    let mut grads = NetworkParams::zeros(nc);
    let mut report = TrainReport::default();

    for epoch in 0..tc.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(tc.batch_size) {
            for layer in &mut grads.layers {
                layer.weights.iter_mut().for_each(|g| *g = 0.0);
                layer.bias.iter_mut().for_each(|g| *g = 0.0);
            }
            for &idx in batch {
                let (_, cache) = forward_cached(&params, nc, &samples[idx].features)?;
                epoch_loss +=
                    backward_accumulate(&params, nc, &cache, &targets[idx], &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for layer in &mut grads.layers {
                layer.weights.iter_mut().for_each(|g| *g *= scale);
                layer.bias.iter_mut().for_each(|g| *g *= scale);
            }
            adam.step(&mut params, &grads, tc);
        }
        let mean_loss = epoch_loss / samples.len() as f64;
        report.epochs.push(EpochStats {
            mean_loss,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if !mean_loss.is_finite() || !params.all_finite() {
            return Ok(FitResult {
                params,
                report,
                diverged: true,
            });
        }
        let _ = epoch;
    }
    Ok(FitResult {
        params,
        report,
        diverged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingScheme;
    use rand::Rng;

    fn tiny_setup(n: usize) -> (Vec<TrainSample>, TrainConfig, NetworkConfig) {
        let spec = EncodingSpec::new(EncodingScheme::Exp, 45.0, 0.98).unwrap();
        let nc = NetworkConfig {
            grid_h: 2,
            grid_w: 2,
            branch_hidden1: 4,
            branch_hidden2: 3,
            fusion_hidden: 6,
            output_size: 8,
            output_activation: crate::network::ActivationKind::Sigmoid,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let samples = (0..n)
            .map(|i| TrainSample {
                features: (0..nc.feature_len()).map(|_| rng.gen_range(0.0..1.0)).collect(),
                heading: OrientationDeg::new((i * 45) as f64),
            })
            .collect();
        (samples, TrainConfig::new(spec), nc)
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let (_, tc, nc) = tiny_setup(0);
        assert!(matches!(fit(&[], &tc, &nc), Err(Error::EmptyDataset)));
    }

    #[test]
    fn same_seed_trains_identically() {
        let (samples, mut tc, nc) = tiny_setup(6);
        tc.epochs = 5;
        let a = fit(&samples, &tc, &nc).unwrap();
        let b = fit(&samples, &tc, &nc).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(
            a.report.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>(),
            b.report.epochs.iter().map(|e| e.mean_loss).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_learning_rate_leaves_params_at_init() {
        let (samples, mut tc, nc) = tiny_setup(6);
        tc.learning_rate = 0.0;
        tc.epochs = 3;
        let result = fit(&samples, &tc, &nc).unwrap();
        assert_eq!(result.params, init_params(&nc, tc.seed).unwrap());
        let losses: Vec<f64> = result.report.epochs.iter().map(|e| e.mean_loss).collect();
        assert!((losses[0] - losses[2]).abs() < 1e-12, "flat loss curve");
    }

    #[test]
    fn loss_decreases_on_small_problem() {
        let (samples, mut tc, nc) = tiny_setup(8);
        tc.epochs = 50;
        tc.learning_rate = 1e-2;
        tc.batch_size = 8;
        let result = fit(&samples, &tc, &nc).unwrap();
        assert!(!result.diverged);
        let first = result.report.epochs.first().unwrap().mean_loss;
        let last = result.report.final_loss().unwrap();
        assert!(last < first * 0.5, "loss {first} -> {last}");
    }

    #[test]
    fn report_csv_has_one_row_per_epoch() {
        let (samples, mut tc, nc) = tiny_setup(4);
        tc.epochs = 3;
        let result = fit(&samples, &tc, &nc).unwrap();
        let csv = result.report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with("epoch,mean_loss\n"));
    }

    #[test]
    fn mismatched_spec_is_rejected() {
        let (samples, mut tc, nc) = tiny_setup(4);
        tc.spec = EncodingSpec::new(EncodingScheme::Exp, 1.0, 0.98).unwrap();
        assert!(fit(&samples, &tc, &nc).is_err());
    }
}
