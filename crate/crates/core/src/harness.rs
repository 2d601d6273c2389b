//! Experiment harness: evaluation metrics in wrapped and folded modes, the
//! encoding-scheme comparison, the 180-degree-ambiguity analysis, and the
//! exponential-decay hyperparameter sweep, each with a fixed-header CSV
//! emitter.

use crate::encoding::{angular_error, fold_error_180, EncodingScheme, EncodingSpec, OrientationDeg};
use crate::error::{Error, Result};
use crate::network::checkpoint::{channel_pool_for, Model};
use crate::network::{fit, NetworkConfig, TrainConfig, TrainSample};
use crate::polarimg::features_from_mosaic;
use crate::skysim::dataset::SampleMeta;
use crate::skysim::mosaic::MosaicImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    Wrapped360,
    Folded180,
}

impl ErrorMode {
    /// Token used in CSV output.
    pub fn label(&self) -> &'static str {
        match self {
            ErrorMode::Wrapped360 => "wrapped360",
            ErrorMode::Folded180 => "folded180",
        }
    }

    /// CLI token (`wrapped` / `folded`).
    pub fn from_token(token: &str) -> Result<Self> {
        match token {
            "wrapped" => Ok(ErrorMode::Wrapped360),
            "folded" => Ok(ErrorMode::Folded180),
            other => Err(Error::InvalidParameter(format!(
                "unknown error mode `{other}` (expected wrapped|folded)"
            ))),
        }
    }
}

/// Aggregate angular-error statistics of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsSummary {
    pub mae: f64,
    pub rmse: f64,
    pub me: f64,
    pub count: usize,
    pub mode: ErrorMode,
}

pub fn summarize(errors: &[f64], mode: ErrorMode) -> Result<MetricsSummary> {
    if errors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = errors.len() as f64;
    let mae = errors.iter().sum::<f64>() / n;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let me = errors.iter().copied().fold(0.0, f64::max);
    Ok(MetricsSummary {
        mae,
        rmse,
        me,
        count: errors.len(),
        mode,
    })
}

/// Per-sample prediction record.
#[derive(Debug, Clone)]
pub struct SampleError {
    pub index: u64,
    pub truth_deg: f64,
    pub pred_deg: f64,
    pub solar_alt_deg: f64,
    /// Wrapped (0-360 range) angular error, degrees in [0, 180].
    pub error_deg: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub wrapped: MetricsSummary,
    pub folded: MetricsSummary,
    pub per_sample: Vec<SampleError>,
}

impl EvalOutcome {
    pub fn by_mode(&self, mode: ErrorMode) -> &MetricsSummary {
        match mode {
            ErrorMode::Wrapped360 => &self.wrapped,
            ErrorMode::Folded180 => &self.folded,
        }
    }
}

/// Predict every sample and aggregate wrapped and folded metrics.
pub fn evaluate(model: &Model, samples: &[(MosaicImage, SampleMeta)]) -> Result<EvalOutcome> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut wrapped = Vec::with_capacity(samples.len());
    let mut folded = Vec::with_capacity(samples.len());
    for (mosaic, meta) in samples {
        let pred = model.predict(mosaic)?;
        let err = angular_error(pred, OrientationDeg::new(meta.heading_deg));
        wrapped.push(err);
        folded.push(fold_error_180(err));
        per_sample.push(SampleError {
            index: meta.index,
            truth_deg: meta.heading_deg,
            pred_deg: pred.degrees(),
            solar_alt_deg: meta.sun_altitude_deg,
            error_deg: err,
        });
    }
    Ok(EvalOutcome {
        wrapped: summarize(&wrapped, ErrorMode::Wrapped360)?,
        folded: summarize(&folded, ErrorMode::Folded180)?,
        per_sample,
    })
}

/// Training protocol shared by the comparison and sweep runs.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub grid_h: usize,
    pub grid_w: usize,
    pub j: f64,
    pub m: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Protocol {
    pub fn desk_default() -> Self {
        Self {
            grid_h: 8,
            grid_w: 8,
            j: 1.0,
            m: 0.98,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 60,
            seed: 0,
        }
    }

    pub fn train_config(&self, spec: EncodingSpec) -> TrainConfig {
        let mut tc = TrainConfig::new(spec);
        tc.learning_rate = self.learning_rate;
        tc.batch_size = self.batch_size;
        tc.epochs = self.epochs;
        tc.seed = self.seed;
        tc
    }
}

/// Flatten dataset samples into network inputs on the protocol's grid.
pub fn prepare_samples(
    samples: &[(MosaicImage, SampleMeta)],
    grid_h: usize,
    grid_w: usize,
) -> Result<Vec<TrainSample>> {
    samples
        .iter()
        .map(|(mosaic, meta)| {
            let pool = channel_pool_for(mosaic.height(), mosaic.width(), grid_h, grid_w)?;
            Ok(TrainSample {
                features: features_from_mosaic(mosaic, pool)?.flatten(),
                heading: OrientationDeg::new(meta.heading_deg),
            })
        })
        .collect()
}

/// Train one model under the protocol; `Ok(None)` when training diverged.
pub fn train_model(
    train: &[TrainSample],
    spec: EncodingSpec,
    protocol: &Protocol,
) -> Result<(Option<Model>, crate::network::TrainReport)> {
    let nc = NetworkConfig::for_spec(protocol.grid_h, protocol.grid_w, &spec);
    let tc = protocol.train_config(spec);
    let outcome = fit(train, &tc, &nc)?;
    let report = outcome.report;
    if outcome.diverged {
        return Ok((None, report));
    }
    Ok((
        Some(Model {
            params: outcome.params,
            config: nc,
            spec,
        }),
        report,
    ))
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub scheme: EncodingScheme,
    /// `None` when training diverged; emitted as non-finite metrics.
    pub summary: Option<MetricsSummary>,
}

#[derive(Debug, Clone)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    pub mode: ErrorMode,
    /// Per-scheme per-sample wrapped errors, for plot files.
    pub per_scheme_errors: Vec<(EncodingScheme, Vec<SampleError>)>,
}

/// Train and evaluate one model per scheme with identical data order and
/// initialization seed; schemes that diverge are kept as non-finite rows.
pub fn compare_encodings(
    train_set: &[(MosaicImage, SampleMeta)],
    test_set: &[(MosaicImage, SampleMeta)],
    schemes: &[EncodingScheme],
    protocol: &Protocol,
    mode: ErrorMode,
) -> Result<CompareTable> {
    let train = prepare_samples(train_set, protocol.grid_h, protocol.grid_w)?;
    let mut rows = Vec::with_capacity(schemes.len());
    let mut per_scheme_errors = Vec::with_capacity(schemes.len());
    for &scheme in schemes {
        let spec = EncodingSpec::new(scheme, protocol.j, protocol.m)?;
        let (model, _report) = train_model(&train, spec, protocol)?;
        match model {
            Some(model) => {
                let outcome = evaluate(&model, test_set)?;
                rows.push(CompareRow {
                    scheme,
                    summary: Some(*outcome.by_mode(mode)),
                });
                per_scheme_errors.push((scheme, outcome.per_sample));
            }
            None => {
                rows.push(CompareRow {
                    scheme,
                    summary: None,
                });
                per_scheme_errors.push((scheme, Vec::new()));
            }
        }
    }
    Ok(CompareTable {
        rows,
        mode,
        per_scheme_errors,
    })
}

/// CSV with the fixed header `scheme,mae_deg,rmse_deg,me_deg,mode`.
pub fn compare_csv(table: &CompareTable) -> String {
    let mut out = String::from("scheme,mae_deg,rmse_deg,me_deg,mode\n");
    for row in &table.rows {
        match &row.summary {
            Some(s) => out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{}\n",
                row.scheme.token(),
                s.mae,
                s.rmse,
                s.me,
                s.mode.label()
            )),
            None => out.push_str(&format!(
                "{},NaN,NaN,NaN,{}\n",
                row.scheme.token(),
                table.mode.label()
            )),
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AmbiguityRow {
    pub index: u64,
    pub truth_deg: f64,
    pub pred_deg: f64,
    pub solar_alt_deg: f64,
    pub error_deg: f64,
}

/// Samples whose wrapped error falls in the configured near-180 window.
#[derive(Debug, Clone)]
pub struct AmbiguityReport {
    pub n180e: usize,
    /// Maximum solar altitude among the near-180 samples.
    pub msa: Option<f64>,
    pub rows: Vec<AmbiguityRow>,
    pub window: (f64, f64),
    /// All evaluated samples, for plot output.
    pub all: Vec<SampleError>,
}

pub const AMBIGUITY_WINDOW: (f64, f64) = (170.0, 190.0);

/// Filter predictions whose wrapped error is "about 180 degrees".
///
/// The window is given on the 0-360 error circle; since wrapped errors live
/// in [0, 180], a `(170, 190)` window reduces to `error >= 170`.
pub fn ambiguity_analysis(
    model: &Model,
    samples: &[(MosaicImage, SampleMeta)],
    window: (f64, f64),
) -> Result<AmbiguityReport> {
    if samples.is_empty() {
        return Ok(AmbiguityReport {
            n180e: 0,
            msa: None,
            rows: Vec::new(),
            window,
            all: Vec::new(),
        });
    }
    let outcome = evaluate(model, samples)?;
    let in_window = |e: f64| e >= window.0 && e <= 360.0 - window.0 && e >= 360.0 - window.1;
    let rows: Vec<AmbiguityRow> = outcome
        .per_sample
        .iter()
        .filter(|s| in_window(s.error_deg))
        .map(|s| AmbiguityRow {
            index: s.index,
            truth_deg: s.truth_deg,
            pred_deg: s.pred_deg,
            solar_alt_deg: s.solar_alt_deg,
            error_deg: s.error_deg,
        })
        .collect();
    let msa = rows
        .iter()
        .map(|r| r.solar_alt_deg)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    Ok(AmbiguityReport {
        n180e: rows.len(),
        msa,
        rows,
        window,
        all: outcome.per_sample,
    })
}

/// CSV with the fixed header `index,truth_deg,pred_deg,solar_alt_deg,error_deg`.
pub fn ambiguity_csv(report: &AmbiguityReport) -> String {
    let mut out = String::from("index,truth_deg,pred_deg,solar_alt_deg,error_deg\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6}\n",
            r.index, r.truth_deg, r.pred_deg, r.solar_alt_deg, r.error_deg
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub m: f64,
    pub mae_deg: f64,
    pub rmse_deg: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub mode: ErrorMode,
}

impl SweepResult {
    /// The m value with the smallest MAE (reported, never asserted).
    pub fn argmin_m(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.mae_deg.is_finite())
            .min_by(|a, b| a.mae_deg.partial_cmp(&b.mae_deg).unwrap())
            .map(|r| r.m)
    }
}

/// One full exponential-encoding train/eval per decay value.
pub fn sweep_m(
    train_set: &[(MosaicImage, SampleMeta)],
    test_set: &[(MosaicImage, SampleMeta)],
    m_list: &[f64],
    protocol: &Protocol,
    mode: ErrorMode,
) -> Result<SweepResult> {
    for &m in m_list {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sweep m values must lie in (0, 1), got {m}"
            )));
        }
    }
    let train = prepare_samples(train_set, protocol.grid_h, protocol.grid_w)?;
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let spec = EncodingSpec::new(EncodingScheme::Exp, protocol.j, m)?;
        let (model, _) = train_model(&train, spec, protocol)?;
        match model {
            Some(model) => {
                let outcome = evaluate(&model, test_set)?;
                let s = outcome.by_mode(mode);
                rows.push(SweepRow {
                    m,
                    mae_deg: s.mae,
                    rmse_deg: s.rmse,
                });
            }
            None => rows.push(SweepRow {
                m,
                mae_deg: f64::NAN,
                rmse_deg: f64::NAN,
            }),
        }
    }
    Ok(SweepResult { rows, mode })
}

/// CSV with the fixed header `m,mae_deg,rmse_deg`.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut out = String::from("m,mae_deg,rmse_deg\n");
    for r in &result.rows {
        out.push_str(&format!("{},{:.6},{:.6}\n", r.m, r.mae_deg, r.rmse_deg));
    }
    out
}

/// Two-column plot-data file (`x,y` header).
pub fn plot_csv(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = String::from("x,y\n");
    for (x, y) in points {
        out.push_str(&format!("{},{:.6}\n", x, y));
    }
    out
}
