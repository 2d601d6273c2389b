//! Single entry point for dataset generation, training, evaluation,
//! prediction, encoding comparison, hyperparameter sweeps, and map
//! conversion.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 runtime or numeric
//! failure. Every file-producing subcommand writes a `run_manifest.json`
//! beside its outputs so the run can be replayed from the manifest alone.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use skypol::encoding::EncodingScheme;
use skypol::harness::{
    ambiguity_analysis, ambiguity_csv, compare_csv, compare_encodings, evaluate, plot_csv,
    sweep_csv, sweep_m, ErrorMode, Protocol, AMBIGUITY_WINDOW,
};
use skypol::polarimg::{demosaic, mean_pool_channels, polarization, stokes};
use skypol::skysim::dataset::{generate_dataset, load_dataset, load_sample};
use skypol::skysim::pgm::write_pgm;
use skypol::skysim::{DatasetConfig, MosaicImage, PolarizerPattern, SampleMeta, SunAzimuthSampler};
use skypol::{load_checkpoint, save_checkpoint, Error as CoreError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "skypol", version, about = "Skylight-polarization orientation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset
    Gen(GenArgs),
    /// Train an orientation network on a dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset
    Eval(EvalArgs),
    /// Predict the heading of one sample
    Predict(PredictArgs),
    /// Train and compare several output encodings under shared seeds
    Compare(CompareArgs),
    /// Train and evaluate across a list of exponential decay values
    Sweep(SweepArgs),
    /// Convert a raw mosaic into DOP and AOP maps for inspection
    Convert(ConvertArgs),
}

#[derive(Args, Serialize)]
struct GenArgs {
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 90.0)]
    fov: f64,
    #[arg(long, default_value_t = 0.8)]
    dop_max: f64,
    #[arg(long, default_value_t = 0.005)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 12)]
    bit_depth: u8,
    /// Analyzer angles at offsets (0,0),(0,1),(1,0),(1,1)
    #[arg(long, default_value = "90,45,135,0")]
    pattern: String,
    /// Heading grid in degrees; 0 draws continuous headings
    #[arg(long, default_value_t = 1.0)]
    heading_grid: f64,
    /// Fixed sun azimuth in degrees; ignored with --sun-az-uniform
    #[arg(long, default_value_t = 180.0)]
    sun_az: f64,
    /// Draw the sun azimuth uniformly per sample (the heading is then not
    /// identifiable from images alone; fine for polarimetry-only studies)
    #[arg(long, default_value_t = false)]
    sun_az_uniform: bool,
    #[arg(long, default_value_t = 0.0)]
    sun_alt_min: f64,
    #[arg(long, default_value_t = 60.0)]
    sun_alt_max: f64,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Training dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss CSV path (default: <out>.loss.csv)
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value = "exp")]
    scheme: String,
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    #[arg(long, default_value_t = 0.98)]
    m: f64,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Feature grid side length (maps are grid x grid)
    #[arg(long, default_value_t = 8)]
    grid: usize,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Error mode: wrapped | folded
    #[arg(long, default_value = "folded")]
    mode: String,
    /// Also write the one-row summary CSV here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the near-180-degree ambiguity report (plus a plot file) here
    #[arg(long)]
    ambiguity_out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct PredictArgs {
    /// Path to a sample .pgm (its .json sidecar must sit beside it)
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    train_data: PathBuf,
    #[arg(long)]
    test_data: PathBuf,
    /// Comma-separated scheme tokens, e.g. exp,trig,onehot
    #[arg(long, default_value = "raw360,norm01,onehot,trig,exp")]
    schemes: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "folded")]
    mode: String,
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    #[arg(long, default_value_t = 0.98)]
    m: f64,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    grid: usize,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    train_data: PathBuf,
    #[arg(long)]
    test_data: PathBuf,
    /// Comma-separated decay values in (0,1)
    #[arg(long, default_value = "0.95,0.96,0.97,0.98,0.99")]
    m_list: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "folded")]
    mode: String,
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    grid: usize,
}

#[derive(Args, Serialize)]
struct ConvertArgs {
    /// Path to a sample .pgm (its .json sidecar must sit beside it)
    #[arg(long)]
    sample: PathBuf,
    /// Output directory for the DOP/AOP maps
    #[arg(long)]
    out_dir: PathBuf,
    /// Mean-pool the channels by this factor before converting
    #[arg(long, default_value_t = 1)]
    pool: usize,
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::InvalidParameter(_)
            | CoreError::MalformedFile { .. }
            | CoreError::Json(_)
            | CoreError::EmptyDataset => CliError::Usage(e.to_string()),
            CoreError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Convert(args) => cmd_convert(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

/// Write the replay manifest beside the outputs of a run.
fn write_manifest(
    dir: &Path,
    subcommand: &str,
    config: &impl Serialize,
    inputs: &[&Path],
    outputs: &[PathBuf],
) -> Result<(), CliError> {
    let manifest = json!({
        "subcommand": subcommand,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "inputs": inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    std::fs::write(
        dir.join("run_manifest.json"),
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?,
    )?;
    Ok(())
}

fn dataset_config(args: &GenArgs) -> Result<DatasetConfig, CliError> {
    let pattern = PolarizerPattern::parse(&args.pattern)?;
    let config = DatasetConfig {
        count: args.count,
        width: args.width,
        height: args.height,
        fov_deg: args.fov,
        dop_max: args.dop_max,
        noise_sigma: args.noise_sigma,
        bit_depth: args.bit_depth,
        pattern: pattern.flat(),
        heading_grid_deg: if args.heading_grid > 0.0 {
            Some(args.heading_grid)
        } else {
            None
        },
        sun_azimuth: if args.sun_az_uniform {
            SunAzimuthSampler::Uniform
        } else {
            SunAzimuthSampler::Fixed(args.sun_az)
        },
        sun_alt_min_deg: args.sun_alt_min,
        sun_alt_max_deg: args.sun_alt_max,
        seed: args.seed,
    };
    config.validate()?;
    Ok(config)
}

fn cmd_gen(args: GenArgs) -> Result<(), CliError> {
    let config = dataset_config(&args)?;
    let names = generate_dataset(&config, &args.out)?;
    let outputs: Vec<PathBuf> = names
        .iter()
        .map(|n| args.out.join(format!("{n}.pgm")))
        .collect();
    write_manifest(&args.out, "gen", &args, &[], &outputs)?;
    println!("wrote {} samples to {}", names.len(), args.out.display());
    Ok(())
}

fn parse_scheme_list(text: &str) -> Result<Vec<EncodingScheme>, CliError> {
    text.split(',')
        .map(|t| EncodingScheme::from_token(t.trim()).map_err(CliError::from))
        .collect()
}

fn load_pair(dir: &Path) -> Result<Vec<(MosaicImage, SampleMeta)>, CliError> {
    if !dir.join(skypol::skysim::MANIFEST_NAME).exists() {
        return Err(CliError::Usage(format!(
            "no dataset manifest in {}",
            dir.display()
        )));
    }
    Ok(load_dataset(dir)?)
}

fn protocol_from(grid: usize, j: f64, m: f64, lr: f64, batch: usize, epochs: usize, seed: u64) -> Protocol {
    Protocol {
        grid_h: grid,
        grid_w: grid,
        j,
        m,
        learning_rate: lr,
        batch_size: batch,
        epochs,
        seed,
    }
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let scheme = EncodingScheme::from_token(&args.scheme)?;
    let spec = skypol::EncodingSpec::new(scheme, args.j, args.m)?;
    let samples = load_pair(&args.data)?;
    let protocol = protocol_from(args.grid, args.j, args.m, args.lr, args.batch_size, args.epochs, args.seed);
    let train = skypol::harness::prepare_samples(&samples, protocol.grid_h, protocol.grid_w)?;
    let nc = skypol::NetworkConfig::for_spec(protocol.grid_h, protocol.grid_w, &spec);
    let tc = protocol.train_config(spec);
    let outcome = skypol::fit(&train, &tc, &nc)?;

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| args.out.with_extension("loss.csv"));
    std::fs::write(&report_path, outcome.report.to_csv())?;
    save_checkpoint(&args.out, &outcome.params, &nc, &spec)?;
    let parent = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
    write_manifest(
        if parent.as_os_str().is_empty() { Path::new(".") } else { &parent },
        "train",
        &args,
        &[&args.data],
        &[args.out.clone(), report_path.clone()],
    )?;
    if outcome.diverged {
        return Err(CliError::Runtime(format!(
            "training diverged after {} epochs (loss became non-finite); report at {}",
            outcome.report.epochs.len(),
            report_path.display()
        )));
    }
    println!(
        "trained {} epochs, final loss {:.6e}, checkpoint {}",
        outcome.report.epochs.len(),
        outcome.report.final_loss().unwrap_or(f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let mode = ErrorMode::from_token(&args.mode)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let samples = load_pair(&args.data)?;
    let outcome = evaluate(&model, &samples)?;
    let s = outcome.by_mode(mode);
    let csv = format!(
        "mae_deg,rmse_deg,me_deg,count,mode\n{:.6},{:.6},{:.6},{},{}\n",
        s.mae,
        s.rmse,
        s.me,
        s.count,
        s.mode.label()
    );
    print!("{csv}");
    let mut outputs = Vec::new();
    if let Some(out) = &args.out {
        std::fs::write(out, &csv)?;
        outputs.push(out.clone());
    }
    if let Some(amb_out) = &args.ambiguity_out {
        let report = ambiguity_analysis(&model, &samples, AMBIGUITY_WINDOW)?;
        std::fs::write(amb_out, ambiguity_csv(&report))?;
        outputs.push(amb_out.clone());
        let plot = amb_out.with_extension("plot.csv");
        std::fs::write(
            &plot,
            plot_csv(report.all.iter().map(|e| (e.index as f64, e.error_deg))),
        )?;
        outputs.push(plot);
        println!(
            "n180e = {}, msa = {}",
            report.n180e,
            report
                .msa
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "none".into())
        );
    }
    if let Some(first) = outputs.first() {
        let parent = first.parent().map(Path::to_path_buf).unwrap_or_default();
        write_manifest(
            if parent.as_os_str().is_empty() { Path::new(".") } else { &parent },
            "eval",
            &args,
            &[&args.data, &args.checkpoint],
            &outputs,
        )?;
    }
    Ok(())
}

fn load_sample_by_pgm(pgm_path: &Path) -> Result<(MosaicImage, SampleMeta), CliError> {
    let dir = pgm_path.parent().unwrap_or(Path::new("."));
    let base = pgm_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Usage(format!("bad sample path {}", pgm_path.display())))?;
    Ok(load_sample(dir, base)?)
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let model = load_checkpoint(&args.checkpoint)?;
    let (mosaic, _meta) = load_sample_by_pgm(&args.sample)?;
    let pred = model.predict(&mosaic)?;
    println!("{:.1}", pred.degrees());
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    let mode = ErrorMode::from_token(&args.mode)?;
    let schemes = parse_scheme_list(&args.schemes)?;
    if schemes.is_empty() {
        return Err(CliError::Usage("no schemes given".into()));
    }
    let train_set = load_pair(&args.train_data)?;
    let test_set = load_pair(&args.test_data)?;
    let protocol = protocol_from(args.grid, args.j, args.m, args.lr, args.batch_size, args.epochs, args.seed);
    let table = compare_encodings(&train_set, &test_set, &schemes, &protocol, mode)?;
    std::fs::create_dir_all(&args.out)?;
    let mut outputs = vec![args.out.join("compare.csv")];
    std::fs::write(&outputs[0], compare_csv(&table))?;
    for (scheme, errors) in &table.per_scheme_errors {
        let path = args.out.join(format!("plot_errors_{}.csv", scheme.token()));
        let csv = plot_csv(errors.iter().map(|e| (e.index as f64, e.error_deg)));
        std::fs::write(&path, csv)?;
        outputs.push(path);
    }
    write_manifest(
        &args.out,
        "compare",
        &args,
        &[&args.train_data, &args.test_data],
        &outputs,
    )?;
    print!("{}", compare_csv(&table));
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let mode = ErrorMode::from_token(&args.mode)?;
    let m_list: Vec<f64> = args
        .m_list
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad m value `{t}`")))
        })
        .collect::<Result<_, _>>()?;
    let train_set = load_pair(&args.train_data)?;
    let test_set = load_pair(&args.test_data)?;
    let protocol = protocol_from(args.grid, args.j, 0.98, args.lr, args.batch_size, args.epochs, args.seed);
    let result = sweep_m(&train_set, &test_set, &m_list, &protocol, mode)?;
    std::fs::create_dir_all(&args.out)?;
    let sweep_path = args.out.join("sweep.csv");
    std::fs::write(&sweep_path, sweep_csv(&result))?;
    let mae_plot = args.out.join("plot_mae.csv");
    std::fs::write(
        &mae_plot,
        plot_csv(result.rows.iter().map(|r| (r.m, r.mae_deg))),
    )?;
    let rmse_plot = args.out.join("plot_rmse.csv");
    std::fs::write(
        &rmse_plot,
        plot_csv(result.rows.iter().map(|r| (r.m, r.rmse_deg))),
    )?;
    write_manifest(
        &args.out,
        "sweep",
        &args,
        &[&args.train_data, &args.test_data],
        &[sweep_path, mae_plot, rmse_plot],
    )?;
    print!("{}", sweep_csv(&result));
    match result.argmin_m() {
        Some(m) => println!("argmin m = {m}"),
        None => println!("argmin m = none (no finite rows)"),
    }
    Ok(())
}

fn cmd_convert(args: ConvertArgs) -> Result<(), CliError> {
    let (mosaic, _meta) = load_sample_by_pgm(&args.sample)?;
    let channels = mean_pool_channels(&demosaic(&mosaic)?, args.pool.max(1))?;
    let stokes_maps = stokes(&channels)?;
    let polar = polarization(&stokes_maps);
    std::fs::create_dir_all(&args.out_dir)?;
    let stem = args.sample.file_stem().and_then(|s| s.to_str()).unwrap_or("sample");
    let maxval = 65535u16;
    let dop_path = args.out_dir.join(format!("{stem}_dop.pgm"));
    let dop_pixels: Vec<u16> = polar
        .dop
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * maxval as f64).round() as u16)
        .collect();
    write_pgm(&dop_path, polar.dop.width(), polar.dop.height(), maxval, &dop_pixels)?;
    let aop_path = args.out_dir.join(format!("{stem}_aop.pgm"));
    let aop_pixels: Vec<u16> = polar
        .aop
        .data()
        .iter()
        .map(|&a| (((a + 90.0) / 180.0).clamp(0.0, 1.0) * maxval as f64).round() as u16)
        .collect();
    write_pgm(&aop_path, polar.aop.width(), polar.aop.height(), maxval, &aop_pixels)?;
    write_manifest(
        &args.out_dir,
        "convert",
        &args,
        &[&args.sample],
        &[dop_path, aop_path],
    )?;
    println!("wrote dop/aop maps to {}", args.out_dir.display());
    Ok(())
}
