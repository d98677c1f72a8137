//! Command-line pipeline: phantom generation, forward simulation,
//! backprojection reconstruction, metric evaluation, a reconstruction
//! benchmark, PNG export and canonical splits.
//!
//! Every command echoes its full effective configuration to
//! `<out>.config.json` so runs can be reproduced from the sidecar alone.
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numeric
//! contract violation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use oadx_core::dataio::{
    make_split, Compression, Container, ContainerWriter, DType, DataBuf, Population, SplitKind,
    MINI_SLICES, MSFD_VOLUNTEERS, SCD_SLICES, SWFD_VOLUNTEERS,
};
use oadx_core::error::Error;
use oadx_core::export;
use oadx_core::forward::{simulate_signals, PhysicsConfig, PressureMap, SignalMatrix};
use oadx_core::geometry::{
    full_mask, limited_view_mask, linear_part_mask, make_array, sparse_mask, ArrayGeometry,
    ArrayKind, ChannelMask,
};
use oadx_core::grid::ImageGrid;
use oadx_core::metrics::{self, MetricReport, MetricValue, SsimOptions, DEFAULT_DATA_RANGE};
use oadx_core::phantom::{derive_sample_seed, generate_phantom, PhantomParams};
use oadx_core::recon::{normalize_clip, reconstruct, ReconConfig, ReconMode};

type FileContainer = Container<std::io::BufReader<std::fs::File>>;

#[derive(Parser)]
#[command(
    name = "oadx",
    version,
    about = "Optoacoustic simulation, reconstruction and evaluation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic forearm pressure maps and label maps.
    Phantom(PhantomArgs),
    /// Simulate raw signal matrices from pressure maps.
    Forward(ForwardArgs),
    /// Reconstruct images from raw signals.
    Recon(ReconArgs),
    /// Evaluate image or segmentation metrics between containers.
    Eval(EvalArgs),
    /// Time reconstructions and verify thread-count independence.
    Bench(BenchArgs),
    /// Export one record as an 8-bit PNG or PGM.
    ExportPng(ExportPngArgs),
    /// Emit a canonical train/val/test split.
    Split(SplitArgs),
}

#[derive(Args, Serialize)]
struct PhantomArgs {
    /// Number of phantoms to generate.
    #[arg(long)]
    n: usize,
    /// Base seed; sample i uses a stream derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output container path.
    #[arg(long)]
    out: PathBuf,
    /// Image side in pixels.
    #[arg(long, default_value_t = 256)]
    image_n: usize,
    /// Pixel pitch in micrometers.
    #[arg(long, default_value_t = 100.0)]
    pitch_um: f64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Serialize)]
struct ForwardArgs {
    /// Input container holding pressure maps.
    #[arg(long = "in")]
    input: PathBuf,
    /// Transducer array: semi_circle, multisegment, linear, virtual_circle.
    #[arg(long)]
    array: String,
    /// Output container path.
    #[arg(long)]
    out: PathBuf,
    /// Input dataset name.
    #[arg(long, default_value = "ground_truth")]
    dataset: String,
    /// Speed of sound in m/s.
    #[arg(long, default_value_t = 1510.0)]
    sos_mps: f64,
    /// Sampling rate in mega-samples per second.
    #[arg(long, default_value_t = 40.0)]
    fs_msps: f64,
    /// Samples per channel.
    #[arg(long, default_value_t = 2030)]
    n_samples: usize,
    /// Grüneisen scale factor.
    #[arg(long, default_value_t = 1.0)]
    grueneisen: f64,
    /// Pixel pitch in micrometers (defaults to the input's metadata).
    #[arg(long)]
    pitch_um: Option<f64>,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Serialize)]
struct ReconArgs {
    /// Input container holding raw signals.
    #[arg(long = "in")]
    input: PathBuf,
    /// Transducer array the signals were acquired with.
    #[arg(long)]
    array: String,
    /// Output container path.
    #[arg(long)]
    out: PathBuf,
    /// Input dataset name (default: the unique *_raw dataset).
    #[arg(long)]
    dataset: Option<String>,
    /// Channel mask: none, sparse:K, limited:K or linear_part.
    #[arg(long, default_value = "none")]
    mask: String,
    /// Reconstruction mode: delay_sum or derivative_bp.
    #[arg(long, default_value = "derivative_bp")]
    mode: String,
    /// Bandpass corners in Hz as "low,high"; omit to skip filtering.
    #[arg(long)]
    band: Option<String>,
    /// Reconstruction grid side in pixels.
    #[arg(long, default_value_t = 256)]
    grid_n: usize,
    /// Pixel pitch in micrometers.
    #[arg(long, default_value_t = 100.0)]
    pitch_um: f64,
    /// Speed of sound in m/s (defaults to the input's metadata, then 1510).
    #[arg(long)]
    sos_mps: Option<f64>,
    /// Scale each image by its maximum and clip at -0.2 before storing.
    #[arg(long, default_value_t = false)]
    normalize: bool,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Container with predicted images or label maps.
    #[arg(long)]
    pred: PathBuf,
    /// Container with target images.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Container with target label maps (enables dice/iou/hd95).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Dataset name inside --pred (default: the only dataset).
    #[arg(long)]
    pred_dataset: Option<String>,
    /// Dataset name inside --target (default: the only dataset).
    #[arg(long)]
    target_dataset: Option<String>,
    /// Dataset name inside --labels.
    #[arg(long, default_value = "labels")]
    labels_dataset: String,
    /// Comma-separated metrics from: mae,rmse,psnr,ssim,dice,iou,hd95.
    #[arg(long, default_value = "mae,rmse,psnr,ssim")]
    metrics: String,
    /// Label classes evaluated by the segmentation metrics.
    #[arg(long, default_value = "1,2")]
    classes: String,
    /// Dynamic range for PSNR/SSIM.
    #[arg(long, default_value_t = DEFAULT_DATA_RANGE)]
    data_range: f64,
    /// Normalize-and-clip both image operands before comparing.
    #[arg(long, default_value_t = false)]
    normalize: bool,
    /// Report base path; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[arg(long, default_value = "virtual_circle")]
    array: String,
    #[arg(long, default_value_t = 256)]
    grid_n: usize,
    #[arg(long, default_value_t = 100.0)]
    pitch_um: f64,
    /// Worker threads for the timed runs (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Timed repetitions.
    #[arg(long, default_value_t = 5)]
    repeat: usize,
    #[arg(long, default_value = "derivative_bp")]
    mode: String,
    /// Optional report path (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct ExportPngArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Dataset name (default: the only dataset).
    #[arg(long)]
    dataset: Option<String>,
    /// Record index.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Output path; .png or .pgm by extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct SplitArgs {
    /// Split kind: msfd, swfd, scd or mini.
    #[arg(long)]
    kind: String,
    /// Slice count for index splits (defaults to the canonical count).
    #[arg(long)]
    slices: Option<u64>,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_)
            | Error::Json(_)
            | Error::ContainerFormat(_)
            | Error::ChecksumMismatch { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Phantom(args) => in_pool(args.threads, || cmd_phantom(&args)),
        Command::Forward(args) => in_pool(args.threads, || cmd_forward(&args)),
        Command::Recon(args) => in_pool(args.threads, || cmd_recon(&args)),
        Command::Eval(args) => in_pool(args.threads, || cmd_eval(&args)),
        Command::Bench(args) => cmd_bench(&args),
        Command::ExportPng(args) => cmd_export_png(&args),
        Command::Split(args) => cmd_split(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("oadx: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Run a closure inside a dedicated rayon pool capped at `threads`
/// (0 = rayon's default pool).
fn in_pool<F: FnOnce() -> CliResult + Send>(threads: usize, f: F) -> CliResult {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn write_config_sidecar<T: Serialize>(out: &Path, command: &str, args: &T) -> CliResult {
    let sidecar = PathBuf::from(format!("{}.config.json", out.display()));
    let body = serde_json::json!({ "command": command, "config": args });
    std::fs::write(&sidecar, serde_json::to_string_pretty(&body).unwrap())?;
    Ok(())
}

fn to_f32(values: &Array2<f64>) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

fn read_f64_record(
    container: &mut FileContainer,
    dataset: &str,
    index: usize,
    rows: usize,
    cols: usize,
) -> Result<Array2<f64>, Error> {
    let rec = container.read_record(dataset, index)?;
    let data = rec.as_f32()?;
    if data.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "record {index} of '{dataset}' has {} values, expected {}",
            data.len(),
            rows * cols
        )));
    }
    Ok(Array2::from_shape_fn((rows, cols), |(r, c)| {
        data[r * cols + c] as f64
    }))
}

fn metadata_f64(meta: &BTreeMap<String, String>, key: &str) -> Option<f64> {
    meta.get(key).and_then(|v| v.parse().ok())
}

/// Pick the unique dataset whose name ends with `suffix` unless one was
/// named explicitly.
fn pick_dataset(
    container: &FileContainer,
    suffix: &str,
    explicit: &Option<String>,
) -> Result<String, Error> {
    if let Some(name) = explicit {
        return Ok(name.clone());
    }
    let names: Vec<String> = container
        .dataset_names()
        .iter()
        .filter(|n| n.ends_with(suffix))
        .map(|n| n.to_string())
        .collect();
    match names.len() {
        1 => Ok(names.into_iter().next().unwrap()),
        0 => Err(Error::InvalidArgument(format!(
            "no dataset ending in '{suffix}'; pass a dataset name"
        ))),
        _ => Err(Error::InvalidArgument(format!(
            "multiple candidate datasets {names:?}; pass a dataset name"
        ))),
    }
}

// ---------------------------------------------------------------------------
// phantom
// ---------------------------------------------------------------------------

fn cmd_phantom(args: &PhantomArgs) -> CliResult {
    let params = PhantomParams {
        image_n: args.image_n,
        pitch_m: args.pitch_um * 1e-6,
        ..PhantomParams::default()
    };
    params.validate().map_err(CliError::from)?;
    let n_px = params.image_n;

    let mut writer = ContainerWriter::new();
    writer.begin_dataset(
        "ground_truth",
        DType::F32,
        &[n_px, n_px],
        Compression::Deflate,
    )?;
    writer.begin_dataset("labels", DType::U8, &[n_px, n_px], Compression::Deflate)?;

    const CHUNK: usize = 32;
    let mut start = 0usize;
    while start < args.n {
        let end = (start + CHUNK).min(args.n);
        let generated: Vec<(Vec<f32>, Vec<u8>)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let seed = derive_sample_seed(args.seed, i as u64);
                let (pressure, labels) = generate_phantom(seed, &params)?;
                Ok((
                    to_f32(&pressure.values),
                    labels.values.iter().copied().collect(),
                ))
            })
            .collect::<Result<_, Error>>()?;
        for (pressure, labels) in generated {
            writer.append_record_to("ground_truth", &DataBuf::F32(pressure))?;
            writer.append_record_to("labels", &DataBuf::U8(labels))?;
        }
        start = end;
    }

    let mut metadata = BTreeMap::new();
    metadata.insert("generator".to_string(), "oadx phantom".to_string());
    metadata.insert("seed".to_string(), args.seed.to_string());
    metadata.insert("grid_n".to_string(), n_px.to_string());
    metadata.insert("pitch_m".to_string(), params.pitch_m.to_string());
    metadata.insert(
        "phantom_params".to_string(),
        serde_json::to_string(&params).unwrap(),
    );
    writer.finish(&args.out, &metadata)?;
    write_config_sidecar(&args.out, "phantom", args)?;
    println!(
        "wrote {} phantoms to {} (ground_truth + labels)",
        args.n,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

fn cmd_forward(args: &ForwardArgs) -> CliResult {
    let array: ArrayKind = args.array.parse().map_err(CliError::from)?;
    let mut input = Container::open(&args.input)?;
    let info = input.dataset_info(&args.dataset)?;
    if info.record_shape().len() != 2 || info.record_shape()[0] != info.record_shape()[1] {
        return Err(CliError::Validation(format!(
            "dataset '{}' records are {:?}, expected square images",
            args.dataset,
            info.record_shape()
        )));
    }
    let n_px = info.record_shape()[0];
    let pitch_m = match args.pitch_um {
        Some(um) => um * 1e-6,
        None => metadata_f64(input.metadata(), "pitch_m").unwrap_or(1e-4),
    };
    let grid = ImageGrid::centered(n_px, pitch_m).map_err(CliError::from)?;
    let geom = make_array(array);
    let physics = PhysicsConfig {
        speed_of_sound: args.sos_mps,
        sampling_rate: args.fs_msps * 1e6,
        n_samples: args.n_samples,
        grueneisen: args.grueneisen,
    };
    oadx_core::forward::check_time_window(&geom, &grid, &physics).map_err(CliError::from)?;

    let dataset_name = format!("{}_raw", array.dataset_prefix());
    let mut writer = ContainerWriter::new();
    writer.begin_dataset(
        &dataset_name,
        DType::F32,
        &[physics.n_samples, geom.n_elements()],
        Compression::Deflate,
    )?;

    const CHUNK: usize = 8;
    let n_records = info.n_records();
    let mut start = 0usize;
    while start < n_records {
        let end = (start + CHUNK).min(n_records);
        let maps: Vec<Array2<f64>> = (start..end)
            .map(|i| read_f64_record(&mut input, &args.dataset, i, n_px, n_px))
            .collect::<Result<_, Error>>()?;
        let signals: Vec<Vec<f32>> = maps
            .into_par_iter()
            .map(|values| {
                let pmap = PressureMap::new(values, grid)?;
                let s = simulate_signals(&pmap, &geom, &physics)?;
                Ok(to_f32(&s.values))
            })
            .collect::<Result<_, Error>>()?;
        for s in signals {
            writer.append_record_to(&dataset_name, &DataBuf::F32(s))?;
        }
        start = end;
    }

    let mut metadata = input.metadata().clone();
    metadata.insert("source".to_string(), "oadx forward".to_string());
    metadata.insert("array".to_string(), array.to_string());
    metadata.insert("sos_mps".to_string(), physics.speed_of_sound.to_string());
    metadata.insert(
        "sampling_rate_hz".to_string(),
        physics.sampling_rate.to_string(),
    );
    metadata.insert("n_samples".to_string(), physics.n_samples.to_string());
    metadata.insert("grueneisen".to_string(), physics.grueneisen.to_string());
    metadata.insert("grid_n".to_string(), n_px.to_string());
    metadata.insert("pitch_m".to_string(), pitch_m.to_string());
    writer.finish(&args.out, &metadata)?;
    write_config_sidecar(&args.out, "forward", args)?;
    println!(
        "wrote {n_records} signal records ({} x {}) as '{dataset_name}' to {}",
        physics.n_samples,
        geom.n_elements(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// recon
// ---------------------------------------------------------------------------

fn parse_mask(spec: &str, geom: &ArrayGeometry) -> Result<Option<ChannelMask>, Error> {
    if spec == "none" {
        return Ok(None);
    }
    if spec == "linear_part" || spec == "linear" {
        return Ok(Some(linear_part_mask(geom)?));
    }
    if let Some(k) = spec.strip_prefix("sparse:") {
        let keep: usize = k
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad sparse mask count '{k}'")))?;
        return Ok(Some(sparse_mask(geom, keep)?));
    }
    if let Some(k) = spec.strip_prefix("limited:") {
        let keep: usize = k
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad limited mask count '{k}'")))?;
        return Ok(Some(limited_view_mask(geom, keep)?));
    }
    Err(Error::InvalidArgument(format!(
        "mask '{spec}' is not none, sparse:K, limited:K or linear_part"
    )))
}

fn parse_band(spec: &str) -> Result<(f64, f64), Error> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::InvalidArgument(format!(
            "band '{spec}' must be 'low,high' in Hz"
        )));
    }
    let lo: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad band low '{}'", parts[0])))?;
    let hi: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad band high '{}'", parts[1])))?;
    Ok((lo, hi))
}

/// Dataset name for a reconstruction: `vc_BP`, `vc_ss64_BP`, `sc_lv128_BP`,
/// `linear_BP` for the multisegment linear part.
fn recon_dataset_name(kind: ArrayKind, mask: &Option<ChannelMask>) -> String {
    let tag = mask.as_ref().map(|m| m.dataset_tag()).unwrap_or_default();
    if tag == "linear" {
        "linear_BP".to_string()
    } else if tag.is_empty() {
        format!("{}_BP", kind.dataset_prefix())
    } else {
        format!("{}_{}_BP", kind.dataset_prefix(), tag)
    }
}

fn cmd_recon(args: &ReconArgs) -> CliResult {
    let array: ArrayKind = args.array.parse().map_err(CliError::from)?;
    let mut input = Container::open(&args.input)?;
    let dataset = pick_dataset(&input, "_raw", &args.dataset)?;
    let info = input.dataset_info(&dataset)?;
    if info.record_shape().len() != 2 {
        return Err(CliError::Validation(format!(
            "dataset '{dataset}' records are {:?}, expected (n_samples, n_elements)",
            info.record_shape()
        )));
    }
    let (n_samples, n_elements) = (info.record_shape()[0], info.record_shape()[1]);
    let geom = make_array(array);
    if geom.n_elements() != n_elements {
        return Err(CliError::Validation(format!(
            "array {} has {} elements but records carry {n_elements} channels",
            array,
            geom.n_elements()
        )));
    }

    let sos = args
        .sos_mps
        .or_else(|| metadata_f64(input.metadata(), "sos_mps"))
        .unwrap_or(1510.0);
    let fs = metadata_f64(input.metadata(), "sampling_rate_hz").unwrap_or(40e6);
    let grueneisen = metadata_f64(input.metadata(), "grueneisen").unwrap_or(1.0);
    let physics = PhysicsConfig {
        speed_of_sound: sos,
        sampling_rate: fs,
        n_samples,
        grueneisen,
    };
    let grid = ImageGrid::centered(args.grid_n, args.pitch_um * 1e-6).map_err(CliError::from)?;
    let mask = parse_mask(&args.mask, &geom).map_err(CliError::from)?;
    let mode: ReconMode = args.mode.parse().map_err(CliError::from)?;
    let band = args
        .band
        .as_deref()
        .map(parse_band)
        .transpose()
        .map_err(CliError::from)?;
    let config = ReconConfig {
        grid,
        mode,
        band,
        mask: mask.clone(),
        adjoint_weights: false,
    };
    let out_dataset = recon_dataset_name(array, &mask);

    let mut writer = ContainerWriter::new();
    writer.begin_dataset(
        &out_dataset,
        DType::F32,
        &[grid.n, grid.n],
        Compression::Deflate,
    )?;

    const CHUNK: usize = 4;
    let n_records = info.n_records();
    let mut start = 0usize;
    while start < n_records {
        let end = (start + CHUNK).min(n_records);
        let raw: Vec<Array2<f64>> = (start..end)
            .map(|i| read_f64_record(&mut input, &dataset, i, n_samples, n_elements))
            .collect::<Result<_, Error>>()?;
        let images: Vec<Vec<f32>> = raw
            .into_par_iter()
            .map(|values| {
                let signals = SignalMatrix {
                    values,
                    physics,
                    array_kind: array,
                };
                let mut image = reconstruct(&signals, &geom, &config)?;
                if args.normalize {
                    image = normalize_clip(&image)?;
                }
                Ok(to_f32(&image))
            })
            .collect::<Result<_, Error>>()?;
        for img in images {
            writer.append_record_to(&out_dataset, &DataBuf::F32(img))?;
        }
        start = end;
    }

    let mut metadata = input.metadata().clone();
    metadata.insert("source".to_string(), "oadx recon".to_string());
    metadata.insert("array".to_string(), array.to_string());
    metadata.insert("mask".to_string(), args.mask.clone());
    metadata.insert("mode".to_string(), args.mode.clone());
    metadata.insert(
        "band_hz".to_string(),
        band.map(|(lo, hi)| format!("{lo},{hi}"))
            .unwrap_or_else(|| "none".to_string()),
    );
    metadata.insert("grid_n".to_string(), grid.n.to_string());
    metadata.insert("pitch_m".to_string(), grid.pitch_m.to_string());
    metadata.insert("sos_mps".to_string(), sos.to_string());
    metadata.insert("normalized".to_string(), args.normalize.to_string());
    writer.finish(&args.out, &metadata)?;
    write_config_sidecar(&args.out, "recon", args)?;
    println!(
        "wrote {n_records} images as '{out_dataset}' to {}",
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(args: &EvalArgs) -> CliResult {
    let wanted: Vec<String> = args
        .metrics
        .split(',')
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    for m in &wanted {
        if !matches!(
            m.as_str(),
            "mae" | "rmse" | "psnr" | "ssim" | "dice" | "iou" | "hd95"
        ) {
            return Err(CliError::Validation(format!("unknown metric '{m}'")));
        }
    }
    let image_metrics: Vec<&str> = wanted
        .iter()
        .map(String::as_str)
        .filter(|m| matches!(*m, "mae" | "rmse" | "psnr" | "ssim"))
        .collect();
    let seg_metrics: Vec<&str> = wanted
        .iter()
        .map(String::as_str)
        .filter(|m| matches!(*m, "dice" | "iou" | "hd95"))
        .collect();

    let mut report = MetricReport::new();

    if !image_metrics.is_empty() {
        let target_path = args
            .target
            .as_ref()
            .ok_or_else(|| CliError::Validation("image metrics need --target".to_string()))?;
        let mut pred_c = Container::open(&args.pred)?;
        let mut target_c = Container::open(target_path)?;
        let pred_ds = pick_dataset(&pred_c, "", &args.pred_dataset)?;
        let target_ds = pick_dataset(&target_c, "", &args.target_dataset)?;
        let pi = pred_c.dataset_info(&pred_ds)?;
        let ti = target_c.dataset_info(&target_ds)?;
        if pi.n_records() != ti.n_records() || pi.record_shape() != ti.record_shape() {
            return Err(CliError::Validation(format!(
                "pred {:?} and target {:?} do not line up",
                pi.shape, ti.shape
            )));
        }
        if pi.record_shape().len() != 2 {
            return Err(CliError::Validation(
                "image metrics need 2-D records".into(),
            ));
        }
        let (rows, cols) = (pi.record_shape()[0], pi.record_shape()[1]);
        let mut columns: BTreeMap<&str, Vec<MetricValue>> = BTreeMap::new();
        for i in 0..pi.n_records() {
            let mut p = read_f64_record(&mut pred_c, &pred_ds, i, rows, cols)?;
            let mut t = read_f64_record(&mut target_c, &target_ds, i, rows, cols)?;
            if args.normalize {
                p = normalize_clip(&p).map_err(CliError::from)?;
                t = normalize_clip(&t).map_err(CliError::from)?;
            }
            for m in &image_metrics {
                let value = match *m {
                    "mae" => MetricValue::from_f64(metrics::mae(&p, &t).map_err(CliError::from)?),
                    "rmse" => MetricValue::from_f64(metrics::rmse(&p, &t).map_err(CliError::from)?),
                    "psnr" => MetricValue::from_f64(
                        metrics::psnr(&p, &t, args.data_range).map_err(CliError::from)?,
                    ),
                    "ssim" => MetricValue::from_f64(
                        metrics::ssim(
                            &p,
                            &t,
                            &SsimOptions {
                                data_range: args.data_range,
                                ..SsimOptions::default()
                            },
                        )
                        .map_err(CliError::from)?,
                    ),
                    _ => unreachable!(),
                };
                columns.entry(m).or_default().push(value);
            }
        }
        for m in &image_metrics {
            if let Some(values) = columns.remove(*m) {
                report.add_column(*m, values);
            }
        }
    }

    if !seg_metrics.is_empty() {
        let labels_path = args.labels.as_ref().ok_or_else(|| {
            CliError::Validation("segmentation metrics need --labels".to_string())
        })?;
        let classes: Vec<u8> = args
            .classes
            .split(',')
            .map(|c| {
                c.trim()
                    .parse()
                    .map_err(|_| CliError::Validation(format!("bad class id '{c}'")))
            })
            .collect::<Result<_, _>>()?;
        let mut pred_c = Container::open(&args.pred)?;
        let mut labels_c = Container::open(labels_path)?;
        let pred_ds = match &args.pred_dataset {
            Some(d) => d.clone(),
            None => pick_dataset(&pred_c, "labels", &None)
                .or_else(|_| pick_dataset(&pred_c, "", &None))
                .map_err(CliError::from)?,
        };
        let pi = pred_c.dataset_info(&pred_ds)?;
        let li = labels_c.dataset_info(&args.labels_dataset)?;
        if pi.n_records() != li.n_records() || pi.record_shape() != li.record_shape() {
            return Err(CliError::Validation(format!(
                "pred {:?} and labels {:?} do not line up",
                pi.shape, li.shape
            )));
        }
        let (rows, cols) = (pi.record_shape()[0], pi.record_shape()[1]);
        let read_labels =
            |c: &mut FileContainer, ds: &str, i: usize| -> Result<Array2<u8>, Error> {
                let rec = c.read_record(ds, i)?;
                let data = rec.as_u8()?.to_vec();
                Array2::from_shape_vec((rows, cols), data)
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))
            };
        let mut columns: BTreeMap<String, Vec<MetricValue>> = BTreeMap::new();
        for i in 0..pi.n_records() {
            let p = read_labels(&mut pred_c, &pred_ds, i)?;
            let t = read_labels(&mut labels_c, &args.labels_dataset, i)?;
            for m in &seg_metrics {
                for &class in &classes {
                    let value = match *m {
                        "dice" => MetricValue::from_f64(
                            metrics::dice(&p, &t, class).map_err(CliError::from)?,
                        ),
                        "iou" => MetricValue::from_f64(
                            metrics::iou(&p, &t, class).map_err(CliError::from)?,
                        ),
                        "hd95" => match metrics::hd95(&p, &t, class) {
                            Ok(v) => MetricValue::from_f64(v),
                            Err(Error::UndefinedMetric(_)) => MetricValue::Undefined,
                            Err(e) => return Err(e.into()),
                        },
                        _ => unreachable!(),
                    };
                    columns
                        .entry(format!("{m}_c{class}"))
                        .or_default()
                        .push(value);
                }
            }
        }
        for (name, values) in columns {
            report.add_column(name, values);
        }
    }

    let csv_path = PathBuf::from(format!("{}.csv", args.out.display()));
    let json_path = PathBuf::from(format!("{}.json", args.out.display()));
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(CliError::from)?;
    std::fs::write(&csv_path, csv)?;
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&report.summary_json()).unwrap(),
    )?;
    write_config_sidecar(&args.out, "eval", args)?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

fn image_checksum(img: &Array2<f64>) -> u32 {
    let bytes: Vec<u8> = img.iter().flat_map(|v| v.to_le_bytes()).collect();
    crc32fast::hash(&bytes)
}

fn cmd_bench(args: &BenchArgs) -> CliResult {
    if args.repeat == 0 {
        return Err(CliError::Validation("--repeat must be positive".into()));
    }
    let array: ArrayKind = args.array.parse().map_err(CliError::from)?;
    let geom = make_array(array);
    let grid = ImageGrid::centered(args.grid_n, args.pitch_um * 1e-6).map_err(CliError::from)?;
    let physics = PhysicsConfig::default();
    let mode: ReconMode = args.mode.parse().map_err(CliError::from)?;

    // A deterministic scene drives the benchmark: a centered disk plus a
    // few off-center point sources.
    let n = grid.n;
    let mut values = Array2::zeros((n, n));
    let center = (n as f64 - 1.0) / 2.0;
    let disk_r = n as f64 / 6.0;
    for ((r, c), v) in values.indexed_iter_mut() {
        let d = (r as f64 - center).hypot(c as f64 - center);
        if d <= disk_r {
            *v = 1.0 - d / (2.0 * disk_r);
        }
    }
    for (fr, fc) in [(0.25, 0.25), (0.7, 0.3), (0.3, 0.8)] {
        values[((n as f64 * fr) as usize, (n as f64 * fc) as usize)] = 1.0;
    }
    let pressure = PressureMap::new(values, grid).map_err(CliError::from)?;
    let signals = simulate_signals(&pressure, &geom, &physics).map_err(CliError::from)?;
    let config = ReconConfig {
        grid,
        mode,
        band: None,
        mask: Some(full_mask(&geom)),
        adjoint_weights: false,
    };

    let run_in = |threads: usize| -> Result<Array2<f64>, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
        pool.install(|| reconstruct(&signals, &geom, &config))
            .map_err(CliError::from)
    };

    // Schedule-independence contract: one thread vs the requested count.
    let reference = run_in(1)?;
    let threads = if args.threads == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        args.threads
    };
    let subject = run_in(threads)?;
    let ref_sum = image_checksum(&reference);
    let sub_sum = image_checksum(&subject);
    if ref_sum != sub_sum {
        return Err(CliError::Numeric(format!(
            "reconstruction differs across thread counts: crc(1 thread) = {ref_sum:08x}, crc({threads} threads) = {sub_sum:08x}"
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    let mut timings_ms = Vec::with_capacity(args.repeat);
    for _ in 0..args.repeat {
        let start = Instant::now();
        let _ = pool
            .install(|| reconstruct(&signals, &geom, &config))
            .map_err(CliError::from)?;
        timings_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mut sorted = timings_ms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_ms = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let pixels_channels_per_s = (grid.n * grid.n * geom.n_elements()) as f64 / (median_ms / 1e3);

    let report = serde_json::json!({
        "command": "bench",
        "config": args,
        "threads_used": threads,
        "timings_ms": timings_ms,
        "median_ms": median_ms,
        "pixels_channels_per_s": pixels_channels_per_s,
        "image_crc32": format!("{ref_sum:08x}"),
    });
    let text = serde_json::to_string_pretty(&report).unwrap();
    match &args.out {
        Some(path) => {
            std::fs::write(path, &text)?;
            write_config_sidecar(path, "bench", args)?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// export-png
// ---------------------------------------------------------------------------

fn cmd_export_png(args: &ExportPngArgs) -> CliResult {
    let mut c = Container::open(&args.input)?;
    let dataset = pick_dataset(&c, "", &args.dataset)?;
    let info = c.dataset_info(&dataset)?;
    if info.record_shape().len() != 2 {
        return Err(CliError::Validation(format!(
            "dataset '{dataset}' records are {:?}, expected a 2-D image",
            info.record_shape()
        )));
    }
    let (rows, cols) = (info.record_shape()[0], info.record_shape()[1]);
    let img = read_f64_record(&mut c, &dataset, args.index, rows, cols)?;
    let normalized = normalize_clip(&img).map_err(CliError::from)?;
    let quantized = export::image_to_u8(&normalized);
    match args.out.extension().and_then(|e| e.to_str()) {
        Some("pgm") => export::write_pgm(&args.out, &quantized).map_err(CliError::from)?,
        _ => export::write_png(&args.out, &quantized).map_err(CliError::from)?,
    }
    write_config_sidecar(&args.out, "export-png", args)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

fn cmd_split(args: &SplitArgs) -> CliResult {
    let kind: SplitKind = args.kind.parse().map_err(CliError::from)?;
    let population = match kind {
        SplitKind::Msfd => Population::VolunteerIds(MSFD_VOLUNTEERS.to_vec()),
        SplitKind::Swfd => Population::VolunteerIds(SWFD_VOLUNTEERS.to_vec()),
        SplitKind::Scd => Population::SliceCount(args.slices.unwrap_or(SCD_SLICES)),
        SplitKind::Mini => Population::SliceCount(args.slices.unwrap_or(MINI_SLICES)),
    };
    let split = make_split(kind, &population).map_err(CliError::from)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&split).unwrap())?;
    write_config_sidecar(&args.out, "split", args)?;
    println!(
        "wrote {} (train {}, val {}, test {})",
        args.out.display(),
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    Ok(())
}
