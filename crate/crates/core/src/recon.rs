//! Delay-and-sum backprojection with optional bandpass preprocessing and
//! channel masking.
//!
//! Two reconstruction modes are provided:
//!
//! * `delay_sum`: pixel value is the sum of each active channel read at the
//!   pixel's time of flight. With `adjoint_weights` enabled the read is
//!   weighted exactly like the forward splat, making it the exact transpose
//!   of [`crate::forward::spherical_mean_operator`].
//! * `derivative_bp`: the discretized backprojection sum
//!   `Σ_i [p(r_i, t_ij) − t_ij · ∂p/∂t(r_i, t_ij)]` with `t_ij` in seconds.
//!
//! Reconstruction parallelizes over image rows; every pixel accumulates
//! privately in channel order, so results are independent of the thread
//! count.

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{check_time_window, time_derivative, SignalMatrix};
use crate::geometry::{ArrayGeometry, ChannelMask};
use crate::grid::ImageGrid;

/// Lower clip bound applied by [`normalize_clip`].
pub const CLIP_MIN: f64 = -0.2;

/// Default bandpass corners (Hz) for preprocessing raw signals.
pub const DEFAULT_BAND: (f64, f64) = (0.5e6, 8.0e6);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    DelaySum,
    DerivativeBp,
}

impl std::str::FromStr for ReconMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delay_sum" => Ok(ReconMode::DelaySum),
            "derivative_bp" => Ok(ReconMode::DerivativeBp),
            other => Err(Error::invalid(format!("unknown recon mode '{other}'"))),
        }
    }
}

/// Reconstruction parameters.
#[derive(Debug, Clone)]
pub struct ReconConfig {
    pub grid: ImageGrid,
    pub mode: ReconMode,
    /// Optional bandpass corners (low_hz, high_hz); applied by
    /// [`reconstruct`] before beamforming.
    pub band: Option<(f64, f64)>,
    /// Optional channel mask; inactive channels are skipped.
    pub mask: Option<ChannelMask>,
    /// Weight each read by the forward splat weight 1/max(r, pitch) so that
    /// `delay_sum` is the exact transpose of the spherical-mean operator.
    pub adjoint_weights: bool,
}

impl ReconConfig {
    pub fn new(grid: ImageGrid, mode: ReconMode) -> Self {
        ReconConfig {
            grid,
            mode,
            band: None,
            mask: None,
            adjoint_weights: false,
        }
    }
}

/// Zero-phase frequency-domain bandpass.
///
/// The transfer function is 1 inside [low, high] and 0 outside, with
/// raised-cosine transitions of width 10% of the respective band edge
/// (`0.9·low..low` and `high..1.1·high`), evaluated on |f| so the output
/// stays real.
pub fn bandpass(signals: &SignalMatrix, low_hz: f64, high_hz: f64) -> Result<SignalMatrix> {
    let fs = signals.physics.sampling_rate;
    if !(low_hz >= 0.0 && low_hz < high_hz && high_hz <= fs / 2.0) {
        return Err(Error::invalid(format!(
            "band ({low_hz}, {high_hz}) Hz must satisfy 0 <= low < high <= fs/2 = {}",
            fs / 2.0
        )));
    }
    let n = signals.n_samples();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let gain = |f: f64| -> f64 {
        let f = f.abs();
        let w_lo = 0.1 * low_hz;
        let w_hi = 0.1 * high_hz;
        if f < low_hz - w_lo {
            0.0
        } else if f < low_hz {
            // w_lo > 0 whenever this branch is reachable.
            0.5 * (1.0 - (std::f64::consts::PI * (low_hz - f) / w_lo).cos())
        } else if f <= high_hz {
            1.0
        } else if f <= high_hz + w_hi {
            0.5 * (1.0 + (std::f64::consts::PI * (f - high_hz) / w_hi).cos())
        } else {
            0.0
        }
    };
    let mask: Vec<f64> = (0..n)
        .map(|b| {
            let f = if b <= n / 2 {
                b as f64 * fs / n as f64
            } else {
                (b as f64 - n as f64) * fs / n as f64
            };
            gain(f)
        })
        .collect();

    let columns: Vec<Vec<f64>> = (0..signals.n_elements())
        .into_par_iter()
        .map(|i| {
            let mut buf: Vec<Complex<f64>> = signals
                .values
                .column(i)
                .iter()
                .map(|&v| Complex::new(v, 0.0))
                .collect();
            fwd.process(&mut buf);
            for (c, &m) in buf.iter_mut().zip(mask.iter()) {
                *c *= m;
            }
            inv.process(&mut buf);
            buf.iter().map(|c| c.re / n as f64).collect()
        })
        .collect();

    let mut out = Array2::zeros((n, signals.n_elements()));
    for (i, col) in columns.iter().enumerate() {
        for (k, &v) in col.iter().enumerate() {
            out[(k, i)] = v;
        }
    }
    Ok(SignalMatrix {
        values: out,
        physics: signals.physics,
        array_kind: signals.array_kind,
    })
}

/// Temporal derivative of every channel: central differences scaled by fs,
/// one-sided at the endpoints.
pub fn signal_time_derivative(signals: &SignalMatrix) -> Result<SignalMatrix> {
    if signals.n_samples() < 3 {
        return Err(Error::invalid(format!(
            "time derivative needs at least 3 samples, got {}",
            signals.n_samples()
        )));
    }
    Ok(SignalMatrix {
        values: time_derivative(&signals.values, signals.physics.sampling_rate),
        physics: signals.physics,
        array_kind: signals.array_kind,
    })
}

/// Zero out inactive channels; active channels are copied bit-identically.
pub fn apply_channel_mask(signals: &SignalMatrix, mask: &ChannelMask) -> Result<SignalMatrix> {
    if mask.len() != signals.n_elements() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries but signals have {} channels",
            mask.len(),
            signals.n_elements()
        )));
    }
    let mut values = signals.values.clone();
    for (i, &active) in mask.active().iter().enumerate() {
        if !active {
            values.column_mut(i).fill(0.0);
        }
    }
    Ok(SignalMatrix {
        values,
        physics: signals.physics,
        array_kind: signals.array_kind,
    })
}

fn active_channels(
    signals: &SignalMatrix,
    geom: &ArrayGeometry,
    config: &ReconConfig,
) -> Result<Vec<usize>> {
    if signals.n_elements() != geom.n_elements() {
        return Err(Error::ShapeMismatch(format!(
            "signals have {} channels but geometry has {} elements",
            signals.n_elements(),
            geom.n_elements()
        )));
    }
    match &config.mask {
        Some(mask) => {
            if mask.len() != geom.n_elements() {
                return Err(Error::ShapeMismatch(format!(
                    "mask has {} entries but geometry has {} elements",
                    mask.len(),
                    geom.n_elements()
                )));
            }
            Ok(mask.active_indices())
        }
        None => Ok((0..geom.n_elements()).collect()),
    }
}

#[inline]
fn lerp_at(col: ndarray::ArrayView1<'_, f64>, t: f64, n_samples: usize) -> f64 {
    let k = t.floor() as usize;
    let frac = t - k as f64;
    let mut v = col[k] * (1.0 - frac);
    if k + 1 < n_samples {
        v += col[k + 1] * frac;
    }
    v
}

/// Plain delay-and-sum beamforming: each pixel accumulates every active
/// channel read (linearly interpolated) at the pixel's time of flight.
///
/// With `config.adjoint_weights` the reads carry the forward splat weights,
/// making this the exact transpose of the spherical-mean operator. The
/// `band` and `mode` fields of the config are ignored here; use
/// [`reconstruct`] for the full pipeline.
pub fn delay_sum(
    signals: &SignalMatrix,
    geom: &ArrayGeometry,
    config: &ReconConfig,
) -> Result<Array2<f64>> {
    let active = active_channels(signals, geom, config)?;
    check_time_window(geom, &config.grid, &signals.physics)?;
    let grid = config.grid;
    let physics = signals.physics;
    let n_samples = signals.n_samples();
    let positions = geom.positions();
    let values = &signals.values;
    let adjoint = config.adjoint_weights;

    let rows: Vec<Vec<f64>> = (0..grid.n)
        .into_par_iter()
        .map(|row| {
            let mut out = vec![0.0f64; grid.n];
            for (col, o) in out.iter_mut().enumerate() {
                let p = grid.pixel_xy(row, col);
                let mut acc = 0.0;
                for &i in &active {
                    let e = positions[i];
                    let d = (e[0] - p[0]).hypot(e[1] - p[1]);
                    let t = d * physics.sampling_rate / physics.speed_of_sound;
                    let v = lerp_at(values.column(i), t, n_samples);
                    let w = if adjoint {
                        1.0 / d.max(grid.pitch_m)
                    } else {
                        1.0
                    };
                    acc += w * v;
                }
                *o = acc;
            }
            out
        })
        .collect();

    Ok(rows_to_image(rows, grid.n))
}

/// Derivative backprojection: `Σ_i [p(r_i, t_ij) − t_ij · ∂p/∂t(r_i, t_ij)]`
/// over the active channels, with `t_ij` carried in seconds.
pub fn backproject(
    signals: &SignalMatrix,
    geom: &ArrayGeometry,
    config: &ReconConfig,
) -> Result<Array2<f64>> {
    let active = active_channels(signals, geom, config)?;
    check_time_window(geom, &config.grid, &signals.physics)?;
    let deriv = signal_time_derivative(signals)?;
    let grid = config.grid;
    let physics = signals.physics;
    let n_samples = signals.n_samples();
    let positions = geom.positions();
    let p_values = &signals.values;
    let d_values = &deriv.values;

    let rows: Vec<Vec<f64>> = (0..grid.n)
        .into_par_iter()
        .map(|row| {
            let mut out = vec![0.0f64; grid.n];
            for (col, o) in out.iter_mut().enumerate() {
                let px = grid.pixel_xy(row, col);
                let mut acc = 0.0;
                for &i in &active {
                    let e = positions[i];
                    let d = (e[0] - px[0]).hypot(e[1] - px[1]);
                    let t = d * physics.sampling_rate / physics.speed_of_sound;
                    let t_seconds = d / physics.speed_of_sound;
                    let p = lerp_at(p_values.column(i), t, n_samples);
                    let dp = lerp_at(d_values.column(i), t, n_samples);
                    acc += p - t_seconds * dp;
                }
                *o = acc;
            }
            out
        })
        .collect();

    Ok(rows_to_image(rows, grid.n))
}

fn rows_to_image(rows: Vec<Vec<f64>>, n: usize) -> Array2<f64> {
    let mut img = Array2::zeros((n, n));
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            img[(r, c)] = v;
        }
    }
    img
}

/// Full reconstruction pipeline: optional bandpass, then the configured
/// beamforming mode.
pub fn reconstruct(
    signals: &SignalMatrix,
    geom: &ArrayGeometry,
    config: &ReconConfig,
) -> Result<Array2<f64>> {
    let filtered;
    let input = match config.band {
        Some((lo, hi)) => {
            filtered = bandpass(signals, lo, hi)?;
            &filtered
        }
        None => signals,
    };
    match config.mode {
        ReconMode::DelaySum => delay_sum(input, geom, config),
        ReconMode::DerivativeBp => backproject(input, geom, config),
    }
}

/// Scale an image by its maximum and clip at [`CLIP_MIN`].
///
/// The output maximum is exactly 1.0; the operation is idempotent.
pub fn normalize_clip(image: &Array2<f64>) -> Result<Array2<f64>> {
    let max = image.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let has_positive_max = max.is_finite() && max > 0.0;
    if !has_positive_max {
        return Err(Error::invalid(format!(
            "normalize_clip needs a positive maximum, got {max}"
        )));
    }
    Ok(image.mapv(|v| (v / max).max(CLIP_MIN)))
}
