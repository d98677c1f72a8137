//! Discrete forward operator: raw signal matrices from initial pressure maps.
//!
//! The model is a two-stage discretization of the spherical-mean solution of
//! the acoustic wave equation, restricted to the imaging plane:
//!
//! 1. spherical-mean splat: every pixel deposits its pressure onto each
//!    channel's time axis at the pixel↔element time of flight, with 1/r
//!    distance weighting and linear (two-bin) splatting;
//! 2. temporal derivative: central difference along time, scaled by
//!    Γ·fs/(4π·c).
//!
//! Stage 1 is exposed on its own as [`spherical_mean_operator`]; it is a
//! linear operator whose exact transpose is the weighted delay-and-sum read
//! in [`crate::recon`], which is what makes the adjoint test in that module
//! meaningful.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ArrayKind};
use crate::grid::ImageGrid;

/// Acquisition constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    /// Speed of sound in the coupling medium, m/s.
    pub speed_of_sound: f64,
    /// Sampling rate, samples/s.
    pub sampling_rate: f64,
    /// Samples per channel.
    pub n_samples: usize,
    /// Grüneisen scale factor (dimensionless).
    pub grueneisen: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            speed_of_sound: 1510.0,
            sampling_rate: 40e6,
            n_samples: 2030,
            grueneisen: 1.0,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        pos(self.speed_of_sound, "speed_of_sound")?;
        pos(self.sampling_rate, "sampling_rate")?;
        pos(self.grueneisen, "grueneisen")?;
        if self.n_samples < 2 {
            return Err(Error::invalid(format!(
                "n_samples must be >= 2, got {}",
                self.n_samples
            )));
        }
        Ok(())
    }
}

/// Initial acoustic pressure on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureMap {
    pub values: Array2<f64>,
    pub grid: ImageGrid,
}

impl PressureMap {
    pub fn new(values: Array2<f64>, grid: ImageGrid) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows != grid.n || cols != grid.n {
            return Err(Error::ShapeMismatch(format!(
                "pressure map is {rows}×{cols} but grid expects {0}×{0}",
                grid.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("pressure map contains non-finite values"));
        }
        Ok(PressureMap { values, grid })
    }

    pub fn zeros(grid: ImageGrid) -> Self {
        PressureMap {
            values: Array2::zeros((grid.n, grid.n)),
            grid,
        }
    }
}

/// Raw time-domain signals, shape (n_samples, n_elements), with the physics
/// constants and source array recorded alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    pub values: Array2<f64>,
    pub physics: PhysicsConfig,
    pub array_kind: ArrayKind,
}

impl SignalMatrix {
    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_elements(&self) -> usize {
        self.values.ncols()
    }
}

/// Time of flight between one element and one pixel, in fractional sample
/// indices: |r_i − x_j| · fs / c.
#[inline]
pub fn tof_samples(element: [f64; 2], pixel: [f64; 2], physics: &PhysicsConfig) -> f64 {
    let d = (element[0] - pixel[0]).hypot(element[1] - pixel[1]);
    d * physics.sampling_rate / physics.speed_of_sound
}

/// Reject grids whose farthest pixel falls outside the acquisition window.
pub fn check_time_window(
    geom: &ArrayGeometry,
    grid: &ImageGrid,
    physics: &PhysicsConfig,
) -> Result<()> {
    physics.validate()?;
    // The farthest pixel from any element is one of the grid corners.
    let n = grid.n;
    let corners = [
        grid.pixel_xy(0, 0),
        grid.pixel_xy(0, n - 1),
        grid.pixel_xy(n - 1, 0),
        grid.pixel_xy(n - 1, n - 1),
    ];
    let mut max_d = 0.0f64;
    for e in geom.positions() {
        for c in &corners {
            let d = (e[0] - c[0]).hypot(e[1] - c[1]);
            if d > max_d {
                max_d = d;
            }
        }
    }
    let needed = max_d * physics.sampling_rate / physics.speed_of_sound;
    if needed > (physics.n_samples - 1) as f64 {
        return Err(Error::OutsideTimeWindow {
            distance_m: max_d,
            needed_samples: needed,
            available_samples: physics.n_samples,
        });
    }
    Ok(())
}

/// Full table of fractional sample indices, shape (n_elements, n_pixels)
/// with pixels in row-major grid order.
///
/// For production grid sizes this table is large (a 1024-element array on a
/// 256² grid needs ~0.5 GiB); the pipeline kernels below recompute entries
/// on the fly instead of materializing it.
pub fn tof_table(
    geom: &ArrayGeometry,
    grid: &ImageGrid,
    physics: &PhysicsConfig,
) -> Result<Array2<f64>> {
    check_time_window(geom, grid, physics)?;
    let n_pix = grid.n_pixels();
    let mut table = Array2::zeros((geom.n_elements(), n_pix));
    for (i, e) in geom.positions().iter().enumerate() {
        for row in 0..grid.n {
            for col in 0..grid.n {
                table[(i, row * grid.n + col)] = tof_samples(*e, grid.pixel_xy(row, col), physics);
            }
        }
    }
    Ok(table)
}

/// Stage 1 of the forward model: the linear spherical-mean splat, without
/// the temporal derivative.
///
/// Per element i and pixel j the pixel value is deposited at the fractional
/// sample index tof_ij, split linearly over the two neighbouring bins, with
/// weight w_ij = 1 / max(|r_i − x_j|, pitch). Columns are accumulated
/// independently so the result does not depend on the parallel schedule.
pub fn spherical_mean_operator(
    pmap: &PressureMap,
    geom: &ArrayGeometry,
    physics: &PhysicsConfig,
) -> Result<SignalMatrix> {
    check_time_window(geom, &pmap.grid, physics)?;
    let n_samples = physics.n_samples;
    let grid = &pmap.grid;
    let values = &pmap.values;

    let columns: Vec<Vec<f64>> = geom
        .positions()
        .par_iter()
        .map(|element| {
            let mut col = vec![0.0f64; n_samples];
            for row in 0..grid.n {
                for c in 0..grid.n {
                    let v = values[(row, c)];
                    if v == 0.0 {
                        continue;
                    }
                    let p = grid.pixel_xy(row, c);
                    let d = (element[0] - p[0]).hypot(element[1] - p[1]);
                    let w = 1.0 / d.max(grid.pitch_m);
                    let t = d * physics.sampling_rate / physics.speed_of_sound;
                    let k = t.floor() as usize;
                    let frac = t - k as f64;
                    col[k] += v * w * (1.0 - frac);
                    if k + 1 < n_samples {
                        col[k + 1] += v * w * frac;
                    }
                }
            }
            col
        })
        .collect();

    let mut out = Array2::zeros((n_samples, geom.n_elements()));
    for (i, col) in columns.iter().enumerate() {
        for (k, &s) in col.iter().enumerate() {
            out[(k, i)] = s;
        }
    }
    Ok(SignalMatrix {
        values: out,
        physics: *physics,
        array_kind: geom.kind(),
    })
}

/// Central difference along the time axis scaled by `fs`, one-sided at the
/// endpoints. Shared by the forward model's derivative stage and the
/// reconstruction's signal derivative.
pub(crate) fn time_derivative(values: &Array2<f64>, fs: f64) -> Array2<f64> {
    let (n, m) = values.dim();
    let mut out = Array2::zeros((n, m));
    for i in 0..m {
        out[(0, i)] = (values[(1, i)] - values[(0, i)]) * fs;
        for k in 1..n - 1 {
            out[(k, i)] = (values[(k + 1, i)] - values[(k - 1, i)]) * 0.5 * fs;
        }
        out[(n - 1, i)] = (values[(n - 1, i)] - values[(n - 2, i)]) * fs;
    }
    out
}

/// Full forward model: spherical-mean splat followed by the temporal
/// derivative, scaled by Γ·fs/(4π·c).
pub fn simulate_signals(
    pmap: &PressureMap,
    geom: &ArrayGeometry,
    physics: &PhysicsConfig,
) -> Result<SignalMatrix> {
    let stage1 = spherical_mean_operator(pmap, geom, physics)?;
    let scale = physics.grueneisen / (4.0 * std::f64::consts::PI * physics.speed_of_sound);
    let mut deriv = time_derivative(&stage1.values, physics.sampling_rate);
    deriv.mapv_inplace(|v| v * scale);
    Ok(SignalMatrix {
        values: deriv,
        physics: *physics,
        array_kind: geom.kind(),
    })
}
