//! Reconstruction grid: the mesh of image pixels shared by the forward model
//! and the backprojection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square pixel mesh in the array coordinate frame.
///
/// The frame is shared with [`crate::geometry`]: the origin sits at the
/// arrays' center of curvature and the imaged region extends below the
/// arrays in −y. Pixel (row, col) maps to physical coordinates as
///
/// ```text
/// x = origin.x + (col − (n−1)/2) · pitch_m
/// y = origin.y + ((n−1)/2 − row) · pitch_m
/// ```
///
/// so row 0 is the top edge (+y) and column 0 the left edge (−x). Both the
/// forward model and the reconstruction use exactly this formula; it is the
/// contract that makes their time-of-flight tables agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageGrid {
    /// Pixels per side.
    pub n: usize,
    /// Pixel pitch in meters.
    pub pitch_m: f64,
    /// Physical coordinates of the grid center, in meters.
    pub origin: [f64; 2],
}

/// Default grid: 256×256 pixels at 0.1 mm pitch (25.6 mm field of view),
/// centered on the array center of curvature.
pub const DEFAULT_GRID_N: usize = 256;
pub const DEFAULT_PITCH_M: f64 = 0.1e-3;

impl Default for ImageGrid {
    fn default() -> Self {
        ImageGrid {
            n: DEFAULT_GRID_N,
            pitch_m: DEFAULT_PITCH_M,
            origin: [0.0, 0.0],
        }
    }
}

impl ImageGrid {
    /// Grid centered at the coordinate origin.
    pub fn centered(n: usize, pitch_m: f64) -> Result<Self> {
        Self::new(n, pitch_m, [0.0, 0.0])
    }

    pub fn new(n: usize, pitch_m: f64, origin: [f64; 2]) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid needs n >= 2, got {n}")));
        }
        let pitch_valid = pitch_m.is_finite() && pitch_m > 0.0;
        if !pitch_valid {
            return Err(Error::invalid(format!(
                "grid pitch must be positive and finite, got {pitch_m}"
            )));
        }
        if !origin[0].is_finite() || !origin[1].is_finite() {
            return Err(Error::invalid("grid origin must be finite"));
        }
        Ok(ImageGrid { n, pitch_m, origin })
    }

    /// Physical (x, y) of the pixel center at (row, col), in meters.
    #[inline]
    pub fn pixel_xy(&self, row: usize, col: usize) -> [f64; 2] {
        let c = (self.n as f64 - 1.0) / 2.0;
        [
            self.origin[0] + (col as f64 - c) * self.pitch_m,
            self.origin[1] + (c - row as f64) * self.pitch_m,
        ]
    }

    pub fn n_pixels(&self) -> usize {
        self.n * self.n
    }
}
