//! Transducer array geometries and channel masks.
//!
//! Four arrays are supported, all in a shared coordinate frame whose origin
//! is the arrays' center of curvature, with the imaged region below the
//! arrays in −y:
//!
//! * `semi_circle`: 256 elements spread equiangularly over the upper half
//!   circle of radius 40 mm, ordered counterclockwise from (R, 0) to (−R, 0).
//!   First-to-last angular span is exactly π.
//! * `virtual_circle`: 1024 elements over the full 40 mm circle,
//!   counterclockwise from (R, 0), consecutive gap 2π/1024.
//! * `multisegment`: 64 concave + 128 linear + 64 concave elements. The
//!   linear segment is a horizontal chord of the 40 mm circle with exact
//!   0.25 mm pitch, centered on the y axis; its endpoints therefore lie on
//!   the circle. Each concave wing continues from a chord endpoint along the
//!   40 mm circle toward the imaged region, elements placed by arc length at
//!   0.6 mm pitch. Ordering is left-to-right: indices 0..64 left wing
//!   (outermost first), 64..192 linear, 192..256 right wing (innermost
//!   first).
//! * `linear`: exactly the 128 central elements of `multisegment`.
//!
//! Channel masks select the active subset of elements for sparse-sampling,
//! limited-view and linear-part acquisitions.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal array radius (meters).
pub const ARRAY_RADIUS_M: f64 = 0.040;
/// Element pitch of the multisegment linear part (meters).
pub const LINEAR_PITCH_M: f64 = 0.25e-3;
/// Arc-length pitch of the multisegment concave wings (meters).
pub const CONCAVE_PITCH_M: f64 = 0.6e-3;
/// Elements on the semi circle and multisegment arrays.
pub const SEMI_CIRCLE_ELEMENTS: usize = 256;
/// Elements on the virtual circle array.
pub const VIRTUAL_CIRCLE_ELEMENTS: usize = 1024;
/// Elements on the linear array (and the multisegment linear part).
pub const LINEAR_ELEMENTS: usize = 128;
/// Elements on each multisegment concave wing.
pub const CONCAVE_ELEMENTS: usize = 64;
/// Index range of the linear part within the multisegment ordering.
pub const LINEAR_PART_RANGE: std::ops::Range<usize> = 64..192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayKind {
    SemiCircle,
    Multisegment,
    Linear,
    VirtualCircle,
}

impl ArrayKind {
    pub const ALL: [ArrayKind; 4] = [
        ArrayKind::SemiCircle,
        ArrayKind::Multisegment,
        ArrayKind::Linear,
        ArrayKind::VirtualCircle,
    ];

    /// Short prefix used in dataset names (`sc_BP`, `ms_raw`, ...).
    pub fn dataset_prefix(&self) -> &'static str {
        match self {
            ArrayKind::SemiCircle => "sc",
            ArrayKind::Multisegment => "ms",
            ArrayKind::Linear => "linear",
            ArrayKind::VirtualCircle => "vc",
        }
    }
}

impl fmt::Display for ArrayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ArrayKind::SemiCircle => "semi_circle",
            ArrayKind::Multisegment => "multisegment",
            ArrayKind::Linear => "linear",
            ArrayKind::VirtualCircle => "virtual_circle",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ArrayKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi_circle" | "sc" => Ok(ArrayKind::SemiCircle),
            "multisegment" | "ms" => Ok(ArrayKind::Multisegment),
            "linear" | "li" => Ok(ArrayKind::Linear),
            "virtual_circle" | "vc" => Ok(ArrayKind::VirtualCircle),
            other => Err(Error::invalid(format!("unknown array kind '{other}'"))),
        }
    }
}

/// Ordered transducer element positions plus array metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    kind: ArrayKind,
    /// Element centers (x, y) in meters, in acquisition channel order.
    positions: Vec<[f64; 2]>,
    /// Nominal radius of curvature in meters.
    radius_m: f64,
}

impl ArrayGeometry {
    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    pub fn n_elements(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    /// Mean position of the active elements; the aperture center used when
    /// reasoning about limited-view coverage.
    pub fn aperture_center(&self, mask: Option<&ChannelMask>) -> [f64; 2] {
        let mut sum = [0.0, 0.0];
        let mut count = 0usize;
        for (i, p) in self.positions.iter().enumerate() {
            let active = mask.is_none_or(|m| m.active()[i]);
            if active {
                sum[0] += p[0];
                sum[1] += p[1];
                count += 1;
            }
        }
        if count == 0 {
            return [0.0, 0.0];
        }
        [sum[0] / count as f64, sum[1] / count as f64]
    }

    /// Write the geometry as `element_index,x_m,y_m` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "element_index,x_m,y_m")?;
        for (i, p) in self.positions.iter().enumerate() {
            writeln!(w, "{i},{},{}", p[0], p[1])?;
        }
        Ok(())
    }
}

/// Construct one of the four supported array geometries.
///
/// Construction is pure arithmetic on constants; repeated calls are
/// bit-identical.
pub fn make_array(kind: ArrayKind) -> ArrayGeometry {
    let positions = match kind {
        ArrayKind::SemiCircle => semi_circle_positions(),
        ArrayKind::VirtualCircle => virtual_circle_positions(),
        ArrayKind::Multisegment => multisegment_positions(),
        ArrayKind::Linear => multisegment_positions()[LINEAR_PART_RANGE].to_vec(),
    };
    ArrayGeometry {
        kind,
        positions,
        radius_m: ARRAY_RADIUS_M,
    }
}

fn semi_circle_positions() -> Vec<[f64; 2]> {
    // 256 elements spanning exactly π: endpoints at θ = 0 and θ = π.
    (0..SEMI_CIRCLE_ELEMENTS)
        .map(|i| {
            let theta = std::f64::consts::PI * i as f64 / (SEMI_CIRCLE_ELEMENTS - 1) as f64;
            [ARRAY_RADIUS_M * theta.cos(), ARRAY_RADIUS_M * theta.sin()]
        })
        .collect()
}

fn virtual_circle_positions() -> Vec<[f64; 2]> {
    (0..VIRTUAL_CIRCLE_ELEMENTS)
        .map(|i| {
            let theta = std::f64::consts::TAU * i as f64 / VIRTUAL_CIRCLE_ELEMENTS as f64;
            [ARRAY_RADIUS_M * theta.cos(), ARRAY_RADIUS_M * theta.sin()]
        })
        .collect()
}

fn multisegment_positions() -> Vec<[f64; 2]> {
    let half_chord = (LINEAR_ELEMENTS - 1) as f64 * LINEAR_PITCH_M / 2.0;
    let chord_y = (ARRAY_RADIUS_M * ARRAY_RADIUS_M - half_chord * half_chord).sqrt();
    // Chord endpoints lie on the circle; the wings continue from them.
    let theta_right = chord_y.atan2(half_chord);
    let theta_left = std::f64::consts::PI - theta_right;
    let dtheta = CONCAVE_PITCH_M / ARRAY_RADIUS_M;

    let on_circle = |theta: f64| [ARRAY_RADIUS_M * theta.cos(), ARRAY_RADIUS_M * theta.sin()];

    let mut pos = Vec::with_capacity(SEMI_CIRCLE_ELEMENTS);
    // Left wing, outermost element first so the global ordering sweeps
    // left-to-right.
    for k in 0..CONCAVE_ELEMENTS {
        pos.push(on_circle(
            theta_left + (CONCAVE_ELEMENTS - k) as f64 * dtheta,
        ));
    }
    for k in 0..LINEAR_ELEMENTS {
        pos.push([-half_chord + k as f64 * LINEAR_PITCH_M, chord_y]);
    }
    // Right wing, innermost element first.
    for k in 0..CONCAVE_ELEMENTS {
        pos.push(on_circle(theta_right - (k + 1) as f64 * dtheta));
    }
    pos
}

/// Mask flavours, named after the acquisition they model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Full,
    Sparse,
    LimitedView,
    LinearPart,
}

/// Active/inactive flags over the elements of one geometry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMask {
    kind: MaskKind,
    active: Vec<bool>,
}

impl ChannelMask {
    /// Build a mask from explicit flags. The named constructors
    /// ([`full_mask`], [`sparse_mask`], [`limited_view_mask`],
    /// [`linear_part_mask`]) are the canonical sources; this escape hatch
    /// exists for custom acquisition patterns.
    pub fn from_active(kind: MaskKind, active: Vec<bool>) -> Self {
        ChannelMask { kind, active }
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Number of active elements.
    pub fn popcount(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Indices of active elements, ascending.
    pub fn active_indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    /// Short tag used in dataset names: `ss64`, `lv128`, `linear`, or ""
    /// for the full mask.
    pub fn dataset_tag(&self) -> String {
        match self.kind {
            MaskKind::Full => String::new(),
            MaskKind::Sparse => format!("ss{}", self.popcount()),
            MaskKind::LimitedView => format!("lv{}", self.popcount()),
            MaskKind::LinearPart => "linear".to_string(),
        }
    }
}

/// All-active mask for a geometry.
pub fn full_mask(geom: &ArrayGeometry) -> ChannelMask {
    ChannelMask {
        kind: MaskKind::Full,
        active: vec![true; geom.n_elements()],
    }
}

/// Uniform-stride subsampling mask keeping `keep` of the elements, starting
/// at index 0. `keep` must divide the element count; anything else would not
/// be equidistant and is rejected.
pub fn sparse_mask(geom: &ArrayGeometry, keep: usize) -> Result<ChannelMask> {
    let n = geom.n_elements();
    if keep == 0 || !n.is_multiple_of(keep) {
        return Err(Error::invalid(format!(
            "sparse mask: keep={keep} does not uniformly divide {n} elements"
        )));
    }
    let stride = n / keep;
    let mut active = vec![false; n];
    for i in 0..keep {
        active[i * stride] = true;
    }
    let kind = if keep == n {
        MaskKind::Full
    } else {
        MaskKind::Sparse
    };
    Ok(ChannelMask { kind, active })
}

/// Contiguous run of `keep` active elements centered on the array's central
/// index; for runs that cannot be centered exactly the start index rounds
/// down.
pub fn limited_view_mask(geom: &ArrayGeometry, keep: usize) -> Result<ChannelMask> {
    let n = geom.n_elements();
    if keep == 0 || keep > n {
        return Err(Error::invalid(format!(
            "limited view mask: keep={keep} outside 1..={n}"
        )));
    }
    let start = (n - keep) / 2;
    let mut active = vec![false; n];
    for a in active.iter_mut().skip(start).take(keep) {
        *a = true;
    }
    let kind = if keep == n {
        MaskKind::Full
    } else {
        MaskKind::LimitedView
    };
    Ok(ChannelMask { kind, active })
}

/// Mask selecting exactly the 128 linear-part elements of the multisegment
/// array (indices 64..192).
pub fn linear_part_mask(geom: &ArrayGeometry) -> Result<ChannelMask> {
    if geom.kind() != ArrayKind::Multisegment {
        return Err(Error::invalid(format!(
            "linear part mask requires the multisegment array, got {}",
            geom.kind()
        )));
    }
    let mut active = vec![false; geom.n_elements()];
    for a in active
        .iter_mut()
        .skip(LINEAR_PART_RANGE.start)
        .take(LINEAR_ELEMENTS)
    {
        *a = true;
    }
    Ok(ChannelMask {
        kind: MaskKind::LinearPart,
        active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const POS_TOL: f64 = 1e-9;

    fn dist(p: [f64; 2]) -> f64 {
        p[0].hypot(p[1])
    }

    #[test]
    fn semi_circle_radius_count_and_span() {
        let g = make_array(ArrayKind::SemiCircle);
        assert_eq!(g.n_elements(), 256);
        for p in g.positions() {
            assert!((dist(*p) - ARRAY_RADIUS_M).abs() < POS_TOL);
        }
        let first = g.positions()[0];
        let last = g.positions()[255];
        let span = last[1].atan2(last[0]) - first[1].atan2(first[0]);
        assert!((span - std::f64::consts::PI).abs() < 1e-12);
        // Equiangular spacing.
        let step = std::f64::consts::PI / 255.0;
        for w in g.positions().windows(2) {
            let a0 = w[0][1].atan2(w[0][0]);
            let a1 = w[1][1].atan2(w[1][0]);
            assert!((a1 - a0 - step).abs() < 1e-12);
        }
    }

    #[test]
    fn virtual_circle_radius_and_gap() {
        let g = make_array(ArrayKind::VirtualCircle);
        assert_eq!(g.n_elements(), 1024);
        let step = std::f64::consts::TAU / 1024.0;
        for (i, p) in g.positions().iter().enumerate() {
            assert!((dist(*p) - ARRAY_RADIUS_M).abs() < POS_TOL);
            let theta = std::f64::consts::TAU * i as f64 / 1024.0;
            assert!((p[0] - ARRAY_RADIUS_M * theta.cos()).abs() < POS_TOL);
        }
        for w in g.positions().windows(2) {
            let gap = ((w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / (2.0 * ARRAY_RADIUS_M))
                .asin()
                * 2.0;
            assert!((gap - step).abs() < 1e-12);
        }
    }

    #[test]
    fn multisegment_structure() {
        let g = make_array(ArrayKind::Multisegment);
        assert_eq!(g.n_elements(), 256);
        let pos = g.positions();

        // Concave wings sit on the 40 mm circle.
        for p in pos[..64].iter().chain(pos[192..].iter()) {
            assert!((dist(*p) - ARRAY_RADIUS_M).abs() < POS_TOL);
        }
        // Arc-length pitch of the wings is 0.6 mm.
        for seg in [&pos[..64], &pos[192..]] {
            for w in seg.windows(2) {
                let a0 = w[0][1].atan2(w[0][0]);
                let a1 = w[1][1].atan2(w[1][0]);
                assert!(((a1 - a0).abs() * ARRAY_RADIUS_M - CONCAVE_PITCH_M).abs() < POS_TOL);
            }
        }
        // Linear part: chord endpoints ±15.875 mm from the array axis,
        // pitch exactly 0.25 mm, constant height.
        let lin = &pos[64..192];
        assert!((lin[0][0] + 15.875e-3).abs() < POS_TOL);
        assert!((lin[127][0] - 15.875e-3).abs() < POS_TOL);
        for w in lin.windows(2) {
            assert!((w[1][0] - w[0][0] - LINEAR_PITCH_M).abs() < 1e-12);
            assert_eq!(w[0][1], w[1][1]);
        }
        // Chord endpoints touch the circle so the wings continue from them.
        assert!((dist(lin[0]) - ARRAY_RADIUS_M).abs() < POS_TOL);
        assert!((dist(lin[127]) - ARRAY_RADIUS_M).abs() < POS_TOL);
        // Left-to-right ordering at the segment boundaries.
        assert!(pos[0][0] < pos[63][0]);
        assert!(pos[63][0] < pos[64][0]);
        assert!(pos[191][0] < pos[192][0]);
        assert!(pos[192][0] < pos[255][0]);
    }

    #[test]
    fn linear_is_central_multisegment() {
        let lin = make_array(ArrayKind::Linear);
        let ms = make_array(ArrayKind::Multisegment);
        assert_eq!(lin.n_elements(), 128);
        assert_eq!(lin.positions(), &ms.positions()[64..192]);
    }

    #[test]
    fn construction_is_deterministic() {
        for kind in ArrayKind::ALL {
            let a = make_array(kind);
            let b = make_array(kind);
            assert_eq!(a.positions(), b.positions());
        }
    }

    #[test]
    fn sparse_mask_stride_and_counts() {
        let g = make_array(ArrayKind::SemiCircle);
        let m = sparse_mask(&g, 128).unwrap();
        assert_eq!(m.popcount(), 128);
        assert_eq!(m.kind(), MaskKind::Sparse);
        let idx = m.active_indices();
        assert!(idx.iter().enumerate().all(|(k, &i)| i == 2 * k));

        let vc = make_array(ArrayKind::VirtualCircle);
        let m32 = sparse_mask(&vc, 32).unwrap();
        assert_eq!(m32.popcount(), 32);
        assert!(m32
            .active_indices()
            .iter()
            .enumerate()
            .all(|(k, &i)| i == 32 * k));

        // Identity case.
        let full = sparse_mask(&g, 256).unwrap();
        assert_eq!(full.popcount(), 256);
        assert_eq!(full.kind(), MaskKind::Full);

        // Non-divisor rejected.
        assert!(sparse_mask(&g, 100).is_err());
        assert!(sparse_mask(&g, 0).is_err());
    }

    #[test]
    fn sparse_mask_regeneration_invariant() {
        let g = make_array(ArrayKind::VirtualCircle);
        let a = sparse_mask(&g, 64).unwrap();
        let b = sparse_mask(&g, 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn limited_view_mask_is_centered_run() {
        let g = make_array(ArrayKind::SemiCircle);
        let m = limited_view_mask(&g, 128).unwrap();
        let idx = m.active_indices();
        assert_eq!(idx.len(), 128);
        assert_eq!(idx[0], 64);
        assert_eq!(*idx.last().unwrap(), 191);
        // Contiguous run.
        assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));

        let vc = make_array(ArrayKind::VirtualCircle);
        let mv = limited_view_mask(&vc, 128).unwrap();
        let iv = mv.active_indices();
        assert_eq!(iv[0], 448);
        assert_eq!(*iv.last().unwrap(), 575);
        // Coverage angle of the 128-element run: 2π·128/1024 = π/4 within
        // one element spacing.
        let step = std::f64::consts::TAU / 1024.0;
        let covered = (iv.len() - 1) as f64 * step;
        assert!((covered - std::f64::consts::FRAC_PI_4).abs() <= step + 1e-12);

        assert!(limited_view_mask(&g, 257).is_err());
        let full = limited_view_mask(&g, 256).unwrap();
        assert_eq!(full.popcount(), 256);
        assert_eq!(full.kind(), MaskKind::Full);
    }

    #[test]
    fn linear_part_mask_selects_linear_elements() {
        let ms = make_array(ArrayKind::Multisegment);
        let m = linear_part_mask(&ms).unwrap();
        assert_eq!(m.popcount(), 128);
        let idx = m.active_indices();
        assert_eq!(idx[0], 64);
        assert_eq!(*idx.last().unwrap(), 191);
        assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));

        // The active positions are exactly the linear array.
        let lin = make_array(ArrayKind::Linear);
        let active: Vec<[f64; 2]> = idx.iter().map(|&i| ms.positions()[i]).collect();
        assert_eq!(active.as_slice(), lin.positions());

        assert!(linear_part_mask(&make_array(ArrayKind::SemiCircle)).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let g = make_array(ArrayKind::Linear);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("element_index,x_m,y_m"));
        assert_eq!(text.lines().count(), 129);
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,-0.015875,"));
    }
}
