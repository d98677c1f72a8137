//! Synthetic forearm pressure maps with ground-truth labels.
//!
//! A scene is built in a fixed order from a single seeded RNG stream:
//!
//! 1. skin curve: a quadratic through three random heights at the left
//!    edge, center and right edge columns, rasterized one pixel per column;
//! 2. Gaussian smoothing of the skin band;
//! 3. exponential decay of random length under the curve, multiplied by
//!    per-pixel noise;
//! 4. vessels: count from a coin-flip/Poisson mixture, each an ellipse
//!    (tilted-cylinder cross-section) placed below the skin with
//!    non-overlapping masks, smoothed, optionally noisy.
//!
//! Labels: 0 background, 1 vessel (pre-smoothing ellipse mask), 2 skin
//! (pre-smoothing one-pixel band). Pressure is clamped to [0, 1].
//!
//! All numeric defaults live in [`PhantomParams`]; the per-pixel noise
//! multiplier is a mean-1 Gaussian clamped to [0, 2], with the standard
//! deviation derived from `noise_range` as (hi − lo)/4.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::PressureMap;
use crate::grid::ImageGrid;

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_VESSEL: u8 = 1;
pub const LABEL_SKIN: u8 = 2;

/// Tuning knobs for scene generation. Lengths are in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    /// Image side in pixels.
    pub image_n: usize,
    /// Physical pixel pitch attached to the generated pressure map.
    pub pitch_m: f64,
    /// Row band the three skin-curve control heights are drawn from.
    pub skin_y_range: (f64, f64),
    /// Gaussian sigma smoothing the skin band.
    pub skin_blur_sigma: f64,
    /// Range of the exponential decay length under the skin.
    pub decay_len_range: (f64, f64),
    /// Poisson rate of the vessel-count mixture.
    pub vessel_poisson_lambda: f64,
    /// Cylinder radius range.
    pub vessel_radius_range: (f64, f64),
    /// Gaussian sigma smoothing each vessel.
    pub vessel_blur_sigma: f64,
    /// Maximum tilt (radians) of the cylinder about each in-plane axis.
    pub vessel_tilt_max: f64,
    /// Skin band intensity range.
    pub skin_intensity_range: (f64, f64),
    /// Vessel intensity range.
    pub vessel_intensity_range: (f64, f64),
    /// Noise multiplier range; the Gaussian sigma is (hi − lo)/4 and samples
    /// are clamped to [0, 2].
    pub noise_range: (f64, f64),
    /// Placement retries per vessel before the scene is regenerated.
    pub max_placement_retries: usize,
    /// Scene regeneration attempts before giving up.
    pub max_scene_attempts: usize,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            image_n: 256,
            pitch_m: crate::grid::DEFAULT_PITCH_M,
            skin_y_range: (40.0, 90.0),
            skin_blur_sigma: 1.0,
            decay_len_range: (5.0, 25.0),
            vessel_poisson_lambda: 5.0,
            vessel_radius_range: (2.0, 12.0),
            vessel_blur_sigma: 1.0,
            vessel_tilt_max: std::f64::consts::FRAC_PI_4,
            skin_intensity_range: (0.5, 1.0),
            vessel_intensity_range: (0.4, 1.0),
            noise_range: (0.7, 1.3),
            max_placement_retries: 100,
            max_scene_attempts: 16,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        let n = self.image_n as f64;
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if self.image_n < 16 {
            return Err(Error::invalid("image_n must be at least 16"));
        }
        let pitch_valid = self.pitch_m.is_finite() && self.pitch_m > 0.0;
        if !pitch_valid {
            return Err(Error::invalid("pitch_m must be positive"));
        }
        if !range_ok(self.skin_y_range)
            || self.skin_y_range.0 < 0.0
            || self.skin_y_range.1 > n - 1.0
        {
            return Err(Error::invalid("skin_y_range must lie within the image"));
        }
        if !range_ok(self.decay_len_range) || self.decay_len_range.0 < 0.0 {
            return Err(Error::invalid("decay_len_range must be non-negative"));
        }
        let lambda_valid =
            self.vessel_poisson_lambda.is_finite() && self.vessel_poisson_lambda > 0.0;
        if !lambda_valid {
            return Err(Error::invalid("vessel_poisson_lambda must be positive"));
        }
        if !range_ok(self.vessel_radius_range) || self.vessel_radius_range.0 <= 0.0 {
            return Err(Error::invalid("vessel_radius_range must be positive"));
        }
        if !(self.vessel_tilt_max >= 0.0 && self.vessel_tilt_max < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("vessel_tilt_max must be in [0, π/2)"));
        }
        if self.skin_blur_sigma < 0.0 || self.vessel_blur_sigma < 0.0 {
            return Err(Error::invalid("blur sigmas must be non-negative"));
        }
        for (name, r) in [
            ("skin_intensity_range", self.skin_intensity_range),
            ("vessel_intensity_range", self.vessel_intensity_range),
            ("noise_range", self.noise_range),
        ] {
            if !range_ok(r) || r.0 < 0.0 {
                return Err(Error::invalid(format!(
                    "{name} must be a non-negative range"
                )));
            }
        }
        if self.max_scene_attempts == 0 || self.max_placement_retries == 0 {
            return Err(Error::invalid("retry budgets must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel class labels: 0 background, 1 vessel, 2 skin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub values: Array2<u8>,
}

/// Cross-section of a tilted cylinder: an ellipse with its intensity
/// profile flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselSpec {
    pub center_col: f64,
    pub center_row: f64,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis direction, radians from the +col axis toward +row.
    pub angle: f64,
    pub intensity: f64,
    /// Linear decay from the center instead of a homogeneous profile.
    pub center_peaked: bool,
    /// Multiply the smoothed profile by per-pixel noise.
    pub noisy: bool,
}

/// A vessel accepted into a scene, with its pre-smoothing mask pixels.
#[derive(Debug, Clone)]
pub struct PlacedVessel {
    pub spec: VesselSpec,
    pub pixels: Vec<(usize, usize)>,
}

/// Everything generated for one seed; [`generate_phantom`] returns just the
/// (pressure, labels) pair.
#[derive(Debug, Clone)]
pub struct PhantomScene {
    pub pressure: PressureMap,
    pub labels: LabelMap,
    pub skin_curve: Vec<f64>,
    pub skin_intensity: f64,
    pub decay_len: f64,
    pub vessels: Vec<PlacedVessel>,
}

/// Counter-based seed derivation for batch generation: sample `i` of a batch
/// with base seed `s` uses stream `derive_sample_seed(s, i)`, so batches can
/// be generated in parallel in any order.
pub fn derive_sample_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SCENE_RETRY_TAG: u64 = 0x7363_656e_655f_7461; // distinguishes retry streams

/// Quadratic skin height per column, fitted through three points at columns
/// 0, n/2 and n−1 with heights drawn from `skin_y_range`. Curves leaving the
/// image are resampled up to the retry budget.
pub fn fit_skin_curve(rng: &mut ChaCha8Rng, params: &PhantomParams) -> Result<Vec<f64>> {
    let n = params.image_n;
    let (lo, hi) = params.skin_y_range;
    let xs = [0.0, (n / 2) as f64, (n - 1) as f64];
    for _ in 0..params.max_placement_retries {
        let ys = [
            rng.random_range(lo..=hi),
            rng.random_range(lo..=hi),
            rng.random_range(lo..=hi),
        ];
        let curve: Vec<f64> = (0..n).map(|c| lagrange3(&xs, &ys, c as f64)).collect();
        if curve.iter().all(|&y| (0.0..=(n - 1) as f64).contains(&y)) {
            return Ok(curve);
        }
    }
    Err(Error::PhantomGeneration(
        "skin curve kept leaving the image".into(),
    ))
}

/// Exact quadratic through three points (Lagrange form).
fn lagrange3(xs: &[f64; 3], ys: &[f64; 3], x: f64) -> f64 {
    let l0 = (x - xs[1]) * (x - xs[2]) / ((xs[0] - xs[1]) * (xs[0] - xs[2]));
    let l1 = (x - xs[0]) * (x - xs[2]) / ((xs[1] - xs[0]) * (xs[1] - xs[2]));
    let l2 = (x - xs[0]) * (x - xs[1]) / ((xs[2] - xs[0]) * (xs[2] - xs[1]));
    ys[0] * l0 + ys[1] * l1 + ys[2] * l2
}

/// Vessel count: fair coin → exactly 2, otherwise Poisson(λ) clamped to ≥ 1.
pub fn sample_vessel_count(rng: &mut ChaCha8Rng, params: &PhantomParams) -> usize {
    if rng.random_bool(0.5) {
        2
    } else {
        let pois = Poisson::new(params.vessel_poisson_lambda).expect("lambda validated positive");
        let draw: f64 = pois.sample(rng);
        (draw as usize).max(1)
    }
}

/// Sample one vessel: a cylinder of random radius tilted about both
/// in-plane axes; its cross-section with the image plane is an ellipse with
/// semi-minor ρ and semi-major ρ / (cos θx · cos θy).
///
/// Draw order: radius, tilt_x, tilt_y, center column, center row,
/// intensity, profile coin, noise coin.
pub fn make_vessel(rng: &mut ChaCha8Rng, params: &PhantomParams) -> VesselSpec {
    let (r_lo, r_hi) = params.vessel_radius_range;
    let radius = rng.random_range(r_lo..=r_hi);
    let tilt = params.vessel_tilt_max;
    let (tx, ty) = if tilt > 0.0 {
        (
            rng.random_range(-tilt..=tilt),
            rng.random_range(-tilt..=tilt),
        )
    } else {
        (0.0, 0.0)
    };
    let n = params.image_n as f64;
    let center_col = rng.random_range(0.0..n);
    let center_row = rng.random_range(0.0..n);
    let (i_lo, i_hi) = params.vessel_intensity_range;
    let intensity = rng.random_range(i_lo..=i_hi);
    let center_peaked = rng.random_bool(0.5);
    let noisy = rng.random_bool(0.5);

    let cos_tilt = tx.cos() * ty.cos();
    // In-plane direction of the tilted axis projection; undefined (and
    // irrelevant) for the untilted circle.
    let u = [ty.sin() * tx.cos(), -tx.sin()];
    let angle = if u[0] == 0.0 && u[1] == 0.0 {
        0.0
    } else {
        u[1].atan2(u[0])
    };
    VesselSpec {
        center_col,
        center_row,
        semi_major: radius / cos_tilt,
        semi_minor: radius,
        angle,
        intensity,
        center_peaked,
        noisy,
    }
}

/// Pre-smoothing pixel mask of an ellipse; `None` if any pixel would fall
/// outside the image.
fn ellipse_mask(spec: &VesselSpec, n: usize) -> Option<Vec<(usize, usize)>> {
    let ext = spec.semi_major;
    if spec.center_col - ext < 0.0
        || spec.center_col + ext > (n - 1) as f64
        || spec.center_row - ext < 0.0
        || spec.center_row + ext > (n - 1) as f64
    {
        return None;
    }
    let (sin_a, cos_a) = spec.angle.sin_cos();
    let r0 = (spec.center_row - ext).floor().max(0.0) as usize;
    let r1 = (spec.center_row + ext).ceil().min((n - 1) as f64) as usize;
    let c0 = (spec.center_col - ext).floor().max(0.0) as usize;
    let c1 = (spec.center_col + ext).ceil().min((n - 1) as f64) as usize;
    let mut pixels = Vec::new();
    for r in r0..=r1 {
        for c in c0..=c1 {
            if elliptic_radius(spec, sin_a, cos_a, r as f64, c as f64) <= 1.0 {
                pixels.push((r, c));
            }
        }
    }
    Some(pixels)
}

#[inline]
fn elliptic_radius(spec: &VesselSpec, sin_a: f64, cos_a: f64, row: f64, col: f64) -> f64 {
    let dx = col - spec.center_col;
    let dy = row - spec.center_row;
    let u1 = (dx * cos_a + dy * sin_a) / spec.semi_major;
    let u2 = (-dx * sin_a + dy * cos_a) / spec.semi_minor;
    (u1 * u1 + u2 * u2).sqrt()
}

/// Separable Gaussian blur with kernel radius ceil(4σ) and reflected
/// boundaries; σ = 0 is the identity.
fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-(i as f64) * (i as f64) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    let (rows, cols) = img.dim();
    let reflect = |i: isize, len: usize| -> usize {
        let len = len as isize;
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= len {
            i = 2 * len - 1 - i;
        }
        i.clamp(0, len - 1) as usize
    };
    let mut tmp = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let cc = reflect(c as isize + ki as isize - radius, cols);
                acc += img[(r, cc)] * k;
            }
            tmp[(r, c)] = acc;
        }
    }
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let rr = reflect(r as isize + ki as isize - radius, rows);
                acc += tmp[(rr, c)] * k;
            }
            out[(r, c)] = acc;
        }
    }
    out
}

fn noise_multiplier(rng: &mut ChaCha8Rng, params: &PhantomParams) -> f64 {
    let (lo, hi) = params.noise_range;
    let sigma = (hi - lo) / 4.0;
    if sigma <= 0.0 {
        return 1.0;
    }
    let normal = Normal::new(1.0, sigma).expect("sigma validated finite");
    normal.sample(rng).clamp(0.0, 2.0)
}

/// Skin band raster (pre-blur, one pixel per column) and the blurred,
/// decayed, noise-multiplied skin layer.
///
/// Returns (layer, band) where `band[c]` is the rasterized skin row of
/// column c.
fn skin_layer(
    curve: &[f64],
    intensity: f64,
    decay_len: f64,
    params: &PhantomParams,
    rng: &mut ChaCha8Rng,
) -> (Array2<f64>, Vec<usize>) {
    let n = params.image_n;
    let band: Vec<usize> = curve.iter().map(|&y| y.round() as usize).collect();
    let mut raster = Array2::zeros((n, n));
    for (c, &r) in band.iter().enumerate() {
        raster[(r, c)] = intensity;
    }
    let mut layer = gaussian_blur(&raster, params.skin_blur_sigma);
    if decay_len > 0.0 {
        for (c, &r0) in band.iter().enumerate() {
            for r in (r0 + 1)..n {
                let depth = r as f64 - curve[c];
                let decay = intensity * (-depth / decay_len).exp();
                layer[(r, c)] += decay * noise_multiplier(rng, params);
            }
        }
    }
    (layer, band)
}

/// One vessel's additive intensity patch: profile → Gaussian blur →
/// optional per-pixel noise, confined to the mask's blur-padded bounding
/// box.
fn vessel_layer(
    spec: &VesselSpec,
    pixels: &[(usize, usize)],
    params: &PhantomParams,
    rng: &mut ChaCha8Rng,
    pressure: &mut Array2<f64>,
) {
    let n = params.image_n;
    let pad = (4.0 * params.vessel_blur_sigma).ceil() as usize + 1;
    let r_min = pixels.iter().map(|p| p.0).min().unwrap();
    let r_max = pixels.iter().map(|p| p.0).max().unwrap();
    let c_min = pixels.iter().map(|p| p.1).min().unwrap();
    let c_max = pixels.iter().map(|p| p.1).max().unwrap();
    let r0 = r_min.saturating_sub(pad);
    let r1 = (r_max + pad).min(n - 1);
    let c0 = c_min.saturating_sub(pad);
    let c1 = (c_max + pad).min(n - 1);

    let (sin_a, cos_a) = spec.angle.sin_cos();
    let mut patch = Array2::zeros((r1 - r0 + 1, c1 - c0 + 1));
    for &(r, c) in pixels {
        let rho = elliptic_radius(spec, sin_a, cos_a, r as f64, c as f64);
        let v = if spec.center_peaked {
            spec.intensity * (1.0 - rho)
        } else {
            spec.intensity
        };
        patch[(r - r0, c - c0)] = v;
    }
    let mut patch = gaussian_blur(&patch, params.vessel_blur_sigma);
    if spec.noisy {
        // Row-major over the patch, one draw per nonzero pixel.
        for v in patch.iter_mut() {
            if *v != 0.0 {
                *v *= noise_multiplier(rng, params);
            }
        }
    }
    for ((pr, pc), &v) in patch.indexed_iter() {
        pressure[(r0 + pr, c0 + pc)] += v;
    }
}

/// True if the candidate pixels keep a one-pixel margin from already
/// occupied pixels and from the skin band.
fn placement_ok(
    pixels: &[(usize, usize)],
    occupied: &Array2<bool>,
    curve: &[f64],
    n: usize,
) -> bool {
    for &(r, c) in pixels {
        // Strictly below the skin band with a one-pixel margin.
        let skin_row = curve[c].round();
        if (r as f64) < skin_row + 2.0 {
            return false;
        }
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let rr = r as i64 + dr;
                let cc = c as i64 + dc;
                if rr < 0 || cc < 0 || rr >= n as i64 || cc >= n as i64 {
                    continue;
                }
                if occupied[(rr as usize, cc as usize)] {
                    return false;
                }
            }
        }
    }
    true
}

fn build_scene(seed: u64, params: &PhantomParams) -> Result<PhantomScene> {
    let n = params.image_n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let curve = fit_skin_curve(&mut rng, params)?;
    let (i_lo, i_hi) = params.skin_intensity_range;
    let skin_intensity = rng.random_range(i_lo..=i_hi);
    let (d_lo, d_hi) = params.decay_len_range;
    let decay_len = rng.random_range(d_lo..=d_hi);
    let (mut pressure, band) = skin_layer(&curve, skin_intensity, decay_len, params, &mut rng);

    let mut labels = Array2::from_elem((n, n), LABEL_BACKGROUND);
    for (c, &r) in band.iter().enumerate() {
        labels[(r, c)] = LABEL_SKIN;
    }

    let count = sample_vessel_count(&mut rng, params);
    let mut occupied = Array2::from_elem((n, n), false);
    let mut vessels = Vec::with_capacity(count);
    for _ in 0..count {
        let mut placed = false;
        for _ in 0..params.max_placement_retries {
            let spec = make_vessel(&mut rng, params);
            let Some(pixels) = ellipse_mask(&spec, n) else {
                continue;
            };
            if pixels.is_empty() || !placement_ok(&pixels, &occupied, &curve, n) {
                continue;
            }
            vessel_layer(&spec, &pixels, params, &mut rng, &mut pressure);
            for &(r, c) in &pixels {
                occupied[(r, c)] = true;
                labels[(r, c)] = LABEL_VESSEL;
            }
            vessels.push(PlacedVessel { spec, pixels });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::PhantomGeneration(format!(
                "could not place vessel {} of {count}",
                vessels.len() + 1
            )));
        }
    }

    pressure.mapv_inplace(|v| v.min(1.0));
    let grid = ImageGrid::centered(n, params.pitch_m)?;
    Ok(PhantomScene {
        pressure: PressureMap::new(pressure, grid)?,
        labels: LabelMap { values: labels },
        skin_curve: curve,
        skin_intensity,
        decay_len,
        vessels,
    })
}

/// Generate one scene with full structure information. Deterministic in
/// (seed, params); scenes whose vessel placement stalls are regenerated
/// from derived sub-seeds up to `max_scene_attempts`.
pub fn generate_phantom_detailed(seed: u64, params: &PhantomParams) -> Result<PhantomScene> {
    params.validate()?;
    let mut last = None;
    for attempt in 0..params.max_scene_attempts {
        let scene_seed = if attempt == 0 {
            seed
        } else {
            derive_sample_seed(seed ^ SCENE_RETRY_TAG, attempt as u64)
        };
        match build_scene(scene_seed, params) {
            Ok(scene) => return Ok(scene),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::PhantomGeneration("no attempts made".into())))
}

/// Generate one (pressure map, label map) pair for a seed.
pub fn generate_phantom(seed: u64, params: &PhantomParams) -> Result<(PressureMap, LabelMap)> {
    let scene = generate_phantom_detailed(seed, params)?;
    Ok((scene.pressure, scene.labels))
}
