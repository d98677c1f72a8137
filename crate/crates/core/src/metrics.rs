//! Image-quality and segmentation metrics: MAE, RMSE, PSNR, SSIM, Dice,
//! IoU and the 95-percentile Hausdorff boundary distance.
//!
//! Undefined cases never surface as NaN: PSNR of identical images is the
//! +∞ sentinel, and boundary distances of empty masks return an explicit
//! error that report code records as `undefined`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};

fn check_same_shape<T, U>(a: &Array2<T>, b: &Array2<U>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Mean absolute error over all pixels.
pub fn mae(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    check_same_shape(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    let n = pred.len() as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n
}

/// Root mean squared error over all pixels.
pub fn rmse(pred: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    check_same_shape(pred, target)?;
    Ok(mse(pred, target).sqrt())
}

/// Default dynamic range: images normalized to [−0.2, 1] span 1.2.
pub const DEFAULT_DATA_RANGE: f64 = 1.2;

/// Peak signal-to-noise ratio in dB: 10·log10(range² / MSE). Identical
/// images yield the +∞ sentinel.
pub fn psnr(pred: &Array2<f64>, target: &Array2<f64>, data_range: f64) -> Result<f64> {
    check_same_shape(pred, target)?;
    let range_valid = data_range.is_finite() && data_range > 0.0;
    if !range_valid {
        return Err(Error::invalid(format!(
            "data_range must be positive, got {data_range}"
        )));
    }
    let m = mse(pred, target);
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

/// SSIM parameters: uniform window side, stability constants and dynamic
/// range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsimOptions {
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    pub data_range: f64,
}

impl Default for SsimOptions {
    fn default() -> Self {
        SsimOptions {
            window: 7,
            k1: 0.01,
            k2: 0.03,
            data_range: DEFAULT_DATA_RANGE,
        }
    }
}

/// Mean of the local SSIM map over all fully-interior uniform windows.
///
/// Local statistics are population moments (divide by the window area); the
/// per-window index is the standard product
/// `(2μxμy + c1)(2σxy + c2) / ((μx² + μy² + c1)(σx² + σy² + c2))`.
pub fn ssim(pred: &Array2<f64>, target: &Array2<f64>, opts: &SsimOptions) -> Result<f64> {
    check_same_shape(pred, target)?;
    let (rows, cols) = pred.dim();
    let w = opts.window;
    if w == 0 || w > rows || w > cols {
        return Err(Error::invalid(format!(
            "window {w} does not fit an image of {rows}×{cols}"
        )));
    }
    let range_valid = opts.data_range.is_finite() && opts.data_range > 0.0;
    if !range_valid {
        return Err(Error::invalid("data_range must be positive"));
    }

    // Summed-area tables over x, y, x², y², xy.
    let integral = |f: &dyn Fn(usize, usize) -> f64| -> Array2<f64> {
        let mut s = Array2::zeros((rows + 1, cols + 1));
        for r in 0..rows {
            for c in 0..cols {
                s[(r + 1, c + 1)] = f(r, c) + s[(r, c + 1)] + s[(r + 1, c)] - s[(r, c)];
            }
        }
        s
    };
    let sx = integral(&|r, c| pred[(r, c)]);
    let sy = integral(&|r, c| target[(r, c)]);
    let sxx = integral(&|r, c| pred[(r, c)] * pred[(r, c)]);
    let syy = integral(&|r, c| target[(r, c)] * target[(r, c)]);
    let sxy = integral(&|r, c| pred[(r, c)] * target[(r, c)]);
    let window_sum = |s: &Array2<f64>, r: usize, c: usize| -> f64 {
        s[(r + w, c + w)] - s[(r, c + w)] - s[(r + w, c)] + s[(r, c)]
    };

    let c1 = (opts.k1 * opts.data_range).powi(2);
    let c2 = (opts.k2 * opts.data_range).powi(2);
    let area = (w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=(rows - w) {
        for c in 0..=(cols - w) {
            let mx = window_sum(&sx, r, c) / area;
            let my = window_sum(&sy, r, c) / area;
            let vx = window_sum(&sxx, r, c) / area - mx * mx;
            let vy = window_sum(&syy, r, c) / area - my * my;
            let cov = window_sum(&sxy, r, c) / area - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

fn class_counts(pred: &Array2<u8>, target: &Array2<u8>, class_id: u8) -> (usize, usize, usize) {
    let mut a = 0usize;
    let mut b = 0usize;
    let mut inter = 0usize;
    for (p, t) in pred.iter().zip(target.iter()) {
        let pa = *p == class_id;
        let tb = *t == class_id;
        a += pa as usize;
        b += tb as usize;
        inter += (pa && tb) as usize;
    }
    (a, b, inter)
}

/// Dice coefficient 2|A∩B|/(|A|+|B|) for one class. Both masks empty counts
/// as perfect agreement (1.0).
pub fn dice(pred: &Array2<u8>, target: &Array2<u8>, class_id: u8) -> Result<f64> {
    check_same_shape(pred, target)?;
    let (a, b, inter) = class_counts(pred, target, class_id);
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (a + b) as f64)
}

/// Jaccard index |A∩B|/|A∪B| for one class, with the same both-empty = 1.0
/// convention as [`dice`].
pub fn iou(pred: &Array2<u8>, target: &Array2<u8>, class_id: u8) -> Result<f64> {
    check_same_shape(pred, target)?;
    let (a, b, inter) = class_counts(pred, target, class_id);
    let union = a + b - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Boundary pixels of a class mask: mask pixels with at least one of their
/// 8 neighbours outside the mask (image borders count as outside).
pub fn boundary_pixels(labels: &Array2<u8>, class_id: u8) -> Vec<(i64, i64)> {
    let (rows, cols) = labels.dim();
    let inside = |r: i64, c: i64| -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < rows
            && (c as usize) < cols
            && labels[(r as usize, c as usize)] == class_id
    };
    let mut out = Vec::new();
    for r in 0..rows as i64 {
        for c in 0..cols as i64 {
            if !inside(r, c) {
                continue;
            }
            let interior = (-1..=1).all(|dr: i64| {
                (-1..=1).all(|dc: i64| (dr == 0 && dc == 0) || inside(r + dr, c + dc))
            });
            if !interior {
                out.push((r, c));
            }
        }
    }
    out
}

/// 95th percentile with linear interpolation between order statistics.
fn percentile95(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m == 1 {
        return sorted[0];
    }
    let rank = 0.95 * (m - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Nearest-neighbour distances from every point of `from` to the point set
/// `to`, accelerated with a uniform cell grid.
fn nearest_distances(from: &[(i64, i64)], to: &[(i64, i64)]) -> Vec<f64> {
    const CELL: i64 = 8;
    let mut cells: HashMap<(i64, i64), Vec<(i64, i64)>> = HashMap::new();
    for &p in to {
        cells
            .entry((p.0.div_euclid(CELL), p.1.div_euclid(CELL)))
            .or_default()
            .push(p);
    }
    let max_ring = {
        let span = to
            .iter()
            .chain(from.iter())
            .map(|p| p.0.abs().max(p.1.abs()))
            .max()
            .unwrap_or(0);
        span / CELL + 3
    };

    from.iter()
        .map(|&(ar, ac)| {
            let cell = (ar.div_euclid(CELL), ac.div_euclid(CELL));
            let mut best = f64::INFINITY;
            for ring in 0..=max_ring {
                // Cells in this ring cannot hold anything closer than
                // (ring − 1)·CELL; stop once the best found beats that.
                if ring >= 2 && ((ring - 1) * CELL) as f64 > best {
                    break;
                }
                for dr in -ring..=ring {
                    for dc in -ring..=ring {
                        if dr.abs().max(dc.abs()) != ring {
                            continue;
                        }
                        if let Some(points) = cells.get(&(cell.0 + dr, cell.1 + dc)) {
                            for &(br, bc) in points {
                                let d2 = ((ar - br) * (ar - br) + (ac - bc) * (ac - bc)) as f64;
                                let d = d2.sqrt();
                                if d < best {
                                    best = d;
                                }
                            }
                        }
                    }
                }
            }
            best
        })
        .collect()
}

fn directional_hd95(from: &[(i64, i64)], to: &[(i64, i64)]) -> f64 {
    let mut dists = nearest_distances(from, to);
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile95(&dists)
}

/// Symmetric 95-percentile Hausdorff distance between the boundaries of one
/// class in two label maps, in pixels: the maximum of the two directional
/// 95th-percentile nearest-boundary distances.
pub fn hd95(pred: &Array2<u8>, target: &Array2<u8>, class_id: u8) -> Result<f64> {
    check_same_shape(pred, target)?;
    let a = boundary_pixels(pred, class_id);
    let b = boundary_pixels(target, class_id);
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "hd95 needs non-empty masks for class {class_id} (|A|={}, |B|={})",
            a.len(),
            b.len()
        )));
    }
    Ok(directional_hd95(&a, &b).max(directional_hd95(&b, &a)))
}

/// Full (100th percentile) symmetric Hausdorff boundary distance.
pub fn hausdorff(pred: &Array2<u8>, target: &Array2<u8>, class_id: u8) -> Result<f64> {
    check_same_shape(pred, target)?;
    let a = boundary_pixels(pred, class_id);
    let b = boundary_pixels(target, class_id);
    if a.is_empty() || b.is_empty() {
        return Err(Error::UndefinedMetric(
            "hausdorff needs non-empty masks".into(),
        ));
    }
    let max_of = |from: &[(i64, i64)], to: &[(i64, i64)]| -> f64 {
        nearest_distances(from, to)
            .into_iter()
            .fold(0.0f64, f64::max)
    };
    Ok(max_of(&a, &b).max(max_of(&b, &a)))
}

/// One metric evaluation: a finite number or an explicit sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricValue {
    Finite(f64),
    Inf,
    Undefined,
}

impl MetricValue {
    pub fn from_f64(v: f64) -> Self {
        if v.is_infinite() {
            MetricValue::Inf
        } else {
            MetricValue::Finite(v)
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            MetricValue::Finite(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for MetricValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricValue::Finite(v) => write!(f, "{v}"),
            MetricValue::Inf => f.write_str("inf"),
            MetricValue::Undefined => f.write_str("undefined"),
        }
    }
}

/// Aggregate of one metric column: population mean/std over the finite
/// values plus sentinel counts. `mean`/`std` are null when nothing finite
/// was recorded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_finite: usize,
    pub n_inf: usize,
    pub n_undefined: usize,
}

/// Per-sample metric values with aggregation and CSV/JSON serialization.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    columns: Vec<(String, Vec<MetricValue>)>,
}

impl MetricReport {
    pub fn new() -> Self {
        MetricReport::default()
    }

    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<MetricValue>) {
        self.columns.push((name.into(), values));
    }

    pub fn columns(&self) -> &[(String, Vec<MetricValue>)] {
        &self.columns
    }

    pub fn summarize(&self) -> Vec<(String, MetricSummary)> {
        self.columns
            .iter()
            .map(|(name, values)| {
                let finite: Vec<f64> = values.iter().filter_map(|v| v.finite()).collect();
                let n_inf = values
                    .iter()
                    .filter(|v| matches!(v, MetricValue::Inf))
                    .count();
                let n_undefined = values
                    .iter()
                    .filter(|v| matches!(v, MetricValue::Undefined))
                    .count();
                let (mean, std) = if finite.is_empty() {
                    (None, None)
                } else {
                    let m = finite.iter().sum::<f64>() / finite.len() as f64;
                    let var =
                        finite.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / finite.len() as f64;
                    (Some(m), Some(var.sqrt()))
                };
                (
                    name.clone(),
                    MetricSummary {
                        mean,
                        std,
                        n_finite: finite.len(),
                        n_inf,
                        n_undefined,
                    },
                )
            })
            .collect()
    }

    /// Long-format CSV: `sample_id,metric,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "sample_id,metric,value")?;
        for (name, values) in &self.columns {
            for (i, v) in values.iter().enumerate() {
                writeln!(w, "{i},{name},{v}")?;
            }
        }
        Ok(())
    }

    /// JSON summary: `{ "metric": {mean, std, n_finite, n_inf, n_undefined} }`.
    pub fn summary_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (name, summary) in self.summarize() {
            map.insert(name, serde_json::to_value(summary).unwrap());
        }
        serde_json::Value::Object(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>())
    }

    #[test]
    fn mae_rmse_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 12, 9);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b = a.mapv(|v| v + 0.5);
        assert!((mae(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert!((rmse(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        let c = random_image(&mut rng, 9, 12);
        assert!(mae(&a, &c).is_err());
    }

    #[test]
    fn mae_rmse_match_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = random_image(&mut rng, 17, 13);
            let b = random_image(&mut rng, 17, 13);
            let mut abs_sum = 0.0;
            let mut sq_sum = 0.0;
            for r in 0..17 {
                for c in 0..13 {
                    let d = a[(r, c)] - b[(r, c)];
                    abs_sum += d.abs();
                    sq_sum += d * d;
                }
            }
            let n = (17 * 13) as f64;
            assert!((mae(&a, &b).unwrap() - abs_sum / n).abs() < 1e-12);
            assert!((rmse(&a, &b).unwrap() - (sq_sum / n).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn psnr_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 8, 8);
        assert_eq!(psnr(&a, &a, 1.2).unwrap(), f64::INFINITY);

        // MSE == data_range² → 0 dB.
        let zeros = Array2::zeros((4, 4));
        let offset = Array2::from_elem((4, 4), 1.2);
        assert!(psnr(&zeros, &offset, 1.2).unwrap().abs() < 1e-12);

        // Halving RMSE raises PSNR by 20·log10(2).
        let b = a.mapv(|v| v + 0.1);
        let c = a.mapv(|v| v + 0.05);
        let gain = psnr(&a, &c, 1.2).unwrap() - psnr(&a, &b, 1.2).unwrap();
        assert!((gain - 20.0 * 2.0f64.log10()).abs() < 1e-9);
    }

    #[test]
    fn ssim_identical_is_one_and_window_must_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_image(&mut rng, 16, 16);
        let s = ssim(&a, &a, &SsimOptions::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        let tiny = random_image(&mut rng, 4, 4);
        assert!(ssim(&tiny, &tiny, &SsimOptions::default()).is_err());
    }

    #[test]
    fn ssim_anticorrelated_is_nonpositive() {
        // Stripe pattern whose every 7-wide window sums to zero, so window
        // means vanish and the negated image scores ≤ 0.
        let pattern = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 0.0];
        let target = Array2::from_shape_fn((16, 16), |(_, c)| pattern[c % 7]);
        let pred = target.mapv(|v| -v);
        let s = ssim(
            &pred,
            &target,
            &SsimOptions {
                data_range: 2.0,
                ..SsimOptions::default()
            },
        )
        .unwrap();
        assert!(s <= 0.0, "ssim {s}");
    }

    #[test]
    fn ssim_matches_per_window_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let opts = SsimOptions::default();
        for _ in 0..5 {
            let a = random_image(&mut rng, 16, 16);
            let b = random_image(&mut rng, 16, 16);
            let fast = ssim(&a, &b, &opts).unwrap();

            // Direct per-window computation.
            let w = opts.window;
            let c1 = (opts.k1 * opts.data_range).powi(2);
            let c2 = (opts.k2 * opts.data_range).powi(2);
            let mut total = 0.0;
            let mut count = 0;
            for r0 in 0..=(16 - w) {
                for c0 in 0..=(16 - w) {
                    let mut sx = 0.0;
                    let mut sy = 0.0;
                    let mut sxx = 0.0;
                    let mut syy = 0.0;
                    let mut sxy = 0.0;
                    for r in r0..r0 + w {
                        for c in c0..c0 + w {
                            let x = a[(r, c)];
                            let y = b[(r, c)];
                            sx += x;
                            sy += y;
                            sxx += x * x;
                            syy += y * y;
                            sxy += x * y;
                        }
                    }
                    let n = (w * w) as f64;
                    let (mx, my) = (sx / n, sy / n);
                    let vx = sxx / n - mx * mx;
                    let vy = syy / n - my * my;
                    let cov = sxy / n - mx * my;
                    total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
            let oracle = total / count as f64;
            assert!((fast - oracle).abs() < 1e-9, "{fast} vs {oracle}");
        }
    }

    fn mask_from(points: &[(usize, usize)], rows: usize, cols: usize) -> Array2<u8> {
        let mut m = Array2::zeros((rows, cols));
        for &(r, c) in points {
            m[(r, c)] = 1;
        }
        m
    }

    #[test]
    fn dice_iou_cases() {
        let a = mask_from(&[(0, 0), (0, 1), (1, 0), (1, 1)], 8, 8);
        assert_eq!(dice(&a, &a, 1).unwrap(), 1.0);
        assert_eq!(iou(&a, &a, 1).unwrap(), 1.0);

        let b = mask_from(&[(5, 5), (5, 6)], 8, 8);
        assert_eq!(dice(&a, &b, 1).unwrap(), 0.0);
        assert_eq!(iou(&a, &b, 1).unwrap(), 0.0);

        // |A| = 4, |B| = 6, |A∩B| = 3 → Dice 0.6, IoU 3/7.
        let p = mask_from(&[(0, 0), (0, 1), (1, 0), (1, 1)], 8, 8);
        let t = mask_from(&[(0, 1), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)], 8, 8);
        assert!((dice(&p, &t, 1).unwrap() - 0.6).abs() < 1e-12);
        assert!((iou(&p, &t, 1).unwrap() - 3.0 / 7.0).abs() < 1e-12);

        // Both empty → perfect agreement; one empty → 0.
        let empty = Array2::zeros((8, 8));
        assert_eq!(dice(&empty, &empty, 1).unwrap(), 1.0);
        assert_eq!(iou(&empty, &empty, 1).unwrap(), 1.0);
        assert_eq!(dice(&a, &empty, 1).unwrap(), 0.0);
        assert_eq!(iou(&a, &empty, 1).unwrap(), 0.0);
    }

    #[test]
    fn hd95_trivial_cases() {
        let a = mask_from(&[(2, 2), (2, 3), (3, 2), (3, 3)], 16, 16);
        assert_eq!(hd95(&a, &a, 1).unwrap(), 0.0);

        // Two single-pixel masks 5 px apart.
        let p = mask_from(&[(4, 2)], 16, 16);
        let q = mask_from(&[(4, 7)], 16, 16);
        assert_eq!(hd95(&p, &q, 1).unwrap(), 5.0);

        let empty = Array2::zeros((16, 16));
        assert!(matches!(
            hd95(&p, &empty, 1),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn boundary_uses_8_connectivity_interior_test() {
        // A filled 4×4 block: only the 12 outer pixels are boundary.
        let mut pts = Vec::new();
        for r in 4..8 {
            for c in 4..8 {
                pts.push((r, c));
            }
        }
        let m = mask_from(&pts, 16, 16);
        let boundary = boundary_pixels(&m, 1);
        assert_eq!(boundary.len(), 12);
        assert!(!boundary.contains(&(5, 5)));
        assert!(boundary.contains(&(4, 4)));

        // Mask touching the image border: the border row is boundary.
        let edge = mask_from(&[(0, 0), (0, 1), (1, 0), (1, 1)], 16, 16);
        assert_eq!(boundary_pixels(&edge, 1).len(), 4);
    }

    #[test]
    fn hd95_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for round in 0..30 {
            // Random blobs: a few filled rectangles per mask.
            let blob = |rng: &mut ChaCha8Rng| -> Array2<u8> {
                let mut m = Array2::zeros((48, 48));
                for _ in 0..rng.random_range(1..4) {
                    let r0 = rng.random_range(0..40);
                    let c0 = rng.random_range(0..40);
                    let h = rng.random_range(1..8);
                    let w = rng.random_range(1..8);
                    for r in r0..(r0 + h).min(48) {
                        for c in c0..(c0 + w).min(48) {
                            m[(r, c)] = 1;
                        }
                    }
                }
                m
            };
            let a = blob(&mut rng);
            let b = blob(&mut rng);
            let fast = hd95(&a, &b, 1);

            // Brute force with its own percentile implementation.
            let ba = boundary_pixels(&a, 1);
            let bb = boundary_pixels(&b, 1);
            if ba.is_empty() || bb.is_empty() {
                assert!(fast.is_err());
                continue;
            }
            let direction = |from: &[(i64, i64)], to: &[(i64, i64)]| -> f64 {
                let mut ds: Vec<f64> = from
                    .iter()
                    .map(|&(r, c)| {
                        to.iter()
                            .map(|&(rr, cc)| {
                                (((r - rr) * (r - rr) + (c - cc) * (c - cc)) as f64).sqrt()
                            })
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                ds.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let m = ds.len();
                if m == 1 {
                    return ds[0];
                }
                let rank = 0.95 * (m - 1) as f64;
                let lo = rank.floor() as usize;
                let hi = (lo + 1).min(m - 1);
                ds[lo] + (ds[hi] - ds[lo]) * (rank - lo as f64)
            };
            let oracle = direction(&ba, &bb).max(direction(&bb, &ba));
            let fast = fast.unwrap();
            assert!(
                (fast - oracle).abs() < 1e-9,
                "round {round}: {fast} vs {oracle}"
            );
        }
    }

    #[test]
    fn hd95_never_exceeds_hausdorff() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut m1 = Array2::zeros((32, 32));
            let mut m2 = Array2::zeros((32, 32));
            for _ in 0..rng.random_range(3..40) {
                m1[(rng.random_range(0..32), rng.random_range(0..32))] = 1;
                m2[(rng.random_range(0..32), rng.random_range(0..32))] = 1;
            }
            let h95 = hd95(&m1, &m2, 1).unwrap();
            let h100 = hausdorff(&m1, &m2, 1).unwrap();
            assert!(h95 <= h100 + 1e-12);
        }
    }

    #[test]
    fn metrics_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_image(&mut rng, 16, 16);
        let b = random_image(&mut rng, 16, 16);
        assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
        assert_eq!(rmse(&a, &b).unwrap(), rmse(&b, &a).unwrap());
        assert_eq!(psnr(&a, &b, 1.2).unwrap(), psnr(&b, &a, 1.2).unwrap());
        let opts = SsimOptions::default();
        assert!((ssim(&a, &b, &opts).unwrap() - ssim(&b, &a, &opts).unwrap()).abs() < 1e-12);

        let ma = a.mapv(|v| (v > 0.5) as u8);
        let mb = b.mapv(|v| (v > 0.5) as u8);
        assert_eq!(dice(&ma, &mb, 1).unwrap(), dice(&mb, &ma, 1).unwrap());
        assert_eq!(iou(&ma, &mb, 1).unwrap(), iou(&mb, &ma, 1).unwrap());
        assert_eq!(hd95(&ma, &mb, 1).unwrap(), hd95(&mb, &ma, 1).unwrap());
    }

    #[test]
    fn noise_monotonically_degrades_psnr_and_ssim() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let opts = SsimOptions::default();
        for _ in 0..10 {
            let target = random_image(&mut rng, 24, 24);
            let noise = random_image(&mut rng, 24, 24).mapv(|v| v - 0.5);
            let mut last_psnr = f64::INFINITY;
            let mut last_ssim = f64::INFINITY;
            for level in 1..=5 {
                let amp = 0.05 * level as f64;
                let pred = &target + &noise.mapv(|v| v * amp);
                let p = psnr(&pred, &target, 1.2).unwrap();
                let s = ssim(&pred, &target, &opts).unwrap();
                assert!(p < last_psnr);
                assert!(s < last_ssim);
                last_psnr = p;
                last_ssim = s;
            }
        }
    }

    #[test]
    fn report_aggregates_and_serializes() {
        let mut report = MetricReport::new();
        report.add_column(
            "psnr",
            vec![
                MetricValue::Finite(30.0),
                MetricValue::Inf,
                MetricValue::Finite(34.0),
            ],
        );
        report.add_column(
            "hd95_c1",
            vec![
                MetricValue::Undefined,
                MetricValue::Finite(2.0),
                MetricValue::Finite(4.0),
            ],
        );
        let summary = report.summarize();
        let psnr_sum = &summary[0].1;
        assert_eq!(psnr_sum.mean, Some(32.0));
        assert_eq!(psnr_sum.n_inf, 1);
        assert_eq!(psnr_sum.n_finite, 2);
        let hd_sum = &summary[1].1;
        assert_eq!(hd_sum.mean, Some(3.0));
        assert_eq!(hd_sum.std, Some(1.0));
        assert_eq!(hd_sum.n_undefined, 1);

        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("sample_id,metric,value\n"));
        assert!(text.contains("1,psnr,inf"));
        assert!(text.contains("0,hd95_c1,undefined"));

        let json = report.summary_json();
        assert_eq!(json["psnr"]["n_inf"], 1);
        assert!(json["hd95_c1"]["mean"].as_f64().unwrap() - 3.0 < 1e-12);
    }
}
