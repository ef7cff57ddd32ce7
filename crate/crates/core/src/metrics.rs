//! Disparity and depth evaluation.
//!
//! Thresholds are strict: a D1 outlier needs `|e| > 3` **and**
//! `|e| > 5%` of the ground truth (KITTI devkit rule), BAD2 needs `|e| > 2`,
//! and `δk` counts ratios `< 1.25^k`. All reductions accumulate in `f64`,
//! and every statistic carries raw sums so frames can be pooled per pixel.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::raster::{Calibration, DisparityMap};

/// How invalid predictions inside the evaluated region are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum InvalidPolicy {
    /// Count as a D1 and BAD2 outlier, EPE contribution `|gt|` (prediction
    /// read as 0). Default for dense predictions.
    #[default]
    CountAsError,
    /// Drop the pixel; sparse proxies report their coverage separately.
    Exclude,
}

/// Pixel region selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalMask {
    width: usize,
    height: usize,
    mask: Vec<bool>,
}

impl EvalMask {
    pub fn new(width: usize, height: usize, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != width * height {
            return Err(Error::InvalidParameter("mask length does not match dimensions"));
        }
        Ok(EvalMask { width, height, mask })
    }

    pub fn from_validity(map: &DisparityMap) -> Self {
        EvalMask {
            width: map.width(),
            height: map.height(),
            mask: map.validity().to_vec(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_subset_of(&self, other: &EvalMask) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

/// Non-occluded and all-region masks of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMasks {
    pub noc: EvalMask,
    pub all: EvalMask,
}

/// Masks from the two ground-truth files; fails if `noc ⊄ all`.
pub fn noc_mask_from_gt(gt_noc: &DisparityMap, gt_all: &DisparityMap) -> Result<RegionMasks> {
    if gt_noc.dims() != gt_all.dims() {
        return Err(Error::mismatch(gt_noc.dims(), gt_all.dims()));
    }
    let (w, h) = gt_noc.dims();
    for y in 0..h {
        for x in 0..w {
            if gt_noc.is_valid(x, y) && !gt_all.is_valid(x, y) {
                return Err(Error::MaskContainment { x, y });
            }
        }
    }
    Ok(RegionMasks {
        noc: EvalMask::from_validity(gt_noc),
        all: EvalMask::from_validity(gt_all),
    })
}

#[inline]
pub fn is_d1_error(pred: f64, gt: f64) -> bool {
    let e = (pred - gt).abs();
    e > 3.0 && e > 0.05 * gt.abs()
}

/// `100 · correct / valid`.
pub fn accuracy_pct(valid: u64, correct: u64) -> f64 {
    100.0 * correct as f64 / valid as f64
}

/// Raw sums of disparity errors over one region.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegionStats {
    pub evaluated: u64,
    pub d1_errors: u64,
    pub bad2_errors: u64,
    pub abs_err_sum: f64,
}

impl RegionStats {
    pub fn merge(&mut self, o: &RegionStats) {
        self.evaluated += o.evaluated;
        self.d1_errors += o.d1_errors;
        self.bad2_errors += o.bad2_errors;
        self.abs_err_sum += o.abs_err_sum;
    }

    fn checked(&self) -> Result<f64> {
        if self.evaluated == 0 {
            Err(Error::NoEvaluatedPixels)
        } else {
            Ok(self.evaluated as f64)
        }
    }

    pub fn d1_pct(&self) -> Result<f64> {
        Ok(100.0 * self.d1_errors as f64 / self.checked()?)
    }

    pub fn bad2_pct(&self) -> Result<f64> {
        Ok(100.0 * self.bad2_errors as f64 / self.checked()?)
    }

    pub fn epe(&self) -> Result<f64> {
        Ok(self.abs_err_sum / self.checked()?)
    }

    pub fn correct(&self) -> u64 {
        self.evaluated - self.d1_errors
    }

    pub fn accuracy_pct(&self) -> Result<f64> {
        self.checked()?;
        Ok(accuracy_pct(self.evaluated, self.correct()))
    }
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::mismatch(a, b));
    }
    Ok(())
}

/// Error sums over pixels where `gt` is valid and `mask` (if any) holds.
pub fn region_stats(
    pred: &DisparityMap,
    gt: &DisparityMap,
    mask: Option<&EvalMask>,
    policy: InvalidPolicy,
) -> Result<RegionStats> {
    check_dims(pred.dims(), gt.dims())?;
    if let Some(m) = mask {
        check_dims(m.dims(), gt.dims())?;
    }
    let mut s = RegionStats::default();
    for (i, (&g, &g_ok)) in gt.values().iter().zip(gt.validity()).enumerate() {
        if !g_ok || mask.is_some_and(|m| !m.mask[i]) {
            continue;
        }
        let g = g as f64;
        let p = if pred.validity()[i] {
            pred.values()[i] as f64
        } else {
            match policy {
                InvalidPolicy::Exclude => continue,
                InvalidPolicy::CountAsError => {
                    s.evaluated += 1;
                    s.d1_errors += 1;
                    s.bad2_errors += 1;
                    s.abs_err_sum += g.abs();
                    continue;
                }
            }
        };
        let e = (p - g).abs();
        s.evaluated += 1;
        s.abs_err_sum += e;
        if is_d1_error(p, g) {
            s.d1_errors += 1;
        }
        if e > 2.0 {
            s.bad2_errors += 1;
        }
    }
    Ok(s)
}

pub fn d1(pred: &DisparityMap, gt: &DisparityMap, mask: Option<&EvalMask>, policy: InvalidPolicy) -> Result<f64> {
    region_stats(pred, gt, mask, policy)?.d1_pct()
}

pub fn epe(pred: &DisparityMap, gt: &DisparityMap, mask: Option<&EvalMask>, policy: InvalidPolicy) -> Result<f64> {
    region_stats(pred, gt, mask, policy)?.epe()
}

pub fn bad2(pred: &DisparityMap, gt: &DisparityMap, mask: Option<&EvalMask>, policy: InvalidPolicy) -> Result<f64> {
    region_stats(pred, gt, mask, policy)?.bad2_pct()
}

/// `(valid, correct, accuracy %)` with accuracy `= 100 - D1`.
pub fn valid_correct(
    pred: &DisparityMap,
    gt: &DisparityMap,
    mask: Option<&EvalMask>,
    policy: InvalidPolicy,
) -> Result<(u64, u64, f64)> {
    let s = region_stats(pred, gt, mask, policy)?;
    Ok((s.evaluated, s.correct(), s.accuracy_pct()?))
}

/// Pixel counts behind density and ground-truth overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CoverageStats {
    pub total: u64,
    pub proxy_valid: u64,
    pub gt_valid: u64,
    pub overlap: u64,
}

impl CoverageStats {
    pub fn merge(&mut self, o: &CoverageStats) {
        self.total += o.total;
        self.proxy_valid += o.proxy_valid;
        self.gt_valid += o.gt_valid;
        self.overlap += o.overlap;
    }

    pub fn density_pct(&self) -> f64 {
        100.0 * self.proxy_valid as f64 / self.total as f64
    }

    pub fn overlap_pct(&self) -> Result<f64> {
        if self.gt_valid == 0 {
            return Err(Error::NoEvaluatedPixels);
        }
        Ok(100.0 * self.overlap as f64 / self.gt_valid as f64)
    }
}

pub fn coverage_stats(proxy: &DisparityMap, gt: &DisparityMap) -> Result<CoverageStats> {
    check_dims(proxy.dims(), gt.dims())?;
    let mut s = CoverageStats {
        total: proxy.len() as u64,
        ..Default::default()
    };
    for (&p, &g) in proxy.validity().iter().zip(gt.validity()) {
        s.proxy_valid += p as u64;
        s.gt_valid += g as u64;
        s.overlap += (p && g) as u64;
    }
    Ok(s)
}

/// `(density %, overlap %)`: share of pixels the proxy labels, and share of
/// ground-truth pixels it covers.
pub fn density_overlap(proxy: &DisparityMap, gt: &DisparityMap) -> Result<(f64, f64)> {
    let s = coverage_stats(proxy, gt)?;
    Ok((s.density_pct(), s.overlap_pct()?))
}

pub const DEFAULT_MAX_DEPTH: f64 = 80.0;

/// Raw sums behind the depth metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DepthStats {
    pub evaluated: u64,
    /// Pixels dropped for a non-positive disparity.
    pub excluded_nonpositive: u64,
    /// Pixels dropped for ground truth beyond the depth cap.
    pub excluded_far: u64,
    pub sq_err_sum: f64,
    pub sq_log_err_sum: f64,
    pub within: [u64; 3],
}

impl DepthStats {
    pub fn merge(&mut self, o: &DepthStats) {
        self.evaluated += o.evaluated;
        self.excluded_nonpositive += o.excluded_nonpositive;
        self.excluded_far += o.excluded_far;
        self.sq_err_sum += o.sq_err_sum;
        self.sq_log_err_sum += o.sq_log_err_sum;
        for k in 0..3 {
            self.within[k] += o.within[k];
        }
    }

    pub fn summary(&self) -> Result<DepthSummary> {
        if self.evaluated == 0 {
            return Err(Error::NoEvaluatedPixels);
        }
        let n = self.evaluated as f64;
        Ok(DepthSummary {
            rmse: libm::sqrt(self.sq_err_sum / n),
            rmse_log: libm::sqrt(self.sq_log_err_sum / n),
            delta: self.within.map(|c| c as f64 / n),
            evaluated: self.evaluated,
            excluded_nonpositive: self.excluded_nonpositive,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthSummary {
    pub rmse: f64,
    pub rmse_log: f64,
    /// Fractions with `max(zp/zg, zg/zp) < 1.25^k`, k = 1..3.
    pub delta: [f64; 3],
    pub evaluated: u64,
    pub excluded_nonpositive: u64,
}

/// Depth sums over pixels where both maps are valid (and `mask` holds),
/// with `z = focal · baseline / d`. Pixels whose ground truth lies beyond
/// `max_depth` or whose disparity is not positive are dropped and counted.
pub fn depth_stats(
    pred: &DisparityMap,
    gt: &DisparityMap,
    calib: &Calibration,
    mask: Option<&EvalMask>,
    max_depth: f64,
) -> Result<DepthStats> {
    check_dims(pred.dims(), gt.dims())?;
    if let Some(m) = mask {
        check_dims(m.dims(), gt.dims())?;
    }
    let thresholds = [1.25, 1.25 * 1.25, 1.25 * 1.25 * 1.25];
    let mut s = DepthStats::default();
    for i in 0..gt.len() {
        if !gt.validity()[i] || !pred.validity()[i] || mask.is_some_and(|m| !m.mask[i]) {
            continue;
        }
        let (dg, dp) = (gt.values()[i] as f64, pred.values()[i] as f64);
        if !(dg > 0.0 && dp > 0.0) {
            s.excluded_nonpositive += 1;
            continue;
        }
        let (zg, zp) = (calib.depth(dg), calib.depth(dp));
        if zg > max_depth {
            s.excluded_far += 1;
            continue;
        }
        s.evaluated += 1;
        s.sq_err_sum += (zp - zg) * (zp - zg);
        let le = libm::log(zp) - libm::log(zg);
        s.sq_log_err_sum += le * le;
        // zp/zg = dg/dp; the disparity form avoids a second rounding
        let ratio = (dg / dp).max(dp / dg);
        for (k, t) in thresholds.iter().enumerate() {
            if ratio < *t {
                s.within[k] += 1;
            }
        }
    }
    Ok(s)
}

pub fn depth_metrics(
    pred: &DisparityMap,
    gt: &DisparityMap,
    calib: &Calibration,
    mask: Option<&EvalMask>,
    max_depth: f64,
) -> Result<DepthSummary> {
    depth_stats(pred, gt, calib, mask, max_depth)?.summary()
}

/// Everything measured on one frame; merging pools pixels across frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub coverage: Option<CoverageStats>,
    pub noc: Option<RegionStats>,
    pub all: Option<RegionStats>,
    pub depth: Option<DepthStats>,
}

fn merge_opt<T: Copy>(a: &mut Option<T>, b: &Option<T>, f: impl Fn(&mut T, &T)) {
    match (a.as_mut(), b) {
        (Some(x), Some(y)) => f(x, y),
        (None, Some(y)) => *a = Some(*y),
        _ => {}
    }
}

impl EvalReport {
    pub fn merge(&mut self, o: &EvalReport) {
        merge_opt(&mut self.coverage, &o.coverage, CoverageStats::merge);
        merge_opt(&mut self.noc, &o.noc, RegionStats::merge);
        merge_opt(&mut self.all, &o.all, RegionStats::merge);
        merge_opt(&mut self.depth, &o.depth, DepthStats::merge);
    }

    /// `key = value` lines: percentages with 2 decimals, EPE and RMSE with
    /// 3, δ fractions with 4. Undefined metrics are omitted.
    pub fn to_record(&self) -> String {
        let mut out = String::new();
        if let Some(c) = &self.coverage {
            let _ = writeln!(out, "density_pct = {:.2}", c.density_pct());
            if let Ok(o) = c.overlap_pct() {
                let _ = writeln!(out, "overlap_pct = {o:.2}");
            }
        }
        for (name, region) in [("noc", &self.noc), ("all", &self.all)] {
            let Some(r) = region else { continue };
            if r.evaluated == 0 {
                let _ = writeln!(out, "valid_{name} = 0");
                continue;
            }
            let _ = writeln!(out, "d1_{name}_pct = {:.2}", r.d1_pct().unwrap_or(0.0));
            let _ = writeln!(out, "epe_{name} = {:.3}", r.epe().unwrap_or(0.0));
            let _ = writeln!(out, "bad2_{name}_pct = {:.2}", r.bad2_pct().unwrap_or(0.0));
            let _ = writeln!(out, "valid_{name} = {}", r.evaluated);
            let _ = writeln!(out, "correct_{name} = {}", r.correct());
            let _ = writeln!(out, "accuracy_{name}_pct = {:.2}", r.accuracy_pct().unwrap_or(0.0));
        }
        if let Some(d) = &self.depth {
            if let Ok(s) = d.summary() {
                let _ = writeln!(out, "rmse_m = {:.3}", s.rmse);
                let _ = writeln!(out, "rmse_log = {:.3}", s.rmse_log);
                for k in 0..3 {
                    let _ = writeln!(out, "delta{} = {:.4}", k + 1, s.delta[k]);
                }
            }
            let _ = writeln!(out, "depth_excluded_nonpositive = {}", d.excluded_nonpositive);
        }
        out
    }
}
