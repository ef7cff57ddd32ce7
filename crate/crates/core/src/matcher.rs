//! Local stereo matching: census transform, matching cost volumes,
//! winner-take-all selection and the peak-ratio confidence.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Raster};

/// Per-pixel census signatures.
///
/// Bit `k` of a signature is set iff the `k`-th window neighbor (row-major,
/// center skipped) is strictly darker than the center. Neighbors outside the
/// image compare as equal and leave their bit clear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CensusField {
    width: usize,
    height: usize,
    window: usize,
    bits: Vec<u128>,
}

impl CensusField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Signature length `w² - 1`.
    pub fn bit_len(&self) -> usize {
        self.window * self.window - 1
    }

    pub fn signature(&self, x: usize, y: usize) -> u128 {
        self.bits[y * self.width + x]
    }

    pub fn bit(&self, x: usize, y: usize, k: usize) -> bool {
        (self.signature(x, y) >> k) & 1 == 1
    }
}

pub fn census_transform(image: &Raster, window: usize) -> Result<CensusField> {
    if window % 2 == 0 || !(3..=9).contains(&window) {
        return Err(Error::InvalidWindow(window));
    }
    if image.channels() != 1 {
        return Err(Error::InvalidRaster("census needs a single-channel image"));
    }
    let (w, h) = image.dims();
    let r = (window / 2) as isize;
    let data = image.data();
    let mut bits = vec![0u128; w * h];
    for y in 0..h {
        for x in 0..w {
            let center = data[y * w + x];
            let mut sig = 0u128;
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                        if data[ny as usize * w + nx as usize] < center {
                            sig |= 1 << k;
                        }
                    }
                    k += 1;
                }
            }
            bits[y * w + x] = sig;
        }
    }
    Ok(CensusField {
        width: w,
        height: h,
        window,
        bits,
    })
}

/// Matching cost per `(x, y, d)`, `d` in `0..levels`.
///
/// Costs are stored pixel-major (`d` innermost). `oob_cost` is the value a
/// candidate takes when its correspondence falls outside the other image;
/// left-view entries with `x < d` hold it, and right-view lookups use it.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    width: usize,
    height: usize,
    levels: usize,
    oob_cost: f32,
    costs: Vec<f32>,
}

impl CostVolume {
    pub fn from_costs(width: usize, height: usize, levels: usize, oob_cost: f32, costs: Vec<f32>) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidParameter("a cost volume needs at least one disparity level"));
        }
        if costs.len() != width * height * levels {
            return Err(Error::InvalidParameter("cost count does not match volume dimensions"));
        }
        Ok(CostVolume {
            width,
            height,
            levels,
            oob_cost,
            costs,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of disparity candidates.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn oob_cost(&self) -> f32 {
        self.oob_cost
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize, d: usize) -> f32 {
        self.costs[(y * self.width + x) * self.levels + d]
    }

    /// Cost curve of one pixel.
    #[inline]
    pub fn curve(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.levels;
        &self.costs[i..i + self.levels]
    }

    pub fn costs(&self) -> &[f32] {
        &self.costs
    }

    pub(crate) fn costs_mut(&mut self) -> &mut [f32] {
        &mut self.costs
    }

    pub(crate) fn set_oob_cost(&mut self, c: f32) {
        self.oob_cost = c;
    }
}

/// Hamming-distance volume between census fields, penalty `w² - 1` off-image.
pub fn build_cost_volume(left: &CensusField, right: &CensusField, levels: usize) -> Result<CostVolume> {
    let penalty = left.bit_len() as f32;
    build_cost_volume_with_penalty(left, right, levels, penalty)
}

pub fn build_cost_volume_with_penalty(
    left: &CensusField,
    right: &CensusField,
    levels: usize,
    penalty: f32,
) -> Result<CostVolume> {
    if (left.width, left.height) != (right.width, right.height) {
        return Err(Error::mismatch((left.width, left.height), (right.width, right.height)));
    }
    if left.window != right.window {
        return Err(Error::InvalidParameter("census fields use different windows"));
    }
    if levels == 0 {
        return Err(Error::InvalidParameter("d_max must be at least 1"));
    }
    let (w, h) = (left.width, left.height);
    let mut costs = vec![penalty; w * h * levels];
    for y in 0..h {
        let lrow = &left.bits[y * w..(y + 1) * w];
        let rrow = &right.bits[y * w..(y + 1) * w];
        for x in 0..w {
            let cell = &mut costs[(y * w + x) * levels..(y * w + x + 1) * levels];
            let l = lrow[x];
            for (d, c) in cell.iter_mut().enumerate().take(x + 1) {
                *c = (l ^ rrow[x - d]).count_ones() as f32;
            }
        }
    }
    CostVolume::from_costs(w, h, levels, penalty, costs)
}

/// Windowed sum of absolute intensity differences.
///
/// The window is clipped at image borders; right-image columns left of zero
/// are clamped to column zero. Candidates with `x < d` get `255·w²`.
pub fn sad_cost_volume(left: &Raster, right: &Raster, window: usize, levels: usize) -> Result<CostVolume> {
    if left.dims() != right.dims() {
        return Err(Error::mismatch(left.dims(), right.dims()));
    }
    if window % 2 == 0 || window == 0 {
        return Err(Error::InvalidWindow(window));
    }
    if levels == 0 {
        return Err(Error::InvalidParameter("d_max must be at least 1"));
    }
    let l = left.to_intensity();
    let r = right.to_intensity();
    let (w, h) = l.dims();
    let rad = window / 2;
    let penalty = 255.0 * (window * window) as f32;
    let mut costs = vec![penalty; w * h * levels];
    // integral image of |L - R(x-d)| per disparity
    let mut integral = vec![0u64; (w + 1) * (h + 1)];
    for d in 0..levels {
        for y in 0..h {
            let mut row_sum = 0u64;
            for x in 0..w {
                let rx = x.saturating_sub(d);
                row_sum += l.data()[y * w + x].abs_diff(r.data()[y * w + rx]) as u64;
                integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row_sum;
            }
        }
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(rad), (y + rad + 1).min(h));
            for x in d..w {
                let (x0, x1) = (x.saturating_sub(rad), (x + rad + 1).min(w));
                let s = integral[y1 * (w + 1) + x1] + integral[y0 * (w + 1) + x0]
                    - integral[y0 * (w + 1) + x1]
                    - integral[y1 * (w + 1) + x0];
                costs[(y * w + x) * levels + d] = s as f32;
            }
        }
    }
    CostVolume::from_costs(w, h, levels, penalty, costs)
}

/// Argmin with ties to the smallest index, plus optional parabola refinement.
fn select(levels: usize, subpixel: bool, cost: impl Fn(usize) -> f32) -> f32 {
    let mut best = 0;
    let mut best_cost = cost(0);
    for d in 1..levels {
        let c = cost(d);
        if c < best_cost {
            best = d;
            best_cost = c;
        }
    }
    let mut out = best as f64;
    if subpixel && best > 0 && best + 1 < levels {
        let (cm, c0, cp) = (cost(best - 1) as f64, best_cost as f64, cost(best + 1) as f64);
        let denom = 2.0 * (cm + cp - 2.0 * c0);
        if denom != 0.0 {
            out += (cm - cp) / denom;
        }
    }
    out as f32
}

/// Winner-take-all left-view disparity; every pixel valid.
pub fn wta(volume: &CostVolume, subpixel: bool) -> DisparityMap {
    let (w, h, n) = (volume.width, volume.height, volume.levels);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let curve = volume.curve(x, y);
            values.push(select(n, subpixel, |d| curve[d]));
        }
    }
    DisparityMap::from_values(w, h, values).expect("sized from volume")
}

/// Right-view disparity from the left-referenced volume:
/// `d_R(x, y) = argmin_d cost(x + d, y, d)`.
pub fn right_disparity(volume: &CostVolume, subpixel: bool) -> DisparityMap {
    let (w, h, n) = (volume.width, volume.height, volume.levels);
    let oob = volume.oob_cost;
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            values.push(select(n, subpixel, |d| {
                if x + d < w {
                    volume.cost(x + d, y, d)
                } else {
                    oob
                }
            }));
        }
    }
    DisparityMap::from_values(w, h, values).expect("sized from volume")
}

/// Per-pixel confidence scores, higher is more reliable.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl ConfidenceMap {
    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidParameter("confidence length does not match dimensions"));
        }
        Ok(ConfidenceMap { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

const PKR_EPSILON: f32 = 1.0;

/// Peak ratio `c2m / max(c1, 1)`: `c1` is the cost at the selected
/// disparity and `c2m` the smallest cost more than one level away from it.
/// Invalid pixels score 0; curves with no such second candidate score 1.
pub fn confidence_pkr(volume: &CostVolume, wta_map: &DisparityMap) -> Result<ConfidenceMap> {
    let dims = (volume.width, volume.height);
    if dims != wta_map.dims() {
        return Err(Error::mismatch(dims, wta_map.dims()));
    }
    let n = volume.levels;
    let mut values = Vec::with_capacity(dims.0 * dims.1);
    for y in 0..dims.1 {
        for x in 0..dims.0 {
            let Some(d) = wta_map.get(x, y) else {
                values.push(0.0);
                continue;
            };
            let curve = volume.curve(x, y);
            let best = (libm::roundf(d).max(0.0) as usize).min(n - 1);
            let c1 = curve[best];
            let c2m = curve
                .iter()
                .enumerate()
                .filter(|(k, _)| k.abs_diff(best) > 1)
                .map(|(_, &c)| c)
                .fold(f32::INFINITY, f32::min);
            values.push(if c2m.is_finite() { c2m / c1.max(PKR_EPSILON) } else { 1.0 });
        }
    }
    ConfidenceMap::from_values(dims.0, dims.1, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume_1px(curve: &[f32]) -> CostVolume {
        CostVolume::from_costs(1, 1, curve.len(), 100.0, curve.to_vec()).unwrap()
    }

    #[test]
    fn census_constant_image_is_zero() {
        let img = Raster::filled(7, 5, 1, 90).unwrap();
        let c = census_transform(&img, 5).unwrap();
        assert!(c.bits.iter().all(|&s| s == 0));
    }

    #[test]
    fn census_hand_enumerated_patch() {
        let img = Raster::new(3, 3, 1, vec![1, 2, 3, 4, 5, 6, 7, 8, 9]).unwrap();
        let c = census_transform(&img, 3).unwrap();
        let bits: Vec<bool> = (0..8).map(|k| c.bit(1, 1, k)).collect();
        assert_eq!(bits, [true, true, true, true, false, false, false, false]);
    }

    #[test]
    fn census_window_validation() {
        let img = Raster::filled(4, 4, 1, 0).unwrap();
        for bad in [0, 1, 2, 4, 11] {
            assert_eq!(census_transform(&img, bad), Err(Error::InvalidWindow(bad)));
        }
        let rgb = Raster::filled(4, 4, 3, 0).unwrap();
        assert!(census_transform(&rgb, 3).is_err());
        assert_eq!(census_transform(&img, 9).unwrap().bit_len(), 80);
    }

    #[test]
    fn cost_volume_identity_and_bounds() {
        let img = Raster::from_fn(12, 6, |x, y| ((x * 37 + y * 91) % 251) as u8).unwrap();
        let c = census_transform(&img, 5).unwrap();
        let v = build_cost_volume(&c, &c, 4).unwrap();
        for y in 0..6 {
            for x in 0..12 {
                assert_eq!(v.cost(x, y, 0), 0.0);
                assert!(v.curve(x, y).iter().all(|&k| (0.0..=24.0).contains(&k)));
            }
        }
        // x < d takes the penalty
        assert_eq!(v.cost(1, 0, 3), 24.0);
    }

    #[test]
    fn cost_volume_dimension_mismatch() {
        let a = census_transform(&Raster::filled(4, 4, 1, 0).unwrap(), 3).unwrap();
        let b = census_transform(&Raster::filled(5, 4, 1, 0).unwrap(), 3).unwrap();
        assert!(matches!(build_cost_volume(&a, &b, 2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn wta_symmetric_parabola() {
        let m = wta(&volume_1px(&[5.0, 1.0, 5.0]), true);
        assert_eq!(m.get(0, 0), Some(1.0));
    }

    #[test]
    fn wta_skewed_parabola() {
        let m = wta(&volume_1px(&[3.0, 1.0, 2.0]), true);
        let expected = 1.0 + (3.0 - 2.0) / (2.0 * (3.0 + 2.0 - 2.0));
        assert!((m.get(0, 0).unwrap() - expected).abs() < 1e-4);
        assert!((m.get(0, 0).unwrap() - 1.1667).abs() < 1e-4);
    }

    #[test]
    fn wta_ties_to_smallest() {
        let mut c = vec![9.0; 10];
        c[4] = 2.0;
        c[7] = 2.0;
        assert_eq!(wta(&volume_1px(&c), false).get(0, 0), Some(4.0));
    }

    #[test]
    fn wta_flat_denominator_skips_refinement() {
        let m = wta(&volume_1px(&[1.0, 1.0, 1.0, 4.0]), true);
        assert_eq!(m.get(0, 0), Some(0.0));
        let m = wta(&volume_1px(&[2.0, 1.0, 1.0, 4.0]), true);
        // d* = 1, c(0)=2, c(2)=1: 1 + 1/2 = 1.5
        assert_eq!(m.get(0, 0), Some(1.5));
    }

    #[test]
    fn pkr_examples() {
        let mut curve = vec![10.0; 6];
        curve[2] = 1.0;
        curve[3] = 2.0;
        let v = volume_1px(&curve);
        let m = wta(&v, false);
        assert_eq!(confidence_pkr(&v, &m).unwrap().get(0, 0), 10.0);

        let flat = volume_1px(&[4.0; 6]);
        let m = wta(&flat, false);
        assert_eq!(confidence_pkr(&flat, &m).unwrap().get(0, 0), 1.0);
    }

    #[test]
    fn pkr_scale_invariance() {
        let curve = [7.0, 3.0, 2.5, 9.0, 11.0, 4.0];
        let v = volume_1px(&curve);
        let scaled = volume_1px(&curve.map(|c| c * 3.0));
        let a = confidence_pkr(&v, &wta(&v, false)).unwrap().get(0, 0);
        let b = confidence_pkr(&scaled, &wta(&scaled, false)).unwrap().get(0, 0);
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn sad_prefers_true_shift() {
        let left = Raster::from_fn(30, 8, |x, y| ((x * 53 + y * 17 + x * x * 7) % 256) as u8).unwrap();
        let right = Raster::from_fn(30, 8, |x, y| {
            let sx = x + 4;
            if sx < 30 {
                left.pixel(sx, y)[0]
            } else {
                0
            }
        })
        .unwrap();
        let v = sad_cost_volume(&left, &right, 3, 8).unwrap();
        let m = wta(&v, false);
        for y in 1..7 {
            for x in 10..28 {
                assert_eq!(m.get(x, y), Some(4.0), "at ({x},{y})");
            }
        }
    }
}
