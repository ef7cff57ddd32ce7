//! Semi-global aggregation, left-right consistency and hole filling.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matcher::CostVolume;
use crate::raster::DisparityMap;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SgmParams {
    /// Penalty for a one-level disparity change.
    pub p1: f32,
    /// Penalty for any larger change.
    pub p2: f32,
    /// 4 or 8 scanline directions.
    pub paths: usize,
    /// Left-right agreement tolerance in disparity units.
    pub tau_lrc: f32,
}

impl Default for SgmParams {
    fn default() -> Self {
        SgmParams {
            p1: 10.0,
            p2: 120.0,
            paths: 8,
            tau_lrc: 1.0,
        }
    }
}

impl SgmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p1 >= 0.0 && self.p1 <= self.p2 && self.p2.is_finite()) {
            return Err(Error::InvalidParameter("SGM penalties must satisfy 0 <= p1 <= p2"));
        }
        if self.paths != 4 && self.paths != 8 {
            return Err(Error::InvalidParameter("SGM paths must be 4 or 8"));
        }
        if !(self.tau_lrc >= 0.0) {
            return Err(Error::InvalidParameter("LRC tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Travel direction of a scanline pass; the predecessor of `p` is `p - r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathDirection {
    pub dx: i8,
    pub dy: i8,
}

/// Pass order. Aggregation sums the passes in exactly this order; the first
/// four are the 4-path configuration.
pub const PATHS: [PathDirection; 8] = [
    PathDirection { dx: 1, dy: 0 },
    PathDirection { dx: -1, dy: 0 },
    PathDirection { dx: 0, dy: 1 },
    PathDirection { dx: 0, dy: -1 },
    PathDirection { dx: 1, dy: 1 },
    PathDirection { dx: -1, dy: 1 },
    PathDirection { dx: 1, dy: -1 },
    PathDirection { dx: -1, dy: -1 },
];

/// One DP step for a single pixel: `out` receives
/// `C(p,d) + min(L(d), L(d±1) + p1, min L + p2) - min L`.
#[inline(always)]
fn step(cost: &[f32], prev: &[f32], prev_min: f32, p1: f32, p2: f32, out: &mut [f32]) {
    let n = cost.len();
    let jump = prev_min + p2;
    if n == 1 {
        out[0] = cost[0] + (prev[0].min(jump) - prev_min);
        return;
    }
    out[0] = cost[0] + (prev[0].min(prev[1] + p1).min(jump) - prev_min);
    let inner = out[1..n - 1]
        .iter_mut()
        .zip(&cost[1..n - 1])
        .zip(prev.windows(3));
    for ((o, &c), w) in inner {
        let best = w[1].min(w[0] + p1).min(w[2] + p1).min(jump);
        *o = c + (best - prev_min);
    }
    out[n - 1] = cost[n - 1] + (prev[n - 1].min(prev[n - 2] + p1).min(jump) - prev_min);
}

#[inline]
fn min_of(xs: &[f32]) -> f32 {
    xs.iter().copied().fold(f32::INFINITY, f32::min)
}

/// Runs one scanline pass and hands every finished pixel's `L_r` curve to
/// `sink(pixel_index, curve)`.
fn run_path(volume: &CostVolume, dir: PathDirection, p1: f32, p2: f32, mut sink: impl FnMut(usize, &[f32])) {
    let (w, h, n) = (volume.width(), volume.height(), volume.levels());
    let costs = volume.costs();
    let mut prev_row = vec![0f32; w * n];
    let mut prev_min = vec![0f32; w];
    let mut cur_row = vec![0f32; w * n];
    let mut cur_min = vec![0f32; w];

    let rows: Vec<usize> = if dir.dy >= 0 { (0..h).collect() } else { (0..h).rev().collect() };
    let cols: Vec<usize> = if dir.dx >= 0 { (0..w).collect() } else { (0..w).rev().collect() };

    for (ri, &y) in rows.iter().enumerate() {
        let has_prev_row = dir.dy == 0 || ri > 0;
        for &x in &cols {
            let px = x as isize - dir.dx as isize;
            let c = &costs[(y * w + x) * n..(y * w + x + 1) * n];
            let start = px < 0 || px >= w as isize || !has_prev_row;
            if start {
                cur_row[x * n..(x + 1) * n].copy_from_slice(c);
            } else {
                let px = px as usize;
                if dir.dy == 0 {
                    // predecessor lives in the row being built
                    let (head, tail) = cur_row.split_at_mut(x.max(px) * n);
                    if px < x {
                        step(c, &head[px * n..(px + 1) * n], cur_min[px], p1, p2, &mut tail[..n]);
                    } else {
                        step(c, &tail[..n], cur_min[px], p1, p2, &mut head[x * n..(x + 1) * n]);
                    }
                } else {
                    let out = &mut cur_row[x * n..(x + 1) * n];
                    step(c, &prev_row[px * n..(px + 1) * n], prev_min[px], p1, p2, out);
                }
            }
            cur_min[x] = min_of(&cur_row[x * n..(x + 1) * n]);
            sink(y * w + x, &cur_row[x * n..(x + 1) * n]);
        }
        core::mem::swap(&mut prev_row, &mut cur_row);
        core::mem::swap(&mut prev_min, &mut cur_min);
    }
}

/// `L_r` of a single direction.
pub fn aggregate_path(volume: &CostVolume, dir: PathDirection, p1: f32, p2: f32) -> CostVolume {
    let n = volume.levels();
    let mut out = volume.clone();
    {
        let dst = out.costs_mut();
        run_path(volume, dir, p1, p2, |i, curve| {
            dst[i * n..(i + 1) * n].copy_from_slice(curve);
        });
    }
    let max = max_of(out.costs());
    out.set_oob_cost(max);
    out
}

fn max_of(xs: &[f32]) -> f32 {
    xs.iter().copied().fold(0.0, f32::max)
}

/// Sum of `L_r` over the configured directions, in [`PATHS`] order.
///
/// The returned volume's out-of-range cost is its own maximum, so border
/// candidates in right-view lookups never win.
pub fn aggregate(volume: &CostVolume, params: &SgmParams) -> Result<CostVolume> {
    params.validate()?;
    let n = volume.levels();
    let mut out = volume.clone();
    {
        let dst = out.costs_mut();
        dst.fill(0.0);
        for dir in &PATHS[..params.paths] {
            run_path(volume, *dir, params.p1, params.p2, |i, curve| {
                for (o, &v) in dst[i * n..(i + 1) * n].iter_mut().zip(curve) {
                    *o += v;
                }
            });
        }
    }
    let max = max_of(out.costs());
    out.set_oob_cost(max);
    Ok(out)
}

/// Keeps a left pixel iff the right map, sampled at `x - round(d)`, is
/// valid and agrees within `tau`.
pub fn lrc_filter(d_left: &DisparityMap, d_right: &DisparityMap, tau: f32) -> Result<DisparityMap> {
    if d_left.dims() != d_right.dims() {
        return Err(Error::mismatch(d_left.dims(), d_right.dims()));
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter("LRC tolerance must be non-negative"));
    }
    let (w, h) = d_left.dims();
    Ok(DisparityMap::from_fn(w, h, |x, y| {
        let d = d_left.get(x, y)?;
        let xr = x as f32 - libm::roundf(d);
        if xr < 0.0 || xr >= w as f32 {
            return None;
        }
        let dr = d_right.get(xr as usize, y)?;
        ((d - dr).abs() <= tau).then_some(d)
    }))
}

/// Background fill to full density.
///
/// Each invalid run on a row takes the smaller of its two valid neighbors;
/// runs touching the border take the single neighbor. Rows without any
/// valid pixel copy the nearest filled row (ties go up).
pub fn hole_fill(map: &DisparityMap) -> Result<DisparityMap> {
    let (w, h) = map.dims();
    let mut values = map.values().to_vec();
    let mut row_ok = vec![false; h];
    for y in 0..h {
        let row = &mut values[y * w..(y + 1) * w];
        let valid = &map.validity()[y * w..(y + 1) * w];
        let mut last: Option<f32> = None;
        let mut run_start: Option<usize> = None;
        for x in 0..w {
            if valid[x] {
                if let Some(s) = run_start.take() {
                    let fill = match last {
                        Some(l) => l.min(row[x]),
                        None => row[x],
                    };
                    row[s..x].fill(fill);
                }
                last = Some(row[x]);
            } else if run_start.is_none() {
                run_start = Some(x);
            }
        }
        match (run_start, last) {
            (Some(s), Some(l)) => row[s..].fill(l),
            (_, None) => continue,
            _ => {}
        }
        row_ok[y] = true;
    }
    if !row_ok.iter().any(|&ok| ok) {
        return Err(Error::NoValidPixels);
    }
    for y in 0..h {
        if row_ok[y] {
            continue;
        }
        let src = (1..h)
            .find_map(|k| {
                if y >= k && row_ok[y - k] {
                    Some(y - k)
                } else if y + k < h && row_ok[y + k] {
                    Some(y + k)
                } else {
                    None
                }
            })
            .expect("some row is filled");
        values.copy_within(src * w..(src + 1) * w, y * w);
    }
    DisparityMap::from_values(w, h, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(vals: &[Option<f32>]) -> DisparityMap {
        DisparityMap::from_fn(vals.len(), 1, |x, _| vals[x])
    }

    #[test]
    fn params_validation() {
        assert!(SgmParams::default().validate().is_ok());
        assert!(SgmParams { p1: 5.0, p2: 4.0, ..Default::default() }.validate().is_err());
        assert!(SgmParams { paths: 6, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn lrc_examples() {
        let mut l = DisparityMap::invalid(10, 1);
        let mut r = DisparityMap::invalid(10, 1);
        l.set(7, 0, 5.0);
        r.set(2, 0, 5.0);
        assert_eq!(lrc_filter(&l, &r, 1.0).unwrap().get(7, 0), Some(5.0));
        r.set(2, 0, 9.0);
        assert_eq!(lrc_filter(&l, &r, 1.0).unwrap().get(7, 0), None);
        // correspondence off the left edge
        l.set(3, 0, 5.0);
        r.set(0, 0, 5.0);
        assert_eq!(lrc_filter(&l, &r, 1.0).unwrap().get(3, 0), None);
    }

    #[test]
    fn hole_fill_background_rule() {
        let m = row(&[Some(10.0), None, None, Some(20.0)]);
        assert_eq!(hole_fill(&m).unwrap().values(), &[10.0, 10.0, 10.0, 20.0]);
        let m = row(&[None, None, Some(7.0), Some(8.0), None]);
        assert_eq!(hole_fill(&m).unwrap().values(), &[7.0, 7.0, 7.0, 8.0, 8.0]);
    }

    #[test]
    fn hole_fill_empty_rows_copy_nearest_prefer_up() {
        let m = DisparityMap::from_fn(2, 5, |x, y| match y {
            1 => Some(1.0 + x as f32),
            3 => Some(3.0),
            _ => None,
        });
        let f = hole_fill(&m).unwrap();
        assert_eq!(f.values(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0]);
        assert_eq!(f.valid_count(), 10);
    }

    #[test]
    fn hole_fill_rejects_empty_and_keeps_dense() {
        assert_eq!(hole_fill(&DisparityMap::invalid(3, 3)), Err(Error::NoValidPixels));
        let dense = DisparityMap::from_values(3, 1, vec![1.0, 0.0, 4.5]).unwrap();
        assert_eq!(hole_fill(&dense).unwrap(), dense);
    }

    #[test]
    fn single_level_volume() {
        let v = CostVolume::from_costs(3, 2, 1, 1.0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let a = aggregate(&v, &SgmParams::default()).unwrap();
        assert!(a.costs().iter().all(|c| c.is_finite() && *c >= 0.0));
    }
}
