//! Disparity visualisation.

use alloc::vec::Vec;

use crate::raster::{DisparityMap, Raster};

/// Viridis sampled at nine evenly spaced stops.
const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Color for a normalized value `t` (clamped to `[0, 1]`).
pub fn viridis(t: f32) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let pos = t * (VIRIDIS.len() - 1) as f32;
    let i = (pos as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f32;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = a[c] as f32 + (b[c] as f32 - a[c] as f32) * f;
        out[c] = libm::roundf(v) as u8;
    }
    out
}

/// RGB rendering of `map`, valid values scaled by `d_max`, invalid pixels black.
pub fn colorize(map: &DisparityMap, d_max: f32) -> Raster {
    let d_max = if d_max > 0.0 { d_max } else { 1.0 };
    let mut data = Vec::with_capacity(map.len() * 3);
    for (&v, &ok) in map.values().iter().zip(map.validity()) {
        if ok {
            data.extend_from_slice(&viridis(v / d_max));
        } else {
            data.extend_from_slice(&[0, 0, 0]);
        }
    }
    Raster::new(map.width(), map.height(), 3, data).expect("dimensions come from a valid map")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_is_black() {
        let m = DisparityMap::invalid(3, 2);
        assert!(colorize(&m, 10.0).data().iter().all(|&b| b == 0));
    }

    #[test]
    fn clamps_above_range() {
        let m = DisparityMap::from_values(2, 1, alloc::vec![10.0, 20.0]).unwrap();
        let c = colorize(&m, 10.0);
        assert_eq!(c.pixel(0, 0), c.pixel(1, 0));
        assert_eq!(c.pixel(0, 0), &VIRIDIS[8]);
    }

    #[test]
    fn stops_are_hit_exactly() {
        assert_eq!(viridis(0.0), VIRIDIS[0]);
        assert_eq!(viridis(0.5), VIRIDIS[4]);
        assert_eq!(viridis(-3.0), VIRIDIS[0]);
    }
}
