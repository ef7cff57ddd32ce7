//! In-memory images and disparity maps.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// 8-bit raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster("width and height must be at least 1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster("only 1 or 3 channels are supported"));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidRaster("data length does not match dimensions"));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Raster::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel raster from a closure over `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Raster::new(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Luma with fixed 0.299/0.587/0.114 weights, rounded to nearest.
    /// Single-channel rasters are returned unchanged.
    pub fn to_intensity(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| {
                // integer form of the weights: exact rounding, no float drift
                let v = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
                ((v + 500) / 1000) as u8
            })
            .collect();
        Raster {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Mirror columns.
    pub fn flip_horizontal(&self) -> Raster {
        let mut data = Vec::with_capacity(self.data.len());
        let c = self.channels;
        for row in self.data.chunks_exact(self.width * c) {
            for px in row.chunks_exact(c).rev() {
                data.extend_from_slice(px);
            }
        }
        Raster {
            width: self.width,
            height: self.height,
            channels: c,
            data,
        }
    }
}

/// Dense grid of disparities with an explicit validity mask.
///
/// Invalid pixels keep whatever number sits in `values`; callers must go
/// through the mask. `0.0` is an ordinary valid disparity here.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
    valid: Vec<bool>,
}

impl DisparityMap {
    pub fn invalid(width: usize, height: usize) -> Self {
        DisparityMap {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Fully valid map.
    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidRaster("value count does not match dimensions"));
        }
        let valid = vec![true; values.len()];
        Ok(DisparityMap {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn from_parts(width: usize, height: usize, values: Vec<f32>, valid: Vec<bool>) -> Result<Self> {
        if values.len() != width * height || valid.len() != width * height {
            return Err(Error::InvalidRaster("value or mask length does not match dimensions"));
        }
        Ok(DisparityMap {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f32>) -> Self {
        let mut map = DisparityMap::invalid(width, height);
        for y in 0..height {
            for x in 0..width {
                if let Some(v) = f(x, y) {
                    map.set(x, y, v);
                }
            }
        }
        map
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.values[i])
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        let i = y * self.width + x;
        self.values[i] = v;
        self.valid[i] = true;
    }

    #[inline]
    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    /// Raw value plane; entries under an invalid mask are meaningless.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Fraction of valid pixels in `[0, 1]`.
    pub fn density(&self) -> f64 {
        if self.valid.is_empty() {
            return 0.0;
        }
        self.valid_count() as f64 / self.valid.len() as f64
    }

    /// `(x, y, d)` of every valid pixel in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter(|(_, (_, &ok))| ok)
            .map(move |(i, (&v, _))| (i % w, i / w, v))
    }

    pub fn flip_horizontal(&self) -> DisparityMap {
        let mut out = DisparityMap::invalid(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let src = y * self.width + (self.width - 1 - x);
                let dst = y * self.width + x;
                out.values[dst] = self.values[src];
                out.valid[dst] = self.valid[src];
            }
        }
        out
    }

    /// True when every valid value lies in `[0, d_max]`.
    pub fn within_range(&self, d_max: f32) -> bool {
        self.iter_valid().all(|(_, _, v)| (0.0..=d_max).contains(&v))
    }

    /// Bit-level equality of the valid pixels and identical masks.
    pub fn bit_eq(&self, other: &DisparityMap) -> bool {
        self.dims() == other.dims()
            && self.valid == other.valid
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.valid)
                .all(|((a, b), &ok)| !ok || a.to_bits() == b.to_bits())
    }
}

/// Triangulation constants of a rectified rig.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Calibration {
    /// Focal length in pixels.
    pub focal: f64,
    /// Baseline in meters.
    pub baseline: f64,
}

impl Calibration {
    pub fn new(focal: f64, baseline: f64) -> Result<Self> {
        if !(focal > 0.0) || !(baseline > 0.0) {
            return Err(Error::InvalidParameter("focal and baseline must be positive"));
        }
        Ok(Calibration { focal, baseline })
    }

    /// Depth in meters for a positive disparity.
    pub fn depth(&self, disparity: f64) -> f64 {
        self.focal * self.baseline / disparity
    }
}
