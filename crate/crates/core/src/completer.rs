//! Densification of sparse seeds guided by a single image.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Raster};
use crate::seeds::SeedSet;

/// Anything that turns an image plus sparse seeds into a dense disparity map.
pub trait Completer {
    fn complete(&self, image: &Raster, seeds: &SeedSet) -> Result<DisparityMap>;
}

impl<C: Completer + ?Sized> Completer for &C {
    fn complete(&self, image: &Raster, seeds: &SeedSet) -> Result<DisparityMap> {
        (**self).complete(image, seeds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CompleterConfig {
    /// Spatial kernel width in pixels; also the search grid cell size.
    pub sigma_spatial: f64,
    /// Photometric kernel width in intensity units.
    pub sigma_color: f64,
    pub k_neighbors: usize,
}

impl Default for CompleterConfig {
    fn default() -> Self {
        CompleterConfig {
            sigma_spatial: 14.0,
            sigma_color: 10.0,
            k_neighbors: 32,
        }
    }
}

impl CompleterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_spatial > 0.0 && self.sigma_color > 0.0) {
            return Err(Error::InvalidParameter("completer sigmas must be positive"));
        }
        if self.k_neighbors == 0 {
            return Err(Error::InvalidParameter("k_neighbors must be at least 1"));
        }
        Ok(())
    }
}

/// Joint-bilateral scattered-data interpolation.
///
/// Each pixel `q` averages its `k` spatially nearest seeds (ties by seed
/// index) with weights
/// `exp(-|q - s|² / 2σs² - (I(q) - I(s))² / 2σc²)` on the intensity image.
/// Seed pixels keep their own value; if every weight underflows the nearest
/// seed's value is used.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceCompleter {
    cfg: CompleterConfig,
}

impl ReferenceCompleter {
    pub fn new(cfg: CompleterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(ReferenceCompleter { cfg })
    }

    pub fn config(&self) -> &CompleterConfig {
        &self.cfg
    }

    /// Builds the search index; rows can then be filled independently.
    pub fn prepare<'a>(&self, image: &Raster, seeds: &'a SeedSet) -> Result<PreparedCompletion<'a>> {
        if seeds.is_empty() {
            return Err(Error::EmptySeeds);
        }
        if image.dims() != seeds.dims() {
            return Err(Error::mismatch(image.dims(), seeds.dims()));
        }
        let intensity = image.to_intensity();
        let (w, h) = intensity.dims();
        let cell = (libm::ceil(self.cfg.sigma_spatial) as usize).max(1);
        let (gw, gh) = (w.div_ceil(cell), h.div_ceil(cell));

        // CSR buckets; seed indices stay ascending inside each cell
        let mut counts = vec![0u32; gw * gh + 1];
        for s in seeds.entries() {
            counts[(s.y as usize / cell) * gw + s.x as usize / cell + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut members = vec![0u32; seeds.len()];
        let mut seed_at = vec![u32::MAX; w * h];
        for (i, s) in seeds.entries().iter().enumerate() {
            let c = (s.y as usize / cell) * gw + s.x as usize / cell;
            members[fill[c] as usize] = i as u32;
            fill[c] += 1;
            seed_at[s.y as usize * w + s.x as usize] = i as u32;
        }
        let seed_intensity = seeds
            .entries()
            .iter()
            .map(|s| intensity.data()[s.y as usize * w + s.x as usize])
            .collect();
        Ok(PreparedCompletion {
            cfg: self.cfg,
            seeds,
            intensity,
            seed_intensity,
            cell,
            grid: (gw, gh),
            offsets: counts,
            members,
            seed_at,
        })
    }
}

impl Completer for ReferenceCompleter {
    fn complete(&self, image: &Raster, seeds: &SeedSet) -> Result<DisparityMap> {
        let prepared = self.prepare(image, seeds)?;
        let (w, h) = image.dims();
        let mut values = vec![0f32; w * h];
        let mut scratch = Vec::new();
        for (y, row) in values.chunks_exact_mut(w).enumerate() {
            prepared.fill_row(y, row, &mut scratch);
        }
        DisparityMap::from_values(w, h, values)
    }
}

/// Search index plus photometric data for one completion.
pub struct PreparedCompletion<'a> {
    cfg: CompleterConfig,
    seeds: &'a SeedSet,
    intensity: Raster,
    seed_intensity: Vec<u8>,
    cell: usize,
    grid: (usize, usize),
    offsets: Vec<u32>,
    members: Vec<u32>,
    seed_at: Vec<u32>,
}

impl PreparedCompletion<'_> {
    pub fn width(&self) -> usize {
        self.intensity.width()
    }

    /// Fills row `y`; `scratch` is reused across calls to avoid allocation.
    pub fn fill_row(&self, y: usize, out: &mut [f32], scratch: &mut Vec<(u64, u32)>) {
        for (x, o) in out.iter_mut().enumerate() {
            *o = self.value_at(x, y, scratch);
        }
    }

    fn value_at(&self, x: usize, y: usize, cand: &mut Vec<(u64, u32)>) -> f32 {
        let w = self.intensity.width();
        let entries = self.seeds.entries();
        let own = self.seed_at[y * w + x];
        if own != u32::MAX {
            return entries[own as usize].d;
        }
        let k = self.cfg.k_neighbors.min(entries.len());
        self.nearest(x, y, k, cand);

        let two_ss = 2.0 * self.cfg.sigma_spatial * self.cfg.sigma_spatial;
        let two_sc = 2.0 * self.cfg.sigma_color * self.cfg.sigma_color;
        let iq = self.intensity.data()[y * w + x] as f64;
        let (mut num, mut den) = (0f64, 0f64);
        let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
        for &(d2, idx) in cand.iter() {
            let s = &entries[idx as usize];
            let di = iq - self.seed_intensity[idx as usize] as f64;
            let wgt = libm::exp(-(d2 as f64) / two_ss - di * di / two_sc);
            num += wgt * s.d as f64;
            den += wgt;
            lo = lo.min(s.d);
            hi = hi.max(s.d);
        }
        if den > 0.0 {
            // the clamp only absorbs rounding: the mean is convex in exact arithmetic
            ((num / den) as f32).clamp(lo, hi)
        } else {
            entries[cand[0].1 as usize].d
        }
    }

    /// Exact k nearest seeds by squared distance, ties by seed index, left in
    /// `cand` sorted by `(distance², index)`.
    fn nearest(&self, x: usize, y: usize, k: usize, cand: &mut Vec<(u64, u32)>) {
        let entries = self.seeds.entries();
        let (gw, gh) = self.grid;
        let (cx, cy) = ((x / self.cell) as isize, (y / self.cell) as isize);
        let max_ring = cx.max(gw as isize - 1 - cx).max(cy).max(gh as isize - 1 - cy);
        cand.clear();
        let push_cell = |gx: isize, gy: isize, cand: &mut Vec<(u64, u32)>| {
            if gx < 0 || gy < 0 || gx >= gw as isize || gy >= gh as isize {
                return;
            }
            let c = gy as usize * gw + gx as usize;
            for &i in &self.members[self.offsets[c] as usize..self.offsets[c + 1] as usize] {
                let s = &entries[i as usize];
                let dx = s.x as i64 - x as i64;
                let dy = s.y as i64 - y as i64;
                cand.push(((dx * dx + dy * dy) as u64, i));
            }
        };
        for r in 0..=max_ring {
            if r == 0 {
                push_cell(cx, cy, cand);
            } else {
                for gx in cx - r..=cx + r {
                    push_cell(gx, cy - r, cand);
                    push_cell(gx, cy + r, cand);
                }
                for gy in cy - r + 1..cy + r {
                    push_cell(cx - r, gy, cand);
                    push_cell(cx + r, gy, cand);
                }
            }
            if cand.len() >= k {
                cand.select_nth_unstable(k - 1);
                cand.truncate(k);
                // unvisited cells lie more than r·cell pixels away
                let reach = (r as u64) * self.cell as u64;
                let kth = cand.iter().map(|c| c.0).max().unwrap_or(0);
                if kth <= reach * reach {
                    break;
                }
            }
        }
        cand.sort_unstable();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::Seed;

    fn completer() -> ReferenceCompleter {
        ReferenceCompleter::new(CompleterConfig::default()).unwrap()
    }

    /// Brute-force k nearest by sorting every seed.
    fn brute_nearest(seeds: &SeedSet, x: usize, y: usize, k: usize) -> Vec<(u64, u32)> {
        let mut all: Vec<(u64, u32)> = seeds
            .entries()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let dx = s.x as i64 - x as i64;
                let dy = s.y as i64 - y as i64;
                ((dx * dx + dy * dy) as u64, i as u32)
            })
            .collect();
        all.sort();
        all.truncate(k);
        all
    }

    #[test]
    fn knn_matches_brute_force() {
        let (w, h) = (97, 61);
        let mut state = 12345u64;
        let mut entries = Vec::new();
        for y in 0..h {
            for x in 0..w {
                state = crate::rng::mix64(state);
                if state % 23 == 0 {
                    entries.push(Seed { x, y, d: (state % 50) as f32 });
                }
            }
        }
        let seeds = SeedSet::new(w as usize, h as usize, entries).unwrap();
        let img = Raster::filled(w as usize, h as usize, 1, 0).unwrap();
        for k in [1, 5, 32] {
            let c = ReferenceCompleter::new(CompleterConfig {
                k_neighbors: k,
                sigma_spatial: 6.0,
                ..Default::default()
            })
            .unwrap();
            let p = c.prepare(&img, &seeds).unwrap();
            let mut cand = Vec::new();
            for y in (0..h as usize).step_by(3) {
                for x in (0..w as usize).step_by(2) {
                    p.nearest(x, y, k, &mut cand);
                    assert_eq!(cand, brute_nearest(&seeds, x, y, k), "k={k} at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn full_seeds_reproduce_exactly() {
        let img = Raster::from_fn(9, 4, |x, y| (x * 20 + y) as u8).unwrap();
        let entries = (0..36).map(|i| Seed { x: i % 9, y: i / 9, d: i as f32 * 0.37 }).collect();
        let seeds = SeedSet::new(9, 4, entries).unwrap();
        let out = completer().complete(&img, &seeds).unwrap();
        assert!(out.bit_eq(&seeds.to_map()));
    }

    #[test]
    fn single_seed_is_constant() {
        let img = Raster::from_fn(40, 30, |x, y| (x * 7 + y * 3) as u8).unwrap();
        let seeds = SeedSet::new(40, 30, vec![Seed { x: 13, y: 21, d: 7.0 }]).unwrap();
        let out = completer().complete(&img, &seeds).unwrap();
        assert_eq!(out.valid_count(), 1200);
        assert!(out.values().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn underflow_falls_back_to_nearest() {
        let cfg = CompleterConfig { sigma_spatial: 0.5, sigma_color: 0.1, k_neighbors: 2 };
        let img = Raster::from_fn(60, 1, |x, _| if x < 30 { 0 } else { 255 }).unwrap();
        let seeds = SeedSet::new(60, 1, vec![Seed { x: 0, y: 0, d: 3.0 }, Seed { x: 59, y: 0, d: 9.0 }]).unwrap();
        let out = ReferenceCompleter::new(cfg).unwrap().complete(&img, &seeds).unwrap();
        assert_eq!(out.get(20, 0), Some(3.0));
        assert_eq!(out.get(45, 0), Some(9.0));
    }

    #[test]
    fn errors() {
        let img = Raster::filled(4, 4, 1, 0).unwrap();
        assert_eq!(completer().complete(&img, &SeedSet::empty(4, 4)), Err(Error::EmptySeeds));
        let other = SeedSet::new(5, 4, vec![Seed { x: 0, y: 0, d: 1.0 }]).unwrap();
        assert!(completer().complete(&img, &other).is_err());
        assert!(ReferenceCompleter::new(CompleterConfig { k_neighbors: 0, ..Default::default() }).is_err());
    }
}
