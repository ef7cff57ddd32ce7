//! Sparse reliable disparities: extraction from filtered maps, random
//! subsampling and the plain-text exchange format.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::matcher::ConfidenceMap;
use crate::raster::DisparityMap;
use crate::rng::DrawStream;
use crate::sgm::lrc_filter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub x: u32,
    pub y: u32,
    pub d: f32,
}

/// Seeds of one image, unique per pixel and kept in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedSet {
    width: usize,
    height: usize,
    entries: Vec<Seed>,
}

impl SeedSet {
    pub fn empty(width: usize, height: usize) -> Self {
        SeedSet {
            width,
            height,
            entries: Vec::new(),
        }
    }

    /// Validates bounds and uniqueness, then sorts row-major.
    pub fn new(width: usize, height: usize, mut entries: Vec<Seed>) -> Result<Self> {
        for s in &entries {
            if s.x as usize >= width || s.y as usize >= height {
                return Err(Error::SeedOutOfBounds {
                    x: s.x as usize,
                    y: s.y as usize,
                    width,
                    height,
                });
            }
            if !(s.d >= 0.0 && s.d.is_finite()) {
                return Err(Error::InvalidParameter("seed disparity must be finite and non-negative"));
            }
        }
        entries.sort_by_key(|s| (s.y, s.x));
        if let Some(w) = entries.windows(2).find(|w| (w[0].x, w[0].y) == (w[1].x, w[1].y)) {
            return Err(Error::DuplicateSeed {
                x: w[0].x as usize,
                y: w[0].y as usize,
            });
        }
        Ok(SeedSet {
            width,
            height,
            entries,
        })
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

    pub fn entries(&self) -> &[Seed] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Seeds per image pixel.
    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / (self.width * self.height) as f64
    }

    /// Mirror x coordinates (`x -> width - 1 - x`), keeping row-major order.
    pub fn flip_horizontal(&self) -> SeedSet {
        let mut entries: Vec<Seed> = self
            .entries
            .iter()
            .map(|s| Seed {
                x: (self.width - 1) as u32 - s.x,
                ..*s
            })
            .collect();
        entries.sort_by_key(|s| (s.y, s.x));
        SeedSet {
            width: self.width,
            height: self.height,
            entries,
        }
    }

    /// Sparse map holding the seeds.
    pub fn to_map(&self) -> DisparityMap {
        let mut m = DisparityMap::invalid(self.width, self.height);
        for s in &self.entries {
            m.set(s.x as usize, s.y as usize, s.d);
        }
        m
    }

    /// Text form: a `width height` header, then one `x y d` line per seed.
    /// Disparities use the shortest representation that parses back to the
    /// same `f32`.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * (self.entries.len() + 1));
        let _ = writeln!(out, "{} {}", self.width, self.height);
        for s in &self.entries {
            let _ = writeln!(out, "{} {} {}", s.x, s.y, s.d);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::SeedFormat { line, reason };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |s: &str| s.parse::<usize>().ok().filter(|&v| v > 0);
        let (width, height) = match dims.as_slice() {
            [w, h] => match (parse_dim(w), parse_dim(h)) {
                (Some(w), Some(h)) => (w, h),
                _ => return Err(bad(1, format!("bad header {header:?}"))),
            },
            _ => return Err(bad(1, format!("expected 'width height', got {header:?}"))),
        };
        let mut entries = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [x, y, d] = fields.as_slice() else {
                return Err(bad(i + 1, format!("expected 'x y d', got {line:?}")));
            };
            let seed = (|| {
                Some(Seed {
                    x: x.parse().ok()?,
                    y: y.parse().ok()?,
                    d: d.parse().ok()?,
                })
            })()
            .ok_or_else(|| bad(i + 1, format!("unparsable triple {line:?}")))?;
            entries.push(seed);
        }
        SeedSet::new(width, height, entries)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum FilterMode {
    /// Left-right consistency only (the SGM/L source).
    LrcOnly,
    /// Peak-ratio confidence and left-right consistency (the BM/W surrogate).
    Confidence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FilterConfig {
    pub mode: FilterMode,
    /// Minimum peak ratio, at least 1.
    pub pkr_min: f32,
    pub lrc_tau: f32,
    /// Keep at most `floor(target_density · pixels)` seeds, most confident
    /// first. Confidence mode only.
    pub target_density: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            mode: FilterMode::LrcOnly,
            pkr_min: 1.5,
            lrc_tau: 1.0,
            target_density: Some(0.12),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pkr_min >= 1.0) {
            return Err(Error::InvalidParameter("pkr_min must be at least 1"));
        }
        if !(self.lrc_tau >= 0.0) {
            return Err(Error::InvalidParameter("lrc_tau must be non-negative"));
        }
        if let Some(t) = self.target_density {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidParameter("target_density must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// One seed per valid pixel of an already consistency-filtered map.
pub fn filter_lrc(d_map: &DisparityMap) -> SeedSet {
    let entries = d_map
        .iter_valid()
        .map(|(x, y, d)| Seed {
            x: x as u32,
            y: y as u32,
            d,
        })
        .collect();
    SeedSet {
        width: d_map.width(),
        height: d_map.height(),
        entries,
    }
}

/// Pixels with peak ratio `>= pkr_min` that also pass the left-right check,
/// optionally cut to a pixel budget keeping the most confident (ties to the
/// smaller `(y, x)`).
pub fn filter_confidence(
    d_map: &DisparityMap,
    conf: &ConfidenceMap,
    d_right: &DisparityMap,
    cfg: &FilterConfig,
) -> Result<SeedSet> {
    cfg.validate()?;
    if conf.dims() != d_map.dims() {
        return Err(Error::mismatch(d_map.dims(), conf.dims()));
    }
    let consistent = lrc_filter(d_map, d_right, cfg.lrc_tau)?;
    let mut kept: Vec<(Seed, f32)> = consistent
        .iter_valid()
        .filter_map(|(x, y, d)| {
            let c = conf.get(x, y);
            (c >= cfg.pkr_min).then_some((
                Seed {
                    x: x as u32,
                    y: y as u32,
                    d,
                },
                c,
            ))
        })
        .collect();
    if let Some(t) = cfg.target_density {
        let budget = libm::floor(t * d_map.len() as f64) as usize;
        if kept.len() > budget {
            kept.sort_by(|(a, ca), (b, cb)| cb.total_cmp(ca).then((a.y, a.x).cmp(&(b.y, b.x))));
            kept.truncate(budget);
            kept.sort_by_key(|(s, _)| (s.y, s.x));
        }
    }
    Ok(SeedSet {
        width: d_map.width(),
        height: d_map.height(),
        entries: kept.into_iter().map(|(s, _)| s).collect(),
    })
}

/// Bernoulli subsample: one draw per seed in row-major order.
pub fn sample_with(seeds: &SeedSet, p: f64, stream: &mut DrawStream) -> SeedSet {
    let entries = seeds
        .entries
        .iter()
        .filter(|_| stream.bernoulli(p))
        .copied()
        .collect();
    SeedSet {
        width: seeds.width,
        height: seeds.height,
        entries,
    }
}

pub fn sample_seeds(seeds: &SeedSet, p: f64, rng_seed: u64) -> Result<SeedSet> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter("sampling probability must lie in [0, 1]"));
    }
    Ok(sample_with(seeds, p, &mut DrawStream::new(rng_seed)))
}
