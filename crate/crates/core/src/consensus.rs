//! Consensus distillation.
//!
//! A completer is run `n` times, each time on a fresh random subset of the
//! seeds and a randomly augmented copy of the image. Per-pixel mean and
//! variance of the `n` dense outputs are accumulated in one pass; the proxy
//! keeps the mean wherever the (population) variance is strictly below
//! `gamma`.
//!
//! All randomness comes from a single [`DrawStream`] seeded with
//! `rng_seed`, consumed per iteration in a fixed order: one Bernoulli draw
//! per seed (row-major), one extra index draw only if that sample came out
//! empty, then gain, brightness shift and flip.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::completer::Completer;
use crate::error::{Error, Result};
use crate::raster::{DisparityMap, Raster};
use crate::rng::DrawStream;
use crate::seeds::{sample_with, FilterMode, SeedSet};

/// Seed sampling probability for completion-network training inputs.
pub const P_SAMPLE_TRAINING: f64 = 1.0 / 1000.0;
/// Distillation-time sampling probability for confidence-filtered BM seeds.
pub const P_SAMPLE_BM_W: f64 = 1.0 / 20.0;
/// Distillation-time sampling probability for LRC-filtered SGM seeds.
pub const P_SAMPLE_SGM_L: f64 = 1.0 / 200.0;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ConsensusConfig {
    /// Number of completions, at least 2.
    pub n: usize,
    /// Variance gate in disparity².
    pub gamma: f64,
    pub p_sample: f64,
    pub flip_prob: f64,
    /// Multiplicative gain drawn uniformly from this range.
    pub gain_range: [f64; 2],
    /// Additive shift as a fraction of full scale (255).
    pub shift_range: [f64; 2],
    pub rng_seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        ConsensusConfig {
            n: 50,
            gamma: 3.0,
            p_sample: P_SAMPLE_SGM_L,
            flip_prob: 0.5,
            gain_range: [0.8, 1.2],
            shift_range: [-0.1, 0.1],
            rng_seed: 0,
        }
    }
}

impl ConsensusConfig {
    /// Defaults with the sampling probability of the given seed source.
    pub fn for_source(mode: FilterMode) -> Self {
        ConsensusConfig {
            p_sample: match mode {
                FilterMode::LrcOnly => P_SAMPLE_SGM_L,
                FilterMode::Confidence => P_SAMPLE_BM_W,
            },
            ..Default::default()
        }
    }

    /// No augmentation, every seed kept: all completions see identical input.
    pub fn degenerate(n: usize) -> Self {
        ConsensusConfig {
            n,
            p_sample: 1.0,
            flip_prob: 0.0,
            gain_range: [1.0, 1.0],
            shift_range: [0.0, 0.0],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter("consensus needs at least 2 completions"));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidParameter("gamma must be positive"));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_sample) || !prob(self.flip_prob) {
            return Err(Error::InvalidParameter("probabilities must lie in [0, 1]"));
        }
        let [g0, g1] = self.gain_range;
        let [s0, s1] = self.shift_range;
        if !(g0 > 0.0 && g0 <= g1 && g1.is_finite()) || !(s0 <= s1 && s0.is_finite() && s1.is_finite()) {
            return Err(Error::InvalidParameter("augmentation ranges must be ordered, gains positive"));
        }
        Ok(())
    }
}

/// Photometric and geometric augmentation of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugDraw {
    pub gain: f64,
    /// Fraction of full scale.
    pub shift: f64,
    pub flip: bool,
}

impl AugDraw {
    pub const IDENTITY: AugDraw = AugDraw {
        gain: 1.0,
        shift: 0.0,
        flip: false,
    };
}

/// `v' = clamp(round(v·gain + shift·255), 0, 255)` on every channel, then an
/// optional column mirror. Returns the flip flag alongside the image.
pub fn augment(image: &Raster, draw: &AugDraw) -> (Raster, bool) {
    let offset = draw.shift * 255.0;
    let mut out = image.clone();
    if draw.gain != 1.0 || draw.shift != 0.0 {
        // a 256-entry table keeps the per-pixel work to one lookup
        let mut lut = [0u8; 256];
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = libm::round(v as f64 * draw.gain + offset).clamp(0.0, 255.0) as u8;
        }
        for b in out.data_mut() {
            *b = lut[*b as usize];
        }
    }
    if draw.flip {
        out = out.flip_horizontal();
    }
    (out, draw.flip)
}

/// Random inputs of one completion.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationDraw {
    pub seeds: SeedSet,
    pub aug: AugDraw,
}

/// Lazily yields the draws of every iteration from one stream.
pub struct DrawPlan<'a> {
    seeds: &'a SeedSet,
    cfg: ConsensusConfig,
    stream: DrawStream,
    next: usize,
}

impl<'a> DrawPlan<'a> {
    pub fn new(seeds: &'a SeedSet, cfg: &ConsensusConfig) -> Self {
        DrawPlan {
            seeds,
            cfg: *cfg,
            stream: DrawStream::new(cfg.rng_seed),
            next: 0,
        }
    }
}

impl Iterator for DrawPlan<'_> {
    type Item = IterationDraw;

    fn next(&mut self) -> Option<IterationDraw> {
        if self.next >= self.cfg.n {
            return None;
        }
        self.next += 1;
        let mut sampled = sample_with(self.seeds, self.cfg.p_sample, &mut self.stream);
        if sampled.is_empty() && !self.seeds.is_empty() {
            let pick = self.seeds.entries()[self.stream.index(self.seeds.len())];
            sampled = SeedSet::new(self.seeds.width(), self.seeds.height(), vec![pick]).expect("seed comes from a valid set");
        }
        let [g0, g1] = self.cfg.gain_range;
        let [s0, s1] = self.cfg.shift_range;
        let gain = self.stream.uniform(g0, g1);
        let shift = self.stream.uniform(s0, s1);
        let flip = self.stream.bernoulli(self.cfg.flip_prob);
        Some(IterationDraw {
            seeds: sampled,
            aug: AugDraw { gain, shift, flip },
        })
    }
}

/// Runs one iteration: augment, mirror seeds if flipped, complete, mirror
/// the result back. The output is checked to be fully dense.
pub fn run_iteration<C: Completer + ?Sized>(
    image: &Raster,
    draw: &IterationDraw,
    completer: &C,
    iteration: usize,
) -> Result<DisparityMap> {
    let wrap = |e: Error| Error::Iteration {
        iteration,
        cause: Box::new(e),
    };
    let (aug_image, flipped) = augment(image, &draw.aug);
    let out = if flipped {
        let seeds = draw.seeds.flip_horizontal();
        completer.complete(&aug_image, &seeds).map_err(wrap)?.flip_horizontal()
    } else {
        completer.complete(&aug_image, &draw.seeds).map_err(wrap)?
    };
    if out.dims() != image.dims() {
        return Err(wrap(Error::mismatch(image.dims(), out.dims())));
    }
    let valid = out.valid_count();
    if valid != out.len() {
        return Err(wrap(Error::SparseCompletion {
            valid,
            total: out.len(),
        }));
    }
    Ok(out)
}

/// Per-pixel streaming count, mean and sum of squared deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusAccumulator {
    width: usize,
    height: usize,
    count: Vec<u32>,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ConsensusAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        ConsensusAccumulator {
            width,
            height,
            count: vec![0; width * height],
            mean: vec![0.0; width * height],
            m2: vec![0.0; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Adds every valid pixel of `map` (Welford update).
    pub fn push(&mut self, map: &DisparityMap) -> Result<()> {
        if map.dims() != self.dims() {
            return Err(Error::mismatch(self.dims(), map.dims()));
        }
        for (i, (&v, &ok)) in map.values().iter().zip(map.validity()).enumerate() {
            if !ok {
                continue;
            }
            let x = v as f64;
            self.count[i] += 1;
            let delta = x - self.mean[i];
            self.mean[i] += delta / self.count[i] as f64;
            self.m2[i] += delta * (x - self.mean[i]);
        }
        Ok(())
    }

    /// Pairwise combination of two partial accumulations (Chan et al.).
    pub fn merge(&mut self, other: &ConsensusAccumulator) -> Result<()> {
        if other.dims() != self.dims() {
            return Err(Error::mismatch(self.dims(), other.dims()));
        }
        for i in 0..self.count.len() {
            let (na, nb) = (self.count[i] as f64, other.count[i] as f64);
            if nb == 0.0 {
                continue;
            }
            if na == 0.0 {
                self.count[i] = other.count[i];
                self.mean[i] = other.mean[i];
                self.m2[i] = other.m2[i];
                continue;
            }
            let n = na + nb;
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
            self.count[i] += other.count[i];
        }
        Ok(())
    }

    pub fn count(&self, x: usize, y: usize) -> u32 {
        self.count[y * self.width + x]
    }

    pub fn mean(&self, x: usize, y: usize) -> f64 {
        self.mean[y * self.width + x]
    }

    /// Population variance `M2 / count`; 0 where nothing was accumulated.
    pub fn variance(&self, x: usize, y: usize) -> f64 {
        let i = y * self.width + x;
        if self.count[i] == 0 {
            0.0
        } else {
            self.m2[i] / self.count[i] as f64
        }
    }

    /// Mean where `variance < gamma`, invalid elsewhere.
    pub fn proxy(&self, gamma: f64) -> DisparityMap {
        DisparityMap::from_fn(self.width, self.height, |x, y| {
            (self.count(x, y) > 0 && self.variance(x, y) < gamma).then(|| self.mean(x, y) as f32)
        })
    }
}

/// Accumulated moments of `cfg.n` completions, run sequentially.
pub fn accumulate<C: Completer + ?Sized>(
    image: &Raster,
    seeds: &SeedSet,
    completer: &C,
    cfg: &ConsensusConfig,
) -> Result<ConsensusAccumulator> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::EmptySeeds);
    }
    if image.dims() != seeds.dims() {
        return Err(Error::mismatch(image.dims(), seeds.dims()));
    }
    let mut acc = ConsensusAccumulator::new(image.width(), image.height());
    for (i, draw) in DrawPlan::new(seeds, cfg).enumerate() {
        let out = run_iteration(image, &draw, completer, i)?;
        acc.push(&out)?;
    }
    Ok(acc)
}

/// Proxy labels: mean of the completions wherever their variance is below
/// `cfg.gamma`.
pub fn distill<C: Completer + ?Sized>(
    image: &Raster,
    seeds: &SeedSet,
    completer: &C,
    cfg: &ConsensusConfig,
) -> Result<DisparityMap> {
    Ok(accumulate(image, seeds, completer, cfg)?.proxy(cfg.gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::Seed;

    struct Constant(f32);

    impl Completer for Constant {
        fn complete(&self, image: &Raster, _: &SeedSet) -> Result<DisparityMap> {
            DisparityMap::from_values(image.width(), image.height(), vec![self.0; image.width() * image.height()])
        }
    }

    struct Failing;

    impl Completer for Failing {
        fn complete(&self, _: &Raster, _: &SeedSet) -> Result<DisparityMap> {
            Err(Error::Completer("boom".into()))
        }
    }

    fn fixture() -> (Raster, SeedSet) {
        let img = Raster::from_fn(16, 8, |x, y| (x * 13 + y * 29) as u8).unwrap();
        let seeds = SeedSet::new(16, 8, (0..16).map(|i| Seed { x: i, y: i % 8, d: 4.0 + i as f32 }).collect()).unwrap();
        (img, seeds)
    }

    #[test]
    fn augment_identity_flip_and_clamp() {
        let (img, _) = fixture();
        assert_eq!(augment(&img, &AugDraw::IDENTITY), (img.clone(), false));
        let flip = AugDraw { flip: true, ..AugDraw::IDENTITY };
        let (once, f) = augment(&img, &flip);
        assert!(f);
        assert_eq!(augment(&once, &flip).0, img);
        let hot = Raster::new(1, 1, 1, vec![250]).unwrap();
        let (out, _) = augment(&hot, &AugDraw { gain: 1.2, ..AugDraw::IDENTITY });
        assert_eq!(out.data(), &[255]);
        let (out, _) = augment(&hot, &AugDraw { gain: 0.5, shift: -0.1, flip: false });
        // round(125 - 25.5) = round(99.5) = 100
        assert_eq!(out.data(), &[100]);
    }

    #[test]
    fn constant_completer_is_fully_kept() {
        let (img, seeds) = fixture();
        let out = distill(&img, &seeds, &Constant(9.5), &ConsensusConfig { p_sample: 0.5, ..Default::default() }).unwrap();
        assert_eq!(out.valid_count(), out.len());
        assert!(out.values().iter().all(|&v| v == 9.5));
    }

    #[test]
    fn rejects_small_n_and_reports_iteration() {
        let (img, seeds) = fixture();
        let cfg = ConsensusConfig { n: 1, ..Default::default() };
        assert!(matches!(distill(&img, &seeds, &Constant(1.0), &cfg), Err(Error::InvalidParameter(_))));
        let err = distill(&img, &seeds, &Failing, &ConsensusConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Iteration { iteration: 0, .. }));
        assert!(matches!(
            distill(&img, &SeedSet::empty(16, 8), &Constant(1.0), &ConsensusConfig::default()),
            Err(Error::EmptySeeds)
        ));
    }

    #[test]
    fn empty_sample_falls_back_to_one_seed() {
        let (_, seeds) = fixture();
        let cfg = ConsensusConfig { p_sample: 0.0, ..Default::default() };
        for draw in DrawPlan::new(&seeds, &cfg) {
            assert_eq!(draw.seeds.len(), 1);
            assert!(seeds.entries().contains(&draw.seeds.entries()[0]));
        }
    }

    #[test]
    fn welford_matches_two_pass() {
        let values = [1e6 + 0.1, 1e6 + 0.2, 1e6 - 0.3, 1e6 + 0.45, 1e6];
        let mut acc = ConsensusAccumulator::new(1, 1);
        for v in values {
            acc.push(&DisparityMap::from_values(1, 1, vec![v as f32]).unwrap()).unwrap();
        }
        let xs: Vec<f64> = values.iter().map(|&v| v as f32 as f64).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        assert!((acc.mean(0, 0) - mean).abs() <= 1e-4 * mean.abs());
        assert!((acc.variance(0, 0) - var).abs() <= 1e-4 * var);
    }

    #[test]
    fn merge_equals_single_pass() {
        let maps: Vec<DisparityMap> = (0..7)
            .map(|i| DisparityMap::from_values(2, 1, vec![i as f32 * 1.5, (i * i) as f32]).unwrap())
            .collect();
        let mut whole = ConsensusAccumulator::new(2, 1);
        let mut a = ConsensusAccumulator::new(2, 1);
        let mut b = ConsensusAccumulator::new(2, 1);
        for (i, m) in maps.iter().enumerate() {
            whole.push(m).unwrap();
            if i < 3 { a.push(m).unwrap() } else { b.push(m).unwrap() }
        }
        a.merge(&b).unwrap();
        for x in 0..2 {
            assert_eq!(a.count(x, 0), 7);
            assert!((a.mean(x, 0) - whole.mean(x, 0)).abs() < 1e-12);
            assert!((a.variance(x, 0) - whole.variance(x, 0)).abs() < 1e-9);
        }
    }
}
