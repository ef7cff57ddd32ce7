//! Batch commands over a manifest.
//!
//! Frames are independent: each runs on one worker of a pool, writes only
//! its own files, and reports success or failure; results are gathered in
//! manifest order. Output layout under the output directory:
//!
//! ```text
//! disp_left/<id>.png   disp_right/<id>.png    match
//! seeds/<id>.txt                              filter
//! proxy/<id>.png       proxy/<id>.txt         distill (map + sidecar)
//! eval/report.txt                             eval
//! holefill/<name>                             holefill
//! color/<stage>_<id>.png                      with output.colorize
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use rayon::prelude::*;
use stereoproxy_core::metrics::{self, EvalReport};
use stereoproxy_core::seeds::{self, FilterMode};
use stereoproxy_core::{consensus, matcher, sgm};
use stereoproxy_core::{Completer, ConfidenceMap, DisparityMap, Raster, ReferenceCompleter, SeedSet};

use crate::config::{CompleterMode, CostKind, MatcherKind, PipelineConfig};
use crate::external::ExternalCompleter;
use crate::io;
use crate::manifest::{Frame, Manifest};

/// Per-frame results in manifest order.
#[derive(Debug)]
pub struct RunSummary<T> {
    pub frames: Vec<(String, anyhow::Result<T>)>,
}

impl<T> RunSummary<T> {
    pub fn failures(&self) -> usize {
        self.frames.iter().filter(|(_, r)| r.is_err()).count()
    }

    pub fn successes(&self) -> impl Iterator<Item = (&str, &T)> {
        self.frames.iter().filter_map(|(id, r)| r.as_ref().ok().map(|t| (id.as_str(), t)))
    }
}

fn pool(threads: usize) -> anyhow::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot start worker pool")
}

/// Runs `f` on every item and logs failures.
fn run_each<I, T, F>(threads: usize, items: Vec<(String, I)>, f: F) -> anyhow::Result<RunSummary<T>>
where
    I: Send,
    T: Send,
    F: Fn(&str, I) -> anyhow::Result<T> + Sync,
{
    let frames = pool(threads)?.install(|| {
        items
            .into_par_iter()
            .map(|(id, item)| {
                let r = f(&id, item);
                if let Err(e) = &r {
                    log::error!("frame {id}: {e:#}");
                }
                (id, r)
            })
            .collect()
    });
    Ok(RunSummary { frames })
}

fn run_frames<T, F>(cfg: &PipelineConfig, manifest: &Manifest, f: F) -> anyhow::Result<RunSummary<T>>
where
    T: Send,
    F: Fn(usize, &str, &Frame) -> anyhow::Result<T> + Sync,
{
    let items = manifest
        .frames
        .iter()
        .enumerate()
        .map(|(i, fr)| (manifest.frame_id(i), (i, fr)))
        .collect();
    run_each(cfg.threads, items, |id, (i, fr)| f(i, id, fr))
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Disparities of both views, plus peak ratios for block matching.
#[derive(Debug, Clone)]
pub struct Matched {
    pub left: DisparityMap,
    pub right: DisparityMap,
    pub confidence: Option<ConfidenceMap>,
}

pub fn match_pair(left: &Raster, right: &Raster, cfg: &PipelineConfig) -> anyhow::Result<Matched> {
    if left.dims() != right.dims() {
        bail!(
            "left image is {}x{} but right is {}x{}",
            left.width(),
            left.height(),
            right.width(),
            right.height()
        );
    }
    let m = &cfg.matcher;
    let (l, r) = (left.to_intensity(), right.to_intensity());
    let volume = match m.cost {
        CostKind::Census => {
            let cl = matcher::census_transform(&l, m.window)?;
            let cr = matcher::census_transform(&r, m.window)?;
            matcher::build_cost_volume(&cl, &cr, m.d_max)?
        }
        CostKind::Sad => matcher::sad_cost_volume(&l, &r, m.window, m.d_max)?,
    };
    Ok(match m.kind {
        MatcherKind::Bm => {
            let d_left = matcher::wta(&volume, m.subpixel);
            let confidence = matcher::confidence_pkr(&volume, &d_left)?;
            Matched {
                right: matcher::right_disparity(&volume, m.subpixel),
                left: d_left,
                confidence: Some(confidence),
            }
        }
        MatcherKind::Sgm => {
            let agg = sgm::aggregate(&volume, &cfg.sgm)?;
            drop(volume);
            Matched {
                left: matcher::wta(&agg, m.subpixel),
                right: matcher::right_disparity(&agg, m.subpixel),
                confidence: None,
            }
        }
    })
}

pub fn extract_seeds(m: &Matched, cfg: &PipelineConfig) -> anyhow::Result<SeedSet> {
    Ok(match cfg.filter.mode {
        FilterMode::LrcOnly => seeds::filter_lrc(&sgm::lrc_filter(&m.left, &m.right, cfg.sgm.tau_lrc)?),
        FilterMode::Confidence => {
            let conf = m
                .confidence
                .as_ref()
                .ok_or_else(|| anyhow!("confidence filtering needs block-matching peak ratios"))?;
            seeds::filter_confidence(&m.left, conf, &m.right, &cfg.filter)?
        }
    })
}

fn load_pair(frame: &Frame) -> anyhow::Result<(Raster, Raster)> {
    Ok((io::load_image(&frame.left)?, io::load_image(&frame.right)?))
}

fn disparity_path(cfg: &PipelineConfig, stage: &str, id: &str) -> PathBuf {
    cfg.output.dir.join(stage).join(format!("{id}.{}", cfg.output.format.extension()))
}

fn save_map(cfg: &PipelineConfig, map: &DisparityMap, stage: &str, id: &str) -> anyhow::Result<()> {
    io::save_disparity(map, &disparity_path(cfg, stage, id))?;
    if cfg.output.colorize {
        let path = cfg.output.dir.join("color").join(format!("{stage}_{id}.png"));
        io::save_colorized(map, cfg.matcher.d_max as f32, &path)?;
    }
    Ok(())
}

fn prepare_dirs(cfg: &PipelineConfig, stages: &[&str]) -> anyhow::Result<()> {
    for s in stages {
        ensure_dir(&cfg.output.dir.join(s))?;
    }
    if cfg.output.colorize {
        ensure_dir(&cfg.output.dir.join("color"))?;
    }
    Ok(())
}

/// Left and right disparity maps per frame.
pub fn cmd_match(manifest: &Manifest, cfg: &PipelineConfig) -> anyhow::Result<RunSummary<()>> {
    prepare_dirs(cfg, &["disp_left", "disp_right"])?;
    run_frames(cfg, manifest, |_, id, frame| {
        let (l, r) = load_pair(frame)?;
        let m = match_pair(&l, &r, cfg)?;
        save_map(cfg, &m.left, "disp_left", id)?;
        save_map(cfg, &m.right, "disp_right", id)
    })
}

/// Seed files per frame; returns each frame's seed density.
pub fn cmd_filter(manifest: &Manifest, cfg: &PipelineConfig) -> anyhow::Result<RunSummary<f64>> {
    prepare_dirs(cfg, &["seeds"])?;
    run_frames(cfg, manifest, |_, id, frame| {
        let (l, r) = load_pair(frame)?;
        let seeds = extract_seeds(&match_pair(&l, &r, cfg)?, cfg)?;
        if seeds.is_empty() {
            log::warn!("frame {id}: no seed survived filtering");
        }
        io::save_seeds(&seeds, &cfg.output.dir.join("seeds").join(format!("{id}.txt")))?;
        if cfg.output.colorize {
            let path = cfg.output.dir.join("color").join(format!("seeds_{id}.png"));
            io::save_colorized(&seeds.to_map(), cfg.matcher.d_max as f32, &path)?;
        }
        Ok(seeds.density())
    })
}

/// Completer selected by the config, with a private work directory per
/// frame for external programs.
pub fn completer_for(cfg: &PipelineConfig, id: &str) -> anyhow::Result<Box<dyn Completer>> {
    Ok(match cfg.completer.mode {
        CompleterMode::Reference => Box::new(ReferenceCompleter::new(cfg.completer.reference())?),
        CompleterMode::External => Box::new(ExternalCompleter::new(&cfg.completer.command, cfg.workdir().join(id))?),
    })
}

/// What `distill` records next to each proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillInfo {
    pub seeds: usize,
    pub density: f64,
    pub rng_seed: u64,
}

/// Proxy labels per frame from the seeds written by `filter`.
pub fn cmd_distill(manifest: &Manifest, cfg: &PipelineConfig) -> anyhow::Result<RunSummary<DistillInfo>> {
    prepare_dirs(cfg, &["proxy"])?;
    run_frames(cfg, manifest, |index, id, frame| {
        let image = io::load_image(&frame.left)?;
        let seeds = io::load_seeds(&cfg.output.dir.join("seeds").join(format!("{id}.txt")))?;
        let ccfg = cfg.consensus_for_frame(index);
        let completer = completer_for(cfg, id)?;
        let proxy = consensus::distill(&image, &seeds, &*completer, &ccfg)?;
        save_map(cfg, &proxy, "proxy", id)?;
        let info = DistillInfo {
            seeds: seeds.len(),
            density: proxy.density(),
            rng_seed: ccfg.rng_seed,
        };
        let mut side = String::new();
        let _ = writeln!(side, "frame = {id:?}");
        let _ = writeln!(side, "density_pct = {:.2}", 100.0 * info.density);
        let _ = writeln!(side, "seeds = {}", info.seeds);
        let _ = writeln!(side, "n = {}", ccfg.n);
        let _ = writeln!(side, "gamma = {}", ccfg.gamma);
        let _ = writeln!(side, "p_sample = {}", ccfg.p_sample);
        let _ = writeln!(side, "rng_seed = {}", ccfg.rng_seed);
        let side_path = cfg.output.dir.join("proxy").join(format!("{id}.txt"));
        fs::write(&side_path, side).with_context(|| format!("cannot write {}", side_path.display()))?;
        Ok(info)
    })
}

/// Prediction file for a frame: `<id>.png` or `<id>.pfm`, preferring the
/// configured format.
fn find_prediction(pred_dir: &Path, id: &str, cfg: &PipelineConfig) -> Option<PathBuf> {
    let first = cfg.output.format.extension();
    [first, "png", "pfm"]
        .iter()
        .map(|ext| pred_dir.join(format!("{id}.{ext}")))
        .find(|p| p.exists())
}

/// Per-frame reports, or `None` for frames without ground truth.
pub fn eval_frame(frame: &Frame, pred: &DisparityMap, cfg: &PipelineConfig) -> anyhow::Result<Option<EvalReport>> {
    let load = |p: &Option<PathBuf>| -> anyhow::Result<Option<DisparityMap>> {
        match p {
            Some(p) if p.exists() => Ok(Some(io::load_disparity(p)?)),
            _ => Ok(None),
        }
    };
    let gt_all = load(&frame.gt_all)?;
    let gt_noc = load(&frame.gt_noc)?;
    if gt_all.is_none() && gt_noc.is_none() {
        return Ok(None);
    }
    if let (Some(all), Some(noc)) = (&gt_all, &gt_noc) {
        metrics::noc_mask_from_gt(noc, all)?;
    }
    let policy = cfg.eval.policy;
    let reference = gt_all.as_ref().or(gt_noc.as_ref()).expect("one ground truth present");
    let mut report = EvalReport {
        coverage: Some(metrics::coverage_stats(pred, reference)?),
        ..Default::default()
    };
    if let Some(g) = &gt_noc {
        report.noc = Some(metrics::region_stats(pred, g, None, policy)?);
    }
    if let Some(g) = &gt_all {
        report.all = Some(metrics::region_stats(pred, g, None, policy)?);
    }
    if let Some(c) = frame.calibration() {
        report.depth = Some(metrics::depth_stats(pred, reference, &c, None, cfg.eval.max_depth)?);
    }
    Ok(Some(report))
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub summary: RunSummary<Option<EvalReport>>,
    pub aggregate: EvalReport,
    /// The report file contents.
    pub text: String,
}

/// Scores every frame's prediction in `pred_dir` against its ground truth;
/// the aggregate pools pixels over all evaluated frames.
pub fn cmd_eval(manifest: &Manifest, pred_dir: &Path, cfg: &PipelineConfig) -> anyhow::Result<EvalOutcome> {
    prepare_dirs(cfg, &["eval"])?;
    let summary = run_frames(cfg, manifest, |_, id, frame| {
        let path = find_prediction(pred_dir, id, cfg)
            .ok_or_else(|| anyhow!("no prediction {id}.png or {id}.pfm in {}", pred_dir.display()))?;
        let pred = io::load_disparity(&path)?;
        eval_frame(frame, &pred, cfg)
    })?;

    let mut text = String::new();
    let mut aggregate = EvalReport::default();
    let (mut evaluated, mut skipped) = (0, 0);
    for (id, r) in &summary.frames {
        match r {
            Ok(Some(rep)) => {
                let _ = writeln!(text, "[frame.{id:?}]\n{}", rep.to_record());
                aggregate.merge(rep);
                evaluated += 1;
            }
            Ok(None) => {
                log::warn!("frame {id}: no ground truth, skipped");
                skipped += 1;
            }
            Err(_) => {}
        }
    }
    let _ = writeln!(text, "[aggregate]");
    let _ = writeln!(text, "weighting = \"per-pixel\"");
    let _ = writeln!(text, "frames = {evaluated}");
    let _ = writeln!(text, "skipped_no_gt = {skipped}");
    let _ = writeln!(text, "failed = {}", summary.failures());
    let _ = writeln!(text, "policy = {:?}", policy_name(cfg));
    text.push_str(&aggregate.to_record());
    let path = cfg.output.dir.join("eval").join("report.txt");
    fs::write(&path, &text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(EvalOutcome {
        summary,
        aggregate,
        text,
    })
}

fn policy_name(cfg: &PipelineConfig) -> &'static str {
    match cfg.eval.policy {
        metrics::InvalidPolicy::CountAsError => "count-as-error",
        metrics::InvalidPolicy::Exclude => "exclude",
    }
}

/// Densifies every disparity file in `pred_dir` into `<output>/holefill`.
pub fn cmd_holefill(pred_dir: &Path, cfg: &PipelineConfig) -> anyhow::Result<RunSummary<()>> {
    let out_dir = cfg.output.dir.join("holefill");
    ensure_dir(&out_dir)?;
    let mut files: Vec<PathBuf> = fs::read_dir(pred_dir)
        .with_context(|| format!("cannot list {}", pred_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "png" || e == "pfm"))
        .collect();
    files.sort();
    let items = files
        .into_iter()
        .map(|p| (p.file_name().unwrap_or_default().to_string_lossy().into_owned(), p))
        .collect();
    run_each(cfg.threads, items, |name, path| {
        let map = io::load_disparity(&path)?;
        let dense = sgm::hole_fill(&map)?;
        if dense.valid_count() != dense.len() {
            bail!("hole filling left {} holes", dense.len() - dense.valid_count());
        }
        io::save_disparity(&dense, &out_dir.join(name))?;
        Ok(())
    })
}
