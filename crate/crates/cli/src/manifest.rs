//! Frame lists.
//!
//! A manifest is a TOML file of `[[frame]]` tables. Relative paths are
//! resolved against the manifest's own directory.
//!
//! ```toml
//! [[frame]]
//! id = "000000_10"
//! left = "training/image_2/000000_10.png"
//! right = "training/image_3/000000_10.png"
//! gt_all = "training/disp_occ_0/000000_10.png"
//! gt_noc = "training/disp_noc_0/000000_10.png"
//! focal = 721.5377
//! baseline = 0.5327
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stereoproxy_core::Calibration;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{}: {cause}", path.display())]
    Read {
        path: PathBuf,
        cause: std::io::Error,
    },
    #[error("{}: {cause}", path.display())]
    Parse {
        path: PathBuf,
        cause: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub left: PathBuf,
    pub right: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_all: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_noc: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
}

impl Frame {
    pub fn new(left: impl Into<PathBuf>, right: impl Into<PathBuf>) -> Self {
        Frame {
            id: None,
            left: left.into(),
            right: right.into(),
            gt_all: None,
            gt_noc: None,
            focal: None,
            baseline: None,
        }
    }

    pub fn calibration(&self) -> Option<Calibration> {
        Calibration::new(self.focal?, self.baseline?).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, rename = "frame")]
    pub frames: Vec<Frame>,
}

impl Manifest {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, toml::de::Error> {
        let mut m: Manifest = toml::from_str(text)?;
        m.resolve(base);
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = fs::read_to_string(path).map_err(|cause| ManifestError::Read {
            path: path.to_path_buf(),
            cause,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let m = Self::from_toml(&text, base).map_err(|cause| ManifestError::Parse {
            path: path.to_path_buf(),
            cause,
        })?;
        m.check()?;
        Ok(m)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for f in &mut self.frames {
            fix(&mut f.left);
            fix(&mut f.right);
            f.gt_all.as_mut().map(fix);
            f.gt_noc.as_mut().map(fix);
        }
    }

    /// Structural checks only; missing files surface as frame errors.
    pub fn check(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for (i, f) in self.frames.iter().enumerate() {
            let id = self.frame_id(i);
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                return Err(ManifestError::Invalid(format!("frame {i}: id {id:?} is not a file name")));
            }
            if !seen.insert(id.clone()) {
                return Err(ManifestError::Invalid(format!("frame {i}: duplicate id {id:?}")));
            }
            if f.focal.is_some() != f.baseline.is_some() {
                return Err(ManifestError::Invalid(format!("frame {id}: focal and baseline go together")));
            }
            if f.focal.is_some() && f.calibration().is_none() {
                return Err(ManifestError::Invalid(format!("frame {id}: focal and baseline must be positive")));
            }
        }
        Ok(())
    }

    /// Explicit id, else the zero-padded manifest index.
    pub fn frame_id(&self, index: usize) -> String {
        self.frames[index].id.clone().unwrap_or_else(|| format!("{index:06}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Layout {
    /// `<root>/<date>/<drive>/image_02/data/*.png` with `image_03` as the
    /// right view.
    KittiRaw,
    /// `<root>/training/image_2/*_10.png`, `image_3`, `disp_occ_0`,
    /// `disp_noc_0`.
    Kitti2015,
}

fn sorted_entries(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
    v.sort();
    Ok(v)
}

fn is_png(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Focal length and baseline from a KITTI `calib_cam_to_cam.txt`.
pub fn parse_kitti_calibration(text: &str) -> Option<Calibration> {
    let row = |key: &str| -> Option<Vec<f64>> {
        let line = text.lines().find(|l| l.starts_with(key))?;
        line[key.len()..].split_whitespace().map(|t| t.parse().ok()).collect()
    };
    let p2 = row("P_rect_02:")?;
    let p3 = row("P_rect_03:")?;
    if p2.len() < 4 || p3.len() < 4 {
        return None;
    }
    let focal = p2[0];
    Calibration::new(focal, (p2[3] - p3[3]) / focal).ok()
}

/// Reads drive names to skip, one per line; `#` starts a comment.
pub fn read_exclusions(path: &Path) -> Result<HashSet<String>, ManifestError> {
    let text = fs::read_to_string(path).map_err(|cause| ManifestError::Read {
        path: path.to_path_buf(),
        cause,
    })?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}

pub fn generate(root: &Path, layout: Layout, exclude: &HashSet<String>) -> Result<Manifest, ManifestError> {
    let read = |p: &Path| {
        sorted_entries(p).map_err(|cause| ManifestError::Read {
            path: p.to_path_buf(),
            cause,
        })
    };
    let mut frames = Vec::new();
    match layout {
        Layout::KittiRaw => {
            for date in read(root)?.into_iter().filter(|p| p.is_dir()) {
                let calib = fs::read_to_string(date.join("calib_cam_to_cam.txt"))
                    .ok()
                    .and_then(|t| parse_kitti_calibration(&t));
                for drive in read(&date)?.into_iter().filter(|p| p.is_dir()) {
                    let name = drive.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    if exclude.contains(&name) {
                        continue;
                    }
                    let left_dir = drive.join("image_02").join("data");
                    if !left_dir.is_dir() {
                        continue;
                    }
                    for left in read(&left_dir)?.into_iter().filter(|p| is_png(p)) {
                        let file = left.file_name().unwrap_or_default();
                        let stem = left.file_stem().unwrap_or_default().to_string_lossy();
                        let mut f = Frame::new(&left, drive.join("image_03").join("data").join(file));
                        f.id = Some(format!("{name}_{stem}"));
                        if let Some(c) = calib {
                            f.focal = Some(c.focal);
                            f.baseline = Some(c.baseline);
                        }
                        frames.push(f);
                    }
                }
            }
        }
        Layout::Kitti2015 => {
            let train = root.join("training");
            for left in read(&train.join("image_2"))?.into_iter().filter(|p| is_png(p)) {
                let file = left.file_name().unwrap_or_default().to_owned();
                let stem = left.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                // ground truth exists for the reference frame `_10` only
                if !stem.ends_with("_10") || exclude.contains(&stem) {
                    continue;
                }
                let mut f = Frame::new(&left, train.join("image_3").join(&file));
                f.id = Some(stem.clone());
                let gt = |d: &str| Some(train.join(d).join(&file)).filter(|p| p.exists());
                f.gt_all = gt("disp_occ_0");
                f.gt_noc = gt("disp_noc_0");
                let scene = stem.trim_end_matches("_10");
                let calib = fs::read_to_string(train.join("calib_cam_to_cam").join(format!("{scene}.txt")))
                    .ok()
                    .and_then(|t| parse_kitti_calibration(&t));
                if let Some(c) = calib {
                    f.focal = Some(c.focal);
                    f.baseline = Some(c.baseline);
                }
                frames.push(f);
            }
        }
    }
    Ok(Manifest { frames })
}
