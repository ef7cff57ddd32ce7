//! Completion by an external program.
//!
//! Per call the adapter writes `image.png` and `seeds.txt` into its work
//! directory, runs the command with that directory appended as the last
//! argument, and reads back `dense.png`, a fully dense KITTI disparity PNG.
//! Being dense, a stored `0` there is read as disparity zero rather than a
//! hole: the fixed-point format has no other way to express it.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use stereoproxy_core::{Completer, DisparityMap, Error, Raster, Result, SeedSet};

use crate::io;

pub const IMAGE_FILE: &str = "image.png";
pub const SEEDS_FILE: &str = "seeds.txt";
pub const DENSE_FILE: &str = "dense.png";

/// One work directory, one call in flight: give concurrent users distinct
/// directories.
#[derive(Debug, Clone)]
pub struct ExternalCompleter {
    program: String,
    args: Vec<String>,
    workdir: PathBuf,
}

impl ExternalCompleter {
    pub fn new(command: &[String], workdir: impl Into<PathBuf>) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or(Error::InvalidParameter("external completer command is empty"))?;
        Ok(ExternalCompleter {
            program: program.clone(),
            args: args.to_vec(),
            workdir: workdir.into(),
        })
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    fn fail(&self, what: impl std::fmt::Display) -> Error {
        Error::Completer(format!("{} in {}: {what}", self.program, self.workdir.display()))
    }
}

impl Completer for ExternalCompleter {
    fn complete(&self, image: &Raster, seeds: &SeedSet) -> Result<DisparityMap> {
        if seeds.is_empty() {
            return Err(Error::EmptySeeds);
        }
        if image.dims() != seeds.dims() {
            return Err(Error::DimensionMismatch {
                left_width: image.width(),
                left_height: image.height(),
                right_width: seeds.width(),
                right_height: seeds.height(),
            });
        }
        fs::create_dir_all(&self.workdir).map_err(|e| self.fail(e))?;
        let dense = self.workdir.join(DENSE_FILE);
        match fs::remove_file(&dense) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(self.fail(e)),
            _ => {}
        }
        io::save_image(image, &self.workdir.join(IMAGE_FILE)).map_err(|e| self.fail(e))?;
        io::save_seeds(seeds, &self.workdir.join(SEEDS_FILE)).map_err(|e| self.fail(e))?;

        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&self.workdir)
            .output()
            .map_err(|e| self.fail(format!("cannot start: {e}")))?;
        if !out.status.success() {
            let stderr = String::from_utf8_lossy(&out.stderr);
            return Err(self.fail(format!("exited with {}: {}", out.status, stderr.trim())));
        }
        if !dense.exists() {
            return Err(self.fail(format!("no {DENSE_FILE} produced")));
        }
        let map = io::load_disparity_kitti(&dense).map_err(|e| self.fail(e))?;
        if map.dims() != image.dims() {
            return Err(self.fail(format!(
                "{DENSE_FILE} is {}x{}, expected {}x{}",
                map.width(),
                map.height(),
                image.width(),
                image.height()
            )));
        }
        let (w, h) = map.dims();
        Ok(DisparityMap::from_fn(w, h, |x, y| Some(map.get(x, y).unwrap_or(0.0))))
    }
}
